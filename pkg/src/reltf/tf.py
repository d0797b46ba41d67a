"""Atomic Thomas-Fermi solver, Coulomb bilinear form and mollified potentials.

The atomic TF problem reduces to ``chi'' = chi^{3/2} / sqrt(x)`` with
``W(r) = Z chi(r / b) / r`` and ``b = (3 pi / (2^{5/2} q))^{2/3} Z^{-1/3}``.
Near the origin we integrate in ``t = sqrt(x)`` where the system
``u' = 2 t p, p' = 2 u^{3/2}`` is regular.  Both cases integrate inward:

* neutral: from a large ``X`` starting on the exact asymptote
  ``144 / x^3 (1 + c x^{-lambda})``, shooting on ``c``;
* ionic: from the cut radius ``x0`` with ``chi(x0) = 0`` and
  ``-x0 chi'(x0) = 1 - N / Z``, shooting on ``x0``.

Inward integration is stable for both since the spurious mode decays inward.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import integrate
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

from .model import RadialGrid, pressure, tf_grid

SOMMERFELD_EXPONENT = (math.sqrt(73.0) - 7.0) / 2.0
_X_FAR = 1.0e4
_T_SWITCH = 1.0


class ShootingError(RuntimeError):
    """Shooting did not bracket or converge."""


def tf_length(Z: float, q: float) -> float:
    return (3.0 * math.pi / (2.0 ** 2.5 * q)) ** (2.0 / 3.0) * Z ** (-1.0 / 3.0)


def _rhs_x(x, y):
    return [y[1], max(y[0], 0.0) ** 1.5 / math.sqrt(x)]


def _rhs_t(t, y):
    return [2.0 * t * y[1], 2.0 * max(y[0], 0.0) ** 1.5]


_OPTS = dict(method="DOP853", rtol=1e-13, atol=1e-300, dense_output=True)


@dataclass(frozen=True)
class TFProfile:
    """Solution chi of the dimensionless TF equation on [0, x_end]."""

    slope0: float           # chi'(0)
    x0: float               # cut radius (inf if neutral)
    ionization: float       # 1 - N/Z
    _outer: object
    _inner: object
    x_far: float

    def __call__(self, x):
        """Return (chi, chi') at reduced radii x (chi = 0 beyond x0)."""
        x = np.asarray(x, dtype=float)
        chi = np.zeros_like(x)
        dchi = np.zeros_like(x)
        t_sw2 = _T_SWITCH ** 2
        inner = x < t_sw2
        if np.any(inner):
            u, p = self._inner(np.sqrt(x[inner]))
            chi[inner], dchi[inner] = u, p
        lim = min(self.x0, self.x_far)
        mid = (~inner) & (x <= lim)
        if np.any(mid):
            u, p = self._outer(x[mid])
            chi[mid], dchi[mid] = u, p
        if math.isinf(self.x0):
            far = x > self.x_far
            if np.any(far):
                chi[far], dchi[far] = _asymptote(x[far], self._c)
        else:
            out = x > self.x0
            chi[out] = 0.0
            dchi[out] = -self.ionization / x[out]
        return np.maximum(chi, 0.0), dchi


def _asymptote(x, c):
    lam = SOMMERFELD_EXPONENT
    g = 1.0 + c * x ** (-lam)
    dg = -lam * c * x ** (-lam - 1.0)
    return 144.0 / x ** 3 * g, -432.0 / x ** 4 * g + 144.0 / x ** 3 * dg


def _integrate_inward(x_start, y_start):
    if x_start <= _T_SWITCH ** 2:
        t0 = math.sqrt(x_start)
        sol_t = solve_ivp(_rhs_t, [t0, 0.0], y_start, first_step=1e-4 * t0, **_OPTS)
        if sol_t.status != 0:
            raise ShootingError(sol_t.message)
        return sol_t, sol_t
    # explicit first step: the automatic guess divides by zero when chi = 0
    sol_x = solve_ivp(_rhs_x, [x_start, _T_SWITCH ** 2], y_start,
                      first_step=1e-4 * (x_start - _T_SWITCH ** 2), **_OPTS)
    if sol_x.status != 0:
        raise ShootingError(sol_x.message)
    sol_t = solve_ivp(_rhs_t, [_T_SWITCH, 0.0], sol_x.y[:, -1], **_OPTS)
    if sol_t.status != 0:
        raise ShootingError(sol_t.message)
    return sol_x, sol_t


@lru_cache(maxsize=64)
def tf_profile(ionization: float = 0.0) -> TFProfile:
    """Solve the reduced TF problem for ``ionization = 1 - N/Z`` in [0, 1)."""
    if not 0.0 <= ionization < 1.0:
        raise ValueError("ionization must be in [0, 1)")
    if ionization == 0.0:
        def miss(c):
            _, st = _integrate_inward(_X_FAR, list(_asymptote(_X_FAR, c)))
            return st.y[0, -1] - 1.0

        c = brentq(miss, -25.0, -8.0, xtol=1e-14, rtol=1e-15)
        sx, st = _integrate_inward(_X_FAR, list(_asymptote(_X_FAR, c)))
        prof = TFProfile(float(st.y[1, -1]), math.inf, 0.0, sx.sol, st.sol, _X_FAR)
        object.__setattr__(prof, "_c", c)
        return prof

    a = ionization

    def miss_x0(log_x0):
        x0 = math.exp(log_x0)
        _, st = _integrate_inward(x0, [0.0, -a / x0])
        return st.y[0, -1] - 1.0

    # chi(0) increases with the cut radius; bracket geometrically
    lo = math.log(1e-3)
    if miss_x0(lo) > 0:
        raise ShootingError("cut radius below bracket start")
    hi = lo
    for _ in range(80):
        hi += 0.5
        if miss_x0(hi) > 0:
            break
        lo = hi
    else:
        raise ShootingError("could not bracket the TF cut radius")
    log_x0 = brentq(miss_x0, lo, hi, xtol=1e-15, rtol=1e-15, maxiter=200)
    x0 = math.exp(log_x0)
    sx, st = _integrate_inward(x0, [0.0, -a / x0])
    prof = TFProfile(float(st.y[1, -1]), x0, a, sx.sol, st.sol, x0)
    object.__setattr__(prof, "_c", None)
    return prof


@dataclass(frozen=True)
class TFSolution:
    grid: RadialGrid
    rho: np.ndarray
    W: np.ndarray
    nu: float
    E_TF: float
    Z: float
    N: float
    q: int
    length: float = 1.0
    slope0: float = 0.0
    cut_radius: float = math.inf

    def __post_init__(self):
        for name in ("rho", "W"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if np.any(self.rho < 0):
            raise ShootingError("negative TF density")

    @property
    def r(self) -> np.ndarray:
        return self.grid.nodes

    @property
    def V(self) -> np.ndarray:
        return self.Z / self.grid.nodes

    @property
    def charge(self) -> float:
        """Electron number: grid integral plus the exact charge beyond r_max (Gauss law)."""
        inside = integrate_radial(self.grid, self.rho, tails=False)
        inside += 4.0 * math.pi * _tail(self.rho[0], self.rho[1], self.r[0], self.r[1], False)
        return inside + self.charge_beyond(self.grid.r_max)

    def charge_beyond(self, R: float) -> float:
        x = R / self.length
        if x >= self.cut_radius / self.length:
            return 0.0
        chi, dchi = self.profile()(np.array([x]))
        return float(self.Z * (chi[0] - x * dchi[0]) - (self.Z - self.N))

    def profile(self) -> TFProfile:
        return tf_profile(max(0.0, 1.0 - self.N / self.Z))

    def rho_at(self, r):
        """TF density at arbitrary radii (exact, from the reduced profile)."""
        r = np.asarray(r, dtype=float)
        chi, _ = self.profile()(r / self.length)
        return pressure(self.Z * chi / r, self.q, 0.0, "TF'", "atomic")

    def W_at(self, r):
        r = np.asarray(r, dtype=float)
        chi, _ = self.profile()(r / self.length)
        inside = r < self.cut_radius
        return np.where(inside, self.Z * chi / r - self.nu, (self.Z - self.N) / r)


def solve_tf_atom(Z: float, N: float | None = None, q: int = 2,
                  grid: RadialGrid | None = None, n: int = 2000) -> TFSolution:
    """Thomas-Fermi ground state of an atom (atomic units, kinetic |p|^2/2)."""
    if Z <= 0:
        raise ValueError("Z must be positive")
    if q < 1:
        raise ValueError("q must be >= 1")
    N = Z if N is None else float(N)
    if N <= 0:
        raise ValueError("N must be positive")
    N = min(N, Z)
    prof = tf_profile(1.0 - N / Z if N < Z else 0.0)
    b = tf_length(Z, q)
    if grid is None:
        grid = tf_grid(Z, N, n)
    r = grid.nodes
    chi, _ = prof(r / b)
    phi = Z * chi / r                       # W + nu inside the cut radius
    if N < Z:
        nu = -(Z - N) / (b * prof.x0)
        W = np.where(r / b > prof.x0, (Z - N) / r, phi - nu)
    else:
        nu = 0.0
        W = phi
    rho = pressure(W + nu, q, 0.0, "TF'", "atomic")
    # virial: E = -K, K = (3/7)(int V rho - nu N), int V rho = Z U(0)
    E = 3.0 / 7.0 * (Z * Z * prof.slope0 / b - (Z - N) * nu)
    return TFSolution(grid, rho, W, nu, E, float(Z), float(N), int(q), b, prof.slope0,
                      b * prof.x0)


# --- integrals with analytic end corrections ------------------------------

def _tail(f0, f1, r0, r1, outer):
    if f0 <= 0 or f1 <= 0:
        return 0.0
    alpha = math.log(f1 / f0) / math.log(r1 / r0)
    if outer:
        return -f0 * r0 ** 3 / (alpha + 3.0) if alpha < -3.1 else 0.0
    return f0 * r0 ** 3 / (alpha + 3.0) if alpha > -2.9 else 0.0


def integrate_radial(grid: RadialGrid, f, tails: bool = True) -> float:
    """int f(|x|) dx over R^3, adding power-law end pieces [0, r_min] and [r_max, inf)."""
    f = np.asarray(f, dtype=float)
    total = grid.radial_integral(f)
    if tails:
        r = grid.nodes
        total += _tail(f[0], f[1], r[0], r[1], outer=False)
        total += _tail(f[-1], f[-2], r[-1], r[-2], outer=True)
    return 4.0 * math.pi * total


def newton_potential(grid: RadialGrid, f) -> np.ndarray:
    """|x|^{-1} * f for radial f, by Newton's theorem (inner charge / r + outer shells)."""
    f = np.asarray(f, dtype=float)
    r = grid.nodes
    inner = 4.0 * math.pi * grid.cumulative(f * r * r)
    head = 4.0 * math.pi * _tail(f[0], f[1], r[0], r[1], outer=False)
    shell = 4.0 * math.pi * grid.cumulative(f * r)
    outer = shell[-1] - shell
    outer += 4.0 * math.pi * _outer_shell_tail(f, r)
    return (inner + head) / r + outer


def _outer_shell_tail(f, r):
    # int_{r_max}^inf f(s) s ds under a power-law tail
    f0, f1 = f[-1], f[-2]
    if f0 <= 0 or f1 <= 0:
        return 0.0
    alpha = math.log(f0 / f1) / math.log(r[-1] / r[-2])
    if alpha >= -2.1:
        return 0.0
    return -f0 * r[-1] ** 2 / (alpha + 2.0)


def coulomb_norm(grid: RadialGrid, f, g=None) -> float:
    """D(f, g) = int int f(x) g(y) / |x - y| dx dy for radial f, g."""
    g = f if g is None else g
    return integrate_radial(grid, np.asarray(g) * newton_potential(grid, f), tails=False)


def tf_functional(grid: RadialGrid, rho, Z: float, q: int) -> float:
    """(3/10)(6 pi^2/q)^{2/3} int rho^{5/3} - int V rho + D(rho, rho) / 2."""
    rho = np.asarray(rho, dtype=float)
    ck = 0.3 * (6.0 * math.pi ** 2 / q) ** (2.0 / 3.0)
    kin = ck * integrate_radial(grid, rho ** (5.0 / 3.0))
    att = Z * integrate_radial(grid, rho / grid.nodes)
    return kin - att + 0.5 * coulomb_norm(grid, rho)


def tf_energy(sol: TFSolution) -> float:
    return tf_functional(sol.grid, sol.rho, sol.Z, sol.q)


def tf_energy_dual(sol: TFSolution) -> float:
    """-int P_TF(W + nu) - D(rho, rho)/2 + nu N; equals the TF energy at the minimiser."""
    P = pressure(sol.W + sol.nu, sol.q, 0.0, "TF", "atomic")
    return -integrate_radial(sol.grid, P) - 0.5 * coulomb_norm(sol.grid, sol.rho) + sol.nu * sol.N


def self_consistency_residual(sol: TFSolution) -> float:
    """Weighted L1 distance between rho and P_TF'(W + nu), relative to N."""
    target = pressure(sol.W + sol.nu, sol.q, 0.0, "TF'", "atomic")
    return integrate_radial(sol.grid, np.abs(sol.rho - target)) / sol.N


def poisson_residual(sol: TFSolution) -> float:
    """max |W - (V - |x|^{-1} * rho)| / V over the grid."""
    U = newton_potential(sol.grid, sol.rho)
    return float(np.max(np.abs(sol.W - (sol.V - U)) / sol.V))


# --- mollification ---------------------------------------------------------

def smoothed_ball(u):
    """Unnormalised profile: 1 inside 0.95, cubic smoothstep to 0 at 1.05."""
    u = np.asarray(u, dtype=float)
    s = np.clip((1.05 - u) / 0.1, 0.0, 1.0)
    return s * s * (3.0 - 2.0 * s)


@lru_cache(maxsize=8)
def _mollifier_table(profile_name: str = "smoothed_ball", n: int = 4001):
    prof = {"smoothed_ball": smoothed_ball}[profile_name]
    t = np.linspace(0.0, 1.05, n)
    phi = prof(t)
    mass = 4.0 * math.pi * integrate.trapezoid(phi * t * t, t)
    phi = phi / mass
    # G(t) = int_0^t tau phi(tau) dtau
    G = np.concatenate([[0.0], np.cumsum(0.5 * (t[1:] * phi[1:] + t[:-1] * phi[:-1]) * np.diff(t))])
    return t, phi, G


def radial_convolve(grid: RadialGrid, f, epsilon: float, profile: str = "smoothed_ball",
                    log_interp: bool = False, n_local: int = 241) -> np.ndarray:
    """(f * Phi_eps)(r) for radial f, Phi_eps(x) = eps^-3 Phi(x / eps)."""
    t, _, G = _mollifier_table(profile)
    r = grid.nodes
    f = np.asarray(f, dtype=float)
    width = 1.05 * epsilon

    if log_interp:
        lf = np.log(np.maximum(f, 1e-300))

        def fi(s):
            return np.exp(np.interp(np.log(np.maximum(s, r[0])), np.log(r), lf, right=-700.0))
    else:
        def fi(s):
            return np.interp(s, r, f, left=f[0], right=0.0)

    def Gs(s):
        return np.interp(s / epsilon, t, G, right=G[-1]) * epsilon ** -1

    out = np.empty_like(r)
    for i, ri in enumerate(r):
        a, b = max(0.0, ri - width), ri + width
        if a > 0:
            s = np.linspace(a, b, n_local)
            jac = np.ones_like(s)
        else:
            # graded nodes resolve integrable singularities at the origin
            u = np.linspace(0.0, 1.0, n_local)[1:]
            s, jac = b * u * u, 2.0 * b * u
        kern = Gs(ri + s) - Gs(np.abs(ri - s))
        vals = s * fi(s) * kern * jac
        x = s if a > 0 else u
        out[i] = 2.0 * math.pi / ri * integrate.trapezoid(vals, x)
    return out


def mollify_potential(sol_or_grid, rho=None, epsilon: float = 0.1, Z: float | None = None,
                      profile: str = "smoothed_ball") -> np.ndarray:
    """W_eps = V - |x|^{-1} * rho * Phi_eps on the grid."""
    if isinstance(sol_or_grid, TFSolution):
        grid, rho, Z = sol_or_grid.grid, sol_or_grid.rho, sol_or_grid.Z
    else:
        grid = sol_or_grid
    # only the change rho * Phi_eps - rho is convolved; near the grid edge the
    # smearing of the (smooth, tiny) density is negligible and set to zero
    rho = np.asarray(rho, dtype=float)
    delta = radial_convolve(grid, rho, epsilon, profile, log_interp=True) - rho
    delta[grid.nodes > grid.r_max - 3.0 * epsilon] = 0.0
    U = newton_potential(grid, rho) + newton_potential(grid, delta)
    return Z / grid.nodes - U
