"""Upper and lower bounds on the atomic ground-state energy.

The upper bound evaluates the energy of a spherically averaged Slater
determinant built from the lowest eigenfunctions of ``T - W``; the lower
bound is a one-body trace with a mollified mean field plus a correlation
penalty.  All radial densities are spherical, so Coulomb energies reduce to
one-dimensional integrals and the exchange integral to a finite multipole
sum of radial Slater integrals.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .cache import DiskCache
from .model import CRITICAL_COUPLING, NuclearConfiguration, RadialGrid
from .spectral import (
    RadialPotential,
    SupercriticalError,
    channel_spectra,
    negative_trace,
)
from .tf import TFSolution, coulomb_norm, mollify_potential, solve_tf_atom


@dataclass(frozen=True)
class Orbital:
    """One (n, l) shell: ``occupation`` electrons out of ``capacity = q(2l+1)``."""

    ell: int
    index: int
    eigenvalue: float
    u: np.ndarray = field(repr=False)
    occupation: float
    capacity: int
    kinetic: float = float("nan")

    @property
    def fraction(self) -> float:
        return self.occupation / self.capacity


@dataclass(frozen=True)
class SlaterState:
    """Shell-filled state of ``N`` electrons on a radial grid.

    Open shells are the uniform ensemble over which of the shell's states are
    occupied, so the density stays spherical.
    """

    orbitals: tuple
    grid: RadialGrid
    N: float
    q: int
    beta: float
    label: str = ""
    metadata: dict = field(default_factory=dict, compare=False)

    @property
    def rho(self) -> np.ndarray:
        r = self.grid.nodes
        out = np.zeros_like(r)
        for o in self.orbitals:
            out += o.occupation / (4.0 * math.pi) * o.u ** 2 / r ** 2
        return out

    @property
    def electrons(self) -> float:
        return float(sum(o.occupation for o in self.orbitals))

    def norm_error(self) -> float:
        """max_j |int u_j^2 dr - 1| on the state grid."""
        g = self.grid
        if not self.orbitals:
            return 0.0
        return float(max(abs(g.radial_integral(o.u ** 2 / g.nodes ** 2) - 1.0) for o in self.orbitals))

    def orthonormality_error(self) -> float:
        g = self.grid
        worst = 0.0
        for ell in {o.ell for o in self.orbitals}:
            U = np.array([o.u for o in self.orbitals if o.ell == ell])
            G = (U / g.nodes) @ (g.weights[:, None] * (U / g.nodes).T)
            worst = max(worst, float(np.max(np.abs(G - np.eye(len(G))))))
        return worst

    @property
    def eigenvalue_sum(self) -> float:
        return float(sum(o.occupation * o.eigenvalue for o in self.orbitals))

    @property
    def kinetic_energy(self) -> float:
        return float(sum(o.occupation * o.kinetic for o in self.orbitals))


def slater_state(W, N: float, q: int = 2, beta: float = 0.0, grid: RadialGrid | None = None,
                 L_max: int = 20, jobs: int = 1, cache: DiskCache | None = None,
                 label: str = "", step: float = 0.008) -> SlaterState:
    """Fill the N lowest negative levels of ``T - W``.

    ``W`` is a :class:`RadialPotential`, a nuclear charge or a TF solution.
    Fewer than N electrons are placed when the negative spectrum runs out.
    """
    spectra = channel_spectra(W, 0.0, q, beta, L_max, jobs, cache)
    Z = W.Z if isinstance(W, TFSolution) else abs(_potential_charge(W))
    return fill_levels(spectra, N, q, beta, grid, label, Z, step)


def default_state_grid(Z: float, shallowest: float = -0.5, step: float = 0.008) -> RadialGrid:
    """Log grid reaching well past the classically allowed region of the shallowest level."""
    Z = max(Z, 1.0)
    r_min = 1e-7 / Z
    r_max = max(40.0 * Z ** (-1.0 / 3.0) + 30.0, 30.0 / math.sqrt(2.0 * abs(min(shallowest, -1e-4))))
    return RadialGrid.logarithmic(r_min, r_max, int(math.log(r_max / r_min) / step) + 1)


def _occupied_floor(levels, N: float) -> float:
    remaining, last = float(N), -0.5
    for E, _, _, s, _ in levels:
        if remaining <= 1e-12:
            break
        remaining -= min(float(s.degeneracy), remaining)
        last = E
    return last


def fill_levels(spectra, N: float, q: int, beta: float, grid: RadialGrid | None = None,
                label: str = "", Z: float = 1.0, step: float = 0.008) -> SlaterState:
    if N <= 0:
        raise ValueError("N must be positive")
    levels = []
    for s in spectra:
        kin = s.kinetic_expectations() if len(s) else []
        for j, E in enumerate(s.eigenvalues):
            levels.append((float(E), s.ell, j, s, float(kin[j])))
    levels.sort(key=lambda t: (t[0], t[1]))
    if grid is None:
        grid = default_state_grid(Z, _occupied_floor(levels, N), step)
    r = grid.nodes
    remaining = float(N)
    orbitals = []
    sampled: dict = {}
    for E, ell, j, s, kin in levels:
        if remaining <= 1e-12:
            break
        occ = min(float(s.degeneracy), remaining)
        if id(s) not in sampled:
            sampled[id(s)] = s.radial_functions(r)
        orbitals.append(Orbital(ell, j, E, sampled[id(s)][:, j], occ, s.degeneracy, kin))
        remaining -= occ
    missing = max(remaining, 0.0)
    return SlaterState(tuple(orbitals), grid, float(N) - missing, q, beta, label,
                       {"levels_available": len(levels), "missing": missing})


def _potential_charge(W) -> float:
    if isinstance(W, RadialPotential):
        return W.singular_charge
    return float(W)


# --- Coulomb energies ----------------------------------------------------------

def three_j_zero(a: int, b: int, c: int) -> float:
    """Wigner 3j symbol (a b c; 0 0 0)."""
    J = a + b + c
    if J % 2 or c < abs(a - b) or c > a + b:
        return 0.0
    g = J // 2
    lf = math.lgamma
    logv = 0.5 * (lf(J - 2 * a + 1) + lf(J - 2 * b + 1) + lf(J - 2 * c + 1) - lf(J + 2))
    logv += lf(g + 1) - lf(g - a + 1) - lf(g - b + 1) - lf(g - c + 1)
    return (-1) ** g * math.exp(logv)


def slater_integral(grid: RadialGrid, f, g, k: int) -> float:
    """int int f(r) g(s) r_<^k / r_>^{k+1} dr ds for radial pair functions f, g."""
    r = grid.nodes
    g = np.asarray(g, dtype=float)
    inner = grid.cumulative(g * r ** k)
    outer_c = grid.cumulative(g * r ** (-k - 1.0))
    Y = inner / r ** (k + 1) + (outer_c[-1] - outer_c) * r ** k
    # trapezoid in log r matches ``cumulative``
    integrand = np.asarray(f, dtype=float) * Y * r
    return float(0.5 * grid.step * np.sum(integrand[1:] + integrand[:-1]))


def _shell_tables(state: SlaterState):
    """Direct J_ab and exchange K_ab summed over all states of shells a, b."""
    orbs = state.orbitals
    n = len(orbs)
    J = np.zeros((n, n))
    K = np.zeros((n, n))
    for a in range(n):
        for b in range(a, n):
            oa, ob = orbs[a], orbs[b]
            J[a, b] = J[b, a] = oa.capacity * ob.capacity * slater_integral(
                state.grid, oa.u ** 2, ob.u ** 2, 0)
            pair = oa.u * ob.u
            acc = 0.0
            for k in range(abs(oa.ell - ob.ell), oa.ell + ob.ell + 1, 2):
                acc += three_j_zero(oa.ell, k, ob.ell) ** 2 * slater_integral(state.grid, pair, pair, k)
            K[a, b] = K[b, a] = state.q * (2 * oa.ell + 1) * (2 * ob.ell + 1) * acc
    return J, K


def exchange_integral(state: SlaterState) -> float:
    """(1/2) int int |x - y|^-1 tr(gamma(x, y)^* gamma(x, y)) for the shell ensemble.

    The multipole expansion of ``|x - y|^-1`` terminates at ``k = l_a + l_b``
    for spherically averaged shells, so there is no truncation tail.
    """
    J, K = _shell_tables(state)
    f = np.array([o.fraction for o in state.orbitals])
    return float(0.5 * f @ K @ f)


def _pair_fraction(n: float, M: int) -> float:
    """Average n_i n_j (i != j) over uniformly chosen n of M states, interpolated in n."""
    if M < 2:
        return 0.0
    def exact(m):
        return m * (m - 1.0) / (M * (M - 1.0))
    lo = math.floor(n)
    return exact(lo) + (n - lo) * (exact(lo + 1) - exact(lo)) if n > lo else exact(lo)


def pair_energy(state: SlaterState) -> dict:
    """Expected electron-electron repulsion of the shell ensemble and its parts."""
    J, K = _shell_tables(state)
    f = np.array([o.fraction for o in state.orbitals])
    W = np.outer(f, f)
    for a, o in enumerate(state.orbitals):
        W[a, a] = _pair_fraction(o.occupation, o.capacity)
    hartree = 0.5 * float(f @ J @ f)
    exchange = 0.5 * float(f @ K @ f)
    total = 0.5 * float(np.sum(W * (J - K)))
    return {"hartree": hartree, "exchange": exchange, "open_shell": total - hartree + exchange,
            "total": total}


# --- reference densities -------------------------------------------------------

@dataclass(frozen=True)
class _Density:
    """A radial density known at arbitrary radii, with its Coulomb self energy."""

    at: object
    N: float
    self_energy: float
    label: str


def _reference_density(rho, cfg: NuclearConfiguration) -> _Density | None:
    if rho is None:
        rho = solve_tf_atom(cfg.Z[0], cfg.N, cfg.q)
    if isinstance(rho, (int, float)) and rho == 0:
        return None
    if isinstance(rho, TFSolution):
        sol = rho
        return _Density(sol.rho_at, sol.charge, coulomb_norm(sol.grid, sol.rho), f"tf(Z={sol.Z:g})")
    raise TypeError("rho must be a TFSolution, None (TF density) or 0")


def _mean_field(cfg: NuclearConfiguration, sol: TFSolution | None, epsilon: float | None):
    Z = cfg.Z[0]
    if sol is None:
        return RadialPotential.coulomb(Z)
    if epsilon is None:
        return RadialPotential.from_tf(sol)
    W = mollify_potential(sol, epsilon=epsilon)
    return RadialPotential.from_samples(sol.r, W, Z, sol.N, f"tf_eps(Z={Z:g},N={sol.N:g},eps={epsilon:.6g})")


def _atom(cfg: NuclearConfiguration):
    if cfg.M != 1:
        raise ValueError("bounds are implemented for atoms (one nucleus)")
    Z = cfg.Z[0]
    if Z * cfg.beta > CRITICAL_COUPLING:
        raise SupercriticalError("Z beta exceeds 2/pi")
    return Z


# --- upper bound ----------------------------------------------------------------

@dataclass(frozen=True)
class UpperBound:
    """Energy of the shell-filled trial state for ``T - V + repulsion``.

    ``value`` is the exact expectation (a variational upper bound);
    ``printed`` is the trace form with the number-mismatch term, equal to
    ``value`` whenever the level count below ``nu`` equals N.
    """

    value: float
    printed: float
    eigenvalue_sum: float
    cross: float
    hartree: float
    exchange: float
    open_shell: float
    trace: float
    count_below_nu: float
    lam: float
    nu: float
    density_distance: float
    state: SlaterState = field(repr=False, compare=False)


def upper_bound(cfg: NuclearConfiguration, rho=None, nu: float | None = None,
                lam: float | None = None, jobs: int = 1, cache: DiskCache | None = None,
                L_max: int = 20, grid: RadialGrid | None = None) -> UpperBound:
    """Trial-state upper bound with mean field ``W = V - |x|^-1 * rho``.

    ``rho`` is a TF solution (default: the TF density of ``cfg``) or 0.
    ``nu`` defaults to the TF chemical potential (0 for ``rho = 0``) and
    ``lam`` to ``nu``.
    """
    Z = _atom(cfg)
    sol = rho if isinstance(rho, TFSolution) else (solve_tf_atom(Z, cfg.N, cfg.q) if rho is None else None)
    ref = _reference_density(sol if sol is not None else 0, cfg)
    if nu is None:
        nu = sol.nu if sol is not None else 0.0
    if nu > 0:
        raise ValueError("nu must be <= 0")
    lam = nu if lam is None else lam
    pot = _mean_field(cfg, sol, None)
    spectra = channel_spectra(pot, 0.0, cfg.q, cfg.beta, L_max, jobs, cache)
    state = fill_levels(spectra, cfg.N, cfg.q, cfg.beta, grid, pot.label, Z)
    r = state.grid.nodes
    rho_psi = state.rho
    pairs = pair_energy(state)
    if ref is None:
        cross, half_D, dist = 0.0, 0.0, coulomb_norm(state.grid, rho_psi)
    else:
        rho_ref = np.asarray(ref.at(r))
        cross = coulomb_norm(state.grid, rho_ref, rho_psi)
        half_D = 0.5 * ref.self_energy
        dist = coulomb_norm(state.grid, rho_psi - rho_ref)
    eig = state.eigenvalue_sum
    value = eig - cross + pairs["total"]
    trace = sum(s.degeneracy * float(np.sum(np.minimum(s.eigenvalues - lam, 0.0))) for s in spectra)
    count = sum(s.degeneracy * int(np.sum(s.eigenvalues < nu)) for s in spectra)
    printed = (trace + lam * state.N - half_D + abs(lam - nu) * abs(count - state.N)
               + 0.5 * dist - (pairs["exchange"] - pairs["open_shell"]))
    return UpperBound(value, printed, eig, cross, pairs["hartree"], pairs["exchange"],
                      pairs["open_shell"], trace, float(count), lam, nu, dist, state)


# --- lower bound ----------------------------------------------------------------

@dataclass(frozen=True)
class LowerBound:
    value: float
    trace: float
    trace_error: float
    lam: float
    N: float
    half_self_energy: float
    penalty: float
    epsilon: float
    form: str


def lower_bound(cfg: NuclearConfiguration, rho=None, lam: float | None = None,
                epsilon: float | None = None, C0: float = 1.0, form: str = "mollified",
                jobs: int = 1, cache: DiskCache | None = None, L_max: int = 40) -> LowerBound:
    """``Tr(T - W - lam)_- + lam N - D(rho, rho)/2 - penalty``.

    ``form="mollified"``: ``W = V - |x|^-1 * rho * Phi_eps`` and penalty
    ``C0 q^{2/3} N / eps`` (valid up to the critical coupling).
    ``form="strict"``: unmollified ``W`` and penalty ``C0 Z^{5/3}``; needs
    ``Z beta <= 2/pi - cfg.epsilon`` with ``cfg.epsilon > 0``.
    ``rho`` is a TF solution (default: TF density of ``cfg``) or 0.
    """
    Z = _atom(cfg)
    if form not in ("mollified", "strict"):
        raise ValueError("form must be 'mollified' or 'strict'")
    sol = rho if isinstance(rho, TFSolution) else (solve_tf_atom(Z, cfg.N, cfg.q) if rho is None else None)
    if lam is None:
        lam = sol.nu if sol is not None else 0.0
    if form == "strict":
        if cfg.epsilon <= 0 or not cfg.strictly_subcritical:
            raise SupercriticalError("strict form needs Z beta <= 2/pi - epsilon with epsilon > 0")
        eps = math.inf
        pot = _mean_field(cfg, sol, None)
        penalty = C0 * Z ** (5.0 / 3.0)
    else:
        eps = Z ** (-2.0 / 3.0) if epsilon is None else float(epsilon)
        if eps <= 0:
            raise ValueError("epsilon must be positive")
        pot = _mean_field(cfg, sol, eps if sol is not None and math.isfinite(eps) else None)
        penalty = 0.0 if math.isinf(eps) else C0 * cfg.q ** (2.0 / 3.0) * cfg.N / eps
    tr = negative_trace(pot, min(lam, 0.0), cfg.q, cfg.beta, L_max, jobs, cache)
    half = 0.0 if sol is None else 0.5 * coulomb_norm(sol.grid, sol.rho)
    value = tr.total + lam * cfg.N - half - penalty
    return LowerBound(value, tr.total, tr.error, lam, cfg.N, half, penalty, eps, form)


def epsilon_ladder(cfg: NuclearConfiguration, factors=tuple(2.0 ** k for k in range(-3, 4)),
                   **kw) -> tuple[list[LowerBound], int]:
    """Lower bounds over ``eps = f Z^{-2/3}``; returns the list and the best index."""
    Z = _atom(cfg)
    sol = kw.pop("rho", None) or solve_tf_atom(Z, cfg.N, cfg.q)
    out = [lower_bound(cfg, sol, epsilon=f * Z ** (-2.0 / 3.0), **kw) for f in factors]
    best = int(np.argmax([b.value for b in out]))
    return out, best


# --- sandwich records --------------------------------------------------------------

@dataclass(frozen=True)
class SandwichRecord:
    Z: float
    N: float
    q: int
    beta: float
    lower: float
    upper: float
    E_TF: float
    Scott: float
    exchange: float
    Dirac: float

    @property
    def gap(self) -> float:
        return self.upper - self.lower

    CSV_FIELDS = ("Z", "N", "q", "beta", "lower", "upper", "E_TF", "Scott", "exchange", "Dirac", "gap")

    def csv_row(self) -> list:
        return [getattr(self, k) for k in self.CSV_FIELDS]
