"""Radial spectral engine.

Two discretizations of ``T - W`` in a fixed angular-momentum channel:

* ``nonrelativistic``: kinetic ``-1/2 d^2/dr^2 + l(l+1)/(2 r^2)`` by second-order
  finite differences on a logarithmic radial grid.  With ``r = e^x`` and
  ``u = sqrt(r) y`` the channel equation becomes the symmetric tridiagonal
  problem ``-y''/2 + ((l+1/2)^2/2 - r^2 W) y = E r^2 y``; eigenvalues come from
  bisection (accurate for this strongly graded matrix) and are Richardson
  extrapolated in ``h^2``.
* ``chandrasekhar``: kinetic multiplier ``(beta^-2 p^2 + beta^-4)^{1/2} -
  beta^-2`` on a logarithmic momentum grid, potential as a dense integral
  kernel.  The Coulomb kernel of ``1/r`` in channel ``l`` is
  ``Q_l((p^2 + p'^2) / 2 p p') / pi``; its logarithmic singularity is
  integrated cell by cell with graded Gauss-Legendre rules.  ``beta = 0`` gives
  the Schrodinger operator in momentum space.

Potentials are sums of analytic radial terms so that both representations are
available in closed form.  Eigenvalues are in atomic units (kinetic
``|p|^2/2`` at ``beta = 0``).
"""
from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import mcfit
import numpy as np
from scipy import special
from scipy.interpolate import CubicSpline
from scipy.linalg import cholesky, eigh, eigh_tridiagonal, solve_triangular
from scipy.optimize import least_squares

from .cache import DiskCache, content_hash
from .model import CRITICAL_COUPLING, RadialGrid

KINETIC_KINDS = ("nonrelativistic", "chandrasekhar")


class SupercriticalError(ValueError):
    """Coulomb coupling above 2/pi for the Chandrasekhar operator."""


class NonConvergenceError(RuntimeError):
    """Refinement budget exhausted before the requested tolerance."""


# --- Legendre functions of the second kind --------------------------------

def legendre_q(ell: int, d):
    """Q_l(1 + d) for d > 0.

    Uses ``Q_l(cosh s) = sqrt(pi) l! / Gamma(l + 3/2) e^{-(l+1)s}
    2F1(1/2, l+1; l+3/2; e^{-2s})``, which is stable for all ``s > 0`` and
    all ``l`` (the upward recurrence is not).
    """
    d = np.asarray(d, dtype=float)
    sig = np.log1p(d + np.sqrt(d * (d + 2.0)))
    lead = 0.5 * math.log(math.pi) + special.gammaln(ell + 1) - special.gammaln(ell + 1.5)
    return np.exp(lead - (ell + 1) * sig) * special.hyp2f1(0.5, ell + 1, ell + 1.5, np.exp(-2.0 * sig))


def legendre_q_derivative(ell: int, d):
    """dQ_l/dz at z = 1 + d."""
    d = np.asarray(d, dtype=float)
    z = 1.0 + d
    return (ell + 1) * (legendre_q(ell + 1, d) - z * legendre_q(ell, d)) / (d * (z + 1.0))


def _gap(p, pp, mu=0.0):
    # z - 1 for z = (p^2 + p'^2 + mu^2) / (2 p p'), without cancellation
    return ((p - pp) ** 2 + mu * mu) / (2.0 * p * pp)


# --- potential terms --------------------------------------------------------
# Each term is attractive for positive strength: the operator is T - W.
# ``kernel`` is the channel matrix element <p|W|p'> for reduced radial
# functions normalized by int |f|^2 dp = 1.

@dataclass(frozen=True)
class Coulomb:
    charge: float

    def __call__(self, r):
        return self.charge / r

    def kernel(self, ell, p, pp):
        return self.charge / math.pi * legendre_q(ell, _gap(p, pp))


@dataclass(frozen=True)
class Yukawa:
    charge: float
    mu: float

    def __call__(self, r):
        return self.charge * np.exp(-self.mu * r) / r

    def kernel(self, ell, p, pp):
        return self.charge / math.pi * legendre_q(ell, _gap(p, pp, self.mu))


@dataclass(frozen=True)
class Exponential:
    depth: float
    mu: float = 1.0

    def __call__(self, r):
        return self.depth * np.exp(-self.mu * r)

    def kernel(self, ell, p, pp):
        # a e^{-mu r} = -a d/dmu (e^{-mu r} / r)
        dq = legendre_q_derivative(ell, _gap(p, pp, self.mu))
        return -self.depth / math.pi * dq * self.mu / (p * pp)


@dataclass(frozen=True)
class Gaussian:
    depth: float
    width: float = 1.0

    def __call__(self, r):
        return self.depth * np.exp(-(r / self.width) ** 2)

    def kernel(self, ell, p, pp):
        a = 1.0 / self.width ** 2
        z = p * pp / (2.0 * a)
        # ive returns nan for very large arguments; use its asymptotic form there
        big = z > 1e8
        zs = np.where(big, 1.0, z)
        iv = np.where(big, (1.0 - (4.0 * (ell + 0.5) ** 2 - 1.0) / (8.0 * np.where(big, z, 1.0)))
                      / np.sqrt(2.0 * math.pi * np.where(big, z, 1.0)), special.ive(ell + 0.5, zs))
        return self.depth * np.sqrt(p * pp) / (2.0 * a) * np.exp(-(p - pp) ** 2 / (4.0 * a)) * iv


@dataclass(frozen=True)
class SquareWell:
    """Depth ``depth`` inside ``r < radius``; position space only."""

    depth: float
    radius: float = 1.0

    def __call__(self, r):
        return np.where(np.asarray(r) < self.radius, self.depth, 0.0)

    def kernel(self, ell, p, pp):
        raise NotImplementedError("square wells have no momentum-space kernel here")


@dataclass(frozen=True)
class RadialPotential:
    """W(r) = sum of terms; ``exact`` optionally overrides position values."""

    terms: tuple = ()
    label: str = ""
    exact: Callable | None = field(default=None, compare=False, repr=False)
    fit_error: float = 0.0

    @classmethod
    def coulomb(cls, Z: float) -> "RadialPotential":
        return cls((Coulomb(float(Z)),), f"coulomb(Z={Z:g})") if Z else cls((), "zero")

    @classmethod
    def zero(cls) -> "RadialPotential":
        return cls((), "zero")

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        if self.exact is not None:
            return np.asarray(self.exact(r), dtype=float)
        out = np.zeros_like(r)
        for t in self.terms:
            out = out + t(r)
        return out

    def __add__(self, other: "RadialPotential") -> "RadialPotential":
        return RadialPotential(self.terms + other.terms, f"{self.label}+{other.label}")

    def scaled(self, factor: float) -> "RadialPotential":
        terms = tuple(replace(t, charge=t.charge * factor) if hasattr(t, "charge")
                      else replace(t, depth=t.depth * factor) for t in self.terms)
        exact = None if self.exact is None else (lambda r, f=self.exact: factor * f(r))
        return RadialPotential(terms, f"{factor:g}*{self.label}", exact, self.fit_error * abs(factor))

    @property
    def singular_charge(self) -> float:
        """Coefficient of 1/r at the origin."""
        return sum(t.charge for t in self.terms if isinstance(t, (Coulomb, Yukawa)))

    @property
    def far_charge(self) -> float:
        return sum(t.charge for t in self.terms if isinstance(t, Coulomb))

    @property
    def momentum_ready(self) -> bool:
        return not any(isinstance(t, SquareWell) for t in self.terms)

    def key(self):
        return [self.label, [repr(t) for t in self.terms]]

    @classmethod
    def from_tf(cls, sol, n_terms: int = 6) -> "RadialPotential":
        """TF mean-field potential W; see :meth:`from_profile`."""
        return cls.from_profile(sol.W_at, sol.Z, sol.N, sol.length,
                                f"tf(Z={sol.Z:g},N={sol.N:g},q={sol.q})", n_terms)

    @classmethod
    def from_samples(cls, r, W, Z: float, N: float, label: str = "sampled",
                     n_terms: int = 6) -> "RadialPotential":
        """Screened-nucleus potential from samples on a radial grid.

        ``r W - (Z - N)`` is interpolated by a cubic spline in log r and
        continued beyond the last node by an ``r^-3`` decay.
        """
        r = np.asarray(r, dtype=float)
        g = r * np.asarray(W, dtype=float) - (Z - N)
        spline = CubicSpline(np.log(r), g)
        r0, r1, g1 = r[0], r[-1], g[-1]

        def W_at(rr):
            rr = np.asarray(rr, dtype=float)
            inner = spline(np.log(np.clip(rr, r0, r1)))
            # below r0: the screening charge is linear in r at the nucleus
            inner = np.where(rr < r0, g[0], inner)
            tail = g1 * (r1 / np.maximum(rr, r1)) ** 3
            return (np.where(rr > r1, tail, inner) + (Z - N)) / rr

        length = 0.8853 * (Z ** (-1.0 / 3.0))
        return cls.from_profile(W_at, Z, N, length, label, n_terms)

    @classmethod
    def from_profile(cls, W_at, Z: float, N: float, length: float, label: str,
                     n_terms: int = 6) -> "RadialPotential":
        """Coulomb + Yukawa representation of a screened-nucleus potential.

        ``r W(r) = (Z - N) + sum_k c_k e^{-mu_k r}`` with ``sum c_k = N`` so the
        nuclear singularity is exact; decay rates are fitted by variable
        projection.  Position-space evaluation uses ``W_at`` itself.
        """
        b = length
        x = np.geomspace(1e-4, 60.0, 400)
        r = x * b
        target = r * np.asarray(W_at(r)) - (Z - N)

        def coeffs(log_mu):
            E = np.exp(-np.outer(r, np.exp(log_mu)))
            # impose sum c = N by eliminating the last coefficient
            A = E[:, :-1] - E[:, -1:]
            c, *_ = np.linalg.lstsq(A, target - N * E[:, -1], rcond=None)
            return np.append(c, N - c.sum()), E

        def resid(log_mu):
            c, E = coeffs(log_mu)
            return (E @ c - target) / Z

        start = np.log(np.geomspace(0.3, 60.0, n_terms) / b)
        fit = least_squares(resid, start, x_scale=1.0, max_nfev=400)
        c, _ = coeffs(fit.x)
        mus = np.exp(fit.x)
        terms = [Coulomb(Z - N)] if Z > N else []
        terms += [Yukawa(float(ck), float(mk)) for ck, mk in sorted(zip(c, mus), key=lambda t: t[1])]
        err = float(np.max(np.abs(fit.fun)))
        exact = (lambda rr: np.asarray(W_at(rr)))
        return cls(tuple(terms), label, exact, err)


# --- grids ------------------------------------------------------------------

@dataclass(frozen=True)
class MomentumGrid:
    p_min: float
    p_max: float
    n: int

    @property
    def nodes(self) -> np.ndarray:
        return np.exp(np.linspace(math.log(self.p_min), math.log(self.p_max), self.n))

    @property
    def step(self) -> float:
        return math.log(self.p_max / self.p_min) / (self.n - 1)

    def refined(self) -> "MomentumGrid":
        return MomentumGrid(self.p_min, self.p_max, 2 * self.n - 1)

    @classmethod
    def default(cls, Z: float, beta: float = 0.0, step: float = 0.06) -> "MomentumGrid":
        Z = max(Z, 1.0)
        p_min = 1e-4 * Z
        p_max = 1e5 * Z * max(1.0, 1.0 / (beta * Z)) if beta > 0 else 1e5 * Z
        n = int(math.ceil(math.log(p_max / p_min) / step)) + 1
        return cls(p_min, p_max, n)


def position_grid(Z: float = 1.0, cut: float = 0.0, step: float = 0.02,
                  r_max: float | None = None) -> RadialGrid:
    Z = max(Z, 1.0)
    if r_max is None:
        r_max = min(1e4, max(60.0, 45.0 / math.sqrt(2.0 * abs(cut)))) if cut < 0 else 1e3
    r_min = 1e-10 / Z
    n = int(math.ceil(math.log(r_max / r_min) / step)) + 1
    return RadialGrid.logarithmic(r_min, r_max, n)


def _refine_position(grid: RadialGrid) -> RadialGrid:
    return RadialGrid.logarithmic(grid.r_min, grid.r_max, 2 * len(grid) - 1)


# --- operator specification -------------------------------------------------

@dataclass(frozen=True)
class RadialOperatorSpec:
    kinetic: str
    ell: int
    potential: RadialPotential
    beta: float = 0.0
    q: int = 2
    grid: RadialGrid | MomentumGrid | None = None

    def __post_init__(self):
        if self.kinetic not in KINETIC_KINDS:
            raise ValueError(f"kinetic must be one of {KINETIC_KINDS}")
        if int(self.ell) != self.ell or self.ell < 0:
            raise ValueError("ell must be a non-negative integer")
        if self.beta < 0:
            raise ValueError("beta must be >= 0")
        if self.kinetic == "chandrasekhar":
            if self.potential.singular_charge * self.beta > CRITICAL_COUPLING * (1 + 1e-12):
                raise SupercriticalError(
                    f"Z beta = {self.potential.singular_charge * self.beta:.6g} exceeds 2/pi")
            if not self.potential.momentum_ready:
                raise ValueError("potential has no momentum-space representation")
            if self.grid is not None and not isinstance(self.grid, MomentumGrid):
                raise TypeError("chandrasekhar operators need a MomentumGrid")
        elif self.grid is not None and not isinstance(self.grid, RadialGrid):
            raise TypeError("nonrelativistic operators need a RadialGrid")

    @property
    def degeneracy(self) -> int:
        return self.q * (2 * self.ell + 1)

    def with_grid(self, grid) -> "RadialOperatorSpec":
        return RadialOperatorSpec(self.kinetic, self.ell, self.potential, self.beta, self.q, grid)

    def default_grid(self, cut: float = 0.0):
        Z = abs(self.potential.singular_charge)
        if self.kinetic == "chandrasekhar":
            return MomentumGrid.default(Z, self.beta)
        return position_grid(Z, cut)

    def key(self):
        g = self.grid
        gd = ([g.r_min, g.r_max, len(g)] if isinstance(g, RadialGrid)
              else [g.p_min, g.p_max, g.n] if g is not None else None)
        return [self.kinetic, float(self.beta), int(self.ell), self.potential.key(), gd]


@dataclass(frozen=True)
class DiscreteOperator:
    """Symmetric matrix of one channel.

    For finite differences ``diagonal``/``offdiagonal`` hold the tridiagonal
    matrix; for momentum space ``matrix`` is dense.
    """

    spec: RadialOperatorSpec
    grid: RadialGrid | MomentumGrid
    matrix: np.ndarray | None = None
    diagonal: np.ndarray | None = None
    offdiagonal: np.ndarray | None = None

    @property
    def banded(self) -> bool:
        return self.matrix is None

    def dense(self) -> np.ndarray:
        if self.matrix is not None:
            return self.matrix
        return (np.diag(self.diagonal) + np.diag(self.offdiagonal, 1)
                + np.diag(self.offdiagonal, -1))


def kinetic_symbol(p, beta: float):
    """(beta^-2 p^2 + beta^-4)^{1/2} - beta^-2, written without cancellation."""
    p = np.asarray(p, dtype=float)
    return p * p / (1.0 + np.sqrt(1.0 + (beta * p) ** 2))


def _graded_rule(a, b, order=32, power=3):
    u, w = np.polynomial.legendre.leggauss(order)
    u = 0.5 * (u + 1.0)
    w = 0.5 * w
    return a + (b - a) * u ** power, (b - a) * power * u ** (power - 1) * w


def _cell_rule(k: int, h: float, order: int):
    """Nodes/weights over the cell centred at k*h, singularity at 0."""
    if k == 0:
        t, w = _graded_rule(0.0, 0.5 * h, order)
        return np.concatenate([-t, t]), np.concatenate([w, w])
    u, w = np.polynomial.legendre.leggauss(order)
    return (k + 0.5 * u) * h, 0.5 * h * w


def coulomb_cell_averages(ell: int, h: float, n: int, near: int = 40) -> np.ndarray:
    """A_k = int over cell k of Q_l(cosh tau) d tau, k = 0..n-1."""
    A = np.empty(n)
    for k in range(min(near, n)):
        t, w = _cell_rule(k, h, 32 if k == 0 else 16)
        A[k] = np.dot(w, legendre_q(ell, np.cosh(t) - 1.0 if k else 2.0 * np.sinh(0.5 * t) ** 2))
    if n > near:
        u, w = np.polynomial.legendre.leggauss(6)
        k = np.arange(near, n)[:, None]
        t = (k + 0.5 * u[None, :]) * h
        A[near:] = 0.5 * h * (legendre_q(ell, 2.0 * np.sinh(0.5 * t) ** 2) * w).sum(1)
    return A


def _term_matrix(term, ell: int, p: np.ndarray, h: float, near: int = 2) -> np.ndarray:
    """int over cell j of <p_i|W|p'> ds' for a smooth (non-Coulomb) term."""
    n = len(p)
    u, w = np.polynomial.legendre.leggauss(3)
    M = np.zeros((n, n))
    for um, wm in zip(u, w):
        M += 0.5 * h * wm * term.kernel(ell, p[:, None], (p * math.exp(0.5 * h * um))[None, :])
    idx = np.arange(n)
    for k in range(-near, near + 1):
        rows = idx[(idx + k >= 0) & (idx + k < n)]
        t, wt = _cell_rule(k, h, 24 if k == 0 else 12)
        vals = term.kernel(ell, p[rows, None], p[rows, None] * np.exp(t)[None, :]) @ wt
        M[rows, rows + k] = vals
    return M


def build_operator(spec: RadialOperatorSpec, cut: float = 0.0) -> DiscreteOperator:
    grid = spec.grid if spec.grid is not None else spec.default_grid(cut)
    ell = spec.ell
    if spec.kinetic == "nonrelativistic":
        r = grid.nodes
        h = grid.step
        W = spec.potential(r)
        for t in spec.potential.terms:
            if isinstance(t, SquareWell) and spec.potential.exact is None:
                # log-cell average across the jump keeps the scheme second order
                inside = np.clip((math.log(t.radius) - np.log(r)) / h + 0.5, 0.0, 1.0)
                W = W + t.depth * (inside - (r < t.radius))
        d = 1.0 / h ** 2 + 0.5 * (ell + 0.5) ** 2 - r * r * W
        e = np.full(len(r) - 1, -0.5 / h ** 2)
        return DiscreteOperator(spec, grid, None, d / r ** 2, e / (r[1:] * r[:-1]))
    H = -potential_matrix(spec.potential, ell, grid)
    H[np.diag_indices_from(H)] += kinetic_symbol(grid.nodes, spec.beta)
    return DiscreteOperator(spec, grid, H)


def potential_matrix(potential: RadialPotential, ell: int, grid: MomentumGrid) -> np.ndarray:
    """Matrix of W in channel ``ell`` acting on ``v = sqrt(h p) f(p)``."""
    p = grid.nodes
    h = grid.step
    M = np.zeros((len(p), len(p)))
    sq = np.sqrt(np.outer(p, p))
    coul = sum(t.charge for t in potential.terms if isinstance(t, Coulomb))
    if coul:
        A = coulomb_cell_averages(ell, h, len(p))
        M += coul / math.pi * sq * A[np.abs(np.subtract.outer(np.arange(len(p)), np.arange(len(p))))]
    for t in potential.terms:
        if isinstance(t, Coulomb):
            continue
        T = _term_matrix(t, ell, p, h)
        M += sq * 0.5 * (T + T.T)
    return M


# --- spectra ----------------------------------------------------------------

@dataclass(frozen=True)
class ChannelSpectrum:
    """Eigenpairs of one channel below a cut.

    ``vectors`` are orthonormal columns in the Euclidean sense.  On a radial
    grid they map to reduced radial functions ``u(r) = v / sqrt(r h)`` with
    ``int u^2 dr = 1``; on a momentum grid to ``f(p) = v / sqrt(p h)`` with
    ``int f^2 dp = 1``.
    """

    eigenvalues: np.ndarray
    vectors: np.ndarray
    ell: int
    degeneracy: int
    kinetic: str
    beta: float
    grid: RadialGrid | MomentumGrid
    cut: float
    potential: RadialPotential = field(repr=False, compare=False, default=None)
    metadata: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        for name in ("eigenvalues", "vectors"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if np.any(np.diff(self.eigenvalues) < 0):
            raise ValueError("eigenvalues must be sorted")

    def __len__(self):
        return len(self.eigenvalues)

    @property
    def count(self) -> int:
        return len(self.eigenvalues)

    def orthonormality_error(self) -> float:
        if not len(self):
            return 0.0
        G = self.vectors.T @ self.vectors
        return float(np.max(np.abs(G - np.eye(len(G)))))

    def radial_functions(self, r) -> np.ndarray:
        """Reduced radial functions u_j(r) (shape len(r) x count)."""
        r = np.atleast_1d(np.asarray(r, dtype=float))
        if not len(self):
            return np.zeros((len(r), 0))
        g = self.grid
        if isinstance(g, RadialGrid):
            u = self.vectors / np.sqrt(g.nodes * g.step)[:, None]
            x = np.log(g.nodes)
            spline = CubicSpline(x, u, axis=0)
            out = spline(np.log(np.clip(r, g.r_min, g.r_max)))
            out[(r < g.r_min) | (r > g.r_max)] = 0.0
            return out
        # log-space (FFTLog) spherical Bessel transform; a direct sum on the
        # log p-grid aliases once p r h exceeds pi
        p = g.nodes
        f = self.vectors / np.sqrt(g.step * p)[:, None]
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            transform = mcfit.SphericalBessel(p, nu=self.ell, lowring=True)
            rr, G = transform(f / p[:, None], axis=0, extrap=True)
        spline = CubicSpline(np.log(rr), rr[:, None] * G, axis=0)
        out = spline(np.log(np.clip(r, rr[0], rr[-1])))
        out[(r < rr[0]) | (r > rr[-1])] = 0.0
        return out

    def kinetic_expectations(self) -> np.ndarray:
        """<T phi_j, phi_j> for each eigenvector."""
        g = self.grid
        if isinstance(g, MomentumGrid):
            return kinetic_symbol(g.nodes, self.beta) @ (self.vectors ** 2)
        # E_j + <W>_j with <W> = int W u^2 dr
        r = g.nodes
        W = self.potential(r)
        return self.eigenvalues + (W[:, None] * self.vectors ** 2).sum(0)


def _solve_once(op: DiscreteOperator, cut: float):
    if op.banded:
        d, e = op.diagonal, op.offdiagonal
        lo = float(np.min(d - np.r_[np.abs(e), 0.0] - np.r_[0.0, np.abs(e)]))
        if lo >= cut:
            return np.empty(0), np.empty((len(d), 0))
        w, v = eigh_tridiagonal(d, e, select="v", select_range=(lo - 1.0, cut), tol=1e-15)
        return w, v
    H = op.matrix
    # eigh alone is accurate to eps ||H|| ~ eps p_max^2, far too coarse for
    # shallow levels; the resolvent (H + c)^-1 has norm ~ 1/c instead.
    w0 = eigh(H, subset_by_index=(0, 0), eigvals_only=True)[0]
    if w0 >= cut:
        return np.empty(0), np.empty((len(H), 0))
    c = 2.0 * abs(w0) + 1e-12
    L = cholesky(H + c * np.eye(len(H)), lower=True)
    Linv = solve_triangular(L, np.eye(len(H)), lower=True)
    mu, y = eigh(Linv.T @ Linv, subset_by_value=(1.0 / (c + cut), np.inf), driver="evr")
    w = 1.0 / mu - c
    order = np.argsort(w)
    return w[order], y[:, order]


def _richardson(coarse, fine):
    m = min(len(coarse), len(fine))
    out = fine.copy()
    out[:m] = (4.0 * fine[:m] - coarse[:m]) / 3.0
    # a level near the cut can be missing on one grid; keep fine values where
    # the extrapolation moves a level by more than a quarter of its spacing
    if len(fine) > 1:
        gaps = np.diff(fine)
        spacing = np.minimum(np.r_[gaps[0], gaps], np.r_[gaps, gaps[-1]])
        bad = np.abs(out - fine) > 0.25 * spacing
        out[bad] = fine[bad]
    return out


def eigenvalues_below(spec: RadialOperatorSpec, cut: float = 0.0, tol: float = 1e-5,
                      max_levels: int = 4, verify: bool = True,
                      cache: DiskCache | None = None) -> ChannelSpectrum:
    """All eigenpairs of ``spec`` with eigenvalue < ``cut``.

    Eigenvalues are Richardson extrapolated from the grid and its halved-step
    refinement.  With ``verify`` the step is halved again until two successive
    extrapolations agree to ``tol * |lambda_0|`` (ground-state scale),
    otherwise
    :class:`NonConvergenceError` is raised once ``max_levels`` is exhausted.
    """
    if cut > 0:
        raise ValueError("cut must be <= 0")
    base = spec.grid if spec.grid is not None else spec.default_grid(cut)
    spec = spec.with_grid(base)
    if isinstance(base, MomentumGrid):
        # states with momentum scale below ~30 p_min are not resolved
        cut = min(cut, -450.0 * base.p_min ** 2)
    key = None
    if cache is not None:
        key = content_hash("spectrum-v1", spec.key(), float(cut), float(tol), int(max_levels), bool(verify))
        hit = cache.get(key)
        if hit is not None:
            return _from_record(spec, cut, hit)
    refine = _refine_position if spec.kinetic == "nonrelativistic" else MomentumGrid.refined
    grid = base
    w_prev, _ = _solve_once(build_operator(spec), cut)
    grid = refine(grid)
    w_fine, v_fine = _solve_once(build_operator(spec.with_grid(grid)), cut)
    est = _richardson(w_prev, w_fine)
    levels = 2
    change = math.inf
    while verify:
        if levels >= max_levels + 1:
            raise NonConvergenceError(
                f"channel l={spec.ell}: change/|lambda_0| {change:.2e} > {tol:g} after {levels} grids")
        grid_next = refine(grid)
        w_next, v_next = _solve_once(build_operator(spec.with_grid(grid_next)), cut)
        est_next = _richardson(w_fine, w_next)
        m = min(len(est), len(est_next))
        # states that appear at the cut between levels are not compared
        # absolute change on the ground-state scale; traces need nothing finer
        scale = max(abs(est_next[0]), 1e-300) if m else 1.0
        change = float(np.max(np.abs(est_next[:m] - est[:m]) / scale)) if m else 0.0
        grid, w_fine, v_fine, est = grid_next, w_next, v_next, est_next
        levels += 1
        if change < tol:
            break
    keep = est < cut
    n_keep = int(np.sum(keep[: v_fine.shape[1]]))
    est = est[:n_keep]
    vecs = v_fine[:, :n_keep]
    # fix the sign convention: positive near the origin / at low momentum
    lead = np.argmax(np.abs(vecs) > 1e-8 * np.abs(vecs).max(0, initial=0.0), axis=0) if n_keep else []
    for j, i in enumerate(lead):
        if vecs[i, j] < 0:
            vecs[:, j] = -vecs[:, j]
    meta = {"levels": levels, "n": len(grid.nodes), "step": grid.step,
            "relative_change": 0.0 if not verify else change,
            "richardson_shift": float(np.max(np.abs(est - w_fine[:n_keep]))) if n_keep else 0.0}
    out = ChannelSpectrum(est, vecs, spec.ell, spec.degeneracy, spec.kinetic, spec.beta, grid,
                          cut, spec.potential, meta)
    if cache is not None:
        cache.put(key, {"eigenvalues": out.eigenvalues, "vectors": out.vectors,
                        "grid": _grid_record(grid), "meta": np.array([levels, change, meta["richardson_shift"]])})
    return out


def _grid_record(grid) -> np.ndarray:
    if isinstance(grid, RadialGrid):
        return np.array([0.0, grid.r_min, grid.r_max, len(grid)])
    return np.array([1.0, grid.p_min, grid.p_max, grid.n])


def _from_record(spec, cut, rec) -> ChannelSpectrum:
    kind, a, b, n = rec["grid"]
    grid = RadialGrid.logarithmic(a, b, int(n)) if kind == 0.0 else MomentumGrid(a, b, int(n))
    levels, change, shift = rec["meta"]
    meta = {"levels": int(levels), "n": int(n), "step": grid.step, "relative_change": float(change),
            "richardson_shift": float(shift), "cached": True}
    return ChannelSpectrum(rec["eigenvalues"], rec["vectors"], spec.ell, spec.degeneracy,
                           spec.kinetic, spec.beta, grid, cut, spec.potential, meta)


# --- traces and counting ----------------------------------------------------

@dataclass(frozen=True)
class TraceResult:
    """Channel-summed spectral quantity.

    ``value`` sums channels ``l <= l_used``; ``tail`` is the extrapolated
    remainder for ``l > l_used`` (zero when a channel came out empty) and is
    reported separately as part of ``error``.
    """

    value: float
    per_channel: tuple
    tail: float
    l_used: int
    error: float
    spectra: tuple = field(default=(), repr=False, compare=False)

    @property
    def total(self) -> float:
        return self.value + self.tail


def _as_potential(W) -> RadialPotential:
    if isinstance(W, RadialPotential):
        return W
    if isinstance(W, (int, float)):
        return RadialPotential.coulomb(float(W))
    if hasattr(W, "W_at"):
        return RadialPotential.from_tf(W)
    raise TypeError("W must be a RadialPotential, a nuclear charge or a TF solution")


def channel_spectra(W, lam: float = 0.0, q: int = 2, beta: float = 0.0, L_max: int = 60,
                    jobs: int = 1, cache: DiskCache | None = None, verify: bool = False,
                    kinetic: str | None = None, grid=None) -> list[ChannelSpectrum]:
    """Spectra of ``T - W`` below ``lam`` for l = 0, 1, ... until a channel is empty.

    Channels are computed in batches of ``jobs`` worker threads.
    """
    pot = _as_potential(W)
    kind = kinetic or ("chandrasekhar" if beta > 0 else "nonrelativistic")

    def one(ell):
        spec = RadialOperatorSpec(kind, ell, pot, beta, q, grid)
        return eigenvalues_below(spec, min(lam, 0.0), verify=verify, cache=cache)

    out: list[ChannelSpectrum] = []
    ell = 0
    with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
        while ell <= L_max:
            batch = list(range(ell, min(L_max, ell + max(1, jobs) - 1) + 1))
            res = list(pool.map(one, batch))
            for s in res:
                out.append(s)
                if not len(s):
                    return out
            ell = batch[-1] + 1
    return out


def _tail_estimate(values: Sequence[float]) -> tuple[float, float]:
    """Power-law extrapolation of per-channel contributions beyond the last one."""
    v = np.abs(np.asarray(values[-4:], dtype=float))
    L = len(values) - 1
    ells = np.arange(L - len(v) + 1, L + 1, dtype=float)
    if len(v) < 3 or np.any(v == 0):
        return 0.0, 0.0
    slope, _ = np.polyfit(np.log(ells + 0.5), np.log(v), 1)
    if slope >= -1.05:
        raise NonConvergenceError(f"channel contributions decay too slowly (l^{slope:.2f})")
    c = v[-1] * (L + 0.5) ** (-slope)
    tail = float(c * special.zeta(-slope, L + 1.5))
    return math.copysign(tail, values[-1]), tail


def negative_trace(W, lam: float = 0.0, q: int = 2, beta: float = 0.0, L_max: int = 60,
                   jobs: int = 1, cache: DiskCache | None = None, tolerance: float | None = None,
                   **kw) -> TraceResult:
    """Tr (T - W - lam)_- summed as sum_l q(2l+1) sum_j min(lambda_j - lam, 0)."""
    spectra = channel_spectra(W, lam, q, beta, L_max, jobs, cache, **kw)
    per = tuple(float(s.degeneracy * np.sum(np.minimum(s.eigenvalues - lam, 0.0))) for s in spectra)
    return _summarize(per, spectra, L_max, tolerance)


def counting_function(W, lam: float = 0.0, q: int = 2, beta: float = 0.0, L_max: int = 60,
                      jobs: int = 1, cache: DiskCache | None = None, tolerance: float | None = None,
                      **kw) -> TraceResult:
    """Number of eigenvalues below ``lam`` counted with degeneracy q(2l+1)."""
    spectra = channel_spectra(W, lam, q, beta, L_max, jobs, cache, **kw)
    per = tuple(float(s.degeneracy * s.count) for s in spectra)
    return _summarize(per, spectra, L_max, tolerance)


def _summarize(per, spectra, L_max, tolerance) -> TraceResult:
    closed = bool(spectra) and not len(spectra[-1])
    tail, err = (0.0, 0.0) if closed or not per else _tail_estimate(per)
    value = float(sum(per))
    numerical = sum(s.metadata.get("richardson_shift", 0.0) * s.degeneracy * max(1, s.count)
                    for s in spectra)
    error = abs(err) + numerical
    if tolerance is not None and abs(err) > tolerance:
        raise NonConvergenceError(f"channel tail {err:.3g} exceeds tolerance {tolerance:g}")
    return TraceResult(value, per, tail, len(spectra) - 1, error, tuple(spectra))


# --- spectral densities -----------------------------------------------------

def density_diagonal(spectra: Sequence[ChannelSpectrum], lam: float, r) -> np.ndarray:
    """e(x, x, lam) at |x| = r: sum over eigenvalues <= lam of |phi_j(x)|^2 with degeneracy."""
    return _weighted_diagonal(spectra, r, lambda E: (E <= lam).astype(float))


def e1_diagonal(spectra: Sequence[ChannelSpectrum], r, tau: float = 0.0) -> np.ndarray:
    """e^1(x, x, tau) = sum_j (tau - lambda_j)_+ |phi_j(x)|^2."""
    return _weighted_diagonal(spectra, r, lambda E: np.maximum(tau - E, 0.0))


def _weighted_diagonal(spectra, r, weight) -> np.ndarray:
    r = np.atleast_1d(np.asarray(r, dtype=float))
    out = np.zeros_like(r)
    for s in spectra:
        if not len(s):
            continue
        wts = weight(s.eigenvalues)
        if not np.any(wts):
            continue
        u = s.radial_functions(r)
        out += s.degeneracy / (4.0 * math.pi) * (u * u) @ wts / (r * r)
    return out
