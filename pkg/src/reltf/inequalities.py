"""Numerical checks of spectral and density inequalities on a fixed corpus.

Every check is phrased as ``lhs <= rhs`` and reports ``margin = rhs - lhs``
(so ``margin >= 0`` means the inequality holds on the discretized problem).
Constants that are only known to exist are passed in (default 1) and the
empirical constant is reported through ``ratio``; ``fit`` says whether the
corpus constant is the maximum or the minimum of the ratios.
"""
from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, special
from scipy.linalg import eigh

from .bounds import SlaterState, slater_state
from .cache import DiskCache
from .model import RadialGrid
from .spectral import (
    Coulomb,
    Exponential,
    Gaussian,
    MomentumGrid,
    RadialPotential,
    SquareWell,
    channel_spectra,
    coulomb_cell_averages,
    negative_trace,
    position_grid,
    potential_matrix,
)
from .tf import coulomb_norm, integrate_radial, solve_tf_atom

CORPUS_VERSION = "1"
LIEB_YAU_CONSTANT = 4.4827
# sharp Hardy-Littlewood-Sobolev constant for |x|^-1 in three dimensions
HLS_SHARP = (math.sqrt(math.pi) * special.gamma(1.0) / special.gamma(2.5)
             * (special.gamma(1.5) / special.gamma(3.0)) ** (-2.0 / 3.0))


class DivergentError(ValueError):
    """The right-hand side of an inequality is infinite for this input."""


@dataclass(frozen=True)
class InequalityReport:
    name: str
    instance: str
    lhs: float
    rhs: float
    margin: float
    grid: str
    ratio: float = float("nan")
    fit: str = "max"
    error: float = 0.0
    metadata: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if not math.isfinite(self.margin):
            raise ValueError(f"{self.name}/{self.instance}: margin is not finite")

    def passes(self, tol: float = 1e-6) -> bool:
        """margin >= -(tol * scale + numerical error of the discretization)."""
        scale = max(abs(self.lhs), abs(self.rhs), 1e-300)
        return self.margin >= -(tol * scale + self.error)

    CSV_FIELDS = ("name", "instance", "lhs", "rhs", "margin", "grid")

    def csv_row(self) -> list:
        return [self.name, self.instance, repr(self.lhs), repr(self.rhs), repr(self.margin), self.grid]


def reports_to_csv(reports) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(InequalityReport.CSV_FIELDS + ("ratio",))
    for rep in reports:
        w.writerow(rep.csv_row() + [repr(rep.ratio)])
    return buf.getvalue()


def _report(name, instance, lhs, rhs, grid, ratio=float("nan"), fit="max", error=0.0, **meta):
    return InequalityReport(name, instance, float(lhs), float(rhs), float(rhs - lhs), grid,
                            float(ratio), fit, float(error), meta)


# --- helpers --------------------------------------------------------------------

def _radial_quad(f, r_max: float = np.inf, singular: bool = True) -> float:
    """int f(|x|) dx over R^3 by adaptive quadrature in log r."""
    g = lambda x: 4.0 * math.pi * f(math.exp(x)) * math.exp(3.0 * x)
    lo = -40.0 if singular else -20.0
    hi = math.log(r_max) if math.isfinite(r_max) else 8.0
    pts = np.linspace(lo, hi, 9)
    return float(sum(integrate.quad(g, a, b, limit=200, epsabs=0.0, epsrel=1e-10)[0]
                     for a, b in zip(pts[:-1], pts[1:])))


def hankel_transform(u, r, ell: int, p) -> np.ndarray:
    """f(p) = sqrt(2/pi) int u(r) (p r) j_l(p r) dr (trapezoid on the given nodes).

    With this normalization ``int f^2 dp = int u^2 dr``.
    """
    r = np.asarray(r, dtype=float)
    p = np.asarray(p, dtype=float)
    w = np.gradient(r)
    w[0] *= 0.5
    w[-1] *= 0.5
    kr = np.outer(p, r)
    return math.sqrt(2.0 / math.pi) * (special.spherical_jn(ell, kr) * kr) @ (w * np.asarray(u))


def _grid_label(grid) -> str:
    if isinstance(grid, MomentumGrid):
        return f"p[{grid.p_min:.3g},{grid.p_max:.3g}]n{grid.n}"
    if isinstance(grid, RadialGrid):
        return f"r[{grid.r_min:.3g},{grid.r_max:.3g}]n{len(grid)}"
    return str(grid)


def _spectral_grid(pot: RadialPotential, beta: float, refine: int):
    Z = max(abs(pot.singular_charge), 1.0)
    if beta > 0:
        return MomentumGrid.default(Z, beta, 0.06 / 2 ** refine)
    return position_grid(Z, 0.0, 0.02 / 2 ** refine)


# --- Daubechies-type trace bound --------------------------------------------------

def daubechies_integral(V: RadialPotential, beta: float) -> float:
    """int (V_+^{5/2} + beta^3 V_+^4) dx."""
    if beta > 0 and V.singular_charge > 0:
        raise DivergentError("V^4 is not integrable at a Coulomb singularity")
    f = lambda r: max(float(V(np.array([r]))[0]), 0.0)
    return _radial_quad(lambda r: f(r) ** 2.5 + beta ** 3 * f(r) ** 4)


def check_daubechies(V: RadialPotential, beta: float = 0.0, q: int = 2, constant: float = 1.0,
                     refine: int = 0, jobs: int = 1, cache: DiskCache | None = None,
                     instance: str | None = None) -> InequalityReport:
    """``|Tr(T - V)_-| <= C int (V_+^{5/2} + beta^3 V_+^4)``; ratio = LHS / integral."""
    I = daubechies_integral(V, beta)
    grid = _spectral_grid(V, beta, refine)
    tr = negative_trace(V, 0.0, q, beta, L_max=80, jobs=jobs, cache=cache, grid=grid)
    lhs = -tr.total
    ratio = lhs / I if I > 0 else 0.0
    return _report("daubechies", instance or V.label, lhs, constant * I, _grid_label(grid), ratio,
                   "max", tr.error, integral=I, trace=tr.total, trace_error=tr.error, beta=beta, q=q)


# --- kinetic energy vs density ---------------------------------------------------

def density_functional(rho, grid: RadialGrid, beta: float) -> float:
    """int min(rho^{5/3}, rho^{4/3} / beta) dx."""
    rho = np.maximum(np.asarray(rho, dtype=float), 0.0)
    f = rho ** (5.0 / 3.0)
    if beta > 0:
        f = np.minimum(f, rho ** (4.0 / 3.0) / beta)
    return integrate_radial(grid, f)


def check_daubechies_density(state: SlaterState, beta: float | None = None, kappa: float = 1.0,
                             instance: str | None = None, tol: float = 1e-6) -> InequalityReport:
    """``kappa int min(rho^{5/3}, rho^{4/3}/beta) <= sum_j <T phi_j, phi_j>``."""
    beta = state.beta if beta is None else beta
    err = state.orthonormality_error()
    if err > tol:
        raise ValueError(f"orbitals are not orthonormal (error {err:.2e})")
    kin = state.kinetic_energy
    if not math.isfinite(kin):
        raise ValueError("orbital kinetic energies are unknown")
    I = density_functional(state.rho, state.grid, beta)
    ratio = kin / I if I > 0 else math.inf
    return _report("daubechies_density", instance or state.label, kappa * I, kin,
                   _grid_label(state.grid), ratio, "min", integral=I, beta=beta,
                   orthonormality_error=err)


def orbital_state(u, grid: RadialGrid, ell: int = 0, occupation: float = 1.0, q: int = 1,
                  beta: float = 0.0, label: str = "orbital") -> SlaterState:
    """Single-shell state from a reduced radial function sampled on ``grid``.

    The kinetic energy uses ``int (u'^2 + l(l+1) u^2 / r^2) dr / 2`` for
    ``beta = 0`` and the momentum-space symbol otherwise.
    """
    from .bounds import Orbital
    from .spectral import kinetic_symbol

    r = grid.nodes
    u = np.asarray(u, dtype=float)
    norm = grid.radial_integral(u * u / r ** 2)
    u = u / math.sqrt(norm)
    if beta == 0:
        du = np.gradient(u, r)
        kin = 0.5 * grid.radial_integral((du * du + ell * (ell + 1) * u * u / r ** 2) / r ** 2)
    else:
        p = np.geomspace(1e-3 / r[-1], 50.0 / r[0] ** 0.5, 4000)
        f = hankel_transform(u, r, ell, p)
        kin = float(integrate.trapezoid(kinetic_symbol(p, beta) * f * f, p))
    cap = q * (2 * ell + 1)
    orb = Orbital(ell, 0, float("nan"), u, occupation * cap, cap, kin)
    return SlaterState((orb,), grid, occupation * cap, q, beta, label)


# --- localized critical operator ---------------------------------------------------

def check_lieb_yau(orbitals, theta, C: float, R: float, n: int = 8000,
                   instance: str = "") -> InequalityReport:
    """``-4.4827 C^4 / R {3/(4 pi R^3) int theta^2} <= Tr[theta gamma theta H]``.

    ``H = |p| - 2/(pi |x|) - C/R``.  ``orbitals`` is a list of
    ``(ell, u, occupation)`` with ``u`` a callable reduced radial function and
    occupation in [0, 1] (one state per entry).  ``theta`` is radial and must
    vanish for ``r >= R``.
    """
    r = np.linspace(0.0, R, n + 1)[1:]
    th = np.asarray(theta(r), dtype=float)
    outside = np.linspace(R, 3.0 * R, 64)
    if np.any(np.abs(theta(outside)) > 0):
        raise ValueError("theta must be supported in the ball of radius R")
    bracket = 3.0 / (4.0 * math.pi * R ** 3) * integrate.trapezoid(
        4.0 * math.pi * r * r * th * th, r)
    bound = -LIEB_YAU_CONSTANT * C ** 4 / R * bracket
    total = 0.0
    p = np.geomspace(1e-4 / R, 0.5 * n / R, 4000)
    for ell, u, occ in orbitals:
        if not 0.0 <= occ <= 1.0:
            raise ValueError("occupations must lie in [0, 1]")
        g = th * np.asarray(u(r), dtype=float)
        f = hankel_transform(g, r, ell, p)
        kinetic = float(integrate.trapezoid(p * f * f, p))
        coulomb = float(integrate.trapezoid(g * g / r, r))
        mass = float(integrate.trapezoid(g * g, r))
        total += occ * (kinetic - 2.0 / math.pi * coulomb - C / R * mass)
    ratio = -total / (C ** 4 / R * bracket) if C > 0 and bracket > 0 else 0.0
    return _report("lieb_yau", instance or f"C={C:g},R={R:g}", bound, total, f"r-uniform n{n}",
                   ratio, "max", bracket=bracket, C=C, R=R)


# --- critical hydrogen with a fractional kinetic deficit ---------------------------

def critical_lowest(s: float, A: float, ell: int, step: float = 0.04, decades=(6.0, 6.0)) -> float:
    """Lowest eigenvalue of ``|p| - 2/(pi r) - A |p|^{2s}`` in channel ``ell``."""
    scale = max(A ** (1.0 / (1.0 - 2.0 * s)), 1.0) if s < 0.5 else 1.0
    grid = MomentumGrid(scale * 10.0 ** -decades[0], scale * 10.0 ** decades[1],
                        int(round((decades[0] + decades[1]) * math.log(10.0) / step)) + 1)
    p = grid.nodes
    H = -potential_matrix(RadialPotential((Coulomb(2.0 / math.pi),)), ell, grid)
    H[np.diag_indices_from(H)] += p - A * p ** (2.0 * s)
    return float(eigh(H, subset_by_index=(0, 0), eigvals_only=True)[0])


def critical_frontier(s: float, A_values=(0.5, 1.0, 2.0), L: int = 10, step: float = 0.04,
                      jobs: int = 1) -> list[tuple[float, float]]:
    """Smallest B with ``|p| - 2/(pi r) - A |p|^{2s} + B >= 0`` for each A (channels l <= L)."""
    if not 0.0 <= s < 0.5:
        raise ValueError("s must lie in [0, 1/2)")
    out = []
    with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
        for A in A_values:
            lows = list(pool.map(lambda ell: critical_lowest(s, A, ell, step), range(L + 1)))
            out.append((float(A), max(0.0, -min(lows))))
    return out


def check_critical_hydrogen(s: float, A: float = 1.0, B: float = 1.0, L: int = 10,
                            step: float = 0.04, A_scan=(0.5, 1.0, 2.0),
                            jobs: int = 1) -> InequalityReport:
    """``B_min(A) <= B`` where ``B_min`` is the computed shift making the operator >= 0."""
    scan = tuple(sorted(set(A_scan) | {A}))
    frontier = critical_frontier(s, scan, L, step, jobs)
    B_min = dict(frontier)[A]
    return _report("critical_hydrogen", f"s={s:g},A={A:g}", B_min, B, f"p-log step {step:g}",
                   B_min, "max", frontier=frontier, s=s, A=A)


# --- Hardy-Littlewood-Sobolev ------------------------------------------------------

def _hls_terms(f, grid):
    f = np.asarray(f(grid.nodes) if callable(f) else f, dtype=float)
    return coulomb_norm(grid, f), integrate_radial(grid, np.abs(f) ** 1.2) ** (5.0 / 3.0)


def check_hls(f, grid: RadialGrid, constant: float = HLS_SHARP,
              instance: str = "") -> InequalityReport:
    """``D(f, f) <= C ||f||_{6/5}^2`` for a radial f on ``grid``.

    With ``f`` callable the quadrature error is estimated from a grid with
    half as many nodes.
    """
    D, norm = _hls_terms(f, grid)
    error = 0.0
    if callable(f):
        coarse = RadialGrid.logarithmic(grid.r_min, grid.r_max, (len(grid) + 1) // 2)
        Dc, nc = _hls_terms(f, coarse)
        error = abs(D - Dc) + constant * abs(norm - nc)
    ratio = D / norm if norm > 0 else 0.0
    return _report("hls", instance, D, constant * norm, _grid_label(grid), ratio, "max", error,
                   norm=norm)


# --- density bounds ------------------------------------------------------------------

def check_rho_bound(rho, grid: RadialGrid, Z: float, beta: float, C: float = 1.0,
                    C43: float = 1.0, instance: str = "") -> InequalityReport:
    """``int min(rho^{4/3}/beta, rho^{5/3}) <= C Z^{7/3}``; metadata carries the
    companion ``int rho^{4/3} <= C43 Z^{5/3}``."""
    rho = np.asarray(rho, dtype=float)
    if integrate_radial(grid, rho) > Z * (1 + 1e-6):
        raise ValueError("density carries more than Z electrons")
    I = density_functional(rho, grid, beta)
    I43 = integrate_radial(grid, np.maximum(rho, 0.0) ** (4.0 / 3.0))
    return _report("rho_bound", instance, I, C * Z ** (7.0 / 3.0), _grid_label(grid),
                   I / Z ** (7.0 / 3.0), "max", rho43=I43, rho43_ratio=I43 / Z ** (5.0 / 3.0),
                   rho43_margin=C43 * Z ** (5.0 / 3.0) - I43)


def check_rho43_bound(rho, grid: RadialGrid, Z: float, C43: float = 1.0,
                      instance: str = "") -> InequalityReport:
    I43 = integrate_radial(grid, np.maximum(np.asarray(rho, dtype=float), 0.0) ** (4.0 / 3.0))
    return _report("rho43_bound", instance, I43, C43 * Z ** (5.0 / 3.0), _grid_label(grid),
                   I43 / Z ** (5.0 / 3.0), "max")


# --- corpus --------------------------------------------------------------------------

BETAS = (0.0, 1e-2, 10.0 ** -1.5)
# (s, A, B) pairs with B above the computed frontier on the default grid
CRITICAL_PAIRS = ((0.0, 1.0, 1.0), (0.25, 1.0, 3.0), (0.4, 1.0, 550.0))


def _hydrogenic(n: int, ell: int, Z: float):
    """Normalized reduced radial function of the (n, l) hydrogenic state."""
    norm = math.sqrt((2.0 * Z / n) ** 3 * math.factorial(n - ell - 1) / (2.0 * n * math.factorial(n + ell)))
    lag = special.genlaguerre(n - ell - 1, 2 * ell + 1)

    def u(r):
        x = 2.0 * Z * np.asarray(r, dtype=float) / n
        return norm * r * np.exp(-x / 2.0) * x ** ell * lag(x)
    return u


def _bump(R: float):
    return lambda r: np.where(np.asarray(r) < R, (1.0 - (np.asarray(r) / R) ** 2) ** 2, 0.0)


def corpus_manifest() -> dict:
    """Versioned description of every corpus instance."""
    return {
        "version": CORPUS_VERSION,
        "daubechies": [("exp", a, 1.0, b) for a in (1.0, 5.0, 25.0) for b in BETAS]
                      + [("gauss", d, 1.0, b) for d in (2.0, 10.0) for b in BETAS]
                      + [("well", d, 1.0, 0.0) for d in (2.0, 8.0)]
                      + [("tf", z, 0.0, 0.0) for z in (1.0, 5.0, 10.0, 20.0)],
        "daubechies_density": [(z, b) for z in (1.0, 5.0, 10.0, 20.0) for b in BETAS]
                              + [("hydrogenic", n, ell, z) for n, ell, z in ((1, 0, 1.0), (2, 1, 3.0), (3, 2, 10.0))],
        "lieb_yau": [(state, R, C) for state in ((1, 0, 1.0), (1, 0, 4.0), (2, 1, 2.0))
                     for R in (0.5, 1.0, 2.0) for C in (0.5, 1.0, 2.0)],
        "critical_hydrogen": list(CRITICAL_PAIRS),
        "hls": [("gauss", w) for w in (0.5, 1.0, 2.0)] + [("exp", 1.0), ("extremal", 1.0)]
               + [("tf", z) for z in (1.0, 5.0, 10.0, 20.0)],
        "rho_bound": [(z, b) for z in (5.0, 10.0, 20.0) for b in BETAS],
    }


def _potential(kind: str, a: float, width: float) -> RadialPotential:
    if kind == "exp":
        return RadialPotential((Exponential(a, 1.0 / width),), f"exp(a={a:g})")
    if kind == "gauss":
        return RadialPotential((Gaussian(a, width),), f"gauss(a={a:g})")
    if kind == "well":
        return RadialPotential((SquareWell(a, width),), f"well(a={a:g})")
    sol = solve_tf_atom(a, a, 2)
    return RadialPotential((Coulomb(a),), f"tf(Z={a:g})", exact=sol.W_at)


def _quad_grid(refine: int) -> RadialGrid:
    return RadialGrid.logarithmic(1e-7, 1e3, 4000 * 2 ** refine)


def run_corpus(refine: int = 0, jobs: int = 1, cache: DiskCache | None = None,
               names=None) -> list[InequalityReport]:
    """Run every check on the corpus; ``refine`` halves all grid steps that many times."""
    man = corpus_manifest()
    names = set(names or [k for k in man if k != "version"])
    out: list[InequalityReport] = []
    if "daubechies" in names:
        for kind, a, width, b in man["daubechies"]:
            pot = _potential(kind, a, width)
            out.append(check_daubechies(pot, b, refine=refine, jobs=jobs, cache=cache,
                                        instance=f"{pot.label},beta={b:.4g}"))
    if "daubechies_density" in names:
        for item in man["daubechies_density"]:
            if item[0] == "hydrogenic":
                _, n, ell, z = item
                g = RadialGrid.logarithmic(1e-6 / z, 80.0 * n / z, 4000 * 2 ** refine)
                st = orbital_state(_hydrogenic(n, ell, z)(g.nodes), g, ell, 1.0 / (2 * ell + 1), 1)
                out.append(check_daubechies_density(st, 0.0, instance=f"hydrogenic({n},{ell},Z={z:g})"))
                continue
            z, b = item
            sol = solve_tf_atom(z, z, 2)
            st = slater_state(sol, z, 2, b, jobs=jobs, cache=cache, step=0.008 / 2 ** refine,
                              label=f"slater(Z={z:g},beta={b:.4g})")
            out.append(check_daubechies_density(st, instance=st.label, tol=1e-5))
    if "lieb_yau" in names:
        for (n, ell, z), R, C in man["lieb_yau"]:
            u = _hydrogenic(n, ell, z)
            out.append(check_lieb_yau([(ell, u, 1.0)], _bump(R), C, R, n=8000 * 2 ** refine,
                                      instance=f"({n},{ell},Z={z:g}),R={R:g},C={C:g}"))
    if "critical_hydrogen" in names:
        for s, A, B in man["critical_hydrogen"]:
            out.append(check_critical_hydrogen(s, A, B, step=0.04 / 2 ** refine, jobs=jobs))
    if "hls" in names or "rho_bound" in names:
        g = _quad_grid(refine)
        r = g.nodes
    if "hls" in names:
        for kind, w in man["hls"]:
            if kind == "gauss":
                f = lambda x, w=w: np.exp(-(x / w) ** 2)
            elif kind == "exp":
                f = lambda x, w=w: np.exp(-x / w)
            elif kind == "extremal":
                f = lambda x, w=w: (1.0 + (x / w) ** 2) ** -2.5
            else:
                f = solve_tf_atom(w, w, 2, grid=g).rho
            out.append(check_hls(f, g, instance=f"{kind}({w:g})"))
    if "rho_bound" in names:
        for z, b in man["rho_bound"]:
            rho = solve_tf_atom(z, z, 2, grid=g).rho
            out.append(check_rho_bound(rho, g, z, b, instance=f"tf(Z={z:g},beta={b:.4g})"))
            out.append(check_rho43_bound(rho, g, z, instance=f"tf(Z={z:g})"))
    return out


def fitted_constants(reports) -> dict[str, float]:
    """Corpus constant per inequality: max (or min) of the reported ratios."""
    groups: dict[str, list] = {}
    for rep in reports:
        if math.isfinite(rep.ratio):
            groups.setdefault(rep.name, []).append(rep)
    return {k: (max if v[0].fit == "max" else min)(r.ratio for r in v) for k, v in groups.items()}


def constant_drift(coarse, fine) -> dict[str, float]:
    """Relative change of each fitted constant between two corpus runs."""
    a, b = fitted_constants(coarse), fitted_constants(fine)
    return {k: abs(b[k] - a[k]) / max(abs(a[k]), 1e-300) for k in a if k in b}
