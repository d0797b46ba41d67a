"""Scott function and the sub-leading energy terms.

Sign conventions.  The regularized trace

    T(t) = int ( e^1(x, x, 0) - P_TF(V) ) dx,   V = 1/|x|,  Z = 1,  beta = t,

is reported as ``trace_value = T / q``; it equals -1/4 at t = 0 and grows with
t.  Because the trace enters the energy with a minus sign, the Scott term of
the energy is ``q Z^2 S`` with ``S = -trace_value`` (S(0) = 1/4, decreasing in
t).  ``ScottEstimate.value`` is this energy-sign S.

The relativistic pressure of the Coulomb potential exceeds P_TF(V) by a term
~ beta^2 V^{7/2}, which is not integrable at the nucleus, so the subtraction
uses P_TF(V); the divergence of the P_RTF variant is measured and reported.

Coefficients of the Dirac, Schwinger and relativistic terms come in two
conventions: ``"printed"`` reproduces the closed formulas with kinetic symbol
``|xi|^2`` verbatim, ``"atomic"`` rescales them to the atomic-unit kinetic
energy ``|xi|^2 / 2`` used by the solvers (the physical Dirac exchange
``-(3/4)(6/pi)^{1/3} q^{-1/3} int rho^{4/3}``).
"""
from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from functools import lru_cache

import numpy as np
from scipy import integrate, special

from .cache import DiskCache
from .model import CRITICAL_COUPLING, NuclearConfiguration, RadialGrid, pressure
from .spectral import (
    MomentumGrid, NonConvergenceError, RadialOperatorSpec, RadialPotential, SupercriticalError,
    e1_diagonal, eigenvalues_below,
)
from .tf import TFSolution, _tail, integrate_radial, solve_tf_atom

CONVENTIONS = ("printed", "atomic")


# --- Scott function ---------------------------------------------------------

def _taper(s):
    """1 on [0, 1/2], cosine roll-off to 0 at 1."""
    s = np.asarray(s, dtype=float)
    return np.where(s <= 0.5, 1.0, np.where(s < 1.0, 0.5 * (1.0 + np.cos(math.pi * (2.0 * s - 1.0))), 0.0))


_TAPER_MOMENT = integrate.quad(lambda s: s ** -0.5 * float(_taper(s)), 0.0, 1.0, points=[0.5])[0]


@dataclass(frozen=True)
class ScottEstimate:
    t: float
    value: float
    error: float
    trace_value: float
    nonrelativistic_trace: float
    relativistic_shift: float
    radii: tuple
    truncated: tuple
    n_max: int
    L_max: int
    channel_contributions: tuple = field(repr=False, default=())
    rtf_divergence_power: float = float("nan")
    diagnostics: dict = field(default_factory=dict, repr=False)


def _coulomb_pressure_integral(R: float, q: int) -> float:
    # int P_TF(1/r) taper(r/R) dx,  P_TF(w) = q 2^{3/2} w^{5/2} / (15 pi^2)
    return q * 2.0 ** 1.5 / (15.0 * math.pi ** 2) * 4.0 * math.pi * math.sqrt(R) * _TAPER_MOMENT


def rtf_divergence(t: float, q: int = 2, radii=(1e-3, 10 ** -3.5, 1e-4, 10 ** -4.5, 1e-5)):
    """int_{r0}^{1} (P_RTF(V) - P_TF(V)) dx for V = 1/r, Z = 1, beta = t, over a ladder of r0.

    Returns the values and the fitted power p in ``value ~ r0^p`` (p < 0 means
    the difference of the two pressure integrals diverges at the nucleus).
    """
    vals = []
    for r0 in radii:
        f = lambda x: (pressure(math.exp(-x), q, t, "RTF", "atomic")
                       - pressure(math.exp(-x), q, 0.0, "TF", "atomic")) * 4.0 * math.pi * math.exp(3.0 * x)
        vals.append(integrate.quad(f, math.log(r0), 0.0, limit=400)[0])
    vals = np.array(vals)
    if t == 0 or np.any(vals <= 0):
        return vals, 0.0
    return vals, float(np.polyfit(np.log(radii), np.log(vals), 1)[0])


@lru_cache(maxsize=8)
def _nonrelativistic_trace(radii: tuple, step: float):
    """int taper(r/R) (e^1 - P_TF(V)) dx / q for hydrogen, q = 1, per R; FD spectra."""
    R_top = radii[-1]
    n_max = int(math.ceil(3.0 * math.sqrt(R_top))) + 8
    cut = -0.5 / (n_max + 0.5) ** 2
    r_box = max(6.0 * n_max ** 2, 3.0 * R_top)
    grid = RadialGrid.logarithmic(1e-10, r_box, int(math.log(r_box / 1e-10) / step) + 1)
    pot = RadialPotential.coulomb(1.0)
    spectra = []
    tails = np.zeros(len(radii))
    per = []
    r = grid.nodes
    inside = r <= R_top
    w = (r * grid.step)[inside]
    for ell in range(n_max):
        s = eigenvalues_below(RadialOperatorSpec("nonrelativistic", ell, pot, 0.0, 1, grid), cut, verify=False)
        if not len(s):
            break
        spectra.append(s)
        dens = e1_diagonal([s], r[inside]) * 4.0 * math.pi * r[inside] ** 2
        u_last = s.radial_functions(r[inside])[:, -1]
        n_last = ell + len(s)
        # states beyond the cut: inner weight ~ n^-3, energy ~ n^-2
        tail_factor = float(np.sum((n_last / np.arange(n_last + 1, 20000.0)) ** 5))
        row = []
        for i, R in enumerate(radii):
            chi = _taper(r[inside] / R)
            c = float(np.dot(chi * dens, w))
            t_c = s.degeneracy * (-s.eigenvalues[-1]) * float(np.dot(chi * u_last ** 2, w)) * tail_factor
            tails[i] += t_c
            row.append(c + t_c)
        per.append(row)
    per = np.array(per)
    truncated = tuple(float(per[:, i].sum() - _coulomb_pressure_integral(R, 1)) for i, R in enumerate(radii))
    return truncated, per, n_max


def _extrapolate_radius(radii, truncated):
    x = np.asarray(radii, dtype=float) ** -0.5
    y = np.asarray(truncated)
    if len(x) >= 3:
        est = float(np.linalg.lstsq(np.c_[np.ones_like(x), x, x * x], y, rcond=None)[0][0])
        alt = float(np.linalg.lstsq(np.c_[np.ones(2), x[-2:]], y[-2:], rcond=None)[0][0])
    else:
        est = float(np.linalg.lstsq(np.c_[np.ones_like(x), x], y, rcond=None)[0][0])
        alt = float(y[-1])
    return est, abs(est - alt)


def _first_order_shift(t: float, ell: int, n_from: int) -> float:
    """sum_{n >= n_from} of -(t^2 / 2 n^4)(n / (l + 1/2) - 3/4): the p^4 correction."""
    return -0.5 * t * t * (special.zeta(3.0, n_from) / (ell + 0.5) - 0.75 * special.zeta(4.0, n_from))


def _relativistic_shift(t: float, q: int, L: int, n_per: int, step: float, jobs: int,
                        cache: DiskCache | None):
    """sum_j (|lambda_j(t)| - |lambda_j(0)|) per unit degeneracy q, Z = 1.

    Both spectra use the same momentum grid, so discretization errors cancel
    to a large extent.  Per channel the n-tail is fitted by a/n^3 + b/n^4; the
    channel tail follows the first-order p^4 formula matched at l = L.
    """
    if t == 0:
        return 0.0, 0.0, ()
    grid = MomentumGrid.default(1.0, t, step)
    pot = RadialPotential.coulomb(1.0)

    def channel(ell):
        n_top = ell + n_per
        cut = -0.5 / (n_top + 0.5) ** 2
        rel = eigenvalues_below(RadialOperatorSpec("chandrasekhar", ell, pot, t, q, grid), cut,
                                verify=False, cache=cache).eigenvalues[:n_per]
        ref = eigenvalues_below(RadialOperatorSpec("chandrasekhar", ell, pot, 0.0, q, grid), cut,
                                verify=False, cache=cache).eigenvalues[:n_per]
        m = min(len(rel), len(ref))
        d = rel[:m] - ref[:m]                       # <= 0
        n = np.arange(ell + 1, ell + 1 + m, dtype=float)
        # a / n^3 + b / n^4 through the last two states
        A = np.c_[n[-2:] ** -3, n[-2:] ** -4]
        a, b = np.linalg.solve(A, d[-2:])
        tail = a * special.zeta(3.0, n[-1] + 1) + b * special.zeta(4.0, n[-1] + 1)
        tail_alt = d[-1] * n[-1] ** 3 * special.zeta(3.0, n[-1] + 1)
        return float(d.sum() + tail), abs(float(tail - tail_alt))

    with ThreadPoolExecutor(max_workers=max(1, jobs)) as pool:
        res = list(pool.map(channel, range(L + 1)))
    per = np.array([(2 * ell + 1) * c for ell, (c, _) in enumerate(res)])
    n_err = sum((2 * ell + 1) * e for ell, (_, e) in enumerate(res))
    ratio = per[-1] / ((2 * L + 1) * _first_order_shift(t, L, L + 1))
    ells = np.arange(L + 1, 20000)
    pert = np.array([(2 * l + 1) * _first_order_shift(t, l, l + 1) for l in ells[:400]])
    # beyond l ~ 400 the shift decays like l^-2; sum that part in closed form
    far = (2 * 400 + 1) * _first_order_shift(t, ells[399], ells[399] + 1) * ells[399] ** 2 * special.zeta(2.0, ells[399] + 1)
    l_tail = ratio * (pert.sum() + far)
    err = n_err + abs(l_tail) * abs(ratio - 1.0)
    shift = -(per.sum() + l_tail)                   # |lambda(t)| - |lambda(0)| summed
    return float(shift), float(err), tuple(-per)


def scott_S(t: float, q: int = 2, radii=(20.0, 40.0, 80.0), step: float = 0.06, L: int = 12,
            n_per: int = 10, jobs: int = 1, cache: DiskCache | None = None,
            tolerance: float = 5e-3) -> ScottEstimate:
    """Scott function S(t) at Z = 1, beta = t.

    ``trace_value = int (e^1(x,x,0) - P_TF(V)) dx / q`` is assembled as

    * the non-relativistic part: spectral density ``e^1`` from finite-difference
      spectra, integrated against a smooth cutoff at radius R and extrapolated
      in ``R^{-1/2}`` (leading semiclassical remainder) with an ``R^{-1}`` term;
    * the relativistic shift ``int (e^1_t - e^1_0) dx = sum_j (|lambda_j(t)| -
      |lambda_j(0)|)``, which converges absolutely and is computed from paired
      momentum-space spectra with fitted n- and l-tails.

    ``value = -trace_value`` is the energy-sign S with Scott = q Z^2 S.
    """
    if not 0.0 <= t < CRITICAL_COUPLING:
        raise SupercriticalError("Scott function needs 0 <= t < 2/pi")
    radii = tuple(sorted(float(R) for R in radii))
    truncated, per, n_max = _nonrelativistic_trace(radii, 0.01)
    nr, nr_err = _extrapolate_radius(radii, truncated)
    shift, shift_err, _ = _relativistic_shift(float(t), q, L, n_per, step, jobs, cache)
    trace_value = nr + shift
    err = nr_err + shift_err
    vals, power = rtf_divergence(t, q)
    est = ScottEstimate(float(t), -trace_value, float(err), trace_value, nr, shift, radii, truncated,
                        n_max, L, tuple(per[:, -1]), power,
                        {"step": step, "n_per_channel": n_per, "rtf_divergence_values": vals.tolist(),
                         "nonrelativistic_error": nr_err, "shift_error": shift_err})
    if err > tolerance:
        raise NonConvergenceError(f"Scott extrapolation error {err:.2e} exceeds {tolerance:g}")
    return est


# --- sub-leading terms --------------------------------------------------------

def _check_convention(convention):
    if convention not in CONVENTIONS:
        raise ValueError(f"convention must be one of {CONVENTIONS}")


def _rho43(tf: TFSolution) -> float:
    return integrate_radial(tf.grid, np.asarray(tf.rho) ** (4.0 / 3.0))


def dirac_term(tf: TFSolution, convention: str = "printed") -> float:
    """Exchange (Dirac) term, always <= 0."""
    _check_convention(convention)
    I = _rho43(tf)
    if convention == "printed":
        return -4.5 * (36.0 * math.pi) ** (2.0 / 3.0) * tf.q ** (2.0 / 3.0) * I
    return -0.75 * (6.0 / math.pi) ** (1.0 / 3.0) * tf.q ** (-1.0 / 3.0) * I


def schwinger_term(tf: TFSolution, convention: str = "printed") -> float:
    """Schwinger term.

    ``printed``: ``(36 pi)^{2/3} q^{2/3} int rho^{4/3}``.  ``atomic``: the
    semiclassical gradient correction, 2/9 of the Dirac exchange.
    """
    _check_convention(convention)
    if convention == "printed":
        return (36.0 * math.pi) ** (2.0 / 3.0) * tf.q ** (2.0 / 3.0) * _rho43(tf)
    return 2.0 / 9.0 * dirac_term(tf, "atomic")


def _pow_difference(a, b, power):
    """a^p - b^p for 0 <= b <= a without cancellation."""
    a = np.asarray(a, dtype=float)
    b = np.clip(np.asarray(b, dtype=float), 0.0, None)
    with np.errstate(divide="ignore", invalid="ignore"):
        rel = np.where(a > 0, (a - b) / a, 0.0)
        out = -a ** power * np.expm1(power * np.log1p(-np.clip(rel, 0.0, 1.0)))
    out[rel >= 1.0] = a[rel >= 1.0] ** power
    return out


def rct_term(tf: TFSolution, beta: float, convention: str = "atomic") -> float:
    """Relativistic correction (q / 14 pi^2) beta^2 int (V^{7/2} - (W + nu)_+^{7/2}).

    The chemical-potential shift is the TF one (``W + nu``).  In atomic units
    the coefficient picks up a factor sqrt(2).  The difference is formed
    pointwise so the r^{-7/2} singularities cancel before integration.
    """
    _check_convention(convention)
    if beta < 0:
        raise ValueError("beta must be >= 0")
    if beta == 0:
        return 0.0
    V = tf.Z / tf.r
    w = np.asarray(tf.W) + tf.nu
    f = _pow_difference(V, np.maximum(w, 0.0), 3.5)
    coef = tf.q / (14.0 * math.pi ** 2) * beta ** 2
    if convention == "atomic":
        coef *= math.sqrt(2.0)
    r = tf.r
    total = tf.grid.radial_integral(f)
    total += _tail(f[0], f[1], r[0], r[1], outer=False)
    total += _tail(f[-1], f[-2], r[-1], r[-2], outer=True)
    return coef * 4.0 * math.pi * total


# --- decomposition --------------------------------------------------------------

@dataclass(frozen=True)
class EnergyDecomposition:
    Z: float
    N: float
    q: int
    beta: float
    E_TF: float
    Scott: float
    Dirac: float
    Schwinger: float
    RCT: float
    errors: dict
    remainder_budget: str
    convention: str
    provenance: dict

    @property
    def total(self) -> float:
        return self.E_TF + self.Scott + self.Dirac + self.Schwinger + self.RCT

    def to_record(self) -> dict:
        rec = asdict(self)
        rec["total"] = self.total
        return rec

    def to_json(self) -> str:
        return json.dumps(self.to_record(), sort_keys=True, indent=1)

    CSV_FIELDS = ("Z", "N", "q", "beta", "E_TF", "Scott", "Dirac", "Schwinger", "RCT", "total")

    def csv_row(self) -> list:
        rec = self.to_record()
        return [rec[k] for k in self.CSV_FIELDS]


def energy_decomposition(cfg: NuclearConfiguration, convention: str = "atomic",
                         scott: ScottEstimate | None = None, cache: DiskCache | None = None,
                         jobs: int = 1, tf_points: int = 2000) -> EnergyDecomposition:
    """All five terms of the atomic energy expansion for one configuration."""
    _check_convention(convention)
    if cfg.M != 1:
        raise ValueError("energy_decomposition handles atoms (one nucleus)")
    Z = cfg.Z[0]
    t = Z * cfg.beta
    if t >= CRITICAL_COUPLING:
        raise SupercriticalError("Z beta must be below 2/pi")
    tf = solve_tf_atom(Z, cfg.N, cfg.q, n=tf_points)
    if scott is None:
        scott = scott_S(t, cfg.q, jobs=jobs, cache=cache)
    elif abs(scott.t - t) > 1e-12:
        raise ValueError("Scott estimate computed for a different Z beta")
    S_term = cfg.q * Z * Z * scott.value
    errors = {"Scott": cfg.q * Z * Z * scott.error, "E_TF": abs(tf.E_TF) * 1e-9,
              "Dirac": 0.0, "Schwinger": 0.0, "RCT": 0.0}
    return EnergyDecomposition(
        float(Z), float(tf.N), int(cfg.q), float(cfg.beta), float(tf.E_TF), float(S_term),
        float(dirac_term(tf, convention)), float(schwinger_term(tf, convention)),
        float(rct_term(tf, cfg.beta, convention)), errors,
        "O(Z^{5/3} (d Z^{1/3})^{-delta} + Z^{5/3-delta}), d = inf", convention,
        {"tf_points": tf_points, "tf_r_max": tf.grid.r_max, "scott_radii": list(scott.radii),
         "scott_n_max": scott.n_max, "scott_step": scott.diagnostics.get("step")})
