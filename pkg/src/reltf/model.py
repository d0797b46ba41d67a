"""Domain types, Coulomb potentials, semiclassical pressures and zones.

Units: e = hbar = mu = 1, speed of light 1/beta; beta = 0 is the
non-relativistic limit.

Two kinetic normalizations coexist:

* ``units="printed"``: the closed pressure forms with symbol ``|xi|^2``
  (and its relativistic counterpart), e.g. ``P_TF'(w) = q w^{3/2} / 6 pi^2``.
* ``units="atomic"``: symbol ``|xi|^2 / 2`` and the Chandrasekhar symbol
  ``(beta^-2 |xi|^2 + beta^-4)^{1/2} - beta^-2``; this is what the solvers
  and eigenvalue routines use.  They are related exactly by
  ``P_atomic(w; beta) = P_printed(2 w; beta / 2) / 2``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Sequence

import numpy as np
from scipy import integrate

CRITICAL_COUPLING = 2.0 / math.pi

PRESSURE_KINDS = ("TF", "TF'", "RTF", "RTF'")


class SingularPointError(ValueError):
    """Raised when a Coulomb potential is evaluated on a nucleus."""


class ConfigError(ValueError):
    """Invalid configuration; ``problems`` lists every offending key."""

    def __init__(self, problems: Sequence[str]):
        self.problems = list(problems)
        super().__init__("invalid configuration: " + "; ".join(self.problems))


@dataclass(frozen=True)
class NuclearConfiguration:
    Z: tuple[float, ...]
    y: tuple[tuple[float, float, float], ...] = ((0.0, 0.0, 0.0),)
    q: int = 2
    beta: float = 0.0
    N: float | None = None
    epsilon: float = 0.0

    def __post_init__(self):
        Z = tuple(float(z) for z in np.atleast_1d(self.Z))
        y = tuple(tuple(float(c) for c in p) for p in np.atleast_2d(self.y))
        object.__setattr__(self, "Z", Z)
        object.__setattr__(self, "y", y)
        if self.N is None:
            object.__setattr__(self, "N", float(sum(Z)))
        problems = []
        if len(Z) != len(y):
            problems.append(f"Z has {len(Z)} entries but y has {len(y)}")
        if any(z <= 0 for z in Z):
            problems.append("charges must be positive")
        if any(len(p) != 3 for p in y):
            problems.append("positions must be 3-vectors")
        if int(self.q) != self.q or self.q < 1:
            problems.append("q must be a positive integer")
        if self.beta < 0:
            problems.append("beta must be >= 0")
        if self.N <= 0:
            problems.append("N must be positive")
        if len(Z) >= 2 and len(Z) == len(y) and self.d <= 0:
            problems.append("nuclei must be at distinct positions")
        if problems:
            raise ConfigError(problems)

    @property
    def M(self) -> int:
        return len(self.Z)

    @property
    def Z_total(self) -> float:
        return float(sum(self.Z))

    @property
    def d(self) -> float:
        """Minimal distance between nuclei (infinite for atoms)."""
        if self.M < 2:
            return math.inf
        pts = np.asarray(self.y)
        diff = pts[:, None, :] - pts[None, :, :]
        dist = np.sqrt((diff ** 2).sum(-1))
        return float(dist[np.triu_indices(self.M, 1)].min())

    @property
    def subcritical(self) -> bool:
        return all(z * self.beta <= CRITICAL_COUPLING for z in self.Z)

    @property
    def strictly_subcritical(self) -> bool:
        return all(z * self.beta <= CRITICAL_COUPLING - self.epsilon for z in self.Z)


def coulomb_potential(cfg: NuclearConfiguration, x) -> float:
    """Sum_m Z_m / |x - y_m|."""
    x = np.asarray(x, dtype=float)
    total = 0.0
    for z, ym in zip(cfg.Z, cfg.y):
        dist = float(np.linalg.norm(x - np.asarray(ym)))
        if dist == 0.0:
            raise SingularPointError(f"x coincides with nucleus at {ym}")
        total += z / dist
    return total


@dataclass(frozen=True)
class RadialGrid:
    """Logarithmic radial grid with weights for int f(r) r^2 dr."""

    nodes: np.ndarray
    weights: np.ndarray
    r_min: float
    r_max: float
    step: float = field(default=0.0)

    @classmethod
    def logarithmic(cls, r_min: float, r_max: float, n: int = 2000) -> "RadialGrid":
        if not 0 < r_min < r_max:
            raise ValueError("need 0 < r_min < r_max")
        x = np.linspace(math.log(r_min), math.log(r_max), n)
        h = x[1] - x[0]
        r = np.exp(x)
        w = h * r ** 3
        w[0] *= 0.5
        w[-1] *= 0.5
        return cls(r, w, float(r[0]), float(r[-1]), float(h))

    def __post_init__(self):
        for name in ("nodes", "weights"):
            arr = np.asarray(getattr(self, name), dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        if np.any(np.diff(self.nodes) <= 0):
            raise ValueError("grid nodes must be strictly increasing")
        if np.any(self.weights <= 0):
            raise ValueError("grid weights must be positive")

    def __len__(self):
        return len(self.nodes)

    def integrate(self, f) -> float:
        """int f(|x|) dx over R^3 for a radial function sampled on the nodes."""
        return float(4.0 * math.pi * np.dot(self.weights, f))

    def radial_integral(self, f) -> float:
        """int f(r) r^2 dr (no 4 pi)."""
        return float(np.dot(self.weights, f))

    def cumulative(self, g) -> np.ndarray:
        """Running integral int_{r_min}^{r} g(s) ds (trapezoid in log r)."""
        integrand = np.asarray(g) * self.nodes
        out = np.zeros_like(integrand)
        out[1:] = np.cumsum(0.5 * self.step * (integrand[1:] + integrand[:-1]))
        return out

    def quadrature_error(self) -> float:
        """|int e^{-r} r^2 dr - 2| on this grid; a cheap sanity figure."""
        return abs(self.radial_integral(np.exp(-self.nodes)) - 2.0)


def tf_grid(Z: float, N: float, n: int = 2000) -> RadialGrid:
    r_max = 50.0 * Z ** (-1.0 / 3.0) * max(1.0, (Z / N) ** (1.0 / 3.0))
    return RadialGrid.logarithmic(1e-6 / Z, r_max, n)


# --- pressures -----------------------------------------------------------

def _rtf_printed(w, beta):
    # int_0^w t^{3/2} (1 + beta^2 t)^{3/2} dt, without the q / 6 pi^2 factor
    w = np.asarray(w, dtype=float)
    if beta == 0.0:
        return 0.4 * w ** 2.5
    s = beta * np.sqrt(w)
    out = np.empty_like(s)
    small = s < 0.1
    if np.any(small):
        ss = s[small]
        acc = np.zeros_like(ss)
        for k in range(12):
            acc += _binom32(k) * ss ** (2 * k) / (5 + 2 * k)
        out[small] = 2.0 * w[small] ** 2.5 * acc
    big = ~small
    if np.any(big):
        u = s[big]
        a = np.sqrt(1.0 + u * u)
        F = (a * (16 * u ** 7 + 24 * u ** 5 + 2 * u ** 3 - 3 * u) + 3 * np.arcsinh(u)) / 64.0
        out[big] = F / beta ** 5
    return out


def _binom32(k: int) -> float:
    return math.gamma(2.5) / (math.gamma(k + 1) * math.gamma(2.5 - k))


def pressure(w, q: float = 2, beta: float = 0.0, kind: str = "TF", units: str = "printed"):
    """Semiclassical pressure P(w) or its derivative P'(w) = density.

    ``kind`` is one of TF, TF', RTF, RTF'.  Negative ``w`` gives 0.
    """
    if kind not in PRESSURE_KINDS:
        raise ValueError(f"kind must be one of {PRESSURE_KINDS}")
    if units == "atomic":
        scale = 1.0 if kind.endswith("'") else 0.5
        return scale * pressure(2.0 * np.asarray(w, dtype=float), q, beta / 2.0, kind, "printed")
    if units != "printed":
        raise ValueError("units must be 'printed' or 'atomic'")
    scalar = np.ndim(w) == 0
    wp = np.maximum(np.atleast_1d(np.asarray(w, dtype=float)), 0.0)
    c = q / (6.0 * math.pi ** 2)
    if kind == "TF'":
        out = c * wp ** 1.5
    elif kind == "TF":
        out = q / (15.0 * math.pi ** 2) * wp ** 2.5
    elif kind == "RTF'":
        out = c * wp ** 1.5 * (1.0 + beta ** 2 * wp) ** 1.5
    else:
        out = c * _rtf_printed(wp, beta)
    return float(out[0]) if scalar else out


def rtf_quadrature(w: float, q: float = 2, beta: float = 0.0) -> float:
    """Independent check of the RTF antiderivative by adaptive quadrature."""
    if w <= 0:
        return 0.0
    val, _ = integrate.quad(
        lambda t: pressure(t, q, beta, "RTF'"), 0.0, w, epsabs=0.0, epsrel=1e-13, limit=200
    )
    return val


# --- zones ---------------------------------------------------------------

class Zone(str, Enum):
    SINGULAR = "singular"
    RELATIVISTIC = "relativistic"
    SEMICLASSICAL = "semiclassical"


@dataclass(frozen=True)
class ZoneLabel:
    radius: float
    zone: Zone
    zeta: float
    h: float
    relativistic: bool

    @property
    def zeta_sq(self) -> float:
        return self.zeta ** 2


def zone_map(cfg: NuclearConfiguration, radii, c_sing: float = 1.0,
             c_rel: float = 1.0) -> list[ZoneLabel]:
    """Classify distances to the nearest nucleus.

    The relativistic zone sits inside the singular one; ``zone`` reports the
    innermost label and ``relativistic`` is a separate flag.
    """
    Z = cfg.Z_total
    out = []
    for ell in np.atleast_1d(np.asarray(radii, dtype=float)):
        if ell <= 0:
            raise ValueError("radii must be positive")
        zeta2 = min(Z ** (4.0 / 3.0), Z / ell)
        zeta = math.sqrt(zeta2)
        h = 1.0 / (zeta * ell)
        rel = ell <= c_rel * cfg.beta
        if rel:
            zone = Zone.RELATIVISTIC
        elif ell < c_sing / Z:
            zone = Zone.SINGULAR
        else:
            zone = Zone.SEMICLASSICAL
        out.append(ZoneLabel(float(ell), zone, zeta, h, rel))
    return out
