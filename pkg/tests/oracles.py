"""Independent reference values used by the tests."""
import math

import numpy as np
from scipy.integrate import solve_ivp


def hydrogenic_scott(K: int = 200, samples: int = 2000) -> float:
    """S(0) from Bohr levels with an energy cutoff -mu, per spin state.

    sum_n n^2 (E_n + mu)_- minus the semiclassical trace -sqrt(2)/(6 sqrt(mu)),
    averaged over one period of the level count (mu = 1/(2 x^2), x in [K, K+1]).
    """
    def diff(x):
        mu = 1.0 / (2.0 * x * x)
        n = np.arange(1, math.floor(x) + 1)
        return float(np.sum(mu * n * n - 0.5)) + math.sqrt(2.0) / (6.0 * math.sqrt(mu))
    xs = K + (np.arange(samples) + 0.5) / samples
    return float(np.mean([diff(x) for x in xs]))


def slope_exponent(x, y) -> float:
    return float(np.polyfit(np.log(x), np.log(np.abs(y)), 1)[0])


def shooting_slope(x_end=30.0):
    """Initial slope of chi'' = chi^{3/2}/sqrt(x), chi(0) = 1, chi(inf) = 0, by bisection."""
    def hits_zero(s):
        def rhs(x, y):
            return [y[1], max(y[0], 0.0) ** 1.5 / math.sqrt(x)]
        # series start avoids the 1/sqrt(x) singularity
        x0 = 1e-8
        y0 = [1.0 + s * x0 + 4.0 / 3.0 * x0 ** 1.5, s + 2.0 * x0 ** 0.5]
        ev = lambda x, y: y[0]
        ev.terminal = True
        up = lambda x, y: y[1]
        up.terminal = True
        sol = solve_ivp(rhs, (x0, x_end), y0, events=(ev, up), rtol=1e-12, atol=1e-14)
        return len(sol.t_events[0]) > 0
    lo, hi = -1.7, -1.5
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if hits_zero(mid):
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def shooting_energy() -> float:
    """E_TF(Z=1, N=1, q=2) = 3/7 chi'(0) / b with the atomic TF length b."""
    b = 0.5 * (3 * math.pi / 4) ** (2 / 3)
    return 3 / 7 * shooting_slope() / b
