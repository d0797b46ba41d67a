import math

import numpy as np
import pytest

from reltf.inequalities import (
    HLS_SHARP,
    DivergentError,
    InequalityReport,
    check_critical_hydrogen,
    check_daubechies,
    check_daubechies_density,
    check_hls,
    check_lieb_yau,
    check_rho_bound,
    corpus_manifest,
    hankel_transform,
    orbital_state,
    reports_to_csv,
)
from reltf.model import RadialGrid
from reltf.spectral import Exponential, RadialPotential
from reltf.tf import solve_tf_atom


def test_hls_sharp_constant_and_extremizer():
    assert HLS_SHARP == pytest.approx(2.294010703541599, rel=1e-14)
    g = RadialGrid.logarithmic(1e-6, 1e4, 6000)
    rep = check_hls(lambda r: (1 + r * r) ** -2.5, g, instance="extremal")
    assert rep.ratio == pytest.approx(HLS_SHARP, rel=1e-5)
    assert rep.passes()
    assert check_hls(lambda r: np.exp(-r), g).ratio < HLS_SHARP
    assert check_hls(np.zeros(len(g)), g).margin == 0.0


def test_hankel_transform_normalization():
    r = np.linspace(0, 40, 8001)[1:]
    p = np.linspace(1e-4, 30, 6000)
    f = hankel_transform(2 * r * np.exp(-r), r, 0, p)
    exact = math.sqrt(2 / math.pi) * 4 * p / (1 + p * p) ** 2
    np.testing.assert_allclose(f, exact, atol=1e-5)


def test_lieb_yau_momentum_oracle():
    R = 60.0
    rep = check_lieb_yau([(0, lambda r: 2 * r * np.exp(-r), 1.0)], lambda r: (np.asarray(r) < R) * 1.0, 0.0, R)
    # <|p|> = 8/(3 pi) and <1/r> = 1 for hydrogen 1s
    assert rep.rhs == pytest.approx(8 / (3 * math.pi) - 2 / math.pi, abs=2e-4)


def test_lieb_yau_rejects_unsupported_theta():
    with pytest.raises(ValueError):
        check_lieb_yau([(0, lambda r: r * np.exp(-r), 1.0)], lambda r: np.ones_like(r), 1.0, 1.0)


def test_critical_hydrogen_s_zero():
    rep = check_critical_hydrogen(0.0, 1.0, 1.0, L=2)
    assert rep.lhs == pytest.approx(1.0, abs=1e-5)
    assert rep.passes()


def test_critical_frontier_grows_with_s():
    a = check_critical_hydrogen(0.2, 1.0, 10.0, L=1, A_scan=()).lhs
    b = check_critical_hydrogen(0.3, 1.0, 10.0, L=1, A_scan=()).lhs
    assert 1.0 < a < b


def test_daubechies_trace_bound():
    pot = RadialPotential((Exponential(5.0),), "exp")
    rep = check_daubechies(pot, 0.0)
    assert 0 < rep.lhs < rep.rhs
    assert check_daubechies(RadialPotential((Exponential(-1.0),), "repulsive"), 0.0).lhs == 0.0


def test_daubechies_divergent_for_coulomb_with_beta():
    with pytest.raises(DivergentError):
        check_daubechies(RadialPotential.coulomb(1.0), 0.01)


def test_kinetic_density_bound_hydrogen():
    g = RadialGrid.logarithmic(1e-7, 80.0, 6000)
    st = orbital_state(2 * g.nodes * np.exp(-g.nodes), g, 0, 1.0, q=1)
    rep = check_daubechies_density(st)
    assert rep.rhs == pytest.approx(0.5, rel=1e-5)
    assert rep.passes()


def test_kinetic_density_requires_orthonormal_orbitals():
    g = RadialGrid.logarithmic(1e-7, 80.0, 6000)
    st = orbital_state(2 * g.nodes * np.exp(-g.nodes), g, 0, 1.0, q=1)
    bad = st.__class__(st.orbitals * 2, st.grid, 2.0, 1, 0.0)
    with pytest.raises(ValueError):
        check_daubechies_density(bad)


def test_rho_bound_tf_saturation():
    g = RadialGrid.logarithmic(1e-7, 1e3, 4000)
    for Z in (5.0, 20.0):
        rep = check_rho_bound(solve_tf_atom(Z, grid=g).rho, g, Z, 0.0)
        assert rep.ratio == pytest.approx(0.2677, abs=2e-4)
        assert rep.metadata["rho43_ratio"] == pytest.approx(0.2990, abs=2e-4)
    with pytest.raises(ValueError):
        check_rho_bound(solve_tf_atom(5.0, grid=g).rho, g, 4.0, 0.0)


def test_report_csv_and_orientation():
    rep = InequalityReport("x", "i", 1.0, 2.0, 1.0, "g")
    assert rep.passes()
    assert reports_to_csv([rep]).splitlines()[0] == "name,instance,lhs,rhs,margin,grid,ratio"
    with pytest.raises(ValueError):
        InequalityReport("x", "i", 1.0, math.inf, math.inf, "g")


def test_manifest_is_versioned():
    man = corpus_manifest()
    assert man["version"]
    assert {"daubechies", "daubechies_density", "lieb_yau", "critical_hydrogen", "hls", "rho_bound"} <= set(man)
