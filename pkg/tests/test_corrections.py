import math

import pytest

from oracles import hydrogenic_scott
from reltf.corrections import (
    dirac_term,
    energy_decomposition,
    rct_term,
    rtf_divergence,
    schwinger_term,
    scott_S,
)
from reltf.model import NuclearConfiguration, pressure
from reltf.spectral import SupercriticalError
from reltf.tf import integrate_radial, solve_tf_atom


@pytest.fixture(scope="module")
def scott0(cache):
    return scott_S(0.0, cache=cache)


def test_scott_at_zero_matches_hydrogenic_oracle(scott0):
    assert hydrogenic_scott() == pytest.approx(0.25, abs=1e-8)
    assert scott0.value == pytest.approx(hydrogenic_scott(), rel=5e-3)
    assert scott0.trace_value == -scott0.value
    assert scott0.error < 2e-3


def test_scott_decreases_with_coupling(scott0, cache):
    s = scott_S(0.3, cache=cache)
    assert s.value < scott0.value
    assert s.relativistic_shift > 0


def test_scott_rejects_supercritical():
    with pytest.raises(SupercriticalError):
        scott_S(2 / math.pi)


def test_rtf_subtraction_diverges():
    vals, power = rtf_divergence(0.3)
    assert power < -0.5
    assert abs(vals[-1]) > abs(vals[0])


def test_dirac_and_schwinger_conventions():
    sol = solve_tf_atom(10.0)
    rho43 = integrate_radial(sol.grid, sol.rho ** (4 / 3))
    assert dirac_term(sol, "atomic") == pytest.approx(-0.75 * (6 / math.pi) ** (1 / 3) * 2 ** (-1 / 3) * rho43)
    assert schwinger_term(sol, "atomic") == pytest.approx(2 / 9 * dirac_term(sol, "atomic"))
    assert dirac_term(sol, "printed") == pytest.approx(-4.5 * (36 * math.pi) ** (2 / 3) * 2 ** (2 / 3) * rho43)
    assert schwinger_term(sol, "printed") == pytest.approx((36 * math.pi) ** (2 / 3) * 2 ** (2 / 3) * rho43)
    with pytest.raises(ValueError):
        dirac_term(sol, "other")


def test_dirac_scaling():
    a = dirac_term(solve_tf_atom(5.0), "atomic") / 5 ** (5 / 3)
    b = dirac_term(solve_tf_atom(40.0), "atomic") / 40 ** (5 / 3)
    assert a == pytest.approx(b, rel=1e-5)
    assert a == pytest.approx(-0.2208, abs=2e-4)


def test_rct_zero_without_relativity_and_small_beta_law():
    sol = solve_tf_atom(20.0)
    assert rct_term(sol, 0.0) == 0.0
    small = [rct_term(sol, b) / b ** 2 for b in (1e-4, 2e-4)]
    assert small[0] == pytest.approx(small[1], rel=1e-4)
    assert rct_term(sol, 0.01) > 0


def test_pressure_gap_leading_term():
    for w in (0.01, 0.1, 1.0):
        beta = math.sqrt(1e-3 / w)
        gap = pressure(w, 2, beta, "RTF") - pressure(w, 2, 0.0, "TF")
        assert gap == pytest.approx(2 / (14 * math.pi ** 2) * beta ** 2 * w ** 3.5, rel=1e-2)


def test_decomposition_record(scott0):
    dec = energy_decomposition(NuclearConfiguration((10.0,)), scott=scott0)
    assert dec.RCT == 0.0
    assert dec.Scott == pytest.approx(2 * 100 * scott0.value)
    assert dec.total == pytest.approx(dec.E_TF + dec.Scott + dec.Dirac + dec.Schwinger)
    assert '"E_TF"' in dec.to_json()
    with pytest.raises(ValueError):
        energy_decomposition(NuclearConfiguration((10.0,), beta=0.01), scott=scott0)
