import math

import numpy as np
import pytest

from reltf.model import (
    ConfigError,
    NuclearConfiguration,
    RadialGrid,
    SingularPointError,
    coulomb_potential,
    pressure,
    rtf_quadrature,
)


def test_pressure_negative_argument_is_zero():
    for kind in ("TF", "TF'", "RTF", "RTF'"):
        assert pressure(-1.0, 2, 0.1, kind) == 0.0


def test_tf_pressure_closed_form():
    w = np.array([0.3, 1.0, 4.0])
    np.testing.assert_allclose(pressure(w, 2, 0.0, "TF"), 2 / (15 * math.pi ** 2) * w ** 2.5)
    np.testing.assert_allclose(pressure(w, 1, 0.0, "TF'"), w ** 1.5 / (6 * math.pi ** 2))


@pytest.mark.parametrize("w,beta", [(0.5, 0.1), (2.0, 0.3), (10.0, 1.0)])
def test_rtf_closed_form_matches_quadrature(w, beta):
    assert pressure(w, 2, beta, "RTF") == pytest.approx(rtf_quadrature(w, 2, beta), rel=1e-10)


def test_rtf_derivative_is_density():
    w, beta, h = 1.7, 0.4, 1e-5
    num = (pressure(w + h, 2, beta, "RTF") - pressure(w - h, 2, beta, "RTF")) / (2 * h)
    assert num == pytest.approx(pressure(w, 2, beta, "RTF'"), rel=1e-8)


def test_rtf_reduces_to_tf_at_beta_zero():
    assert pressure(3.0, 2, 0.0, "RTF") == pytest.approx(pressure(3.0, 2, 0.0, "TF"), rel=1e-14)


def test_atomic_units_relation():
    w, beta = 0.8, 0.05
    assert pressure(w, 2, beta, "RTF", "atomic") == pytest.approx(
        0.5 * pressure(2 * w, 2, beta / 2, "RTF", "printed"), rel=1e-14)


def test_configuration_collects_all_problems():
    with pytest.raises(ConfigError) as exc:
        NuclearConfiguration((1.0, -2.0), ((0, 0, 0),), q=0, beta=-1.0)
    assert len(exc.value.problems) >= 4


def test_configuration_defaults_neutral_and_distance():
    cfg = NuclearConfiguration((1.0, 2.0), ((0, 0, 0), (0, 0, 1.5)))
    assert cfg.N == 3.0
    assert cfg.d == pytest.approx(1.5)
    assert NuclearConfiguration((5.0,)).d == math.inf


def test_subcritical_flags():
    cfg = NuclearConfiguration((10.0,), beta=0.063, epsilon=0.01)
    assert cfg.subcritical and not cfg.strictly_subcritical


def test_coulomb_potential_singular_point():
    cfg = NuclearConfiguration((2.0,))
    assert coulomb_potential(cfg, [0.0, 0.0, 2.0]) == pytest.approx(1.0)
    with pytest.raises(SingularPointError):
        coulomb_potential(cfg, [0.0, 0.0, 0.0])


def test_radial_grid_quadrature():
    g = RadialGrid.logarithmic(1e-6, 60.0, 3000)
    assert g.quadrature_error() < 1e-8
    assert g.integrate(np.exp(-g.nodes) / (8 * math.pi)) == pytest.approx(1.0, rel=1e-8)
    with pytest.raises(ValueError):
        RadialGrid.logarithmic(1.0, 0.5)
