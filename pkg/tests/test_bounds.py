import math

import numpy as np
import pytest

from reltf.bounds import (
    _pair_fraction,
    exchange_integral,
    lower_bound,
    pair_energy,
    slater_integral,
    slater_state,
    three_j_zero,
    upper_bound,
)
from reltf.inequalities import orbital_state
from reltf.model import NuclearConfiguration, RadialGrid
from reltf.spectral import RadialPotential
from reltf.tf import coulomb_norm, solve_tf_atom


def test_three_j_exact_values():
    assert three_j_zero(0, 0, 0) == pytest.approx(1.0)
    assert three_j_zero(1, 1, 0) ** 2 == pytest.approx(1 / 3)
    assert three_j_zero(1, 1, 2) ** 2 == pytest.approx(2 / 15)
    assert three_j_zero(2, 2, 2) ** 2 == pytest.approx(2 / 35)
    assert three_j_zero(1, 1, 1) == 0.0
    assert three_j_zero(1, 2, 4) == 0.0


def test_slater_integral_1s():
    g = RadialGrid.logarithmic(1e-7, 60.0, 6000)
    u = 2 * g.nodes * np.exp(-g.nodes)
    # F^0(1s,1s) = 5/8 for Z = 1
    assert slater_integral(g, u * u, u * u, 0) == pytest.approx(5 / 8, rel=1e-6)


def test_rank_one_exchange_is_half_self_energy():
    g = RadialGrid.logarithmic(1e-7, 60.0, 6000)
    st = orbital_state(2 * g.nodes * np.exp(-g.nodes), g, 0, 1.0, q=1)
    ex = exchange_integral(st)
    assert ex == pytest.approx(0.5 * coulomb_norm(g, st.rho), rel=1e-6)
    assert pair_energy(st)["total"] == pytest.approx(0.0, abs=1e-9)


def test_pair_fraction_interpolates():
    assert _pair_fraction(1.0, 6) == 0.0
    assert _pair_fraction(6.0, 6) == pytest.approx(1.0)
    assert _pair_fraction(2.5, 6) == pytest.approx(0.5 * (2 / 30 + 6 / 30))


def test_upper_bound_one_electron_is_ground_level():
    cfg = NuclearConfiguration((1.0,), N=1.0, q=2)
    up = upper_bound(cfg, rho=0, nu=-0.5)
    assert up.value == pytest.approx(-0.5, abs=1e-8)
    assert up.printed == pytest.approx(-0.5, abs=1e-6)


def test_lower_bound_one_electron_limit():
    cfg = NuclearConfiguration((1.0,), N=1.0, q=1)
    lb = lower_bound(cfg, rho=0, lam=-0.5 + 1e-9, epsilon=math.inf)
    assert lb.value == pytest.approx(-0.5, abs=1e-6)


def test_slater_state_invariants():
    sol = solve_tf_atom(10.0)
    st = slater_state(sol, 10.0, 2, 0.0)
    assert st.electrons == 10.0
    assert st.norm_error() < 1e-6
    assert st.orthonormality_error() < 1e-6
    assert st.grid.integrate(st.rho) == pytest.approx(10.0, abs=1e-5)


def test_relativistic_slater_state_orthonormal():
    sol = solve_tf_atom(10.0)
    st = slater_state(sol, 10.0, 2, 0.03)
    assert st.orthonormality_error() < 1e-6
    assert st.kinetic_energy > slater_state(sol, 10.0, 2, 0.0).kinetic_energy


def test_fewer_levels_than_electrons():
    st = slater_state(RadialPotential.coulomb(1.0).scaled(1.0), 1.0, 2, 0.0)
    assert st.electrons == 1.0
    z5 = slater_state(solve_tf_atom(5.0), 5.0, 2, 0.0)
    assert z5.electrons == 4.0 and z5.metadata["missing"] == 1.0


def test_sandwich_small_atom():
    cfg = NuclearConfiguration((5.0,))
    assert lower_bound(cfg).value < upper_bound(cfg).value
