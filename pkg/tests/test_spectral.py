import math

import numpy as np
import pytest

from reltf.spectral import (
    CRITICAL_COUPLING,
    Exponential,
    Gaussian,
    MomentumGrid,
    NonConvergenceError,
    RadialOperatorSpec,
    RadialPotential,
    SquareWell,
    SupercriticalError,
    Yukawa,
    channel_spectra,
    counting_function,
    eigenvalues_below,
    kinetic_symbol,
    legendre_q,
    negative_trace,
    position_grid,
)
from reltf.tf import solve_tf_atom


def test_legendre_q_closed_forms():
    z = np.array([1.5, 3.0, 20.0])
    q0 = 0.5 * np.log((z + 1) / (z - 1))
    np.testing.assert_allclose(legendre_q(0, z - 1), q0, rtol=1e-12)
    np.testing.assert_allclose(legendre_q(1, z - 1), z * q0 - 1, rtol=1e-10)
    np.testing.assert_allclose(legendre_q(2, z - 1), 0.5 * (3 * z * z - 1) * q0 - 1.5 * z, rtol=1e-7)


def test_kinetic_symbol_limits():
    p = np.array([1e-3, 1.0, 1e4])
    np.testing.assert_allclose(kinetic_symbol(p, 0.0), p ** 2 / 2)
    big = kinetic_symbol(np.array([1e8]), 0.1)
    assert big[0] == pytest.approx(1e8 / 0.1, rel=1e-6)
    assert kinetic_symbol(np.array([1e-4]), 0.1)[0] == pytest.approx(0.5e-8, rel=1e-6)


@pytest.mark.parametrize("Z", [1.0, 3.0])
def test_finite_difference_hydrogen(Z):
    for ell in range(3):
        spec = RadialOperatorSpec("nonrelativistic", ell, RadialPotential.coulomb(Z))
        s = eigenvalues_below(spec, -Z * Z / 60.0)
        n = np.arange(ell + 1, ell + 1 + len(s))
        np.testing.assert_allclose(s.eigenvalues, -Z * Z / (2 * n ** 2), atol=1e-6 * Z * Z)
        assert s.orthonormality_error() < 1e-10


def test_momentum_space_reproduces_hydrogen_at_small_beta():
    s = channel_spectra(RadialPotential.coulomb(1.0), -0.06, 1, 1e-5, L_max=1)
    assert s[0].eigenvalues[0] == pytest.approx(-0.5, abs=1e-6)
    assert s[1].eigenvalues[0] == pytest.approx(-0.125, abs=1e-6)


def test_chandrasekhar_first_order_shift_for_p_states():
    beta = 0.02
    grid = MomentumGrid.default(1.0, beta)
    pot = RadialPotential.coulomb(1.0)
    # paired spectra on one grid: discretization errors cancel in the shift
    lam = [eigenvalues_below(RadialOperatorSpec("chandrasekhar", 1, pot, b, 1, grid), -0.1,
                             verify=False).eigenvalues[0] for b in (1e-6, beta)]
    shift = lam[1] - lam[0]
    # <-p^4/8 beta^2> for 2p: -(beta^2/2 n^4)(n/(l+1/2) - 3/4)
    assert shift == pytest.approx(-(beta ** 2 / 32) * (2 / 1.5 - 0.75), rel=2e-3)


def test_supercritical_rejected():
    with pytest.raises(SupercriticalError):
        RadialOperatorSpec("chandrasekhar", 0, RadialPotential.coulomb(1.0), CRITICAL_COUPLING + 0.02)


def test_orbitals_in_position_space():
    s = channel_spectra(RadialPotential.coulomb(1.0), -0.1, 1, 1e-4, L_max=0)[0]
    r = np.linspace(0.05, 15.0, 200)
    u = s.radial_functions(r)[:, 0]
    np.testing.assert_allclose(u, 2 * r * np.exp(-r), atol=5e-5)


@pytest.mark.parametrize("term", [Yukawa(3.0, 0.7), Exponential(4.0, 1.0), Gaussian(6.0, 1.0)])
def test_momentum_kernels_match_finite_differences(term):
    pot = RadialPotential((term,), "test")
    fd = channel_spectra(pot, 0.0, 1, 0.0, L_max=1)
    mom = channel_spectra(pot, 0.0, 1, 0.0, L_max=1, kinetic="chandrasekhar", grid=MomentumGrid.default(1.0, 0.0))
    for a, b in zip(fd, mom):
        m = min(len(a), len(b))
        assert m > 0 or len(a) == len(b) == 0
        np.testing.assert_allclose(a.eigenvalues[:1], b.eigenvalues[:1], atol=2e-5)


def test_square_well_position_only():
    pot = RadialPotential((SquareWell(10.0, 1.0),), "well")
    s = channel_spectra(pot, 0.0, 1, 0.0, L_max=0)[0]
    # s-wave: k cot k = -kappa with k^2/2 + kappa^2/2 = 10
    from scipy.optimize import brentq
    f = lambda k: k / math.tan(k) + math.sqrt(20 - k * k)
    k = brentq(f, math.pi / 2 + 1e-6, min(math.pi, math.sqrt(20)) - 1e-9)
    assert s.eigenvalues[0] == pytest.approx(k * k / 2 - 10, abs=1e-3)
    with pytest.raises(ValueError):
        RadialOperatorSpec("chandrasekhar", 0, pot, 0.1)


def test_trace_and_count_of_tf_potential():
    sol = solve_tf_atom(10.0)
    tr = negative_trace(sol, 0.0, 2, 0.0, L_max=10)
    cnt = counting_function(sol, 0.0, 2, 0.0, L_max=10)
    # neutral TF potential binds 1s, 2s, 3s and 2p
    assert cnt.total == 12.0
    assert [s.count for s in cnt.spectra] == [3, 1, 0]
    assert tr.total < 0
    # direct sum over channels
    levels = sum(s.degeneracy * s.eigenvalues.sum() for s in tr.spectra)
    assert tr.total == pytest.approx(levels, rel=1e-12)


def test_cache_round_trip_and_corruption(tmp_path):
    from reltf.cache import DiskCache
    c = DiskCache(tmp_path)
    spec = RadialOperatorSpec("nonrelativistic", 0, RadialPotential.coulomb(1.0))
    a = eigenvalues_below(spec, -0.1, cache=c)
    b = eigenvalues_below(spec, -0.1, cache=c)
    assert c.hits == 1 and c.misses == 1
    np.testing.assert_array_equal(a.eigenvalues, b.eigenvalues)
    for path in tmp_path.rglob("*.npz"):
        path.write_bytes(path.read_bytes()[:-7] + b"garbage")
    d = eigenvalues_below(spec, -0.1, cache=c)
    assert c.corrupt == 1
    np.testing.assert_array_equal(a.eigenvalues, d.eigenvalues)


def test_nonconvergence_is_reported():
    spec = RadialOperatorSpec("chandrasekhar", 0, RadialPotential.coulomb(0.63), 1.0)
    with pytest.raises(NonConvergenceError):
        eigenvalues_below(spec, -0.05, tol=1e-12, max_levels=2)
