import numpy as np
import pytest

from momauth.optimize import (
    mismatch_voltage_scale,
    optimize_n,
    sensitivity_offset,
    sensitivity_profile,
    sensitivity_temperature,
)
from momauth.process import FabProcess
from momauth.signature import default_cof_grid

GRID = default_cof_grid()
P = FabProcess()


def test_single_candidate_is_optimal():
    r = optimize_n(P, [64], chips_per_point=50, repeats=1)
    assert r.n_opt == 64


def test_optimize_n_validates():
    with pytest.raises(ValueError):
        optimize_n(P, [64, 32])
    with pytest.raises(ValueError):
        optimize_n(P, [32], chips_per_point=10)


def test_identical_sigmas_zero_sensitivity():
    s = sensitivity_profile(P, [0.01, 0.01], n=64, cof_grid=GRID, enroll_size=20, chips=20, repeats=1)
    np.testing.assert_array_equal(s.absolute, 0.0)
    np.testing.assert_array_equal(s.relative, 0.0)


def test_profile_needs_two_sigmas():
    with pytest.raises(ValueError):
        sensitivity_profile(P, [0.01])


@pytest.fixture(scope="module")
def profile():
    return sensitivity_profile(P, [0.01, 0.015], n=256, cof_grid=GRID, global_seed=0)


def test_sensitivity_grows_with_cof(profile):
    # elasticity of the per-point distance to sigma_Cu rises along the grid
    assert np.all(np.diff(profile.relative) > 0)
    # and so the weights favour large offsets
    assert profile.weights[-1] > profile.weights[0]
    assert profile.weights.sum() == pytest.approx(len(GRID))


def test_weighted_distance_more_sensitive(profile):
    assert profile.change_weighted >= profile.change_uniform


def test_zero_tc_zero_slope():
    d = sensitivity_temperature(FabProcess(tc=0.0), [-20.0, 80.0], population_size=10, n=64, cof_grid=GRID,
                                repeats=1, sigma_n=0.0)
    np.testing.assert_array_equal(d.slopes, 0.0)


def test_uniform_tc_noise_free_zero_slope():
    d = sensitivity_temperature(P, [-20.0, 27.0, 80.0], population_size=20, n=64, cof_grid=GRID, repeats=1,
                                sigma_n=0.0)
    np.testing.assert_array_equal(d.slopes, 0.0)


def test_uniform_tc_noisy_small_slope():
    d = sensitivity_temperature(P, [-3.0, 57.0], population_size=100, n=256, cof_grid=GRID, repeats=15,
                                sigma_n=55e-6)
    assert d.max_abs_slope < 1e-3


def test_equal_offsets_zero_slope():
    d = sensitivity_offset(P, [10e-6, 10e-6], population_size=10, n=64, cof_grid=GRID, repeats=1)
    np.testing.assert_array_equal(d.slopes, 0.0)


def test_symmetric_offsets_split_directions():
    d = sensitivity_offset(P, [-20e-6, 0.0, 20e-6], population_size=50, n=256, cof_grid=GRID, repeats=15,
                           sigma_n=55e-6)
    sp, sn, tot = d.span_slope("p"), d.span_slope("n"), d.span_slope("total")
    # the two directional counts move in opposite directions
    assert np.all(sp * sn <= 0)
    assert np.any(sp != 0)
    # while their sum moves much less
    assert np.max(np.abs(tot)) < 0.1 * np.max(np.abs(np.concatenate([sp, sn])))


def test_huge_offset_saturates_directions():
    v = 100 * mismatch_voltage_scale(P, 64)
    d = sensitivity_offset(P, [0.0, v], population_size=10, n=64, cof_grid=GRID, repeats=1, sigma_n=0.0)
    np.testing.assert_array_equal(d.avg_p[-1], 0.0)
    np.testing.assert_array_equal(d.avg_n[-1], 1.0)
