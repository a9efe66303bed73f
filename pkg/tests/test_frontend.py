import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import norm

from momauth.frontend import ComparatorModel, OffsetCapBank, cof_value, compare, mismatch_compare
from momauth.process import FF, ChipInstance, FabProcess, sample_chip


@pytest.mark.parametrize("k,expected", [(1, 0.2), (2, 0.1), (4, 0.05)])
def test_cof_value(k, expected):
    assert cof_value(OffsetCapBank(0.2 * FF, 8, k)) == pytest.approx(expected * FF)


def test_cof_value_errors():
    with pytest.raises(ValueError):
        OffsetCapBank(0.2 * FF, 8, 0)
    with pytest.raises(ValueError):
        cof_value(OffsetCapBank(0.2 * FF, 8, 1, "detached"))


def test_compare_noise_free():
    m = ComparatorModel(0.0, 0.0)
    assert compare(m, 0.6, 0.5) == 1
    assert compare(m, 0.5, 0.5) == 0
    assert m.cursor == 2


def test_compare_rejects_nonfinite():
    with pytest.raises(ValueError):
        compare(ComparatorModel(0.0), float("nan"), 0.0)


def test_compare_symmetric_noise():
    m = ComparatorModel(500e-9, 0.0, global_seed=3)
    ones = np.mean([compare(m, 0.5, 0.5) for _ in range(10_000)])
    assert abs(ones - 0.5) <= 0.02


def test_compare_flip_rate_with_offset():
    sigma, off, draws = 500e-9, 300e-9, 10_000
    m = ComparatorModel(sigma, off, global_seed=9)
    ones = np.mean([compare(m, 0.5, 0.5) for _ in range(draws)])
    p = norm.cdf(off / sigma)
    assert abs(ones - p) < 3 * np.sqrt(p * (1 - p) / draws)


def test_same_lineage_same_noise():
    a = ComparatorModel(1e-6, global_seed=2, stream_id=7)
    b = ComparatorModel(1e-6, global_seed=2, stream_id=7)
    assert [a.draw(i) for i in range(5)] == [b.draw(i) for i in range(5)]
    np.testing.assert_array_equal(a.noise_block((0, 1), (3, 4)), b.noise_block((0, 1), (3, 4)))


def test_no_mismatch_never_fires():
    chip = sample_chip(FabProcess(sigma_cu=0.0), 16, 0, 0)
    m = ComparatorModel(0.0)
    for i in range(1, 17):
        assert mismatch_compare(chip, i, 0.01 * FF, "P", m) == 0
        assert mismatch_compare(chip, i, 0.01 * FF, "N", m) == 0


def test_zero_cof_is_ratio_indicator():
    chip = sample_chip(FabProcess(), 32, 0, 1)
    m = ComparatorModel(0.0)
    for i in range(1, 33):
        expected = int(chip.cu_n[i - 1] / chip.cu_n.sum() > chip.cu_p[i - 1] / chip.cu_p.sum())
        assert mismatch_compare(chip, i, 0.0, "P", m) == expected


def test_hand_evaluated_chip():
    chip = ChipInstance(cu_p=[1.0] * 4, cu_n=[1.05, 1.0, 1.0, 1.0], cof_series_unit=0.1, cof_series_ratio=0.1)
    left = (1.0 + 0.02) * 1.0 / (4.0 + 0.02)
    right = 1.05 * 1.0 / 4.05
    assert left < right
    assert mismatch_compare(chip, 1, 0.02, "P", ComparatorModel(0.0), v_ref=1.0) == 1


def test_index_range():
    chip = sample_chip(FabProcess(), 4, 0, 0)
    with pytest.raises(IndexError):
        mismatch_compare(chip, 0, 0.0, "P", ComparatorModel(0.0))
    with pytest.raises(IndexError):
        mismatch_compare(chip, 5, 0.0, "P", ComparatorModel(0.0))


@settings(max_examples=40, deadline=None)
@given(idx=st.integers(0, 10_000), i=st.integers(1, 16), cof=st.floats(0, 0.05))
def test_swap_symmetry(idx, i, cof):
    chip = sample_chip(FabProcess(), 16, 0, idx)
    swapped = ChipInstance(cu_p=chip.cu_n, cu_n=chip.cu_p, cof_series_unit=chip.cof_series_unit,
                           cof_series_ratio=chip.cof_series_ratio)
    m = ComparatorModel(0.0)
    c = cof * FF
    assert mismatch_compare(chip, i, c, "P", m) == mismatch_compare(swapped, i, c, "N", m)
    assert mismatch_compare(chip, i, c, "N", m) == mismatch_compare(swapped, i, c, "P", m)


@settings(max_examples=40, deadline=None)
@given(idx=st.integers(0, 10_000), i=st.integers(1, 16), c=st.floats(0, 0.05), extra=st.floats(0, 0.05),
       side=st.sampled_from(["P", "N"]))
def test_monotone_in_cof(idx, i, c, extra, side):
    chip = sample_chip(FabProcess(), 16, 0, idx)
    m = ComparatorModel(0.0)
    if mismatch_compare(chip, i, c * FF, side, m) == 0:
        assert mismatch_compare(chip, i, (c + extra) * FF, side, m) == 0
