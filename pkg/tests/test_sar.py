import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from momauth.frontend import ComparatorModel
from momauth.process import FabProcess, sample_chip
from momauth.sar import AdcConfig, SarAdc, ideal_code, switching_trace_equal, transfer_curve
from momauth.signature import default_cof_grid


def make_adc(bits=10, sigma=0.0, idx=0):
    cfg = AdcConfig(bits=bits)
    p = FabProcess(sigma_cu=sigma * 1e-15)
    return SarAdc(cfg, sample_chip(p, cfg.msb_units, 0, idx, lsb_units=cfg.msb_units))


def test_msb_group_size():
    assert AdcConfig().msb_units == 256
    assert AdcConfig(bits=3).group_sizes == [2, 1, 1]
    with pytest.raises(ValueError):
        AdcConfig(bits=1)


def test_ideal_ramp_matches_quantizer():
    adc = make_adc()
    rows = transfer_curve(adc, ComparatorModel(0.0))
    assert len(rows) == 1024
    assert max(r[3] for r in rows) <= 1


def test_full_scale_positive_all_ones():
    adc = make_adc()
    rec = adc.convert(1.0, 0.0, ComparatorModel(0.0))
    assert rec.comparator_decisions == (1,) * 10
    assert rec.code == 1023


def test_three_bit_hand_trace():
    # v_ip = v_in: the tie gives 0, so the N-side MSB (2 units of 4) drops first,
    # pulling v_in down by v_ref/2; after that P stays above N
    adc = make_adc(bits=3)
    rec = adc.convert(0.5, 0.5, ComparatorModel(0.0))
    assert rec.comparator_decisions == (0, 1, 1)
    assert rec.dac_state_sequence == (
        ((1, 1, 1), (1, 1, 1)),
        ((1, 1, 1), (0, 1, 1)),
        ((1, 0, 1), (0, 1, 1)),
    )
    assert rec.top_plate_voltages == ((0.5, 0.5), (0.5, 0.0), (0.25, 0.0))
    assert rec.code == 0b011


def test_out_of_range_input():
    with pytest.raises(ValueError):
        make_adc(bits=4).convert(1.2, 0.5, ComparatorModel(0.0))


def test_trace_equality():
    adc = make_adc()
    a = adc.convert(0.6, 0.4, ComparatorModel(0.0))
    assert switching_trace_equal(a, a)
    lsb = 2.0 / 1024
    b = adc.convert(0.6 + 2 * lsb, 0.4, ComparatorModel(0.0))
    assert not switching_trace_equal(a, b)


def test_mode_isolation():
    adc = make_adc(sigma=0.01, idx=3)
    alone = adc.convert(0.55, 0.45, ComparatorModel(300e-6, global_seed=1, stream_id=2))
    m = ComparatorModel(300e-6, global_seed=1, stream_id=2)
    before = adc.state()
    adc.extract_signature(m, default_cof_grid(), repeats=3)
    assert adc.state() == before
    after = adc.convert(0.55, 0.45, m)
    assert switching_trace_equal(alone, after)
    assert alone == after


def _charge_balance_voltage(v_in, caps, bottom, v_ref):
    # sampled charge sum C_k (v_in - v_ref) is conserved on the top plate node
    return v_in - v_ref + v_ref * np.dot(caps, bottom) / caps.sum()


@settings(max_examples=25, deadline=None)
@given(vd=st.floats(-0.99, 0.99), idx=st.integers(0, 50))
def test_charge_conservation(vd, idx):
    adc = make_adc(sigma=0.01, idx=idx)
    vip, vin = 0.5 + vd / 2, 0.5 - vd / 2
    rec = adc.convert(vip, vin, ComparatorModel(0.0))
    for (bp, bn), (vp, vn) in zip(rec.dac_state_sequence, rec.top_plate_voltages):
        assert vp == pytest.approx(_charge_balance_voltage(vip, adc.cap_p, np.array(bp), 1.0), abs=1e-12)
        assert vn == pytest.approx(_charge_balance_voltage(vin, adc.cap_n, np.array(bn), 1.0), abs=1e-12)


@pytest.mark.parametrize("idx", [0, 1, 2])
def test_monotone_transfer_with_mismatch(idx):
    adc = make_adc(sigma=0.02, idx=idx)
    rows = transfer_curve(adc, ComparatorModel(0.0), points=4096)
    codes = np.array([r[1] for r in rows])
    assert np.all(np.diff(codes) >= 0)


def test_ideal_code_edges():
    assert ideal_code(-1.0, 10, 1.0) == 0
    assert ideal_code(1.0, 10, 1.0) == 1023
    assert ideal_code(0.0, 10, 1.0) == 512


def test_chip_size_must_match():
    with pytest.raises(ValueError):
        SarAdc(AdcConfig(bits=10), sample_chip(FabProcess(), 64, 0, 0, lsb_units=64))
