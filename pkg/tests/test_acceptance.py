"""Acceptance criteria, one test each.

Every test records its measured values before asserting, so the summary line
printed by conftest shows the numbers whether the criterion passes or not.
"""

import os
import time
from dataclasses import replace

import numpy as np

from momauth.cli import main
from momauth.config import parse_config
from momauth.failure import (
    AcDistribution,
    Gaussian,
    ThresholdPair,
    failure_rate,
    mc_failure_rate,
    multi_ac_failure,
    optimize_multi_thresholds,
    optimize_thresholds,
)
from momauth.frontend import ComparatorModel
from momauth.harness import MANIFEST, PRESETS, ideal_adc, run
from momauth.ler import ler_variance_profile
from momauth.optimize import mismatch_voltage_scale, optimize_n, sensitivity_profile, sensitivity_temperature
from momauth.process import NM, Geometry, apply_temperature, sample_chip
from momauth.sar import AdcConfig, switching_trace_equal, transfer_curve
from momauth.signature import extract_population, extract_signature, trace_matrix

CFG = parse_config({})
AN = CFG.analysis
AUTH = CFG.authentic_process
GRID = np.array(CFG.cof_grid())


def criterion(record_property, number, text):
    record_property("criterion", f"{number} {text}")


def detail(record_property, **kv):
    parts = []
    for k, v in kv.items():
        parts.append(f"{k}={v:.6g}" if isinstance(v, float) else f"{k}={v}")
    record_property("detail", " ".join(parts))


def test_c01_failure_rate_oracle(record_property):
    criterion(record_property, 1, "single-AC failure rate matches 1e6-sample oracle within 1e-3")
    t0 = time.perf_counter()
    d = AcDistribution(Gaussian(0.5, 0.1), Gaussian(0.9, 0.05), p_a=0.5, f_ac_role="counterfeit")
    t = ThresholdPair(0.8, 1.0)
    af = failure_rate(d, t)
    mc, se = mc_failure_rate(d, t, 1_000_000, seed=0)
    elapsed = time.perf_counter() - t0
    detail(record_property, a_f=af, a_f_mc=mc, mc_se=se, diff=abs(af - mc), seconds=elapsed)
    assert abs(af - mc) < 1e-3
    assert elapsed < 10


def test_c02_min_failure_trend(record_property):
    criterion(record_property, 2, "minimal A_F strictly increases with authentic spread")
    t0 = time.perf_counter()
    mins = []
    for s in (0.025, 0.05, 0.10):
        d = AcDistribution(Gaussian(0.5, 0.1), Gaussian(0.9, s), p_a=0.5, f_ac_role="counterfeit")
        mins.append(optimize_thresholds(d)[1])
    elapsed = time.perf_counter() - t0
    detail(record_property, a_f_min=" ".join(f"{m:.5g}" for m in mins), seconds=elapsed)
    assert mins[0] < mins[1] < mins[2]
    assert elapsed < 30


def test_c03_multi_ac_oracle_and_trend(record_property):
    criterion(record_property, 3, "1-of-2 quadrature matches correlated sampling; correlation limits min A_F")
    t0 = time.perf_counter()
    diffs, mins = [], {}
    for rho in (0.0, 0.5):
        d = AcDistribution(Gaussian(0.5, 0.25), Gaussian(0.9, 0.1), p_a=0.5, rho=rho, f_ac_role="counterfeit")
        best_t, best = optimize_multi_thresholds(d, 2, 1)
        mins[rho] = best
        for t in (best_t, ThresholdPair(0.7, 1.1)):
            q = multi_ac_failure(d, t, 2, 1)
            mc = multi_ac_failure(d, t, 2, 1, mc_samples=1_000_000, seed=0, method="monte-carlo")
            diffs.append(abs(q.a_f - mc.a_f))
    elapsed = time.perf_counter() - t0
    detail(record_property, max_diff=max(diffs), min_af_rho0=mins[0.0], min_af_rho05=mins[0.5], seconds=elapsed)
    assert max(diffs) < 1e-3
    assert mins[0.5] >= mins[0.0]
    assert elapsed < 60


def test_c04_repeated_sampling(record_property):
    criterion(record_property, 4, "majority vote over 15 repeats lowers trace spread and average")
    t0 = time.perf_counter()
    n, chips, sigma_n = 256, 100, AN.repeat_study_sigma_n_volts
    ratio = sigma_n / mismatch_voltage_scale(AUTH, n)
    stats = {}
    for r in (1, 15):
        x = trace_matrix(extract_population(AUTH, range(chips), n, GRID, r, global_seed=0, sigma_n=sigma_n))
        stats[r] = (x.mean(axis=0), x.std(axis=0))
    frac = float(np.mean(stats[15][1] <= stats[1][1]))
    pos = GRID > 0
    ordered = bool(np.all(stats[15][0][pos] <= stats[1][0][pos]))
    elapsed = time.perf_counter() - t0
    detail(record_property, noise_to_mismatch=ratio, std_reduced_fraction=frac, avg_ordered=ordered,
           seconds=elapsed)
    assert 1 / 3 <= ratio <= 3
    assert frac >= 0.8
    assert ordered
    assert elapsed < 300


def test_c05_array_size_trends(record_property):
    criterion(record_property, 5, "var(D_Auth) and mean-trace gap non-increasing in N")
    t0 = time.perf_counter()
    r = optimize_n(AUTH, [32, 64, 128, 256], (0.01, 0.02), chips_per_point=100, repeats=15, global_seed=0,
                   sigma_n=AN.n_sweep_sigma_n_volts)
    elapsed = time.perf_counter() - t0
    var_ok = bool(np.all(r.var_d[1:] <= 1.1 * r.var_d[:-1]))
    gap_ok = bool(np.all(r.sensitivity[1:] <= 1.1 * r.sensitivity[:-1]))
    detail(record_property, var_d=" ".join(f"{v:.4g}" for v in r.var_d),
           gap=" ".join(f"{v:.4g}" for v in r.sensitivity), n_opt=r.n_opt, seconds=elapsed)
    assert var_ok
    assert gap_ok
    assert elapsed < 600


def test_c06_sensitivity_weighting(record_property):
    criterion(record_property, 6, "weighted distance changes more than unweighted between 1% and 1.5% sigma")
    t0 = time.perf_counter()
    s = sensitivity_profile(AUTH, [0.01, 0.015], n=256, cof_grid=GRID, enroll_size=100, chips=200, repeats=15,
                            global_seed=0)
    elapsed = time.perf_counter() - t0
    detail(record_property, change_uniform=s.change_uniform, change_weighted=s.change_weighted, seconds=elapsed)
    assert s.change_weighted > s.change_uniform
    assert elapsed < 300


def test_c07_temperature_invariance(record_property):
    criterion(record_property, 7, "noise-free traces identical across temperature; noisy drift < 1e-3 per C")
    t0 = time.perf_counter()
    temps = (-20.0, 27.0, 80.0)
    identical = True
    for i in range(100):
        chip = sample_chip(AUTH, 256, 0, i)
        ref = None
        for t in temps:
            tr = extract_signature(apply_temperature(chip, AUTH, t), ComparatorModel(0.0), GRID, 15)
            if ref is None:
                ref = tr.counts
            identical &= bool(np.array_equal(tr.counts, ref))
    noisy = sensitivity_temperature(AUTH, temps, 100, 256, GRID, 15, 0, AN.drift_sigma_n_volts)
    elapsed = time.perf_counter() - t0
    detail(record_property, noiseless_identical=identical, max_abs_slope=noisy.max_abs_slope, seconds=elapsed)
    assert identical
    assert noisy.max_abs_slope < 1e-3
    assert elapsed < 300


def test_c08_adc(record_property):
    criterion(record_property, 8, "ADC ramp within 1 LSB, 3-bit hand trace, mode isolation")
    t0 = time.perf_counter()
    adc = ideal_adc(CFG)
    rows = transfer_curve(adc, ComparatorModel(0.0, 0.0, 0, 0), points=1024)
    max_err = max(r[3] for r in rows)

    small = ideal_adc(replace(CFG, adc=AdcConfig(bits=3)))
    rec = small.convert(0.5, 0.5, ComparatorModel(0.0))
    hand = ((0, 1, 1), (((1, 1, 1), (1, 1, 1)), ((1, 1, 1), (0, 1, 1)), ((1, 0, 1), (0, 1, 1))))
    trace_ok = (rec.comparator_decisions, rec.dac_state_sequence) == hand

    real = ideal_adc(CFG, AUTH, chip_index=5)
    alone = real.convert(0.61, 0.37, ComparatorModel(AUTH.sigma_n, 0.0, 0, 5))
    m = ComparatorModel(AUTH.sigma_n, 0.0, 0, 5)
    real.extract_signature(m, GRID, 15)
    isolated = switching_trace_equal(alone, real.convert(0.61, 0.37, m))
    elapsed = time.perf_counter() - t0
    detail(record_property, max_abs_error_lsb=max_err, hand_trace=trace_ok, mode_isolation=isolated,
           seconds=elapsed)
    assert max_err <= 1
    assert trace_ok
    assert isolated
    assert elapsed < 30


def test_c09_ler_trends(record_property):
    criterion(record_property, 9, "LER variance up with sigma, down with area and with correlation length")
    t0 = time.perf_counter()
    g = Geometry()
    sig = [r.norm_variance for r in ler_variance_profile(g, [1.0], [16 * NM], [1 * NM, 2 * NM, 3 * NM], 1000)]
    area = [r.norm_variance for r in ler_variance_profile(g, [1.0, 2.0, 4.0], [16 * NM], [2 * NM], 1000)]
    eta = [r.norm_variance for r in ler_variance_profile(g, [1.0], [8 * NM, 16 * NM, 32 * NM], [2 * NM], 1000)]
    elapsed = time.perf_counter() - t0
    sig_ok = sig[0] < sig[1] < sig[2]
    area_ok = area[0] > area[1] > area[2]
    eta_ok = eta[0] > eta[1] > eta[2]
    detail(record_property, sigma_up=sig_ok, area_down=area_ok, eta_down=eta_ok,
           eta_variance=" ".join(f"{v:.4g}" for v in eta), seconds=elapsed)
    assert sig_ok
    assert area_ok
    assert eta_ok
    assert elapsed < 120


def test_c10_discrimination(record_property, tmp_path):
    criterion(record_property, 10, "holdout accept >= 94%, 2% sigma counterfeits rejected >= 90%")
    t0 = time.perf_counter()
    m = run(CFG, "discrimination", out=tmp_path, workers=os.cpu_count() or 1)
    elapsed = time.perf_counter() - t0
    s = m["summary"]
    holdout = s["accept_rate_authentic"]
    reject2 = 1 - s["accept_rate_counterfeit_2"]
    detail(record_property, holdout_accept=holdout, counterfeit_2pct_reject=reject2,
           counterfeit_4pct_reject=1 - s["accept_rate_counterfeit_4"],
           counterfeit_0p5pct_reject=1 - s["accept_rate_counterfeit_0p5"], seconds=elapsed)
    assert CFG.enrollment.size == 100 and CFG.enrollment.quantile == 0.99 and CFG.enrollment.weighting == "sensitivity"
    assert AN.holdout_size == 200 and AN.counterfeit_size == 200
    assert holdout >= 0.94
    assert reject2 >= 0.90
    assert elapsed < 600


def _bodies(out):
    return {f: (out / f).read_bytes() for f in sorted(os.listdir(out)) if f != MANIFEST}


def test_c11_determinism(record_property, tmp_path):
    criterion(record_property, 11, "every preset byte-identical across runs and --workers 1 vs 8")
    t0 = time.perf_counter()
    mismatched = []
    for preset in sorted(PRESETS):
        outs = []
        for tag, workers in (("a", 1), ("b", 1), ("c", 8)):
            out = tmp_path / f"{preset}_{tag}"
            assert main(["run", "--preset", preset, "--out", str(out), "--workers", str(workers)]) == 0
            outs.append(_bodies(out))
        if not (outs[0] == outs[1] == outs[2]) or not outs[0]:
            mismatched.append(preset)
    elapsed = time.perf_counter() - t0
    detail(record_property, presets=len(PRESETS), mismatched=",".join(mismatched) or "none", seconds=elapsed)
    assert not mismatched
    assert elapsed < 900
