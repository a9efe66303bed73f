"""Preset experiment pipelines with byte-stable CSV output and a run manifest.

Each preset is a list of stages.  A stage writes files into the output
directory and returns summary values.  ``run`` times the stages and writes
``manifest.json`` listing every file with its sha256.  Wall-clock times and
timestamps appear only in the manifest, so CSV files from two runs of the same
config and seed are byte-identical, whatever the worker count.
"""

import datetime
import hashlib
import json
import os
import time
from pathlib import Path

import numpy as np

from momauth import __version__
from momauth.auth import authenticate, enroll, save_card
from momauth.failure import (
    AcDistribution,
    Gaussian,
    ThresholdPair,
    failure_rate,
    mc_failure_rate,
    mc_multi_failure,
    multi_ac_failure,
    optimize_multi_thresholds,
    optimize_thresholds,
)
from momauth.frontend import ComparatorModel
from momauth.ler import ler_variance_profile, write_variance_csv
from momauth.optimize import optimize_n, sensitivity_offset, sensitivity_profile, sensitivity_temperature
from momauth.process import NM, sample_chip, write_population
from momauth.sar import SarAdc, transfer_curve, write_transfer_csv
from momauth.signature import extract_population, trace_matrix, write_traces

MANIFEST = "manifest.json"

# chip-index ranges kept apart so enrollment, holdout and counterfeit chips never share draws
HOLDOUT_BASE = 1_000_000
COUNTERFEIT_BASE = 2_000_000
COUNTERFEIT_STRIDE = 1_000_000


class StageError(RuntimeError):
    def __init__(self, stage, cause, manifest):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.manifest = manifest


def fmt(v):
    """CSV cell text: floats in 9-significant-digit scientific notation."""
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.8e}"
    return str(v)


def write_csv(path, columns, rows):
    with open(path, "w", newline="") as fh:
        fh.write(",".join(columns) + "\n")
        for row in rows:
            fh.write(",".join(fmt(v) for v in row) + "\n")


def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


# ---------------------------------------------------------------- stages


def stage_populate(cfg, out, workers):
    p = cfg.authentic_process
    chips = [sample_chip(p, cfg.extraction.n, cfg.global_seed, i) for i in range(cfg.extraction.chips)]
    write_population(chips, out / "population.csv")
    return ["population.csv"], {"chips": len(chips), "n": cfg.extraction.n}


def _extract(cfg, process, indices, workers, **kw):
    ex = cfg.extraction
    opts = dict(n=ex.n, cof_grid=cfg.cof_grid(), repeats=ex.repeats, global_seed=cfg.global_seed,
                v_ref=cfg.adc.v_ref, count_rule=ex.count_rule, workers=workers)
    opts.update(kw)
    return extract_population(process, indices, **opts)


def stage_extract(cfg, out, workers):
    traces = _extract(cfg, cfg.authentic_process, range(cfg.extraction.chips), workers)
    write_traces(traces, out / "traces.csv")
    return ["traces.csv"], {"chips": len(traces)}


def stage_fig9(cfg, out, workers):
    an = cfg.analysis
    files, cols, stats = [], ["cof_over_cu"], []
    for r in an.repeat_study_repeats:
        traces = _extract(cfg, cfg.authentic_process, range(an.repeat_study_chips), workers,
                          repeats=int(r), sigma_n=an.repeat_study_sigma_n_volts)
        name = f"fig9_traces_r{int(r)}.csv"
        write_traces(traces, out / name)
        files.append(name)
        x = trace_matrix(traces)
        stats.append((x.mean(axis=0), x.std(axis=0)))
        cols += [f"avg_r{int(r)}", f"std_r{int(r)}"]
    grid = cfg.cof_grid()
    rows = [[g] + [v for a, s in stats for v in (a[j], s[j])] for j, g in enumerate(grid)]
    write_csv(out / "fig9_summary.csv", cols, rows)
    files.append("fig9_summary.csv")
    summary = {}
    if len(stats) >= 2:
        (a_lo, s_lo), (a_hi, s_hi) = stats[0], stats[-1]
        summary["std_reduced_fraction"] = float(np.mean(s_hi <= s_lo))
        summary["avg_ordered"] = bool(np.all(a_hi[np.array(grid) > 0] <= a_lo[np.array(grid) > 0]))
    return files, summary


def stage_fig10(cfg, out, workers):
    an = cfg.analysis
    r = optimize_n(cfg.authentic_process, an.n_candidates, an.cof_pair, an.chips_per_point, cfg.extraction.repeats,
                   cfg.global_seed, an.n_sweep_sigma_n_volts, an.var_factor, an.keep_fraction, workers)
    rows = zip(r.n_values, r.var_d, r.mean_d, r.avg_low, r.avg_high, r.sensitivity)
    write_csv(out / "fig10_n_sweep.csv",
              ["n", "var_d_auth", "mean_d_auth", "avg_low_cof", "avg_high_cof", "sensitivity"], rows)
    return ["fig10_n_sweep.csv"], {"n_opt": r.n_opt}


def _profile(cfg, workers):
    an, en = cfg.analysis, cfg.enrollment
    return sensitivity_profile(cfg.authentic_process, an.sigma_sweep_rel, cfg.extraction.n, cfg.cof_grid(), en.size,
                               an.sensitivity_chips, cfg.extraction.repeats, cfg.global_seed,
                               mode=en.sensitivity_mode, workers=workers)


def enrollment_weights(cfg, workers=1):
    """Sensitivities to weight the card with, or None for uniform weights."""
    en = cfg.enrollment
    if en.weighting != "sensitivity":
        return None
    prof = _profile(cfg, workers)
    return np.clip(prof.relative if en.sensitivity_mode == "relative" else prof.absolute, 0.0, None)


def stage_fig11(cfg, out, workers):
    s = _profile(cfg, workers)
    cols = (["cof_over_cu"] + [f"distance_sigma{i}" for i in range(len(s.sigma_values))]
            + ["absolute", "relative", "weight"])
    rows = [[g, *s.point_distance[:, j], s.absolute[j], s.relative[j], s.weights[j]]
            for j, g in enumerate(s.cof_grid)]
    write_csv(out / "fig11_sensitivity.csv", cols, rows)
    write_csv(out / "fig11_distance.csv", ["sigma_cu_rel", "mean_d_uniform", "mean_d_weighted"],
              zip(s.sigma_values, s.mean_d_uniform, s.mean_d_weighted))
    return ["fig11_sensitivity.csv", "fig11_distance.csv"], {
        "change_uniform": s.change_uniform,
        "change_weighted": s.change_weighted,
    }


def _drift_csv(out, prefix, label, runs):
    """runs: list of (sigma_n, DriftProfile)."""
    rows, srows = [], []
    for sn, d in runs:
        for i, v in enumerate(d.values):
            for j, g in enumerate(d.cof_grid):
                rows.append([sn, v, g, d.avg[i, j], d.avg_p[i, j], d.avg_n[i, j]])
        for i in range(len(d.values) - 1):
            for j, g in enumerate(d.cof_grid):
                srows.append([sn, d.values[i], d.values[i + 1], g, d.slopes[i, j], d.slopes_p[i, j], d.slopes_n[i, j]])
    write_csv(out / f"{prefix}_{label}.csv", ["sigma_n_volts", label, "cof_over_cu", "avg", "avg_p", "avg_n"], rows)
    write_csv(out / f"{prefix}_slopes.csv",
              ["sigma_n_volts", f"{label}_from", f"{label}_to", "cof_over_cu", "slope", "slope_p", "slope_n"], srows)
    return [f"{prefix}_{label}.csv", f"{prefix}_slopes.csv"]


def stage_fig12ab(cfg, out, workers):
    an, ex = cfg.analysis, cfg.extraction
    runs = []
    for sn in (0.0, an.drift_sigma_n_volts):
        runs.append((sn, sensitivity_temperature(cfg.authentic_process, an.temperatures_c, an.drift_chips, ex.n,
                                                 cfg.cof_grid(), ex.repeats, cfg.global_seed, sn, an.t0_c, workers)))
    files = _drift_csv(out, "fig12ab", "temperature_c", runs)
    return files, {
        "max_abs_slope_noiseless": runs[0][1].max_abs_slope,
        "max_abs_slope_noisy": runs[1][1].max_abs_slope,
    }


def stage_fig12cd(cfg, out, workers):
    an, ex = cfg.analysis, cfg.extraction
    d = sensitivity_offset(cfg.authentic_process, an.offsets_volts, an.drift_chips, ex.n, cfg.cof_grid(),
                           ex.repeats, cfg.global_seed, an.drift_sigma_n_volts, workers)
    files = _drift_csv(out, "fig12cd", "offset_volts", [(an.drift_sigma_n_volts, d)])
    return files, {
        "max_abs_span_slope_total": float(np.max(np.abs(d.span_slope("total")))),
        "max_abs_span_slope_p": float(np.max(np.abs(d.span_slope("p")))),
        "max_abs_span_slope_n": float(np.max(np.abs(d.span_slope("n")))),
    }


def stage_fig4(cfg, out, workers):
    an, p = cfg.analysis, cfg.authentic_process
    rows = ler_variance_profile(p.geometry, an.ler_area_scales, [e * NM for e in an.ler_eta_nm],
                                [s * NM for s in an.ler_sigma_nm], an.ler_samples, an.ler_segments, cfg.global_seed)
    write_variance_csv(rows, out / "ler_variance.csv")
    return ["ler_variance.csv"], {"cells": len(rows), "failed_cells": sum(r.failed for r in rows)}


def _ac(cfg, cf_std=None, a_std=None, rho=0.0):
    an = cfg.analysis
    return AcDistribution(
        Gaussian(an.ac_counterfeit_mean, an.ac_counterfeit_std if cf_std is None else cf_std),
        Gaussian(an.ac_authentic_mean, an.ac_authentic_std if a_std is None else a_std),
        p_a=an.p_a,
        rho=rho,
        f_ac_role=an.ac_f_ac_role,
    )


def stage_fig2(cfg, out, workers):
    an = cfg.analysis
    d = _ac(cfg)
    t = ThresholdPair(*an.ac_thresholds)
    af = failure_rate(d, t)
    af_mc, se = mc_failure_rate(d, t, an.mc_samples, cfg.global_seed)
    write_csv(out / "fig2b_oracle.csv", ["t_l", "t_u", "a_f", "a_f_mc", "mc_se"], [[t.t_l, t.t_u, af, af_mc, se]])

    rows = []
    for s in an.ac_authentic_std_sweep:
        best_t, best = optimize_thresholds(_ac(cfg, a_std=s))
        rows.append([s, best_t.t_l, best_t.t_u, best])
    write_csv(out / "fig2b_min_af.csv", ["sigma_ac_given_a", "t_l", "t_u", "a_f_min"], rows)

    rows = []
    tm = ThresholdPair(*an.ac_multi_thresholds)
    for rho in an.ac_multi_rho:
        dm = _ac(cfg, an.ac_multi_counterfeit_std, an.ac_multi_authentic_std, rho)
        best_t, best = optimize_multi_thresholds(dm, 2, an.ac_multi_m)
        q = multi_ac_failure(dm, tm, 2, an.ac_multi_m)
        mc = mc_multi_failure(dm, tm, 2, an.ac_multi_m, an.mc_samples, cfg.global_seed)
        rows.append([rho, best_t.t_l, best_t.t_u, best, tm.t_l, tm.t_u, q.a_f, mc.a_f, mc.se])
    write_csv(out / "fig2c_multi.csv",
              ["rho", "t_l_opt", "t_u_opt", "a_f_min", "t_l_ref", "t_u_ref", "a_f_quadrature", "a_f_mc", "mc_se"], rows)
    return ["fig2b_oracle.csv", "fig2b_min_af.csv", "fig2c_multi.csv"], {"a_f": af, "a_f_mc": af_mc}


def ideal_adc(cfg, process=None, chip_index=0):
    """Converter on a chip from ``process`` (zero mismatch by default)."""
    p = cfg.authentic_process.with_sigma(0.0) if process is None else process
    units = cfg.adc.msb_units
    return SarAdc(cfg.adc, sample_chip(p, units, cfg.global_seed, chip_index, lsb_units=units))


def stage_adc(cfg, out, workers):
    adc = ideal_adc(cfg)
    rows = transfer_curve(adc, ComparatorModel(0.0, 0.0, cfg.global_seed, 0))
    write_transfer_csv(rows, out / "adc_transfer.csv")
    real = ideal_adc(cfg, cfg.authentic_process)
    mrows = transfer_curve(real, ComparatorModel.from_process(cfg.authentic_process, cfg.global_seed, 0))
    write_transfer_csv(mrows, out / "adc_transfer_mismatch.csv")
    return ["adc_transfer.csv", "adc_transfer_mismatch.csv"], {
        "max_abs_error_lsb": max(r[3] for r in rows),
        "max_abs_error_lsb_mismatch": max(r[3] for r in mrows),
    }


def stage_discrimination(cfg, out, workers):
    en, an = cfg.enrollment, cfg.analysis
    auth = cfg.authentic_process
    enrolled = _extract(cfg, auth, range(en.size), workers)
    write_traces(enrolled, out / "traces_enrollment.csv")
    files = ["traces_enrollment.csv"]
    card = enroll(enrolled, en.k_sigma, enrollment_weights(cfg, workers), en.quantile, cfg.authentic, cfg.global_seed)
    save_card(card, out / "card.json")
    files.append("card.json")

    pops = [(cfg.authentic, auth, range(HOLDOUT_BASE, HOLDOUT_BASE + an.holdout_size))]
    for k, name in enumerate(cfg.counterfeit_names):
        base = COUNTERFEIT_BASE + k * COUNTERFEIT_STRIDE
        pops.append((name, cfg.processes[name], range(base, base + an.counterfeit_size)))
    rows, srows, summary = [], [], {}
    for name, proc, idx in pops:
        decisions = [(t.chip_id, authenticate(t, card)) for t in _extract(cfg, proc, idx, workers)]
        acc = float(np.mean([d.accepted for _, d in decisions]))
        for cid, d in decisions:
            rows.append([name, cid, d.d_auth, d.d_auth_weighted, d.per_point_bound_violations, d.verdict])
        srows.append([name, proc.sigma_cu / proc.cu_nominal, len(decisions), acc])
        summary[f"accept_rate_{name}"] = acc
    write_csv(out / "discrimination_decisions.csv",
              ["population", "chip_id", "d_auth", "d_auth_weighted", "bound_violations", "verdict"], rows)
    write_csv(out / "discrimination_summary.csv", ["population", "sigma_cu_rel", "chips", "accept_rate"], srows)
    files += ["discrimination_decisions.csv", "discrimination_summary.csv"]
    summary["d_threshold"] = card.d_threshold
    return files, summary


PRESETS = {
    "populate": [("populate", stage_populate)],
    "extract": [("extract", stage_extract)],
    "fig2": [("failure-analysis", stage_fig2)],
    "fig4": [("ler-variance", stage_fig4)],
    "fig9": [("repeated-sampling", stage_fig9)],
    "fig10": [("n-sweep", stage_fig10)],
    "fig11": [("sensitivity", stage_fig11)],
    "optimize": [("n-sweep", stage_fig10), ("sensitivity", stage_fig11)],
    "fig12ab": [("temperature", stage_fig12ab)],
    "fig12cd": [("offset", stage_fig12cd)],
    "adc": [("adc-verify", stage_adc)],
    "discrimination": [("discrimination", stage_discrimination)],
}


def _utc():
    return datetime.datetime.now(datetime.timezone.utc).isoformat(timespec="seconds")


def run(cfg, preset, out=None, workers=1):
    """Run ``preset`` and return the manifest dict (also written to ``manifest.json``).

    Raises ``StageError`` after writing a manifest with status ``failed`` and
    whatever files the run produced before the failure.
    """
    if preset not in PRESETS:
        raise KeyError(f"unknown preset '{preset}'; choose from {sorted(PRESETS)}")
    out = Path(cfg.output_dir if out is None else out)
    out.mkdir(parents=True, exist_ok=True)
    manifest = {
        "software_version": __version__,
        "preset": preset,
        "config_hash": cfg.hash,
        "seeds": {"global_seed": cfg.global_seed},
        "started_utc": _utc(),
        "stages": [],
        "summary": {},
        "status": "ok",
    }
    failure = None
    for name, fn in PRESETS[preset]:
        t0 = time.perf_counter()
        try:
            files, summary = fn(cfg, out, workers)
        except Exception as e:  # recorded, then re-raised as StageError
            manifest["stages"].append({"name": name, "seconds": time.perf_counter() - t0, "status": "failed"})
            manifest["status"] = "failed"
            manifest["error"] = f"{type(e).__name__}: {e}"
            failure = (name, e)
            break
        manifest["stages"].append({"name": name, "seconds": time.perf_counter() - t0, "status": "ok"})
        manifest["summary"].update(summary)
    # list everything on disk so partial outputs are accounted for too
    on_disk = sorted(f for f in os.listdir(out) if f != MANIFEST and (out / f).is_file())
    manifest["files"] = [{"name": f, "sha256": _sha256(out / f), "bytes": (out / f).stat().st_size} for f in on_disk]
    manifest["finished_utc"] = _utc()
    with open(out / MANIFEST, "w") as fh:
        json.dump(manifest, fh, indent=2, default=_json_default)
        fh.write("\n")
    if failure:
        raise StageError(failure[0], failure[1], manifest) from failure[1]
    return manifest


def _json_default(v):
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.floating,)):
        return float(v)
    if isinstance(v, np.bool_):
        return bool(v)
    raise TypeError(f"not JSON serializable: {type(v).__name__}")
