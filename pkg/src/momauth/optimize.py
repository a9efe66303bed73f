"""Design-space studies on simulated populations.

Array size N, sensitivity of the distance metric to sigma_Cu, and how the
average trace drifts with temperature and comparator offset.  Populations
that are compared reuse chip indices, so they share random numbers and the
finite differences are not swamped by sampling noise.
"""

from dataclasses import dataclass

import numpy as np

from momauth.auth import weight_assign, weighted_distance
from momauth.signature import default_cof_grid, extract_population, trace_matrix


def mismatch_voltage_scale(process, n, v_ref=1.0):
    """Typical comparator input difference caused by unit-cap mismatch, in volts."""
    return v_ref * np.sqrt(2.0) * process.sigma_cu / (n * process.cu_nominal)


def _slopes(x, curves):
    """Finite differences of ``curves`` (one row per x) between consecutive x values.

    A zero step gives a zero slope: equal inputs reuse the same random
    numbers, so their curves coincide.
    """
    x = np.asarray(x, dtype=float)
    curves = np.asarray(curves, dtype=float)
    dx = np.diff(x)
    dy = np.diff(curves, axis=0)
    out = np.zeros_like(dy)
    nz = dx != 0
    out[nz] = dy[nz] / dx[nz, None]
    return out


@dataclass
class NSweep:
    n_values: np.ndarray
    var_d: np.ndarray
    mean_d: np.ndarray
    avg_low: np.ndarray
    avg_high: np.ndarray
    sensitivity: np.ndarray
    n_opt: int


def optimize_n(process, n_candidates, cof_pair=(0.01, 0.02), chips_per_point=100, repeats=15,
               global_seed=0, sigma_n=None, var_factor=1.5, keep_fraction=0.5, workers=1):
    """Sweep the array size N.

    For each N a population is extracted at the two ``cof_pair`` ratios.
    D_Auth is the Euclidean distance of a chip's two-point trace from the
    population average; the sensitivity is the gap between the average
    trace at the two ratios.  ``n_opt`` is the smallest N whose var(D_Auth)
    is within ``var_factor`` of the lowest variance while its sensitivity
    keeps at least ``keep_fraction`` of the largest one; if no N qualifies,
    the lowest-variance N is used.
    """
    ns = np.asarray(n_candidates, dtype=int)
    if ns.ndim != 1 or len(ns) == 0 or np.any(np.diff(ns) <= 0):
        raise ValueError("n_candidates must be strictly ascending")
    if chips_per_point < 50:
        raise ValueError(f"chips_per_point must be >= 50, got {chips_per_point}")
    grid = np.sort(np.asarray(cof_pair, dtype=float))
    var_d, mean_d, lo, hi = [], [], [], []
    for n in ns:
        traces = extract_population(process, range(chips_per_point), int(n), grid, repeats, global_seed,
                                    sigma_n=sigma_n, workers=workers)
        x = trace_matrix(traces)
        avg = x.mean(axis=0)
        d = weighted_distance(x, avg, np.ones(len(grid)))
        var_d.append(d.var())
        mean_d.append(d.mean())
        lo.append(avg[0])
        hi.append(avg[1])
    var_d, lo, hi = np.array(var_d), np.array(lo), np.array(hi)
    sens = np.abs(lo - hi)
    ok = (var_d <= var_factor * var_d.min()) & (sens >= keep_fraction * sens.max())
    n_opt = int(ns[np.argmax(ok)]) if ok.any() else int(ns[np.argmin(var_d)])
    return NSweep(ns, var_d, np.array(mean_d), lo, hi, sens, n_opt)


@dataclass
class SensitivityProfile:
    cof_grid: np.ndarray
    sigma_values: np.ndarray
    point_distance: np.ndarray  # (sigma, cof): mean |x - avg| per point
    absolute: np.ndarray  # d point_distance / d sigma, averaged over steps
    relative: np.ndarray  # (dD / D) / (dsigma / sigma) from the first sigma
    weights: np.ndarray
    mean_d_uniform: np.ndarray  # per sigma, on the evaluation population
    mean_d_weighted: np.ndarray
    change_uniform: float  # relative change of mean D between first and last sigma
    change_weighted: float
    enroll_avg: np.ndarray


def _population(process, sigma, indices, n, grid, repeats, seed, sigma_n, workers):
    proc = process.with_sigma(sigma * process.cu_nominal, process.label)
    return trace_matrix(extract_population(proc, indices, n, grid, repeats, seed, sigma_n=sigma_n,
                                           workers=workers))


def sensitivity_profile(process, sigma_values, n=256, cof_grid=None, enroll_size=100, chips=200, repeats=15,
                        global_seed=0, sigma_n=None, mode="relative", workers=1):
    """Per-point sensitivity of the distance to the enrollment average w.r.t. sigma_Cu.

    ``sigma_values`` are relative (sigma_Cu / Cu); enrollment uses the first.  Sensitivities come from one set of
    ``chips`` chips drawn at every sigma; the weighted-vs-uniform comparison
    is measured on a second, disjoint set so the weights are not scored on
    the data that produced them.  ``mode`` picks which sensitivity feeds the
    weights: ``'relative'`` (elasticity) or ``'absolute'`` (slope).
    Negative sensitivities are clipped to zero before weighting.
    """
    sig = np.asarray(sigma_values, dtype=float)
    if sig.ndim != 1 or len(sig) < 2:
        raise ValueError("need at least two sigma values")
    if mode not in ("relative", "absolute"):
        raise ValueError("mode must be 'relative' or 'absolute'")
    grid = default_cof_grid() if cof_grid is None else np.asarray(cof_grid, dtype=float)
    args = (n, grid, repeats, global_seed, sigma_n, workers)
    enroll_idx = range(enroll_size)
    est_idx = range(enroll_size, enroll_size + chips)
    eval_idx = range(enroll_size + chips, enroll_size + 2 * chips)

    avg = _population(process, sig[0], enroll_idx, *args).mean(axis=0)
    est = [_population(process, s, est_idx, *args) for s in sig]
    dist = np.array([np.abs(x - avg).mean(axis=0) for x in est])
    steps = _slopes(sig, dist)
    absolute = steps.mean(axis=0)
    if sig[-1] == sig[0]:
        relative = np.zeros(len(grid))
    else:
        with np.errstate(divide="ignore", invalid="ignore"):
            relative = (dist[-1] - dist[0]) / dist[0] / ((sig[-1] - sig[0]) / sig[0])
        relative = np.where(np.isfinite(relative), relative, 0.0)
    raw = relative if mode == "relative" else absolute
    clipped = np.clip(raw, 0.0, None)
    weights = weight_assign(clipped) if clipped.sum() > 0 else np.ones(len(grid))

    ev = [_population(process, s, eval_idx, *args) for s in sig]
    uni = np.array([weighted_distance(x, avg, np.ones(len(grid))).mean() for x in ev])
    wtd = np.array([weighted_distance(x, avg, weights).mean() for x in ev])
    return SensitivityProfile(
        cof_grid=grid,
        sigma_values=sig,
        point_distance=dist,
        absolute=absolute,
        relative=relative,
        weights=weights,
        mean_d_uniform=uni,
        mean_d_weighted=wtd,
        change_uniform=float((uni[-1] - uni[0]) / uni[0]),
        change_weighted=float((wtd[-1] - wtd[0]) / wtd[0]),
        enroll_avg=avg,
    )


@dataclass
class DriftProfile:
    cof_grid: np.ndarray
    values: np.ndarray  # temperatures or offsets
    avg: np.ndarray  # (values, cof)
    avg_p: np.ndarray  # per-direction average counts, normalized by N
    avg_n: np.ndarray
    slopes: np.ndarray  # (values - 1, cof)
    slopes_p: np.ndarray
    slopes_n: np.ndarray

    def span_slope(self, which="total"):
        """Slope from the first to the last value (a central difference for symmetric sweeps)."""
        curve = {"total": self.avg, "p": self.avg_p, "n": self.avg_n}[which]
        dx = self.values[-1] - self.values[0]
        return np.zeros(curve.shape[1]) if dx == 0 else (curve[-1] - curve[0]) / dx

    @property
    def max_abs_slope(self):
        return float(np.max(np.abs(self.slopes))) if self.slopes.size else 0.0


def _directional(traces):
    cp = np.stack([t.counts_p / t.n_pairs for t in traces])
    cn = np.stack([t.counts_n / t.n_pairs for t in traces])
    return cp.mean(axis=0), cn.mean(axis=0)


def _drift(values, grid, populations):
    avg, ap, an = [], [], []
    for traces in populations:
        avg.append(trace_matrix(traces).mean(axis=0))
        p, q = _directional(traces)
        ap.append(p)
        an.append(q)
    avg, ap, an = np.array(avg), np.array(ap), np.array(an)
    return DriftProfile(grid, np.asarray(values, dtype=float), avg, ap, an,
                        _slopes(values, avg), _slopes(values, ap), _slopes(values, an))


def sensitivity_temperature(process, t_values, population_size=100, n=256, cof_grid=None, repeats=15,
                            global_seed=0, sigma_n=None, t0=27.0, workers=1):
    """Average-trace drift with temperature for one set of chips.

    The same chips are re-extracted at every temperature.  Comparator noise
    is drawn afresh for each distinct temperature, as a repeated measurement
    would be.
    """
    if len(t_values) < 2:
        raise ValueError("need at least two temperatures")
    grid = default_cof_grid() if cof_grid is None else np.asarray(cof_grid, dtype=float)
    seeds = {t: i for i, t in enumerate(dict.fromkeys(t_values))}
    pops = [
        extract_population(process, range(population_size), n, grid, repeats, global_seed,
                           extraction_seed=seeds[t], temperature=t, t0=t0, sigma_n=sigma_n, workers=workers)
        for t in t_values
    ]
    return _drift(t_values, grid, pops)


def sensitivity_offset(process, v_offset_values, population_size=100, n=256, cof_grid=None, repeats=15,
                       global_seed=0, sigma_n=None, workers=1):
    """Average-trace drift with residual comparator offset (threshold-voltage corner proxy).

    Chips and noise are shared across offsets.  The per-direction averages
    show the two counts moving apart while their sum moves little.
    """
    if len(v_offset_values) < 2:
        raise ValueError("need at least two offsets")
    grid = default_cof_grid() if cof_grid is None else np.asarray(cof_grid, dtype=float)
    pops = [
        extract_population(process, range(population_size), n, grid, repeats, global_seed,
                           sigma_n=sigma_n, v_offset=v, workers=workers)
        for v in v_offset_values
    ]
    return _drift(v_offset_values, grid, pops)
