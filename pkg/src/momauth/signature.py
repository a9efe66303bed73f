"""Mismatch signature extraction: N_AC as a function of the offset capacitance.

For every grid point the offset capacitance is first attached to the N input
(a pair counts when the comparator says P > N) and then to the P input (a
pair counts when it says P < N).  Each directional decision is the majority
over ``repeats`` comparisons.
"""

import csv
from dataclasses import dataclass, field

import numpy as np

from momauth.frontend import ComparatorModel
from momauth.parallel import pmap
from momauth.process import apply_temperature, sample_chip

TRACE_COLUMNS = ("chip_id", "cof_over_cu", "n_ac", "normalized", "repeats", "seed")

# offset-bank stage counts for the default grid, with a Cu/10 series unit:
# Cu/200 ... Cu/20, roughly log-spaced and hitting Cu/100 and Cu/50 exactly
DEFAULT_STAGES = (20, 17, 14, 12, 10, 8, 7, 6, 5, 4, 3, 2)

COUNT_RULES = ("two-phase", "union")


def default_cof_grid(series_ratio=0.1, stages=DEFAULT_STAGES):
    """Ascending C_OF / Cu ratios realized by ``series_ratio / k`` for each stage count."""
    return np.sort(series_ratio / np.asarray(stages, dtype=float))


@dataclass(eq=False)
class SignatureTrace:
    cof_grid: np.ndarray
    counts: np.ndarray
    n_pairs: int
    repeats: int
    chip_id: int = 0
    extraction_seed: int = 0
    counts_p: np.ndarray = field(default=None)
    counts_n: np.ndarray = field(default=None)
    count_rule: str = "two-phase"

    def __post_init__(self):
        self.cof_grid = np.asarray(self.cof_grid, dtype=float)
        self.counts = np.asarray(self.counts, dtype=np.int64)
        if len(self.counts) != len(self.cof_grid):
            raise ValueError("counts and cof_grid lengths differ")
        if self.repeats < 1 or self.repeats % 2 == 0:
            raise ValueError(f"repeats must be odd and >= 1, got {self.repeats}")
        cap = self.n_pairs * (2 if self.count_rule == "two-phase" else 1)
        if np.any(self.counts < 0) or np.any(self.counts > cap):
            raise ValueError(f"counts must lie in [0, {cap}]")

    @property
    def normalized(self):
        return self.counts / self.n_pairs

    def __eq__(self, other):
        if not isinstance(other, SignatureTrace):
            return NotImplemented
        return (
            np.array_equal(self.cof_grid, other.cof_grid)
            and np.array_equal(self.counts, other.counts)
            and (self.n_pairs, self.repeats, self.count_rule) == (other.n_pairs, other.repeats, other.count_rule)
        )

    __hash__ = None


def same_grid(a, b):
    """Grids agree to the precision of the 9-digit CSV text form."""
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    return a.shape == b.shape and bool(np.allclose(a, b, rtol=1e-8, atol=0.0))


def majority_vote(bits):
    bits = np.asarray(bits)
    if bits.ndim != 1 or len(bits) % 2 == 0:
        raise ValueError("majority_vote needs an odd number of bits")
    return int(2 * bits.sum() > len(bits))


def extract_signature(chip, model, cof_grid, repeats=15, v_ref=1.0, extraction_seed=0, count_rule="two-phase"):
    """Run the extraction protocol on ``chip`` for every ``cof_grid`` ratio.

    ``cof_grid`` holds offset capacitances as ratios of the design unit
    capacitance; the chip maps them to farads through its offset bank.
    ``count_rule='two-phase'`` keeps one counter across both phases, so a pair can
    add up to 2 under noise; ``'union'`` counts a pair at most once.
    """
    grid = np.asarray(cof_grid, dtype=float)
    if grid.ndim != 1 or len(grid) == 0:
        raise ValueError("cof_grid must be a non-empty 1-D sequence")
    if np.any(grid < 0) or np.any(np.diff(grid) < 0):
        raise ValueError("cof_grid must be ascending and non-negative")
    if repeats < 1 or repeats % 2 == 0:
        raise ValueError(f"repeats must be odd and >= 1, got {repeats}")
    if count_rule not in COUNT_RULES:
        raise ValueError(f"count_rule must be one of {COUNT_RULES}")

    cp, cn = chip.cu_p, chip.cu_n
    sp, sn = cp.sum(), cn.sum()
    vp_bare = cp * v_ref / sp
    vn_bare = cn * v_ref / sn
    off = model.v_offset
    half = repeats // 2
    counts, counts_p, counts_n = [], [], []
    for j, r in enumerate(grid):
        cof = r * chip.cof_scale
        noise = model.noise_block((extraction_seed, j), (repeats, chip.n, 2))
        # C_OF on the P input: pair counts when the comparator output is zero
        vp_loaded = (cp + cof) * v_ref / (sp + cof)
        fires_p = (vp_loaded + off + noise[:, :, 0] < vn_bare).sum(axis=0) > half
        # C_OF on the N input: pair counts when the comparator output is one
        vn_loaded = (cn + cof) * v_ref / (sn + cof)
        fires_n = (vn_loaded + noise[:, :, 1] < vp_bare + off).sum(axis=0) > half
        cnt_p, cnt_n = int(fires_p.sum()), int(fires_n.sum())
        counts_p.append(cnt_p)
        counts_n.append(cnt_n)
        counts.append(cnt_p + cnt_n if count_rule == "two-phase" else int((fires_p | fires_n).sum()))
    return SignatureTrace(
        cof_grid=grid,
        counts=np.array(counts),
        n_pairs=chip.n,
        repeats=repeats,
        chip_id=chip.chip_id,
        extraction_seed=extraction_seed,
        counts_p=np.array(counts_p),
        counts_n=np.array(counts_n),
        count_rule=count_rule,
    )


def average_trace(traces, k_sigma=3.0):
    """Pointwise mean and population std of normalized traces, with mean +- k_sigma*std bounds."""
    if len(traces) < 2:
        raise ValueError("average_trace needs at least 2 traces")
    ref = traces[0]
    for t in traces[1:]:
        if not same_grid(t.cof_grid, ref.cof_grid) or t.repeats != ref.repeats:
            raise ValueError("traces must share the same cof grid and repeat count")
    return trace_moments(np.stack([t.normalized for t in traces]), k_sigma)


def trace_moments(x, k_sigma=3.0):
    """Mean, population std and bounds over the rows of a trace matrix."""
    # columns with no spread are taken exactly, free of mean() round-off
    flat = np.ptp(x, axis=0) == 0
    avg = np.where(flat, x[0], x.mean(axis=0))
    std = np.where(flat, 0.0, x.std(axis=0))
    bounds = np.stack([avg - k_sigma * std, avg + k_sigma * std], axis=1)
    return avg, std, bounds


def trace_matrix(traces):
    return np.stack([t.normalized for t in traces])


def _extract_one(args):
    (process, n, idx, grid, repeats, global_seed, v_ref, extraction_seed,
     count_rule, temperature, t0, sigma_n, v_offset) = args
    chip = sample_chip(process, n, global_seed, idx)
    if temperature is not None:
        chip = apply_temperature(chip, process, temperature, t0)
    model = ComparatorModel(
        process.sigma_n if sigma_n is None else sigma_n,
        process.v_offset if v_offset is None else v_offset,
        global_seed,
        chip.chip_id,
    )
    return extract_signature(chip, model, grid, repeats, v_ref, extraction_seed, count_rule)


def extract_population(process, chip_indices, n=256, cof_grid=None, repeats=15, global_seed=0, v_ref=1.0,
                       extraction_seed=0, count_rule="two-phase", temperature=None, t0=27.0,
                       sigma_n=None, v_offset=None, workers=1):
    """Sample and extract every chip in ``chip_indices``; results are schedule-independent.

    The comparator noise stream of each chip is keyed by its chip index.
    ``sigma_n``/``v_offset`` override the process values when given.
    """
    grid = default_cof_grid() if cof_grid is None else np.asarray(cof_grid, dtype=float)
    jobs = [
        (process, n, int(i), grid, repeats, global_seed, v_ref, extraction_seed,
         count_rule, temperature, t0, sigma_n, v_offset)
        for i in chip_indices
    ]
    return pmap(_extract_one, jobs, workers)


def write_traces(traces, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_COLUMNS)
        for t in traces:
            for r, c, x in zip(t.cof_grid, t.counts, t.normalized):
                w.writerow([t.chip_id, f"{r:.8e}", int(c), f"{x:.8e}", t.repeats, t.extraction_seed])


def read_traces(path, n_pairs=None, count_rule="two-phase"):
    """Read a trace CSV back; ``n_pairs`` is inferred from non-zero rows when omitted."""
    rows = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != TRACE_COLUMNS:
            raise ValueError(f"unexpected trace columns {reader.fieldnames}")
        for row in reader:
            rows.setdefault(int(row["chip_id"]), []).append(row)
    traces = []
    for chip_id, rs in rows.items():
        counts = [int(r["n_ac"]) for r in rs]
        n = n_pairs
        if n is None:
            nz = [(int(r["n_ac"]), float(r["normalized"])) for r in rs if int(r["n_ac"]) > 0]
            if not nz:
                raise ValueError(f"cannot infer n_pairs for chip {chip_id}; pass n_pairs")
            n = int(round(nz[0][0] / nz[0][1]))
        traces.append(SignatureTrace(
            cof_grid=[float(r["cof_over_cu"]) for r in rs],
            counts=counts,
            n_pairs=n,
            repeats=int(rs[0]["repeats"]),
            chip_id=chip_id,
            extraction_seed=int(rs[0]["seed"]),
            count_rule=count_rule,
        ))
    return traces
