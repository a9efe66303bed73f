"""Line-edge-roughness driven MOM capacitance variability.

Each facing edge is a stationary Gaussian process with autocorrelation
``exp(-|dx| / eta_ler)``, sampled on ``segments`` points along the line.  On
a uniform grid that process is exactly an AR(1) recursion with coefficient
``exp(-dx / eta_ler)``, which is what ``_edges`` runs (via ``lfilter``).
The capacitance is the per-segment parallel-plate sum over the local gap.
"""

import csv
import itertools
from dataclasses import dataclass

import numpy as np
from scipy.signal import lfilter

from momauth import _rng

EPS0 = 8.8541878128e-12
K_OXIDE = 3.9

VARIANCE_COLUMNS = ("geometry_scale", "eta_ler_nm", "sigma_ler_nm", "norm_variance", "samples", "seed")


class EdgeCollisionError(ValueError):
    """Raised when rough edges touch (local gap <= 0)."""


def _edges(rng, count, segments, dx, eta, sigma):
    a = np.exp(-dx / eta)
    z = rng.standard_normal((count, segments))
    z[:, 0] *= sigma
    z[:, 1:] *= sigma * np.sqrt(1.0 - a * a)
    return lfilter([1.0], [1.0, -a], z, axis=1)


def ler_capacitance_samples(geometry, eta_ler, sigma_ler, segments=256, seed=0, count=1, permittivity=None):
    """Vectorized form of :func:`ler_capacitance_sample`; returns ``count`` capacitances."""
    if segments < 16:
        raise ValueError(f"segments must be >= 16, got {segments}")
    if not eta_ler > 0:
        raise ValueError(f"eta_ler must be > 0, got {eta_ler}")
    if not 0 <= sigma_ler < geometry.spacing / 2:
        raise ValueError(f"sigma_ler must be in [0, spacing/2), got {sigma_ler}")
    eps = K_OXIDE * EPS0 if permittivity is None else permittivity
    dx = geometry.line_length / segments
    if sigma_ler == 0:
        gap = np.full((count, segments), geometry.spacing)
    else:
        rng = _rng.stream(seed, _rng.LER)
        e1 = _edges(rng, count, segments, dx, eta_ler, sigma_ler)
        e2 = _edges(rng, count, segments, dx, eta_ler, sigma_ler)
        gap = geometry.spacing - e1 + e2
    if np.any(gap <= 0):
        raise EdgeCollisionError("rough edges collide: local gap <= 0")
    return eps * geometry.thickness * np.sum(dx / gap, axis=1)


def ler_capacitance_sample(geometry, eta_ler, sigma_ler, segments=256, seed=0):
    """One rough-edge capacitance sample (farads), deterministic in ``seed``."""
    return float(ler_capacitance_samples(geometry, eta_ler, sigma_ler, segments, seed, count=1)[0])


@dataclass
class VarianceCell:
    geometry_scale: float
    eta_ler: float
    sigma_ler: float
    norm_variance: float
    samples: int
    seed: int
    failed: bool = False


def ler_variance_profile(geometry, geometry_grid, eta_grid, sigma_grid, samples_per_point=1000,
                         segments=256, global_seed=0):
    """Normalized variance var(C)/mean(C)^2 for every (scale, eta, sigma) cell.

    ``geometry_grid`` holds S x W area scale factors applied to ``geometry``.
    Cells whose edges collide are flagged (``failed``, NaN variance) and the
    sweep carries on.
    """
    if not (len(geometry_grid) and len(eta_grid) and len(sigma_grid)):
        raise ValueError("all grids must be non-empty")
    if samples_per_point < 100:
        raise ValueError(f"samples_per_point must be >= 100, got {samples_per_point}")
    rows = []
    cells = itertools.product(geometry_grid, eta_grid, sigma_grid)
    for idx, (scale, eta, sigma) in enumerate(cells):
        seed = int(_rng.stream(global_seed, _rng.SWEEP, idx).integers(2**63))
        try:
            c = ler_capacitance_samples(geometry.scaled_area(scale), eta, sigma, segments, seed,
                                        count=samples_per_point)
        except (EdgeCollisionError, ValueError):
            rows.append(VarianceCell(scale, eta, sigma, float("nan"), samples_per_point, seed, failed=True))
            continue
        # identical samples (flat edges) have exactly zero spread; skip var() round-off
        nv = 0.0 if np.ptp(c) == 0 else float(c.var() / c.mean() ** 2)
        rows.append(VarianceCell(scale, eta, sigma, nv, samples_per_point, seed))
    return rows


def write_variance_csv(rows, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(VARIANCE_COLUMNS)
        for r in rows:
            w.writerow([f"{r.geometry_scale:.8e}", f"{r.eta_ler / 1e-9:.8e}", f"{r.sigma_ler / 1e-9:.8e}",
                        f"{r.norm_variance:.8e}", r.samples, r.seed])
