"""Enrollment into an AC card and distance-based authentication."""

import json
from dataclasses import dataclass

import numpy as np

from momauth.signature import average_trace, same_grid, trace_moments

SCHEMA_VERSION = 1

# canonical order of keys in a card file; files are byte-comparable
CARD_KEYS = (
    "schema_version",
    "process_label",
    "created_seed",
    "enrollment_size",
    "repeats",
    "k_sigma",
    "d_threshold",
    "degenerate",
    "cof_grid",
    "avg_trace",
    "std_trace",
    "weights",
)


class CardFormatError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class ACCard:
    """What the vendor ships: average trace, spread, weights and decision threshold.

    Weights sum to the grid length.  ``degenerate`` marks a card enrolled from
    identical traces (zero spread); it is only fit for synthetic tests.
    """

    cof_grid: np.ndarray
    avg_trace: np.ndarray
    std_trace: np.ndarray
    weights: np.ndarray
    d_threshold: float
    k_sigma: float = 3.0
    enrollment_size: int = 0
    process_label: str = ""
    created_seed: int = 0
    repeats: int = 1
    degenerate: bool = False
    schema_version: int = SCHEMA_VERSION

    def __post_init__(self):
        for name in ("cof_grid", "avg_trace", "std_trace", "weights"):
            a = np.array(getattr(self, name), dtype=float)
            a.flags.writeable = False
            object.__setattr__(self, name, a)
        g = len(self.cof_grid)
        if not (len(self.avg_trace) == len(self.std_trace) == len(self.weights) == g):
            raise ValueError("grid, avg, std and weights must have equal length")
        if np.any(self.weights < 0):
            raise ValueError("weights must be non-negative")
        if not self.degenerate and not self.d_threshold > 0:
            raise ValueError(f"d_threshold must be > 0, got {self.d_threshold}")

    def to_dict(self):
        d = {
            "schema_version": self.schema_version,
            "process_label": self.process_label,
            "created_seed": int(self.created_seed),
            "enrollment_size": int(self.enrollment_size),
            "repeats": int(self.repeats),
            "k_sigma": float(self.k_sigma),
            "d_threshold": float(self.d_threshold),
            "degenerate": bool(self.degenerate),
            "cof_grid": [float(x) for x in self.cof_grid],
            "avg_trace": [float(x) for x in self.avg_trace],
            "std_trace": [float(x) for x in self.std_trace],
            "weights": [float(x) for x in self.weights],
        }
        return {k: d[k] for k in CARD_KEYS}

    def dumps(self):
        return json.dumps(self.to_dict(), indent=2) + "\n"

    @classmethod
    def from_dict(cls, d):
        if "schema_version" not in d:
            raise CardFormatError("card is missing schema_version")
        if d["schema_version"] != SCHEMA_VERSION:
            raise CardFormatError(f"unsupported card schema_version {d['schema_version']}")
        unknown = set(d) - set(CARD_KEYS)
        if unknown:
            raise CardFormatError(f"unknown card fields: {sorted(unknown)}")
        missing = set(CARD_KEYS) - set(d)
        if missing:
            raise CardFormatError(f"missing card fields: {sorted(missing)}")
        return cls(**d)

    @classmethod
    def loads(cls, text):
        return cls.from_dict(json.loads(text))


def save_card(card, path):
    with open(path, "w") as fh:
        fh.write(card.dumps())


def load_card(path):
    with open(path) as fh:
        return ACCard.loads(fh.read())


@dataclass(frozen=True)
class AuthDecision:
    verdict: str
    d_auth: float
    d_auth_weighted: float
    per_point_bound_violations: int

    @property
    def accepted(self):
        return self.verdict == "accept"


def _deviation(trace, card):
    x = trace.normalized if hasattr(trace, "normalized") else np.asarray(trace, dtype=float)
    if hasattr(trace, "cof_grid") and not same_grid(trace.cof_grid, card.cof_grid):
        raise ValueError("trace grid does not match the card grid")
    if x.shape[-1] != len(card.avg_trace):
        raise ValueError("trace length does not match the card grid")
    return x - card.avg_trace


def weighted_distance(x, avg, weights):
    """Row-wise sqrt(sum_j w_j (x_j - avg_j)^2) for a trace matrix ``x``."""
    weights = np.asarray(weights, dtype=float)
    if np.any(weights < 0):
        raise ValueError("weights must be non-negative")
    dev = np.asarray(x, dtype=float) - avg
    return np.sqrt(np.sum(weights * dev**2, axis=-1))


def d_auth(trace, card):
    return float(np.sqrt(np.sum(_deviation(trace, card) ** 2)))


def d_auth_weighted(trace, card):
    dev = _deviation(trace, card)
    return float(np.sqrt(np.sum(card.weights * dev**2)))


def authenticate(trace, card):
    """Accept iff the weighted distance is within the card threshold."""
    dev = _deviation(trace, card)
    dw = float(np.sqrt(np.sum(card.weights * dev**2)))
    violations = int(np.sum(np.abs(dev) > card.k_sigma * card.std_trace))
    return AuthDecision(
        verdict="accept" if dw <= card.d_threshold else "reject",
        d_auth=float(np.sqrt(np.sum(dev**2))),
        d_auth_weighted=dw,
        per_point_bound_violations=violations,
    )


def weight_assign(sensitivity):
    """Weights proportional to ``sensitivity``, scaled to sum to the grid length."""
    s = np.asarray(sensitivity, dtype=float)
    if np.any(s < 0):
        raise ValueError("sensitivities must be non-negative")
    total = s.sum()
    if not total > 0:
        raise ValueError("sensitivities are all zero")
    return s * (len(s) / total)


def enroll(traces, k_sigma=3.0, weights=None, threshold_quantile=0.99, process_label="", created_seed=0):
    """Build a card from enrollment traces.

    The threshold is the ``threshold_quantile`` empirical quantile of the
    enrollment traces' own weighted distances to their average.
    """
    if len(traces) < 10:
        raise ValueError(f"enrollment needs at least 10 traces, got {len(traces)}")
    average_trace(traces, k_sigma)  # grid / repeat consistency
    x = np.stack([t.normalized for t in traces])
    return build_card(x, traces[0].cof_grid, k_sigma, weights, threshold_quantile,
                      process_label=process_label, created_seed=created_seed, repeats=traces[0].repeats)


def build_card(x, cof_grid, k_sigma=3.0, weights=None, threshold_quantile=0.99, process_label="",
               created_seed=0, repeats=1):
    """Card from a (chips x grid) matrix of normalized traces."""
    if not 0.5 < threshold_quantile < 1:
        raise ValueError(f"threshold_quantile must be in (0.5, 1), got {threshold_quantile}")
    x = np.asarray(x, dtype=float)
    avg, std, _ = trace_moments(x, k_sigma)
    w = np.ones(x.shape[1]) if weights is None else weight_assign(weights)
    dists = weighted_distance(x, avg, w)
    return ACCard(
        cof_grid=cof_grid,
        avg_trace=avg,
        std_trace=std,
        weights=w,
        d_threshold=float(np.quantile(dists, threshold_quantile)),
        k_sigma=k_sigma,
        enrollment_size=len(x),
        process_label=process_label,
        created_seed=created_seed,
        repeats=repeats,
        degenerate=bool(np.all(std == 0)),
    )
