"""Behavioral comparator and programmable offset-capacitor bank."""

import math
from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from momauth import _rng


@dataclass
class ComparatorModel:
    """Comparator with Gaussian input-referred noise and a residual offset.

    Sequential use (``compare``) consumes draws from a cursor; block use
    (``noise_block``) reads keyed blocks and never touches the cursor, so
    extraction leaves a later conversion's noise untouched.
    """

    sigma_n: float = float(np.sqrt(250e-18))
    v_offset: float = 0.0
    global_seed: int = 0
    stream_id: int = 0
    cursor: int = field(default=0, compare=False)

    def __post_init__(self):
        if not self.sigma_n >= 0:
            raise ValueError(f"sigma_n must be >= 0, got {self.sigma_n}")

    @classmethod
    def from_process(cls, process, global_seed, stream_id):
        return cls(process.sigma_n, process.v_offset, global_seed, stream_id)

    @property
    def seed_lineage(self):
        return (self.global_seed, self.stream_id)

    def draw(self, index):
        """Noise voltage of sequential draw ``index``."""
        if self.sigma_n == 0:
            return 0.0
        g = _rng.stream(self.global_seed, _rng.ADC, self.stream_id, index)
        return self.sigma_n * float(g.standard_normal())

    def noise_block(self, key, shape):
        """Standard-normal block for ``key`` scaled by sigma_n.

        Blocks are filled in C order from one keyed stream, so a block whose
        leading axis is shorter is a prefix of a longer one.
        """
        if self.sigma_n == 0:
            return np.zeros(shape)
        g = _rng.stream(self.global_seed, _rng.NOISE, self.stream_id, *key)
        return self.sigma_n * g.standard_normal(shape)


@dataclass(frozen=True)
class OffsetCapBank:
    """``k`` equal series capacitors of value ``series_unit``."""

    series_unit: float
    max_stages: int
    k: int = 1
    polarity: Literal["P", "N", "detached"] = "N"

    def __post_init__(self):
        if self.polarity not in ("P", "N", "detached"):
            raise ValueError(f"unknown polarity {self.polarity!r}")
        if self.polarity != "detached" and not 1 <= self.k <= self.max_stages:
            raise ValueError(f"active stages must be in [1, {self.max_stages}], got {self.k}")


def cof_value(bank):
    if bank.polarity == "detached":
        raise ValueError("offset bank is detached")
    if bank.k < 1:
        raise ValueError("offset bank needs at least one active stage")
    return bank.series_unit / bank.k


def _check_finite(*vals):
    for v in vals:
        if not math.isfinite(v):
            raise ValueError(f"non-finite voltage {v}")


def compare(model, v_p, v_n):
    """1 iff v_p + v_offset + noise > v_n. Consumes one draw; ties give 0."""
    _check_finite(v_p, v_n)
    noise = model.draw(model.cursor)
    model.cursor += 1
    return int(v_p + model.v_offset + noise > v_n)


def pair_voltages(cu_x, sum_x, cu_y, sum_y, cof, v_ref):
    """Top-plate voltages for one activated pair with ``cof`` on side X."""
    left = (cu_x + cof) * v_ref / (sum_x + cof)
    right = cu_y * v_ref / sum_y
    return left, right


def mismatch_compare(chip, i, cof, cof_side, model, v_ref=1.0, noise=None):
    """Detect whether pair ``i`` (1-based) differs by more than ``cof``.

    With ``cof`` on side X (the other side Y) this evaluates
    ``(C_X,i + cof) V / (sum C_X + cof) + v_n < C_Y,i V / sum C_Y`` with the
    residual offset added to the P input.  Returns 1 iff it holds (strictly).
    ``noise`` overrides the sequential draw.
    """
    if not 1 <= i <= chip.n:
        raise IndexError(f"pair index {i} out of range 1..{chip.n}")
    if cof < 0:
        raise ValueError(f"cof must be >= 0, got {cof}")
    if noise is None:
        noise = model.draw(model.cursor)
        model.cursor += 1
    if cof_side == "P":
        left, right = pair_voltages(chip.cu_p[i - 1], chip.cu_p.sum(), chip.cu_n[i - 1], chip.cu_n.sum(), cof, v_ref)
        return int(left + model.v_offset + noise < right)
    if cof_side == "N":
        left, right = pair_voltages(chip.cu_n[i - 1], chip.cu_n.sum(), chip.cu_p[i - 1], chip.cu_p.sum(), cof, v_ref)
        return int(left + noise < right + model.v_offset)
    raise ValueError(f"cof_side must be 'P' or 'N', got {cof_side!r}")
