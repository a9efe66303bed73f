"""Differential SAR ADC with monotonic (downward) capacitor switching.

Per side the CDAC is built from the chip's unit capacitors in binary groups
of 2^(bits-2), ..., 2, 1, 1 units.  The MSB group is the chip's ``cu_p`` /
``cu_n`` array (the one authentication reads); the lower groups come from
``lsb_p`` / ``lsb_n``.  The last unit is never switched.
"""

import csv
from contextlib import contextmanager
from dataclasses import dataclass

import numpy as np

from momauth.frontend import compare
from momauth.signature import extract_signature

TRANSFER_COLUMNS = ("v_diff", "code_actual", "code_ideal", "abs_error_lsb")


@dataclass(frozen=True)
class AdcConfig:
    bits: int = 10
    v_ref: float = 1.0
    v_cm: float = 0.5

    def __post_init__(self):
        if self.bits < 2:
            raise ValueError(f"bits must be >= 2, got {self.bits}")

    @property
    def msb_units(self):
        return 2 ** (self.bits - 2)

    @property
    def group_sizes(self):
        # switchable groups MSB first, then the never-switched dummy unit
        return [2 ** k for k in range(self.bits - 2, -1, -1)] + [1]


@dataclass(frozen=True)
class ConversionRecord:
    code: int
    dac_state_sequence: tuple
    comparator_decisions: tuple
    top_plate_voltages: tuple


def switching_trace_equal(record_a, record_b):
    if len(record_a.comparator_decisions) != len(record_b.comparator_decisions):
        raise ValueError("records come from converters of different resolution")
    return (
        record_a.dac_state_sequence == record_b.dac_state_sequence
        and record_a.comparator_decisions == record_b.comparator_decisions
    )


def ideal_code(v_diff, bits, v_ref):
    """Ideal offset-binary quantizer over [-v_ref, v_ref]."""
    code = np.floor((np.asarray(v_diff, dtype=float) / v_ref + 1.0) * 2 ** (bits - 1))
    return np.clip(code, 0, 2**bits - 1).astype(int)


class SarAdc:
    """Converter bound to one chip; holds the bottom-plate switch state.

    ``bottom_p`` / ``bottom_n`` hold one entry per group (1 = V_ref, 0 = ground).
    """

    def __init__(self, cfg, chip):
        if chip.n != cfg.msb_units:
            raise ValueError(f"chip MSB array has {chip.n} units, {cfg.bits}-bit CDAC needs {cfg.msb_units}")
        if len(chip.lsb_p) != cfg.msb_units:
            raise ValueError(f"chip needs {cfg.msb_units} lower CDAC units per side, has {len(chip.lsb_p)}")
        self.cfg = cfg
        self.chip = chip
        self.cap_p = self._groups(chip.cu_p, chip.lsb_p)
        self.cap_n = self._groups(chip.cu_n, chip.lsb_n)
        self.bottom_p = np.ones(cfg.bits, dtype=int)
        self.bottom_n = np.ones(cfg.bits, dtype=int)

    def _groups(self, msb, lsb):
        caps = [msb.sum()]
        start = 0
        for size in self.cfg.group_sizes[1:]:
            caps.append(lsb[start:start + size].sum())
            start += size
        return np.array(caps)

    def state(self):
        return (tuple(int(b) for b in self.bottom_p), tuple(int(b) for b in self.bottom_n))

    def convert(self, v_ip, v_in, model):
        cfg = self.cfg
        for v in (v_ip, v_in):
            if not 0 <= v <= cfg.v_ref:
                raise ValueError(f"input {v} outside [0, {cfg.v_ref}]")
        # sampling: top plates track the inputs, bottom plates at V_ref
        self.bottom_p[:] = 1
        self.bottom_n[:] = 1
        tot_p, tot_n = self.cap_p.sum(), self.cap_n.sum()
        vp, vn = float(v_ip), float(v_in)
        states, decisions, volts = [], [], []
        for step in range(cfg.bits):
            states.append(self.state())
            volts.append((vp, vn))
            d = compare(model, vp, vn)
            decisions.append(d)
            if step == cfg.bits - 1:
                break
            # switch this step's group on the higher side from V_ref to ground
            if d:
                self.bottom_p[step] = 0
                vp -= cfg.v_ref * self.cap_p[step] / tot_p
            else:
                self.bottom_n[step] = 0
                vn -= cfg.v_ref * self.cap_n[step] / tot_n
        code = 0
        for d in decisions:
            code = (code << 1) | d
        return ConversionRecord(code, tuple(states), tuple(decisions), tuple(volts))

    @contextmanager
    def authentication_mode(self):
        """Discharge the array for signature extraction and restore the switch state afterwards."""
        saved_p, saved_n = self.bottom_p.copy(), self.bottom_n.copy()
        try:
            self.bottom_p[:] = 0
            self.bottom_n[:] = 0
            yield self
        finally:
            self.bottom_p[:] = saved_p
            self.bottom_n[:] = saved_n

    def extract_signature(self, model, cof_grid, repeats=15, extraction_seed=0, count_rule="two-phase"):
        with self.authentication_mode():
            return extract_signature(self.chip, model, cof_grid, repeats, self.cfg.v_ref, extraction_seed, count_rule)


def transfer_curve(adc, model, points=None):
    """Differential ramp over [-v_ref, v_ref] around v_cm; returns rows of TRANSFER_COLUMNS."""
    cfg = adc.cfg
    points = 2**cfg.bits if points is None else points
    v_diff = -cfg.v_ref + (np.arange(points) + 0.5) * (2 * cfg.v_ref / points)
    rows = []
    for vd in v_diff:
        vip = min(max(cfg.v_cm + vd / 2, 0.0), cfg.v_ref)
        vin = min(max(cfg.v_cm - vd / 2, 0.0), cfg.v_ref)
        rec = adc.convert(vip, vin, model)
        ideal = int(ideal_code(vip - vin, cfg.bits, cfg.v_ref))
        rows.append((vip - vin, rec.code, ideal, abs(rec.code - ideal) * 1.0))
    return rows


def write_transfer_csv(rows, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRANSFER_COLUMNS)
        for vd, code, ideal, err in rows:
            w.writerow([f"{vd:.8e}", code, ideal, f"{err:.8e}"])
