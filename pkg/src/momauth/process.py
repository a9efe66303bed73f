"""Fabrication process parameters and chip populations."""

import csv
from dataclasses import dataclass, field, replace

import numpy as np

from momauth import _rng

FF = 1e-15
NM = 1e-9


@dataclass(frozen=True)
class Geometry:
    """Facing-line geometry of one MOM finger pair (all lengths in meters)."""

    width: float = 50 * NM
    spacing: float = 50 * NM
    thickness: float = 100 * NM
    line_length: float = 1000 * NM

    def __post_init__(self):
        for name in ("width", "spacing", "thickness", "line_length"):
            if not getattr(self, name) > 0:
                raise ValueError(f"geometry.{name} must be > 0, got {getattr(self, name)}")

    def scaled_area(self, factor):
        """Scale the S x W cross-section by ``factor`` (each side by sqrt)."""
        s = float(np.sqrt(factor))
        return replace(self, width=self.width * s, spacing=self.spacing * s)


@dataclass(frozen=True)
class FabProcess:
    """Parameter set of one fabrication line.

    Capacitances in farads, lengths in meters, voltages in volts, ``tc`` is
    the fractional capacitance change per degree C.  ``cof_series_unit`` is
    the single-stage value of the programmable offset bank.
    """

    cu_nominal: float = 1.0 * FF
    sigma_cu: float = 0.01 * FF
    tc: float = 30e-6
    eta_ler: float = 16 * NM
    sigma_ler: float = 2 * NM
    geometry: Geometry = field(default_factory=Geometry)
    sigma_n: float = float(np.sqrt(250e-18))
    v_offset: float = 0.0
    cof_series_unit: float = 0.1 * FF
    cof_max_stages: int = 32
    cof_mismatch: bool = False
    label: str = "authentic"

    def __post_init__(self):
        if not self.cu_nominal > 0:
            raise ValueError(f"cu_nominal must be > 0, got {self.cu_nominal}")
        if not 0 <= self.sigma_cu < self.cu_nominal:
            raise ValueError(f"sigma_cu must satisfy 0 <= sigma_cu < cu_nominal, got {self.sigma_cu}")
        if not self.sigma_n >= 0:
            raise ValueError(f"sigma_n must be >= 0, got {self.sigma_n}")
        if not self.eta_ler > 0:
            raise ValueError(f"eta_ler must be > 0, got {self.eta_ler}")
        if not self.sigma_ler >= 0:
            raise ValueError(f"sigma_ler must be >= 0, got {self.sigma_ler}")
        if not self.cof_series_unit > 0:
            raise ValueError(f"cof_series_unit must be > 0, got {self.cof_series_unit}")
        if self.cof_max_stages < 1:
            raise ValueError(f"cof_max_stages must be >= 1, got {self.cof_max_stages}")

    def with_sigma(self, sigma_cu, label=None):
        return replace(self, sigma_cu=sigma_cu, label=label or self.label)


def _frozen(a):
    a = np.array(a, dtype=float)
    a.flags.writeable = False
    return a


@dataclass(frozen=True, eq=False)
class ChipInstance:
    """One fabricated device.

    ``cu_p``/``cu_n`` are the two MSB unit-capacitor arrays used for
    authentication.  ``lsb_p``/``lsb_n`` hold the remaining CDAC units (empty
    unless the chip was sampled for ADC use).  The offset capacitance for a
    programmed ratio ``r`` of the design unit is ``r * cof_scale``.
    """

    cu_p: np.ndarray
    cu_n: np.ndarray
    cof_series_unit: float
    cof_series_ratio: float
    chip_id: int = 0
    seed_lineage: tuple = (0, 0)
    lsb_p: np.ndarray = field(default_factory=lambda: _frozen([]))
    lsb_n: np.ndarray = field(default_factory=lambda: _frozen([]))
    redraws: int = 0

    def __post_init__(self):
        for name in ("cu_p", "cu_n", "lsb_p", "lsb_n"):
            object.__setattr__(self, name, _frozen(getattr(self, name)))
        if self.cu_p.ndim != 1 or self.cu_p.shape != self.cu_n.shape or len(self.cu_p) == 0:
            raise ValueError("cu_p and cu_n must be non-empty 1-D arrays of equal length")
        if self.lsb_p.shape != self.lsb_n.shape:
            raise ValueError("lsb_p and lsb_n must have equal length")
        caps = np.concatenate([self.cu_p, self.cu_n, self.lsb_p, self.lsb_n, [self.cof_series_unit]])
        if not np.all(caps > 0):
            raise ValueError("every capacitance must be > 0")

    @property
    def n(self):
        return len(self.cu_p)

    @property
    def cof_scale(self):
        # capacitance represented by a grid ratio of 1.0
        return self.cof_series_unit / self.cof_series_ratio

    def __eq__(self, other):
        if not isinstance(other, ChipInstance):
            return NotImplemented
        return (
            self.chip_id == other.chip_id
            and self.cof_series_unit == other.cof_series_unit
            and self.cof_series_ratio == other.cof_series_ratio
            and all(
                np.array_equal(getattr(self, k), getattr(other, k))
                for k in ("cu_p", "cu_n", "lsb_p", "lsb_n")
            )
        )

    __hash__ = None


def _truncated_normal(rng, mean, sigma, size):
    x = mean + sigma * rng.standard_normal(size)
    redraws = 0
    bad = x <= 0
    while bad.any():
        k = int(bad.sum())
        redraws += k
        x[bad] = mean + sigma * rng.standard_normal(k)
        bad = x <= 0
    return x, redraws


def sample_chip(process, n, global_seed, chip_index, lsb_units=0):
    """Draw one chip: ``2 * n`` MSB unit caps i.i.d. N(cu_nominal, sigma_cu^2).

    Non-positive draws are re-drawn; the number of re-draws is kept on the
    chip.  ``lsb_units`` extra units per side are drawn after the MSB arrays
    for the lower CDAC groups.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if lsb_units < 0:
        raise ValueError(f"lsb_units must be >= 0, got {lsb_units}")
    rng = _rng.stream(global_seed, _rng.CHIP, chip_index)
    caps, redraws = _truncated_normal(rng, process.cu_nominal, process.sigma_cu, 2 * n)
    lsb, r2 = _truncated_normal(rng, process.cu_nominal, process.sigma_cu, 2 * lsb_units)
    series = process.cof_series_unit
    if process.cof_mismatch:
        rel = process.sigma_cu / process.cu_nominal
        s, r3 = _truncated_normal(rng, series, rel * series, 1)
        series, redraws = float(s[0]), redraws + r3
    return ChipInstance(
        cu_p=caps[:n],
        cu_n=caps[n:],
        lsb_p=lsb[:lsb_units],
        lsb_n=lsb[lsb_units:],
        cof_series_unit=series,
        cof_series_ratio=process.cof_series_unit / process.cu_nominal,
        chip_id=int(chip_index),
        seed_lineage=(int(global_seed), int(chip_index)),
        redraws=redraws + r2,
    )


def apply_temperature(chip, process, t, t0=27.0):
    """Return a copy of ``chip`` with every capacitance scaled by 1 + tc*(t - t0)."""
    scale = 1.0 + process.tc * (t - t0)
    if not scale > 0:
        raise ValueError(f"temperature scale factor must be > 0, got {scale}")
    return replace(
        chip,
        cu_p=chip.cu_p * scale,
        cu_n=chip.cu_n * scale,
        lsb_p=chip.lsb_p * scale,
        lsb_n=chip.lsb_n * scale,
        cof_series_unit=chip.cof_series_unit * scale,
    )


POPULATION_COLUMNS = ("chip_id", "array", "index", "capacitance_f")
_ARRAYS = ("cu_p", "cu_n", "lsb_p", "lsb_n")


def write_population(chips, path):
    """One row per unit capacitor; ``array`` is cu_p, cu_n, lsb_p or lsb_n."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(POPULATION_COLUMNS)
        for chip in chips:
            for name in _ARRAYS:
                for i, c in enumerate(getattr(chip, name)):
                    w.writerow([chip.chip_id, name, i, f"{c:.8e}"])


def read_population(path, process):
    """Chips from a population CSV; the offset bank comes from ``process``.

    The 9-digit text values round-trip to within 5e-9 relative.
    """
    chips = {}
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != POPULATION_COLUMNS:
            raise ValueError(f"unexpected population columns {reader.fieldnames}")
        for row in reader:
            if row["array"] not in _ARRAYS:
                raise ValueError(f"unknown array name {row['array']!r}")
            arrays = chips.setdefault(int(row["chip_id"]), {k: [] for k in _ARRAYS})
            arrays[row["array"]].append(float(row["capacitance_f"]))
    return [
        ChipInstance(
            cof_series_unit=process.cof_series_unit,
            cof_series_ratio=process.cof_series_unit / process.cu_nominal,
            chip_id=cid,
            **arrays,
        )
        for cid, arrays in chips.items()
    ]
