"""Experiment configuration from a TOML file.

Every physical key carries its unit as a suffix (``_ff``, ``_nm``, ``_volts``,
``_per_c``, ``_c``, ``_rel``).  Unknown keys are rejected, and a known
quantity with the wrong or missing suffix is reported as a unit error with
its full key path.

Process blocks live under ``[process.<name>]``.  ``inherit = "<other>"``
starts from another block and applies the listed overrides.  Exactly one
block has ``role = "authentic"``; a block named ``authentic`` gets that role
unless it says otherwise, every other block is a counterfeit.  With no
process blocks the defaults are an authentic fab at sigma_Cu = 1% and
counterfeits at 0.5%, 2% and 4%.
"""

import copy
import hashlib
import json
from dataclasses import asdict, dataclass, field

try:
    import tomllib
except ImportError:  # Python < 3.11
    import tomli as tomllib

from momauth.process import FF, NM, FabProcess, Geometry
from momauth.sar import AdcConfig
from momauth.signature import COUNT_RULES, DEFAULT_STAGES


class ConfigError(ValueError):
    pass


# key -> (target field, scale to SI); the suffix is part of the key
PROCESS_KEYS = {
    "cu_nominal_ff": ("cu_nominal", FF),
    "sigma_cu_ff": ("sigma_cu", FF),
    "tc_per_c": ("tc", 1.0),
    "eta_ler_nm": ("eta_ler", NM),
    "sigma_ler_nm": ("sigma_ler", NM),
    "width_nm": ("width", NM),
    "spacing_nm": ("spacing", NM),
    "thickness_nm": ("thickness", NM),
    "line_length_nm": ("line_length", NM),
    "sigma_n_volts": ("sigma_n", 1.0),
    "v_offset_volts": ("v_offset", 1.0),
    "cof_series_unit_ff": ("cof_series_unit", FF),
    "cof_max_stages": ("cof_max_stages", None),
    "cof_mismatch": ("cof_mismatch", None),
}
PROCESS_META = ("inherit", "role")
GEOMETRY_FIELDS = ("width", "spacing", "thickness", "line_length")

DEFAULT_COUNTERFEITS = {"counterfeit_0p5": 0.005, "counterfeit_2": 0.02, "counterfeit_4": 0.04}


@dataclass(frozen=True)
class ExtractionConfig:
    n: int = 256
    repeats: int = 15
    chips: int = 100
    cof_stages: tuple = DEFAULT_STAGES
    cof_grid: tuple = ()  # explicit C_OF/Cu ratios; overrides cof_stages when given
    count_rule: str = "two-phase"


@dataclass(frozen=True)
class EnrollmentConfig:
    size: int = 100
    quantile: float = 0.99
    k_sigma: float = 3.0
    weighting: str = "sensitivity"
    sensitivity_mode: str = "relative"


@dataclass(frozen=True)
class AnalysisConfig:
    # discrimination
    holdout_size: int = 200
    counterfeit_size: int = 200
    counterfeits: tuple = ()  # process names; empty means every counterfeit block
    # repeated-sampling study
    repeat_study_chips: int = 100
    repeat_study_repeats: tuple = (1, 15)
    repeat_study_sigma_n_volts: float = 55e-6
    # array-size sweep
    n_candidates: tuple = (32, 64, 128, 256)
    cof_pair: tuple = (0.01, 0.02)
    chips_per_point: int = 100
    n_sweep_sigma_n_volts: float = 200e-6
    var_factor: float = 1.5
    keep_fraction: float = 0.5
    # sigma_Cu sensitivity
    sigma_sweep_rel: tuple = (0.01, 0.015)
    sensitivity_chips: int = 200
    # temperature and offset drift
    temperatures_c: tuple = (-20.0, 27.0, 80.0)
    t0_c: float = 27.0
    offsets_volts: tuple = (-20e-6, 0.0, 20e-6)
    drift_chips: int = 100
    drift_sigma_n_volts: float = 55e-6
    # line-edge roughness variance table
    ler_area_scales: tuple = (1.0, 2.0, 4.0)
    ler_eta_nm: tuple = (8.0, 16.0, 32.0)
    ler_sigma_nm: tuple = (1.0, 2.0, 3.0)
    ler_samples: int = 1000
    ler_segments: int = 256
    # failure-rate analysis
    ac_counterfeit_mean: float = 0.5
    ac_counterfeit_std: float = 0.1
    ac_authentic_mean: float = 0.9
    ac_authentic_std: float = 0.05
    ac_authentic_std_sweep: tuple = (0.025, 0.05, 0.10)
    ac_thresholds: tuple = (0.8, 1.0)
    ac_multi_counterfeit_std: float = 0.25
    ac_multi_authentic_std: float = 0.1
    ac_multi_rho: tuple = (0.0, 0.5)
    ac_multi_m: int = 1
    ac_multi_thresholds: tuple = (0.7, 1.1)
    ac_f_ac_role: str = "counterfeit"
    p_a: float = 0.5
    mc_samples: int = 1_000_000


@dataclass(frozen=True)
class ExperimentConfig:
    processes: dict
    authentic: str
    adc: AdcConfig = field(default_factory=AdcConfig)
    extraction: ExtractionConfig = field(default_factory=ExtractionConfig)
    enrollment: EnrollmentConfig = field(default_factory=EnrollmentConfig)
    analysis: AnalysisConfig = field(default_factory=AnalysisConfig)
    global_seed: int = 0
    output_dir: str = "out"
    hash: str = ""

    @property
    def authentic_process(self):
        return self.processes[self.authentic]

    @property
    def counterfeit_names(self):
        names = self.analysis.counterfeits or tuple(k for k in self.processes if k != self.authentic)
        return tuple(names)

    def cof_grid(self):
        from momauth.signature import default_cof_grid

        if self.extraction.cof_grid:
            return tuple(float(x) for x in self.extraction.cof_grid)
        p = self.authentic_process
        return tuple(float(x) for x in default_cof_grid(p.cof_series_unit / p.cu_nominal, self.extraction.cof_stages))

    def with_seed(self, seed):
        return _finish(self.processes, self.authentic, self.adc, self.extraction, self.enrollment,
                       self.analysis, int(seed), self.output_dir)

    def with_output_dir(self, path):
        return _finish(self.processes, self.authentic, self.adc, self.extraction, self.enrollment,
                       self.analysis, self.global_seed, str(path))

    def canonical(self):
        """Resolved settings as plain data; the hash covers this (not output_dir)."""
        procs = {}
        for name in sorted(self.processes):
            d = asdict(self.processes[name])
            d.update(d.pop("geometry"))
            procs[name] = d
        return {
            "processes": procs,
            "authentic": self.authentic,
            "adc": asdict(self.adc),
            "extraction": asdict(self.extraction),
            "enrollment": asdict(self.enrollment),
            "analysis": asdict(self.analysis),
            "global_seed": self.global_seed,
        }


def _canon_json(obj):
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), default=list)


def _finish(processes, authentic, adc, extraction, enrollment, analysis, seed, output_dir):
    cfg = ExperimentConfig(processes, authentic, adc, extraction, enrollment, analysis, seed, output_dir)
    digest = hashlib.sha256(_canon_json(cfg.canonical()).encode()).hexdigest()
    return ExperimentConfig(processes, authentic, adc, extraction, enrollment, analysis, seed, output_dir, digest)


# ---------------------------------------------------------------- parsing

_UNIT_SUFFIXES = ("_ff", "_nm", "_volts", "_per_c", "_c", "_rel", "_f", "_pf", "_v", "_mv", "_uv", "_um", "_m")


def _base(key):
    for suf in sorted(_UNIT_SUFFIXES, key=len, reverse=True):
        if key.endswith(suf):
            return key[: -len(suf)]
    return key


def _unit_or_unknown(path, key, known):
    """Raise the right error for ``key`` that is not in ``known``."""
    base = _base(key)
    for k in known:
        if k != key and _base(k) == base:
            raise ConfigError(f"{path}.{key}: wrong or missing unit suffix, expected '{k}'")
    raise ConfigError(f"{path}.{key}: unknown key")


def _number(path, v, integer=False, positive=False, nonneg=False):
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{path}: expected a number, got {v!r}")
    if integer and not isinstance(v, int):
        raise ConfigError(f"{path}: expected an integer, got {v!r}")
    if positive and not v > 0:
        raise ConfigError(f"{path}: must be > 0, got {v}")
    if nonneg and not v >= 0:
        raise ConfigError(f"{path}: must be >= 0, got {v}")
    return v


def _resolve_processes(raw):
    if not isinstance(raw, dict):
        raise ConfigError("process: expected a table of named process blocks")
    if not raw:
        raw = {"authentic": {}}
        raw.update({name: {"inherit": "authentic", "sigma_cu_ff": s} for name, s in DEFAULT_COUNTERFEITS.items()})

    for name, block in raw.items():
        if not isinstance(block, dict):
            raise ConfigError(f"process.{name}: expected a table")
        for key in block:
            if key not in PROCESS_KEYS and key not in PROCESS_META:
                _unit_or_unknown(f"process.{name}", key, list(PROCESS_KEYS) + list(PROCESS_META))

    merged = {}

    def resolve(name, chain=()):
        if name in merged:
            return merged[name]
        if name not in raw:
            raise ConfigError(f"process.{chain[-1]}.inherit: no process block named '{name}'")
        if name in chain:
            raise ConfigError(f"process.{name}.inherit: inheritance cycle {' -> '.join(chain + (name,))}")
        block = dict(raw[name])
        parent = block.pop("inherit", None)
        base = {} if parent is None else dict(resolve(parent, chain + (name,)))
        base.pop("role", None)
        base.update(block)
        merged[name] = base
        return base

    for name in raw:
        resolve(name)

    processes, authentic = {}, []
    for name in raw:
        block = merged[name]
        role = block.get("role", "authentic" if name == "authentic" else "counterfeit")
        if role not in ("authentic", "counterfeit"):
            raise ConfigError(f"process.{name}.role: must be 'authentic' or 'counterfeit', got {role!r}")
        if role == "authentic":
            authentic.append(name)
        kwargs, geom = {"label": name}, {}
        for key, v in block.items():
            if key in PROCESS_META:
                continue
            target, scale = PROCESS_KEYS[key]
            path = f"process.{name}.{key}"
            if key == "cof_mismatch":
                if not isinstance(v, bool):
                    raise ConfigError(f"{path}: expected true or false")
                kwargs[target] = v
                continue
            if key == "cof_max_stages":
                kwargs[target] = _number(path, v, integer=True, positive=True)
                continue
            _number(path, v)
            if key in ("sigma_cu_ff", "sigma_ler_nm", "sigma_n_volts"):
                _number(path, v, nonneg=True)
            if key in ("cu_nominal_ff", "eta_ler_nm", "cof_series_unit_ff") or target in GEOMETRY_FIELDS:
                _number(path, v, positive=True)
            (geom if target in GEOMETRY_FIELDS else kwargs)[target] = float(v) * scale
        try:
            processes[name] = FabProcess(geometry=Geometry(**geom), **kwargs)
        except ValueError as e:
            raise ConfigError(f"process.{name}: {e}") from None
    if len(authentic) != 1:
        raise ConfigError(f"process: exactly one authentic process required, found {authentic or 'none'}")
    return processes, authentic[0]


def _block(raw, path, cls, keymap=None):
    """Fill dataclass ``cls`` from table ``raw``; ``keymap`` maps file keys to fields."""
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: expected a table")
    keymap = keymap or {}
    fields = {f: f for f in cls.__dataclass_fields__}
    allowed = {keymap.get(f, f): f for f in fields}
    defaults = cls()
    kwargs = {}
    for key, v in raw.items():
        if key not in allowed:
            _unit_or_unknown(path, key, list(allowed))
        f = allowed[key]
        d = getattr(defaults, f)
        p = f"{path}.{key}"
        if isinstance(d, tuple):
            if not isinstance(v, list):
                raise ConfigError(f"{p}: expected a list")
            # element type follows the default so equivalent spellings hash alike
            kind = type(d[0]) if d else None
            items = []
            for i, x in enumerate(v):
                if kind is str or (kind is None and isinstance(x, str)):
                    if not isinstance(x, str):
                        raise ConfigError(f"{p}[{i}]: expected a string")
                    items.append(x)
                elif kind is int:
                    items.append(_number(f"{p}[{i}]", x, integer=True))
                else:
                    items.append(float(_number(f"{p}[{i}]", x)))
            kwargs[f] = tuple(items)
        elif isinstance(d, bool):
            if not isinstance(v, bool):
                raise ConfigError(f"{p}: expected true or false")
            kwargs[f] = v
        elif isinstance(d, int):
            kwargs[f] = _number(p, v, integer=True)
        elif isinstance(d, float):
            kwargs[f] = float(_number(p, v))
        else:
            if not isinstance(v, str):
                raise ConfigError(f"{p}: expected a string")
            kwargs[f] = v
    try:
        return cls(**kwargs)
    except ValueError as e:
        raise ConfigError(f"{path}: {e}") from None


def _check(cfg):
    ex, en, an = cfg.extraction, cfg.enrollment, cfg.analysis
    checks = [
        (ex.n >= 1, "extraction.n", "must be >= 1"),
        (ex.repeats >= 1 and ex.repeats % 2 == 1, "extraction.repeats", "must be odd and >= 1"),
        (ex.chips >= 1, "extraction.chips", "must be >= 1"),
        (ex.count_rule in COUNT_RULES, "extraction.count_rule", f"must be one of {COUNT_RULES}"),
        (all(isinstance(k, int) and 1 <= k for k in ex.cof_stages) and ex.cof_stages,
         "extraction.cof_stages", "must be a non-empty list of positive integers"),
        (all(k <= p.cof_max_stages for k in ex.cof_stages for p in cfg.processes.values()),
         "extraction.cof_stages", "exceeds cof_max_stages of a process"),
        (all(x >= 0 for x in ex.cof_grid) and list(ex.cof_grid) == sorted(ex.cof_grid),
         "extraction.cof_grid", "must be ascending and non-negative"),
        (en.size >= 10, "enrollment.size", "must be >= 10"),
        (0.5 < en.quantile < 1, "enrollment.quantile", "must be in (0.5, 1)"),
        (en.k_sigma > 0, "enrollment.k_sigma", "must be > 0"),
        (en.weighting in ("uniform", "sensitivity"), "enrollment.weighting", "must be 'uniform' or 'sensitivity'"),
        (en.sensitivity_mode in ("relative", "absolute"), "enrollment.sensitivity_mode",
         "must be 'relative' or 'absolute'"),
        (all(c in cfg.processes and c != cfg.authentic for c in an.counterfeits), "analysis.counterfeits",
         "must name counterfeit process blocks"),
        (len(an.sigma_sweep_rel) >= 2 and all(0 <= s < 1 for s in an.sigma_sweep_rel), "analysis.sigma_sweep_rel",
         "needs at least two values in [0, 1)"),
        (len(an.temperatures_c) >= 2, "analysis.temperatures_c", "needs at least two values"),
        (len(an.offsets_volts) >= 2, "analysis.offsets_volts", "needs at least two values"),
        (list(an.n_candidates) == sorted(set(an.n_candidates)) and len(an.n_candidates) > 0,
         "analysis.n_candidates", "must be strictly ascending"),
        (an.chips_per_point >= 50, "analysis.chips_per_point", "must be >= 50"),
        (len(an.cof_pair) == 2, "analysis.cof_pair", "needs exactly two ratios"),
        (all(r % 2 == 1 and r >= 1 for r in an.repeat_study_repeats), "analysis.repeat_study_repeats",
         "must be odd and >= 1"),
        (0 < an.p_a < 1, "analysis.p_a", "must be in (0, 1)"),
        (an.ac_f_ac_role in ("population", "counterfeit"), "analysis.ac_f_ac_role",
         "must be 'population' or 'counterfeit'"),
        (an.ler_samples >= 100, "analysis.ler_samples", "must be >= 100"),
        (an.mc_samples >= 1000, "analysis.mc_samples", "must be >= 1000"),
        (cfg.global_seed >= 0, "global_seed", "must be >= 0"),
    ]
    for ok, path, msg in checks:
        if not ok:
            raise ConfigError(f"{path}: {msg}")


TOP_KEYS = ("process", "adc", "extraction", "enrollment", "analysis", "global_seed", "output_dir")


def parse_config(data):
    """Validate and resolve a config given as a dict (as read from TOML)."""
    data = copy.deepcopy(data)
    for key in data:
        if key not in TOP_KEYS:
            raise ConfigError(f"{key}: unknown key")
    processes, authentic = _resolve_processes(data.get("process", {}))
    adc_raw = data.get("adc", {})
    adc = _block(adc_raw, "adc", AdcConfig, {"v_ref": "v_ref_volts", "v_cm": "v_cm_volts"})
    extraction = _block(data.get("extraction", {}), "extraction", ExtractionConfig)
    enrollment = _block(data.get("enrollment", {}), "enrollment", EnrollmentConfig)
    analysis = _block(data.get("analysis", {}), "analysis", AnalysisConfig)
    seed = data.get("global_seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int):
        raise ConfigError(f"global_seed: expected an integer, got {seed!r}")
    out = data.get("output_dir", "out")
    if not isinstance(out, str):
        raise ConfigError("output_dir: expected a string")
    cfg = _finish(processes, authentic, adc, extraction, enrollment, analysis, seed, out)
    _check(cfg)
    return cfg


def load_config(path=None):
    """Parse a TOML config file; ``None`` gives the all-defaults config."""
    if path is None:
        return parse_config({})
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"{path}: {e}") from None
    return parse_config(data)
