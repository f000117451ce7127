"""Run configuration: one YAML file drives ingest, seed and fit."""
from __future__ import annotations

import datetime as dt
import hashlib
import json
import re
from dataclasses import asdict, dataclass, field
from pathlib import Path

import yaml

from . import model as wm
from .ingest import DEFAULT_COLUMNS, WHO_COLUMNS, deaths_window
from .seed import RNG_ALGORITHM, param_names


class ConfigError(ValueError):
    pass


class _Loader(yaml.SafeLoader):
    """Safe loader that also reads ``1e6`` and ``10.5e4`` as floats."""


_Loader.add_implicit_resolver(
    "tag:yaml.org,2002:float",
    re.compile(
        r"""^(?:[-+]?(?:[0-9][0-9_]*)\.[0-9_]*(?:[eE][-+]?[0-9]+)?
        |[-+]?(?:[0-9][0-9_]*)(?:[eE][-+]?[0-9]+)
        |\.[0-9_]+(?:[eE][-+]?[0-9]+)?
        |[-+]?\.(?:inf|Inf|INF)
        |\.(?:nan|NaN|NAN))$""",
        re.X,
    ),
    list("-+0123456789."),
)


def yaml_load(text):
    return yaml.load(text, Loader=_Loader)


COLUMN_PRESETS = {"default": DEFAULT_COLUMNS, "who": WHO_COLUMNS}


@dataclass
class RegionConfig:
    name: str
    start: dt.date
    cutoff: dt.date
    peaks: int = 1
    drop_death_peaks: list = field(default_factory=list)  # 1-based peak numbers
    inflation_cases: float = 0.0
    inflation_deaths: float = 0.0
    box: dict = field(default_factory=dict)
    deaths_start: dt.date = None

    def __post_init__(self):
        if self.deaths_start is None:
            self.deaths_start = deaths_window(self.start)

    @property
    def death_peaks(self):
        dropped = {int(i) - 1 for i in self.drop_death_peaks}
        return tuple(i for i in range(self.peaks) if i not in dropped)


@dataclass
class SeedConfig:
    trials: int = 1_000_000
    rng_seed: int = 0
    rng_algorithm: str = RNG_ALGORITHM
    polish: bool = False
    workers: int = 1


@dataclass
class FitConfig:
    tol: float = 1e-8
    max_iter: int = 100
    alpha: float = 4.938
    beta: float = 0.277
    step: float = wm.DEFAULT_STEP
    derivative_mode: str = "paper"
    fixed_kernel: bool = False
    band_step: float = 1.0
    level: float = 0.95


@dataclass
class RunConfig:
    data_path: Path
    columns: dict
    negative: str
    output: Path
    regions: list
    seed: SeedConfig
    fit: FitConfig
    source: Path = None

    def region(self, name):
        for r in self.regions:
            if r.name == name:
                return r
        raise KeyError(name)

    def stage_hash(self):
        """Hash of everything the seed stage depends on (not the fit section)."""
        payload = {
            "columns": self.columns,
            "negative": self.negative,
            "regions": [_jsonable(asdict(r)) for r in self.regions],
            "seed": asdict(self.seed),
        }
        return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()

    def data_hash(self):
        return file_hash(self.data_path)


def file_hash(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def _jsonable(x):
    if isinstance(x, dict):
        return {k: _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, dt.date):
        return x.isoformat()
    return x


def _date(value, what):
    if isinstance(value, dt.date):
        return value
    try:
        return dt.date.fromisoformat(str(value))
    except ValueError:
        raise ConfigError(f"{what}: not an ISO date: {value!r}") from None


def _section(raw, key, cls):
    sec = raw.get(key) or {}
    if not isinstance(sec, dict):
        raise ConfigError(f"section {key!r} must be a mapping")
    known = set(cls.__dataclass_fields__)
    unknown = set(sec) - known
    if unknown:
        raise ConfigError(f"unknown keys in {key!r}: {sorted(unknown)}")
    return cls(**sec)


def parse_config(raw, base=Path(".")):
    """Validate a config mapping; relative paths resolve against ``base``."""
    if not isinstance(raw, dict):
        raise ConfigError("config must be a mapping")
    data = raw.get("data") or {}
    if "path" not in data:
        raise ConfigError("data.path is required")
    cols = data.get("columns", "default")
    if isinstance(cols, str):
        if cols not in COLUMN_PRESETS:
            raise ConfigError(f"unknown column preset {cols!r}")
        cols = dict(COLUMN_PRESETS[cols])
    else:
        cols = {**DEFAULT_COLUMNS, **cols}
    negative = data.get("negative", "reject")
    if negative not in ("reject", "clamp"):
        raise ConfigError("data.negative must be 'reject' or 'clamp'")

    regions = []
    raw_regions = raw.get("regions") or {}
    if not raw_regions:
        raise ConfigError("at least one region is required")
    for name, r in raw_regions.items():
        if not isinstance(r, dict):
            raise ConfigError(f"region {name}: must be a mapping")
        peaks = int(r.get("peaks", 1))
        if peaks < 1:
            raise ConfigError(f"region {name}: peaks must be >= 1")
        drop = list(r.get("drop_death_peaks", []))
        if any(not 1 <= int(i) <= peaks for i in drop):
            raise ConfigError(f"region {name}: drop_death_peaks out of range")
        infl = r.get("inflation") or {}
        box = {}
        for k, v in (r.get("box") or {}).items():
            if k not in param_names(peaks):
                raise ConfigError(f"region {name}: unknown box parameter {k!r}")
            lo, hi = (v, v) if not isinstance(v, (list, tuple)) else v
            if float(lo) > float(hi):
                raise ConfigError(f"region {name}: box {k} has low > high")
            box[k] = [float(lo), float(hi)]
        fi_c, fi_d = float(infl.get("cases", 0.0)), float(infl.get("deaths", 0.0))
        if fi_c < 0 or fi_d < 0:
            raise ConfigError(f"region {name}: inflation fractions must be >= 0")
        regions.append(
            RegionConfig(
                name=str(name),
                start=_date(r.get("start"), f"region {name} start"),
                cutoff=_date(r.get("cutoff"), f"region {name} cutoff"),
                peaks=peaks,
                drop_death_peaks=[int(i) for i in drop],
                inflation_cases=fi_c,
                inflation_deaths=fi_d,
                box=box,
                deaths_start=_date(r["deaths_start"], f"region {name} deaths_start") if "deaths_start" in r else None,
            )
        )
    seed = _section(raw, "seed", SeedConfig)
    if seed.rng_algorithm != RNG_ALGORITHM:
        raise ConfigError(f"unsupported rng_algorithm {seed.rng_algorithm!r}; only {RNG_ALGORITHM}")
    if seed.trials < 1:
        raise ConfigError("seed.trials must be >= 1")
    fit = _section(raw, "fit", FitConfig)
    if fit.derivative_mode not in wm.DERIVATIVE_MODES:
        raise ConfigError(f"fit.derivative_mode must be one of {wm.DERIVATIVE_MODES}")
    if not (fit.alpha > 0 and fit.beta > 0 and fit.step > 0 and fit.tol > 0):
        raise ConfigError("fit.alpha, fit.beta, fit.step and fit.tol must be positive")
    return RunConfig(
        data_path=(base / data["path"]).resolve(),
        columns=cols,
        negative=negative,
        output=(base / raw.get("output", "out")).resolve(),
        regions=regions,
        seed=seed,
        fit=fit,
    )


def load_config(path):
    path = Path(path)
    try:
        with open(path, encoding="utf-8") as fh:
            raw = yaml_load(fh.read())
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"invalid YAML: {exc}") from None
    cfg = parse_config(raw, base=path.parent)
    cfg.source = path.resolve()
    return cfg
