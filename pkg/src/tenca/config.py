"""Run configuration: INI-style files, canonical text, and config hashes.

Files are flat ``key = value`` sections, diff-able and stdlib-parsed.
Unknown sections or keys are rejected outright — a typo'd knob must fail
loudly, not silently fall back to a default. The canonical rendering of
the model/time/train sections is embedded in checkpoints and hashed to
refuse resuming under a changed training recipe.
"""

import configparser
import hashlib
import io
from dataclasses import dataclass

from .data import _format_number
from .errors import ConfigError
from .phantom import PhantomSpec
from .training import TrainConfig

# Section -> key -> TrainConfig field. Order here is the canonical order.
_TRAIN_SCHEMA = {
    "model": {"d": "d", "hidden": "hidden", "fire_rate": "fire_rate",
              "init_style": "init_style"},
    "time": {"delta_t_s": "delta_t_s", "n_steps": "n_steps"},
    "train": {
        "learning_rate": "learning_rate",
        "beta1": "beta1",
        "beta2": "beta2",
        "eps": "eps",
        "grad_clip_norm": "grad_clip_norm",
        "batch_size": "batch_size",
        "epochs": "epochs",
        "seed": "seed",
        "boundary_every": "boundary_every",
        "target_loss": "target_loss",
    },
}
_INT_FIELDS = {"d", "hidden", "n_steps", "batch_size", "epochs", "seed",
               "boundary_every"}
_STR_FIELDS = {"init_style"}

_PATH_KEYS = ("dataset", "checkpoints", "reports")
_MODE_KEYS = ("reproducible", "deterministic_mask", "full_horizon",
              "checkpoint_every", "threads")


@dataclass
class RunConfig:
    """TrainConfig plus file locations and runner mode flags."""

    train: TrainConfig
    dataset: str = ""
    checkpoints: str = ""
    reports: str = ""
    reproducible: bool = False
    deterministic_mask: bool = False
    full_horizon: bool = False
    checkpoint_every: int = 25
    threads: int = 1

    def __post_init__(self):
        if self.checkpoint_every < 1:
            raise ConfigError(
                f"checkpoint_every must be >= 1, got {self.checkpoint_every}")
        if self.threads < 1:
            raise ConfigError(f"threads must be >= 1, got {self.threads}")
        if self.reproducible:
            self.threads = 1


def _read_ini(text: str) -> configparser.ConfigParser:
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"config parse failure: {exc}") from exc
    return parser


def _convert(section, key, raw, to_int=False, to_bool=False):
    try:
        if to_bool:
            low = raw.strip().lower()
            if low in ("1", "yes", "true", "on"):
                return True
            if low in ("0", "no", "false", "off"):
                return False
            raise ValueError(f"not a boolean: {raw!r}")
        return int(raw) if to_int else float(raw)
    except ValueError as exc:
        raise ConfigError(f"[{section}] {key}: {exc}") from exc


def parse_train_config(text: str) -> TrainConfig:
    """TrainConfig from the model/time/train sections of INI text."""
    parser = _read_ini(text)
    values = {}
    for section in parser.sections():
        if section not in _TRAIN_SCHEMA:
            raise ConfigError(f"unknown config section [{section}]")
        for key, raw in parser.items(section):
            if key not in _TRAIN_SCHEMA[section]:
                raise ConfigError(f"unknown key '{key}' in section [{section}]")
            attr = _TRAIN_SCHEMA[section][key]
            if attr in _STR_FIELDS:
                values[attr] = raw.strip()
            else:
                values[attr] = _convert(section, key, raw,
                                        to_int=attr in _INT_FIELDS)
    return TrainConfig(**values)


def train_config_text(cfg: TrainConfig) -> str:
    """Canonical rendering: fixed section and key order, minimal numbers."""
    out = io.StringIO()
    for section, keys in _TRAIN_SCHEMA.items():
        out.write(f"[{section}]\n")
        for key, attr in keys.items():
            value = getattr(cfg, attr)
            if attr in _STR_FIELDS:
                out.write(f"{key} = {value}\n")
            elif attr in _INT_FIELDS:
                out.write(f"{key} = {int(value)}\n")
            else:
                out.write(f"{key} = {_format_number(value)}\n")
        out.write("\n")
    return out.getvalue()


def train_config_hash(cfg: TrainConfig) -> str:
    return hashlib.sha256(train_config_text(cfg).encode()).hexdigest()[:16]


def parse_run_config(text: str) -> RunConfig:
    """Full runner config: train sections plus [paths] and [mode]."""
    parser = _read_ini(text)
    train_parts = []
    run_kw = {}
    for section in parser.sections():
        if section in _TRAIN_SCHEMA:
            train_parts.append(f"[{section}]\n" + "\n".join(
                f"{k} = {v}" for k, v in parser.items(section)) + "\n")
        elif section == "paths":
            for key, raw in parser.items(section):
                if key not in _PATH_KEYS:
                    raise ConfigError(f"unknown key '{key}' in section [paths]")
                run_kw[key] = raw.strip()
        elif section == "mode":
            for key, raw in parser.items(section):
                if key not in _MODE_KEYS:
                    raise ConfigError(f"unknown key '{key}' in section [mode]")
                if key in ("checkpoint_every", "threads"):
                    run_kw[key] = _convert(section, key, raw, to_int=True)
                else:
                    run_kw[key] = _convert(section, key, raw, to_bool=True)
        else:
            raise ConfigError(f"unknown config section [{section}]")
    train = parse_train_config("".join(train_parts))
    return RunConfig(train=train, **run_kw)


def run_config_text(run: RunConfig) -> str:
    """Canonical rendering of the full runner config."""
    out = io.StringIO()
    out.write(train_config_text(run.train))
    out.write("[paths]\n")
    for key in _PATH_KEYS:
        out.write(f"{key} = {getattr(run, key)}\n")
    out.write("\n[mode]\n")
    for key in ("reproducible", "deterministic_mask", "full_horizon"):
        out.write(f"{key} = {'true' if getattr(run, key) else 'false'}\n")
    out.write(f"checkpoint_every = {run.checkpoint_every}\n")
    out.write(f"threads = {run.threads}\n")
    return out.getvalue()


def load_run_config(path) -> RunConfig:
    with open(path) as fh:
        return parse_run_config(fh.read())


# ---------------------------------------------------------------------------
# phantom generation specs

@dataclass
class PhantomJob:
    """A PhantomSpec plus how many cases to generate from it."""

    spec: PhantomSpec
    n_cases: int
    delta_t_hint: float = 8.0
    id_start: int = 0

    def __post_init__(self):
        if self.n_cases < 1:
            raise ConfigError(f"cases must be >= 1, got {self.n_cases}")
        if self.id_start < 0:
            raise ConfigError(f"id_start must be >= 0, got {self.id_start}")


_PHANTOM_INT_KEYS = {"height", "width", "regions_min", "regions_max",
                     "k_min", "k_max", "seed", "cases", "id_start"}
_PHANTOM_FLOAT_KEYS = {"background_level", "amplitude_min", "amplitude_max",
                       "uptake_min", "uptake_max", "washout_min", "washout_max",
                       "noise_sigma", "footprint_scale", "time_min_s",
                       "time_max_s", "min_separation_s", "delta_t_hint"}


def parse_phantom_job(text: str) -> PhantomJob:
    """PhantomJob from a [phantom] INI section."""
    parser = _read_ini(text)
    sections = parser.sections()
    if sections != ["phantom"]:
        raise ConfigError(
            f"phantom spec must contain exactly one [phantom] section, got {sections}")
    raw = {}
    for key, value in parser.items("phantom"):
        if key in _PHANTOM_INT_KEYS:
            raw[key] = _convert("phantom", key, value, to_int=True)
        elif key in _PHANTOM_FLOAT_KEYS:
            raw[key] = _convert("phantom", key, value)
        else:
            raise ConfigError(f"unknown key '{key}' in section [phantom]")

    def pair(lo_key, hi_key, default):
        if (lo_key in raw) != (hi_key in raw):
            raise ConfigError(f"give both {lo_key} and {hi_key}, or neither")
        if lo_key in raw:
            return (raw.pop(lo_key), raw.pop(hi_key))
        return default

    defaults = PhantomSpec()
    spec_kw = {
        "n_regions_range": pair("regions_min", "regions_max",
                                defaults.n_regions_range),
        "amplitude_range": pair("amplitude_min", "amplitude_max",
                                defaults.amplitude_range),
        "uptake_range": pair("uptake_min", "uptake_max", defaults.uptake_range),
        "washout_range": pair("washout_min", "washout_max",
                              defaults.washout_range),
        "k_range": pair("k_min", "k_max", defaults.k_range),
        "time_range_s": pair("time_min_s", "time_max_s", defaults.time_range_s),
    }
    n_cases = raw.pop("cases", 10)
    delta_t_hint = raw.pop("delta_t_hint", 8.0)
    id_start = raw.pop("id_start", 0)
    spec_kw.update(raw)
    return PhantomJob(spec=PhantomSpec(**spec_kw), n_cases=n_cases,
                      delta_t_hint=delta_t_hint, id_start=id_start)


def load_phantom_job(path) -> PhantomJob:
    with open(path) as fh:
        return parse_phantom_job(fh.read())
