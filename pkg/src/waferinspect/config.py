"""Experiment configuration: flat ``key = value`` files with one section
per module, parsed into typed settings objects.

Every run parameter including every seed lives in the file; nothing is
read from the environment or the clock, so a config file is a complete
record of an experiment.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field, fields
from pathlib import Path

from .errors import InvalidConfig
from .experiment import MethodParams
from .labels import Label
from .synthwafer import WaferLayout


@dataclass(frozen=True)
class DatasetSettings:
    """The `synth` subcommand's wafer set."""

    n_wafers: int = 8
    flawless: float = 0.6
    anomaly: float = 0.25
    faulty: float = 0.15
    seed: int = 7

    def class_mix(self) -> dict:
        return {Label.FLAWLESS: self.flawless, Label.ANOMALY: self.anomaly,
                Label.FAULTY: self.faulty}


@dataclass(frozen=True)
class TrainSettings:
    """Stage-classifier fitting for `train` and `infer`."""

    seed: int = 11
    chip_patch_size: int = 32
    street_patch_size: int = 32


@dataclass(frozen=True)
class EvalSettings:
    """The `eval` benchmark: data volume and the run protocol."""

    n_wafers: int = 24
    patch_size: int = 32
    downscale: int = 3
    min_patches: int = 600
    runs: int = 5
    aug_levels: tuple = (0,)
    seed: int = 7


@dataclass(frozen=True)
class ExperimentConfig:
    """Everything a run needs, resolved from one file."""

    layout: WaferLayout = field(default_factory=lambda: WaferLayout(
        wafer_radius_px=230.0, chip_pitch_px=96, street_width_px=12,
        chips_x=4, chips_y=4, max_offset_px=5))
    dataset: DatasetSettings = field(default_factory=DatasetSettings)
    augment_level: int = 0
    params: MethodParams = field(default_factory=MethodParams)
    train: TrainSettings = field(default_factory=TrainSettings)
    eval: EvalSettings = field(default_factory=EvalSettings)
    out_dir: str = "out"


def _convert(raw: str, kind, key: str):
    raw = raw.strip()
    try:
        if kind is bool:
            if raw.lower() in ("true", "1", "yes"):
                return True
            if raw.lower() in ("false", "0", "no"):
                return False
            raise ValueError(raw)
        if kind is tuple:
            return tuple(int(tok) for tok in raw.replace(",", " ").split())
        return kind(raw)
    except ValueError as exc:
        raise InvalidConfig(f"bad value for {key}: {raw!r}") from exc


def _fill(cls, section: dict, where: str, defaults=None):
    """Build a settings dataclass from a string dict, rejecting unknown keys."""
    known = {f.name: f.type for f in fields(cls)}
    kwargs = {}
    for key, raw in section.items():
        if key not in known:
            raise InvalidConfig(f"unknown key {key!r} in [{where}]")
        current = getattr(defaults, key) if defaults is not None else None
        kind = type(current) if current is not None else str
        if kind not in (int, float, bool, str, tuple):
            kind = str
        kwargs[key] = _convert(raw, kind, f"[{where}] {key}")
    if defaults is not None:
        for name in known:
            kwargs.setdefault(name, getattr(defaults, name))
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise InvalidConfig(f"bad [{where}] section: {exc}") from exc


_SECTION_SPECS = {
    "layout": (WaferLayout, "layout"),
    "dataset": (DatasetSettings, "dataset"),
    "network": (MethodParams, "params"),
    "baselines": (MethodParams, "params"),
    "train": (TrainSettings, "train"),
    "eval": (EvalSettings, "eval"),
}

# which MethodParams fields each of its two sections may set
_NETWORK_KEYS = frozenset(("epochs", "learning_rate", "batch_size",
                           "block_widths", "dense1_units", "conv_dropout",
                           "dense_dropout"))
_BASELINE_KEYS = frozenset(("n_trees", "svc_c", "mlp_hidden", "mlp_epochs"))


def load_config(path) -> ExperimentConfig:
    """Parse a config file; missing sections and keys keep their defaults."""
    path = Path(path)
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    try:
        with path.open() as fh:
            parser.read_file(fh)
    except OSError as exc:
        raise InvalidConfig(f"cannot read config {path}: {exc}") from exc
    except configparser.Error as exc:
        raise InvalidConfig(f"malformed config {path}: {exc}") from exc

    known_sections = set(_SECTION_SPECS) | {"augment", "output"}
    for name in parser.sections():
        if name not in known_sections:
            raise InvalidConfig(f"unknown section [{name}] in {path}")

    defaults = ExperimentConfig()
    resolved = {}
    params_raw = {}
    for name in ("network", "baselines"):
        if not parser.has_section(name):
            continue
        allowed = _NETWORK_KEYS if name == "network" else _BASELINE_KEYS
        for key, raw in parser.items(name):
            if key not in allowed:
                raise InvalidConfig(f"unknown key {key!r} in [{name}]")
            params_raw[key] = raw
    resolved["params"] = _fill(MethodParams, params_raw, "network",
                               defaults.params)

    for name, (cls, attr) in _SECTION_SPECS.items():
        if attr == "params":
            continue
        section = dict(parser.items(name)) if parser.has_section(name) else {}
        resolved[attr] = _fill(cls, section, name, getattr(defaults, attr))

    augment_level = defaults.augment_level
    if parser.has_section("augment"):
        for key, raw in parser.items("augment"):
            if key != "level":
                raise InvalidConfig(f"unknown key {key!r} in [augment]")
            augment_level = _convert(raw, int, "[augment] level")
        if augment_level < 0:
            raise InvalidConfig("[augment] level must be >= 0")

    out_dir = defaults.out_dir
    if parser.has_section("output"):
        for key, raw in parser.items("output"):
            if key != "dir":
                raise InvalidConfig(f"unknown key {key!r} in [output]")
            out_dir = raw.strip()
        if not out_dir:
            raise InvalidConfig("[output] dir must not be empty")

    try:
        return ExperimentConfig(augment_level=augment_level, out_dir=out_dir,
                                **resolved)
    except ValueError as exc:
        raise InvalidConfig(f"inconsistent config {path}: {exc}") from exc


def dump_config(cfg: ExperimentConfig) -> str:
    """The config as file text; load_config(dump_config(c)) round-trips."""
    def sect(name, obj, keys=None):
        lines = [f"[{name}]"]
        for f in fields(obj):
            if keys is not None and f.name not in keys:
                continue
            v = getattr(obj, f.name)
            if isinstance(v, tuple):
                v = ", ".join(str(x) for x in v)
            lines.append(f"{f.name} = {v}")
        return "\n".join(lines)

    parts = [
        sect("layout", cfg.layout),
        sect("dataset", cfg.dataset),
        f"[augment]\nlevel = {cfg.augment_level}",
        sect("network", cfg.params, _NETWORK_KEYS),
        sect("baselines", cfg.params, _BASELINE_KEYS),
        sect("train", cfg.train),
        sect("eval", cfg.eval),
        f"[output]\ndir = {cfg.out_dir}",
    ]
    return "\n\n".join(parts) + "\n"
