"""Run configuration read from a sectioned ``key = value`` file.

Every field has a default that reproduces the reference protocol, so an
empty file (or no file at all) is a valid configuration. Ablation switches
(basis kind, CTE, the X/S/P feature groups) are ordinary keys.
"""

from __future__ import annotations

import configparser
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from .basis import BasisKind, FeatureConfig
from .model import ModelConfig
from .pipeline import InputError, SplitSpec, SynthSpec
from .trainer import TrainConfig


class ConfigError(InputError):
    """Malformed or inconsistent configuration."""


@dataclass(frozen=True)
class DataConfig:
    path: str = ""
    value_column: str = "value"
    label_column: str = "label"
    test_path: str = ""  # optional separate evaluation series


@dataclass(frozen=True)
class GridConfig:
    window_lens: tuple = (16, 96)
    n_terms: tuple = (1, 2)

    def __post_init__(self):
        if not self.window_lens or not self.n_terms:
            raise ConfigError("[grid] needs at least one window length and one n_terms value")
        if min(self.window_lens) < 2 or min(self.n_terms) < 1:
            raise ConfigError("[grid] window lengths must be >= 2 and n_terms >= 1")


@dataclass(frozen=True)
class RunConfig:
    data: DataConfig = field(default_factory=DataConfig)
    synth: SynthSpec = field(default_factory=SynthSpec)
    features: FeatureConfig = field(default_factory=FeatureConfig)
    n_blocks: int = 1
    train: TrainConfig = field(default_factory=TrainConfig)
    split: SplitSpec = field(default_factory=SplitSpec)
    cte: bool = True
    delay_k: int = 5
    grid: GridConfig = field(default_factory=GridConfig)
    seed: int = 0

    def __post_init__(self):
        if self.delay_k < 1:
            raise ConfigError("[eval] k must be >= 1")
        if self.n_blocks < 1:
            raise ConfigError("[model] n_blocks must be >= 1")

    @property
    def model(self) -> ModelConfig:
        return ModelConfig(self.features, self.n_blocks, self.seed)

    @property
    def train_config(self) -> TrainConfig:
        return replace(self.train, seed=self.seed)

    def with_seed(self, seed):
        return replace(self, seed=int(seed))

    def to_dict(self):
        out = asdict(self)
        out["features"]["basis"] = self.features.basis.value
        out["grid"] = {k: list(v) for k, v in out["grid"].items()}
        out["train"].pop("seed")
        return out

    def to_ini(self):
        d = self.to_dict()
        parser = configparser.ConfigParser(interpolation=None)
        parser["run"] = {"seed": str(d["seed"])}
        parser["data"] = {k: str(v) for k, v in d["data"].items()}
        parser["synth"] = {k: str(v) for k, v in d["synth"].items()}
        parser["features"] = {k: str(v) for k, v in d["features"].items()}
        parser["model"] = {"n_blocks": str(d["n_blocks"])}
        parser["train"] = {k: str(v) for k, v in d["train"].items()}
        parser["split"] = {
            "train": str(self.split.train_frac),
            "val": str(self.split.val_frac),
            "test": str(self.split.test_frac),
        }
        parser["preprocess"] = {"cte": str(self.cte)}
        parser["eval"] = {"k": str(self.delay_k)}
        parser["grid"] = {k: ", ".join(map(str, v)) for k, v in d["grid"].items()}
        return parser


# --------------------------------------------------------------------------
# parsing
# --------------------------------------------------------------------------

_SECTIONS = {"run", "data", "synth", "features", "model", "train", "split", "preprocess", "eval", "grid"}


def _convert(text, kind, where):
    text = text.strip()
    try:
        if kind is bool:
            low = text.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        if kind is int:
            return int(text)
        if kind is float:
            return float(text)
        if kind is BasisKind:
            return BasisKind(text.lower())
        if kind is tuple:
            items = [s for s in text.replace(",", " ").split() if s]
            if not items:
                raise ValueError("empty list")
            return tuple(int(s) for s in items)
        return text
    except ValueError:
        raise ConfigError(f"{where}: cannot interpret {text!r} as {kind.__name__}") from None


def _fill(cls, section, mapping, renames=None):
    """Build dataclass ``cls`` from a config section, rejecting unknown keys."""
    renames = renames or {}
    known = {f.name: f for f in fields(cls)}
    kwargs = {}
    for key, raw in mapping.items():
        name = renames.get(key, key)
        if name not in known or name == "seed" and cls is TrainConfig:
            raise ConfigError(f"[{section}] unknown key {key!r}")
        default = known[name].default
        kind = BasisKind if name == "basis" else type(default)
        kwargs[name] = _convert(raw, kind, f"[{section}] {key}")
    try:
        return cls(**kwargs)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[{section}] {exc}") from exc


def parse_config(text: str) -> RunConfig:
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from exc
    unknown = set(parser.sections()) - _SECTIONS
    if unknown:
        raise ConfigError(f"unknown config section(s): {', '.join(sorted(unknown))}")

    def section(name):
        return dict(parser[name]) if parser.has_section(name) else {}

    def scalar(sec, key, kind, default):
        values = section(sec)
        extra = set(values) - {key}
        if extra:
            raise ConfigError(f"[{sec}] unknown key(s): {', '.join(sorted(extra))}")
        return _convert(values[key], kind, f"[{sec}] {key}") if key in values else default

    split_keys = {"train": "train_frac", "val": "val_frac", "test": "test_frac"}
    try:
        return RunConfig(
            data=_fill(DataConfig, "data", section("data")),
            synth=_fill(SynthSpec, "synth", section("synth")),
            features=_fill(FeatureConfig, "features", section("features")),
            n_blocks=scalar("model", "n_blocks", int, 1),
            train=_fill(TrainConfig, "train", section("train")),
            split=_fill(SplitSpec, "split", section("split"), split_keys),
            cte=scalar("preprocess", "cte", bool, True),
            delay_k=scalar("eval", "k", int, 5),
            grid=_fill(GridConfig, "grid", section("grid")),
            seed=scalar("run", "seed", int, 0),
        )
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from exc


def load_config(path) -> RunConfig:
    if path is None:
        return RunConfig()
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    return parse_config(text)
