"""Pipeline configuration with an INI-style file format.

Defaults follow the reference protocol: K=100 subsets of F=10 features,
w1=0.9, w2=0.6, epsilon=1e-4, correlation threshold 0.1, 5 folds.
"""

from __future__ import annotations

import configparser
import io
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Optional

import numpy as np

from .bagging import BaggingConfig
from .errors import ConfigError
from .features import FeatureOptions, WindowSpec
from .forest import ForestHyperparams
from .fusion import FusionParams
from .ingest import CHANNELS

# seed stream identifiers
SYNTH, FOLDS, BAGGING, BASELINE = 0, 1, 2, 3


def derive_seed(master: int, *key: int) -> int:
    """Independent 64-bit seed for a named stream of the master seed."""
    seq = np.random.SeedSequence(int(master), spawn_key=tuple(int(k) for k in key))
    return int(seq.generate_state(1, dtype=np.uint64)[0])


@dataclass(frozen=True)
class ChannelModel:
    """Mean-reverting walk parameters for one channel, per raw sample step."""

    level: float
    theta: float
    sigma: float
    driver_spread: float = 0.0
    driver_sigma_spread: float = 0.0  # log-scale jitter of sigma per driver
    class_offset: float = 0.0
    class_sigma_ratio: float = 1.0


DEFAULT_CHANNELS = {
    "speed": ChannelModel(50.0, 0.01, 1.0, driver_spread=6.0, driver_sigma_spread=0.15,
                          class_offset=-6.0),
    "accel_x": ChannelModel(0.0, 0.05, 0.15, driver_spread=0.02),
    "accel_y": ChannelModel(0.0, 0.05, 0.10, driver_spread=0.02),
    "yaw_rate": ChannelModel(0.0, 0.10, 1.0, driver_spread=0.1),
    "pitch_rate": ChannelModel(0.0, 0.20, 0.5, driver_spread=0.05, driver_sigma_spread=0.15,
                               class_sigma_ratio=1.15),
    "roll_rate": ChannelModel(0.0, 0.20, 0.3, driver_spread=0.05),
    "heading": ChannelModel(180.0, 0.001, 2.0, driver_spread=60.0),
}


@dataclass(frozen=True)
class SynthSpec:
    n_drivers_per_class: int = 100
    trips_per_driver: int = 1
    duration_s: int = 1024
    rate_hz: int = 15
    separation: float = 1.0
    channels: dict = field(default_factory=lambda: dict(DEFAULT_CHANNELS))
    seed: int = 0

    def __post_init__(self):
        if self.n_drivers_per_class < 1 or self.trips_per_driver < 1:
            raise ConfigError("synth needs at least one driver per class and one trip each")
        if self.duration_s < 1 or self.rate_hz < 1:
            raise ConfigError("synth duration and rate must be positive")
        if set(self.channels) != set(CHANNELS):
            raise ConfigError("synth channel models must cover every channel")
        for name, ch in self.channels.items():
            if ch.sigma <= 0 or ch.sigma * ch.class_sigma_ratio <= 0:
                raise ConfigError(f"synth noise scale for {name} must be positive")
            if not 0 < ch.theta <= 1:
                raise ConfigError(f"synth reversion strength for {name} must be in (0, 1]")


@dataclass(frozen=True)
class PipelineConfig:
    window: WindowSpec = field(default_factory=WindowSpec)
    features: FeatureOptions = field(default_factory=FeatureOptions)
    variance_threshold: float = 1e-12
    correlation_threshold: float = 0.1
    selection: str = "per-fold"
    forest: ForestHyperparams = field(default_factory=ForestHyperparams)
    bagging: BaggingConfig = field(default_factory=BaggingConfig)
    confusion_source: str = "oob"
    fusion: FusionParams = field(default_factory=FusionParams)
    folds: int = 5
    split_mode: str = "by-driver"
    seed: int = 0
    n_jobs: int = 1
    synth: SynthSpec = field(default_factory=SynthSpec)

    def __post_init__(self):
        if self.selection not in ("per-fold", "global"):
            raise ConfigError(f"selection must be per-fold or global, got {self.selection!r}")
        if self.confusion_source not in ("oob", "resubstitution"):
            raise ConfigError("confusion_source must be oob or resubstitution")
        if self.split_mode not in ("by-driver", "by-window"):
            raise ConfigError(f"split_mode must be by-driver or by-window, got {self.split_mode!r}")
        if self.folds < 2:
            raise ConfigError("need at least two folds")
        if self.n_jobs < 1:
            raise ConfigError("n_jobs must be positive")

    def fidelity_paper(self) -> "PipelineConfig":
        """Resubstitution ranking and confusion, global selection, window-level folds."""
        return replace(
            self,
            bagging=replace(self.bagging, ranking_mode="resubstitution"),
            confusion_source="resubstitution",
            selection="global",
            split_mode="by-window",
        )

    def with_seed(self, seed: int) -> "PipelineConfig":
        return replace(self, seed=int(seed), synth=replace(self.synth, seed=int(seed)))


# ---- file format -----------------------------------------------------------

def _fmt(v) -> str:
    if v is None:
        return "none"
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _dataclass_items(obj, skip=()):
    return {f.name: _fmt(getattr(obj, f.name)) for f in fields(obj) if f.name not in skip}


def to_ini(cfg: PipelineConfig) -> str:
    cp = configparser.ConfigParser(interpolation=None)
    cp["run"] = {"seed": str(cfg.seed), "n_jobs": str(cfg.n_jobs)}
    cp["window"] = _dataclass_items(cfg.window)
    cp["features"] = _dataclass_items(cfg.features)
    cp["selection"] = {
        "variance_threshold": _fmt(cfg.variance_threshold),
        "correlation_threshold": _fmt(cfg.correlation_threshold),
        "mode": cfg.selection,
    }
    cp["forest"] = _dataclass_items(cfg.forest, skip=("seed",))
    cp["bagging"] = _dataclass_items(cfg.bagging, skip=("seed",))
    cp["bagging"]["confusion_source"] = cfg.confusion_source
    cp["fusion"] = _dataclass_items(cfg.fusion)
    cp["evaluation"] = {"folds": str(cfg.folds), "split_mode": cfg.split_mode}
    s = cfg.synth
    cp["synth"] = {
        "n_drivers_per_class": str(s.n_drivers_per_class),
        "trips_per_driver": str(s.trips_per_driver),
        "duration_s": str(s.duration_s),
        "rate_hz": str(s.rate_hz),
        "separation": _fmt(float(s.separation)),
    }
    for name in CHANNELS:
        cp[f"synth.{name}"] = _dataclass_items(s.channels[name])
    buf = io.StringIO()
    cp.write(buf)
    return buf.getvalue()


def _convert(text: str, like):
    text = text.strip()
    if text.lower() == "none":
        return None
    if isinstance(like, bool):
        return text.lower() in ("1", "true", "yes", "on")
    if isinstance(like, int):
        return int(text)
    if isinstance(like, float):
        return float(text)
    if like is None:
        try:
            return int(text)
        except ValueError:
            return text
    # str-or-int fields such as split_features
    try:
        return int(text)
    except ValueError:
        return text


def _update(obj, section: Optional[configparser.SectionProxy], rename=None):
    if section is None:
        return obj
    names = {f.name for f in fields(obj)}
    rename = rename or {}
    changes = {}
    for key, raw in section.items():
        attr = rename.get(key, key)
        if attr not in names:
            raise ConfigError(f"unknown key {key!r} in section [{section.name}]")
        changes[attr] = _convert(raw, getattr(obj, attr))
    try:
        return replace(obj, **changes)
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"[{section.name}]: {exc}") from None


def from_ini(text: str) -> PipelineConfig:
    cp = configparser.ConfigParser(interpolation=None)
    try:
        cp.read_string(text)
    except configparser.Error as exc:
        raise ConfigError(f"unreadable config: {exc}") from None
    known = {"run", "window", "features", "selection", "forest", "bagging", "fusion",
             "evaluation", "synth"} | {f"synth.{c}" for c in CHANNELS}
    for name in cp.sections():
        if name not in known:
            raise ConfigError(f"unknown config section [{name}]")
    get = lambda name: cp[name] if cp.has_section(name) else None  # noqa: E731

    try:
        base = PipelineConfig()
        run = get("run")
        seed = int(run.get("seed", base.seed)) if run else base.seed
        n_jobs = int(run.get("n_jobs", base.n_jobs)) if run else base.n_jobs
        if run:
            extra = set(run) - {"seed", "n_jobs"}
            if extra:
                raise ConfigError(f"unknown key {sorted(extra)[0]!r} in section [run]")

        sel = get("selection")
        variance = base.variance_threshold
        corr = base.correlation_threshold
        mode = base.selection
        if sel:
            extra = set(sel) - {"variance_threshold", "correlation_threshold", "mode"}
            if extra:
                raise ConfigError(f"unknown key {sorted(extra)[0]!r} in section [selection]")
            variance = float(sel.get("variance_threshold", variance))
            corr = float(sel.get("correlation_threshold", corr))
            mode = sel.get("mode", mode)

        bag = get("bagging")
        confusion = base.confusion_source
        bagging = base.bagging
        if bag:
            confusion = bag.get("confusion_source", confusion)
            sub = configparser.ConfigParser(interpolation=None)
            sub["bagging"] = {k: v for k, v in bag.items() if k != "confusion_source"}
            bagging = _update(bagging, sub["bagging"])

        ev = get("evaluation")
        folds, split = base.folds, base.split_mode
        if ev:
            extra = set(ev) - {"folds", "split_mode"}
            if extra:
                raise ConfigError(f"unknown key {sorted(extra)[0]!r} in section [evaluation]")
            folds = int(ev.get("folds", folds))
            split = ev.get("split_mode", split)

        synth = base.synth
        sy = get("synth")
        if sy:
            synth = _update(synth, sy)
        channels = dict(synth.channels)
        for name in CHANNELS:
            channels[name] = _update(channels[name], get(f"synth.{name}"))
        synth = replace(synth, channels=channels, seed=seed)

        return PipelineConfig(
            window=_update(base.window, get("window")),
            features=_update(base.features, get("features")),
            variance_threshold=variance,
            correlation_threshold=corr,
            selection=mode,
            forest=_update(base.forest, get("forest")),
            bagging=bagging,
            confusion_source=confusion,
            fusion=_update(base.fusion, get("fusion")),
            folds=folds,
            split_mode=split,
            seed=seed,
            n_jobs=n_jobs,
            synth=synth,
        )
    except ValueError as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(str(exc)) from None


def load_config(path) -> PipelineConfig:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return from_ini(text)


def save_config(cfg: PipelineConfig, path) -> None:
    Path(path).write_text(to_ini(cfg), encoding="utf-8")
