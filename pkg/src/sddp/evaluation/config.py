"""Experiment configuration files (TOML) with strict key checking.

Layout::

    [panel]              data source, split and scaling
    [panel.synthetic]    simulation settings when no CSV is given
    [net]                step-one regressor architecture
    [net.forecaster]     forecaster overrides (defaults to [net])
    [train]              optimizer and early stopping
    [experiment]         methods, horizon, window, repetitions, seeds
"""
from __future__ import annotations

import sys
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Optional, Union

from sddp.errors import ConfigError
from sddp.net import NetConfig, TrainConfig
from sddp.pipeline import METHODS
from sddp.simulate import SyntheticConfig

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

NET_KEYS = ("architecture", "blocks", "channel_width", "kernel")
TRAIN_KEYS = tuple(f.name for f in fields(TrainConfig) if f.name != "seed")
SYNTH_KEYS = tuple(f.name for f in fields(SyntheticConfig) if f.name != "seed")


@dataclass(frozen=True)
class PanelSource:
    csv: Optional[str] = None
    target_column: Union[str, int] = 0
    delimiter: str = ","
    header: bool = True
    mask: Optional[str] = None
    standardize: bool = True
    train_fraction: float = 0.8
    synthetic: Optional[dict] = None


@dataclass(frozen=True)
class ExperimentConfig:
    panel: PanelSource = field(default_factory=PanelSource)
    net: NetConfig = field(default_factory=NetConfig)
    forecaster_net: Optional[NetConfig] = None
    train: TrainConfig = field(default_factory=TrainConfig)
    methods: tuple = ("sddp", "sdpca", "pca", "vanilla")
    horizon: int = 1
    window: int = 8
    repetitions: int = 10
    base_seed: int = 0
    missing_rates: tuple = (0.0,)
    num_factors: Union[str, int] = "auto"
    kmax: Optional[int] = None
    refinement_passes: int = 1
    correlation_selection: bool = False
    workers: int = 1
    name: str = "experiment"

    def __post_init__(self):
        if not self.methods:
            raise ConfigError("experiment.methods must not be empty")
        bad = [m for m in self.methods if m not in METHODS]
        if bad:
            raise ConfigError(f"unknown methods {bad}; expected a subset of {METHODS}")
        for name in ("horizon", "window", "repetitions", "workers"):
            v = getattr(self, name)
            if not isinstance(v, int) or isinstance(v, bool) or v < 1:
                raise ConfigError(f"experiment.{name} must be a positive integer, got {v!r}")
        if not isinstance(self.base_seed, int) or self.base_seed < 0:
            raise ConfigError("experiment.base_seed must be a nonnegative integer")
        for r in self.missing_rates:
            if not isinstance(r, (int, float)) or not 0.0 <= r < 1.0:
                raise ConfigError(f"missing rate {r!r} outside [0, 1)")
        if self.num_factors != "auto" and (not isinstance(self.num_factors, int)
                                           or self.num_factors < 1):
            raise ConfigError("experiment.num_factors must be 'auto' or a positive integer")
        if self.refinement_passes < 0:
            raise ConfigError("experiment.refinement_passes must be nonnegative")
        if self.panel.csv is None and self.panel.synthetic is None:
            raise ConfigError("panel needs either a csv path or a [panel.synthetic] section")
        if not 0.0 < self.panel.train_fraction < 1.0:
            raise ConfigError("panel.train_fraction must lie in (0, 1)")

    @property
    def K(self):
        return None if self.num_factors == "auto" else self.num_factors

    def step_net(self):
        return replace(self.net, window=self.window)

    def head_net(self):
        return replace(self.forecaster_net or self.net, window=self.window)

    def synthetic_config(self, seed):
        return SyntheticConfig(**dict(self.panel.synthetic or {}), seed=seed)

    def to_dict(self):
        d = {
            "panel": asdict(self.panel),
            "net": self.net.to_dict(),
            "forecaster_net": None if self.forecaster_net is None else self.forecaster_net.to_dict(),
            "train": self.train.to_dict(),
        }
        for f in fields(self):
            if f.name not in d:
                v = getattr(self, f.name)
                d[f.name] = list(v) if isinstance(v, tuple) else v
        return d


def _take(section, allowed, where):
    if not isinstance(section, dict):
        raise ConfigError(f"[{where}] must be a table")
    unknown = sorted(set(section) - set(allowed))
    if unknown:
        raise ConfigError(f"unknown key(s) in [{where}]: {', '.join(unknown)}")
    return dict(section)


def _net(section, where, base=None):
    keys = _take(section, NET_KEYS, where)
    try:
        return replace(base, **keys) if base is not None else NetConfig(**keys)
    except TypeError as exc:
        raise ConfigError(f"[{where}]: {exc}") from exc


def config_from_dict(raw):
    """Build an :class:`ExperimentConfig` from a parsed TOML document."""
    top = _take(raw, ("panel", "net", "train", "experiment"), "top level")
    panel = _take(top.get("panel", {}), [f.name for f in fields(PanelSource)], "panel")
    if "synthetic" in panel:
        synth = _take(panel["synthetic"], SYNTH_KEYS, "panel.synthetic")
        if "beta" in synth and not isinstance(synth["beta"], str):
            synth["beta"] = tuple(tuple(row) for row in synth["beta"])
        try:
            SyntheticConfig(**synth)  # validate early
        except TypeError as exc:
            raise ConfigError(f"[panel.synthetic]: {exc}") from exc
        panel["synthetic"] = synth
    net_section = dict(top.get("net", {}))
    fsection = net_section.pop("forecaster", None)
    net = _net(net_section, "net")
    fnet = _net(fsection, "net.forecaster", net) if fsection is not None else None
    try:
        train = TrainConfig(**_take(top.get("train", {}), TRAIN_KEYS, "train"))
    except TypeError as exc:
        raise ConfigError(f"[train]: {exc}") from exc
    exp_keys = [f.name for f in fields(ExperimentConfig)
                if f.name not in ("panel", "net", "forecaster_net", "train")]
    exp = _take(top.get("experiment", {}), exp_keys, "experiment")
    for key in ("methods", "missing_rates"):
        if key in exp:
            if not isinstance(exp[key], list):
                raise ConfigError(f"experiment.{key} must be a list")
            exp[key] = tuple(exp[key])
    try:
        return ExperimentConfig(panel=PanelSource(**panel), net=net, forecaster_net=fnet,
                                train=train, **exp)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path):
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    try:
        raw = tomllib.loads(path.read_text(encoding="utf-8"))
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    cfg = config_from_dict(raw)
    if cfg.panel.csv is not None and not Path(cfg.panel.csv).is_absolute():
        # relative data paths resolve against the config file's directory
        panel = replace(cfg.panel, csv=str(path.parent / cfg.panel.csv),
                        mask=None if cfg.panel.mask is None else str(path.parent / cfg.panel.mask))
        cfg = replace(cfg, panel=panel)
    return cfg
