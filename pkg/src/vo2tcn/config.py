"""Run configuration: an INI file with one section per pipeline stage.

Every key has a default, so an empty file (or none at all) is valid. Values
given on the command line override the file. The effective configuration is
written back out with :func:`write_run_config` so each output directory
records exactly what produced it.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

from .data import FEATURES
from .errors import ConfigError
from .model import GRID_DILATIONS, GRID_FILTERS, GRID_KERNELS, TcnConfig
from .train import TrainConfig


@dataclass(frozen=True)
class SimulateSettings:
    cohort: int = 20
    seed: int = 0
    noise: bool = True
    session_spread: float = 0.1


@dataclass(frozen=True)
class DataSettings:
    features: tuple = FEATURES
    split_seed: int = 0
    train_fraction: float = 0.5
    val_fraction: float = 0.25
    test_fraction: float = 0.25


@dataclass(frozen=True)
class ModelSettings:
    filters: int = 24
    kernel: int = 8
    dilations: int = 5


@dataclass(frozen=True)
class EvaluateSettings:
    ba_ddof: int = 0
    vo2peak_window_s: int = 20
    figures: bool = True


@dataclass(frozen=True)
class GridSettings:
    filters: tuple = GRID_FILTERS
    kernels: tuple = GRID_KERNELS
    dilations: tuple = GRID_DILATIONS


@dataclass(frozen=True)
class RunConfig:
    simulate: SimulateSettings = field(default_factory=SimulateSettings)
    data: DataSettings = field(default_factory=DataSettings)
    model: ModelSettings = field(default_factory=ModelSettings)
    train: TrainConfig = field(default_factory=TrainConfig)
    evaluate: EvaluateSettings = field(default_factory=EvaluateSettings)
    grid: GridSettings = field(default_factory=GridSettings)

    def tcn_config(self) -> TcnConfig:
        return TcnConfig(self.model.filters, self.model.kernel, self.model.dilations,
                         input_features=len(self.data.features),
                         dropout_rate=self.train.dropout)

    def grid_configs(self) -> list[TcnConfig]:
        n = len(self.data.features)
        return [TcnConfig(f, k, d, n, self.train.dropout)
                for f in self.grid.filters for k in self.grid.kernels for d in self.grid.dilations]

    def split_ratios(self) -> tuple:
        d = self.data
        return (d.train_fraction, d.val_fraction, d.test_fraction)


SECTIONS = tuple(f.name for f in fields(RunConfig))
_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}


def _parse_int_list(text: str) -> tuple:
    out = []
    for part in text.replace(" ", "").split(","):
        if not part:
            continue
        if "-" in part[1:]:
            lo, hi = part.split("-", 1)
            out.extend(range(int(lo), int(hi) + 1))
        else:
            out.append(int(part))
    return tuple(out)


def _parse(default, text: str, where: str):
    text = text.strip()
    try:
        if isinstance(default, bool):
            low = text.lower()
            if low in _TRUE:
                return True
            if low in _FALSE:
                return False
            raise ValueError(f"not a boolean: {text!r}")
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            return float(text)
        if isinstance(default, tuple):
            if default and isinstance(default[0], int):
                return _parse_int_list(text)
            return tuple(p.strip() for p in text.split(",") if p.strip())
    except ValueError as exc:
        raise ConfigError(f"{where}: {exc}") from exc
    return text


def _format(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, tuple):
        return ", ".join(str(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _apply(cfg: RunConfig, section: str, key: str, text: str) -> RunConfig:
    if section not in SECTIONS:
        raise ConfigError(f"unknown config section [{section}]")
    current = getattr(cfg, section)
    names = {f.name for f in fields(current)}
    if key not in names:
        raise ConfigError(f"unknown key {key!r} in [{section}]")
    value = _parse(getattr(current, key), text, f"[{section}] {key}")
    try:
        return replace(cfg, **{section: replace(current, **{key: value})})
    except (ConfigError, ValueError, TypeError) as exc:
        raise ConfigError(f"[{section}] {key}: {exc}") from exc


def load_run_config(path=None, overrides=None) -> RunConfig:
    """Read ``path`` (optional) and then apply ``overrides``.

    ``overrides`` maps ``(section, key)`` to a string or a typed value;
    ``None`` values are ignored so argparse defaults can be passed straight in.
    """
    cfg = RunConfig()
    if path is not None:
        p = Path(path)
        if not p.is_file():
            raise ConfigError(f"config file {p} not found")
        cp = configparser.ConfigParser(interpolation=None)
        try:
            cp.read(p, encoding="utf-8")
        except configparser.Error as exc:
            raise ConfigError(f"malformed config file {p}: {exc}") from exc
        for section in cp.sections():
            for key, text in cp[section].items():
                cfg = _apply(cfg, section, key, text)
    for (section, key), value in (overrides or {}).items():
        if value is not None:
            cfg = _apply(cfg, section, key, value if isinstance(value, str) else _format(value))
    _validate(cfg)
    return cfg


def _validate(cfg: RunConfig) -> None:
    d = cfg.data
    if not d.features or len(set(d.features)) != len(d.features):
        raise ConfigError("[data] features must be a non-empty list without repeats")
    unknown = [f for f in d.features if f not in FEATURES]
    if unknown:
        raise ConfigError(f"[data] unknown features {unknown}; choose from {', '.join(FEATURES)}")
    ratios = cfg.split_ratios()
    if min(ratios) <= 0 or abs(sum(ratios) - 1.0) > 1e-9:
        raise ConfigError("[data] split fractions must be positive and sum to 1")
    if cfg.simulate.cohort < 1:
        raise ConfigError("[simulate] cohort must be at least 1")
    if cfg.simulate.seed < 0 or d.split_seed < 0:
        raise ConfigError("seeds must be non-negative")
    if cfg.evaluate.ba_ddof not in (0, 1):
        raise ConfigError("[evaluate] ba_ddof must be 0 or 1")
    g = cfg.grid
    if not (g.filters and g.kernels and g.dilations):
        raise ConfigError("[grid] filters, kernels and dilations must be non-empty")
    if min(g.filters + g.kernels + g.dilations) < 1:
        raise ConfigError("[grid] values must be positive")
    cfg.tcn_config()


def write_run_config(cfg: RunConfig, path) -> None:
    cp = configparser.ConfigParser(interpolation=None)
    for section in SECTIONS:
        values = getattr(cfg, section)
        cp[section] = {f.name: _format(getattr(values, f.name)) for f in fields(values)}
    with Path(path).open("w", encoding="utf-8", newline="\n") as fh:
        cp.write(fh)
