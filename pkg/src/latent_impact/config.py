"""INI run configuration and the acceptance thresholds file.

Precedence, highest first: command-line overrides, the user's config file,
built-in defaults. Every section is optional until a command needs it.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass, field
from importlib import resources

import numpy as np

from .core import MetaorderSpec, ModelParams, params_from_market

DEFAULTS = {
    "model": {},
    "grid": {"scheme": "cn", "resolution": "40", "n_exec": "200"},
    "metaorder": {},
    "sweep": {"axis": "Q", "engine": "green", "Q_min": "100", "Q_max": "10000", "t_min": "10",
              "t_max": "1000", "points": "7", "tolerance": "0.05", "workers": "1"},
    "mrr": {"s": "1.0", "c1": "0.3", "v0": "0.2", "n_trades": "1000000", "seed": "0"},
    "output": {"dir": "out"},
}


_MISSING = object()


class ConfigError(ValueError):
    """Missing or invalid configuration; the CLI maps it to exit code 2."""


@dataclass
class RunConfig:
    parser: configparser.ConfigParser
    source: str = None
    overrides: dict = field(default_factory=dict)

    def has(self, section, key):
        return self.parser.has_option(section, key)

    def get(self, section, key, fallback=_MISSING):
        try:
            return self.parser.get(section, key)
        except (configparser.NoSectionError, configparser.NoOptionError):
            if fallback is _MISSING:
                raise ConfigError(f"missing config key [{section}] {key}") from None
            return fallback

    def getfloat(self, section, key, fallback=_MISSING):
        raw = self.get(section, key, fallback)
        if raw is None or isinstance(raw, float):
            return raw
        try:
            return float(raw)
        except ValueError:
            raise ConfigError(f"[{section}] {key} = {raw!r} is not a number") from None

    def getint(self, section, key, fallback=_MISSING):
        value = self.getfloat(section, key, fallback)
        if value is None:
            return None
        if value != int(value):
            raise ConfigError(f"[{section}] {key} must be an integer, got {value}")
        return int(value)

    def as_dict(self) -> dict:
        """The fully resolved configuration, for embedding in outputs."""
        return {s: dict(self.parser.items(s)) for s in self.parser.sections()}


def load_config(path=None, overrides=None) -> RunConfig:
    """Read ``path`` over the defaults and apply ``section.key -> value`` overrides."""
    cp = configparser.ConfigParser()
    cp.optionxform = str
    cp.read_dict(DEFAULTS)
    if path is not None:
        try:
            with open(path) as fh:
                cp.read_file(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config file {path}: {exc}") from None
        except configparser.Error as exc:
            raise ConfigError(f"malformed config file {path}: {exc}") from None
    overrides = dict(overrides or {})
    for dotted, value in overrides.items():
        section, _, key = dotted.partition(".")
        if not key:
            raise ConfigError(f"override {dotted!r} must look like section.key")
        if not cp.has_section(section):
            cp.add_section(section)
        cp.set(section, key, str(value))
    return RunConfig(cp, None if path is None else str(path), overrides)


def model_from_config(cfg: RunConfig) -> ModelParams:
    """Model parameters from ``[model]``.

    Either ``sigma1, nu, lam`` (with ``liquidity`` instead of ``lam`` when
    ``nu = 0``) or the market form ``sigma1, v1, tm``.
    """
    sigma1 = cfg.getfloat("model", "sigma1")
    try:
        if cfg.has("model", "v1") or cfg.has("model", "tm"):
            return params_from_market(sigma1, cfg.getfloat("model", "v1"), cfg.getfloat("model", "tm"))
        nu = cfg.getfloat("model", "nu")
        if nu == 0:
            return ModelParams.infinite_memory(sigma1, cfg.getfloat("model", "liquidity"))
        return ModelParams(sigma1, nu, cfg.getfloat("model", "lam"))
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"[model] {exc}") from None


def metaorder_from_config(cfg: RunConfig) -> MetaorderSpec:
    try:
        return MetaorderSpec(cfg.getfloat("metaorder", "Q"), cfg.getfloat("metaorder", "T"))
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"[metaorder] {exc}") from None


def sweep_values(cfg: RunConfig) -> np.ndarray:
    """Sweep points: an explicit ``values`` list, or ``points`` log-spaced between the bounds."""
    axis = cfg.get("sweep", "axis")
    if cfg.has("sweep", "values"):
        raw = cfg.get("sweep", "values").replace(",", " ").split()
        try:
            return np.array([float(v) for v in raw])
        except ValueError:
            raise ConfigError(f"[sweep] values must be numbers, got {raw}") from None
    lo = cfg.getfloat("sweep", f"{axis}_min")
    hi = cfg.getfloat("sweep", f"{axis}_max")
    n = cfg.getint("sweep", "points")
    if not 0 < lo < hi:
        raise ConfigError(f"[sweep] need 0 < {axis}_min < {axis}_max")
    return np.logspace(np.log10(lo), np.log10(hi), n)


def load_thresholds(path=None) -> configparser.ConfigParser:
    """Acceptance thresholds; the packaged file unless ``path`` is given."""
    cp = configparser.ConfigParser()
    if path is None:
        cp.read_string(resources.files("latent_impact").joinpath("data/acceptance.ini").read_text())
    else:
        with open(path) as fh:
            cp.read_file(fh)
    return cp
