"""Flat INI-style run configuration with env and flag overrides.

A config file has one section per pipeline stage. Values the paper-scale
experiments need are the defaults, so a minimal file only names what it
changes. Flags beat environment variables (prefix HYPERDYN_), which beat
the file, which beats the built-in defaults.
"""

from __future__ import annotations

import configparser
import json
import os
from pathlib import Path

ENV_PREFIX = "HYPERDYN_"


class ConfigError(ValueError):
    """A config value is missing or malformed."""


DEFAULTS: dict[str, dict[str, str]] = {
    "run": {"out": "out", "workers": "1"},
    "hypergraph": {
        "n_nodes": "20",
        "p2": "0.01",
        "p3": "0.001",
        "p4": "0.001",
        "count": "1",
        "max_size": "4",
    },
    "dynamics": {"family": "kuramoto", "p": "2"},
    "dataset": {
        "scenario": "point",
        "count": "500",
        "n_hypergraphs": "500",
        "n_traj": "25",
        "steps": "100",
        "dt": "0.01",
    },
    "train": {
        "order": "2",
        "lambda": "1e-6",
        "lr": "1e-3",
        "lr_end": "",
        "epochs": "500",
        "batch_size": "32",
        "hidden": "32,32",
        "activation": "tanh",
        "l2_squared": "false",
        "search_lambda": "false",
        "lambda_grid": "1e-6,1e-5,1e-4,1e-3,1e-2",
        "val_fraction": "0.2",
    },
    "evaluate": {
        "suites": "kuramoto:2,kuramoto:3,mcm:2,diffusion:2",
        "p_models": "2,3,4",
        "folds": "10",
        "complexity_weight": "1.0",
    },
    "simulate": {"steps": "100", "dt": "0.01"},
    "predict": {"steps": "200", "dt": "0.01"},
    "decomposition": {
        "d_values": "3,4",
        "trials": "1000",
        "threshold": "1e-6",
    },
}


class RunConfig:
    """Resolved configuration: file values over defaults, queried by type."""

    def __init__(self, path: str | Path | None = None, overrides: dict | None = None):
        parser = configparser.ConfigParser()
        parser.read_dict(DEFAULTS)
        self.path = None
        if path is not None:
            path = Path(path)
            if not path.exists():
                raise ConfigError(f"config file not found: {path}")
            try:
                parser.read(path, encoding="utf-8")
            except configparser.Error as exc:
                raise ConfigError(f"cannot parse {path}: {exc}") from exc
            self.path = str(path)
        self._parser = parser
        self._overrides = dict(overrides or {})

    def _raw(self, section: str, key: str) -> str | None:
        if (section, key) in self._overrides:
            return str(self._overrides[(section, key)])
        env = os.environ.get(f"{ENV_PREFIX}{key.upper()}")
        if key in ("seed", "out", "workers", "order", "lambda") and env is not None:
            return env
        if self._parser.has_option(section, key):
            return self._parser.get(section, key)
        return None

    def get(self, section: str, key: str, default: str | None = None) -> str:
        value = self._raw(section, key)
        if value is None:
            if default is not None:
                return default
            raise ConfigError(f"missing config value [{section}] {key}")
        return value

    def get_int(self, section: str, key: str, default: int | None = None) -> int:
        raw = self._raw(section, key)
        if raw is None:
            if default is not None:
                return default
            raise ConfigError(f"missing config value [{section}] {key}")
        try:
            return int(raw)
        except ValueError as exc:
            raise ConfigError(f"[{section}] {key} must be an integer, got {raw!r}") from exc

    def get_float(self, section: str, key: str, default: float | None = None) -> float:
        raw = self._raw(section, key)
        if raw is None:
            if default is not None:
                return default
            raise ConfigError(f"missing config value [{section}] {key}")
        try:
            return float(raw)
        except ValueError as exc:
            raise ConfigError(f"[{section}] {key} must be a number, got {raw!r}") from exc

    def get_bool(self, section: str, key: str) -> bool:
        raw = self._raw(section, key)
        if raw is None:
            raise ConfigError(f"missing config value [{section}] {key}")
        if raw.lower() in ("true", "yes", "1", "on"):
            return True
        if raw.lower() in ("false", "no", "0", "off"):
            return False
        raise ConfigError(f"[{section}] {key} must be a boolean, got {raw!r}")

    def get_int_list(self, section: str, key: str) -> list[int]:
        return [int(v) for v in self.get(section, key).split(",") if v.strip()]

    def get_float_list(self, section: str, key: str) -> list[float]:
        return [float(v) for v in self.get(section, key).split(",") if v.strip()]

    def seed(self) -> int:
        raw = self._raw("run", "seed")
        if raw is None:
            raise ConfigError(
                "no seed given; set [run] seed in the config, pass --seed, "
                f"or export {ENV_PREFIX}SEED"
            )
        try:
            return int(raw)
        except ValueError as exc:
            raise ConfigError(f"seed must be an integer, got {raw!r}") from exc

    def probs(self) -> dict[int, float]:
        """ER inclusion probability per edge size, from p2/p3/p4/... keys."""
        out: dict[int, float] = {}
        for key, value in self.section("hypergraph").items():
            if key.startswith("p") and key[1:].isdigit():
                out[int(key[1:])] = float(value)
        if not out:
            raise ConfigError("no edge probabilities (p2, p3, ...) configured")
        return out

    def section(self, name: str) -> dict[str, str]:
        if not self._parser.has_section(name):
            return {}
        resolved = dict(self._parser.items(name))
        for (sec, key), value in self._overrides.items():
            if sec == name:
                resolved[key] = str(value)
        return resolved

    def resolved(self) -> dict:
        """Full effective configuration, for provenance embedding."""
        out = {name: dict(self._parser.items(name)) for name in self._parser.sections()}
        for (sec, key), value in self._overrides.items():
            out.setdefault(sec, {})[key] = str(value)
        raw_seed = self._raw("run", "seed")
        if raw_seed is not None:
            out.setdefault("run", {})["seed"] = raw_seed
        return out

    def provenance(self) -> str:
        return json.dumps(self.resolved(), sort_keys=True)
