"""Run configuration: a line-oriented ``key = value`` file with ``[section]``
headers, read with configparser and validated against a fixed schema."""
from __future__ import annotations

import configparser
from dataclasses import dataclass, field, asdict
from pathlib import Path

from .model import ModelParams

TASKS = ("landscape", "front", "pulse", "sweep", "singular", "field", "verify")


class ConfigError(ValueError):
    pass


def _floats(s: str) -> tuple:
    return tuple(float(x) for x in s.replace(",", " ").split())


# section -> key -> parser
SCHEMA = {
    "model": {"b": float, "beta": float, "lambda": float, "kappa": float},
    "run": {"task": str, "out": str, "epsilon": float, "c1": float, "rtol": float,
            "atol": float, "seed_offset": float, "horizon": float, "figures": str},
    "sweep": {"epsilons": _floats},
    "singular": {"n_grid": int},
    "field": {"length": float, "n": int, "dt": float, "t_end": float, "t_min": float,
              "boundary": str, "every": float},
}


@dataclass
class RunConfig:
    model: ModelParams = field(default_factory=ModelParams)
    task: str = "verify"
    out: str = "out"
    epsilon: float = 0.005
    c1: float = 0.34
    rtol: float = 1e-10
    atol: float = 1e-12
    seed_offset: float = 1e-7
    horizon: float = 500.0
    figures: bool = True
    epsilons: tuple = (0.005, 0.002, 0.001)
    n_grid: int = 512
    field_length: float = 40.0
    field_n: int = 4096
    field_dt: float = 0.01
    field_t_end: float = 60.0
    field_t_min: float = 15.0
    field_boundary: str = "free"
    field_every: float = 1.0

    def validate(self) -> "RunConfig":
        if self.task not in TASKS:
            raise ConfigError(f"unknown task {self.task!r}; choose from {', '.join(TASKS)}")
        if not self.epsilon >= 0:
            raise ConfigError("epsilon must be >= 0")
        if not self.c1 > 0:
            raise ConfigError("c1 must be positive")
        if not (0 < self.rtol < 1e-3 and 0 < self.atol < 1e-3):
            raise ConfigError("tolerances must lie in (0, 1e-3)")
        if not (1e-9 <= self.seed_offset <= 1e-5):
            raise ConfigError("seed_offset must lie in [1e-9, 1e-5]")
        if not self.epsilons or any(e <= 0 for e in self.epsilons):
            raise ConfigError("sweep epsilons must be positive")
        if self.n_grid < 8:
            raise ConfigError("n_grid must be >= 8")
        if self.field_n < 2 or not (0 < self.field_dt <= 0.1):
            raise ConfigError("field grid needs n >= 2 and 0 < dt <= 0.1")
        if self.field_boundary not in ("free", "periodic"):
            raise ConfigError("field boundary must be free or periodic")
        return self

    def to_dict(self) -> dict:
        d = asdict(self)
        d["model"] = self.model.to_dict()
        d["epsilons"] = list(self.epsilons)
        return d


_RUN_KEYS = {"task", "out", "epsilon", "c1", "rtol", "atol", "seed_offset", "horizon"}


def parse_config(text: str) -> RunConfig:
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str
    try:
        cp.read_string(text)
    except configparser.Error as e:
        raise ConfigError(f"cannot parse config: {e}") from e
    cfg = RunConfig()
    model_kw = {}
    for sec in cp.sections():
        if sec not in SCHEMA:
            raise ConfigError(f"unknown section [{sec}]")
        for key, raw in cp.items(sec):
            if key not in SCHEMA[sec]:
                raise ConfigError(f"unknown key {key!r} in [{sec}]")
            try:
                val = SCHEMA[sec][key](raw.strip())
            except ValueError as e:
                raise ConfigError(f"bad value for {sec}.{key}: {raw!r}") from e
            if sec == "model":
                model_kw["lambda_" if key == "lambda" else key] = val
            elif sec == "run" and key in _RUN_KEYS:
                setattr(cfg, key, val)
            elif key == "figures":
                if val.lower() not in ("yes", "no", "true", "false", "1", "0"):
                    raise ConfigError(f"bad value for run.figures: {raw!r}")
                cfg.figures = val.lower() in ("yes", "true", "1")
            elif sec == "field":
                setattr(cfg, f"field_{key}", val)
            else:
                setattr(cfg, key, val)
    if model_kw:
        try:
            cfg.model = ModelParams(**model_kw)
        except (TypeError, ValueError) as e:
            raise ConfigError(f"bad model parameters: {e}") from e
    return cfg


def load_config(path) -> RunConfig:
    p = Path(path)
    if not p.is_file():
        raise ConfigError(f"config file not found: {p}")
    return parse_config(p.read_text())
