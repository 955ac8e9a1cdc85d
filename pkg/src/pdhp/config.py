"""Experiment configuration in a flat ``section.key=value`` text format.

Blank lines and ``#`` comments are ignored. Unknown keys are an error so a
typo never silently falls back to a default. Every key has a default, and
the defaults reproduce the benchmark experiment.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

from .plant import PRESETS
from .trainer import TrainConfig


class ConfigError(ValueError):
    pass


@dataclass
class PlantSection:
    preset: str = "benchmark"
    noise_variance: float = 0.01


@dataclass
class SysidSection:
    n_samples: int = 2000
    heldout_samples: int = 1000
    x_low: float = -4.0
    x_high: float = 4.0
    u_low: float = -3.0
    u_high: float = 3.0
    h_bases: int = 15
    g_bases: int = 6
    width_scale: float = 1.0


@dataclass
class TrainSection:
    num_states: int = 200
    state_low: float = -4.0
    state_high: float = 4.0
    cycles: int = 3
    scg_max_iter: int = 10000
    tol_objective: float = 1e-3
    tol_weights: float = 1e-3
    action_bases: int = 6
    critic_bases: int = 6
    width_scale: float = 0.8
    center_low: float = -1.0
    center_high: float = 2.5
    action_bias: bool = False
    critic_bias: bool = False
    gamma_init: float = 0.01
    # "gamma" ties the ideal control covariance to the controller's Gamma
    ideal_control_cov: str = "0.01"
    solver_tol: float = 1e-8
    solver_max_iter: int = 100
    check_gradients: bool = False


@dataclass
class EvalSection:
    x0: float = 2.0
    steps: int = 50
    seeds: int = 10
    first_seed: int = 1000
    workers: int = 4
    band: float = 0.3


@dataclass
class ExperimentConfig:
    seed: int = 0
    plant: PlantSection = field(default_factory=PlantSection)
    sysid: SysidSection = field(default_factory=SysidSection)
    train: TrainSection = field(default_factory=TrainSection)
    eval: EvalSection = field(default_factory=EvalSection)

    def validate(self) -> "ExperimentConfig":
        if self.plant.preset not in PRESETS:
            raise ConfigError(f"unknown plant preset {self.plant.preset!r}")
        if self.plant.noise_variance < 0:
            raise ConfigError("plant.noise_variance must be non-negative")
        s = self.sysid
        if s.n_samples <= 0 or s.heldout_samples <= 0 or s.h_bases <= 0 or s.g_bases <= 0:
            raise ConfigError("sysid counts must be positive")
        if not (s.x_low < s.x_high and s.u_low < s.u_high) or s.width_scale <= 0:
            raise ConfigError("sysid ranges must be increasing and width_scale positive")
        if not self.train.center_low < self.train.center_high:
            raise ConfigError("train.center_low must be below train.center_high")
        if self.train.gamma_init <= 0:
            raise ConfigError("train.gamma_init must be positive")
        self.ideal_control_cov()
        e = self.eval
        if e.steps < 1 or e.seeds < 1 or e.workers < 1 or e.band <= 0:
            raise ConfigError("eval.steps, eval.seeds, eval.workers and eval.band must be positive")
        try:
            self.train_config()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        return self

    def ideal_control_cov(self) -> float | None:
        raw = self.train.ideal_control_cov.strip().lower()
        if raw == "gamma":
            return None
        try:
            value = float(raw)
        except ValueError:
            raise ConfigError("train.ideal_control_cov must be a number or 'gamma'") from None
        if value <= 0:
            raise ConfigError("train.ideal_control_cov must be positive")
        return value

    def train_config(self) -> TrainConfig:
        t = self.train
        return TrainConfig(
            num_states=t.num_states, state_range=(t.state_low, t.state_high), cycles=t.cycles,
            scg_max_iter=t.scg_max_iter, tol_objective=t.tol_objective,
            tol_weights=t.tol_weights, seed=self.seed, action_bases=t.action_bases,
            critic_bases=t.critic_bases, width_scale=t.width_scale,
            center_range=(t.center_low, t.center_high), action_bias=t.action_bias,
            critic_bias=t.critic_bias, gamma_init=t.gamma_init,
            ideal_control_cov=self.ideal_control_cov(), solver_tol=t.solver_tol,
            solver_max_iter=t.solver_max_iter, check_gradients=t.check_gradients,
        )

    def eval_seeds(self) -> list[int]:
        return [self.eval.first_seed + k for k in range(self.eval.seeds)]


_SECTIONS = ("plant", "sysid", "train", "eval")


def _coerce(text: str, kind, key: str):
    if kind in (bool, "bool"):
        low = text.strip().lower()
        if low in ("true", "1", "yes", "on"):
            return True
        if low in ("false", "0", "no", "off"):
            return False
        raise ConfigError(f"{key}: expected a boolean, got {text!r}")
    try:
        if kind in (int, "int"):
            return int(text)
        if kind in (float, "float"):
            return float(text)
    except ValueError:
        raise ConfigError(f"{key}: cannot parse {text!r} as {kind}") from None
    return text.strip()


def parse_config(text: str) -> ExperimentConfig:
    cfg = ExperimentConfig()
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected key=value")
        key, value = (part.strip() for part in line.split("=", 1))
        if key == "seed":
            cfg.seed = _coerce(value, int, key)
            continue
        section, _, name = key.partition(".")
        if section not in _SECTIONS or not name:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        target = getattr(cfg, section)
        types = {f.name: f.type for f in dataclasses.fields(target)}
        if name not in types:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        setattr(target, name, _coerce(value, types[name], key))
    return cfg.validate()


def load_config(path) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
    return parse_config(text)


def format_config(cfg: ExperimentConfig) -> str:
    """Canonical text form; ``parse_config(format_config(c))`` reproduces ``c``."""
    lines = [f"seed={cfg.seed}"]
    for section in _SECTIONS:
        for f in dataclasses.fields(getattr(cfg, section)):
            value = getattr(getattr(cfg, section), f.name)
            if isinstance(value, bool):
                text = "true" if value else "false"
            elif isinstance(value, float):
                text = repr(value)
            else:
                text = str(value)
            lines.append(f"{section}.{f.name}={text}")
    return "\n".join(lines) + "\n"
