"""End-to-end experiment steps shared by the command line and the acceptance tests."""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import __version__
from .archive import (ModelArchive, get_forward_model, get_trained, put_forward_model,
                      put_trained)
from .baseline_dhp import run_dhp_training
from .config import ExperimentConfig, format_config, parse_config
from .plant import PlantSpec, Trajectory, make_preset, simulate
from .sysid import ForwardModel, fit_forward_model, generate_dataset, heldout_report
from .trainer import TrainingRun, derive_seed, run_training

log = logging.getLogger(__name__)

METHODS = ("prob", "dhp")
SYSID_STREAM, HELDOUT_STREAM = 10, 11
TRAJECTORY_HEADER = "step,x,u,method,seed"
SUMMARY_HEADER = "method,seed,overshoot,undershoot,settling_step"


class ExperimentError(RuntimeError):
    pass


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def plant_from_config(cfg: ExperimentConfig) -> PlantSpec:
    return make_preset(cfg.plant.preset, cfg.plant.noise_variance)


def config_to_fields(cfg: ExperimentConfig) -> dict[str, str]:
    return dict(line.split("=", 1) for line in format_config(cfg).splitlines())


def config_from_archive(arc: ModelArchive) -> ExperimentConfig:
    return parse_config("\n".join(f"{k}={v}" for k, v in arc.section("config").items()))


@dataclass
class IdentifyResult:
    archive: ModelArchive
    model: ForwardModel
    heldout_rms: float
    heldout_delta: float


def identify(cfg: ExperimentConfig) -> IdentifyResult:
    plant = plant_from_config(cfg)
    s = cfg.sysid
    x_range, u_range = (s.x_low, s.x_high), (s.u_low, s.u_high)
    data = generate_dataset(plant, s.n_samples, x_range, u_range, derive_seed(cfg.seed, SYSID_STREAM))
    model = fit_forward_model(data, s.h_bases, s.g_bases, x_range, s.width_scale)
    held = generate_dataset(plant, s.heldout_samples, x_range, u_range,
                            derive_seed(cfg.seed, HELDOUT_STREAM))
    report = heldout_report(model, held)
    arc = ModelArchive()
    arc.put("config", config_to_fields(cfg))
    arc.put("provenance", {"seed": cfg.seed, "package_version": __version__,
                           "plant": cfg.plant.preset})
    put_forward_model(arc, model)
    arc.put("identification", {"heldout_rms": report["rms"], "heldout_delta": report["delta"]})
    return IdentifyResult(arc, model, report["rms"], report["delta"])


def train(arc: ModelArchive, method: str, cfg: ExperimentConfig | None = None) -> TrainingRun:
    """Train ``method`` on the archived forward model and store the result in ``arc``."""
    if method not in METHODS:
        raise ExperimentError(f"unknown method {method!r}; expected one of {METHODS}")
    cfg = cfg or config_from_archive(arc)
    model = get_forward_model(arc)
    tcfg = cfg.train_config()
    run = run_training(model, tcfg) if method == "prob" else run_dhp_training(model, tcfg)
    put_trained(arc, method, run.controller, run.critic,
                {"cycles": tcfg.cycles, "seed": cfg.seed,
                 "target_evaluations": run.target_evaluations})
    return run


def simulate_method(arc: ModelArchive, method: str, x0: float, steps: int, seed: int,
                    plant: PlantSpec | None = None) -> Trajectory:
    if steps < 1:
        raise ExperimentError("steps must be at least 1")
    controller, _ = get_trained(arc, method)
    plant = plant or plant_from_config(config_from_archive(arc))
    return simulate(plant, controller.mean, [x0], steps, seed)


def trajectory_rows(traj: Trajectory, method: str) -> list[str]:
    rows = []
    for t, x in enumerate(traj.states[:, 0]):
        u = _fmt(traj.controls[t, 0]) if t < len(traj.controls) else ""
        rows.append(f"{t},{_fmt(x)},{u},{method},{traj.seed}")
    return rows


def write_trajectories(path, blocks: list[tuple[Trajectory, str]]) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write(TRAJECTORY_HEADER + "\n")
        for traj, method in blocks:
            fh.write("\n".join(trajectory_rows(traj, method)) + "\n")


@dataclass(frozen=True)
class Excursions:
    overshoot: float  # deepest excursion past zero, away from the starting side
    undershoot: float  # largest rebound back onto the starting side after the first crossing
    settling_step: int  # first step after which |x| stays inside the band; -1 if never


def excursions(states, band: float) -> Excursions:
    xs = np.asarray(states, dtype=float).reshape(-1)
    side = 1.0 if xs[0] >= 0 else -1.0
    signed = side * xs
    overshoot = float(max(0.0, -signed.min()))
    crossed = np.nonzero(signed < 0)[0]
    undershoot = float(max(0.0, signed[crossed[0]:].max())) if crossed.size else 0.0
    outside = np.nonzero(np.abs(xs) >= band)[0]
    if outside.size == 0:
        settle = 0
    elif outside[-1] == len(xs) - 1:
        settle = -1
    else:
        settle = int(outside[-1] + 1)
    return Excursions(overshoot, undershoot, settle)


@dataclass
class Comparison:
    trajectories: dict[tuple[str, int], Trajectory]
    summary: dict[tuple[str, int], Excursions]

    def mean_overshoot(self, method: str) -> float:
        return float(np.mean([e.overshoot for (m, _), e in self.summary.items() if m == method]))


def compare(arc_prob: ModelArchive, arc_dhp: ModelArchive, x0: float, steps: int, seeds,
            band: float = 0.3, workers: int = 4) -> Comparison:
    """Paired closed-loop runs: both controllers see the same noise for each seed."""
    if steps < 1:
        raise ExperimentError("steps must be at least 1")
    seeds = list(seeds)
    if not seeds:
        raise ExperimentError("need at least one evaluation seed")
    cfg_p, cfg_d = config_from_archive(arc_prob), config_from_archive(arc_dhp)
    if (cfg_p.plant.preset, cfg_p.plant.noise_variance) != (cfg_d.plant.preset, cfg_d.plant.noise_variance):
        raise ExperimentError("the two archives were identified on different plants")
    plant = plant_from_config(cfg_p)
    jobs = [(arc_prob, "prob", s) for s in seeds] + [(arc_dhp, "dhp", s) for s in seeds]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        trajs = list(pool.map(lambda j: simulate_method(j[0], j[1], x0, steps, j[2], plant), jobs))
    out = {(m, s): tr for (_, m, s), tr in zip(jobs, trajs)}
    summary = {k: excursions(tr.states[:, 0], band) for k, tr in out.items()}
    return Comparison(out, summary)


def write_summary(path, comp: Comparison) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write(SUMMARY_HEADER + "\n")
        for (method, seed), e in sorted(comp.summary.items()):
            fh.write(f"{method},{seed},{_fmt(e.overshoot)},{_fmt(e.undershoot)},{e.settling_step}\n")
