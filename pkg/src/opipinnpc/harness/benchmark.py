"""Payload sweep: the learned-model predictive controller against the baseline.

For each payload mass the payload is identified once, and the same estimate,
PID gains, force bounds, gait and reference are handed to both controllers,
so only the predictive term differs between the two runs. Each payload gets
its own seed derived from the run seed and its index in the grid, so the
sweep gives the same numbers serially or in a worker pool.
"""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from ..model import PayloadEstimate
from ..nmpc import CompositeController
from ..sim import BaselineController, TrajectoryLog, identify_payload, run_scenario
from .config import RunConfig
from .metrics import MetricsReport, compute_metrics, improvement

log = logging.getLogger(__name__)

CONTROLLERS = ("baseline", "opi-pinnpc")
BENCHMARK_COLUMNS = ("payload_mass", "controller", "rmse_position", "rmse_orientation",
                     "rmse_x", "rmse_y", "rmse_z", "rmse_roll", "rmse_pitch", "rmse_yaw", "failed")


def derived_seed(seed: int, index: int) -> int:
    return int(np.random.SeedSequence([seed, index]).generate_state(1)[0])


def make_controller(name: str, config: RunConfig, omega_hat: PayloadEstimate, surrogate=None):
    params = config.robot_params()
    if name == "baseline":
        return BaselineController(params, omega_hat, config.pid(), config.bounds())
    if name == "opi-pinnpc":
        if surrogate is None:
            raise ValueError("the predictive controller needs a surrogate model")
        return CompositeController(surrogate, params, omega_hat, config.nmpc(), config.pid(), config.bounds())
    raise ValueError(f"unknown controller {name!r} (choose from {', '.join(CONTROLLERS)})")


@dataclass
class PayloadRun:
    mass: float
    omega_hat: PayloadEstimate
    logs: dict            # controller -> TrajectoryLog
    metrics: dict         # controller -> MetricsReport

    def rows(self) -> list[list]:
        out = []
        for name in CONTROLLERS:
            m, lg = self.metrics[name], self.logs[name]
            out.append([self.mass, name, *m.as_row(), int(lg.failed)])
        return out


def run_metrics(log_: TrajectoryLog, eval_start: float) -> MetricsReport:
    """Tracking metrics of one run; a diverged run scores infinite RMSE."""
    if not log_.failed:
        return compute_metrics(log_.t, log_.x, log_.reference, window_start=eval_start)
    e = log_.x[:, 0:6] - log_.reference[:, 0:6]
    end = float(log_.t[-1]) if len(log_.t) else eval_start
    return MetricsReport(t=log_.t, error=e, position_norm=np.linalg.norm(e[:, 0:3], axis=1),
                         orientation_norm=np.linalg.norm(e[:, 3:6], axis=1), rmse_axis=np.full(6, np.inf),
                         rmse_position=np.inf, rmse_orientation=np.inf, window=(eval_start, end))


def run_payload(config: RunConfig, index: int, mass: float, surrogate) -> PayloadRun:
    params = config.robot_params()
    payload = config.payload(mass)
    omega_hat = identify_payload(params, payload, **config.identify_kwargs()).estimate
    scenario = config.scenario(mass, seed=derived_seed(config.seed, index))
    logs, metrics = {}, {}
    for name in CONTROLLERS:
        ctrl = make_controller(name, config, omega_hat, surrogate)
        logs[name] = run_scenario(scenario, ctrl, params)
        if logs[name].failed:
            log.warning("%s diverged at payload %.1f kg", name, mass)
        metrics[name] = run_metrics(logs[name], config["scenario"]["eval_start"])
    return PayloadRun(float(mass), omega_hat, logs, metrics)


def _job(args):
    return run_payload(*args)


def run_benchmark(config: RunConfig, surrogate, masses=None) -> list[PayloadRun]:
    masses = list(config["scenario"]["payload_grid"] if masses is None else masses)
    jobs = [(config, i, m, surrogate) for i, m in enumerate(masses)]
    workers = min(config["scenario"]["workers"], len(jobs))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_job, jobs))
    return [_job(j) for j in jobs]


@dataclass
class BenchmarkSummary:
    masses: np.ndarray
    rmse: dict             # controller -> (n, 2) position / orientation
    improvement: np.ndarray  # (n, 2)

    @property
    def mean_improvement(self) -> np.ndarray:
        return self.improvement.mean(axis=0)

    @property
    def strictly_better(self) -> bool:
        return bool(np.all(self.rmse["opi-pinnpc"] < self.rmse["baseline"]))


def summarize(rows) -> BenchmarkSummary:
    """Aggregate benchmark rows (as written to the CSV) per payload."""
    by = {}
    for r in rows:
        mass, name = float(r[0]), str(r[1])
        by.setdefault(mass, {})[name] = (float(r[2]), float(r[3]))
    masses = np.array(sorted(by))
    missing = [m for m in masses if set(by[m]) != set(CONTROLLERS)]
    if missing:
        raise ValueError(f"benchmark rows incomplete for payloads {missing}")
    rmse = {c: np.array([by[m][c] for m in masses]) for c in CONTROLLERS}
    imp = np.array([[improvement(o, b) for o, b in zip(ours, base)]
                    for ours, base in zip(rmse["opi-pinnpc"], rmse["baseline"])])
    return BenchmarkSummary(masses, rmse, imp)
