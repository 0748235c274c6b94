"""INI run configuration: a fixed schema, strict parsing and a canonical echo.

Every key has a type and a default, and unknown sections or keys are errors.
The resolved configuration is rendered back to INI text in schema order;
that text and its SHA-256 go into the header of every output file.
"""

from __future__ import annotations

import configparser
import hashlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..control import ForceBounds, PidState
from ..model import GaitSchedule, PayloadTruth, RobotParams
from ..nmpc import AdmmSettings, NmpcConfig
from ..pinn import TrainConfig
from ..sim import DatasetConfig, ReferenceGenerator, Scenario, orientation_from_labels


class ConfigError(ValueError):
    pass


def _floats(n=None):
    def parse(text: str):
        vals = [float(v) for v in text.replace(",", " ").split()]
        if n is not None and len(vals) != n:
            raise ValueError(f"expected {n} numbers, got {len(vals)}")
        if not vals:
            raise ValueError("expected at least one number")
        return vals
    parse.__name__ = "floats" if n is None else f"{n} floats"
    return parse


def _ints(text: str):
    vals = [int(v) for v in text.replace(",", " ").split()]
    if not vals:
        raise ValueError("expected at least one integer")
    return vals


def _words(text: str):
    return [w for w in text.replace(",", " ").split()]


def _fmt(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (list, tuple)):
        return ", ".join(_fmt(v) for v in value)
    if isinstance(value, float):
        return repr(value)
    return str(value)


# section -> key -> (parser, default); None as default means required
SCHEMA: dict[str, dict[str, tuple]] = {
    "plant": {
        "mass": (float, 50.0),
        "inertia_diag": (_floats(3), [1.2, 3.0, 3.2]),
        "leg_mass": (float, 1.0),
        "g": (float, 9.81),
        "payload_mass": (float, 50.0),
        "payload_offset": (_floats(3), [0.03, 0.015, 0.05]),
    },
    "gait": {
        "period": (float, 0.5),
        "duty": (float, 0.5),
        "phase_offsets": (_floats(4), [0.0, 0.5, 0.5, 0.0]),
    },
    "identifier": {
        "w": (float, 0.6),
        "v": (float, 0.8),
        "k": (float, 1.7),
        "e_threshold": (float, 1e-3),
        "settle_time": (float, 2.0),
        "mass_window": (float, 1.0),
        "max_time": (float, 30.0),
    },
    "pinn": {
        "hidden": (_ints, [96, 96, 96]),
        "adam_lr": (float, 1e-3),
        "adam_epochs": (int, 5000),
        "batch_size": (int, 256),
        "lbfgs_memory": (int, 20),
        "lbfgs_max_iter": (int, 200),
        "physics_weight": (float, 1.0),
        "n_collocation": (int, 0),
        "collocation_margin": (float, 0.05),
        "t_min": (float, 0.005),
        "t_max": (float, 0.05),
        "instances": (int, 20),
        "instance_duration": (float, 5.0),
        "mass_min": (float, 25.0),
        "mass_max": (float, 100.0),
        "excitation_std": (float, 25.0),
        "jitter_fraction": (float, 0.5),
    },
    "nmpc": {
        "horizon": (int, 10),
        "T": (float, 0.01),
        "q": (_floats(12), [float(v) for v in NmpcConfig().Q]),
        "r": (float, float(NmpcConfig().R[0])),
        "sqp_iterations": (int, 2),
        "state_penalty": (float, 1e4),
        "rho": (float, 0.1),
        "eps_abs": (float, 1e-6),
        "eps_rel": (float, 1e-6),
        "max_iter": (int, 4000),
        "force_min": (_floats(3), [-400.0, -400.0, 0.0]),
        "force_max": (_floats(3), [400.0, 400.0, 1500.0]),
    },
    "pid": {
        "kp": (_floats(6), [200.0, 200.0, 200.0, 80.0, 80.0, 80.0]),
        "ki": (_floats(6), [10.0] * 6),
        "kd": (_floats(6), [20.0] * 6),
        "integral_limit": (_floats(6), [0.5] * 6),
    },
    "scenario": {
        "seed": (int, None),
        "duration": (float, 10.0),
        "T": (float, 0.01),
        "origin": (_floats(3), [0.0, 0.0, 0.38]),
        "velocity": (_floats(3), [0.2, 0.0, 0.0]),
        "orientation": (_floats(3), [-0.05, 2.95, 0.0]),
        "orientation_order": (_words, ["pitch", "yaw", "roll"]),
        "eval_start": (float, 1.0),
        "payload_grid": (_floats(), [25.0, 37.5, 50.0, 62.5, 75.0, 87.5, 100.0]),
        "workers": (int, 1),
    },
}

# configparser lower-cases keys; keep the schema spelling in the echo
_KEYS = {s: {k.lower(): k for k in keys} for s, keys in SCHEMA.items()}


@dataclass
class RunConfig:
    """Resolved configuration: ``values[section][key]`` for every schema key."""

    values: dict

    def __getitem__(self, section: str) -> dict:
        return self.values[section]

    @property
    def seed(self) -> int:
        return int(self.values["scenario"]["seed"])

    def with_seed(self, seed: int) -> "RunConfig":
        vals = {s: dict(v) for s, v in self.values.items()}
        vals["scenario"]["seed"] = int(seed)
        return RunConfig(vals)

    def to_text(self) -> str:
        lines = []
        for section, keys in SCHEMA.items():
            lines.append(f"[{section}]")
            for key in keys:
                lines.append(f"{key} = {_fmt(self.values[section][key])}")
            lines.append("")
        return "\n".join(lines)

    @property
    def digest(self) -> str:
        return hashlib.sha256(self.to_text().encode()).hexdigest()

    # -- builders for the library objects ---------------------------------

    def robot_params(self) -> RobotParams:
        p = self.values["plant"]
        return RobotParams(m=p["mass"], inertia=np.diag(p["inertia_diag"]),
                           leg_masses=np.full(4, p["leg_mass"]), g=p["g"])

    def payload(self, mass: float | None = None) -> PayloadTruth:
        p = self.values["plant"]
        return PayloadTruth(p["payload_mass"] if mass is None else float(mass), p["payload_offset"])

    def schedule(self) -> GaitSchedule:
        g = self.values["gait"]
        return GaitSchedule(period=g["period"], duty=g["duty"], phase_offsets=g["phase_offsets"])

    def identify_kwargs(self) -> dict:
        i = self.values["identifier"]
        return dict(W=i["w"], V=i["v"], K=i["k"], e_threshold=i["e_threshold"],
                    settle_time=i["settle_time"], mass_window=i["mass_window"], max_time=i["max_time"])

    def reference(self) -> ReferenceGenerator:
        s = self.values["scenario"]
        return ReferenceGenerator(origin=s["origin"], velocity=s["velocity"],
                                  orientation=orientation_from_labels(s["orientation"], s["orientation_order"]))

    def scenario(self, mass: float | None = None, seed: int | None = None) -> Scenario:
        s = self.values["scenario"]
        return Scenario(payload=self.payload(mass), duration=s["duration"], T=s["T"],
                        reference=self.reference(), seed=self.seed if seed is None else seed,
                        schedule=self.schedule())

    def pid(self) -> PidState:
        p = self.values["pid"]
        return PidState(kp=p["kp"], ki=p["ki"], kd=p["kd"], integral_limit=p["integral_limit"])

    def bounds(self) -> ForceBounds:
        n = self.values["nmpc"]
        return ForceBounds(lower=n["force_min"], upper=n["force_max"])

    def nmpc(self) -> NmpcConfig:
        n = self.values["nmpc"]
        admm = AdmmSettings(rho=n["rho"], eps_abs=n["eps_abs"], eps_rel=n["eps_rel"], max_iter=n["max_iter"])
        return NmpcConfig(horizon=n["horizon"], T=n["T"], Q=n["q"], R=n["r"],
                          u_min=np.tile(n["force_min"], 4), u_max=np.tile(n["force_max"], 4),
                          state_penalty=n["state_penalty"], sqp_iterations=n["sqp_iterations"], admm=admm)

    def train_config(self) -> TrainConfig:
        p = self.values["pinn"]
        return TrainConfig(adam_lr=p["adam_lr"], adam_epochs=p["adam_epochs"], batch_size=p["batch_size"],
                           lbfgs_memory=p["lbfgs_memory"], lbfgs_max_iter=p["lbfgs_max_iter"],
                           physics_weight=p["physics_weight"],
                           n_collocation=p["n_collocation"] or None, seed=self.seed)

    def dataset_config(self) -> DatasetConfig:
        p = self.values["pinn"]
        return DatasetConfig(duration=p["instance_duration"], T=self.values["scenario"]["T"],
                             jitter_fraction=p["jitter_fraction"], T_range=(p["t_min"], p["t_max"]),
                             excitation_std=p["excitation_std"], seed=self.seed,
                             identify_kwargs=self.identify_kwargs())

    def surrogate_sizes(self) -> tuple[int, ...]:
        return (29, *self.values["pinn"]["hidden"], 12)


def parse_config(text: str, seed: int | None = None, source: str = "<config>") -> RunConfig:
    """Parse INI ``text``; ``seed`` overrides (or supplies) ``[scenario] seed``."""
    cp = configparser.ConfigParser(interpolation=None, default_section="__none__")
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from exc
    values = {}
    for section in cp.sections():
        if section not in SCHEMA:
            raise ConfigError(f"{source}: unknown section [{section}] (known: {', '.join(SCHEMA)})")
    for section, keys in SCHEMA.items():
        given = dict(cp[section]) if cp.has_section(section) else {}
        for raw in given:
            if raw not in _KEYS[section]:
                raise ConfigError(f"{source}: unknown key {raw!r} in [{section}]")
        out = {}
        for key, (parse, default) in keys.items():
            if key.lower() in given:
                try:
                    out[key] = parse(given[key.lower()])
                except ValueError as exc:
                    raise ConfigError(f"{source}: [{section}] {key}: {exc}") from exc
            else:
                out[key] = list(default) if isinstance(default, list) else default
        values[section] = out
    if seed is not None:
        values["scenario"]["seed"] = int(seed)
    if values["scenario"]["seed"] is None:
        raise ConfigError(f"{source}: [scenario] seed is required (or pass --seed)")
    cfg = RunConfig(values)
    _validate(cfg, source)
    return cfg


def _validate(cfg: RunConfig, source: str):
    try:
        cfg.robot_params()
        cfg.schedule()
        cfg.pid()
        cfg.bounds()
        cfg.nmpc()
        cfg.train_config()
        cfg.scenario()
    except ValueError as exc:
        raise ConfigError(f"{source}: {exc}") from exc
    s = cfg["scenario"]
    if s["workers"] < 1:
        raise ConfigError(f"{source}: [scenario] workers must be at least 1")
    if not 0 <= s["eval_start"] < s["duration"]:
        raise ConfigError(f"{source}: [scenario] eval_start must lie inside the run")
    if any(m < 0 for m in s["payload_grid"]):
        raise ConfigError(f"{source}: payload masses must be non-negative")
    p = cfg["pinn"]
    if p["instances"] < 1 or not 0 <= p["mass_min"] <= p["mass_max"]:
        raise ConfigError(f"{source}: [pinn] needs at least one instance and a valid mass range")


def load_config(path, seed: int | None = None) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror or exc}") from exc
    return parse_config(text, seed, str(path))


def default_config(seed: int) -> RunConfig:
    return parse_config("", seed)
