"""Command-line entry point.

    opipinnpc collect   --config run.ini --out data/
    opipinnpc identify  --config run.ini --payload 50 --out id/
    opipinnpc train     --config run.ini --dataset data/dataset.csv --out model/
    opipinnpc track     --config run.ini --checkpoint model/surrogate.ckpt --payload 50 --out runs/
    opipinnpc benchmark --config run.ini --checkpoint model/surrogate.ckpt --out bench/
    opipinnpc report    --out bench/

``--config`` may be omitted when ``--seed`` is given; all defaults are then used.
On any error the files this invocation created are removed and the exit
status is nonzero.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from ..opi import IdentificationError
from ..pinn import CheckpointError, TrainingError, load_checkpoint, save_checkpoint
from ..sim import identify_payload, run_scenario
from .benchmark import BENCHMARK_COLUMNS, CONTROLLERS, make_controller, run_benchmark, run_metrics, summarize
from .config import ConfigError, RunConfig, default_config, load_config
from .io import FormatError, read_csv, read_dataset, read_log, write_csv, write_dataset, write_log
from .metrics import compute_metrics
from .pipeline import collect_from_config, train_from_config

log = logging.getLogger("opipinnpc")


class CliError(RuntimeError):
    pass


class Outputs:
    """Tracks files created by one command so a failure can remove them."""

    def __init__(self, out_dir: Path):
        self.out_dir = out_dir
        self.created_dir = not out_dir.exists()
        self.paths: list[Path] = []

    def path(self, name: str) -> Path:
        self.out_dir.mkdir(parents=True, exist_ok=True)
        p = self.out_dir / name
        self.paths.append(p)
        return p

    def discard(self):
        for p in self.paths:
            p.unlink(missing_ok=True)
        if self.created_dir and self.out_dir.is_dir() and not any(self.out_dir.iterdir()):
            self.out_dir.rmdir()


def _config(args) -> RunConfig:
    if args.config is None:
        if args.seed is None:
            raise ConfigError("either --config or --seed is required")
        return default_config(args.seed)
    return load_config(args.config, args.seed)


def _checkpoint(args):
    if args.checkpoint is None:
        raise CliError("--checkpoint is required for the predictive controller")
    return load_checkpoint(args.checkpoint)


def _mass_tag(m: float) -> str:
    return f"{m:g}".replace(".", "p")


def cmd_collect(args, cfg: RunConfig, out: Outputs):
    data = collect_from_config(cfg)
    if data.skipped:
        log.warning("%d payload instances skipped after failed identification", len(data.skipped))
    path = write_dataset(out.path("dataset.csv"), data, cfg)
    print(f"wrote {len(data)} samples from {cfg['pinn']['instances'] - len(data.skipped)} payload instances to {path}")


def cmd_identify(args, cfg: RunConfig, out: Outputs):
    payload = cfg.payload(args.payload)
    params = cfg.robot_params()
    # simulated truth seeds the z diagnostic in the trace; the estimator never reads it
    res = identify_payload(params, payload, true_p=payload.omega(params).p_hat, **cfg.identify_kwargs())
    tr = res.trace.arrays()
    rows = np.hstack([tr["t"][:, None], tr["e_bar"], tr["p_hat"], tr["p_est"],
                      np.linalg.norm(tr["z"], axis=1)[:, None]])
    cols = ["t", "e_bar_x", "e_bar_y", "e_bar_z", "p_hat_x", "p_hat_y", "p_hat_z",
            "p_est_x", "p_est_y", "p_est_z", "z_norm"]
    write_csv(out.path("identify_trace.csv"), "identification", cfg, cols, rows)
    record = {
        "config_sha256": cfg.digest, "seed": cfg.seed, "payload_mass": payload.m_p,
        "m_p_hat": res.estimate.m_p_hat, "p_hat": res.estimate.p_hat.tolist(),
        "converged": res.converged, "iterations": res.iterations, "time": res.time,
    }
    path = out.path("omega.json")
    path.write_text(json.dumps(record, indent=2) + "\n")
    print(f"m_p_hat = {res.estimate.m_p_hat:.6g} kg, p_hat = {np.array2string(res.estimate.p_hat, precision=6)}"
          f" after {res.time:.2f} s; record in {path}")


def cmd_train(args, cfg: RunConfig, out: Outputs):
    dataset = Path(args.dataset) if args.dataset else Path(args.out) / "dataset.csv"
    V, Y = read_dataset(dataset)
    try:
        model, hist = train_from_config(cfg, V, Y)
    except TrainingError as exc:
        # kept on purpose (not tracked): the last finite model, for inspection
        out.out_dir.mkdir(parents=True, exist_ok=True)
        save_checkpoint(exc.last_good, out.out_dir / "surrogate_last_good.ckpt")
        raise
    save_checkpoint(model, out.path("surrogate.ckpt"))
    write_csv(out.path("train_loss.csv"), "training", cfg, ["epoch", "phase", "mse_data", "mse_phy", "total"],
              zip(hist.epoch, hist.phase, hist.mse_data, hist.mse_phy, hist.total))
    print(f"final loss {hist.final_total:.4e} (data {hist.mse_data[-1]:.4e}, physics {hist.mse_phy[-1]:.4e});"
          f" checkpoint in {out.out_dir / 'surrogate.ckpt'}")


def cmd_track(args, cfg: RunConfig, out: Outputs):
    surrogate = _checkpoint(args) if args.controller == "opi-pinnpc" else None
    params = cfg.robot_params()
    payload = cfg.payload(args.payload)
    omega_hat = identify_payload(params, payload, **cfg.identify_kwargs()).estimate
    ctrl = make_controller(args.controller, cfg, omega_hat, surrogate)
    lg = run_scenario(cfg.scenario(payload.m_p), ctrl, params)
    path = write_log(out.path(f"track_{args.controller}_{_mass_tag(payload.m_p)}.csv"), lg, cfg)
    m = run_metrics(lg, cfg["scenario"]["eval_start"])
    status = "diverged" if lg.failed else "ok"
    print(f"{args.controller} at {payload.m_p:g} kg: position RMSE {m.rmse_position:.5f} m,"
          f" orientation RMSE {m.rmse_orientation:.5f} rad ({status}); log in {path}")


def cmd_benchmark(args, cfg: RunConfig, out: Outputs):
    surrogate = _checkpoint(args)
    runs = run_benchmark(cfg, surrogate)
    rows = [r for run in runs for r in run.rows()]
    path = write_csv(out.path("benchmark.csv"), "benchmark", cfg, BENCHMARK_COLUMNS, rows)
    if args.logs:
        for run in runs:
            for name in CONTROLLERS:
                write_log(out.path(f"track_{name}_{_mass_tag(run.mass)}.csv"), run.logs[name], cfg)
    s = summarize(rows)
    print(_summary_table(s))
    print(f"wrote {path}")


def _summary_table(s) -> str:
    lines = [f"{'mass':>7} {'pos base':>10} {'pos ours':>10} {'gain':>7} {'ori base':>10} {'ori ours':>10} {'gain':>7}"]
    for i, m in enumerate(s.masses):
        b, o, g = s.rmse["baseline"][i], s.rmse["opi-pinnpc"][i], s.improvement[i]
        lines.append(f"{m:7.2f} {b[0]:10.5f} {o[0]:10.5f} {g[0]:7.1%} {b[1]:10.5f} {o[1]:10.5f} {g[1]:7.1%}")
    mi = s.mean_improvement
    lines.append(f"mean improvement: position {mi[0]:.1%}, orientation {mi[1]:.1%};"
                 f" strictly better at every payload: {'yes' if s.strictly_better else 'no'}")
    lines.append("baseline = identified feedforward + PID (stand-in for the adaptive controller)")
    return "\n".join(lines)


def cmd_report(args, cfg: RunConfig | None, out: Outputs):
    src = Path(args.out)
    bench = src / "benchmark.csv"
    tracks = sorted(src.glob("track_*.csv")) if src.is_dir() else []
    if not bench.is_file() and not tracks:
        raise CliError(f"nothing to report in {src}: no benchmark.csv or track_*.csv")
    text = []
    if bench.is_file():
        table = read_csv(bench)
        s = summarize(table.rows)
        text.append(f"benchmark (config {table.meta.get('config_sha256', '?')[:12]}, seed {table.meta.get('seed', '?')})")
        text.append(_summary_table(s))
        cols = ["payload_mass", "pos_baseline", "pos_ours", "ori_baseline", "ori_ours",
                "improvement_pos", "improvement_ori"]
        rows = np.column_stack([s.masses, s.rmse["baseline"][:, 0], s.rmse["opi-pinnpc"][:, 0],
                                s.rmse["baseline"][:, 1], s.rmse["opi-pinnpc"][:, 1], s.improvement])
        write_csv(out.path("plot_rmse_vs_mass.csv"), "plot-data", _report_cfg(table, cfg), cols, rows)
    for tr in tracks:
        lg = read_log(tr)
        m = compute_metrics(lg["t"], lg["x"], lg["reference"], min(1.0, lg["t"][-1]))
        rows = np.column_stack([m.t, m.position_norm, m.orientation_norm, m.error])
        cols = ["t", "position_error_norm", "orientation_error_norm", "e_x", "e_y", "e_z", "e_roll", "e_pitch", "e_yaw"]
        write_csv(out.path(f"plot_{tr.stem}_error.csv"), "plot-data", _report_cfg(read_csv(tr), cfg), cols, rows)
        text.append(f"{tr.name}: position RMSE {m.rmse_position:.5f} m, orientation RMSE {m.rmse_orientation:.5f} rad")
    summary = out.path("report.txt")
    summary.write_text("\n".join(text) + "\n")
    print("\n".join(text))


class _EchoConfig:
    """Provenance of an input file, reused for files derived from it."""

    def __init__(self, meta):
        self.digest = meta.get("config_sha256", "unknown")
        self.seed = meta.get("seed", "unknown")

    def to_text(self) -> str:
        return "(see source file)\n"


def _report_cfg(table, cfg):
    return cfg if cfg is not None else _EchoConfig(table.meta)


COMMANDS = {"collect": cmd_collect, "identify": cmd_identify, "train": cmd_train,
            "track": cmd_track, "benchmark": cmd_benchmark, "report": cmd_report}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="opipinnpc", description=__doc__.split("\n")[0])
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, payload=False, checkpoint=False):
        p.add_argument("--config", help="INI run configuration")
        p.add_argument("--seed", type=int, help="overrides [scenario] seed")
        p.add_argument("--out", default=".", help="output directory (default: current)")
        if payload:
            p.add_argument("--payload", type=float, help="payload mass in kg (default: [plant] payload_mass)")
        if checkpoint:
            p.add_argument("--checkpoint", help="trained surrogate checkpoint")
        return p

    common(sub.add_parser("collect", help="collect a training dataset"))
    common(sub.add_parser("identify", help="identify one payload"), payload=True)
    tp = common(sub.add_parser("train", help="train the surrogate"))
    tp.add_argument("--dataset", help="dataset CSV (default: <out>/dataset.csv)")
    kp = common(sub.add_parser("track", help="closed-loop run for one payload"), payload=True, checkpoint=True)
    kp.add_argument("--controller", choices=CONTROLLERS, default="opi-pinnpc")
    bp = common(sub.add_parser("benchmark", help="payload sweep for both controllers"), checkpoint=True)
    bp.add_argument("--logs", action="store_true", help="also write every trajectory log")
    common(sub.add_parser("report", help="summary tables and plot data from an output directory"))
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    out = Outputs(Path(args.out))
    try:
        if args.command == "report":
            cfg = _config(args) if (args.config or args.seed is not None) else None
        else:
            cfg = _config(args)
        COMMANDS[args.command](args, cfg, out)
    except (ConfigError, FormatError, CheckpointError, IdentificationError, TrainingError,
            CliError, ValueError, OSError) as exc:
        out.discard()
        print(f"opipinnpc {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except BaseException:
        out.discard()
        raise
    return 0
