"""Desk-scale dataset and trained surrogate shared by the acceptance suite.

Training on the full schedule takes about half an hour on one core, so
the result is cached in ``tests/.cache``. The cache key covers the run
configuration and every source file that feeds collection or training, so
any change there retrains. Run this file directly to build the cache ahead
of the suite.
"""

from __future__ import annotations

import hashlib
import logging
import sys
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

import opipinnpc
from opipinnpc.harness import default_config, read_csv, write_csv
from opipinnpc.harness.pipeline import collect_from_config, train_from_config
from opipinnpc.pinn import MlpModel, load_checkpoint, save_checkpoint
from opipinnpc.sim import Dataset

SEED = 0
HELD_OUT = 0.1
CACHE = Path(__file__).parent / ".cache"
HISTORY_COLUMNS = ["epoch", "phase", "mse_data", "mse_phy", "total"]
# the controller stack and the CLI do not touch the dataset or the optimiser
NOT_IN_KEY = ("nmpc/", "harness/benchmark.py", "harness/cli.py", "harness/io.py", "harness/metrics.py")


@dataclass
class TrainedSurrogate:
    model: MlpModel
    train: Dataset
    held_out: Dataset
    history: list[tuple]
    seconds: float

    @property
    def final_total(self) -> float:
        return float(self.history[-1][4])


def config():
    return default_config(SEED)


def cache_key(cfg) -> str:
    h = hashlib.sha256(cfg.digest.encode())
    root = Path(opipinnpc.__file__).parent
    for path in sorted(root.rglob("*.py")):
        rel = path.relative_to(root).as_posix()
        if rel.startswith(NOT_IN_KEY):
            continue
        h.update(rel.encode())
        h.update(path.read_bytes())
    return h.hexdigest()[:20]


def dataset_split(cfg) -> tuple[Dataset, Dataset]:
    data = collect_from_config(cfg)
    return data.split(1.0 - HELD_OUT, seed=cfg.seed)


def trained_surrogate(log=print, log_every: int = 0) -> TrainedSurrogate:
    cfg = config()
    train_set, held_out = dataset_split(cfg)
    key = cache_key(cfg)
    ckpt, hist_path = CACHE / f"surrogate-{key}.ckpt", CACHE / f"history-{key}.csv"
    secs_path = CACHE / f"seconds-{key}.txt"
    if ckpt.is_file() and hist_path.is_file():
        seconds = float(secs_path.read_text()) if secs_path.is_file() else float("nan")
        log(f"using cached surrogate {ckpt.name} (trained in {seconds:.0f} s)")
        return TrainedSurrogate(load_checkpoint(ckpt), train_set, held_out, read_csv(hist_path).rows, seconds)
    log(f"training surrogate on {len(train_set)} samples (cache miss, key {key})")
    t0 = time.perf_counter()
    model, hist = train_from_config(cfg, train_set.inputs(), train_set.Y, log_every)
    seconds = time.perf_counter() - t0
    CACHE.mkdir(exist_ok=True)
    rows = list(zip(hist.epoch, hist.phase, hist.mse_data, hist.mse_phy, hist.total))
    # checkpoint last: its presence marks a complete cache entry
    write_csv(hist_path, "training", cfg, HISTORY_COLUMNS, rows)
    secs_path.write_text(f"{seconds:.1f}\n")
    save_checkpoint(model, ckpt)
    return TrainedSurrogate(model, train_set, held_out, read_csv(hist_path).rows, seconds)


if __name__ == "__main__":
    logging.basicConfig(level=logging.INFO, format="%(asctime)s %(message)s")
    ts = trained_surrogate(log_every=100)
    print(f"final total loss {ts.final_total:.4e} after {ts.seconds:.0f} s", file=sys.stderr)
