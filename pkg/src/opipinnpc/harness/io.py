"""CSV files with a commented provenance header.

Every file starts with ``#`` lines: a kind tag, the config SHA-256, the seed,
then the resolved configuration echoed line by line. One column-name row
follows, then data rows. Numbers are written with 17 significant digits, so
a write/read round trip is exact.

Column schemas:

* dataset: the 29 surrogate inputs (state, forces, T, payload estimate)
  followed by the 12 next-state labels.
* trajectory log: ``t``, 12 state, 12 expanded reference, 12 input,
  6 pose error, then the solver statistics.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..model import LEG_NAMES
from ..sim import STAT_FIELDS, Dataset, TrajectoryLog

STATE_NAMES = ("x", "y", "z", "roll", "pitch", "yaw", "vx", "vy", "vz", "wx", "wy", "wz")
INPUT_NAMES = tuple(f"{leg}_f{a}" for leg in LEG_NAMES for a in "xyz")
OMEGA_NAMES = ("m_p_hat", "p_hat_x", "p_hat_y", "p_hat_z")
ERROR_NAMES = tuple(f"e_{n}" for n in STATE_NAMES[:6])

DATASET_COLUMNS = STATE_NAMES + INPUT_NAMES + ("T",) + OMEGA_NAMES + tuple(f"next_{n}" for n in STATE_NAMES)
LOG_COLUMNS = (("t",) + STATE_NAMES + tuple(f"ref_{n}" for n in STATE_NAMES) + INPUT_NAMES
               + ERROR_NAMES + STAT_FIELDS)


class FormatError(ValueError):
    pass


def fmt(v) -> str:
    if isinstance(v, (str, np.str_)):
        return str(v)
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return "%.17g" % float(v)


@dataclass
class CsvTable:
    kind: str
    meta: dict
    columns: list
    rows: list

    def array(self) -> np.ndarray:
        return np.array([[float(v) for v in r] for r in self.rows], dtype=float).reshape(len(self.rows), len(self.columns))

    def column(self, name: str) -> list:
        i = self.columns.index(name)
        return [r[i] for r in self.rows]


def header_lines(kind: str, config) -> list[str]:
    lines = [f"# opipinnpc {kind}", f"# config_sha256: {config.digest}", f"# seed: {config.seed}", "# config:"]
    lines += [f"#   {line}" if line else "#" for line in config.to_text().rstrip("\n").split("\n")]
    return lines


def write_csv(path, kind: str, config, columns, rows) -> Path:
    """Write rows (sequences of numbers or strings) under the provenance header."""
    path = Path(path)
    columns = list(columns)
    with open(path, "w", newline="") as fh:
        for line in header_lines(kind, config):
            fh.write(line + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(columns)
        for r in rows:
            r = list(r)
            if len(r) != len(columns):
                raise FormatError(f"row has {len(r)} fields, header has {len(columns)}")
            w.writerow([fmt(v) for v in r])
    return path


def read_csv(path) -> CsvTable:
    path = Path(path)
    if not path.is_file():
        raise FormatError(f"no such file: {path}")
    meta, kind = {}, None
    with open(path, newline="") as fh:
        lines = fh.read().split("\n")
    body = []
    for line in lines:
        if line.startswith("#"):
            text = line[1:].strip()
            if text.startswith("opipinnpc "):
                kind = text.split(" ", 1)[1]
            elif ":" in text and not line.startswith("#   "):
                key, _, val = text.partition(":")
                meta[key.strip()] = val.strip()
        elif line:
            body.append(line)
    if kind is None:
        raise FormatError(f"{path}: missing provenance header")
    if not body:
        raise FormatError(f"{path}: no column header")
    parsed = list(csv.reader(body))
    columns, rows = parsed[0], parsed[1:]
    for i, r in enumerate(rows):
        if len(r) != len(columns):
            raise FormatError(f"{path}: row {i + 1} has {len(r)} fields, header has {len(columns)}")
    return CsvTable(kind, meta, columns, rows)


def write_dataset(path, data: Dataset, config) -> Path:
    rows = np.hstack([data.inputs(), data.Y])
    return write_csv(path, "dataset", config, DATASET_COLUMNS, rows)


def read_dataset(path) -> tuple[np.ndarray, np.ndarray]:
    """(inputs, labels) from a dataset CSV."""
    table = read_csv(path)
    if table.kind != "dataset" or tuple(table.columns) != DATASET_COLUMNS:
        raise FormatError(f"{path}: not a dataset file")
    A = table.array()
    if A.shape[0] == 0:
        raise FormatError(f"{path}: dataset is empty")
    return A[:, :29], A[:, 29:]


def log_rows(log: TrajectoryLog) -> np.ndarray:
    return np.hstack([log.t[:, None], log.x, log.reference, log.u, log.error, log.stats])


def write_log(path, log: TrajectoryLog, config) -> Path:
    return write_csv(path, "trajectory", config, LOG_COLUMNS, log_rows(log))


def read_log(path) -> dict[str, np.ndarray]:
    """Trajectory log columns grouped as ``t, x, reference, u, error, stats``."""
    table = read_csv(path)
    if table.kind != "trajectory" or tuple(table.columns) != LOG_COLUMNS:
        raise FormatError(f"{path}: not a trajectory log")
    A = table.array()
    return {"t": A[:, 0], "x": A[:, 1:13], "reference": A[:, 13:25], "u": A[:, 25:37],
            "error": A[:, 37:43], "stats": A[:, 43:]}
