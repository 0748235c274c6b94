import json

import numpy as np
import pytest

from opipinnpc.harness import (
    BENCHMARK_COLUMNS,
    CONTROLLERS,
    ConfigError,
    FormatError,
    compute_metrics,
    default_config,
    derived_seed,
    improvement,
    parse_config,
    read_csv,
    read_log,
    run_benchmark,
    run_metrics,
    summarize,
    write_csv,
    write_log,
)
from opipinnpc.harness.cli import main
from opipinnpc.nmpc import ModelSurrogate
from opipinnpc.pinn import init_mlp, save_checkpoint
from opipinnpc.sim import STAT_FIELDS, TrajectoryLog

SHORT = """
[scenario]
seed = 3
duration = 1.5
eval_start = 0.5
payload_grid = 25, 50, 75, 100
[nmpc]
horizon = 4
"""


def test_config_requires_seed_and_rejects_unknown_keys():
    with pytest.raises(ConfigError, match="seed is required"):
        parse_config("[scenario]\nduration = 5\n")
    assert parse_config("", seed=9).seed == 9
    with pytest.raises(ConfigError, match="unknown key 'horizn'"):
        parse_config("[nmpc]\nhorizn = 5\n", seed=1)
    with pytest.raises(ConfigError, match="unknown section"):
        parse_config("[mpc]\nhorizon = 5\n", seed=1)
    with pytest.raises(ConfigError, match="horizon"):
        parse_config("[nmpc]\nhorizon = ten\n", seed=1)
    with pytest.raises(ConfigError):
        parse_config("[nmpc]\nhorizon = 0\n", seed=1)


def test_config_seed_override_and_digest():
    cfg = parse_config(SHORT)
    assert cfg.seed == 3 and cfg.with_seed(4).seed == 4
    assert parse_config(SHORT, seed=4).digest == cfg.with_seed(4).digest
    assert cfg.digest != cfg.with_seed(4).digest
    # the canonical text parses back to the same configuration
    assert parse_config(cfg.to_text()).digest == cfg.digest
    assert cfg.scenario().duration == 1.5 and cfg.nmpc().horizon == 4
    assert default_config(1)["scenario"]["payload_grid"] == [25.0, 37.5, 50.0, 62.5, 75.0, 87.5, 100.0]


def test_csv_round_trip_is_exact(tmp_path):
    rng = np.random.default_rng(0)
    A = rng.normal(size=(40, 5)) * 10.0 ** rng.integers(-300, 300, size=(40, 5))
    A[0] = [0.1, 1 / 3, np.pi, -0.0, 5e-324]
    cfg = default_config(1)
    path = write_csv(tmp_path / "a.csv", "numbers", cfg, list("abcde"), A)
    table = read_csv(path)
    assert table.kind == "numbers" and table.meta["config_sha256"] == cfg.digest and table.meta["seed"] == "1"
    assert table.array().tobytes() == A.tobytes()


def test_csv_format_errors(tmp_path):
    cfg = default_config(1)
    with pytest.raises(FormatError):
        write_csv(tmp_path / "a.csv", "x", cfg, ["a", "b"], [[1.0]])
    (tmp_path / "bare.csv").write_text("a,b\n1,2\n")
    with pytest.raises(FormatError, match="provenance"):
        read_csv(tmp_path / "bare.csv")
    with pytest.raises(FormatError, match="no such file"):
        read_csv(tmp_path / "missing.csv")


def test_log_round_trip(tmp_path):
    rng = np.random.default_rng(1)
    n = 7
    lg = TrajectoryLog(t=np.arange(n) * 0.01, x=rng.normal(size=(n, 12)), reference=rng.normal(size=(n, 12)),
                       u=rng.normal(size=(n, 12)), error=rng.normal(size=(n, 6)), stats=rng.normal(size=(n, len(STAT_FIELDS))),
                       footholds=np.zeros((n, 4, 3)), failed=False)
    back = read_log(write_log(tmp_path / "log.csv", lg, default_config(2)))
    for k in ("t", "x", "reference", "u", "error", "stats"):
        assert back[k].tobytes() == getattr(lg, k).tobytes()


def test_metrics_examples():
    t = np.arange(0, 2.0001, 0.01)
    ref = np.zeros((t.size, 12))
    m = compute_metrics(t, ref, ref)
    assert m.rmse_position == 0.0 and m.rmse_orientation == 0.0
    d = np.array([0.03, -0.04, 0.0, 0.1, 0.0, 0.0])
    x = ref.copy()
    x[:, 0:6] = d
    m = compute_metrics(t, x, ref, window_start=0.5)
    assert m.rmse_position == pytest.approx(0.05, rel=1e-12)
    assert m.rmse_orientation == pytest.approx(0.1, rel=1e-12)
    np.testing.assert_allclose(m.rmse_axis, np.abs(d), rtol=1e-12)
    assert improvement(0.5, 1.0) == 0.5 and improvement(1.0, 1.0) == 0.0
    with pytest.raises(ValueError, match="exceeds"):
        compute_metrics(t, x, ref, window_start=3.0)
    with pytest.raises(ValueError, match="aligned"):
        compute_metrics(t[:-1], x, ref)
    with pytest.raises(ValueError, match="empty"):
        compute_metrics([], np.zeros((0, 12)), np.zeros((0, 12)))


def test_diverged_run_scores_infinite_rmse():
    n = 20
    lg = TrajectoryLog(t=np.arange(n) * 0.01, x=np.ones((n, 12)), reference=np.zeros((n, 12)),
                       u=np.zeros((n, 12)), error=np.ones((n, 6)), stats=np.zeros((n, len(STAT_FIELDS))),
                       footholds=np.zeros((n, 4, 3)), failed=True)
    m = run_metrics(lg, eval_start=1.0)
    assert m.rmse_position == np.inf and m.rmse_orientation == np.inf


def test_benchmark_structure():
    cfg = parse_config(SHORT)
    params = cfg.robot_params()
    runs = run_benchmark(cfg, ModelSurrogate(params, cfg.schedule()))
    rows = [r for run in runs for r in run.rows()]
    assert len(rows) == 8 and all(len(r) == len(BENCHMARK_COLUMNS) for r in rows)
    assert [r[0] for r in rows] == [25.0, 25.0, 50.0, 50.0, 75.0, 75.0, 100.0, 100.0]
    assert [r[1] for r in rows] == list(CONTROLLERS) * 4
    s = summarize(rows)
    assert s.improvement.shape == (4, 2)
    assert len({derived_seed(3, i) for i in range(4)}) == 4
    with pytest.raises(ValueError, match="incomplete"):
        summarize(rows[:-1])


def test_cli_report_on_empty_directory(tmp_path, capsys):
    assert main(["report", "--out", str(tmp_path)]) == 2
    assert "nothing to report" in capsys.readouterr().err
    assert list(tmp_path.iterdir()) == []


def test_cli_errors_leave_no_outputs(tmp_path, capsys):
    bad = tmp_path / "bad.ini"
    bad.write_text("[nmpc]\nhorizn = 3\n")
    out = tmp_path / "run"
    assert main(["identify", "--config", str(bad), "--seed", "1", "--out", str(out)]) == 2
    assert "unknown key" in capsys.readouterr().err
    assert not out.exists()
    assert main(["benchmark", "--seed", "1", "--out", str(out), "--checkpoint", str(tmp_path / "none.ckpt")]) == 2
    assert not out.exists()
    junk = tmp_path / "junk.ckpt"
    junk.write_bytes(b"not a checkpoint")
    assert main(["track", "--seed", "1", "--out", str(out), "--checkpoint", str(junk)]) == 2
    assert "magic" in capsys.readouterr().err
    assert not out.exists()


def test_cli_identify_track_report(tmp_path, capsys):
    cfg = tmp_path / "short.ini"
    cfg.write_text(SHORT)
    out = tmp_path / "out"
    assert main(["identify", "--config", str(cfg), "--out", str(out), "--payload", "60"]) == 0
    rec = json.loads((out / "omega.json").read_text())
    assert abs(rec["m_p_hat"] - 60.0) < 0.6 and rec["seed"] == 3
    assert read_csv(out / "identify_trace.csv").kind == "identification"
    assert main(["track", "--config", str(cfg), "--out", str(out), "--payload", "60",
                 "--controller", "baseline"]) == 0
    lg = read_log(out / "track_baseline_60.csv")
    assert lg["x"].shape == (150, 12)
    assert main(["report", "--out", str(out)]) == 0
    assert (out / "plot_track_baseline_60_error.csv").is_file()
    assert "position RMSE" in (out / "report.txt").read_text()


def test_cli_benchmark_with_checkpoint(tmp_path):
    cfg = tmp_path / "tiny.ini"
    cfg.write_text(SHORT.replace("25, 50, 75, 100", "40") + "[pinn]\nhidden = 8\n")
    ckpt = tmp_path / "net.ckpt"
    save_checkpoint(init_mlp((29, 8, 12), seed=0), ckpt)
    out = tmp_path / "out"
    assert main(["benchmark", "--config", str(cfg), "--out", str(out), "--checkpoint", str(ckpt)]) == 0
    table = read_csv(out / "benchmark.csv")
    assert tuple(table.columns) == BENCHMARK_COLUMNS and len(table.rows) == 2
    assert main(["report", "--out", str(out)]) == 0
    assert read_csv(out / "plot_rmse_vs_mass.csv").array().shape == (1, 7)
