import struct

import numpy as np
import pytest

from opipinnpc.pinn import CheckpointError, forward_batch, init_mlp, load_checkpoint, save_checkpoint
from opipinnpc.pinn.checkpoint import MAGIC, from_bytes, to_bytes


@pytest.fixture
def model():
    rng = np.random.default_rng(0)
    m = init_mlp((29, 16, 12), seed=3)
    m.biases = [rng.normal(size=b.shape) for b in m.biases]
    m.in_mean = rng.normal(size=29)
    m.out_scale = rng.uniform(0.1, 3.0, 12)
    m.rate_mean = rng.normal(size=12)
    m.t_range = (0.005, 0.05)
    m.loss_dt = 0.01
    return m


def test_round_trip_is_bitwise(tmp_path, model):
    path = tmp_path / "m.ckpt"
    save_checkpoint(model, path)
    back = load_checkpoint(path)
    assert to_bytes(back) == path.read_bytes()
    assert back.get_params().tobytes() == model.get_params().tobytes()
    for f in ("in_mean", "in_scale", "out_mean", "out_scale", "rate_mean", "rate_scale"):
        assert getattr(back, f).tobytes() == getattr(model, f).tobytes()
    assert (back.residual, back.time_index, back.t_range, back.loss_dt) == \
        (model.residual, model.time_index, model.t_range, model.loss_dt)
    V = np.random.default_rng(1).normal(size=(5, 29))
    assert forward_batch(back, V).tobytes() == forward_batch(model, V).tobytes()


def test_bad_magic(model):
    blob = b"NOTAPINN" + to_bytes(model)[len(MAGIC):]
    with pytest.raises(CheckpointError, match="magic"):
        from_bytes(blob)


def test_unsupported_version(model):
    blob = bytearray(to_bytes(model))
    blob[len(MAGIC):len(MAGIC) + 4] = struct.pack("<I", 99)
    with pytest.raises(CheckpointError, match="version 99"):
        from_bytes(bytes(blob))


@pytest.mark.parametrize("cut", [3, 20, 200, 1])
def test_truncation(model, cut):
    blob = to_bytes(model)
    with pytest.raises(CheckpointError, match="truncated"):
        from_bytes(blob[:len(blob) - cut] if cut > 1 else blob[:cut])


def test_trailing_bytes(model):
    with pytest.raises(CheckpointError, match="trailing"):
        from_bytes(to_bytes(model) + b"\x00")


def test_plain_form_flag_survives(model):
    m = init_mlp((5, 4, 3), residual=False)
    assert from_bytes(to_bytes(m)).residual is False
