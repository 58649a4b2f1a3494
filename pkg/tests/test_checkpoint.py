"""Checkpoint container: bit-exact round trips, corrupt-file diagnostics."""

import numpy as np
import pytest

from srt.tensor import Tensor, save_checkpoint, load_checkpoint, CheckpointError


def test_round_trip_preserves_values_and_meta(tmp_path):
    rng = np.random.default_rng(0)
    tensors = {
        "enc/w": rng.normal(size=(4, 7)).astype(np.float32),
        "enc/b": rng.normal(size=(7,)).astype(np.float32),
        "scale": np.float64(2.5).reshape(()),
    }
    meta = {"config": {"token_width": 192}, "step": 123}
    path = tmp_path / "model.ckpt"
    save_checkpoint(path, tensors, meta)
    got_meta, got = load_checkpoint(path)
    assert got_meta == meta
    for name, arr in tensors.items():
        assert got[name].dtype == arr.dtype
        assert np.array_equal(got[name], np.asarray(arr))


def test_accepts_tensor_objects(tmp_path):
    t = Tensor(np.arange(6, dtype=np.float32).reshape(2, 3), requires_grad=True)
    path = tmp_path / "t.ckpt"
    save_checkpoint(path, {"t": t})
    _, got = load_checkpoint(path)
    assert np.array_equal(got["t"], t.data)


def test_missing_file_reports_path(tmp_path):
    with pytest.raises(CheckpointError, match="nope.ckpt"):
        load_checkpoint(tmp_path / "nope.ckpt")


def test_corrupt_magic_rejected(tmp_path):
    path = tmp_path / "bad.ckpt"
    path.write_bytes(b"XXXX" + b"\0" * 32)
    with pytest.raises(CheckpointError, match="magic"):
        load_checkpoint(path)
