import numpy as np
import pytest

from bandfuse.nn.checkpoint import (
    CheckpointError,
    load_checkpoint,
    save_checkpoint,
)
from bandfuse.nn.layers import Conv3x3, Dense, Elu, MaxPool2x2, Sigmoid
from bandfuse.rng import Xorshift64Star


def _layers(seed=0):
    rng = Xorshift64Star(seed)
    return [Dense(3, 4, rng), Elu(), Conv3x3(2, 2, rng), MaxPool2x2(), Sigmoid()]


def test_round_trip_exact_float32(tmp_path):
    src = _layers(1)
    path = tmp_path / "m.bfnn"
    save_checkpoint(src, path)
    dst = _layers(2)
    load_checkpoint(dst, path)
    for a, b in zip(src, dst):
        for pa, pb in zip(a.params(), b.params()):
            np.testing.assert_array_equal(
                pa.value.astype(np.float32), pb.value.astype(np.float32))


def test_save_is_deterministic(tmp_path):
    p1, p2 = tmp_path / "a.bfnn", tmp_path / "b.bfnn"
    save_checkpoint(_layers(3), p1)
    save_checkpoint(_layers(3), p2)
    assert p1.read_bytes() == p2.read_bytes()


def test_bad_magic(tmp_path):
    path = tmp_path / "m.bfnn"
    save_checkpoint(_layers(0), path)
    data = bytearray(path.read_bytes())
    data[:4] = b"XXXX"
    path.write_bytes(bytes(data))
    with pytest.raises(CheckpointError, match="magic"):
        load_checkpoint(_layers(0), path)


def test_bad_version(tmp_path):
    path = tmp_path / "m.bfnn"
    save_checkpoint(_layers(0), path)
    data = bytearray(path.read_bytes())
    data[4] = 9
    path.write_bytes(bytes(data))
    with pytest.raises(CheckpointError, match="version"):
        load_checkpoint(_layers(0), path)


def test_layer_count_mismatch(tmp_path):
    path = tmp_path / "m.bfnn"
    save_checkpoint(_layers(0), path)
    with pytest.raises(CheckpointError, match="layers"):
        load_checkpoint(_layers(0)[:-1], path)


def test_shape_mismatch(tmp_path):
    path = tmp_path / "m.bfnn"
    rng = Xorshift64Star(0)
    save_checkpoint([Dense(3, 4, rng)], path)
    with pytest.raises(CheckpointError, match="shape"):
        load_checkpoint([Dense(4, 3, Xorshift64Star(1))], path)


def test_truncated_payload(tmp_path):
    path = tmp_path / "m.bfnn"
    save_checkpoint(_layers(0), path)
    path.write_bytes(path.read_bytes()[:-5])
    with pytest.raises(CheckpointError, match="truncated"):
        load_checkpoint(_layers(0), path)


def test_trailing_bytes_rejected(tmp_path):
    path = tmp_path / "m.bfnn"
    save_checkpoint(_layers(0), path)
    path.write_bytes(path.read_bytes() + b"\x00\x00")
    with pytest.raises(CheckpointError, match="trailing"):
        load_checkpoint(_layers(0), path)
