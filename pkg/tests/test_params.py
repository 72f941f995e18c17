"""ParamSet and checkpoint format contracts."""

import numpy as np
import pytest

from mumt import autodiff as ad
from mumt.autodiff import Tape, backward
from mumt.params import CHECKPOINT_MAGIC, ParamSet


def _sample_params(seed=0):
    rng = np.random.default_rng(seed)
    ps = ParamSet(rng_seed_used=seed)
    ps.add("emb", rng.normal(size=(7, 3)).astype(np.float32))
    ps.add("scalar", np.float32(2.5))
    ps.add("bias", rng.normal(size=(5,)).astype(np.float32))
    return ps


def test_duplicate_name_rejected():
    ps = ParamSet()
    ps.add("w", np.zeros(1, dtype=np.float32))
    with pytest.raises(ValueError, match="duplicate"):
        ps.add("w", np.zeros(1, dtype=np.float32))


def test_deep_clone_is_value_equal_and_independent():
    ps = _sample_params()
    ps["bias"].grad = np.ones(5, dtype=np.float32)
    clone = ps.deep_clone()
    assert clone.names() == ps.names()
    for name, t in ps.items():
        assert np.array_equal(clone[name].data, t.data)
        assert clone[name].data is not t.data
        assert clone[name].grad is None
        assert clone[name].tape is None
    clone["bias"].data += 1.0
    assert not np.array_equal(clone["bias"].data, ps["bias"].data)


def test_clone_backward_does_not_touch_original():
    ps = _sample_params()
    clone = ps.deep_clone()
    with Tape():
        loss = ad.tsum(ad.mul(clone["bias"], clone["bias"]))
    backward(loss)
    assert clone["bias"].grad is not None
    assert ps["bias"].grad is None


def test_checkpoint_round_trip_bit_exact(tmp_path):
    ps = _sample_params(3)
    # include awkward values: denormals, negative zero, extremes
    ps.add("edge", np.array([0.0, -0.0, 1e-40, -1e38, 3.4e38], dtype=np.float32))
    path = tmp_path / "model.bin"
    ps.save(path)
    back = ParamSet.load(path)
    assert back.names() == ps.names()
    for name, t in ps.items():
        assert back[name].data.tobytes() == t.data.tobytes()
        assert back[name].data.shape == t.data.shape
        assert back[name].requires_grad


def test_checkpoint_magic_and_version(tmp_path):
    ps = _sample_params()
    path = tmp_path / "model.bin"
    ps.save(path)
    blob = path.read_bytes()
    assert blob[:4] == CHECKPOINT_MAGIC == b"MUMT"
    assert int.from_bytes(blob[4:8], "little") == 1


def test_checkpoint_bad_magic_rejected(tmp_path):
    path = tmp_path / "junk.bin"
    path.write_bytes(b"NOPE" + b"\x00" * 16)
    with pytest.raises(ValueError, match="magic"):
        ParamSet.load(path)


def test_empty_paramset_round_trip(tmp_path):
    ps = ParamSet()
    path = tmp_path / "empty.bin"
    ps.save(path)
    back = ParamSet.load(path)
    assert len(back) == 0


def test_ensure_grads_fills_zeros():
    ps = _sample_params()
    ps["bias"].grad = np.ones(5, dtype=np.float32)
    ps.ensure_grads()
    assert np.array_equal(ps["emb"].grad, np.zeros((7, 3), dtype=np.float32))
    assert np.array_equal(ps["bias"].grad, np.ones(5, dtype=np.float32))


def test_copy_values_from():
    a = _sample_params(1)
    b = _sample_params(2)
    b.copy_values_from(a)
    for name, t in a.items():
        assert np.array_equal(b[name].data, t.data)
