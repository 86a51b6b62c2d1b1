import struct

import numpy as np
import pytest

from ucl.autodiff import Tensor
from ucl.checkpoint import MAGIC, Checkpoint, CheckpointError, file_hash, from_bytes, load, save, to_bytes
from ucl.model import EncoderConfig, HeadConfig, init_params


def sample_checkpoint():
    p = init_params(EncoderConfig(), 0).merged(init_params(HeadConfig(), 1))
    p.bn["enc.stem.bn"].running_mean[:] = np.linspace(0, 1, 16)
    p.bn["enc.stem.bn"].updates = 7
    p.tensors["buf"] = Tensor(np.arange(3.0), requires_grad=False)
    return Checkpoint(p, "encoder", {"a": 1}, "hash", 5, {"note": "x"})


def test_round_trip_is_bit_identical(tmp_path):
    ck = sample_checkpoint()
    digest = save(ck, tmp_path / "m.ckpt")
    assert digest == file_hash(tmp_path / "m.ckpt")
    back = load(tmp_path / "m.ckpt")
    assert to_bytes(back) == to_bytes(ck)
    for k in ck.params:
        np.testing.assert_array_equal(back.params[k].data, ck.params[k].data)
        assert back.params[k].requires_grad == ck.params[k].requires_grad
    st = back.params.bn["enc.stem.bn"]
    assert st.updates == 7 and st.momentum == 0.1
    np.testing.assert_array_equal(st.running_mean, ck.params.bn["enc.stem.bn"].running_mean)
    assert (back.kind, back.config, back.config_hash, back.seed, back.meta) == ("encoder", {"a": 1}, "hash", 5,
                                                                                  {"note": "x"})


def test_layout_header_fields():
    blob = to_bytes(sample_checkpoint())
    assert blob[:4] == MAGIC
    version, hlen = struct.unpack("<IQ", blob[4:16])
    assert version == 1
    import json

    header = json.loads(blob[16:16 + hlen])
    assert {"tensors", "config_hash", "seed"} <= set(header)
    entries = header["tensors"]
    assert entries[0]["offset"] == 0
    assert sum(e["nbytes"] for e in entries) == len(blob) - 16 - hlen


def test_corruption_is_detected():
    blob = to_bytes(sample_checkpoint())
    with pytest.raises(CheckpointError, match="magic"):
        from_bytes(b"XXXX" + blob[4:])
    with pytest.raises(CheckpointError, match="payload"):
        from_bytes(blob[:-4])
    with pytest.raises(CheckpointError, match="version"):
        from_bytes(blob[:4] + struct.pack("<I", 9) + blob[8:])


def test_missing_file_names_the_path(tmp_path):
    with pytest.raises(FileNotFoundError, match="nope.ckpt"):
        load(tmp_path / "nope.ckpt")
