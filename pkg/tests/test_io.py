import struct

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp
from PIL import Image

from tnvault.errors import FormatError
from tnvault.io import decode_dt, encode_dt, load_tensor, read_tnc, write_dt, write_tnc


def test_dt_layout_is_byte_exact():
    t = np.arange(6.0).reshape(2, 3, order="F")
    blob = encode_dt(t)
    assert blob[:4] == b"DTEN"
    assert blob[4] == 1 and blob[5] == 2
    assert struct.unpack_from("<2Q", blob, 6) == (2, 3)
    assert struct.unpack_from("<6d", blob, 22) == (0.0, 1.0, 2.0, 3.0, 4.0, 5.0)
    assert len(blob) == 22 + 48


@given(hnp.arrays(np.float64, hnp.array_shapes(min_dims=1, max_dims=5, max_side=4),
                  elements=st.floats(allow_nan=False)))
def test_dt_roundtrip(t):
    back = decode_dt(encode_dt(t))
    assert back.shape == t.shape
    assert np.array_equal(back, t)


@pytest.mark.parametrize("blob", [b"", b"XXXX\x01\x01", encode_dt(np.ones(3))[:-1],
                                  b"DTEN\x02\x01" + struct.pack("<Q", 1) + b"\0" * 8])
def test_dt_rejects_malformed(blob):
    with pytest.raises(FormatError):
        decode_dt(blob)


def test_file_ingestion(tmp_path):
    rng = np.random.default_rng(0)
    t = rng.random((3, 4, 2))
    write_dt(tmp_path / "a.dt", t)
    assert np.array_equal(load_tensor(tmp_path / "a.dt"), t)

    (tmp_path / "m.csv").write_text("1,2,3\n4,5,6\n")
    m = load_tensor(tmp_path / "m.csv")
    assert m.shape == (2, 3) and m[1, 0] == 4.0

    px = rng.integers(0, 256, size=(5, 4, 3), dtype=np.uint8)
    Image.fromarray(px).save(tmp_path / "x.ppm")
    img = load_tensor(tmp_path / "x.ppm")
    assert img.shape == (5, 4, 3) and np.array_equal(img, px.astype(float))
    Image.fromarray(px[:, :, 0]).save(tmp_path / "g.pgm")
    assert load_tensor(tmp_path / "g.pgm").shape == (5, 4)

    with pytest.raises(FormatError):
        load_tensor(tmp_path / "x.bin")


def test_tnc_sidecar(tmp_path):
    core = np.random.default_rng(1).random((1, 3, 2))
    write_tnc(tmp_path / "core_1.tnc", core, {"role": "core", "index": 1})
    back, meta = read_tnc(tmp_path / "core_1.tnc")
    assert np.array_equal(back, core) and meta == {"role": "core", "index": 1}
