import struct

import numpy as np
import pytest

from usbf.errors import FormatError, UnsupportedVersion
from usbf.io import (decode_records, decode_tensor, encode_records, encode_tensor, read_pgm,
                     read_records, read_tensor, write_pgm, write_records, write_tensor)


def test_tensor_layout():
    buf = encode_tensor(np.array([[1.0, 2.0, 3.0]]))
    assert buf[:4] == b"USBF"
    assert struct.unpack("<II", buf[4:12]) == (1, 2)
    assert struct.unpack("<2Q", buf[12:28]) == (1, 3)
    assert np.array_equal(np.frombuffer(buf[28:], "<f4"), [1.0, 2.0, 3.0])


@pytest.mark.parametrize("shape", [(), (0,), (5,), (2, 3, 4)])
def test_tensor_round_trip(tmp_path, rng, shape):
    a = rng.normal(size=shape).astype(np.float32)
    path = tmp_path / "t.usbf"
    write_tensor(path, a)
    b = read_tensor(path)
    assert b.shape == a.shape and b.dtype == np.float32
    assert np.array_equal(a, b)


def test_tensor_truncated_reports_offset():
    buf = encode_tensor(np.ones((4, 4)))
    with pytest.raises(FormatError) as info:
        decode_tensor(buf[:-3])
    assert info.value.offset == 28


def test_tensor_bad_magic():
    buf = b"XXXX" + encode_tensor(np.ones(2))[4:]
    with pytest.raises(FormatError):
        decode_tensor(buf)


def test_tensor_bad_version():
    buf = bytearray(encode_tensor(np.ones(2)))
    buf[4:8] = struct.pack("<I", 7)
    with pytest.raises(UnsupportedVersion):
        decode_tensor(bytes(buf))


def test_trailing_bytes(tmp_path):
    path = tmp_path / "t.usbf"
    path.write_bytes(encode_tensor(np.ones(2)) + b"\0")
    with pytest.raises(FormatError):
        read_tensor(path)


def test_records_round_trip(tmp_path, rng):
    arrays = [rng.normal(size=(3, 2)).astype(np.float32), np.arange(4, dtype=np.float32)]
    path = tmp_path / "r.usbf"
    write_records(path, arrays)
    back = read_records(path)
    assert len(back) == 2 and all(np.array_equal(a, b) for a, b in zip(arrays, back))
    recs, pos = decode_records(encode_records([]))
    assert recs == [] and pos == 8


def test_records_truncated():
    buf = encode_records([np.ones(3), np.ones(3)])
    with pytest.raises(FormatError):
        decode_records(buf[:-1])


def test_pgm_round_trip(tmp_path):
    img = np.array([[0.0, 0.5, 1.0], [1.2, -0.1, 0.25]])
    path = tmp_path / "i.pgm"
    write_pgm(path, img)
    assert path.read_bytes().startswith(b"P5\n3 2\n255\n")
    assert np.array_equal(read_pgm(path), [[0, 128, 255], [255, 0, 64]])


def test_pgm_rejects_other_formats(tmp_path):
    path = tmp_path / "i.pgm"
    path.write_bytes(b"P2\n1 1\n255\n0\n")
    with pytest.raises(FormatError):
        read_pgm(path)
