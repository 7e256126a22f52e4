import json
import struct

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from waveguide.grid import Field2D, make_grid
from waveguide.storage import (MAGIC, read_field, read_field_csv, read_table, sha256_file,
                               write_field, write_field_csv, write_json, write_manifest,
                               write_table)


def random_field(seed, nx=32, ny=4, p=3.0):
    g = make_grid(12.5, nx, ny, p)
    rng = np.random.default_rng(seed)
    return Field2D(g, rng.standard_normal((nx, ny)) + 1j * rng.standard_normal((nx, ny)))


@given(st.integers(min_value=0, max_value=2**31), st.sampled_from([2.0, 3.0, 4.5]))
@settings(max_examples=15, deadline=None)
def test_binary_round_trip(tmp_path_factory, seed, p):
    u = random_field(seed, p=p)
    path = write_field(tmp_path_factory.mktemp("f") / "u.wgf", u)
    back = read_field(path)
    assert back.grid == u.grid
    assert np.array_equal(back.values, u.values)


@given(st.integers(min_value=0, max_value=2**31))
@settings(max_examples=10, deadline=None)
def test_csv_round_trip(tmp_path_factory, seed):
    u = random_field(seed)
    path = write_field_csv(tmp_path_factory.mktemp("f") / "u.csv", u)
    back = read_field_csv(path)
    assert back.grid == u.grid
    assert np.array_equal(back.values, u.values)


def test_binary_layout(tmp_path):
    u = random_field(0, nx=16, ny=2)
    data = write_field(tmp_path / "u.wgf", u).read_bytes()
    magic, L, nx, ny, p = struct.unpack_from("<4sdqqd", data)
    assert (magic, L, nx, ny, p) == (MAGIC, 12.5, 16, 2, 3.0)
    assert len(data) == 36 + 16 * 16 * 2
    first = complex(*struct.unpack_from("<dd", data, 36))
    second = complex(*struct.unpack_from("<dd", data, 52))
    assert first == u.values[0, 0] and second == u.values[0, 1]


def test_csv_layout(tmp_path):
    u = random_field(1, nx=16, ny=2)
    lines = write_field_csv(tmp_path / "u.csv", u).read_text().splitlines()
    assert lines[0] == "L,nx,ny,p"
    assert lines[1] == "12.5,16,2,3"
    assert lines[2] == "re,im"
    assert len(lines) == 3 + 32


def test_bad_magic(tmp_path):
    path = tmp_path / "bad.wgf"
    path.write_bytes(b"XXXX" + bytes(40))
    with pytest.raises(ValueError, match="magic"):
        read_field(path)


def test_truncated(tmp_path):
    path = write_field(tmp_path / "u.wgf", random_field(2))
    path.write_bytes(path.read_bytes()[:-8])
    with pytest.raises(ValueError, match="data bytes"):
        read_field(path)
    (tmp_path / "tiny.wgf").write_bytes(b"WGF1")
    with pytest.raises(ValueError, match="truncated"):
        read_field(tmp_path / "tiny.wgf")


def test_bad_csv_header(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("a,b\n1,2\n")
    with pytest.raises(ValueError, match="header"):
        read_field_csv(path)


def test_table_round_trip(tmp_path):
    rows = [(3.0, 0.1, 1, True), (2.0, 1 / 3, 2, False)]
    path = write_table(tmp_path / "t.csv", ["p", "omega", "k", "flag"], rows)
    header, body = read_table(path)
    assert header == ["p", "omega", "k", "flag"]
    assert float(body[1][1]) == 1 / 3
    assert body[0][3] == "1" and body[1][3] == "0"


def test_empty_table_rejected(tmp_path):
    (tmp_path / "e.csv").write_text("")
    with pytest.raises(ValueError, match="empty"):
        read_table(tmp_path / "e.csv")


def test_json_handles_numpy(tmp_path):
    path = write_json(tmp_path / "x.json", {"a": np.float64(1.5), "b": np.int64(2),
                                            "c": np.bool_(True), "d": (1, 2)})
    assert json.loads(path.read_text()) == {"a": 1.5, "b": 2, "c": True, "d": [1, 2]}


def test_manifest_lists_every_file(tmp_path):
    (tmp_path / "sub").mkdir()
    (tmp_path / "a.csv").write_text("x\n1\n")
    (tmp_path / "sub" / "b.bin").write_bytes(b"\x00\x01")
    path = write_manifest(tmp_path, {"command": "test"}, {"exit_code": 0})
    data = json.loads(path.read_text())
    listed = {e["path"]: e for e in data["files"]}
    assert set(listed) == {"a.csv", "sub/b.bin"}
    assert listed["sub/b.bin"]["sha256"] == sha256_file(tmp_path / "sub" / "b.bin")
    assert listed["sub/b.bin"]["bytes"] == 2
    assert data["exit_code"] == 0
