import json

import numpy as np
import pytest

from graphpde import dsl
from graphpde.data import (ChecksumError, DatasetError, VersionError, check_discard_rule, dataset_digest,
                           generate_dataset, read_dataset, write_dataset)
from graphpde.families import FamilySpec
from graphpde.fields import grid_for


@pytest.fixture(scope="module")
def mixed():
    a, _ = generate_dataset(FamilySpec("advection"), 3, seed=0, grid=grid_for(True, 16, 6))
    b, _ = generate_dataset(FamilySpec("dcr", periodic=False), 3, seed=0, grid=grid_for(False, 16, 6))
    return a + b


def test_round_trip_bitwise(tmp_path, mixed):
    write_dataset(mixed, tmp_path / "ds")
    back = read_dataset(tmp_path / "ds")
    assert len(back) == len(mixed)
    for s, r in zip(mixed, back):
        assert r.text == s.text and r.grid == s.grid and r.meta == s.meta
        for name in ("x", "t", "u"):
            assert getattr(r, name).tobytes() == getattr(s, name).tobytes()
        assert set(r.payloads) == set(s.payloads)
        for k, p in s.payloads.items():
            q = r.payloads[k]
            if isinstance(p, dsl.FieldSamples):
                assert q.values.tobytes() == p.values.tobytes() and q.coords.tobytes() == p.coords.tobytes()
            elif isinstance(p, dsl.SeparableSamples):
                assert q.space.values.tobytes() == p.space.values.tobytes()
            else:
                assert q == p


def test_generation_deterministic(tmp_path):
    spec, grid = FamilySpec("heat"), grid_for(True, 16, 6)
    for name in ("a", "b"):
        samples, _ = generate_dataset(spec, 4, seed=7, grid=grid)
        write_dataset(samples, tmp_path / name)
    assert dataset_digest(tmp_path / "a") == dataset_digest(tmp_path / "b")
    other, _ = generate_dataset(spec, 4, seed=8, grid=grid)
    write_dataset(other, tmp_path / "c")
    assert dataset_digest(tmp_path / "c") != dataset_digest(tmp_path / "a")


def test_prefix_stability():
    spec, grid = FamilySpec("advection"), grid_for(True, 16, 6)
    small, _ = generate_dataset(spec, 2, seed=3, grid=grid)
    big, _ = generate_dataset(spec, 4, seed=3, grid=grid)
    assert all(s.u.tobytes() == b.u.tobytes() for s, b in zip(small, big))


def test_truncation_detected(tmp_path, mixed):
    write_dataset(mixed, tmp_path / "ds")
    f = tmp_path / "ds" / "data.bin"
    f.write_bytes(f.read_bytes()[:-8])
    with pytest.raises(ChecksumError):
        read_dataset(tmp_path / "ds")


def test_corruption_detected(tmp_path, mixed):
    write_dataset(mixed, tmp_path / "ds")
    f = tmp_path / "ds" / "data.bin"
    raw = bytearray(f.read_bytes())
    raw[100] ^= 0xFF
    f.write_bytes(bytes(raw))
    with pytest.raises(ChecksumError):
        read_dataset(tmp_path / "ds")


def test_version_and_missing(tmp_path, mixed):
    write_dataset(mixed, tmp_path / "ds")
    mf = tmp_path / "ds" / "manifest.json"
    m = json.loads(mf.read_text())
    m["version"] = 99
    mf.write_text(json.dumps(m))
    with pytest.raises(VersionError):
        read_dataset(tmp_path / "ds")
    with pytest.raises(DatasetError):
        read_dataset(tmp_path / "nothing")


def test_discard_rule(mixed):
    assert check_discard_rule(mixed)
    bad = mixed[0]
    saved = bad.u.copy()
    bad.u = saved * 0 + 11.0
    try:
        assert not check_discard_rule([bad])
    finally:
        bad.u = saved


def test_non_finite_rejected(mixed):
    s = mixed[0]
    with pytest.raises(DatasetError):
        type(s)(s.text, s.payloads, s.x, s.t, np.full_like(s.u, np.nan), s.grid)


def test_invalid_count():
    with pytest.raises(ValueError):
        generate_dataset(FamilySpec("heat"), 0, seed=0)
