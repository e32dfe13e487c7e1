import hashlib
import os
import struct

import numpy as np
import pytest

from adhoc_gpi.errors import ConfigError, LibraryLoadError, MissingArtifactError
from adhoc_gpi.library import (PolicyLibrary, PolicyLibraryEntry, deserialize_library, load_library, save_library,
                               serialize_library)
from adhoc_gpi.sf import LinearSF, SFLearnerPolicy, TabularSF


def _tabular_entry(seed, d=3, team="a", dr=True):
    rng = np.random.default_rng(seed)
    sf = TabularSF(5, d)
    for i in range(4):
        sf.table[bytes([i, seed % 256])] = rng.normal(size=(5, d))
    e = PolicyLibraryEntry(SFLearnerPolicy(sf, np.ones(d), {"steps": 10, "seed": seed}), team,
                           metadata={"note": "x"})
    if dr:
        e.dr_weight = rng.normal(size=d)
    return e


def _linear_entry(seed):
    rng = np.random.default_rng(seed)
    sf = LinearSF(5, 3, 6, 5, pairs=True)
    rows = rng.choice(len(sf.W), size=30, replace=False)
    sf.W[rows] = rng.normal(size=(30, 5, 3))
    q = LinearSF(5, 1, 6, 5, pairs=True)
    q.W[rows[:5]] = rng.normal(size=(5, 5, 1))
    return PolicyLibraryEntry(SFLearnerPolicy(sf, [1, 1, 1]), "b", dr_q=q)


def _library():
    return PolicyLibrary([_tabular_entry(1), _linear_entry(2)], gamma=0.95)


def test_round_trip_is_byte_identical(tmp_path):
    lib = _library()
    path = tmp_path / "lib.bin"
    digest = save_library(lib, path)
    assert digest == hashlib.sha256(path.read_bytes()).hexdigest()
    back = load_library(path)
    assert serialize_library(back) == path.read_bytes()
    assert back.source_team_ids == ["a", "b"]
    assert back.feature_dim == 3 and back.gamma == 0.95
    a, b = lib[0], back[0]
    for key, row in a.sf.table.items():
        assert np.array_equal(b.sf.table[key], row)
    assert np.array_equal(a.dr_weight, b.dr_weight)
    assert b.policy.train_info == {"steps": 10, "seed": 1}
    assert np.array_equal(lib[1].sf.W, back[1].sf.W)
    assert np.array_equal(lib[1].dr_q.W, back[1].dr_q.W)
    assert back[1].sf.features.pairs is True


def test_truncated_file_is_rejected(tmp_path):
    data = serialize_library(_library())
    for cut in (5, len(data) // 2, len(data) - 1):
        with pytest.raises(LibraryLoadError):
            deserialize_library(data[:cut])


def test_corrupted_byte_fails_checksum():
    data = bytearray(serialize_library(_library()))
    data[60] ^= 0xFF
    with pytest.raises(LibraryLoadError, match="checksum"):
        deserialize_library(bytes(data))


def _reseal(payload: bytes) -> bytes:
    return payload + hashlib.sha256(payload).digest()


def test_bad_magic_and_version():
    payload = serialize_library(_library())[:-32]
    with pytest.raises(LibraryLoadError, match="magic"):
        deserialize_library(_reseal(b"NOTALIB!" + payload[8:]))
    bumped = payload[:8] + struct.pack("<I", 2) + payload[12:]
    with pytest.raises(LibraryLoadError, match="version"):
        deserialize_library(_reseal(bumped))


def test_mixed_feature_dims_are_rejected():
    lib = PolicyLibrary([_tabular_entry(1, d=3)])
    with pytest.raises(ConfigError):
        lib.append(_tabular_entry(2, d=4))
    # a file written behind the container's back still fails to load
    lib.entries.append(_tabular_entry(2, d=4, dr=False))
    with pytest.raises(LibraryLoadError, match="feature_dim"):
        deserialize_library(serialize_library(lib))


def test_trailing_bytes_are_rejected():
    payload = serialize_library(_library())[:-32]
    with pytest.raises(LibraryLoadError, match="trailing"):
        deserialize_library(_reseal(payload + b"\x00"))


def test_missing_file():
    with pytest.raises(MissingArtifactError):
        load_library("/nonexistent/lib.bin")


def test_failed_save_leaves_no_partial_file(tmp_path, monkeypatch):
    path = tmp_path / "lib.bin"

    def boom(src, dst):
        raise OSError("disk full")

    monkeypatch.setattr(os, "replace", boom)
    with pytest.raises(OSError):
        save_library(_library(), path)
    assert not path.exists()
    assert os.listdir(tmp_path) == []


def test_unknown_entry_kind():
    with pytest.raises(ConfigError):
        PolicyLibraryEntry(_tabular_entry(1).policy, "a", kind="teacher")
