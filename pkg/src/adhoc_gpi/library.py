"""Policy library and its versioned binary container.

Layout (all integers little-endian)::

    magic  b"ADHOCLIB"
    u32    format version (1)
    u32    feature_dim
    f64    gamma
    u32    entry count
    per entry:
        u32 + bytes   JSON metadata (sort_keys, compact)
        u32           SF record count, then records
        u32           DR-Q record count, then records
    sha256 digest of every preceding byte

A record is ``u32 key length, key bytes, u32 vector length, f64 values``.
Record order is preserved, so ``save(load(f))`` reproduces ``f`` byte for byte.
"""

from __future__ import annotations

import hashlib
import io
import json
import os
import struct
import tempfile
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ConfigError, LibraryLoadError, MissingArtifactError
from .sf import SFLearnerPolicy, approximator_from_spec

MAGIC = b"ADHOCLIB"
VERSION = 1
_HEADER = struct.Struct("<8sIIdI")
_U32 = struct.Struct("<I")

ENTRY_KINDS = ("library", "oracle", "robust")


@dataclass
class PolicyLibraryEntry:
    policy: SFLearnerPolicy
    source_team_id: str
    dr_weight: Optional[np.ndarray] = None
    dr_q: Optional[object] = None  # d == 1 approximator from the TD branch
    metadata: dict = field(default_factory=dict)
    kind: str = "library"

    def __post_init__(self):
        if self.kind not in ENTRY_KINDS:
            raise ConfigError(f"unknown entry kind {self.kind!r}")
        if self.dr_weight is not None:
            self.dr_weight = np.asarray(self.dr_weight, dtype=float)

    @property
    def sf(self):
        return self.policy.sf

    @property
    def feature_dim(self) -> int:
        return self.policy.sf.feature_dim

    @property
    def dr_evaluated(self) -> bool:
        return self.dr_weight is not None or self.dr_q is not None


class PolicyLibrary:
    """Ordered pretrained learner policies sharing feature_dim and gamma."""

    def __init__(self, entries=(), feature_dim: Optional[int] = None, gamma: float = 0.95):
        self.entries: list[PolicyLibraryEntry] = []
        self.feature_dim = feature_dim
        self.gamma = float(gamma)
        for e in entries:
            self.append(e)

    def append(self, entry: PolicyLibraryEntry) -> None:
        if self.feature_dim is None:
            self.feature_dim = entry.feature_dim
        if entry.feature_dim != self.feature_dim:
            raise ConfigError(f"entry feature_dim {entry.feature_dim} != library feature_dim {self.feature_dim}")
        self.entries.append(entry)

    def __len__(self) -> int:
        return len(self.entries)

    def __getitem__(self, i: int) -> PolicyLibraryEntry:
        return self.entries[i]

    def __iter__(self):
        return iter(self.entries)

    @property
    def source_team_ids(self) -> list[str]:
        return [e.source_team_id for e in self.entries]


def _pack_records(buf: io.BytesIO, records) -> None:
    records = list(records)
    buf.write(_U32.pack(len(records)))
    for key, vec in records:
        vec = np.ascontiguousarray(vec, dtype="<f8")
        buf.write(_U32.pack(len(key)))
        buf.write(key)
        buf.write(_U32.pack(len(vec)))
        buf.write(vec.tobytes())


def serialize_library(library: PolicyLibrary) -> bytes:
    buf = io.BytesIO()
    buf.write(_HEADER.pack(MAGIC, VERSION, library.feature_dim or 0, library.gamma, len(library)))
    for e in library:
        meta = {
            "kind": e.kind,
            "source_team_id": e.source_team_id,
            "task_weight": e.policy.task_weight.tolist(),
            "train_info": e.policy.train_info,
            "sf": e.sf.spec(),
            "dr_weight": None if e.dr_weight is None else e.dr_weight.tolist(),
            "dr_q": None if e.dr_q is None else e.dr_q.spec(),
            "metadata": e.metadata,
        }
        blob = json.dumps(meta, sort_keys=True, separators=(",", ":")).encode()
        buf.write(_U32.pack(len(blob)))
        buf.write(blob)
        _pack_records(buf, e.sf.records())
        _pack_records(buf, e.dr_q.records() if e.dr_q is not None else ())
    payload = buf.getvalue()
    return payload + hashlib.sha256(payload).digest()


def save_library(library: PolicyLibrary, path) -> str:
    """Write atomically (temp file + rename); returns the file's sha256."""
    data = serialize_library(library)
    path = os.fspath(path)
    d = os.path.dirname(os.path.abspath(path))
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".lib-")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return hashlib.sha256(data).hexdigest()


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int) -> bytes:
        if n < 0 or self.pos + n > len(self.data):
            raise LibraryLoadError("library file is truncated")
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def u32(self) -> int:
        return _U32.unpack(self.take(4))[0]

    def records(self):
        out = []
        for _ in range(self.u32()):
            key = self.take(self.u32())
            n = self.u32()
            out.append((key, np.frombuffer(self.take(8 * n), dtype="<f8").astype(float)))
        return out


def deserialize_library(data: bytes) -> PolicyLibrary:
    if len(data) < _HEADER.size + 32:
        raise LibraryLoadError("library file is truncated")
    payload, digest = data[:-32], data[-32:]
    magic, version = struct.unpack_from("<8sI", payload)
    if magic != MAGIC:
        raise LibraryLoadError("not a policy library file (bad magic)")
    if version != VERSION:
        raise LibraryLoadError(f"unsupported library format version {version}")
    if hashlib.sha256(payload).digest() != digest:
        raise LibraryLoadError("library checksum mismatch (corrupt or truncated file)")
    _, _, feature_dim, gamma, count = _HEADER.unpack_from(payload)
    r = _Reader(payload)
    r.pos = _HEADER.size
    lib = PolicyLibrary(feature_dim=feature_dim, gamma=gamma)
    for _ in range(count):
        try:
            meta = json.loads(r.take(r.u32()))
            sf = approximator_from_spec(meta["sf"], r.records())
            dr_records = r.records()
            dr_q = approximator_from_spec(meta["dr_q"], dr_records) if meta["dr_q"] is not None else None
        except (ValueError, KeyError) as exc:
            if isinstance(exc, LibraryLoadError):
                raise
            raise LibraryLoadError(f"malformed library entry: {exc}") from None
        if sf.feature_dim != feature_dim:
            raise LibraryLoadError(f"entry feature_dim {sf.feature_dim} disagrees with header {feature_dim}")
        if meta["dr_weight"] is not None and len(meta["dr_weight"]) != feature_dim:
            raise LibraryLoadError("difference-reward weight length disagrees with feature_dim")
        policy = SFLearnerPolicy(sf, meta["task_weight"], meta["train_info"])
        lib.entries.append(PolicyLibraryEntry(
            policy, meta["source_team_id"],
            None if meta["dr_weight"] is None else np.array(meta["dr_weight"], dtype=float),
            dr_q, meta["metadata"], meta["kind"]))
    if r.pos != len(payload):
        raise LibraryLoadError("trailing bytes after the last library entry")
    return lib


def load_library(path) -> PolicyLibrary:
    if not os.path.exists(path):
        raise MissingArtifactError(f"library file not found: {path}")
    with open(path, "rb") as fh:
        return deserialize_library(fh.read())


def file_sha256(path) -> str:
    with open(path, "rb") as fh:
        return hashlib.sha256(fh.read()).hexdigest()
