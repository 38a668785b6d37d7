"""Model checkpoints and the XPRS file format.

Layout: b"XPRS", u8 version, u32 header length, UTF-8 JSON header
(kind, arch, tensor manifest, provenance), then every tensor as
little-endian float32 in manifest order. Tensors are held as float32 in
memory too, so save/load round-trips bit for bit.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..errors import BadCheckpointError, WrongModelKindError
from .ffn import FFNConfig, FFNet
from .lstm import LSTMConfig, LSTMNet

MAGIC = b"XPRS"
VERSION = 1


@dataclass
class ModelCheckpoint:
    kind: str  # role: "expression", "emotion", "inversion", "fusion", "bow", ...
    arch: dict
    tensors: dict
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        self.tensors = {k: np.asarray(v, dtype="<f4") for k, v in self.tensors.items()}

    def require(self, *kinds: str) -> "ModelCheckpoint":
        if self.kind not in kinds:
            raise WrongModelKindError(f"need a {' or '.join(kinds)} checkpoint, got {self.kind!r}")
        return self

    def header(self) -> dict:
        return {
            "kind": self.kind,
            "arch": self.arch,
            "tensors": [{"name": k, "shape": list(v.shape)} for k, v in self.tensors.items()],
            "provenance": self.provenance,
        }

    def to_bytes(self) -> bytes:
        head = json.dumps(self.header(), sort_keys=True).encode("utf-8")
        body = b"".join(t.tobytes() for t in self.tensors.values())
        return MAGIC + struct.pack("<BI", VERSION, len(head)) + head + body

    def save(self, path) -> None:
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def from_bytes(cls, raw: bytes) -> "ModelCheckpoint":
        if raw[:4] != MAGIC:
            raise BadCheckpointError("bad magic; not an XPRS checkpoint")
        version, head_len = struct.unpack_from("<BI", raw, 4)
        if version != VERSION:
            raise BadCheckpointError(f"unsupported checkpoint version {version}")
        start = 9 + head_len
        try:
            head = json.loads(raw[9:start].decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise BadCheckpointError(f"corrupt header: {exc}") from exc
        tensors = {}
        pos = start
        for entry in head["tensors"]:
            shape = tuple(entry["shape"])
            nbytes = 4 * int(np.prod(shape, dtype=np.int64))
            if pos + nbytes > len(raw):
                raise BadCheckpointError(f"truncated tensor {entry['name']}")
            tensors[entry["name"]] = np.frombuffer(raw[pos : pos + nbytes], dtype="<f4").reshape(shape).copy()
            pos += nbytes
        if pos != len(raw):
            raise BadCheckpointError("trailing bytes after last tensor")
        return cls(head["kind"], head["arch"], tensors, head.get("provenance", {}))

    @classmethod
    def load(cls, path) -> "ModelCheckpoint":
        return cls.from_bytes(Path(path).read_bytes())


def checkpoint_from_net(net, kind: str, provenance: dict | None = None, extra_arch: dict | None = None):
    tensors = dict(net.params)
    tensors.update(net.buffers)
    arch = net.arch()
    arch.update(extra_arch or {})
    return ModelCheckpoint(kind, arch, tensors, dict(provenance or {}))


def net_from_checkpoint(ckpt: ModelCheckpoint):
    arch = dict(ckpt.arch)
    net_type = arch.get("net")
    if net_type == "lstm":
        config = LSTMConfig(**{k: arch[k] for k in LSTMConfig.__dataclass_fields__})
        cls = LSTMNet
    elif net_type == "ffn":
        config = FFNConfig(**{k: arch[k] for k in FFNConfig.__dataclass_fields__})
        cls = FFNet
    else:
        raise BadCheckpointError(f"unknown network type {net_type!r}")
    names = cls.param_shapes(config)
    missing = [n for n in names if n not in ckpt.tensors]
    if missing:
        raise BadCheckpointError(f"checkpoint lacks tensors {missing}")
    params = {n: ckpt.tensors[n].astype(np.float64) for n in names}
    buffers = {k: v.astype(np.float64) for k, v in ckpt.tensors.items() if k.startswith("norm.")}
    return cls(config, params, buffers)
