"""Named parameter collections and their binary checkpoint format.

Checkpoint layout (little-endian):
    magic   4 bytes  b"MUMT"
    version u32      currently 1
    then per parameter, in insertion order:
        name_len u32
        name     UTF-8 bytes
        rank     u32
        dims     u64 * rank
        payload  float32 * prod(dims)
Round-trips are bit-exact because float32 values pass through unchanged.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .autodiff import Tensor

CHECKPOINT_MAGIC = b"MUMT"
CHECKPOINT_VERSION = 1


class ParamSet:
    """Insertion-ordered mapping of unique names to trainable tensors."""

    def __init__(self, rng_seed_used: int = 0):
        self._entries: dict[str, Tensor] = {}
        self.rng_seed_used = rng_seed_used

    def add(self, name: str, data: np.ndarray | Tensor) -> Tensor:
        if name in self._entries:
            raise ValueError(f"ParamSet: duplicate parameter name {name!r}")
        t = data if isinstance(data, Tensor) else Tensor(data)
        t.requires_grad = True
        self._entries[name] = t
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._entries[name]

    def __contains__(self, name: str) -> bool:
        return name in self._entries

    def __len__(self) -> int:
        return len(self._entries)

    def names(self) -> list[str]:
        return list(self._entries)

    def items(self):
        return self._entries.items()

    def n_values(self) -> int:
        return sum(t.size for t in self._entries.values())

    def zero_grads(self) -> None:
        for t in self._entries.values():
            t.grad = None

    def ensure_grads(self) -> None:
        """Fill missing grads with zeros (for phases that train a submodel)."""
        for t in self._entries.values():
            if t.grad is None:
                t.grad = np.zeros_like(t.data)

    def deep_clone(self) -> "ParamSet":
        """Value-equal copy; fresh buffers, no tape membership, grads cleared."""
        c = ParamSet(rng_seed_used=self.rng_seed_used)
        for name, t in self._entries.items():
            c.add(name, t.data.copy())
        return c

    def copy_values_from(self, other: "ParamSet") -> None:
        if self.names() != other.names():
            raise ValueError("ParamSet: parameter names differ")
        for name, t in self._entries.items():
            np.copyto(t.data, other[name].data)

    def save(self, path: str | Path) -> None:
        path = Path(path)
        with open(path, "wb") as f:
            f.write(CHECKPOINT_MAGIC)
            f.write(struct.pack("<I", CHECKPOINT_VERSION))
            for name, t in self._entries.items():
                raw = name.encode("utf-8")
                f.write(struct.pack("<I", len(raw)))
                f.write(raw)
                f.write(struct.pack("<I", t.data.ndim))
                f.write(struct.pack(f"<{t.data.ndim}Q", *t.data.shape))
                f.write(np.ascontiguousarray(t.data, dtype="<f4").tobytes())

    @classmethod
    def load(cls, path: str | Path) -> "ParamSet":
        path = Path(path)
        blob = path.read_bytes()
        if blob[:4] != CHECKPOINT_MAGIC:
            raise ValueError(f"checkpoint {path}: bad magic {blob[:4]!r}")
        (version,) = struct.unpack_from("<I", blob, 4)
        if version != CHECKPOINT_VERSION:
            raise ValueError(f"checkpoint {path}: unsupported version {version}")
        ps = cls()
        off = 8
        n = len(blob)
        while off < n:
            (name_len,) = struct.unpack_from("<I", blob, off)
            off += 4
            name = blob[off : off + name_len].decode("utf-8")
            off += name_len
            (rank,) = struct.unpack_from("<I", blob, off)
            off += 4
            dims = struct.unpack_from(f"<{rank}Q", blob, off)
            off += 8 * rank
            count = int(np.prod(dims, dtype=np.int64)) if rank else 1
            arr = np.frombuffer(blob, dtype="<f4", count=count, offset=off).reshape(dims)
            off += 4 * count
            ps.add(name, arr.astype(np.float32).copy())
        return ps


def save_json_sidecar(path: str | Path, payload: dict) -> None:
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def load_json_sidecar(path: str | Path) -> dict:
    return json.loads(Path(path).read_text())
