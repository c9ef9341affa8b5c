"""Named parameter store and the on-disk checkpoint container.

Checkpoint format (``LSARCHV1``), stable and versioned:

    bytes 0..7   magic  b"LSARCHV1"
    bytes 8..15  u64 little-endian: length of the JSON header
    header       UTF-8 JSON: {"version": 1, "meta": {...},
                  "entries": [{"name", "shape", "offset"}, ...]}
    payload      raw little-endian float64, entries at the listed byte
                 offsets, row-major

Raw float64 bytes round-trip bit-for-bit, entries are written sorted by
name, and no timestamps are embedded, so identical contents produce
identical files.
"""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np

from .rng import SplitMix64
from .tensor import Tensor

_MAGIC = b"LSARCHV1"


def save_arrays(path: str | Path, arrays: dict[str, np.ndarray], meta: dict | None = None) -> None:
    """Write named float64 arrays plus a JSON-able meta dict."""
    names = sorted(arrays)
    entries = []
    offset = 0
    blobs = []
    for name in names:
        arr = np.ascontiguousarray(arrays[name], dtype=np.float64)
        blob = arr.tobytes()
        entries.append({"name": name, "shape": list(arr.shape), "offset": offset})
        blobs.append(blob)
        offset += len(blob)
    header = json.dumps(
        {"version": 1, "meta": meta or {}, "entries": entries},
        sort_keys=True,
        separators=(",", ":"),
    ).encode("utf-8")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(len(header).to_bytes(8, "little"))
        fh.write(header)
        for blob in blobs:
            fh.write(blob)


def load_arrays(path: str | Path) -> tuple[dict[str, np.ndarray], dict]:
    """Read a checkpoint written by :func:`save_arrays`."""
    with open(path, "rb") as fh:
        magic = fh.read(8)
        if magic != _MAGIC:
            raise ValueError(f"{path}: not a checkpoint file (bad magic {magic!r})")
        header_len = int.from_bytes(fh.read(8), "little")
        header = json.loads(fh.read(header_len).decode("utf-8"))
        if header.get("version") != 1:
            raise ValueError(f"{path}: unsupported checkpoint version {header.get('version')}")
        payload = fh.read()
    arrays = {}
    for entry in header["entries"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        start = entry["offset"]
        arr = np.frombuffer(payload, dtype="<f8", count=count, offset=start)
        arrays[entry["name"]] = arr.reshape(shape).copy()
    return arrays, header["meta"]


class ParamStore:
    """Named map of (value, gradient) tensors plus non-trained buffers.

    Iteration is sorted by name so optimizer updates and serialization do
    not depend on creation order. Values are initialized uniformly in
    [-1/sqrt(fan_in), +1/sqrt(fan_in)] from a SplitMix64 stream seeded with
    ``rng_seed``; creation order therefore pins the exact init.
    """

    def __init__(self, rng_seed: int):
        self.rng_seed = int(rng_seed)
        self._rng = SplitMix64(self.rng_seed)
        self._entries: dict[str, Tensor] = {}
        self._buffers: dict[str, np.ndarray] = {}

    # -- construction ---------------------------------------------------------

    def add(self, name: str, shape: tuple[int, ...], fan_in: int | None = None) -> Tensor:
        if name in self._entries:
            raise ValueError(f"duplicate parameter {name!r}")
        fan = fan_in if fan_in is not None else (shape[0] if shape else 1)
        bound = 1.0 / math.sqrt(max(fan, 1))
        t = Tensor(self._rng.fill_uniform(tuple(shape), -bound, bound), requires_grad=True)
        t.alloc_grad()
        self._entries[name] = t
        return t

    def add_constant(self, name: str, value: np.ndarray) -> Tensor:
        if name in self._entries:
            raise ValueError(f"duplicate parameter {name!r}")
        t = Tensor(np.array(value, dtype=np.float64), requires_grad=True)
        t.alloc_grad()
        self._entries[name] = t
        return t

    def add_buffer(self, name: str, value: np.ndarray) -> np.ndarray:
        if name in self._buffers:
            raise ValueError(f"duplicate buffer {name!r}")
        self._buffers[name] = np.array(value, dtype=np.float64)
        return self._buffers[name]

    # -- access ---------------------------------------------------------------

    def tensor(self, name: str) -> Tensor:
        return self._entries[name]

    def buffer(self, name: str) -> np.ndarray:
        return self._buffers[name]

    def names(self) -> list[str]:
        return sorted(self._entries)

    def items(self) -> list[tuple[str, Tensor]]:
        return [(n, self._entries[n]) for n in self.names()]

    def group(self, prefix: str) -> dict[str, Tensor]:
        """All entries under ``prefix.`` keyed by the remaining suffix."""
        head = prefix + "."
        out = {n[len(head):]: t for n, t in self._entries.items() if n.startswith(head)}
        if not out:
            raise KeyError(f"no parameters under prefix {prefix!r}")
        return out

    def n_values(self) -> int:
        return sum(t.data.size for t in self._entries.values())

    def zero_grads(self) -> None:
        for _, t in self.items():
            t.zero_grad()

    # -- serialization ----------------------------------------------------------

    def save(self, path: str | Path, meta: dict | None = None) -> None:
        arrays = {f"param.{n}": t.data for n, t in self.items()}
        arrays.update({f"buffer.{n}": b for n, b in sorted(self._buffers.items())})
        merged = dict(meta or {})
        merged["rng_seed"] = self.rng_seed
        save_arrays(path, arrays, merged)

    @classmethod
    def load(cls, path: str | Path) -> tuple["ParamStore", dict]:
        arrays, meta = load_arrays(path)
        store = cls(int(meta.get("rng_seed", 0)))
        for name in sorted(arrays):
            if name.startswith("param."):
                store.add_constant(name[len("param."):], arrays[name])
            elif name.startswith("buffer."):
                store.add_buffer(name[len("buffer."):], arrays[name])
        return store, meta
