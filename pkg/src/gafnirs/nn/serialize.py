"""Weight files.

``<name>.gnn`` layout (little-endian)::

    b"GNN1"                      magic
    uint32 version (= 1)
    uint32 array count
    per array: uint32 ndim, ndim x uint32 dims, prod(dims) x float64

``<name>.json`` holds the network spec and the array names in file order.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from ..errors import CorruptModel
from .network import Network, NetworkSpec, build_network

MAGIC = b"GNN1"
VERSION = 1


def _paths(path: str | Path) -> tuple[Path, Path]:
    path = Path(path)
    base = path.with_suffix("") if path.suffix in (".gnn", ".json") else path
    return base.with_suffix(".gnn"), base.with_suffix(".json")


def save_model(net: Network, spec: NetworkSpec, path: str | Path, extra: dict | None = None) -> Path:
    bin_path, json_path = _paths(path)
    bin_path.parent.mkdir(parents=True, exist_ok=True)
    arrays = net.state_arrays()
    chunks = [MAGIC, struct.pack("<II", VERSION, len(arrays))]
    for _, a in arrays:
        chunks.append(struct.pack(f"<I{a.ndim}I", a.ndim, *a.shape))
        chunks.append(np.ascontiguousarray(a, dtype="<f8").tobytes())
    bin_path.write_bytes(b"".join(chunks))
    manifest = {"format": "GNN1", "version": VERSION, "weights_file": bin_path.name,
                "arrays": [name for name, _ in arrays], "network": spec.to_dict(), **(extra or {})}
    json_path.write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    return bin_path


def read_arrays(path: str | Path) -> list[np.ndarray]:
    raw = Path(path).read_bytes()
    if raw[:4] != MAGIC:
        raise CorruptModel(f"{path}: bad magic bytes")
    pos = 4

    def take(n):
        nonlocal pos
        if pos + n > len(raw):
            raise CorruptModel(f"{path}: truncated at byte {pos}")
        chunk = raw[pos:pos + n]
        pos += n
        return chunk

    version, count = struct.unpack("<II", take(8))
    if version != VERSION:
        raise CorruptModel(f"{path}: unsupported version {version}")
    arrays = []
    for _ in range(count):
        (ndim,) = struct.unpack("<I", take(4))
        shape = struct.unpack(f"<{ndim}I", take(4 * ndim))
        n = int(np.prod(shape)) if ndim else 1
        arrays.append(np.frombuffer(take(8 * n), dtype="<f8").reshape(shape).astype(np.float64))
    if pos != len(raw):
        raise CorruptModel(f"{path}: {len(raw) - pos} trailing bytes")
    return arrays


def load_model(path: str | Path) -> tuple[Network, NetworkSpec, dict]:
    bin_path, json_path = _paths(path)
    try:
        manifest = json.loads(json_path.read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise CorruptModel(f"{json_path}: {exc}") from None
    if not bin_path.exists():
        raise CorruptModel(f"{bin_path}: missing weights file")
    spec = NetworkSpec.from_dict(manifest["network"])
    arrays = read_arrays(bin_path)
    names = manifest.get("arrays", [])
    if len(names) != len(arrays):
        raise CorruptModel(f"{bin_path}: {len(arrays)} arrays, manifest lists {len(names)}")
    net = build_network(spec)
    try:
        net.set_weights(dict(zip(names, arrays)))
    except Exception as exc:
        raise CorruptModel(f"{bin_path}: {exc}") from None
    return net, spec, manifest
