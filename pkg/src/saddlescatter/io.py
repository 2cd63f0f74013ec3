"""Atomic file output, run manifests and binary state snapshots."""

from __future__ import annotations

import hashlib
import json
import os
import platform
import struct
import tempfile
from pathlib import Path
from typing import Any

import numpy as np

SNAPSHOT_MAGIC = b"SSQS"
SNAPSHOT_VERSION = 1


def atomic_write_bytes(path: str | Path, data: bytes) -> None:
    """Write to a temporary file in the target directory, then rename."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_text(path: str | Path, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def dump_json(obj: Any) -> str:
    """Deterministic JSON (sorted keys, shortest round-trip floats)."""
    return json.dumps(_plain(obj), indent=2, sort_keys=True, allow_nan=True) + "\n"


def _plain(obj: Any) -> Any:
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _plain(obj.tolist())
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, complex):
        return {"re": obj.real, "im": obj.imag}
    return obj


def config_hash(cfg: Any) -> str:
    blob = json.dumps(_plain(cfg), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def versions() -> dict[str, str]:
    import scipy

    from . import __version__

    return {"saddlescatter": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
            "python": platform.python_version()}


def write_manifest(out_dir: str | Path, cfg: Any, outputs: list[str], wall_time: float,
                   status: str, extra: dict | None = None) -> Path:
    """Run manifest; wall time is the only non-deterministic field."""
    man = {"config_hash": config_hash(cfg), "versions": versions(), "outputs": sorted(outputs),
           "status": status, "wall_time_s": wall_time}
    if extra:
        man.update(extra)
    path = Path(out_dir) / "manifest.json"
    atomic_write_text(path, dump_json(man))
    return path


def write_snapshot(path: str | Path, psi: np.ndarray, extents: list[tuple[float, float]], h: float) -> None:
    """Binary wavefunction snapshot.

    Layout (little endian): magic ``SSQS``, u32 version, u32 ndim, ndim x u64
    shape, ndim x (f64 lo, f64 hi) extents, f64 h, then interleaved
    ``re, im`` f64 pairs in C order.
    """
    psi = np.ascontiguousarray(psi, dtype=np.complex128)
    head = SNAPSHOT_MAGIC + struct.pack("<II", SNAPSHOT_VERSION, psi.ndim)
    head += struct.pack(f"<{psi.ndim}Q", *psi.shape)
    for lo, hi in extents:
        head += struct.pack("<dd", lo, hi)
    head += struct.pack("<d", h)
    payload = psi.view(np.float64).astype("<f8").tobytes()
    atomic_write_bytes(path, head + payload)


def read_snapshot(path: str | Path) -> tuple[np.ndarray, list[tuple[float, float]], float]:
    data = Path(path).read_bytes()
    if data[:4] != SNAPSHOT_MAGIC:
        raise ValueError("not a state snapshot")
    version, ndim = struct.unpack_from("<II", data, 4)
    if version != SNAPSHOT_VERSION:
        raise ValueError(f"unsupported snapshot version {version}")
    off = 12
    shape = struct.unpack_from(f"<{ndim}Q", data, off)
    off += 8 * ndim
    ext = [struct.unpack_from("<dd", data, off + 16 * k) for k in range(ndim)]
    off += 16 * ndim
    (h,) = struct.unpack_from("<d", data, off)
    off += 8
    arr = np.frombuffer(data, dtype="<f8", offset=off).astype(np.float64)
    psi = arr.view(np.complex128).reshape(shape)
    return psi, [tuple(e) for e in ext], h
