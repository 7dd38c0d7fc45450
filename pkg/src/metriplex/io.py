"""Deterministic artifact writing: CSV tables, JSON, arrays with sidecars, manifests."""

from __future__ import annotations

import hashlib
import json
import math
import os
import platform
import sys
import tempfile
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence

import numpy as np

FLOAT_FORMAT = "{:.16e}"


def format_value(v) -> str:
    """Fixed textual form of a scalar so reruns produce identical bytes."""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return FLOAT_FORMAT.format(v)
    return str(v)


def _atomic_write_bytes(path: Path, data: bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def csv_bytes(header: Sequence[str], rows: Iterable[Sequence]) -> bytes:
    lines = [",".join(header)]
    for row in rows:
        if len(row) != len(header):
            raise ValueError(f"row has {len(row)} fields, header has {len(header)}")
        lines.append(",".join(format_value(v) for v in row))
    return ("\n".join(lines) + "\n").encode()


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else str(v)
    if isinstance(obj, complex):
        return {"re": obj.real, "im": obj.imag}
    return obj


def json_bytes(obj) -> bytes:
    return (json.dumps(_jsonable(obj), indent=2, sort_keys=True) + "\n").encode()


def sha256_file(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def versions() -> Dict[str, str]:
    import scipy

    from . import __version__

    return {
        "metriplex": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
    }


@dataclass
class RunManifest:
    """Record of a run: config echo, written files with checksums, versions, timings."""

    config: dict
    files: Dict[str, dict] = field(default_factory=dict)
    versions: Dict[str, str] = field(default_factory=versions)
    timings: Dict[str, float] = field(default_factory=dict)
    status: str = "ok"
    message: str = ""

    def to_dict(self) -> dict:
        return {
            "config": self.config,
            "files": self.files,
            "versions": self.versions,
            "timings": self.timings,
            "status": self.status,
            "message": self.message,
        }


class OutputDir:
    """Directory that remembers every artifact written into it."""

    MANIFEST = "manifest.json"

    def __init__(self, root, config: Optional[dict] = None):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.manifest = RunManifest(config=config or {})

    def _register(self, name: str, kind: str) -> Path:
        path = self.root / name
        self.manifest.files[name] = {
            "kind": kind,
            "sha256": sha256_file(path),
            "bytes": path.stat().st_size,
        }
        return path

    def write_csv(self, name: str, header: Sequence[str], rows: Iterable[Sequence]) -> Path:
        _atomic_write_bytes(self.root / name, csv_bytes(header, rows))
        return self._register(name, "csv")

    def write_json(self, name: str, obj) -> Path:
        _atomic_write_bytes(self.root / name, json_bytes(obj))
        return self._register(name, "json")

    def write_array(self, name: str, array: np.ndarray, meta: Optional[dict] = None) -> Path:
        """Raw ``.npy`` array plus a JSON sidecar describing it."""
        array = np.ascontiguousarray(array)
        stem = name[:-4] if name.endswith(".npy") else name
        import io as _io

        buf = _io.BytesIO()
        np.save(buf, array, allow_pickle=False)
        _atomic_write_bytes(self.root / f"{stem}.npy", buf.getvalue())
        self._register(f"{stem}.npy", "array")
        side = {"file": f"{stem}.npy", "dtype": str(array.dtype), "shape": list(array.shape)}
        side.update(meta or {})
        self.write_json(f"{stem}.json", side)
        return self.root / f"{stem}.npy"

    def finish(self, status: str = "ok", message: str = "") -> Path:
        self.manifest.status = status
        self.manifest.message = message
        path = self.root / self.MANIFEST
        _atomic_write_bytes(path, json_bytes(self.manifest.to_dict()))
        return path


def read_csv(path) -> tuple:
    """Header and float rows of a CSV written by :class:`OutputDir`."""
    lines = Path(path).read_text().splitlines()
    header = lines[0].split(",")
    rows = [[float(v) for v in line.split(",")] for line in lines[1:] if line]
    return header, np.array(rows)
