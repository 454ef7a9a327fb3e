# -*- coding: utf-8 -*-

DESCRIPTION = """shared helpers: fft worker cap, atomic artifact writes, manifest, parallel map"""

import sys, os, time
import json
import math
import hashlib
import tempfile
from pathlib import Path
from concurrent.futures import ThreadPoolExecutor
from typing import Any, Callable, Iterable, List, Optional, Union
from timeit import default_timer as timer

try:
    from humanfriendly import format_timespan
except ImportError:

    def format_timespan(seconds):
        return "{:.2f} seconds".format(seconds)


import logging

root_logger = logging.getLogger()
logger = root_logger.getChild(__name__)

import pandas as pd


THREADS_ENV_VAR = "EDGPE_THREADS"
MANIFEST_NAME = "manifest.json"


def fft_workers(requested: Optional[int] = None) -> int:
    """Number of scipy.fft workers, capped by the EDGPE_THREADS environment variable"""
    cap = os.environ.get(THREADS_ENV_VAR)
    try:
        cap = int(cap) if cap else 1
    except ValueError:
        logger.warning(f"ignoring non-integer {THREADS_ENV_VAR}={cap!r}")
        cap = 1
    cap = max(cap, 1)
    if requested is None:
        return cap
    return max(1, min(int(requested), cap))


def parallel_map(
    func: Callable, items: Iterable, workers: Optional[int] = None
) -> List[Any]:
    """Map func over items, preserving order. Threads are used when workers > 1
    (numpy and scipy.fft release the GIL for the heavy lifting)."""
    items = list(items)
    workers = fft_workers(workers) if workers else 1
    if workers <= 1 or len(items) <= 1:
        return [func(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as executor:
        return list(executor.map(func, items))


def _json_default(obj):
    if hasattr(obj, "to_dict"):
        return obj.to_dict()
    if hasattr(obj, "item"):
        # numpy scalars
        return obj.item()
    if isinstance(obj, Path):
        return str(obj)
    raise TypeError(f"Object of type {type(obj).__name__} is not JSON serializable")


def json_safe(obj):
    """Replace non-finite floats with strings so output stays valid JSON"""
    if isinstance(obj, dict):
        return {k: json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [json_safe(v) for v in obj]
    if hasattr(obj, "item") and not isinstance(obj, (str, bytes)):
        try:
            obj = obj.item()
        except (TypeError, ValueError):
            pass
    if isinstance(obj, float) and not math.isfinite(obj):
        if math.isnan(obj):
            return "nan"
        return "inf" if obj > 0 else "-inf"
    return obj


def dumps(obj) -> str:
    # json uses repr for floats, which is the shortest round-trip form
    return json.dumps(json_safe(obj), indent=2, sort_keys=True, default=_json_default)


def atomic_write_bytes(path: Union[str, Path], data: bytes) -> Path:
    """Write to a temp file in the target directory, then rename over the target"""
    path = Path(path)
    if not path.parent.exists():
        path.parent.mkdir(parents=True)
    fd, tmpname = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
            f.flush()
            os.fsync(f.fileno())
        os.replace(tmpname, path)
    except BaseException:
        if os.path.exists(tmpname):
            os.remove(tmpname)
        raise
    logger.debug(f"wrote {len(data)} bytes to {path}")
    return path


def atomic_write_text(path: Union[str, Path], text: str) -> Path:
    return atomic_write_bytes(path, text.encode("utf-8"))


def atomic_write_json(path: Union[str, Path], obj) -> Path:
    return atomic_write_text(path, dumps(obj) + "\n")


def atomic_write_csv(path: Union[str, Path], df: pd.DataFrame) -> Path:
    # float_format=None lets pandas fall back to repr for full precision
    return atomic_write_text(path, df.to_csv(index=False))


def sha256_file(path: Union[str, Path]) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(outdir: Union[str, Path], files: Iterable[Union[str, Path]]) -> Path:
    """manifest.json listing each artifact (relative to outdir) with its sha256"""
    outdir = Path(outdir)
    entries = []
    for fp in sorted({Path(f) for f in files}):
        if fp.name == MANIFEST_NAME:
            continue
        entries.append(
            {
                "path": Path(os.path.relpath(fp, outdir)).as_posix(),
                "sha256": sha256_file(fp),
                "bytes": fp.stat().st_size,
            }
        )
    return atomic_write_json(outdir.joinpath(MANIFEST_NAME), {"files": entries})


def verify_manifest(outdir: Union[str, Path]) -> List[str]:
    """Return the list of paths whose hash no longer matches (empty if all good)"""
    outdir = Path(outdir)
    manifest = json.loads(outdir.joinpath(MANIFEST_NAME).read_text())
    bad = []
    for entry in manifest["files"]:
        fp = outdir.joinpath(entry["path"])
        if not fp.exists() or sha256_file(fp) != entry["sha256"]:
            bad.append(entry["path"])
    return bad


class Timer:
    """context manager that logs elapsed time at debug level"""

    def __init__(self, label: str, log: logging.Logger = logger) -> None:
        self.label = label
        self.log = log
        self.elapsed = 0.0

    def __enter__(self):
        self._start = timer()
        return self

    def __exit__(self, *exc):
        self.elapsed = timer() - self._start
        self.log.debug(f"{self.label} took {format_timespan(self.elapsed)}")
        return False
