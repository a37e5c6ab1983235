"""On-disk formats for chains, wall-clock timings and datasets.

A chain is stored as two files:

``<stem>.chain``
    Binary, little-endian.  An 8-byte magic, a version byte, seven bytes of
    padding, then the columns back to back: each coordinate of the samples
    as its own float64 column, the acceptance flags (uint8), the step-size
    trace (float64) and, when present, the preconditioner snapshots.
``<stem>.chain.json``
    Sidecar header with the sampler kind, shape, phase marks, seed, column
    table (name, dtype, shape, byte offset) and a SHA-256 digest of the
    binary payload.

Wall-clock timings live in ``<stem>.wall`` (same magic/version scheme) so
that the chain file itself is byte-identical across reruns with one seed.
"""

import csv
import hashlib
import json
import os
from pathlib import Path

import numpy as np

from .forward import SyntheticDataset
from .samplers import ChainRecord

__all__ = [
    "FormatError",
    "CHAIN_MAGIC",
    "WALL_MAGIC",
    "FORMAT_VERSION",
    "write_chain",
    "read_chain",
    "chain_paths",
    "export_chain_csv",
    "write_dataset",
    "read_dataset",
    "write_json",
    "read_json",
]

CHAIN_MAGIC = b"FMCHAIN\x00"
WALL_MAGIC = b"FMWALL\x00\x00"
FORMAT_VERSION = 1
DATASET_FORMAT = "fishermala-dataset"
_HEADER = 16


class FormatError(ValueError):
    """A file is truncated, corrupt, or has an unknown magic or version."""


def chain_paths(stem):
    stem = Path(stem)
    if stem.suffix == ".chain":
        stem = stem.with_suffix("")
    return stem.with_suffix(".chain"), Path(f"{stem}.chain.json"), stem.with_suffix(".wall")


def _header(magic):
    return magic + bytes([FORMAT_VERSION]) + bytes(_HEADER - len(magic) - 1)


def _check_header(buf, magic, path):
    if len(buf) < _HEADER or buf[: len(magic)] != magic:
        raise FormatError(f"{path}: bad magic")
    version = buf[len(magic)]
    if version != FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported version {version}")


def _columns(record):
    cols = [(f"x{i}", np.ascontiguousarray(record.samples[:, i], dtype="<f8")) for i in range(record.d)]
    cols.append(("accept", np.ascontiguousarray(record.accept, dtype="u1")))
    cols.append(("sigma2", np.ascontiguousarray(record.sigma2, dtype="<f8")))
    cols.append(("snapshot_iters", np.ascontiguousarray(record.snapshot_iters, dtype="<i8")))
    if record.snapshots is not None:
        cols.append(("snapshots", np.ascontiguousarray(record.snapshots, dtype="<f8")))
    return cols


def write_chain(record, stem, extra=None):
    """Write ``record`` next to ``stem``; returns the three paths written.

    ``extra`` is merged into the sidecar (for example the config hash).
    """
    bin_path, side_path, wall_path = chain_paths(stem)
    bin_path.parent.mkdir(parents=True, exist_ok=True)
    table, chunks, pos = [], [], _HEADER
    for name, arr in _columns(record):
        raw = arr.tobytes()
        table.append({"name": name, "dtype": arr.dtype.str, "shape": list(arr.shape), "offset": pos})
        chunks.append(raw)
        pos += len(raw)
    payload = b"".join(chunks)
    with open(bin_path, "wb") as fh:
        fh.write(_header(CHAIN_MAGIC))
        fh.write(payload)
    side = {
        "format": "fishermala-chain",
        "version": FORMAT_VERSION,
        "kind": record.kind,
        "d": int(record.d),
        "n_rows": int(record.samples.shape[0]),
        "offset": int(record.offset),
        "phase_marks": {k: int(v) for k, v in record.phase_marks.items()},
        "seed": int(record.seed),
        "n_invalid": int(record.n_invalid),
        "columns": table,
        "sha256": hashlib.sha256(payload).hexdigest(),
    }
    if extra:
        side.update(extra)
    write_json(side, side_path)
    with open(wall_path, "wb") as fh:
        fh.write(_header(WALL_MAGIC))
        fh.write(np.ascontiguousarray(record.wall_times, dtype="<f8").tobytes())
    return bin_path, side_path, wall_path


def read_chain(stem):
    """Read a chain written by :func:`write_chain`.

    Wall times are filled with NaN when the ``.wall`` file is missing.

    Raises
    ------
    FormatError
        On a bad magic, unknown version, size mismatch or checksum failure.
    """
    bin_path, side_path, wall_path = chain_paths(stem)
    try:
        side = read_json(side_path)
        buf = bin_path.read_bytes()
    except (OSError, json.JSONDecodeError) as exc:
        raise FormatError(f"cannot read chain {bin_path}: {exc}") from exc
    _check_header(buf, CHAIN_MAGIC, bin_path)
    if side.get("format") != "fishermala-chain" or side.get("version") != FORMAT_VERSION:
        raise FormatError(f"{side_path}: not a version-{FORMAT_VERSION} chain header")
    payload = buf[_HEADER:]
    if hashlib.sha256(payload).hexdigest() != side["sha256"]:
        raise FormatError(f"{bin_path}: checksum mismatch")
    cols = {}
    for col in side["columns"]:
        dt = np.dtype(col["dtype"])
        count = int(np.prod(col["shape"])) if col["shape"] else 1
        start = col["offset"]
        stop = start + count * dt.itemsize
        if stop > len(buf):
            raise FormatError(f"{bin_path}: column {col['name']} runs past end of file")
        cols[col["name"]] = np.frombuffer(buf, dtype=dt, count=count, offset=start).reshape(col["shape"])
    d, n = side["d"], side["n_rows"]
    samples = np.empty((n, d))
    for i in range(d):
        samples[:, i] = cols[f"x{i}"]
    wall = np.full(n, np.nan)
    if wall_path.exists():
        wbuf = wall_path.read_bytes()
        _check_header(wbuf, WALL_MAGIC, wall_path)
        w = np.frombuffer(wbuf, dtype="<f8", offset=_HEADER)
        if w.shape[0] != n:
            raise FormatError(f"{wall_path}: expected {n} rows, found {w.shape[0]}")
        wall = w.astype(float)
    snaps = cols.get("snapshots")
    return ChainRecord(
        kind=side["kind"],
        samples=samples,
        accept=cols["accept"].astype(bool),
        sigma2=cols["sigma2"].astype(float),
        wall_times=wall,
        phase_marks=dict(side["phase_marks"]),
        seed=int(side["seed"]),
        offset=int(side["offset"]),
        n_invalid=int(side["n_invalid"]),
        snapshot_iters=cols["snapshot_iters"].astype(np.int64),
        snapshots=None if snaps is None else snaps.astype(float),
    )


def export_chain_csv(record, path):
    """One row per stored iteration: ``iteration, x0..x{d-1}, accept, sigma2``."""
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iteration"] + [f"x{i}" for i in range(record.d)] + ["accept", "sigma2"])
        for k in range(record.samples.shape[0]):
            w.writerow([record.offset + k] + [repr(float(v)) for v in record.samples[k]]
                       + [int(record.accept[k]), repr(float(record.sigma2[k]))])
    return path


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        # JSON has no inf/nan
        return v if np.isfinite(v) else None
    return obj


def write_json(obj, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w") as fh:
        json.dump(_jsonable(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")
    os.replace(tmp, path)
    return path


def read_json(path):
    with open(path) as fh:
        return json.load(fh)


def write_dataset(ds, path):
    return write_json({
        "format": DATASET_FORMAT,
        "version": FORMAT_VERSION,
        "y": ds.y,
        "noise_level": ds.noise_level,
        "truth": ds.truth,
        "seed": ds.seed,
        "grid": ds.grid,
        "noiseless": ds.noiseless,
    }, path)


def read_dataset(path):
    try:
        raw = read_json(path)
    except (OSError, json.JSONDecodeError) as exc:
        raise FormatError(f"cannot read dataset {path}: {exc}") from exc
    if raw.get("format") != DATASET_FORMAT or raw.get("version") != FORMAT_VERSION:
        raise FormatError(f"{path}: not a version-{FORMAT_VERSION} dataset")
    return SyntheticDataset(
        y=np.array(raw["y"], dtype=float),
        noise_level=float(raw["noise_level"]),
        truth=np.array(raw["truth"], dtype=float),
        seed=int(raw["seed"]),
        grid=raw["grid"],
        noiseless=np.array(raw["noiseless"], dtype=float),
    )
