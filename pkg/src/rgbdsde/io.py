"""Binary cache for path batches and deterministic CSV/JSON writers.

Cache layout: magic b"LBDS1", a little-endian uint64 header
(n_paths, n_steps, n_atoms, d, n_events, backward rows, seed, backward-mode flag), then
arrays as little-endian float64 in a fixed order.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .errors import ConfigurationError
from .paths import PathBatch, TimeGrid

MAGIC = b"LBDS1"
_HEADER = "<8Q"


def save_batch(batch: PathBatch, path) -> None:
    n, N, J = batch.counts.shape
    header = np.array(
        [n, N, J, batch.d, batch.ev_path.size, batch.dB.shape[0], batch.seed & (2**64 - 1),
         1 if batch.backward_mode == "common" else 0],
        dtype="<u8",
    )
    arrays = [
        batch.grid.nodes, batch.sizes, batch.counts, batch.dW, batch.dB, batch.dH, batch.L,
        batch.compensator, batch.drift_int, batch.ev_path, batch.ev_step, batch.ev_time, batch.ev_atom,
    ]
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(header.tobytes())
        for a in arrays:
            fh.write(np.ascontiguousarray(a, dtype="<f8").tobytes())


def load_batch(path) -> PathBatch:
    raw = Path(path).read_bytes()
    if raw[:5] != MAGIC:
        raise ConfigurationError(f"{path}: not a path-batch cache (bad magic)")
    if len(raw) < 5 + 8 * 8:
        raise ConfigurationError(f"{path}: truncated cache header")
    header = np.frombuffer(raw, dtype="<u8", count=8, offset=5)
    n, N, J, d, E, rows, seed, common = (int(v) for v in header)
    shapes = [(N + 1,), (J,), (n, N, J), (n, N), (rows, N), (n, N, d), (n, N + 1), (N, J), (N,), (E,), (E,), (E,), (E,)]
    off = 5 + 8 * 8
    if off + 8 * sum(int(np.prod(shp)) for shp in shapes) != len(raw):
        raise ConfigurationError(f"{path}: trailing or missing bytes in cache")
    out = []
    for shp in shapes:
        cnt = int(np.prod(shp))
        out.append(np.frombuffer(raw, dtype="<f8", count=cnt, offset=off).reshape(shp).astype(float))
        off += 8 * cnt
    nodes, sizes, counts, dW, dB, dH, L, comp, b_int, ep, es, et, ea = out
    grid = TimeGrid(float(nodes[0]), float(nodes[-1]), nodes)
    return PathBatch(
        grid=grid, n_paths=n, seed=seed, sizes=sizes, counts=counts.astype(np.int32),
        ev_path=ep.astype(np.int64), ev_step=es.astype(np.int64), ev_time=et, ev_atom=ea.astype(np.int64),
        dW=dW, dB=dB, dH=dH, L=L, compensator=comp, drift_int=b_int,
        backward_mode="common" if common else "independent",
    )


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if np.isfinite(v) else str(v)
    return obj


def write_json(path, obj) -> None:
    with open(path, "w") as fh:
        json.dump(_jsonable(obj), fh, indent=2, sort_keys=True)
        fh.write("\n")
