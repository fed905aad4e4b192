"""Artifact serialization: deterministic JSON/CSV with 17-significant-digit
floats (round-trip exact), plus the run manifest."""
from __future__ import annotations

import hashlib
import json
import math
import platform
import time
from pathlib import Path

import numpy as np


def format_float(x: float) -> str:
    if isinstance(x, float):
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return f"{x:.17g}"
    return str(x)


def _json_chunks(obj, indent: int):
    pad = " " * indent
    if obj is None:
        yield "null"
    elif isinstance(obj, bool):
        yield "true" if obj else "false"
    elif isinstance(obj, float):
        if math.isnan(obj) or math.isinf(obj):
            yield f'"{format_float(obj)}"'
        else:
            yield format_float(obj)
    elif isinstance(obj, int):
        yield str(obj)
    elif isinstance(obj, str):
        yield json.dumps(obj)
    elif isinstance(obj, (list, tuple)):
        if not obj:
            yield "[]"
            return
        yield "["
        for i, item in enumerate(obj):
            yield "\n" + pad + "  "
            yield from _json_chunks(item, indent + 2)
            if i < len(obj) - 1:
                yield ","
        yield "\n" + pad + "]"
    elif isinstance(obj, dict):
        if not obj:
            yield "{}"
            return
        yield "{"
        items = list(obj.items())
        for i, (k, v) in enumerate(items):
            yield "\n" + pad + "  " + json.dumps(str(k)) + ": "
            yield from _json_chunks(v, indent + 2)
            if i < len(items) - 1:
                yield ","
        yield "\n" + pad + "}"
    else:
        try:
            yield from _json_chunks(obj.item(), indent)  # numpy scalars
        except AttributeError:
            raise TypeError(f"cannot serialize {type(obj)}")


def dump_json(obj, path: Path):
    text = "".join(_json_chunks(obj, 0)) + "\n"
    Path(path).write_text(text)


def dump_csv(rows, columns, path: Path):
    """Write rows (sequences aligned with ``columns``) with 17-significant-
    digit floats."""
    lines = [",".join(columns)]
    for row in rows:
        cells = []
        for v in row:
            if isinstance(v, bool):
                cells.append(str(v).lower())
            elif isinstance(v, float):
                cells.append(format_float(v))
            else:
                cells.append(str(v))
        lines.append(",".join(cells))
    Path(path).write_text("\n".join(lines) + "\n")


def solution_to_csv(u, path: Path):
    """Solution export: one row per (time level, node) with real and
    imaginary parts."""
    grid = u.grid
    cols = ["t"] + (["x"] if grid.dim == 1 else ["x", "y"]) + ["re", "im"]
    rows = []
    meshes = grid.meshes
    for n, t in enumerate(grid.ts):
        vals = u.values[n].ravel()
        coords = [m.ravel() for m in meshes]
        for i in range(vals.size):
            rows.append([float(t)] + [float(c[i]) for c in coords]
                        + [float(vals[i].real), float(vals[i].imag)])
    dump_csv(rows, cols, path)


def trace_to_csv(trace, path: Path):
    """Boundary-trace export with the same (t, coordinates, Re, Im) layout."""
    grid = trace.grid
    coords = [np.atleast_1d(np.asarray(c, dtype=float)).ravel()
              for c in grid.face_meshes(trace.face)]
    size = max(c.size for c in coords)
    coords = [np.broadcast_to(c, (size,)) for c in coords]
    cols = ["t"] + (["x"] if grid.dim == 1 else ["x", "y"]) + ["re", "im"]
    rows = []
    for n, t in enumerate(grid.ts):
        vals = np.atleast_1d(trace.values[n]).ravel()
        for i in range(vals.size):
            rows.append([float(t)] + [float(c[i]) for c in coords]
                        + [float(vals[i].real), float(vals[i].imag)])
    dump_csv(rows, cols, path)


def config_hash(config_text: str) -> str:
    return hashlib.sha256(config_text.encode()).hexdigest()


def write_manifest(path: Path, subcommand: str, config_text: str, seed):
    import numpy, scipy, sympy
    from . import __version__
    manifest = {
        "subcommand": subcommand,
        "config_sha256": config_hash(config_text),
        "seed": seed,
        "versions": {
            "carlemanlab": __version__,
            "python": platform.python_version(),
            "numpy": numpy.__version__,
            "scipy": scipy.__version__,
            "sympy": sympy.__version__,
        },
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
    }
    dump_json(manifest, path)
