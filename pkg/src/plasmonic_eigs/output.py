"""File emission: CSV tables, legacy VTK fields, log-log SVG plots, run manifests."""

from __future__ import annotations

import hashlib
import json
import math
from pathlib import Path

import numpy as np

from .experiments import fit_loglog
from .mesh import Mesh


def fmt_num(x) -> str:
    """Shortest round-trip decimal; NaN becomes an empty field."""
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    x = float(x)
    if math.isnan(x):
        return ""
    return repr(x)


def write_csv(path, header: list, rows) -> None:
    lines = [",".join(header)]
    for r in rows:
        lines.append(",".join(fmt_num(v) if not isinstance(v, str) else v for v in r))
    Path(path).write_text("\n".join(lines) + "\n")


def _g9(x: float) -> str:
    return f"{x:.8e}"


def write_vtk_field(mesh: Mesh, values, path, name: str = "u", title: str = "plasmonic_eigs field") -> None:
    """Legacy ASCII VTK unstructured grid with one nodal scalar and the region tag per cell."""
    v = np.asarray(values, dtype=float)
    if v.shape != (mesh.n_nodes,):
        raise ValueError(f"expected {mesh.n_nodes} nodal values, got shape {v.shape}")
    n, t = mesh.n_nodes, mesh.n_triangles
    out = ["# vtk DataFile Version 3.0", title, "ASCII", "DATASET UNSTRUCTURED_GRID",
           f"POINTS {n} double"]
    out += [f"{_g9(x)} {_g9(y)} {_g9(0.0)}" for x, y in mesh.nodes]
    out.append(f"CELLS {t} {4 * t}")
    out += [f"3 {i} {j} {k}" for i, j, k in mesh.triangles]
    out.append(f"CELL_TYPES {t}")
    out += ["5"] * t
    out += [f"POINT_DATA {n}", f"SCALARS {name} double 1", "LOOKUP_TABLE default"]
    out += [_g9(x) for x in v]
    out += [f"CELL_DATA {t}", "SCALARS region int 1", "LOOKUP_TABLE default"]
    out += [str(int(r)) for r in mesh.regions]
    Path(path).write_text("\n".join(out) + "\n")


_COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"]


def write_loglog_svg(series, labels, path, fit=True, xlabel: str = "x", ylabel: str = "y",
                     width: int = 560, height: int = 420) -> dict:
    """Standalone log-log SVG, one polyline per series.

    ``series`` is a list of (xs, ys); ``fit`` (bool or list of bools) adds a
    least-squares slope annotation such as ``slope 2.00``.  Returns the fitted
    slopes keyed by label.  Nothing is written when validation fails.
    """
    if not series:
        raise ValueError("no series to plot")
    if len(labels) != len(series):
        raise ValueError("need one label per series")
    fits = fit if isinstance(fit, (list, tuple)) else [fit] * len(series)
    data = []
    for xs, ys in series:
        xs, ys = np.asarray(xs, dtype=float), np.asarray(ys, dtype=float)
        if xs.size == 0 or xs.shape != ys.shape:
            raise ValueError("empty or mismatched series")
        if np.any(xs <= 0) or np.any(ys <= 0) or not np.all(np.isfinite(xs * ys)):
            raise ValueError("log axes need positive finite data")
        data.append((np.log10(xs), np.log10(ys)))
    allx = np.concatenate([d[0] for d in data])
    ally = np.concatenate([d[1] for d in data])
    x0, x1 = math.floor(allx.min()), math.ceil(allx.max())
    y0, y1 = math.floor(ally.min()), math.ceil(ally.max())
    x1, y1 = max(x1, x0 + 1), max(y1, y0 + 1)
    L, R, T, B = 70, 20, 20, 50
    pw, ph = width - L - R, height - T - B

    def px(lx):
        return L + (lx - x0) / (x1 - x0) * pw

    def py(ly):
        return T + (y1 - ly) / (y1 - y0) * ph

    s = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
         f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">',
         f'<rect x="{L}" y="{T}" width="{pw}" height="{ph}" fill="none" stroke="black"/>']
    for e in range(x0, x1 + 1):
        s.append(f'<line x1="{px(e):.2f}" y1="{T}" x2="{px(e):.2f}" y2="{T + ph}" stroke="#ddd"/>')
        s.append(f'<text x="{px(e):.2f}" y="{T + ph + 16}" text-anchor="middle">1e{e}</text>')
    for e in range(y0, y1 + 1):
        s.append(f'<line x1="{L}" y1="{py(e):.2f}" x2="{L + pw}" y2="{py(e):.2f}" stroke="#ddd"/>')
        s.append(f'<text x="{L - 6}" y="{py(e) + 4:.2f}" text-anchor="end">1e{e}</text>')
    s.append(f'<text x="{L + pw / 2:.1f}" y="{height - 10}" text-anchor="middle">{xlabel}</text>')
    s.append(f'<text x="16" y="{T + ph / 2:.1f}" text-anchor="middle" '
             f'transform="rotate(-90 16 {T + ph / 2:.1f})">{ylabel}</text>')
    slopes = {}
    for i, ((lx, ly), lab, do_fit) in enumerate(zip(data, labels, fits)):
        c = _COLORS[i % len(_COLORS)]
        pts = " ".join(f"{px(a):.2f},{py(b):.2f}" for a, b in zip(lx, ly))
        s.append(f'<polyline points="{pts}" fill="none" stroke="{c}" stroke-width="1.5"/>')
        for a, b in zip(lx, ly):
            s.append(f'<circle cx="{px(a):.2f}" cy="{py(b):.2f}" r="2.5" fill="{c}"/>')
        text = lab
        if do_fit and len(lx) >= 3:
            reg = fit_loglog(np.column_stack([10 ** lx, 10 ** ly]))
            slopes[lab] = reg.slope
            text += f" (slope {reg.slope:.2f})"
        s.append(f'<text x="{L + 10}" y="{T + 18 + 16 * i}" fill="{c}">{text}</text>')
    s.append("</svg>")
    Path(path).write_text("\n".join(s) + "\n")
    return slopes


def git_blob_sha1(data: bytes) -> str:
    return hashlib.sha1(b"blob %d\0" % len(data) + data).hexdigest()


def write_manifest(directory, command: str, config_json: str, files: list, extra: dict | None = None) -> Path:
    """JSON manifest listing the inputs, the config hash and every emitted file."""
    d = Path(directory)
    entries = []
    for f in sorted(files):
        p = d / f
        entries.append({"path": f, "sha1": git_blob_sha1(p.read_bytes())})
    man = {
        "command": command,
        "config": json.loads(config_json),
        "config_sha1": git_blob_sha1(config_json.encode()),
        "files": entries,
    }
    if extra:
        man.update(extra)
    path = d / "manifest.json"
    path.write_text(json.dumps(man, indent=2, sort_keys=True) + "\n")
    return path
