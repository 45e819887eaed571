"""Artifact writers: legacy VTK snapshots, final-state file and run manifest.

Every float is written with ``repr`` so identical runs give identical bytes.
"""
from __future__ import annotations

import hashlib
import json
from pathlib import Path

import numpy as np

from .mesh import Mesh

# VTK cell type ids
_VTK_TYPE = {2: 3, 3: 5, 4: 10}  # vertices per cell -> line / triangle / tetra


def _points(coords: np.ndarray) -> list[str]:
    pts = np.zeros((len(coords), 3))
    pts[:, :coords.shape[1]] = coords
    return [" ".join(repr(float(c)) for c in p) for p in pts]


def _cells(cells: np.ndarray) -> list[str]:
    k = cells.shape[1]
    lines = [f"CELLS {len(cells)} {len(cells) * (k + 1)}"]
    lines += [f"{k} " + " ".join(str(int(i)) for i in c) for c in cells]
    lines.append(f"CELL_TYPES {len(cells)}")
    lines += [str(_VTK_TYPE[k])] * len(cells)
    return lines


def _vectors(name: str, vec: np.ndarray, dim: int) -> list[str]:
    v = np.zeros((len(vec) // dim, 3))
    v[:, :dim] = np.asarray(vec).reshape(-1, dim)
    return [f"VECTORS {name} double"] + [" ".join(repr(float(c)) for c in row) for row in v]


def _scalars(name: str, vals) -> list[str]:
    return [f"SCALARS {name} double 1", "LOOKUP_TABLE default"] + \
        [repr(float(x)) for x in np.asarray(vals)]


def _write(path: Path, title: str, coords, cells, data: list[str]) -> Path:
    lines = ["# vtk DataFile Version 4.2", title, "ASCII", "DATASET UNSTRUCTURED_GRID",
             f"POINTS {len(coords)} double", *_points(coords), *_cells(cells),
             f"POINT_DATA {len(coords)}", *data]
    path.write_text("\n".join(lines) + "\n")
    return path


def write_displacement_vtk(path, mesh: Mesh, u: np.ndarray, v: np.ndarray, t: float) -> Path:
    """Displacement and velocity as point vectors on the volume grid."""
    data = _vectors("displacement", u, mesh.dim) + _vectors("velocity", v, mesh.dim)
    return _write(Path(path), f"displacement t={t!r}", mesh.nodes, mesh.cells, data)


def write_bonding_vtk(path, mesh: Mesh, trace, bonding, t: float) -> Path:
    """Bonding fraction on the contact nodes, as a grid of the contact facets."""
    facets = mesh.tagged("C")
    index = {int(n): i for i, n in enumerate(trace.nodes)}
    local = np.vectorize(index.__getitem__)(facets) if len(facets) else facets
    data = _scalars("z", bonding.z) + _scalars("z_rate", bonding.z_rate)
    return _write(Path(path), f"bonding t={t!r}", mesh.nodes[trace.nodes], local, data)


def write_final_state(path, state) -> Path:
    payload = {"t": state.t, "u": state.u.tolist(), "v": state.v.tolist()}
    if state.bonding is not None:
        payload["z"] = state.bonding.z.tolist()
        payload["z_rate"] = state.bonding.z_rate.tolist()
    Path(path).write_text(json.dumps(payload) + "\n")
    return Path(path)


def read_final_state(path) -> dict:
    data = json.loads(Path(path).read_text())
    return {k: (np.array(v) if isinstance(v, list) else v) for k, v in data.items()}


def sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def write_manifest(outdir, files, meta: dict | None = None) -> Path:
    """``manifest.json`` listing every emitted file with size and sha256."""
    outdir = Path(outdir)
    entries = []
    for f in sorted(Path(f) for f in files):
        entries.append({"path": f.relative_to(outdir).as_posix(), "bytes": f.stat().st_size,
                        "sha256": sha256(f)})
    path = outdir / "manifest.json"
    path.write_text(json.dumps({"meta": meta or {}, "files": entries}, indent=1) + "\n")
    return path
