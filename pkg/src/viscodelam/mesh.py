"""Simplicial meshes with a tagged Dirichlet / Neumann / contact boundary."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

TAGS = ("D", "N", "C")
FACES = ("x0", "x1", "y0", "y1", "z0", "z1")
DEFAULT_RECIPE = {"x0": "D", "x1": "C", "else": "N"}


class MeshError(ValueError):
    """Malformed mesh input or an unusable tag recipe."""


def _frozen(a, dtype):
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Mesh:
    """Nodes, positively oriented cells and tagged boundary facets.

    ``facet_owner[k]`` is the index of the cell containing facet ``k`` (or -1
    when no such cell exists, which :func:`validate` reports).
    """

    dim: int
    nodes: np.ndarray
    cells: np.ndarray
    facets: np.ndarray
    facet_tags: np.ndarray
    facet_owner: np.ndarray = field(repr=False)

    @classmethod
    def from_arrays(cls, nodes, cells, facets, tags) -> "Mesh":
        nodes = np.asarray(nodes, dtype=float)
        if nodes.ndim != 2 or nodes.shape[1] not in (2, 3):
            raise MeshError(f"nodes must have shape (n, 2) or (n, 3), got {nodes.shape}")
        dim = nodes.shape[1]
        cells = np.asarray(cells, dtype=np.int64).reshape(-1, dim + 1)
        facets = np.asarray(facets, dtype=np.int64).reshape(-1, dim)
        tags = np.asarray(list(tags), dtype="<U1")
        if tags.shape != (len(facets),):
            raise MeshError("one tag per boundary facet is required")
        owner = _facet_owners(cells, facets, len(nodes))
        return cls(dim, _frozen(nodes, float), _frozen(cells, np.int64),
                   _frozen(facets, np.int64), _frozen(tags, "<U1"),
                   _frozen(owner, np.int64))

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_dofs(self) -> int:
        return self.dim * len(self.nodes)

    def tagged(self, tag: str) -> np.ndarray:
        """Facets carrying ``tag``."""
        return self.facets[self.facet_tags == tag]

    def tagged_nodes(self, tag: str) -> np.ndarray:
        return np.unique(self.tagged(tag))


def _face_keys(faces: np.ndarray) -> list[tuple]:
    return [tuple(f) for f in np.sort(faces, axis=1)]


def _cell_faces(cells: np.ndarray):
    """All (cell, face) pairs; faces sorted rowwise."""
    k = cells.shape[1]
    combos = list(itertools.combinations(range(k), k - 1))
    faces = np.concatenate([cells[:, c] for c in combos], axis=0)
    owner = np.tile(np.arange(len(cells)), len(combos))
    return np.sort(faces, axis=1), owner


def _facet_owners(cells, facets, n_nodes):
    owner = np.full(len(facets), -1, dtype=np.int64)
    if len(cells) == 0 or len(facets) == 0:
        return owner
    if cells.min() < 0 or cells.max() >= n_nodes:
        return owner
    faces, fowner = _cell_faces(cells)
    lookup = {}
    for key, c in zip(_face_keys(faces), fowner):
        lookup.setdefault(key, c)
    for i, key in enumerate(_face_keys(facets)):
        owner[i] = lookup.get(key, -1)
    return owner


def simplex_measure(points: np.ndarray) -> np.ndarray:
    """Signed volumes of simplices given as ``(m, d+1, d)`` coordinates."""
    d = points.shape[-1]
    jac = points[:, 1:, :] - points[:, :1, :]
    return np.linalg.det(jac) / math.factorial(d)


def cell_volumes(mesh: Mesh) -> np.ndarray:
    return simplex_measure(mesh.nodes[mesh.cells])


def facet_geometry(mesh: Mesh, facets=None, owners=None):
    """Areas and outward unit normals of boundary facets.

    The orientation is fixed by pointing away from the owning cell's
    opposite vertex.
    """
    if facets is None:
        facets, owners = mesh.facets, mesh.facet_owner
    x = mesh.nodes[facets]
    if mesh.dim == 2:
        t = x[:, 1] - x[:, 0]
        raw = np.stack([t[:, 1], -t[:, 0]], axis=1)
        area = np.linalg.norm(raw, axis=1)
    else:
        raw = np.cross(x[:, 1] - x[:, 0], x[:, 2] - x[:, 0])
        area = 0.5 * np.linalg.norm(raw, axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        n = raw / np.linalg.norm(raw, axis=1)[:, None]
    for k, c in enumerate(owners):
        if c < 0:
            continue
        opposite = [v for v in mesh.cells[c] if v not in facets[k]]
        if opposite and np.dot(n[k], mesh.nodes[opposite[0]] - x[k, 0]) > 0:
            n[k] = -n[k]
    return area, n


@dataclass
class ValidationReport:
    """Outcome of :func:`validate`: failed checks mapped to offending indices."""

    failures: dict[str, list[int]] = field(default_factory=dict)

    @property
    def ok(self) -> bool:
        return not self.failures

    def fail(self, name: str, indices=()):
        self.failures.setdefault(name, []).extend(int(i) for i in indices)

    def summary(self) -> str:
        if self.ok:
            return "mesh valid"
        parts = []
        for name, idx in self.failures.items():
            shown = ", ".join(map(str, idx[:10])) + (" ..." if len(idx) > 10 else "")
            parts.append(f"{name}: [{shown}]")
        return "mesh invalid; " + "; ".join(parts)


def validate(mesh: Mesh) -> ValidationReport:
    """Check connectivity, orientation and the boundary decomposition."""
    rep = ValidationReport()
    n = mesh.n_nodes
    bad_cells = np.flatnonzero(((mesh.cells < 0) | (mesh.cells >= n)).any(axis=1))
    bad_facets = np.flatnonzero(((mesh.facets < 0) | (mesh.facets >= n)).any(axis=1))
    if len(bad_cells):
        rep.fail("cell_references_missing_node", bad_cells)
    if len(bad_facets):
        rep.fail("facet_references_missing_node", bad_facets)
    if len(mesh.cells) == 0:
        rep.fail("no_cells")
    if not rep.ok:
        return rep

    vol = cell_volumes(mesh)
    if (vol <= 0).any():
        rep.fail("nonpositive_volume", np.flatnonzero(vol <= 0))

    faces, _ = _cell_faces(mesh.cells)
    keys, counts = np.unique(faces, axis=0, return_counts=True)
    boundary = {tuple(k) for k, c in zip(keys, counts) if c == 1}
    seen: dict[tuple, int] = {}
    for i, key in enumerate(_face_keys(mesh.facets)):
        if key not in boundary:
            rep.fail("facet_not_on_boundary", [i])
        if key in seen:
            rep.fail("duplicate_facet", [i])
        seen.setdefault(key, i)
    missing = sorted(boundary.difference(seen))
    if missing:
        rep.fail("untagged_boundary_nodes", sorted({v for f in missing for v in f}))

    unknown = np.flatnonzero(~np.isin(mesh.facet_tags, TAGS))
    if len(unknown):
        rep.fail("unknown_tag", unknown)
    for tag in TAGS:
        if not (mesh.facet_tags == tag).any():
            rep.fail(f"empty_tag_{tag}")

    shared = np.intersect1d(mesh.tagged_nodes("D"), mesh.tagged_nodes("C"))
    if len(shared):
        rep.fail("dirichlet_contact_overlap", shared)
    return rep


@dataclass(frozen=True, eq=False)
class ContactTrace:
    """Contact nodes with nodal outward normals and lumped boundary weights."""

    nodes: np.ndarray
    normals: np.ndarray
    areas: np.ndarray

    def __len__(self):
        return len(self.nodes)

    def dofs(self, dim: int) -> np.ndarray:
        """``(n_contact, dim)`` global DOF indices of the contact nodes."""
        return self.nodes[:, None] * dim + np.arange(dim)[None, :]


def build_contact_trace(mesh: Mesh) -> ContactTrace:
    """Assemble nodal normals (area-weighted) and lumped areas on the C part."""
    sel = np.flatnonzero(mesh.facet_tags == "C")
    if len(sel) == 0:
        raise MeshError("contact boundary is empty")
    facets = mesh.facets[sel]
    area, normal = facet_geometry(mesh, facets, mesh.facet_owner[sel])
    nodes = np.unique(facets)
    index = {v: i for i, v in enumerate(nodes)}
    lumped = np.zeros(len(nodes))
    accum = np.zeros((len(nodes), mesh.dim))
    for f, a, nf in zip(facets, area, normal):
        for v in f:
            i = index[v]
            lumped[i] += a / mesh.dim
            accum[i] += a * nf
    normals = accum / np.linalg.norm(accum, axis=1)[:, None]
    return ContactTrace(_frozen(nodes, np.int64), _frozen(normals, float),
                        _frozen(lumped, float))


def unit_block_mesh(dim: int, n: int, tags: dict | None = None) -> Mesh:
    """Structured simplicial mesh of ``[0, 1]^dim`` with ``n`` cells per axis.

    ``tags`` maps face names (``x0``, ``x1``, ``y0``, ...) to a tag, with the
    key ``else`` covering the rest.  Squares are cut along one diagonal and
    cubes into the six Kuhn tetrahedra, which keeps the mesh conforming.
    """
    if dim not in (2, 3):
        raise MeshError(f"dimension must be 2 or 3, got {dim}")
    if n < 1:
        raise MeshError(f"need at least one subdivision, got {n}")
    recipe = dict(DEFAULT_RECIPE if tags is None else tags)
    for face, tag in recipe.items():
        if face != "else" and face not in FACES[: 2 * dim]:
            raise MeshError(f"unknown face {face!r} in tag recipe")
        if tag not in TAGS:
            raise MeshError(f"unknown tag {tag!r} in tag recipe")

    ticks = np.linspace(0.0, 1.0, n + 1)
    grids = np.meshgrid(*([ticks] * dim), indexing="ij")
    nodes = np.stack([g.ravel() for g in grids], axis=1)
    shape = (n + 1,) * dim

    def nid(idx):
        return np.ravel_multi_index(tuple(idx), shape)

    cells = []
    for base in itertools.product(range(n), repeat=dim):
        for perm in itertools.permutations(range(dim)):
            cur = list(base)
            simplex = [nid(cur)]
            for axis in perm:
                cur[axis] += 1
                simplex.append(nid(cur))
            cells.append(simplex)
    cells = np.array(cells, dtype=np.int64)
    vol = simplex_measure(nodes[cells])
    flip = vol < 0
    cells[flip, 0], cells[flip, 1] = cells[flip, 1].copy(), cells[flip, 0].copy()

    faces, _ = _cell_faces(cells)
    keys, counts = np.unique(faces, axis=0, return_counts=True)
    bfacets = keys[counts == 1]
    ftags = []
    for f in bfacets:
        x = nodes[f]
        face = None
        for axis in range(dim):
            for side, val in ((0, 0.0), (1, 1.0)):
                if np.all(x[:, axis] == val):
                    face = FACES[2 * axis + side]
        tag = recipe.get(face, recipe.get("else"))
        if tag is None:
            raise MeshError(f"tag recipe leaves face {face} untagged")
        ftags.append(tag)
    for tag in TAGS:
        if tag not in ftags:
            raise MeshError(f"tag recipe leaves class {tag} empty")
    return Mesh.from_arrays(nodes, cells, bfacets, ftags)


def format_mesh(mesh: Mesh) -> str:
    lines = [f"mesh {mesh.dim} {mesh.n_nodes} {len(mesh.cells)} {len(mesh.facets)}"]
    lines += [" ".join(repr(float(c)) for c in x) for x in mesh.nodes]
    lines += [" ".join(str(int(v)) for v in c) for c in mesh.cells]
    lines += [" ".join(str(int(v)) for v in f) + f" {t}"
              for f, t in zip(mesh.facets, mesh.facet_tags)]
    return "\n".join(lines) + "\n"


def parse_mesh(text: str) -> Mesh:
    """Parse the line-oriented mesh format; errors carry 1-based line numbers."""
    lines = [(i + 1, ln.split()) for i, ln in enumerate(text.splitlines())]
    lines = [(i, toks) for i, toks in lines if toks]
    if not lines:
        raise MeshError("line 1: empty mesh file")
    lineno, head = lines[0]
    if len(head) != 5 or head[0] != "mesh":
        raise MeshError(f"line {lineno}: expected 'mesh <dim> <n_nodes> <n_cells> <n_bfacets>'")
    try:
        dim, nn, nc, nf = (int(t) for t in head[1:])
    except ValueError:
        raise MeshError(f"line {lineno}: header counts must be integers") from None
    if dim not in (2, 3) or min(nn, nc, nf) < 0:
        raise MeshError(f"line {lineno}: invalid header values")
    body = lines[1:]
    if len(body) != nn + nc + nf:
        raise MeshError(f"line {lineno}: header announces {nn + nc + nf} data lines, "
                        f"found {len(body)}")

    def ints(i, toks, count):
        if len(toks) != count:
            raise MeshError(f"line {i}: expected {count} node indices, got {len(toks)}")
        try:
            vals = [int(t) for t in toks]
        except ValueError:
            raise MeshError(f"line {i}: node indices must be integers") from None
        if any(v < 0 or v >= nn for v in vals):
            raise MeshError(f"line {i}: node index out of range [0, {nn})")
        return vals

    nodes = []
    for i, toks in body[:nn]:
        if len(toks) != dim:
            raise MeshError(f"line {i}: expected {dim} coordinates, got {len(toks)}")
        try:
            nodes.append([float(t) for t in toks])
        except ValueError:
            raise MeshError(f"line {i}: coordinates must be real numbers") from None
    cells = [ints(i, toks, dim + 1) for i, toks in body[nn:nn + nc]]
    facets, tags = [], []
    for i, toks in body[nn + nc:]:
        if not toks or toks[-1] not in TAGS:
            raise MeshError(f"line {i}: facet tag must be one of D, N, C")
        facets.append(ints(i, toks[:-1], dim))
        tags.append(toks[-1])
    return Mesh.from_arrays(np.array(nodes).reshape(nn, dim), cells, facets, tags)


def read_mesh(path) -> Mesh:
    return parse_mesh(Path(path).read_text())


def write_mesh(mesh: Mesh, path) -> None:
    Path(path).write_text(format_mesh(mesh))
