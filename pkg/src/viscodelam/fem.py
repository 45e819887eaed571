"""P1 vector finite elements: isotropic materials and exact assembly.

DOFs are interleaved by node: global index ``dim * node + component``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .mesh import Mesh, cell_volumes, facet_geometry


class MaterialError(ValueError):
    pass


@dataclass(frozen=True)
class MaterialModel:
    """Elastic and viscous Lame pairs of an isotropic Kelvin-Voigt solid."""

    lame_lambda_E: float
    lame_mu_E: float
    lame_lambda_V: float
    lame_mu_V: float

    def __post_init__(self):
        vals = (self.lame_lambda_E, self.lame_mu_E, self.lame_lambda_V, self.lame_mu_V)
        if not all(math.isfinite(v) for v in vals):
            raise MaterialError("Lame parameters must be finite")
        for name, mu in (("elastic", self.lame_mu_E), ("viscous", self.lame_mu_V)):
            if mu <= 0:
                raise MaterialError(f"{name} shear modulus must be positive, got {mu}")

    def pairs(self):
        return ((self.lame_lambda_E, self.lame_mu_E), (self.lame_lambda_V, self.lame_mu_V))

    def check(self, dim: int) -> None:
        for lam, mu in self.pairs():
            if dim * lam + 2 * mu <= 0:
                raise MaterialError(
                    f"tensor not positive definite in {dim}-D: d*lambda + 2*mu = {dim * lam + 2 * mu}")

    def stress(self, strain, which: str = "E"):
        """Apply the elasticity (``E``) or viscosity (``V``) tensor to a strain."""
        lam, mu = self.pairs()[0 if which == "E" else 1]
        strain = np.asarray(strain, dtype=float)
        tr = np.trace(strain, axis1=-2, axis2=-1)[..., None, None]
        return lam * tr * np.eye(strain.shape[-1]) + 2 * mu * strain


def coercivity_constant(mat: MaterialModel, dim: int, which: str | None = None) -> float:
    """Smallest eigenvalue on symmetric matrices of ``E``, ``V`` or (default) both.

    An isotropic tensor acts as ``2 mu`` on deviators and ``d lambda + 2 mu``
    on multiples of the identity.
    """
    mat.check(dim)
    pairs = mat.pairs() if which is None else [mat.pairs()[0 if which == "E" else 1]]
    return min(min(2 * mu, dim * lam + 2 * mu) for lam, mu in pairs)


@dataclass(frozen=True, eq=False)
class AssembledOperators:
    mesh: Mesh
    mass: sp.csr_matrix
    stiff_E: sp.csr_matrix
    stiff_V: sp.csr_matrix
    bmass_C: sp.csr_matrix
    grad: sp.csr_matrix
    dirichlet_dofs: np.ndarray
    free_dofs: np.ndarray

    @property
    def n_dofs(self) -> int:
        return self.mass.shape[0]

    def h1_sq(self, u) -> float:
        """Squared H1 norm ``|u|_L2^2 + |grad u|_L2^2``."""
        return float(u @ (self.mass @ u) + u @ (self.grad @ u))

    def l2_sq(self, u) -> float:
        return float(u @ (self.mass @ u))

    def load_vector(self, g) -> np.ndarray:
        """Consistent load of a spatially constant body force."""
        g = np.asarray(g, dtype=float)
        return self.mass @ np.tile(g, self.mesh.n_nodes)


def _gradients(mesh: Mesh):
    x = mesh.nodes[mesh.cells]
    jac = x[:, 1:, :] - x[:, :1, :]
    g = np.linalg.inv(jac).transpose(0, 2, 1)
    g0 = -g.sum(axis=1, keepdims=True)
    return np.concatenate([g0, g], axis=1)


def _scatter(mesh: Mesh, blocks: np.ndarray) -> sp.csr_matrix:
    """Sum ``(m, k, d, k, d)`` element blocks into a global CSR matrix."""
    d = mesh.dim
    dofs = (mesh.cells[:, :, None] * d + np.arange(d)).reshape(len(mesh.cells), -1)
    nloc = dofs.shape[1]
    rows = np.repeat(dofs, nloc, axis=1).ravel()
    cols = np.tile(dofs, (1, nloc)).ravel()
    n = mesh.n_dofs
    return sp.coo_matrix((blocks.reshape(len(dofs), -1).ravel(), (rows, cols)),
                         shape=(n, n)).tocsr()


def _elastic_blocks(g, vol, lam, mu):
    d = g.shape[-1]
    eye = np.eye(d)
    gg = np.einsum("cak,cbk->cab", g, g)
    blk = (lam * np.einsum("cai,cbj->caibj", g, g)
           + mu * np.einsum("caj,cbi->caibj", g, g)
           + mu * np.einsum("cab,ij->caibj", gg, eye))
    return blk * vol[:, None, None, None, None]


def _simplex_mass(k_nodes: int, measure: np.ndarray, d: int):
    """Exact P1 mass blocks on simplices with ``k_nodes`` vertices."""
    loc = (np.ones((k_nodes, k_nodes)) + np.eye(k_nodes)) / (k_nodes * (k_nodes + 1))
    return np.einsum("c,ab,ij->caibj", measure, loc, np.eye(d))


def assemble(mesh: Mesh, mat: MaterialModel, dirichlet_tags=("D",)) -> AssembledOperators:
    """Assemble mass, elastic, viscous, contact-boundary mass and H1 gradient forms.

    P1 integrands are polynomials of degree at most two, so the closed-form
    simplex integrals used here are exact.
    """
    mat.check(mesh.dim)
    d = mesh.dim
    g = _gradients(mesh)
    vol = cell_volumes(mesh)
    (lam_e, mu_e), (lam_v, mu_v) = mat.pairs()
    stiff_e = _scatter(mesh, _elastic_blocks(g, vol, lam_e, mu_e))
    stiff_v = _scatter(mesh, _elastic_blocks(g, vol, lam_v, mu_v))
    gg = np.einsum("cak,cbk->cab", g, g) * vol[:, None, None]
    grad = _scatter(mesh, np.einsum("cab,ij->caibj", gg, np.eye(d)))
    mass = _scatter(mesh, _simplex_mass(d + 1, vol, d))

    sel = mesh.facet_tags == "C"
    n = mesh.n_dofs
    if sel.any():
        facets = mesh.facets[sel]
        area, _ = facet_geometry(mesh, facets, mesh.facet_owner[sel])
        blk = _simplex_mass(d, area, d)
        fd = (facets[:, :, None] * d + np.arange(d)).reshape(len(facets), -1)
        nloc = fd.shape[1]
        bmass = sp.coo_matrix(
            (blk.reshape(len(fd), -1).ravel(),
             (np.repeat(fd, nloc, axis=1).ravel(), np.tile(fd, (1, nloc)).ravel())),
            shape=(n, n)).tocsr()
    else:
        bmass = sp.csr_matrix((n, n))

    dnodes = np.unique(np.concatenate(
        [mesh.tagged(t).ravel() for t in dirichlet_tags] + [np.empty(0, np.int64)]))
    ddofs = (dnodes[:, None] * d + np.arange(d)).ravel().astype(np.int64)
    free = np.setdiff1d(np.arange(n), ddofs)
    for a in (ddofs, free):
        a.setflags(write=False)
    return AssembledOperators(mesh, mass, stiff_e, stiff_v, bmass, grad, ddofs, free)


def apply_dirichlet(ops: AssembledOperators, matrix_or_residual):
    """Restrict a matrix (rows and columns) or a vector to the free DOFs."""
    f = ops.free_dofs
    if sp.issparse(matrix_or_residual):
        return matrix_or_residual.tocsr()[f][:, f]
    a = np.asarray(matrix_or_residual)
    if a.ndim == 2:
        return a[np.ix_(f, f)]
    return a[f]


def extend(ops: AssembledOperators, x_free) -> np.ndarray:
    """Full-length vector with zeros on Dirichlet DOFs."""
    x = np.zeros(ops.n_dofs)
    x[ops.free_dofs] = x_free
    return x


def solve_constrained(ops: AssembledOperators, matrix, rhs) -> np.ndarray:
    """Solve ``matrix x = rhs`` on the free DOFs with ``x = 0`` on Dirichlet DOFs."""
    if len(ops.free_dofs) == 0:
        return np.zeros(ops.n_dofs)
    a = apply_dirichlet(ops, sp.csc_matrix(matrix))
    b = apply_dirichlet(ops, rhs)
    return extend(ops, spla.splu(a.tocsc()).solve(b))
