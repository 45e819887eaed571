"""Implicit Euler step of the regularized momentum balance.

With ``u+ = u + dt v+`` the step solves, on the free DOFs,

    M (v+ - v)/dt + K_E u+ + K_V v+ + B_C [gamma_eps(u+ . n) n + (z)^+ u+] = F(t + dt)

where ``B_C`` applies lumped contact areas nodewise and ``z`` is frozen.  The
normal term is piecewise linear and monotone, so a semismooth Newton method
with step halving converges in a handful of iterations.
"""
from __future__ import annotations

import math
from collections import OrderedDict
from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .delamination import BondingField
from .fem import AssembledOperators, extend
from .graphs import NONPOSITIVE, check_eps, yosida
from .mesh import ContactTrace

GAMMA = NONPOSITIVE  # non-penetration u . n <= 0


class ConvergenceError(RuntimeError):
    """Nonlinear iteration stopped without meeting its tolerance."""

    def __init__(self, message, residual=None, history=None):
        super().__init__(message)
        self.residual = residual
        self.history = history or []


@dataclass(frozen=True, eq=False)
class SystemState:
    t: float
    u: np.ndarray
    v: np.ndarray
    bonding: BondingField | None = None


@dataclass(frozen=True)
class LoadSpec:
    """Constant body force ``g`` scaled by a time ramp."""

    g: tuple
    ramp: Callable[[float], float] | None = None

    def factor(self, t: float) -> float:
        s = 1.0 if self.ramp is None else float(self.ramp(t))
        if not math.isfinite(s):
            raise ValueError(f"load ramp is not finite at t={t}")
        return s

    def force(self, ops: AssembledOperators, t: float) -> np.ndarray:
        return self.factor(t) * ops.load_vector(self.g)


def linear_ramp(t_ramp: float) -> Callable[[float], float]:
    def ramp(t):
        return min(t / t_ramp, 1.0)
    return ramp


@dataclass(frozen=True)
class FieldLoad:
    """Body force given as a function ``f(x, t) -> (n_nodes, d)``.

    Integrated against test functions through its P1 interpolant.
    """

    func: Callable

    def force(self, ops: AssembledOperators, t: float) -> np.ndarray:
        vals = np.asarray(self.func(ops.mesh.nodes, t), dtype=float)
        return ops.mass @ vals.reshape(-1)


@dataclass(frozen=True)
class SolverOptions:
    rtol: float = 1e-10
    atol: float = 1e-12
    max_iter: int = 200


def normal_matrix(trace: ContactTrace, n_dofs: int) -> sp.csr_matrix:
    """``(n_contact, n_dofs)`` matrix with ``(N u)_c = u_c . n_c``."""
    d = trace.normals.shape[1]
    rows = np.repeat(np.arange(len(trace)), d)
    cols = trace.dofs(d).ravel()
    return sp.csr_matrix((trace.normals.ravel(), (rows, cols)), shape=(len(trace), n_dofs))


def trace_values(u: np.ndarray, trace: ContactTrace, dim: int) -> np.ndarray:
    """``(n_contact, dim)`` displacement trace at contact nodes."""
    return u[trace.dofs(dim)]


def normal_trace(u, trace: ContactTrace, dim: int) -> np.ndarray:
    return np.einsum("ci,ci->c", trace_values(u, trace, dim), trace.normals)


@dataclass
class MomentumSolution:
    u: np.ndarray
    v: np.ndarray
    iterations: int
    residual: float
    scale: float
    history: list = field(default_factory=list)


class MomentumSolver:
    """Reusable implicit momentum solver for one mesh, step size and ``eps``.

    Factorizations are cached by (bonding, active set); results do not depend
    on the cache.
    """

    def __init__(self, ops: AssembledOperators, trace: ContactTrace | None,
                 eps: float, dt: float, options: SolverOptions | None = None):
        if not dt > 0:
            raise ValueError(f"time step must be positive, got {dt}")
        self.ops = ops
        self.trace = trace
        self.eps = check_eps(eps)
        self.dt = float(dt)
        self.options = options or SolverOptions()
        d = ops.mesh.dim
        self.dim = d
        n = ops.n_dofs
        self.base = (ops.mass / dt**2 + ops.stiff_V / dt + ops.stiff_E).tocsr()
        if trace is not None and len(trace):
            self.N = normal_matrix(trace, n)
            self.cdofs = trace.dofs(d)
            self.areas = np.asarray(trace.areas)
        else:
            self.N = sp.csr_matrix((0, n))
            self.cdofs = np.zeros((0, d), dtype=np.int64)
            self.areas = np.zeros(0)
        self.free = ops.free_dofs
        self._cache: OrderedDict = OrderedDict()

    def _zdiag(self, zplus):
        diag = np.zeros(self.ops.n_dofs)
        if len(self.areas):
            diag[self.cdofs] = (self.areas * zplus)[:, None]
        return diag

    def rhs(self, state: SystemState, load) -> np.ndarray:
        ops, dt = self.ops, self.dt
        f = load.force(ops, state.t + dt) if load is not None else np.zeros(ops.n_dofs)
        return f + ops.mass @ (state.u / dt**2 + state.v / dt) + ops.stiff_V @ (state.u / dt)

    def residual(self, w, zdiag, b) -> np.ndarray:
        r = self.base @ w + zdiag * w - b
        if len(self.areas):
            r += self.N.T @ (self.areas * yosida(GAMMA, self.eps, self.N @ w))
        return r

    def _factor(self, zdiag, active):
        key = (zdiag.tobytes(), active.tobytes())
        lu = self._cache.get(key)
        if lu is None:
            jac = self.base + sp.diags(zdiag)
            if active.any():
                wts = np.where(active, self.areas / self.eps, 0.0)
                jac = jac + self.N.T @ sp.diags(wts) @ self.N
            f = self.free
            lu = spla.splu(sp.csc_matrix(jac)[f][:, f].tocsc())
            self._cache[key] = lu
            if len(self._cache) > 8:
                self._cache.popitem(last=False)
        return lu

    def solve(self, state: SystemState, load, z=None, guess=None) -> MomentumSolution:
        """One step from ``state`` with the bonding ``z`` frozen (default: state's)."""
        opt = self.options
        if z is None:
            z = state.bonding.z if state.bonding is not None else np.zeros(len(self.areas))
        zdiag = self._zdiag(np.maximum(np.asarray(z, dtype=float), 0.0))
        b = self.rhs(state, load)
        f = self.free
        w = np.array(state.u + self.dt * state.v if guess is None else guess, dtype=float)
        w[self.ops.dirichlet_dofs] = 0.0
        scale = float(np.linalg.norm(b[f]))
        tol = opt.rtol * scale + opt.atol
        r = self.residual(w, zdiag, b)
        rn = float(np.linalg.norm(r[f]))
        history = [rn]
        it = 0
        while rn > tol:
            if it >= opt.max_iter:
                raise ConvergenceError(
                    f"momentum iteration stalled at residual {rn:.3e} (tol {tol:.3e})",
                    residual=rn, history=history)
            it += 1
            active = (self.N @ w) > 0
            step = extend(self.ops, self._factor(zdiag, active).solve(-r[f]))
            theta = 1.0
            for _ in range(40):
                w_try = w + theta * step
                r_try = self.residual(w_try, zdiag, b)
                rn_try = float(np.linalg.norm(r_try[f]))
                if rn_try < rn or rn_try <= tol:
                    break
                theta *= 0.5
            else:
                raise ConvergenceError("line search failed in momentum iteration",
                                       residual=rn, history=history)
            w, r, rn = w_try, r_try, rn_try
            history.append(rn)
        w[self.ops.dirichlet_dofs] = 0.0
        v = (w - state.u) / self.dt
        v[self.ops.dirichlet_dofs] = 0.0
        return MomentumSolution(w, v, it, rn, scale, history)

    def step(self, state: SystemState, load, z=None, guess=None) -> SystemState:
        sol = self.solve(state, load, z=z, guess=guess)
        return replace(state, t=state.t + self.dt, u=sol.u, v=sol.v)


def momentum_step(state: SystemState, ops: AssembledOperators, trace: ContactTrace | None,
                  load, eps: float, dt: float,
                  options: SolverOptions | None = None) -> SystemState:
    """Advance ``state`` by ``dt`` with its bonding field frozen."""
    return MomentumSolver(ops, trace, eps, dt, options).step(state, load)


@dataclass(frozen=True, eq=False)
class ContactReaction:
    """Nodal contact pressure proxy and the split of the boundary traction."""

    eta_nodal: np.ndarray
    traction_normal: np.ndarray
    traction_tangential: np.ndarray


def contact_reaction(state: SystemState, trace: ContactTrace, ops: AssembledOperators,
                     eps: float, prev: SystemState | None = None, load=None) -> ContactReaction:
    """Regularized reaction ``gamma_eps(u . n)`` and the traction ``sigma n``.

    With ``prev`` the traction is recovered from the discrete momentum
    residual at the contact nodes (divided by the lumped areas); otherwise it
    is evaluated from the boundary law ``-sigma n = gamma_eps n + (z)^+ u``.
    """
    d = ops.mesh.dim
    un = normal_trace(state.u, trace, d)
    eta = np.asarray(yosida(GAMMA, eps, un), dtype=float).reshape(-1)
    if prev is not None:
        dt = state.t - prev.t
        f = load.force(ops, state.t) if load is not None else np.zeros(ops.n_dofs)
        res = f - (ops.mass @ ((state.v - prev.v) / dt) + ops.stiff_E @ state.u
                   + ops.stiff_V @ state.v)
        sigma_n = -res[trace.dofs(d)] / trace.areas[:, None]
    else:
        z = state.bonding.z if state.bonding is not None else np.zeros(len(trace))
        sigma_n = -(eta[:, None] * trace.normals
                    + np.maximum(z, 0.0)[:, None] * trace_values(state.u, trace, d))
    normal = np.einsum("ci,ci->c", sigma_n, trace.normals)
    tangential = sigma_n - normal[:, None] * trace.normals
    return ContactReaction(eta, normal, tangential)


def complementarity(state: SystemState, trace: ContactTrace, eps: float, dim: int) -> float:
    """``sum_c eta_c (u.n)_c^- A_c``; exactly zero by construction."""
    un = normal_trace(state.u, trace, dim)
    eta = np.asarray(yosida(GAMMA, eps, un)).reshape(-1)
    return float(np.sum(eta * np.maximum(-un, 0.0) * trace.areas))


@dataclass(frozen=True)
class NormReport:
    sup_v_H: float
    l2_u_V: float
    l2_v_V: float
    sup_z: float
    l2_zrate: float

    def as_dict(self):
        return dict(sup_v_H=self.sup_v_H, l2_u_V=self.l2_u_V, l2_v_V=self.l2_v_V,
                    sup_z=self.sup_z, l2_zrate=self.l2_zrate)


def apriori_norms(history, ops: AssembledOperators, trace: ContactTrace | None) -> NormReport:
    """Discrete counterparts of the eps-uniform a priori bounds.

    ``sup_t |v|_H``, ``(sum dt |u|_V^2)^(1/2)``, ``(sum dt |v|_V^2)^(1/2)``,
    ``sup_t |z|`` and ``(sum dt |z_t|^2)^(1/2)`` with ``V`` the H1 norm and
    contact integrals lumped.
    """
    states = list(history)
    areas = np.asarray(trace.areas) if trace is not None else np.zeros(0)
    sup_v = max(math.sqrt(ops.l2_sq(s.v)) for s in states)
    su = sv = sz = 0.0
    for prev, cur in zip(states, states[1:]):
        dt = cur.t - prev.t
        su += dt * ops.h1_sq(cur.u)
        sv += dt * ops.h1_sq(cur.v)
        if cur.bonding is not None:
            sz += dt * float(np.sum(areas * cur.bonding.z_rate**2))
    sup_z = max((math.sqrt(float(np.sum(areas * s.bonding.z**2)))
                 for s in states if s.bonding is not None), default=0.0)
    return NormReport(sup_v, math.sqrt(su), math.sqrt(sv), sup_z, math.sqrt(sz))
