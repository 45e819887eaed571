"""Time loop with a staggered fixed point between bonding and displacement.

Within each step the displacement guess ``ubar`` is frozen while the
bonding field is advanced, then the momentum balance is solved with the new
bonding frozen; the two are alternated until the increments stall.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import energy
from .delamination import BondingField, z_step
from .fem import AssembledOperators, MaterialModel
from .graphs import check_eps
from .mesh import ContactTrace
from .momentum import MomentumSolver, SolverOptions, SystemState, normal_trace, trace_values

log = logging.getLogger(__name__)


class StaggerError(RuntimeError):
    """Inner fixed point did not converge; carries the increment history."""

    def __init__(self, message, increments=None, step_index=None):
        super().__init__(message)
        self.increments = increments or []
        self.step_index = step_index


@dataclass(frozen=True)
class StaggerConfig:
    dt: float
    T: float
    eps: float
    stagger_tol: float = 1e-12
    stagger_max: int = 50
    relax: float = 1.0
    solver: SolverOptions = field(default_factory=SolverOptions)

    def __post_init__(self):
        check_eps(self.eps)
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if not self.T >= self.dt * (1 - 1e-12):
            raise ValueError(f"final time {self.T} shorter than one step {self.dt}")
        if not self.stagger_tol > 0:
            raise ValueError("stagger_tol must be positive")
        if not 0 < self.relax <= 1:
            raise ValueError("relax must lie in (0, 1]")
        if self.stagger_max < 1:
            raise ValueError("stagger_max must be at least 1")

    @property
    def n_steps(self) -> int:
        return int(round(self.T / self.dt))


@dataclass
class StepInfo:
    iterations: int
    increments: list
    ubar: np.ndarray = field(repr=False)
    newton_iterations: int = 0
    momentum_residual: float = 0.0
    momentum_scale: float = 0.0


def _trace_sq(u, trace, dim):
    uc = trace_values(u, trace, dim)
    return np.einsum("ci,ci->c", uc, uc)


def _z_norm(z, trace):
    return math.sqrt(float(np.sum(trace.areas * np.asarray(z) ** 2)))


class Stepper:
    """Staggered step bound to one set of operators, contact trace and load."""

    def __init__(self, cfg: StaggerConfig, ops: AssembledOperators,
                 trace: ContactTrace | None, load):
        self.cfg = cfg
        self.ops = ops
        self.trace = trace if trace is not None and len(trace) else None
        self.load = load
        self.momentum = MomentumSolver(ops, self.trace, cfg.eps, cfg.dt, cfg.solver)

    def step(self, state: SystemState) -> tuple[SystemState, StepInfo]:
        cfg, ops, trace = self.cfg, self.ops, self.trace
        d = ops.mesh.dim
        ubar = state.u + cfg.dt * state.v
        ubar[ops.dirichlet_dofs] = 0.0
        if trace is None or state.bonding is None:
            sol = self.momentum.solve(state, self.load, guess=ubar)
            new = replace(state, t=state.t + cfg.dt, u=sol.u, v=sol.v)
            return new, StepInfo(1, [0.0], ubar, sol.iterations, sol.residual, sol.scale)

        z_prev = state.bonding.z
        increments = []
        newton = 0
        for k in range(1, cfg.stagger_max + 1):
            bonding = z_step(state.bonding, _trace_sq(ubar, trace, d), cfg.eps, cfg.dt)
            sol = self.momentum.solve(state, self.load, z=bonding.z, guess=ubar)
            newton += sol.iterations
            du = math.sqrt(ops.l2_sq(sol.u - ubar))
            dz = _z_norm(bonding.z - z_prev, trace)
            inc = du + dz
            increments.append(inc)
            bound = cfg.stagger_tol * (math.sqrt(ops.l2_sq(sol.u)) + _z_norm(bonding.z, trace) + 1)
            used = ubar
            ubar = sol.u if cfg.relax == 1.0 else cfg.relax * sol.u + (1 - cfg.relax) * ubar
            z_prev = bonding.z
            if inc <= bound:
                new = SystemState(state.t + cfg.dt, sol.u, sol.v, bonding)
                return new, StepInfo(k, increments, used, newton, sol.residual, sol.scale)
        raise StaggerError(
            f"staggered iteration did not converge in {cfg.stagger_max} iterations "
            f"at t={state.t + cfg.dt:.6g} (last increment {increments[-1]:.3e})",
            increments=increments)


def step(state: SystemState, cfg: StaggerConfig, ops: AssembledOperators,
         trace: ContactTrace | None, load) -> SystemState:
    """One staggered time step (convenience wrapper around :class:`Stepper`)."""
    return Stepper(cfg, ops, trace, load).step(state)[0]


@dataclass
class Trajectory:
    states: list
    reports: list
    infos: list

    @property
    def final(self) -> SystemState:
        return self.states[-1]

    def times(self) -> np.ndarray:
        return np.array([s.t for s in self.states])


def check_initial(state: SystemState, ops: AssembledOperators, trace: ContactTrace | None,
                  tol: float = 1e-12) -> list[str]:
    """Admissibility of initial data; returns violation messages."""
    errors = []
    d = ops.mesh.dim
    if state.u.shape != (ops.n_dofs,) or state.v.shape != (ops.n_dofs,):
        errors.append("initial vectors do not match the mesh DOF count")
        return errors
    if np.any(state.u[ops.dirichlet_dofs] != 0) or np.any(state.v[ops.dirichlet_dofs] != 0):
        errors.append("initial data must vanish on the Dirichlet boundary")
    if trace is not None and len(trace):
        un = normal_trace(state.u, trace, d)
        if np.any(un > tol):
            errors.append(f"assumption (c): u0.n = {un.max():.3g} > 0 on the contact "
                          "boundary (initial displacement not admissible)")
        if state.bonding is not None:
            z = state.bonding.z
            if np.any(z < 0) or np.any(z > 1):
                errors.append("assumption (c): z0 out of [0,1]")
    return errors


def run(initial: SystemState, cfg: StaggerConfig, ops: AssembledOperators,
        trace: ContactTrace | None, load, mat: MaterialModel | None = None,
        callback=None, restart: bool = False) -> Trajectory:
    """Integrate from ``initial.t`` to ``cfg.T``; one energy report per state.

    ``restart=True`` continues from a state produced by an earlier run, whose
    regularized constraints need not hold exactly, and skips the
    admissibility checks on initial data.
    """
    errors = check_initial(initial, ops, trace)
    if restart:
        errors = [e for e in errors if not e.startswith("assumption (c)")]
    if errors:
        raise ValueError("; ".join(errors))
    stepper = Stepper(cfg, ops, trace, load)
    n = int(round((cfg.T - initial.t) / cfg.dt))
    states = [initial]
    reports = [energy.evaluate(initial, ops, stepper.trace, mat, cfg.eps)]
    infos = []
    state = initial
    for i in range(n):
        try:
            new, info = stepper.step(state)
        except StaggerError as exc:
            exc.step_index = i + 1
            raise
        rep = energy.evaluate(new, ops, stepper.trace, mat, cfg.eps, prev=state, load=load)
        rep = energy.with_residual(reports[-1], rep, cfg.dt)
        states.append(new)
        reports.append(rep)
        infos.append(info)
        if callback is not None:
            callback(i + 1, new, rep, info)
        state = new
    return Trajectory(states, reports, infos)


def initial_state(ops: AssembledOperators, trace: ContactTrace | None, u0=None, v0=None,
                  z0=1.0, a=1.0, t0: float = 0.0) -> SystemState:
    n = ops.n_dofs
    u = np.zeros(n) if u0 is None else np.array(u0, dtype=float)
    v = np.zeros(n) if v0 is None else np.array(v0, dtype=float)
    bonding = BondingField.initial(z0, a, len(trace)) if trace is not None else None
    return SystemState(t0, u, v, bonding)
