"""Ready-made problem set-ups used by the CLI, the sweep and the tests."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .fem import AssembledOperators, MaterialModel, assemble
from .mesh import ContactTrace, Mesh, build_contact_trace, unit_block_mesh, validate
from .momentum import LoadSpec, SystemState, linear_ramp
from .stepper import initial_state


@dataclass
class Scenario:
    """Mesh, material, load and initial data of one simulation."""

    mesh: Mesh
    mat: MaterialModel
    load: object
    a: object = 1.0
    z0: object = 1.0
    u0: np.ndarray | None = None
    v0: np.ndarray | None = None
    contact: bool = True
    dirichlet_tags: tuple = ("D",)
    name: str = "custom"
    _built: tuple | None = field(default=None, repr=False)

    def build(self) -> tuple[AssembledOperators, ContactTrace | None, SystemState]:
        if self._built is None:
            rep = validate(self.mesh)
            if not rep.ok:
                raise ValueError(rep.summary())
            ops = assemble(self.mesh, self.mat, self.dirichlet_tags)
            trace = build_contact_trace(self.mesh) if self.contact else None
            self._built = (ops, trace)
        ops, trace = self._built
        u0 = self.u0(ops) if callable(self.u0) else self.u0
        v0 = self.v0(ops) if callable(self.v0) else self.v0
        return ops, trace, initial_state(ops, trace, u0, v0, self.z0, self.a)


CANONICAL_MATERIAL = MaterialModel(1.0, 1.0, 0.1, 0.1)
#: oblique body force: pushes the body onto the wall at x = 1 and shears it
CANONICAL_LOAD = (5.0, -20.0)


def canonical(n: int = 8) -> Scenario:
    """Unit square clamped at x = 0, adhesive wall at x = 1, ramped oblique load.

    The shear part drives the contact trace far enough for the bonds to
    break completely within ``T = 1``.
    """
    mesh = unit_block_mesh(2, n, {"x0": "D", "x1": "C", "else": "N"})
    return Scenario(mesh, CANONICAL_MATERIAL, LoadSpec(CANONICAL_LOAD, linear_ramp(0.5)),
                    a=0.05, z0=1.0, name="canonical")


def pull_away(n: int = 8) -> Scenario:
    """Same body pulled away from the wall: the normal constraint never binds."""
    mesh = unit_block_mesh(2, n, {"x0": "D", "x1": "C", "else": "N"})
    return Scenario(mesh, CANONICAL_MATERIAL, LoadSpec((-1.0, 0.0), linear_ramp(0.5)),
                    a=0.0, z0=1.0, name="pull_away")


def free_decay(n: int = 8) -> Scenario:
    """No load; the body starts with a velocity field and comes to rest."""
    mesh = unit_block_mesh(2, n, {"x0": "D", "x1": "C", "else": "N"})

    def v0(ops):
        x = ops.mesh.nodes
        vel = np.stack([0.5 * x[:, 0], -2.0 * x[:, 0] ** 2], axis=1).ravel()
        vel[ops.dirichlet_dofs] = 0.0
        return vel

    return Scenario(mesh, CANONICAL_MATERIAL, LoadSpec((0.0, 0.0)), a=0.05, z0=1.0,
                    v0=v0, name="free_decay")


SCENARIOS = {"canonical": canonical, "pull_away": pull_away, "free_decay": free_decay}
