"""Energy, dissipation and the discrete energy balance.

For a step ``(u, v, z) -> (u+, v+, z+)`` of the implicit scheme, testing the
momentum step with ``u+ - u`` and the bonding step with ``z+ - z`` gives

    E+ - E + dt D+ - dt <F+, v+> - dt C+ = -(convexity gaps) - num. dissipation

where the correction rate ``C+`` accounts for the positive part ``(z+)^+``
multiplying ``u+`` in the boundary law and for the product rule on
``z |u|^2 / 2``:

    dt C+ = -sum_c A_c [((z+_c)^+ - z_c) u+_c . (u+_c - u_c) + z_c |u+_c - u_c|^2 / 2].

As ``dt -> 0`` this tends to ``-int (z)^- u . u_t``.  The right side above is
nonpositive, so the residual is bounded by solver tolerances.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, replace

import numpy as np

from .delamination import ALPHA, BETA
from .fem import AssembledOperators, MaterialModel
from .graphs import antiderivative_yosida, yosida
from .mesh import ContactTrace
from .momentum import GAMMA, SystemState, normal_trace, trace_values

CSV_COLUMNS = ("t", "kinetic", "elastic", "surface", "total_E", "dissipation_D",
               "ext_work_rate", "correction", "inequality_residual",
               "max_un_pos", "min_z", "max_z_rate")


@dataclass(frozen=True)
class EnergyReport:
    t: float
    kinetic: float
    elastic: float
    surface: float
    total_E: float
    dissipation_D: float
    ext_work_rate: float
    correction: float
    inequality_residual: float = float("nan")
    max_un_pos: float = 0.0
    min_z: float = float("nan")
    max_z_rate: float = float("nan")
    dissipation_contact: float = 0.0

    def row(self) -> list:
        return [getattr(self, c) for c in CSV_COLUMNS]


def surface_density(state: SystemState, trace: ContactTrace, eps: float, dim: int):
    """Nodal contact energy densities ``beta^(z) - a z + z|u|^2/2 + gamma^(u.n)``."""
    b = state.bonding
    uc = trace_values(state.u, trace, dim)
    un = np.einsum("ci,ci->c", uc, trace.normals)
    return (antiderivative_yosida(BETA, eps, b.z) - b.a * b.z
            + 0.5 * b.z * np.einsum("ci,ci->c", uc, uc)
            + antiderivative_yosida(GAMMA, eps, un))


def evaluate(state: SystemState, ops: AssembledOperators, trace: ContactTrace | None,
             mat: MaterialModel | None, eps: float, prev: SystemState | None = None,
             load=None) -> EnergyReport:
    """Energy terms at ``state``; rate terms refer to the step from ``prev``.

    ``mat`` is unused beyond documentation of the operators it produced and
    may be ``None``.
    """
    d = ops.mesh.dim
    u, v = state.u, state.v
    kinetic = 0.5 * float(v @ (ops.mass @ v))
    elastic = 0.5 * float(u @ (ops.stiff_E @ u))
    has_contact = trace is not None and state.bonding is not None and len(trace) > 0
    surface = 0.0
    max_un = 0.0
    min_z = max_rate = float("nan")
    if has_contact:
        surface = float(np.sum(trace.areas * surface_density(state, trace, eps, d)))
        un = normal_trace(u, trace, d)
        max_un = float(np.max(np.maximum(un, 0.0)))
        min_z = float(np.min(state.bonding.z))
        max_rate = float(np.max(state.bonding.z_rate))

    diss = ext = corr = diss_c = 0.0
    if prev is not None:
        dt = state.t - prev.t
        diss = float(v @ (ops.stiff_V @ v))
        if load is not None:
            ext = float(load.force(ops, state.t) @ v)
        if has_contact:
            b = state.bonding
            rate = b.z_rate
            diss_c = float(np.sum(trace.areas * (yosida(ALPHA, eps, rate) + rate) * rate))
            diss += diss_c
            up = trace_values(u, trace, d)
            du = up - trace_values(prev.u, trace, d)
            zold = prev.bonding.z
            x = ((np.maximum(b.z, 0.0) - zold) * np.einsum("ci,ci->c", up, du)
                 + 0.5 * zold * np.einsum("ci,ci->c", du, du))
            corr = -float(np.sum(trace.areas * x)) / dt
    return EnergyReport(state.t, kinetic, elastic, surface, kinetic + elastic + surface,
                        diss, ext, corr, max_un_pos=max_un, min_z=min_z,
                        max_z_rate=max_rate, dissipation_contact=diss_c)


def energy_residual(report_n: EnergyReport, report_n1: EnergyReport, dt: float) -> float:
    return (report_n1.total_E + dt * report_n1.dissipation_D - report_n.total_E
            - dt * report_n1.ext_work_rate - dt * report_n1.correction)


def check_energy(report_n: EnergyReport, report_n1: EnergyReport, dt: float,
                 tol_rel: float = 1e-8, tol_abs: float = 0.0) -> tuple[bool, float]:
    """Discrete energy inequality across one step; returns ``(passed, residual)``."""
    res = energy_residual(report_n, report_n1, dt)
    scale = max(abs(report_n.total_E), abs(report_n1.total_E), 1.0)
    return bool(res <= tol_abs + tol_rel * scale), res


def with_residual(report_n: EnergyReport, report_n1: EnergyReport, dt: float) -> EnergyReport:
    return replace(report_n1, inequality_residual=energy_residual(report_n, report_n1, dt))


def write_csv(reports, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in reports:
            w.writerow([repr(float(x)) for x in r.row()])
