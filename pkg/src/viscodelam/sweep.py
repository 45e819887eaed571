"""Continuation in the regularization parameter on a fixed mesh and step."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import energy
from .delamination import constraint_violation
from .momentum import apriori_norms
from .stepper import StaggerConfig, Trajectory, run

SWEEP_COLUMNS = ("eps", "max_un_pos", "max_neg_z", "max_pos_rate", "sup_v_H", "l2_u_V",
                 "l2_v_V", "sup_z", "l2_zrate", "worst_energy_residual",
                 "worst_relative_residual", "cauchy_to_next")


@dataclass
class SweepRow:
    eps: float
    max_un_pos: float
    max_neg_z: float
    max_pos_rate: float
    norms: dict
    worst_energy_residual: float
    worst_relative_residual: float
    cauchy_to_next: float = float("nan")

    def values(self) -> list:
        n = self.norms
        return [self.eps, self.max_un_pos, self.max_neg_z, self.max_pos_rate, n["sup_v_H"],
                n["l2_u_V"], n["l2_v_V"], n["sup_z"], n["l2_zrate"],
                self.worst_energy_residual, self.worst_relative_residual, self.cauchy_to_next]


@dataclass
class SweepReport:
    rows: list
    trajectories: dict = field(default_factory=dict, repr=False)
    error: str | None = None

    def column(self, name: str) -> np.ndarray:
        idx = SWEEP_COLUMNS.index(name)
        return np.array([r.values()[idx] for r in self.rows])

    def norm_ratio(self, name: str) -> float:
        col = self.column(name)
        return float(col.max() / col.min()) if col.min() > 0 else math.inf

    def write(self, outdir) -> list[Path]:
        outdir = Path(outdir)
        outdir.mkdir(parents=True, exist_ok=True)
        paths = [outdir / "sweep.csv"]
        with open(paths[0], "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(SWEEP_COLUMNS)
            for r in self.rows:
                w.writerow([repr(float(x)) for x in r.values()])
        for eps, traj in self.trajectories.items():
            sub = outdir / f"eps_{eps:.0e}"
            sub.mkdir(exist_ok=True)
            energy.write_csv(traj.reports, sub / "energy.csv")
            paths.append(sub / "energy.csv")
        return paths


def summarize(eps: float, traj: Trajectory, ops, trace) -> SweepRow:
    reports = traj.reports
    neg_z = rate = 0.0
    for s in traj.states[1:]:
        if s.bonding is not None:
            nz, pr = constraint_violation(s.bonding)
            neg_z, rate = max(neg_z, nz), max(rate, pr)
    res = [r.inequality_residual for r in reports[1:]]
    rel = [r.inequality_residual / max(abs(p.total_E), abs(r.total_E), 1.0)
           for p, r in zip(reports, reports[1:])]
    return SweepRow(eps, max(r.max_un_pos for r in reports), neg_z, rate,
                    apriori_norms(traj.states, ops, trace).as_dict(),
                    max(res, default=0.0), max(rel, default=0.0))


def cauchy_distance(t1: Trajectory, t2: Trajectory, ops) -> float:
    """``|u1 - u2|`` in the discrete ``L2(0, T; H1)`` norm."""
    total = 0.0
    for (p, a), b in zip(zip(t1.states, t1.states[1:]), t2.states[1:]):
        total += (a.t - p.t) * ops.h1_sq(a.u - b.u)
    return math.sqrt(total)


def run_sweep(scenario, eps_grid, cfg: StaggerConfig, keep_states: bool = True) -> SweepReport:
    """One run per ``eps`` (strictly decreasing, at least three values)."""
    grid = [float(e) for e in eps_grid]
    if len(grid) < 3:
        raise ValueError("the eps grid needs at least three values")
    if any(b >= a for a, b in zip(grid, grid[1:])):
        raise ValueError("the eps grid must be strictly decreasing")
    ops, trace, init = scenario.build()
    report = SweepReport([])
    prev = None
    for eps in grid:
        c = replace(cfg, eps=eps)
        try:
            traj = run(init, c, ops, trace, scenario.load, scenario.mat)
        except Exception as exc:  # partial report is still useful
            report.error = f"eps={eps:g}: {exc}"
            break
        row = summarize(eps, traj, ops, trace)
        if prev is not None:
            report.rows[-1].cauchy_to_next = cauchy_distance(prev, traj, ops)
        report.rows.append(row)
        report.trajectories[eps] = traj
        prev = traj
    if not keep_states:
        for traj in report.trajectories.values():
            traj.states = traj.states[-1:]
    return report
