"""Built-in property suites run by ``viscodelam verify``.

Each check returns a :class:`CheckResult`; a suite passes when all of its
checks do.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg

from . import energy, graphs
from .fem import assemble, coercivity_constant
from .mesh import unit_block_mesh
from .scenarios import CANONICAL_MATERIAL, canonical
from .stepper import StaggerConfig, run


@dataclass
class CheckResult:
    suite: str
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'} {self.suite}.{self.name}: {self.detail}"


def graph_suite(n_pairs: int = 100_000, seed: int = 0, eps=(1e-1, 1e-3)) -> list[CheckResult]:
    rng = np.random.default_rng(seed)
    out = []
    for e in eps:
        r, s = rng.normal(scale=10.0, size=(2, n_pairs))
        ar, as_ = graphs.resolvent_shifted(e, r), graphs.resolvent_shifted(e, s)
        worst = float(np.max(np.abs(ar - as_) - np.abs(r - s)))
        out.append(CheckResult("graphs", f"nonexpansive[eps={e:g}]", worst <= 0.0,
                               f"max |A r - A s| - |r - s| = {worst:.3g}"))
        for g in (graphs.NONPOSITIVE, graphs.NONNEGATIVE):
            err = float(np.max(np.abs(r - e * graphs.yosida(g, e, r)
                                      - graphs.beta_resolvent(g, e, r))))
            out.append(CheckResult("graphs", f"resolvent[{g.name},eps={e:g}]", err <= 1e-12,
                                   f"max error {err:.3g}"))
            h = 1e-6
            fd = (graphs.antiderivative_yosida(g, e, r + h)
                  - graphs.antiderivative_yosida(g, e, r - h)) / (2 * h)
            dev = float(np.max(np.abs(fd - graphs.yosida(g, e, r))))
            # central differences of a C^1 piecewise quadratic: error <= h / eps
            out.append(CheckResult("graphs", f"moreau_derivative[{g.name},eps={e:g}]",
                                   dev <= 2 * h / e + 1e-6 * (1 + 10 / e),
                                   f"max deviation {dev:.3g}"))
    return out


def assembly_suite(n: int = 6, n_strains: int = 200, seed: int = 0) -> list[CheckResult]:
    rng = np.random.default_rng(seed)
    mesh = unit_block_mesh(2, n, {"x0": "D", "x1": "C", "else": "N"})
    mat = CANONICAL_MATERIAL
    ops = assemble(mesh, mat)
    out = []
    for name in ("mass", "stiff_E", "stiff_V"):
        m = getattr(ops, name)
        asym = float(abs(m - m.T).max()) if m.nnz else 0.0
        out.append(CheckResult("assembly", f"symmetric[{name}]", asym <= 1e-12,
                               f"max |A - A^T| = {asym:.3g}"))
    for name in ("stiff_E", "stiff_V"):
        full = getattr(ops, name).toarray()
        free = ops.free_dofs
        lam = float(scipy.linalg.eigvalsh(full[np.ix_(free, free)])[0])
        out.append(CheckResult("assembly", f"spd_constrained[{name}]", lam > 0,
                               f"min eigenvalue {lam:.3g} ({len(free)} DOF)"))
        worst = 0.0
        for c in range(mesh.dim):
            t = np.zeros(ops.n_dofs)
            t[c::mesh.dim] = 1.0
            worst = max(worst, float(np.abs(full @ t).max()))
        out.append(CheckResult("assembly", f"translation_kernel[{name}]", worst <= 1e-10,
                               f"max |K t| = {worst:.3g}"))
    for d in (2, 3):
        kappa = coercivity_constant(mat, d, "E")
        worst = np.inf
        for _ in range(n_strains):
            a = rng.normal(size=(d, d))
            e = 0.5 * (a + a.T)
            val = float(np.sum(mat.stress(e, "E") * e) - kappa * np.sum(e * e))
            worst = min(worst, val)
        out.append(CheckResult("assembly", f"coercive[d={d}]", worst >= -1e-12,
                               f"min E e:e - kappa |e|^2 = {worst:.3g}, kappa={kappa:.3g}"))
    return out


def energy_suite(eps: float = 1e-2, dt: float = 1e-2, T: float = 1.0,
                 n: int = 8) -> list[CheckResult]:
    sc = canonical(n)
    ops, trace, init = sc.build()
    traj = run(init, StaggerConfig(dt=dt, T=T, eps=eps), ops, trace, sc.load, sc.mat)
    worst_rel = -np.inf
    ok = True
    for p, r in zip(traj.reports, traj.reports[1:]):
        passed, res = energy.check_energy(p, r, dt)
        ok &= passed
        worst_rel = max(worst_rel, res / max(abs(p.total_E), abs(r.total_E), 1.0))
    return [CheckResult("energy", "inequality[canonical]", ok,
                        f"{len(traj.reports) - 1} steps, worst residual/scale {worst_rel:.3g}")]


SUITES = {"graphs": graph_suite, "assembly": assembly_suite, "energy": energy_suite}


def run_all(names=None) -> list[CheckResult]:
    results = []
    for name in names or SUITES:
        results.extend(SUITES[name]())
    return results
