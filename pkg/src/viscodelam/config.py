"""Run configuration: JSON ingestion, validation and scenario construction.

Polynomial initial fields are written as strings over ``x``, ``y``, ``z``
using ``+ - *``, ``**`` (or ``^``) with nonnegative integer exponents and
numeric constants, e.g. ``"-0.01*x*y + 2e-3*y^2"``.
"""
from __future__ import annotations

import ast
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .fem import MaterialError, MaterialModel
from .graphs import check_eps
from .mesh import Mesh, MeshError, build_contact_trace, read_mesh, unit_block_mesh, validate
from .momentum import LoadSpec, SolverOptions, linear_ramp, normal_trace
from .scenarios import Scenario
from .stepper import StaggerConfig


class ConfigError(ValueError):
    """All problems found in a configuration file."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


_VARS = ("x", "y", "z")


class Polynomial:
    """Polynomial in the coordinates, parsed without ``eval``."""

    def __init__(self, text):
        self.text = str(text)
        try:
            tree = ast.parse(self.text.replace("^", "**"), mode="eval")
        except SyntaxError as exc:
            raise ValueError(f"cannot parse polynomial {self.text!r}: {exc.msg}") from None
        self._check(tree.body)
        self._tree = tree.body

    def _check(self, node):
        if isinstance(node, ast.BinOp):
            if isinstance(node.op, ast.Pow):
                exp = node.right
                if not (isinstance(exp, ast.Constant) and isinstance(exp.value, int)
                        and not isinstance(exp.value, bool) and exp.value >= 0):
                    raise ValueError(f"{self.text!r}: exponents must be nonnegative integers")
                self._check(node.left)
                return
            if not isinstance(node.op, (ast.Add, ast.Sub, ast.Mult)):
                raise ValueError(f"{self.text!r}: only + - * and powers are allowed")
            self._check(node.left)
            self._check(node.right)
        elif isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
            self._check(node.operand)
        elif isinstance(node, ast.Constant):
            if isinstance(node.value, bool) or not isinstance(node.value, (int, float)):
                raise ValueError(f"{self.text!r}: constants must be numbers")
        elif isinstance(node, ast.Name):
            if node.id not in _VARS:
                raise ValueError(f"{self.text!r}: unknown variable {node.id!r}")
        else:
            raise ValueError(f"{self.text!r}: unsupported expression")

    def __call__(self, points: np.ndarray) -> np.ndarray:
        env = {v: points[:, i] for i, v in enumerate(_VARS[: points.shape[1]])}
        for v in _VARS[points.shape[1]:]:
            env[v] = np.zeros(len(points))
        return np.broadcast_to(self._eval(self._tree, env), (len(points),)).astype(float)

    def _eval(self, node, env):
        if isinstance(node, ast.BinOp):
            left, right = self._eval(node.left, env), self._eval(node.right, env)
            if isinstance(node.op, ast.Add):
                return left + right
            if isinstance(node.op, ast.Sub):
                return left - right
            if isinstance(node.op, ast.Mult):
                return left * right
            return left ** right
        if isinstance(node, ast.UnaryOp):
            val = self._eval(node.operand, env)
            return -val if isinstance(node.op, ast.USub) else val
        if isinstance(node, ast.Constant):
            return float(node.value)
        return env[node.id]


def nodal_field(exprs, mesh: Mesh) -> np.ndarray:
    """Interleaved nodal vector from one polynomial per component."""
    polys = [Polynomial(e) for e in exprs]
    if len(polys) != mesh.dim:
        raise ValueError(f"expected {mesh.dim} components, got {len(polys)}")
    return np.stack([p(mesh.nodes) for p in polys], axis=1).ravel()


@dataclass
class RunConfig:
    mesh: Mesh
    mesh_source: str
    material: MaterialModel
    load: LoadSpec
    a: object
    u0: list
    u1: list
    z0: object
    eps: float
    dt: float
    T: float
    stagger: dict = field(default_factory=dict)
    solver: SolverOptions = field(default_factory=SolverOptions)
    output: str = "output"
    seed: int = 0
    snapshot_every: int = 10
    raw: dict = field(default_factory=dict, repr=False)

    def stagger_config(self, eps: float | None = None, dt: float | None = None) -> StaggerConfig:
        return StaggerConfig(dt=self.dt if dt is None else dt, T=self.T,
                             eps=self.eps if eps is None else eps,
                             stagger_tol=self.stagger.get("tol", 1e-12),
                             stagger_max=self.stagger.get("max", 50),
                             relax=self.stagger.get("relax", 1.0), solver=self.solver)

    def scenario(self) -> Scenario:
        return Scenario(self.mesh, self.material, self.load, a=self.a, z0=self.z0,
                        u0=nodal_field(self.u0, self.mesh), v0=self._velocity(),
                        name=self.mesh_source)

    def _velocity(self):
        v = nodal_field(self.u1, self.mesh)
        # u1 only needs to be in L2; drop its values on clamped nodes
        d = self.mesh.dim
        for node in self.mesh.tagged_nodes("D"):
            v[d * node:d * node + d] = 0.0
        return v


def _scalar_or_file(spec, base: Path, n: int, what: str, errors: list):
    if isinstance(spec, (int, float)) and not isinstance(spec, bool):
        return float(spec)
    if isinstance(spec, dict) and "file" in spec:
        path = base / spec["file"]
        try:
            vals = np.loadtxt(path, dtype=float, ndmin=1)
        except OSError:
            errors.append(f"{what}: cannot read file {path}")
            return None
        except ValueError as exc:
            errors.append(f"{what}: malformed file {path}: {exc}")
            return None
        if vals.shape != (n,):
            errors.append(f"{what}: file {path} has {vals.size} values, expected {n} "
                          "(one per contact node, ascending node order)")
            return None
        return vals
    errors.append(f"{what}: expected a number or {{\"file\": path}}")
    return None


def parse_config(data: dict, base: Path | str = ".") -> RunConfig:
    """Validate a decoded configuration; raises :class:`ConfigError` with every issue."""
    base = Path(base)
    errors: list[str] = []
    if not isinstance(data, dict):
        raise ConfigError(["configuration must be a JSON object"])

    mesh, source = None, "?"
    mspec = data.get("mesh", {"block": {}})
    try:
        if "file" in mspec:
            path = base / mspec["file"]
            source = str(path)
            mesh = read_mesh(path)
        else:
            blk = mspec.get("block", {})
            source = f"block(dim={blk.get('dim', 2)}, n={blk.get('n', 8)})"
            mesh = unit_block_mesh(int(blk.get("dim", 2)), int(blk.get("n", 8)), blk.get("tags"))
    except FileNotFoundError:
        raise ConfigError([f"mesh file not found: {base / mspec['file']}"]) from None
    except (MeshError, OSError, TypeError, ValueError) as exc:
        errors.append(f"mesh: {exc}")
    if mesh is not None:
        rep = validate(mesh)
        if not rep.ok:
            errors.append(f"assumption (e): {rep.summary()}")
            mesh = None

    mat = None
    m = data.get("material", {})
    try:
        mat = MaterialModel(float(m["lambda_E"]), float(m["mu_E"]),
                            float(m["lambda_V"]), float(m["mu_V"]))
        if mesh is not None:
            mat.check(mesh.dim)
    except KeyError as exc:
        errors.append(f"material: missing key {exc}")
    except (MaterialError, TypeError, ValueError) as exc:
        errors.append(f"assumption (a): {exc}")
        mat = None

    load = None
    lspec = data.get("load", {})
    g = lspec.get("g", [0.0] * (mesh.dim if mesh is not None else 2))
    ramp = lspec.get("ramp", "constant")
    try:
        g = tuple(float(c) for c in g)
        if mesh is not None and len(g) != mesh.dim:
            raise ValueError(f"g has {len(g)} components, mesh is {mesh.dim}-D")
        if ramp == "constant":
            load = LoadSpec(g)
        elif isinstance(ramp, dict) and "linear" in ramp and float(ramp["linear"]) > 0:
            load = LoadSpec(g, linear_ramp(float(ramp["linear"])))
        else:
            raise ValueError("ramp must be \"constant\" or {\"linear\": t_ramp > 0}")
    except (TypeError, ValueError) as exc:
        errors.append(f"assumption (d): load: {exc}")

    nums = {}
    for key, default in (("eps", None), ("dt", None), ("T", None)):
        val = data.get(key, default)
        try:
            nums[key] = float(val)
        except (TypeError, ValueError):
            errors.append(f"{key}: missing or not a number")
    if "eps" in nums:
        try:
            check_eps(nums["eps"])
        except ValueError as exc:
            errors.append(f"eps: {exc}")
    if "dt" in nums and not nums["dt"] > 0:
        errors.append("dt must be positive")
    if "dt" in nums and "T" in nums and not nums["T"] >= nums["dt"]:
        errors.append("T must be at least one time step")

    trace = build_contact_trace(mesh) if mesh is not None else None
    nc = len(trace) if trace is not None else 0
    a = _scalar_or_file(data.get("a", 1.0), base, nc, "a", errors)
    if a is not None and np.any(np.asarray(a) < 0):
        errors.append("a: adhesion threshold must be nonnegative")

    init = data.get("initial", {})
    dim = mesh.dim if mesh is not None else 2
    u0 = init.get("u0", ["0"] * dim)
    u1 = init.get("u1", ["0"] * dim)
    z0 = _scalar_or_file(init.get("z0", 1.0), base, nc, "z0", errors)
    if z0 is not None and (np.any(np.asarray(z0) < 0) or np.any(np.asarray(z0) > 1)):
        errors.append("assumption (c): z0 out of [0,1]")
    if mesh is not None:
        for name, exprs in (("u0", u0), ("u1", u1)):
            try:
                vec = nodal_field(exprs, mesh)
            except (TypeError, ValueError) as exc:
                errors.append(f"initial.{name}: {exc}")
                continue
            if name == "u0":
                dn = mesh.tagged_nodes("D")
                if np.any(vec.reshape(-1, dim)[dn] != 0):
                    errors.append("initial.u0 must vanish on the Dirichlet boundary")
                un = normal_trace(vec, trace, dim)
                if np.any(un > 1e-12):
                    errors.append(f"assumption (c): u0.n = {un.max():.3g} > 0 on the contact "
                                  "boundary; gamma^(u0.n) is not finite (admissibility)")

    st = data.get("stagger", {})
    if not isinstance(st, dict) or any(k not in ("tol", "max", "relax") for k in st):
        errors.append("stagger: allowed keys are tol, max, relax")
        st = {}
    sv = data.get("solver", {})
    solver = SolverOptions()
    try:
        solver = SolverOptions(float(sv.get("rtol", 1e-10)), float(sv.get("atol", 1e-12)),
                               int(sv.get("max_iter", 200)))
    except (TypeError, ValueError):
        errors.append("solver: rtol, atol must be numbers and max_iter an integer")

    if errors:
        raise ConfigError(errors)
    cfg = RunConfig(mesh, source, mat, load, a, list(u0), list(u1), z0, nums["eps"],
                    nums["dt"], nums["T"], dict(st), solver,
                    str(base / data.get("output", "output")), int(data.get("seed", 0)),
                    int(data.get("snapshot_every", 10)), data)
    try:
        cfg.stagger_config()
    except ValueError as exc:
        raise ConfigError([f"stagger: {exc}"]) from None
    return cfg


def load_config(path) -> RunConfig:
    """Read and validate a JSON configuration file."""
    path = Path(path)
    try:
        text = path.read_text()
    except FileNotFoundError:
        raise ConfigError([f"config file not found: {path}"]) from None
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError([f"{path}: parse error at line {exc.lineno}, column {exc.colno}: "
                           f"{exc.msg}"]) from None
    return parse_config(data, path.parent)
