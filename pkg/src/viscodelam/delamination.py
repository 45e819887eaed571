"""Regularized flow rule for the bonding fraction on the contact boundary.

Per contact node the implicit Euler step solves

    z_new - z_old - dt * A_eps(a - |u|^2 / 2 - beta_eps(z_new)) = 0,

whose left side is strictly increasing in ``z_new``, by bracketed bisection.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .graphs import NONNEGATIVE, NONPOSITIVE, check_eps, resolvent_shifted, yosida

ALPHA = NONPOSITIVE  # rate constraint z_t <= 0
BETA = NONNEGATIVE  # z >= 0


class BisectionError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class BondingField:
    """Nodal bonding state: ``xi1 = beta_eps(z)``, ``xi2 = alpha_eps(z_rate)``."""

    z: np.ndarray
    z_rate: np.ndarray
    xi1: np.ndarray
    xi2: np.ndarray
    a: np.ndarray

    @classmethod
    def initial(cls, z0, a, n: int | None = None, eps: float | None = None) -> "BondingField":
        z0 = np.asarray(z0, dtype=float)
        n = n if n is not None else z0.size
        z = np.broadcast_to(z0, (n,)).astype(float)
        a = np.broadcast_to(np.asarray(a, dtype=float), (n,)).astype(float)
        zero = np.zeros(n)
        # beta_eps vanishes on [0, inf), so admissible data need no eps
        if eps is None:
            xi1 = zero.copy()
        else:
            xi1 = np.asarray(yosida(BETA, eps, z), dtype=float).reshape(n)
        return cls(z, zero.copy(), xi1, zero.copy(), a)

    def __len__(self):
        return len(self.z)

    def permuted(self, perm) -> "BondingField":
        return BondingField(*(np.asarray(f)[perm] for f in
                              (self.z, self.z_rate, self.xi1, self.xi2, self.a)))


def _residual(znew, zold, drive, eps, dt):
    return znew - zold - dt * resolvent_shifted(eps, drive - yosida(BETA, eps, znew))


def z_step(field: BondingField, u_trace_sq, eps: float, dt: float,
           tol: float = 0.0, max_iter: int = 200) -> BondingField:
    """Advance the bonding field by one implicit Euler step of length ``dt``.

    Bisection stops once the bracket is narrower than ``tol`` or than two
    ulps of its initial magnitude (the default ``tol=0``).
    """
    eps = check_eps(eps)
    if not dt > 0:
        raise ValueError(f"time step must be positive, got {dt}")
    usq = np.asarray(u_trace_sq, dtype=float)
    if (usq < 0).any():
        raise ValueError("squared displacement traces must be nonnegative")
    zold = np.asarray(field.z, dtype=float)
    drive = field.a - 0.5 * usq

    # The explicit update brackets the root: R(z_old) and R(z_old + dt*rate)
    # have opposite signs since beta_eps is nondecreasing.
    trial = zold + dt * np.asarray(resolvent_shifted(eps, drive - yosida(BETA, eps, zold)))
    lo = np.minimum(zold, trial)
    hi = np.maximum(zold, trial)
    r_lo = _residual(lo, zold, drive, eps, dt)
    r_hi = _residual(hi, zold, drive, eps, dt)
    width = np.maximum(hi - lo, 1e-12)
    for _ in range(64):
        bad_lo, bad_hi = r_lo > 0, r_hi < 0
        if not (bad_lo.any() or bad_hi.any()):
            break
        lo = np.where(bad_lo, lo - width, lo)
        hi = np.where(bad_hi, hi + width, hi)
        width = 2 * width
        r_lo = _residual(lo, zold, drive, eps, dt)
        r_hi = _residual(hi, zold, drive, eps, dt)
    else:
        raise BisectionError("could not bracket the bonding update")

    # below a few ulps of the bracket magnitude the residual is rounding noise
    floor = np.maximum(tol, 2 * np.spacing(np.maximum(np.abs(lo), np.abs(hi))))
    for _ in range(max_iter):
        mid = 0.5 * (lo + hi)
        active = (hi - lo > floor) & (mid > lo) & (mid < hi)
        if not active.any():
            break
        r_mid = _residual(mid, zold, drive, eps, dt)
        up = active & (r_mid <= 0)
        down = active & (r_mid > 0)
        lo = np.where(up, mid, lo)
        r_lo = np.where(up, r_mid, r_lo)
        hi = np.where(down, mid, hi)
        r_hi = np.where(down, r_mid, r_hi)
    else:
        raise BisectionError(f"bisection did not converge in {max_iter} iterations")

    # the residual is piecewise linear, so one secant step usually lands on the root
    denom = r_hi - r_lo
    with np.errstate(invalid="ignore", divide="ignore"):
        sec = np.where(denom > 0, lo - r_lo * (hi - lo) / denom, lo)
    sec = np.clip(sec, lo, hi)
    r_sec = _residual(sec, zold, drive, eps, dt)
    znew = np.where(r_sec <= 0, sec, lo)
    rate = (znew - zold) / dt
    return replace(field, z=znew, z_rate=rate,
                   xi1=np.asarray(yosida(BETA, eps, znew), dtype=float),
                   xi2=np.asarray(yosida(ALPHA, eps, rate), dtype=float))


def flow_rule_residual(field: BondingField, u_trace_sq) -> np.ndarray:
    """``xi2 + z_t + xi1 - (a - |u|^2/2)`` per node."""
    usq = np.asarray(u_trace_sq, dtype=float)
    return field.xi2 + field.z_rate + field.xi1 - (field.a - 0.5 * usq)


def constraint_violation(field: BondingField) -> tuple[float, float]:
    """``(max (-z)^+, max (z_t)^+)``: negativity of ``z`` and healing rate."""
    if len(field.z) == 0:
        return 0.0, 0.0
    return (float(np.max(np.maximum(-field.z, 0.0))),
            float(np.max(np.maximum(field.z_rate, 0.0))))


def rate_slack_bound(z_old, field: BondingField, u_trace_sq, eps: float) -> float:
    """Upper bound for ``max (z_t)^+`` implied by ``A_eps(r) <= eps/(eps+1) r^+``."""
    eps = check_eps(eps)
    usq = np.asarray(u_trace_sq, dtype=float)
    zmin = np.minimum(np.asarray(z_old, dtype=float), field.z)
    drive = field.a - 0.5 * usq - yosida(BETA, eps, zmin)
    if len(field.z) == 0:
        return 0.0
    return eps / (eps + 1.0) * float(np.max(np.maximum(drive, 0.0)))
