"""Maximal monotone constraint graphs and their Yosida regularizations.

Every constraint in the model is the subdifferential of the indicator of a
closed interval.  For such a graph ``b = dI_K`` with ``K = [lo, hi]`` and a
regularization parameter ``eps`` we have the closed forms

* resolvent (projection)   ``R_eps(r) = clip(r, lo, hi)``
* Yosida approximation     ``b_eps(r) = (r - R_eps(r)) / eps``
* Moreau envelope          ``b_eps_hat(r) = dist(r, K)**2 / (2 eps)``

All functions accept scalars or numpy arrays and are pure.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "IntervalIndicator",
    "NONPOSITIVE",
    "NONNEGATIVE",
    "check_eps",
    "yosida",
    "resolvent_shifted",
    "beta_resolvent",
    "antiderivative_yosida",
]


@dataclass(frozen=True)
class IntervalIndicator:
    """Subdifferential of the indicator of ``[lower, upper]``.

    The two named instances below are the only graphs exercised by the
    solver; other intervals are accepted for experimentation.
    """

    lower: float = -np.inf
    upper: float = np.inf
    name: str = ""

    def __post_init__(self):
        if not self.lower <= self.upper:
            raise ValueError(f"empty interval [{self.lower}, {self.upper}]")

    def contains(self, r):
        r = np.asarray(r, dtype=float)
        return (r >= self.lower) & (r <= self.upper)

    def project(self, r):
        return np.clip(r, self.lower, self.upper)


#: ``dI_(-inf, 0]``: used for the rate constraint and for non-penetration.
NONPOSITIVE = IntervalIndicator(-np.inf, 0.0, "IndicatorNonpositive")
#: ``dI_[0, +inf)``: keeps the bonding fraction nonnegative.
NONNEGATIVE = IntervalIndicator(0.0, np.inf, "IndicatorNonnegative")


def check_eps(eps: float) -> float:
    """Return ``eps`` as a float, raising if it is outside ``(0, 1)``."""
    eps = float(eps)
    if not 0.0 < eps < 1.0:
        raise ValueError(f"regularization parameter must lie in (0, 1), got {eps!r}")
    return eps


def _out(x):
    return float(x) if np.ndim(x) == 0 else x


def yosida(graph: IntervalIndicator, eps: float, r):
    """Yosida approximation ``(r - R_eps(r)) / eps``.

    For ``NONPOSITIVE`` this is ``max(r, 0) / eps``, for ``NONNEGATIVE`` it is
    ``min(r, 0) / eps``.  Nondecreasing and ``1/eps``-Lipschitz.
    """
    eps = check_eps(eps)
    r = np.asarray(r, dtype=float)
    return _out((r - graph.project(r)) / eps)


def beta_resolvent(graph: IntervalIndicator, eps: float, r):
    """Resolvent ``(Id + eps*graph)^{-1}``; the projection onto the interval."""
    check_eps(eps)
    return _out(graph.project(np.asarray(r, dtype=float)))


def resolvent_shifted(eps: float, r):
    """``A_eps = (Id + alpha_eps)^{-1}`` for ``alpha = dI_(-inf, 0]``.

    ``A_eps(r) = -(r)^- + eps/(eps+1) (r)^+`` : identity on the nonpositive
    half-line, contraction by ``eps/(eps+1)`` on the positive one.
    """
    eps = check_eps(eps)
    r = np.asarray(r, dtype=float)
    return _out(np.where(r > 0.0, (eps / (eps + 1.0)) * r, r))


def antiderivative_yosida(graph: IntervalIndicator, eps: float, r):
    """Moreau envelope of the indicator, normalized to vanish on the interval.

    Its derivative is :func:`yosida`; it is convex and nonnegative.
    """
    eps = check_eps(eps)
    r = np.asarray(r, dtype=float)
    d = r - graph.project(r)
    return _out(d * d / (2.0 * eps))
