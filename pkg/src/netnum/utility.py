"""Concave flow utilities and the per-flow rate update.

Two utility families are supported, both strictly concave on any interval
bounded away from zero:

* ``weighted-log``:   weight * log(x)
* ``alpha-fair``:     weight * x**(1-gamma) / (1-gamma),  gamma > 0, gamma != 1

The rate update solves, for a single flow over its rate box [lo, hi],

    maximize  U(x) - a*x - (rho/2) * (x - x_prev)**2

where ``a`` bundles the flow's dual pressure (backpressure weight at the
source plus the penalty-scaled change of adjacent link rates).  The
objective is strictly concave, so the box-constrained maximizer is the
unconstrained stationary point clamped to [lo, hi].
"""

from __future__ import annotations

import math
from dataclasses import dataclass

__all__ = [
    "UtilitySpec",
    "utility_value",
    "utility_grad",
    "congestion_step_closed_form",
    "congestion_step_numeric",
]

KINDS = ("weighted-log", "alpha-fair")


@dataclass
class UtilitySpec:
    """Utility family for one flow.

    kind:     "weighted-log" or "alpha-fair"
    weight:   multiplicative weight, > 0
    fairness: exponent gamma for alpha-fair (> 0, != 1); ignored for logs
    """

    kind: str = "weighted-log"
    weight: float = 1.0
    fairness: float = 0.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown utility kind {self.kind!r}")
        if self.weight <= 0:
            raise ValueError("utility weight must be positive")
        if self.kind == "alpha-fair" and (self.fairness <= 0 or self.fairness == 1.0):
            raise ValueError("alpha-fair exponent must be > 0 and != 1")


def utility_value(spec: UtilitySpec, x: float) -> float:
    if x <= 0:
        raise ValueError(f"utility undefined at x={x} (requires x > 0)")
    if spec.kind == "weighted-log":
        return spec.weight * math.log(x)
    g = spec.fairness
    return spec.weight * x ** (1.0 - g) / (1.0 - g)


def utility_grad(spec: UtilitySpec, x: float) -> float:
    if x <= 0:
        raise ValueError(f"utility gradient undefined at x={x} (requires x > 0)")
    if spec.kind == "weighted-log":
        return spec.weight / x
    return spec.weight * x ** (-spec.fairness)


def congestion_step_closed_form(weight, a, x_prev, rho, lo, hi):
    """Exact rate update for weighted-log utility.

    Solves max_{x in [lo, hi]} weight*log(x) - a*x - (rho/2)(x - x_prev)^2.
    The stationary point is the positive root of
    rho*x^2 + (a - rho*x_prev)*x - weight = 0; clamping it to the box is
    exact because the objective is strictly concave in one dimension.
    """
    if rho <= 0:
        raise ValueError("rho must be positive")
    if weight <= 0:
        raise ValueError("weight must be positive")
    q = a - rho * x_prev
    disc = math.sqrt(q * q + 4.0 * rho * weight)
    if q <= 0:
        root = (disc - q) / (2.0 * rho)
    else:
        # rationalized form, avoids cancellation when q is large and positive
        root = 2.0 * weight / (q + disc)
    return min(max(root, lo), hi)


def congestion_step_numeric(spec: UtilitySpec, a, x_prev, rho, lo, hi):
    """Rate update for any supported utility, by bisection on the derivative.

    The derivative phi'(x) = U'(x) - a - rho*(x - x_prev) is strictly
    decreasing, so the maximizer is unique: either a box endpoint or the
    root of phi'.  Bisection runs until the bracket is below
    1e-12 * max(1, hi).
    """
    if rho <= 0:
        raise ValueError("rho must be positive")
    if not lo < hi:
        if lo == hi:
            return lo
        raise ValueError("empty rate box")

    def dphi(x):
        return utility_grad(spec, x) - a - rho * (x - x_prev)

    if dphi(lo) <= 0:
        return lo
    if dphi(hi) >= 0:
        return hi
    tol = 1e-12 * max(1.0, hi)
    a_, b_ = lo, hi
    while b_ - a_ > tol:
        mid = 0.5 * (a_ + b_)
        if dphi(mid) > 0:
            a_ = mid
        else:
            b_ = mid
    return 0.5 * (a_ + b_)
