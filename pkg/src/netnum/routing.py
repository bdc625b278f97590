"""Per-link rate assignment: Euclidean projection onto a capped simplex.

Each wireline link solves, over its per-destination rates,

    maximize  sum_d w_d * r_d - (kappa/2) * sum_d (r_d - prev_d)^2
    s.t.      r >= 0,  sum_d r_d <= cap

whose solution is the projection of prev + w/kappa onto the set
{r >= 0, sum r <= cap}.  The projection is computed by the classic
sort-and-pivot rule (Held-style thresholding; see Duchi et al. 2008 or
Condat 2016 for the family): clip at zero, return early if the cap is
slack, otherwise subtract the water level theta* found from the sorted
prefix sums.  O(D log D) per link.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "project_capped_simplex",
    "project_capped_simplex_batch",
    "LinkRouteProblem",
    "route_link",
]


def project_capped_simplex(v, cap):
    """argmin ||r - v||^2  s.t.  r >= 0, sum(r) <= cap   (cap > 0).

    Ties in the descending sort cannot change theta*: prefix sums over the
    top-k entries are permutation invariant.
    """
    if cap <= 0:
        raise ValueError("cap must be positive")
    v = np.asarray(v, dtype=float)
    if not np.all(np.isfinite(v)):
        raise ValueError("projection input must be finite")
    x = np.maximum(v, 0.0)
    total = x.sum()
    if total <= cap:
        return x
    u = np.sort(x)[::-1]
    css = np.cumsum(u)
    k = np.arange(1, x.size + 1)
    cond = u - (css - cap) / k > 0
    p = int(np.nonzero(cond)[0][-1]) + 1
    theta = (css[p - 1] - cap) / p
    return np.maximum(x - theta, 0.0)


def project_capped_simplex_batch(V, caps):
    """Row-wise capped-simplex projection: V is (M, D), caps is (M,).

    Same pivot rule as the scalar version, vectorized across rows; the set
    of indices satisfying the pivot condition is a prefix, so the pivot is
    a row-wise count.
    """
    V = np.asarray(V, dtype=float)
    caps = np.asarray(caps, dtype=float)
    X = np.maximum(V, 0.0)
    totals = X.sum(axis=1)
    over = totals > caps
    if not np.any(over):
        return X
    Xo = X[over]
    co = caps[over]
    U = -np.sort(-Xo, axis=1)
    css = np.cumsum(U, axis=1)
    k = np.arange(1, Xo.shape[1] + 1)
    cond = U - (css - co[:, None]) / k > 0
    p = cond.sum(axis=1)
    theta = (css[np.arange(Xo.shape[0]), p - 1] - co) / p
    X[over] = np.maximum(Xo - theta[:, None], 0.0)
    return X


@dataclass
class LinkRouteProblem:
    """One link's rate-assignment subproblem.

    weight_diff: per-destination backpressure differentials (weight at the
                 transmitter minus weight at the receiver)
    prev_rates:  the link's rates from the previous slot
    curvature:   penalty * per-link proximal weight, > 0
    capacity:    shared cap on the sum of per-destination rates
    """

    weight_diff: np.ndarray
    prev_rates: np.ndarray
    curvature: float
    capacity: float


def route_link(prob: LinkRouteProblem):
    """Exact maximizer of the link subproblem: a single projection."""
    if prob.curvature <= 0:
        raise ValueError("curvature must be positive")
    target = np.asarray(prob.prev_rates, dtype=float) + (
        np.asarray(prob.weight_diff, dtype=float) / prob.curvature
    )
    return project_capped_simplex(target, prob.capacity)
