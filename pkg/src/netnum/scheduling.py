"""Interference-coupled scheduling: a quadratic program over a schedule hull.

The wireless slot problem assigns per-(link, destination) rates

    maximize  sum_{l,d} w_{l,d} r_{l,d} - (kappa_l/2) (r_{l,d} - prev_{l,d})^2
    s.t.      y_l = sum_d r_{l,d},  y in conv(atoms),  r >= 0

where the atoms are the feasible schedules (see capacity.py).  The hull is
touched *only* through a max-weight linear-optimization oracle:

* A vertex of the feasible polytope is a schedule atom plus a choice of
  one destination per link carrying that link's full rate.  Maximizing a
  linear function g over the vertices therefore picks, per link, the best
  destination d_l = argmax_d g_{l,d}, and then asks the oracle for the
  best atom under the per-link scores g_{l,d_l}.  Links whose best score
  is nonpositive end up inactive (zero contribution) in any optimal atom
  of a node-exclusive set, since dropping a link from a schedule yields
  another schedule.

* Conditional gradient (Frank-Wolfe) with away steps and exact line
  search then solves the quadratic program to a prescribed duality gap;
  away steps restore linear convergence on this strongly concave
  objective (Lacoste-Julien & Jaggi 2015).  The running convex
  combination of visited atoms is the time-sharing certificate and is
  reduced to at most L+1 atoms at the end (Caratheodory).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .routing import project_capped_simplex

__all__ = [
    "SchedulingProblem",
    "ScheduleSolution",
    "SchedulingError",
    "solve_scheduling_qp",
    "caratheodory_reduce",
    "split_rates",
]


class SchedulingError(RuntimeError):
    pass


@dataclass
class SchedulingProblem:
    """Inputs of one scheduling slot.

    weights:   (D, L) per-(destination, link) linear coefficients
    anchors:   (D, L) previous-slot rates (proximal anchor)
    curvature: (L,) strictly positive per-link quadratic coefficients
    oracle:    max-weight oracle; the only interface to the schedule set
    """

    weights: np.ndarray
    anchors: np.ndarray
    curvature: np.ndarray
    oracle: object


@dataclass
class ScheduleSolution:
    rates: np.ndarray  # (D, L)
    totals: np.ndarray  # (L,) per-link sums, a point of the hull
    atoms: np.ndarray  # (K, L), K <= L+1
    atom_weights: np.ndarray  # (K,) simplex weights reconstructing totals
    gap: float  # Frank-Wolfe duality gap at termination
    oracle_calls: int

    def to_json_dict(self) -> dict:
        return {
            "atoms": self.atoms.tolist(),
            "tau": self.atom_weights.tolist(),
            "y": self.totals.tolist(),
            "r": self.rates.tolist(),
        }


def _objective(prob, r):
    diff = r - prob.anchors
    return float(np.sum(prob.weights * r) - 0.5 * np.sum(prob.curvature * diff * diff))


def _gradient(prob, r):
    return prob.weights - prob.curvature * (r - prob.anchors)


def _best_vertex(prob, grad):
    """Exact linear maximizer of <grad, .> over the polytope vertices."""
    dests = np.argmax(grad, axis=0)
    L = grad.shape[1]
    scores = grad[dests, np.arange(L)]
    atom = prob.oracle.maxweight(scores)
    vertex = np.zeros_like(grad)
    vertex[dests, np.arange(L)] = atom
    return atom, dests, vertex


def solve_scheduling_qp(prob: SchedulingProblem, tol=1e-8, max_iters=100_000):
    """Solve the slot QP to Frank-Wolfe duality gap <= tol.

    Away-step variant with exact line search (the objective is quadratic).
    Starts from the zero schedule; every visit to the schedule set goes
    through prob.oracle.maxweight.  Raises SchedulingError if the gap
    target is not reached within max_iters or the oracle misbehaves.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    weights = np.asarray(prob.weights, dtype=float)
    anchors = np.asarray(prob.anchors, dtype=float)
    curvature = np.asarray(prob.curvature, dtype=float)
    if np.any(curvature <= 0):
        raise ValueError("curvature must be strictly positive")
    prob = SchedulingProblem(weights, anchors, curvature, prob.oracle)
    D, L = weights.shape
    calls_before = getattr(prob.oracle, "calls", 0)

    def resync(active):
        # rebuild the iterate from its convex combination, killing the
        # incremental-update drift so the decomposition certificate is exact
        wsum = sum(e[0] for e in active.values())
        for e in active.values():
            e[0] /= wsum
        r = np.zeros((D, L))
        for e in active.values():
            r += e[0] * e[1]
        return r

    # active set: vertex key -> [weight, vertex (D,L), atom (L,)]
    zero_v = np.zeros((D, L))
    zero_key = (zero_v.tobytes(), b"")
    active = {zero_key: [1.0, zero_v, np.zeros(L)]}
    r = zero_v.copy()

    gap = np.inf
    iters = 0
    converged = False
    while not converged and iters < max_iters:
        grad = _gradient(prob, r)
        atom, dests, vertex = _best_vertex(prob, grad)
        if np.any(atom < 0):
            raise SchedulingError("oracle returned a negative rate vector")
        gap = float(np.sum(grad * (vertex - r)))
        if gap <= tol:
            # accept only if the gap holds at the drift-free iterate
            r = resync(active)
            grad = _gradient(prob, r)
            atom, dests, vertex = _best_vertex(prob, grad)
            gap = float(np.sum(grad * (vertex - r)))
            if gap <= tol:
                converged = True
                break
        iters += 1

        away_key = max(active, key=lambda k: -float(np.sum(grad * active[k][1])))
        away_w, away_v, _ = active[away_key]
        fw_dir = vertex - r
        away_dir = r - away_v
        fw_gain = gap
        away_gain = float(np.sum(grad * away_dir))

        if fw_gain >= away_gain:
            d = fw_dir
            gamma_max = 1.0
            step_is_fw = True
        else:
            d = away_dir
            gamma_max = away_w / (1.0 - away_w) if away_w < 1.0 else np.inf
            step_is_fw = False

        denom = float(np.sum(prob.curvature * d * d))
        gain = float(np.sum(grad * d))
        gamma = gamma_max if denom <= 0 else min(gamma_max, gain / denom)
        if gamma <= 0:
            continue  # numerically stationary along this direction; re-check gap

        if step_is_fw:
            key = (atom.tobytes(), dests.tobytes())
            for entry in active.values():
                entry[0] *= 1.0 - gamma
            if key in active:
                active[key][0] += gamma
            else:
                active[key] = [gamma, vertex, atom]
            if gamma == 1.0:
                active = {key: active[key]}
                active[key][0] = 1.0
        else:
            for entry in active.values():
                entry[0] *= 1.0 + gamma
            active[away_key][0] -= gamma
        active = {k: e for k, e in active.items() if e[0] > 1e-14}
        r = r + gamma * d

    if not converged:
        raise SchedulingError(
            f"duality gap {gap:.3e} > tol {tol:.3e} after {max_iters} iterations"
        )

    by_atom = {}
    for e in active.values():
        k = e[2].tobytes()
        if k in by_atom:
            by_atom[k][0] += e[0]
        else:
            by_atom[k] = [e[0], e[2]]
    atoms = np.array([e[1] for e in by_atom.values()])
    taus = np.array([e[0] for e in by_atom.values()])
    totals = r.sum(axis=0)
    atoms, taus = caratheodory_reduce(atoms, taus, totals)

    return ScheduleSolution(
        rates=r,
        totals=totals,
        atoms=atoms,
        atom_weights=taus,
        gap=gap,
        oracle_calls=getattr(prob.oracle, "calls", 0) - calls_before,
    )


def caratheodory_reduce(atoms, weights, target=None):
    """Thin a convex combination to at most L+1 atoms (L = vector length).

    Iterated null-space elimination in the lifted space (append a 1 to
    each atom): any affine dependence c with sum(c) = 0 and
    sum_i c_i atom_i = 0 lets weights move along -c until one hits zero,
    preserving both the reconstruction and the simplex constraints.
    """
    atoms = np.asarray(atoms, dtype=float)
    weights = np.asarray(weights, dtype=float).copy()
    if atoms.ndim != 2 or weights.shape != (atoms.shape[0],):
        raise ValueError("need atoms (K, L) and weights (K,)")
    if np.any(weights < -1e-12) or abs(weights.sum() - 1.0) > 1e-9:
        raise ValueError("weights must lie on the simplex")
    if target is not None:
        err = np.linalg.norm(weights @ atoms - np.asarray(target, dtype=float))
        if err > 1e-9:
            raise ValueError(f"input reconstruction violated by {err:.3e}")
    L = atoms.shape[1]

    active = np.nonzero(weights > 0)[0]
    while active.size > L + 1:
        lifted = np.vstack([atoms[active].T, np.ones(active.size)])
        _, _, vt = np.linalg.svd(lifted)
        c = vt[-1]
        if c.max() <= 0:
            c = -c
        pos = c > 1e-14
        steps = weights[active[pos]] / c[pos]
        j = int(np.argmin(steps))
        theta = steps[j]
        weights[active] -= theta * c
        weights[active[pos][j]] = 0.0
        weights = np.maximum(weights, 0.0)
        active = np.nonzero(weights > 0)[0]
    out_w = weights[active]
    return atoms[active], out_w / out_w.sum()


def split_rates(total, targets):
    """Assign a link's scheduled total across destinations.

    Projects the per-destination target vector onto {r >= 0, sum <= total};
    a zero total forces an all-zero assignment.
    """
    if total <= 0:
        return np.zeros_like(np.asarray(targets, dtype=float))
    return project_capped_simplex(targets, total)
