"""Physical per-(node, destination) queue dynamics in fluid form.

Queues hold real-valued backlog; a slot is a two-phase update per
destination d:

1. service: node n offers its outgoing links their allocated rates
   r_l^d, but can only ship what it holds.  The shipped amounts are
   rationed proportionally across the node's outgoing links,
   shipped_l = r_l^d * min(1, Q / sum of outgoing rates), so shipped <= r
   always and the node drains to max(0, Q - sum r).
2. arrivals: downstream queues receive the shipped fluid of the same
   slot, and source queues additionally receive their flow's injection.

Fluid reaching its destination vanishes; destination rows do not exist.
The proportional rationing rule is one of several policies consistent
with shipped <= allocated; it is isolated here so alternatives can be
swapped in.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "QueueState",
    "queue_step",
    "queue_step_detailed",
    "simulate_queues",
    "queue_bound_estimate",
]


class QueueState:
    """Backlog array of shape (D, N); the column of each destination's own
    node is identically zero and excluded from totals."""

    def __init__(self, inst, q=None):
        self.inst = inst
        D, N = inst.n_dests, inst.graph.n_nodes
        if q is None:
            self.q = np.zeros((D, N))
        else:
            self.q = np.asarray(q, dtype=float).copy()
            if self.q.shape != (D, N):
                raise ValueError(f"queue array must have shape ({D},{N})")
        self._own = [(di, d) for di, d in enumerate(inst.incidence.dests)]
        for di, d in self._own:
            self.q[di, d] = 0.0

    def total(self) -> float:
        return float(self.q.sum())

    def copy(self):
        return QueueState(self.inst, self.q)


def _adjacency(inst):
    """(out_mask (N,L), in_mask (N,L), tx index per link), built per call."""
    g = inst.graph
    N, L = g.n_nodes, g.n_links
    tx = np.array([a for a, _ in g.links], dtype=int)
    rx = np.array([b for _, b in g.links], dtype=int)
    out_mask = np.zeros((N, L))
    in_mask = np.zeros((N, L))
    out_mask[tx, np.arange(L)] = 1.0
    in_mask[rx, np.arange(L)] = 1.0
    return out_mask, in_mask, tx


def queue_step_detailed(inst, queues: QueueState, x, r):
    """One fluid slot; returns (new QueueState, shipped (D, L) array).

    Negative inputs are clipped to zero (and counted on the returned state)
    as a guard; dual-driven rates are nonnegative by construction.
    """
    x = np.asarray(x, dtype=float)
    r = np.asarray(r, dtype=float).reshape(inst.rate_shape())
    negatives = int(np.sum(r < 0)) + int(np.sum(x < 0))
    if negatives:
        x = np.maximum(x, 0.0)
        r = np.maximum(r, 0.0)
    out_mask, in_mask, tx = _adjacency(inst)
    q = queues.q

    offered = r @ out_mask.T  # (D, N) total outgoing rate per node
    frac = np.zeros_like(offered)
    np.divide(q, offered, out=frac, where=offered > 0)
    np.minimum(frac, 1.0, out=frac)
    shipped = r * frac[:, tx]  # (D, L), <= r componentwise
    new_q = np.maximum(q - offered, 0.0) + shipped @ in_mask.T
    for fi, f in enumerate(inst.flows):
        di = inst.incidence.dest_index[f.dst]
        new_q[di, f.src] += x[fi]

    state = QueueState(inst, new_q)  # re-zeros destination columns: delivery
    state.clipped_inputs = negatives
    return state, shipped


def queue_step(inst, queues: QueueState, x, r) -> QueueState:
    return queue_step_detailed(inst, queues, x, r)[0]


def simulate_queues(inst, xs, rs, csv_path=None, wide=False):
    """Replay a rate trajectory from empty queues.

    xs: (T, F); rs: (T, D, L) or (T, D*L).  Returns (totals (T,),
    per-queue running max (D, N)).  With csv_path set, writes one row per
    slot (slot, total, max) and, behind the wide flag, one extra column
    per (node, destination) queue.
    """
    xs = np.asarray(xs, dtype=float)
    if len(xs) == 0:
        raise ValueError("trajectory is empty")
    state = QueueState(inst)
    totals = np.zeros(len(xs))
    peak = np.zeros_like(state.q)
    rows = inst.incidence.rows
    lines = None
    if csv_path is not None:
        header = ["slot", "total", "max"]
        if wide:
            header += [f"q_n{n}_d{d}" for n, d in rows]
        lines = [",".join(header)]
    for t in range(len(xs)):
        state = queue_step(inst, state, xs[t], np.asarray(rs[t]))
        totals[t] = state.total()
        np.maximum(peak, state.q, out=peak)
        if lines is not None:
            cells = [str(t), f"{totals[t]:.17g}", f"{state.q.max():.17g}"]
            if wide:
                cells += [
                    f"{state.q[inst.incidence.dest_index[d], n]:.17g}"
                    for n, d in rows
                ]
            lines.append(",".join(cells))
    if lines is not None:
        with open(csv_path, "w") as fh:
            fh.write("\n".join(lines) + "\n")
    return totals, peak


def queue_bound_estimate(max_abs_dual, rho, tau, inst) -> float:
    """Per-queue backlog bound implied by a bounded dual trajectory.

    max_abs_dual: the largest |virtual queue| seen along the run (a scalar
    or anything np.max reduces).  The bound is 2M/(rho*tau) + B with B the
    largest total outgoing capacity over nodes.
    """
    m = float(np.max(np.abs(np.asarray(max_abs_dual, dtype=float))))
    caps = inst.capacities
    g = inst.graph
    b = max(sum(caps[l] for l in g.out_links[n]) for n in range(g.n_nodes))
    return 2.0 * m / (rho * tau) + b
