"""Comparison baselines: queue-length-driven control and a Jacobi proximal
splitting method.

* Queue-driven control (the classical dual-decomposition family): the
  components couple only through physical queue lengths.  Congestion
  control maximizes K*U_f(x) - Q_src * x over the rate box (K trades the
  utility gap against steady-state backlog); routing gives each link's
  whole capacity to the destination with the largest positive backpressure
  (the max-weight schedule under interference); queues then evolve by the
  fluid dynamics.

* Proximal Jacobi splitting (wireline only): both primal blocks read the
  previous slot's values — the flow update anchors on the source
  conservation residual, the link update reuses the capped-simplex
  routing with the raw (unextrapolated) duals — and the dual step has
  unit relaxation: dual' = dual - rho*(B x + A r).

Both emit the same per-slot metrics rows as the main solver so runs are
directly comparable.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .admm import (
    AdmmParams,
    DivergenceError,
    IterationMetrics,
    Reference,
    RunResult,
    WirelineRegion,
    kkt_residual,
    resolve_beta,
    total_utility,
)
from .queuesim import QueueState, queue_step
from .utility import congestion_step_closed_form, congestion_step_numeric

__all__ = [
    "QcaState",
    "qca_slot",
    "run_qca",
    "ProximalState",
    "proximal_slot",
    "run_proximal",
]


@dataclass
class QcaState:
    t: int
    x: np.ndarray
    r: np.ndarray  # (D, L)
    queues: QueueState


def qca_initial_state(inst) -> QcaState:
    D, L = inst.rate_shape()
    return QcaState(0, np.zeros(inst.n_flows), np.zeros((D, L)), QueueState(inst))


def _qca_congestion(inst, queues, K):
    """x_f = argmax K*U_f(x) - Q_src*x; closed form for both utilities."""
    x = np.empty(inst.n_flows)
    for fi, f in enumerate(inst.flows):
        di = inst.incidence.dest_index[f.dst]
        q = queues.q[di, f.src]
        u = f.utility
        if q <= 0:
            x[fi] = f.rate_max
        elif u.kind == "weighted-log":
            x[fi] = min(max(K * u.weight / q, f.rate_min), f.rate_max)
        else:
            root = (K * u.weight / q) ** (1.0 / u.fairness)
            x[fi] = min(max(root, f.rate_min), f.rate_max)
    return x


def _backpressure(inst, queues):
    """(D, L) array of Q at transmitter minus Q at receiver."""
    tx = np.array([a for a, _ in inst.graph.links], dtype=int)
    rx = np.array([b for _, b in inst.graph.links], dtype=int)
    return queues.q[:, tx] - queues.q[:, rx]


def qca_slot(inst, state: QcaState, K=100.0, oracle=None) -> QcaState:
    """One queue-driven slot: rates from the slot t-1 queues, then the
    fluid queue update."""
    bp = _backpressure(inst, state.queues)
    D, L = inst.rate_shape()
    x_new = _qca_congestion(inst, state.queues, K)
    r_new = np.zeros((D, L))
    best = np.argmax(bp, axis=0)
    cols = np.arange(L)
    best_bp = bp[best, cols]
    if inst.interference == "none":
        winners = best_bp > 0
        r_new[best[winners], cols[winners]] = inst.capacities[winners]
    else:
        atom = oracle.maxweight(np.maximum(best_bp, 0.0))
        winners = best_bp > 0
        r_new[best[winners], cols[winners]] = atom[winners]
    queues = queue_step(inst, state.queues, x_new, r_new)
    return QcaState(state.t + 1, x_new, r_new, queues)


def run_qca(inst, K=100.0, max_slots=3000, reference: Reference = None):
    """Run the queue-driven baseline for max_slots slots (it has no natural
    stopping rule: the iterates hover around the optimum)."""
    from .capacity import MaxWeightOracle, enumerate_node_exclusive_atoms

    oracle = None
    if inst.interference != "none":
        oracle = MaxWeightOracle(
            enumerate_node_exclusive_atoms(inst.graph, inst.capacities)
        )
    inc = inst.incidence
    state = qca_initial_state(inst)
    metrics = []
    peak = np.zeros_like(state.queues.q)
    ref_norm = float(np.linalg.norm(reference.x)) if reference is not None else 1.0
    for t in range(1, max_slots + 1):
        state = qca_slot(inst, state, K=K, oracle=oracle)
        np.maximum(peak, state.queues.q, out=peak)
        resid = float(np.linalg.norm(inc.B @ state.x + inc.A @ state.r.ravel()))
        rel_err = util_gap = float("nan")
        if reference is not None:
            rel_err = float(np.linalg.norm(state.x - reference.x)) / ref_norm
            util_gap = abs(total_utility(inst, state.x) - reference.total_utility)
        metrics.append(
            IterationMetrics(
                slot=t,
                rel_err=rel_err,
                residual=resid,
                util_gap=util_gap,
                lyapunov=float("nan"),
                kkt_res=float("nan"),
                virt_queue=float("nan"),
                phys_queue=state.queues.total(),
            )
        )
    return RunResult(
        metrics=metrics,
        state=state,
        converged=True,
        stop_reason="max_slots",
        max_abs_dual=float("nan"),
        queue_peak=peak,
        algorithm="qca",
    )


@dataclass
class ProximalState:
    t: int
    x: np.ndarray
    r: np.ndarray  # (D, L)
    dual: np.ndarray


def proximal_initial_state(inst) -> ProximalState:
    D, L = inst.rate_shape()
    R = inst.incidence.n_rows
    return ProximalState(0, np.zeros(inst.n_flows), np.zeros((D, L)), np.zeros(R))


def proximal_slot(inst, state: ProximalState, params: AdmmParams, region=None):
    """One Jacobi slot: both primal blocks consume only slot t-1 values."""
    if inst.interference != "none":
        raise ValueError("the proximal baseline is scoped to wireline instances")
    if region is None:
        region = WirelineRegion(inst.capacities)
    inc = inst.incidence
    rho = params.rho
    beta = resolve_beta(inst, params)

    anchors = inc.A_s @ state.r.ravel() - state.dual[inc.source_rows] / rho
    x_new = np.empty(inst.n_flows)
    for fi, f in enumerate(inst.flows):
        if f.utility.kind == "weighted-log":
            x_new[fi] = congestion_step_closed_form(
                f.utility.weight, 0.0, anchors[fi], rho, f.rate_min, f.rate_max
            )
        else:
            x_new[fi] = congestion_step_numeric(
                f.utility, 0.0, anchors[fi], rho, f.rate_min, f.rate_max
            )

    link_weights = (inc.A.T @ state.dual).reshape(inst.rate_shape())
    r_new = region.routing_step(link_weights, state.r, rho, beta)

    dual_new = state.dual - rho * (inc.B @ x_new + inc.A @ r_new.ravel())
    return ProximalState(state.t + 1, x_new, r_new, dual_new)


def run_proximal(inst, params: AdmmParams, reference: Reference = None, queue_sim=True):
    """Run the proximal baseline with the main solver's stopping rules."""
    inc = inst.incidence
    region = WirelineRegion(inst.capacities)
    state = proximal_initial_state(inst)
    metrics = []
    queue = QueueState(inst) if queue_sim else None
    peak = np.zeros_like(queue.q) if queue_sim else None
    max_abs_dual = 0.0
    ref_norm = float(np.linalg.norm(reference.x)) if reference is not None else 1.0
    converged = False
    stop_reason = "max_slots"
    for t in range(1, params.max_slots + 1):
        new = proximal_slot(inst, state, params, region=region)
        if not np.all(np.isfinite(new.dual)) or (
            np.linalg.norm(new.dual) > params.divergence_limit
        ):
            raise DivergenceError(f"dual norm exceeded limit at slot {t}")
        max_abs_dual = max(max_abs_dual, float(np.max(np.abs(new.dual))))
        if queue_sim:
            queue = queue_step(inst, queue, new.x, new.r)
            np.maximum(peak, queue.q, out=peak)
        resid = float(np.linalg.norm(inc.B @ new.x + inc.A @ new.r.ravel()))
        rel_err = util_gap = kkt = float("nan")
        if reference is not None:
            rel_err = float(np.linalg.norm(new.x - reference.x)) / ref_norm
            util_gap = abs(total_utility(inst, new.x) - reference.total_utility)
            kkt = kkt_residual(inst, new.x, new.r, new.dual, reference.x, region=region)
        metrics.append(
            IterationMetrics(
                slot=t,
                rel_err=rel_err,
                residual=resid,
                util_gap=util_gap,
                lyapunov=float("nan"),
                kkt_res=kkt,
                virt_queue=float(np.sum(np.abs(new.dual))),
                phys_queue=queue.total() if queue_sim else float("nan"),
            )
        )
        step = float(np.linalg.norm(new.x - state.x)) / max(
            1.0, float(np.linalg.norm(new.x))
        )
        state = new
        if params.tol_rel_err is not None and reference is not None:
            if rel_err <= params.tol_rel_err:
                converged = True
                stop_reason = "rel_err"
                break
        elif resid <= params.tol_residual and step <= params.tol_step:
            converged = True
            stop_reason = "residual+step"
            break
    return RunResult(
        metrics=metrics,
        state=state,
        converged=converged,
        stop_reason=stop_reason,
        max_abs_dual=max_abs_dual,
        queue_peak=peak,
        algorithm="proximal",
    )
