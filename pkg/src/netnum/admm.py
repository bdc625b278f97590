"""Slot loop of the operator-splitting network optimizer, plus diagnostics.

Each slot runs three steps on the virtual-queue (dual) state:

1. routing/scheduling: extrapolated backpressure weights
   z = (1 + 1/tau) * dual[t-1] - dual[t-2] / tau drive one proximal
   quadratic subproblem — per link for wireline regions, one coupled
   schedule QP for wireless regions;
2. congestion control: each flow maximizes
   U_f(x) - (z_src + rho * delta_r) x - (rho/2)(x - x_prev)^2 over its
   rate box, where delta_r is the slot-over-slot change of net outflow at
   the flow's source (so step 2 sees *this* slot's link rates);
3. dual update: dual[t] = dual[t-1] - tau * rho * (B x[t] + A r[t]).

Diagnostics certify runs against a converged reference point:

* ``lyapunov_value`` is the composite squared distance to the reference
  (dual, rates, flows, plus a source-conservation term) that decreases
  monotonically along the iteration when the step parameters are in
  range; its rate-block seminorm uses Q = rho * (M - A^T A), positive
  definite by the diagonal-dominance margin of the per-link weights.
* ``kkt_residual`` stacks the proximal-mapping optimality residuals and
  the primal infeasibility; it vanishes exactly at a saddle point, so it
  doubles as the stopping certificate of ``reference_solve``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .capacity import MaxWeightOracle, enumerate_node_exclusive_atoms
from .network import NetworkInstance
from .queuesim import QueueState, queue_step
from .routing import project_capped_simplex_batch
from .scheduling import SchedulingProblem, solve_scheduling_qp
from .utility import congestion_step_closed_form, congestion_step_numeric, utility_value

__all__ = [
    "GOLDEN_RATIO",
    "AdmmParams",
    "AdmmState",
    "IterationMetrics",
    "RunResult",
    "Reference",
    "DivergenceError",
    "NotConvergedError",
    "default_beta",
    "pick_eta",
    "make_q_matrix",
    "initial_state",
    "compute_weights",
    "compute_delta_r",
    "virtual_queue_update",
    "build_region",
    "WirelineRegion",
    "WirelessRegion",
    "admm_slot",
    "run",
    "reference_solve",
    "lyapunov_value",
    "kkt_residual",
    "total_utility",
]

GOLDEN_RATIO = (1.0 + math.sqrt(5.0)) / 2.0


class DivergenceError(RuntimeError):
    pass


class NotConvergedError(RuntimeError):
    pass


def default_beta(graph):
    """Per-link proximal weights deg(tx) + deg(rx) + 1: one above the
    diagonal-dominance threshold that keeps Q positive definite."""
    return np.array([graph.deg(tx) + graph.deg(rx) + 1.0 for tx, rx in graph.links])


def pick_eta(tau):
    """Coefficient of the source-conservation term in the descent function.

    The descent argument needs 2 - tau - 1/eta > 0 and
    1 - eta*(1-tau)^2 > 0; for tau in [1, golden ratio) the feasible
    interval is (1/(2-tau), 1/(1-tau)^2) and we take its midpoint
    (eta = 2 at tau = 1, where any eta > 1 works).
    """
    if tau == 1.0:
        return 2.0
    lo = 1.0 / (2.0 - tau)
    hi = 1.0 / (1.0 - tau) ** 2
    if not lo < hi:
        raise ValueError(f"no valid eta for tau={tau}")
    return 0.5 * (lo + hi)


@dataclass
class AdmmParams:
    """Step-size and stopping configuration.

    tau must stay below the golden ratio for convergence; 1.618 is the
    recommended (fast, safe) value.  beta may be a scalar or per-link
    array and must exceed deg(tx) + deg(rx) on every link; None selects
    the default margin-1 choice.
    """

    rho: float = 1.0
    tau: float = 1.618
    beta: object = None
    max_slots: int = 5000
    tol_residual: float = 1e-8
    tol_step: float = 1e-8
    tol_rel_err: float = None
    eta: float = None
    allow_unsafe_tau: bool = False
    divergence_limit: float = 1e12

    def __post_init__(self):
        if self.rho <= 0:
            raise ValueError("rho must be positive")
        if not self.allow_unsafe_tau and not (1.0 <= self.tau < GOLDEN_RATIO):
            raise ValueError(
                f"tau={self.tau} outside [1, {GOLDEN_RATIO:.10f}); "
                "set allow_unsafe_tau=True to experiment outside the range"
            )
        if self.max_slots < 0:
            raise ValueError("max_slots must be nonnegative")


def resolve_beta(inst: NetworkInstance, params: AdmmParams):
    g = inst.graph
    if params.beta is None:
        beta = default_beta(g)
    else:
        beta = np.broadcast_to(
            np.asarray(params.beta, dtype=float), (g.n_links,)
        ).copy()
    floor = np.array([g.deg(tx) + g.deg(rx) for tx, rx in g.links], dtype=float)
    if np.any(beta <= floor):
        bad = int(np.argmax(beta <= floor))
        raise ValueError(
            f"beta[{bad}]={beta[bad]} must exceed deg(tx)+deg(rx)={floor[bad]}"
        )
    return beta


def resolve_eta(params: AdmmParams):
    return params.eta if params.eta is not None else pick_eta(params.tau)


def make_q_matrix(inst: NetworkInstance, rho, beta):
    """Q = rho * (M - A^T A) with M = diag(beta_l per destination block).

    Raises if Q is not positive definite (misconfigured beta).
    """
    A = inst.incidence.A
    D = inst.n_dests
    m_diag = np.tile(np.asarray(beta, dtype=float), D)
    Q = rho * (np.diag(m_diag) - A.T @ A)
    lam_min = float(np.linalg.eigvalsh(Q)[0])
    if lam_min <= 0:
        raise ValueError(f"Q not positive definite (min eigenvalue {lam_min:.3e})")
    return Q


@dataclass
class AdmmState:
    """Iterates after slot t; dual_prev is the slot t-1 dual vector."""

    t: int
    x: np.ndarray  # (F,)
    r: np.ndarray  # (D, L)
    dual: np.ndarray  # (R,)
    dual_prev: np.ndarray  # (R,)

    def copy(self):
        return AdmmState(
            self.t, self.x.copy(), self.r.copy(), self.dual.copy(), self.dual_prev.copy()
        )


def initial_state(inst: NetworkInstance) -> AdmmState:
    """Empty queues, zero rates: x[0]=0, r[0]=0, dual[0]=dual[-1]=0."""
    D, L = inst.rate_shape()
    R = inst.incidence.n_rows
    return AdmmState(0, np.zeros(inst.n_flows), np.zeros((D, L)), np.zeros(R), np.zeros(R))


def compute_weights(dual_prev, dual_prev2, tau):
    """Backpressure weights z = (1 + 1/tau) dual[t-1] - dual[t-2]/tau.

    Rows for a destination's own node never exist, so z at those entries
    is identically zero by indexing.
    """
    if tau <= 0:
        raise ValueError("tau must be positive")
    return (1.0 + 1.0 / tau) * np.asarray(dual_prev, dtype=float) - (
        np.asarray(dual_prev2, dtype=float) / tau
    )


def compute_delta_r(inst: NetworkInstance, r_new, r_prev, flow_index):
    """Slot-over-slot change of net inflow at one flow's source:

        sum_{l into s_f} (r_l - r_l') - sum_{l out of s_f} (r_l - r_l')

    for the flow's destination.  Equals minus the flow's row of
    A_s (r[t] - r[t-1]).
    """
    f = inst.flows[flow_index]
    di = inst.incidence.dest_index[f.dst]
    r_new = np.asarray(r_new, dtype=float).reshape(inst.rate_shape())
    r_prev = np.asarray(r_prev, dtype=float).reshape(inst.rate_shape())
    g = inst.graph
    acc = 0.0
    for l in g.in_links[f.src]:
        acc += r_new[di, l] - r_prev[di, l]
    for l in g.out_links[f.src]:
        acc -= r_new[di, l] - r_prev[di, l]
    return acc


def _delta_r_all(inst, r_new, r_prev):
    return -(inst.incidence.A_s @ (r_new - r_prev).ravel())


def virtual_queue_update(inst: NetworkInstance, dual, x, r, rho, tau):
    """Elementwise dual step: per (node n, destination d),

        dual'  =  dual  - rho*tau * (outgoing rates)
                        + rho*tau * (incoming rates)
                        + rho*tau * (injection at n toward d)

    Virtual queues are dual variables and may go negative.  Equals
    dual - tau*rho*(B x + A r) under the module's sign convention.
    """
    g = inst.graph
    inc = inst.incidence
    r = np.asarray(r, dtype=float).reshape(inst.rate_shape())
    x = np.asarray(x, dtype=float)
    out = np.asarray(dual, dtype=float).copy()
    for i, (n, d) in enumerate(inc.rows):
        di = inc.dest_index[d]
        flux = 0.0
        for l in g.out_links[n]:
            flux -= r[di, l]
        for l in g.in_links[n]:
            flux += r[di, l]
        out[i] += rho * tau * flux
    for fi, f in enumerate(inst.flows):
        out[inc.row_index[(f.src, f.dst)]] += rho * tau * x[fi]
    return out


class WirelineRegion:
    """Per-link caps; the slot subproblem separates into one capped-simplex
    projection per link."""

    def __init__(self, capacities):
        self.capacities = np.asarray(capacities, dtype=float)

    def routing_step(self, link_weights, r_prev, rho, beta, tol=None):
        target = r_prev + link_weights / (rho * beta)[None, :]
        return project_capped_simplex_batch(target.T, self.capacities).T

    def project(self, v, tol=None):
        return project_capped_simplex_batch(v.T, self.capacities).T

    def last_schedule(self):
        return None


class WirelessRegion:
    """Schedule hull of node-exclusive atoms; the slot subproblem is one
    coupled QP solved through the max-weight oracle."""

    def __init__(self, inst: NetworkInstance, max_links=24, max_atoms=200_000):
        self.rate_set = enumerate_node_exclusive_atoms(
            inst.graph, inst.capacities, max_links=max_links, max_atoms=max_atoms
        )
        self.oracle = MaxWeightOracle(self.rate_set)
        self._last = None

    def routing_step(self, link_weights, r_prev, rho, beta, tol=1e-8):
        prob = SchedulingProblem(link_weights, r_prev, rho * beta, self.oracle)
        sol = solve_scheduling_qp(prob, tol=tol if tol else 1e-8)
        self._last = sol
        return sol.rates

    def project(self, v, tol=1e-10):
        prob = SchedulingProblem(v, np.zeros_like(v), np.ones(v.shape[1]), self.oracle)
        return solve_scheduling_qp(prob, tol=tol).rates

    def last_schedule(self):
        return self._last


def build_region(inst: NetworkInstance):
    if inst.interference == "none":
        return WirelineRegion(inst.capacities)
    return WirelessRegion(inst)


def _congestion_all(inst, pressures, x_prev, rho):
    x = np.empty(inst.n_flows)
    for fi, f in enumerate(inst.flows):
        u = f.utility
        if u.kind == "weighted-log":
            x[fi] = congestion_step_closed_form(
                u.weight, pressures[fi], x_prev[fi], rho, f.rate_min, f.rate_max
            )
        else:
            x[fi] = congestion_step_numeric(
                u, pressures[fi], x_prev[fi], rho, f.rate_min, f.rate_max
            )
    return x


def admm_slot(inst, state: AdmmState, params: AdmmParams, region=None, sched_tol=1e-8):
    """Advance one slot: routing/scheduling, congestion control, dual update."""
    if region is None:
        region = build_region(inst)
    inc = inst.incidence
    beta = resolve_beta(inst, params)
    rho, tau = params.rho, params.tau
    D, L = inst.rate_shape()

    z = compute_weights(state.dual, state.dual_prev, tau)
    link_weights = (inc.A.T @ z).reshape(D, L)
    try:
        r_new = region.routing_step(link_weights, state.r, rho, beta, tol=sched_tol)
    except Exception as exc:
        raise type(exc)(f"slot {state.t + 1}: {exc}") from exc

    delta = _delta_r_all(inst, r_new, state.r)
    pressures = z[inc.source_rows] + rho * delta
    x_new = _congestion_all(inst, pressures, state.x, rho)

    resid = inc.B @ x_new + inc.A @ r_new.ravel()
    dual_new = state.dual - tau * rho * resid
    return AdmmState(state.t + 1, x_new, r_new, dual_new, state.dual.copy())


def total_utility(inst, x):
    return sum(utility_value(f.utility, x[fi]) for fi, f in enumerate(inst.flows))


@dataclass
class Reference:
    """A certified saddle point: primal rates, dual vector, and objective."""

    x: np.ndarray
    r: np.ndarray
    dual: np.ndarray
    total_utility: float
    kkt: float


@dataclass
class IterationMetrics:
    slot: int
    rel_err: float
    residual: float
    util_gap: float
    lyapunov: float
    kkt_res: float
    virt_queue: float
    phys_queue: float

    FIELDS = (
        "slot",
        "rel_err",
        "residual",
        "util_gap",
        "lyapunov",
        "kkt_res",
        "virt_queue",
        "phys_queue",
    )

    def as_row(self):
        return (
            self.slot,
            self.rel_err,
            self.residual,
            self.util_gap,
            self.lyapunov,
            self.kkt_res,
            self.virt_queue,
            self.phys_queue,
        )


@dataclass
class RunResult:
    metrics: list
    state: AdmmState
    converged: bool
    stop_reason: str
    max_abs_dual: float
    queue_peak: np.ndarray = None
    algorithm: str = "admm"

    def column(self, name):
        idx = IterationMetrics.FIELDS.index(name)
        return np.array([m.as_row()[idx] for m in self.metrics], dtype=float)


def kkt_residual(inst, x, r, dual, ref_x, region=None):
    """Norm of the stacked saddle-point residual at (x, r, dual).

    Blocks: box-projection stationarity of the flow rates (utility
    gradient frozen at ref_x), region-projection stationarity of the link
    rates, primal infeasibility B x + A r, and x - ref_x.  Zero exactly at
    a saddle point whose flow rates equal ref_x; with ref_x = x it is a
    self-certificate of optimality.
    """
    if region is None:
        region = build_region(inst)
    inc = inst.incidence
    x = np.asarray(x, dtype=float)
    r2 = np.asarray(r, dtype=float).reshape(inst.rate_shape())
    lo = np.array([f.rate_min for f in inst.flows])
    hi = np.array([f.rate_max for f in inst.flows])
    # gradient of the *minimized* objective (negated utility) at ref_x
    from .utility import utility_grad

    grad_min = -np.array(
        [utility_grad(f.utility, ref_x[fi]) for fi, f in enumerate(inst.flows)]
    )
    dual_s = dual[inc.source_rows]
    e1 = x - np.clip(x - dual_s - grad_min, lo, hi)
    lifted = r2 + (inc.A.T @ dual).reshape(inst.rate_shape())
    e2 = (r2 - region.project(lifted)).ravel()
    e3 = inc.B @ x + inc.A @ r2.ravel()
    e4 = x - np.asarray(ref_x, dtype=float)
    return float(np.sqrt(np.sum(e1**2) + np.sum(e2**2) + np.sum(e3**2) + np.sum(e4**2)))


def lyapunov_value(inst, x, r, dual, reference: Reference, params: AdmmParams, Q=None):
    """Composite squared distance to the reference saddle point.

    (1/(rho tau)) ||dual - dual*||^2 + rho ||x - x*||^2 + ||r - r*||_Q^2
    + (rho/eta) ||A_s r - x||^2.  Nonincreasing along slots t >= 1 when
    tau is in range and the subproblems are solved exactly.
    """
    if Q is None:
        Q = make_q_matrix(inst, params.rho, resolve_beta(inst, params))
    eta = resolve_eta(params)
    rho, tau = params.rho, params.tau
    inc = inst.incidence
    dr = (np.asarray(r, dtype=float) - reference.r).ravel()
    dx = np.asarray(x, dtype=float) - reference.x
    dd = np.asarray(dual, dtype=float) - reference.dual
    src_gap = inc.A_s @ np.asarray(r, dtype=float).ravel() - np.asarray(x, dtype=float)
    return float(
        dd @ dd / (rho * tau)
        + rho * (dx @ dx)
        + dr @ Q @ dr
        + (rho / eta) * (src_gap @ src_gap)
    )


def run(
    inst,
    params: AdmmParams,
    reference: Reference = None,
    queue_sim=True,
    capacity_sampler=None,
    schedule_dump=None,
    check_identities=True,
):
    """Run the slot loop until stopping; emit one metrics row per slot.

    Stopping: residual <= tol_residual AND relative step <= tol_step, or
    rel. error <= tol_rel_err when a reference is supplied.  Raises
    DivergenceError when the dual norm passes the divergence limit.
    Metrics that need a reference are NaN without one.

    capacity_sampler(slot) -> (L,) array switches on per-slot capacity
    redraw (fading experiments); the slot problem is then solved over the
    instantaneous region.  schedule_dump, for wireless runs, collects the
    per-slot schedule decompositions as JSON-ready dicts.
    """
    beta = resolve_beta(inst, params)
    rho, tau = params.rho, params.tau
    inc = inst.incidence
    region = build_region(inst)
    Q = None
    if reference is not None:
        Q = make_q_matrix(inst, rho, beta)
        ref_norm = float(np.linalg.norm(reference.x))

    state = initial_state(inst)
    metrics = []
    queue = QueueState(inst) if queue_sim else None
    peak = np.zeros_like(queue.q) if queue_sim else None
    max_abs_dual = 0.0
    prev_resid_norm = 0.0
    converged = False
    stop_reason = "max_slots"

    for t in range(1, params.max_slots + 1):
        if capacity_sampler is not None:
            caps = np.asarray(capacity_sampler(t), dtype=float)
            if inst.interference == "none":
                region = WirelineRegion(caps)
            else:
                inst_t = type(inst)(inst.graph, inst.flows, caps, inst.interference)
                region = WirelessRegion(inst_t)
        sched_tol = max(1e-8, 1e-3 * prev_resid_norm)
        new = admm_slot(inst, state, params, region=region, sched_tol=sched_tol)

        resid = inc.B @ new.x + inc.A @ new.r.ravel()
        resid_norm = float(np.linalg.norm(resid))
        dual_step_norm = float(np.linalg.norm(new.dual - state.dual)) / (rho * tau)
        if check_identities and abs(resid_norm - dual_step_norm) > 1e-9 * (
            1.0 + resid_norm
        ):
            raise AssertionError(
                f"slot {t}: dual-step identity violated "
                f"({resid_norm} vs {dual_step_norm})"
            )
        if not np.all(np.isfinite(new.dual)) or (
            np.linalg.norm(new.dual) > params.divergence_limit
        ):
            raise DivergenceError(f"dual norm exceeded limit at slot {t}")

        max_abs_dual = max(max_abs_dual, float(np.max(np.abs(new.dual))))
        if queue_sim:
            queue = queue_step(inst, queue, new.x, new.r)
            np.maximum(peak, queue.q, out=peak)
        if schedule_dump is not None and region.last_schedule() is not None:
            schedule_dump.append(region.last_schedule().to_json_dict())

        rel_err = util_gap = lyap = kkt = float("nan")
        if reference is not None:
            rel_err = float(np.linalg.norm(new.x - reference.x)) / ref_norm
            util_gap = abs(total_utility(inst, new.x) - reference.total_utility)
            lyap = lyapunov_value(inst, new.x, new.r, new.dual, reference, params, Q=Q)
            kkt = kkt_residual(inst, new.x, new.r, new.dual, reference.x, region=region)
        metrics.append(
            IterationMetrics(
                slot=t,
                rel_err=rel_err,
                residual=resid_norm,
                util_gap=util_gap,
                lyapunov=lyap,
                kkt_res=kkt,
                virt_queue=float(np.sum(np.abs(new.dual))),
                phys_queue=queue.total() if queue_sim else float("nan"),
            )
        )

        step = float(np.linalg.norm(new.x - state.x)) / max(
            1.0, float(np.linalg.norm(new.x))
        )
        state = new
        prev_resid_norm = resid_norm
        if params.tol_rel_err is not None and reference is not None:
            if rel_err <= params.tol_rel_err:
                converged = True
                stop_reason = "rel_err"
                break
        elif resid_norm <= params.tol_residual and step <= params.tol_step:
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
        algorithm="admm",
    )


def reference_solve(
    inst, params: AdmmParams = None, tight_tol=1e-10, max_slots=200_000, check_every=25
):
    """Run the slot loop to a self-certified saddle point.

    Every check_every slots the self KKT residual (reference point = the
    current flow rates) is evaluated; the first iterate at or below
    tight_tol is returned.  Raises NotConvergedError when the budget runs
    out.
    """
    if params is None:
        params = AdmmParams()
    params = replace(params, max_slots=max_slots)
    region = build_region(inst)
    state = initial_state(inst)
    prev_resid = 0.0
    for t in range(1, max_slots + 1):
        sched_tol = max(1e-12, min(1e-8, 1e-3 * prev_resid))
        state = admm_slot(inst, state, params, region=region, sched_tol=sched_tol)
        prev_resid = float(
            np.linalg.norm(inst.incidence.B @ state.x + inst.incidence.A @ state.r.ravel())
        )
        if t % check_every == 0 or prev_resid <= tight_tol:
            kkt = kkt_residual(inst, state.x, state.r, state.dual, state.x, region=region)
            if kkt <= tight_tol:
                return Reference(
                    x=state.x.copy(),
                    r=state.r.copy(),
                    dual=state.dual.copy(),
                    total_utility=total_utility(inst, state.x),
                    kkt=kkt,
                )
    raise NotConvergedError(
        f"no saddle point within {max_slots} slots (last self-KKT check failed)"
    )
