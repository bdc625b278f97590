"""Directed network model, end-to-end flows and incidence matrices.

The multi-commodity flow-conservation constraints are kept in the stacked
matrix form  B x + A r = 0, where

* ``A`` is block diagonal over destinations; block d is the node-arc
  incidence matrix with the destination's own row dropped (+1 at the
  transmitter, -1 at the receiver of each link),
* ``B`` selects -1 at row (s_f, d_f) for each flow f.

Row (n, d) of ``B x + A r`` therefore reads

    sum_{l out of n} r_l^d  -  sum_{l into n} r_l^d  -  sum_f x_f [s_f=n, d_f=d]

i.e. the *negated* per-node balance of injected plus incoming traffic
against outgoing traffic.  This sign convention (constraint residual
= B x + A r, not its negation) is used everywhere: the dual update
subtracts a positive multiple of it.

Link-rate vectors ``r`` are stored destination-major: entry (d, l) sits at
flat index d*L + l, matching the block structure of ``A``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .utility import UtilitySpec

__all__ = [
    "NetworkGraph",
    "FlowSpec",
    "NetworkInstance",
    "IncidenceMatrices",
    "build_incidence",
    "conservation_residual",
    "generate_er_instance",
    "instance_to_json",
    "instance_from_json",
    "save_instance",
    "load_instance",
]


class NetworkGraph:
    """Directed graph with per-node link adjacency.

    Nodes are the integers 0..n_nodes-1; links is an ordered list of
    (tx, rx) pairs.  Instances are immutable by convention and safe to
    share across threads.
    """

    def __init__(self, n_nodes: int, links):
        if n_nodes < 1:
            raise ValueError("need at least one node")
        self.n_nodes = int(n_nodes)
        self.links = [(int(a), int(b)) for a, b in links]
        for tx, rx in self.links:
            if not (0 <= tx < n_nodes and 0 <= rx < n_nodes):
                raise ValueError(f"link ({tx},{rx}) references unknown node id")
            if tx == rx:
                raise ValueError(f"self-loop ({tx},{rx}) not allowed")
        self.n_links = len(self.links)
        self.out_links = [[] for _ in range(self.n_nodes)]
        self.in_links = [[] for _ in range(self.n_nodes)]
        for l, (tx, rx) in enumerate(self.links):
            self.out_links[tx].append(l)
            self.in_links[rx].append(l)

    def deg(self, n: int) -> int:
        """Number of adjacent links (incoming plus outgoing)."""
        return len(self.in_links[n]) + len(self.out_links[n])

    def __repr__(self):
        return f"NetworkGraph(n_nodes={self.n_nodes}, n_links={self.n_links})"


@dataclass
class FlowSpec:
    """One end-to-end session: source, destination, rate box and utility."""

    src: int
    dst: int
    rate_min: float
    rate_max: float
    utility: UtilitySpec = field(default_factory=UtilitySpec)

    def __post_init__(self):
        if self.src == self.dst:
            raise ValueError("flow source equals destination")
        if not (0 < self.rate_min <= self.rate_max):
            raise ValueError("need 0 < rate_min <= rate_max")


class IncidenceMatrices:
    """Dense incidence/selection matrices for one (graph, flows) pair.

    Attributes:
        A:           (R, D*L) block-diagonal node-arc matrix, R = D*(N-1)
        B:           (R, F) source-selection matrix (-1 entries)
        A_s:         (F, D*L) rows of A at the flow sources, one per flow
        A_r:         (R-F, D*L) remaining rows of A, in original order
        rows:        list of (node, dest_node) pairs, one per row of A
        source_rows: row index of (s_f, d_f) per flow
        other_rows:  row indices not occupied by any flow source
        dests:       sorted distinct destination nodes
    """

    def __init__(self, graph: NetworkGraph, flows):
        N, L = graph.n_nodes, graph.n_links
        dests = sorted({f.dst for f in flows})
        D = len(dests)
        self.dests = dests
        self.dest_index = {d: i for i, d in enumerate(dests)}

        rows = []
        row_index = {}
        for d in dests:
            for n in range(N):
                if n == d:
                    continue
                row_index[(n, d)] = len(rows)
                rows.append((n, d))
        self.rows = rows
        self.row_index = row_index
        R = len(rows)

        A = np.zeros((R, D * L))
        for di, d in enumerate(dests):
            for l, (tx, rx) in enumerate(graph.links):
                col = di * L + l
                if tx != d:
                    A[row_index[(tx, d)], col] = 1.0
                if rx != d:
                    A[row_index[(rx, d)], col] = -1.0

        B = np.zeros((R, len(flows)))
        src_rows = []
        for fi, f in enumerate(flows):
            r = row_index[(f.src, f.dst)]
            B[r, fi] = -1.0
            src_rows.append(r)
        self.A = A
        self.B = B
        self.source_rows = np.array(src_rows, dtype=int)
        mask = np.ones(R, dtype=bool)
        mask[self.source_rows] = False
        self.other_rows = np.nonzero(mask)[0]
        self.A_s = A[self.source_rows]
        self.A_r = A[self.other_rows]
        self.n_rows = R
        self.n_rate_vars = D * L


def build_incidence(graph: NetworkGraph, flows) -> IncidenceMatrices:
    """Build A, B and the source/intermediate row split for the instance.

    Raises on flow endpoints outside the graph and on duplicate flow
    sources (distinct sessions must originate at distinct nodes).
    """
    seen_src = set()
    for f in flows:
        for node in (f.src, f.dst):
            if not (0 <= node < graph.n_nodes):
                raise ValueError(f"flow endpoint {node} is not a node id")
        if f.src in seen_src:
            raise ValueError(f"duplicate flow source node {f.src}")
        seen_src.add(f.src)
    return IncidenceMatrices(graph, flows)


class NetworkInstance:
    """Graph + flows + link capacities (+ interference model tag).

    interference is "none" for wireline per-link caps, or "node-exclusive"
    for wireless instances whose feasible schedules are matchings.
    Immutable after construction.
    """

    def __init__(self, graph: NetworkGraph, flows, capacities, interference="none"):
        if interference not in ("none", "node-exclusive"):
            raise ValueError(f"unknown interference model {interference!r}")
        self.graph = graph
        self.flows = list(flows)
        self.capacities = np.asarray(capacities, dtype=float)
        if self.capacities.shape != (graph.n_links,):
            raise ValueError("need one capacity per link")
        if np.any(self.capacities <= 0):
            raise ValueError("capacities must be positive")
        self.interference = interference
        self.incidence = build_incidence(graph, flows)

    @property
    def n_flows(self):
        return len(self.flows)

    @property
    def n_dests(self):
        return len(self.incidence.dests)

    def rate_shape(self):
        """Shape (D, L) of a per-destination link-rate array."""
        return (self.n_dests, self.graph.n_links)

    def source_row(self, flow_index: int) -> int:
        return int(self.incidence.source_rows[flow_index])


def conservation_residual(inst: NetworkInstance, x, r):
    """Per-(node, destination) flow-conservation residual, by summation.

    Entry (n, d) is
        sum_{l out of n} r_l^d - sum_{l into n} r_l^d - injected(n, d),
    which equals row (n, d) of B x + A r exactly (see module docstring for
    the sign convention).  ``r`` may be flat (D*L,) or shaped (D, L).
    """
    inc = inst.incidence
    g = inst.graph
    x = np.asarray(x, dtype=float)
    r = np.asarray(r, dtype=float).reshape(inst.rate_shape())
    if x.shape != (inst.n_flows,):
        raise ValueError(f"x has shape {x.shape}, expected ({inst.n_flows},)")
    out = np.zeros(inc.n_rows)
    for i, (n, d) in enumerate(inc.rows):
        di = inc.dest_index[d]
        acc = 0.0
        for l in g.out_links[n]:
            acc += r[di, l]
        for l in g.in_links[n]:
            acc -= r[di, l]
        out[i] = acc
    for fi, f in enumerate(inst.flows):
        out[inc.row_index[(f.src, f.dst)]] -= x[fi]
    return out


def _connected(n_nodes, edges):
    if n_nodes <= 1:
        return True
    adj = [[] for _ in range(n_nodes)]
    for a, b in edges:
        adj[a].append(b)
        adj[b].append(a)
    seen = {0}
    stack = [0]
    while stack:
        u = stack.pop()
        for v in adj[u]:
            if v not in seen:
                seen.add(v)
                stack.append(v)
    return len(seen) == n_nodes


def generate_er_instance(
    n_nodes,
    p_connect,
    n_flows,
    seed,
    capacity_dist=None,
    interference="none",
    rate_min=1e-3,
    max_retries=1000,
):
    """Random connected instance from the G(n, p) model.

    An undirected skeleton is sampled until connected, then both directed
    orientations of every edge become links.  Capacities default to
    uniform(0, 1) draws per directed link; flow weights are uniform(0, 1);
    flow sources are distinct nodes.  Deterministic for a fixed seed.

    The rate box is [rate_min, 10 * max capacity]: the lower edge keeps
    log-utility gradients Lipschitz, the upper edge never binds at an
    optimum.
    """
    if n_nodes < 2:
        raise ValueError("need at least two nodes")
    if not 0 < p_connect <= 1:
        raise ValueError("need 0 < p_connect <= 1")
    if not 1 <= n_flows <= n_nodes:
        raise ValueError("need 1 <= n_flows <= n_nodes")
    rng = np.random.default_rng(seed)

    edges = None
    for _ in range(max_retries):
        cand = [
            (i, j)
            for i in range(n_nodes)
            for j in range(i + 1, n_nodes)
            if rng.random() < p_connect
        ]
        if _connected(n_nodes, cand):
            edges = cand
            break
    if edges is None:
        raise RuntimeError(
            f"no connected G({n_nodes},{p_connect}) skeleton in {max_retries} tries"
        )

    links = []
    for a, b in edges:
        links.append((a, b))
        links.append((b, a))
    graph = NetworkGraph(n_nodes, links)

    if capacity_dist is None:
        capacities = rng.uniform(0.0, 1.0, size=len(links))
    else:
        capacities = np.asarray(capacity_dist(rng, len(links)), dtype=float)
    rate_max = 10.0 * float(capacities.max())

    sources = rng.choice(n_nodes, size=n_flows, replace=False)
    flows = []
    for s in sources:
        choices = [n for n in range(n_nodes) if n != s]
        d = int(rng.choice(choices))
        w = float(rng.uniform(0.0, 1.0))
        flows.append(
            FlowSpec(
                src=int(s),
                dst=d,
                rate_min=rate_min,
                rate_max=rate_max,
                utility=UtilitySpec("weighted-log", weight=w),
            )
        )
    return NetworkInstance(graph, flows, capacities, interference=interference)


def instance_to_json(inst: NetworkInstance) -> dict:
    """Lossless JSON-compatible dict: nodes, links, capacities, flows."""
    flows = []
    for f in inst.flows:
        entry = {
            "src": f.src,
            "dst": f.dst,
            "m": f.rate_min,
            "M": f.rate_max,
            "w": f.utility.weight,
            "utility": f.utility.kind,
        }
        if f.utility.kind == "alpha-fair":
            entry["gamma"] = f.utility.fairness
        flows.append(entry)
    return {
        "nodes": list(range(inst.graph.n_nodes)),
        "links": [[tx, rx] for tx, rx in inst.graph.links],
        "capacities": inst.capacities.tolist(),
        "flows": flows,
        "interference": inst.interference,
    }


def instance_from_json(data: dict) -> NetworkInstance:
    graph = NetworkGraph(len(data["nodes"]), [tuple(l) for l in data["links"]])
    flows = []
    for f in data["flows"]:
        spec = UtilitySpec(
            kind=f.get("utility", "weighted-log"),
            weight=f["w"],
            fairness=f.get("gamma", 0.0),
        )
        flows.append(FlowSpec(f["src"], f["dst"], f["m"], f["M"], spec))
    return NetworkInstance(
        graph,
        flows,
        np.array(data["capacities"], dtype=float),
        interference=data.get("interference", "none"),
    )


def save_instance(inst: NetworkInstance, path):
    with open(path, "w") as fh:
        json.dump(instance_to_json(inst), fh, indent=2)


def load_instance(path) -> NetworkInstance:
    with open(path) as fh:
        return instance_from_json(json.load(fh))
