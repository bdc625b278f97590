"""Capacity regions: wireline per-link caps and wireless feasible-rate sets.

A wireless region under the one-hop node-exclusive interference model is
the convex hull of finitely many rate "atoms": each atom activates a set
of links no two of which share a node (a matching, counting both
endpoints of every directed link) and runs every active link at its
capacity.  The zero atom (empty schedule) is always included.

Linear optimization over the atom set — the classical max-weight
scheduling primitive — is the only operation the hull ever needs to
expose; at desk scale it is done by exhaustive scoring of the enumerated
atoms, which is exact.  A greedy matching oracle is provided for larger
graphs and is clearly labeled inexact.
"""

from __future__ import annotations

import json

import numpy as np

from .network import NetworkGraph

__all__ = [
    "FeasibleRateSet",
    "MaxWeightOracle",
    "GreedyMatchingOracle",
    "enumerate_node_exclusive_atoms",
    "enumerate_box_atoms",
]


class FeasibleRateSet:
    """Materialized atom set of a capacity region.

    atoms: (I, L) array, one nonnegative rate vector per row; row 0 is the
    zero atom whenever the set came from an enumerator here.
    """

    def __init__(self, atoms, interference="node-exclusive"):
        self.atoms = np.asarray(atoms, dtype=float)
        if self.atoms.ndim != 2:
            raise ValueError("atoms must be a 2-D array (I, L)")
        if np.any(self.atoms < 0):
            raise ValueError("atoms must be nonnegative")
        self.interference = interference

    @property
    def n_atoms(self):
        return self.atoms.shape[0]

    @property
    def n_links(self):
        return self.atoms.shape[1]

    def to_json(self) -> str:
        return json.dumps(
            {"interference": self.interference, "atoms": self.atoms.tolist()}
        )


def enumerate_node_exclusive_atoms(
    graph: NetworkGraph, capacities, max_links=24, max_atoms=200_000
) -> FeasibleRateSet:
    """All node-exclusive schedules of ``graph`` at the given capacities.

    Depth-first over link indices, excluding before including, so the zero
    atom comes first and the ordering is deterministic.  Refuses (rather
    than truncates) when the graph exceeds the size guards.
    """
    capacities = np.asarray(capacities, dtype=float)
    L = graph.n_links
    if capacities.shape != (L,):
        raise ValueError("need one capacity per link")
    if L > max_links:
        raise ValueError(
            f"refusing to enumerate schedules for {L} links (guard: {max_links})"
        )
    endpoints = [(tx, rx) for tx, rx in graph.links]
    atoms = []
    chosen = []

    def rec(i, used):
        if len(atoms) > max_atoms:
            raise ValueError(f"atom count exceeds guard ({max_atoms})")
        if i == L:
            rates = np.zeros(L)
            for l in chosen:
                rates[l] = capacities[l]
            atoms.append(rates)
            return
        rec(i + 1, used)
        tx, rx = endpoints[i]
        if tx not in used and rx not in used:
            chosen.append(i)
            rec(i + 1, used | {tx, rx})
            chosen.pop()

    rec(0, frozenset())
    return FeasibleRateSet(np.array(atoms), interference="node-exclusive")


def enumerate_box_atoms(capacities, max_links=16) -> FeasibleRateSet:
    """Interference-free atom set: every subset of links at capacity.

    Its convex hull is the wireline box [0, C]; useful for cross-checking
    schedulers against per-link solvers.
    """
    capacities = np.asarray(capacities, dtype=float)
    L = capacities.shape[0]
    if L > max_links:
        raise ValueError(f"refusing 2^{L} box atoms (guard: {max_links} links)")
    atoms = np.zeros((2**L, L))
    for mask in range(2**L):
        for l in range(L):
            if mask >> l & 1:
                atoms[mask, l] = capacities[l]
    return FeasibleRateSet(atoms, interference="none")


class MaxWeightOracle:
    """Exact linear optimization over a materialized atom set.

    maxweight(w) returns the atom maximizing sum_l w_l * r_l, ties broken
    by lowest atom index.  Calls are counted so solvers built on top can
    prove they touch the region only through this interface.
    """

    def __init__(self, rate_set: FeasibleRateSet):
        self.rate_set = rate_set
        self.calls = 0

    def maxweight(self, weights):
        weights = np.asarray(weights, dtype=float)
        if weights.shape != (self.rate_set.n_links,):
            raise ValueError("one weight per link required")
        if not np.all(np.isfinite(weights)):
            raise ValueError("weights must be finite")
        self.calls += 1
        scores = self.rate_set.atoms @ weights
        idx = int(np.argmax(scores))
        return self.rate_set.atoms[idx].copy()


class GreedyMatchingOracle:
    """Greedy node-exclusive schedule for large graphs.  INEXACT.

    Scans links by decreasing score w_l * C_l and activates each link whose
    endpoints are still free.  The result is a feasible atom but not
    necessarily the max-weight one; use only where exactness is not needed.
    """

    def __init__(self, graph: NetworkGraph, capacities):
        self.graph = graph
        self.capacities = np.asarray(capacities, dtype=float)
        self.calls = 0

    def maxweight(self, weights):
        weights = np.asarray(weights, dtype=float)
        if not np.all(np.isfinite(weights)):
            raise ValueError("weights must be finite")
        self.calls += 1
        scores = weights * self.capacities
        order = np.argsort(-scores, kind="stable")
        used = set()
        rates = np.zeros(self.graph.n_links)
        for l in order:
            if scores[l] <= 0:
                break
            tx, rx = self.graph.links[l]
            if tx in used or rx in used:
                continue
            rates[l] = self.capacities[l]
            used.add(tx)
            used.add(rx)
        return rates
