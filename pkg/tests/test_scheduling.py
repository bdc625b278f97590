import numpy as np
import pytest

from _oracles import dense_schedule_oracle, random_wireless_instance
from netnum import (
    LinkRouteProblem,
    MaxWeightOracle,
    NetworkGraph,
    enumerate_box_atoms,
    enumerate_node_exclusive_atoms,
    route_link,
)
from netnum.scheduling import (
    SchedulingError,
    SchedulingProblem,
    caratheodory_reduce,
    solve_scheduling_qp,
    split_rates,
)


def _objective(prob, r):
    return float(
        np.sum(prob.weights * r) - 0.5 * np.sum(prob.curvature * (r - prob.anchors) ** 2)
    )


def single_link_problem(a, curvature=2.0):
    g = NetworkGraph(2, [(0, 1)])
    oracle = MaxWeightOracle(enumerate_node_exclusive_atoms(g, [1.0]))
    return SchedulingProblem(
        weights=np.array([[a]]),
        anchors=np.zeros((1, 1)),
        curvature=np.array([curvature]),
        oracle=oracle,
    )


def test_single_link_hits_cap():
    # unconstrained optimum a/curvature = 1 coincides with the cap
    prob = single_link_problem(a=2.0, curvature=2.0)
    sol = solve_scheduling_qp(prob, tol=1e-10)
    assert sol.rates[0, 0] == pytest.approx(1.0, abs=1e-9)
    assert sol.totals[0] == pytest.approx(1.0, abs=1e-9)


def test_single_link_interior():
    # closed-form 1-D solution min(1, a/curvature)
    prob = single_link_problem(a=1.0, curvature=2.0)
    sol = solve_scheduling_qp(prob, tol=1e-12)
    assert sol.rates[0, 0] == pytest.approx(0.5, abs=1e-9)


def test_all_nonpositive_gives_zero_schedule():
    g = NetworkGraph(3, [(0, 1), (1, 2)])
    oracle = MaxWeightOracle(enumerate_node_exclusive_atoms(g, [1.0, 1.0]))
    prob = SchedulingProblem(
        weights=np.array([[-1.0, 0.0], [-0.2, -3.0]]),
        anchors=np.zeros((2, 2)),
        curvature=np.array([1.0, 1.0]),
        oracle=oracle,
    )
    sol = solve_scheduling_qp(prob, tol=1e-10)
    assert np.array_equal(sol.rates, np.zeros((2, 2)))
    assert sol.atoms.shape[0] == 1 and np.array_equal(sol.atoms[0], [0.0, 0.0])
    assert sol.atom_weights[0] == pytest.approx(1.0)


def test_matches_dense_oracle_small():
    rng = np.random.default_rng(5)
    g = NetworkGraph(3, [(0, 1), (1, 2)])
    caps = np.array([0.8, 0.6])
    rate_set = enumerate_node_exclusive_atoms(g, caps)
    for _ in range(10):
        prob = SchedulingProblem(
            weights=rng.normal(0, 1, (2, 2)),
            anchors=np.abs(rng.normal(0, 0.4, (2, 2))),
            curvature=rng.uniform(0.5, 3.0, 2),
            oracle=MaxWeightOracle(rate_set),
        )
        sol = solve_scheduling_qp(prob, tol=1e-9)
        ref_val, _ = dense_schedule_oracle(
            rate_set.atoms, prob.weights, prob.anchors, prob.curvature
        )
        assert _objective(prob, sol.rates) == pytest.approx(ref_val, abs=1e-6)


def test_matches_per_link_solver_on_box_atoms():
    # with interference-free (box) atoms the coupled QP separates per link
    rng = np.random.default_rng(6)
    caps = np.array([0.9, 0.5, 1.4])
    oracle = MaxWeightOracle(enumerate_box_atoms(caps))
    weights = rng.normal(0, 1, (2, 3))
    anchors = np.abs(rng.normal(0, 0.4, (2, 3)))
    curvature = rng.uniform(0.5, 2.0, 3)
    sol = solve_scheduling_qp(
        SchedulingProblem(weights, anchors, curvature, oracle), tol=1e-10
    )
    for l in range(3):
        per_link = route_link(
            LinkRouteProblem(
                weight_diff=curvature[l] * anchors[:, l] + weights[:, l],
                prev_rates=np.zeros(2),
                curvature=curvature[l],
                capacity=caps[l],
            )
        )
        assert np.max(np.abs(sol.rates[:, l] - per_link)) <= 1e-6


def test_objective_dominates_every_atom_best_split():
    rng = np.random.default_rng(7)
    g = NetworkGraph(4, [(0, 1), (1, 2), (2, 3), (3, 0)])
    caps = rng.uniform(0.3, 1.0, 4)
    rate_set = enumerate_node_exclusive_atoms(g, caps)
    prob = SchedulingProblem(
        weights=rng.normal(0, 1, (3, 4)),
        anchors=np.abs(rng.normal(0, 0.3, (3, 4))),
        curvature=rng.uniform(0.5, 2.0, 4),
        oracle=MaxWeightOracle(rate_set),
    )
    sol = solve_scheduling_qp(prob, tol=1e-9)
    val = _objective(prob, sol.rates)
    for atom in rate_set.atoms:
        split = np.zeros((3, 4))
        for l in range(4):
            if atom[l] > 0:
                split[:, l] = route_link(
                    LinkRouteProblem(
                        prob.curvature[l] * prob.anchors[:, l] + prob.weights[:, l],
                        np.zeros(3),
                        prob.curvature[l],
                        atom[l],
                    )
                )
        assert _objective(prob, split) <= val + 1e-8


def test_gap_reported_and_oracle_interface_only():
    class OracleProxy:
        """Exposes only maxweight/calls: proves the solver needs nothing
        else to touch the schedule set."""

        def __init__(self, inner):
            self._inner = inner
            self.calls = 0

        def maxweight(self, w):
            self.calls += 1
            return self._inner.maxweight(w)

    rng = np.random.default_rng(8)
    g = NetworkGraph(4, [(0, 1), (1, 2), (2, 3)])
    proxy = OracleProxy(MaxWeightOracle(enumerate_node_exclusive_atoms(g, np.ones(3))))
    prob = SchedulingProblem(
        weights=rng.normal(0, 1, (2, 3)),
        anchors=np.zeros((2, 3)),
        curvature=np.ones(3),
        oracle=proxy,
    )
    sol = solve_scheduling_qp(prob, tol=1e-9)
    assert sol.gap <= 1e-9
    assert proxy.calls > 0
    assert sol.oracle_calls == proxy.calls


def test_decomposition_certificate():
    rng = np.random.default_rng(9)
    for _ in range(20):
        graph, caps, n_dests = random_wireless_instance(rng)
        L = graph.n_links
        prob = SchedulingProblem(
            weights=rng.normal(0, 1, (n_dests, L)),
            anchors=np.abs(rng.normal(0, 0.4, (n_dests, L))),
            curvature=rng.uniform(0.5, 3.0, L),
            oracle=MaxWeightOracle(enumerate_node_exclusive_atoms(graph, caps)),
        )
        sol = solve_scheduling_qp(prob, tol=1e-8)
        assert sol.atoms.shape[0] <= L + 1
        assert np.all(sol.atom_weights >= -1e-12)
        assert sol.atom_weights.sum() == pytest.approx(1.0, abs=1e-9)
        rec = sol.atom_weights @ sol.atoms
        assert np.linalg.norm(rec - sol.totals) <= 1e-9
        assert np.allclose(sol.rates.sum(axis=0), sol.totals, atol=1e-12)


def test_invalid_tolerance_and_curvature():
    prob = single_link_problem(1.0)
    with pytest.raises(ValueError):
        solve_scheduling_qp(prob, tol=0.0)
    bad = SchedulingProblem(
        weights=np.ones((1, 1)),
        anchors=np.zeros((1, 1)),
        curvature=np.array([0.0]),
        oracle=prob.oracle,
    )
    with pytest.raises(ValueError):
        solve_scheduling_qp(bad, tol=1e-6)


def test_iteration_guard_raises():
    prob = single_link_problem(2.0)
    with pytest.raises(SchedulingError):
        solve_scheduling_qp(prob, tol=1e-12, max_iters=1)


def test_caratheodory_small_input_unchanged():
    atoms = np.array([[0.0, 0.0], [1.0, 0.0]])
    weights = np.array([0.25, 0.75])
    out_atoms, out_w = caratheodory_reduce(atoms, weights)
    assert np.array_equal(out_atoms, atoms)
    assert np.allclose(out_w, weights)


def test_caratheodory_collinear_one_dim():
    atoms = np.array([[0.0], [1.0], [2.0]])
    weights = np.array([0.25, 0.5, 0.25])
    out_atoms, out_w = caratheodory_reduce(atoms, weights, target=[1.0])
    assert out_atoms.shape[0] <= 2
    assert float(out_w @ out_atoms[:, 0]) == pytest.approx(1.0, abs=1e-12)
    assert out_w.sum() == pytest.approx(1.0, abs=1e-12)


def test_caratheodory_random_combinations():
    rng = np.random.default_rng(10)
    g = NetworkGraph(3, [(0, 1), (1, 2), (2, 0)])
    atoms = enumerate_node_exclusive_atoms(g, np.array([0.7, 0.9, 0.4])).atoms
    L = atoms.shape[1]
    for _ in range(50):
        w = rng.dirichlet(np.ones(atoms.shape[0]))
        target = w @ atoms
        out_atoms, out_w = caratheodory_reduce(atoms, w, target=target)
        assert out_atoms.shape[0] <= L + 1
        assert np.all(out_w >= 0)
        assert out_w.sum() == pytest.approx(1.0, abs=1e-12)
        assert np.linalg.norm(out_w @ out_atoms - target) <= 1e-9


def test_caratheodory_rejects_bad_input():
    atoms = np.array([[0.0], [1.0]])
    with pytest.raises(ValueError):
        caratheodory_reduce(atoms, np.array([0.7, 0.7]))  # off the simplex
    with pytest.raises(ValueError):
        caratheodory_reduce(atoms, np.array([0.5, 0.5]), target=[3.0])


def test_split_rates():
    assert np.array_equal(split_rates(0.0, np.array([1.0, 2.0])), [0.0, 0.0])
    assert np.allclose(split_rates(1.0, np.array([5.0, -1.0])), [1.0, 0.0])
    rng = np.random.default_rng(11)
    from _oracles import dykstra_capped_simplex

    for _ in range(100):
        total = float(rng.uniform(0.1, 2.0))
        targets = rng.normal(0, 1.5, 4)
        assert np.max(
            np.abs(split_rates(total, targets) - dykstra_capped_simplex(targets, total))
        ) <= 1e-9
