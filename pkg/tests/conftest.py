import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from netnum import (
    AdmmParams,
    FlowSpec,
    NetworkGraph,
    NetworkInstance,
    UtilitySpec,
    generate_er_instance,
)


@pytest.fixture
def two_node():
    """Single link 0 -> 1 at capacity 1 with one unit-weight log flow; the
    optimum is x* = r* = 1 with dual value 1."""
    graph = NetworkGraph(2, [(0, 1)])
    flows = [FlowSpec(0, 1, 1e-3, 10.0, UtilitySpec("weighted-log", 1.0))]
    return NetworkInstance(graph, flows, [1.0])


@pytest.fixture
def two_node_params():
    return AdmmParams(rho=1.0, tau=1.618, beta=3.0, max_slots=2000)


@pytest.fixture
def three_line():
    """Line 0 -> 1 -> 2 with one flow from 0 to 2."""
    graph = NetworkGraph(3, [(0, 1), (1, 2)])
    flows = [FlowSpec(0, 2, 1e-3, 10.0, UtilitySpec("weighted-log", 1.0))]
    return NetworkInstance(graph, flows, [1.0, 1.0])


@pytest.fixture
def er_small():
    return generate_er_instance(10, 0.33, 3, seed=1)


def random_state(inst, rng, scale=1.0):
    """Arbitrary (x, r, dual) triple with x inside the boxes."""
    lo = np.array([f.rate_min for f in inst.flows])
    hi = np.array([f.rate_max for f in inst.flows])
    x = rng.uniform(lo, np.minimum(hi, lo + scale))
    r = rng.uniform(0, scale, inst.rate_shape())
    dual = rng.normal(0, scale, inst.incidence.n_rows)
    return x, r, dual
