import numpy as np
import pytest

from netnum import (
    UtilitySpec,
    congestion_step_closed_form,
    congestion_step_numeric,
    utility_grad,
    utility_value,
)

LOG = UtilitySpec("weighted-log", 1.0)


def test_log_at_one():
    assert utility_value(LOG, 1.0) == 0.0
    assert utility_grad(LOG, 1.0) == 1.0


def test_alpha_fair_values():
    spec = UtilitySpec("alpha-fair", 1.0, fairness=2.0)
    assert utility_value(spec, 2.0) == pytest.approx(-0.5)
    assert utility_grad(spec, 2.0) == pytest.approx(0.25)


def test_grad_matches_finite_difference():
    rng = np.random.default_rng(1)
    specs = [
        UtilitySpec("weighted-log", 0.7),
        UtilitySpec("alpha-fair", 1.3, fairness=2.0),
        UtilitySpec("alpha-fair", 0.5, fairness=0.5),
    ]
    h = 1e-6
    for spec in specs:
        for _ in range(50):
            x = rng.uniform(0.1, 10.0)
            fd = (utility_value(spec, x + h) - utility_value(spec, x - h)) / (2 * h)
            assert utility_grad(spec, x) == pytest.approx(fd, abs=1e-7)


def test_nonpositive_rejected():
    with pytest.raises(ValueError):
        utility_value(LOG, 0.0)
    with pytest.raises(ValueError):
        utility_grad(LOG, -1.0)


def test_spec_validation():
    with pytest.raises(ValueError):
        UtilitySpec("quadratic", 1.0)
    with pytest.raises(ValueError):
        UtilitySpec("weighted-log", 0.0)
    with pytest.raises(ValueError):
        UtilitySpec("alpha-fair", 1.0, fairness=1.0)


def test_closed_form_stationary_point():
    # maximize log(x) - x^2/2: stationary at x = 1
    x = congestion_step_closed_form(1.0, 0.0, 0.0, 1.0, 0.01, 10.0)
    assert x == pytest.approx(1.0, abs=1e-12)
    # independent bisection on the same objective
    assert congestion_step_numeric(LOG, 0.0, 0.0, 1.0, 0.01, 10.0) == pytest.approx(
        1.0, abs=1e-9
    )


def test_clamps():
    # unconstrained root far above the box: returns the upper edge
    assert congestion_step_closed_form(100.0, -50.0, 5.0, 0.1, 0.01, 2.0) == 2.0
    # pressure large enough to push below the box: returns the lower edge
    assert congestion_step_closed_form(0.1, 1e4, 0.0, 1.0, 0.05, 2.0) == 0.05


def test_numeric_saturation():
    spec = UtilitySpec("weighted-log", 1.0)
    lo, hi, rho, x_prev = 0.1, 2.0, 1.5, 0.5
    a_big = utility_grad(spec, lo) + rho * (hi - x_prev) + 1.0
    assert congestion_step_numeric(spec, a_big, x_prev, rho, lo, hi) == lo
    assert congestion_step_numeric(spec, -50.0, x_prev, rho, lo, hi) == hi


def test_closed_form_matches_numeric_random():
    rng = np.random.default_rng(7)
    for _ in range(1000):
        w = rng.uniform(0.05, 5.0)
        rho = rng.uniform(0.05, 5.0)
        a = rng.normal(0, 10.0)
        x_prev = rng.uniform(0.0, 5.0)
        lo = rng.uniform(1e-3, 0.1)
        hi = lo + rng.uniform(0.5, 10.0)
        spec = UtilitySpec("weighted-log", w)
        closed = congestion_step_closed_form(w, a, x_prev, rho, lo, hi)
        numeric = congestion_step_numeric(spec, a, x_prev, rho, lo, hi)
        assert closed == pytest.approx(numeric, abs=1e-8)


def test_variational_inequality():
    # (U'(x) - a - rho (x - x_prev)) (y - x) <= 0 for box endpoints y
    rng = np.random.default_rng(9)
    specs = [UtilitySpec("weighted-log", 0.8), UtilitySpec("alpha-fair", 1.1, fairness=2.0)]
    for spec in specs:
        for _ in range(200):
            rho = rng.uniform(0.1, 4.0)
            a = rng.normal(0, 5.0)
            x_prev = rng.uniform(0, 3.0)
            lo, hi = 0.01, 4.0
            x = congestion_step_numeric(spec, a, x_prev, rho, lo, hi)
            slope = utility_grad(spec, x) - a - rho * (x - x_prev)
            for y in (lo, hi):
                assert slope * (y - x) <= 1e-9


def test_bad_parameters():
    with pytest.raises(ValueError):
        congestion_step_closed_form(1.0, 0.0, 0.0, 0.0, 0.1, 1.0)
    with pytest.raises(ValueError):
        congestion_step_closed_form(0.0, 0.0, 0.0, 1.0, 0.1, 1.0)
    with pytest.raises(ValueError):
        congestion_step_numeric(LOG, 0.0, 0.0, -1.0, 0.1, 1.0)


def test_closed_form_stable_for_large_pressure():
    # the rationalized branch must not lose precision when a >> rho*x_prev
    w, rho, x_prev = 2.0, 1.0, 0.0
    a = 1e12
    x = congestion_step_closed_form(w, a, x_prev, rho, 1e-15, 10.0)
    assert x == pytest.approx(w / a, rel=1e-9)
