import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import random_dataset, xor_dataset
from odtmip.dataset import DataError
from odtmip.flow_oct import OCTConfig, fit_classifier
from odtmip.mip import Status
from odtmip.oracle import best_plan
from odtmip.robust_oct import (
    RobustCut,
    RobustSpec,
    fit_robust,
    min_misclassification_cost,
    misclassification_witnesses,
    robust_correct,
    robust_objective,
    seed_cuts,
    worst_case_correct,
)
from odtmip.tree import Branch, Predict, TreePlan

STUMP = TreePlan.from_roles(1, {1: Branch(0), 2: Predict(0), 3: Predict(1)})

# Optima frozen from enumerating every plan under the exact adversary.
FROZEN = {(301, 1.0, 2, 0.0): 6.0, (302, 1.5, 2, 0.01): 6.91, (303, 2.0, 1, 0.0): 5.0}


def priced(seed):
    rng = np.random.default_rng(seed)
    ds = random_dataset(rng, 10, 3, 2)
    return ds, rng.integers(1, 4, (10, 3)).astype(float)


def test_spec_invariants():
    with pytest.raises(ValueError):
        RobustSpec(np.array([[-1.0]]), 1.0)
    with pytest.raises(ValueError):
        RobustSpec(np.array([[np.inf]]), 1.0)
    with pytest.raises(ValueError):
        RobustSpec(np.ones(3), 1.0)
    with pytest.raises(ValueError):
        RobustSpec(np.ones((1, 1)), -0.5)


def test_costs_shape_must_match():
    with pytest.raises(DataError, match="costs shape"):
        fit_robust(xor_dataset(), OCTConfig(), RobustSpec.uniform(3, 2, 1.0))


def test_worst_case_mode_rejected():
    with pytest.raises(ValueError):
        fit_robust(xor_dataset(), OCTConfig(objective="worst_case"), RobustSpec.uniform(4, 2, 1.0))


def test_already_misclassified_costs_nothing():
    cost, cut = min_misclassification_cost(STUMP, [1], 0, [5.0])
    assert cost == 0.0 and cut.node == 3 and cut.path == ((1, 0),) and cut.label == 1


def test_constant_correct_plan_has_no_witness():
    assert min_misclassification_cost(TreePlan.constant(2, 1), [0, 1], 1, [1.0, 1.0]) == (np.inf, None)


def test_depth_one_flip_cost():
    cost, cut = min_misclassification_cost(STUMP, [0], 0, [3.0])
    assert cost == 3.0 and cut.node == 3


def test_contradictory_path_is_unreachable():
    plan = TreePlan.from_roles(2, {1: Branch(0), 2: Branch(0), 3: Predict(0),
                                   4: Predict(0), 5: Predict(1)})
    # node 5 needs f0 = 0 at the root and f0 = 1 below it
    assert misclassification_witnesses(plan, [0], 0, [1.0]) == []


def test_witness_ties_prefer_lower_node():
    plan = TreePlan.from_roles(2, {1: Branch(0), 2: Branch(1), 3: Branch(1), 4: Predict(0),
                                   5: Predict(1), 6: Predict(1), 7: Predict(0)})
    found = misclassification_witnesses(plan, [0, 0], 0, [1.0, 1.0])
    assert [(c, w.node) for c, w in found] == [(1.0, 5), (1.0, 6)]


def test_constant_plan_counts_class_regardless_of_budget():
    ds, costs = priced(301)
    for eps in (0.0, 2.0, 100.0):
        spec = RobustSpec(costs, eps)
        assert worst_case_correct(TreePlan.constant(2, 1), ds, spec) == float(np.sum(ds.y == 1))


def test_zero_budget_is_nominal_count():
    ds, costs = priced(302)
    spec = RobustSpec(costs, 0.0)
    plan = fit_classifier(ds, OCTConfig()).plan
    assert worst_case_correct(plan, ds, spec) == float(np.sum(plan.predict(ds.X) == ds.y))


def test_seed_cuts_cover_root_and_children():
    ds = xor_dataset()
    cuts = seed_cuts(ds, RobustSpec.uniform(4, 2, 0.0), 2)
    assert RobustCut(0, (), 1, 1) in cuts
    # zero budget: only the child the sample already routes to
    assert RobustCut(0, ((1, 0),), 2, 1) in cuts and RobustCut(0, ((1, 0),), 3, 1) not in cuts


def test_xor_matches_oracle():
    ds, spec, cfg = xor_dataset(), RobustSpec.uniform(4, 2, 1.0), OCTConfig(depth=2)
    r = fit_robust(ds, cfg, spec)
    _, expected = best_plan(lambda p: robust_objective(p, ds, spec, cfg), 2, 2, 2)
    assert r.status is Status.OPTIMAL and r.objective == expected == 2.0
    assert worst_case_correct(r.plan, ds, spec) == r.objective
    assert not r.extra["capped"]


@pytest.mark.parametrize("key", sorted(FROZEN))
def test_frozen_oracle_optima(key):
    seed, eps, depth, lam = key
    ds, costs = priced(seed)
    spec, cfg = RobustSpec(costs, eps), OCTConfig(depth=depth, lam=lam)
    r = fit_robust(ds, cfg, spec)
    assert r.objective == pytest.approx(FROZEN[key], abs=1e-9)
    assert robust_objective(r.plan, ds, spec, cfg) == pytest.approx(r.objective, abs=1e-9)


def test_unlimited_budget_gives_majority_constant():
    ds, costs = priced(303)
    spec = RobustSpec(costs, float(costs.sum(axis=1).max()))
    r = fit_robust(ds, OCTConfig(depth=2, lam=0.01), spec)
    majority = np.bincount(ds.y).max()
    assert r.objective == pytest.approx(0.99 * majority, abs=1e-9)
    assert r.plan.branch_count == 0


def test_terminal_t_matches_evaluator():
    ds, costs = priced(301)
    spec = RobustSpec(costs, 1.0)
    r = fit_robust(ds, OCTConfig(), spec)
    names = [r.model.var_name(v) for v in range(r.model.n_vars)]
    t = r.solve.values[[names.index(f"t_i{i}") for i in range(ds.n)]]
    assert np.array_equal(np.round(t).astype(bool), robust_correct(r.plan, ds, spec))


def test_round_cap_reports_capped():
    ds, costs = priced(301)
    with pytest.warns(RuntimeWarning, match="rounds"):
        r = fit_robust(ds, OCTConfig(), RobustSpec(costs, 1.0), max_rounds=1, seed=False)
    assert r.extra["capped"] and r.extra["rounds"] == 1


@settings(max_examples=15)
@given(st.integers(0, 10_000))
def test_zero_budget_equals_nominal_optimum(seed):
    rng = np.random.default_rng(seed)
    ds = random_dataset(rng, 8, 2, 2)
    cfg = OCTConfig(depth=2, lam=float(rng.choice([0.0, 0.01])))
    spec = RobustSpec(rng.uniform(0.5, 2.0, (8, 2)), 0.0)
    assert fit_robust(ds, cfg, spec).objective == pytest.approx(
        fit_classifier(ds, cfg).objective, abs=1e-9)


@settings(max_examples=15)
@given(st.integers(0, 10_000))
def test_oracle_and_monotonicity(seed):
    rng = np.random.default_rng(seed)
    ds = random_dataset(rng, 7, 2, 2)
    costs = rng.integers(1, 3, (7, 2)).astype(float)
    cfg = OCTConfig(depth=2)
    values = []
    for eps in (0.0, 1.0, 2.0):
        spec = RobustSpec(costs, eps)
        r = fit_robust(ds, cfg, spec)
        _, expected = best_plan(lambda p: robust_objective(p, ds, spec, cfg), 2, 2, 2)
        assert r.objective == expected
        values.append(r.objective)
    assert values[0] >= values[1] >= values[2]
    # dearer flips never hurt the learner
    assert fit_robust(ds, cfg, RobustSpec(costs * 2, 2.0)).objective >= values[2]
