import warnings

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from helpers import random_dataset
from odtmip.dataset import BinarizedDataset, DataError
from odtmip.fair_oct import FairnessSpec, add_fairness_constraints, disparity, fit_fair
from odtmip.flow_oct import OCTConfig, build_flow_model, evaluate_objective, fit_classifier
from odtmip.mip import Status
from odtmip.oracle import best_plan
from odtmip.tree import Branch, Predict, TreePlan

# Filtered-oracle optima (depth 2, lambda 0.01), frozen from exhaustive enumeration
# restricted to plans whose traversal disparity is within the bound.
FROZEN = {(201, "SP", 0.1): 9.88, (202, "CSP", 0.0): 8.91, (203, "EqOdds", 0.2): 8.88}


def fair_fixture(seed):
    rng = np.random.default_rng(seed)
    return random_dataset(rng, 14, 3, 2, protected=rng.integers(0, 2, 14),
                          legitimate=rng.integers(0, 2, 14))


def separating():
    """Group 0 is all label 1, group 1 all label 0; feature 0 equals the group."""
    g = np.array([0, 0, 0, 1, 1])
    X = np.column_stack([g, [0, 1, 0, 1, 0]])
    return BinarizedDataset(X, ["group", "noise"], y=1 - g, protected=g)


def test_spec_invariants():
    with pytest.raises(ValueError):
        FairnessSpec("DP", 0.1)
    with pytest.raises(ValueError):
        FairnessSpec("SP", 1.5)


def test_sp_two_groups_adds_two_rows():
    ds = fair_fixture(201)
    model, h = build_flow_model(ds, OCTConfig())
    assert add_fairness_constraints(model, h, FairnessSpec("SP", 0.1), ds) == 2


def test_csp_three_strata_adds_six_rows():
    n = 12
    ds = BinarizedDataset(np.zeros((n, 1), dtype=int), ["f"], y=np.arange(n) % 2,
                          protected=np.arange(n) % 2, legitimate=(np.arange(n) // 2) % 3)
    model, h = build_flow_model(ds, OCTConfig(depth=1))
    assert add_fairness_constraints(model, h, FairnessSpec("CSP", 0.0), ds) == 6


def test_strata_missing_a_group_are_skipped():
    ds = BinarizedDataset(np.zeros((4, 1), dtype=int), ["f"], y=np.array([0, 1, 0, 1]),
                          protected=np.array([0, 0, 0, 1]), legitimate=np.array([0, 0, 1, 1]))
    model, h = build_flow_model(ds, OCTConfig(depth=1))
    assert add_fairness_constraints(model, h, FairnessSpec("CSP", 0.0), ds) == 2


def test_single_group_adds_no_rows_and_warns():
    ds = random_dataset(np.random.default_rng(3), 8, 2, 2, protected=np.zeros(8, dtype=int))
    model, h = build_flow_model(ds, OCTConfig())
    with pytest.warns(RuntimeWarning, match="one protected group"):
        assert add_fairness_constraints(model, h, FairnessSpec("SP", 0.0), ds) == 0
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        fair = fit_fair(ds, OCTConfig(), FairnessSpec("SP", 0.0))
    assert fair.objective == fit_classifier(ds, OCTConfig()).objective


def test_empty_or_missing_protected_attribute_rejected():
    ds = random_dataset(np.random.default_rng(3), 6, 2, 2)
    model, h = build_flow_model(ds, OCTConfig())
    with pytest.raises(DataError):
        add_fairness_constraints(model, h, FairnessSpec(), ds)
    with pytest.raises(DataError, match="missing protected"):
        fit_fair(ds, OCTConfig(), FairnessSpec())
    with pytest.raises(DataError, match="legitimate"):
        fit_fair(fair_fixture(201).__class__(ds.X, ds.feature_names, y=ds.y,
                                             protected=np.arange(6) % 2),
                 OCTConfig(), FairnessSpec("CSP", 0.1))


def test_bound_one_matches_unconstrained_with_published_parameters():
    ds = fair_fixture(202)
    cfg = OCTConfig(depth=2, lam=0.01)
    fair = fit_fair(ds, cfg, FairnessSpec("SP", 1.0, positive_class=1))
    assert fair.objective == pytest.approx(fit_classifier(ds, cfg).objective, abs=1e-9)


def test_separating_fixture_forces_constant_plan():
    ds = separating()
    spec = FairnessSpec("SP", 0.0)
    r = fit_fair(ds, OCTConfig(depth=1), spec)
    assert r.status is Status.OPTIMAL
    assert r.plan.branch_count == 0 and disparity(r.plan, ds, spec) <= 1e-6
    assert r.objective == 3.0
    _, oracle = best_plan(lambda p: evaluate_objective(p, ds, OCTConfig(depth=1)), 1, 2, 2,
                          lambda p: disparity(p, ds, spec) <= 1e-9)
    assert oracle == 3.0


def test_disparity_examples():
    ds = separating()
    sp = FairnessSpec("SP", 0.0)
    assert disparity(TreePlan.constant(1, 1), ds, sp) == 0.0
    split = TreePlan.from_roles(1, {1: Branch(0), 2: Predict(1), 3: Predict(0)})
    assert disparity(split, ds, sp) == 1.0
    # identical (x, y) multisets in both groups: equalized odds gap is zero
    X = np.array([[0, 1], [1, 0], [1, 1]] * 2)
    y = np.array([0, 1, 1] * 2)
    twin = BinarizedDataset(X, ["a", "b"], y=y, protected=np.repeat([0, 1], 3))
    for plan in (split, TreePlan.from_roles(1, {1: Branch(1), 2: Predict(0), 3: Predict(1)})):
        assert disparity(plan, twin, FairnessSpec("EqOdds", 0.0)) == 0.0


@pytest.mark.parametrize("key", sorted(FROZEN))
def test_frozen_filtered_oracle(key):
    seed, ftype, bound = key
    ds = fair_fixture(seed)
    spec = FairnessSpec(ftype, bound, 1)
    r = fit_fair(ds, OCTConfig(depth=2, lam=0.01), spec)
    assert r.objective == pytest.approx(FROZEN[key], abs=1e-9)
    assert disparity(r.plan, ds, spec) <= bound + 1e-6


def test_multiclass_positive_class():
    rng = np.random.default_rng(9)
    ds = random_dataset(rng, 12, 2, 3, protected=rng.integers(0, 2, 12))
    spec = FairnessSpec("SP", 0.0, positive_class=2)
    r = fit_fair(ds, OCTConfig(depth=1), spec)
    assert disparity(r.plan, ds, spec) <= 1e-6
    with pytest.raises(ValueError):
        fit_fair(ds, OCTConfig(depth=1), FairnessSpec("SP", 0.0, positive_class=3))


@given(st.integers(0, 10_000), st.sampled_from(["SP", "CSP", "EqOdds"]))
def test_monotone_in_bound(seed, ftype):
    rng = np.random.default_rng(seed)
    g, legit = rng.integers(0, 2, 8), rng.integers(0, 2, 8)
    g[:2], legit[:2] = (0, 1), (0, 1)
    ds = random_dataset(rng, 8, 2, 2, protected=g, legitimate=legit)
    values = [fit_fair(ds, OCTConfig(depth=1), FairnessSpec(ftype, d)).objective
              for d in (0.0, 0.25, 1.0)]
    assert values[0] <= values[1] + 1e-9 <= values[2] + 2e-9
