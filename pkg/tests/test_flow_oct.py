import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from helpers import random_dataset, xor_dataset
from odtmip.dataset import BinarizedDataset, DataError
from odtmip.flow_oct import (
    ExtractionError,
    OCTConfig,
    build_flow_model,
    evaluate_objective,
    extract_plan,
    fit_classifier,
    greedy_plan,
    classification_gains,
    objective_step,
)
from odtmip.mip import SolveResult, Status, VarKind
from odtmip.oracle import best_plan
from odtmip.tree import PRUNED, Branch, Predict, TreePlan

# Optima frozen from exhaustive enumeration (odtmip.oracle.best_plan over every
# depth-2 plan, evaluated by traversal).
FROZEN = {
    (101, 0.0, "accuracy"): 9.0,
    (101, 0.01, "accuracy"): 8.91,
    (101, 0.0, "worst_case"): 2 / 3,
    (101, 0.01, "worst_case"): 0.64,
    (102, 0.0, "accuracy"): 12.0,
    (102, 0.01, "accuracy"): 11.86,
    (102, 0.0, "worst_case"): 0.6,
    (102, 0.01, "worst_case"): 0.574,
    (103, 0.0, "accuracy"): 17.0,
    (103, 0.01, "accuracy"): 16.81,
    (103, 0.0, "worst_case"): 11 / 13,
    (103, 0.01, "worst_case"): 0.99 * 11 / 13 - 0.03,
}
SHAPES = {101: (12, 3, 2), 102: (16, 4, 3), 103: (20, 3, 2)}


def fixture(seed, **extra):
    n, F, K = SHAPES[seed]
    return random_dataset(np.random.default_rng(seed), n, F, K, **extra)


def test_variable_and_row_counts_match_closed_forms():
    ds = BinarizedDataset(np.array([[0]]), ["f"], y=np.array([0]), label_names=["0", "1"])
    model, h = build_flow_model(ds, OCTConfig(depth=1))
    assert len(model.binary_ids()) == 1 + 3 + 6
    n, F, K, B, N = 1, 1, 2, 1, 3
    assert model.n_rows == (B + 2 + N) + n * N + n * (2 * B + K * N) + n


def test_row_counts_for_larger_instance():
    ds = fixture(102)
    n, F, K = SHAPES[102]
    B, L = 3, 4
    model, _ = build_flow_model(ds, OCTConfig(depth=2))
    tags = [r.tag for r in model.constraints]
    assert sum(t.startswith("struct_") or t.startswith("assign_") for t in tags) == B + L + B + L
    assert sum(t.startswith("flow_") for t in tags) == n * (B + L)
    assert sum(t.startswith("cap_") for t in tags) == n * (2 * B + K * (B + L))
    assert sum(t.startswith("source_") for t in tags) == n


def test_lambda_changes_objective_only():
    ds = fixture(101)
    m0, _ = build_flow_model(ds, OCTConfig(lam=0.0))
    m5, _ = build_flow_model(ds, OCTConfig(lam=0.5))
    assert m0.constraints == m5.constraints
    assert m0.objective != m5.objective


def test_worst_case_adds_gamma_and_k_rows():
    ds = fixture(102)
    base, _ = build_flow_model(ds, OCTConfig())
    wc, h = build_flow_model(ds, OCTConfig(objective="worst_case"))
    assert wc.n_rows == base.n_rows + 3 and wc.n_vars == base.n_vars + 1
    assert wc.variables[h.gamma].kind is VarKind.CONTINUOUS


def test_invalid_dataset_rejected():
    ds = BinarizedDataset(np.array([[0], [1]]), ["f"], y=np.array([0, 0]))
    with pytest.raises(DataError, match="at least 2"):
        build_flow_model(ds, OCTConfig())


@pytest.mark.parametrize("bad", [dict(depth=0), dict(lam=1.0), dict(lam=-0.1),
                                 dict(objective="balanced")])
def test_config_invariants(bad):
    with pytest.raises(ValueError):
        OCTConfig(**bad)


def test_xor_depth_two_and_one():
    r2 = fit_classifier(xor_dataset(), OCTConfig(depth=2))
    r1 = fit_classifier(xor_dataset(), OCTConfig(depth=1))
    assert r2.status is Status.OPTIMAL and r2.objective == 4.0
    assert r1.objective == 2.0
    assert r2.predict(xor_dataset().X).tolist() == [0, 1, 1, 0]


def test_heavy_penalty_gives_majority_root():
    ds = fixture(103)
    r = fit_classifier(ds, OCTConfig(depth=1, lam=0.99))
    assert r.plan.branch_count == 0
    majority = np.bincount(ds.y).argmax()
    assert r.plan.role(1) == Predict(int(majority))


@pytest.mark.parametrize("key", sorted(FROZEN))
def test_frozen_oracle_optima(key):
    seed, lam, mode = key
    ds = fixture(seed)
    cfg = OCTConfig(depth=2, lam=lam, objective=mode)
    r = fit_classifier(ds, cfg)
    assert r.status is Status.OPTIMAL
    assert r.objective == pytest.approx(FROZEN[key], abs=1e-9)
    assert evaluate_objective(r.plan, ds, cfg) == pytest.approx(r.objective, abs=1e-6)


def test_weighted_objective_frozen():
    ds = fixture(101, weights=(np.arange(12) % 3) + 1)
    r0 = fit_classifier(ds, OCTConfig(objective="weighted"))
    r1 = fit_classifier(ds, OCTConfig(lam=0.01, objective="weighted"))
    assert r0.objective == 19.0 and r1.objective == pytest.approx(18.81, abs=1e-9)
    # accuracy mode ignores the weights
    assert fit_classifier(ds, OCTConfig()).objective == 9.0


def test_correct_count_equals_objective_at_lambda_zero():
    ds = fixture(102)
    r = fit_classifier(ds, OCTConfig())
    assert int(np.sum(r.predict(ds.X) == ds.y)) == r.objective


def test_flow_paths_are_integral():
    ds = fixture(101)
    r = fit_classifier(ds, OCTConfig())
    for vid in r.handles.z.values():
        v = r.solve.values[vid]
        assert abs(v - round(v)) <= 1e-6
    for i in range(ds.n):
        assert sum(r.solve.values[vid] for (j, *_), vid in r.handles.zs.items() if j == i) == 1.0


def test_evaluate_objective_examples():
    xor = xor_dataset()
    plan = TreePlan.from_roles(2, {1: Branch(0), 2: Branch(1), 3: Branch(1), 4: Predict(0),
                                   5: Predict(1), 6: Predict(1), 7: Predict(0)})
    assert evaluate_objective(plan, xor, OCTConfig()) == 4.0
    three_one = BinarizedDataset(np.zeros((4, 1), dtype=int), ["f"], y=np.array([1, 1, 1, 0]))
    root = TreePlan.constant(1, 1)
    assert evaluate_objective(root, three_one, OCTConfig()) == 3.0
    assert evaluate_objective(root, three_one, OCTConfig(objective="worst_case")) == 0.0


def _result(values):
    return SolveResult(Status.OPTIMAL, 0.0, 0.0, np.asarray(values, dtype=float))


def test_extract_plan_examples():
    ds = BinarizedDataset(np.array([[0], [1]]), ["f"], y=np.array([0, 1]))
    model, h = build_flow_model(ds, OCTConfig(depth=1))
    x = np.zeros(model.n_vars)
    x[h.b[1, 0]] = 1
    for node, k in ((2, 0), (3, 1)):
        x[h.p[node]] = x[h.w[node, k]] = 1
    assert extract_plan(h, _result(x)) == TreePlan.from_roles(
        1, {1: Branch(0), 2: Predict(0), 3: Predict(1)})
    y = np.zeros(model.n_vars)
    y[h.p[1]] = y[h.w[1, 1]] = 1
    plan = extract_plan(h, _result(y))
    assert plan.role(1) == Predict(1) and plan.role(2) is PRUNED
    z = x.copy()
    z[h.b[1, 0]] = 0.5
    with pytest.raises(ExtractionError, match="fractional"):
        extract_plan(h, _result(z))
    w = y.copy()
    w[h.w[1, 0]] = 1
    with pytest.raises(ExtractionError, match="inconsistent"):
        extract_plan(h, _result(w))


def test_objective_step():
    assert objective_step([0.99, 0.99, 0.01]) == pytest.approx(0.01)
    assert objective_step([1.0, 2.0, 3.0]) == 1.0
    assert objective_step([np.pi]) is None
    assert objective_step([0.0]) is None


def test_greedy_plan_is_valid():
    ds = fixture(102)
    plan = greedy_plan(ds.X, classification_gains(ds, "accuracy"), 2)
    assert plan.problems() == []


@given(st.integers(0, 10_000))
def test_oracle_equivalence_small_random(seed):
    rng = np.random.default_rng(seed)
    n, F, K = int(rng.integers(4, 12)), int(rng.integers(1, 4)), int(rng.integers(2, 4))
    ds = random_dataset(rng, n, F, K)
    cfg = OCTConfig(depth=2, lam=float(rng.choice([0.0, 0.01])))
    _, expected = best_plan(lambda p: evaluate_objective(p, ds, cfg), 2, F, K)
    r = fit_classifier(ds, cfg)
    assert r.objective == pytest.approx(expected, abs=1e-9)


@given(st.integers(0, 10_000))
def test_depth_monotone_and_duplicate_features_invariant(seed):
    rng = np.random.default_rng(seed)
    ds = random_dataset(rng, 10, 2, 2)
    d1 = fit_classifier(ds, OCTConfig(depth=1)).objective
    d2 = fit_classifier(ds, OCTConfig(depth=2)).objective
    assert d2 >= d1
    dup = BinarizedDataset(np.hstack([ds.X, ds.X]), ds.feature_names * 2, y=ds.y)
    assert fit_classifier(dup, OCTConfig(depth=1)).objective == d1
