import math

import numpy as np
import pytest

from odtmip.mip import (
    FrozenModelError,
    InvalidModelError,
    Model,
    SolverConfig,
    Status,
    VarKind,
    solve_lp,
    validate_model,
)


def test_minimal_model_is_valid():
    m = Model()
    x = m.add_var(0, 1)
    m.set_objective([(x, 1.0)])
    assert validate_model(m) == []


def test_unknown_variable_reported():
    m = Model()
    for _ in range(3):
        m.add_var()
    m.add_constraint([(7, 1.0)], "<=", 1.0, "bad_row")
    diags = validate_model(m)
    assert len(diags) == 1
    assert "unknown variable" in diags[0] and "bad_row" in diags[0]


def test_empty_bound_interval_reported():
    m = Model()
    m.add_var(2, 1, name="x")
    diags = validate_model(m)
    assert len(diags) == 1 and "empty bound interval" in diags[0] and "x" in diags[0]


def test_binary_bounds_and_nonfinite_coefficients():
    m = Model()
    m.add_var(0, 2, VarKind.BINARY, name="b")
    m.add_var()
    m.add_constraint([(1, math.inf)], "<=", 1.0)
    diags = validate_model(m)
    assert any("binary bounds" in d for d in diags)
    assert any("non-finite coefficient" in d for d in diags)


def test_duplicate_terms_are_merged_and_zeros_dropped():
    m = Model()
    x, y = m.add_var(), m.add_var()
    m.add_constraint([(x, 1.0), (y, 2.0), (x, 2.0), (y, -2.0)], "<=", 3.0)
    assert m.constraints[0].terms == ((x, 3.0),)


def test_frozen_model_rejects_mutation_but_copies_are_mutable():
    m = Model()
    x = m.add_var()
    m.set_objective([(x, 1.0)])
    solve_lp(m)
    assert m.frozen
    with pytest.raises(FrozenModelError):
        m.add_var()
    other = m.copy()
    other.add_var()
    assert other.n_vars == 2 and m.n_vars == 1


def test_invalid_model_is_rejected_by_solver():
    m = Model()
    m.add_var(3, 1)
    with pytest.raises(InvalidModelError) as err:
        solve_lp(m)
    assert err.value.diagnostics


def test_is_feasible_checks_bounds_rows_and_integrality():
    m = Model()
    a, b = m.add_binary(), m.add_binary()
    m.add_constraint([(a, 1.0), (b, 1.0)], "<=", 1.0)
    assert m.is_feasible(np.array([1.0, 0.0]), int_tol=1e-6)
    assert not m.is_feasible(np.array([1.0, 1.0]))
    assert not m.is_feasible(np.array([0.5, 0.0]), int_tol=1e-6)
    assert m.is_feasible(np.array([0.5, 0.0]))


@pytest.mark.parametrize("field,value", [("gap_tol", 0.0), ("int_tol", -1.0), ("feas_tol", 0.0),
                                         ("time_limit", 0.0), ("node_selection", "random"),
                                         ("branch_rule", "strong"), ("objective_step", -1.0)])
def test_solver_config_rejects_bad_values(field, value):
    with pytest.raises(ValueError):
        SolverConfig(**{field: value})


def test_solve_result_gap_and_value_access():
    m = Model()
    x = m.add_var(0, 3)
    m.set_objective([(x, 1.0)])
    r = solve_lp(m)
    assert r.status is Status.OPTIMAL and r.value(x) == 3.0 and r.gap == 0.0
