"""Command-line entry point: ``odtmip {fit,predict,visualize,evaluate}``.

Exit codes
----------
0   optimal tree found (or command succeeded)
2   solver stopped at a time or gap limit, or the cut loop hit its round cap
3   infeasible (no tree satisfies the constraints)
64  usage error (bad or missing flags)
65  data error (unreadable CSV/JSON, schema or encoding problem, oracle guard)
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .dataset import (
    BinarizationSpec,
    BinarizedDataset,
    DataError,
    binarize,
    infer_spec,
    load_csv,
    validate,
)
from .fair_oct import FAIRNESS_TYPES, FairnessSpec, disparity, fit_fair
from .flow_oct import FitResult, OCTConfig, evaluate_objective, fit_classifier
from .mip import SolverConfig, Status
from .oracle import NoFeasiblePlan, OracleGuardError, best_plan
from .prescriptive import (
    METHODS,
    ObservationalData,
    PolicyConfig,
    PropensityError,
    ScoreMatrix,
    compute_scores,
    estimate_nuisances,
    fit_policy,
    policy_objective,
    policy_value,
    within_budgets,
)
from .robust_oct import RobustSpec, fit_robust, robust_objective, worst_case_correct
from .tree import NamingError, StructureError, TreePlan, plan_from_json, plan_to_json, to_dot

EXIT_OK, EXIT_LIMIT, EXIT_INFEASIBLE, EXIT_USAGE, EXIT_DATA = 0, 2, 3, 64, 65
TIME_LIMIT_ENV = "ODTMIP_TIME_LIMIT"
TASKS = ("classify", "fair", "robust", "policy")

STATUS_EXIT = {
    Status.OPTIMAL: EXIT_OK,
    Status.GAP_LIMIT: EXIT_LIMIT,
    Status.TIME_LIMIT: EXIT_LIMIT,
    Status.INFEASIBLE: EXIT_INFEASIBLE,
    Status.UNBOUNDED: EXIT_INFEASIBLE,
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(EXIT_USAGE)


def _add_columns(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("column roles")
    g.add_argument("--label", default="y", help="label column (default: y)")
    g.add_argument("--protected", help="protected attribute column")
    g.add_argument("--legitimate", help="legitimate factor column (CSP)")
    g.add_argument("--treatment", default="t", help="treatment column (default: t)")
    g.add_argument("--outcome", default="y", help="outcome column for policy data (default: y)")
    g.add_argument("--roles", help="file of 'column=role' lines; overrides the flags above")


def _add_task_flags(p: argparse.ArgumentParser, task_required: bool) -> None:
    p.add_argument("--task", choices=TASKS, required=task_required,
                   default=None if task_required else "classify")
    p.add_argument("--lambda", dest="lam", type=float, default=0.0,
                   help="sparsity weight in [0, 1)")
    p.add_argument("--objective", choices=("accuracy", "worst_case"), default="accuracy")
    p.add_argument("--fairness-type", choices=FAIRNESS_TYPES)
    p.add_argument("--fairness-bound", type=float, default=1.0)
    p.add_argument("--positive-class", type=int, default=1)
    p.add_argument("--epsilon", type=float, help="adversary budget per sample")
    p.add_argument("--costs", help="CSV of flip costs, one row per sample (default: all 1)")
    p.add_argument("--scores", help="CSV score matrix, one column per treatment")
    p.add_argument("--method", choices=METHODS, default="DR")
    p.add_argument("--alpha", type=float, default=1.0, help="propensity smoothing")
    p.add_argument("--budgets", help="comma-separated treatment budgets, 'none' for unlimited")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="odtmip", description="Optimal decision trees by mixed-integer optimization.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    fit = sub.add_parser("fit", help="fit a tree and write manifest, tree JSON and DOT")
    fit.add_argument("--data", required=True)
    fit.add_argument("--depth", type=int, required=True)
    _add_task_flags(fit, task_required=True)
    fit.add_argument("--time-limit", type=float,
                     help=f"solver time limit in seconds (default: ${TIME_LIMIT_ENV})")
    fit.add_argument("--out", default="odtmip_run", help="output directory")
    _add_columns(fit)

    pred = sub.add_parser("predict", help="predict labels or treatments with a saved tree")
    pred.add_argument("--tree", required=True)
    pred.add_argument("--data", required=True)
    pred.add_argument("--manifest", help="fit manifest supplying binarization and names")
    pred.add_argument("--out", help="predictions CSV (default: standard output)")
    _add_columns(pred)

    vis = sub.add_parser("visualize", help="print the tree as Graphviz DOT")
    vis.add_argument("--tree", required=True)
    vis.add_argument("--manifest", help="fit manifest supplying feature and label names")

    ev = sub.add_parser("evaluate", help="metrics of a saved tree, optionally against the oracle")
    ev.add_argument("--tree", required=True)
    ev.add_argument("--data", required=True)
    ev.add_argument("--manifest")
    _add_task_flags(ev, task_required=False)
    ev.add_argument("--oracle", action="store_true",
                    help="also enumerate all trees of the same depth and report the optimum")
    ev.add_argument("--out", help="metrics JSON (default: standard output)")
    _add_columns(ev)
    return parser


# -- helpers -----------------------------------------------------------------


def _num(x) -> Optional[float]:
    x = float(x)
    return x if math.isfinite(x) else None


def _read_json(path: str) -> dict:
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def _header(path: str) -> list[str]:
    with open(path, newline="", encoding="utf-8") as fh:
        first = next(csv.reader(fh), None)
    if first is None:
        raise DataError(f"{path}: empty CSV")
    return [h.strip() for h in first]


def _roles(args, task: str, header: Sequence[str], strict: bool) -> dict[str, str]:
    """Column roles for ``task``; with ``strict`` a missing required column is an error."""
    wanted: list[tuple[Optional[str], str, bool]] = []
    if task == "policy":
        need = strict and not getattr(args, "scores", None)
        wanted += [(args.treatment, "treatment", need), (args.outcome, "outcome", need)]
    else:
        wanted.append((args.label, "label", strict))
        wanted.append((args.protected, "protected", strict and task == "fair"))
        wanted.append((args.legitimate, "legitimate",
                       strict and getattr(args, "fairness_type", None) == "CSP"))
    if getattr(args, "roles", None):
        declared = _read_roles(args.roles)
        taken = set(declared.values())
        wanted = [(c, r, q) for c, r, q in wanted if r not in taken]
        wanted += [(c, r, strict) for c, r in declared.items()]
    roles = {}
    for col, role, required in wanted:
        if col is None:
            if required:
                raise UsageError(f"--{role} column is required for task {task}")
            continue
        if col in header or required:
            roles[col] = role
    return roles


def _read_roles(path: str) -> dict[str, str]:
    """Parse ``column=role`` lines; blank lines and ``#`` comments are skipped."""
    out = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            col, sep, role = (part.strip() for part in line.partition("="))
            if not sep or not col or not role:
                raise UsageError(f"{path}:{lineno}: expected 'column=role'")
            out[col] = role
    return out


def _load(args, task: str, manifest: Optional[dict], strict: bool):
    if manifest is not None:
        header = _header(args.data)
        roles = {c: r for c, r in manifest["roles"].items() if c in header}
        spec = BinarizationSpec.from_json(manifest["binarization"])
    else:
        roles = _roles(args, task, _header(args.data), strict)
        spec = None
    table = load_csv(args.data, roles)
    return table, binarize(table, spec), roles


def _read_matrix(path: str, n: int, what: str) -> np.ndarray:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = [r for r in csv.reader(fh) if r]
    try:
        [float(c) for c in rows[0]]
    except (ValueError, IndexError):
        rows = rows[1:]
    try:
        mat = np.array([[float(c) for c in r] for r in rows], dtype=float)
    except ValueError as exc:
        raise DataError(f"{what} CSV {path}: {exc}") from exc
    if mat.ndim != 2 or mat.shape[0] != n:
        raise DataError(f"{what} CSV {path}: expected {n} rows of numbers")
    return mat


def _budgets(text: Optional[str]) -> Optional[tuple[Optional[int], ...]]:
    if text is None:
        return None
    out = []
    for part in text.split(","):
        part = part.strip().lower()
        if part in ("none", "inf", ""):
            out.append(None)
        else:
            try:
                out.append(int(part))
            except ValueError as exc:
                raise UsageError(f"bad budget {part!r}") from exc
    return tuple(out)


def _solver(args) -> SolverConfig:
    limit = args.time_limit
    if limit is None and os.environ.get(TIME_LIMIT_ENV):
        try:
            limit = float(os.environ[TIME_LIMIT_ENV])
        except ValueError as exc:
            raise UsageError(f"${TIME_LIMIT_ENV} must be a number of seconds") from exc
    return SolverConfig(time_limit=limit)


def _scores(args, ds: BinarizedDataset) -> ScoreMatrix:
    if args.scores:
        return ScoreMatrix(_read_matrix(args.scores, ds.n, "scores"), "given")
    data = ObservationalData.from_dataset(ds)
    return compute_scores(data, estimate_nuisances(data, args.alpha), args.method)


def _costs(args, ds: BinarizedDataset) -> RobustSpec:
    if args.epsilon is None:
        raise UsageError("--epsilon is required for task robust")
    costs = _read_matrix(args.costs, ds.n, "costs") if args.costs else np.ones(ds.X.shape)
    if costs.shape != ds.X.shape:
        raise DataError(f"costs must be {ds.X.shape[0]} x {ds.X.shape[1]}, got {costs.shape}")
    return RobustSpec(costs, args.epsilon)


def _fairness(args) -> FairnessSpec:
    if args.fairness_type is None:
        raise UsageError("--fairness-type is required for task fair")
    return FairnessSpec(args.fairness_type, args.fairness_bound, args.positive_class,
                        args.protected, args.legitimate)


def _output_names(ds: BinarizedDataset, task: str) -> Optional[list[str]]:
    return ds.treatment_names if task == "policy" else ds.label_names


def _format(codes, names: Optional[Sequence[str]]) -> list[str]:
    if names is None:
        return [str(int(c)) for c in codes]
    return [names[int(c)] if 0 <= int(c) < len(names) else str(int(c)) for c in codes]


# -- commands ------------------------------------------------------------------


def cmd_fit(args) -> int:
    task = args.task
    header = _header(args.data)
    roles = _roles(args, task, header, strict=True)
    table = load_csv(args.data, roles)
    binarization = infer_spec(table)
    ds = binarize(table, binarization)
    solver = _solver(args)
    config_echo = {"depth": args.depth, "lambda": args.lam}

    if task == "policy":
        budgets = _budgets(args.budgets)
        scores = _scores(args, ds)
        if budgets is not None and len(budgets) != scores.n_treatments:
            raise UsageError(f"--budgets needs {scores.n_treatments} entries")
        config = PolicyConfig(args.depth, args.lam, budgets, solver)
        config_echo.update(budgets=None if budgets is None else list(budgets),
                           method=scores.method, alpha=args.alpha, scores=args.scores)
        result = fit_policy(ds.X, scores, config)
    else:
        objective = args.objective
        config = OCTConfig(args.depth, args.lam, objective, solver)
        config_echo["objective"] = objective
        if task == "classify":
            diags = validate(ds, "classification")
            if diags:
                raise DataError("; ".join(diags))
            result = fit_classifier(ds, config)
        elif task == "fair":
            spec = _fairness(args)
            config_echo.update(fairness_type=spec.fairness_type, fairness_bound=spec.bound,
                               positive_class=spec.positive_class)
            result = fit_fair(ds, config, spec)
        else:
            spec = _costs(args, ds)
            config_echo.update(epsilon=spec.epsilon, costs=args.costs)
            result = fit_robust(ds, config, spec)
    config_echo["time_limit"] = solver.time_limit

    code = _exit_code(result)
    names = _output_names(ds, task)
    manifest = {
        "task": task,
        "data": args.data,
        "roles": roles,
        "config": config_echo,
        "binarization": binarization.to_json(),
        "feature_names": ds.feature_names,
        "output_names": names,
        "result": _summary(result),
        "exit_code": code,
        "tree": None if result.plan is None else plan_to_json(result.plan),
        "training_predictions": None if result.plan is None
        else _format(result.plan.predict(ds.X), names),
    }
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    if result.plan is not None:
        (out / "tree.json").write_text(json.dumps(plan_to_json(result.plan), indent=2) + "\n",
                                       encoding="utf-8")
        (out / "tree.dot").write_text(to_dot(result.plan), encoding="utf-8")
    print(f"status={result.status.value} objective={result.objective:.6g} out={out}")
    return code


def _exit_code(result: FitResult) -> int:
    if result.extra.get("capped"):
        return EXIT_LIMIT
    return STATUS_EXIT[result.status]


def _summary(result: FitResult) -> dict:
    s = result.solve
    extra = {k: v for k, v in result.extra.items() if isinstance(v, (int, float, bool, str))}
    return {
        "status": s.status.value,
        "objective": _num(s.objective),
        "best_bound": _num(s.best_bound),
        "gap": _num(s.gap),
        "wall_time": s.wall_time,
        "nodes": s.nodes_explored,
        **extra,
    }


def _load_tree(path: str) -> TreePlan:
    return plan_from_json(_read_json(path))


def cmd_predict(args) -> int:
    plan = _load_tree(args.tree)
    manifest = _read_json(args.manifest) if args.manifest else None
    task = manifest["task"] if manifest else "classify"
    _, ds, _ = _load(args, task, manifest, strict=False)
    if plan.used_features() and max(plan.used_features()) >= ds.n_features:
        raise StructureError(f"tree uses feature {max(plan.used_features())} but data has "
                             f"{ds.n_features} features")
    names = manifest.get("output_names") if manifest else None
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["prediction"])
    for value in _format(plan.predict(ds.X), names):
        writer.writerow([value])
    _emit(buf.getvalue(), args.out)
    return EXIT_OK


def cmd_visualize(args) -> int:
    plan = _load_tree(args.tree)
    features = labels = None
    if args.manifest:
        manifest = _read_json(args.manifest)
        features, labels = manifest.get("feature_names"), manifest.get("output_names")
    sys.stdout.write(to_dot(plan, features, labels))
    return EXIT_OK


def cmd_evaluate(args) -> int:
    plan = _load_tree(args.tree)
    manifest = _read_json(args.manifest) if args.manifest else None
    task = args.task
    _, ds, _ = _load(args, task, manifest, strict=True)
    if plan.used_features() and max(plan.used_features()) >= ds.n_features:
        raise StructureError(f"tree uses feature {max(plan.used_features())} but data has "
                             f"{ds.n_features} features")
    metrics: dict = {"task": task, "depth": plan.depth, "branch_nodes": plan.branch_count}
    lam = args.lam

    if task == "policy":
        scores = _scores(args, ds)
        budgets = _budgets(args.budgets)
        metrics["policy_value"] = policy_value(plan, ds.X, scores)
        metrics["within_budgets"] = within_budgets(plan, ds.X, budgets)
        value = policy_objective(plan, ds.X, scores, lam)
        K = scores.n_treatments

        def evaluator(p):
            return policy_objective(p, ds.X, scores, lam)

        def feasible(p):
            return within_budgets(p, ds.X, budgets)
    else:
        if ds.y is None:
            raise DataError(f"label column {args.label!r} not found")
        config = OCTConfig(plan.depth, lam, args.objective)
        metrics["accuracy"] = float(np.mean(plan.predict(ds.X) == ds.y))
        value = evaluate_objective(plan, ds, config)
        K = max(ds.n_classes, max(plan.used_labels(), default=0) + 1)

        def evaluator(p):
            return evaluate_objective(p, ds, config)

        feasible = None
        if args.fairness_type is not None:
            if ds.protected is None:
                raise DataError("disparity needs a --protected column")
            spec = _fairness(args)
            metrics["disparity"] = disparity(plan, ds, spec)

            if task == "fair":
                def feasible(p):
                    return disparity(p, ds, spec) <= spec.bound + 1e-9
        if args.epsilon is not None:
            rspec = _costs(args, ds)
            metrics["worst_case_correct"] = worst_case_correct(plan, ds, rspec)
            if task == "robust":
                value = robust_objective(plan, ds, rspec, config)

                def evaluator(p):
                    return robust_objective(p, ds, rspec, config)
    metrics["objective"] = value

    if args.oracle:
        best, best_value = best_plan(evaluator, plan.depth, ds.n_features, K, feasible)
        metrics["oracle_value"] = best_value
        metrics["oracle_tree"] = plan_to_json(best)
        metrics["matches"] = bool(abs(best_value - value) <= 1e-9 * max(1.0, abs(best_value)))
    _emit(json.dumps(metrics, indent=2) + "\n", args.out)
    return EXIT_OK


def _emit(text: str, path: Optional[str]) -> None:
    if path:
        Path(path).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


COMMANDS = {"fit": cmd_fit, "predict": cmd_predict, "visualize": cmd_visualize,
            "evaluate": cmd_evaluate}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        sys.stderr.write(f"odtmip: error: {exc}\n")
        return EXIT_USAGE
    except (DataError, StructureError, NamingError, OracleGuardError, NoFeasiblePlan,
            PropensityError, json.JSONDecodeError, OSError, KeyError) as exc:
        sys.stderr.write(f"odtmip: data error: {exc}\n")
        return EXIT_DATA
    except ValueError as exc:
        sys.stderr.write(f"odtmip: error: {exc}\n")
        return EXIT_USAGE


if __name__ == "__main__":
    raise SystemExit(main())
