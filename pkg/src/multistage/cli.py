"""Command line front end.

Subcommands: validate, solve, verify, dynamic-check, demo-interchange,
mdp-solve, value-iterate, sddp-solve. Exit codes follow one contract
everywhere: 0 success or positive finding, 1 negative finding, 2
inconclusive, 3 input error. Reports are deterministic: given identical
inputs and flags the JSON output is byte-identical across runs.
"""

from __future__ import annotations

import argparse
import json
import sys

from . import __version__
from .bundle import load_bundle
from .dp_solvers import (
    mdp_backward_induction,
    mdp_from_json,
    sddp_from_json,
    sddp_recursion,
    value_iteration,
)
from .exceptions import (
    ConvergenceError,
    EnumerationCapError,
    InfeasiblePolicyError,
    InputFormatError,
    MultistageError,
)
from .generate import interchange_fixture, rng_from_seed
from .policy import DEFAULT_ENUMERATION_CAP, load_policy
from .scenario_tree import validate
from .value_process import (
    backward_tables,
    brute_force_optimum,
    expected_value,
    greedy_policy_from_tables,
)
from .verification import (
    INCONCLUSIVE,
    OPTIMAL,
    check_dynamic_relations,
    interchange_gap,
    verify_policy,
)

EXIT_OK = 0
EXIT_NEGATIVE = 1
EXIT_INCONCLUSIVE = 2
EXIT_INPUT = 3

AUTO_BRUTE_LIMIT = 100_000


def _emit(report: dict, as_json: bool, lines: list[str]) -> None:
    if as_json:
        print(json.dumps(report, sort_keys=True, indent=2))
    else:
        for line in lines:
            print(line)


def _policy_json(policy) -> dict:
    from .policy import policy_to_json

    return policy_to_json(policy)


def cmd_validate(args) -> int:
    with open(args.input, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    if "tree" in data:
        from .bundle import bundle_from_json

        problems = bundle_from_json(data).validate()
    else:
        from .scenario_tree import tree_from_json

        problems = validate(tree_from_json(data))
    report = {"input": args.input, "violations": problems, "valid": not problems}
    _emit(
        report,
        args.json,
        [f"{'OK' if not problems else 'INVALID'}: {args.input}"] + problems,
    )
    return EXIT_OK if not problems else EXIT_NEGATIVE


def cmd_solve(args) -> int:
    bundle = load_bundle(args.input)
    problems = bundle.validate()
    if problems:
        print("invalid bundle:", "; ".join(problems), file=sys.stderr)
        return EXIT_INPUT
    tree, cost, cls = bundle.tree, bundle.cost, bundle.cls
    count = cls.count(tree)
    report: dict = {
        "input": args.input,
        "method": args.method,
        "policy_count": count,
        "tolerance": args.tolerance,
    }
    method = args.method
    if method == "auto":
        use_brute = count <= AUTO_BRUTE_LIMIT
        if cls.kind != "nodewise":
            method = "brute"
        elif use_brute:
            method = "both"
        else:
            method = "backward"
    if method in ("backward", "both") and cls.kind != "nodewise":
        print("backward recursion needs a nodewise class", file=sys.stderr)
        return EXIT_INPUT

    value = None
    policy = None
    if method in ("backward", "both"):
        tables = backward_tables(tree, cost, cls, cap=args.cap)
        value = tables.root_value
        policy = greedy_policy_from_tables(tree, cls, tables)
        report["backward_value"] = tables.root_value
    if method in ("brute", "both"):
        brute_value, brute_policy = brute_force_optimum(tree, cost, cls, cap=args.cap)
        report["brute_value"] = brute_value
        if value is None:
            value, policy = brute_value, brute_policy
        elif abs(brute_value - value) > args.tolerance:
            report["agreement"] = False
            _emit(report, args.json, [f"DISAGREEMENT: {value} vs {brute_value}"])
            return EXIT_NEGATIVE
        else:
            report["agreement"] = True
    report["method"] = method
    report["value"] = value
    report["policy"] = _policy_json(policy)
    _emit(report, args.json, [f"optimal value: {value!r}", f"method: {method}"])
    return EXIT_OK


def cmd_verify(args) -> int:
    bundle = load_bundle(args.input)
    problems = bundle.validate()
    if problems:
        print("invalid bundle:", "; ".join(problems), file=sys.stderr)
        return EXIT_INPUT
    if args.policy:
        policy = load_policy(args.policy)
    else:
        named = sorted(bundle.policies)
        if not named:
            print("no policy given and the bundle carries none", file=sys.stderr)
            return EXIT_INPUT
        policy = bundle.policies[named[0]]
    tree, cost, cls = bundle.tree, bundle.cost, bundle.cls
    try:
        report = verify_policy(tree, cost, cls, policy, tol=args.tolerance, cap=args.cap)
    except InfeasiblePolicyError as exc:
        print(f"infeasible policy: {exc}", file=sys.stderr)
        return EXIT_INPUT
    payload = report.to_json()
    payload["expected_value"] = expected_value(tree, cost, policy)
    payload["policy_count"] = cls.count(tree)
    payload["input"] = args.input
    _emit(
        payload,
        args.json,
        [
            f"classification: {report.classification}",
            f"verdict: {report.verdict}",
            f"expected value: {payload['expected_value']!r}",
        ],
    )
    if report.verdict == OPTIMAL:
        return EXIT_OK
    if report.verdict == INCONCLUSIVE:
        return EXIT_INCONCLUSIVE
    return EXIT_NEGATIVE


def cmd_dynamic_check(args) -> int:
    bundle = load_bundle(args.input)
    problems = bundle.validate()
    if problems:
        print("invalid bundle:", "; ".join(problems), file=sys.stderr)
        return EXIT_INPUT
    if args.policy:
        policy = load_policy(args.policy)
    else:
        named = sorted(bundle.policies)
        if not named:
            print("no policy given and the bundle carries none", file=sys.stderr)
            return EXIT_INPUT
        policy = bundle.policies[named[0]]
    try:
        report = check_dynamic_relations(
            bundle.tree, bundle.cost, bundle.cls, policy, tol=args.tolerance, cap=args.cap
        )
    except InfeasiblePolicyError as exc:
        print(f"infeasible policy: {exc}", file=sys.stderr)
        return EXIT_INPUT
    payload = report.to_json()
    payload["input"] = args.input
    payload["kind"] = bundle.cls.kind
    _emit(
        payload,
        args.json,
        [
            f"all one-step relations hold: {report.all_hold}",
            f"equality everywhere: {report.equality_everywhere}",
        ],
    )
    return EXIT_OK if report.all_hold else EXIT_NEGATIVE


def cmd_demo_interchange(args) -> int:
    fx = interchange_fixture()
    tree, stage, objective = fx["tree"], fx["stage"], fx["objective"]
    rep_nodewise = interchange_gap(tree, stage, objective, fx["nodewise"], tol=args.tolerance)
    rep_blind = interchange_gap(tree, stage, objective, fx["history_blind"], tol=args.tolerance)
    report = {
        "fixture": {
            "nodewise": rep_nodewise.to_json(),
            "history_blind": rep_blind.to_json(),
        },
        "tolerance": args.tolerance,
        "seed": args.seed,
    }
    lines = [
        f"nodewise: lhs={rep_nodewise.lhs!r} rhs={rep_nodewise.rhs!r} gap={rep_nodewise.gap!r}",
        f"history_blind: lhs={rep_blind.lhs!r} rhs={rep_blind.rhs!r} gap={rep_blind.gap!r}",
    ]
    min_gap = min(rep_nodewise.gap, rep_blind.gap)
    if args.trials:
        from .generate import random_history_blind_class, random_nodewise_class, random_tree

        rng = rng_from_seed(args.seed)
        for _ in range(args.trials):
            tree_r = random_tree(rng, horizon=1)
            if rng.uniform() < 0.5:
                cls_r = random_nodewise_class(rng, tree_r)
            else:
                cls_r = random_history_blind_class(rng, tree_r)
            coeffs = rng.uniform(-2.0, 2.0, size=3)

            def objective_r(obs_path, u, c=coeffs):
                x = obs_path[-1][0]
                return float(c[0] * u[0] ** 2 + c[1] * u[0] * x + c[2] * x)

            rep = interchange_gap(tree_r, 1, objective_r, cls_r, tol=args.tolerance)
            min_gap = min(min_gap, rep.gap)
        report["trials"] = {"count": args.trials, "min_gap": min_gap}
        lines.append(f"{args.trials} random trials, min gap {min_gap!r}")
    _emit(report, args.json, lines)
    return EXIT_OK if min_gap >= -1e-12 else EXIT_NEGATIVE


def cmd_mdp_solve(args) -> int:
    with open(args.input, "r", encoding="utf-8") as fh:
        mdp = mdp_from_json(json.load(fh))
    problems = mdp.validate()
    if problems:
        print("invalid MDP:", "; ".join(problems), file=sys.stderr)
        return EXIT_INPUT
    values, greedy = mdp_backward_induction(mdp, horizon=args.horizon)
    report = {
        "input": args.input,
        "horizon": args.horizon,
        "values": [[float(x) for x in v] for v in values],
        "greedy": [[int(a) for a in g] for g in greedy],
    }
    _emit(
        report,
        args.json,
        [f"stage 0 values: {[float(x) for x in values[0]]!r}"],
    )
    return EXIT_OK


def cmd_value_iterate(args) -> int:
    with open(args.input, "r", encoding="utf-8") as fh:
        mdp = mdp_from_json(json.load(fh))
    problems = mdp.validate()
    if problems:
        print("invalid MDP:", "; ".join(problems), file=sys.stderr)
        return EXIT_INPUT
    try:
        result = value_iteration(mdp, epsilon=args.tolerance, max_iters=args.max_iters)
    except ConvergenceError as exc:
        report = {
            "input": args.input,
            "converged": False,
            "iterations": exc.max_iters,
            "residuals": exc.residuals,
        }
        _emit(report, args.json, [f"no convergence in {exc.max_iters} iterations"])
        return EXIT_NEGATIVE
    report = {
        "input": args.input,
        "converged": True,
        "iterations": result.iterations,
        "values": [float(x) for x in result.values],
        "greedy": [int(a) for a in result.greedy],
        "residuals": result.residuals,
        "epsilon": args.tolerance,
    }
    _emit(
        report,
        args.json,
        [
            f"fixed point: {[float(x) for x in result.values]!r}",
            f"iterations: {result.iterations}",
            "residuals: " + " ".join(f"{r:.3e}" for r in result.residuals),
        ],
    )
    return EXIT_OK


def cmd_sddp_solve(args) -> int:
    with open(args.input, "r", encoding="utf-8") as fh:
        spec = sddp_from_json(json.load(fh))
    result = sddp_recursion(spec)
    report = {
        "input": args.input,
        "values": [
            {str(list(state)): value for state, value in sorted(level.items())}
            for level in result.values
        ],
        "greedy": [
            {str(list(state)): list(u) for state, u in sorted(level.items())}
            for level in result.greedy
        ],
        "root_value": result.values[0][spec.initial_state],
    }
    _emit(report, args.json, [f"root value: {report['root_value']!r}"])
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="multistage",
        description="Multistage stochastic optimization on finite scenario trees",
    )
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, policy=False, method=False, iters=False, horizon=False, demo=False):
        if not demo:
            p.add_argument("--input", required=True, help="input JSON file")
        p.add_argument("--tolerance", type=float, default=1e-9)
        p.add_argument("--cap", type=int, default=DEFAULT_ENUMERATION_CAP)
        p.add_argument("--json", action="store_true", help="machine-readable output")
        p.add_argument("--seed", type=int, default=0)
        if policy:
            p.add_argument("--policy", help="policy JSON file")
        if method:
            p.add_argument(
                "--method", choices=["backward", "brute", "auto"], default="auto"
            )
        if iters:
            p.add_argument("--max-iters", type=int, default=100_000)
        if horizon:
            p.add_argument("--horizon", type=int, required=True)

    common(sub.add_parser("validate", help="check tree or bundle invariants"))
    common(sub.add_parser("solve", help="optimal value and policy"), method=True)
    common(sub.add_parser("verify", help="martingale test of a policy"), policy=True)
    common(
        sub.add_parser("dynamic-check", help="one-step dynamic relations"), policy=True
    )
    demo = sub.add_parser("demo-interchange", help="interchangeability demo")
    common(demo, demo=True)
    demo.add_argument("--trials", type=int, default=0)
    common(sub.add_parser("mdp-solve", help="finite-horizon backward induction"), horizon=True)
    common(sub.add_parser("value-iterate", help="stationary fixed point"), iters=True)
    common(sub.add_parser("sddp-solve", help="stagewise independent recursion"))
    return parser


HANDLERS = {
    "validate": cmd_validate,
    "solve": cmd_solve,
    "verify": cmd_verify,
    "dynamic-check": cmd_dynamic_check,
    "demo-interchange": cmd_demo_interchange,
    "mdp-solve": cmd_mdp_solve,
    "value-iterate": cmd_value_iterate,
    "sddp-solve": cmd_sddp_solve,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return HANDLERS[args.command](args)
    except EnumerationCapError as exc:
        print(f"enumeration too large: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (InputFormatError, OSError, json.JSONDecodeError) as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except MultistageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
