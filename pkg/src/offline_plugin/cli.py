"""Command-line entry points.

Exit status is 0 on success and 2 when any invariant or lemma check fails, so the
commands can gate CI jobs.
"""

from __future__ import annotations

import argparse
import json
import sys
from importlib import resources
from pathlib import Path

import numpy as np

from . import diagnostics as dg
from .data import DatasetError, count_statistics, read_dataset, sample_dataset, write_counts_csv, write_dataset
from .experiments.config import ConfigError, load_config
from .experiments.sweep import lower_bound_experiment, run_sweep
from .hard_instances import bounded_reward_random_instance, lower_bound_c0, opo_hard_instance, ope_hard_instance
from .linear import LINEAR_SCHEMA, LinearAnchorMDP, check_linear_invariants, generate_linear_instance
from .mdp import (
    MDPError,
    Policy,
    TabularMDP,
    check_mdp_arrays,
    dual_policy_value,
    enumerate_policy_value,
    evaluate_policy,
    occupancy_measures,
    optimal_policy,
    random_mdp,
    verify_bounded_total_reward,
)
from .plugin import EmpiricalMDP, build_empirical_mdp, ope_plugin, opo_plan, suboptimality_gap

EXIT_OK, EXIT_USAGE, EXIT_FAILED = 0, 1, 2
GENERATE_KINDS = ("random", "random_uniform_reward", "random_terminal_reward", "ope_two_state",
                  "opo_four_state", "linear")


def _read_json(path) -> dict:
    with open(path) as fh:
        return json.load(fh)


def _write_json(obj, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _emit(obj, fmt: str) -> None:
    if fmt == "json" or not isinstance(obj, dict):
        print(json.dumps(obj, indent=2, sort_keys=True, default=float))
    else:
        for k, v in obj.items():
            print(f"{k},{v}")


def load_mdp(path) -> TabularMDP:
    d = _read_json(path)
    if d.get("schema") == LINEAR_SCHEMA:
        return LinearAnchorMDP.from_json(d).mdp
    return TabularMDP.from_json(d)


def _seed(args) -> int:
    return args.seed if args.seed is not None else 0


def load_policy(spec: str, mdp: TabularMDP, seed: int = 0) -> Policy:
    if spec == "uniform":
        return Policy.uniform(mdp.H, mdp.S, mdp.A)
    if spec == "optimal":
        return optimal_policy(mdp)[0]
    if spec == "random":
        return Policy.random(mdp.H, mdp.S, mdp.A, seed)
    return Policy.from_json(_read_json(spec))


# ---------------------------------------------------------------------------
# subcommands


def cmd_generate(args) -> int:
    kind = args.kind
    if kind == "random":
        obj = random_mdp(args.S, args.A, args.H, _seed(args)).to_json()
    elif kind in ("random_uniform_reward", "random_terminal_reward"):
        style = "uniform" if kind == "random_uniform_reward" else "terminal"
        obj = bounded_reward_random_instance(args.S, args.A, args.H, _seed(args), style).to_json()
    elif kind == "ope_two_state":
        obj = ope_hard_instance(args.H, args.p if args.p is not None else 1 - 1 / args.H).to_json()
    elif kind == "opo_four_state":
        p = args.p if args.p is not None else 1 - 1 / args.H
        n = args.n_dm or 1000
        obj = opo_hard_instance(args.H, p, lower_bound_c0(1.0, args.H), n).to_json()
    else:
        d = args.d or args.S * args.A
        obj = generate_linear_instance(args.S, args.A, args.H, d, _seed(args)).to_json()
    out = Path(args.out_dir) / (args.name or "instance.json")
    _write_json(obj, out)
    print(out)
    return EXIT_OK


def cmd_sample(args) -> int:
    mdp = load_mdp(args.mdp)
    behavior = load_policy(args.policy, mdp, _seed(args))
    data = sample_dataset(mdp, behavior, args.K, _seed(args))
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_dataset(data, out_dir / "dataset.jsonl")
    write_counts_csv(count_statistics(data, mdp.S, mdp.A), out_dir / "counts.csv")
    print(out_dir / "dataset.jsonl")
    return EXIT_OK


def _empirical(args, mdp: TabularMDP) -> EmpiricalMDP:
    data = read_dataset(args.data)
    counts = count_statistics(data, mdp.S, mdp.A)
    return build_empirical_mdp(counts, mdp.mu, data.H)


def cmd_ope(args) -> int:
    mdp = load_mdp(args.mdp)
    emp = _empirical(args, mdp)
    policy = load_policy(args.policy, mdp, _seed(args))
    est = ope_plugin(emp, policy)
    truth = evaluate_policy(mdp, policy).value
    _emit({"value_hat": est.value, "dual_value_hat": est.dual_value, "value": truth,
           "abs_error": abs(est.value - truth), "min_visit": est.min_visit,
           "min_visit_pair": list(est.min_visit_pair), "warnings": est.warnings}, args.format)
    return EXIT_OK


def cmd_opo(args) -> int:
    mdp = load_mdp(args.mdp)
    emp = _empirical(args, mdp)
    pi_hat, v_hat = opo_plan(emp)
    _write_json(pi_hat.to_json(), Path(args.out_dir) / "policy.json")
    _emit({"value_hat": v_hat, "value": evaluate_policy(mdp, pi_hat).value,
           "gap": suboptimality_gap(mdp, pi_hat), "actions": pi_hat.actions().tolist()}, args.format)
    return EXIT_OK


def _array_checks(d: dict, label: str) -> list[dict]:
    try:
        P, r, mu = (np.asarray(d[k], dtype=float) for k in ("transition", "mean_reward", "initial_dist"))
    except (KeyError, ValueError) as exc:
        return [{"check": f"{label}.schema", "holds": False, "detail": str(exc)}]
    return [{"check": f"{label}.{c.check}", "holds": c.ok, "detail": c.detail,
             "index": None if c.index is None else [int(i) for i in np.atleast_1d(c.index)]}
            for c in check_mdp_arrays(P, r, mu)]


def cmd_diagnose(args) -> int:
    truth_json = _read_json(args.mdp)
    records = _array_checks(truth_json, "truth")
    emp_json = _read_json(args.emp) if args.emp else None
    if emp_json is not None:
        records += _array_checks(emp_json, "emp")
    if not all(r["holds"] for r in records):
        _report(records, args)
        return EXIT_FAILED
    truth = TabularMDP.from_json(truth_json)
    if emp_json is not None:
        emp = TabularMDP.from_json(emp_json)
    elif args.data:
        emp = _empirical(args, truth)
    else:
        raise SystemExit("diagnose needs --emp or --data")
    policy = load_policy(args.policy, truth, _seed(args))
    records += [r.to_json() for r in run_all_checks(truth, emp, policy)]
    _report(records, args)
    return EXIT_OK if all(r["holds"] for r in records) else EXIT_FAILED


def run_all_checks(truth: TabularMDP, emp, policy: Policy) -> list[dg.CheckReport]:
    est = emp.mdp if isinstance(emp, EmpiricalMDP) else emp
    dec = dg.value_difference_decomposition(truth, est, policy)
    out = [dg.CheckReport("value_difference", dec.residual, dg.IDENTITY_TOL, dec.residual <= dg.IDENTITY_TOL,
                          extras={"reward_term": dec.reward_term, "total": dec.total})]
    occ = occupancy_measures(est, policy)
    primal = evaluate_policy(est, policy).value
    gap = abs(primal - dual_policy_value(est, occ))
    out.append(dg.CheckReport("primal_dual", gap, 1e-10, gap <= 1e-10))
    if truth.bounded_total_reward:
        out += [dg.check_recursion_evaluation(truth, emp, policy, i) for i in (0, 1, 2)]
        out += [dg.check_recursion_optimization(truth, emp, i, m) for m in dg.MODES for i in (0, 1)]
        out.append(dg.check_mis_variance_bound(truth, policy))
    return out


def _report(records: list[dict], args) -> None:
    failed = [r["check"] for r in records if not r["holds"]]
    if args.format == "json":
        print(json.dumps({"checks": records, "failed": failed}, indent=2, default=float))
    else:
        print("check,holds,lhs,rhs")
        for r in records:
            print(f"{r['check']},{r['holds']},{r.get('lhs', '')},{r.get('rhs', '')}")
    for name in failed:
        print(f"FAILED: {name}", file=sys.stderr)


def cmd_sweep(args) -> int:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = cfg.with_overrides(seed=args.seed)
    result = run_sweep(cfg, threads=args.threads)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    stem = Path(args.config).stem
    (out_dir / f"{stem}.csv").write_text(result.csv_text())
    (out_dir / f"{stem}.summary.json").write_text(result.summary_json())
    if args.format == "json":
        print(result.summary_json(), end="")
    else:
        print(out_dir / f"{stem}.csv")
    return EXIT_OK


def cmd_lower_bound(args) -> int:
    if args.config:
        cfg = load_config(args.config)
        H, grid, R, seed, c1 = cfg.H[0], cfg.K, cfg.replications, cfg.seed, cfg.instance.c1
    else:
        H, grid, R, seed, c1 = args.H, tuple(args.n_dm), args.replications, 0, 1.0
    if args.seed is not None:
        seed = args.seed
    rep = lower_bound_experiment(H, grid, R, seed=seed, c1=c1, threads=args.threads)
    summary = rep.summary()
    _write_json(summary, Path(args.out_dir) / "lower_bound.json")
    ok = all(r.le_cam_floor >= 0.5 - 1e-12 for r in rep.rows)
    if args.format == "json":
        _emit(summary, "json")
    else:
        print(Path(args.out_dir) / "lower_bound.json")
    return EXIT_OK if ok else EXIT_FAILED


def verify_instance(obj: dict, label: str) -> list[dict]:
    """Invariant suite on one serialized instance."""
    out = []
    lin = None
    if obj.get("schema") == LINEAR_SCHEMA:
        lin = LinearAnchorMDP.from_json(obj)
        out += [{"check": f"{label}.{c.check}", "holds": c.ok, "detail": c.detail} for c in check_linear_invariants(lin)]
        obj = obj["mdp"]
    out += _array_checks(obj, label)
    if not all(r["holds"] for r in out):
        return out
    mdp = TabularMDP.from_json(obj)
    H, S, A = mdp.H, mdp.S, mdp.A
    for name, pol in (("uniform", Policy.uniform(H, S, A)), ("optimal", optimal_policy(mdp)[0])):
        sol = evaluate_policy(mdp, pol)
        occ = occupancy_measures(mdp, pol)
        norm = max(np.abs(occ.xi_state.sum(1) - 1).max(), np.abs(occ.xi_state_action.sum((1, 2)) - 1).max())
        out.append({"check": f"{label}.{name}.occupancy_normalized", "holds": bool(norm <= 1e-10), "detail": norm})
        dual = abs(sol.value - dual_policy_value(mdp, occ))
        out.append({"check": f"{label}.{name}.primal_dual", "holds": bool(dual <= 1e-10), "detail": dual})
        if S**H * A**H <= 10**6:
            gap = abs(sol.value - enumerate_policy_value(mdp, pol))
            out.append({"check": f"{label}.{name}.oracle", "holds": bool(gap <= 1e-12), "detail": gap})
    if mdp.bounded_total_reward:
        chk = verify_bounded_total_reward(mdp)
        out.append({"check": f"{label}.bounded_total_reward", "holds": chk.holds, "detail": chk.max_total_reward})
        V = optimal_policy(mdp)[1].V
        out.append({"check": f"{label}.values_in_unit_interval", "holds": bool(V.max() <= 1 + 1e-12),
                    "detail": float(V.max())})
    return out


def golden_files(directory=None) -> list[Path]:
    if directory:
        return sorted(Path(directory).glob("*.json"))
    root = resources.files("offline_plugin") / "golden"
    return sorted(Path(str(p)) for p in root.iterdir() if p.name.endswith(".json"))


def cmd_verify(args) -> int:
    records = []
    for path in golden_files(args.golden_dir):
        records += verify_instance(_read_json(path), path.stem)
    if not records:
        print("no instances found", file=sys.stderr)
        return EXIT_FAILED
    _report(records, args)
    return EXIT_OK if all(r["holds"] for r in records) else EXIT_FAILED


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="sweep config file")
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--out-dir", default="out")
    common.add_argument("--threads", type=int, default=1)
    common.add_argument("--format", choices=("csv", "json"), default="csv")

    p = argparse.ArgumentParser(prog="offline-plugin", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", parents=[common], help="write an instance as JSON")
    g.add_argument("--kind", choices=GENERATE_KINDS, default="random_uniform_reward")
    g.add_argument("--S", type=int, default=3)
    g.add_argument("--A", type=int, default=2)
    g.add_argument("--H", type=int, default=4)
    g.add_argument("--d", type=int, default=None)
    g.add_argument("--p", type=float, default=None)
    g.add_argument("--n-dm", type=float, default=None)
    g.add_argument("--name", default=None, help="output file name inside --out-dir")
    g.set_defaults(func=cmd_generate)

    s = sub.add_parser("sample", parents=[common], help="sample a dataset (JSONL) under a behavior policy")
    s.add_argument("--mdp", required=True)
    s.add_argument("--policy", default="uniform", help="uniform | random | policy JSON path")
    s.add_argument("--K", type=int, required=True)
    s.set_defaults(func=cmd_sample)

    for name, func, helptext in (("ope", cmd_ope, "plug-in evaluation of a target policy"),
                                 ("opo", cmd_opo, "model-based planning on the empirical MDP")):
        c = sub.add_parser(name, parents=[common], help=helptext)
        c.add_argument("--mdp", required=True, help="ground-truth instance JSON")
        c.add_argument("--data", required=True, help="dataset JSONL")
        if name == "ope":
            c.add_argument("--policy", default="uniform")
        c.set_defaults(func=func)

    d = sub.add_parser("diagnose", parents=[common], help="run every lemma checker")
    d.add_argument("--mdp", required=True)
    d.add_argument("--emp", help="empirical MDP JSON")
    d.add_argument("--data", help="dataset JSONL (alternative to --emp)")
    d.add_argument("--policy", default="uniform")
    d.set_defaults(func=cmd_diagnose)

    w = sub.add_parser("sweep", parents=[common], help="run a config-driven sweep")
    w.set_defaults(func=cmd_sweep)

    lb = sub.add_parser("lower-bound", parents=[common], help="two-point lower-bound experiment")
    lb.add_argument("--H", type=int, default=16)
    lb.add_argument("--n-dm", type=int, nargs="+", default=[100, 400, 1600, 6400])
    lb.add_argument("--replications", type=int, default=200)
    lb.set_defaults(func=cmd_lower_bound)

    v = sub.add_parser("verify", parents=[common], help="invariant suite on the shipped instances")
    v.add_argument("--golden-dir", default=None)
    v.set_defaults(func=cmd_verify)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "sweep" and not args.config:
        print("sweep needs --config", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (MDPError, DatasetError) as exc:
        print(f"FAILED: {getattr(exc, 'check', 'dataset')}: {exc}", file=sys.stderr)
        return EXIT_FAILED
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
