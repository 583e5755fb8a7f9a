"""
Command-line entry point.

    bridgebound verify [--suite NAME] [--model FILE] [--out DIR] [--seed N] [--instances N] [--tol F]
    bridgebound bridge --model FILE [--out DIR] [--tol F]
    bridgebound oracle-compare [--model FILE] [--out DIR] [--tol F]

Exit codes: 0 success, 1 some inequality failed (or the oracle
comparison exceeded its tolerances), 2 bad configuration, 3 the solver
did not converge or the grid support is infeasible. Nothing is written
when the configuration is rejected.
"""

import argparse
import json
import os
import sys

from .bounds import _fmt, dumps_reports, summary_csv
from .errors import ConvergenceError, SupportError
from .measures import GaussianJoint
from .model import ConfigError, build_model, oracle_model
from .moments import cond_cov, cond_mean
from .oracle import oracle_compare
from .sinkhorn import kernel_at, solve_bridge, trajectory_rows, write_trajectory
from .suites import SUITES, decay_csv, run_suite

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_SOLVER = 0, 1, 2, 3


def _read_config(path, tol=None):
    if path is None:
        return None
    try:
        with open(path) as fh:
            cfg = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: not valid JSON ({exc.msg} at line {exc.lineno})") from None
    if not isinstance(cfg, dict):
        raise ConfigError(f"{path}: the model must be a JSON object")
    if tol is not None:
        cfg = dict(cfg, solver=dict(cfg.get("solver", {}), tol=tol))
    return cfg


def _write(out, name, text):
    with open(os.path.join(out, name), "w", newline="") as fh:
        fh.write(text)


def cmd_verify(args):
    cfg = _read_config(args.model, args.tol)
    model = build_model(cfg) if cfg is not None else None
    suite = args.suite or (cfg or {}).get("suite", "all")
    if suite != "all" and suite not in SUITES:
        raise ConfigError(f"unknown suite {suite!r}")
    res = run_suite(suite, seed=args.seed, instances=args.instances, model=model)
    os.makedirs(args.out, exist_ok=True)
    _write(args.out, "reports.json", dumps_reports(res.reports))
    _write(args.out, "summary.csv", summary_csv(res.reports))
    if res.curves:
        _write(args.out, "decay.csv", decay_csv(res.curves))
    failed = [r for r in res.reports if not r.passed and not r.degenerate]
    print(f"{suite}: {len(res.reports)} reports, {len(failed)} failed")
    for r in failed[:20]:
        print(f"FAIL {r.name} lhs={r.lhs:.6g} rhs={r.rhs:.6g} params={_fmt(r.params)[:200]}")
    return EXIT_FAIL if failed else EXIT_OK


def _quadratic(q):
    return {"A": q.A, "b": q.b, "c": q.c}


def gaussian_bridge_dict(bridge):
    L, Lc = kernel_at(bridge, "even"), kernel_at(bridge, "odd")
    return {
        "iterations": bridge.iterations_used,
        "residual": bridge.residual,
        "system_residual": bridge.system_residual,
        "gauge": bridge.gauge,
        "joint": {"mean": bridge.P_star.mean, "cov": bridge.P_star.cov},
        "transition": {"alpha": L.alpha, "beta": L.beta, "tau": L.tau},
        "conjugate_transition": {"alpha": Lc.alpha, "beta": Lc.beta, "tau": Lc.tau},
        "U": _quadratic(bridge.U_star),
        "V": _quadratic(bridge.V_star),
    }


def _potential_csv(grid, U, V):
    d = grid.d
    lines = [",".join([f"x{k}" for k in range(d)] + ["U", "V"])]
    for p, u, v in zip(grid.points, U, V):
        lines.append(",".join(_fmt(float(t)) for t in list(p) + [u, v]))
    return "\n".join(lines) + "\n"


def cmd_bridge(args):
    if args.model is None:
        raise ConfigError("bridge needs --model")
    model = build_model(_read_config(args.model, args.tol))
    bridge, states = solve_bridge(
        model.mu, model.eta, model.K0, tol=model.tol, max_iter=model.max_iter, keep_states=True
    )
    rows = trajectory_rows(states, model.mu, model.eta, bridge)
    os.makedirs(args.out, exist_ok=True)
    write_trajectory(os.path.join(args.out, "trajectory.csv"), rows)
    if isinstance(bridge.P_star, GaussianJoint):
        text = _fmt(gaussian_bridge_dict(bridge)) + "\n"
        _write(args.out, "bridge.json", text)
        sys.stdout.write(text)
        return EXIT_OK
    L = kernel_at(bridge, "even")
    _write(args.out, "potentials.csv", _potential_csv(model.grid, bridge.U_star, bridge.V_star))
    cond_mean(L).to_csv(os.path.join(args.out, "cond_mean.csv"))
    cond_cov(L).to_csv(os.path.join(args.out, "cond_cov.csv"))
    summary = {
        "iterations": bridge.iterations_used,
        "residual": bridge.residual,
        "system_residual": bridge.system_residual,
        "gauge": bridge.gauge,
        "grid_size": model.grid.size,
    }
    text = _fmt(summary) + "\n"
    _write(args.out, "bridge.json", text)
    sys.stdout.write(text)
    return EXIT_OK


def cmd_oracle_compare(args):
    cfg = _read_config(args.model, args.tol) or oracle_model()
    build_model(cfg)  # validate before running anything
    res = oracle_compare(cfg)
    text = _fmt(res) + "\n"
    os.makedirs(args.out, exist_ok=True)
    _write(args.out, "oracle.json", text)
    for k, v in sorted(res["discrepancies"].items()):
        status = "ok" if res["pass"][k] else "EXCEEDED"
        print(f"{k}: {v:.3e} (tolerance {res['tolerances'][k]:.1e}) {status}")
    return EXIT_OK if res["all_pass"] else EXIT_FAIL


def parser():
    p = argparse.ArgumentParser(prog="bridgebound", description="Entropic continuity and Sinkhorn bound checks.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--model", help="model definition (JSON)")
        sp.add_argument("--out", default="bridgebound-out", help="output directory")
        sp.add_argument("--tol", type=float, help="solver stopping tolerance")

    v = sub.add_parser("verify", help="run verification suites")
    common(v)
    v.add_argument("--suite", choices=SUITES + ("all",))
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--instances", type=int)
    b = sub.add_parser("bridge", help="solve a bridge and dump its fields")
    common(b)
    o = sub.add_parser("oracle-compare", help="Gaussian vs grid backend")
    common(o)
    return p


COMMANDS = {"verify": cmd_verify, "bridge": cmd_bridge, "oracle-compare": cmd_oracle_compare}


def main(argv=None):
    args = parser().parse_args(argv)
    if getattr(args, "seed", 0) is not None and getattr(args, "seed", 0) < 0:
        print("error: --seed must be nonnegative", file=sys.stderr)
        return EXIT_CONFIG
    if getattr(args, "instances", None) is not None and args.instances < 1:
        print("error: --instances must be positive", file=sys.stderr)
        return EXIT_CONFIG
    if args.tol is not None and not args.tol > 0:
        print("error: --tol must be positive", file=sys.stderr)
        return EXIT_CONFIG
    try:
        return COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (ConvergenceError, SupportError) as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
