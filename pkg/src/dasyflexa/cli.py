"""Command line entry point: ``run``, ``check`` and ``sweep`` subcommands.

Exit codes: 0 when the run converged, 2 when it stopped at the iteration
cap, 1 on any error. Set ``ASYFLEXA_LOG`` to ``error``, ``info`` or
``debug`` to control verbosity.
"""

import argparse
import copy
import csv
import json
import logging
import math
import os
import sys
import warnings

import numpy as np

from .config import ConfigError, build_experiment, load_config, validate_config
from .engine import run, run_parallel
from .exceptions import InvalidArgument, SolverFailure
from .metrics import fit_linear_rate, max_safe_stepsize, scan_gamma_for_rate, theory_constants
from .problems.lasso import LassoInstance, reference_solve_lasso

logger = logging.getLogger("dasyflexa")

SWEEP_PARAMS = ("D", "gamma", "N_agents", "schedule")


def _setup_logging():
    level = os.environ.get("ASYFLEXA_LOG", "error").upper()
    if level not in ("ERROR", "INFO", "DEBUG"):
        level = "ERROR"
    logging.basicConfig(level=getattr(logging, level), stream=sys.stderr,
                        format="%(levelname)s %(name)s: %(message)s")
    if level == "ERROR":
        warnings.simplefilter("ignore", RuntimeWarning)


def _theory(exp, V_gap=None, eps=None):
    p = exp.problem
    e = exp.engine
    tau = min([e.surrogate.tau] + list(e.surrogate.tau_overrides.values()))
    rho = p.graph.rho()
    D = e.delay.D
    out = {"L": exp.L, "rho": rho, "B": exp.B, "D": D, "tau": tau, "gamma": e.gamma,
           "max_safe_stepsize": max_safe_stepsize(tau, exp.L, rho, D)}
    out["gamma_theory_safe"] = e.gamma < out["max_safe_stepsize"]
    try:
        tc = theory_constants(tau, exp.L, exp.L + tau, rho, e.gamma, p.n_agents, exp.B, D,
                              V_gap=V_gap, eps=eps)
        out.update(C1=tc.C1, C2=tc.C2, C3=tc.C3, lambda_=tc.lam,
                   one_minus_lambda=tc.one_minus_lam, T_eps_bound=tc.T_eps)
    except InvalidArgument as exc:
        out.update(C1=None, C2=None, C3=None, lambda_=None, one_minus_lambda=None,
                   T_eps_bound=None, theory_note=str(exc))
    return out


def _first_below(k, values, eps):
    hit = np.flatnonzero(values <= eps)
    return int(k[hit[0]]) if hit.size else None


def execute(cfg, out_dir):
    """Run one experiment and write its trace and summary; return the summary."""
    exp = build_experiment(cfg)
    os.makedirs(out_dir, exist_ok=True)
    if exp.mode == "parallel":
        trace = run_parallel(exp.problem, exp.engine, exp.workers, x0=exp.x0)
    else:
        trace = run(exp.problem, exp.engine, x0=exp.x0)
    ref = cfg.get("reference", {})
    V = trace.column("V")
    k = trace.column("k")
    extra = {}
    v_star = None
    rate = None
    if ref.get("compute_Vstar", False) and isinstance(exp.instance, LassoInstance):
        _, v_star = reference_solve_lasso(exp.instance, tol=ref.get("tol", 1e-12))
        rel = (V - v_star) / abs(v_star) if v_star != 0 else V - v_star
        extra["rel_error"] = rel.tolist()
        sub = V[::exp.B] - v_star
        sub = np.minimum.accumulate(sub)
        sub = sub[sub > 1e-14 * max(1.0, abs(v_star))]
        if sub.size >= 5:
            fit = fit_linear_rate(sub, exp.B)
            rate = {"lambda_hat": fit.lambda_hat, "lambda_envelope": fit.lambda_envelope}
    output = cfg.get("output", {})
    trace_path = os.path.join(out_dir, output.get("trace", "trace.csv"))
    trace.write_csv(trace_path, extra)
    mv = trace.column("MV")
    ok = ~np.isnan(mv)
    eps_list = output.get("eps", [1e-4, 1e-6, 1e-8])
    theory = _theory(exp, V_gap=max(float(V[0] - (v_star if v_star is not None else V.min())), 0.0),
                     eps=min(eps_list))
    summary = {
        "config": cfg,
        "status": trace.status,
        "iterations": trace.n_iter,
        "final": {"V": V[-1], "MV": mv[ok][-1], "prox_residual": trace.column("prox_residual")[ok][-1],
                  "lyapunov": trace.column("lyapunov")[-1]},
        "V_star": v_star,
        "relative_error_final": None if v_star is None else extra["rel_error"][-1],
        "rate_fit": rate,
        "T_eps_observed": {repr(e): _first_below(k[ok], mv[ok], e) for e in eps_list},
        "messages": int(trace.columns["messages"][-1]),
        "max_staleness": int(max(trace.staleness)),
        "theory": theory,
    }
    with open(os.path.join(out_dir, output.get("summary", "summary.json")), "w") as fh:
        json.dump(_jsonable(summary), fh, indent=2, sort_keys=True)
    return summary


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return None if not math.isfinite(obj) else float(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _status_code(status):
    return 0 if status == "converged" else 2


def cmd_run(args):
    cfg = load_config(args.config)
    summary = execute(cfg, args.out)
    print(f"status={summary['status']} iterations={summary['iterations']} "
          f"V={summary['final']['V']:.10g} MV={summary['final']['MV']:.3g}")
    return _status_code(summary["status"])


def cmd_check(args):
    cfg = load_config(args.config)
    exp = build_experiment(cfg)
    th = _theory(exp)
    print(f"L = {th['L']:.10g}")
    print(f"rho = {th['rho']}")
    print(f"B = {th['B']}")
    print(f"D = {th['D']}")
    print(f"tau = {th['tau']:.10g}")
    print(f"max_safe_stepsize = {th['max_safe_stepsize']:.10g}")
    print(f"gamma = {th['gamma']:.10g}")
    print(f"gamma_theory_safe = {str(th['gamma_theory_safe']).lower()}")
    print(f"stepsize_warning = {str(not th['gamma_theory_safe']).lower()}")
    for name in ("C1", "C2", "lambda_", "one_minus_lambda"):
        val = th[name]
        label = name.rstrip("_")
        print(f"{label} = {'n/a' if val is None else format(val, '.10g')}")
    if "theory_note" in th:
        print(f"note: {th['theory_note']}")
        scan = scan_gamma_for_rate(th["tau"], th["L"], th["L"] + th["tau"], th["rho"],
                                   exp.problem.n_agents, th["B"], th["D"])
        if scan is not None:
            print(f"gamma_for_rate = {scan.gamma:.10g} (1 - lambda = {scan.one_minus_lam:.3g})")
    return 0


def _apply_sweep(cfg, param, value):
    cfg = copy.deepcopy(cfg)
    e = cfg["engine"]
    if param == "D":
        d = int(value)
        delay = e.setdefault("delay", {"kind": "zero"})
        if delay["kind"] == "zero" and d > 0:
            delay.update(kind="uniform", seed=e["seed"])
        if d == 0:
            cfg["engine"]["delay"] = {"kind": "zero"}
        else:
            delay["D"] = d
    elif param == "gamma":
        e.pop("gamma_safe_fraction", None)
        e["gamma"] = float(value)
    elif param == "N_agents":
        if cfg["problem"]["type"] == "file":
            raise ConfigError("N_agents cannot be swept for file problems")
        cfg["problem"]["N_agents"] = int(value)
    elif param == "schedule":
        sch = e.setdefault("schedule", {"kind": "cyclic"})
        sch["kind"] = value
        if value != "cyclic":
            sch.setdefault("seed", e["seed"])
    return validate_config(cfg)


def cmd_sweep(args):
    cfg = load_config(args.config)
    values = [v.strip() for v in args.values.split(",") if v.strip()]
    if not values:
        raise ConfigError("--values must list at least one value")
    rows = []
    worst = 0
    for value in values:
        sub = _apply_sweep(cfg, args.param, value)
        out = os.path.join(args.out, f"{args.param}={value}")
        s = execute(sub, out)
        th = s["theory"]
        rate = s["rate_fit"] or {}
        rows.append({"param": args.param, "value": value, "status": s["status"],
                     "iterations": s["iterations"], "final_V": s["final"]["V"],
                     "final_MV": s["final"]["MV"], "lambda_hat": rate.get("lambda_hat"),
                     "gamma": th["gamma"], "max_safe_stepsize": th["max_safe_stepsize"],
                     "gamma_theory_safe": th["gamma_theory_safe"]})
        worst = max(worst, _status_code(s["status"]))
    with open(os.path.join(args.out, "sweep_summary.csv"), "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        for r in rows:
            w.writerow({k: ("" if v is None else v) for k, v in r.items()})
    for r in rows:
        print(",".join(str(r[k]) for k in ("value", "status", "iterations", "lambda_hat",
                                           "gamma_theory_safe")))
    return worst


def build_parser():
    parser = argparse.ArgumentParser(prog="dasyflexa",
                                     description="Asynchronous distributed SCA experiments.")
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("run", help="run one experiment")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(func=cmd_run)
    p = sub.add_parser("check", help="print stepsize bounds and theory constants")
    p.add_argument("--config", required=True)
    p.set_defaults(func=cmd_check)
    p = sub.add_parser("sweep", help="run one experiment per parameter value")
    p.add_argument("--config", required=True)
    p.add_argument("--param", required=True, choices=SWEEP_PARAMS)
    p.add_argument("--values", required=True, help="comma separated values")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sweep)
    return parser


def main(argv=None):
    _setup_logging()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 1 if exc.code else 0
    try:
        return args.func(args)
    except (ConfigError, InvalidArgument, SolverFailure, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # unexpected failures still map to exit code 1
        logger.debug("unhandled error", exc_info=True)
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
