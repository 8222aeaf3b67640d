#!/usr/bin/env python3

import sys
import io
import csv
import json
import argparse

from pydantic import ValidationError

from sources.config import get_int, get_float, get_str, default_workers, version
from sources.errors import PreconditionError, InvariantError
from sources.schemas import RunConfig, ScalingQuery
from sources.utility import pretty_print, format_real, format_rational
from sources.logger import Logger

import warnings
warnings.filterwarnings("ignore")

logger = Logger("cli.log")

EXIT_USAGE = 2
EXIT_PRECONDITION = 3
EXIT_INVARIANT = 4

COMMON = ("command", "seed", "workers", "grid_points", "refine_tol", "format", "output", "progress")

class UsageError(Exception):
    pass

class Parser(argparse.ArgumentParser):
    """Usage errors become a single `error: UsageError: ...` line and exit status 2."""
    def error(self, message):
        print(f"error: UsageError: {message}", file=sys.stderr)
        sys.exit(EXIT_USAGE)

def build_parser() -> Parser:
    common = Parser(add_help=False)
    common.add_argument("--seed", type=int, default=get_int("MAIN", "seed"), help="master seed for every stochastic output (default: %(default)s)")
    common.add_argument("--workers", type=int, default=None, help="worker threads/processes (default: POLAR_WORKERS or config.ini)")
    common.add_argument("--grid-points", type=int, default=get_int("SEARCH", "grid_points"), help="supremum search grid size (default: %(default)s)")
    common.add_argument("--refine-tol", type=float, default=get_float("SEARCH", "refine_tol"), help="refinement bracket width (default: %(default)s)")
    common.add_argument("--format", choices=["json", "csv"], default=get_str("MAIN", "output_format"), help="output format (default: %(default)s)")
    common.add_argument("--output", default=None, help="write to this file instead of standard output")
    common.add_argument("--progress", action="store_true", help="show progress bars on standard error")

    parser = Parser(prog="polarscaling", description="Scaling analysis of q-ary polar codes on erasure channels.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("psi", parents=[common], help="child erasure rate psi_i(x)")
    p.add_argument("--q", type=int, required=True)
    p.add_argument("--i", type=int, required=True)
    p.add_argument("--x", type=float, required=True)

    p = sub.add_parser("profile", parents=[common], help="erasure rates of all q^n channels")
    p.add_argument("--q", type=int, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--eps", type=float, required=True)
    p.add_argument("--hist", type=int, default=None, metavar="BINS")

    p = sub.add_parser("construct", parents=[common], help="select the k best channels")
    p.add_argument("--q", type=int, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--eps", type=float, required=True)
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--gamma", type=float, default=None, help="also report the good-channel fraction for threshold N^-gamma")
    p.add_argument("--beta", type=float, default=0.5)

    for name, helptext in (("lambda", "contraction constant sup (TV)/V"), ("ratio-curve", "(x, (TV)(x)/V(x)) data")):
        p = sub.add_parser(name, parents=[common], help=helptext)
        p.add_argument("--op", required=True, help="rs | ensemble | file:<kernel> | arikan:<levels> | vandermonde:<q>")
        p.add_argument("--q", type=int, default=None)
        p.add_argument("--m", type=int, default=None)
        p.add_argument("--beta", type=float, required=True)
        p.add_argument("--iterate", type=int, default=None, metavar="DEPTH")
        if name == "ratio-curve":
            p.add_argument("--points", type=int, default=1000)

    p = sub.add_parser("bound", parents=[common], help="scaling bound or the field-size threshold q0")
    p.add_argument("--q", type=int, default=None)
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--gamma", type=float, required=True)
    p.add_argument("--beta", type=float, default=None)
    p.add_argument("--q0", action="store_true", help="compute q0(gamma, delta) instead")
    p.add_argument("--delta", type=float, default=None)

    p = sub.add_parser("mbeta", parents=[common], help="Gaussian constant m(beta)")
    p.add_argument("--beta", type=float, required=True)
    p.add_argument("--q", type=int, default=None, help="also report the Gaussian approximation of lambda")

    p = sub.add_parser("rho", parents=[common], help="rho(m, i, d, q) table")
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--q", type=int, required=True)
    mode = p.add_mutually_exclusive_group()
    mode.add_argument("--exact", action="store_true", default=True)
    mode.add_argument("--mc", type=int, default=None, metavar="TRIALS")
    p.add_argument("--no-cache", action="store_true")

    p = sub.add_parser("phibar", parents=[common], help="averaged erasure polynomials at x")
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--q", type=int, required=True)
    p.add_argument("--x", type=float, required=True)

    p = sub.add_parser("lambda-m", parents=[common], help="contraction constant of the averaged operator")
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--q", type=int, required=True)
    p.add_argument("--beta", type=float, required=True)

    p = sub.add_parser("conjectures", parents=[common], help="concavity and slope evidence")
    p.add_argument("--m-list", type=int, nargs="+", required=True)
    p.add_argument("--q", type=int, required=True)
    p.add_argument("--beta", type=float, required=True)
    p.add_argument("--depth", type=int, default=1)

    p = sub.add_parser("check-inequalities", parents=[common], help="numeric sweeps of the auxiliary inequalities")
    p.add_argument("--q", type=int, required=True)
    p.add_argument("--beta", type=float, required=True)
    p.add_argument("--points", type=int, default=None)

    p = sub.add_parser("mc-chain", parents=[common], help="Monte Carlo of the erasure-rate Markov chain")
    p.add_argument("--q", type=int, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--x0", type=float, required=True)
    p.add_argument("--trials", type=int, required=True)
    p.add_argument("--eta", type=float, required=True)

    p = sub.add_parser("kernel-profile", parents=[common], help="exact erasure polynomials of a kernel")
    p.add_argument("--kernel", required=True, help="file:<path> | arikan:<levels> | vandermonde:<q>")

    p = sub.add_parser("rs-candidate", parents=[common], help="compare the Vandermonde candidate with psi")
    p.add_argument("--q", type=int, required=True)
    return parser

def resolve_kernel(spec: str):
    from sources import kernel
    kind, _, value = spec.partition(":")
    if kind == "file" and value:
        return kernel.load(value)
    if kind == "arikan" and value:
        return kernel.arikan_tensor(int(value))
    if kind == "vandermonde" and value:
        return kernel.vandermonde(int(value))
    raise PreconditionError(f"unknown kernel spec {spec!r}")

def resolve_operator(args):
    from sources.operators import RSOperator, FixedOperator, EnsembleOperator
    if args.op == "rs":
        if args.q is None:
            raise PreconditionError("--op rs needs --q")
        return RSOperator(args.q)
    if args.op == "ensemble":
        if args.q is None or args.m is None:
            raise PreconditionError("--op ensemble needs --m and --q")
        from sources.ensemble import get_rho_table
        return EnsembleOperator(get_rho_table(args.m, args.q, workers=args.workers, show_progress=args.progress))
    from sources.kernel import profile_poly
    K = resolve_kernel(args.op)
    return FixedOperator(profile_poly(K, workers=args.workers), name=K.name)

def resolve_function(args, op):
    from sources.lyapunov import PowerFn, IteratedFn
    V = PowerFn(args.beta)
    if args.iterate:
        return IteratedFn(V, op, args.iterate)
    return V

def cmd_psi(args):
    from sources.de import psi
    value = psi(args.q, args.i, args.x)
    return {"q": args.q, "i": args.i, "x": args.x, "psi": value}, (["q", "i", "x", "psi"], [[args.q, args.i, format_real(args.x), format_real(value)]])

def cmd_profile(args):
    from sources.de import profile
    prof = profile(args.q, args.n, args.eps)
    result = {"q": args.q, "n": args.n, "eps": args.eps, "size": prof.size,
              "mean": prof.mean(), "streaming": prof.is_streaming}
    if args.hist:
        rows = prof.histogram(args.hist)
        result["histogram"] = [{"bin_lo": lo, "bin_hi": hi, "count": count} for lo, hi, count in rows]
        return result, (["bin_lo", "bin_hi", "count"], [[format_real(lo), format_real(hi), count] for lo, hi, count in rows])
    rows = ([start + k, format_real(rate)] for start, chunk in prof.iter_chunks() for k, rate in enumerate(chunk))
    return result, (["index", "rate"], rows)

def cmd_construct(args):
    from sources.de import profile, select_channels, gap_metrics
    prof = profile(args.q, args.n, args.eps)
    indices, union_bound = select_channels(prof, args.k)
    result = {"q": args.q, "n": args.n, "eps": args.eps, "k": args.k,
              "indices": [int(i) for i in indices], "union_bound": union_bound}
    if args.gamma is not None:
        result["gap"] = gap_metrics(prof, ScalingQuery(gamma=args.gamma, beta=args.beta), args.eps).jsonify()
    return result, (["index"], [[int(i)] for i in indices])

def cmd_lambda(args):
    from sources.lyapunov import lambda_sup
    op = resolve_operator(args)
    report = lambda_sup(op, resolve_function(args, op), args.grid_points, args.refine_tol)
    data = report.jsonify()
    return data, (list(data.keys()), [[data[k] for k in data]])

def cmd_ratio_curve(args):
    from sources.lyapunov import ratio_curve
    op = resolve_operator(args)
    rows = ratio_curve(op, resolve_function(args, op), args.points)
    return {"points": [[x, r] for x, r in rows]}, (["x", "ratio"], [[format_real(x), format_real(r)] for x, r in rows])

def cmd_bound(args):
    from sources import lyapunov
    if args.q0:
        if args.delta is None:
            raise PreconditionError("--q0 needs --delta")
        value = lyapunov.q0_threshold(args.gamma, args.delta)
        result = {"gamma": args.gamma, "delta": args.delta, "q0": value}
        return result, (["gamma", "delta", "q0"], [[format_real(args.gamma), format_real(args.delta), format_real(value)]])
    if args.q is None or args.n is None or args.beta is None:
        raise PreconditionError("bound needs --q, --n and --beta (or --q0 with --delta)")
    value = lyapunov.theorem1_bound(args.q, args.n, args.gamma, args.beta)
    exponent = lyapunov.theorem1_exponent(args.q, args.gamma, args.beta)
    result = {"q": args.q, "n": args.n, "gamma": args.gamma, "beta": args.beta, "exponent": exponent, "bound": value}
    return result, (list(result.keys()), [[format_real(v) for v in result.values()]])

def cmd_mbeta(args):
    from sources.lyapunov import m_beta, lambda_tilde
    result = {"beta": args.beta, "m_beta": m_beta(args.beta)}
    if args.q is not None:
        result["q"] = args.q
        result["lambda_tilde"] = lambda_tilde(args.q, args.beta)
    return result, (list(result.keys()), [[format_real(v) for v in result.values()]])

def cmd_rho(args):
    import numpy as np
    from sources.ensemble import get_rho_table, rho_mc_row
    table = get_rho_table(args.m, args.q, use_cache=not args.no_cache, workers=args.workers, show_progress=args.progress)
    if args.mc is None:
        lines = table.lines()
        return ({"m": args.m, "q": args.q, "lines": lines},
                (["i", "d", "rho"], [[i, d, format_rational(table.rho[i][d])] for i in range(args.m) for d in range(args.m + 1)]))
    entries = []
    for i in range(args.m):
        rng = np.random.default_rng([args.seed, i])
        for d, estimate in enumerate(rho_mc_row(args.m, i, args.q, args.mc, rng)):
            entries.append({"i": i, "d": d, "exact": format_rational(table.rho[i][d]),
                            "estimate": estimate.estimate, "stderr": estimate.stderr})
    return ({"m": args.m, "q": args.q, "trials": args.mc, "entries": entries},
            (["i", "d", "exact", "estimate", "stderr"],
             [[e["i"], e["d"], e["exact"], format_real(e["estimate"]), format_real(e["stderr"])] for e in entries]))

def cmd_phibar(args):
    from sources.ensemble import get_rho_table
    table = get_rho_table(args.m, args.q, workers=args.workers, show_progress=args.progress)
    values = [float(v) for v in table.evaluate_all(args.x)]
    return ({"m": args.m, "q": args.q, "x": args.x, "phi_bar": values},
            (["i", "phi_bar"], [[i, format_real(v)] for i, v in enumerate(values)]))

def cmd_lambda_m(args):
    from sources.ensemble import lambda_m, get_rho_table
    table = get_rho_table(args.m, args.q, workers=args.workers, show_progress=args.progress)
    data = lambda_m(args.m, args.q, args.beta, args.grid_points, args.refine_tol, table=table).jsonify()
    return data, (list(data.keys()), [[data[k] for k in data]])

def cmd_conjectures(args):
    from sources.ensemble import check_conjecture1, check_conjecture2
    first = [check_conjecture1(m, args.q, args.beta, args.depth).jsonify() for m in args.m_list]
    second = check_conjecture2(args.m_list, args.q, args.beta, args.grid_points).jsonify() if len(set(args.m_list)) > 1 else None
    rows = [[c["m"], k + 1, format_real(c["max_second_difference"][k]), c["concave"][k]]
            for c in first for k in range(c["depth"])]
    return {"concavity": first, "slope": second}, (["m", "level", "max_second_difference", "concave"], rows)

def cmd_check_inequalities(args):
    from sources.lyapunov import check_proof_inequalities
    report = check_proof_inequalities(args.q, args.beta, args.points)
    if not report.passed:
        for entry in report.failures():
            pretty_print(f"{entry.name}: slack {entry.min_slack} at {entry.witness}", color="failure")
    rows = [[e.name, format_real(e.min_slack), " ".join(format_real(w) for w in e.witness), e.passed] for e in report.entries]
    return report.jsonify(), (["name", "min_slack", "witness", "passed"], rows), (0 if report.passed else EXIT_INVARIANT)

def cmd_mc_chain(args):
    from sources.de import profile, unpolarized_fraction_mc
    estimate = unpolarized_fraction_mc(args.q, args.n, args.x0, args.trials, args.eta, args.seed, workers=args.workers)
    result = {"q": args.q, "n": args.n, "x0": args.x0, "eta": args.eta, **estimate.jsonify()}
    if args.q ** args.n <= get_int("PROFILE", "materialize_cap"):
        result["exact"] = profile(args.q, args.n, args.x0).fraction_in(args.eta, 1.0 - args.eta)
    return result, (list(result.keys()), [[format_real(v) if isinstance(v, float) else v for v in result.values()]])

def cmd_kernel_profile(args):
    from sources.kernel import profile_poly
    poly = profile_poly(resolve_kernel(args.kernel), workers=args.workers)
    rows = [[i, d, a] for i, row in enumerate(poly.coeffs) for d, a in enumerate(row)]
    return {"m": poly.m, "q": poly.q, "coeffs": poly.coeffs}, (["i", "d", "a_id"], rows)

def cmd_rs_candidate(args):
    from sources.kernel import rs_candidate_report
    report = rs_candidate_report(args.q)
    return report.jsonify(), (["q", "matches_tails"], [[report.q, report.matches_tails]])

COMMANDS = {
    "psi": cmd_psi,
    "profile": cmd_profile,
    "construct": cmd_construct,
    "lambda": cmd_lambda,
    "ratio-curve": cmd_ratio_curve,
    "bound": cmd_bound,
    "mbeta": cmd_mbeta,
    "rho": cmd_rho,
    "phibar": cmd_phibar,
    "lambda-m": cmd_lambda_m,
    "conjectures": cmd_conjectures,
    "check-inequalities": cmd_check_inequalities,
    "mc-chain": cmd_mc_chain,
    "kernel-profile": cmd_kernel_profile,
    "rs-candidate": cmd_rs_candidate,
}

def run_config(args) -> RunConfig:
    arguments = {k: v for k, v in sorted(vars(args).items()) if k not in COMMON}
    return RunConfig(command=args.command, seed=args.seed, grid_points=args.grid_points,
                     refine_tol=args.refine_tol, output_format=args.format,
                     output_path=args.output, arguments=arguments)

def render(args, result, table) -> str:
    if args.format == "csv":
        header, rows = table
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow(header)
        writer.writerows(rows)
        return buffer.getvalue()
    envelope = {"version": version(), "config": run_config(args).jsonify(), "result": result}
    return json.dumps(envelope, indent=2) + "\n"

def emit(args, text: str) -> None:
    if args.output:
        with open(args.output, "w", encoding="utf-8") as handle:
            handle.write(text)
        pretty_print(f"wrote {args.output}", color="success")
    else:
        sys.stdout.write(text)

def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    args.workers = args.workers or default_workers()
    logger.info(f"command {args.command} with {vars(args)}")
    try:
        outcome = COMMANDS[args.command](args)
    except (PreconditionError, ValidationError) as e:
        message = str(e).replace("\n", " ")
        logger.error(f"{args.command}: {type(e).__name__}: {message}")
        print(f"error: {type(e).__name__}: {message}", file=sys.stderr)
        return EXIT_PRECONDITION
    except InvariantError as e:
        logger.error(f"{args.command}: {type(e).__name__}: {e}")
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_INVARIANT
    result, table = outcome[0], outcome[1]
    status = outcome[2] if len(outcome) > 2 else 0
    emit(args, render(args, result, table))
    return status

if __name__ == "__main__":
    sys.exit(main())
