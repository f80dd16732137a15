"""Command-line front end: generate models, solve them, cross-check, sweep.

Exit codes: 0 success, 1 usage, 2 unreadable or invalid input, 3 numerical
failure.  Reports are JSON documents that round-trip losslessly (floats are
serialized at full precision).
"""

from __future__ import annotations

import argparse
import json
import sys
import time

import numpy as np

from .casestudy import CaseStudyParams, generate_case_study, reference_topology
from .errors import (
    AbsorptionError,
    AccuracyError,
    DivergenceError,
    ModelError,
    RankBudgetError,
    SizeCapError,
    SpectrumError,
)
from .model import build_descriptor, default_gamma, load_model, save_model
from .oracle import dense_contraction_checks, dense_generator, dense_mtta
from .solver import SolverConfig, compute_mtta
from .tt import RoundingPolicy

USAGE_ERROR = 1
INPUT_ERROR = 2
NUMERICAL_ERROR = 3

_NUMERICAL = (DivergenceError, RankBudgetError, SpectrumError, AccuracyError,
              AbsorptionError)


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on usage errors by default; the documented code is 1
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(USAGE_ERROR, f"{self.prog}: error: {message}\n")


def _parse_gamma(text):
    """``min``, ``scale:<c>`` with c > 1, or ``value:<v>``."""
    if text == "min":
        return {"gamma_mode": "minimal"}
    if text.startswith("scale:"):
        factor = float(text.split(":", 1)[1])
        return {"gamma_mode": "scaled", "gamma_factor": factor}
    if text.startswith("value:"):
        return {"gamma_mode": "value", "gamma_value": float(text.split(":", 1)[1])}
    raise ValueError(f"cannot parse gamma specification {text!r}")


def _add_solver_flags(parser):
    parser.add_argument(
        "--algorithm", choices=("linear", "squared", "transpose"),
        default="squared", help="series evaluation strategy",
    )
    parser.add_argument(
        "--gamma", default="min", metavar="min|scale:<c>|value:<v>",
        help="splitting shift selection",
    )
    parser.add_argument("--tol", type=float, default=1e-8,
                        help="relative stopping tolerance")
    parser.add_argument("--exp-sum-eps", type=float, default=1e-10,
                        help="exponential-sum target accuracy")
    parser.add_argument("--round-tol", type=float, default=None,
                        help="rank-rounding tolerance (default: same as --tol)")
    parser.add_argument("--max-rank", type=int, default=None,
                        help="hard cap on every bond rank")
    parser.add_argument("--max-iter", type=int, default=500,
                        help="iteration cap")
    parser.add_argument("--no-rcm", action="store_true",
                        help="skip the bandwidth-reducing automaton ordering")


def _config_from(args):
    try:
        gamma = _parse_gamma(args.gamma)
    except ValueError as exc:
        raise ModelError(str(exc)) from exc
    round_tol = args.round_tol if args.round_tol is not None else args.tol
    return SolverConfig(
        algorithm=args.algorithm,
        exp_sum_eps=args.exp_sum_eps,
        rounding=RoundingPolicy(round_tol, args.max_rank),
        max_iter=args.max_iter,
        stop_tol=args.tol,
        reorder=not args.no_rcm,
        **gamma,
    )


def _config_dict(args):
    return {
        "algorithm": args.algorithm,
        "gamma": args.gamma,
        "tol": args.tol,
        "exp_sum_eps": args.exp_sum_eps,
        "round_tol": args.round_tol if args.round_tol is not None else args.tol,
        "max_rank": args.max_rank,
        "max_iter": args.max_iter,
        "rcm": not args.no_rcm,
    }


def cmd_solve(args):
    model = load_model(args.model)
    cfg = _config_from(args)
    report = compute_mtta(model, cfg)
    print(f"MTTA = {report.mtta:.12g}")
    print(
        f"algorithm={report.algorithm} iterations={report.iterations} "
        f"gamma={report.gamma:.12g} residual={report.residual_estimate:.3e} "
        f"peak_tt_bytes={report.peak_tt_bytes} wall_time={report.wall_time:.3f}s"
    )
    if args.report:
        record = {
            "model": str(args.model),
            "config": _config_dict(args),
            "report": report.to_dict(),
            "peak_tt_bytes": int(report.peak_tt_bytes),
            "exit_status": 0,
        }
        with open(args.report, "w", encoding="utf-8") as fh:
            json.dump(record, fh, indent=2)
            fh.write("\n")
    return 0


def cmd_oracle(args):
    model = load_model(args.model)
    chain = dense_generator(model, size_cap=args.size_cap)
    mtta = dense_mtta(chain)
    descriptor = build_descriptor(model)
    gamma = default_gamma(descriptor)
    checks = dense_contraction_checks(model, gamma, size_cap=args.size_cap)
    print(f"MTTA = {mtta:.12g}")
    print(f"gamma = {gamma:.12g}")
    print(f"rho(M) = {checks['rho']:.12g}")
    print(f"norm_inf(M) = {checks['norm_inf']:.12g}")
    for name, value in checks["premises"].items():
        print(f"premise {name}: {value}")
    return 0


def cmd_gen(args):
    if args.topology == "reference" and args.k != 4:
        raise ModelError("the reference topology is defined for k = 4")
    if args.topology == "reference":
        params = CaseStudyParams(args.k, topology=reference_topology())
    elif args.topology == "identity":
        params = CaseStudyParams(args.k, topology=np.eye(args.k))
    else:
        params = CaseStudyParams(args.k, seed=args.seed, density=args.density)
    model = generate_case_study(params)
    save_model(model, args.out)
    print(f"wrote {args.out} (k={args.k}, {model.potential_states} potential states)")
    return 0


def cmd_bench(args):
    ks = [int(x) for x in args.k.split(",") if x]
    if not ks:
        raise ModelError("no k values given")
    cfg_args = args
    rows = []
    for k in sorted(ks):
        times, peaks, ranks, failures = [], [], [], 0
        for run in range(args.runs):
            seed = args.seed + run
            model = generate_case_study(CaseStudyParams(k, seed=seed))
            try:
                cfg = _config_from(cfg_args)
                report = compute_mtta(model, cfg)
            except _NUMERICAL as exc:
                failures += 1
                print(f"# k={k} seed={seed} failed: {exc}", file=sys.stderr)
                continue
            times.append(report.wall_time)
            peaks.append(report.peak_tt_bytes)
            ranks.append(max(report.max_rank_history))
        rows.append(
            {
                "k": k,
                "runs": args.runs,
                "failures": failures,
                "mean_time": float(np.mean(times)) if times else float("nan"),
                "max_time": float(np.max(times)) if times else float("nan"),
                "mean_peak_bytes": float(np.mean(peaks)) if peaks else float("nan"),
                "max_peak_bytes": float(np.max(peaks)) if peaks else float("nan"),
                "mean_max_rank": float(np.mean(ranks)) if ranks else float("nan"),
                "max_max_rank": float(np.max(ranks)) if ranks else float("nan"),
            }
        )
    columns = [
        "k", "runs", "failures", "mean_time", "max_time",
        "mean_peak_bytes", "max_peak_bytes", "mean_max_rank", "max_max_rank",
    ]
    lines = [",".join(columns)]
    for row in rows:
        lines.append(",".join(_format_cell(row[c]) for c in columns))
    table = "\n".join(lines) + "\n"
    if args.out:
        with open(args.out, "w", encoding="utf-8") as fh:
            fh.write(table)
    sys.stdout.write(table)
    fitted = [r for r in rows if np.isfinite(r["mean_time"]) and r["mean_time"] > 0]
    if len(fitted) >= 2:
        logs_k = np.log([r["k"] for r in fitted])
        logs_t = np.log([r["mean_time"] for r in fitted])
        coeffs, residuals, *_ = np.polyfit(logs_k, logs_t, 1, full=True)
        resid = float(residuals[0]) if len(residuals) else 0.0
        print(f"# runtime ~ k^{coeffs[0]:.3f} (log-log fit residual {resid:.3e})")
    return 0


def _format_cell(value):
    if isinstance(value, float):
        return f"{value:.6g}"
    return str(value)


def build_parser():
    parser = _Parser(
        prog="santt",
        description="Mean time to absorption of Kronecker-structured Markov "
        "chains in tensor-train format.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_solve = sub.add_parser("solve", help="solve a model file")
    p_solve.add_argument("model", help="model file (YAML)")
    _add_solver_flags(p_solve)
    p_solve.add_argument("--report", default=None, help="write a JSON run record")
    p_solve.set_defaults(func=cmd_solve)

    p_oracle = sub.add_parser(
        "oracle", help="dense brute-force cross-check of a small model"
    )
    p_oracle.add_argument("model", help="model file (YAML)")
    p_oracle.add_argument("--size-cap", type=int, default=3**8,
                          help="largest admissible product state space")
    p_oracle.set_defaults(func=cmd_oracle)

    p_gen = sub.add_parser("gen", help="generate a benchmark model file")
    p_gen.add_argument("k", type=int, help="component count")
    p_gen.add_argument("out", help="output model path")
    p_gen.add_argument("--seed", type=int, default=0)
    p_gen.add_argument("--density", type=float, default=None,
                       help="edge probability (default 1/(2k))")
    p_gen.add_argument("--topology", choices=("random", "identity", "reference"),
                       default="random")
    p_gen.set_defaults(func=cmd_gen)

    p_bench = sub.add_parser("bench", help="random-topology scaling sweep")
    p_bench.add_argument("--k", required=True,
                         help="comma-separated component counts")
    p_bench.add_argument("--runs", type=int, default=5,
                         help="random topologies per k")
    p_bench.add_argument("--seed", type=int, default=0, help="base seed")
    _add_solver_flags(p_bench)
    p_bench.add_argument("--out", default=None, help="write the CSV table here")
    p_bench.set_defaults(func=cmd_bench)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ModelError, SizeCapError, FileNotFoundError, IsADirectoryError,
            PermissionError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return INPUT_ERROR
    except _NUMERICAL as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return NUMERICAL_ERROR


if __name__ == "__main__":
    sys.exit(main())
