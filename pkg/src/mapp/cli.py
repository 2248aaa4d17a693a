"""``mapp`` command line: generate, solve, exact, benchmark, boxplot."""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

from .bench import (BOX_METRICS, METHODS, BenchmarkPlan, emit_boxplot_data, k_for, read_results,
                    reference_solution, run_benchmark, run_method, write_results)
from .exact import solve_branch_and_bound, solve_brute_force
from .instance import feasible_space_size, generate_instance, load_instance, save_instance
from .metrics import delta_alpha
from .qsim import MemoryCapError

__all__ = ["build_parser", "cli_main", "main"]

_METHOD_NAMES = {m.lower(): m for m in METHODS}


class UsageError(Exception):
    """Arguments parsed but make no sense together."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _method(text: str) -> str:
    name = _METHOD_NAMES.get(text.lower())
    if name is None:
        raise argparse.ArgumentTypeError(f"unknown method {text!r}; choose from {', '.join(_METHOD_NAMES)}")
    return name


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be a positive integer")
    return v


def _positive_float(text: str) -> float:
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError("must be positive")
    return v


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="mapp", description="Multi-frequency antenna placement solvers.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("generate", help="random instance to JSON")
    g.add_argument("--n", type=_positive_int, required=True, help="number of sites")
    g.add_argument("--f", type=_positive_int, required=True, help="number of frequencies")
    g.add_argument("--k", type=int, help="antenna count (overrides --k-rule)")
    g.add_argument("--k-rule", choices=("half", "ffrac"), default="half")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", type=Path)

    s = sub.add_parser("solve", help="run one method on one instance, print metrics JSON")
    s.add_argument("--instance", type=Path, required=True)
    s.add_argument("--method", type=_method, required=True)
    s.add_argument("--shots", type=_positive_int, default=5000)
    s.add_argument("--layers", "-L", type=_positive_int)
    s.add_argument("--mixer-steps", "-M", type=_positive_int)
    s.add_argument("--total-time", "-T", type=_positive_float)
    s.add_argument("--beta", type=_positive_float)
    s.add_argument("--lambda-scale", type=_positive_float, default=2.0)
    s.add_argument("--clusters", type=_positive_int)
    s.add_argument("--iterations", type=_positive_int)
    s.add_argument("--restarts", type=_positive_int)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--time-limit-s", type=_positive_float, default=600.0)
    s.add_argument("--no-reference", action="store_true", help="skip the reference solve (no p_success or delta_alpha)")
    s.add_argument("--out", type=Path)

    e = sub.add_parser("exact", help="brute force or branch and bound")
    e.add_argument("--instance", type=Path, required=True)
    e.add_argument("--time-limit-s", type=_positive_float)
    e.add_argument("--out", type=Path)

    b = sub.add_parser("benchmark", help="run a plan file, write results CSV")
    b.add_argument("--plan", type=Path, required=True)
    b.add_argument("--out", type=Path, required=True)
    b.add_argument("--timings", type=Path, help="wall times per job (not reproducible, kept apart)")
    b.add_argument("--seed", type=int, help="override the plan seed")
    b.add_argument("--shots", type=_positive_int)
    b.add_argument("--time-limit-s", type=_positive_float)

    x = sub.add_parser("boxplot", help="boxplot statistics from a results CSV")
    x.add_argument("--results", type=Path, required=True)
    x.add_argument("--metric", choices=BOX_METRICS, required=True)
    x.add_argument("--out", type=Path)
    return p


def _emit(text: str, out: Path | None) -> None:
    if out is None:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")
    else:
        out.write_text(text if text.endswith("\n") else text + "\n")


def _cmd_generate(a) -> None:
    k = a.k if a.k is not None else k_for(a.n, a.f, a.k_rule)
    if not 0 <= k <= a.n:
        raise UsageError(f"--k must lie in [0, {a.n}]")
    inst = generate_instance(a.n, a.f, k, seed=a.seed)
    if a.out is None:
        _emit(json.dumps(inst.to_dict(), indent=1), None)
    else:
        save_instance(inst, a.out)


def _cmd_solve(a) -> None:
    inst = load_instance(a.instance)
    cfg = {key: val for key, val in (("layers", a.layers), ("mixer_steps", a.mixer_steps),
                                     ("total_time", a.total_time), ("beta", a.beta), ("clusters", a.clusters),
                                     ("iterations", a.iterations), ("restarts", a.restarts)) if val is not None}
    start = time.perf_counter()
    ref = None if a.no_reference else reference_solution(inst, a.time_limit_s)
    met = run_method(inst, a.method, cfg, seed=a.seed, shots=a.shots, time_limit=a.time_limit_s,
                     lambda_scale=a.lambda_scale, optimal_set=None if ref is None else ref.optimal_set)
    if ref is not None and met.best_cost is not None and ref.cost != 0:
        met.delta_alpha = delta_alpha(met.best_cost, ref.cost)
    met.wall_time = time.perf_counter() - start
    _emit(json.dumps({"method": a.method, **met.to_dict()}), a.out)


def _cmd_exact(a) -> None:
    inst = load_instance(a.instance)
    if a.time_limit_s is None and feasible_space_size(inst.n_sites, inst.n_freq, inst.n_antennas) <= 10**8:
        res = solve_brute_force(inst)
    else:
        res = solve_branch_and_bound(inst, time_limit=a.time_limit_s)
    _emit(json.dumps(res.to_dict()), a.out)


def _cmd_benchmark(a) -> None:
    try:
        plan = BenchmarkPlan.from_json(a.plan.read_text())
    except (TypeError, ValueError) as exc:
        raise UsageError(f"bad plan file: {exc}") from exc
    for attr, val in (("seed", a.seed), ("shots", a.shots), ("time_limit", a.time_limit_s)):
        if val is not None:
            setattr(plan, attr, val)
    rows, timings = run_benchmark(plan)
    write_results(rows, a.out)
    if a.timings is not None:
        write_results(timings, a.timings, columns=("n_sites", "n_freq", "n_antennas", "instance", "method",
                                                   "wall_time"))


def _cmd_boxplot(a) -> None:
    _emit(emit_boxplot_data(read_results(a.results), a.metric), a.out)


_COMMANDS = {"generate": _cmd_generate, "solve": _cmd_solve, "exact": _cmd_exact,
             "benchmark": _cmd_benchmark, "boxplot": _cmd_boxplot}


def cli_main(argv=None) -> int:
    """Exit code 0 on success, 2 on bad arguments, 1 on a runtime failure."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        _COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"mapp: error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"mapp: error: {exc}", file=sys.stderr)
        return 2
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    except MemoryCapError as exc:
        print(f"mapp: skipped: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:
        print(f"mapp: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0


def main() -> None:
    sys.exit(cli_main())


if __name__ == "__main__":
    main()
