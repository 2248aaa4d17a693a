"""Run the experiment plans in ``scripts/plans`` and write results plus boxplot tables.

    python scripts/run_plans.py [--out results/] [plan names...]

Outputs per plan: ``<name>.csv`` (deterministic), ``<name>.timings.csv`` and
``<name>.<metric>.box.csv`` for every metric that has values.
"""

import argparse
import sys
from pathlib import Path

from mapp.bench import BOX_METRICS, read_results
from mapp.cli import cli_main

PLANS = Path(__file__).resolve().parent / "plans"


def main(argv=None) -> int:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("names", nargs="*", help="plan names without .json (default: all)")
    p.add_argument("--out", type=Path, default=Path("results"))
    a = p.parse_args(argv)
    a.out.mkdir(parents=True, exist_ok=True)
    names = a.names or sorted(f.stem for f in PLANS.glob("*.json"))
    for name in names:
        res = a.out / f"{name}.csv"
        code = cli_main(["benchmark", "--plan", str(PLANS / f"{name}.json"), "--out", str(res),
                         "--timings", str(a.out / f"{name}.timings.csv")])
        if code:
            return code
        rows = read_results(res)
        for metric in BOX_METRICS:
            if any(r[metric] for r in rows):
                cli_main(["boxplot", "--results", str(res), "--metric", metric,
                          "--out", str(a.out / f"{name}.{metric}.box.csv")])
        print(f"{name}: {len(rows)} rows -> {res}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
