"""Benchmark plans, per-method runners, results CSV and boxplot summaries.

Result rows hold only seed-determined quantities, so repeated runs give
byte-identical CSVs; wall times go to a separate timings file.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from time import perf_counter

import numpy as np

from .anneal import AnnealConfig, custom_sa_run, sa_run
from .exact import solve_branch_and_bound, solve_brute_force
from .instance import Instance, feasible_space_size, generate_instance, optimal_k
from .metrics import Metrics, delta_alpha
from .qsim import MemoryCapError, QaaSchedule, run_metrics, run_qaa_app, run_qaa_basic, sample_counts
from .qubo import default_penalty, to_qubo
from .split import split_solve

__all__ = ["BRUTE_FORCE_LIMIT", "BenchmarkPlan", "METHODS", "emit_boxplot_data", "instance_seed",
           "k_for", "read_results", "reference_solution", "run_benchmark", "run_method", "write_results"]

METHODS = ("QAA-BASIC", "QAA-APP", "SA", "CUSTOM-SA", "BB-REF", "QAA-APP-SPLIT", "BB-APP-SPLIT",
           "BB-APP-SPLIT-PLAIN", "EXACT")
BRUTE_FORCE_LIMIT = 10**8
WORKERS_ENV = "MAPP_WORKERS"
COLUMNS = ("n_sites", "n_freq", "n_antennas", "instance", "method", "status", "p_feasible", "p_success",
           "delta_alpha", "best_cost", "best_assignment")
BOX_METRICS = ("p_feasible", "p_success", "delta_alpha", "best_cost")


def k_for(n_sites: int, n_freq: int, rule: str) -> int:
    if rule == "half":
        return n_sites // 2
    if rule == "ffrac":
        return optimal_k(n_sites, n_freq)
    raise ValueError(f"unknown k rule {rule!r}")


@dataclass
class BenchmarkPlan:
    sizes: list[tuple[int, int, int]]
    methods: list[str]
    instances: int = 20
    seed: int = 0
    configs: dict[str, dict] = field(default_factory=dict)
    shots: int = 5000
    time_limit: float = 600.0
    lambda_scale: float = 2.0

    def __post_init__(self):
        self.sizes = [tuple(int(x) for x in s) for s in self.sizes]
        for n, f, k in self.sizes:
            if n < 1 or f < 1 or not 0 <= k <= n:
                raise ValueError(f"bad size point {(n, f, k)}")
        bad = [m for m in self.methods if m not in METHODS]
        if bad:
            raise ValueError(f"unknown methods {bad}; choose from {METHODS}")
        if self.instances < 1 or self.shots < 1:
            raise ValueError("instances and shots must be positive")

    @classmethod
    def from_sites(cls, ns, n_freq: int, k_rule: str, methods, **kw) -> "BenchmarkPlan":
        return cls([(n, n_freq, k_for(n, n_freq, k_rule)) for n in ns], list(methods), **kw)

    @classmethod
    def from_json(cls, text: str) -> "BenchmarkPlan":
        d = json.loads(text)
        if "sites" in d:
            d = dict(d)
            ns, f, rule = d.pop("sites"), d.pop("n_freq"), d.pop("k_rule", "half")
            d["sizes"] = [(n, f, k_for(n, f, rule)) for n in ns]
        return cls(**d)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=1)


def instance_seed(plan_seed: int, size: tuple[int, int, int], index: int) -> int:
    return int(np.random.SeedSequence([int(plan_seed), *size, index]).generate_state(1)[0])


def _method_seed(seed: int, method: str) -> int:
    return int(np.random.SeedSequence([int(seed), zlib.crc32(method.encode())]).generate_state(1)[0])


@dataclass
class Reference:
    cost: float
    optimal_set: list | None
    method: str


def reference_solution(instance: Instance, time_limit: float = 600.0) -> Reference:
    """Brute force when the feasible set is small enough, else time-limited branch and bound."""
    n, f, k = instance.n_sites, instance.n_freq, instance.n_antennas
    if feasible_space_size(n, f, k) <= BRUTE_FORCE_LIMIT:
        res = solve_brute_force(instance, budget=BRUTE_FORCE_LIMIT)
        return Reference(res.cost, res.optimal_set, "EXACT")
    res = solve_branch_and_bound(instance, time_limit=time_limit)
    return Reference(res.cost, None, "BB-REF")


def _schedule(base, cfg: dict, instance: Instance, lambda_scale: float) -> QaaSchedule:
    keys = {"total_time", "layers", "mixer_steps", "beta", "ordering"}
    sched = base(**{k: v for k, v in cfg.items() if k in keys})
    if sched.penalty is None and base is QaaSchedule.basic:
        sched = replace(sched, penalty=default_penalty(instance, lambda_scale))
    return sched


def run_method(instance: Instance, method: str, cfg: dict | None = None, *, seed: int = 0,
               shots: int = 5000, time_limit: float = 600.0, lambda_scale: float = 2.0,
               optimal_set=None) -> Metrics:
    """One method on one instance; raises :class:`MemoryCapError` past the memory caps."""
    cfg = dict(cfg or {})
    if method in ("QAA-BASIC", "QAA-APP"):
        if method == "QAA-BASIC":
            state = run_qaa_basic(instance, _schedule(QaaSchedule.basic, cfg, instance, lambda_scale))
        else:
            state = run_qaa_app(instance, _schedule(QaaSchedule.app, cfg, instance, lambda_scale))
        return run_metrics(sample_counts(state, shots, seed), instance, optimal_set)
    if method in ("SA", "CUSTOM-SA"):
        anneal_keys = {"sweeps", "t_initial", "t_final", "restarts", "greedy"}
        acfg = {"restarts": 1000 if method == "SA" else 100, **{k: v for k, v in cfg.items() if k in anneal_keys}}
        config = AnnealConfig(seed=seed, **acfg)
        if method == "SA":
            res = sa_run(to_qubo(instance, default_penalty(instance, lambda_scale)), config, instance=instance)
        else:
            res = custom_sa_run(instance, config)
        assign, value = res.feasible_assignment, res.feasible_cost
    elif method in ("BB-REF", "EXACT"):
        res = (solve_branch_and_bound(instance, time_limit=cfg.get("time_limit", time_limit)) if method == "BB-REF"
               else solve_brute_force(instance, budget=BRUTE_FORCE_LIMIT))
        assign, value = res.assignment, res.cost
    else:
        sub = {"QAA-APP-SPLIT": "qaa-app", "BB-APP-SPLIT": "bb", "BB-APP-SPLIT-PLAIN": "bb"}[method]
        sched = _schedule(QaaSchedule.app, cfg, instance, lambda_scale) if sub == "qaa-app" else None
        res = split_solve(instance, int(cfg.get("clusters", 3)), sub, int(cfg.get("iterations", 10)), seed,
                          plain=method.endswith("PLAIN"), schedule=sched, shots=shots,
                          time_limit=cfg.get("sub_time_limit"),
                          penalty=default_penalty(instance, lambda_scale))
        assign, value = res.assignment, res.cost
    if assign is None:
        return Metrics()
    return Metrics(best_cost=float(value), best_assignment=tuple(int(x) for x in assign))


def _job(plan: BenchmarkPlan, size, index: int) -> tuple[list[dict], list[dict]]:
    inst = generate_instance(*size, seed=instance_seed(plan.seed, size, index))
    t = perf_counter()
    ref = reference_solution(inst, plan.time_limit)
    timings = [{"n_sites": size[0], "n_freq": size[1], "n_antennas": size[2], "instance": index,
                "method": f"reference:{ref.method}", "wall_time": perf_counter() - t}]
    rows = []
    for method in plan.methods:
        row = {"n_sites": size[0], "n_freq": size[1], "n_antennas": size[2], "instance": index,
               "method": method, "status": "ok"}
        t = perf_counter()
        try:
            met = run_method(inst, method, plan.configs.get(method), seed=_method_seed(instance_seed(
                plan.seed, size, index), method), shots=plan.shots, time_limit=plan.time_limit,
                lambda_scale=plan.lambda_scale, optimal_set=ref.optimal_set)
        except MemoryCapError:
            met, row["status"] = Metrics(), "skipped"
        if met.best_cost is not None and ref.cost != 0:
            met.delta_alpha = delta_alpha(met.best_cost, ref.cost)
        d = met.to_dict()
        row.update({k: d[k] for k in COLUMNS if k in d})
        rows.append(row)
        timings.append({**{k: row[k] for k in COLUMNS[:5]}, "wall_time": perf_counter() - t})
    return rows, timings


def run_benchmark(plan: BenchmarkPlan, workers: int | None = None) -> tuple[list[dict], list[dict]]:
    """All (size point, instance) jobs; rows come back in plan order whatever the pool does."""
    if workers is None:
        workers = int(os.environ.get(WORKERS_ENV, "1"))
    jobs = [(size, i) for size in plan.sizes for i in range(plan.instances)]
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            out = list(pool.map(_job, [plan] * len(jobs), *zip(*jobs)))
    else:
        out = [_job(plan, size, i) for size, i in jobs]
    rows = [r for part, _ in out for r in part]
    timings = [t for _, part in out for t in part]
    return rows, timings


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(float(value))
    if isinstance(value, (list, tuple)):
        return " ".join(str(int(x)) for x in value)
    return str(value)


def write_results(rows: list[dict], path=None, columns=COLUMNS) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(r.get(c)) for c in columns])
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text)
    return text


def read_results(path) -> list[dict]:
    with Path(path).open(newline="") as fh:
        return list(csv.DictReader(fh))


def _box(values: np.ndarray) -> dict:
    q1, med, q3 = np.percentile(values, [25, 50, 75])
    iqr = q3 - q1
    lo_fence, hi_fence = q1 - 1.5 * iqr, q3 + 1.5 * iqr
    inside = values[(values >= lo_fence) & (values <= hi_fence)]
    out = values[(values < lo_fence) | (values > hi_fence)]
    return {"median": float(med), "q1": float(q1), "q3": float(q3), "whisker_lo": float(inside.min()),
            "whisker_hi": float(inside.max()), "outliers": sorted(float(x) for x in out)}


def emit_boxplot_data(rows: list[dict], metric: str, path=None) -> str:
    """Boxplot statistics per (size, method) using the 1.5 IQR whisker rule."""
    if metric not in BOX_METRICS:
        raise ValueError(f"unknown metric {metric!r}; choose from {BOX_METRICS}")
    if not rows:
        raise ValueError("no results to summarise")
    groups: dict[tuple[str, str], list[float]] = {}
    for r in rows:
        key = (f"{r['n_sites']}-{r['n_freq']}-{r['n_antennas']}", r["method"])
        groups.setdefault(key, [])
        val = r.get(metric)
        if val not in (None, ""):
            v = float(val)
            if not math.isnan(v):
                groups[key].append(v)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["size", "method", "median", "q1", "q3", "whisker_lo", "whisker_hi", "outliers"])
    for (size, method), vals in groups.items():
        if not vals:
            continue
        b = _box(np.array(vals))
        w.writerow([size, method, *(repr(b[k]) for k in ("median", "q1", "q3", "whisker_lo", "whisker_hi")),
                    " ".join(repr(x) for x in b["outliers"])])
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text)
    return text
