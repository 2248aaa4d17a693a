"""SPLIT: cluster the sites, solve each cluster under a local antenna budget, reconcile.

Each iteration builds one subproblem per cluster (cross-cluster overlaps
dropped), solves them independently, concatenates the disjoint solutions,
and runs a greedy constraint-preserving sweep.  The budgets then follow the
antennas that the sweep moved between clusters.  The plain variant keeps
the budgets fixed and sweeps with single-bit QUBO flips instead.
"""

from __future__ import annotations

import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from scipy.spatial.distance import pdist, squareform
from sklearn.cluster import KMeans

from .anneal import AnnealConfig, custom_sa_run, delta_cost_onsite, delta_cost_swap
from .exact import solve_branch_and_bound
from .instance import Instance, assignment_to_bits, cost, is_feasible
from .qsim import QaaSchedule, run_metrics, run_qaa_app, sample_counts
from .qubo import QuboModel, qubo_value, to_qubo

__all__ = ["ClusterPartition", "SplitResult", "Subproblem", "SubproblemError", "SUBSOLVERS",
           "build_subproblems", "initial_budgets", "spectral_cluster", "split_solve",
           "sweep_update", "sweep_update_plain", "update_budgets"]

SUBSOLVERS = ("bb", "qaa-app", "custom-sa")
SWEEP_CAP = 50


@dataclass(frozen=True)
class ClusterPartition:
    labels: np.ndarray
    budgets: np.ndarray

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=np.int64)
        budgets = np.asarray(self.budgets, dtype=np.int64)
        if labels.size and (labels.min() < 0 or labels.max() >= budgets.size):
            raise ValueError("cluster label out of range")
        if np.any(budgets < 0) or np.any(budgets > np.bincount(labels, minlength=budgets.size)):
            raise ValueError("each budget must lie in [0, cluster size]")
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "budgets", budgets)

    @property
    def n_clusters(self) -> int:
        return self.budgets.size

    @property
    def sizes(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.n_clusters)

    def members(self, c: int) -> np.ndarray:
        return np.flatnonzero(self.labels == c)

    def with_budgets(self, budgets) -> "ClusterPartition":
        return replace(self, budgets=np.asarray(budgets, dtype=np.int64))


@dataclass(frozen=True)
class Subproblem:
    cluster: int
    sites: np.ndarray
    instance: Instance


class SubproblemError(RuntimeError):
    def __init__(self, cluster: int, cause: Exception):
        super().__init__(f"subproblem for cluster {cluster} failed: {cause!r}")
        self.cluster = cluster


def _canonical(labels: np.ndarray) -> np.ndarray:
    # number clusters by first appearance so equal partitions compare equal
    uniq, first, inv = np.unique(labels, return_index=True, return_inverse=True)
    rank = np.argsort(np.argsort(first))
    return rank[inv].astype(np.int64)


def spectral_cluster(instance: Instance, num_clusters: int, seed: int = 0) -> ClusterPartition:
    """Gaussian-affinity spectral clustering of the site coordinates; budgets start at zero."""
    n = instance.n_sites
    if not 1 <= num_clusters <= n:
        raise ValueError(f"num_clusters must lie in [1, {n}]")
    zeros = np.zeros(num_clusters, dtype=np.int64)
    if num_clusters == 1:
        return ClusterPartition(np.zeros(n, dtype=np.int64), zeros)
    if num_clusters == n:
        return ClusterPartition(np.arange(n), zeros)
    dist = pdist(instance.sites)
    sigma = float(np.median(dist))
    if sigma == 0.0:
        return ClusterPartition(np.arange(n) % num_clusters, zeros)
    aff = np.exp(-squareform(dist) ** 2 / (2 * sigma**2))
    np.fill_diagonal(aff, 0.0)
    dinv = 1.0 / np.sqrt(np.maximum(aff.sum(axis=1), 1e-300))
    lap = np.eye(n) - dinv[:, None] * aff * dinv[None, :]
    _, vecs = np.linalg.eigh(lap)
    emb = vecs[:, :num_clusters]
    km = KMeans(num_clusters, init="k-means++", n_init=10, max_iter=300, random_state=seed).fit(emb)
    labels = _canonical(km.labels_)
    if np.unique(labels).size < num_clusters:
        raise RuntimeError("k-means produced an empty cluster")
    return ClusterPartition(labels, zeros)


def initial_budgets(partition: ClusterPartition, k: int) -> ClusterPartition:
    """Budgets proportional to cluster size, rounded by largest remainder (ties to the lower index)."""
    sizes = partition.sizes
    n = int(sizes.sum())
    if not 0 <= k <= n:
        raise ValueError(f"k={k} outside [0, {n}]")
    quota = k * sizes / n
    budgets = np.floor(quota).astype(np.int64)
    rest = quota - budgets
    for c in sorted(range(sizes.size), key=lambda c: (-rest[c], c)):
        if budgets.sum() == k:
            break
        if budgets[c] < sizes[c]:
            budgets[c] += 1
    # a cap can only bind if rounding overshot a small cluster; fill anywhere with room
    c = 0
    while budgets.sum() < k:
        if budgets[c] < sizes[c]:
            budgets[c] += 1
        c = (c + 1) % sizes.size
    return partition.with_budgets(budgets)


def build_subproblems(instance: Instance, partition: ClusterPartition) -> list[Subproblem]:
    if partition.labels.size != instance.n_sites:
        raise ValueError("partition does not match the instance")
    if int(partition.budgets.sum()) != instance.n_antennas:
        raise ValueError("budgets must sum to the antenna count")
    out = []
    for c in range(partition.n_clusters):
        sites = partition.members(c)
        out.append(Subproblem(c, sites, instance.subinstance(sites, int(partition.budgets[c]))))
    return out


def update_budgets(partition: ClusterPartition, assignment) -> ClusterPartition:
    """Budgets recounted from the active sites of ``assignment``."""
    f = np.asarray(assignment)
    return partition.with_budgets(np.bincount(partition.labels, weights=f > 0,
                                              minlength=partition.n_clusters).astype(np.int64))


def _improves(delta: float, current: float) -> bool:
    return delta < -1e-12 * max(1.0, abs(current))


def sweep_update(instance: Instance, partition: ClusterPartition, assignment,
                 max_sweeps: int = SWEEP_CAP) -> tuple[np.ndarray, float]:
    """Greedy onsite retuning plus cross-cluster label swaps until nothing improves."""
    f = np.array(assignment, dtype=np.int64)
    if not is_feasible(instance, f):
        raise ValueError("sweep_update needs a feasible assignment")
    n, F = instance.n_sites, instance.n_freq
    lab = partition.labels
    pairs = [(v, u) for v in range(n) for u in range(v + 1, n) if lab[v] != lab[u]]
    current = cost(instance, f)
    for _ in range(max_sweeps):
        moved = False
        for v in range(n):
            if f[v] == 0:
                continue
            for p in range(1, F + 1):
                if p == f[v]:
                    continue
                d = delta_cost_onsite(instance, f, v, p)
                if _improves(d, current):
                    f[v] = p
                    current += d
                    moved = True
        for v, u in pairs:
            if f[v] == f[u]:
                continue
            d = delta_cost_swap(instance, f, v, u)
            if _improves(d, current):
                f[v], f[u] = f[u], f[v]
                current += d
                moved = True
        if not moved:
            break
    return f, cost(instance, f)


def sweep_update_plain(model: QuboModel, bits, max_sweeps: int = SWEEP_CAP) -> tuple[np.ndarray, float]:
    """Greedy single-bit flips on the QUBO in index order until no flip improves."""
    x = np.array(bits, dtype=np.int64)
    J = model.coupling
    h = model.linear + J @ x
    current = float(qubo_value(model, x))
    for _ in range(max_sweeps):
        moved = False
        for i in range(x.size):
            sgn = 1 - 2 * x[i]
            d = sgn * h[i]
            if _improves(d, current):
                x[i] += sgn
                h += sgn * J[i]
                current += d
                moved = True
        if not moved:
            break
    return x.astype(np.uint8), float(qubo_value(model, x))


@dataclass
class SplitResult:
    assignment: np.ndarray
    cost: float
    optimal: bool = False
    nodes: int = 0
    wall_time: float = 0.0
    iterations: int = 0
    partition: ClusterPartition | None = None
    trace: list[dict] = field(default_factory=list, repr=False)

    def to_dict(self) -> dict:
        return {"assignment": [int(x) for x in self.assignment], "cost": self.cost,
                "wall_time": self.wall_time, "iterations": self.iterations}


def _sub_seed(seed: int, iteration: int, cluster: int) -> int:
    return int(np.random.SeedSequence([int(seed), iteration, cluster]).generate_state(1)[0])


def _solve_one(sub: Subproblem, subsolver: str, seed: int, opts: dict) -> np.ndarray:
    inst = sub.instance
    if inst.n_antennas == 0:
        return np.zeros(inst.n_sites, dtype=np.int64)
    if subsolver == "bb":
        return solve_branch_and_bound(inst, time_limit=opts.get("time_limit")).assignment
    if subsolver == "custom-sa":
        cfg = replace(opts.get("anneal") or AnnealConfig(restarts=100), seed=seed)
        return custom_sa_run(inst, cfg).feasible_assignment
    state = run_qaa_app(inst, opts.get("schedule") or QaaSchedule.app())
    met = run_metrics(sample_counts(state, opts.get("shots", 5000), seed), inst)
    return np.array(met.best_assignment, dtype=np.int64)


def split_solve(instance: Instance, num_clusters: int, subsolver: str = "bb", iterations: int = 10,
                seed: int = 0, *, plain: bool = False, schedule: QaaSchedule | None = None,
                shots: int = 5000, time_limit: float | None = None, anneal: AnnealConfig | None = None,
                penalty: float | None = None, workers: int = 1, trace_path=None) -> SplitResult:
    """Run the decomposition loop; the returned assignment is always feasible."""
    if subsolver not in SUBSOLVERS:
        raise ValueError(f"subsolver must be one of {SUBSOLVERS}")
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    start = time.perf_counter()
    opts = {"schedule": schedule, "shots": shots, "time_limit": time_limit, "anneal": anneal}
    part = initial_budgets(spectral_cluster(instance, num_clusters, seed), instance.n_antennas)
    model = to_qubo(instance, penalty=penalty) if plain else None
    best_f, best_cost = None, np.inf
    previous = None
    trace = []
    done = 0
    for it in range(iterations):
        subs = build_subproblems(instance, part)

        def work(sub, it=it):
            try:
                return _solve_one(sub, subsolver, _sub_seed(seed, it, sub.cluster), opts)
            except Exception as exc:
                raise SubproblemError(sub.cluster, exc) from exc

        if workers > 1:
            with ThreadPoolExecutor(workers) as pool:
                parts = list(pool.map(work, subs))
        else:
            parts = [work(s) for s in subs]
        f = np.zeros(instance.n_sites, dtype=np.int64)
        sub_costs = []
        for sub, sol in zip(subs, parts):
            f[sub.sites] = sol
            sub_costs.append(cost(sub.instance, sol))
        if plain:
            bits, _ = sweep_update_plain(model, assignment_to_bits(instance.layout, f))
            blk = instance.layout.blocks(bits)
            if np.all(blk.sum(axis=-1) == 1) and blk[:, 1:].sum() == instance.n_antennas:
                f = blk.argmax(axis=-1).astype(np.int64)
            c = cost(instance, f)
        else:
            f, c = sweep_update(instance, part, f)
            part = update_budgets(part, f)
        done = it + 1
        trace.append({"iteration": done, "budgets": [int(b) for b in part.budgets],
                      "subproblem_costs": sub_costs, "cost": c})
        if c < best_cost:
            best_f, best_cost = f.copy(), c
        if previous is not None and c == previous:
            break
        previous = c
    if trace_path is not None:
        with Path(trace_path).open("w") as fh:
            for row in trace:
                fh.write(json.dumps(row) + "\n")
    return SplitResult(best_f, float(best_cost), False, 0, time.perf_counter() - start, done, part, trace)
