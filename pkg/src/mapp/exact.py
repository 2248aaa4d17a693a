"""Feasible-set enumeration and exact reference solvers.

Feasible assignments are ranked as ``subset_rank * F**k + digits`` where the
active-site subset is ranked lexicographically among ``k``-subsets and
``digits`` reads the labels of the active sites (in site order) as a base-F
number, most significant first.
"""

from __future__ import annotations

import itertools
import math
import time
from dataclasses import dataclass, field
from functools import cached_property

import numba as nb
import numpy as np

from .instance import Instance, cost, cost_many, feasible_space_size

__all__ = ["FeasibleBasis", "SolveResult", "lower_bound", "solve_branch_and_bound", "solve_brute_force"]

INT64_MAX = np.iinfo(np.int64).max


class FeasibleBasis:
    """Bijection between ``range(C(N,k) * F**k)`` and feasible label vectors."""

    def __init__(self, n_sites: int, n_freq: int, n_antennas: int):
        self.n_sites, self.n_freq, self.n_antennas = n_sites, n_freq, n_antennas
        self.size = feasible_space_size(n_sites, n_freq, n_antennas, bound=INT64_MAX)
        self.n_subsets = math.comb(n_sites, n_antennas)
        self.n_digits = n_freq**n_antennas
        n, k = n_sites, n_antennas
        # prefix[i, c] = number of subsets whose i-th element is < c given elements 0..i-1 fixed below c
        binom = np.array([[math.comb(n - 1 - j, k - 1 - i) if k - 1 - i >= 0 and n - 1 - j >= 0 else 0
                           for j in range(n)] for i in range(k)], dtype=np.int64).reshape(k, n)
        self._prefix = np.zeros((k, n + 1), dtype=np.int64)
        self._prefix[:, 1:] = np.cumsum(binom, axis=1)

    @classmethod
    def for_instance(cls, instance: Instance) -> "FeasibleBasis":
        return cls(instance.n_sites, instance.n_freq, instance.n_antennas)

    def __len__(self) -> int:
        return self.size

    def rank(self, assignment) -> int:
        return int(self.rank_many(np.asarray(assignment)[None, :])[0])

    def rank_many(self, labels: np.ndarray) -> np.ndarray:
        f = np.asarray(labels, dtype=np.int64)
        n, k, F = self.n_sites, self.n_antennas, self.n_freq
        if f.ndim != 2 or f.shape[1] != n:
            raise ValueError(f"expected label rows of length {n}")
        if f.min(initial=0) < 0 or f.max(initial=0) > F:
            raise ValueError(f"labels must lie in 0..{F}")
        active = f > 0
        if np.any(active.sum(axis=1) != k):
            raise ValueError(f"assignment is infeasible: needs exactly {k} active sites")
        if k == 0:
            return np.zeros(len(f), dtype=np.int64)
        pos = np.argsort(~active, axis=1, kind="stable")[:, :k]  # active sites, ascending
        prev = np.concatenate([np.zeros((len(f), 1), np.int64), pos[:, :-1] + 1], axis=1)
        rows = np.arange(k)[None, :]
        subset = (self._prefix[rows, pos] - self._prefix[rows, prev]).sum(axis=1)
        digits = np.take_along_axis(f, pos, axis=1) - 1
        weights = F ** np.arange(k - 1, -1, -1, dtype=np.int64)
        return subset * self.n_digits + digits @ weights

    def unrank(self, index: int) -> np.ndarray:
        index = int(index)
        if not 0 <= index < self.size:
            raise IndexError(f"index {index} outside [0, {self.size})")
        n, k, F = self.n_sites, self.n_antennas, self.n_freq
        s, d = divmod(index, self.n_digits)
        out = np.zeros(n, dtype=np.int64)
        c = 0
        for i in range(k):
            while s >= math.comb(n - 1 - c, k - 1 - i):
                s -= math.comb(n - 1 - c, k - 1 - i)
                c += 1
            out[c] = 1 + (d // F ** (k - 1 - i)) % F
            c += 1
        return out

    @cached_property
    def _digit_grid(self) -> np.ndarray:
        k, F = self.n_antennas, self.n_freq
        idx = np.arange(self.n_digits, dtype=np.int64)[:, None]
        return (idx // F ** np.arange(k - 1, -1, -1, dtype=np.int64)[None, :]) % F + 1

    def iter_labels(self, chunk: int = 1 << 18):
        """Yield ``(start_rank, labels)`` blocks covering the basis in rank order."""
        n, k = self.n_sites, self.n_antennas
        grid = self._digit_grid.astype(np.int8)
        per = max(1, chunk // self.n_digits)
        combos = itertools.combinations(range(n), k)
        start = 0
        while True:
            batch = list(itertools.islice(combos, per))
            subs = np.array(batch, dtype=np.int64).reshape(len(batch), k)
            if len(subs) == 0:
                return
            out = np.zeros((len(subs), self.n_digits, n), dtype=np.int8)
            if k:
                out[np.arange(len(subs))[:, None, None], np.arange(self.n_digits)[None, :, None],
                    subs[:, None, :]] = grid[None, :, :]
            block = out.reshape(-1, n)
            yield start, block
            start += len(block)

    def labels(self) -> np.ndarray:
        """All feasible label vectors, row ``i`` being ``unrank(i)``."""
        return np.concatenate([b for _, b in self.iter_labels(chunk=1 << 22)])


@dataclass
class SolveResult:
    assignment: np.ndarray
    cost: float
    optimal: bool
    nodes: int = 0
    wall_time: float = 0.0
    optimal_set: list[tuple[int, ...]] | None = field(default=None, repr=False)

    def to_dict(self) -> dict:
        d = {"assignment": [int(x) for x in self.assignment], "cost": self.cost,
             "optimal": self.optimal, "nodes": self.nodes, "wall_time": self.wall_time}
        if self.optimal_set is not None:
            d["optimal_set"] = [list(a) for a in self.optimal_set]
        return d


def _tie_tol(value: float) -> float:
    return 1e-9 * max(1.0, abs(value))


def solve_brute_force(instance: Instance, budget: int = 10**8, chunk: int = 1 << 18) -> SolveResult:
    """Scan the whole feasible set; returns every optimum (lowest rank first)."""
    t0 = time.perf_counter()
    size = feasible_space_size(instance.n_sites, instance.n_freq, instance.n_antennas)
    if size > budget:
        raise ValueError(f"feasible space {size} exceeds brute-force budget {budget}; use branch and bound")
    basis = FeasibleBasis.for_instance(instance)
    best = np.inf
    winners: list[np.ndarray] = []
    for _, block in basis.iter_labels(chunk):
        c = cost_many(instance, block)
        m = float(c.min())
        if m < best - _tie_tol(best if np.isfinite(best) else m):
            best = m
            winners = []
        if m <= best + _tie_tol(best):
            winners.append(block[c <= best + _tie_tol(best)].astype(np.int64))
    opt = np.concatenate(winners)
    # a later block may have lowered best within tolerance; keep only true ties
    keep = cost_many(instance, opt) <= best + _tie_tol(best)
    opt = opt[keep]
    order = np.argsort(basis.rank_many(opt), kind="stable")
    opt = opt[order]
    return SolveResult(opt[0].copy(), cost(instance, opt[0]), True, nodes=size,
                       wall_time=time.perf_counter() - t0,
                       optimal_set=[tuple(int(x) for x in row) for row in opt])


# -- branch and bound --------------------------------------------------------

BOUND_OVERLAP, BOUND_AREA = 0, 1


@nb.njit(cache=True)
def _lower_bound(d, order, acc, areas, alpha, n_freq, r, mode):
    """Admissible bound on the cost still to come for sites ``order[d:]``.

    Every remaining antenna contributes at least ``-A_u`` plus the cheapest
    label choice, counting its interaction with antennas already placed.
    Future-future overlaps are non-negative and dropped.  ``mode == BOUND_AREA``
    keeps only the ``-A_u`` part.
    """
    n = order.size
    m = n - d
    if r == 0:
        return 0.0
    vals = np.empty(m)
    for t in range(m):
        u = order[d + t]
        best = np.inf
        for q in range(1, n_freq + 1):
            x = alpha * q if q >= 2 else 0.0
            if mode == BOUND_OVERLAP:
                x += acc[u, q]
            if x < best:
                best = x
        if mode == BOUND_AREA:
            best = 0.0
        vals[t] = best - areas[u]
    vals.sort()
    return vals[:r].sum()


@nb.njit(cache=True)
def _bb_kernel(order, areas, W, alpha, n_freq, k, mode, st_d, lab, cand, ncand, ptr, partial,
               rem, acc, best, best_labels, node_budget, stop_at_incumbent, tol):
    """Resumable depth-first branch and bound.

    Returns ``(status, nodes)``: status 0 = search finished, 1 = paused on the
    node budget (state arrays hold the frontier), 2 = stopped at first incumbent.
    """
    n = order.size
    d = st_d[0]
    nodes = 0
    margs = np.empty(n_freq + 1)
    while True:
        if d < 0:
            st_d[0] = d
            return 0, nodes
        if nodes >= node_budget:
            st_d[0] = d
            return 1, nodes
        if ptr[d] == -1:
            # first visit of this node
            nodes += 1
            if d == n or rem[d] == 0:
                if best[0] == np.inf or partial[d] < best[0] - tol * max(1.0, abs(best[0])):
                    best[0] = partial[d]
                    best_labels[:] = 0
                    for i in range(d):
                        best_labels[order[i]] = lab[i]
                    if stop_at_incumbent:
                        d -= 1
                        st_d[0] = d
                        return 2, nodes
                d -= 1
                continue
            bound = partial[d] + _lower_bound(d, order, acc[d], areas, alpha, n_freq, rem[d], mode)
            if best[0] < np.inf and bound >= best[0] - tol * max(1.0, abs(best[0])):
                d -= 1
                continue
            site = order[d]
            c = 0
            if rem[d] > 0:
                for q in range(1, n_freq + 1):
                    cand[d, c] = q
                    margs[c] = acc[d, site, q] - areas[site] + (alpha * q if q >= 2 else 0.0)
                    c += 1
            if n - d - 1 >= rem[d]:
                cand[d, c] = 0
                margs[c] = 0.0
                c += 1
            # insertion sort by marginal cost, stable in label order
            for i in range(1, c):
                j = i
                while j > 0 and margs[j] < margs[j - 1]:
                    margs[j], margs[j - 1] = margs[j - 1], margs[j]
                    cand[d, j], cand[d, j - 1] = cand[d, j - 1], cand[d, j]
                    j -= 1
            ncand[d] = c
            ptr[d] = 0
        if ptr[d] >= ncand[d]:
            ptr[d] = -1
            d -= 1
            continue
        q = cand[d, ptr[d]]
        ptr[d] += 1
        site = order[d]
        lab[d] = q
        if q > 0:
            partial[d + 1] = partial[d] + acc[d, site, q] - areas[site] + (alpha * q if q >= 2 else 0.0)
            rem[d + 1] = rem[d] - 1
            for u in range(n):
                for qq in range(n_freq + 1):
                    acc[d + 1, u, qq] = acc[d, u, qq] + W[site, u, q, qq]
        else:
            partial[d + 1] = partial[d]
            rem[d + 1] = rem[d]
            acc[d + 1] = acc[d]
        d += 1
        ptr[d] = -1


def _site_order(instance: Instance) -> np.ndarray:
    return np.argsort(-instance.areas, kind="stable").astype(np.int64)


def _mode(bound: str) -> int:
    try:
        return {"overlap": BOUND_OVERLAP, "area": BOUND_AREA}[bound]
    except KeyError:
        raise ValueError(f"unknown bound {bound!r}; use 'overlap' or 'area'") from None


def lower_bound(instance: Instance, prefix, bound: str = "overlap") -> float:
    """Node bound after fixing labels of the first ``len(prefix)`` sites in search order.

    ``prefix[i]`` is the label of site ``order[i]`` where ``order`` sorts
    sites by decreasing area; the result is ``partial cost + bound``.
    """
    order = _site_order(instance)
    n, F = instance.n_sites, instance.n_freq
    acc = np.zeros((n, F + 1))
    part = 0.0
    placed = 0
    for i, q in enumerate(prefix):
        site = order[i]
        if q > 0:
            part += acc[site, q] - instance.areas[site] + (instance.alpha * q if q >= 2 else 0.0)
            acc += instance.overlap[site, :, q, :]
            placed += 1
    r = instance.n_antennas - placed
    if r < 0 or n - len(prefix) < r:
        raise ValueError("prefix cannot be completed feasibly")
    return part + _lower_bound(len(prefix), order, acc, np.asarray(instance.areas), instance.alpha,
                               F, r, _mode(bound))


def solve_branch_and_bound(instance: Instance, time_limit: float | None = None, bound: str = "overlap",
                           node_limit: int | None = None, chunk_nodes: int = 200_000) -> SolveResult:
    """Depth-first branch and bound over sites in decreasing-area order.

    On hitting ``time_limit`` (seconds) or ``node_limit`` the best incumbent
    is returned with ``optimal=False``.  ``time_limit=0`` stops at the first
    feasible leaf.
    """
    t0 = time.perf_counter()
    n, F, k = instance.n_sites, instance.n_freq, instance.n_antennas
    order = _site_order(instance)
    W = np.ascontiguousarray(instance.overlap)
    areas = np.ascontiguousarray(instance.areas)
    st_d = np.zeros(1, dtype=np.int64)
    lab = np.zeros(n + 1, dtype=np.int64)
    cand = np.zeros((n + 1, F + 1), dtype=np.int64)
    ncand = np.zeros(n + 1, dtype=np.int64)
    ptr = np.full(n + 1, -1, dtype=np.int64)
    partial = np.zeros(n + 1)
    rem = np.zeros(n + 1, dtype=np.int64)
    rem[0] = k
    acc = np.zeros((n + 1, n, F + 1))
    best = np.array([np.inf])
    best_labels = np.zeros(n, dtype=np.int64)
    mode = _mode(bound)
    nodes = 0
    optimal = False
    first = time_limit is not None and time_limit <= 0
    while True:
        budget = chunk_nodes if node_limit is None else max(0, min(chunk_nodes, node_limit - nodes))
        if not np.isfinite(best[0]):
            budget = max(budget, 1)
        status, done = _bb_kernel(order, areas, W, instance.alpha, F, k, mode, st_d, lab, cand, ncand, ptr,
                                  partial, rem, acc, best, best_labels, budget, first, 1e-12)
        nodes += done
        if status == 0:
            optimal = True
            break
        if status == 2:
            break
        if not np.isfinite(best[0]):
            continue
        if node_limit is not None and nodes >= node_limit:
            break
        if time_limit is not None and time.perf_counter() - t0 >= time_limit:
            break
    return SolveResult(best_labels.copy(), cost(instance, best_labels), optimal, nodes=nodes,
                       wall_time=time.perf_counter() - t0)
