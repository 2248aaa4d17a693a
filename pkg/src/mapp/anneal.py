"""Simulated annealing on the QUBO (single flips) and on the feasible set.

``sa_run`` walks all ``2**Q`` bitstrings with penalty-weighted energies.
``custom_sa_run`` never leaves the feasible set: it either retunes one
active antenna or swaps the labels of two sites, which can move an antenna
to an empty site.  Both keep incremental fields so a proposal costs
``O(Q)`` and ``O(degree * F)`` respectively.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numba as nb
import numpy as np

from .exact import FeasibleBasis, SolveResult
from .instance import Instance, assignment_to_bits, cost
from .qubo import QuboModel

__all__ = ["AnnealConfig", "AnnealResult", "custom_sa_run", "delta_cost_onsite", "delta_cost_swap",
           "delta_flip", "restart_seed", "sa_run"]


@dataclass(frozen=True)
class AnnealConfig:
    """Geometric schedule from ``t_initial`` to ``t_final`` over ``sweeps`` sweeps.

    Temperatures left as ``None`` are set per problem: ``t_initial`` to the
    largest ``|delta|`` over sampled random moves, ``t_final`` to
    ``1e-3 * t_initial``.  ``greedy`` accepts only non-worsening moves.
    """

    sweeps: int = 500
    t_initial: float | None = None
    t_final: float | None = None
    restarts: int = 100
    seed: int = 0
    greedy: bool = False
    trace: bool = False
    check_feasible: bool = False

    def __post_init__(self):
        if self.sweeps < 1 or self.restarts < 1:
            raise ValueError("sweeps and restarts must be positive")
        for name in ("t_initial", "t_final"):
            t = getattr(self, name)
            if t is not None and not t > 0:
                raise ValueError(f"{name} must be positive")
        if self.t_initial is not None and self.t_final is not None and self.t_final > self.t_initial:
            raise ValueError("t_final must not exceed t_initial")

    def temperatures(self, t0: float, t1: float) -> np.ndarray:
        if self.sweeps == 1:
            return np.array([t0])
        return t0 * (t1 / t0) ** (np.arange(self.sweeps) / (self.sweeps - 1))


@dataclass
class AnnealResult:
    best_bits: np.ndarray
    best_value: float
    feasible_assignment: np.ndarray | None
    feasible_cost: float | None
    wall_time: float = 0.0
    t_initial: float = 0.0
    t_final: float = 0.0
    traces: list[np.ndarray] | None = field(default=None, repr=False)

    def to_solve_result(self) -> SolveResult:
        if self.feasible_assignment is None:
            raise ValueError("the run never visited a feasible bitstring")
        return SolveResult(self.feasible_assignment, float(self.feasible_cost), False, 0, self.wall_time)


def restart_seed(seed: int, restart: int) -> int:
    """Independent 32-bit stream seed for one restart."""
    return int(np.random.SeedSequence([int(seed), int(restart)]).generate_state(1)[0])


def _resolve_temps(config: AnnealConfig, sample_max: float) -> tuple[float, float]:
    t0 = config.t_initial
    if t0 is None:
        t0 = sample_max if sample_max > 0 else 1.0
    t1 = config.t_final if config.t_final is not None else 1e-3 * t0
    return float(t0), float(min(t1, t0))


# -- QUBO single-flip annealing -----------------------------------------------

def delta_flip(model: QuboModel, bits, i: int) -> float:
    """QUBO change from flipping bit ``i``."""
    x = np.asarray(bits, dtype=float)
    field_i = model.linear[i] + model.coupling[i] @ x
    return float((1.0 - 2.0 * x[i]) * field_i)


@nb.njit(cache=True)
def _nb_seed(seed):
    np.random.seed(seed)


@nb.njit(cache=True)
def _sa_kernel(lin, J, const, site_of, is_active, n_sites, k, temps, q_steps, greedy, seed, trace):
    _nb_seed(seed)
    q = lin.size
    x = np.empty(q, dtype=np.int8)
    for i in range(q):
        x[i] = 1 if np.random.random() < 0.5 else 0
    h = lin.copy()
    for i in range(q):
        if x[i]:
            for j in range(q):
                h[j] += J[i, j]
    val = const
    for i in range(q):
        if x[i]:
            val += lin[i]
            for j in range(i + 1, q):
                if x[j]:
                    val += J[i, j]
    cnt = np.zeros(n_sites, dtype=np.int64)
    n_act = 0
    for i in range(q):
        if x[i]:
            cnt[site_of[i]] += 1
            if is_active[i]:
                n_act += 1
    n_ok = 0
    for v in range(n_sites):
        if cnt[v] == 1:
            n_ok += 1
    best_val = val
    best_x = x.copy()
    feas_val = np.inf
    feas_x = x.copy()
    if n_ok == n_sites and n_act == k:
        feas_val = val
    step = 0
    for s in range(temps.size):
        t = temps[s]
        for _ in range(q_steps):
            i = np.random.randint(q)
            d = (1 - 2 * x[i]) * h[i]
            u = np.random.random()
            if d <= 0.0 or (not greedy and u < math.exp(-d / t)):
                sgn = 1 - 2 * x[i]
                x[i] = 1 - x[i]
                for j in range(q):
                    h[j] += sgn * J[i, j]
                val += d
                v = site_of[i]
                before = cnt[v] == 1
                cnt[v] += sgn
                after = cnt[v] == 1
                n_ok += (1 if after else 0) - (1 if before else 0)
                if is_active[i]:
                    n_act += sgn
                if val < best_val:
                    best_val = val
                    best_x[:] = x
                if n_ok == n_sites and n_act == k and val < feas_val:
                    feas_val = val
                    feas_x[:] = x
            if trace.size:
                trace[step] = val
            step += 1
    return best_x, best_val, feas_x, feas_val


def _sample_flip_scale(model: QuboModel, rng: np.random.Generator, samples: int = 200) -> float:
    J = model.coupling
    x = rng.integers(0, 2, size=(samples, model.dim)).astype(float)
    idx = rng.integers(0, model.dim, size=samples)
    rows = np.arange(samples)
    fld = model.linear[idx] + (J[idx] * x).sum(axis=1)
    return float(np.abs((1 - 2 * x[rows, idx]) * fld).max())


def sa_run(model: QuboModel, config: AnnealConfig | None = None, instance: Instance | None = None,
           layout=None) -> AnnealResult:
    """Single-flip Metropolis annealing on a QUBO.

    Feasibility tracking needs the placement structure: pass ``instance`` (or
    a ``layout`` together with ``instance``).  Without it only the best QUBO
    point is reported.
    """
    config = config or AnnealConfig(restarts=1000)
    start = time.perf_counter()
    q = model.dim
    if instance is not None:
        layout = layout or instance.layout
        table = layout.table
        site_of = np.empty(q, dtype=np.int64)
        is_active = np.zeros(q, dtype=np.bool_)
        for v in range(layout.n_sites):
            site_of[table[v]] = v
            is_active[table[v, 1:]] = True
        n_sites, k = layout.n_sites, instance.n_antennas
    else:
        site_of = np.zeros(q, dtype=np.int64)
        is_active = np.zeros(q, dtype=np.bool_)
        n_sites, k = 1, -1  # never satisfied
    rng = np.random.default_rng(config.seed)
    t0, t1 = _resolve_temps(config, _sample_flip_scale(model, rng))
    temps = config.temperatures(t0, t1)
    J = np.ascontiguousarray(model.coupling)
    lin = np.ascontiguousarray(model.linear)
    best_val, best_x = np.inf, None
    feas_val, feas_x = np.inf, None
    traces = [] if config.trace else None
    for r in range(config.restarts):
        tr = np.empty(config.sweeps * q) if config.trace else np.empty(0)
        bx, bv, fx, fv = _sa_kernel(lin, J, model.constant, site_of, is_active, n_sites, k, temps, q,
                                    config.greedy, restart_seed(config.seed, r), tr)
        if bv < best_val:
            best_val, best_x = bv, bx.copy()
        if fv < feas_val:
            feas_val, feas_x = fv, fx.copy()
        if traces is not None:
            traces.append(tr)
    feas_assign = None
    if feas_x is not None:
        blk = layout.blocks(feas_x.astype(np.int64))
        feas_assign = blk.argmax(axis=-1).astype(np.int64)
        feas_val = cost(instance, feas_assign)
    return AnnealResult(best_x.astype(np.uint8), float(best_val), feas_assign,
                        None if feas_assign is None else float(feas_val),
                        time.perf_counter() - start, t0, t1, traces)


# -- constraint-preserving annealing -------------------------------------------

def _alpha_term(alpha: float, p: int) -> float:
    return alpha * p if p >= 2 else 0.0


def _check_site(instance: Instance, v: int) -> None:
    if not 0 <= v < instance.n_sites:
        raise IndexError(f"site {v} out of range")


def delta_cost_onsite(instance: Instance, assignment, v: int, p_new: int) -> float:
    """Cost change from relabelling site ``v`` to ``p_new``."""
    f = np.asarray(assignment, dtype=np.int64)
    _check_site(instance, v)
    if not 0 <= p_new <= instance.n_freq:
        raise IndexError(f"label {p_new} out of range")
    a = int(f[v])
    if a == p_new:
        return 0.0
    indptr, indices = instance.neighbors
    nbr = indices[indptr[v]:indptr[v + 1]]
    ov = instance.overlap[v, nbr, :, :]
    d = float(ov[np.arange(nbr.size), p_new, f[nbr]].sum() - ov[np.arange(nbr.size), a, f[nbr]].sum())
    d += -instance.areas[v] * ((p_new > 0) - (a > 0))
    return d + _alpha_term(instance.alpha, p_new) - _alpha_term(instance.alpha, a)


def delta_cost_swap(instance: Instance, assignment, v: int, u: int) -> float:
    """Cost change from exchanging the labels of sites ``v`` and ``u``."""
    f = np.asarray(assignment, dtype=np.int64)
    _check_site(instance, v)
    _check_site(instance, u)
    a, b = int(f[v]), int(f[u])
    if v == u or a == b:
        return 0.0
    indptr, indices = instance.neighbors
    W = instance.overlap

    def field(w, q):
        nbr = indices[indptr[w]:indptr[w + 1]]
        return float(W[w, nbr, q, f[nbr]].sum())

    d = field(v, b) - field(v, a) + field(u, a) - field(u, b)
    d += -W[v, u, b, b] - W[v, u, a, a] + W[v, u, b, a] + W[v, u, a, b]
    d += instance.areas[v] * ((a > 0) - (b > 0)) + instance.areas[u] * ((b > 0) - (a > 0))
    return float(d)


@nb.njit(cache=True)
def _custom_kernel(f, W, areas, alpha, indptr, indices, n_freq, temps, n_steps, greedy, seed, trace, check):
    _nb_seed(seed)
    n = f.size
    G = np.zeros((n, n_freq + 1))
    for v in range(n):
        for t in range(indptr[v], indptr[v + 1]):
            u = indices[t]
            for q in range(1, n_freq + 1):
                G[v, q] += W[v, u, q, f[u]]
    val = 0.0
    k = 0
    for v in range(n):
        if f[v] > 0:
            k += 1
            val += 0.5 * G[v, f[v]] - areas[v]
            if f[v] >= 2:
                val += alpha * f[v]
    best = val
    best_f = f.copy()
    step = 0
    for s in range(temps.size):
        t = temps[s]
        for _ in range(n_steps):
            if np.random.random() < 0.5:
                # retune one active site
                v = np.random.randint(n)
                pn = 1 + np.random.randint(n_freq)
                uu = np.random.random()
                a = f[v]
                if a == 0 or pn == a:
                    if trace.size:
                        trace[step] = val
                    step += 1
                    continue
                d = G[v, pn] - G[v, a]
                if pn >= 2:
                    d += alpha * pn
                if a >= 2:
                    d -= alpha * a
                if d <= 0.0 or (not greedy and uu < math.exp(-d / t)):
                    f[v] = pn
                    for e in range(indptr[v], indptr[v + 1]):
                        w = indices[e]
                        for q in range(1, n_freq + 1):
                            G[w, q] += W[w, v, q, pn] - W[w, v, q, a]
                    val += d
            else:
                # swap the labels of two sites
                v = np.random.randint(n)
                u = np.random.randint(n)
                uu = np.random.random()
                a = f[v]
                b = f[u]
                if v == u or a == b:
                    if trace.size:
                        trace[step] = val
                    step += 1
                    continue
                d = G[v, b] - G[v, a] + G[u, a] - G[u, b]
                d += -W[v, u, b, b] - W[v, u, a, a] + W[v, u, b, a] + W[v, u, a, b]
                if a > 0:
                    d += areas[v] - areas[u]
                if b > 0:
                    d += areas[u] - areas[v]
                if d <= 0.0 or (not greedy and uu < math.exp(-d / t)):
                    f[v] = b
                    for e in range(indptr[v], indptr[v + 1]):
                        w = indices[e]
                        for q in range(1, n_freq + 1):
                            G[w, q] += W[w, v, q, b] - W[w, v, q, a]
                    f[u] = a
                    for e in range(indptr[u], indptr[u + 1]):
                        w = indices[e]
                        for q in range(1, n_freq + 1):
                            G[w, q] += W[w, u, q, a] - W[w, u, q, b]
                    val += d
            if check:
                c = 0
                for w in range(n):
                    if f[w] > 0:
                        c += 1
                if c != k:
                    raise RuntimeError("left the feasible set")
            if val < best:
                best = val
                best_f[:] = f
            if trace.size:
                trace[step] = val
            step += 1
    return best_f, best


def _sample_move_scale(instance: Instance, basis: FeasibleBasis, rng: np.random.Generator,
                       samples: int = 200) -> float:
    n, F = instance.n_sites, instance.n_freq
    biggest = 0.0
    for _ in range(samples):
        f = basis.unrank(int(rng.integers(basis.size)))
        if rng.random() < 0.5:
            v = int(rng.integers(n))
            d = delta_cost_onsite(instance, f, v, int(rng.integers(1, F + 1))) if f[v] else 0.0
        else:
            d = delta_cost_swap(instance, f, int(rng.integers(n)), int(rng.integers(n)))
        biggest = max(biggest, abs(d))
    return biggest


def custom_sa_run(instance: Instance, config: AnnealConfig | None = None) -> AnnealResult:
    """Constraint-preserving annealing; each restart starts from a uniformly random feasible point."""
    config = config or AnnealConfig(restarts=100)
    start = time.perf_counter()
    basis = FeasibleBasis.for_instance(instance)
    rng = np.random.default_rng(config.seed)
    t0, t1 = _resolve_temps(config, _sample_move_scale(instance, basis, rng))
    temps = config.temperatures(t0, t1)
    indptr, indices = instance.neighbors
    W = np.ascontiguousarray(instance.overlap)
    areas = np.ascontiguousarray(instance.areas)
    n = instance.n_sites
    best_val, best_f = np.inf, None
    traces = [] if config.trace else None
    for r in range(config.restarts):
        f0 = basis.unrank(int(np.random.default_rng(restart_seed(config.seed, r)).integers(basis.size)))
        tr = np.empty(config.sweeps * n) if config.trace else np.empty(0)
        bf, bv = _custom_kernel(f0.astype(np.int64), W, areas, instance.alpha, indptr, indices,
                                instance.n_freq, temps, n, config.greedy, restart_seed(config.seed, r), tr,
                                config.check_feasible)
        if bv < best_val:
            best_val, best_f = bv, bf.copy()
        if traces is not None:
            traces.append(tr)
    exact = cost(instance, best_f)
    return AnnealResult(assignment_to_bits(instance.layout, best_f), exact, best_f, exact,
                        time.perf_counter() - start, t0, t1, traces)
