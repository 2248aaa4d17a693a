"""Statevector emulation of the two adiabatic algorithms.

Two engines share one gate vocabulary:

* ``StateVector`` holds all ``2**Q`` amplitudes (bit ``i`` of the index is
  qubit ``i`` of the layout).  It runs the penalty-based algorithm with the
  transverse-field mixer and serves as a cross-check for everything else.
* ``FeasibleStateVector`` holds one amplitude per feasible assignment,
  indexed by ``FeasibleBasis`` rank.  Every operator of the
  constraint-preserving algorithm maps feasible strings to feasible strings,
  so nothing outside this subspace is ever populated.

Both mixers are products of exact 2-level rotations
``[[cos t, i sin t], [i sin t, cos t]]`` on disjoint basis pairs.
"""

from __future__ import annotations

import json
import math
import statistics
import struct
from dataclasses import dataclass, field, replace
from functools import lru_cache
from pathlib import Path

import numba as nb
import numpy as np

from . import _statevec
from .exact import FeasibleBasis
from .instance import Instance, QubitLayout, assignment_to_bits, cost_many
from .metrics import Metrics
from .qubo import all_qubo_values, max_norm, to_qubo

__all__ = [
    "FeasibleStateVector", "MemoryCapError", "QaaSchedule", "SampleCounts", "StateVector",
    "app_mixer_terms", "apply_app_mixer", "apply_diagonal_phase", "apply_pmpm_rotation",
    "apply_x_mixer_layer", "apply_xy_pair_rotation", "calibrate_qaa_app", "embed_feasible",
    "exact_metrics", "load_state", "mixer_hamiltonian", "prepare_feasible_superposition",
    "prepare_plus_state", "run_metrics", "run_qaa_app", "run_qaa_basic", "sample_counts", "save_state",
]

MAX_STATE_BYTES = 1 << 30      # full-space amplitudes, i.e. Q <= 26
MAX_SUBSPACE_STATES = 2_000_000
NORM_TOL = 1e-9


class MemoryCapError(MemoryError):
    """A state or pair table would exceed the configured memory budget."""


# -- state containers ---------------------------------------------------------

@dataclass(eq=False)
class StateVector:
    amplitudes: np.ndarray
    layout: QubitLayout | None = None

    def __post_init__(self):
        self.amplitudes = np.asarray(self.amplitudes, dtype=np.complex128)
        q = self.amplitudes.size.bit_length() - 1
        if self.amplitudes.ndim != 1 or self.amplitudes.size != 1 << q:
            raise ValueError("full-space state needs 2**Q amplitudes")
        if self.layout is not None and self.layout.n_qubits != q:
            raise ValueError(f"layout has {self.layout.n_qubits} qubits, state has {q}")

    @property
    def n_qubits(self) -> int:
        return self.amplitudes.size.bit_length() - 1

    @property
    def dim(self) -> int:
        return self.amplitudes.size

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def probabilities(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    def copy(self) -> "StateVector":
        return StateVector(self.amplitudes.copy(), self.layout)


@dataclass(eq=False)
class FeasibleStateVector:
    amplitudes: np.ndarray
    basis: FeasibleBasis

    def __post_init__(self):
        self.amplitudes = np.asarray(self.amplitudes, dtype=np.complex128)
        if self.amplitudes.shape != (self.basis.size,):
            raise ValueError(f"expected {self.basis.size} amplitudes, got {self.amplitudes.shape}")

    @property
    def layout(self) -> QubitLayout:
        return QubitLayout(self.basis.n_sites, self.basis.n_freq)

    @property
    def n_qubits(self) -> int:
        return self.layout.n_qubits

    @property
    def dim(self) -> int:
        return self.amplitudes.size

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def probabilities(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    def copy(self) -> "FeasibleStateVector":
        return FeasibleStateVector(self.amplitudes.copy(), self.basis)


@dataclass(frozen=True)
class QaaSchedule:
    """Trotterised linear schedule ``s = l/L`` with step ``tau = T/L``.

    ``ordering`` fixes the order inside one layer: ``"phase-first"`` applies
    the problem phase before the mixer.
    """

    total_time: float = 10.0
    layers: int = 15
    mixer_steps: int = 1
    beta: float = 1.0
    penalty: float | None = None
    ordering: str = "phase-first"

    def __post_init__(self):
        if self.layers < 1 or self.mixer_steps < 1:
            raise ValueError("layers and mixer_steps must be positive")
        if self.total_time < 0 or self.beta <= 0:
            raise ValueError("need total_time >= 0 and beta > 0")
        if self.penalty is not None and self.penalty <= 0:
            raise ValueError("penalty must be positive")
        if self.ordering not in ("phase-first", "mixer-first"):
            raise ValueError(f"unknown ordering {self.ordering!r}")

    @property
    def tau(self) -> float:
        return self.total_time / self.layers

    @classmethod
    def basic(cls, **kw) -> "QaaSchedule":
        return cls(**{"total_time": 20.0, "layers": 100, **kw})

    @classmethod
    def app(cls, **kw) -> "QaaSchedule":
        return cls(**{"total_time": 10.0, "layers": 15, "mixer_steps": 1, "beta": 1.0, **kw})

    def angles(self):
        """Yield ``(phase_angle, mixer_angle)`` for ``l = 1..L``."""
        tau, big_l = self.tau, self.layers
        for layer in range(1, big_l + 1):
            yield tau * layer / big_l, tau * (1.0 - layer / big_l)


# -- preparation --------------------------------------------------------------

def _check_full_cap(n_qubits: int, max_bytes: int) -> None:
    if n_qubits < 0:
        raise ValueError("n_qubits must be non-negative")
    need = 16 * (1 << n_qubits)
    if need > max_bytes:
        raise MemoryCapError(f"{n_qubits} qubits need {need} bytes of amplitudes (cap {max_bytes})")


def _check_subspace_cap(size: int, max_states: int) -> None:
    if size > max_states:
        raise MemoryCapError(f"feasible subspace of {size} states exceeds the budget of {max_states}")


def prepare_plus_state(n_qubits: int, layout: QubitLayout | None = None,
                       max_bytes: int = MAX_STATE_BYTES) -> StateVector:
    _check_full_cap(n_qubits, max_bytes)
    n = 1 << n_qubits
    return StateVector(np.full(n, 1.0 / math.sqrt(n), dtype=np.complex128), layout)


def prepare_feasible_superposition(basis: FeasibleBasis,
                                   max_states: int = MAX_SUBSPACE_STATES) -> FeasibleStateVector:
    _check_subspace_cap(basis.size, max_states)
    return FeasibleStateVector(np.full(basis.size, 1.0 / math.sqrt(basis.size), dtype=np.complex128), basis)


def full_space_indices(basis: FeasibleBasis) -> np.ndarray:
    """Full-space basis index of every feasible assignment, in rank order."""
    layout = QubitLayout(basis.n_sites, basis.n_freq)
    bits = assignment_to_bits(layout, basis.labels()).astype(np.int64)
    return bits @ (np.int64(1) << np.arange(layout.n_qubits, dtype=np.int64))


def embed_feasible(fsv: FeasibleStateVector, layout: QubitLayout | None = None,
                   basis: FeasibleBasis | None = None, max_bytes: int = MAX_STATE_BYTES) -> StateVector:
    basis = basis or fsv.basis
    layout = layout or fsv.layout
    if (layout.n_sites, layout.n_freq) != (basis.n_sites, basis.n_freq):
        raise ValueError("layout and basis describe different problems")
    _check_full_cap(layout.n_qubits, max_bytes)
    out = np.zeros(1 << layout.n_qubits, dtype=np.complex128)
    out[full_space_indices(basis)] = fsv.amplitudes
    return StateVector(out, layout)


# -- gates ----------------------------------------------------------------------

def apply_diagonal_phase(state, values, angle_scale: float):
    """Multiply amplitude ``x`` by ``exp(-i * angle_scale * values[x])`` in place."""
    values = np.asarray(values, dtype=float)
    if values.shape != state.amplitudes.shape:
        raise ValueError(f"values have shape {values.shape}, state has {state.amplitudes.shape}")
    if angle_scale != 0.0:
        state.amplitudes *= np.exp(-1j * angle_scale * values)
    return state


def apply_x_mixer_layer(state, angle: float):
    """``exp(i*angle*X)`` on every qubit of a full-space state, in place."""
    if not isinstance(state, StateVector):
        raise TypeError("the transverse-field mixer leaves the feasible subspace; use a StateVector")
    if angle == 0.0:
        return state
    re = np.ascontiguousarray(state.amplitudes.real)
    im = np.ascontiguousarray(state.amplitudes.imag)
    _statevec.x_layer(re, im, state.n_qubits, math.cos(angle), math.sin(angle))
    state.amplitudes.real = re
    state.amplitudes.imag = im
    return state


def _rotate(state, ia: np.ndarray, ib: np.ndarray, theta: float):
    if theta != 0.0 and ia.size:
        _statevec.rotate_pairs(state.amplitudes, ia, ib, math.cos(theta), math.sin(theta))
    return state


def _full_pairs(n_qubits: int, ones: tuple[int, ...], zeros: tuple[int, ...]):
    """Indices with ``ones`` set and ``zeros`` clear, and their images with all of them flipped."""
    idx = np.arange(1 << n_qubits, dtype=np.int64)
    set_mask = sum(1 << q for q in ones)
    clear_mask = sum(1 << q for q in zeros)
    ia = idx[((idx & set_mask) == set_mask) & ((idx & clear_mask) == 0)]
    return ia, ia ^ (set_mask | clear_mask)


def _state_layout(state) -> QubitLayout:
    if state.layout is None:
        raise ValueError("this gate needs a state that carries its QubitLayout")
    return state.layout


def apply_xy_pair_rotation(state, qubit_a: int, qubit_b: int, theta: float):
    """Rotate each ``|..1_a..0_b..> <-> |..0_a..1_b..>`` pair by ``theta``, in place."""
    if qubit_a == qubit_b:
        raise ValueError("XY rotation needs two distinct qubits")
    if isinstance(state, StateVector):
        q = state.n_qubits
        if not (0 <= qubit_a < q and 0 <= qubit_b < q):
            raise IndexError("qubit index out of range")
        return _rotate(state, *_full_pairs(q, (qubit_a,), (qubit_b,)), theta)
    layout = state.layout
    loc = {int(layout.index(v, p)): (v, p) for v in range(layout.n_sites) for p in range(1, layout.n_freq + 1)}
    if qubit_a not in loc or qubit_b not in loc or loc[qubit_a][0] != loc[qubit_b][0]:
        raise ValueError("on the feasible subspace the pair must be two frequency qubits of one site")
    (v, p), (_, pp) = loc[qubit_a], loc[qubit_b]
    ia, ib = _subspace_term_pairs(state.basis, np.array([[v, -1, p, pp]], dtype=np.int64))
    return _rotate(state, ia, ib, theta)


def apply_pmpm_rotation(state, v: int, u: int, p: int, p_prime: int, theta: float):
    """Couple "v at ``p``, u empty" with "v empty, u at ``p_prime``", in place."""
    if v == u:
        raise ValueError("v and u must differ")
    if isinstance(state, StateVector):
        layout = _state_layout(state)
        if not (0 <= v < layout.n_sites and 0 <= u < layout.n_sites):
            raise IndexError("site index out of range")
        if not (1 <= p <= layout.n_freq and 1 <= p_prime <= layout.n_freq):
            raise IndexError("frequency index out of range")
        ones = (layout.index(v, p), layout.index(u, 0))
        zeros = (layout.index(v, 0), layout.index(u, p_prime))
        return _rotate(state, *_full_pairs(layout.n_qubits, ones, zeros), theta)
    b = state.basis
    if not (0 <= v < b.n_sites and 0 <= u < b.n_sites):
        raise IndexError("site index out of range")
    if not (1 <= p <= b.n_freq and 1 <= p_prime <= b.n_freq):
        raise IndexError("frequency index out of range")
    ia, ib = _subspace_term_pairs(b, np.array([[v, u, p, p_prime]], dtype=np.int64))
    return _rotate(state, ia, ib, theta)


def app_mixer_terms(n_sites: int, n_freq: int) -> np.ndarray:
    """Rows ``(v, u, p, p')`` in application order; ``u = -1`` marks an XY ring term.

    All hopping terms (``v < u``, then ``p``, then ``p'``) come before the XY
    ring ``(v, p) -> (v, p mod F + 1)``.  With ``F == 1`` the ring term would
    couple a qubit to itself and is omitted; with ``F == 2`` both ring edges
    join the same pair and each is applied.
    """
    rows = [(v, u, p, pp) for v in range(n_sites) for u in range(v + 1, n_sites)
            for p in range(1, n_freq + 1) for pp in range(1, n_freq + 1)]
    if n_freq > 1:
        rows += [(v, -1, p, p % n_freq + 1) for v in range(n_sites) for p in range(1, n_freq + 1)]
    return np.array(rows, dtype=np.int64).reshape(-1, 4)


@nb.njit(cache=True)
def _rank_row(row, prefix, n_digits, n_freq):
    subset = 0
    digits = 0
    i = 0
    prev = 0
    for c in range(row.size):
        if row[c] > 0:
            subset += prefix[i, c] - prefix[i, prev]
            digits = digits * n_freq + (row[c] - 1)
            prev = c + 1
            i += 1
    return subset * n_digits + digits


@nb.njit(cache=True)
def _collect_pairs(labels, terms, prefix, n_digits, n_freq, counts):
    total = counts.sum()
    ia = np.empty(total, dtype=np.int32)
    ib = np.empty(total, dtype=np.int32)
    row = np.empty(labels.shape[1], dtype=np.int64)
    pos = 0
    for t in range(terms.shape[0]):
        v, u, p, pp = terms[t, 0], terms[t, 1], terms[t, 2], terms[t, 3]
        for a in range(labels.shape[0]):
            if labels[a, v] != p:
                continue
            if u >= 0:
                if labels[a, u] != 0:
                    continue
            for c in range(row.size):
                row[c] = labels[a, c]
            if u >= 0:
                row[v] = 0
                row[u] = pp
            else:
                row[v] = pp
            if pos >= total:
                raise ValueError("pair count mismatch")
            ia[pos] = a
            ib[pos] = _rank_row(row, prefix, n_digits, n_freq)
            pos += 1
    if pos != total:
        raise ValueError("pair count mismatch")
    return ia, ib


def _term_counts(basis: FeasibleBasis, terms: np.ndarray) -> np.ndarray:
    n, f, k = basis.n_sites, basis.n_freq, basis.n_antennas
    if k == 0:
        return np.zeros(len(terms), dtype=np.int64)
    hop = math.comb(n - 2, k - 1) * f ** (k - 1) if n >= 2 and k <= n - 1 else 0
    xy = math.comb(n - 1, k - 1) * f ** (k - 1)
    return np.where(terms[:, 1] >= 0, hop, xy).astype(np.int64)


def _subspace_term_pairs(basis: FeasibleBasis, terms: np.ndarray):
    counts = _term_counts(basis, terms)
    if basis.size >= 2**31:
        raise MemoryCapError("feasible subspace too large for 32-bit pair tables")
    labels = _basis_labels(basis.n_sites, basis.n_freq, basis.n_antennas)
    return _collect_pairs(labels, terms, basis._prefix, basis.n_digits, basis.n_freq, counts)


@lru_cache(maxsize=4)
def _basis_labels(n: int, f: int, k: int) -> np.ndarray:
    return FeasibleBasis(n, f, k).labels()


@lru_cache(maxsize=4)
def _subspace_mixer_table(n: int, f: int, k: int, max_pairs: int):
    basis = FeasibleBasis(n, f, k)
    terms = app_mixer_terms(n, f)
    if int(_term_counts(basis, terms).sum()) > max_pairs:
        raise MemoryCapError(f"mixer pair table for (N={n}, F={f}, k={k}) exceeds {max_pairs} pairs")
    return _subspace_term_pairs(basis, terms)


@lru_cache(maxsize=4)
def _full_mixer_table(n: int, f: int):
    layout = QubitLayout(n, f)
    parts_a, parts_b = [], []
    for v, u, p, pp in app_mixer_terms(n, f):
        if u >= 0:
            ia, ib = _full_pairs(layout.n_qubits, (layout.index(v, p), layout.index(u, 0)),
                                 (layout.index(v, 0), layout.index(u, pp)))
        else:
            ia, ib = _full_pairs(layout.n_qubits, (layout.index(v, p),), (layout.index(v, pp),))
        parts_a.append(ia)
        parts_b.append(ib)
    if not parts_a:
        return np.zeros(0, np.int64), np.zeros(0, np.int64)
    return np.concatenate(parts_a), np.concatenate(parts_b)


MAX_MIXER_PAIRS = 200_000_000


def apply_app_mixer(state, tau_prime: float, mixer_steps: int, beta: float,
                    max_pairs: int = MAX_MIXER_PAIRS):
    """``mixer_steps`` Trotter steps of the hopping + XY ring mixer, angle ``tau_prime*beta/M`` each."""
    if mixer_steps < 1:
        raise ValueError("mixer_steps must be >= 1")
    if isinstance(state, StateVector):
        layout = _state_layout(state)
        ia, ib = _full_mixer_table(layout.n_sites, layout.n_freq)
    else:
        b = state.basis
        ia, ib = _subspace_mixer_table(b.n_sites, b.n_freq, b.n_antennas, max_pairs)
    theta = tau_prime * beta / mixer_steps
    if theta == 0.0:
        return state
    for _ in range(mixer_steps):
        _rotate(state, ia, ib, theta)
    return state


def mixer_hamiltonian(basis: FeasibleBasis, beta: float = 1.0, max_dim: int = 4096) -> np.ndarray:
    """Dense mixer Hamiltonian on the feasible basis: ``-beta`` per coupled pair and term."""
    if basis.size > max_dim:
        raise MemoryCapError(f"dense mixer of dimension {basis.size} exceeds {max_dim}")
    ia, ib = _subspace_term_pairs(basis, app_mixer_terms(basis.n_sites, basis.n_freq))
    h = np.zeros((basis.size, basis.size))
    np.add.at(h, (ia, ib), -beta)
    np.add.at(h, (ib, ia), -beta)
    return h


# -- algorithms -----------------------------------------------------------------

def _check_norm(state) -> None:
    drift = abs(state.norm() - 1.0)
    if drift > NORM_TOL:
        raise RuntimeError(f"state norm drifted by {drift:.3g}")


def basic_energies(instance: Instance, schedule: QaaSchedule) -> np.ndarray:
    """Normalised QUBO energy of every bitstring."""
    model = to_qubo(instance, penalty=schedule.penalty)
    scale = max_norm(model)
    return all_qubo_values(model) / (scale if scale else 1.0)


def run_qaa_basic(instance: Instance, schedule: QaaSchedule | None = None, *, reference: bool = False,
                  max_bytes: int = MAX_STATE_BYTES) -> StateVector:
    """Penalty-based adiabatic run on the full space, starting from ``|+>^Q``.

    The default path fuses each layer into one numba sweep; ``reference=True``
    composes the public gates instead (same result, much slower).
    """
    schedule = schedule or QaaSchedule.basic()
    layout = instance.layout
    q = layout.n_qubits
    _check_full_cap(q, max_bytes)
    energies = basic_energies(instance, schedule)
    if reference or schedule.ordering != "phase-first":
        state = prepare_plus_state(q, layout, max_bytes)
        for phase, mix in schedule.angles():
            if schedule.ordering == "phase-first":
                apply_diagonal_phase(state, energies, phase)
                apply_x_mixer_layer(state, mix)
            else:
                apply_x_mixer_layer(state, mix)
                apply_diagonal_phase(state, energies, phase)
        _check_norm(state)
        return state
    w = np.exp((-1j * schedule.tau / schedule.layers) * energies)
    del energies
    wr, wi = np.ascontiguousarray(w.real), np.ascontiguousarray(w.imag)
    del w
    n = 1 << q
    re = np.full(n, 1.0 / math.sqrt(n))
    im = np.zeros(n)
    _statevec.qaa_basic_evolve(re, im, wr, wi, q, schedule.layers, schedule.tau)
    del wr, wi
    amps = np.empty(n, dtype=np.complex128)
    amps.real = re
    amps.imag = im
    state = StateVector(amps, layout)
    _check_norm(state)
    return state


def app_energies(instance: Instance, basis: FeasibleBasis | None = None) -> np.ndarray:
    """Feasible-set costs divided by their largest magnitude."""
    basis = basis or FeasibleBasis.for_instance(instance)
    values = cost_many(instance, _basis_labels(basis.n_sites, basis.n_freq, basis.n_antennas))
    scale = float(np.abs(values).max(initial=0.0))
    return values / scale if scale else values


def run_qaa_app(instance: Instance, schedule: QaaSchedule | None = None, *,
                max_states: int = MAX_SUBSPACE_STATES, max_pairs: int = MAX_MIXER_PAIRS) -> FeasibleStateVector:
    """Constraint-preserving adiabatic run on the feasible subspace."""
    schedule = schedule or QaaSchedule.app()
    basis = FeasibleBasis.for_instance(instance)
    _check_subspace_cap(basis.size, max_states)
    energies = app_energies(instance, basis)
    state = prepare_feasible_superposition(basis, max_states)
    for phase, mix in schedule.angles():
        if schedule.ordering == "phase-first":
            apply_diagonal_phase(state, energies, phase)
            apply_app_mixer(state, mix, schedule.mixer_steps, schedule.beta, max_pairs)
        else:
            apply_app_mixer(state, mix, schedule.mixer_steps, schedule.beta, max_pairs)
            apply_diagonal_phase(state, energies, phase)
    _check_norm(state)
    return state


# -- sampling and metrics -------------------------------------------------------

@dataclass
class SampleCounts:
    """Measurement histogram keyed by bitstring text (character ``i`` is qubit ``i``)."""

    counts: dict[str, int]
    shots: int
    n_qubits: int = field(default=0)

    def __post_init__(self):
        if sum(self.counts.values()) != self.shots:
            raise ValueError("counts do not sum to the number of shots")

    def bit_array(self) -> tuple[np.ndarray, np.ndarray]:
        """``(bits (M, Q) uint8, counts (M,))`` in key order."""
        keys = list(self.counts)
        if not keys:
            return np.zeros((0, self.n_qubits), np.uint8), np.zeros(0, np.int64)
        bits = np.frombuffer("".join(keys).encode(), dtype=np.uint8).reshape(len(keys), -1) - ord("0")
        return bits, np.array([self.counts[k] for k in keys], dtype=np.int64)

    def to_json(self) -> str:
        return json.dumps(self.counts, sort_keys=True)

    def save(self, path) -> None:
        Path(path).write_text(self.to_json() + "\n")

    @classmethod
    def load(cls, path) -> "SampleCounts":
        counts = {k: int(v) for k, v in json.loads(Path(path).read_text()).items()}
        q = len(next(iter(counts))) if counts else 0
        return cls(counts, sum(counts.values()), q)


def _bits_to_text(bits: np.ndarray) -> list[str]:
    return [row.tobytes().decode() for row in (bits.astype(np.uint8) + ord("0"))]


def sample_counts(state, shots: int, seed) -> SampleCounts:
    """Multinomial draw of ``shots`` measurements in the computational basis."""
    if shots < 1:
        raise ValueError("shots must be >= 1")
    prob = state.probabilities()
    cdf = np.cumsum(prob)
    rng = np.random.default_rng(seed)
    draws = np.searchsorted(cdf, rng.random(shots) * cdf[-1], side="right")
    np.minimum(draws, prob.size - 1, out=draws)
    idx, cnt = np.unique(draws, return_counts=True)
    q = state.n_qubits
    if isinstance(state, FeasibleStateVector):
        labels = np.array([state.basis.unrank(i) for i in idx]).reshape(len(idx), -1)
        bits = assignment_to_bits(state.layout, labels)
    else:
        bits = ((idx[:, None] >> np.arange(q)[None, :]) & 1).astype(np.uint8)
    keys = _bits_to_text(bits)
    counts = dict(sorted(zip(keys, (int(c) for c in cnt))))
    return SampleCounts(counts, int(shots), q)


def _optimal_keys(optimal_set) -> set[tuple[int, ...]] | None:
    if optimal_set is None:
        return None
    return {tuple(int(x) for x in a) for a in optimal_set}


def run_metrics(counts: SampleCounts, instance: Instance, optimal_set=None) -> Metrics:
    """Feasibility fraction, success fraction and best sampled feasible assignment."""
    bits, cnt = counts.bit_array()
    layout = instance.layout
    blk = layout.blocks(bits.astype(np.int64))
    feasible = np.all(blk.sum(axis=-1) == 1, axis=-1) & (blk[..., 1:].sum(axis=(-1, -2)) == instance.n_antennas)
    total = counts.shots
    p_feas = float(cnt[feasible].sum()) / total
    best_cost = best_assignment = None
    p_succ = None
    labels = blk[feasible].argmax(axis=-1)
    if len(labels):
        costs = cost_many(instance, labels)
        j = int(np.argmin(costs))
        best_cost, best_assignment = float(costs[j]), tuple(int(x) for x in labels[j])
    opt = _optimal_keys(optimal_set)
    if opt is not None:
        hit = np.array([tuple(int(x) for x in row) in opt for row in labels], dtype=bool)
        p_succ = float(cnt[feasible][hit].sum()) / total if len(labels) else 0.0
    return Metrics(p_feasible=p_feas, p_success=p_succ, best_cost=best_cost, best_assignment=best_assignment)


def exact_metrics(state, instance: Instance, optimal_set=None) -> Metrics:
    """Infinite-shot counterpart of ``run_metrics`` computed from the amplitudes."""
    prob = state.probabilities()
    opt = _optimal_keys(optimal_set)
    if isinstance(state, FeasibleStateVector):
        p_feas = float(prob.sum())
        p_succ = None
        if opt is not None:
            ranks = [state.basis.rank(a) for a in opt]
            p_succ = float(prob[ranks].sum()) if ranks else 0.0
        return Metrics(p_feasible=min(1.0, p_feas), p_success=None if p_succ is None else min(1.0, p_succ))
    basis = FeasibleBasis.for_instance(instance)
    idx = full_space_indices(basis)
    p_feas = float(prob[idx].sum())
    p_succ = None
    if opt is not None:
        bits = assignment_to_bits(instance.layout, np.array(sorted(opt)).reshape(len(opt), -1)).astype(np.int64)
        pos = bits @ (np.int64(1) << np.arange(instance.n_qubits, dtype=np.int64))
        p_succ = float(prob[pos].sum()) if len(opt) else 0.0
    return Metrics(p_feasible=min(1.0, p_feas), p_success=None if p_succ is None else min(1.0, p_succ))


def calibrate_qaa_app(instances, optimal_sets, total_times=(2.0, 5.0, 10.0, 20.0), betas=(0.5, 1.0, 2.0),
                      base: QaaSchedule | None = None) -> tuple[QaaSchedule, dict]:
    """Grid scan of ``(T, beta)`` maximising the median exact success probability.

    Returns the winning schedule and the score of every grid point; ties keep
    the first point in grid order.
    """
    base = base or QaaSchedule.app()
    scores = {}
    best, best_score = base, -1.0
    for t in total_times:
        for b in betas:
            sched = replace(base, total_time=float(t), beta=float(b))
            vals = [exact_metrics(run_qaa_app(inst, sched), inst, opt).p_success
                    for inst, opt in zip(instances, optimal_sets)]
            score = statistics.median(vals)
            scores[(float(t), float(b))] = score
            if score > best_score:
                best, best_score = sched, score
    return best, scores


# -- state dump -----------------------------------------------------------------

_MAGIC = b"MAPPSV01"
_HEADER = struct.Struct("<8sB3xqqqq")  # magic, engine tag, dim, N, F, k


def save_state(path, state) -> None:
    """Binary dump: fixed header then little-endian complex128 amplitudes."""
    if isinstance(state, FeasibleStateVector):
        b = state.basis
        head = _HEADER.pack(_MAGIC, 1, state.dim, b.n_sites, b.n_freq, b.n_antennas)
    else:
        lay = state.layout
        head = _HEADER.pack(_MAGIC, 0, state.dim, lay.n_sites if lay else 0, lay.n_freq if lay else 0, -1)
    with open(path, "wb") as fh:
        fh.write(head)
        fh.write(state.amplitudes.astype("<c16").tobytes())


def load_state(path):
    raw = Path(path).read_bytes()
    magic, tag, dim, n, f, k = _HEADER.unpack_from(raw)
    if magic != _MAGIC:
        raise ValueError("not a state dump")
    amps = np.frombuffer(raw, dtype="<c16", offset=_HEADER.size).astype(np.complex128)
    if amps.size != dim:
        raise ValueError("truncated state dump")
    if tag == 1:
        return FeasibleStateVector(amps, FeasibleBasis(n, f, k))
    return StateVector(amps, QubitLayout(n, f) if n else None)
