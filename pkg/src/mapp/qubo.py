"""Soft-penalty QUBO form of the placement problem.

The constrained program is folded into

    Q(x) = C(x) + lam * sum_v (sum_p x_vp - 1)^2 + lam * (sum_{v, p>=1} x_vp - k)^2

and expanded with ``x**2 == x`` into linear, pairwise and constant parts.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .instance import Instance, QubitLayout

__all__ = ["QuboModel", "all_qubo_values", "default_penalty", "load_triplets", "max_norm",
           "normalized", "penalty_form_value", "qubo_value", "to_qubo"]


@dataclass(frozen=True, eq=False)
class QuboModel:
    linear: np.ndarray     # (Q,)
    quadratic: np.ndarray  # (Q, Q), strictly upper triangular
    constant: float
    penalty: float

    def __post_init__(self):
        lin = np.array(self.linear, dtype=float)
        quad = np.array(self.quadratic, dtype=float)
        if quad.shape != (lin.size, lin.size):
            raise ValueError("quadratic block must be (Q, Q)")
        if np.any(np.tril(quad)):
            raise ValueError("quadratic block must be strictly upper triangular")
        lin.setflags(write=False)
        quad.setflags(write=False)
        object.__setattr__(self, "linear", lin)
        object.__setattr__(self, "quadratic", quad)
        object.__setattr__(self, "constant", float(self.constant))

    @property
    def dim(self) -> int:
        return self.linear.size

    @property
    def coupling(self) -> np.ndarray:
        """Symmetric coupling ``J = U + U.T`` (zero diagonal)."""
        return self.quadratic + self.quadratic.T

    def to_triplets(self) -> str:
        lines = [f"# Q {self.dim} {float(self.constant)!r} {float(self.penalty)!r}"]
        for i in np.nonzero(self.linear)[0]:
            lines.append(f"{i} {i} {float(self.linear[i])!r}")
        for i, j in zip(*np.nonzero(self.quadratic)):
            lines.append(f"{i} {j} {float(self.quadratic[i, j])!r}")
        return "\n".join(lines) + "\n"

    def save_triplets(self, path) -> None:
        Path(path).write_text(self.to_triplets())


def load_triplets(path) -> QuboModel:
    lines = Path(path).read_text().splitlines()
    tag, q, const, lam = lines[0].lstrip("#").split()
    if tag != "Q":
        raise ValueError("missing '# Q <dim> <constant> <lambda>' header")
    q = int(q)
    lin, quad = np.zeros(q), np.zeros((q, q))
    for line in lines[1:]:
        if not line.strip():
            continue
        i, j, val = line.split()
        i, j = int(i), int(j)
        if i == j:
            lin[i] += float(val)
        else:
            quad[min(i, j), max(i, j)] += float(val)
    return QuboModel(lin, quad, float(const), float(lam))


def default_penalty(instance: Instance, scale: float = 2.0) -> float:
    """``scale`` times the largest coefficient magnitude of the quadratic program."""
    biggest = max(float(np.abs(instance.areas).max(initial=0.0)),
                  float(np.abs(instance.overlap).max(initial=0.0)),
                  instance.alpha * instance.n_freq)
    if biggest == 0.0:
        return 1.0
    return scale * biggest


def to_qubo(instance: Instance, penalty: float | None = None, layout: QubitLayout | None = None) -> QuboModel:
    lam = default_penalty(instance) if penalty is None else float(penalty)
    if lam <= 0:
        raise ValueError("penalty must be positive")
    layout = layout or instance.layout
    n, f, k = instance.n_sites, instance.n_freq, instance.n_antennas
    t = layout.table
    q = layout.n_qubits
    lin = np.zeros(q)
    sym = np.zeros((q, q))  # symmetric pair weights; the upper triangle is kept

    # objective
    for v in range(n):
        for p in range(1, f + 1):
            lin[t[v, p]] += -instance.areas[v] + (instance.alpha * p if p >= 2 else 0.0)
    for v in range(n):
        for u in range(v + 1, n):
            for p in range(1, f + 1):
                for pp in range(1, f + 1):
                    w = instance.overlap[v, u, p, pp]
                    if w:
                        i, j = t[v, p], t[u, pp]
                        sym[i, j] += w
                        sym[j, i] += w

    # one-hot: -sum_p x_vp + 2 sum_{p<p'} x_vp x_vp' + 1
    for v in range(n):
        for p in range(f + 1):
            lin[t[v, p]] -= lam
            for pp in range(p + 1, f + 1):
                i, j = t[v, p], t[v, pp]
                sym[i, j] += 2 * lam
                sym[j, i] += 2 * lam

    # cardinality: (1 - 2k) sum y + 2 sum_{i<j} y_i y_j + k^2
    act = t[:, 1:].ravel()
    lin[act] += lam * (1 - 2 * k)
    for a in range(act.size):
        for b in range(a + 1, act.size):
            i, j = act[a], act[b]
            sym[i, j] += 2 * lam
            sym[j, i] += 2 * lam

    quad = np.triu(sym, 1)
    return QuboModel(lin, quad, lam * (n + k * k), lam)


def qubo_value(model: QuboModel, bits) -> float | np.ndarray:
    """QUBO energy of one bitstring ``(Q,)`` or a batch ``(M, Q)``."""
    x = np.asarray(bits, dtype=float)
    if x.shape[-1] != model.dim:
        raise ValueError(f"bitstring length {x.shape[-1]} != {model.dim}")
    val = model.constant + x @ model.linear + np.einsum("...i,ij,...j->...", x, model.quadratic, x)
    return float(val) if np.ndim(val) == 0 else val


def penalty_form_value(instance: Instance, bits, penalty: float) -> float:
    """Direct evaluation of cost + squared residuals, without the expansion."""
    x = np.asarray(bits, dtype=np.int64)
    blk = instance.layout.blocks(x)
    onehot = float(((blk.sum(axis=1) - 1) ** 2).sum())
    card = float((blk[:, 1:].sum() - instance.n_antennas) ** 2)
    n, f = instance.n_sites, instance.n_freq
    obj = 0.0
    for v in range(n):
        for p in range(1, f + 1):
            if blk[v, p]:
                obj += -instance.areas[v] + (instance.alpha * p if p >= 2 else 0.0)
    for v in range(n):
        for u in range(v + 1, n):
            obj += float(blk[v] @ instance.overlap[v, u] @ blk[u])
    return obj + penalty * (onehot + card)


def all_qubo_values(model: QuboModel) -> np.ndarray:
    """Energies of all ``2**Q`` bitstrings, index ``x`` holding bit ``i`` at ``(x >> i) & 1``."""
    q = model.dim
    vals = np.array([model.constant])
    for i in range(q):
        field = np.zeros(1)
        col = model.quadratic[:i, i]
        for j in range(i):
            field = np.concatenate([field, field + col[j]])
        vals = np.concatenate([vals, vals + model.linear[i] + field])
    return vals


def max_norm(model: QuboModel) -> float:
    return max(float(np.abs(model.linear).max(initial=0.0)),
               float(np.abs(model.quadratic).max(initial=0.0)),
               abs(model.constant))


def normalized(model: QuboModel) -> QuboModel:
    m = max_norm(model)
    if m == 0.0:
        raise ValueError("cannot normalise an all-zero model")
    return QuboModel(model.linear / m, model.quadratic / m, model.constant / m, model.penalty / m)
