"""Problem instances for multi-frequency antenna placement.

An instance places ``k`` antennas on ``N`` candidate sites, each antenna
operating at one of ``F`` frequencies.  A solution is an integer label per
site: ``0`` means the site is empty, ``1..F`` selects a frequency.

Overlaps are kept as a dense tensor ``overlap[v, u, p, q]`` indexed with
frequency *labels* ``0..F`` (row/column ``0`` is identically zero), so every
kernel can look up ``overlap[v, u, f[v], f[u]]`` without masking.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

__all__ = [
    "GeometryParams",
    "Instance",
    "QubitLayout",
    "assignment_to_bits",
    "bits_to_assignment",
    "cost",
    "cost_many",
    "feasible_space_size",
    "generate_instance",
    "is_feasible",
    "is_feasible_bits",
    "lens_area",
    "load_instance",
    "optimal_k",
    "save_instance",
]


def _frozen(a, dtype=float) -> np.ndarray:
    a = np.array(a, dtype=dtype)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Instance:
    n_sites: int
    n_freq: int
    n_antennas: int
    alpha: float
    sites: np.ndarray
    radii: np.ndarray
    areas: np.ndarray
    overlap: np.ndarray  # (N, N, F+1, F+1), symmetric under (v,p) <-> (u,q)
    _neighbors: tuple = field(default=None, repr=False)

    def __post_init__(self):
        n, f, k = self.n_sites, self.n_freq, self.n_antennas
        if n < 1 or f < 1:
            raise ValueError(f"need n_sites >= 1 and n_freq >= 1, got N={n}, F={f}")
        if not 0 <= k <= n:
            raise ValueError(f"n_antennas must lie in [0, {n}], got {k}")
        if self.alpha < 0:
            raise ValueError("alpha must be non-negative")
        object.__setattr__(self, "sites", _frozen(self.sites).reshape(n, 2))
        object.__setattr__(self, "radii", _frozen(self.radii).reshape(n))
        object.__setattr__(self, "areas", _frozen(self.areas).reshape(n))
        ov = np.array(self.overlap, dtype=float)
        if ov.shape != (n, n, f + 1, f + 1):
            raise ValueError(f"overlap tensor has shape {ov.shape}, expected {(n, n, f + 1, f + 1)}")
        if np.any(self.areas < 0) or np.any(ov < 0):
            raise ValueError("areas and overlaps must be non-negative")
        if np.any(ov[:, :, 0, :]) or np.any(ov[:, :, :, 0]):
            raise ValueError("overlap entries for the empty label must be zero")
        if np.any(ov[np.arange(n), np.arange(n)]):
            raise ValueError("self-overlap entries must be zero")
        if not np.allclose(ov, ov.transpose(1, 0, 3, 2), rtol=0, atol=0):
            raise ValueError("overlap must be symmetric under (v,p) <-> (u,q)")
        ov.setflags(write=False)
        object.__setattr__(self, "overlap", ov)
        nz = np.any(ov.reshape(n, n, -1) > 0, axis=2)
        indptr = np.zeros(n + 1, dtype=np.int64)
        indptr[1:] = np.cumsum(nz.sum(axis=1))
        indices = np.nonzero(nz)[1].astype(np.int64)
        object.__setattr__(self, "_neighbors", (_frozen(indptr, np.int64), _frozen(indices, np.int64)))

    @property
    def n_qubits(self) -> int:
        return self.n_sites * (self.n_freq + 1)

    @property
    def layout(self) -> "QubitLayout":
        return QubitLayout(self.n_sites, self.n_freq)

    @property
    def neighbors(self) -> tuple[np.ndarray, np.ndarray]:
        """CSR ``(indptr, indices)`` of sites sharing a nonzero overlap entry."""
        return self._neighbors

    @property
    def is_diagonal(self) -> bool:
        f = self.n_freq
        off = ~np.eye(f + 1, dtype=bool)
        return not np.any(self.overlap[:, :, off])

    def overlap_matrix(self) -> np.ndarray:
        """Same-frequency overlaps ``O[v, u]`` (exact for frequency-diagonal instances)."""
        return np.array(self.overlap[:, :, 1, 1])

    def pair_overlaps(self) -> list[tuple[int, int, float]]:
        """Nonzero ``(v, u, O_vu)`` for ``v < u``, frequency-diagonal reading."""
        om = self.overlap_matrix()
        vs, us = np.nonzero(np.triu(om, 1))
        return [(int(v), int(u), float(om[v, u])) for v, u in zip(vs, us)]

    def subinstance(self, sites, n_antennas: int) -> "Instance":
        """Restriction to ``sites`` with a new antenna budget (cross terms dropped)."""
        idx = np.asarray(sites, dtype=np.int64)
        return Instance(
            n_sites=len(idx),
            n_freq=self.n_freq,
            n_antennas=int(n_antennas),
            alpha=self.alpha,
            sites=self.sites[idx],
            radii=self.radii[idx],
            areas=self.areas[idx],
            overlap=self.overlap[np.ix_(idx, idx)],
        )

    def scaled(self, factor: float) -> "Instance":
        return Instance(self.n_sites, self.n_freq, self.n_antennas, self.alpha * factor,
                        self.sites, self.radii, self.areas * factor, self.overlap * factor)

    def to_dict(self) -> dict:
        d = {
            "n_sites": self.n_sites,
            "n_freq": self.n_freq,
            "n_antennas": self.n_antennas,
            "alpha": self.alpha,
            "sites": [{"x": float(x), "y": float(y), "r": float(r)}
                      for (x, y), r in zip(self.sites, self.radii)],
            "areas": [float(a) for a in self.areas],
        }
        if not self.is_diagonal:
            raise ValueError("instance files only carry frequency-diagonal overlaps")
        d["overlaps"] = [{"v": v + 1, "u": u + 1, "value": o} for v, u, o in self.pair_overlaps()]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "Instance":
        n, f, k = int(d["n_sites"]), int(d["n_freq"]), int(d["n_antennas"])
        sites = d["sites"]
        if len(sites) != n:
            raise ValueError(f"expected {n} sites, got {len(sites)}")
        xy = np.array([[s["x"], s["y"]] for s in sites], dtype=float)
        radii = np.array([s["r"] for s in sites], dtype=float)
        areas = np.array(d["areas"], dtype=float) if d.get("areas") is not None else np.pi * radii**2
        if "overlaps" in d and d["overlaps"] is not None:
            om = np.zeros((n, n))
            for o in d["overlaps"]:
                v, u = int(o["v"]) - 1, int(o["u"]) - 1
                if not (0 <= v < n and 0 <= u < n) or v == u:
                    raise ValueError(f"bad overlap indices ({o['v']}, {o['u']})")
                om[v, u] = om[u, v] = float(o["value"])
        else:
            om = disc_overlaps(xy, radii)
        alpha = d.get("alpha")
        if alpha is None:
            alpha = 0.01 * float(areas.max(initial=0.0))
        return cls(n, f, k, float(alpha), xy, radii, areas, diagonal_overlap(om, f))


def diagonal_overlap(om: np.ndarray, n_freq: int) -> np.ndarray:
    """Expand an (N, N) matrix into the frequency-diagonal overlap tensor."""
    n = om.shape[0]
    ov = np.zeros((n, n, n_freq + 1, n_freq + 1))
    for p in range(1, n_freq + 1):
        ov[:, :, p, p] = om
    ov[np.arange(n), np.arange(n)] = 0.0
    return ov


def lens_area(r1: float, r2: float, d: float) -> float:
    """Area of the intersection of two discs with radii ``r1, r2`` at center distance ``d``."""
    if d >= r1 + r2:
        return 0.0
    if d <= abs(r1 - r2):
        return math.pi * min(r1, r2) ** 2
    a1 = r1 * r1 * math.acos((d * d + r1 * r1 - r2 * r2) / (2 * d * r1))
    a2 = r2 * r2 * math.acos((d * d + r2 * r2 - r1 * r1) / (2 * d * r2))
    tri = 0.5 * math.sqrt((-d + r1 + r2) * (d + r1 - r2) * (d - r1 + r2) * (d + r1 + r2))
    return a1 + a2 - tri


def disc_overlaps(xy: np.ndarray, radii: np.ndarray) -> np.ndarray:
    n = len(radii)
    om = np.zeros((n, n))
    for v in range(n):
        for u in range(v + 1, n):
            d = float(np.hypot(*(xy[v] - xy[u])))
            om[v, u] = om[u, v] = lens_area(float(radii[v]), float(radii[u]), d)
    return om


@dataclass(frozen=True)
class GeometryParams:
    """Synthetic planar geometry: uniform sites in a box, disc coverage.

    When ``width``/``height`` are omitted the box is a square whose side keeps
    ``site_density`` sites per unit area.
    """

    width: float | None = None
    height: float | None = None
    site_density: float = 0.4
    r_min: float = 0.8
    r_max: float = 1.6
    alpha_scale: float = 0.01

    def box(self, n_sites: int) -> tuple[float, float]:
        if self.width is not None and self.height is not None:
            return float(self.width), float(self.height)
        side = math.sqrt(n_sites / self.site_density)
        return (float(self.width or side), float(self.height or side))


def generate_instance(n_sites: int, n_freq: int, n_antennas: int, seed: int = 0,
                      geometry: GeometryParams | None = None) -> Instance:
    if n_freq < 1 or n_sites < 1:
        raise ValueError("need n_sites >= 1 and n_freq >= 1")
    if not 0 <= n_antennas <= n_sites:
        raise ValueError(f"n_antennas={n_antennas} exceeds n_sites={n_sites}")
    geometry = geometry or GeometryParams()
    if not 0 < geometry.r_min <= geometry.r_max:
        raise ValueError("radius range must satisfy 0 < r_min <= r_max")
    rng = np.random.default_rng(seed)
    w, h = geometry.box(n_sites)
    xy = rng.uniform((0.0, 0.0), (w, h), size=(n_sites, 2))
    radii = rng.uniform(geometry.r_min, geometry.r_max, size=n_sites)
    areas = np.pi * radii**2
    om = disc_overlaps(xy, radii)
    alpha = geometry.alpha_scale * float(areas.max())
    return Instance(n_sites, n_freq, n_antennas, alpha, xy, radii, areas, diagonal_overlap(om, n_freq))


def load_instance(path) -> Instance:
    return Instance.from_dict(json.loads(Path(path).read_text()))


def save_instance(instance: Instance, path) -> None:
    Path(path).write_text(json.dumps(instance.to_dict(), indent=1) + "\n")


# -- cost and feasibility ----------------------------------------------------

def _check_labels(instance: Instance, f) -> np.ndarray:
    f = np.asarray(f, dtype=np.int64)
    if f.shape[-1] != instance.n_sites:
        raise ValueError(f"assignment needs {instance.n_sites} labels, got {f.shape[-1]}")
    if f.size and (f.min() < 0 or f.max() > instance.n_freq):
        raise ValueError(f"labels must lie in 0..{instance.n_freq}")
    return f


def _label_penalty(instance: Instance, f: np.ndarray) -> np.ndarray:
    return instance.alpha * np.where(f >= 2, f, 0).sum(axis=-1)


def cost(instance: Instance, assignment) -> float:
    """Coverage/interference objective; defined on any labelling, feasible or not."""
    f = _check_labels(instance, assignment)
    act = np.nonzero(f)[0]
    fa = f[act]
    pair = instance.overlap[act[:, None], act[None, :], fa[:, None], fa[None, :]]
    return float(pair.sum() / 2 - instance.areas[act].sum() + _label_penalty(instance, f))


def cost_many(instance: Instance, labels: np.ndarray) -> np.ndarray:
    """Vectorised :func:`cost` over rows of an ``(M, N)`` label array."""
    f = _check_labels(instance, labels)
    f = np.atleast_2d(f)
    out = -(instance.areas[None, :] * (f > 0)).sum(axis=1) + _label_penalty(instance, f)
    indptr, indices = instance.neighbors
    for v in range(instance.n_sites):
        for u in indices[indptr[v]:indptr[v + 1]]:
            if u > v:
                out += instance.overlap[v, u][f[:, v], f[:, u]]
    return out


def is_feasible(instance: Instance, assignment) -> bool:
    f = _check_labels(instance, assignment)
    return int(np.count_nonzero(f)) == instance.n_antennas


def feasible_space_size(n_sites: int, n_freq: int, n_antennas: int, bound: int | None = None) -> int:
    """Exact ``C(N, k) * F**k``.

    Python integers never wrap; ``bound`` turns an oversize result into an
    :class:`OverflowError` for callers that need a fixed-width index.
    """
    if not 0 <= n_antennas <= n_sites:
        raise ValueError(f"n_antennas={n_antennas} outside [0, {n_sites}]")
    size = math.comb(n_sites, n_antennas) * n_freq**n_antennas
    if bound is not None and size > bound:
        raise OverflowError(f"feasible space of size {size} exceeds {bound}")
    return size


def optimal_k(n_sites: int, n_freq: int) -> int:
    """Antenna count maximising the feasible-space size."""
    if n_sites < 1 or n_freq < 1:
        raise ValueError("need n_sites >= 1 and n_freq >= 1")
    return (n_freq * (n_sites + 1)) // (n_freq + 1)


# -- qubit encoding ----------------------------------------------------------

@dataclass(frozen=True)
class QubitLayout:
    """One-hot bit positions: empty-site bits first, then one register per site.

    With 0-based site ``v``: ``index(v, 0) = v`` and
    ``index(v, p) = N + v*F + (p - 1)`` for ``p >= 1``.
    """

    n_sites: int
    n_freq: int

    @property
    def n_qubits(self) -> int:
        return self.n_sites * (self.n_freq + 1)

    def index(self, v: int, p: int) -> int:
        if not (0 <= v < self.n_sites and 0 <= p <= self.n_freq):
            raise IndexError(f"(v={v}, p={p}) out of range")
        if p == 0:
            return v
        return self.n_sites + v * self.n_freq + p - 1

    @property
    def table(self) -> np.ndarray:
        """``(N, F+1)`` array of bit positions."""
        n, f = self.n_sites, self.n_freq
        t = np.empty((n, f + 1), dtype=np.int64)
        t[:, 0] = np.arange(n)
        t[:, 1:] = n + np.arange(n)[:, None] * f + np.arange(f)[None, :]
        return t

    def blocks(self, bits: np.ndarray) -> np.ndarray:
        """Reshape bitstrings ``(..., Q)`` into per-site blocks ``(..., N, F+1)``."""
        bits = np.asarray(bits)
        if bits.shape[-1] != self.n_qubits:
            raise ValueError(f"bitstring length {bits.shape[-1]} != {self.n_qubits}")
        return bits[..., self.table]


def assignment_to_bits(layout: QubitLayout, assignment) -> np.ndarray:
    f = np.asarray(assignment, dtype=np.int64)
    if f.shape[-1] != layout.n_sites or f.min(initial=0) < 0 or f.max(initial=0) > layout.n_freq:
        raise ValueError("assignment does not fit the layout")
    bits = np.zeros(f.shape[:-1] + (layout.n_qubits,), dtype=np.uint8)
    pos = layout.table[np.arange(layout.n_sites), f]
    np.put_along_axis(bits, pos, 1, axis=-1)
    return bits


def bits_to_assignment(layout: QubitLayout, bits) -> np.ndarray:
    blk = layout.blocks(bits)
    if np.any(blk.sum(axis=-1) != 1):
        raise ValueError("bitstring violates the one-hot constraint at some site")
    return blk.argmax(axis=-1).astype(np.int64)


def is_feasible_bits(instance: Instance, bits) -> bool:
    blk = instance.layout.blocks(np.asarray(bits, dtype=np.int64))
    if np.any((blk != 0) & (blk != 1)):
        raise ValueError("bitstring entries must be 0/1")
    return bool(np.all(blk.sum(axis=-1) == 1) and blk[..., 1:].sum() == instance.n_antennas)
