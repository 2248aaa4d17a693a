"""Numba kernels for the statevector engines.

The full-space engine keeps amplitudes as separate real/imaginary float64
arrays so the rotation loops vectorise.  Bit ``q`` of a basis index is
qubit ``q``.  The transverse-field factor ``exp(i*theta*X)`` is the same
2x2 rotation on every qubit:

    a' = c*a + i*s*b,   b' = i*s*a + c*b

A layer applies it to all qubits.  Qubits are processed two at a time
where possible, in three regimes: strides below 64 with explicit index
loops, strides inside a cache-sized block with contiguous views, and the
remaining high qubits in column chunks that keep the working set in L2.
"""

from __future__ import annotations

import numba as nb
import numpy as np

BLOCK_BITS = 15
SMALL_BITS = 6
GROUP_BITS = 5
COL_WIDTH = 2048


@nb.njit(cache=True, fastmath=True, inline="always")
def _r2(ar, ai, br, bi, c, s):
    return c * ar - s * bi, c * ai + s * br, c * br - s * ai, c * bi + s * ar


@nb.njit(cache=True, fastmath=True)
def _rot2_views(a_r, a_i, b_r, b_i, c, s):
    for t in range(a_r.size):
        a_r[t], a_i[t], b_r[t], b_i[t] = _r2(a_r[t], a_i[t], b_r[t], b_i[t], c, s)


@nb.njit(cache=True, fastmath=True)
def _rot4_views(x0r, x0i, x1r, x1i, x2r, x2i, x3r, x3i, c, s):
    for t in range(x0r.size):
        a0r, a0i, a1r, a1i = _r2(x0r[t], x0i[t], x1r[t], x1i[t], c, s)
        a2r, a2i, a3r, a3i = _r2(x2r[t], x2i[t], x3r[t], x3i[t], c, s)
        x0r[t], x0i[t], x2r[t], x2i[t] = _r2(a0r, a0i, a2r, a2i, c, s)
        x1r[t], x1i[t], x3r[t], x3i[t] = _r2(a1r, a1i, a3r, a3i, c, s)


# separate views tell the compiler the partners do not alias
@nb.njit(cache=True, inline="always")
def _one(re, im, i, st, m, c, s):
    j = i + st
    _rot2_views(re[i:i + m], im[i:i + m], re[j:j + m], im[j:j + m], c, s)


@nb.njit(cache=True, inline="always")
def _two(re, im, i, st, m, c, s):
    j = i + st
    k = j + st
    l = k + st
    _rot4_views(re[i:i + m], im[i:i + m], re[j:j + m], im[j:j + m],
                re[k:k + m], im[k:k + m], re[l:l + m], im[l:l + m], c, s)


@nb.njit(cache=True, fastmath=True)
def _small_one(re, im, lo, hi, st, c, s):
    for i0 in range(lo, hi, 2 * st):
        for t in range(st):
            i = i0 + t
            j = i + st
            re[i], im[i], re[j], im[j] = _r2(re[i], im[i], re[j], im[j], c, s)


@nb.njit(cache=True, fastmath=True)
def _small_two(re, im, lo, hi, st, c, s):
    for i0 in range(lo, hi, 4 * st):
        for t in range(st):
            i = i0 + t
            j = i + st
            k = j + st
            m = k + st
            a0r, a0i, a1r, a1i = _r2(re[i], im[i], re[j], im[j], c, s)
            a2r, a2i, a3r, a3i = _r2(re[k], im[k], re[m], im[m], c, s)
            re[i], im[i], re[k], im[k] = _r2(a0r, a0i, a2r, a2i, c, s)
            re[j], im[j], re[m], im[m] = _r2(a1r, a1i, a3r, a3i, c, s)


@nb.njit(cache=True, fastmath=True)
def _phase(re, im, pr, pi, wr, wi, lo, hi):
    # advance the running phasor p <- p * w, then psi <- psi * p
    for i in range(lo, hi):
        a = pr[i] * wr[i] - pi[i] * wi[i]
        b = pr[i] * wi[i] + pi[i] * wr[i]
        pr[i] = a
        pi[i] = b
        x = re[i] * a - im[i] * b
        y = re[i] * b + im[i] * a
        re[i] = x
        im[i] = y


@nb.njit(cache=True)
def _block(re, im, lo, hi, q1, c, s):
    """Qubits ``0..q1-1`` on the aligned range ``[lo, hi)``."""
    q = 0
    while q < q1:
        st = 1 << q
        pair = q + 1 < q1
        if q < SMALL_BITS:
            if pair and q + 1 < SMALL_BITS:
                _small_two(re, im, lo, hi, st, c, s)
                q += 2
            else:
                _small_one(re, im, lo, hi, st, c, s)
                q += 1
        elif pair:
            for base in range(lo, hi, 4 * st):
                _two(re, im, base, st, st, c, s)
            q += 2
        else:
            for base in range(lo, hi, 2 * st):
                _one(re, im, base, st, st, c, s)
            q += 1


@nb.njit(cache=True)
def _group(re, im, q0, q1, width, c, s):
    """Qubits ``q0..q1-1`` in columns of ``width`` low-order indices."""
    n = re.size
    lo = 1 << q0
    span = 1 << q1
    for outer in range(0, n, span):
        for col in range(0, lo, width):
            q = q0
            while q < q1:
                st = 1 << q
                if q + 1 < q1:
                    for base in range(outer, outer + span, 4 * st):
                        for r in range(base + col, base + st, lo):
                            _two(re, im, r, st, width, c, s)
                    q += 2
                else:
                    for base in range(outer, outer + span, 2 * st):
                        for r in range(base + col, base + st, lo):
                            _one(re, im, r, st, width, c, s)
                    q += 1


@nb.njit(cache=True)
def _layer(re, im, pr, pi, wr, wi, n_qubits, c, s, with_phase):
    n = re.size
    bb = min(n_qubits, BLOCK_BITS)
    bs = 1 << bb
    for start in range(0, n, bs):
        if with_phase:
            _phase(re, im, pr, pi, wr, wi, start, start + bs)
        _block(re, im, start, start + bs, bb, c, s)
    q = bb
    while q < n_qubits:
        q1 = min(n_qubits, q + GROUP_BITS)
        _group(re, im, q, q1, min(COL_WIDTH, 1 << q), c, s)
        q = q1


@nb.njit(cache=True)
def x_layer(re, im, n_qubits, c, s):
    """Transverse-field rotation with angle ``atan2(s, c)`` on every qubit."""
    _layer(re, im, re[:0], im[:0], re[:0], im[:0], n_qubits, c, s, False)


@nb.njit(cache=True)
def qaa_basic_evolve(re, im, wr, wi, n_qubits, n_layers, tau):
    """All layers of the Trotterised schedule, in place.

    Layer ``l`` multiplies by ``w**l`` (``w = exp(-i*tau/L*E)``) and then
    applies the mixer with angle ``tau*(1 - l/L)``; the final mixer has
    angle zero and is skipped.
    """
    n = re.size
    pr = np.ones(n)
    pi = np.zeros(n)
    for layer in range(1, n_layers + 1):
        theta = tau * (1.0 - layer / n_layers)
        if layer == n_layers:
            _phase(re, im, pr, pi, wr, wi, 0, n)
        else:
            _layer(re, im, pr, pi, wr, wi, n_qubits, np.cos(theta), np.sin(theta), True)


@nb.njit(cache=True)
def rotate_pairs(psi, ia, ib, c, s):
    """Sequential 2-level rotations on complex amplitude pairs ``(ia[t], ib[t])``."""
    g = 1j * s
    for t in range(ia.size):
        a = psi[ia[t]]
        b = psi[ib[t]]
        psi[ia[t]] = c * a + g * b
        psi[ib[t]] = g * a + c * b
