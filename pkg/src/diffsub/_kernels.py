"""Hot numeric kernels, in two flavors: numba @njit and pure numpy.

Every kernel exists as a ``*_jit`` and a ``*_np`` implementation with
identical signatures and semantics.  The public name (no suffix) is bound
to the jit flavor unless numba is unavailable or the environment variable
``DIFFSUB_DISABLE_NUMBA`` is set to 1/true/yes, in which case the numpy
flavor is used.  ``benchmarks/bench_kernels.py`` times the two flavors
against each other.

Conventions: subsets are int64 bitmasks (element i <-> bit i, n <= 62);
coverage structure arrives pre-flattened as

    weights[p]                      value of point p
    point_masks[p]                  bitmask of elements covering point p
    pt_idx[pt_off[p]:pt_off[p+1]]   element indices covering point p
"""

from __future__ import annotations

import os

import numpy as np


def _numba_disabled() -> bool:
    return os.environ.get("DIFFSUB_DISABLE_NUMBA", "").strip().lower() in (
        "1",
        "true",
        "yes",
        "on",
    )


NUMBA_ENABLED = False
if not _numba_disabled():
    try:
        from numba import njit

        NUMBA_ENABLED = True
    except ImportError:  # pragma: no cover - numba is a declared dependency
        pass

if not NUMBA_ENABLED:

    def njit(*args, **kwargs):
        """No-op stand-in so the _jit definitions below stay importable."""
        if args and callable(args[0]):
            return args[0]

        def wrap(fn):
            return fn

        return wrap


# ---------------------------------------------------------------------------
# discrete coverage evaluation
# ---------------------------------------------------------------------------


@njit(cache=True)
def cover_value_jit(point_masks, weights, mask):
    total = 0.0
    for p in range(point_masks.shape[0]):
        if point_masks[p] & mask:
            total += weights[p]
    return total


def cover_value_np(point_masks, weights, mask):
    return float(weights[(point_masks & mask) != 0].sum())


@njit(cache=True)
def cover_values_many_jit(point_masks, weights, masks):
    out = np.empty(masks.shape[0])
    for b in range(masks.shape[0]):
        total = 0.0
        for p in range(point_masks.shape[0]):
            if point_masks[p] & masks[b]:
                total += weights[p]
        out[b] = total
    return out


def cover_values_many_np(point_masks, weights, masks, chunk=4096):
    out = np.empty(masks.shape[0])
    for lo in range(0, masks.shape[0], chunk):
        hi = min(lo + chunk, masks.shape[0])
        hit = (masks[lo:hi, None] & point_masks[None, :]) != 0
        out[lo:hi] = hit @ weights
    return out


# ---------------------------------------------------------------------------
# multilinear extension of a coverage function (factored product form)
#
# F(x) = sum_p w_p * (1 - prod_{e covers p} (1 - x_e)); identical to the
# subset-sum definition because both are the unique multilinear extension.
# ---------------------------------------------------------------------------


@njit(cache=True)
def cover_ext_value_jit(x, pt_idx, pt_off, weights):
    total = 0.0
    for p in range(weights.shape[0]):
        prod = 1.0
        for t in range(pt_off[p], pt_off[p + 1]):
            prod *= 1.0 - x[pt_idx[t]]
        total += weights[p] * (1.0 - prod)
    return total


def _densify(n, pt_idx, pt_off, npts):
    covers_bool = np.zeros((n, npts), dtype=bool)
    cols = np.repeat(np.arange(npts), np.diff(pt_off))
    covers_bool[pt_idx, cols] = True
    return covers_bool


def cover_ext_value_np(x, pt_idx, pt_off, weights):
    covers_bool = _densify(x.shape[0], pt_idx, pt_off, weights.shape[0])
    factors = np.where(covers_bool, (1.0 - x)[:, None], 1.0)
    return float(weights @ (1.0 - factors.prod(axis=0)))


@njit(cache=True)
def cover_ext_value_grad_jit(x, pt_idx, pt_off, weights, grad_out):
    grad_out[:] = 0.0
    total = 0.0
    for p in range(weights.shape[0]):
        lo, hi = pt_off[p], pt_off[p + 1]
        prod = 1.0
        for t in range(lo, hi):
            prod *= 1.0 - x[pt_idx[t]]
        total += weights[p] * (1.0 - prod)
        # d/dx_e of (1 - prod) = prod of the other factors
        for t in range(lo, hi):
            excl = 1.0
            for s in range(lo, hi):
                if s != t:
                    excl *= 1.0 - x[pt_idx[s]]
            grad_out[pt_idx[t]] += weights[p] * excl
    return total


def cover_ext_value_grad_np(x, pt_idx, pt_off, weights, grad_out):
    covers_bool = _densify(x.shape[0], pt_idx, pt_off, weights.shape[0])
    factors = np.where(covers_bool, (1.0 - x)[:, None], 1.0)
    prod = factors.prod(axis=0)
    value = float(weights @ (1.0 - prod))
    # product excluding row e, stable when some factor is exactly zero
    zero = factors == 0.0
    nzero = zero.sum(axis=0)
    prod_nonzero = np.where(zero, 1.0, factors).prod(axis=0)
    safe = np.where(zero, 1.0, factors)
    excl = np.where(
        nzero[None, :] == 0,
        prod[None, :] / safe,
        np.where((nzero[None, :] == 1) & zero, prod_nonzero[None, :], 0.0),
    )
    grad_out[:] = (excl * covers_bool) @ weights
    return value


# ---------------------------------------------------------------------------
# multilinear extension by subset enumeration (any tabulated set function)
# ---------------------------------------------------------------------------


@njit(cache=True)
def enum_ext_value_jit(values, x):
    n = x.shape[0]
    total = 0.0
    for mask in range(values.shape[0]):
        prob = 1.0
        for i in range(n):
            if mask & (1 << i):
                prob *= x[i]
            else:
                prob *= 1.0 - x[i]
        total += values[mask] * prob
    return total


def enum_ext_value_np(values, x):
    n = x.shape[0]
    masks = np.arange(values.shape[0])
    prob = np.ones(values.shape[0])
    for i in range(n):
        bit = (masks >> i) & 1
        prob *= np.where(bit == 1, x[i], 1.0 - x[i])
    return float(values @ prob)


@njit(cache=True)
def enum_ext_value_grad_jit(values, x, grad_out):
    n = x.shape[0]
    grad_out[:] = 0.0
    total = 0.0
    factors = np.empty(n)
    prefix = np.empty(n + 1)
    suffix = np.empty(n + 1)
    for mask in range(values.shape[0]):
        for i in range(n):
            if mask & (1 << i):
                factors[i] = x[i]
            else:
                factors[i] = 1.0 - x[i]
        prefix[0] = 1.0
        for i in range(n):
            prefix[i + 1] = prefix[i] * factors[i]
        suffix[n] = 1.0
        for i in range(n - 1, -1, -1):
            suffix[i] = suffix[i + 1] * factors[i]
        total += values[mask] * prefix[n]
        for i in range(n):
            excl = prefix[i] * suffix[i + 1]
            if mask & (1 << i):
                grad_out[i] += values[mask] * excl
            else:
                grad_out[i] -= values[mask] * excl
    return total


def enum_ext_value_grad_np(values, x, grad_out):
    n = x.shape[0]
    masks = np.arange(values.shape[0])
    bits = [(masks >> i) & 1 for i in range(n)]
    prob = np.ones(values.shape[0])
    for i in range(n):
        prob *= np.where(bits[i] == 1, x[i], 1.0 - x[i])
    total = float(values @ prob)
    for i in range(n):
        excl = np.ones(values.shape[0])
        for j in range(n):
            if j != i:
                excl *= np.where(bits[j] == 1, x[j], 1.0 - x[j])
        signed = np.where(bits[i] == 1, excl, -excl)
        grad_out[i] = values @ signed
    return total


# ---------------------------------------------------------------------------
# Monte-Carlo estimators (uniforms are drawn by the caller so that the same
# stream is reused across evaluations - common random numbers)
# ---------------------------------------------------------------------------


@njit(cache=True)
def cover_mc_value_grad_jit(x, uniforms, pt_idx, pt_off, weights, grad_out):
    nsamp, n = uniforms.shape
    npts = weights.shape[0]
    grad_out[:] = 0.0
    total = 0.0
    for s in range(nsamp):
        for p in range(npts):
            lo, hi = pt_off[p], pt_off[p + 1]
            cnt = 0
            for t in range(lo, hi):
                if uniforms[s, pt_idx[t]] < x[pt_idx[t]]:
                    cnt += 1
            if cnt >= 1:
                total += weights[p]
            # f(q | q_i=1) - f(q | q_i=0) restricted to point p is w_p when
            # i is the only active coverer (or none is active)
            if cnt == 0:
                for t in range(lo, hi):
                    grad_out[pt_idx[t]] += weights[p]
            elif cnt == 1:
                for t in range(lo, hi):
                    if uniforms[s, pt_idx[t]] < x[pt_idx[t]]:
                        grad_out[pt_idx[t]] += weights[p]
    grad_out /= nsamp
    return total / nsamp


def cover_mc_value_grad_np(x, uniforms, pt_idx, pt_off, weights, grad_out):
    covers_bool = _densify(x.shape[0], pt_idx, pt_off, weights.shape[0])
    q = uniforms < x
    cnt = q.astype(np.float64) @ covers_bool.astype(np.float64)
    value = float(((cnt >= 1.0) @ weights).mean())
    w0 = (cnt == 0.0) * weights
    w1 = (cnt == 1.0) * weights
    grad = w0 @ covers_bool.T + q * (w1 @ covers_bool.T)
    grad_out[:] = grad.mean(axis=0)
    return value


@njit(cache=True)
def enum_mc_value_grad_jit(values, x, uniforms, grad_out):
    nsamp, n = uniforms.shape
    grad_out[:] = 0.0
    total = 0.0
    for s in range(nsamp):
        mask = 0
        for i in range(n):
            if uniforms[s, i] < x[i]:
                mask |= 1 << i
        total += values[mask]
        for i in range(n):
            grad_out[i] += values[mask | (1 << i)] - values[mask & ~(1 << i)]
    grad_out /= nsamp
    return total / nsamp


def enum_mc_value_grad_np(values, x, uniforms, grad_out):
    n = x.shape[0]
    q = uniforms < x
    masks = q.astype(np.int64) @ (1 << np.arange(n))
    total = float(values[masks].mean())
    for i in range(n):
        bit = 1 << i
        grad_out[i] = (values[masks | bit] - values[masks & ~bit]).mean()
    return total


# ---------------------------------------------------------------------------
# reverse sweep over a recorded tape
# ---------------------------------------------------------------------------


@njit(cache=True)
def tape_backward_jit(offsets, parents, partials, adj):
    for node in range(offsets.shape[0] - 2, -1, -1):
        a = adj[node]
        if a == 0.0:
            continue
        for t in range(offsets[node], offsets[node + 1]):
            adj[parents[t]] += a * partials[t]
    return adj


def tape_backward_np(offsets, parents, partials, adj):
    for node in range(offsets.shape[0] - 2, -1, -1):
        a = adj[node]
        if a == 0.0:
            continue
        lo, hi = offsets[node], offsets[node + 1]
        np.add.at(adj, parents[lo:hi], a * partials[lo:hi])
    return adj


if NUMBA_ENABLED:
    cover_value = cover_value_jit
    cover_values_many = cover_values_many_jit
    cover_ext_value = cover_ext_value_jit
    cover_ext_value_grad = cover_ext_value_grad_jit
    enum_ext_value = enum_ext_value_jit
    enum_ext_value_grad = enum_ext_value_grad_jit
    cover_mc_value_grad = cover_mc_value_grad_jit
    enum_mc_value_grad = enum_mc_value_grad_jit
    tape_backward = tape_backward_jit
else:
    cover_value = cover_value_np
    cover_values_many = cover_values_many_np
    cover_ext_value = cover_ext_value_np
    cover_ext_value_grad = cover_ext_value_grad_np
    enum_ext_value = enum_ext_value_np
    enum_ext_value_grad = enum_ext_value_grad_np
    cover_mc_value_grad = cover_mc_value_grad_np
    enum_mc_value_grad = enum_mc_value_grad_np
    tape_backward = tape_backward_np
