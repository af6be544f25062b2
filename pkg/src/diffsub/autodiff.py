"""Minimal reverse-mode autodiff on a scalar tape.

Each node holds one float; vectors are plain sequences of node ids, and
vector ops (dot, matvec, softmax, ...) expand into scalar nodes.  Local
partial derivatives are stored at record time, so the backward pass is a
single reverse sweep accumulating adjoint * partial - the sweep itself
runs in a kernel (see _kernels.tape_backward).
"""

from __future__ import annotations

import math
from array import array
from typing import List, Sequence

import numpy as np

from . import _kernels

NodeId = int


class Tape:
    """Append-only record of operations; parents always precede children.

    Parents and local partials live in flat C arrays so the backward sweep
    can view them as numpy buffers without a copy.
    """

    def __init__(self):
        self.kinds: List[str] = []
        self.values: List[float] = []
        self._parents = array("q")
        self._partials = array("d")
        self._offsets = array("q", [0])

    def __len__(self) -> int:
        return len(self.values)

    def record(
        self,
        kind: str,
        parents: Sequence[NodeId],
        value: float,
        partials: Sequence[float],
    ) -> NodeId:
        """Append a node; returns its id."""
        nid = len(self.values)
        if len(parents) != len(partials):
            raise ValueError("parents and partials must have equal length")
        if parents and (min(parents) < 0 or max(parents) >= nid):
            raise ValueError(f"dangling parent for node {nid}")
        self.kinds.append(kind)
        self.values.append(float(value))
        self._parents.extend(parents)
        self._partials.extend(partials)
        self._offsets.append(len(self._parents))
        return nid

    def value(self, nid: NodeId) -> float:
        return self.values[nid]

    def values_of(self, nids: Sequence[NodeId]) -> np.ndarray:
        vals = self.values
        return np.array([vals[i] for i in nids])

    def backward(self, output: NodeId) -> np.ndarray:
        """Adjoints of `output` w.r.t. every node, indexed by node id.

        Gradients accumulate over multiple paths; nodes recorded after
        `output` receive zero.
        """
        if output < 0 or output >= len(self.values):
            raise ValueError(f"node {output} not on tape")
        adj = np.zeros(len(self.values))
        adj[output] = 1.0
        offsets = np.frombuffer(self._offsets, dtype=np.int64)
        parents = (
            np.frombuffer(self._parents, dtype=np.int64)
            if self._parents
            else np.empty(0, dtype=np.int64)
        )
        partials = (
            np.frombuffer(self._partials, dtype=np.float64)
            if self._partials
            else np.empty(0)
        )
        _kernels.tape_backward(offsets, parents, partials, adj)
        return adj


def backward(tape: Tape, output: NodeId) -> np.ndarray:
    return tape.backward(output)


# ---------------------------------------------------------------------------
# op library
# ---------------------------------------------------------------------------


def const(tape: Tape, v: float) -> NodeId:
    return tape.record("const", (), v, ())


def const_vec(tape: Tape, vs) -> List[NodeId]:
    return [tape.record("const", (), v, ()) for v in vs]


def add(tape: Tape, a: NodeId, b: NodeId) -> NodeId:
    return tape.record("add", (a, b), tape.values[a] + tape.values[b], (1.0, 1.0))


def sub(tape: Tape, a: NodeId, b: NodeId) -> NodeId:
    return tape.record("sub", (a, b), tape.values[a] - tape.values[b], (1.0, -1.0))


def mul(tape: Tape, a: NodeId, b: NodeId) -> NodeId:
    va, vb = tape.values[a], tape.values[b]
    return tape.record("mul", (a, b), va * vb, (vb, va))


def div(tape: Tape, a: NodeId, b: NodeId) -> NodeId:
    va, vb = tape.values[a], tape.values[b]
    if vb == 0.0:
        raise ZeroDivisionError("division by zero on tape")
    return tape.record("div", (a, b), va / vb, (1.0 / vb, -va / (vb * vb)))


def neg(tape: Tape, a: NodeId) -> NodeId:
    return tape.record("neg", (a,), -tape.values[a], (-1.0,))


def scale(tape: Tape, a: NodeId, k: float) -> NodeId:
    return tape.record("scale", (a,), k * tape.values[a], (k,))


def add_const(tape: Tape, a: NodeId, c: float) -> NodeId:
    return tape.record("add_const", (a,), tape.values[a] + c, (1.0,))


def affine(tape: Tape, a: NodeId, k: float, c: float) -> NodeId:
    return tape.record("affine", (a,), k * tape.values[a] + c, (k,))


def exp(tape: Tape, a: NodeId) -> NodeId:
    v = math.exp(tape.values[a])
    return tape.record("exp", (a,), v, (v,))


def log(tape: Tape, a: NodeId) -> NodeId:
    va = tape.values[a]
    if va <= 0.0:
        raise ValueError("log of nonpositive value on tape")
    return tape.record("log", (a,), math.log(va), (1.0 / va,))


def tanh(tape: Tape, a: NodeId) -> NodeId:
    v = math.tanh(tape.values[a])
    return tape.record("tanh", (a,), v, (1.0 - v * v,))


def relu(tape: Tape, a: NodeId) -> NodeId:
    va = tape.values[a]
    return tape.record("relu", (a,), max(va, 0.0), (1.0 if va > 0.0 else 0.0,))


def max_const(tape: Tape, a: NodeId, c: float) -> NodeId:
    va = tape.values[a]
    return tape.record("max_const", (a,), max(va, c), (1.0 if va > c else 0.0,))


def softplus(tape: Tape, a: NodeId) -> NodeId:
    va = tape.values[a]
    v = float(np.logaddexp(0.0, va))
    sig = 1.0 / (1.0 + math.exp(-va)) if va > -500 else 0.0
    return tape.record("softplus", (a,), v, (sig,))


def dot(tape: Tape, avec: Sequence[NodeId], bvec: Sequence[NodeId]) -> NodeId:
    if len(avec) != len(bvec):
        raise ValueError("dot of vectors with different lengths")
    vals = tape.values
    va = [vals[i] for i in avec]
    vb = [vals[i] for i in bvec]
    value = sum(x * y for x, y in zip(va, vb))
    return tape.record("dot", tuple(avec) + tuple(bvec), value, tuple(vb) + tuple(va))


def lincomb(tape: Tape, nodes: Sequence[NodeId], coeffs) -> NodeId:
    """Fixed-coefficient linear combination (the taped dot with constants)."""
    if len(nodes) != len(coeffs):
        raise ValueError("lincomb of mismatched lengths")
    vals = tape.values
    value = sum(float(c) * vals[i] for i, c in zip(nodes, coeffs))
    return tape.record("lincomb", tuple(nodes), value, tuple(float(c) for c in coeffs))


def matvec(
    tape: Tape, rows: Sequence[Sequence[NodeId]], x: Sequence[NodeId]
) -> List[NodeId]:
    return [dot(tape, row, x) for row in rows]


def sum_nodes(tape: Tape, nodes: Sequence[NodeId]) -> NodeId:
    vals = tape.values
    value = sum(vals[i] for i in nodes)
    return tape.record("sum", tuple(nodes), value, (1.0,) * len(nodes))


def mse(tape: Tape, pred: Sequence[NodeId], target) -> NodeId:
    """Mean squared error against fixed targets."""
    target = np.asarray(target, dtype=np.float64)
    if len(pred) != target.shape[0]:
        raise ValueError("mse of mismatched lengths")
    n = len(pred)
    diffs = [tape.values[p] - t for p, t in zip(pred, target)]
    value = sum(d * d for d in diffs) / n
    partials = tuple(2.0 * d / n for d in diffs)
    return tape.record("mse", tuple(pred), value, partials)


def softmax_with_temperature(
    tape: Tape, h: Sequence[NodeId], tau: float
) -> List[NodeId]:
    """Tempered softmax p_j = exp(h_j / tau) / sum_l exp(h_l / tau).

    Max-subtraction keeps the exponentials in range; entries below the
    exp underflow threshold come out as exact zeros before normalization.
    The subtracted max is treated as a constant, which leaves both the
    value and the gradient unchanged (softmax is shift invariant).
    """
    if tau <= 0.0:
        raise ValueError("temperature must be positive")
    if not h:
        raise ValueError("softmax of an empty vector")
    hv = [tape.values[i] for i in h]
    if not all(math.isfinite(v) for v in hv):
        raise ValueError("non-finite softmax input")
    m = max(hv)
    shifted = [affine(tape, i, 1.0 / tau, -m / tau) for i in h]
    exps = [exp(tape, s) for s in shifted]
    z = sum_nodes(tape, exps)
    return [div(tape, e, z) for e in exps]


def gumbel_softmax(
    tape: Tape, h: Sequence[NodeId], tau: float, noise
) -> List[NodeId]:
    """Tempered softmax of h + g for pre-drawn Gumbel(0,1) noise g.

    The noise enters as constants, so backward treats it as fixed
    (reparameterized estimator); noise of all zeros reduces to
    softmax_with_temperature.
    """
    noise = np.asarray(noise, dtype=np.float64)
    if noise.shape[0] != len(h):
        raise ValueError("noise length does not match input")
    if not np.all(np.isfinite(noise)):
        raise ValueError("non-finite gumbel noise")
    noisy = [add_const(tape, i, g) for i, g in zip(h, noise)]
    return softmax_with_temperature(tape, noisy, tau)


def sample_gumbel(rng: np.random.Generator, size: int) -> np.ndarray:
    """Standard Gumbel(0,1) draws: -log(-log(U))."""
    u = rng.random(size)
    return -np.log(-np.log(u))
