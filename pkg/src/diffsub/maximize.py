"""Discrete maximizers for the cardinality-constrained problem
max g(S, w) s.t. |S| <= k: the cost-scaled greedy (CSG), naive greedy on
the unscaled objective, and an exhaustive oracle.

All three are deterministic; argmax ties break toward the lowest element
index.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import List, Tuple

import numpy as np

from .setfn import GroundSetInstance, _as_costs, eval_g, mask_to_subset

BRUTE_FORCE_MAX_N = 20


@dataclass(frozen=True)
class MaximizerResult:
    subset: frozenset
    objective_g: float
    trace: Tuple[Tuple[int, float], ...]


def _greedy(instance: GroundSetInstance, w, cost_scale: float) -> MaximizerResult:
    """Greedy on f(S) - cost_scale * lambda * c(S, w) with a <=0 stop rule;
    the returned objective is always the unscaled g."""
    fn = instance.coverage
    costs = _as_costs(w)
    if costs.shape[0] != instance.n:
        raise ValueError("cost vector length does not match n")
    elems = np.arange(instance.n)
    mask = 0
    f_base = 0.0
    c_base = 0.0
    trace: List[Tuple[int, float]] = []
    for _ in range(instance.k):
        remaining = elems[((mask >> elems) & 1) == 0]
        if remaining.size == 0:
            break
        cand_masks = mask | (np.int64(1) << remaining)
        f_cand = fn.values_on_masks(cand_masks)
        gains = (f_cand - f_base) - cost_scale * instance.lam * costs[remaining]
        best = int(np.argmax(gains))
        if gains[best] <= 0.0:
            break
        e = int(remaining[best])
        mask |= 1 << e
        f_base = float(f_cand[best])
        c_base += costs[e]
        trace.append((e, float(gains[best])))
    g = f_base - instance.lam * c_base
    return MaximizerResult(
        subset=mask_to_subset(mask), objective_g=g, trace=tuple(trace)
    )


def csg(instance: GroundSetInstance, w) -> MaximizerResult:
    """Cost-scaled greedy: k rounds of argmax on g~ marginals, stopping as
    soon as the best marginal is <= 0.  Returns the unscaled objective g."""
    return _greedy(instance, w, cost_scale=2.0)


def naive_greedy(instance: GroundSetInstance, w) -> MaximizerResult:
    """Classic cost-blind greedy: k rounds of argmax on f marginals, then
    the selection is scored on the full objective g.  The baseline has no
    guarantee for the cost-regularized objective and overpays when costs
    matter, which is the point of comparing against it."""
    return _greedy(instance, w, cost_scale=0.0)


def brute_force(instance: GroundSetInstance, w) -> MaximizerResult:
    """Exact maximizer of g over all subsets of size <= k (n <= 20)."""
    n = instance.n
    if n > BRUTE_FORCE_MAX_N:
        raise ValueError(f"brute force limited to n <= {BRUTE_FORCE_MAX_N}")
    costs = _as_costs(w)
    if costs.shape[0] != n:
        raise ValueError("cost vector length does not match n")
    masks = np.arange(1 << n, dtype=np.int64)
    size = np.zeros(1 << n, dtype=np.int64)
    cost = np.zeros(1 << n)
    for i in range(n):
        bit = (masks >> i) & 1
        size += bit
        cost += bit * costs[i]
    feasible = masks[size <= instance.k]
    f_vals = instance.coverage.values_on_masks(feasible)
    g_vals = f_vals - instance.lam * cost[feasible]
    best = int(np.argmax(g_vals))
    return MaximizerResult(
        subset=mask_to_subset(int(feasible[best])),
        objective_g=float(g_vals[best]),
        trace=(),
    )


def recompute_objective(instance: GroundSetInstance, w, result: MaximizerResult):
    """Sanity helper: g recomputed from scratch on the result subset."""
    return eval_g(instance, w, result.subset)
