"""Set-function objectives: coverage/tabular task value f, modular cost c,
combined objective g = f - lambda*c and its cost-scaled surrogate
g~ = f - 2*lambda*c.

Subsets are plain iterables of element indices at the API surface and
int64 bitmasks internally (ground sets up to 62 elements).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence, Union

import numpy as np

from . import _kernels

MAX_GROUND_SET = 62


def subset_to_mask(subset: Iterable[int], n: int) -> int:
    """Pack an iterable of element indices into a bitmask, validating range."""
    mask = 0
    for e in subset:
        e = int(e)
        if e < 0 or e >= n:
            raise IndexError(f"element index {e} out of range for n={n}")
        mask |= 1 << e
    return mask


def mask_to_subset(mask: int) -> frozenset:
    return frozenset(i for i in range(mask.bit_length()) if mask & (1 << i))


class CoverageFunction:
    """Weighted coverage function: f(S) = total weight of points covered by S.

    Coverage functions are normalized, monotone and submodular by
    construction, so no table-level checks are needed.
    """

    def __init__(self, weights: Sequence[float], covers: Sequence[Iterable[int]]):
        self.weights = np.asarray(weights, dtype=np.float64)
        if self.weights.ndim != 1:
            raise ValueError("weights must be a 1-d sequence")
        if np.any(self.weights < 0) or not np.all(np.isfinite(self.weights)):
            raise ValueError("point weights must be finite and nonnegative")
        self.num_points = int(self.weights.shape[0])
        self.n = len(covers)
        if self.n < 1 or self.n > MAX_GROUND_SET:
            raise ValueError(f"ground set size must be in [1, {MAX_GROUND_SET}]")
        self.covers = tuple(frozenset(int(p) for p in c) for c in covers)
        for c in self.covers:
            for p in c:
                if p < 0 or p >= self.num_points:
                    raise IndexError(f"point index {p} out of range")
        # per-point flattened layout for the kernels
        point_elems = [[] for _ in range(self.num_points)]
        masks = np.zeros(self.num_points, dtype=np.int64)
        for e, c in enumerate(self.covers):
            for p in c:
                point_elems[p].append(e)
                masks[p] |= 1 << e
        self.point_masks = masks
        self.pt_off = np.zeros(self.num_points + 1, dtype=np.int64)
        self.pt_off[1:] = np.cumsum([len(pe) for pe in point_elems])
        self.pt_idx = np.array(
            [e for pe in point_elems for e in pe] or [0], dtype=np.int64
        )[: self.pt_off[-1]]

    def value_on_mask(self, mask: int) -> float:
        return float(
            _kernels.cover_value(self.point_masks, self.weights, np.int64(mask))
        )

    def values_on_masks(self, masks: np.ndarray) -> np.ndarray:
        return _kernels.cover_values_many(
            self.point_masks, self.weights, masks.astype(np.int64)
        )

    def max_value(self) -> float:
        return float(self.weights.sum())


class TabularSubmodular:
    """Set function given by an explicit table over all 2^n subsets.

    The table is validated at construction: f(empty) = 0, monotone, and
    submodular (pairwise diminishing-returns form, equivalent to the
    union/intersection inequality).
    """

    MAX_N = 16

    def __init__(self, n: int, values: Union[Mapping[int, float], Sequence[float]]):
        if n < 1 or n > self.MAX_N:
            raise ValueError(f"tabular functions support 1 <= n <= {self.MAX_N}")
        self.n = n
        table = np.zeros(1 << n, dtype=np.float64)
        if isinstance(values, Mapping):
            for mask, v in values.items():
                mask = int(mask)
                if mask < 0 or mask >= (1 << n):
                    raise IndexError(f"bitmask {mask} out of range")
                table[mask] = float(v)
        else:
            arr = np.asarray(values, dtype=np.float64)
            if arr.shape != (1 << n,):
                raise ValueError(f"expected {1 << n} values, got {arr.shape}")
            table = arr.copy()
        if table[0] != 0.0:
            raise ValueError("set function must be normalized: f(empty) = 0")
        self.values = table
        self._check_monotone_submodular()

    def _check_monotone_submodular(self):
        n, v = self.n, self.values
        masks = np.arange(1 << n)
        for i in range(n):
            bi = 1 << i
            base = masks[(masks & bi) == 0]
            if np.any(v[base | bi] < v[base] - 1e-12):
                raise ValueError(f"table not monotone at element {i}")
            for j in range(i + 1, n):
                bj = 1 << j
                s = base[(base & bj) == 0]
                lhs = v[s | bi] + v[s | bj]
                rhs = v[s | bi | bj] + v[s]
                if np.any(lhs < rhs - 1e-9):
                    raise ValueError(f"table not submodular at pair ({i}, {j})")

    def value_on_mask(self, mask: int) -> float:
        return float(self.values[mask])

    def values_on_masks(self, masks: np.ndarray) -> np.ndarray:
        return self.values[masks]

    def max_value(self) -> float:
        return float(self.values.max())


SetFunction = Union[CoverageFunction, TabularSubmodular]


@dataclass(frozen=True, eq=False)
class CostVector:
    """Nonnegative per-element cost vector."""

    w: np.ndarray

    def __init__(self, w):
        arr = np.asarray(w, dtype=np.float64)
        if arr.ndim != 1:
            raise ValueError("cost vector must be 1-d")
        if np.any(arr < 0) or not np.all(np.isfinite(arr)):
            raise ValueError("costs must be finite and nonnegative")
        object.__setattr__(self, "w", arr)

    def __len__(self):
        return self.w.shape[0]


@dataclass(frozen=True, eq=False)
class GroundSetInstance:
    """A problem instance: task objective, ground-set size n, cardinality
    bound k and cost-tolerance weight lam."""

    n: int
    k: int
    lam: float
    coverage: SetFunction = field(repr=False)

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if not 1 <= self.k <= self.n:
            raise ValueError("k must satisfy 1 <= k <= n")
        if self.lam < 0:
            raise ValueError("lambda must be nonnegative")
        if self.coverage.n != self.n:
            raise ValueError("objective function is defined on a different ground set")


def _as_fn(obj: Union[GroundSetInstance, SetFunction]) -> SetFunction:
    return obj.coverage if isinstance(obj, GroundSetInstance) else obj


def _as_costs(w: Union[CostVector, Sequence[float], np.ndarray]) -> np.ndarray:
    return w.w if isinstance(w, CostVector) else np.asarray(w, dtype=np.float64)


def eval_f(obj: Union[GroundSetInstance, SetFunction], subset: Iterable[int]) -> float:
    """Task value f(S)."""
    fn = _as_fn(obj)
    return fn.value_on_mask(subset_to_mask(subset, fn.n))


def eval_c(w, subset: Iterable[int]) -> float:
    """Modular cost c(S, w) = sum of w over S."""
    costs = _as_costs(w)
    total = 0.0
    for e in set(subset):
        e = int(e)
        if e < 0 or e >= costs.shape[0]:
            raise IndexError(f"element index {e} out of range")
        total += costs[e]
    return total


def eval_g(instance: GroundSetInstance, w, subset: Iterable[int]) -> float:
    """Combined objective g(S, w) = f(S) - lambda * c(S, w)."""
    return eval_f(instance, subset) - instance.lam * eval_c(w, subset)


def eval_g_scaled(instance: GroundSetInstance, w, subset: Iterable[int]) -> float:
    """Cost-scaled surrogate g~(S, w) = f(S) - 2 * lambda * c(S, w)."""
    return eval_f(instance, subset) - 2.0 * instance.lam * eval_c(w, subset)


def marginal_gain(
    instance: GroundSetInstance, w, base: Iterable[int], element: int
) -> float:
    """g~(base + {element}) - g~(base); element must not be in base."""
    base = set(base)
    if element in base:
        raise ValueError(f"element {element} already in base set")
    return eval_g_scaled(instance, w, base | {element}) - eval_g_scaled(
        instance, w, base
    )


# ---------------------------------------------------------------------------
# JSON serialization
# ---------------------------------------------------------------------------


def instance_to_json(instance: GroundSetInstance) -> str:
    fn = instance.coverage
    doc = {"n": instance.n, "k": instance.k, "lambda": instance.lam}
    if isinstance(fn, CoverageFunction):
        doc["points"] = [{"weight": float(w)} for w in fn.weights]
        doc["covers"] = [sorted(c) for c in fn.covers]
    else:
        doc["table"] = {
            str(mask): float(v) for mask, v in enumerate(fn.values) if mask
        }
    return json.dumps(doc)


def instance_from_json(text: str) -> GroundSetInstance:
    doc = json.loads(text)
    n, k, lam = int(doc["n"]), int(doc["k"]), float(doc["lambda"])
    if "table" in doc:
        fn = TabularSubmodular(n, {int(m): v for m, v in doc["table"].items()})
    else:
        weights = [p["weight"] for p in doc["points"]]
        fn = CoverageFunction(weights, doc["covers"])
    return GroundSetInstance(n=n, k=k, lam=lam, coverage=fn)
