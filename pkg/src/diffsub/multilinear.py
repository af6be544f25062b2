"""Continuous relaxation of set functions: the multilinear extension F,
its analytic partial derivatives, a Monte-Carlo estimator with common
random numbers, and the relaxed cost-scaled objective used inside the
differentiable greedy layer.

F(x) = sum_{S} f(S) prod_{i in S} x_i prod_{i not in S} (1 - x_i) and
dF/dx_i = E[f(q | q_i = 1)] - E[f(q | q_i = 0)] for q ~ Bernoulli(x).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Tuple, Union

import numpy as np

from . import _kernels
from .setfn import (
    CoverageFunction,
    GroundSetInstance,
    SetFunction,
    TabularSubmodular,
    _as_costs,
)

ENUMERATION_MAX_N = 20
_COORD_TOL = 1e-9


@dataclass(frozen=True)
class SelectionVector:
    """A point of [0,1]^n.  Coordinates within 1e-9 of the box are clamped;
    anything farther out is rejected."""

    x: np.ndarray

    def __init__(self, x):
        arr = np.asarray(x, dtype=np.float64)
        if arr.ndim != 1:
            raise ValueError("selection vector must be 1-d")
        if np.any(arr < -_COORD_TOL) or np.any(arr > 1.0 + _COORD_TOL):
            raise ValueError("selection coordinates must lie in [0, 1]")
        object.__setattr__(self, "x", np.clip(arr, 0.0, 1.0))

    def __len__(self):
        return self.x.shape[0]

    @staticmethod
    def indicator(subset, n: int) -> "SelectionVector":
        x = np.zeros(n)
        x[list(subset)] = 1.0
        return SelectionVector(x)


@dataclass(frozen=True)
class ExtensionConfig:
    """How to evaluate F: exactly, or by Monte-Carlo sampling.

    exact_method "auto" picks the factored product form for coverage
    functions and full subset enumeration otherwise; "enumerate" forces
    enumeration (n <= 20).
    """

    mode: str = "exact"
    mc_samples: int = 20000
    rng_seed: int = 0
    exact_method: str = "auto"

    def __post_init__(self):
        if self.mode not in ("exact", "monte-carlo"):
            raise ValueError(f"unknown extension mode {self.mode!r}")
        if self.mode == "monte-carlo" and self.mc_samples < 1:
            raise ValueError("mc_samples must be >= 1")
        if self.exact_method not in ("auto", "enumerate"):
            raise ValueError(f"unknown exact_method {self.exact_method!r}")


def _as_x(x) -> np.ndarray:
    if isinstance(x, SelectionVector):
        return x.x
    return SelectionVector(x).x


def _dense_table(fn: SetFunction) -> np.ndarray:
    """Full 2^n value table, cached on the function object."""
    if isinstance(fn, TabularSubmodular):
        return fn.values
    if fn.n > ENUMERATION_MAX_N:
        raise ValueError(f"exact enumeration limited to n <= {ENUMERATION_MAX_N}")
    cached = getattr(fn, "_dense_table", None)
    if cached is None:
        masks = np.arange(1 << fn.n, dtype=np.int64)
        cached = fn.values_on_masks(masks)
        fn._dense_table = cached
    return cached


def draw_uniforms(cfg: ExtensionConfig, n: int) -> np.ndarray:
    """Sample block for the MC estimator; reuse one block across related
    evaluations to get common random numbers."""
    rng = np.random.default_rng(cfg.rng_seed)
    return rng.random((cfg.mc_samples, n))


def value_and_grad(
    fn: SetFunction,
    x,
    cfg: ExtensionConfig,
    uniforms: Optional[np.ndarray] = None,
) -> Tuple[float, np.ndarray]:
    """F(x) together with its full gradient, under the configured mode."""
    xv = _as_x(x)
    if xv.shape[0] != fn.n:
        raise ValueError("selection vector length does not match n")
    grad = np.empty(fn.n)
    if cfg.mode == "exact":
        if isinstance(fn, CoverageFunction) and cfg.exact_method == "auto":
            value = _kernels.cover_ext_value_grad(
                xv, fn.pt_idx, fn.pt_off, fn.weights, grad
            )
        else:
            value = _kernels.enum_ext_value_grad(_dense_table(fn), xv, grad)
        return float(value), grad
    if uniforms is None:
        uniforms = draw_uniforms(cfg, fn.n)
    if isinstance(fn, CoverageFunction):
        value = _kernels.cover_mc_value_grad(
            xv, uniforms, fn.pt_idx, fn.pt_off, fn.weights, grad
        )
    else:
        value = _kernels.enum_mc_value_grad(fn.values, xv, uniforms, grad)
    return float(value), grad


def multilinear_F(
    fn: Union[SetFunction, GroundSetInstance],
    x,
    cfg: ExtensionConfig = ExtensionConfig(),
    uniforms: Optional[np.ndarray] = None,
) -> float:
    """The multilinear extension F(x)."""
    if isinstance(fn, GroundSetInstance):
        fn = fn.coverage
    xv = _as_x(x)
    if xv.shape[0] != fn.n:
        raise ValueError("selection vector length does not match n")
    if cfg.mode == "exact":
        if isinstance(fn, CoverageFunction) and cfg.exact_method == "auto":
            return float(
                _kernels.cover_ext_value(xv, fn.pt_idx, fn.pt_off, fn.weights)
            )
        return float(_kernels.enum_ext_value(_dense_table(fn), xv))
    value, _ = value_and_grad(fn, xv, cfg, uniforms)
    return value


def multilinear_grad(
    fn: Union[SetFunction, GroundSetInstance],
    x,
    cfg: ExtensionConfig = ExtensionConfig(),
    uniforms: Optional[np.ndarray] = None,
) -> np.ndarray:
    """Gradient of F at x: coordinate i is the gap between the conditional
    expectations with coordinate i forced to 1 and to 0."""
    if isinstance(fn, GroundSetInstance):
        fn = fn.coverage
    _, grad = value_and_grad(fn, x, cfg, uniforms)
    return grad


def relaxed_g_scaled(
    instance: GroundSetInstance,
    w,
    x,
    cfg: ExtensionConfig = ExtensionConfig(),
    uniforms: Optional[np.ndarray] = None,
) -> float:
    """Continuous cost-scaled objective: F(x) - 2 * lambda * w.x."""
    costs = _as_costs(w)
    xv = _as_x(x)
    return multilinear_F(instance.coverage, xv, cfg, uniforms) - (
        2.0 * instance.lam * float(costs @ xv)
    )
