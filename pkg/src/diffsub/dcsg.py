"""Differentiable cost-scaled greedy: the K-step soft relaxation of the
discrete CSG loop, recorded on an autodiff tape.

Each step scores all N candidate updates (1 - s_i(j)) * e_j by their
relaxed marginal gain, appends a zero-gain dummy candidate that plays the
role of the greedy early-stop branch, pushes the scores through a tempered
(Gumbel-)softmax, and moves the selection vector by the softmax-weighted
candidates: s_{i+1} = s_i + p[1..N] * (1 - s_i).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Union

import numpy as np

from . import autodiff as ad
from .autodiff import NodeId, Tape
from .multilinear import ExtensionConfig, SelectionVector, value_and_grad
from .setfn import CostVector, GroundSetInstance, _as_costs

ROUNDING_RULES = ("per-step-hard", "top-k", "threshold")
MARGINAL_EVAL_MODES = ("shared-base", "paired")


@dataclass(frozen=True)
class DcsgConfig:
    """Knobs of the soft greedy layer.

    tau is the softmax temperature (lower tracks hard argmax closer);
    marginal_evals "shared-base" evaluates the relaxed objective once per
    step for the base point (N+1 evaluations per step), "paired" re-pairs
    every candidate with its own base evaluation (2N per step).
    """

    tau: float = 0.5
    use_gumbel_noise: bool = False
    extension: ExtensionConfig = ExtensionConfig()
    rounding: str = "per-step-hard"
    marginal_evals: str = "shared-base"

    def __post_init__(self):
        if self.tau <= 0.0:
            raise ValueError("tau must be positive")
        if self.rounding not in ROUNDING_RULES:
            raise ValueError(f"unknown rounding rule {self.rounding!r}")
        if self.marginal_evals not in MARGINAL_EVAL_MODES:
            raise ValueError(f"unknown marginal eval mode {self.marginal_evals!r}")


@dataclass
class DcsgStep:
    marginals: np.ndarray  # length N+1, dummy last
    weights: np.ndarray  # softmax output, length N+1
    s_after: np.ndarray  # length N


@dataclass
class DcsgOutput:
    x_soft: SelectionVector
    x_soft_nodes: List[NodeId]
    w_nodes: List[NodeId]
    subset: frozenset
    per_step: List[DcsgStep]
    objective_soft: float
    objective_node: NodeId
    per_step_evals: List[int]
    n_extension_evals: int
    tape: Tape = field(repr=False)


def taped_extension_value(
    tape: Tape,
    fn,
    x_nodes: Sequence[NodeId],
    cfg: ExtensionConfig,
    uniforms: Optional[np.ndarray] = None,
) -> NodeId:
    """Record the multilinear extension as a single leaf node whose local
    partials are the analytic gradient (dF/dx_i), avoiding a 2^n-term tape."""
    xv = tape.values_of(x_nodes)
    value, grad = value_and_grad(fn, xv, cfg, uniforms)
    return tape.record("multilinear_F", tuple(x_nodes), value, grad.tolist())


def _taped_g_scaled(tape, instance, w_nodes, x_nodes, cfg, uniforms):
    """Fused leaf for F(x) - 2*lambda*w.x: partials are the analytic
    extension gradient minus 2*lambda*w on the x side and -2*lambda*x on
    the w side."""
    xv = tape.values_of(x_nodes)
    wv = tape.values_of(w_nodes)
    value, grad = value_and_grad(instance.coverage, xv, cfg, uniforms)
    lam2 = 2.0 * instance.lam
    return tape.record(
        "relaxed_g_scaled",
        tuple(x_nodes) + tuple(w_nodes),
        value - lam2 * float(wv @ xv),
        (grad - lam2 * wv).tolist() + (-lam2 * xv).tolist(),
    )


def _as_w_nodes(tape: Tape, w, n: int) -> List[NodeId]:
    """Costs given as CostVector/array/floats become constant nodes; a
    sequence of python ints is taken to be node ids of a taped prediction."""
    if not isinstance(w, (CostVector, np.ndarray)):
        w = list(w)
        if w and all(isinstance(e, (int, np.integer)) for e in w):
            if len(w) != n:
                raise ValueError("cost node vector length does not match n")
            return [int(e) for e in w]
    costs = _as_costs(w)
    if costs.shape[0] != n:
        raise ValueError("cost vector length does not match n")
    return ad.const_vec(tape, costs)


def dcsg_forward(
    instance: GroundSetInstance,
    w: Union[CostVector, np.ndarray, Sequence[NodeId]],
    cfg: DcsgConfig = DcsgConfig(),
    tape: Optional[Tape] = None,
    rng: Optional[np.random.Generator] = None,
) -> DcsgOutput:
    """Run the K-step soft greedy pass, recording everything on the tape.

    `w` may be raw costs (recorded as constants) or node ids of an already
    taped prediction.  With `use_gumbel_noise`, an rng must be supplied;
    the Gumbel draws enter the tape as constants.
    """
    if tape is None:
        tape = Tape()
    if cfg.use_gumbel_noise and rng is None:
        raise ValueError("gumbel noise requested but no rng supplied")
    n, k = instance.n, instance.k
    w_nodes = _as_w_nodes(tape, w, n)
    ext = cfg.extension
    mc_rng = (
        np.random.default_rng(ext.rng_seed) if ext.mode == "monte-carlo" else None
    )

    s_nodes = [ad.const(tape, 0.0) for _ in range(n)]
    one = ad.const(tape, 1.0)
    per_step: List[DcsgStep] = []
    per_step_evals: List[int] = []
    n_evals = 0

    for step in range(k):
        # common random numbers: one sample block shared by every
        # evaluation within this greedy step
        uniforms = None
        if mc_rng is not None:
            uniforms = mc_rng.random((ext.mc_samples, n))
        evals = 0
        base = None
        if cfg.marginal_evals == "shared-base":
            base = _taped_g_scaled(tape, instance, w_nodes, s_nodes, ext, uniforms)
            evals += 1
        h_nodes: List[NodeId] = []
        for j in range(n):
            x_cand = list(s_nodes)
            x_cand[j] = one
            gj = _taped_g_scaled(tape, instance, w_nodes, x_cand, ext, uniforms)
            evals += 1
            if cfg.marginal_evals == "paired":
                bj = _taped_g_scaled(tape, instance, w_nodes, s_nodes, ext, uniforms)
                evals += 1
                h_nodes.append(ad.sub(tape, gj, bj))
            else:
                h_nodes.append(ad.sub(tape, gj, base))
        h_vals = tape.values_of(h_nodes)
        if not np.all(np.isfinite(h_vals)):
            raise ArithmeticError(f"non-finite marginal gain at step {step}")
        dummy = ad.const(tape, 0.0)
        cand = h_nodes + [dummy]
        if cfg.use_gumbel_noise:
            noise = ad.sample_gumbel(rng, n + 1)
            p = ad.gumbel_softmax(tape, cand, cfg.tau, noise)
        else:
            p = ad.softmax_with_temperature(tape, cand, cfg.tau)
        new_s: List[NodeId] = []
        for j in range(n):
            headroom = ad.affine(tape, s_nodes[j], -1.0, 1.0)
            new_s.append(ad.add(tape, s_nodes[j], ad.mul(tape, p[j], headroom)))
        per_step.append(
            DcsgStep(
                marginals=np.append(h_vals, 0.0),
                weights=tape.values_of(p),
                s_after=tape.values_of(new_s),
            )
        )
        per_step_evals.append(evals)
        n_evals += evals
        s_nodes = new_s

    objective_node = _taped_g_scaled(tape, instance, w_nodes, s_nodes, ext, None)
    n_evals += 1
    x_soft = SelectionVector(tape.values_of(s_nodes))
    out = DcsgOutput(
        x_soft=x_soft,
        x_soft_nodes=s_nodes,
        w_nodes=w_nodes,
        subset=frozenset(),
        per_step=per_step,
        objective_soft=tape.values[objective_node],
        objective_node=objective_node,
        per_step_evals=per_step_evals,
        n_extension_evals=n_evals,
        tape=tape,
    )
    out.subset = dcsg_round(out, instance, cfg)
    return out


def dcsg_round(
    output: DcsgOutput, instance: GroundSetInstance, cfg: DcsgConfig
) -> frozenset:
    """Convert the soft output to a discrete subset.

    per-step-hard: argmax of each step's softmax weights, skipping the
    dummy and repeats.  top-k: the k largest coordinates of x_soft that
    clear the 0.5 guard.  threshold: every coordinate above 0.5.
    """
    n = instance.n
    if cfg.rounding == "per-step-hard":
        chosen: List[int] = []
        for step in output.per_step:
            j = int(np.argmax(step.weights))
            if j < n and j not in chosen:
                chosen.append(j)
        return frozenset(chosen)
    x = output.x_soft.x
    if cfg.rounding == "top-k":
        order = sorted(range(n), key=lambda i: (-x[i], i))
        return frozenset(i for i in order[: instance.k] if x[i] > 0.5)
    return frozenset(np.flatnonzero(x > 0.5).tolist())


def dcsg_backward(tape: Tape, loss_node: NodeId) -> np.ndarray:
    """Adjoints of the loss w.r.t. every tape node (index by the node ids
    of w or of upstream model parameters)."""
    return tape.backward(loss_node)


def dump_trace(output: DcsgOutput, path) -> None:
    """Write the per-step trace as JSON lines for debugging."""
    with open(path, "w") as fh:
        for i, step in enumerate(output.per_step):
            fh.write(
                json.dumps(
                    {
                        "step": i,
                        "marginals": step.marginals.tolist(),
                        "weights": step.weights.tolist(),
                        "s_after": step.s_after.tolist(),
                    }
                )
                + "\n"
            )
