"""Decision-oriented learning: cost-prediction models, the decision loss
(reference decision quality minus relaxed decision quality under true
costs), the two-stage MSE baseline, minibatch training, and the
normalized-regret metric.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from . import autodiff as ad
from .autodiff import NodeId, Tape
from .dcsg import DcsgConfig, dcsg_forward, taped_extension_value
from .maximize import csg
from .setfn import CostVector, GroundSetInstance, _as_costs, eval_g

SOFTPLUS_INV_ONE = float(np.log(np.e - 1.0))  # softplus(0.5413...) = 1


class TrainingDiverged(RuntimeError):
    """Raised when a training loss turns non-finite."""


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 30
    learning_rate: float = 0.01
    batch_size: int = 8
    optimizer: str = "sgd"  # "sgd" | "momentum" (momentum coefficient 0.9)
    warm_start_epochs: int = 10
    dcsg: DcsgConfig = DcsgConfig()
    rng_seed: int = 0

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be positive")
        if self.learning_rate <= 0:
            raise ValueError("learning rate must be positive")
        if self.warm_start_epochs < 0:
            raise ValueError("warm_start_epochs must be >= 0")
        if self.optimizer not in ("sgd", "momentum"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")


class MlpModel:
    """Fully connected cost predictor with a softplus output map, so
    predictions stay strictly positive with live gradients everywhere."""

    kind = "mlp"

    def __init__(self, layer_sizes: Sequence[int], activation: str = "tanh", seed=0):
        if len(layer_sizes) < 2:
            raise ValueError("need at least input and output layer sizes")
        if activation not in ("tanh", "relu"):
            raise ValueError(f"unknown activation {activation!r}")
        self.layer_sizes = list(int(s) for s in layer_sizes)
        self.activation = activation
        rng = np.random.default_rng(seed)
        self.weights: List[np.ndarray] = []
        self.biases: List[np.ndarray] = []
        for fan_in, fan_out in zip(self.layer_sizes, self.layer_sizes[1:]):
            self.weights.append(rng.normal(0.0, 1.0, (fan_out, fan_in)) / np.sqrt(fan_in))
            self.biases.append(np.zeros(fan_out))
        # start predictions near 1 so early decision layers see sane costs
        self.biases[-1][:] = SOFTPLUS_INV_ONE

    @property
    def input_dim(self) -> int:
        return self.layer_sizes[0]

    @property
    def output_dim(self) -> int:
        return self.layer_sizes[-1]

    def forward(self, z: np.ndarray) -> np.ndarray:
        h = np.asarray(z, dtype=np.float64)
        if h.shape != (self.input_dim,):
            raise ValueError(f"context must have shape ({self.input_dim},)")
        act = np.tanh if self.activation == "tanh" else lambda u: np.maximum(u, 0.0)
        for wm, b in zip(self.weights[:-1], self.biases[:-1]):
            h = act(wm @ h + b)
        return np.logaddexp(0.0, self.weights[-1] @ h + self.biases[-1])

    def record_params(self, tape: Tape):
        """Record every parameter as a leaf; returns node-id arrays shaped
        like the parameters."""
        nodes = []
        for wm, b in zip(self.weights, self.biases):
            wn = np.array(
                [[ad.const(tape, v) for v in row] for row in wm], dtype=np.int64
            )
            bn = np.array([ad.const(tape, v) for v in b], dtype=np.int64)
            nodes.append((wn, bn))
        return nodes

    def forward_on_tape(self, tape: Tape, param_nodes, z: np.ndarray) -> List[NodeId]:
        z = np.asarray(z, dtype=np.float64)
        if z.shape != (self.input_dim,):
            raise ValueError(f"context must have shape ({self.input_dim},)")
        hidden_act = ad.tanh if self.activation == "tanh" else ad.relu
        # first layer contracts against the raw context values
        wn, bn = param_nodes[0]
        h = [
            ad.add(tape, ad.lincomb(tape, row.tolist(), z), int(b))
            for row, b in zip(wn, bn)
        ]
        if len(param_nodes) > 1:
            h = [hidden_act(tape, u) for u in h]
        for li, (wn, bn) in enumerate(param_nodes[1:], start=1):
            h = [
                ad.add(tape, ad.dot(tape, row.tolist(), h), int(b))
                for row, b in zip(wn, bn)
            ]
            if li < len(param_nodes) - 1:
                h = [hidden_act(tape, u) for u in h]
        return [ad.softplus(tape, u) for u in h]

    def apply_grads(self, param_nodes, adj: np.ndarray, update):
        for (wn, bn), wm, b in zip(param_nodes, self.weights, self.biases):
            update(wm, adj[wn])
            update(b, adj[bn])

    def n_params(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))


class LinearModel:
    """Per-output affine predictor with identity output, w_i(z) = a_i + b_i.z;
    the family used by the qualitative study (it contains the linear ground
    truth exactly, which a positivity-mapped model would not)."""

    kind = "linear"

    def __init__(self, context_dim: int, n_outputs: int, seed=0, init_scale=0.1):
        rng = np.random.default_rng(seed)
        self.layer_sizes = [int(context_dim), int(n_outputs)]
        self.activation = "identity"
        self.weights = [rng.normal(0.0, init_scale, (n_outputs, context_dim))]
        self.biases = [np.ones(n_outputs)]

    @property
    def input_dim(self) -> int:
        return self.layer_sizes[0]

    @property
    def output_dim(self) -> int:
        return self.layer_sizes[-1]

    def forward(self, z: np.ndarray) -> np.ndarray:
        z = np.asarray(z, dtype=np.float64)
        return self.weights[0] @ z + self.biases[0]

    def record_params(self, tape: Tape):
        wn = np.array(
            [[ad.const(tape, v) for v in row] for row in self.weights[0]],
            dtype=np.int64,
        )
        bn = np.array([ad.const(tape, v) for v in self.biases[0]], dtype=np.int64)
        return [(wn, bn)]

    def forward_on_tape(self, tape: Tape, param_nodes, z: np.ndarray) -> List[NodeId]:
        wn, bn = param_nodes[0]
        z = np.asarray(z, dtype=np.float64)
        return [
            ad.add(tape, ad.lincomb(tape, row.tolist(), z), int(b))
            for row, b in zip(wn, bn)
        ]

    def apply_grads(self, param_nodes, adj: np.ndarray, update):
        (wn, bn) = param_nodes[0]
        update(self.weights[0], adj[wn])
        update(self.biases[0], adj[bn])

    def n_params(self) -> int:
        return self.weights[0].size + self.biases[0].size


Model = Union[MlpModel, LinearModel]


def predict(model: Model, z: np.ndarray) -> CostVector:
    """h_theta(z) as a cost vector (strictly positive for MlpModel)."""
    return CostVector(model.forward(z))


def mse_loss(tape: Tape, w_true, w_pred_nodes: Sequence[NodeId]) -> NodeId:
    """Mean squared componentwise error against fixed true costs."""
    return ad.mse(tape, w_pred_nodes, _as_costs(w_true))


def dol_loss(
    instance: GroundSetInstance,
    w_true,
    w_pred_nodes: Sequence[NodeId],
    cfg: DcsgConfig,
    tape: Tape,
    rng: Optional[np.random.Generator] = None,
) -> NodeId:
    """Decision gap g(x*(w), w) - g_relaxed(x_soft(w_hat), w).

    The reference decision comes from discrete CSG under the true costs
    and enters the tape as a constant; the decision term runs the soft
    greedy layer on the predicted costs and scores its continuous output
    against the true costs, which keeps the loss differentiable in the
    prediction.  The value can be negative (the soft decision may beat
    the greedy reference).
    """
    w_true = _as_costs(w_true)
    reference = csg(instance, w_true).objective_g
    out = dcsg_forward(instance, list(w_pred_nodes), cfg, tape, rng)
    fx = taped_extension_value(tape, instance.coverage, out.x_soft_nodes, cfg.extension)
    cost = ad.lincomb(tape, out.x_soft_nodes, w_true)
    decision = ad.sub(tape, fx, ad.scale(tape, cost, instance.lam))
    return ad.sub(tape, ad.const(tape, reference), decision)


def normalized_regret(instance: GroundSetInstance, w_true, w_pred) -> float:
    """|g(S_CSG(w), w) - g(S_CSG(w_hat), w)| / g(S_CSG(w), w)."""
    w_true = _as_costs(w_true)
    reference = csg(instance, w_true)
    denom = reference.objective_g
    if denom <= 0.0:
        raise ValueError("reference objective is nonpositive; instance excluded")
    decided = csg(instance, _as_costs(w_pred))
    achieved = eval_g(instance, w_true, decided.subset)
    return abs(denom - achieved) / denom


def evaluate_regret(
    model: Model, instance: GroundSetInstance, entries
) -> Tuple[float, float, int]:
    """Mean/std of normalized regret over (z, w) pairs; pairs with a
    nonpositive reference objective are excluded and counted."""
    vals = []
    excluded = 0
    for z, w in entries:
        try:
            vals.append(normalized_regret(instance, w, model.forward(z)))
        except ValueError:
            excluded += 1
    if not vals:
        return float("nan"), float("nan"), excluded
    arr = np.asarray(vals)
    return float(arr.mean()), float(arr.std()), excluded


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------


def _make_updater(cfg: TrainConfig):
    """Plain gradient descent, optionally with 0.9 momentum; velocity is
    keyed by the parameter array identity."""
    if cfg.optimizer == "sgd":

        def update(param, grad):
            param -= cfg.learning_rate * grad

        return update
    velocities = {}

    def update(param, grad):
        v = velocities.get(id(param))
        if v is None:
            v = np.zeros_like(param)
            velocities[id(param)] = v
        v *= 0.9
        v += grad
        param -= cfg.learning_rate * v

    return update


def _check_finite(value, epoch, batch, sample):
    if not np.isfinite(value):
        raise TrainingDiverged(
            f"non-finite loss at epoch {epoch}, batch {batch}, sample {sample}"
        )


def _mse_epoch(model, pairs, cfg, rng, update, epoch):
    order = rng.permutation(len(pairs))
    for bi, lo in enumerate(range(0, len(pairs), cfg.batch_size)):
        batch = order[lo : lo + cfg.batch_size]
        tape = Tape()
        pnodes = model.record_params(tape)
        losses = []
        for si in batch:
            z, w = pairs[si]
            pred = model.forward_on_tape(tape, pnodes, z)
            node = mse_loss(tape, w, pred)
            _check_finite(tape.values[node], epoch, bi, int(si))
            losses.append(node)
        mean_node = ad.lincomb(tape, losses, [1.0 / len(losses)] * len(losses))
        adj = tape.backward(mean_node)
        model.apply_grads(pnodes, adj, update)


def _dol_epoch(model, pairs, instance, cfg, rng, update, epoch, noise_rng):
    order = rng.permutation(len(pairs))
    batch_means = []
    for bi, lo in enumerate(range(0, len(pairs), cfg.batch_size)):
        batch = order[lo : lo + cfg.batch_size]
        tape = Tape()
        pnodes = model.record_params(tape)
        losses = []
        for si in batch:
            z, w = pairs[si]
            pred = model.forward_on_tape(tape, pnodes, z)
            node = dol_loss(instance, w, pred, cfg.dcsg, tape, noise_rng)
            _check_finite(tape.values[node], epoch, bi, int(si))
            losses.append(node)
        mean_node = ad.lincomb(tape, losses, [1.0 / len(losses)] * len(losses))
        batch_means.append(tape.values[mean_node])
        adj = tape.backward(mean_node)
        model.apply_grads(pnodes, adj, update)
    return float(np.mean(batch_means))


def _mean_mse(model, pairs) -> float:
    return float(
        np.mean([np.mean((model.forward(z) - w) ** 2) for z, w in pairs])
    )


def mean_dol_loss(model, instance, pairs, dcsg_cfg: DcsgConfig) -> float:
    """Forward-only mean decision gap of the model over the pairs,
    evaluated deterministically (gumbel noise off)."""
    if dcsg_cfg.use_gumbel_noise:
        dcsg_cfg = replace(dcsg_cfg, use_gumbel_noise=False)
    vals = []
    for z, w in pairs:
        tape = Tape()
        pred = ad.const_vec(tape, model.forward(z))
        node = dol_loss(instance, w, pred, dcsg_cfg, tape)
        vals.append(tape.values[node])
    return float(np.mean(vals))


def train(
    model: Model,
    instance: Optional[GroundSetInstance],
    dataset,
    mode: str,
    cfg: TrainConfig,
) -> List[Tuple[int, str, float]]:
    """Train in place; returns the loss history as (epoch, mode, mean_loss).

    mode "two-stage" minimizes the MSE alone for cfg.epochs epochs and
    logs the full-train MSE after each epoch.  mode "dol" runs
    cfg.warm_start_epochs MSE epochs, then cfg.epochs epochs on the mean
    decision loss; the dol curve starts with an epoch-0 entry holding the
    warm-started model's mean decision gap (no update applied yet), and
    each later entry is the mean of that epoch's minibatch losses.
    """
    if mode not in ("two-stage", "dol"):
        raise ValueError(f"unknown training mode {mode!r}")
    pairs = dataset.train_entries() if hasattr(dataset, "train_entries") else list(dataset)
    if not pairs:
        raise ValueError("training set is empty")
    if pairs[0][0].shape[0] != model.input_dim:
        raise ValueError("dataset context dimension does not match the model")
    if mode == "dol" and instance is None:
        raise ValueError("dol mode needs the decision problem instance")
    rng = np.random.default_rng(cfg.rng_seed)
    noise_rng = (
        np.random.default_rng(rng.integers(2**63))
        if cfg.dcsg.use_gumbel_noise
        else None
    )
    update = _make_updater(cfg)
    history: List[Tuple[int, str, float]] = []

    if mode == "two-stage":
        for epoch in range(cfg.epochs):
            _mse_epoch(model, pairs, cfg, rng, update, epoch)
            history.append((epoch, "mse", _mean_mse(model, pairs)))
        return history

    for epoch in range(cfg.warm_start_epochs):
        _mse_epoch(model, pairs, cfg, rng, update, epoch)
        history.append((epoch, "mse", _mean_mse(model, pairs)))
    history.append((0, "dol", mean_dol_loss(model, instance, pairs, cfg.dcsg)))
    for epoch in range(1, cfg.epochs + 1):
        mean = _dol_epoch(model, pairs, instance, cfg, rng, update, epoch, noise_rng)
        history.append((epoch, "dol", mean))
    return history


def write_history(path, history) -> None:
    """Loss curve CSV: epoch, mode, mean_loss."""
    with open(path, "w") as fh:
        fh.write("epoch,mode,mean_loss\n")
        for epoch, mode, loss in history:
            fh.write(f"{epoch},{mode},{loss!r}\n")


# ---------------------------------------------------------------------------
# checkpoints
# ---------------------------------------------------------------------------


def save_model(model: Model, path) -> None:
    doc = {
        "kind": model.kind,
        "layer_sizes": model.layer_sizes,
        "activation": model.activation,
        "weights": [w.ravel().tolist() for w in model.weights],
        "biases": [b.tolist() for b in model.biases],
    }
    with open(path, "w") as fh:
        json.dump(doc, fh)


def load_model(path) -> Model:
    with open(path) as fh:
        doc = json.load(fh)
    sizes = doc["layer_sizes"]
    if doc["kind"] == "mlp":
        model = MlpModel(sizes, activation=doc["activation"])
    elif doc["kind"] == "linear":
        model = LinearModel(sizes[0], sizes[1])
    else:
        raise ValueError(f"unknown model kind {doc['kind']!r}")
    for i, (flat, b) in enumerate(zip(doc["weights"], doc["biases"])):
        model.weights[i] = np.asarray(flat, dtype=np.float64).reshape(
            model.weights[i].shape
        )
        model.biases[i] = np.asarray(b, dtype=np.float64)
    return model
