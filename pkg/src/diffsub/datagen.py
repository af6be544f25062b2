"""Synthetic ground-truth worlds: random coverage instances, context-to-cost
generator functions (a nonlinear family for the quantitative study and the
three-element linear family for the qualitative one), datasets sampled from
them, and JSONL serialization.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from .setfn import CoverageFunction, GroundSetInstance, TabularSubmodular

QUALITATIVE_BOUNDARY = 4.45

# Table of f values for the three-route qualitative example
# (masks: s1 = bit0, s2 = bit1, s3 = bit2).
QUALITATIVE_TABLE = {
    0b001: 16.0,
    0b010: 17.0,
    0b100: 25.0,
    0b011: 21.0,
    0b101: 37.0,
    0b110: 38.0,
    0b111: 41.0,
}


def gen_random_instance(
    n: int,
    k: int,
    lam: float = 1.0,
    seed: int = 0,
    points_per_element: int = 3,
    cover_prob: float = 0.3,
) -> GroundSetInstance:
    """Random coverage instance: points_per_element * n points with weights
    uniform in [0,1], each element covering each point independently with
    probability cover_prob."""
    rng = np.random.default_rng(seed)
    m = points_per_element * n
    weights = rng.random(m)
    incl = rng.random((n, m)) < cover_prob
    covers = [np.flatnonzero(incl[e]).tolist() for e in range(n)]
    fn = CoverageFunction(weights, covers)
    return GroundSetInstance(n=n, k=k, lam=lam, coverage=fn)


def qualitative_instance() -> GroundSetInstance:
    """The three-route tabular instance with k=2 and lambda=1."""
    return GroundSetInstance(
        n=3, k=2, lam=1.0, coverage=TabularSubmodular(3, QUALITATIVE_TABLE)
    )


class WorldModel:
    """Ground-truth context-to-cost map h: Z -> R+^n plus sampling ranges.

    kind "random-nonlinear": h(z) = softplus(A2 tanh(A1 z + b1) + b2).
    kind "qualitative-linear": n = 3, scalar context; w1 and w2 are affine
    in z, w3 is constant 1, and the coefficients place the crossing
    w2(z) - w1(z) = 1 exactly at z = 4.45.
    """

    def __init__(self, kind, context_dim, n, params, context_box, noise_std):
        self.kind = kind
        self.context_dim = context_dim
        self.n = n
        self.params = params
        self.context_box = context_box  # (low, high) arrays of length context_dim
        self.noise_std = noise_std

    def costs(self, z: np.ndarray) -> np.ndarray:
        """Noise-free ground-truth costs for one context."""
        z = np.atleast_1d(np.asarray(z, dtype=np.float64))
        if self.kind == "random-nonlinear":
            a1, b1, a2, b2 = (self.params[k] for k in ("A1", "b1", "A2", "b2"))
            hidden = np.tanh(a1 @ z + b1)
            return np.logaddexp(0.0, a2 @ hidden + b2)
        coef = self.params
        w1 = coef["a1"] + coef["b1"] * z[0]
        w2 = coef["a2"] + coef["b2"] * z[0]
        return np.array([w1, w2, 1.0])

    def descriptor(self) -> dict:
        return {
            "kind": self.kind,
            "context_dim": self.context_dim,
            "n": self.n,
            "params": {k: np.asarray(v).tolist() for k, v in self.params.items()},
            "context_box": [
                np.asarray(self.context_box[0]).tolist(),
                np.asarray(self.context_box[1]).tolist(),
            ],
            "noise_std": self.noise_std,
        }

    @staticmethod
    def from_descriptor(doc: dict) -> "WorldModel":
        params = {k: np.asarray(v, dtype=np.float64) for k, v in doc["params"].items()}
        box = (
            np.asarray(doc["context_box"][0], dtype=np.float64),
            np.asarray(doc["context_box"][1], dtype=np.float64),
        )
        return WorldModel(
            doc["kind"], doc["context_dim"], doc["n"], params, box, doc["noise_std"]
        )


def gen_world(
    kind: str,
    context_dim: int = 6,
    n: int = 15,
    seed: int = 0,
    hidden: int = 16,
    noise_std: float = 0.25,
    shared_scale: float = 2.0,
) -> WorldModel:
    """Draw a ground-truth world of the requested kind.

    The nonlinear family is softplus(A2 tanh(A1 z + b1) + b2).  One hidden
    unit feeds every output with the same weight shared_scale, modeling a
    context effect common to all elements (weather hitting every route):
    it moves absolute costs a lot while leaving relative costs, and hence
    most decisions, untouched.
    """
    rng = np.random.default_rng(seed)
    if kind == "random-nonlinear":
        a1 = rng.normal(0.0, 1.0, (hidden + 1, context_dim)) / np.sqrt(context_dim)
        a1[-1] *= 1.5
        b1 = np.append(rng.normal(0.0, 0.5, hidden), rng.normal(0.0, 0.5))
        a2 = np.hstack(
            [
                rng.normal(0.0, 1.5, (n, hidden)) / np.sqrt(hidden),
                np.full((n, 1), shared_scale),
            ]
        )
        b2 = rng.normal(0.5, 0.5, n)
        params = {"A1": a1, "b1": b1, "A2": a2, "b2": b2}
        box = (-np.ones(context_dim), np.ones(context_dim))
        return WorldModel(kind, context_dim, n, params, box, noise_std)
    if kind == "qualitative-linear":
        # one linear constraint pins the crossing of w2 - w1 = 1 at z*;
        # the individual lines are otherwise a free choice
        a1, b1, a2 = 2.0, 0.2, 1.0
        b2 = b1 + (1.0 - (a2 - a1)) / QUALITATIVE_BOUNDARY
        params = {"a1": a1, "b1": b1, "a2": a2, "b2": b2}
        box = (np.zeros(1), 10.0 * np.ones(1))
        return WorldModel(kind, 1, 3, params, box, noise_std)
    raise ValueError(f"unknown world kind {kind!r}")


@dataclass
class Dataset:
    """Context/cost pairs with a fixed train/test split."""

    entries: List[Tuple[np.ndarray, np.ndarray]]
    train_idx: List[int]
    test_idx: List[int]
    seed: int
    world: Optional[dict] = field(default=None, repr=False)

    def train_entries(self):
        return [self.entries[i] for i in self.train_idx]

    def test_entries(self):
        return [self.entries[i] for i in self.test_idx]

    def __len__(self):
        return len(self.entries)


def gen_dataset(
    world: WorldModel, m: int, seed: int = 0, train_fraction: float = 0.8
) -> Dataset:
    """Sample m pairs (z, w): z uniform over the context box, w = h(z) plus
    Gaussian noise redrawn until strictly positive; 80/20 split."""
    if m < 1:
        raise ValueError("need at least one sample")
    rng = np.random.default_rng(seed)
    low, high = world.context_box
    entries = []
    for _ in range(m):
        z = low + (high - low) * rng.random(world.context_dim)
        base = world.costs(z)
        w = base.copy()
        if world.noise_std > 0:
            while True:
                w = base + rng.normal(0.0, world.noise_std, world.n)
                if np.all(w > 0):
                    break
        entries.append((z, w))
    order = rng.permutation(m)
    n_train = int(round(train_fraction * m))
    train_idx = sorted(order[:n_train].tolist())
    test_idx = sorted(order[n_train:].tolist())
    return Dataset(
        entries=entries,
        train_idx=train_idx,
        test_idx=test_idx,
        seed=seed,
        world=world.descriptor(),
    )


def qualitative_decision_gap(w: np.ndarray) -> float:
    """g({s2,s3}) - g({s1,s3}) under costs w; equals 1 - (w2 - w1)."""
    return 1.0 - (w[1] - w[0])


# ---------------------------------------------------------------------------
# JSONL serialization (floats go through repr, which round-trips float64
# exactly)
# ---------------------------------------------------------------------------


def save_dataset(dataset: Dataset, path) -> None:
    with open(path, "w") as fh:
        header = {
            "record": "header",
            "seed": dataset.seed,
            "world": dataset.world,
            "train_idx": dataset.train_idx,
            "test_idx": dataset.test_idx,
        }
        fh.write(json.dumps(header) + "\n")
        for z, w in dataset.entries:
            fh.write(json.dumps({"z": z.tolist(), "w": w.tolist()}) + "\n")


def load_dataset(path) -> Dataset:
    with open(path) as fh:
        lines = [json.loads(line) for line in fh if line.strip()]
    header = lines[0]
    if header.get("record") != "header":
        raise ValueError("dataset file is missing its header record")
    entries = [
        (np.asarray(rec["z"], dtype=np.float64), np.asarray(rec["w"], dtype=np.float64))
        for rec in lines[1:]
    ]
    return Dataset(
        entries=entries,
        train_idx=list(header["train_idx"]),
        test_idx=list(header["test_idx"]),
        seed=header["seed"],
        world=header["world"],
    )
