"""The three studies behind the library, plus a gradient cross-check:
algorithm comparison on random instances, the qualitative linear-boundary
example, the quantitative sample-size sweep, and FD verification of every
gradient path.  Each run writes machine-readable CSV/JSON; wall-clock
timings go to a separate file so the main outputs stay byte-reproducible.
"""

from __future__ import annotations

import copy
import json
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tape
from .datagen import (
    QUALITATIVE_BOUNDARY,
    gen_dataset,
    gen_random_instance,
    gen_world,
    qualitative_instance,
)
from .dcsg import DcsgConfig, dcsg_forward
from .dol import (
    LinearModel,
    MlpModel,
    TrainConfig,
    dol_loss,
    evaluate_regret,
    train,
)
from .maximize import csg, naive_greedy
from .multilinear import multilinear_F, multilinear_grad
from .setfn import GroundSetInstance


# default training protocols; the two-stage baseline and the decision
# fine-tune get the same supervised budget (warm_start equals the baseline
# epoch count), then the decision phase runs on top with a gentler,
# momentum-smoothed schedule at a colder temperature
QUANT_TWO_STAGE = TrainConfig(epochs=60, learning_rate=0.01)
QUANT_DOL = TrainConfig(
    epochs=60,
    learning_rate=0.001,
    warm_start_epochs=60,
    batch_size=16,
    optimizer="momentum",
    dcsg=DcsgConfig(tau=0.1),
)
QUAL_TWO_STAGE = TrainConfig(epochs=200, learning_rate=0.01)
QUAL_DOL = TrainConfig(
    epochs=60, learning_rate=0.005, warm_start_epochs=200, dcsg=DcsgConfig(tau=0.5)
)


@dataclass(frozen=True)
class ExperimentConfig:
    experiment: str = "algo-compare"
    seed: int = 0
    trials: int = 50
    out_dir: str = "results"
    jobs: int = 0  # 0 = pick automatically
    # instance / world parameters
    n: int = 12
    k: int = 4
    lam: float = 1.0
    cost_low: float = 0.0
    cost_high: float = 2.0
    noise_std: float = 0.25
    samples: int = 60  # qualitative dataset size
    sample_sizes: Sequence[int] = (50, 100, 200, 400, 600, 1000)
    methods: Sequence[str] = ("DOL-NN1", "DOL-NN2", "2S-NN1", "2S-NN2")
    dcsg: DcsgConfig = DcsgConfig(tau=0.2)
    train: Optional[TrainConfig] = None  # decision fine-tune protocol
    two_stage: Optional[TrainConfig] = None  # supervised baseline protocol

    def __post_init__(self):
        if self.experiment not in (
            "algo-compare",
            "qualitative",
            "quantitative",
            "grad-check",
        ):
            raise ValueError(f"unknown experiment {self.experiment!r}")
        if self.trials < 1:
            raise ValueError("trial count must be >= 1")

    def resolve_jobs(self) -> int:
        if self.jobs > 0:
            return self.jobs
        return min(4, os.cpu_count() or 1)

    def resolve_train(self) -> TrainConfig:
        if self.train is not None:
            return self.train
        return QUAL_DOL if self.experiment == "qualitative" else QUANT_DOL

    def resolve_two_stage(self) -> TrainConfig:
        if self.two_stage is not None:
            return self.two_stage
        return QUAL_TWO_STAGE if self.experiment == "qualitative" else QUANT_TWO_STAGE


def _fmt(x) -> str:
    return repr(float(x))


def _write_csv(path: Path, header: str, rows: List[str]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        fh.write(header + "\n")
        for row in rows:
            fh.write(row + "\n")


def _run_parallel(worker, args_list, jobs):
    if jobs <= 1 or len(args_list) <= 1:
        return [worker(a) for a in args_list]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(worker, args_list))


def _trial_seeds(seed: int, count: int) -> List[int]:
    return [int(s) for s in np.random.default_rng(seed).integers(0, 2**31, count)]


# ---------------------------------------------------------------------------
# algorithm comparison (objective ratios against CSG, runtimes reported)
# ---------------------------------------------------------------------------


def _algo_compare_trial(args):
    trial, seed, n, k, lam, cost_low, cost_high, dcsg_cfg = args
    instance = gen_random_instance(n, k, lam, seed=seed)
    costs = np.random.default_rng([seed, 1]).uniform(cost_low, cost_high, n)

    t0 = time.perf_counter()
    r_csg = csg(instance, costs)
    t_csg = time.perf_counter() - t0
    t0 = time.perf_counter()
    r_ng = naive_greedy(instance, costs)
    t_ng = time.perf_counter() - t0
    t0 = time.perf_counter()
    out = dcsg_forward(instance, costs, dcsg_cfg)
    t_dcsg = time.perf_counter() - t0
    from .setfn import eval_g

    g_dcsg = eval_g(instance, costs, out.subset)
    return {
        "trial": trial,
        "seed": seed,
        "g_csg": r_csg.objective_g,
        "g_ng": r_ng.objective_g,
        "g_dcsg": g_dcsg,
        "t_csg": t_csg,
        "t_ng": t_ng,
        "t_dcsg": t_dcsg,
    }


def run_algo_compare(cfg: ExperimentConfig) -> dict:
    seeds = _trial_seeds(cfg.seed, cfg.trials)
    args = [
        (t, seeds[t], cfg.n, cfg.k, cfg.lam, cfg.cost_low, cfg.cost_high, cfg.dcsg)
        for t in range(cfg.trials)
    ]
    results = _run_parallel(_algo_compare_trial, args, cfg.resolve_jobs())
    results.sort(key=lambda r: r["trial"])

    ratios_ng, ratios_dcsg, skipped = [], [], 0
    rows = []
    for r in results:
        if r["g_csg"] > 1e-9:
            rn = r["g_ng"] / r["g_csg"]
            rd = r["g_dcsg"] / r["g_csg"]
            ratios_ng.append(rn)
            ratios_dcsg.append(rd)
            ratio_cols = f"{_fmt(rn)},{_fmt(rd)}"
        else:
            skipped += 1
            ratio_cols = ","
        rows.append(
            f"{r['trial']},{r['seed']},{cfg.n},{cfg.k},{_fmt(r['g_csg'])},"
            f"{_fmt(r['g_ng'])},{_fmt(r['g_dcsg'])},{ratio_cols}"
        )

    out_dir = Path(cfg.out_dir)
    _write_csv(
        out_dir / "algo_compare.csv",
        "trial,seed,n,k,g_csg,g_ng,g_dcsg,ratio_ng,ratio_dcsg",
        rows,
    )
    summary = {
        "config": {
            "experiment": "algo-compare",
            "seed": cfg.seed,
            "trials": cfg.trials,
            "n": cfg.n,
            "k": cfg.k,
            "lam": cfg.lam,
            "cost_range": [cfg.cost_low, cfg.cost_high],
            "tau": cfg.dcsg.tau,
            "rounding": cfg.dcsg.rounding,
        },
        "skipped_nonpositive_reference": skipped,
        "ratio_ng": _stats(ratios_ng),
        "ratio_dcsg": _stats(ratios_dcsg),
    }
    with open(out_dir / "algo_compare_summary.json", "w") as fh:
        json.dump(summary, fh, indent=2)
    timing = {
        "mean_ms": {
            "csg": 1e3 * float(np.mean([r["t_csg"] for r in results])),
            "ng": 1e3 * float(np.mean([r["t_ng"] for r in results])),
            "dcsg": 1e3 * float(np.mean([r["t_dcsg"] for r in results])),
        },
        "per_trial_ms": [
            {
                "trial": r["trial"],
                "csg": 1e3 * r["t_csg"],
                "ng": 1e3 * r["t_ng"],
                "dcsg": 1e3 * r["t_dcsg"],
            }
            for r in results
        ],
    }
    timing["runtime_ratio_dcsg_over_csg"] = (
        timing["mean_ms"]["dcsg"] / timing["mean_ms"]["csg"]
    )
    with open(out_dir / "algo_compare_timing.json", "w") as fh:
        json.dump(timing, fh, indent=2)
    summary["timing"] = timing
    return summary


def _stats(vals) -> dict:
    if not vals:
        return {"mean": None, "std": None, "min": None, "max": None, "count": 0}
    arr = np.asarray(vals)
    return {
        "mean": float(arr.mean()),
        "std": float(arr.std()),
        "min": float(arr.min()),
        "max": float(arr.max()),
        "count": int(arr.size),
    }


# ---------------------------------------------------------------------------
# qualitative boundary study
# ---------------------------------------------------------------------------


def model_boundary(model, lo=0.0, hi=10.0, step=0.005) -> Optional[float]:
    """Smallest z where the predicted w2 - w1 crosses 1 (linear
    interpolation between grid points); None if it never crosses."""
    zs = np.arange(lo, hi + step, step)
    preds = [model.forward(np.array([z])) for z in zs]
    gaps = np.array([p[1] - p[0] for p in preds])
    above = gaps >= 1.0
    if above[0]:
        return lo
    idx = np.flatnonzero(above)
    if idx.size == 0:
        return None
    i = int(idx[0])
    z0, z1 = zs[i - 1], zs[i]
    g0, g1 = gaps[i - 1], gaps[i]
    if g1 == g0:
        return float(z1)
    return float(z0 + (1.0 - g0) * (z1 - z0) / (g1 - g0))


def _qualitative_seed(args):
    (seed, samples, noise_std, dol_cfg, mse_cfg) = args
    world = gen_world("qualitative-linear", noise_std=noise_std)
    instance = qualitative_instance()
    dataset = gen_dataset(world, samples, seed=seed)

    mse_model = LinearModel(1, 3, seed=seed)
    dol_model = copy.deepcopy(mse_model)
    diverged = None
    try:
        train(mse_model, None, dataset, "two-stage", replace(mse_cfg, rng_seed=seed))
        train(dol_model, instance, dataset, "dol", replace(dol_cfg, rng_seed=seed))
    except Exception as exc:  # report per-seed divergence, keep the sweep alive
        diverged = str(exc)
    b_mse = model_boundary(mse_model)
    b_dol = model_boundary(dol_model)
    return {
        "seed": seed,
        "mse_boundary": b_mse,
        "dol_boundary": b_dol,
        "diverged": diverged,
    }


def run_qualitative(cfg: ExperimentConfig) -> dict:
    seeds = _trial_seeds(cfg.seed, cfg.trials)
    args = [
        (s, cfg.samples, cfg.noise_std, cfg.resolve_train(), cfg.resolve_two_stage())
        for s in seeds
    ]
    results = _run_parallel(_qualitative_seed, args, cfg.resolve_jobs())
    results.sort(key=lambda r: seeds.index(r["seed"]))

    rows = []
    dol_wins = 0
    valid = 0
    for r in results:
        bm, bd = r["mse_boundary"], r["dol_boundary"]
        em = abs(bm - QUALITATIVE_BOUNDARY) if bm is not None else float("inf")
        ed = abs(bd - QUALITATIVE_BOUNDARY) if bd is not None else float("inf")
        if r["diverged"] is None:
            valid += 1
            if ed <= em:
                dol_wins += 1
        rows.append(
            f"{r['seed']},{_fmt(QUALITATIVE_BOUNDARY)},"
            f"{'' if bm is None else _fmt(bm)},{'' if bd is None else _fmt(bd)},"
            f"{'' if bm is None else _fmt(em)},{'' if bd is None else _fmt(ed)},"
            f"{r['diverged'] or ''}"
        )
    out_dir = Path(cfg.out_dir)
    _write_csv(
        out_dir / "qualitative.csv",
        "seed,optimal_boundary,mse_boundary,dol_boundary,"
        "mse_suboptimal_region,dol_suboptimal_region,diverged",
        rows,
    )
    summary = {
        "config": {
            "experiment": "qualitative",
            "seed": cfg.seed,
            "trials": cfg.trials,
            "samples": cfg.samples,
            "noise_std": cfg.noise_std,
            "tau": cfg.resolve_train().dcsg.tau,
        },
        "optimal_boundary": QUALITATIVE_BOUNDARY,
        "valid_seeds": valid,
        "dol_at_least_as_close": dol_wins,
        "results": results,
    }
    with open(out_dir / "qualitative_summary.json", "w") as fh:
        json.dump(summary, fh, indent=2)
    return summary


# ---------------------------------------------------------------------------
# quantitative sample-size sweep
# ---------------------------------------------------------------------------

_NN_SIZES = {"NN1": (40,), "NN2": (40, 40)}


def _make_model(method: str, context_dim: int, n: int, seed: int):
    arch = method.split("-")[1]
    sizes = [context_dim, *_NN_SIZES[arch], n]
    return MlpModel(sizes, seed=seed)


def _quantitative_cell(args):
    (method, size, seed, instance_seed, world_seed, n, k, lam, noise_std,
     dol_cfg, mse_cfg) = args
    instance = gen_random_instance(n, k, lam, seed=instance_seed)
    world = gen_world(
        "random-nonlinear", context_dim=6, n=n, seed=world_seed, noise_std=noise_std
    )
    dataset = gen_dataset(world, size, seed=seed)
    model = _make_model(method, 6, n, seed=seed)
    mode = "dol" if method.startswith("DOL") else "two-stage"
    train_cfg = dol_cfg if mode == "dol" else mse_cfg
    cell = {"method": method, "size": size, "seed": seed}
    try:
        train(model, instance, dataset, mode, replace(train_cfg, rng_seed=seed))
        mean, std, excluded = evaluate_regret(model, instance, dataset.test_entries())
        cell.update(
            {"mean_regret": mean, "std_regret": std, "excluded": excluded, "status": "ok"}
        )
    except Exception as exc:
        cell.update(
            {"mean_regret": None, "std_regret": None, "excluded": 0, "status": str(exc)}
        )
    return cell


def run_quantitative(cfg: ExperimentConfig) -> dict:
    rng = np.random.default_rng(cfg.seed)
    instance_seed = int(rng.integers(0, 2**31))
    world_seed = int(rng.integers(0, 2**31))
    seeds = [int(s) for s in rng.integers(0, 2**31, cfg.trials)]

    args = [
        (m, size, s, instance_seed, world_seed, cfg.n, cfg.k, cfg.lam, cfg.noise_std,
         cfg.resolve_train(), cfg.resolve_two_stage())
        for size in cfg.sample_sizes
        for m in cfg.methods
        for s in seeds
    ]
    cells = _run_parallel(_quantitative_cell, args, cfg.resolve_jobs())
    cells.sort(key=lambda c: (c["size"], c["method"], c["seed"]))

    cell_rows = [
        f"{c['size']},{c['method']},{c['seed']},"
        f"{'' if c['mean_regret'] is None else _fmt(c['mean_regret'])},"
        f"{'' if c['std_regret'] is None else _fmt(c['std_regret'])},"
        f"{c['excluded']},{c['status'].replace(',', ';')}"
        for c in cells
    ]
    out_dir = Path(cfg.out_dir)
    _write_csv(
        out_dir / "quantitative_cells.csv",
        "sample_size,method,seed,mean_regret,std_regret,excluded,status",
        cell_rows,
    )

    summary_rows = []
    table = {}
    for size in cfg.sample_sizes:
        for m in cfg.methods:
            vals = [
                c["mean_regret"]
                for c in cells
                if c["size"] == size and c["method"] == m and c["status"] == "ok"
            ]
            st = _stats(vals)
            table[f"{size}/{m}"] = st
            summary_rows.append(
                f"{size},{m},"
                f"{'' if st['mean'] is None else _fmt(st['mean'])},"
                f"{'' if st['std'] is None else _fmt(st['std'])},{st['count']}"
            )
    _write_csv(
        out_dir / "quantitative_summary.csv",
        "sample_size,method,mean,std,seeds",
        summary_rows,
    )
    summary = {
        "config": {
            "experiment": "quantitative",
            "seed": cfg.seed,
            "trials": cfg.trials,
            "n": cfg.n,
            "k": cfg.k,
            "lam": cfg.lam,
            "sample_sizes": list(cfg.sample_sizes),
            "methods": list(cfg.methods),
            "noise_std": cfg.noise_std,
            "instance_seed": instance_seed,
            "world_seed": world_seed,
        },
        "table": table,
        "cells": cells,
    }
    with open(out_dir / "quantitative_summary.json", "w") as fh:
        json.dump(summary, fh, indent=2)
    return summary


# ---------------------------------------------------------------------------
# gradient cross-checks (everything against central finite differences)
# ---------------------------------------------------------------------------


def _fd_gradient(fun, x0, h=1e-5):
    g = np.zeros_like(x0)
    for i in range(x0.size):
        xp = x0.copy()
        xp[i] += h
        xm = x0.copy()
        xm[i] -= h
        g[i] = (fun(xp) - fun(xm)) / (2 * h)
    return g


def _relerr(a, b):
    return float(np.max(np.abs(a - b) / np.maximum(1.0, np.abs(b))))


def run_grad_check(cfg: ExperimentConfig) -> dict:
    if cfg.n > 8:
        raise ValueError("grad-check runs on small instances (n <= 8)")
    instance = gen_random_instance(cfg.n, min(cfg.k, 3), cfg.lam, seed=cfg.seed)
    rng = np.random.default_rng(cfg.seed)
    report = {}

    # multilinear gradient vs FD of exact F
    x0 = rng.random(cfg.n)
    grad = multilinear_grad(instance.coverage, x0)
    fd = _fd_gradient(lambda x: multilinear_F(instance.coverage, x), x0)
    report["multilinear_grad_vs_fd"] = {"err": _relerr(grad, fd), "tol": 1e-6}

    # dcsg objective gradient w.r.t. costs vs FD over the whole forward
    w0 = rng.uniform(0.2, 2.0, cfg.n)
    dcfg = DcsgConfig(tau=0.5)

    def value_at(w):
        return dcsg_forward(instance, w, dcfg).objective_soft

    out = dcsg_forward(instance, w0, dcfg)
    gw = out.tape.backward(out.objective_node)[out.w_nodes]
    fd = _fd_gradient(value_at, w0)
    report["dcsg_backward_vs_fd"] = {"err": _relerr(gw, fd), "tol": 1e-3}

    # dcsg with lam = 0: cost gradient must vanish identically
    inst0 = GroundSetInstance(
        n=cfg.n, k=instance.k, lam=0.0, coverage=instance.coverage
    )
    out0 = dcsg_forward(inst0, w0, dcfg)
    gw0 = out0.tape.backward(out0.objective_node)[out0.w_nodes]
    report["dcsg_lambda0_zero_grad"] = {"err": float(np.abs(gw0).max()), "tol": 0.0}

    # dol loss gradient w.r.t. predictions vs FD
    w_true = rng.uniform(0.2, 2.0, cfg.n)

    def loss_at(wp):
        tape = Tape()
        nodes = ad.const_vec(tape, wp)
        node = dol_loss(instance, w_true, nodes, dcfg, tape)
        return tape.values[node]

    tape = Tape()
    nodes = ad.const_vec(tape, w0)
    node = dol_loss(instance, w_true, nodes, dcfg, tape)
    gl = tape.backward(node)[np.array(nodes)]
    fd = _fd_gradient(loss_at, w0)
    report["dol_loss_vs_fd"] = {"err": _relerr(gl, fd), "tol": 1e-3}

    # random composite expressions through the op library
    max_err = 0.0
    for rep in range(20):
        err = _composite_expression_check(np.random.default_rng(cfg.seed + rep))
        max_err = max(max_err, err)
    report["autodiff_composites_vs_fd"] = {"err": max_err, "tol": 1e-4}

    ok = all(
        r["err"] <= max(r["tol"], 1e-12) if r["tol"] == 0.0 else r["err"] < r["tol"]
        for r in report.values()
    )
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "grad_check.json", "w") as fh:
        json.dump({"ok": ok, "suites": report}, fh, indent=2)
    return {"ok": ok, "suites": report}


def _composite_expression_check(rng) -> float:
    """Random smooth expression over the op library, backward vs FD."""
    width = int(rng.integers(2, 9))
    x0 = rng.uniform(0.5, 1.5, width)

    ops = ["add", "sub", "mul", "neg", "tanh", "exp", "log", "div", "scale", "softplus"]
    plan = [ops[int(rng.integers(len(ops)))] for _ in range(12)]
    picks = rng.integers(0, 10**9, size=(12, 2))

    def build(tape, xs):
        pool = list(xs)
        for step, op in enumerate(plan):
            a = pool[int(picks[step, 0]) % len(pool)]
            b = pool[int(picks[step, 1]) % len(pool)]
            if op == "add":
                pool.append(ad.add(tape, a, b))
            elif op == "sub":
                pool.append(ad.sub(tape, a, b))
            elif op == "mul":
                pool.append(ad.mul(tape, a, b))
            elif op == "neg":
                pool.append(ad.neg(tape, a))
            elif op == "tanh":
                pool.append(ad.tanh(tape, a))
            elif op == "exp":
                pool.append(ad.exp(tape, ad.scale(tape, a, 0.3)))
            elif op == "log":
                pool.append(ad.log(tape, ad.add_const(tape, ad.tanh(tape, a), 2.0)))
            elif op == "div":
                den = ad.add_const(tape, ad.tanh(tape, b), 2.0)
                pool.append(ad.div(tape, a, den))
            elif op == "scale":
                pool.append(ad.scale(tape, a, -0.7))
            elif op == "softplus":
                pool.append(ad.softplus(tape, a))
        return ad.sum_nodes(tape, pool[-4:])

    def value_at(x):
        tape = Tape()
        xs = ad.const_vec(tape, x)
        return tape.values[build(tape, xs)]

    tape = Tape()
    xs = ad.const_vec(tape, x0)
    root = build(tape, xs)
    grad = tape.backward(root)[np.array(xs)]
    fd = _fd_gradient(value_at, x0)
    return _relerr(grad, fd)
