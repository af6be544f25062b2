"""Command line front end.

Subcommands: algo-compare, qualitative, quantitative, grad-check, gen.
Options come from an optional JSON config file plus flag overrides.  The
default output directory is ./results or $DIFFSUB_OUT.  Exit codes:
0 success, 1 a verification suite failed, 2 bad configuration.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace
from pathlib import Path

from .datagen import gen_dataset, gen_random_instance, gen_world, save_dataset
from .dcsg import DcsgConfig
from .dol import TrainConfig
from .experiments import (
    QUAL_DOL,
    QUANT_DOL,
    ExperimentConfig,
    run_algo_compare,
    run_grad_check,
    run_qualitative,
    run_quantitative,
)
from .multilinear import ExtensionConfig
from .setfn import instance_to_json


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="diffsub",
        description="Differentiable submodular maximization experiments",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", type=str, help="JSON config file")
        p.add_argument("--seed", type=int, help="master seed")
        p.add_argument("--out", type=str, help="output directory")
        p.add_argument("--trials", type=int, help="trial / seed count")
        p.add_argument("--jobs", type=int, help="parallel workers (0 = auto)")
        p.add_argument("--tau", type=float, help="softmax temperature")
        p.add_argument("--lam", type=float, help="cost tolerance lambda")
        p.add_argument("--n", type=int, help="ground set size")
        p.add_argument("--k", type=int, help="cardinality bound")

    p = sub.add_parser("algo-compare", help="CSG vs NG vs rounded D-CSG on random instances")
    common(p)
    p = sub.add_parser("qualitative", help="linear decision-boundary example")
    common(p)
    p.add_argument("--samples", type=int, help="dataset size")
    p.add_argument("--noise-std", type=float, help="observation noise")
    p = sub.add_parser("quantitative", help="sample-size sweep of DOL vs two-stage")
    common(p)
    p.add_argument("--sizes", type=int, nargs="+", help="training sizes")
    p.add_argument("--methods", type=str, nargs="+", help="subset of DOL-NN1 DOL-NN2 2S-NN1 2S-NN2")
    p = sub.add_parser("grad-check", help="finite-difference verification suites")
    common(p)

    g = sub.add_parser("gen", help="generate instances or datasets")
    gsub = g.add_subparsers(dest="what", required=True)
    gi = gsub.add_parser("instance", help="random coverage instance as JSON")
    gi.add_argument("--n", type=int, default=12)
    gi.add_argument("--k", type=int, default=4)
    gi.add_argument("--lam", type=float, default=1.0)
    gi.add_argument("--seed", type=int, default=0)
    gi.add_argument("--out", type=str, required=True, help="output file")
    gd = gsub.add_parser("dataset", help="sampled context/cost dataset as JSONL")
    gd.add_argument("--kind", choices=["random-nonlinear", "qualitative-linear"],
                    default="random-nonlinear")
    gd.add_argument("--n", type=int, default=15)
    gd.add_argument("--context-dim", type=int, default=6)
    gd.add_argument("--m", type=int, default=100, help="sample count")
    gd.add_argument("--noise-std", type=float, default=0.25)
    gd.add_argument("--seed", type=int, default=0)
    gd.add_argument("--world-seed", type=int, default=0)
    gd.add_argument("--out", type=str, required=True, help="output file")
    return parser


def _default_out() -> str:
    return os.environ.get("DIFFSUB_OUT", "results")


def _load_config_file(path) -> dict:
    with open(path) as fh:
        doc = json.load(fh)
    if not isinstance(doc, dict):
        raise ValueError("config file must hold a JSON object")
    return doc


def _build_experiment_config(args) -> ExperimentConfig:
    doc = _load_config_file(args.config) if args.config else {}

    ext = ExtensionConfig(**doc.pop("extension", {}))
    dcsg_doc = doc.pop("dcsg", {})
    train_doc = doc.pop("train", None)
    two_stage_doc = doc.pop("two_stage", None)
    overrides = {
        "seed": args.seed,
        "out_dir": args.out,
        "trials": args.trials,
        "jobs": args.jobs,
        "lam": getattr(args, "lam", None),
        "n": getattr(args, "n", None),
        "k": getattr(args, "k", None),
        "samples": getattr(args, "samples", None),
        "noise_std": getattr(args, "noise_std", None),
        "sample_sizes": getattr(args, "sizes", None),
        "methods": getattr(args, "methods", None),
    }
    for key, val in overrides.items():
        if val is not None:
            doc[key] = val
    if getattr(args, "tau", None) is not None:
        dcsg_doc["tau"] = args.tau
    dcsg_doc.setdefault("extension", ext)
    if isinstance(dcsg_doc.get("extension"), dict):
        dcsg_doc["extension"] = ExtensionConfig(**dcsg_doc["extension"])
    dcsg = DcsgConfig(**dcsg_doc)

    def build_train(block):
        if block is None:
            return None
        if isinstance(block.get("dcsg"), dict):
            block["dcsg"] = DcsgConfig(**block["dcsg"])
        return TrainConfig(**block)

    train_cfg = build_train(train_doc)
    if getattr(args, "tau", None) is not None and args.command in (
        "qualitative",
        "quantitative",
    ):
        # the temperature override also applies to the training protocol
        base = train_cfg
        if base is None:
            base = QUAL_DOL if args.command == "qualitative" else QUANT_DOL
        train_cfg = replace(base, dcsg=replace(base.dcsg, tau=args.tau))

    doc.setdefault("out_dir", _default_out())
    doc["experiment"] = args.command
    return ExperimentConfig(
        dcsg=dcsg,
        train=train_cfg,
        two_stage=build_train(two_stage_doc),
        **doc,
    )


def _run_gen(args) -> int:
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    if args.what == "instance":
        inst = gen_random_instance(args.n, args.k, args.lam, seed=args.seed)
        out.write_text(instance_to_json(inst) + "\n")
    else:
        if args.kind == "qualitative-linear":
            world = gen_world(args.kind, noise_std=args.noise_std)
        else:
            world = gen_world(
                args.kind,
                context_dim=args.context_dim,
                n=args.n,
                seed=args.world_seed,
                noise_std=args.noise_std,
            )
        save_dataset(gen_dataset(world, args.m, seed=args.seed), out)
    print(f"wrote {out}")
    return 0


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    if args.command == "gen":
        return _run_gen(args)
    try:
        cfg = _build_experiment_config(args)
    except (ValueError, TypeError, OSError, json.JSONDecodeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2

    if args.command == "algo-compare":
        summary = run_algo_compare(cfg)
        print(json.dumps({k: summary[k] for k in ("ratio_ng", "ratio_dcsg", "timing")}, indent=2))
        return 0
    if args.command == "qualitative":
        summary = run_qualitative(cfg)
        print(
            f"optimal boundary {summary['optimal_boundary']}: "
            f"DOL at least as close in {summary['dol_at_least_as_close']}"
            f"/{summary['valid_seeds']} seeds"
        )
        return 0
    if args.command == "quantitative":
        summary = run_quantitative(cfg)
        for key, st in summary["table"].items():
            mean = "n/a" if st["mean"] is None else f"{st['mean']:.4f}"
            print(f"{key}: mean regret {mean} over {st['count']} seeds")
        return 0
    # grad-check
    try:
        report = run_grad_check(cfg)
    except ValueError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    for name, suite in report["suites"].items():
        print(f"{name}: max err {suite['err']:.3e} (tol {suite['tol']:g})")
    print("PASS" if report["ok"] else "FAIL")
    return 0 if report["ok"] else 1


if __name__ == "__main__":
    sys.exit(main())
