"""Calibration helper: DOL-vs-2S regret across seeds/sizes for a config grid."""
import sys
import time
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from diffsub.datagen import gen_world, gen_dataset, gen_random_instance
from diffsub.dol import MlpModel, TrainConfig, train, evaluate_regret
from diffsub.dcsg import DcsgConfig

N, K = 15, 4
INST_SEED, WORLD_SEED = 7, 11


def cell(args):
    tag, method, size, seed, warm, epochs, lr, tau, noise = args
    inst = gen_random_instance(N, K, 1.0, seed=INST_SEED)
    world = gen_world("random-nonlinear", context_dim=6, n=N, seed=WORLD_SEED, noise_std=0.25)
    ds = gen_dataset(world, size, seed=seed)
    m = MlpModel([6, 40, 15], seed=seed)
    if method == "2S":
        train(m, None, ds, "two-stage", TrainConfig(epochs=60, learning_rate=0.01, rng_seed=seed))
    else:
        train(m, inst, ds, "dol",
              TrainConfig(epochs=epochs, learning_rate=lr, warm_start_epochs=warm,
                          rng_seed=seed, dcsg=DcsgConfig(tau=tau, use_gumbel_noise=noise)))
    r = evaluate_regret(m, inst, ds.test_entries())
    return (tag, method, size, seed, r[0])


def main():
    configs = {
        "A w60e20lr.002t.2": (60, 20, 0.002, 0.2, False),
        "B w60e20lr.002t.5": (60, 20, 0.002, 0.5, False),
    }
    if len(sys.argv) > 1:
        # e.g. "X:60:20:0.002:0.3:g"  (warm:epochs:lr:tau:g|-)
        configs = {}
        for spec_arg in sys.argv[1:]:
            parts = spec_arg.split(":")
            configs[parts[0]] = (int(parts[1]), int(parts[2]), float(parts[3]),
                                 float(parts[4]), parts[5] == "g")
    sizes = (50, 200)
    seeds = range(8)
    args = []
    for tag, (warm, ep, lr, tau, noise) in configs.items():
        for size in sizes:
            for seed in seeds:
                args.append((tag, "DOL", size, seed, warm, ep, lr, tau, noise))
    for size in sizes:
        for seed in seeds:
            args.append(("2S", "2S", size, seed, 0, 0, 0, 0.5, False))
    t0 = time.time()
    with ProcessPoolExecutor(max_workers=8) as ex:
        res = list(ex.map(cell, args))
    base = {(s, seed): r for tag, m, s, seed, r in res if m == "2S"}
    for tag in configs:
        print(f"== {tag}")
        for size in sizes:
            wins, d, t = 0, [], []
            for seed in seeds:
                dv = next(r for tg, m, s, sd, r in res if tg == tag and s == size and sd == seed)
                tv = base[(size, seed)]
                wins += dv <= tv
                d.append(dv); t.append(tv)
            print(f"  size {size}: wins {wins}/8  mean DOL {np.mean(d):.4f} 2S {np.mean(t):.4f}")
    print("t:", round(time.time() - t0, 1))


if __name__ == "__main__":
    main()
