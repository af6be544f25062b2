"""Time the numba kernels against their pure-numpy fallbacks.

Run after an editable install:

    python benchmarks/bench_kernels.py

The same comparison can be driven end to end by running anything in the
package with DIFFSUB_DISABLE_NUMBA=1, which binds every kernel to its
numpy flavor.
"""

import time

import numpy as np

from diffsub import _kernels as K
from diffsub.datagen import gen_random_instance


def timeit(fn, *args, repeat=200):
    fn(*args)  # warm up / compile
    t0 = time.perf_counter()
    for _ in range(repeat):
        fn(*args)
    return (time.perf_counter() - t0) / repeat * 1e6  # us per call


def main():
    n = 15
    fn = gen_random_instance(n, 4, 1.0, seed=0).coverage
    rng = np.random.default_rng(0)
    x = rng.random(n)
    grad = np.empty(n)
    masks = rng.integers(0, 1 << n, 4096).astype(np.int64)
    uniforms = rng.random((20_000, n))

    # a synthetic tape about the size of one training sample
    n_nodes = 4000
    offsets = [0]
    parents, partials = [], []
    for i in range(n_nodes):
        if i >= 2:
            for _ in range(int(rng.integers(0, 4))):
                parents.append(int(rng.integers(0, i)))
                partials.append(float(rng.normal()))
        offsets.append(len(parents))
    offsets = np.asarray(offsets, dtype=np.int64)
    parents = np.asarray(parents, dtype=np.int64)
    partials = np.asarray(partials)
    adj = np.zeros(n_nodes)
    adj[-1] = 1.0

    cases = [
        ("cover_value", K.cover_value_jit, K.cover_value_np,
         (fn.point_masks, fn.weights, np.int64(0b101011))),
        ("cover_values_many(4096)", K.cover_values_many_jit, K.cover_values_many_np,
         (fn.point_masks, fn.weights, masks)),
        ("cover_ext_value", K.cover_ext_value_jit, K.cover_ext_value_np,
         (x, fn.pt_idx, fn.pt_off, fn.weights)),
        ("cover_ext_value_grad", K.cover_ext_value_grad_jit, K.cover_ext_value_grad_np,
         (x, fn.pt_idx, fn.pt_off, fn.weights, grad)),
        ("cover_mc_value_grad(20k)", K.cover_mc_value_grad_jit, K.cover_mc_value_grad_np,
         (x, uniforms, fn.pt_idx, fn.pt_off, fn.weights, grad)),
        ("tape_backward(4k nodes)", K.tape_backward_jit, K.tape_backward_np,
         (offsets, parents, partials, adj)),
    ]
    print(f"numba available and enabled: {K.NUMBA_ENABLED}")
    print(f"{'kernel':<28} {'numba us':>10} {'numpy us':>10} {'speedup':>8}")
    for name, jit_fn, np_fn, args in cases:
        repeat = 50 if "mc" in name or "many" in name else 500
        t_jit = timeit(jit_fn, *args, repeat=repeat)
        t_np = timeit(np_fn, *args, repeat=repeat)
        print(f"{name:<28} {t_jit:>10.1f} {t_np:>10.1f} {t_np / t_jit:>7.1f}x")


if __name__ == "__main__":
    main()
