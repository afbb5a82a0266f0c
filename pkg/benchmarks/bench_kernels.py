"""Compare the compiled and NumPy kernel backends.

Times each elementwise/selection kernel on a code-sized batch, then an
end-to-end M-sparse IHT solve (where top-M selection is the only
non-BLAS work) and a deep l0 encoder training epoch.

    python3 benchmarks/bench_kernels.py [--n 2000] [--p 128] [--repeat 5]
"""
import argparse
import timeit

import numpy as np

from deepl0 import data_io, encoders, kernels, solvers, training


def bench(fn, repeat):
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=2000)
    ap.add_argument("--m", type=int, default=64)
    ap.add_argument("--p", type=int, default=128)
    ap.add_argument("--M", type=int, default=32)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)

    if kernels.compiled_backend is None:
        print("compiled backend not built; nothing to compare")
        return 1
    rng = np.random.default_rng(0)
    U = rng.standard_normal((args.n, args.p))
    theta = np.full(args.p, 0.7)
    dct, X, _ = data_io.synth_generate(args.m, args.p, args.n, args.M, 0.01, seed=0)
    X, _ = data_io.standardize(X)
    targets = solvers.iht_l0reg_solve(X, dct, 0.5, 50).final_code

    cases = {
        "hard_threshold": lambda: kernels.hard_threshold(U, theta),
        "soft_shrink": lambda: kernels.soft_shrink(U, theta),
        "helu_forward": lambda: kernels.helu_forward(U, 0.2),
        "helu_grad": lambda: kernels.helu_grad(U, 0.2),
        f"topm_indices M={args.M}": lambda: kernels.topm_indices(U, args.M),
        "msparse IHT, 10 iters": lambda: solvers.iht_msparse_solve(
            X, dct, args.M, 10, warm_start=False),
        "l0 encoder, 1 epoch": lambda: training.sgd_train(
            encoders.init_from_dictionary(dct, "l0reg", lam=0.5), X,
            training.TrainConfig(epochs=1, grad_clip=30.0), targets=targets),
    }
    print(f"n={args.n} m={args.m} p={args.p}, best of {args.repeat}")
    print(f"{'case':<26}{'python ms':>12}{'cython ms':>12}{'speedup':>10}")
    for name, fn in cases.items():
        times = {}
        for backend in ("python", "cython"):
            kernels.use_backend(backend)
            fn()
            times[backend] = bench(fn, args.repeat)
        print(f"{name:<26}{1e3 * times['python']:>12.3f}{1e3 * times['cython']:>12.3f}"
              f"{times['python'] / times['cython']:>9.2f}x")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
