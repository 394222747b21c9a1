"""Compare the compiled and pure-numpy kernel backends.

    python3 benchmarks/bench_kernels.py [--repeat N]

Prints per-kernel timings for both backends and their ratio, plus one
estimator training epoch on the desk-scale input shape.
"""

import argparse
import time

import numpy as np

from thzbeam import kernels
from thzbeam.channel import ArrayGeometry
from thzbeam.codebook import generate_codebook


def _time(fn, repeat):
    fn()  # warm-up
    best = float("inf")
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t)
    return best


def cases(rng):
    out = []
    for shape, co in [((32, 33, 5, 2), 16), ((32, 17, 3, 16), 32), ((32, 17, 3, 64), 128)]:
        x = rng.standard_normal(shape)
        w = rng.standard_normal((2, 2, shape[3], co))
        b = np.zeros(co)
        g = rng.standard_normal((shape[0], shape[1] - 1, shape[2] - 1, co))
        out.append((f"conv fwd {shape}->{co}", lambda x=x, w=w, b=b: kernels.conv2d_forward(x, w, b)))
        out.append((f"conv bwd {shape}->{co}", lambda x=x, w=w, g=g: kernels.conv2d_backward(x, w, g)))
    x = rng.standard_normal((32, 32, 4, 64))
    out.append(("maxpool fwd (32,32,4,64)", lambda: kernels.maxpool2d_forward(x, 2, 2)))
    cb = generate_codebook(ArrayGeometry((2, 8, 2)), (2, 32, 2))
    h = rng.standard_normal((256, 32, 32)) + 1j * rng.standard_normal((256, 32, 32))
    out.append(("beam rates (numpy on both)", lambda: kernels.beam_rates(h, cb.beams, 1.0)))
    return out


def estimator_epoch(rng, n=512):
    from thzbeam.estimator import EstimatorArchitecture, build_estimator_network
    from thzbeam.nn import OptimizerConfig, mse_loss
    from thzbeam.training import fit
    x = rng.standard_normal((n, 32, 4, 2))
    y = rng.standard_normal((n, 28))

    def run():
        net = build_estimator_network((32, 4, 2), EstimatorArchitecture((64, 128)), np.random.default_rng(0))
        fit(net, x, y, mse_loss, OptimizerConfig("sgd_momentum", 1e-2), 1, 32, 0)
    return run


def main():
    parser = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()
    backends = kernels.available_backends()
    if "compiled" not in backends:
        print("compiled extension not built; only the python backend is available")
    rng = np.random.default_rng(0)
    work = cases(rng) + [("estimator epoch, 512 samples", estimator_epoch(rng))]
    print(f"{'case':<34}" + "".join(f"{b + ' ms':>14}" for b in backends) + f"{'speedup':>10}")
    previous = kernels.backend_name()
    try:
        for name, fn in work:
            times = {}
            for b in backends:
                kernels.use_backend(b)
                times[b] = _time(fn, args.repeat) * 1e3
            ratio = times["python"] / times["compiled"] if "compiled" in times else float("nan")
            print(f"{name:<34}" + "".join(f"{times[b]:>14.3f}" for b in backends) + f"{ratio:>9.2f}x")
    finally:
        kernels.use_backend(previous)


if __name__ == "__main__":
    main()
