"""Time the compiled epoch kernels against the pure-Python fallback.

Runs representative local epochs through both backends, checks they agree
to floating-point roundoff, and prints the speedup. Invoke from the repo
root:

    python3 benchmarks/bench_backends.py
"""

import time

import numpy as np

from tailsim import _kernels_py
from tailsim._backend import kernels as active
from tailsim.streams import substream


def _bench(fn, args, repeats):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = fn(*args)
        best = min(best, time.perf_counter() - t0)
    return out, best


def main():
    if active is _kernels_py:
        print("active backend is the pure-Python fallback; nothing to compare")
        print("(build the extension, or unset TAILSIM_KERNELS)")
        return
    rng = substream(123, 0xBE7C)
    cases = [
        # label-mode epoch: shard rows x dim, minibatch steps
        ("epoch_label  2000x100 z=5 b=16", "label", 2000, 100, 5, 16),
        ("epoch_label  200x20   z=4 full", "label", 200, 20, 4, None),
        ("epoch_additive dim=100 z=80", "additive", None, 100, 80, None),
        ("epoch_additive dim=20  z=4", "additive", None, 20, 4, None),
    ]
    print("%-34s %12s %12s %9s" % ("case", "python", "compiled", "speedup"))
    for name, mode, rows, dim, z, batch in cases:
        if mode == "label":
            X = rng.standard_normal((rows, dim))
            y = X @ rng.standard_normal(dim)
            x0 = rng.standard_normal(dim)
            if batch is None:
                idx = np.ascontiguousarray(
                    np.broadcast_to(np.arange(rows, dtype=np.int64), (z, rows)))
            else:
                idx = rng.integers(0, rows, size=(z, batch), dtype=np.int64)
            args = (X, y, x0, idx, 0.01, 1.0, 0.001, 2)
            py, t_py = _bench(_kernels_py.epoch_label, args, 5)
            cc, t_cc = _bench(active.epoch_label, args, 5)
        else:
            A = rng.standard_normal((dim, dim))
            A = A @ A.T / dim + np.eye(dim)
            b = rng.standard_normal(dim)
            x0 = rng.standard_normal(dim)
            noise = rng.standard_normal((z, dim))
            args = (A, b, x0, noise, 0.01, 1.0, 0.001, 2)
            py, t_py = _bench(_kernels_py.epoch_additive, args, 5)
            cc, t_cc = _bench(active.epoch_additive, args, 5)
        err = float(np.max(np.abs(py - cc)) / (np.max(np.abs(py)) + 1e-300))
        assert err < 1e-9, "backends disagree on %s: rel err %g" % (name, err)
        print("%-34s %10.3f ms %10.3f ms %8.1fx" % (name, t_py * 1e3, t_cc * 1e3,
                                                    t_py / t_cc))
    print("agreement within 1e-9 relative on every case")


if __name__ == "__main__":
    main()
