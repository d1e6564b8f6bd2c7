"""Compiled versus pure-Python kernels: RK45 integration and the Gauss linking sum.

Both backends get identical inputs; the script prints wall times, the
speed-up and the largest difference between their results.

    python benchmarks/bench_kernels.py [--T 200] [--repeat 3]
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from bykovlab import _pykernels
from bykovlab.model import ModelParams
from bykovlab.scanner import REFERENCE_X0

try:
    from bykovlab import _kernels
except ImportError:  # pragma: no cover
    _kernels = None


def _integrate_args(p: ModelParams, T: float, n_out: int):
    y0 = REFERENCE_X0 / np.linalg.norm(REFERENCE_X0)
    no_ev = (np.zeros((0, 4, 4)), np.zeros((0, 4)), np.zeros(0), np.zeros(0, dtype=np.int64),
             np.zeros(0, dtype=np.int64))
    return (p.as_array(), y0, 0.0, T, 1e-10, 1e-12, 0.5, 0.0, 1.0, False, *no_ev, 1e-12,
            np.linspace(0.0, T, n_out), False, 20_000_000)


def _hopf(n: int):
    t = np.linspace(0.0, 2 * np.pi, n + 1)
    a = np.ascontiguousarray(np.c_[np.cos(t), np.sin(t), 0 * t])
    b = np.ascontiguousarray(np.c_[1 + np.cos(t), 0 * t, np.sin(t)])
    a[-1], b[-1] = a[0], b[0]
    return a, b


def _best(fn, repeat: int) -> tuple[float, object]:
    best, out = np.inf, None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def main(argv=None) -> None:
    ap = argparse.ArgumentParser(description=__doc__.split("\n\n")[0])
    ap.add_argument("--T", type=float, default=200.0, help="integration time")
    ap.add_argument("--points", type=int, default=400, help="vertices per curve for the Gauss sum")
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    if _kernels is None:
        raise SystemExit("compiled extension not built; run `pip install --no-build-isolation -e .`")

    p = ModelParams(lambda1=0.05)
    iargs = _integrate_args(p, args.T, 2001)
    a, b = _hopf(args.points)
    cases = [
        (f"integrate T={args.T:g}", lambda k: k.integrate(*iargs), lambda r: r["t_eval_y"]),
        (f"gauss_sum {args.points}x{args.points}", lambda k: k.gauss_sum(a, b), lambda r: np.asarray(r)),
    ]
    print(f"{'case':<26}{'cython [s]':>12}{'python [s]':>12}{'speed-up':>10}{'max |diff|':>12}")
    for name, run, value in cases:
        tc, rc = _best(lambda: run(_kernels), args.repeat)
        tp, rp = _best(lambda: run(_pykernels), 1)
        diff = float(np.max(np.abs(value(rc) - value(rp))))
        print(f"{name:<26}{tc:>12.4f}{tp:>12.4f}{tp / tc:>10.1f}{diff:>12.2e}")


if __name__ == "__main__":
    main()
