"""Time the numba kernels against their numpy twins on base-case sized inputs.

    python3 benchmarks/bench_kernels.py [--repeat 20]

Each kernel is called once before timing so numba compilation is excluded.
Outputs are checked for agreement before timings are reported.
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from invcomm import kernels
from invcomm._accel import NUMBA_AVAILABLE
from invcomm.scenario import base_case


def _inputs(rng: np.random.Generator):
    cfg = base_case()
    pmf = cfg.demand_model.pmf[1, 0]
    d = np.arange(cfg.d_max + 1)
    targets = np.where(d < 10, 12, 18).astype(np.int64)
    bins = np.minimum(d // 4, 7).astype(np.int64)
    weights = np.ones(cfg.d_max + 1)
    n = cfg.n_states
    pts = rng.dirichlet(np.ones(n), size=300)
    vals = pts @ rng.uniform(300, 400, n)
    corner = rng.uniform(300, 400, n)
    queries = rng.dirichlet(np.ones(n), size=200)
    alphas = rng.uniform(300, 400, size=(40, 2, 31 * 31))
    inv_idx = rng.integers(0, 31 * 31, size=4000).astype(np.int64)
    w = rng.uniform(0, 1, size=(2, 4000))
    beliefs = rng.dirichlet(np.ones(24), size=2000)
    return {
        "inventory_kernel": (pmf, targets, cfg.s_max, bins, 8, weights),
        "sawtooth": (pts, vals, corner, queries),
        "obs_min_values": (alphas, inv_idx, w),
        "lattice_round": (beliefs, 6),
    }


def _time(fn, args, repeat: int) -> float:
    fn(*args)
    start = time.perf_counter()
    for _ in range(repeat):
        fn(*args)
    return (time.perf_counter() - start) / repeat


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args()
    if not NUMBA_AVAILABLE:
        print("numba is not importable; nothing to compare")
        return
    rng = np.random.default_rng(0)
    print(f"{'kernel':<18}{'numpy ms':>12}{'numba ms':>12}{'speedup':>10}")
    for name, inp in _inputs(rng).items():
        f_np = getattr(kernels, f"{name}_numpy")
        f_nb = getattr(kernels, f"{name}_numba")
        a, b = f_np(*inp), f_nb(*inp)
        for x, y in zip(a if isinstance(a, tuple) else (a,), b if isinstance(b, tuple) else (b,)):
            np.testing.assert_allclose(x, y, rtol=1e-10, atol=1e-10)
        t_np = _time(f_np, inp, args.repeat)
        t_nb = _time(f_nb, inp, args.repeat)
        print(f"{name:<18}{t_np * 1e3:>12.3f}{t_nb * 1e3:>12.3f}{t_np / t_nb:>9.1f}x")


if __name__ == "__main__":
    main()
