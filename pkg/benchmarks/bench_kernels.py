"""Time the compiled kernels against the NumPy fallback on representative inputs.

Usage: python3 benchmarks/bench_kernels.py [--repeat N]
"""

import argparse
import timeit

import numpy as np

from aerothrow import _kernels_py
from aerothrow.kernels import pack_plant_params
from aerothrow.model import VehicleParams

try:
    from aerothrow import _kernels as _kernels_cy
except ImportError:
    _kernels_cy = None


def cases(params: VehicleParams, horizon: int = 25):
    rng = np.random.default_rng(0)
    x0 = np.zeros(_kernels_py.NX)
    x0[6] = 1.0
    U = np.tile([params.m * params.g_mag, 0.0, 0.0, 0.0], (horizon, 1)) + 0.1 * rng.standard_normal((horizon, 4))
    f_ext = np.array([0.0, 0.0, -1.962])
    X = _kernels_py.rk4_rollout(x0, U, f_ext, params.m, params.g_mag, 0.02)
    y = np.zeros(17)
    y[6] = 1.0
    y[13:17] = params.hover_rotor_speed()
    prm = pack_plant_params(params, 0.2, (0.0, 0.05, -0.2))
    cmd = y[13:17] * 1.01
    return {
        "rk4_rollout": lambda k: k.rk4_rollout(x0, U, f_ext, params.m, params.g_mag, 0.02),
        "rk4_linearize": lambda k: k.rk4_linearize(X[:-1], U, f_ext, params.m, params.g_mag, 0.02),
        "plant_step": lambda k: k.plant_step(y, cmd, prm, 1e-3),
    }


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=200)
    args = ap.parse_args()
    impls = {"python": _kernels_py}
    if _kernels_cy is not None:
        impls["cython"] = _kernels_cy
    print(f"{'kernel':<15}" + "".join(f"{name + ' [us]':>15}" for name in impls) + f"{'speedup':>10}")
    for name, fn in cases(VehicleParams()).items():
        times = {}
        for impl_name, impl in impls.items():
            fn(impl)  # warm-up
            times[impl_name] = min(timeit.repeat(lambda: fn(impl), number=args.repeat, repeat=3)) / args.repeat * 1e6
        speed = times["python"] / times["cython"] if "cython" in times else float("nan")
        print(f"{name:<15}" + "".join(f"{t:15.1f}" for t in times.values()) + f"{speed:10.1f}x")


if __name__ == "__main__":
    main()
