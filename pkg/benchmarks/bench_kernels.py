"""Time the compiled rollout kernels against the pure-Python fallback.

    python3 benchmarks/bench_kernels.py [--repeat 3]
"""

import argparse
import timeit

import numpy as np

from nmesrise import kernels
from nmesrise.controller import ControllerState, RiseGains
from nmesrise.ident import init_model
from nmesrise.plant import DisturbanceModel, PlantParams
from nmesrise.reference import TrajectorySpec, reference_series, time_grid

GAINS = RiseGains(6.5, 4.6, 69.0, 4.3)


def cases():
    spec = TrajectorySpec("sine", 10.0, 40.0, period=5.0, duration=60.0)
    t = time_grid(spec.duration, 0.005)
    theta_d, theta_d_dot = reference_series(spec, t)
    params, dist = PlantParams(), DisturbanceModel()
    model = init_model(1, 1, 250, seed=0)
    model.weights_out *= 0.2
    u_n = np.random.default_rng(0).uniform(0.2, 0.6, 3000)

    return {
        "plant closed loop (60 s, 12000 steps)": lambda b: kernels.plant_closed_loop(
            params, dist, GAINS, ControllerState(), theta_d, theta_d_dot, 0.005, backend=b),
        "NARX free run (3000 steps, 250 units)": lambda b: kernels.narx_free_run(
            model, u_n, np.zeros(1), 2.0, backend=b),
        "NARX closed loop (60 s, 12000 steps)": lambda b: kernels.narx_closed_loop(
            model, GAINS, ControllerState(), theta_d, theta_d_dot, 0.005, backend=b),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    try:
        kernels.get_backend("cython")
        backends = ["cython", "python"]
    except ImportError:
        print("compiled extension not built; timing the fallback only")
        backends = ["python"]
    print(f"{'case':42s}" + "".join(f"{b:>12s}" for b in backends) + ("     speedup" if len(backends) == 2 else ""))
    for name, fn in cases().items():
        times = [min(timeit.repeat(lambda: fn(b), number=1, repeat=args.repeat)) for b in backends]
        row = f"{name:42s}" + "".join(f"{x * 1e3:10.1f}ms" for x in times)
        if len(times) == 2:
            row += f"{times[1] / times[0]:11.1f}x"
        print(row)


if __name__ == "__main__":
    main()
