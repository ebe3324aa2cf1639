"""Per-iteration solver cost as a function of the planning horizon.

Runs the spinner at several horizon lengths and reports the median wall
time of one Gauss-Newton iteration for each.  The factorization and the
derivative pass both touch a constant-width band per step, so the time per
iteration should grow linearly with the horizon; the script fits a line
and shows the residuals.

    python3 scripts/timing_sweep.py [--horizons 10 20 40 80] [--iters 25]
"""

import argparse
import copy
from pathlib import Path

import numpy as np

from idto import scenario as scn
from idto.solver import solve

SCENARIO = Path(__file__).resolve().parent.parent / "scenarios" / "spinner.yaml"


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--horizons", type=int, nargs="+",
                        default=[10, 20, 40, 80])
    parser.add_argument("--iters", type=int, default=25)
    parser.add_argument("--scenario", default=str(SCENARIO))
    args = parser.parse_args()

    base = scn.load(args.scenario)
    medians = []
    for n in args.horizons:
        data = copy.deepcopy(base.data)
        data["problem"]["num_steps"] = n
        s = scn.from_dict(data).with_overrides(max_iterations=args.iters,
                                               workers=1)
        sol = solve(s.problem, s.initial_guess(), s.solver_options)
        times = [r.wall_ms for r in sol.records[1:]]
        medians.append(float(np.median(times)))

    ns = np.asarray(args.horizons, dtype=float)
    ts = np.asarray(medians)
    slope, intercept = np.polyfit(ns, ts, 1)
    print(f"{'steps':>6} {'median ms/iter':>15} {'affine fit':>11} "
          f"{'ratio':>6}")
    for n, t in zip(ns, ts):
        fit = slope * n + intercept
        print(f"{int(n):>6} {t:>15.2f} {fit:>11.2f} {t / fit:>6.2f}")
    print(f"fit: {slope:.4f} ms/step + {intercept:.2f} ms overhead")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
