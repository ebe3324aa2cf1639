"""Closed-loop spinner episode with a mid-run disturbance impulse.

Runs the shipped 10 s receding-horizon episode (one solver iteration per
replan) and reports the net spindle rotation, the mean solve time per
replan, and how quickly positive spin resumes after the scripted velocity
impulse knocks the disc backwards.

    python3 scripts/run_spinner_mpc.py [--episode-seconds S] [--out DIR]
"""

import argparse
from pathlib import Path

import numpy as np

from idto import scenario as scn
from idto.cli import write_episode_csv, write_replans_csv
from idto.mpc import run_mpc

SCENARIO = Path(__file__).resolve().parent.parent / "scenarios" / "spinner.yaml"


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--episode-seconds", type=float, default=None)
    parser.add_argument("--out", default="out/spinner_mpc")
    parser.add_argument("--scenario", default=str(SCENARIO))
    args = parser.parse_args()

    s = scn.load(args.scenario).with_overrides(
        episode_seconds=args.episode_seconds, workers=1)
    episode = run_mpc(s)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_episode_csv(out / "episode.csv", s, episode)
    write_replans_csv(out / "replans.csv", episode)

    dof = s.mpc.goal.dof
    net = episode.net_dof_advance(dof)
    solve_ms = [r.solve_ms for r in episode.replans]
    print(f"simulated {episode.times[-1]:.2f} s, {len(solve_ms)} replans, "
          f"mean solve {np.mean(solve_ms):.1f} ms "
          f"(p95 {np.percentile(solve_ms, 95):.1f} ms)")
    print(f"net {s.dof_labels[dof]} rotation: {net:.2f} rad")
    for dist in s.mpc.disturbances:
        if dist.time_s >= episode.times[-1]:
            continue
        after = episode.times > dist.time_s
        omega = episode.velocities[:, dist.dof]
        resumed = np.flatnonzero(after & (omega >= 0.0))
        if resumed.size:
            dt_rec = episode.times[resumed[0]] - dist.time_s
            print(f"impulse of {dist.delta_velocity:+.1f} rad/s at "
                  f"{dist.time_s:.1f} s: positive spin resumed after "
                  f"{dt_rec:.2f} s")
        else:
            print(f"impulse at {dist.time_s:.1f} s: spin did not resume")
    if episode.diverged:
        print("warning: simulation diverged before the end of the episode")
        return 3
    print(f"wrote {out}/episode.csv and {out}/replans.csv")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
