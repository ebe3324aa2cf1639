"""Command-line entry points.

    idto optimize <scenario.yaml> [--mode penalty|lm] [--max-iters N]
                  [--threads K] [--out DIR]
    idto mpc      <scenario.yaml> [--episode-seconds S] [--threads K]
                  [--out DIR]
    idto check    <scenario.yaml>

Exit codes: 0 success, 1 scenario parse/validation error, 2 solver
pathology (repeated factorization failure), 3 simulation divergence.

Outputs are CSV files whose first line is a schema version comment
(``# idto:<name>:v1``), so downstream tooling can detect format changes.
Set IDTO_LOG=info or IDTO_LOG=debug for progress logging on stderr.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .contact import dissipation_factor, compliance_force, friction_force, \
    pair_geometry
from .dynamics import kinematics
from .mpc import GOAL_ADVANCE, run_mpc
from .problem import MULTIPLIERS, PENALTY, unactuated_constraint
from .scenario import Scenario, ScenarioError, load
from .solver import FACTORIZATION_EXHAUSTED, IterationRecord, solve
from .verify import run_checks

log = logging.getLogger("idto")

TRAJECTORY_SCHEMA = "# idto:trajectory:v1"
CONVERGENCE_SCHEMA = "# idto:convergence:v1"
EPISODE_SCHEMA = "# idto:episode:v1"
REPLANS_SCHEMA = "# idto:replans:v1"


def _default_threads() -> int:
    try:
        return max(1, len(os.sched_getaffinity(0)))
    except (AttributeError, OSError):
        return max(1, os.cpu_count() or 1)


def _configure_logging():
    level_name = os.environ.get("IDTO_LOG", "warning").lower()
    level = {"debug": logging.DEBUG, "info": logging.INFO,
             "warning": logging.WARNING, "quiet": logging.ERROR,
             "error": logging.ERROR}.get(level_name, logging.WARNING)
    logging.basicConfig(stream=sys.stderr, level=level,
                        format="%(name)s %(levelname)s: %(message)s")


def _fmt(value) -> str:
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def _pair_contact_columns(scenario: Scenario, qs, vs):
    """Per-knot signed distances and instantaneous contact forces.

    Torques are interval quantities, but distance and force are well
    defined at every knot state, so the trajectory file reports them
    per knot.
    """
    model = scenario.model
    if not model.contact_pairs:
        num = qs.shape[0]
        return np.zeros((num, 0)), np.zeros((num, 0, 2))
    kin = kinematics(model, qs)
    geom = pair_geometry(model, kin)
    vc = np.einsum("kpij,kj->kpi", geom.jac, vs)
    params = scenario.planner_contact
    f_n = (compliance_force(geom.phi, params)
           * dissipation_factor(vc[..., 0], params))
    f_t = friction_force(vc[..., 1:2], f_n, params)[..., 0]
    return geom.phi, np.stack([f_n, f_t], axis=-1)


def write_trajectory_csv(path: Path, scenario: Scenario, solution) -> None:
    dof = scenario.dof_labels
    qs, vs, tau = solution.positions, solution.velocities, solution.torques
    phi, forces = _pair_contact_columns(scenario, qs, vs)
    header = ["t_s"]
    header += [f"q_{d}" for d in dof]
    header += [f"v_{d}" for d in dof]
    header += [f"tau_{d}" for d in dof]
    for pair in scenario.pair_labels:
        header += [f"phi_{pair}", f"fn_{pair}", f"ft_{pair}"]
    lines = [TRAJECTORY_SCHEMA, ",".join(header)]
    dt = scenario.problem.dt
    for k in range(qs.shape[0]):
        row = [_fmt(k * dt)]
        row += [_fmt(x) for x in qs[k]]
        row += [_fmt(x) for x in vs[k]]
        # torque over interval k exists for all but the final knot
        row += [_fmt(x) for x in tau[k]] if k < tau.shape[0] else [""] * len(dof)
        for p in range(phi.shape[1]):
            row += [_fmt(phi[k, p]), _fmt(forces[k, p, 0]),
                    _fmt(forces[k, p, 1])]
        lines.append(",".join(row))
    path.write_text("\n".join(lines) + "\n")


def write_convergence_csv(path: Path, records) -> None:
    lines = [CONVERGENCE_SCHEMA, ",".join(IterationRecord.FIELDS)]
    for rec in records:
        lines.append(",".join(_fmt(getattr(rec, f))
                              for f in IterationRecord.FIELDS))
    path.write_text("\n".join(lines) + "\n")


def write_episode_csv(path: Path, scenario: Scenario, episode) -> None:
    dof = scenario.dof_labels
    header = ["t_s"]
    header += [f"q_{d}" for d in dof]
    header += [f"v_{d}" for d in dof]
    header += [f"tau_{d}" for d in dof]
    lines = [EPISODE_SCHEMA, ",".join(header)]
    num = episode.times.shape[0]
    for k in range(num):
        row = [_fmt(episode.times[k])]
        row += [_fmt(x) for x in episode.positions[k]]
        row += [_fmt(x) for x in episode.velocities[k]]
        row += ([_fmt(x) for x in episode.torques[k - 1]] if k > 0
                else [""] * len(dof))
        lines.append(",".join(row))
    solve_ms = [r.solve_ms for r in episode.replans]
    mean_ms = float(np.mean(solve_ms)) if solve_ms else 0.0
    lines.append(f"# summary: replans={len(solve_ms)} "
                 f"mean_solve_ms={mean_ms:.3f} "
                 f"diverged={'true' if episode.diverged else 'false'}")
    goal = scenario.mpc.goal if scenario.mpc is not None else None
    if goal is not None and goal.kind == GOAL_ADVANCE:
        net = episode.net_dof_advance(goal.dof)
        lines.append(f"# summary: net_advance_{dof[goal.dof]}={net!r}")
    path.write_text("\n".join(lines) + "\n")


def write_replans_csv(path: Path, episode) -> None:
    fields = ("time_s", "cost", "constraint_violation", "accepted", "radius",
              "solve_ms")
    lines = [REPLANS_SCHEMA, ",".join(fields)]
    for rec in episode.replans:
        lines.append(",".join(_fmt(getattr(rec, f)) for f in fields))
    path.write_text("\n".join(lines) + "\n")


def _load_scenario(path: str) -> Scenario:
    try:
        return load(path)
    except ScenarioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        raise SystemExit(1) from exc


def _out_dir(arg: str, scenario_name: str) -> Path:
    out = Path(arg) if arg else Path("out") / scenario_name
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_optimize(args) -> int:
    scenario = _load_scenario(args.scenario)
    try:
        scenario = scenario.with_overrides(mode=args.mode,
                                           max_iterations=args.max_iters,
                                           workers=args.threads)
    except ScenarioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    problem = scenario.problem
    log.info("optimize %s: mode=%s N=%d dt=%g budget=%d threads=%d",
             scenario.name, problem.constraint_mode, problem.num_steps,
             problem.dt, scenario.solver_options.max_iterations,
             scenario.solver_options.workers)
    solution = solve(problem, scenario.initial_guess(),
                     scenario.solver_options)
    out = _out_dir(args.out, scenario.name)
    write_trajectory_csv(out / "trajectory.csv", scenario, solution)
    write_convergence_csv(out / "convergence.csv", solution.records)
    h = unactuated_constraint(problem, solution.positions)
    last = solution.records[-1]
    print(f"{scenario.name}: {solution.termination} after iteration "
          f"{last.iteration}, cost {last.cost:.6g}, "
          f"violation {float(h @ h):.3e}, accepted steps "
          f"{solution.accepted_steps}, wrote {out}/trajectory.csv "
          f"and {out}/convergence.csv")
    if solution.termination == FACTORIZATION_EXHAUSTED:
        print("error: repeated factorization failures; the Hessian is not "
              "positive definite along this run", file=sys.stderr)
        return 2
    return 0


def cmd_mpc(args) -> int:
    scenario = _load_scenario(args.scenario)
    if scenario.mpc is None:
        print("error: scenario.mpc: section required for the mpc command",
              file=sys.stderr)
        return 1
    try:
        scenario = scenario.with_overrides(episode_seconds=args.episode_seconds,
                                           workers=args.threads)
    except ScenarioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    log.info("mpc %s: episode=%gs replan=%gs threads=%d", scenario.name,
             scenario.mpc.episode_seconds, scenario.mpc.replan_period,
             scenario.solver_options.workers)
    episode = run_mpc(scenario)
    out = _out_dir(args.out, scenario.name)
    write_episode_csv(out / "episode.csv", scenario, episode)
    write_replans_csv(out / "replans.csv", episode)
    solve_ms = [r.solve_ms for r in episode.replans]
    mean_ms = float(np.mean(solve_ms)) if solve_ms else 0.0
    print(f"{scenario.name}: {episode.times[-1]:.2f} s simulated, "
          f"{len(solve_ms)} replans, mean solve {mean_ms:.1f} ms, "
          f"wrote {out}/episode.csv and {out}/replans.csv")
    if episode.diverged:
        print("error: simulation diverged; see the episode log",
              file=sys.stderr)
        return 3
    return 0


def cmd_check(args) -> int:
    scenario = _load_scenario(args.scenario)
    rows = run_checks(scenario)
    width = max(len(name) for name, _, _ in rows)
    failures = 0
    for name, passed, detail in rows:
        mark = "PASS" if passed else "FAIL"
        failures += not passed
        print(f"{mark}  {name:<{width}}  {detail}")
    print(f"{len(rows) - failures}/{len(rows)} checks passed "
          f"({scenario.name})")
    return 1 if failures else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="idto",
        description="Contact-implicit trajectory optimization and MPC on "
                    "planar models described by scenario files.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    opt = sub.add_parser("optimize", help="open-loop trajectory optimization")
    opt.add_argument("scenario", help="scenario YAML file")
    opt.add_argument("--mode", choices=(PENALTY, MULTIPLIERS), default=None,
                     help="override the scenario's constraint handling")
    opt.add_argument("--max-iters", type=int, default=None,
                     help="override the iteration budget")
    opt.add_argument("--threads", type=int, default=_default_threads(),
                     help="derivative worker threads; 1 is a fully serial "
                          "reference run (default: detected cores)")
    opt.add_argument("--out", default=None,
                     help="output directory (default out/<scenario name>)")
    opt.set_defaults(func=cmd_optimize)

    mpc = sub.add_parser("mpc", help="closed-loop MPC episode")
    mpc.add_argument("scenario", help="scenario YAML file")
    mpc.add_argument("--episode-seconds", type=float, default=None,
                     help="override the scenario's episode length")
    mpc.add_argument("--threads", type=int, default=_default_threads(),
                     help="derivative worker threads; 1 is a fully serial "
                          "reference run (default: detected cores)")
    mpc.add_argument("--out", default=None,
                     help="output directory (default out/<scenario name>)")
    mpc.set_defaults(func=cmd_mpc)

    chk = sub.add_parser("check", help="run the self-check battery")
    chk.add_argument("scenario", help="scenario YAML file")
    chk.set_defaults(func=cmd_check)
    return parser


def main(argv=None) -> int:
    _configure_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except SystemExit as exc:
        return int(exc.code or 0)


if __name__ == "__main__":
    sys.exit(main())
