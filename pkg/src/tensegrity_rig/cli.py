"""Command-line front end: ``tensegrity-rig <command> ...``.

Exit codes: 0 success, 2 bad arguments, 3 unreadable/malformed input,
4 statics infeasible under load, 5 model/configuration error,
6 mission power budget violated, 7 integration failure.
"""
from __future__ import annotations

import argparse
import json
import math
import sys
import warnings
from dataclasses import dataclass, field
from pathlib import Path

from . import builders, dynamics, mission, sizing, statics
from .topology import StructuralError, Topology, dumps, topology_from_dict, topology_to_dict, validate

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_PARSE = 3
EXIT_INFEASIBLE = 4
EXIT_MODEL = 5
EXIT_POWER = 6
EXIT_INTEGRATION = 7


class CommandError(Exception):
    def __init__(self, module: str, message: str, code: int):
        super().__init__(f"[{module}] {message}")
        self.module = module
        self.code = code


@dataclass
class CommandResult:
    status: int = EXIT_OK
    outputs: list[str] = field(default_factory=list)
    summary: str = ""


def _write(path, text: str, result: CommandResult):
    path = Path(path)
    if path.parent and not path.parent.exists():
        path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
    result.outputs.append(str(path))


def _read_json(path, module):
    try:
        return json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise CommandError(module, f"no such file: {path}", EXIT_PARSE) from None
    except json.JSONDecodeError as exc:
        raise CommandError(module, f"malformed JSON in {path}: {exc}", EXIT_PARSE) from None


def _topology(path) -> Topology:
    data = _read_json(path, "topology")
    try:
        topo = topology_from_dict(data)
    except ValueError as exc:
        raise CommandError("topology", str(exc), EXIT_PARSE) from None
    problems = validate(topo)
    if problems:
        raise CommandError("topology", "; ".join(map(str, problems)), EXIT_MODEL)
    return topo


# --- commands --------------------------------------------------------------

def cmd_topo(args) -> CommandResult:
    try:
        if args.kind == "prism":
            topo = builders.build_prism(args.n, args.radius, args.height, args.twist)
        elif args.kind in ("tbar", "dbar"):
            topo = builders.build_bar_system(args.kind, args.span, args.aspect)
        else:
            topo = builders.build_rig(
                args.radii, args.heights, math.radians(args.stay_angle),
                nodes_per_ring=args.nodes_per_ring,
                stay_rings=[s for s in args.stay_rings.split(",") if s],
                braces=not args.no_braces,
            )
    except builders.GeometryError as exc:
        raise CommandError("topology", str(exc), EXIT_MODEL) from None
    except ValueError as exc:
        raise CommandError("topology", str(exc), EXIT_USAGE) from None
    result = CommandResult()
    _write(args.out or f"{args.kind}.json", dumps(topology_to_dict(topo)), result)
    summary = f"{topo.metadata['name']}: nodes {topo.n_nodes}, bars {len(topo.bars)}, strings {len(topo.strings)}"
    anchored = int(topo.anchored.sum())
    if anchored:
        summary += f", anchored: {anchored}"
    result.summary = summary
    return result


def cmd_solve(args) -> CommandResult:
    topo = _topology(args.topo)
    load = statics.LoadCase.zeros(topo.n_nodes)
    if args.load:
        try:
            load = statics.LoadCase.from_dict(_read_json(args.load, "statics"), topo.n_nodes)
        except ValueError as exc:
            raise CommandError("statics", f"bad load case: {exc}", EXIT_PARSE) from None
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", statics.TensionBarWarning)
            sol = statics.solve_force_densities(topo, load=load)
    except statics.UnstableUnderLoad as exc:
        raise CommandError("statics", str(exc), EXIT_INFEASIBLE) from None
    result = CommandResult()
    _write(args.out, dumps(sol.to_dict(topo)), result)
    result.summary = f"residual {sol.residual_norm:.3e} N, nullspace_dim {sol.nullspace_dim}"
    if sol.tension_bars:
        result.summary += f", WARNING bars in tension: {list(sol.tension_bars)}"
    return result


def cmd_mass(args) -> CommandResult:
    topo = _topology(args.topo)
    sol_data = _read_json(args.solution, "sizing")
    try:
        sol = statics.EquilibriumSolution.from_dict(sol_data, topo.n_nodes)
    except (KeyError, TypeError, ValueError) as exc:
        raise CommandError("sizing", f"bad solution file: {exc}", EXIT_PARSE) from None
    try:
        materials = sizing.load_materials(args.materials)
        report = sizing.total_min_mass(topo, sol, materials)
    except json.JSONDecodeError as exc:
        raise CommandError("sizing", f"malformed materials file: {exc}", EXIT_PARSE) from None
    except (sizing.SizingError, ValueError, KeyError) as exc:
        raise CommandError("sizing", str(exc), EXIT_MODEL) from None
    result = CommandResult()
    _write(args.out, dumps(report.to_dict()), result)
    csv_path = args.csv or str(Path(args.out).with_suffix(".csv"))
    _write(csv_path, report.to_csv(), result)
    result.summary = (
        f"total {report.total:.6g} kg (bars {report.total_bars:.6g} kg, strings {report.total_strings:.6g} kg)"
    )
    return result


def cmd_compare(args) -> CommandResult:
    try:
        materials = sizing.load_materials(args.materials)
        cmp = sizing.compare_to_continuum_bar(
            args.load, args.span, materials[args.bar_material], materials[args.string_material], args.system,
        )
    except KeyError as exc:
        raise CommandError("sizing", f"unknown material {exc}", EXIT_MODEL) from None
    except (sizing.SizingError, ValueError) as exc:
        raise CommandError("sizing", str(exc), EXIT_MODEL) from None
    result = CommandResult()
    _write(args.out, dumps(cmp.to_dict()), result)
    result.summary = (
        f"{cmp.system.value}: ratio {cmp.ratio:.4g} at aspect {cmp.best_aspect:g} "
        f"({cmp.regime}-governed continuum bar {cmp.continuum_mass:.4g} kg)"
    )
    return result


def cmd_dyn(args) -> CommandResult:
    topo = _topology(args.topo)
    config = _read_json(args.config, "dynamics") if args.config else {}
    try:
        model, laws, schedule, state, cfg = dynamics.setup_from_config(topo, config)
    except (dynamics.ModelError, ValueError, KeyError) as exc:
        raise CommandError("dynamics", str(exc), EXIT_MODEL) from None
    dt = args.dt if args.dt is not None else float(cfg["dt"])
    duration = args.duration if args.duration is not None else float(cfg["duration"])
    stride = args.stride if args.stride is not None else int(cfg["stride"])
    try:
        traj = dynamics.simulate(model, state, laws, schedule, duration, dt, stride)
    except dynamics.IntegrationError as exc:
        if exc.trajectory is not None:
            _write(args.out, exc.trajectory.to_csv(), CommandResult())
        raise CommandError("dynamics", str(exc), EXIT_INTEGRATION) from None
    except ValueError as exc:
        raise CommandError("dynamics", str(exc), EXIT_USAGE) from None
    result = CommandResult()
    _write(args.out, traj.to_csv(), result)
    d = traj.diagnostics
    result.summary = (
        f"{len(traj)} samples to t = {traj.times[-1]:g} s, max bar drift {max(d['bar_drift']):.2e}, "
        f"energy {d['total_energy'][0]:.6g} -> {d['total_energy'][-1]:.6g} J"
    )
    return result


def cmd_mission(args) -> CommandResult:
    try:
        config = mission.load_config(args.config, args.profile)
    except FileNotFoundError:
        raise CommandError("mission", f"no such file: {args.config}", EXIT_PARSE) from None
    except json.JSONDecodeError as exc:
        raise CommandError("mission", f"malformed JSON in {args.config}: {exc}", EXIT_PARSE) from None
    except (mission.MissionConfigError, TypeError) as exc:
        raise CommandError("mission", str(exc), EXIT_MODEL) from None
    duration = args.duration if args.duration is not None else config.heating_duration + config.extracting_duration
    try:
        log = mission.run_cycle(config, duration)
    except mission.MissionHalt as exc:
        _write(args.out, exc.log.to_csv(), CommandResult())
        raise CommandError("mission", str(exc), EXIT_POWER) from None
    result = CommandResult()
    _write(args.out, log.to_csv(), result)
    f = log.final
    result.summary = (
        f"{config.profile}: t = {f.time:g} s, melted {f.melted:g} cc, extracted {f.extracted:g} cc, "
        f"filtered {f.filtered:g} cc, energy {f.energy:g} J"
    )
    return result


# --- parser ------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tensegrity-rig", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    topo = sub.add_parser("topo", help="build a topology and write it as JSON")
    tsub = topo.add_subparsers(dest="kind", required=True)
    prism = tsub.add_parser("prism", help="twisted n-strut prism")
    prism.add_argument("--n", type=int, default=3, help="number of struts (>= 3)")
    prism.add_argument("--radius", type=float, default=1.0, help="circle radius, m")
    prism.add_argument("--height", type=float, default=1.0, help="prism height, m")
    prism.add_argument("--twist", type=float, default=None,
                       help="top rotation, rad (default: equilibrium twist pi/2 + pi/n)")
    for kind in ("tbar", "dbar"):
        sp = tsub.add_parser(kind, help=f"planar {kind.upper()[0]}-bar")
        sp.add_argument("--span", type=float, default=1.0, help="terminal separation, m")
        sp.add_argument("--aspect", type=float, default=0.5, help="apex height over half span, in (0, 1)")
    rig = tsub.add_parser("rig", help="three-ring drill rig frame")
    rig.add_argument("--radii", type=float, nargs=3, default=list(builders.RIG_RING_RADII),
                     metavar=("BOTTOM", "MIDDLE", "TOP"), help="ring radii, m")
    rig.add_argument("--heights", type=float, nargs=3, default=list(builders.RIG_RING_HEIGHTS),
                     metavar=("BOTTOM", "MIDDLE", "TOP"), help="ring heights, m")
    rig.add_argument("--stay-angle", type=float, default=45.0, help="stay elevation above the base, degrees")
    rig.add_argument("--nodes-per-ring", type=int, default=4, help="joints per ring")
    rig.add_argument("--stay-rings", default="middle,top", help="comma list of rings sending stays to the base")
    rig.add_argument("--no-braces", action="store_true", help="omit ring-to-ring brace strings")
    for sp in (prism, rig, *[tsub.choices[k] for k in ("tbar", "dbar")]):
        sp.add_argument("--out", help="output topology JSON path (default: <kind>.json)")
        sp.set_defaults(func=cmd_topo)

    solve = sub.add_parser("solve", help="solve force densities for a load case")
    solve.add_argument("--topo", required=True, help="topology JSON")
    solve.add_argument("--load", help="load case JSON (default: no load)")
    solve.add_argument("--out", required=True, help="solution JSON path")
    solve.set_defaults(func=cmd_solve)

    mass = sub.add_parser("mass", help="minimum-mass report for a solution")
    mass.add_argument("--topo", required=True, help="topology JSON")
    mass.add_argument("--solution", required=True, help="solution JSON from 'solve'")
    mass.add_argument("--materials", help="materials JSON extending the built-in set")
    mass.add_argument("--out", required=True, help="mass report JSON path")
    mass.add_argument("--csv", help="mass report CSV path (default: --out with .csv)")
    mass.set_defaults(func=cmd_mass)

    cmp = sub.add_parser("compare", help="T-bar/D-bar mass versus a single continuum bar")
    cmp.add_argument("--load", type=float, required=True, help="end compression, N")
    cmp.add_argument("--span", type=float, default=1.0, help="span, m")
    cmp.add_argument("--system", choices=["tbar", "dbar"], default="tbar")
    cmp.add_argument("--materials", help="materials JSON extending the built-in set")
    cmp.add_argument("--bar-material", default="aluminum")
    cmp.add_argument("--string-material", default="uhmwpe")
    cmp.add_argument("--out", required=True, help="comparison JSON path")
    cmp.set_defaults(func=cmd_compare)

    dyn = sub.add_parser("dyn", help="integrate rigid-bar dynamics and write a trajectory CSV")
    dyn.add_argument("--topo", required=True, help="topology JSON")
    dyn.add_argument("--config", help="dynamics config JSON (masses, string laws, loads)")
    dyn.add_argument("--dt", type=float, help="time step, s")
    dyn.add_argument("--duration", type=float, help="simulated time, s")
    dyn.add_argument("--stride", type=int, help="steps between samples")
    dyn.add_argument("--out", required=True, help="trajectory CSV path")
    dyn.set_defaults(func=cmd_dyn)

    mis = sub.add_parser("mission", help="simulate drill/heat/extract/filter cycles")
    mis.add_argument("--config", help="mission config JSON overriding the profile")
    mis.add_argument("--profile", choices=mission.PROFILES, default="as-designed",
                     help="measured melt rate set: as-designed 1570 cc/hr, as-tested 1530 cc/hr")
    mis.add_argument("--duration", type=float, help="simulated time, s (default: one heat + extract cycle)")
    mis.add_argument("--out", required=True, help="mission log CSV path")
    mis.set_defaults(func=cmd_mission)
    return p


def run(argv=None) -> CommandResult:
    args = build_parser().parse_args(argv)
    if getattr(args, "kind", None) == "prism" and args.twist is None:
        args.twist = builders.prism_equilibrium_twist(args.n) if args.n >= 3 else 0.0
    try:
        return args.func(args)
    except CommandError as exc:
        return CommandResult(exc.code, [], f"error {exc}")
    except StructuralError as exc:
        return CommandResult(EXIT_MODEL, [], f"error [topology] {exc}")


def main(argv=None) -> int:
    result = run(argv)
    stream = sys.stdout if result.status == EXIT_OK else sys.stderr
    print(result.summary, file=stream)
    return result.status


if __name__ == "__main__":
    sys.exit(main())
