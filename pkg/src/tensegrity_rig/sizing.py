"""Minimum-mass sizing of strings (yield) and bars (yield or Euler buckling)."""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from enum import Enum
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .builders import BarSystem, build_bar_system
from .statics import (
    EquilibriumSolution,
    LoadCase,
    UnstableUnderLoad,
    member_lengths,
    solve_force_densities,
)
from .topology import MemberKind, Topology

# Exponent of pi under the buckling radical.  1 gives the solid round bar
# result sqrt(L^5 / (pi E)); larger values are kept for comparison studies.
BUCKLING_PI_EXPONENT = 1

# Loads below this are evaluated at the floor; in the buckling regime the mass
# ratio is independent of load magnitude.
LOAD_FLOOR = 1e-6


class SizingError(ValueError):
    pass


class GoverningMode(str, Enum):
    YIELD = "yield"
    BUCKLING = "buckling"


@dataclass(frozen=True)
class Material:
    name: str
    density: float  # kg/m^3
    yield_strength: float  # Pa
    youngs_modulus: float  # Pa

    def __post_init__(self):
        for attr in ("density", "yield_strength", "youngs_modulus"):
            v = getattr(self, attr)
            if not (math.isfinite(v) and v > 0):
                raise ValueError(f"material {self.name!r}: {attr} must be positive, got {v}")

    def to_dict(self) -> dict:
        return {
            "density": self.density,
            "yield_strength": self.yield_strength,
            "youngs_modulus": self.youngs_modulus,
        }


def _parse_materials(data: dict) -> dict[str, Material]:
    out = {
        name: Material(name, float(d["density"]), float(d["yield_strength"]), float(d["youngs_modulus"]))
        for name, d in data.get("materials", {}).items()
    }
    for alias, target in data.get("aliases", {}).items():
        out[alias] = out[target]
    return out


def builtin_materials() -> dict[str, Material]:
    text = resources.files(__package__).joinpath("data/materials.json").read_text()
    return _parse_materials(json.loads(text))


def load_materials(path: str | Path | None = None) -> dict[str, Material]:
    """Built-in materials, optionally extended/overridden by a JSON file."""
    materials = builtin_materials()
    if path is not None:
        materials.update(_parse_materials(json.loads(Path(path).read_text())))
    return materials


ALUMINUM = builtin_materials()["aluminum"]
UHMWPE = builtin_materials()["uhmwpe"]


def string_mass(gamma: float, length: float, material: Material) -> float:
    if gamma < 0:
        raise ValueError(f"string force density must be >= 0, got {gamma}")
    if length <= 0:
        raise ValueError(f"length must be positive, got {length}")
    return material.density / material.yield_strength * gamma * length**2


def bar_mass(
    lam: float, length: float, material: Material, pi_exponent: int = BUCKLING_PI_EXPONENT
) -> tuple[float, GoverningMode]:
    """Lightest bar carrying compression ``lam * length``; ties go to yield."""
    if lam < 0:
        raise ValueError(f"bar force density must be >= 0 (compression), got {lam}")
    if length <= 0:
        raise ValueError(f"length must be positive, got {length}")
    rho = material.density
    yield_mass = rho / material.yield_strength * lam * length**2
    buckling_mass = 2 * rho * math.sqrt(lam) * math.sqrt(length**5 / (math.pi**pi_exponent * material.youngs_modulus))
    if yield_mass >= buckling_mass:
        return yield_mass, GoverningMode.YIELD
    return buckling_mass, GoverningMode.BUCKLING


def crossover_force_density(length: float, material: Material, pi_exponent: int = BUCKLING_PI_EXPONENT) -> float:
    """Force density where the yield and buckling bar masses coincide."""
    return 4 * material.yield_strength**2 * length / (math.pi**pi_exponent * material.youngs_modulus)


@dataclass(frozen=True)
class MemberMass:
    index: int  # position in topology.members
    kind: MemberKind
    material: str
    length: float
    force_density: float
    mass: float
    mode: GoverningMode


@dataclass(frozen=True)
class MassReport:
    members: tuple[MemberMass, ...]

    @property
    def total_strings(self) -> float:
        return math.fsum(m.mass for m in self.members if m.kind is MemberKind.STRING)

    @property
    def total_bars(self) -> float:
        return math.fsum(m.mass for m in self.members if m.kind is MemberKind.BAR)

    @property
    def total(self) -> float:
        return math.fsum(m.mass for m in self.members)

    def to_dict(self) -> dict:
        return {
            "members": [
                {
                    "member": m.index,
                    "kind": m.kind.value,
                    "material": m.material,
                    "length": m.length,
                    "force_density": m.force_density,
                    "mass": m.mass,
                    "mode": m.mode.value,
                }
                for m in self.members
            ],
            "totals": {"bar": self.total_bars, "string": self.total_strings},
            "total": self.total,
        }

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["member", "kind", "length", "force_density", "mass", "mode"])
        for m in self.members:
            w.writerow([m.index, m.kind.value, repr(m.length), repr(m.force_density), repr(m.mass), m.mode.value])
        return buf.getvalue()


def _resolve(member, materials, defaults):
    name = member.material or defaults.get(member.kind.value)
    if name not in materials:
        raise SizingError(f"no material {name!r} for {member.kind.value} {member.ends}")
    return materials[name]


def total_min_mass(
    topology: Topology,
    solution: EquilibriumSolution,
    materials: Mapping[str, Material] | None = None,
    *,
    positions=None,
    defaults: Mapping[str, str] | None = None,
    pi_exponent: int = BUCKLING_PI_EXPONENT,
) -> MassReport:
    """Per-member minimum masses for a given set of force densities.

    Members without a material name fall back to ``defaults[kind]``.  Bars
    whose force density is below ``-solution.tolerance`` are in tension and
    raise :class:`SizingError`; smaller negative values are treated as zero.
    """
    materials = builtin_materials() if materials is None else materials
    defaults = {"bar": "aluminum", "string": "uhmwpe"} if defaults is None else defaults
    lengths = member_lengths(topology, positions)
    si, bi = topology.string_indices, topology.bar_indices
    if len(solution.gamma) != len(si) or len(solution.lam) != len(bi):
        raise SizingError("solution does not match the topology's member counts")

    tol = max(solution.tolerance, 1e-12)
    tension = [bi[j] for j, v in enumerate(solution.lam) if v < -tol]
    if tension:
        raise SizingError(f"bars at members {tension} are in tension; cannot size as compression members")

    rows: dict[int, MemberMass] = {}
    for k, g in zip(si, solution.gamma):
        m = topology.members[k]
        mat = _resolve(m, materials, defaults)
        g = max(float(g), 0.0)
        rows[k] = MemberMass(k, m.kind, mat.name, float(lengths[k]), g,
                             string_mass(g, lengths[k], mat), GoverningMode.YIELD)
    for k, v in zip(bi, solution.lam):
        m = topology.members[k]
        mat = _resolve(m, materials, defaults)
        v = max(float(v), 0.0)
        mass, mode = bar_mass(v, lengths[k], mat, pi_exponent)
        rows[k] = MemberMass(k, m.kind, mat.name, float(lengths[k]), v, mass, mode)
    return MassReport(tuple(rows[k] for k in sorted(rows)))


@dataclass(frozen=True)
class ContinuumComparison:
    system: BarSystem
    load: float
    span: float
    continuum_mass: float
    continuum_mode: GoverningMode
    best_aspect: float
    best_mass: float
    sweep: tuple[tuple[float, float], ...]  # (aspect, system mass)
    skipped: tuple[float, ...] = ()
    load_floored: bool = False
    best_report: MassReport | None = field(default=None, repr=False, compare=False)

    @property
    def ratio(self) -> float:
        return self.best_mass / self.continuum_mass

    @property
    def regime(self) -> str:
        return self.continuum_mode.value

    def to_dict(self) -> dict:
        return {
            "system": self.system.value,
            "load": self.load,
            "span": self.span,
            "continuum_mass": self.continuum_mass,
            "regime": self.regime,
            "best_aspect": self.best_aspect,
            "best_mass": self.best_mass,
            "ratio": self.ratio,
            "sweep": [list(p) for p in self.sweep],
            "skipped": list(self.skipped),
            "load_floored": self.load_floored,
        }


DEFAULT_ASPECTS = tuple(np.round(np.linspace(0.05, 0.95, 19), 10))


def compare_to_continuum_bar(
    load: float,
    span: float,
    bar_material: Material = ALUMINUM,
    string_material: Material = UHMWPE,
    system: BarSystem | str = BarSystem.TBAR,
    aspects: Sequence[float] | Iterable[float] = DEFAULT_ASPECTS,
    pi_exponent: int = BUCKLING_PI_EXPONENT,
) -> ContinuumComparison:
    """Mass of a T-bar/D-bar under end compression relative to one solid bar.

    The bar system is solved for the compressive end load at every aspect
    in the sweep; aspects whose statics fail are skipped.  The lightest
    system over the sweep is compared with a single bar of length ``span``
    carrying the same load.
    """
    system = BarSystem(system)
    if load < 0 or span <= 0:
        raise ValueError("need load >= 0 and span > 0")
    floored = load < LOAD_FLOOR
    P = LOAD_FLOOR if floored else float(load)

    continuum_mass, continuum_mode = bar_mass(P / span, span, bar_material, pi_exponent)
    materials = {bar_material.name: bar_material, string_material.name: string_material}
    sweep, skipped = [], []
    best = None
    for aspect in aspects:
        aspect = float(aspect)
        try:
            topo = build_bar_system(system, span, aspect)
        except ValueError:
            skipped.append(aspect)
            continue
        topo = topo.with_members(
            type(m)(m.kind, m.ends, bar_material.name if m.is_bar else string_material.name, m.tag)
            for m in topo.members
        )
        left, right = topo.metadata["terminals"]
        W = np.zeros((3, topo.n_nodes))
        W[0, left], W[0, right] = P, -P
        try:
            sol = solve_force_densities(topo, load=LoadCase(W))
            report = total_min_mass(topo, sol, materials, pi_exponent=pi_exponent)
        except (UnstableUnderLoad, SizingError):
            skipped.append(aspect)
            continue
        sweep.append((aspect, report.total))
        if best is None or report.total < best[1]:
            best = (aspect, report.total, report)
    if best is None:
        raise SizingError(f"no aspect in the sweep gave a feasible {system.value}")
    return ContinuumComparison(
        system=system, load=P, span=span, continuum_mass=continuum_mass,
        continuum_mode=continuum_mode, best_aspect=best[0], best_mass=best[1],
        sweep=tuple(sweep), skipped=tuple(skipped), load_floored=floored, best_report=best[2],
    )
