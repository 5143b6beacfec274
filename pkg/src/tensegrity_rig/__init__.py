"""Tensegrity structure design and mission simulation for a lunar ice drilling rig."""
from .builders import BarSystem, GeometryError, build_bar_system, build_prism, build_rig, prism_equilibrium_twist
from .dynamics import DynamicsModel, DynamicsState, LoadSchedule, StringLaws, simulate, step
from .mission import MissionConfig, Phase, load_config, run_cycle, thermo_ceiling
from .sizing import Material, bar_mass, compare_to_continuum_bar, string_mass, total_min_mass
from .statics import LoadCase, UnstableUnderLoad, prestress_modes, solve_force_densities
from .topology import Member, MemberKind, Node, StructuralError, Topology, connectivity_matrices, validate

__version__ = "0.1.0"

__all__ = [
    "BarSystem", "DynamicsModel", "DynamicsState", "GeometryError", "LoadCase", "LoadSchedule",
    "Material", "Member", "MemberKind", "MissionConfig", "Node", "Phase", "StringLaws",
    "StructuralError", "Topology", "UnstableUnderLoad", "bar_mass", "build_bar_system",
    "build_prism", "build_rig", "compare_to_continuum_bar", "connectivity_matrices",
    "load_config", "prestress_modes", "prism_equilibrium_twist", "run_cycle", "simulate",
    "solve_force_densities", "step", "string_mass", "thermo_ceiling", "total_min_mass", "validate",
]
