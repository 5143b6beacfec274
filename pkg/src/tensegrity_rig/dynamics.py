"""Rigid-bar tensegrity dynamics in nodal form.

Dots are time derivatives and ``^T`` is a transpose.  The equations of motion
are ``N.. M = W - S diag(gamma) C_s + B diag(lambda) C_b`` with anchored nodes
held fixed by reactions.  Bars are rigid: their compression-positive force
densities ``lambda`` solve

    A lambda = -(|b_j.|^2 + b_j^T F0 M^-1 c_j^T),   A = (B^T B) o (C_b M^-1 C_b^T)

where ``F0 = W - S diag(gamma) C_s`` and ``o`` is the elementwise product.
When no two bars share a node and every bar end carries 2 kg, ``A`` is
diagonal and this is the closed form
``lambda = -l^-2 [B.^T B.] - 1/2 l^-2 [B^T F0 C_b^T]`` (diagonal parts).
Fixed-step RK4 advances ``(N, N.)`` and a mass-weighted projection restores
bar lengths and velocity constraints.
"""
from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field, replace
from importlib import resources
from typing import Callable, Sequence

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .statics import member_lengths, prestress_modes
from .topology import Topology, connectivity_matrices

GRAVITY = 9.80665
DEFAULT_DT = 1e-4

PROJECTION_TOL = 1e-14
PROJECTION_MAX_ITER = 20


class ModelError(ValueError):
    """Topology/mass data cannot form a well-posed dynamics model."""


class IntegrationError(RuntimeError):
    def __init__(self, message, last_state=None, trajectory=None):
        super().__init__(message)
        self.last_state = last_state
        self.trajectory = trajectory


@dataclass(frozen=True)
class DynamicsState:
    positions: np.ndarray  # 3 x n, m
    velocities: np.ndarray  # 3 x n, m/s
    time: float = 0.0

    def __post_init__(self):
        N = np.array(self.positions, dtype=float)
        V = np.array(self.velocities, dtype=float)
        if N.shape != V.shape or N.ndim != 2 or N.shape[0] != 3:
            raise ValueError("positions and velocities must both be 3 x n")
        N.setflags(write=False)
        V.setflags(write=False)
        object.__setattr__(self, "positions", N)
        object.__setattr__(self, "velocities", V)
        object.__setattr__(self, "time", float(self.time))

    @classmethod
    def at_rest(cls, topology: Topology, positions=None) -> "DynamicsState":
        N = topology.positions if positions is None else positions
        return cls(N, np.zeros_like(N), 0.0)

    @property
    def is_finite(self) -> bool:
        return bool(np.isfinite(self.positions).all() and np.isfinite(self.velocities).all())


@dataclass(frozen=True)
class StringLaws:
    """Tension-only linear-elastic strings with viscous damping.

    Tension is ``k (l - L0) + c l'`` for a taut string (``l > L0``), clamped
    at zero; a string at or below rest length carries nothing.
    """

    stiffness: np.ndarray  # N/m
    rest_length: np.ndarray  # m
    damping: np.ndarray  # N s/m

    def __post_init__(self):
        k = np.atleast_1d(np.asarray(self.stiffness, dtype=float))
        L0 = np.atleast_1d(np.asarray(self.rest_length, dtype=float))
        c = np.broadcast_to(np.asarray(self.damping, dtype=float), L0.shape).copy()
        k = np.broadcast_to(k, L0.shape).copy()
        if (k < 0).any() or (L0 <= 0).any() or (c < 0).any():
            raise ValueError("string laws need stiffness >= 0, rest length > 0, damping >= 0")
        object.__setattr__(self, "stiffness", k)
        object.__setattr__(self, "rest_length", L0)
        object.__setattr__(self, "damping", c)

    @classmethod
    def from_tension(cls, lengths, tension, stiffness, damping=0.0) -> "StringLaws":
        """Rest lengths that make each string carry ``tension`` at ``lengths``."""
        lengths = np.asarray(lengths, dtype=float)
        k = np.broadcast_to(np.asarray(stiffness, dtype=float), lengths.shape)
        rest = lengths - np.asarray(tension, dtype=float) / k
        if (rest <= 0).any():
            raise ValueError("requested tension exceeds what the stiffness allows")
        return cls(k, rest, damping)

    @classmethod
    def from_stretch(cls, lengths, stretch, stiffness, damping=0.0) -> "StringLaws":
        """Rest length ``l / (1 + stretch)`` for every string."""
        lengths = np.asarray(lengths, dtype=float)
        return cls(stiffness, lengths / (1.0 + stretch), damping)

    def __len__(self):
        return len(self.rest_length)


def string_force_densities(lengths, rates, laws: StringLaws) -> np.ndarray:
    """gamma = tension / length, exactly zero for slack strings."""
    lengths = np.asarray(lengths, dtype=float)
    rates = np.asarray(rates, dtype=float)
    tension = laws.stiffness * (lengths - laws.rest_length) + laws.damping * rates
    taut = (lengths > laws.rest_length) & (tension > 0)
    return np.where(taut, tension / np.where(taut, lengths, 1.0), 0.0)


@dataclass(frozen=True)
class LoadSchedule:
    """External nodal forces ``W(t)``: constant part, gravity and timed pulses.

    ``pulses`` entries are ``(t_start, t_stop, node, (fx, fy, fz))``, active on
    ``t_start <= t < t_stop``.
    """

    constant: np.ndarray | None = None
    gravity: float = 0.0
    pulses: tuple = ()

    def forces(self, t: float, model: "DynamicsModel") -> np.ndarray:
        W = np.zeros((3, model.n_nodes)) if self.constant is None else np.array(self.constant, dtype=float)
        if self.gravity:
            W[2] -= self.gravity * model.nodal_mass
        for t0, t1, node, vec in self.pulses:
            if t0 <= t < t1:
                W[:, int(node)] += vec
        return W

    @classmethod
    def from_dict(cls, data: dict, n_nodes: int) -> "LoadSchedule":
        constant = None
        if data.get("forces"):
            constant = np.zeros((3, n_nodes))
            for key, vec in data["forces"].items():
                constant[:, int(key)] += vec
        pulses = tuple(
            (float(p["start"]), float(p["stop"]), int(p["node"]), tuple(float(v) for v in p["force"]))
            for p in data.get("pulses", ())
        )
        return cls(constant, float(data.get("gravity", 0.0)), pulses)


def _per_item(value, count, what):
    arr = np.broadcast_to(np.asarray(value, dtype=float), (count,)).copy()
    if (arr < 0).any():
        raise ModelError(f"{what} must be nonnegative")
    return arr


class DynamicsModel:
    """Operators for one topology: mass matrix, incidence data, rest bar lengths.

    ``bar_mass_model`` selects how bar mass enters the mass matrix:
    ``"lumped"`` puts half of each bar at each end node, ``"consistent"`` uses
    the uniform-rod matrix ``m/6 [[2, 1], [1, 2]]`` which reproduces the
    translational and rotational inertia of a thin rod exactly.  String mass is
    always lumped half-and-half.
    """

    def __init__(
        self,
        topology: Topology,
        bar_mass=1.0,
        string_mass=0.0,
        node_mass=0.0,
        *,
        bar_mass_model: str = "lumped",
        rest_positions=None,
    ):
        self.topology = topology
        n = self.n_nodes = topology.n_nodes
        self.Cb, self.Cs = connectivity_matrices(topology)
        self.anchored = topology.anchored.copy()
        self.free = ~self.anchored
        nb, ns = self.Cb.shape[0], self.Cs.shape[0]
        self.bar_masses = _per_item(bar_mass, nb, "bar mass")
        self.string_masses = _per_item(string_mass, ns, "string mass")
        self.node_masses = _per_item(node_mass, n, "node mass")
        if bar_mass_model not in ("lumped", "consistent"):
            raise ModelError(f"unknown bar mass model {bar_mass_model!r}")
        self.bar_mass_model = bar_mass_model

        M = np.diag(self.node_masses)
        for C, masses, model in ((self.Cb, self.bar_masses, bar_mass_model), (self.Cs, self.string_masses, "lumped")):
            for row, m in zip(C, masses):
                i, j = np.flatnonzero(row == -1)[0], np.flatnonzero(row == 1)[0]
                if model == "lumped":
                    M[i, i] += m / 2
                    M[j, j] += m / 2
                else:
                    M[i, i] += m / 3
                    M[j, j] += m / 3
                    M[i, j] += m / 6
                    M[j, i] += m / 6
        self.M = M
        self.nodal_mass = M.sum(axis=1)

        f = np.flatnonzero(self.free)
        self.Minv = np.zeros((n, n))
        if f.size:
            try:
                factor = cho_factor(M[np.ix_(f, f)])
            except np.linalg.LinAlgError as exc:
                raise ModelError("mass matrix is not positive definite on the free nodes") from exc
            self.Minv[np.ix_(f, f)] = cho_solve(factor, np.eye(f.size))

        N0 = topology.positions if rest_positions is None else np.asarray(rest_positions, dtype=float)
        self.anchor_positions = N0[:, self.anchored].copy()
        self.bar_lengths = np.linalg.norm(N0 @ self.Cb.T, axis=0)
        if (self.bar_lengths <= 0).any():
            raise ModelError(f"zero-length bars {np.flatnonzero(self.bar_lengths <= 0).tolist()}")
        # bars with both ends anchored never move; they get no multiplier
        both = np.array([self.anchored[row != 0].all() for row in self.Cb], dtype=bool)
        self.constrained = ~both
        self.G = self.Cb @ self.Minv @ self.Cb.T
        c = self.constrained
        self._Cbc = self.Cb[c]
        self._Gc = self.G[np.ix_(c, c)]
        self._Cbc_Minv = self._Cbc @ self.Minv
        self._Minv_CbcT = self._Cbc_Minv.T.copy()
        self._L2 = self.bar_lengths[c] ** 2
        # no two constrained bars coupled through a shared free node
        self.decoupled = bool(np.allclose(self._Gc, np.diag(np.diag(self._Gc)), rtol=0, atol=0))

    @property
    def n_bars(self) -> int:
        return self.Cb.shape[0]

    @property
    def n_strings(self) -> int:
        return self.Cs.shape[0]

    def bar_vectors(self, N):
        return N @ self.Cb.T

    def string_vectors(self, N):
        return N @ self.Cs.T

    def coupling(self, Bc) -> np.ndarray:
        """A = (B'B) o (C_b M^-1 C_b') over the constrained bars' vectors ``Bc``."""
        return (Bc.T @ Bc) * self._Gc

    def solve_coupled(self, Bc, r) -> np.ndarray:
        if self.decoupled:
            return r / ((Bc * Bc).sum(axis=0) * np.diag(self._Gc))
        A = self.coupling(Bc)
        try:
            return np.linalg.solve(A, r)
        except np.linalg.LinAlgError:
            return np.linalg.lstsq(A, r, rcond=None)[0]


def bar_force_densities(model: DynamicsModel, N, V, gamma, W) -> np.ndarray:
    """Compression-positive bar force densities that keep bar lengths fixed."""
    lam = np.zeros(model.n_bars)
    c = model.constrained
    if not c.any():
        return lam
    Bc = N @ model._Cbc.T
    Bdc = V @ model._Cbc.T
    F0 = W - (model.string_vectors(N) * gamma) @ model.Cs
    r = -(Bdc * Bdc).sum(axis=0) - (Bc * (F0 @ model._Minv_CbcT)).sum(axis=0)
    lam[c] = model.solve_coupled(Bc, r)
    return lam


def accelerations(model: DynamicsModel, N, V, laws: StringLaws, W):
    """Nodal accelerations plus the string and bar force densities used."""
    S, Sd = N @ model.Cs.T, V @ model.Cs.T
    lengths = np.sqrt((S * S).sum(axis=0))
    rates = (S * Sd).sum(axis=0) / np.where(lengths > 0, lengths, 1.0)
    gamma = string_force_densities(lengths, rates, laws)
    F0 = W - (S * gamma) @ model.Cs
    lam = np.zeros(model.n_bars)
    c = model.constrained
    if c.any():
        Bc, Bdc = N @ model._Cbc.T, V @ model._Cbc.T
        r = -(Bdc * Bdc).sum(axis=0) - (Bc * (F0 @ model._Minv_CbcT)).sum(axis=0)
        lam[c] = model.solve_coupled(Bc, r)
        F = F0 + (Bc * lam[c]) @ model._Cbc
    else:
        F = F0
    return F @ model.Minv, gamma, lam


def project(model: DynamicsModel, N, V):
    """Restore bar lengths, then remove velocity components that stretch bars.

    Corrections are mass-weighted (``delta N = B diag(mu) C_b M^-1``) so
    momentum is not injected.  Returns corrected ``(N, V)`` and the largest
    nodal position correction.
    """
    N = np.array(N, dtype=float)
    V = np.array(V, dtype=float)
    N0 = N.copy()
    N[:, model.anchored] = model.anchor_positions
    V[:, model.anchored] = 0.0
    if model.constrained.any():
        Cbc = model._Cbc
        for _ in range(PROJECTION_MAX_ITER):
            Bc = N @ Cbc.T
            g = (Bc * Bc).sum(axis=0) - model._L2
            if np.abs(g / model._L2).max() <= PROJECTION_TOL:
                break
            mu = model.solve_coupled(Bc, -0.5 * g)
            N = N + (Bc * mu) @ model._Cbc_Minv
        Bc = N @ Cbc.T
        h = (Bc * (V @ Cbc.T)).sum(axis=0)
        nu = model.solve_coupled(Bc, -h)
        V = V + (Bc * nu) @ model._Cbc_Minv
    disp = float(np.sqrt(((N - N0) ** 2).sum(axis=0)).max(initial=0.0))
    return N, V, disp


def _load_fn(load, model) -> Callable[[float], np.ndarray]:
    if load is None:
        zero = np.zeros((3, model.n_nodes))
        return lambda t: zero
    if isinstance(load, LoadSchedule):
        return lambda t: load.forces(t, model)
    W = np.asarray(getattr(load, "forces", load), dtype=float)
    return lambda t: W


@dataclass(frozen=True)
class StepInfo:
    projection: float  # largest nodal correction, m
    drift_before: float  # max relative bar length error before projection
    drift_after: float


def step(state: DynamicsState, model: DynamicsModel, laws: StringLaws, load=None, dt: float = DEFAULT_DT, *, project_constraints: bool = True):
    """One classical RK4 step followed by constraint projection.

    ``load`` may be ``None``, a 3 x n array, a :class:`LoadCase`-like object
    with ``.forces`` or a :class:`LoadSchedule`.  Returns ``(state, StepInfo)``.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    Wt = _load_fn(load, model)
    t, N, V = state.time, state.positions, state.velocities

    def rhs(tt, n, v):
        a, _, _ = accelerations(model, n, v, laws, Wt(tt))
        return v, a

    k1n, k1v = rhs(t, N, V)
    k2n, k2v = rhs(t + dt / 2, N + dt / 2 * k1n, V + dt / 2 * k1v)
    k3n, k3v = rhs(t + dt / 2, N + dt / 2 * k2n, V + dt / 2 * k2v)
    k4n, k4v = rhs(t + dt, N + dt * k3n, V + dt * k3v)
    N1 = N + dt / 6 * (k1n + 2 * k2n + 2 * k3n + k4n)
    V1 = V + dt / 6 * (k1v + 2 * k2v + 2 * k3v + k4v)

    if not (np.isfinite(N1).all() and np.isfinite(V1).all()):
        raise IntegrationError(f"non-finite state at t = {t + dt:.6g} s", last_state=state)
    before = max_bar_drift(model, N1)
    disp, after = 0.0, before
    if project_constraints:
        N1, V1, disp = project(model, N1, V1)
        after = max_bar_drift(model, N1)
    return DynamicsState(N1, V1, t + dt), StepInfo(disp, before, after)


def max_bar_drift(model: DynamicsModel, N) -> float:
    c = model.constrained
    if not c.any():
        return 0.0
    Bc = N @ model._Cbc.T
    return float(np.abs(np.sqrt((Bc * Bc).sum(axis=0) / model._L2) - 1.0).max())


@dataclass(frozen=True)
class Energy:
    kinetic: float
    gravitational: float
    elastic: float

    @property
    def total(self) -> float:
        return self.kinetic + self.gravitational + self.elastic


def energy(state: DynamicsState, model: DynamicsModel, laws: StringLaws, gravity: float = 0.0) -> Energy:
    """Kinetic, gravitational (datum z = 0) and string strain energy, in J."""
    V = state.velocities
    kinetic = 0.5 * float(np.einsum("di,ij,dj->", V, model.M, V))
    grav = gravity * float(model.nodal_mass @ state.positions[2])
    lengths = np.linalg.norm(model.string_vectors(state.positions), axis=0)
    stretch = np.maximum(lengths - laws.rest_length, 0.0)
    elastic = 0.5 * float((laws.stiffness * stretch**2).sum())
    return Energy(kinetic, grav, elastic)


DIAGNOSTICS = ("kinetic", "gravitational", "elastic", "total_energy", "bar_drift", "projection")


@dataclass
class Trajectory:
    times: list[float] = field(default_factory=list)
    states: list[DynamicsState] = field(default_factory=list)
    diagnostics: dict[str, list[float]] = field(default_factory=lambda: {k: [] for k in DIAGNOSTICS})

    def __len__(self):
        return len(self.states)

    @property
    def positions(self) -> np.ndarray:
        return np.array([s.positions for s in self.states])

    def append(self, state, e: Energy, drift, projection):
        self.times.append(state.time)
        self.states.append(state)
        for key, value in zip(DIAGNOSTICS, (e.kinetic, e.gravitational, e.elastic, e.total, drift, projection)):
            self.diagnostics[key].append(float(value))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        n = self.states[0].positions.shape[1] if self.states else 0
        header = ["time"] + [f"{ax}{i}" for i in range(n) for ax in "xyz"] + list(DIAGNOSTICS)
        w.writerow(header)
        for k, s in enumerate(self.states):
            row = [s.time] + list(s.positions.T.reshape(-1)) + [self.diagnostics[d][k] for d in DIAGNOSTICS]
            w.writerow([repr(float(v)) for v in row])
        return buf.getvalue()


def simulate(
    model: DynamicsModel,
    initial: DynamicsState,
    laws: StringLaws,
    schedule: LoadSchedule | None = None,
    duration: float = 0.0,
    dt: float = DEFAULT_DT,
    stride: int = 1,
) -> Trajectory:
    """Integrate for ``duration`` seconds, sampling every ``stride`` steps.

    The initial and final states are always sampled.  On failure the
    partial trajectory is attached to the raised :class:`IntegrationError`.
    """
    if duration < 0:
        raise ValueError("duration must be >= 0")
    if stride < 1:
        raise ValueError("stride must be >= 1")
    schedule = schedule or LoadSchedule()
    gravity = schedule.gravity
    n_steps = int(round(duration / dt))
    traj = Trajectory()
    state = initial
    traj.append(state, energy(state, model, laws, gravity), max_bar_drift(model, state.positions), 0.0)
    worst_drift = worst_proj = 0.0
    for k in range(1, n_steps + 1):
        try:
            state, info = step(state, model, laws, schedule, dt)
        except IntegrationError as exc:
            exc.trajectory = traj
            raise
        # time from the step count, not accumulated, keeps samples reproducible
        state = replace(state, time=initial.time + k * dt)
        worst_drift = max(worst_drift, info.drift_after)
        worst_proj = max(worst_proj, info.projection)
        if k % stride == 0 or k == n_steps:
            traj.append(state, energy(state, model, laws, gravity), worst_drift, worst_proj)
            worst_drift = worst_proj = 0.0
    return traj


def linear_momentum(state: DynamicsState, model: DynamicsModel) -> np.ndarray:
    return state.velocities @ model.M.sum(axis=1)


def angular_momentum(state: DynamicsState, model: DynamicsModel, nodes: Sequence[int] | None = None) -> np.ndarray:
    """About the origin, over ``nodes`` (default all), using the mass matrix."""
    idx = np.arange(model.n_nodes) if nodes is None else np.asarray(nodes)
    N, V = state.positions[:, idx], state.velocities[:, idx]
    P = V @ model.M[np.ix_(idx, idx)]  # momentum density per node
    return np.cross(N.T, P.T).sum(axis=0)


def default_config() -> dict:
    return json.loads(resources.files(__package__).joinpath("data/dynamics-default.json").read_text())


def _nodal_values(spec, n, what):
    if isinstance(spec, dict):
        out = np.zeros(n)
        for key, v in spec.items():
            out[int(key)] = float(v)
        return out
    return _per_item(spec, n, what)


def setup_from_config(topology: Topology, config: dict | None = None):
    """Build ``(model, laws, schedule, initial_state, merged_config)`` from a config mapping.

    Keys missing from ``config`` fall back to the packaged defaults.  String
    rest lengths come from the first of ``strings.rest_length`` (list),
    ``strings.prestress`` (minimum tension in N along the topology's
    all-positive prestress mode) or ``strings.stretch`` (uniform strain)
    that is present; the packaged default is a stretch.
    """
    cfg = default_config()
    for key, value in (config or {}).items():
        if isinstance(value, dict) and isinstance(cfg.get(key), dict):
            cfg[key] = {**cfg[key], **value}
        else:
            cfg[key] = value
    strings = cfg["strings"]
    n = topology.n_nodes
    model = DynamicsModel(
        topology,
        bar_mass=cfg["bar_mass"],
        string_mass=cfg["string_mass"],
        node_mass=_nodal_values(cfg["node_mass"], n, "node mass"),
        bar_mass_model=cfg["bar_mass_model"],
    )
    lengths = member_lengths(topology)[topology.string_indices]
    k, c = strings["stiffness"], strings.get("damping", 0.0)
    if "rest_length" in strings:
        laws = StringLaws(k, strings["rest_length"], c)
    elif "prestress" in strings:
        modes = prestress_modes(topology)
        if not modes.has_positive_mode:
            raise ModelError("topology has no all-positive prestress mode to scale")
        gamma = modes.positive_mode[: modes.n_strings]
        tension = gamma * lengths
        laws = StringLaws.from_tension(lengths, tension * (float(strings["prestress"]) / tension.min()), k, c)
    else:
        laws = StringLaws.from_stretch(lengths, float(strings["stretch"]), k, c)
    schedule = LoadSchedule.from_dict(cfg["loads"], n)
    V = np.zeros((3, n))
    for key, vec in cfg.get("initial_velocity", {}).items():
        V[:, int(key)] = vec
    N, V, _ = project(model, topology.positions, V)
    return model, laws, schedule, DynamicsState(N, V, 0.0), cfg
