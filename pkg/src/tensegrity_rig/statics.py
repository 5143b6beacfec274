"""Force-density equilibrium ``N K = W`` with ``K = C_s' diag(gamma) C_s - C_b' diag(lambda) C_b``.

Conventions: string force densities ``gamma`` are tension-positive and kept
nonnegative; bar force densities ``lambda`` are compression-positive.
Anchored nodes drop out of the balance equations and their reactions are
recovered from the residual afterwards.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

from .nnls import nnls_partial
from .topology import Topology, connectivity_matrices

NULLSPACE_RTOL = 1e-10


class UnstableUnderLoad(RuntimeError):
    """No admissible force densities balance the load."""

    def __init__(self, message, residual_norm, solution=None):
        super().__init__(message)
        self.residual_norm = residual_norm
        self.solution = solution


class TensionBarWarning(UserWarning):
    pass


@dataclass(frozen=True)
class LoadCase:
    forces: np.ndarray  # 3 x n, newtons

    def __post_init__(self):
        f = np.array(self.forces, dtype=float)
        if f.ndim != 2 or f.shape[0] != 3:
            raise ValueError(f"load must be a 3 x n matrix, got shape {f.shape}")
        if not np.isfinite(f).all():
            raise ValueError("load has non-finite entries")
        f.setflags(write=False)
        object.__setattr__(self, "forces", f)

    @classmethod
    def zeros(cls, n_nodes: int) -> "LoadCase":
        return cls(np.zeros((3, n_nodes)))

    @classmethod
    def from_dict(cls, data: dict, n_nodes: int) -> "LoadCase":
        W = np.zeros((3, n_nodes))
        for key, vec in data.get("forces", {}).items():
            i = int(key)
            if not 0 <= i < n_nodes:
                raise ValueError(f"load references missing node {i}")
            W[:, i] += np.asarray(vec, dtype=float)
        return cls(W)

    def to_dict(self) -> dict:
        return {
            "forces": {
                str(i): [float(v) for v in self.forces[:, i]]
                for i in range(self.forces.shape[1])
                if np.any(self.forces[:, i] != 0)
            }
        }

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.forces))


@dataclass(frozen=True)
class EquilibriumSolution:
    gamma: np.ndarray
    lam: np.ndarray
    residual_norm: float
    nullspace_dim: int
    reactions: np.ndarray = field(repr=False)  # 3 x n, zero on free nodes
    tolerance: float = 0.0
    tension_bars: tuple[int, ...] = ()

    def to_dict(self, topology: Topology | None = None) -> dict:
        anchored = (
            np.flatnonzero(topology.anchored) if topology is not None
            else np.flatnonzero(np.any(self.reactions != 0, axis=0))
        )
        return {
            "gamma": [float(g) for g in self.gamma],
            "lambda": [float(v) for v in self.lam],
            "residual_norm": float(self.residual_norm),
            "nullspace_dim": int(self.nullspace_dim),
            "tolerance": float(self.tolerance),
            "tension_bars": list(self.tension_bars),
            "reactions": {str(int(i)): [float(v) for v in self.reactions[:, i]] for i in anchored},
        }

    @classmethod
    def from_dict(cls, data: dict, n_nodes: int) -> "EquilibriumSolution":
        R = np.zeros((3, n_nodes))
        for key, vec in data.get("reactions", {}).items():
            R[:, int(key)] = vec
        return cls(
            gamma=np.asarray(data["gamma"], dtype=float),
            lam=np.asarray(data["lambda"], dtype=float),
            residual_norm=float(data.get("residual_norm", 0.0)),
            nullspace_dim=int(data.get("nullspace_dim", 0)),
            reactions=R,
            tolerance=float(data.get("tolerance", 0.0)),
            tension_bars=tuple(data.get("tension_bars", ())),
        )


@dataclass(frozen=True)
class PrestressModes:
    basis: np.ndarray  # (alpha + beta) x d, orthonormal columns; strings first
    n_strings: int
    positive_mode: np.ndarray | None  # unit vector with every gamma > 0, if one exists

    @property
    def dim(self) -> int:
        return self.basis.shape[1]

    @property
    def has_positive_mode(self) -> bool:
        return self.positive_mode is not None


def default_tolerance(load_norm: float) -> float:
    return 1e-8 * (1.0 + load_norm)


def _positions(topology, positions):
    N = topology.positions if positions is None else np.asarray(positions, dtype=float)
    if N.shape != (3, topology.n_nodes):
        raise ValueError(f"positions must be 3 x {topology.n_nodes}, got {N.shape}")
    return N


def equilibrium_matrix(topology: Topology, positions=None) -> np.ndarray:
    """Matrix A with ``vec(N K) = A @ concat(gamma, lambda)``.

    ``vec`` stacks node columns, so row ``3*i + d`` is coordinate d of node i.
    """
    N = _positions(topology, positions)
    Cb, Cs = connectivity_matrices(topology)
    S = N @ Cs.T
    B = N @ Cb.T
    n = topology.n_nodes
    # column j of N C' diag(x) C is sum_j x_j (N c_j) c_j
    As = np.einsum("dj,ji->idj", S, Cs).reshape(3 * n, -1)
    Ab = -np.einsum("dj,ji->idj", B, Cb).reshape(3 * n, -1)
    return np.hstack([As, Ab])


def equilibrium_operator(topology: Topology, positions, gamma, lam, load: LoadCase | np.ndarray | None = None):
    """Return ``K`` and the residual matrix ``N K - W``."""
    N = _positions(topology, positions)
    Cb, Cs = connectivity_matrices(topology)
    gamma = np.asarray(gamma, dtype=float)
    lam = np.asarray(lam, dtype=float)
    if gamma.shape != (Cs.shape[0],) or lam.shape != (Cb.shape[0],):
        raise ValueError(
            f"expected {Cs.shape[0]} string and {Cb.shape[0]} bar force densities, "
            f"got {gamma.shape} and {lam.shape}"
        )
    W = np.zeros_like(N) if load is None else np.asarray(getattr(load, "forces", load), dtype=float)
    if W.shape != N.shape:
        raise ValueError(f"load must be 3 x {topology.n_nodes}")
    K = Cs.T @ (gamma[:, None] * Cs) - Cb.T @ (lam[:, None] * Cb)
    return K, N @ K - W


def _free_rows(topology):
    free = ~topology.anchored
    return np.repeat(free, 3)


def _nullspace(A):
    if A.shape[1] == 0:
        return np.zeros((0, 0))
    if A.shape[0] == 0:
        return np.eye(A.shape[1])
    _, s, vt = np.linalg.svd(A)
    tol = NULLSPACE_RTOL * max(s.max(initial=0.0), 1.0)
    rank = int((s > tol).sum())
    return vt[rank:].T.copy()


def _positive_string_mode(basis, n_strings):
    if basis.shape[1] == 0 or n_strings == 0:
        return None
    d = basis.shape[1]
    # scale invariance lets "gamma > 0" become "gamma >= 1"
    res = linprog(
        np.zeros(d), A_ub=-basis[:n_strings], b_ub=-np.ones(n_strings),
        bounds=[(None, None)] * d, method="highs",
    )
    if res.status != 0:
        return None
    mode = basis @ res.x
    return mode / np.linalg.norm(mode)


def prestress_modes(topology: Topology, positions=None) -> PrestressModes:
    """Orthonormal basis of self-stress states (W = 0 on free nodes)."""
    A = equilibrium_matrix(topology, positions)[_free_rows(topology)]
    basis = _nullspace(A)
    n_strings = len(topology.strings)
    return PrestressModes(basis, n_strings, _positive_string_mode(basis, n_strings))


def solve_force_densities(topology: Topology, positions=None, load: LoadCase | None = None, tol: float | None = None) -> EquilibriumSolution:
    """Least-squares force densities with nonnegative string entries.

    Raises :class:`UnstableUnderLoad` when the best admissible residual is
    above ``tol`` (default ``1e-8 * (1 + ||W||)``).
    """
    N = _positions(topology, positions)
    n = topology.n_nodes
    load = LoadCase.zeros(n) if load is None else load
    if load.forces.shape != (3, n):
        raise ValueError(f"load must be 3 x {n}")
    tol = default_tolerance(load.norm) if tol is None else tol

    A_full = equilibrium_matrix(topology, N)
    rows = _free_rows(topology)
    A = A_full[rows]
    w = load.forces.T.reshape(-1)[rows]
    n_strings = len(topology.strings)
    nonneg = np.zeros(A.shape[1], dtype=bool)
    nonneg[:n_strings] = True

    if A.shape[0] == 0 or A.shape[1] == 0:
        x = np.zeros(A.shape[1])
    else:
        x, _ = nnls_partial(A, w, nonneg)
    # + 0.0 folds negative zeros so written artifacts are canonical
    gamma, lam = x[:n_strings] + 0.0, x[n_strings:] + 0.0

    R = (A_full @ x).reshape(n, 3).T - load.forces
    free = ~topology.anchored
    residual_norm = float(np.linalg.norm(R[:, free]))
    reactions = np.where(free[None, :], 0.0, R)
    nullspace_dim = _nullspace(A).shape[1]

    tension_bars = tuple(int(j) for j in np.flatnonzero(lam < -tol))
    solution = EquilibriumSolution(
        gamma=gamma, lam=lam, residual_norm=residual_norm, nullspace_dim=nullspace_dim,
        reactions=reactions, tolerance=tol, tension_bars=tension_bars,
    )
    if residual_norm > tol:
        raise UnstableUnderLoad(
            f"unstable under load: best residual {residual_norm:.3e} N exceeds tolerance {tol:.3e} N",
            residual_norm, solution,
        )
    if tension_bars:
        warnings.warn(f"bars {list(tension_bars)} carry tension", TensionBarWarning, stacklevel=2)
    return solution


def member_lengths(topology: Topology, positions=None) -> np.ndarray:
    """Lengths in ``topology.members`` order."""
    N = _positions(topology, positions)
    return np.array([np.linalg.norm(N[:, j] - N[:, i]) for i, j in (m.ends for m in topology.members)])


def member_forces(topology: Topology, positions, solution: EquilibriumSolution) -> np.ndarray:
    """Axial forces in ``topology.members`` order.

    Strings report tension (>= 0), bars report compression as positive.
    """
    lengths = member_lengths(topology, positions)
    si, bi = topology.string_indices, topology.bar_indices
    if len(solution.gamma) != len(si) or len(solution.lam) != len(bi):
        raise ValueError("solution does not match the topology's member counts")
    out = np.zeros(len(topology.members))
    out[si] = solution.gamma * lengths[si]
    out[bi] = solution.lam * lengths[bi]
    return out
