"""P1 finite elements for mixed Dirichlet/Neumann problems of the Laplacian.

Normal derivatives are never formed geometrically.  A weak Neumann trace is a
vector of nodal weights ``g_i = <d_n u, phi_i>``; the normal derivative of a
computed field is the algebraic residual ``K u - F`` at boundary nodes.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp

from . import _backend
from .mesh import Mesh, validate

DIRICHLET = "dirichlet"
NEUMANN = "neumann"


class AssemblyError(ValueError):
    pass


class CoercivityError(ValueError):
    """Mixed problem without Dirichlet nodes (the stiffness form is only semidefinite)."""


class CompatibilityError(ValueError):
    """Pure Neumann data whose total flux does not vanish."""


class SolverError(RuntimeError):
    def __init__(self, message, residual=None):
        super().__init__(message)
        self.residual = residual


@dataclass(frozen=True)
class Trace:
    """Boundary data on one region, indexed like ``mesh.region_nodes(region)``."""

    region: str
    kind: str
    weights: np.ndarray

    def __post_init__(self):
        if self.region not in ("S", "B"):
            raise ValueError(f"region must be S or B, got {self.region!r}")
        if self.kind not in (DIRICHLET, NEUMANN):
            raise ValueError(f"kind must be {DIRICHLET!r} or {NEUMANN!r}")
        w = np.array(self.weights, dtype=float)
        if w.ndim != 1 or not np.all(np.isfinite(w)):
            raise ValueError("trace weights must be a finite 1-d array")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)

    @classmethod
    def dirichlet(cls, region, values):
        return cls(region, DIRICHLET, values)

    @classmethod
    def neumann(cls, region, weights):
        return cls(region, NEUMANN, weights)

    @classmethod
    def zeros(cls, mesh: Mesh, region, kind):
        return cls(region, kind, np.zeros(len(mesh.region_nodes(region))))

    def _like(self, weights):
        return Trace(self.region, self.kind, weights)

    def __add__(self, other):
        self._check(other)
        return self._like(self.weights + other.weights)

    def __sub__(self, other):
        self._check(other)
        return self._like(self.weights - other.weights)

    def __mul__(self, c):
        return self._like(c * self.weights)

    __rmul__ = __mul__

    def __neg__(self):
        return self._like(-self.weights)

    def _check(self, other):
        if (self.region, self.kind) != (other.region, other.kind):
            raise ValueError(f"cannot combine {self.kind} trace on {self.region} with "
                             f"{other.kind} trace on {other.region}")

    def interface_mask(self, mesh: Mesh) -> np.ndarray:
        return np.isin(mesh.region_nodes(self.region), mesh.interface)

    def zero_at_interface(self, mesh: Mesh, atol=0.0) -> bool:
        return bool(np.all(np.abs(self.weights[self.interface_mask(mesh)]) <= atol))

    def without_interface(self, mesh: Mesh) -> "Trace":
        w = self.weights.copy()
        w[self.interface_mask(mesh)] = 0.0
        return self._like(w)

    def scatter(self, mesh: Mesh) -> np.ndarray:
        out = np.zeros(mesh.n_vertices)
        out[mesh.region_nodes(self.region)] = self.weights
        return out


def restrict(mesh: Mesh, u: np.ndarray, region: str) -> Trace:
    """Dirichlet trace (nodal values) of field ``u`` on ``region``."""
    return Trace.dirichlet(region, np.asarray(u)[mesh.region_nodes(region)])


@dataclass(frozen=True)
class VolumeLoad:
    """Right-hand side ``f`` of ``-Laplace u = f``: a constant or nodal P1 values."""

    constant: float = 0.0
    nodal: Optional[np.ndarray] = None

    @classmethod
    def zero(cls):
        return cls(0.0)

    def is_zero(self):
        return self.nodal is None and self.constant == 0.0

    def assemble(self, system: "StiffnessSystem") -> np.ndarray:
        if self.nodal is not None:
            f = np.asarray(self.nodal, dtype=float)
            if f.shape != (system.n,):
                raise ValueError("nodal load must have one value per vertex")
            return system.M_omega @ f
        return self.constant * system.lumped_area


@dataclass(eq=False)
class StiffnessSystem:
    mesh: Mesh
    K: sp.csr_matrix
    M_S: sp.csr_matrix
    M_B: sp.csr_matrix
    M_omega: sp.csr_matrix
    lumped_area: np.ndarray
    rtol: float = 1e-12
    backend: Optional[str] = None
    _reduced: dict = field(default_factory=dict, repr=False)

    @property
    def n(self) -> int:
        return self.mesh.n_vertices

    def mass(self, region: str) -> sp.csr_matrix:
        return self.M_S if region == "S" else self.M_B

    def region_mass(self, region: str) -> np.ndarray:
        """Dense mass matrix restricted to the region's node list."""
        key = ("mass", region)
        if key not in self._reduced:
            idx = self.mesh.region_nodes(region)
            self._reduced[key] = self.mass(region)[idx][:, idx].toarray()
        return self._reduced[key]

    def measure(self, region: str) -> float:
        return self.mesh.partition.measure[region]

    def with_tolerance(self, rtol: float) -> "StiffnessSystem":
        """Same matrices, different inner-solver tolerance."""
        return StiffnessSystem(self.mesh, self.K, self.M_S, self.M_B, self.M_omega, self.lumped_area,
                               rtol=rtol, backend=self.backend, _reduced=self._reduced)

    def with_backend(self, backend: str) -> "StiffnessSystem":
        return StiffnessSystem(self.mesh, self.K, self.M_S, self.M_B, self.M_omega, self.lumped_area,
                               rtol=self.rtol, backend=backend, _reduced=self._reduced)

    def energy(self, u, v=None) -> float:
        v = u if v is None else v
        return float(u @ (self.K @ v))

    def _free_block(self, free: np.ndarray):
        key = free.tobytes()
        blk = self._reduced.get(key)
        if blk is None:
            Kff = self.K[free][:, free].tocsr()
            Kff.sort_indices()
            blk = (Kff, Kff.indptr.astype(np.int32), Kff.indices.astype(np.int32),
                   np.ascontiguousarray(Kff.data), 1.0 / Kff.diagonal())
            self._reduced[key] = blk
        return blk

    def pcg(self, free: np.ndarray, rhs: np.ndarray, project=False) -> np.ndarray:
        Kff, indptr, indices, data, dinv = self._free_block(free)
        n = len(dinv)
        kern = _backend.get(self.backend)
        x, iters, relres = kern.pcg(indptr, indices, data, np.ascontiguousarray(rhs, dtype=float),
                                    np.zeros(n), dinv, float(self.rtol), 10 * n, bool(project))
        if not relres <= self.rtol:
            raise SolverError(f"PCG did not reach relative residual {self.rtol:g} in {iters} iterations "
                              f"(residual {relres:.3e})", residual=relres)
        return x


def assemble(mesh: Mesh, rtol: float = 1e-12, backend: Optional[str] = None) -> StiffnessSystem:
    """Assemble stiffness, boundary masses and volume mass for a validated mesh."""
    validate(mesh)
    n = mesh.n_vertices
    kern = _backend.get(backend)
    rows, cols, vals, areas = kern.stiffness_triplets(mesh.vertices, mesh.triangles)
    if np.any(np.abs(areas) < 1e-14):
        bad = int(np.argmin(np.abs(areas)))
        raise AssemblyError(f"degenerate triangle {bad} (area {areas[bad]:.3e})")
    K = sp.csr_matrix((vals, (rows, cols)), shape=(n, n))
    K = (0.5 * (K + K.T)).tocsr()

    t = mesh.triangles
    local_m = (np.array([[2.0, 1, 1], [1, 2, 1], [1, 1, 2]]) / 12.0)[None] * areas[:, None, None]
    M_omega = sp.csr_matrix((local_m.ravel(), (np.repeat(t, 3, axis=1).ravel(), np.tile(t, (1, 3)).ravel())),
                            shape=(n, n))
    lumped = np.bincount(t.ravel(), weights=np.repeat(areas / 3.0, 3), minlength=n)

    masses = {}
    for region in ("S", "B"):
        e = mesh.partition.edges[region]
        L = np.linalg.norm(mesh.vertices[e[:, 0]] - mesh.vertices[e[:, 1]], axis=1)
        blk = (np.array([[2.0, 1], [1, 2]]) / 6.0)[None] * L[:, None, None]
        masses[region] = sp.csr_matrix(
            (blk.ravel(), (np.repeat(e, 2, axis=1).ravel(), np.tile(e, (1, 2)).ravel())), shape=(n, n))
    return StiffnessSystem(mesh, K, masses["S"], masses["B"], M_omega.tocsr(), lumped, rtol=rtol, backend=backend)


def _as_list(x):
    if x is None:
        return []
    if isinstance(x, Trace):
        return [x]
    return list(x)


def solve_mixed(system: StiffnessSystem, f: Optional[VolumeLoad], dirichlet: Sequence[Trace],
                neumann: Optional[Sequence[Trace]] = None) -> np.ndarray:
    """Solve ``-Laplace u = f`` with Dirichlet traces and weak Neumann weights.

    Dirichlet traces are imposed strongly; where two traces share a node
    (the interface) the later one wins.  Neumann weights at Dirichlet nodes
    have no effect.
    """
    mesh = system.mesh
    n = system.n
    u = np.zeros(n)
    fixed = np.zeros(n, dtype=bool)
    for tr in _as_list(dirichlet):
        if tr.kind != DIRICHLET:
            raise ValueError("dirichlet list must contain Dirichlet traces")
        idx = mesh.region_nodes(tr.region)
        if len(tr.weights) != len(idx):
            raise ValueError(f"Dirichlet trace on {tr.region} has {len(tr.weights)} values, expected {len(idx)}")
        u[idx] = tr.weights
        fixed[idx] = True
    if not fixed.any():
        raise CoercivityError("mixed problem needs at least one Dirichlet node")
    rhs = np.zeros(n) if f is None else f.assemble(system)
    for tr in _as_list(neumann):
        if tr.kind != NEUMANN:
            raise ValueError("neumann list must contain weak Neumann traces")
        if len(tr.weights) != len(mesh.region_nodes(tr.region)):
            raise ValueError(f"Neumann trace on {tr.region} has wrong length")
        rhs = rhs + tr.scatter(mesh)
    free = ~fixed
    rhs = rhs - system.K @ u
    u[free] = system.pcg(free, rhs[free])
    return u


def weak_normal_derivative(system: StiffnessSystem, u: np.ndarray, f: Optional[VolumeLoad],
                           region: str) -> Trace:
    """Weights ``(K u - F)_i`` at the nodes of ``region`` (interface nodes included)."""
    res = system.K @ u
    if f is not None:
        res = res - f.assemble(system)
    return Trace.neumann(region, res[system.mesh.region_nodes(region)])


def region_mean(system: StiffnessSystem, u: np.ndarray, region: str) -> float:
    """Mass-weighted mean of ``u`` over a boundary region."""
    return float(np.sum(system.mass(region) @ u) / system.measure(region))


def solve_neumann_mean_constrained(system: StiffnessSystem, g_S: Trace, g_B: Trace,
                                   mean_spec=("B", 0.0), f: Optional[VolumeLoad] = None) -> np.ndarray:
    """Pure Neumann solve, fixing the free constant by a boundary mean.

    ``mean_spec`` is ``(region, target)``; the returned field has
    mass-weighted mean ``target`` over ``region``.
    """
    rhs = g_S.scatter(system.mesh) + g_B.scatter(system.mesh)
    if f is not None:
        rhs = rhs + f.assemble(system)
    total = rhs.sum()
    scale = np.abs(rhs).sum()
    if abs(total) > 1e-10 * max(scale, np.finfo(float).tiny):
        raise CompatibilityError(f"Neumann data not compatible: total flux {total:.3e} (l1 size {scale:.3e})")
    free = np.ones(system.n, dtype=bool)
    u = system.pcg(free, rhs - total / system.n, project=True)
    region, target = mean_spec
    return u + (target - region_mean(system, u, region))
