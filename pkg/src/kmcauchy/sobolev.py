"""Boundary inner products measured through harmonic representatives.

Each boundary-space element is stored as a harmonic field on the whole domain
whose Dirichlet energy (plus a boundary-mean term for ``H^{1/2}``) is the
squared norm:

* ``H^{-1/2}(R)``: Neumann data on R, zero Dirichlet data on the other region;
* ``H^{1/2}_{00}(R)``: Dirichlet data on R, zero on the other region;
* ``H^{1/2}(R)``: Dirichlet data on R, zero Neumann data on the other region.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .fem import DIRICHLET, NEUMANN, StiffnessSystem, Trace, region_mean, restrict, solve_mixed

H_MINUS_HALF = "H-1/2"
H_HALF_00 = "H1/2_00"
H_HALF = "H1/2"


class SpaceMismatchError(ValueError):
    pass


class InterfaceValueError(ValueError):
    """Dirichlet data for ``H^{1/2}_{00}`` that does not vanish at the interface."""


@dataclass(frozen=True, eq=False)
class HarmonicRep:
    field: np.ndarray
    space: str
    region: str
    system: StiffnessSystem
    mean: float = 0.0

    def trace(self) -> Trace:
        return restrict(self.system.mesh, self.field, self.region)

    def norm(self) -> float:
        return float(np.sqrt(max(inner(self, self), 0.0)))

    def _combine(self, other, a, b):
        if (self.space, self.region) != (other.space, other.region):
            raise SpaceMismatchError(f"{self.space}({self.region}) vs {other.space}({other.region})")
        return HarmonicRep(a * self.field + b * other.field, self.space, self.region, self.system,
                           a * self.mean + b * other.mean)

    def __add__(self, other):
        return self._combine(other, 1.0, 1.0)

    def __sub__(self, other):
        return self._combine(other, 1.0, -1.0)

    def __mul__(self, c):
        return HarmonicRep(c * self.field, self.space, self.region, self.system, c * self.mean)

    __rmul__ = __mul__


def _other(region):
    return "B" if region == "S" else "S"


def lift_neumann(system: StiffnessSystem, psi: Trace) -> HarmonicRep:
    if psi.kind != NEUMANN:
        raise ValueError("lift_neumann expects a weak Neumann trace")
    zero = Trace.zeros(system.mesh, _other(psi.region), DIRICHLET)
    u = solve_mixed(system, None, [zero], [psi])
    return HarmonicRep(u, H_MINUS_HALF, psi.region, system)


def lift_dirichlet_00(system: StiffnessSystem, phi: Trace) -> HarmonicRep:
    if phi.kind != DIRICHLET:
        raise ValueError("lift_dirichlet_00 expects a Dirichlet trace")
    mesh = system.mesh
    at_pi = phi.interface_mask(mesh)
    if not np.any(phi.weights[~at_pi]):
        return HarmonicRep(np.zeros(system.n), H_HALF_00, phi.region, system)
    scale = np.max(np.abs(phi.weights))
    if np.any(np.abs(phi.weights[at_pi]) > 1e-12 * scale):
        raise InterfaceValueError(f"H^1/2_00({phi.region}) data must vanish at the interface nodes, "
                                  f"got {phi.weights[at_pi]}")
    zero = Trace.zeros(mesh, _other(phi.region), DIRICHLET)
    u = solve_mixed(system, None, [phi, zero])
    return HarmonicRep(u, H_HALF_00, phi.region, system)


def lift_h12(system: StiffnessSystem, phi: Trace) -> HarmonicRep:
    if phi.kind != DIRICHLET:
        raise ValueError("lift_h12 expects a Dirichlet trace")
    u = solve_mixed(system, None, [phi])
    return HarmonicRep(u, H_HALF, phi.region, system, region_mean(system, u, phi.region))


def h12_rep_from_field(system: StiffnessSystem, u: np.ndarray, region: str) -> HarmonicRep:
    """Wrap a field already harmonic with zero Neumann data off ``region``."""
    return HarmonicRep(u, H_HALF, region, system, region_mean(system, u, region))


def inner(a: HarmonicRep, b: HarmonicRep) -> float:
    if (a.space, a.region) != (b.space, b.region):
        raise SpaceMismatchError(f"inner product between {a.space}({a.region}) and {b.space}({b.region})")
    val = a.system.energy(a.field, b.field)
    if a.space == H_HALF:
        val += a.mean * b.mean
    return float(val)


def norm(a: HarmonicRep) -> float:
    return a.norm()


def l2_inner(system: StiffnessSystem, a: Trace, b: Trace) -> float:
    """``int_R a b`` for two nodal traces on the same region, exact for P1."""
    if a.region != b.region:
        raise SpaceMismatchError("L2 inner product of traces on different regions")
    return float(a.weights @ system.region_mass(a.region) @ b.weights)


def l2_norm(system: StiffnessSystem, a: Trace) -> float:
    return float(np.sqrt(max(l2_inner(system, a, a), 0.0)))


def l2_inner_S(system: StiffnessSystem, a: Trace, b: Trace) -> float:
    if a.region != "S" or b.region != "S":
        raise SpaceMismatchError("l2_inner_S expects traces on S")
    return l2_inner(system, a, b)
