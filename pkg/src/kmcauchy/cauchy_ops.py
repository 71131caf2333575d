"""Solution operators of the Cauchy problem and their adjoints.

Naming follows the mixed problems involved:

* ``solve_N(data, psi)``: ``-Lap v = f``, ``v = sigma`` on S, ``d_n v = psi`` on B;
* ``solve_D(data, phi)``: ``-Lap w = f``, ``d_n w = tau`` on S, ``w = phi`` on B.

``op_N``, ``op_D`` are their boundary restrictions (Neumann on S, Dirichlet on
S), ``op_KM``/``op_MK`` the two alternating compositions.  The ``*0`` variants
use homogeneous data.

Interface nodes are Dirichlet nodes in every mixed problem here, so Neumann
traces returned by this module carry zero weight there.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .fem import (DIRICHLET, NEUMANN, StiffnessSystem, Trace, VolumeLoad,
                  restrict, solve_mixed, solve_neumann_mean_constrained, weak_normal_derivative)
from .sobolev import HarmonicRep, h12_rep_from_field, lift_dirichlet_00


@dataclass(frozen=True)
class CauchyData:
    sigma: Trace
    tau: Trace
    f: VolumeLoad = field(default_factory=VolumeLoad.zero)

    def __post_init__(self):
        if (self.sigma.region, self.sigma.kind) != ("S", DIRICHLET):
            raise ValueError("sigma must be a Dirichlet trace on S")
        if (self.tau.region, self.tau.kind) != ("S", NEUMANN):
            raise ValueError("tau must be a weak Neumann trace on S")

    @classmethod
    def homogeneous(cls, mesh):
        return cls(Trace.zeros(mesh, "S", DIRICHLET), Trace.zeros(mesh, "S", NEUMANN), VolumeLoad.zero())

    def with_sigma(self, sigma: Trace) -> "CauchyData":
        return CauchyData(sigma, self.tau, self.f)


def _open(system, trace: Trace) -> Trace:
    return trace.without_interface(system.mesh)


def _hom(system):
    return CauchyData.homogeneous(system.mesh)


# --- field-valued solution operators -------------------------------------------------

def solve_N(system: StiffnessSystem, data: CauchyData, psi: Trace) -> np.ndarray:
    return solve_mixed(system, data.f, [data.sigma], [psi])


def solve_D(system: StiffnessSystem, data: CauchyData, phi: Trace) -> np.ndarray:
    return solve_mixed(system, data.f, [phi], [data.tau])


def solve_N0(system, psi):
    return solve_N(system, _hom(system), psi)


def solve_D0(system, phi):
    return solve_D(system, _hom(system), phi)


def solve_DD(system: StiffnessSystem, data: CauchyData, phi: Trace) -> np.ndarray:
    """``-Lap u = f`` with ``u = sigma`` on S and ``u = phi`` on B (sigma wins at the interface)."""
    return solve_mixed(system, data.f, [phi, data.sigma])


# --- boundary maps ---------------------------------------------------------------------

def op_N(system, data, psi) -> Trace:
    v = solve_N(system, data, psi)
    return _open(system, weak_normal_derivative(system, v, data.f, "S"))


def op_N0(system, psi) -> Trace:
    return op_N(system, _hom(system), psi)


def op_D(system, data, phi) -> Trace:
    return restrict(system.mesh, solve_D(system, data, phi), "S")


def op_D0(system, phi) -> Trace:
    return op_D(system, _hom(system), phi)


def op_KM(system: StiffnessSystem, data: CauchyData, psi: Trace) -> Trace:
    """One alternating step on Neumann data: ``d_n D(N(psi)|_B)|_B``."""
    v = solve_N(system, data, psi)
    w = solve_D(system, data, restrict(system.mesh, v, "B"))
    return _open(system, weak_normal_derivative(system, w, data.f, "B"))


def op_MK(system: StiffnessSystem, data: CauchyData, phi: Trace) -> Trace:
    """One alternating step on Dirichlet data: ``N(d_n D(phi)|_B)|_B``."""
    w = solve_D(system, data, phi)
    psi = weak_normal_derivative(system, w, data.f, "B")
    return restrict(system.mesh, solve_N(system, data, psi), "B")


def op_KM0(system, psi):
    return op_KM(system, _hom(system), psi)


def op_MK0(system, phi):
    return op_MK(system, _hom(system), phi)


def phi_hat(system, data) -> Trace:
    """B-trace of an extension of sigma: one alternating step from zero."""
    return op_MK(system, data, Trace.zeros(system.mesh, "B", DIRICHLET))


# --- adjoints ----------------------------------------------------------------------------

def adjoint_N0(system: StiffnessSystem, xi: Trace) -> Trace:
    """Adjoint of ``N0`` for the ``H^{-1/2}`` products: ``d_n q|_B`` where ``q``
    is harmonic, ``d_n q = xi`` on S and ``q = 0`` on B."""
    if (xi.region, xi.kind) != ("S", NEUMANN):
        raise ValueError("adjoint_N0 acts on Neumann traces on S")
    q = solve_mixed(system, None, [Trace.zeros(system.mesh, "B", DIRICHLET)], [xi])
    return _open(system, weak_normal_derivative(system, q, None, "B"))


def adjoint_D0(system: StiffnessSystem, gamma: Trace) -> Trace:
    """Adjoint of ``D0`` between the ``H^{1/2}_{00}`` spaces (two solves)."""
    if (gamma.region, gamma.kind) != ("S", DIRICHLET):
        raise ValueError("adjoint_D0 acts on Dirichlet traces on S")
    mesh = system.mesh
    q = lift_dirichlet_00(system, gamma).field
    flux = weak_normal_derivative(system, q, None, "B")
    r = solve_mixed(system, None, [Trace.zeros(mesh, "S", DIRICHLET)], [-flux])
    return restrict(mesh, r, "B")


def d0_on_rep(system: StiffnessSystem, w) -> np.ndarray:
    """For ``w`` harmonic and zero on S, return ``D0(w|_B) - w``: harmonic, equal to
    ``D0(w|_B)`` on S and zero on B."""
    w = w.field if isinstance(w, HarmonicRep) else np.asarray(w)
    return solve_D0(system, restrict(system.mesh, w, "B")) - w


def d0star_on_rep(system: StiffnessSystem, w) -> np.ndarray:
    """For ``w`` harmonic and zero on B, return ``z`` with ``z|_S = 0`` and
    ``int grad z . grad chi = -int grad w . grad chi`` for every ``chi`` vanishing on S.

    ``z|_B`` equals the adjoint of ``D0`` applied to ``w|_S``; no normal
    derivative is formed.
    """
    w = w.field if isinstance(w, HarmonicRep) else np.asarray(w)
    mesh = system.mesh
    fixed = np.zeros(system.n, dtype=bool)
    fixed[mesh.region_nodes("S")] = True
    free = ~fixed
    z = np.zeros(system.n)
    z[free] = system.pcg(free, -(system.K @ w)[free])
    return z


def op_FDN(system: StiffnessSystem, gamma: Trace) -> Trace:
    """Dirichlet-to-Neumann map on S with zero Neumann data on B."""
    if (gamma.region, gamma.kind) != ("S", DIRICHLET):
        raise ValueError("op_FDN acts on Dirichlet traces on S")
    z = solve_mixed(system, None, [gamma])
    return _open(system, weak_normal_derivative(system, z, None, "S"))


def op_iota_D0(system, phi: Trace) -> Trace:
    """``D0`` viewed into ``L^2(S)`` (domain ``H^{1/2}(B)``, no interface constraint)."""
    return op_D0(system, phi)


def solve_idstar(system: StiffnessSystem, gamma) -> np.ndarray:
    """Harmonic ``w`` with ``d_n w = gamma`` on S, ``d_n w = -(1/|B|) int_S gamma`` on B
    and B-mean ``int_S gamma``; ``gamma`` is nodal on S (an L^2 function)."""
    mesh = system.mesh
    g = gamma.weights if isinstance(gamma, Trace) else np.asarray(gamma, dtype=float)
    MS = system.region_mass("S")
    weights_S = MS @ g
    total = float(weights_S.sum())
    ones_B = np.ones(len(mesh.region_nodes("B")))
    weights_B = -(total / system.measure("B")) * (system.region_mass("B") @ ones_B)
    return solve_neumann_mean_constrained(system, Trace.neumann("S", weights_S), Trace.neumann("B", weights_B),
                                          ("B", total))


def W0(system, gamma) -> Trace:
    return restrict(system.mesh, solve_idstar(system, gamma), "B")


def iota_d0_star(system: StiffnessSystem, gamma) -> HarmonicRep:
    """Adjoint of ``iota o D0`` from ``L^2(S)`` to ``H^{1/2}(B)``, returned as the
    ``H^{1/2}(B)`` representative of ``w|_B`` (harmonic, zero Neumann on S)."""
    w_B = W0(system, gamma)
    return h12_rep_from_field(system, solve_D0(system, w_B), "B")
