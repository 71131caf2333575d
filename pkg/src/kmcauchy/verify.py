"""Numerical checks of the operator identities behind the iterations.

Each check returns a :class:`CheckResult` whose ``value`` is the worst
relative defect seen and ``passed`` compares it with ``tol``.  The checks are
deterministic: random traces come from ``numpy.random.default_rng(seed)``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Dict, Optional

import numpy as np

from .cauchy_ops import (CauchyData, adjoint_D0, adjoint_N0, iota_d0_star, op_D, op_D0, op_FDN, op_KM, op_KM0,
                         op_MK, op_MK0, op_N, op_N0, phi_hat)
from .experiment import ExperimentConfig, prepare
from .fem import DIRICHLET, NEUMANN, StiffnessSystem, Trace, VolumeLoad, assemble
from .mesh import build_parabola_domain, build_unit_square
from .sobolev import inner, l2_inner, lift_dirichlet_00, lift_h12, lift_neumann
from .solvers import StoppingRule, km_dirichlet, km_neumann, landweber_dirichlet, landweber_neumann, power_norm


@dataclass
class CheckResult:
    name: str
    value: float
    tol: float
    detail: str = ""

    @property
    def passed(self) -> bool:
        return bool(self.value <= self.tol)

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'} {self.name}: {self.value:.3e} (tol {self.tol:.1e}) {self.detail}".rstrip()


def default_systems(rtol: float = 1e-12, which=("square", "parabola")) -> Dict[str, StiffnessSystem]:
    """Unit square (h = 0.1, S on top) and parabola domain (d = 0.5, h = 0.05)."""
    build = {"square": lambda: build_unit_square(0.1), "parabola": lambda: build_parabola_domain(0.5, 0.05)}
    return {name: assemble(build[name](), rtol=rtol) for name in which}


def _rel(a: float, b: float) -> float:
    scale = max(abs(a), abs(b))
    return abs(a - b) / scale if scale > 0 else 0.0


def random_trace(system: StiffnessSystem, region: str, kind: str, rng, open_: bool = True) -> Trace:
    tr = Trace(region, kind, rng.standard_normal(len(system.mesh.region_nodes(region))))
    return tr.without_interface(system.mesh) if open_ else tr


def random_data(system: StiffnessSystem, rng) -> CauchyData:
    """Inhomogeneous data with nonzero ``f``, ``sigma`` and ``tau``."""
    f = VolumeLoad(nodal=rng.standard_normal(system.n))
    return CauchyData(random_trace(system, "S", DIRICHLET, rng, open_=False),
                      random_trace(system, "S", NEUMANN, rng), f)


def _neg_norm(system, tr: Trace) -> float:
    return lift_neumann(system, tr).norm()


def _h00_norm(system, tr: Trace) -> float:
    return lift_dirichlet_00(system, tr).norm()


def check_adjointness(systems=None, seeds=20, tol=1e-8) -> CheckResult:
    """``<A x, y> = <x, A* y>`` for ``N0``, ``D0`` and ``iota o D0``."""
    systems = systems or default_systems()
    worst = {"N0": 0.0, "D0": 0.0, "iD0": 0.0}
    for sys_ in systems.values():
        for seed in range(seeds):
            rng = np.random.default_rng(seed)
            psi = random_trace(sys_, "B", NEUMANN, rng)
            xi = random_trace(sys_, "S", NEUMANN, rng)
            lhs = inner(lift_neumann(sys_, op_N0(sys_, psi)), lift_neumann(sys_, xi))
            rhs = inner(lift_neumann(sys_, psi), lift_neumann(sys_, adjoint_N0(sys_, xi)))
            worst["N0"] = max(worst["N0"], _rel(lhs, rhs))

            phi = random_trace(sys_, "B", DIRICHLET, rng)
            gam = random_trace(sys_, "S", DIRICHLET, rng)
            lhs = inner(lift_dirichlet_00(sys_, op_D0(sys_, phi)), lift_dirichlet_00(sys_, gam))
            rhs = inner(lift_dirichlet_00(sys_, phi), lift_dirichlet_00(sys_, adjoint_D0(sys_, gam)))
            worst["D0"] = max(worst["D0"], _rel(lhs, rhs))

            phi = random_trace(sys_, "B", DIRICHLET, rng, open_=False)
            gam = random_trace(sys_, "S", DIRICHLET, rng, open_=False)
            lhs = l2_inner(sys_, op_D0(sys_, phi), gam)
            rhs = inner(lift_h12(sys_, phi), iota_d0_star(sys_, gam.weights))
            worst["iD0"] = max(worst["iD0"], _rel(lhs, rhs))
    detail = " ".join(f"{k}={v:.1e}" for k, v in worst.items())
    return CheckResult("adjointness", max(worst.values()), tol, detail)


def check_normal_equations(systems=None, seeds=20, tol=1e-8) -> CheckResult:
    """``N0* N0 psi = psi - KM0 psi`` and ``D0* D0 phi = phi - MK0 phi`` in native norms."""
    systems = systems or default_systems()
    worst_n = worst_d = 0.0
    for sys_ in systems.values():
        for seed in range(seeds):
            rng = np.random.default_rng(1000 + seed)
            psi = random_trace(sys_, "B", NEUMANN, rng)
            diff = adjoint_N0(sys_, op_N0(sys_, psi)) - (psi - op_KM0(sys_, psi))
            worst_n = max(worst_n, _neg_norm(sys_, diff) / _neg_norm(sys_, psi))

            phi = random_trace(sys_, "B", DIRICHLET, rng)
            diff = adjoint_D0(sys_, op_D0(sys_, phi)) - (phi - op_MK0(sys_, phi))
            worst_d = max(worst_d, _h00_norm(sys_, diff.without_interface(sys_.mesh)) / _h00_norm(sys_, phi))
    return CheckResult("normal-equations", max(worst_n, worst_d), tol, f"N0={worst_n:.1e} D0={worst_d:.1e}")


def _rel_norm(diff_norm, a_norm, b_norm):
    scale = max(a_norm, b_norm)
    return diff_norm / scale if scale > 0 else 0.0


def check_affine(systems=None, seeds=5, tol=1e-8) -> CheckResult:
    """``N0*(tau - N(0)) = KM(0)`` and ``D0*(sigma - D(phi)) = MK(phi) - phi``."""
    systems = systems or default_systems()
    worst_n = worst_d = 0.0
    for sys_ in systems.values():
        mesh = sys_.mesh
        for seed in range(seeds):
            rng = np.random.default_rng(2000 + seed)
            data = random_data(sys_, rng)
            zero = Trace.zeros(mesh, "B", NEUMANN)
            lhs = adjoint_N0(sys_, data.tau - op_N(sys_, data, zero))
            rhs = op_KM(sys_, data, zero)
            worst_n = max(worst_n, _rel_norm(_neg_norm(sys_, lhs - rhs), _neg_norm(sys_, lhs), _neg_norm(sys_, rhs)))

            # phi must agree with sigma at the interface so the residual lies in H^{1/2}_00(S)
            phi = random_trace(sys_, "B", DIRICHLET, rng, open_=False)
            w = phi.weights.copy()
            mask = phi.interface_mask(mesh)
            sig_at = dict(zip(mesh.region_nodes("S"), data.sigma.weights))
            w[mask] = [sig_at[n] for n in mesh.region_nodes("B")[mask]]
            phi = Trace.dirichlet("B", w)
            res = (data.sigma - op_D(sys_, data, phi)).without_interface(mesh)
            lhs = adjoint_D0(sys_, res)
            rhs = (op_MK(sys_, data, phi) - phi).without_interface(mesh)
            worst_d = max(worst_d, _rel_norm(_h00_norm(sys_, (lhs - rhs).without_interface(mesh)),
                                             _h00_norm(sys_, lhs), _h00_norm(sys_, rhs)))
    return CheckResult("affine-identities", max(worst_n, worst_d), tol, f"N={worst_n:.1e} D={worst_d:.1e}")


def check_route_equality(systems=None, steps=5, tol=1e-8, config: Optional[ExperimentConfig] = None) -> CheckResult:
    """Landweber with ``a = 1`` reproduces the alternating iterates on the noisy synthetic data.

    The data always live on the parabola domain; ``systems`` only supplies the
    solver tolerance.
    """
    rtol = min(s.rtol for s in systems.values()) if systems else 1e-12
    config = config or ExperimentConfig(h=0.05, tol=rtol)
    system, data, _, _ = prepare(config)
    mesh = system.mesh
    fixed = lambda k: StoppingRule("fixed_count", max_iter=k)  # noqa: E731
    worst_n = worst_d = 0.0
    # Neumann form from psi0 = 0
    psi0 = Trace.zeros(mesh, "B", NEUMANN)
    ph = phi_hat(system, data)
    for k in range(1, steps + 1):
        a, _ = landweber_neumann(system, data, psi0, a=1.0, stop=fixed(k))
        b, _ = km_neumann(system, data, psi0, stop=fixed(k))
        worst_n = max(worst_n, _rel_norm(_neg_norm(system, a - b), _neg_norm(system, a), _neg_norm(system, b)))
        # Dirichlet form from phi_hat
        a, _ = landweber_dirichlet(system, data, ph, Trace.zeros(mesh, "B", DIRICHLET), stop=fixed(k))
        b, _ = km_dirichlet(system, data, ph, stop=fixed(k))
        dn = float(np.linalg.norm((a - b).weights))
        worst_d = max(worst_d, dn / max(np.linalg.norm(a.weights), np.linalg.norm(b.weights)))
    return CheckResult("route-equality", max(worst_n, worst_d), tol, f"N={worst_n:.1e} D={worst_d:.1e}")


def check_norm_bounds(systems=None, tol=1e-6, iters=60) -> CheckResult:
    """Power iteration on ``N0* N0`` and ``D0* D0``: largest eigenvalue at most one."""
    systems = systems or default_systems()
    worst = 0.0
    parts = []
    for name, sys_ in systems.items():
        rng = np.random.default_rng(3000)
        ipn = lambda x, y, s=sys_: inner(lift_neumann(s, x), lift_neumann(s, y))  # noqa: E731
        lam_n, _ = power_norm(lambda x, s=sys_: op_N0(s, x), lambda y, s=sys_: adjoint_N0(s, y), ipn,
                              random_trace(sys_, "B", NEUMANN, rng), iters=iters)
        ipd = lambda x, y, s=sys_: inner(lift_dirichlet_00(s, x), lift_dirichlet_00(s, y))  # noqa: E731
        lam_d, _ = power_norm(lambda x, s=sys_: op_D0(s, x),
                              lambda y, s=sys_: adjoint_D0(s, y).without_interface(s.mesh), ipd,
                              random_trace(sys_, "B", DIRICHLET, rng), iters=iters)
        worst = max(worst, lam_n, lam_d)
        parts.append(f"{name}: N0={lam_n:.6f} D0={lam_d:.6f}")
    # value reported as excess over one
    return CheckResult("norm-bounds", max(worst - 1.0, 0.0), tol, "; ".join(parts))


def check_km0_symmetry(systems=None, seeds=20, tol=1e-8) -> CheckResult:
    """``<KM0 psi, chi> = <psi, KM0 chi>`` in ``H^{-1/2}(B)``."""
    systems = systems or default_systems()
    worst = 0.0
    for sys_ in systems.values():
        for seed in range(seeds):
            rng = np.random.default_rng(4000 + seed)
            psi = random_trace(sys_, "B", NEUMANN, rng)
            chi = random_trace(sys_, "B", NEUMANN, rng)
            lhs = inner(lift_neumann(sys_, op_KM0(sys_, psi)), lift_neumann(sys_, chi))
            rhs = inner(lift_neumann(sys_, psi), lift_neumann(sys_, op_KM0(sys_, chi)))
            worst = max(worst, _rel(lhs, rhs))
    return CheckResult("km0-symmetry", worst, tol)


def _sigma_shift_defect(systems, seeds, sign) -> float:
    worst = 0.0
    for sys_ in systems.values():
        for seed in range(seeds):
            rng = np.random.default_rng(5000 + seed)
            data = random_data(sys_, rng)
            sigma_eps = data.sigma + random_trace(sys_, "S", DIRICHLET, rng, open_=False) * 0.1
            psi = random_trace(sys_, "B", NEUMANN, rng)
            lhs = op_N(sys_, data, psi)
            shift = op_FDN(sys_, sign * (sigma_eps - data.sigma))
            rhs = op_N(sys_, data.with_sigma(sigma_eps), psi) + shift
            worst = max(worst, _rel_norm(_neg_norm(sys_, lhs - rhs), _neg_norm(sys_, lhs), _neg_norm(sys_, rhs)))
    return worst


def check_sigma_shift(systems=None, seeds=5, tol=1e-9) -> CheckResult:
    """``N(psi) = N^eps(psi) + F_DN(sigma^eps - sigma)``, the identity as usually quoted."""
    systems = systems or default_systems()
    return CheckResult("sigma-shift", _sigma_shift_defect(systems, seeds, +1.0), tol)


def check_sigma_shift_corrected(systems=None, seeds=5, tol=1e-9) -> CheckResult:
    """``N(psi) = N^eps(psi) + F_DN(sigma - sigma^eps)``: the sign that linearity gives."""
    systems = systems or default_systems()
    return CheckResult("sigma-shift-corrected", _sigma_shift_defect(systems, seeds, -1.0), tol)


CHECKS: Dict[str, Callable[..., CheckResult]] = {
    "adjointness": check_adjointness,
    "normal-equations": check_normal_equations,
    "affine-identities": check_affine,
    "route-equality": check_route_equality,
    "norm-bounds": check_norm_bounds,
    "km0-symmetry": check_km0_symmetry,
    "sigma-shift": check_sigma_shift,
    "sigma-shift-corrected": check_sigma_shift_corrected,
}


# the suite run by default; the sigma-shift pair is available by name
DEFAULT_SUITE = ("adjointness", "normal-equations", "affine-identities", "route-equality", "norm-bounds",
                 "km0-symmetry")


def run_check(name: str, systems=None, tol: Optional[float] = None) -> CheckResult:
    """Run one named check; ``tol`` overrides its pass threshold."""
    if name not in CHECKS:
        raise KeyError(name)
    fn = CHECKS[name]
    kwargs = {} if tol is None else {"tol": tol}
    return fn(systems=systems, **kwargs)
