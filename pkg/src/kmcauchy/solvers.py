"""Outer regularization iterations with discrepancy-principle stopping.

Every solver records, per iterate ``k``, the residual in its native norm and
in ``L^2(S)``, the step coefficients where they exist, and optionally an
error against a known B-trace, so any stopping rule can be replayed later.
"""
from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional

import numpy as np

from .cauchy_ops import (CauchyData, d0_on_rep, d0star_on_rep, iota_d0_star, op_FDN, solve_D, solve_DD,
                         solve_N)
from .fem import DIRICHLET, StiffnessSystem, Trace, restrict, solve_mixed, weak_normal_derivative
from .sobolev import inner, l2_norm, lift_dirichlet_00, lift_neumann

STOP_DISCREPANCY = "stopped-by-discrepancy"
STOP_CAP = "cap"
STOP_STAGNATION = "stagnation"
STOP_FIXED = "fixed-count"

HISTORY_COLUMNS = ("k", "residual_native", "residual_l2", "alpha", "beta", "err_truth_b")


class DivergenceError(RuntimeError):
    pass


@dataclass(frozen=True)
class StoppingRule:
    """When to stop an outer iteration.

    ``mode`` is ``discrepancy`` (first residual below ``lam * delta``),
    ``max_iter`` (run to ``max_iter`` unless the residual reaches the floor)
    or ``fixed_count`` (exactly ``max_iter`` iterations).  With ``delta == 0``
    the discrepancy threshold becomes ``floor``, or ``1e-12`` times the
    initial residual when no floor is given.
    """

    mode: str = "discrepancy"
    delta: float = 0.0
    lam: float = 1.1
    norm: str = "l2"
    max_iter: int = 200
    floor: Optional[float] = None

    def __post_init__(self):
        if self.mode not in ("discrepancy", "max_iter", "fixed_count"):
            raise ValueError(f"unknown stopping mode {self.mode!r}")
        if not self.lam > 1:
            raise ValueError("lambda must exceed 1")
        if not self.delta >= 0:
            raise ValueError("delta must be nonnegative")
        if self.norm not in ("native", "l2"):
            raise ValueError("norm must be 'native' or 'l2'")
        if self.max_iter < 0:
            raise ValueError("max_iter must be nonnegative")

    def threshold(self, initial: float) -> float:
        if self.mode == "discrepancy" and self.delta > 0:
            return self.lam * self.delta
        return self.floor if self.floor is not None else 1e-12 * initial


@dataclass
class IterationRecord:
    k: int
    residual_native: float
    residual_l2: float
    alpha: Optional[float] = None
    beta: Optional[float] = None
    err_truth_b: Optional[float] = None


@dataclass
class IterationHistory:
    algorithm: str = ""
    records: List[IterationRecord] = field(default_factory=list)
    status: Optional[str] = None

    @property
    def stop_index(self) -> int:
        return self.records[-1].k if self.records else 0

    def residuals(self, norm: str = "l2") -> np.ndarray:
        attr = "residual_l2" if norm == "l2" else "residual_native"
        return np.array([getattr(r, attr) for r in self.records])

    def truth_errors(self) -> np.ndarray:
        return np.array([np.nan if r.err_truth_b is None else r.err_truth_b for r in self.records])

    def to_table(self) -> str:
        out = io.StringIO()
        out.write(",".join(HISTORY_COLUMNS) + "\n")
        for r in self.records:
            vals = [str(r.k)] + ["" if v is None else repr(float(v)) for v in
                                 (r.residual_native, r.residual_l2, r.alpha, r.beta, r.err_truth_b)]
            out.write(",".join(vals) + "\n")
        return out.getvalue()

    def write(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.to_table())


def discrepancy_stop(residuals, delta: float, lam: float, floor: Optional[float] = None) -> Optional[int]:
    """Index of the first residual below ``lam * delta`` (or the floor when ``delta == 0``)."""
    residuals = list(residuals)
    if not residuals:
        return None
    rule = StoppingRule(delta=delta, lam=lam, floor=floor)
    thr = rule.threshold(residuals[0])
    for k, r in enumerate(residuals):
        if r < thr:
            return k
    return None


class _Monitor:
    """Records iterates and applies the stopping rule."""

    def __init__(self, name, stop: StoppingRule, truth):
        self.history = IterationHistory(name)
        self.stop = stop
        self.truth = truth
        self.thr = None

    def __call__(self, k, native, l2, trace_b=None, alpha=None, beta=None) -> bool:
        if not (math.isfinite(native) and math.isfinite(l2)):
            raise DivergenceError(f"{self.history.algorithm}: non-finite residual at iteration {k}")
        err = self.truth(trace_b) if (self.truth is not None and trace_b is not None) else None
        self.history.records.append(IterationRecord(k, native, l2, alpha, beta, err))
        r = l2 if self.stop.norm == "l2" else native
        if self.thr is None:
            self.thr = self.stop.threshold(r)
        if self.stop.mode == "fixed_count":
            if k >= self.stop.max_iter:
                self.history.status = STOP_FIXED
                return True
            return False
        if r < self.thr:
            self.history.status = STOP_DISCREPANCY
            return True
        if k >= self.stop.max_iter:
            self.history.status = STOP_CAP
            return True
        return False

    def stagnate(self):
        self.history.status = STOP_STAGNATION


def neumann_l2_norm(system: StiffnessSystem, g: Trace) -> float:
    """L^2 norm of the boundary function whose weak form has weights ``g``."""
    key = ("mass_inv", g.region)
    if key not in system._reduced:
        system._reduced[key] = np.linalg.inv(system.region_mass(g.region))
    return float(np.sqrt(max(g.weights @ system._reduced[key] @ g.weights, 0.0)))


def _open(system, tr):
    return tr.without_interface(system.mesh)


# --- Neumann formulation -----------------------------------------------------------------

def landweber_neumann(system: StiffnessSystem, data: CauchyData, psi0: Trace, a: float = 1.0,
                      stop: StoppingRule = StoppingRule(norm="native"), truth: Optional[Callable] = None):
    """Landweber iteration ``psi <- psi + a N0*(tau - N(psi))`` on Neumann data on B."""
    if not 0 < a <= 1:
        raise ValueError("relaxation a must lie in (0, 1]")
    mon = _Monitor("landweber-neumann", stop, truth)
    psi = _open(system, psi0)
    k = 0
    while True:
        v = solve_N(system, data, psi)
        rho = _open(system, data.tau - weak_normal_derivative(system, v, data.f, "S"))
        q = lift_neumann(system, rho).field
        native = math.sqrt(max(system.energy(q), 0.0))
        if mon(k, native, neumann_l2_norm(system, rho), psi):
            return psi, mon.history
        psi = psi + a * _open(system, weak_normal_derivative(system, q, None, "B"))
        k += 1


def km_neumann(system: StiffnessSystem, data: CauchyData, psi0: Trace,
               stop: StoppingRule = StoppingRule(norm="native"), truth: Optional[Callable] = None):
    """Alternating iteration ``psi <- KM(psi)`` computed by the two mixed solves."""
    mon = _Monitor("km-neumann", stop, truth)
    psi = _open(system, psi0)
    k = 0
    while True:
        v = solve_N(system, data, psi)
        rho = _open(system, data.tau - weak_normal_derivative(system, v, data.f, "S"))
        native = lift_neumann(system, rho).norm()
        if mon(k, native, neumann_l2_norm(system, rho), psi):
            return psi, mon.history
        w = solve_D(system, data, restrict(system.mesh, v, "B"))
        psi = _open(system, weak_normal_derivative(system, w, data.f, "B"))
        k += 1


# --- Dirichlet formulation ---------------------------------------------------------------

def landweber_dirichlet(system: StiffnessSystem, data: CauchyData, phi_hat: Trace, eta0: Trace,
                        stop: StoppingRule = StoppingRule(norm="native"), a: float = 1.0,
                        truth: Optional[Callable] = None):
    """Landweber iteration on ``D0(eta) = sigma - D(phi_hat)`` in ``H^{1/2}_{00}``.

    Returns the B-trace ``phi_hat + eta_k`` and the history.
    """
    mesh = system.mesh
    if not eta0.zero_at_interface(mesh, atol=1e-12 * max(1.0, np.abs(eta0.weights).max(initial=0.0))):
        raise ValueError("eta0 must vanish at the interface nodes")
    if not 0 < a <= 1:
        raise ValueError("relaxation a must lie in (0, 1]")
    mon = _Monitor("landweber-dirichlet", stop, truth)
    eta = eta0.without_interface(mesh)
    zero_S = Trace.zeros(mesh, "S", DIRICHLET)
    k = 0
    while True:
        phi = phi_hat + eta
        w = solve_D(system, data, phi)
        res = (data.sigma - restrict(mesh, w, "S")).without_interface(mesh)
        q = lift_dirichlet_00(system, res).field
        native = math.sqrt(max(system.energy(q), 0.0))
        if mon(k, native, l2_norm(system, res), phi):
            return phi, mon.history
        flux = weak_normal_derivative(system, q, None, "B")
        r = solve_mixed(system, None, [zero_S], [-flux])
        eta = eta + a * restrict(mesh, r, "B")
        k += 1


def km_dirichlet(system: StiffnessSystem, data: CauchyData, phi0: Trace,
                 stop: StoppingRule = StoppingRule(), truth: Optional[Callable] = None, native: bool = True):
    """Alternating iteration ``phi <- MK(phi)`` on Dirichlet data on B.

    The residual of iterate ``k`` is ``sigma - D(phi_k)``; its native norm is
    the ``H^{1/2}_{00}(S)`` norm of the part vanishing at the interface.
    """
    mesh = system.mesh
    mon = _Monitor("km", stop, truth)
    phi = phi0
    k = 0
    while True:
        w = solve_D(system, data, phi)
        res = data.sigma - restrict(mesh, w, "S")
        nat = lift_dirichlet_00(system, res.without_interface(mesh)).norm() if native else float("nan")
        l2 = l2_norm(system, res)
        if mon(k, nat if native else l2, l2, phi):
            return phi, mon.history
        psi = weak_normal_derivative(system, w, data.f, "B")
        phi = restrict(mesh, solve_N(system, data, psi), "B")
        k += 1


def cg_dirichlet_h12(system: StiffnessSystem, data: CauchyData, u0: Optional[np.ndarray] = None,
                     phi0: Optional[Trace] = None, stop: StoppingRule = StoppingRule(),
                     truth: Optional[Callable] = None):
    """Conjugate gradients on the ``H^{1/2}_{00}`` normal equations, in harmonic-field form.

    ``u0`` must solve the Dirichlet-Dirichlet problem with ``sigma`` on S; when
    only ``phi0`` is given it is built from it (``sigma`` is used at the
    interface).  Returns ``D(u_k|_B)`` and the history.
    """
    mesh = system.mesh
    if u0 is None:
        if phi0 is None:
            phi0 = Trace.zeros(mesh, "B", DIRICHLET)
        u0 = solve_DD(system, data, phi0)
    mon = _Monitor("cg-h12", stop, truth)
    u = np.array(u0, dtype=float)
    r = u - solve_D(system, data, restrict(mesh, u, "B"))
    q = d0star_on_rep(system, r)
    qq = system.energy(q)
    d = q.copy()
    alpha = beta = None
    k = 0
    while True:
        native = math.sqrt(max(system.energy(r), 0.0))
        if mon(k, native, l2_norm(system, restrict(mesh, r, "S")), restrict(mesh, u, "B"), alpha, beta):
            break
        s = d0_on_rep(system, d)
        ss = system.energy(s)
        if ss < 1e-28 or qq <= 0.0:
            mon.stagnate()
            break
        alpha = qq / ss
        u = u + alpha * d
        r = r - alpha * s
        q = d0star_on_rep(system, r)
        qq_new = system.energy(q)
        beta = qq_new / qq
        d = q + beta * d
        qq = qq_new
        k += 1
    return solve_D(system, data, restrict(mesh, u, "B")), mon.history


def cg_dirichlet_l2(system: StiffnessSystem, data: CauchyData, phi0: Optional[Trace] = None,
                    stop: StoppingRule = StoppingRule(), truth: Optional[Callable] = None):
    """Conjugate gradients for ``D(phi) = sigma`` from ``H^{1/2}(B)`` into ``L^2(S)``.

    Domain elements are harmonic fields with zero Neumann data on S; their
    norm includes the B-mean term.  Returns ``u_k`` and the history.
    """
    mesh = system.mesh
    MS = system.region_mass("S")
    if phi0 is None:
        phi0 = Trace.zeros(mesh, "B", DIRICHLET)
    mon = _Monitor("cg-l2", stop, truth)
    u = solve_D(system, data, phi0)
    r = data.sigma.weights - u[mesh.region_nodes("S")]
    q = iota_d0_star(system, r)
    qq = inner(q, q)
    d = q
    alpha = beta = None
    k = 0
    while True:
        l2 = float(np.sqrt(max(r @ MS @ r, 0.0)))
        if mon(k, l2, l2, restrict(mesh, u, "B"), alpha, beta):
            break
        dS = d.field[mesh.region_nodes("S")]
        dd = float(dS @ MS @ dS)
        if dd < 1e-28 or qq <= 0.0:
            mon.stagnate()
            break
        alpha = qq / dd
        u = u + alpha * d.field
        r = r - alpha * dS
        q = iota_d0_star(system, r)
        qq_new = inner(q, q)
        beta = qq_new / qq
        d = q + beta * d
        qq = qq_new
        k += 1
    return u, mon.history


# --- data-error bookkeeping ----------------------------------------------------------------

def rewrite_sigma_error(system: StiffnessSystem, sigma_eps: Trace, sigma: Trace, delta: float = 0.0,
                        lam: float = 1.1):
    """Dirichlet-data error expressed as Neumann-data error.

    Returns ``(tau_eps, level)`` with ``tau_eps = F_DN(sigma_eps - sigma)`` and
    the stopping level ``lam * (delta + ||tau_eps||_{H^{-1/2}(S)})``.
    """
    tau_eps = op_FDN(system, sigma_eps - sigma)
    return tau_eps, lam * (delta + lift_neumann(system, tau_eps).norm())


def reduce_dirichlet_noise(system: StiffnessSystem, data: CauchyData, sigma_delta: Trace):
    """Move noisy Dirichlet data into ``H^{1/2}_{00}(S)``.

    Solves ``u`` (harmonic, ``u = sigma_delta`` on S, zero Neumann on B) and
    ``v`` (harmonic, ``d_n v = d_n u`` on S, ``v = 0`` on B).  A solution ``w`` of
    the returned problem (Dirichlet data ``v|_S``) gives ``u - v + w`` for the
    original noisy problem.  Returns ``(reduced_data, u, v)``.
    """
    mesh = system.mesh
    u = solve_mixed(system, None, [sigma_delta])
    flux = weak_normal_derivative(system, u, None, "S")
    v = solve_mixed(system, None, [Trace.zeros(mesh, "B", DIRICHLET)], [flux])
    reduced = CauchyData(restrict(mesh, v, "S"), data.tau, data.f)
    return reduced, u, v


def reduced_noise_map(system: StiffnessSystem):
    """Linear map ``sigma_delta -> v|_S`` of :func:`reduce_dirichlet_noise`."""
    hom = CauchyData.homogeneous(system.mesh)
    return lambda sigma_delta: reduce_dirichlet_noise(system, hom, sigma_delta)[0].sigma


# --- operator norms ----------------------------------------------------------------------------

def power_norm(op_apply: Callable, op_adjoint: Callable, inner_product: Callable, x0, iters: int = 100,
               tol: float = 1e-10):
    """Largest eigenvalue of ``A* A`` by power iteration with Rayleigh quotients.

    ``inner_product`` is the domain inner product in which ``A*`` is the
    adjoint.  Returns ``(lambda_max, residual)`` where ``residual`` is
    ``||A*A x - lambda x|| / ||x||`` at the final iterate.
    """
    x = x0
    nx = math.sqrt(inner_product(x, x))
    if nx == 0:
        raise ValueError("power iteration needs a nonzero start vector")
    x = x * (1.0 / nx)
    lam_old = None
    lam = 0.0
    resid = float("inf")
    for _ in range(iters):
        y = op_adjoint(op_apply(x))
        lam = inner_product(y, x)
        diff = y - x * lam
        resid = math.sqrt(max(inner_product(diff, diff), 0.0))
        ny = math.sqrt(max(inner_product(y, y), 0.0))
        if ny == 0:
            return 0.0, 0.0
        if lam_old is not None and abs(lam - lam_old) <= tol * abs(lam):
            break
        lam_old = lam
        x = y * (1.0 / ny)
    return float(lam), float(resid)
