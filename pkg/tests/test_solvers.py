import math

import numpy as np
import pytest
import scipy.linalg

from kmcauchy.cauchy_ops import (CauchyData, adjoint_D0, op_D, op_FDN, op_KM, op_MK, op_N, phi_hat, solve_D,
                                 solve_DD)
from kmcauchy.experiment import ExperimentConfig, make_synthetic, prepare
from kmcauchy.fem import DIRICHLET, NEUMANN, Trace, assemble, restrict, solve_mixed
from kmcauchy.mesh import build_parabola_domain
from kmcauchy.sobolev import inner, l2_norm, lift_dirichlet_00, lift_h12, lift_neumann, norm
from kmcauchy.solvers import (HISTORY_COLUMNS, STOP_CAP, STOP_DISCREPANCY, STOP_FIXED, DivergenceError,
                              IterationHistory, IterationRecord, StoppingRule, _Monitor, cg_dirichlet_h12,
                              cg_dirichlet_l2, discrepancy_stop, km_dirichlet, km_neumann, landweber_dirichlet,
                              landweber_neumann, power_norm, reduce_dirichlet_noise, reduced_noise_map,
                              rewrite_sigma_error)

from test_cauchy_ops import _rand, manufactured


@pytest.fixture(scope="module")
def synthetic():
    """Exact and noisy parabola data at h = 0.1."""
    cfg = ExperimentConfig(h=0.1)
    system = assemble(build_parabola_domain(cfg.d, cfg.h))
    exact, truth = make_synthetic(cfg, system)
    _, noisy, _, delta = prepare(cfg, system)
    return system, exact, noisy, truth, delta


def fixed(k):
    return StoppingRule("fixed_count", max_iter=k)


# --- stopping rules and histories ------------------------------------------------------------

def test_discrepancy_stop_examples():
    assert discrepancy_stop([5, 3, 1.9], delta=1, lam=2) == 2
    assert discrepancy_stop([5, 3, 2.0], delta=1, lam=2) is None
    assert discrepancy_stop([1.0, 0.5, 1e-13], delta=0, lam=1.1) == 2
    assert discrepancy_stop([1.0, 0.5], delta=0, lam=1.1, floor=0.6) == 1
    assert discrepancy_stop([], delta=1, lam=2) is None


@pytest.mark.parametrize("kwargs", [dict(lam=1.0), dict(delta=-1), dict(mode="sometimes"), dict(norm="h1"),
                                    dict(max_iter=-1)])
def test_stopping_rule_validation(kwargs):
    with pytest.raises(ValueError):
        StoppingRule(**kwargs)


def test_history_table():
    h = IterationHistory("x", [IterationRecord(0, 1.0, 0.5), IterationRecord(1, 0.25, 0.125, 0.1, None, 2.0)])
    lines = h.to_table().splitlines()
    assert lines[0] == ",".join(HISTORY_COLUMNS)
    assert lines[1] == "0,1.0,0.5,,,"
    assert lines[2] == "1,0.25,0.125,0.1,,2.0"
    assert h.stop_index == 1
    np.testing.assert_array_equal(h.residuals("native"), [1.0, 0.25])


def test_monitor_rejects_nonfinite():
    mon = _Monitor("t", StoppingRule(), None)
    with pytest.raises(DivergenceError):
        mon(0, float("nan"), 1.0)


# --- Neumann form ---------------------------------------------------------------------------------

def test_landweber_neumann_fixed_point(parabola_coarse, rng):
    _, data, psi, _ = manufactured(parabola_coarse, rng)
    scale = norm(lift_neumann(parabola_coarse, psi))
    out, hist = landweber_neumann(parabola_coarse, data, psi,
                                  stop=StoppingRule(delta=0, norm="native", floor=1e-8 * scale))
    assert hist.stop_index == 0 and hist.status == STOP_DISCREPANCY
    assert np.array_equal(out.weights, psi.weights)


def test_landweber_neumann_first_step_is_km(parabola_coarse, rng):
    _, data, _, _ = manufactured(parabola_coarse, rng)
    psi0 = _rand(parabola_coarse, "B", NEUMANN, rng)
    one, hist = landweber_neumann(parabola_coarse, data, psi0, a=1.0, stop=fixed(1))
    ref = op_KM(parabola_coarse, data, psi0)
    assert hist.status == STOP_FIXED
    diff = norm(lift_neumann(parabola_coarse, one - ref))
    assert diff <= 1e-8 * norm(lift_neumann(parabola_coarse, ref))


@pytest.mark.parametrize("a", [1.0, 0.5])
def test_landweber_neumann_monotone_exact(synthetic, a):
    system, exact, *_ = synthetic
    _, hist = landweber_neumann(system, exact, Trace.zeros(system.mesh, "B", NEUMANN), a=a, stop=fixed(50))
    r = hist.residuals("native")
    assert len(r) == 51
    assert np.all(np.diff(r) <= 1e-12 * r[0])


def test_landweber_neumann_rejects_relaxation(parabola_coarse):
    hom = CauchyData.homogeneous(parabola_coarse.mesh)
    with pytest.raises(ValueError):
        landweber_neumann(parabola_coarse, hom, Trace.zeros(parabola_coarse.mesh, "B", NEUMANN), a=1.5)


def test_km_neumann_zero_data(parabola_coarse):
    mesh = parabola_coarse.mesh
    out, hist = km_neumann(parabola_coarse, CauchyData.homogeneous(mesh), Trace.zeros(mesh, "B", NEUMANN),
                           stop=fixed(3))
    assert np.all(out.weights == 0) and hist.stop_index == 3


def test_km_neumann_fixed_point(parabola_coarse, rng):
    _, data, psi, _ = manufactured(parabola_coarse, rng)
    out, _ = km_neumann(parabola_coarse, data, psi, stop=fixed(2))
    assert norm(lift_neumann(parabola_coarse, out - psi)) <= 1e-8 * norm(lift_neumann(parabola_coarse, psi))


# --- Dirichlet form -----------------------------------------------------------------------------

def test_landweber_dirichlet_zero_correction(parabola_coarse, rng):
    mesh = parabola_coarse.mesh
    ph = _rand(parabola_coarse, "B", DIRICHLET, rng)
    sigma = op_D(parabola_coarse, CauchyData.homogeneous(mesh), ph)
    data = CauchyData(sigma, Trace.zeros(mesh, "S", NEUMANN))
    out, hist = landweber_dirichlet(parabola_coarse, data, ph, Trace.zeros(mesh, "B", DIRICHLET), stop=fixed(4))
    np.testing.assert_allclose(out.weights, ph.weights, atol=1e-10)
    assert max(hist.residuals("native")) < 1e-10


def test_landweber_dirichlet_route_k1(synthetic, rng):
    system, _, noisy, _, _ = synthetic
    ph = phi_hat(system, noisy)
    eta = _rand(system, "B", DIRICHLET, rng) * 0.1
    one, _ = landweber_dirichlet(system, noisy, ph, eta, stop=fixed(1))
    ref = op_MK(system, noisy, ph + eta)
    assert np.linalg.norm((one - ref).weights) <= 1e-8 * np.linalg.norm(ref.weights)


def test_landweber_dirichlet_requires_open_eta(synthetic):
    system, _, noisy, _, _ = synthetic
    bad = Trace.dirichlet("B", np.ones(len(system.mesh.region_nodes("B"))))
    with pytest.raises(ValueError):
        landweber_dirichlet(system, noisy, phi_hat(system, noisy), bad)


def test_landweber_dirichlet_converges_exact(parabola_coarse):
    # discrete trace data of the harmonic function exp(x) cos(y)
    s = parabola_coarse
    mesh = s.mesh
    g = np.exp(mesh.vertices[:, 0]) * np.cos(mesh.vertices[:, 1])
    u = solve_mixed(s, None, [restrict(mesh, g, "S"), restrict(mesh, g, "B")])
    from kmcauchy.fem import weak_normal_derivative
    data = CauchyData(restrict(mesh, u, "S"), weak_normal_derivative(s, u, None, "S").without_interface(mesh))
    true_b = restrict(mesh, u, "B")
    err = lambda tr: lift_dirichlet_00(s, (tr - true_b).without_interface(mesh)).norm()  # noqa: E731
    ph = phi_hat(s, data)
    out, _ = landweber_dirichlet(s, data, ph, Trace.zeros(mesh, "B", DIRICHLET), stop=fixed(200))
    assert err(out) <= err(ph) / 10


def test_km_dirichlet_fixed_point(parabola_coarse, rng):
    _, data, _, phi = manufactured(parabola_coarse, rng)
    out, hist = km_dirichlet(parabola_coarse, data, phi, stop=StoppingRule(delta=0, floor=1e-9))
    assert hist.stop_index == 0
    assert np.array_equal(out.weights, phi.weights)


# --- conjugate gradients ----------------------------------------------------------------------------

def test_cg_h12_exact_start(parabola_coarse, rng):
    u, data, _, phi = manufactured(parabola_coarse, rng)
    out, hist = cg_dirichlet_h12(parabola_coarse, data, u0=u, stop=StoppingRule(delta=0, norm="native", floor=1e-8))
    assert hist.stop_index == 0
    assert hist.records[0].residual_native ** 2 <= 1e-16 * max(1.0, parabola_coarse.energy(u))
    assert np.abs(out - u).max() <= 1e-9 * np.abs(u).max()


def test_cg_h12_first_direction_is_landweber(synthetic, rng):
    system, _, noisy, _, _ = synthetic
    mesh = system.mesh
    ph = phi_hat(system, noisy)
    # one CG step from u0 equals a Landweber step with an exact line search; compare directions
    u0 = solve_DD(system, noisy, ph)
    from kmcauchy.cauchy_ops import d0star_on_rep
    r0 = u0 - solve_D(system, noisy, restrict(mesh, u0, "B"))
    q0 = d0star_on_rep(system, r0)
    res = (noisy.sigma - op_D(system, noisy, ph)).without_interface(mesh)
    lw = adjoint_D0(system, res)
    np.testing.assert_allclose(q0[mesh.region_nodes("B")], lw.weights, atol=1e-8 * np.abs(lw.weights).max())
    _, hist = cg_dirichlet_h12(system, noisy, u0=u0, stop=fixed(1))
    assert hist.records[1].alpha > 0


def test_cg_l2_exact_start(parabola_coarse, rng):
    u, data, _, phi = manufactured(parabola_coarse, rng)
    out, hist = cg_dirichlet_l2(parabola_coarse, data, phi0=phi, stop=StoppingRule(delta=0, floor=1e-9))
    assert hist.stop_index == 0
    assert np.abs(out - u).max() <= 1e-9 * np.abs(u).max()


def test_cg_l2_recurred_residual(synthetic):
    system, _, noisy, _, _ = synthetic
    mesh = system.mesh
    for k in range(1, 11):
        u, hist = cg_dirichlet_l2(system, noisy, stop=fixed(k))
        if hist.stop_index < k:
            break
        recomputed = l2_norm(system, noisy.sigma - restrict(mesh, u, "S"))
        assert abs(recomputed - hist.records[-1].residual_l2) <= 1e-9 * hist.records[0].residual_l2


@pytest.mark.parametrize("alg", ["landweber", "km", "cg-h12", "cg-l2"])
def test_exact_data_residuals_nonincreasing(synthetic, alg):
    system, exact, _, _, _ = synthetic
    mesh = system.mesh
    zero = Trace.zeros(mesh, "B", DIRICHLET)
    stop = fixed(25)
    if alg == "landweber":
        ph = phi_hat(system, exact)
        _, hist = landweber_dirichlet(system, exact, ph, zero, stop=stop)
    elif alg == "km":
        _, hist = km_dirichlet(system, exact, phi_hat(system, exact), stop=stop)
    elif alg == "cg-h12":
        _, hist = cg_dirichlet_h12(system, exact, phi0=zero, stop=stop)
    else:
        _, hist = cg_dirichlet_l2(system, exact, phi0=zero, stop=stop)
    r = hist.residuals("native")
    assert np.all(np.diff(r) <= 1e-10 * r[0]), r


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_cg_beats_landweber(seed):
    cfg = ExperimentConfig(h=0.1, seed=seed)
    system, noisy, _, _ = prepare(cfg)
    mesh = system.mesh
    ph = phi_hat(system, noisy)
    _, lw = landweber_dirichlet(system, noisy, ph, Trace.zeros(mesh, "B", DIRICHLET), stop=fixed(20))
    _, cg = cg_dirichlet_h12(system, noisy, phi0=ph, stop=fixed(20))
    a, b = cg.residuals("native"), lw.residuals("native")
    n = min(len(a), len(b))
    assert n > 1
    assert np.all(a[1:n] <= b[1:n] * (1 + 1e-10))


# --- data-error bookkeeping ----------------------------------------------------------------------------

def test_rewrite_sigma_error_zero(parabola_coarse, rng):
    _, data, _, _ = manufactured(parabola_coarse, rng)
    tau, level = rewrite_sigma_error(parabola_coarse, data.sigma, data.sigma, delta=0.2, lam=1.5)
    assert np.all(np.abs(tau.weights) < 1e-12)
    assert level == pytest.approx(1.5 * 0.2)


def test_rewrite_sigma_error_relation(parabola_coarse, rng):
    # linearity gives N(psi) = N^eps(psi) - tau_eps for tau_eps = F_DN(sigma_eps - sigma)
    _, data, psi, _ = manufactured(parabola_coarse, rng)
    sigma_eps = data.sigma + _rand(parabola_coarse, "S", DIRICHLET, rng, False) * 0.05
    tau_eps, _ = rewrite_sigma_error(parabola_coarse, sigma_eps, data.sigma)
    lhs = op_N(parabola_coarse, data, psi)
    rhs = op_N(parabola_coarse, data.with_sigma(sigma_eps), psi) - tau_eps
    assert norm(lift_neumann(parabola_coarse, lhs - rhs)) <= 1e-9 * norm(lift_neumann(parabola_coarse, lhs))


def test_fdn_norm_bound(parabola_coarse, rng):
    s = parabola_coarse
    nS = len(s.mesh.region_nodes("S"))
    basis = [Trace.dirichlet("S", np.eye(nS)[i]) for i in range(nS)]
    out = [lift_neumann(s, op_FDN(s, b)) for b in basis]
    src = [lift_h12(s, b) for b in basis]
    G1 = np.array([[inner(a, b) for b in out] for a in out])
    G2 = np.array([[inner(a, b) for b in src] for a in src])
    T = scipy.linalg.solve(G2, G1, assume_a="pos")
    lam, _ = power_norm(lambda x: T @ x, lambda y: y, lambda x, y: float(x @ G2 @ y), rng.standard_normal(nS),
                        iters=500, tol=1e-14)
    bound = math.sqrt(lam)
    for _ in range(5):
        g = _rand(s, "S", DIRICHLET, rng, False)
        sigma = Trace.zeros(s.mesh, "S", DIRICHLET)
        tau, _ = rewrite_sigma_error(s, g, sigma)
        assert lift_neumann(s, tau).norm() <= bound * lift_h12(s, g).norm() * (1 + 1e-8)


def test_reduce_dirichlet_noise(parabola_coarse, rng):
    s = parabola_coarse
    mesh = s.mesh
    hom = CauchyData.homogeneous(mesh)
    red, u, v = reduce_dirichlet_noise(s, hom, Trace.zeros(mesh, "S", DIRICHLET))
    assert np.all(red.sigma.weights == 0)
    g = _rand(s, "S", DIRICHLET, rng, False)
    _, u, v = reduce_dirichlet_noise(s, hom, g)
    assert np.all(v[mesh.region_nodes("B")] == 0)
    fmap = reduced_noise_map(s)
    h = _rand(s, "S", DIRICHLET, rng, False)
    lhs = fmap(g + 2.0 * h).weights
    rhs = fmap(g).weights + 2.0 * fmap(h).weights
    assert np.abs(lhs - rhs).max() <= 1e-10 * np.abs(lhs).max()
    assert fmap(g).zero_at_interface(mesh)


def test_power_norm_identity(rng):
    x0 = rng.standard_normal(7)
    lam, resid = power_norm(lambda x: x, lambda y: y, lambda a, b: float(a @ b), x0)
    assert lam == pytest.approx(1.0, abs=1e-10) and resid < 1e-10
    with pytest.raises(ValueError):
        power_norm(lambda x: x, lambda y: y, lambda a, b: float(a @ b), np.zeros(3))


def test_power_norm_diagonal(rng):
    d = np.array([0.2, 0.9, 0.5])
    lam, _ = power_norm(lambda x: np.sqrt(d) * x, lambda y: np.sqrt(d) * y, lambda a, b: float(a @ b),
                        np.ones(3), iters=500, tol=1e-15)
    assert lam == pytest.approx(0.9, rel=1e-8)


def test_cap_status(synthetic):
    system, _, noisy, _, _ = synthetic
    _, hist = km_dirichlet(system, noisy, Trace.zeros(system.mesh, "B", DIRICHLET),
                           stop=StoppingRule(delta=1e-9, max_iter=3))
    assert hist.status == STOP_CAP and hist.stop_index == 3
