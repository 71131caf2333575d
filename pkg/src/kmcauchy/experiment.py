"""Synthetic glacier cross-section experiment.

A parabola-bottomed domain, a gaussian basal profile, a constant forcing,
exact Neumann data on the surface and gaussian noise on the surface values.
The three reconstruction algorithms are run from a zero basal estimate and
stopped by the ``L^2(S)`` discrepancy principle.
"""
from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import __version__, _backend
from .cauchy_ops import CauchyData, phi_hat
from .fem import DIRICHLET, NEUMANN, StiffnessSystem, Trace, VolumeLoad, assemble, restrict, solve_mixed
from .mesh import build_parabola_domain
from .sobolev import l2_norm, lift_dirichlet_00
from .solvers import (StoppingRule, cg_dirichlet_h12, cg_dirichlet_l2, km_dirichlet, landweber_dirichlet)

ALGORITHMS = ("km", "landweber", "cg-h12", "cg-l2")
COMPARED = ("km", "cg-h12", "cg-l2")
TRACE_COLUMNS = ("arclength", "x", "y", "true", "km", "cg_h12", "cg_l2")


@dataclass(frozen=True)
class ExperimentConfig:
    d: float = 0.5
    f0: float = 8.0
    u0: float = 0.5
    s: float = 1.0 / 3.0
    p: float = 1.0
    seed: int = 7
    h: float = 0.05
    algorithm: str = "km"
    lam: float = 1.1
    max_iter: int = 200
    tol: float = 1e-12

    def __post_init__(self):
        for name in ("d", "h", "s", "lam", "tol"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        for name in ("f0", "u0", "p"):
            if not getattr(self, name) >= 0:
                raise ValueError(f"{name} must be nonnegative")
        if not self.lam > 1:
            raise ValueError("lam must exceed 1")
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"algorithm must be one of {ALGORITHMS}")
        if self.max_iter < 0:
            raise ValueError("max_iter must be nonnegative")

    def replace(self, **changes) -> "ExperimentConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


@dataclass
class SyntheticTruth:
    u_true: np.ndarray
    sigma_true: Trace
    phi_true: Trace
    u_max: float


def bump(x, u0: float, s: float):
    return u0 * np.exp(-0.5 * np.asarray(x) ** 2 / s ** 2)


def build_system(config: ExperimentConfig) -> StiffnessSystem:
    return assemble(build_parabola_domain(config.d, config.h), rtol=config.tol)


def make_synthetic(config: ExperimentConfig, system: Optional[StiffnessSystem] = None):
    """Forward solve with the bump as basal Dirichlet data and zero surface flux."""
    system = system if system is not None else build_system(config)
    mesh = system.mesh
    xb = mesh.vertices[mesh.region_nodes("B"), 0]
    phi = Trace.dirichlet("B", bump(xb, config.u0, config.s))
    f = VolumeLoad(config.f0)
    u = solve_mixed(system, f, [phi])
    sigma = restrict(mesh, u, "S")
    data = CauchyData(sigma, Trace.zeros(mesh, "S", NEUMANN), f)
    return data, SyntheticTruth(u, sigma, restrict(mesh, u, "B"), float(np.max(u)))


def gaussian(seed: int, n: int) -> np.ndarray:
    """Standard normals by Box-Muller from PCG64 uniform doubles (stable across numpy versions)."""
    gen = np.random.Generator(np.random.PCG64(seed))
    m = (n + 1) // 2
    # uniforms drawn in consecutive pairs, so a longer draw extends a shorter one
    u = gen.random(2 * m).reshape(m, 2)
    u1 = 1.0 - u[:, 0]
    u2 = u[:, 1]
    rad = np.sqrt(-2.0 * np.log(u1))
    z = np.empty(2 * m)
    z[0::2] = rad * np.cos(2.0 * np.pi * u2)
    z[1::2] = rad * np.sin(2.0 * np.pi * u2)
    return z[:n]


def add_noise(system: StiffnessSystem, sigma: Trace, p: float, u_max: float, seed: int):
    """Independent gaussian noise of standard deviation ``u_max * p / 100`` per S-node.

    Returns the noisy trace and the realized ``L^2(S)`` size of the perturbation.
    """
    if p == 0:
        return sigma, 0.0
    noise = Trace.dirichlet("S", u_max * p / 100.0 * gaussian(seed, len(sigma.weights)))
    return sigma + noise, l2_norm(system, noise)


def _near_interface_nodes(mesh, count=3) -> np.ndarray:
    """Positions in the B node list of the ``count`` nodes nearest each interface point."""
    b_nodes = mesh.region_nodes("B")
    pts = mesh.vertices[b_nodes]
    picks = []
    for p in mesh.interface:
        dist = np.linalg.norm(pts - mesh.vertices[p], axis=1)
        dist[b_nodes == p] = np.inf
        picks.extend(np.argsort(dist, kind="stable")[:count].tolist())
    return np.array(sorted(set(picks)), dtype=np.int64)


def b_trace_metrics(system: StiffnessSystem, estimate: Trace, truth: SyntheticTruth) -> dict:
    mesh = system.mesh
    err = estimate - truth.phi_true
    err_00 = err.without_interface(mesh)
    l2_true = l2_norm(system, truth.phi_true)
    l2_err = l2_norm(system, err)
    near = _near_interface_nodes(mesh)
    return {
        "err_l2_b": l2_err,
        "rel_err_l2_b": l2_err / l2_true if l2_true > 0 else float("nan"),
        "err_h12_00_b": lift_dirichlet_00(system, err_00).norm(),
        "oscillation_near_interface": float(np.max(np.abs(err.weights[near]))),
    }


@dataclass
class ExperimentResult:
    config: ExperimentConfig
    history: object
    reconstruction: np.ndarray
    b_trace: Trace
    metrics: dict
    truth: SyntheticTruth = field(repr=False)
    data: CauchyData = field(repr=False)
    delta: float = 0.0
    system: Optional[StiffnessSystem] = field(default=None, repr=False)


def prepare(config: ExperimentConfig, system: Optional[StiffnessSystem] = None):
    """Mesh, exact data, truth, noisy data and realized noise level."""
    system = system if system is not None else build_system(config)
    exact, truth = make_synthetic(config, system)
    sigma_delta, delta = add_noise(system, exact.sigma, config.p, truth.u_max, config.seed)
    return system, exact.with_sigma(sigma_delta), truth, delta


def run_algorithm(system, data, algorithm, stop, truth: Optional[SyntheticTruth] = None):
    """Run one algorithm from the zero basal estimate; returns ``(field, b_trace, history)``."""
    mesh = system.mesh
    zero = Trace.zeros(mesh, "B", DIRICHLET)
    err = None
    if truth is not None:
        err = lambda tr: l2_norm(system, tr - truth.phi_true)  # noqa: E731
    if algorithm == "km":
        phi, hist = km_dirichlet(system, data, zero, stop, truth=err)
        field_ = solve_mixed(system, data.f, [phi], [data.tau])
    elif algorithm == "landweber":
        ph = phi_hat(system, data)
        phi, hist = landweber_dirichlet(system, data, ph, (zero - ph).without_interface(mesh), stop, truth=err)
        field_ = solve_mixed(system, data.f, [phi], [data.tau])
    elif algorithm == "cg-h12":
        field_, hist = cg_dirichlet_h12(system, data, phi0=zero, stop=stop, truth=err)
    elif algorithm == "cg-l2":
        field_, hist = cg_dirichlet_l2(system, data, phi0=zero, stop=stop, truth=err)
    else:
        raise ValueError(f"unknown algorithm {algorithm!r}")
    return field_, restrict(mesh, field_, "B"), hist


def run_experiment(config: ExperimentConfig, system: Optional[StiffnessSystem] = None,
                   prepared=None) -> ExperimentResult:
    system, data, truth, delta = prepared if prepared is not None else prepare(config, system)
    stop = StoppingRule("discrepancy", delta=delta, lam=config.lam, norm="l2", max_iter=config.max_iter)
    field_, b_trace, hist = run_algorithm(system, data, config.algorithm, stop, truth)
    metrics = b_trace_metrics(system, b_trace, truth)
    metrics.update(iterations=hist.stop_index, status=hist.status, delta=delta, u_max=truth.u_max,
                   final_residual_l2=float(hist.records[-1].residual_l2),
                   final_residual_native=float(hist.records[-1].residual_native))
    return ExperimentResult(config, hist, field_, b_trace, metrics, truth, data, delta, system)


def trace_table(system, truth: SyntheticTruth, traces: dict, columns=COMPARED) -> str:
    """B-traces sampled at the B nodes in boundary order, with arclength from the first interface point."""
    mesh = system.mesh
    b_nodes = mesh.region_nodes("B")
    arc = mesh.boundary_arclength("B")
    cols = [arc, mesh.vertices[b_nodes, 0], mesh.vertices[b_nodes, 1], truth.phi_true.weights]
    cols += [traces[name].weights for name in columns]
    lines = [",".join(TRACE_COLUMNS[:4] + tuple(c.replace("-", "_") for c in columns))]
    for row in zip(*cols):
        lines.append(",".join(repr(float(v)) for v in row))
    return "\n".join(lines) + "\n"


def compare_algorithms(config: ExperimentConfig, out_dir=None, system: Optional[StiffnessSystem] = None):
    """Run KM and both conjugate-gradient variants on identical noisy data.

    With ``out_dir`` writes ``history_<alg>.csv`` for each algorithm and
    ``trace_b.csv``.  Returns ``(results_by_algorithm, paths)``.
    """
    prepared = prepare(config, system)
    results = {alg: run_experiment(config.replace(algorithm=alg), prepared=prepared) for alg in COMPARED}
    paths = {}
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        for alg, res in results.items():
            paths[f"history_{alg}"] = out / f"history_{alg.replace('-', '_')}.csv"
            res.history.write(paths[f"history_{alg}"])
        paths["trace"] = out / "trace_b.csv"
        paths["trace"].write_text(trace_table(prepared[0], prepared[2],
                                              {alg: r.b_trace for alg, r in results.items()}))
    return results, paths


def write_manifest(path, config: ExperimentConfig, outputs: dict, wall_clock: float, extra=None) -> None:
    manifest = {
        "config": config.to_dict(),
        "version": __version__,
        "backend": _backend.name,
        "outputs": {k: str(v) for k, v in outputs.items()},
        "wall_clock_seconds": round(wall_clock, 3),
    }
    if extra:
        manifest.update(extra)
    Path(path).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
