"""Time the compiled kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--h 0.02] [--repeat 5]

Reports the best of ``--repeat`` runs for stiffness assembly, one Jacobi-PCG
solve on the interior block and one full alternating (KM) step.
"""
import argparse
import timeit

import numpy as np

from kmcauchy import _backend
from kmcauchy.experiment import ExperimentConfig, prepare
from kmcauchy.fem import DIRICHLET, Trace, assemble
from kmcauchy.mesh import build_parabola_domain
from kmcauchy.cauchy_ops import op_MK


def best(fn, repeat):
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def bench(backend, h, repeat):
    mesh = build_parabola_domain(0.5, h)
    system = assemble(mesh, backend=backend)
    kern = _backend.get(backend)
    t_asm = best(lambda: kern.stiffness_triplets(mesh.vertices, mesh.triangles), repeat)

    free = np.ones(system.n, dtype=bool)
    free[np.unique(mesh.boundary_edges)] = False
    rhs = np.random.default_rng(0).standard_normal(system.n)[free]
    t_pcg = best(lambda: system.pcg(free, rhs), repeat)

    _, data, _, _ = prepare(ExperimentConfig(h=h), system)
    zero = Trace.zeros(mesh, "B", DIRICHLET)
    t_km = best(lambda: op_MK(system, data, zero), repeat)
    return mesh.n_vertices, t_asm, t_pcg, t_km


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--h", type=float, default=0.02)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    backends = ["python"] + (["compiled"] if _backend.compiled_available() else [])
    print(f"{'backend':<10}{'vertices':>10}{'assembly s':>14}{'pcg s':>12}{'km step s':>12}")
    rows = {}
    for b in backends:
        rows[b] = bench(b, args.h, args.repeat)
        n, *times = rows[b]
        print(f"{b:<10}{n:>10}" + "".join(f"{t:>{w}.5f}" for t, w in zip(times, (14, 12, 12))))
    if len(rows) == 2:
        ratios = [p / c for p, c in zip(rows["python"][1:], rows["compiled"][1:])]
        print("speedup   " + " " * 10 + "".join(f"{r:>{w}.2f}x" for r, w in zip(ratios, (13, 11, 11))))
    else:
        print("compiled extension not built; only the fallback was timed")


if __name__ == "__main__":
    main()
