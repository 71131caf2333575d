"""Pure numpy/scipy implementations of the compiled kernels (same signatures)."""
import numpy as np
import scipy.sparse as sp


def stiffness_triplets(xy, tri):
    p0, p1, p2 = xy[tri[:, 0]], xy[tri[:, 1]], xy[tri[:, 2]]
    areas = 0.5 * ((p1[:, 0] - p0[:, 0]) * (p2[:, 1] - p0[:, 1]) - (p2[:, 0] - p0[:, 0]) * (p1[:, 1] - p0[:, 1]))
    b = np.column_stack([p1[:, 1] - p2[:, 1], p2[:, 1] - p0[:, 1], p0[:, 1] - p1[:, 1]])
    c = np.column_stack([p2[:, 0] - p1[:, 0], p0[:, 0] - p2[:, 0], p1[:, 0] - p0[:, 0]])
    local = (b[:, :, None] * b[:, None, :] + c[:, :, None] * c[:, None, :]) * (0.25 / areas)[:, None, None]
    rows = np.repeat(tri, 3, axis=1).ravel()
    cols = np.tile(tri, (1, 3)).ravel()
    return rows.astype(np.int64), cols.astype(np.int64), local.ravel(), areas


def pcg(indptr, indices, data, b, x0, dinv, rtol, maxiter, project):
    n = len(dinv)
    A = sp.csr_matrix((data, indices, indptr), shape=(n, n))
    b = np.array(b, dtype=float)
    x = np.array(x0, dtype=float)
    if n == 0:
        return x, 0, 0.0
    if project:
        b -= b.mean()
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros(n), 0, 0.0
    target = rtol * bnorm
    it = restarts = 0
    while True:
        r = b - A @ x
        if project:
            r -= r.mean()
        rnorm = np.linalg.norm(r)
        if rnorm <= target or it >= maxiter or restarts > 3:
            break
        restarts += 1
        z = dinv * r
        p = z.copy()
        rz = r @ z
        while it < maxiter:
            ap = A @ p
            pap = p @ ap
            if pap <= 0.0:
                break
            alpha = rz / pap
            x += alpha * p
            r -= alpha * ap
            if project:
                r -= r.mean()
            it += 1
            if np.linalg.norm(r) <= target:
                break
            z = dinv * r
            rz_new = r @ z
            p = z + (rz_new / rz) * p
            rz = rz_new
    return x, it, rnorm / bnorm
