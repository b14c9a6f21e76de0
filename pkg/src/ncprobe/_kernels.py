"""Hot inner loops for the linear-algebra module.

Each kernel has two implementations with identical contracts:

* ``*_loops``: explicit scalar loops, compiled with numba when available;
* ``*_numpy``: vectorized numpy, used when ``NCPROBE_NO_JIT`` is set.

``jacobi_eigh`` and ``power_iterate`` dispatch on :data:`ncprobe._jit.USE_JIT`.
The two paths agree to rounding but are not bit-identical to each other.
"""
import math

import numpy as np

from . import _jit


def _rotation(app, aqq, apq):
    # tangent of the smaller rotation angle that annihilates a[p, q]
    theta = (aqq - app) / (2.0 * apq)
    if abs(theta) > 1e150:
        t = 0.5 / theta
    else:
        t = 1.0 / (abs(theta) + math.sqrt(theta * theta + 1.0))
        if theta < 0.0:
            t = -t
    c = 1.0 / math.sqrt(t * t + 1.0)
    return t, c, t * c


def _offdiag_norm_loops(a):
    n = a.shape[0]
    acc = 0.0
    for i in range(n):
        for j in range(n):
            if i != j:
                acc += a[i, j] * a[i, j]
    return math.sqrt(acc)


def _jacobi_eigh_loops(s, tol, max_sweeps):
    n = s.shape[0]
    a = s.copy()
    v = np.eye(n)
    fro = 0.0
    for i in range(n):
        for j in range(n):
            fro += a[i, j] * a[i, j]
    thresh = tol * math.sqrt(fro)
    sweeps = 0
    converged = _offdiag_norm_loops(a) <= thresh
    while not converged and sweeps < max_sweeps:
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                app = a[p, p]
                aqq = a[q, q]
                t, c, sn = _rotation(app, aqq, apq)
                for k in range(n):
                    akp = a[k, p]
                    akq = a[k, q]
                    a[k, p] = c * akp - sn * akq
                    a[k, q] = sn * akp + c * akq
                for k in range(n):
                    apk = a[p, k]
                    aqk = a[q, k]
                    a[p, k] = c * apk - sn * aqk
                    a[q, k] = sn * apk + c * aqk
                a[p, p] = app - t * apq
                a[q, q] = aqq + t * apq
                a[p, q] = 0.0
                a[q, p] = 0.0
                for k in range(n):
                    vkp = v[k, p]
                    vkq = v[k, q]
                    v[k, p] = c * vkp - sn * vkq
                    v[k, q] = sn * vkp + c * vkq
        sweeps += 1
        converged = _offdiag_norm_loops(a) <= thresh
    w = np.empty(n)
    for i in range(n):
        w[i] = a[i, i]
    return w, v, sweeps, converged


def _jacobi_eigh_numpy(s, tol, max_sweeps):
    n = s.shape[0]
    a = np.array(s, dtype=np.float64, copy=True)
    v = np.eye(n)
    thresh = tol * np.linalg.norm(a)

    def off(m):
        o = m - np.diag(np.diag(m))
        return float(np.linalg.norm(o))

    sweeps = 0
    converged = off(a) <= thresh
    while not converged and sweeps < max_sweeps:
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if apq == 0.0:
                    continue
                app = a[p, p]
                aqq = a[q, q]
                t, c, sn = _rotation_py(app, aqq, apq)
                cp = a[:, p].copy()
                cq = a[:, q]
                a[:, p] = c * cp - sn * cq
                a[:, q] = sn * cp + c * cq
                rp = a[p, :].copy()
                rq = a[q, :]
                a[p, :] = c * rp - sn * rq
                a[q, :] = sn * rp + c * rq
                a[p, p] = app - t * apq
                a[q, q] = aqq + t * apq
                a[p, q] = 0.0
                a[q, p] = 0.0
                vp = v[:, p].copy()
                vq = v[:, q]
                v[:, p] = c * vp - sn * vq
                v[:, q] = sn * vp + c * vq
        sweeps += 1
        converged = off(a) <= thresh
    return np.diag(a).copy(), v, sweeps, converged


def _power_iterate_loops(g, v0, max_iters, rel_tol):
    # g is a symmetric PSD Gram matrix; returns its top eigenvalue estimate
    n = g.shape[0]
    v = v0.copy()
    w = np.empty(n)
    lam_prev = -1.0
    lam = 0.0
    for _ in range(max_iters):
        for i in range(n):
            acc = 0.0
            for j in range(n):
                acc += g[i, j] * v[j]
            w[i] = acc
        lam = 0.0
        nrm = 0.0
        for i in range(n):
            lam += v[i] * w[i]
            nrm += w[i] * w[i]
        nrm = math.sqrt(nrm)
        if nrm == 0.0:
            return 0.0
        for i in range(n):
            v[i] = w[i] / nrm
        if lam_prev >= 0.0 and abs(lam - lam_prev) <= rel_tol * abs(lam):
            break
        lam_prev = lam
    return lam


def _power_iterate_numpy(g, v0, max_iters, rel_tol):
    v = np.array(v0, dtype=np.float64, copy=True)
    lam_prev = -1.0
    lam = 0.0
    for _ in range(max_iters):
        w = g @ v
        lam = float(v @ w)
        nrm = float(np.linalg.norm(w))
        if nrm == 0.0:
            return 0.0
        v = w / nrm
        if lam_prev >= 0.0 and abs(lam - lam_prev) <= rel_tol * abs(lam):
            break
        lam_prev = lam
    return lam


_rotation_py = _rotation
_rotation = _jit.maybe_njit(_rotation)
_offdiag_norm_loops = _jit.maybe_njit(_offdiag_norm_loops)
jacobi_eigh_loops = _jit.maybe_njit(_jacobi_eigh_loops)
power_iterate_loops = _jit.maybe_njit(_power_iterate_loops)
jacobi_eigh_numpy = _jacobi_eigh_numpy
power_iterate_numpy = _power_iterate_numpy


def jacobi_eigh(s, tol, max_sweeps):
    """Cyclic Jacobi on a symmetric matrix.

    Returns ``(eigenvalues, eigenvectors, sweeps, converged)``; eigenvalues are
    unsorted (diagonal order), eigenvectors are columns.
    """
    s = np.ascontiguousarray(s, dtype=np.float64)
    if _jit.USE_JIT:
        return jacobi_eigh_loops(s, float(tol), int(max_sweeps))
    return jacobi_eigh_numpy(s, float(tol), int(max_sweeps))


def power_iterate(g, v0, max_iters, rel_tol):
    g = np.ascontiguousarray(g, dtype=np.float64)
    v0 = np.ascontiguousarray(v0, dtype=np.float64)
    if _jit.USE_JIT:
        return power_iterate_loops(g, v0, int(max_iters), float(rel_tol))
    return power_iterate_numpy(g, v0, int(max_iters), float(rel_tol))
