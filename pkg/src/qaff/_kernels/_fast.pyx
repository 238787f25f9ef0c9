# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Fused Cython kernels for the Huber quantile losses.

Semantics match `qaff._kernels.pure` exactly (same branch structure, same
accumulation order: row-major over rows, then levels, then target atoms).
"""
import numpy as np

cimport numpy as cnp
from libc.math cimport fabs

cnp.import_array()

BACKEND = "fast"


def huber(u, double k):
    u_arr = np.atleast_1d(np.asarray(u, dtype=np.float64))
    out = np.empty_like(u_arr)
    cdef double[::1] uv = np.ascontiguousarray(u_arr.reshape(-1))
    cdef double[::1] ov = out.reshape(-1)
    cdef Py_ssize_t i, n = uv.shape[0]
    cdef double x, ax
    for i in range(n):
        x = uv[i]
        ax = fabs(x)
        if ax <= k:
            ov[i] = 0.5 * x * x
        else:
            ov[i] = (ax - 0.5 * k) * k
    if np.isscalar(u) or getattr(u, "ndim", 1) == 0:
        return float(out[0])
    return out.reshape(np.shape(u))


def pinball_huber(u, alpha, double k):
    u_arr = np.atleast_1d(np.asarray(u, dtype=np.float64))
    a_arr = np.broadcast_to(np.asarray(alpha, dtype=np.float64), u_arr.shape).copy()
    out = np.empty_like(u_arr)
    cdef double[::1] uv = np.ascontiguousarray(u_arr.reshape(-1))
    cdef double[::1] av = np.ascontiguousarray(a_arr.reshape(-1))
    cdef double[::1] ov = out.reshape(-1)
    cdef Py_ssize_t i, n = uv.shape[0]
    cdef double x, ax, w, h
    for i in range(n):
        x = uv[i]
        ax = fabs(x)
        w = (1.0 - av[i]) if x < 0 else av[i]
        h = 0.5 * x * x if ax <= k else (ax - 0.5 * k) * k
        ov[i] = w * h
    if np.isscalar(u) or getattr(u, "ndim", 1) == 0:
        return float(out[0])
    return out.reshape(np.shape(u))


def mc_loss_grad(cnp.ndarray[cnp.float64_t, ndim=2] q,
                 cnp.ndarray[cnp.float64_t, ndim=1] y,
                 cnp.ndarray[cnp.float64_t, ndim=1] levels,
                 double k):
    cdef Py_ssize_t n = q.shape[0], m = q.shape[1]
    dq_arr = np.empty((n, m), dtype=np.float64)
    cdef double[:, ::1] qv = np.ascontiguousarray(q)
    cdef double[::1] yv = np.ascontiguousarray(y)
    cdef double[::1] lv = np.ascontiguousarray(levels)
    cdef double[:, ::1] dq = dq_arr
    cdef Py_ssize_t i, j
    cdef double u, au, w, loss = 0.0, dh
    for i in range(n):
        for j in range(m):
            u = yv[i] - qv[i, j]
            au = fabs(u)
            w = (1.0 - lv[j]) if u < 0 else lv[j]
            if au <= k:
                loss += w * 0.5 * u * u
                dh = u
            else:
                loss += w * (au - 0.5 * k) * k
                dh = k if u > 0 else -k
            dq[i, j] = -w * dh
    return loss, dq_arr


def td0_loss_grad(cnp.ndarray[cnp.float64_t, ndim=2] q,
                  cnp.ndarray[cnp.float64_t, ndim=2] targets,
                  cnp.ndarray[cnp.float64_t, ndim=1] levels,
                  double k):
    cdef Py_ssize_t n = q.shape[0], m = q.shape[1]
    dq_arr = np.zeros((n, m), dtype=np.float64)
    cdef double[:, ::1] qv = np.ascontiguousarray(q)
    cdef double[:, ::1] tv = np.ascontiguousarray(targets)
    cdef double[::1] lv = np.ascontiguousarray(levels)
    cdef double[:, ::1] dq = dq_arr
    cdef Py_ssize_t i, j, jp
    cdef double u, au, w, loss = 0.0, acc
    for i in range(n):
        for j in range(m):
            acc = 0.0
            for jp in range(m):
                u = tv[i, jp] - qv[i, j]
                au = fabs(u)
                w = (1.0 - lv[j]) if u < 0 else lv[j]
                if au <= k:
                    loss += w * 0.5 * u * u
                    acc += w * u
                else:
                    loss += w * (au - 0.5 * k) * k
                    acc += w * (k if u > 0 else -k)
            dq[i, j] = -acc
    return loss, dq_arr
