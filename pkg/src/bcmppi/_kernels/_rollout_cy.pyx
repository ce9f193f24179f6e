# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled rollout kernel.

Mirrors rollout_numpy.rollout_batch operation-for-operation (same expression
grouping, no FMA contraction) so both backends produce bit-identical
trajectories.  Compiled with -ffp-contract=off; keep it that way.
"""

from libc.math cimport fabs, sqrt

import numpy as np

cdef double LIMIT = 1.0e6


cdef void _deriv(const double* x, const double* u,
                 double m, double ixx, double iyy, double izz,
                 double d, double kappa, double g,
                 double* out) noexcept nogil:
    cdef double qw = x[3]
    cdef double qx = x[4]
    cdef double qy = x[5]
    cdef double qz = x[6]
    cdef double wx = x[10]
    cdef double wy = x[11]
    cdef double wz = x[12]
    cdef double u0 = u[0]
    cdef double u1 = u[1]
    cdef double u2 = u[2]
    cdef double u3 = u[3]
    cdef double a, tx, ty, tz

    a = ((u0 + u1) + (u2 + u3)) / m
    out[0] = x[7]
    out[1] = x[8]
    out[2] = x[9]
    out[3] = -0.5 * (qx * wx + qy * wy + qz * wz)
    out[4] = 0.5 * (qw * wx + qy * wz - qz * wy)
    out[5] = 0.5 * (qw * wy + qz * wx - qx * wz)
    out[6] = 0.5 * (qw * wz + qx * wy - qy * wx)
    out[7] = a * (2.0 * (qx * qz + qw * qy))
    out[8] = a * (2.0 * (qy * qz - qw * qx))
    out[9] = a * (1.0 - 2.0 * (qx * qx + qy * qy)) - g

    tx = d * ((u0 + u1) - (u2 + u3))
    ty = d * ((u1 + u2) - (u0 + u3))
    tz = kappa * ((u1 + u3) - (u0 + u2))
    out[10] = (tx - (izz - iyy) * wy * wz) / ixx
    out[11] = (ty - (ixx - izz) * wz * wx) / iyy
    out[12] = (tz - (iyy - ixx) * wx * wy) / izz


def rollout_batch(x0, plans, double dt, params):
    """Same contract as rollout_numpy.rollout_batch."""
    cdef double m, ixx, iyy, izz, d, kappa, g
    m, ixx, iyy, izz, d, kappa, g = params.as_tuple()

    plans_arr = np.ascontiguousarray(plans, dtype=np.float64)
    cdef const double[:, :, ::1] u_view = plans_arr
    cdef Py_ssize_t num_samples = plans_arr.shape[0]
    cdef Py_ssize_t horizon = plans_arr.shape[1]

    x0_arr = np.asarray(x0, dtype=np.float64)
    if x0_arr.ndim == 1:
        x0_arr = np.broadcast_to(x0_arr, (num_samples, 13))
    x0_arr = np.ascontiguousarray(x0_arr)
    cdef const double[:, ::1] x0_view = x0_arr

    traj_arr = np.empty((num_samples, horizon + 1, 13))
    diverged_arr = np.full(num_samples, horizon + 1, dtype=np.int64)
    cdef double[:, :, ::1] traj = traj_arr
    cdef long long[::1] diverged_at = diverged_arr

    cdef double x[13]
    cdef double xs[13]
    cdef double xn[13]
    cdef double k1[13]
    cdef double k2[13]
    cdef double k3[13]
    cdef double k4[13]
    cdef double u[4]
    cdef double half = 0.5 * dt
    cdef double sixth = dt / 6.0
    cdef double norm, v
    cdef Py_ssize_t k, i, j
    cdef bint sane

    with nogil:
        for k in range(num_samples):
            for j in range(13):
                x[j] = x0_view[k, j]
                traj[k, 0, j] = x[j]
            for i in range(horizon):
                for j in range(4):
                    u[j] = u_view[k, i, j]

                _deriv(x, u, m, ixx, iyy, izz, d, kappa, g, k1)
                for j in range(13):
                    xs[j] = x[j] + half * k1[j]
                _deriv(xs, u, m, ixx, iyy, izz, d, kappa, g, k2)
                for j in range(13):
                    xs[j] = x[j] + half * k2[j]
                _deriv(xs, u, m, ixx, iyy, izz, d, kappa, g, k3)
                for j in range(13):
                    xs[j] = x[j] + dt * k3[j]
                _deriv(xs, u, m, ixx, iyy, izz, d, kappa, g, k4)
                for j in range(13):
                    xn[j] = x[j] + sixth * ((k1[j] + k4[j]) + 2.0 * (k2[j] + k3[j]))

                norm = sqrt(xn[3] * xn[3] + xn[4] * xn[4] + xn[5] * xn[5] + xn[6] * xn[6])
                xn[3] = xn[3] / norm
                xn[4] = xn[4] / norm
                xn[5] = xn[5] / norm
                xn[6] = xn[6] / norm

                sane = True
                for j in range(13):
                    v = xn[j]
                    if not (fabs(v) <= LIMIT):  # catches NaN and inf too
                        sane = False
                        break
                if not sane:
                    diverged_at[k] = i + 1
                    break
                for j in range(13):
                    x[j] = xn[j]
                    traj[k, i + 1, j] = x[j]
            # freeze a diverged sample at its last sane state
            if diverged_at[k] <= horizon:
                for i in range(diverged_at[k], horizon + 1):
                    for j in range(13):
                        traj[k, i, j] = x[j]
    return traj_arr, diverged_arr
