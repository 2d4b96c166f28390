# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels: NMPC model rollouts/sensitivities and the plant RK4 step.

Function-for-function twin of ``_kernels_py.py``.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt

cnp.import_array()

cdef enum:
    NX = 10
    NU = 4
    NY = 17


cdef inline void _nmpc_f(const double* x, const double* u, const double* fext,
                         double mass, double g, double* out) noexcept nogil:
    cdef double qw = x[6], qx = x[7], qy = x[8], qz = x[9]
    cdef double T = u[0], wx = u[1], wy = u[2], wz = u[3]
    cdef double s = T / mass
    out[0] = x[3]
    out[1] = x[4]
    out[2] = x[5]
    out[3] = s * 2.0 * (qx * qz + qw * qy) + fext[0] / mass
    out[4] = s * 2.0 * (qy * qz - qw * qx) + fext[1] / mass
    out[5] = s * (1.0 - 2.0 * (qx * qx + qy * qy)) + fext[2] / mass - g
    out[6] = 0.5 * (-qx * wx - qy * wy - qz * wz)
    out[7] = 0.5 * (qw * wx + qy * wz - qz * wy)
    out[8] = 0.5 * (qw * wy + qz * wx - qx * wz)
    out[9] = 0.5 * (qw * wz + qx * wy - qy * wx)


cdef inline void _nmpc_jac(const double* x, const double* u, double mass,
                           double* fx, double* fu) noexcept nogil:
    # fx: NX*NX row-major, fu: NX*NU row-major; both fully overwritten
    cdef int i
    for i in range(NX * NX):
        fx[i] = 0.0
    for i in range(NX * NU):
        fu[i] = 0.0
    cdef double qw = x[6], qx = x[7], qy = x[8], qz = x[9]
    cdef double T = u[0], wx = u[1], wy = u[2], wz = u[3]
    cdef double s = 2.0 * T / mass
    fx[0 * NX + 3] = 1.0
    fx[1 * NX + 4] = 1.0
    fx[2 * NX + 5] = 1.0
    fx[3 * NX + 6] = s * qy
    fx[3 * NX + 7] = s * qz
    fx[3 * NX + 8] = s * qw
    fx[3 * NX + 9] = s * qx
    fx[4 * NX + 6] = -s * qx
    fx[4 * NX + 7] = -s * qw
    fx[4 * NX + 8] = s * qz
    fx[4 * NX + 9] = s * qy
    fx[5 * NX + 7] = -2.0 * s * qx
    fx[5 * NX + 8] = -2.0 * s * qy
    fx[6 * NX + 7] = -0.5 * wx
    fx[6 * NX + 8] = -0.5 * wy
    fx[6 * NX + 9] = -0.5 * wz
    fx[7 * NX + 6] = 0.5 * wx
    fx[7 * NX + 8] = 0.5 * wz
    fx[7 * NX + 9] = -0.5 * wy
    fx[8 * NX + 6] = 0.5 * wy
    fx[8 * NX + 7] = -0.5 * wz
    fx[8 * NX + 9] = 0.5 * wx
    fx[9 * NX + 6] = 0.5 * wz
    fx[9 * NX + 7] = 0.5 * wy
    fx[9 * NX + 8] = -0.5 * wx
    fu[3 * NU + 0] = 2.0 * (qx * qz + qw * qy) / mass
    fu[4 * NU + 0] = 2.0 * (qy * qz - qw * qx) / mass
    fu[5 * NU + 0] = (1.0 - 2.0 * (qx * qx + qy * qy)) / mass
    fu[6 * NU + 1] = -0.5 * qx
    fu[6 * NU + 2] = -0.5 * qy
    fu[6 * NU + 3] = -0.5 * qz
    fu[7 * NU + 1] = 0.5 * qw
    fu[7 * NU + 2] = -0.5 * qz
    fu[7 * NU + 3] = 0.5 * qy
    fu[8 * NU + 1] = 0.5 * qz
    fu[8 * NU + 2] = 0.5 * qw
    fu[8 * NU + 3] = -0.5 * qx
    fu[9 * NU + 1] = -0.5 * qy
    fu[9 * NU + 2] = 0.5 * qx
    fu[9 * NU + 3] = 0.5 * qw


def nmpc_f(X, U, f_ext, double mass, double g):
    cdef cnp.ndarray[double, ndim=2, mode="c"] Xa = np.ascontiguousarray(np.atleast_2d(X), dtype=np.float64)
    cdef cnp.ndarray[double, ndim=2, mode="c"] Ua = np.ascontiguousarray(np.atleast_2d(U), dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1, mode="c"] fe = np.ascontiguousarray(f_ext, dtype=np.float64)
    cdef Py_ssize_t n = Xa.shape[0], k
    cdef cnp.ndarray[double, ndim=2, mode="c"] out = np.empty((n, NX))
    for k in range(n):
        _nmpc_f(&Xa[k, 0], &Ua[k, 0], &fe[0], mass, g, &out[k, 0])
    if np.ndim(X) == 1:
        return out[0]
    return out


def nmpc_jac(X, U, double mass):
    cdef cnp.ndarray[double, ndim=2, mode="c"] Xa = np.ascontiguousarray(X, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=2, mode="c"] Ua = np.ascontiguousarray(U, dtype=np.float64)
    cdef Py_ssize_t n = Xa.shape[0], k
    cdef cnp.ndarray[double, ndim=3, mode="c"] fx = np.empty((n, NX, NX))
    cdef cnp.ndarray[double, ndim=3, mode="c"] fu = np.empty((n, NX, NU))
    for k in range(n):
        _nmpc_jac(&Xa[k, 0], &Ua[k, 0], mass, &fx[k, 0, 0], &fu[k, 0, 0])
    return fx, fu


cdef inline void _rk4(const double* x, const double* u, const double* fe, double mass,
                      double g, double dt, double* xn) noexcept nogil:
    cdef double k1[NX]
    cdef double k2[NX]
    cdef double k3[NX]
    cdef double k4[NX]
    cdef double tmp[NX]
    cdef int i
    _nmpc_f(x, u, fe, mass, g, k1)
    for i in range(NX):
        tmp[i] = x[i] + 0.5 * dt * k1[i]
    _nmpc_f(tmp, u, fe, mass, g, k2)
    for i in range(NX):
        tmp[i] = x[i] + 0.5 * dt * k2[i]
    _nmpc_f(tmp, u, fe, mass, g, k3)
    for i in range(NX):
        tmp[i] = x[i] + dt * k3[i]
    _nmpc_f(tmp, u, fe, mass, g, k4)
    for i in range(NX):
        xn[i] = x[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])


def rk4_rollout(x0, U, f_ext, double mass, double g, double dt):
    cdef cnp.ndarray[double, ndim=2, mode="c"] Ua = np.ascontiguousarray(U, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1, mode="c"] fe = np.ascontiguousarray(f_ext, dtype=np.float64)
    cdef Py_ssize_t N = Ua.shape[0], k
    cdef cnp.ndarray[double, ndim=2, mode="c"] X = np.empty((N + 1, NX))
    X[0] = x0
    for k in range(N):
        _rk4(&X[k, 0], &Ua[k, 0], &fe[0], mass, g, dt, &X[k + 1, 0])
    return X


cdef inline void _matmul(const double* a, const double* b, double* c,
                         int n, int m, int p) noexcept nogil:
    # c[n x p] = a[n x m] @ b[m x p]
    cdef int i, j, l
    cdef double acc
    for i in range(n):
        for j in range(p):
            acc = 0.0
            for l in range(m):
                acc = acc + a[i * m + l] * b[l * p + j]
            c[i * p + j] = acc


def rk4_linearize(X, U, f_ext, double mass, double g, double dt):
    cdef cnp.ndarray[double, ndim=2, mode="c"] Xa = np.ascontiguousarray(X, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=2, mode="c"] Ua = np.ascontiguousarray(U, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1, mode="c"] fe = np.ascontiguousarray(f_ext, dtype=np.float64)
    cdef Py_ssize_t n = Xa.shape[0], k
    cdef cnp.ndarray[double, ndim=2, mode="c"] Xn = np.empty((n, NX))
    cdef cnp.ndarray[double, ndim=3, mode="c"] A = np.empty((n, NX, NX))
    cdef cnp.ndarray[double, ndim=3, mode="c"] B = np.empty((n, NX, NU))
    cdef double kk[4][NX]
    cdef double dx[4][NX * NX]
    cdef double du[4][NX * NU]
    cdef double fx[NX * NX]
    cdef double fu[NX * NU]
    cdef double xs[NX]
    cdef double mx[NX * NX]
    cdef double mu[NX * NU]
    cdef double* x
    cdef double* u
    cdef double c
    cdef int st, i, j
    cdef double h2 = 0.5 * dt
    cdef double coef[4]
    coef[0] = 0.0
    coef[1] = h2
    coef[2] = h2
    coef[3] = dt
    with nogil:
        for k in range(n):
            x = &Xa[k, 0]
            u = &Ua[k, 0]
            for st in range(4):
                c = coef[st]
                if st == 0:
                    for i in range(NX):
                        xs[i] = x[i]
                else:
                    for i in range(NX):
                        xs[i] = x[i] + c * kk[st - 1][i]
                _nmpc_f(xs, u, &fe[0], mass, g, kk[st])
                _nmpc_jac(xs, u, mass, fx, fu)
                if st == 0:
                    for i in range(NX * NX):
                        dx[0][i] = fx[i]
                    for i in range(NX * NU):
                        du[0][i] = fu[i]
                else:
                    # dx_st = fx (I + c dx_{st-1});  du_st = fx (c du_{st-1}) + fu
                    for i in range(NX):
                        for j in range(NX):
                            mx[i * NX + j] = c * dx[st - 1][i * NX + j]
                        mx[i * NX + i] += 1.0
                    _matmul(fx, mx, dx[st], NX, NX, NX)
                    for i in range(NX * NU):
                        mu[i] = c * du[st - 1][i]
                    _matmul(fx, mu, du[st], NX, NX, NU)
                    for i in range(NX * NU):
                        du[st][i] += fu[i]
            for i in range(NX):
                Xn[k, i] = x[i] + dt / 6.0 * (kk[0][i] + 2.0 * kk[1][i] + 2.0 * kk[2][i] + kk[3][i])
                for j in range(NX):
                    A[k, i, j] = dt / 6.0 * (dx[0][i * NX + j] + 2.0 * dx[1][i * NX + j]
                                             + 2.0 * dx[2][i * NX + j] + dx[3][i * NX + j])
                A[k, i, i] += 1.0
                for j in range(NU):
                    B[k, i, j] = dt / 6.0 * (du[0][i * NU + j] + 2.0 * du[1][i * NU + j]
                                             + 2.0 * du[2][i * NU + j] + du[3][i * NU + j])
    return Xn, A, B


# ---------------------------------------------------------------------------
# Plant
# ---------------------------------------------------------------------------

cdef inline void _cross(const double* a, const double* b, double* c) noexcept nogil:
    c[0] = a[1] * b[2] - a[2] * b[1]
    c[1] = a[2] * b[0] - a[0] * b[2]
    c[2] = a[0] * b[1] - a[1] * b[0]


cdef inline int _solve3(const double* M, const double* b, double* x) noexcept nogil:
    # Cramer's rule on a row-major 3x3
    cdef double det = (M[0] * (M[4] * M[8] - M[5] * M[7])
                       - M[1] * (M[3] * M[8] - M[5] * M[6])
                       + M[2] * (M[3] * M[7] - M[4] * M[6]))
    if det == 0.0:
        return -1
    x[0] = (b[0] * (M[4] * M[8] - M[5] * M[7])
            - M[1] * (b[1] * M[8] - M[5] * b[2])
            + M[2] * (b[1] * M[7] - M[4] * b[2])) / det
    x[1] = (M[0] * (b[1] * M[8] - M[5] * b[2])
            - b[0] * (M[3] * M[8] - M[5] * M[6])
            + M[2] * (M[3] * b[2] - b[1] * M[6])) / det
    x[2] = (M[0] * (M[4] * b[2] - b[1] * M[7])
            - M[1] * (M[3] * b[2] - b[1] * M[6])
            + b[0] * (M[3] * M[7] - M[4] * M[6])) / det
    return 0


cdef void _plant_deriv(const double* y, const double* cmd, const double* prm,
                       double* out) noexcept nogil:
    cdef double m = prm[0], g = prm[1]
    cdef const double* I = &prm[2]
    cdef double lx = prm[11], ly = prm[12], ct = prm[13], cm = prm[14], Ir = prm[15]
    cdef double mtau = prm[16], wmin = prm[17], wmax = prm[18], mp = prm[19]
    cdef const double* r = &prm[20]
    cdef const double* q = &y[6]
    cdef const double* w = &y[10]
    cdef double rd[4]
    cdef double s[4]
    cdef double c
    cdef int i, j
    for i in range(4):
        c = cmd[i]
        if c < wmin:
            c = wmin
        elif c > wmax:
            c = wmax
        rd[i] = (c - y[13 + i]) / mtau
        s[i] = y[13 + i] * y[13 + i]
    cdef double T = ct * (s[0] + s[1] + s[2] + s[3])
    cdef double tau[3]
    tau[0] = ly * ct * (s[0] - s[1] - s[2] + s[3])
    tau[1] = -lx * ct * (s[0] + s[1] - s[2] - s[3])
    tau[2] = cm * (-s[0] + s[1] - s[2] + s[3]) + Ir * (-rd[0] + rd[1] - rd[2] + rd[3])

    cdef double M = m + mp
    cdef double mu = mp * m / M
    cdef double Iw[3]
    cdef double wIw[3]
    cdef double wr[3]
    cdef double www[3]
    cdef double rwww[3]
    for i in range(3):
        Iw[i] = I[3 * i] * w[0] + I[3 * i + 1] * w[1] + I[3 * i + 2] * w[2]
    _cross(w, Iw, wIw)
    _cross(w, r, wr)
    _cross(w, wr, www)
    _cross(r, www, rwww)
    cdef double rhs[3]
    rhs[0] = tau[0] - wIw[0] - mu * rwww[0] - (mp / M) * T * r[1]
    rhs[1] = tau[1] - wIw[1] - mu * rwww[1] + (mp / M) * T * r[0]
    rhs[2] = tau[2] - wIw[2] - mu * rwww[2]
    cdef double rr = r[0] * r[0] + r[1] * r[1] + r[2] * r[2]
    cdef double J[9]
    for i in range(3):
        for j in range(3):
            J[3 * i + j] = I[3 * i + j] - mu * r[i] * r[j]
        J[3 * i + i] += mu * rr
    cdef double wd[3]
    _solve3(J, rhs, wd)

    cdef double qw = q[0], qx = q[1], qy = q[2], qz = q[3]
    cdef double R[9]
    R[0] = 1 - 2 * (qy * qy + qz * qz)
    R[1] = 2 * (qx * qy - qw * qz)
    R[2] = 2 * (qx * qz + qw * qy)
    R[3] = 2 * (qx * qy + qw * qz)
    R[4] = 1 - 2 * (qx * qx + qz * qz)
    R[5] = 2 * (qy * qz - qw * qx)
    R[6] = 2 * (qx * qz - qw * qy)
    R[7] = 2 * (qy * qz + qw * qx)
    R[8] = 1 - 2 * (qx * qx + qy * qy)
    cdef double wdr[3]
    _cross(wd, r, wdr)
    cdef double ab[3]
    for i in range(3):
        # R^T (0,0,-g) = -g * R[2, i]
        ab[i] = (M * (-g * R[6 + i]) - mp * www[i] - mp * wdr[i]) / M
    ab[2] += T / M
    for i in range(3):
        out[i] = y[3 + i]
        out[3 + i] = R[3 * i] * ab[0] + R[3 * i + 1] * ab[1] + R[3 * i + 2] * ab[2]
    out[6] = 0.5 * (-qx * w[0] - qy * w[1] - qz * w[2])
    out[7] = 0.5 * (qw * w[0] + qy * w[2] - qz * w[1])
    out[8] = 0.5 * (qw * w[1] + qz * w[0] - qx * w[2])
    out[9] = 0.5 * (qw * w[2] + qx * w[1] - qy * w[0])
    for i in range(3):
        out[10 + i] = wd[i]
    for i in range(4):
        out[13 + i] = rd[i]


def plant_deriv(y, cmd, prm):
    cdef cnp.ndarray[double, ndim=1, mode="c"] ya = np.ascontiguousarray(y, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1, mode="c"] ca = np.ascontiguousarray(cmd, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1, mode="c"] pa = np.ascontiguousarray(prm, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1, mode="c"] out = np.empty(NY)
    _plant_deriv(&ya[0], &ca[0], &pa[0], &out[0])
    return out


def plant_step(y, cmd, prm, double dt):
    cdef cnp.ndarray[double, ndim=1, mode="c"] ya = np.ascontiguousarray(y, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1, mode="c"] ca = np.ascontiguousarray(cmd, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1, mode="c"] pa = np.ascontiguousarray(prm, dtype=np.float64)
    cdef cnp.ndarray[double, ndim=1, mode="c"] yn = np.empty(NY)
    cdef double k1[NY]
    cdef double k2[NY]
    cdef double k3[NY]
    cdef double k4[NY]
    cdef double tmp[NY]
    cdef double* y0 = &ya[0]
    cdef int i
    cdef double nrm
    with nogil:
        _plant_deriv(y0, &ca[0], &pa[0], k1)
        for i in range(NY):
            tmp[i] = y0[i] + 0.5 * dt * k1[i]
        _plant_deriv(tmp, &ca[0], &pa[0], k2)
        for i in range(NY):
            tmp[i] = y0[i] + 0.5 * dt * k2[i]
        _plant_deriv(tmp, &ca[0], &pa[0], k3)
        for i in range(NY):
            tmp[i] = y0[i] + dt * k3[i]
        _plant_deriv(tmp, &ca[0], &pa[0], k4)
        for i in range(NY):
            yn[i] = y0[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])
        nrm = sqrt(yn[6] * yn[6] + yn[7] * yn[7] + yn[8] * yn[8] + yn[9] * yn[9])
        for i in range(6, 10):
            yn[i] = yn[i] / nrm
    return yn
