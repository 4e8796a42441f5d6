# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled cone-projection kernel for the splitting solver.

One `Stepper.step` call runs the relaxed projection/update of an iteration
entirely in C: fused vector arithmetic, per-segment cone projections and the
PSD eigenvalue clipping via LAPACK dsyevd.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport sqrt
from scipy.linalg.cython_lapack cimport dsyevd
from scipy.linalg.cython_blas cimport dsyrk

cnp.import_array()

BACKEND = "cython"

cdef int FREE = 0, NONNEG = 1, PSD = 2


cdef class Stepper:
    """Pre-sized workspace bound to one cone layout."""

    cdef int nseg, total, dmax, lwork, liwork
    cdef cnp.ndarray kinds_a, offs_a, lens_a, orders_a
    cdef cnp.ndarray mat_a, fac_a, eig_a, work_a, iwork_a, t_a

    def __init__(self, kinds, params):
        cdef int off = 0, d, length, k
        kinds = np.asarray(kinds, dtype=np.int32)
        params = np.asarray(params, dtype=np.int32)
        self.nseg = kinds.shape[0]
        self.kinds_a = np.array(kinds, dtype=np.int32)
        offs = np.zeros(self.nseg, dtype=np.int32)
        lens = np.zeros(self.nseg, dtype=np.int32)
        orders = np.zeros(self.nseg, dtype=np.int32)
        self.dmax = 1
        for k in range(self.nseg):
            offs[k] = off
            if kinds[k] == PSD:
                d = params[k]
                length = d * (d + 1) // 2
                orders[k] = d
                if d > self.dmax:
                    self.dmax = d
            else:
                length = params[k]
            lens[k] = length
            off += length
        self.total = off
        self.offs_a = offs
        self.lens_a = lens
        self.orders_a = orders
        # dsyevd workspace bounds for order <= dmax
        d = self.dmax
        self.lwork = 1 + 6 * d + 2 * d * d + 64 * d
        self.liwork = 3 + 5 * d
        self.mat_a = np.zeros(d * d)
        self.fac_a = np.zeros(d * d)
        self.eig_a = np.zeros(d)
        self.work_a = np.zeros(self.lwork)
        self.iwork_a = np.zeros(self.liwork, dtype=np.int32)
        self.t_a = np.zeros(self.total)

    def step(self, double[::1] u, double[::1] v, double[::1] utilde,
             double alpha):
        cdef double[::1] t = self.t_a
        cdef int[::1] kinds = self.kinds_a
        cdef int[::1] offs = self.offs_a
        cdef int[::1] lens = self.lens_a
        cdef int[::1] orders = self.orders_a
        cdef int k, i, off, length
        cdef double beta = 1.0 - alpha
        cdef double w

        if u.shape[0] != self.total:
            raise ValueError("vector length does not match cone layout")

        # t = alpha*utilde + (1-alpha)*u (kept for the v update)
        for i in range(self.total):
            t[i] = alpha * utilde[i] + beta * u[i]

        for k in range(self.nseg):
            off = offs[k]
            length = lens[k]
            if kinds[k] == FREE:
                for i in range(off, off + length):
                    u[i] = t[i] - v[i]
            elif kinds[k] == NONNEG:
                for i in range(off, off + length):
                    w = t[i] - v[i]
                    u[i] = w if w > 0.0 else 0.0
            else:
                self._psd_segment(u, v, t, off, orders[k])

        for i in range(self.total):
            v[i] = v[i] - t[i] + u[i]

    cdef void _psd_segment(self, double[::1] u, double[::1] v,
                           double[::1] t, int off, int d):
        cdef double[::1] mat = self.mat_a
        cdef double[::1] fac = self.fac_a
        cdef double[::1] eig = self.eig_a
        cdef double[::1] work = self.work_a
        cdef int[::1] iwork = self.iwork_a
        cdef int i, j, k, pos, info, npos, lwork, liwork
        cdef double invr2 = 1.0 / sqrt(2.0), r2 = sqrt(2.0)
        cdef double val, s
        cdef char uplo = b'L', jobz = b'V', trans = b'N'
        cdef double one = 1.0, zero = 0.0

        # unpack svec (column-major lower triangle) into a full column-major
        # d x d buffer; w = t - v formed on the fly
        pos = off
        for j in range(d):
            mat[j * d + j] = t[pos] - v[pos]
            pos += 1
            for i in range(j + 1, d):
                val = (t[pos] - v[pos]) * invr2
                mat[j * d + i] = val
                mat[i * d + j] = val
                pos += 1

        lwork = self.lwork
        liwork = self.liwork
        dsyevd(&jobz, &uplo, &d, &mat[0], &d, &eig[0], &work[0], &lwork,
               <int*>&iwork[0], &liwork, &info)
        if info != 0:
            raise RuntimeError(f"dsyevd failed with info={info}")

        if eig[0] >= 0.0:
            # already PSD: copy w through unchanged
            pos = off
            for j in range(d):
                for i in range(j, d):
                    u[pos] = t[pos] - v[pos]
                    pos += 1
            return

        # columns with positive eigenvalues, scaled by sqrt(lambda)
        npos = 0
        for k in range(d):
            if eig[k] > 0.0:
                s = sqrt(eig[k])
                for i in range(d):
                    fac[npos * d + i] = mat[k * d + i] * s
                npos += 1

        if npos == 0:
            pos = off
            for j in range(d):
                for i in range(j, d):
                    u[pos] = 0.0
                    pos += 1
            return

        # proj = fac @ fac.T (lower triangle) via dsyrk
        for i in range(d * d):
            mat[i] = 0.0
        dsyrk(&uplo, &trans, &d, &npos, &one, &fac[0], &d, &zero, &mat[0], &d)

        pos = off
        for j in range(d):
            u[pos] = mat[j * d + j]
            pos += 1
            for i in range(j + 1, d):
                u[pos] = mat[j * d + i] * r2
                pos += 1


def make_stepper(kinds, params):
    stepper = Stepper(kinds, params)

    def step(u, v, utilde, alpha):
        stepper.step(u, v, utilde, alpha)

    return step
