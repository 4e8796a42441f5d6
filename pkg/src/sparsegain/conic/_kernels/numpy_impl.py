"""Pure-numpy cone-projection kernel (fallback backend).

Mirrors the compiled kernel in ``cyproj.pyx``: one call performs the
relaxed projection/update step of the splitting iteration in place.
"""

from __future__ import annotations

import numpy as np

BACKEND = "numpy"

FREE, NONNEG, PSD = 0, 1, 2


def _segments(kinds, params):
    """(kind, offset, length, order, rows, cols, pack, unpack) per segment."""
    segs = []
    off = 0
    for kind, par in zip(kinds, params):
        if kind == PSD:
            d = int(par)
            length = d * (d + 1) // 2
            rows = np.array([i for j in range(d) for i in range(j, d)])
            cols = np.array([j for j in range(d) for _ in range(j, d)])
            pack = np.where(rows == cols, 1.0, np.sqrt(2.0))
            segs.append((PSD, off, length, d, rows, cols, pack, 1.0 / pack))
        else:
            length = int(par)
            segs.append((int(kind), off, length, 0, None, None, None, None))
        off += length
    return segs, off


def make_stepper(kinds, params):
    """Build the in-place relax/project/update step for a cone layout."""
    segs, total = _segments(kinds, params)

    def step(u, v, utilde, alpha):
        # t = alpha*utilde + (1-alpha)*u ; w = t - v ; u <- proj(w) ; v <- v - t + u
        t = alpha * utilde + (1.0 - alpha) * u
        w = t - v
        for kind, off, length, d, rows, cols, pack, unpack in segs:
            seg = w[off : off + length]
            if kind == FREE:
                u[off : off + length] = seg
            elif kind == NONNEG:
                np.maximum(seg, 0.0, out=u[off : off + length])
            else:
                mat = np.zeros((d, d))
                vals_in = seg * unpack
                mat[rows, cols] = vals_in
                mat[cols, rows] = vals_in
                lam, vecs = np.linalg.eigh(mat)
                if lam[0] >= 0.0:
                    u[off : off + length] = seg
                else:
                    np.clip(lam, 0.0, None, out=lam)
                    proj = (vecs * lam) @ vecs.T
                    u[off : off + length] = proj[rows, cols] * pack
        v -= t
        v += u

    return step


def project_dual(w, kinds, params):
    """Projection onto the dual cone (free -> 0, nonneg/psd self-dual)."""
    segs, total = _segments(kinds, params)
    out = np.empty_like(w)
    for kind, off, length, d, rows, cols, pack, unpack in segs:
        seg = w[off : off + length]
        if kind == FREE:
            out[off : off + length] = 0.0
        elif kind == NONNEG:
            out[off : off + length] = np.maximum(seg, 0.0)
        else:
            mat = np.zeros((d, d))
            vals_in = seg * unpack
            mat[rows, cols] = vals_in
            mat[cols, rows] = vals_in
            lam, vecs = np.linalg.eigh(mat)
            np.clip(lam, 0.0, None, out=lam)
            proj = (vecs * lam) @ vecs.T
            out[off : off + length] = proj[rows, cols] * pack
    return out
