"""Compiled inner loop for the best four-anchor search.

For four unit vectors ``u_k = (cos t_k, sin t_k)`` the normal matrix is
``P^T P = 2 I + 1/2 [[X, Y], [Y, -X]]`` with ``X + iY = sum exp(2 i t_k)``, so
``trace((P^T P)^-1) = 16 / (16 - |Z|^2)``.  Minimising PDoP over subsets is
therefore minimising the modulus of a sum of four doubled-angle phasors.
"""

import numpy as np
from numba import njit

SINGULAR_MARGIN = 16e-12


@njit(cache=True)
def min_phasor_pdop(points, anchors, n_active, rho_max):
    n_pts = points.shape[0]
    n_anc = anchors.shape[0]
    pdop = np.full(n_pts, np.inf)
    best_idx = np.full((n_pts, 4), -1, dtype=np.int64)
    zr = np.empty(n_anc)
    zi = np.empty(n_anc)
    ids = np.empty(n_anc, dtype=np.int64)
    rho2 = rho_max * rho_max
    for p in range(n_pts):
        px = points[p, 0]
        py = points[p, 1]
        m = 0
        for a in range(min(n_active[p], n_anc)):
            dx = px - anchors[a, 0]
            dy = py - anchors[a, 1]
            d2 = dx * dx + dy * dy
            if d2 > rho2 or d2 <= 1e-24:
                continue
            zr[m] = (dx * dx - dy * dy) / d2
            zi[m] = 2.0 * dx * dy / d2
            ids[m] = a
            m += 1
        if m < 4:
            continue
        best = np.inf
        b0 = b1 = b2 = b3 = -1
        for i in range(m - 3):
            for j in range(i + 1, m - 2):
                rij = zr[i] + zr[j]
                iij = zi[i] + zi[j]
                for k in range(j + 1, m - 1):
                    rijk = rij + zr[k]
                    iijk = iij + zi[k]
                    for l in range(k + 1, m):
                        sr = rijk + zr[l]
                        si = iijk + zi[l]
                        mag = sr * sr + si * si
                        if mag < best:
                            best = mag
                            b0 = i
                            b1 = j
                            b2 = k
                            b3 = l
        den = 16.0 - best
        if den > SINGULAR_MARGIN:
            pdop[p] = 4.0 / np.sqrt(den)
        best_idx[p, 0] = ids[b0]
        best_idx[p, 1] = ids[b1]
        best_idx[p, 2] = ids[b2]
        best_idx[p, 3] = ids[b3]
    return pdop, best_idx
