"""Compiled forward-Euler kernels.

Fields are 2D arrays; a 1D grid is carried as shape ``(n, 1)`` and the
y-sweep is skipped.  The kernels never leave the state half-updated: new
values are staged in the Laplacian buffers and copied back only once every
cell of the step is finite.
"""

import math

import numpy as np
from numba import njit

OK = 0
NONFINITE = 1


@njit(cache=True, nogil=True)
def forcing_value(code, scalars, breakpoints, values, t, lam_hat):
    if code == 0:
        raw = scalars[0]
    elif code == 1:
        raw = values[np.searchsorted(breakpoints, t, side="left")]
    else:
        raw = scalars[1] + scalars[2] * math.sin(2.0 * math.pi * t / scalars[3])
    if raw < 0.0:
        raw = 0.0
    if raw > lam_hat:
        raw = lam_hat
    return raw


@njit(cache=True, nogil=True)
def reaction(kind, p, u, v):
    if u == 0.0:
        return 0.0
    if kind == 0:
        if p == 1.0:
            return u * v
        return u * v**p
    if kind == 1:
        return u * math.expm1(v**p)
    return u * math.expm1(v)


@njit(cache=True, nogil=True)
def _laplacian(z, out, hx2, hy2):
    nx, ny = z.shape
    rx = 1.0 / hx2
    if ny == 1:
        for i in range(nx):
            im = i - 1 if i > 0 else 0
            ip = i + 1 if i < nx - 1 else nx - 1
            out[i, 0] = (z[im, 0] - 2.0 * z[i, 0] + z[ip, 0]) * rx
        return
    ry = 1.0 / hy2
    for i in range(nx):
        im = i - 1 if i > 0 else 0
        ip = i + 1 if i < nx - 1 else nx - 1
        for j in range(ny):
            jm = j - 1 if j > 0 else 0
            jp = j + 1 if j < ny - 1 else ny - 1
            c = z[i, j]
            out[i, j] = (z[im, j] - 2.0 * c + z[ip, j]) * rx + (
                z[i, jm] - 2.0 * c + z[i, jp]
            ) * ry


@njit(cache=True, nogil=True)
def advance(
    u, z, t0, dt, nsteps, transformed,
    a, b, d, Lam, mu, ratio, ueq,
    fcode, fscalars, fbreaks, fvalues, lam_hat,
    nkind, npar, hx2, hy2,
):
    """Advance ``(u, z)`` in place by up to ``nsteps`` steps.

    ``z`` is ``v`` on the direct path and ``w = v - ratio (ueq - u)`` on the
    transformed path.  Returns ``(steps_done, status, i, j, clamps)`` where
    ``(i, j)`` is the first non-finite cell when ``status != OK`` and
    ``clamps`` counts negative densities clamped to zero inside ``f``.
    """
    lu = np.empty_like(u)
    lz = np.empty_like(z)
    uf1 = u.reshape(-1)
    zf1 = z.reshape(-1)
    lu1 = lu.reshape(-1)
    lz1 = lz.reshape(-1)
    ny = u.shape[1]
    n = uf1.size
    clamps = 0
    for k in range(nsteps):
        t = t0 + k * dt
        lam = forcing_value(fcode, fscalars, fbreaks, fvalues, t, lam_hat)
        _laplacian(u, lu, hx2, hy2)
        _laplacian(z, lz, hx2, hy2)
        for c in range(n):
            uc = uf1[c]
            zc = zf1[c]
            if transformed:
                vc = zc + ratio * (ueq - uc)
            else:
                vc = zc
            uf = uc
            vf = vc
            if uf < 0.0:
                uf = 0.0
                clamps += 1
            if vf < 0.0:
                vf = 0.0
                clamps += 1
            r = lam * reaction(nkind, npar, uf, vf)
            un = uc + dt * (a * lu1[c] + Lam - r - mu * uc)
            if transformed:
                zn = zc + dt * (d * lz1[c] + (1.0 - ratio) * r - mu * zc)
            else:
                zn = zc + dt * (b * lu1[c] + d * lz1[c] + r - mu * zc)
            if not (math.isfinite(un) and math.isfinite(zn)):
                return k, NONFINITE, c // ny, c % ny, clamps
            lu1[c] = un
            lz1[c] = zn
        uf1[:] = lu1
        zf1[:] = lz1
    return nsteps, OK, -1, -1, clamps
