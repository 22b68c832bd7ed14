"""Exact 1D TV denoising by Condat's direct (taut-string type) algorithm."""

import numpy as np


def tv1d_denoise(y, lam: float) -> np.ndarray:
    """Solve ``min_x 0.5 * ||x - y||^2 + lam * sum |x[k+1] - x[k]|`` exactly.

    Port of L. Condat, "A direct algorithm for 1D total variation
    denoising", IEEE SPL 20(11), 2013.
    """
    y = np.asarray(y, dtype=float)
    n = y.size
    x = np.empty(n)
    if n == 0:
        return x
    yl = y.tolist()
    out = [0.0] * n
    mlam = -lam
    twolam = 2.0 * lam
    k = k0 = kplus = kminus = 0
    umin, umax = lam, -lam
    vmin, vmax = yl[0] - lam, yl[0] + lam
    while True:
        while k == n - 1:
            if umin < 0.0:
                while True:
                    out[k0] = vmin
                    k0 += 1
                    if k0 > kminus:
                        break
                k = kminus = k0
                vmin = yl[k0]
                umin = lam
                umax = vmin + umin - vmax
            elif umax > 0.0:
                while True:
                    out[k0] = vmax
                    k0 += 1
                    if k0 > kplus:
                        break
                k = kplus = k0
                vmax = yl[k0]
                umax = mlam
                umin = vmax + umax - vmin
            else:
                vmin += umin / (k - k0 + 1)
                while True:
                    out[k0] = vmin
                    k0 += 1
                    if k0 > k:
                        break
                x[:] = out
                return x
        umin += yl[k + 1] - vmin
        if umin < mlam:
            while True:
                out[k0] = vmin
                k0 += 1
                if k0 > kminus:
                    break
            k = kplus = kminus = k0
            vmin = yl[k0]
            vmax = vmin + twolam
            umin, umax = lam, mlam
            continue
        umax += yl[k + 1] - vmax
        if umax > lam:
            while True:
                out[k0] = vmax
                k0 += 1
                if k0 > kplus:
                    break
            k = kplus = kminus = k0
            vmax = yl[k0]
            vmin = vmax - twolam
            umin, umax = lam, mlam
            continue
        k += 1
        if umin >= lam:
            kminus = k
            vmin += (umin - lam) / (kminus - k0 + 1)
            umin = lam
        if umax <= mlam:
            kplus = k
            vmax += (umax + lam) / (kplus - k0 + 1)
            umax = mlam
