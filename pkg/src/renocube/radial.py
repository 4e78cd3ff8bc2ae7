"""1D machinery for radially symmetric fields on R^3.

A radial profile is represented by samples on an increasing grid starting
at 0; between samples it is interpolated linearly and beyond the last node
it is taken to be zero (every profile used here is compactly supported or
tabulated far enough out).  All rules are fixed-order and deterministic.
"""

import numpy as np
from scipy.integrate import cumulative_trapezoid, trapezoid

__all__ = [
    "interp_radial",
    "shell_integral",
    "cumulative_shell_mass",
    "radial_potential",
    "radial_convolve",
]


def interp_radial(r, vals, x):
    """Piecewise-linear evaluation of a tabulated profile, zero beyond it."""
    return np.interp(np.asarray(x, dtype=float), r, vals,
                     left=vals[0], right=0.0)


def shell_integral(r, f):
    """int 4 pi r^2 f(r) dr over the grid by the trapezoid rule."""
    return float(trapezoid(4.0 * np.pi * r * r * f, r))


def cumulative_shell_mass(r, f):
    """M(r_k) = int_0^{r_k} 4 pi s^2 f(s) ds."""
    return cumulative_trapezoid(4.0 * np.pi * r * r * f, r, initial=0.0)


def radial_potential(r, q):
    """Newtonian potential K * q of a radial charge density q.

    phi(r) = Q_in(r)/(4 pi r) + int_r^R s q(s) ds with Q_in the enclosed
    charge; q is treated as zero beyond the grid, so the tail term stops
    at the last node.
    """
    enclosed = cumulative_shell_mass(r, q)
    inner = cumulative_trapezoid(r * q, r, initial=0.0)
    tail = inner[-1] - inner
    out = np.array(tail)
    pos = r > 0.0
    out[pos] += enclosed[pos] / (4.0 * np.pi * r[pos])
    return out


def radial_convolve(r_f, f, r_g, g, r_out, chunk=128):
    """3D convolution (f * g)(|x|) of two radial profiles.

    The angular integral is exact: with G(u) = int_0^u tau g(tau) dtau,
    (f*g)(r) = (2 pi / r) int s f(s) [G(r+s) - G(|r-s|)] ds, and the r -> 0
    limit is 4 pi int s^2 f(s) g(s) ds.
    """
    r_out = np.atleast_1d(np.asarray(r_out, dtype=float))
    gt = cumulative_trapezoid(r_g * g, r_g, initial=0.0)

    def big_g(u):
        return np.interp(u, r_g, gt, right=gt[-1])

    out = np.empty(r_out.shape)
    small = r_out < 1e-12
    if np.any(small):
        g_on_f = interp_radial(r_g, g, r_f)
        out[small] = 4.0 * np.pi * trapezoid(r_f * r_f * f * g_on_f, r_f)
    idx = np.nonzero(~small)[0]
    for lo in range(0, idx.size, chunk):
        sel = idx[lo:lo + chunk]
        rb = r_out[sel][:, None]
        s = r_f[None, :]
        ker = big_g(rb + s) - big_g(np.abs(rb - s))
        vals = trapezoid(s * f[None, :] * ker, r_f, axis=1)
        out[sel] = 2.0 * np.pi * vals / r_out[sel]
    return out
