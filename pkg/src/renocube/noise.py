"""White-noise sampling and mollification on padded cube grids.

Noise is sampled cell-wise on a padded box so the mollified field is defined
on all of the closed cube.  Sampling uses the counter-based Philox generator,
so a seed determines the field bit-for-bit regardless of scheduling.
"""

import json
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import integrate, ndimage, signal

from .errors import ConfigError
from .geometry import SPACETIME4, SPATIAL3

STANDARD_BUMP = "standard-bump"
COSINE_BUMP = "cosine-bump"


def _profile_fn(profile_id):
    if profile_id == STANDARD_BUMP:
        def f(u):
            u = np.asarray(u, dtype=float)
            out = np.zeros_like(u)
            inside = np.abs(u) < 1.0
            ui = u[inside]
            out[inside] = np.exp(-1.0 / (1.0 - ui * ui))
            return out
        return f
    if profile_id == COSINE_BUMP:
        def f(u):
            u = np.asarray(u, dtype=float)
            return np.where(np.abs(u) < 1.0, 0.5 * (1.0 + np.cos(np.pi * u)), 0.0)
        return f
    raise ConfigError(f"unknown mollifier profile {profile_id!r}")


@lru_cache(maxsize=None)
def _norm_constants(profile_id):
    """(Z1, Z3): 1D mass and 3D radial mass of the unnormalized profile."""
    f = _profile_fn(profile_id)
    z1, _ = integrate.quad(lambda u: f(u)[()], -1.0, 1.0, limit=200)
    z3, _ = integrate.quad(lambda r: 4.0 * np.pi * r * r * f(r)[()], 0.0, 1.0, limit=200)
    return z1, z3


@dataclass(frozen=True)
class Mollifier:
    """Normalized bump rho_eps; spatial eps^-3 rho(x/eps) or parabolic
    eps^-5 rho(t/eps^2, x/eps) with a product profile in the latter case."""

    profile_id: str
    eps: float
    frame: str = SPATIAL3

    def __post_init__(self):
        _profile_fn(self.profile_id)  # validates the id

    # --- continuum quantities -------------------------------------------

    def density(self, x):
        """rho_eps at spatial points x (shape (..., 3))."""
        if self.frame != SPATIAL3:
            raise ConfigError("density() is for the spatial frame")
        f = _profile_fn(self.profile_id)
        _, z3 = _norm_constants(self.profile_id)
        r = np.linalg.norm(np.asarray(x, dtype=float), axis=-1)
        return f(r / self.eps) / (z3 * self.eps ** 3)

    def density_st(self, t, x):
        """rho_eps at space-time points (t, x) in the parabolic frame."""
        if self.frame != SPACETIME4:
            raise ConfigError("density_st() is for the space-time frame")
        f = _profile_fn(self.profile_id)
        z1, _ = _norm_constants(self.profile_id)
        x = np.asarray(x, dtype=float)
        val = f(np.asarray(t, dtype=float) / self.eps ** 2) / z1
        for i in range(3):
            val = val * f(x[..., i] / self.eps) / z1
        return val / self.eps ** 5

    def density_radial(self, r):
        """rho_eps as a function of |x| alone (spatial frame)."""
        if self.frame != SPATIAL3:
            raise ConfigError("density_radial() is for the spatial frame")
        f = _profile_fn(self.profile_id)
        _, z3 = _norm_constants(self.profile_id)
        return f(np.asarray(r, dtype=float) / self.eps) / (z3 * self.eps ** 3)

    def profile_time(self, t):
        """1D temporal factor eps^-2 f(t/eps^2)/Z1 of the parabolic density."""
        if self.frame != SPACETIME4:
            raise ConfigError("profile_time() is for the space-time frame")
        f = _profile_fn(self.profile_id)
        z1, _ = _norm_constants(self.profile_id)
        return f(np.asarray(t, dtype=float) / self.eps ** 2) / (z1 * self.eps ** 2)

    def profile_space(self, x):
        """1D per-axis factor eps^-1 f(x/eps)/Z1 of the parabolic density."""
        if self.frame != SPACETIME4:
            raise ConfigError("profile_space() is for the space-time frame")
        f = _profile_fn(self.profile_id)
        z1, _ = _norm_constants(self.profile_id)
        return f(np.asarray(x, dtype=float) / self.eps) / (z1 * self.eps)

    def mass(self):
        """Quadrature of the normalized density; 1 within quad tolerance."""
        f = _profile_fn(self.profile_id)
        if self.frame == SPATIAL3:
            _, z3 = _norm_constants(self.profile_id)
            val, _ = integrate.quad(
                lambda r: 4.0 * np.pi * r * r * f(r)[()] / z3, 0.0, 1.0, limit=200
            )
            return val
        z1, _ = _norm_constants(self.profile_id)
        val, _ = integrate.quad(lambda u: f(u)[()] / z1, -1.0, 1.0, limit=200)
        return val ** 4

    def second_moment(self):
        """int |x|^2 rho_eps dx (spatial frame); scales as eps^2."""
        if self.frame != SPATIAL3:
            raise ConfigError("second_moment() is for the spatial frame")
        f = _profile_fn(self.profile_id)
        _, z3 = _norm_constants(self.profile_id)
        val, _ = integrate.quad(
            lambda r: 4.0 * np.pi * r ** 4 * f(r)[()] / z3, 0.0, 1.0, limit=200
        )
        return val * self.eps ** 2

    def l2_sq(self):
        """int rho_eps^2; the pointwise variance of the mollified noise."""
        f = _profile_fn(self.profile_id)
        if self.frame == SPATIAL3:
            _, z3 = _norm_constants(self.profile_id)
            val, _ = integrate.quad(
                lambda r: 4.0 * np.pi * r * r * (f(r)[()] / z3) ** 2, 0.0, 1.0, limit=200
            )
            return val / self.eps ** 3
        z1, _ = _norm_constants(self.profile_id)
        v1, _ = integrate.quad(lambda u: (f(u)[()] / z1) ** 2, -1.0, 1.0, limit=200)
        return v1 ** 4 / self.eps ** 5

    # --- discrete stencils ----------------------------------------------

    def stencil(self, h):
        """Cubic array of convolution weights at grid spacing h, sum = 1."""
        if self.frame != SPATIAL3:
            raise ConfigError("stencil() is for the spatial frame; see stencil_axes()")
        if self.eps < 2.0 * h:
            raise ConfigError(f"eps={self.eps} under-resolved at spacing h={h}")
        radius = int(np.floor(self.eps / h))
        v = np.arange(-radius, radius + 1) * h
        xx, yy, zz = np.meshgrid(v, v, v, indexing="ij")
        pts = np.stack([xx, yy, zz], axis=-1)
        w = self.density(pts) * h ** 3
        return w / w.sum()

    def stencil_axes(self, h, dt):
        """Four 1D weight arrays (t, x, y, z) for the parabolic product
        stencil; each normalized to sum 1."""
        if self.frame != SPACETIME4:
            raise ConfigError("stencil_axes() is for the space-time frame")
        if self.eps < 2.0 * h:
            raise ConfigError(f"eps={self.eps} under-resolved at spacing h={h}")
        if self.eps ** 2 < 2.0 * dt:
            raise ConfigError(f"eps^2={self.eps**2} under-resolved at time step {dt}")
        f = _profile_fn(self.profile_id)
        rt = int(np.floor(self.eps ** 2 / dt))
        wt = f(np.arange(-rt, rt + 1) * dt / self.eps ** 2)
        rs = int(np.floor(self.eps / h))
        ws = f(np.arange(-rs, rs + 1) * h / self.eps)
        axes = [wt / wt.sum()] + [ws / ws.sum()] * 3
        return axes

    def stencil_radius(self, h):
        return int(np.floor(self.eps / h))


def make_mollifier(profile_id, eps, frame=SPATIAL3):
    """Normalized mollifier with scale eps in (0, 1]."""
    if eps <= 0:
        raise ConfigError("mollifier scale eps must be positive")
    if eps > 1:
        raise ConfigError("mollifier scale eps must be at most 1")
    return Mollifier(profile_id=profile_id, eps=eps, frame=frame)


# --- noise samples -------------------------------------------------------


@dataclass(frozen=True)
class NoiseSample:
    """Lattice white-noise field on a padded grid."""

    grid: object
    frame: str
    seed: int
    values: np.ndarray
    pad_cells: int = 0
    pad_steps: int = 0


def _rng(seed):
    return np.random.Generator(np.random.Philox(key=seed))


def sample_white_noise_3d(grid, seed, pad_cells=0, dtype=np.float64):
    """i.i.d. N(0, h^-3) per cell on the (n + 2*pad)^3 padded grid."""
    m = grid.n + 2 * pad_cells
    sigma = grid.h ** -1.5
    values = _rng(seed).standard_normal((m, m, m), dtype=dtype)
    values *= dtype(sigma) if dtype != np.float64 else sigma
    return NoiseSample(grid=grid, frame=SPATIAL3, seed=seed, values=values,
                       pad_cells=pad_cells)


def sample_spacetime_increments(grid, seed, pad_cells=0, pad_steps=0,
                                dtype=np.float64):
    """Per-step spatial fields of i.i.d. N(0, (dt*h^3)^-1): cell averages of
    space-time white noise."""
    m = grid.n + 2 * pad_cells
    steps = grid.step_count + 2 * pad_steps
    sigma = (grid.time_step * grid.h ** 3) ** -0.5
    values = _rng(seed).standard_normal((steps, m, m, m), dtype=dtype)
    values *= dtype(sigma) if dtype != np.float64 else sigma
    return NoiseSample(grid=grid, frame=SPACETIME4, seed=seed, values=values,
                       pad_cells=pad_cells, pad_steps=pad_steps)


def mollify(sample, m):
    """Convolve a padded noise sample with the mollifier stencil; returns the
    field on the unpadded interior grid."""
    if sample.frame != m.frame:
        raise ConfigError("field frame does not match mollifier frame")
    h = sample.grid.h
    radius = m.stencil_radius(h)
    if sample.pad_cells < radius:
        raise ConfigError(
            f"padding {sample.pad_cells} cells < stencil radius {radius}"
        )
    if m.frame == SPATIAL3:
        w = m.stencil(h)
        out = signal.fftconvolve(sample.values, w, mode="valid")
        crop = sample.pad_cells - radius
        if crop:
            out = out[crop:-crop, crop:-crop, crop:-crop]
        return out
    # space-time: separable product stencil, one pass per axis
    axes = m.stencil_axes(h, sample.grid.time_step)
    rt = (len(axes[0]) - 1) // 2
    if sample.pad_steps < rt:
        raise ConfigError(f"padding {sample.pad_steps} steps < stencil radius {rt}")
    out = sample.values
    for axis, w in enumerate(axes):
        out = ndimage.convolve1d(out, w.astype(out.dtype), axis=axis,
                                 mode="constant")
    sl_t = slice(sample.pad_steps, sample.pad_steps + sample.grid.step_count)
    c = sample.pad_cells
    return out[sl_t, c:-c or None, c:-c or None, c:-c or None]


def var_point_discrete(m, h):
    """Exact variance of the discretely mollified field at one point."""
    if m.frame == SPATIAL3:
        w = m.stencil(h)
        return float(np.sum(w * w)) * h ** -3
    raise ConfigError("var_point_discrete() is for the spatial frame")


def var_diff_discrete(m_fine, m_coarse, h):
    """Exact variance of (xi_eps' - xi_eps) under master-noise coupling."""
    w1 = m_fine.stencil(h)
    w2 = m_coarse.stencil(h)
    r1, r2 = (w1.shape[0] - 1) // 2, (w2.shape[0] - 1) // 2
    r = max(r1, r2)
    big = np.zeros((2 * r + 1,) * 3)
    s1 = slice(r - r1, r + r1 + 1)
    s2 = slice(r - r2, r + r2 + 1)
    big[s1, s1, s1] += w1
    big[s2, s2, s2] -= w2
    return float(np.sum(big * big)) * h ** -3


def restrict_to_coarse(field, factor):
    """Block-average a fine spatial field onto a grid coarser by `factor`."""
    n = field.shape[-1]
    if n % factor:
        raise ConfigError(f"grid size {n} not divisible by factor {factor}")
    nc = n // factor
    shape = field.shape[:-3] + (nc, factor, nc, factor, nc, factor)
    return field.reshape(shape).mean(axis=(-5, -3, -1))


# --- raw field dump ------------------------------------------------------


def dump_field(path, field, header):
    """Write a field as a one-line JSON header plus raw float64 bytes."""
    header = dict(header)
    header["shape"] = list(field.shape)
    with open(path, "wb") as fh:
        fh.write((json.dumps(header, sort_keys=True) + "\n").encode())
        fh.write(np.ascontiguousarray(field, dtype=np.float64).tobytes())


def load_field(path):
    """Inverse of dump_field; returns (field, header)."""
    with open(path, "rb") as fh:
        header = json.loads(fh.readline().decode())
        data = np.frombuffer(fh.read(), dtype=np.float64)
    return data.reshape(header["shape"]), header
