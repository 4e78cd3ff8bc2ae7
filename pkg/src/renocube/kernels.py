"""Poisson and heat kernels: free, truncated, half-space and cube variants.

Boundary kernels are built by the method of images.  A Robin condition with
coefficient a in [0, inf] turns each reflection into an exponential average
over images pushed outward: the correction measure per reflection is
delta_0 - 2a e^{-ar} dr.  a = 0 keeps plain Neumann images, a = inf collapses
the measure to -delta_0 (Dirichlet signs) and is special-cased exactly.
"""

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import special

from .errors import ConfigError, DomainError
from .geometry import Domain

FOUR_PI = 4.0 * math.pi

# Hard cap on the reflection depth of cube image series.
MAX_IMAGE_ORDER = 12

N_EXP_NODES = 64  # fixed node count for the exponential-weight r-quadrature


def eval_poisson_free(x):
    """K(x) = 1/(4 pi |x|)."""
    r = np.linalg.norm(np.asarray(x, dtype=float), axis=-1)
    if np.any(r == 0.0):
        raise DomainError("Poisson kernel evaluated at its singularity")
    return 1.0 / (FOUR_PI * r)


def eval_heat_free(t, x):
    """1_{t>0} (4 pi t)^{-3/2} exp(-|x|^2/(4t))."""
    t = np.asarray(t, dtype=float)
    x = np.asarray(x, dtype=float)
    r2 = np.sum(x * x, axis=-1)
    t_b, r2_b = np.broadcast_arrays(t, r2)
    t_safe = np.where(t_b > 0.0, t_b, 1.0)
    out = np.where(t_b > 0.0,
                   (FOUR_PI * t_safe) ** -1.5 * np.exp(-r2_b / (4.0 * t_safe)),
                   0.0)
    return float(out) if out.shape == () else out


def heat_1d(t, d):
    """(4 pi t)^{-1/2} exp(-d^2/(4t)) for t > 0."""
    return (FOUR_PI * t) ** -0.5 * np.exp(-np.square(d) / (4.0 * t))


# --- truncation ----------------------------------------------------------


def smoothstep(tau):
    """C^3 polynomial step: 0 at tau<=0, 1 at tau>=1."""
    tau = np.clip(tau, 0.0, 1.0)
    return tau ** 4 * (35.0 - 84.0 * tau + 70.0 * tau ** 2 - 20.0 * tau ** 3)


def cutoff_chi(r, inner=0.5, outer=1.0):
    """Smooth radial cutoff: 1 inside `inner`, 0 outside `outer`."""
    return 1.0 - smoothstep((np.asarray(r, dtype=float) - inner) / (outer - inner))


def cutoff_chi_d1(r, inner=0.5, outer=1.0):
    """d/dr of cutoff_chi; the step derivative is 140 tau^3 (1-tau)^3."""
    width = outer - inner
    tau = np.clip((np.asarray(r, dtype=float) - inner) / width, 0.0, 1.0)
    return -140.0 * tau ** 3 * (1.0 - tau) ** 3 / width


def cutoff_chi_d2(r, inner=0.5, outer=1.0):
    """d^2/dr^2 of cutoff_chi (420 tau^2 (1-tau)^2 (1-2 tau) inside the ramp)."""
    width = outer - inner
    tau = np.clip((np.asarray(r, dtype=float) - inner) / width, 0.0, 1.0)
    return -420.0 * tau ** 2 * (1.0 - tau) ** 2 * (1.0 - 2.0 * tau) / width ** 2


@dataclass(frozen=True)
class TruncatedKernel:
    """chi * K (kind 'poisson') or chi * heat kernel in the parabolic norm
    (kind 'heat'); exact equality with the free kernel inside the inner ball
    and exact zero outside the outer ball."""

    kind: str
    inner: float = 0.5
    outer: float = 1.0

    def chi(self, r):
        return cutoff_chi(r, self.inner, self.outer)

    def __call__(self, *args):
        if self.kind == "poisson":
            (x,) = args
            r = np.linalg.norm(np.asarray(x, dtype=float), axis=-1)
            if np.any(r == 0.0):
                raise DomainError("Poisson kernel evaluated at its singularity")
            return np.where(r >= self.outer, 0.0,
                            self.chi(r) / (FOUR_PI * r))
        t, x = args
        x = np.asarray(x, dtype=float)
        rho = np.maximum(np.sqrt(np.abs(np.asarray(t, dtype=float))),
                         np.max(np.abs(x), axis=-1))
        return self.chi(rho) * eval_heat_free(t, x)


def truncate(kind, radius_inner=0.5, radius_outer=1.0):
    if kind not in ("poisson", "heat"):
        raise ConfigError(f"unknown kernel kind {kind!r}")
    if not 0.0 < radius_inner < radius_outer:
        raise ConfigError("need 0 < inner < outer truncation radii")
    return TruncatedKernel(kind=kind, inner=radius_inner, outer=radius_outer)


# --- half-space Robin heat kernel ---------------------------------------


@lru_cache(maxsize=None)
def _laguerre_nodes(n, alpha=0.0):
    x, w = special.roots_genlaguerre(n, alpha)
    return x, w


def _heat4(dz):
    """Heat kernel of a 4-vector difference (dt, dx)."""
    return eval_heat_free(dz[0], dz[1:])


def eval_halfspace_robin(a, x, y, n_nodes=N_EXP_NODES):
    """Robin heat kernel on the half space {x3 > 0}:
    K(x-y) + K(x-y0) - int_0^inf 2a e^{-ar} K(x-y^r) dr,
    with y0 the mirror image and y^r = (y0,y1,y2,-y3-r)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x[3] < 0 or y[3] < 0:
        raise DomainError("half-space kernel needs nonnegative third coordinates")
    if a < 0:
        raise ConfigError("Robin coefficient must be in [0, inf]")
    y0 = y.copy()
    y0[3] = -y[3]
    direct = _heat4(x - y)
    mirror = _heat4(x - y0)
    if a == 0.0:
        return direct + mirror
    if math.isinf(a):
        return direct - mirror
    dt = x[0] - y[0]
    if dt <= 0:
        return 0.0
    u, w = _laguerre_nodes(n_nodes)
    # scale-matched substitution r = u/s keeps the rule accurate in a and t
    s = a + 1.0 / math.sqrt(4.0 * dt)
    dperp2 = (x[1] - y[1]) ** 2 + (x[2] - y[2]) ** 2
    d3 = x[3] + y[3] + u / s
    expo = (1.0 - a / s) * u - (dperp2 + d3 * d3) / (4.0 * dt)
    vals = (FOUR_PI * dt) ** -1.5 * np.exp(expo)
    return direct + mirror - (2.0 * a / s) * float(w @ vals)


def halfspace_robin_d3(a, x, y, n_nodes=N_EXP_NODES):
    """Analytic d/dx3 of eval_halfspace_robin (Gaussian term derivatives)."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x[3] < 0 or y[3] < 0:
        raise DomainError("half-space kernel needs nonnegative third coordinates")
    dt = x[0] - y[0]
    if dt <= 0:
        return 0.0
    y0 = y.copy()
    y0[3] = -y[3]
    g = -(x[3] - y[3]) / (2.0 * dt) * _heat4(x - y)
    g += -(x[3] + y[3]) / (2.0 * dt) * _heat4(x - y0)
    if a == 0.0:
        return g
    if math.isinf(a):
        return -(x[3] - y[3]) / (2.0 * dt) * _heat4(x - y) \
            + (x[3] + y[3]) / (2.0 * dt) * _heat4(x - y0)
    u, w = _laguerre_nodes(n_nodes)
    s = a + 1.0 / math.sqrt(4.0 * dt)
    dperp2 = (x[1] - y[1]) ** 2 + (x[2] - y[2]) ** 2
    d3 = x[3] + y[3] + u / s
    expo = (1.0 - a / s) * u - (dperp2 + d3 * d3) / (4.0 * dt)
    vals = -(d3 / (2.0 * dt)) * (FOUR_PI * dt) ** -1.5 * np.exp(expo)
    return g - (2.0 * a / s) * float(w @ vals)


# --- cube kernels via alternating image words ---------------------------


@lru_cache(maxsize=None)
def _word_states(depth):
    """States (y_sign, base, shift_dir, length) for all alternating
    reflection words of length 1..depth on the interval (-1, 1).

    A word maps the source y to base + y_sign*y + shift_dir*rho, where rho
    carries the accumulated exponential averaging of all reflections."""
    states = []
    for first in (+1, -1):
        s, b = 1.0, 0.0
        sigma = first
        for k in range(1, depth + 1):
            if sigma > 0:
                s, b = -s, 2.0 - b
            else:
                s, b = -s, -2.0 - b
            states.append((s, b, float(sigma), k))
            sigma = -sigma
    return tuple(states)


def _interval_robin_1d(a, t, x, y, depth, n_nodes=N_EXP_NODES):
    """1D Robin heat kernel on (-1,1) as a partial image series.

    t may be an array (vectorized); x, y scalars in [-1, 1].
    """
    t = np.asarray(t, dtype=float)
    val = heat_1d(t, x - y)
    dirichlet = math.isinf(a)
    for s, b, sigma, k in _word_states(depth):
        pos0 = b + s * y
        if dirichlet:
            val = val + (-1.0) ** k * heat_1d(t, x - pos0)
            continue
        if a == 0.0:
            val = val + heat_1d(t, x - pos0)
            continue
        term = heat_1d(t, x - pos0)  # j = 0
        s = a + 1.0 / np.sqrt(4.0 * t)
        tt = t[..., None] if t.ndim else t
        ss = s[..., None] if t.ndim else s
        for j in range(1, k + 1):
            u, w = _laguerre_nodes(n_nodes, j - 1)
            d = x - (pos0 + sigma * u / ss)
            expo = (1.0 - a / ss) * u - d * d / (4.0 * tt)
            contrib = ((FOUR_PI * tt) ** -0.5 * np.exp(expo)) @ w
            term = term + math.comb(k, j) * (-1.0) ** j \
                * (2.0 * a / s) ** j / math.factorial(j - 1) * contrib
        val = val + term
    return val


def _interval_robin_1d_dx(a, t, x, y, depth, n_nodes=N_EXP_NODES):
    """Analytic d/dx of _interval_robin_1d (scalar t)."""
    def dgauss(d):
        return -(d / (2.0 * t)) * heat_1d(t, d)

    val = dgauss(x - y)
    dirichlet = math.isinf(a)
    for s, b, sigma, k in _word_states(depth):
        pos0 = b + s * y
        if dirichlet:
            val += (-1.0) ** k * dgauss(x - pos0)
            continue
        if a == 0.0:
            val += dgauss(x - pos0)
            continue
        term = dgauss(x - pos0)
        s = a + 1.0 / math.sqrt(4.0 * t)
        for j in range(1, k + 1):
            u, w = _laguerre_nodes(n_nodes, j - 1)
            d = x - (pos0 + sigma * u / s)
            expo = (1.0 - a / s) * u - d * d / (4.0 * t)
            vals = -(d / (2.0 * t)) * (FOUR_PI * t) ** -0.5 * np.exp(expo)
            term += math.comb(k, j) * (-1.0) ** j * (2.0 * a / s) ** j \
                / math.factorial(j - 1) * float(w @ vals)
        val += term
    return val


def _interval_robin_mass(a, t, x, depth, n_gl=64, n_nodes=N_EXP_NODES):
    """int_{-1}^{1} q(t, x, y) dy by Gauss-Legendre."""
    nodes, weights = np.polynomial.legendre.leggauss(n_gl)
    vals = [_interval_robin_1d(a, t, x, float(yi), depth, n_nodes)
            for yi in nodes]
    return float(np.dot(weights, vals))


@dataclass(frozen=True)
class CubeRobinHeat:
    """Heat kernel on the cube with Robin coefficient a on all faces,
    truncated at reflection depth image_order; product of interval kernels."""

    a: float
    image_order: int = 3
    domain: Domain = Domain()
    t_max: float = 4.0
    n_nodes: int = N_EXP_NODES

    def __post_init__(self):
        if self.a < 0:
            raise ConfigError("Robin coefficient must be in [0, inf]")
        if not 0 <= self.image_order <= MAX_IMAGE_ORDER:
            raise ConfigError(f"image_order must lie in [0, {MAX_IMAGE_ORDER}]")

    def eval(self, t, x, tp, y):
        dt = t - tp
        if dt <= 0.0:
            return 0.0
        if dt > self.t_max:
            raise DomainError(f"time separation {dt} exceeds t_max={self.t_max}")
        hw = self.domain.half_width
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if np.any(np.abs(x) > hw) or np.any(np.abs(y) > hw):
            return 0.0
        val = 1.0
        for i in range(3):
            val *= float(_interval_robin_1d(self.a, dt, x[i] / hw, y[i] / hw,
                                            self.image_order, self.n_nodes)) / hw
        return val

    def eval_dxi(self, t, x, tp, y, axis):
        """Analytic spatial derivative along one axis."""
        dt = t - tp
        if dt <= 0.0:
            return 0.0
        hw = self.domain.half_width
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        val = 1.0
        for i in range(3):
            if i == axis:
                val *= _interval_robin_1d_dx(self.a, dt, x[i] / hw, y[i] / hw,
                                             self.image_order, self.n_nodes) / hw ** 2
            else:
                val *= float(_interval_robin_1d(self.a, dt, x[i] / hw, y[i] / hw,
                                                self.image_order, self.n_nodes)) / hw
        return val

    def mass(self, t, x, tp):
        """int_D G(t, x, tp, y) dy; equals 1 for a = 0 (reflecting walls)."""
        dt = t - tp
        if dt <= 0.0:
            return 0.0
        hw = self.domain.half_width
        x = np.asarray(x, dtype=float)
        val = 1.0
        for i in range(3):
            val *= _interval_robin_mass(self.a, dt, x[i] / hw,
                                        self.image_order, n_nodes=self.n_nodes)
        return val


def eval_cube_kernel(kind, x, y, image_order=3, a=None, t=None, tp=0.0,
                     domain=Domain()):
    """Dispatch: kind 'robin' needs a and times; 'neumann_green' is the
    compensated Poisson Green function below."""
    if kind == "robin":
        if a is None or t is None:
            raise ConfigError("cube robin kernel needs a and evaluation times")
        return CubeRobinHeat(a=a, image_order=image_order, domain=domain).eval(
            t, x, tp, y)
    if kind == "neumann_green":
        return eval_cube_neumann_green(x, y, image_order=image_order,
                                       domain=domain)
    raise ConfigError(f"unknown cube kernel kind {kind!r}")


def eval_cube_neumann_green(x, y, image_order=10, domain=Domain(),
                            t_upper=20.0, n_t=64):
    """Compensated Neumann Green function of the cube:
    G(x,y) = -int_0^inf (N(t,x,y) - 1/|D|) dt with N the reflecting heat
    kernel, so that Delta_x G = delta_y - 1/|D| and int_D G(.,y) dx = 0."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if np.array_equal(x, y):
        raise DomainError("Green function evaluated on the diagonal")
    hw = domain.half_width
    vol = (2.0 * hw) ** 3
    # substitute t = tau^2; integrand -> 0 at both ends (off-diagonal)
    nodes, weights = np.polynomial.legendre.leggauss(n_t)
    tau = 0.5 * math.sqrt(t_upper) * (nodes + 1.0)
    wq = 0.5 * math.sqrt(t_upper) * weights
    tvals = tau * tau
    prod = np.ones_like(tvals)
    for i in range(3):
        prod *= _interval_robin_1d(0.0, tvals / hw ** 2, x[i] / hw, y[i] / hw,
                                   image_order) / hw
    return -float(np.dot(wq, 2.0 * tau * (prod - 1.0 / vol)))


# --- residual diagnostics -----------------------------------------------


def kernel_residual(kernel_fn, probes, mode="pde", a=None, fd_h=1e-2,
                    fd_dt=1e-5, domain=Domain()):
    """Max finite-difference residual over probes.

    kernel_fn(t, x, tp, y) -> value.  pde mode: |(d_t - Lap) G| at (t, x)
    with source (tp, y) fixed.  boundary mode: |d_n G / a + G| on the face
    containing x (a=0: |d_n G|; a=inf: |G|), one-sided second-order
    differences into the domain.
    """
    worst = 0.0
    for t, x, tp, y in probes:
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        if mode == "pde":
            if np.allclose(x, y) and abs(t - tp) < fd_dt:
                raise DomainError("pde probe on the kernel diagonal")
            dt_term = (kernel_fn(t + fd_dt, x, tp, y)
                       - kernel_fn(t - fd_dt, x, tp, y)) / (2.0 * fd_dt)
            lap = 0.0
            c = kernel_fn(t, x, tp, y)
            for i in range(3):
                e = np.zeros(3)
                e[i] = fd_h
                lap += (kernel_fn(t, x + e, tp, y) - 2.0 * c
                        + kernel_fn(t, x - e, tp, y)) / fd_h ** 2
            worst = max(worst, abs(dt_term - lap))
        elif mode == "boundary":
            hw = domain.half_width
            axis = int(np.argmax(np.abs(np.abs(x) - hw) < 1e-12))
            sign = math.copysign(1.0, x[axis])
            e = np.zeros(3)
            e[axis] = sign * fd_h  # inward step is -e
            f0 = kernel_fn(t, x, tp, y)
            f1 = kernel_fn(t, x - e, tp, y)
            f2 = kernel_fn(t, x - 2 * e, tp, y)
            dn = (3.0 * f0 - 4.0 * f1 + f2) / (2.0 * fd_h)
            if a == 0.0 or a is None:
                res = abs(dn)
            elif math.isinf(a):
                res = abs(f0)
            else:
                res = abs(dn / a + f0)
            worst = max(worst, res)
        else:
            raise ConfigError(f"unknown residual mode {mode!r}")
    return worst


def halfspace_boundary_residual_analytic(a, probes):
    """|d_n G/a + G| on {x3=0} with the analytic normal derivative
    (d_n = -d_{x3}); exact zero for a = 0 by even reflection."""
    worst = 0.0
    for x, y in probes:
        g = eval_halfspace_robin(a, x, y)
        dn = -halfspace_robin_d3(a, x, y)
        if a == 0.0:
            worst = max(worst, abs(dn))
        elif math.isinf(a):
            worst = max(worst, abs(g))
        else:
            worst = max(worst, abs(dn / a + g))
    return worst


def robin_to_dirichlet_gap(a, probes, image_order=4, t_max=4.0):
    """sup over probes of |G_a - G_inf| on the cube (probes interior)."""
    if a < 1.0:
        raise ConfigError("gap is measured on the Dirichlet side: need a >= 1")
    ka = CubeRobinHeat(a=a, image_order=image_order, t_max=t_max)
    kd = CubeRobinHeat(a=math.inf, image_order=image_order, t_max=t_max)
    return max(abs(ka.eval(t, x, tp, y) - kd.eval(t, x, tp, y))
               for t, x, tp, y in probes)
