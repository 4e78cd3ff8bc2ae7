"""Renormalisation constants and boundary-mass profiles by deterministic
quadrature.

Every quantity here is a covariance contraction — an explicit integral of
products of (mollified, truncated) kernels — evaluated with fixed Gauss
rules in a fixed summation order, so repeated runs are bit-identical.  No
Monte Carlo is used anywhere in this module.

Conventions kept throughout:
  * the spatial mollifier is a radial bump at scale eps, the space-time one
    a product bump at parabolic scale (eps^2, eps);
  * truncated kernels use the smooth cutoff from `kernels` with inner/outer
    radii (1/2, 1) unless an explicit kernel is passed;
  * graph integrals carry the drawn prefactors (+2, -2, +6); the `assembled`
    flag switches to the model combination instead (see graph_log_constant).
"""

import math
import warnings
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.integrate import cumulative_trapezoid, trapezoid
from scipy.signal import fftconvolve
from scipy.special import erf, erfc, roots_legendre

from .errors import ConfigError, DomainError, ToleranceError
from .kernels import FOUR_PI, cutoff_chi, cutoff_chi_d2, heat_1d, truncate
from .noise import SPACETIME4, STANDARD_BUMP, make_mollifier
from .radial import cumulative_shell_mass, radial_convolve, radial_potential

TREE_IDS = ("PAM-4a", "PAM-4b", "Phi-4")
# drawn prefactors of the log-order graphs, in TREE_IDS order
TREE_PREFACTORS = {"PAM-4a": 2.0, "PAM-4b": -2.0, "Phi-4": 6.0}
REFINE_RTOL = 1e-3  # refinement doubling beyond this flags non-convergence


# --- fixed quadrature rules ----------------------------------------------


@lru_cache(maxsize=None)
def _gl(n):
    x, w = roots_legendre(n)
    return x, w


def _gl_panel(lo, hi, n):
    """Gauss-Legendre nodes/weights on [lo, hi]."""
    x, w = _gl(n)
    mid, rad = 0.5 * (hi + lo), 0.5 * (hi - lo)
    return mid + rad * x, rad * w


def _gl_panels(edges, n):
    """Composite Gauss rule over consecutive [edges[i], edges[i+1]]."""
    nodes, weights = [], []
    for lo, hi in zip(edges[:-1], edges[1:]):
        x, w = _gl_panel(lo, hi, n)
        nodes.append(x)
        weights.append(w)
    return np.concatenate(nodes), np.concatenate(weights)


def _gl01(n):
    return _gl_panel(0.0, 1.0, n)


def _dedupe_edges(cand, lo, hi):
    """Sorted unique panel edges within [lo, hi]."""
    vals = sorted(set([lo, hi] + [c for c in cand if lo < c < hi]))
    out = [vals[0]]
    for v in vals[1:]:
        if v - out[-1] > 1e-13 * max(1.0, abs(v)):
            out.append(v)
    return out


def _refine_guard(coarse, fine, what):
    scale = max(abs(fine), 1e-300)
    if abs(fine - coarse) > REFINE_RTOL * scale:
        raise ToleranceError(
            f"{what}: refinement moved the value from {coarse:.6e} to "
            f"{fine:.6e} (more than {REFINE_RTOL:.1e} relative)")
    return fine


# --- Gaussian four-product integral --------------------------------------


def scrJ_closed(a, b):
    """Closed form of the upper-half-space Gaussian four-product integral:
    tan^{-1}(2(a-b)/(a+b)) / (16 pi^2 (a-b)), with the a=b limit
    1/(16 pi^2 a) and the a+b=0 limit using tan^{-1}(+-inf) = +-pi/2.

    Defined for a+b >= 0; a=b=0 is divergent.
    """
    a_arr = np.asarray(a, dtype=float)
    b_arr = np.asarray(b, dtype=float)
    s = a_arr + b_arr
    d = a_arr - b_arr
    if np.any(s < -1e-12 * np.maximum(1.0, np.abs(d))):
        raise DomainError("scrJ_closed requires a + b >= 0")
    degenerate = (np.abs(d) < 1e-300) & (np.abs(s) < 1e-300)
    if np.any(degenerate):
        raise DomainError("scrJ_closed diverges at a = b = 0")
    equal = np.abs(d) <= 1e-13 * np.maximum(1.0, np.abs(s))
    zero_sum = np.abs(s) <= 1e-300
    d_safe = np.where(equal, 1.0, d)
    s_safe = np.where(zero_sum, 1.0, s)
    base = np.arctan(2.0 * d / s_safe) / d_safe
    base = np.where(zero_sum, (0.5 * math.pi) / np.abs(d_safe), base)
    val = np.where(equal, 2.0 / s_safe, base)
    out = val / (16.0 * math.pi ** 2)
    return float(out) if out.ndim == 0 else out


def scrJ_quadrature(a, b, n_panels=36, n_t=12, n_x=48):
    """Direct quadrature of the defining integral over {t>0, x1, x2 in R,
    x3>0}: the N_{4t} factors in x1 and x2 enter squared, the x3 factors
    are centred at -a and -b.  Iterated fixed Gauss rules (x1/x2/x3 on
    sqrt(4t)-scaled nodes, t on log panels); a doubled-resolution pass must
    agree within 0.1% or the non-convergence flag (ToleranceError) is
    raised.
    """
    if a + b < -1e-12:
        raise DomainError("scrJ_quadrature requires a + b >= 0")

    def n4t(x, t):
        return np.exp(-x * x / (4.0 * t)) / np.sqrt(4.0 * math.pi * t)

    def value(panels, nt, nx):
        t_lo = max((a * a + b * b) / 560.0, 1e-10)
        t_hi = 1e12 * max(1.0, (abs(a) + abs(b)) ** 2)
        sigma, w_sigma = _gl_panels(
            np.linspace(math.log(t_lo), math.log(t_hi), panels + 1), nt)
        t = np.exp(sigma)[:, None]
        u, wu = _gl_panel(-7.0, 7.0, nx)
        root = np.sqrt(4.0 * t)
        perp = np.sum(n4t(root * u[None, :], t) ** 2 * (root * wu), axis=1)
        v, wv = _gl_panel(0.0, 8.0, nx)
        x3 = root * v[None, :]
        plane = np.sum(n4t(x3 + a, t) * n4t(x3 + b, t) * (root * wv), axis=1)
        return float(np.sum(w_sigma * np.exp(sigma) * perp ** 2 * plane))

    coarse = value(n_panels, n_t, n_x)
    fine = value(2 * n_panels, n_t, n_x + n_x // 2)
    return _refine_guard(coarse, fine, "scrJ_quadrature")


def erfc_identity_lhs(a, n_panels=45, n_t=16):
    """Quadrature of int_0^inf Erfc(1/sqrt(t)) N_t(a) t^{-1} dt for a >= 0,
    with N_t(x) = (pi t)^{-1/2} exp(-x^2/t)."""
    if a < 0.0:
        raise DomainError("erfc_identity_lhs requires a >= 0")
    t_lo = (1.0 + a * a) / 170.0
    t_hi = 1e12 * (1.0 + a * a)
    sigma, w = _gl_panels(
        np.linspace(math.log(t_lo), math.log(t_hi), n_panels + 1), n_t)
    t = np.exp(sigma)
    vals = erfc(1.0 / np.sqrt(t)) * np.exp(-a * a / t) / np.sqrt(math.pi * t)
    return float(np.sum(w * vals))


def I0_phi(s):
    """Half-space heat-kernel cross term 2 int K(s-z) K(s-z^0) dz; equals
    (1/s) times twice the four-product integral at (1, -1)."""
    if s <= 0.0:
        raise DomainError("I0_phi requires s > 0")
    return 2.0 * scrJ_closed(1.0, -1.0) / s


@lru_cache(maxsize=None)
def _j0_segments(ap, n_per_seg):
    """Composite log-graded Gauss rule for int_0^inf ap e^{-ap r} (...) dr."""
    r_max = max(64.0 / ap, 16.0)
    cand = [k / ap for k in (0.25, 0.5, 1.0, 2.0, 4.0, 8.0, 16.0, 32.0)]
    cand += [0.25, 0.5, 1.0, 2.0, 4.0, 8.0]
    edges = _dedupe_edges(cand, 0.0, r_max)
    r, w = _gl_panels(edges, n_per_seg)
    return r, w * ap * np.exp(-ap * r)


def J0_of_a(a, n_per_seg=20):
    """The Robin-correction boundary integral at unit distance, from its
    exponential-mixture representation over the four-product integral:

      -J(a) = 4 int ap e^{-ap r} [J(-1,1+r) + J(1,1+r)] dr
              - 4 int int ap^2 e^{-ap(r+rbar)} J(1+r,1+rbar) dr drbar

    with ap = 3a and scrJ_closed supplying the inner values.  a = inf
    returns the limit -2 * I0_phi(1).
    """
    if a == math.inf:
        return -2.0 * I0_phi(1.0)
    if not a > 0.0:
        raise DomainError("J0_of_a requires a > 0 or a = inf")
    r, wexp = _j0_segments(float(3.0 * a), n_per_seg)
    t1 = 4.0 * np.sum(wexp * scrJ_closed(-1.0, 1.0 + r))
    t2 = 4.0 * np.sum(wexp * scrJ_closed(1.0, 1.0 + r))
    inner = scrJ_closed(1.0 + r[:, None], 1.0 + r[None, :])
    t3 = 4.0 * float(wexp @ inner @ wexp)
    return -(t1 + t2 - t3)


# --- PAM boundary profile ------------------------------------------------


def _shell_quad(s, mu_panels, n_mu, n_d, d_from=None):
    """(1/8pi) int dmu int dd (2 s mu + d)/(4s^2+4 s d mu+d^2)^{3/2} over
    rays from the source point (the d^2 volume factor cancels the |E_s|
    singularity; the azimuthal integral gives 2pi/(16 pi^2)); d_from(mu)
    optionally restricts to d >= d_from (used for the far part outside the
    mollified band), otherwise the ray is clipped at the boundary plane
    for mu < 0.
    """

    def inner(mu, wmu, acc):
        dcap = 4.0 * s + (0.0 if d_from is None else 2.0 * d_from(mu).max())
        lo = d_from(mu) if d_from is not None else np.zeros_like(mu)
        upper = np.where(mu < 0.0, s / np.maximum(-mu, 1e-300), np.inf)
        hi_near = np.minimum(upper, np.maximum(lo + 1e-30, dcap))
        t01, w01 = _gl01(n_d)
        span = hi_near - lo
        d = lo[:, None] + span[:, None] * t01[None, :]
        wd = span[:, None] * w01[None, :]
        core = (2.0 * s * mu[:, None] + d) / (
            4.0 * s * s + 4.0 * s * d * mu[:, None] + d * d) ** 1.5
        acc += float(np.sum(wmu[:, None] * wd * core))
        # tail d in [hi_near, upper) mapped by d = hi_near / v
        has_tail = upper > hi_near * (1.0 + 1e-12)
        if np.any(has_tail):
            mu_t = mu[has_tail]
            wmu_t = wmu[has_tail]
            base = hi_near[has_tail]
            v0 = np.where(np.isfinite(upper[has_tail]),
                          base / np.maximum(upper[has_tail], 1e-300), 0.0)
            v = v0[:, None] + (1.0 - v0)[:, None] * t01[None, :]
            wv = (1.0 - v0)[:, None] * w01[None, :]
            d = base[:, None] / v
            core = (2.0 * s * mu_t[:, None] + d) / (
                4.0 * s * s + 4.0 * s * d * mu_t[:, None] + d * d) ** 1.5
            acc += float(np.sum(wmu_t[:, None] * wv * core *
                                base[:, None] / v ** 2))
        return acc

    total = 0.0
    for lo_mu, hi_mu in zip(mu_panels[:-1], mu_panels[1:]):
        mu, wmu = _gl_panel(lo_mu, hi_mu, n_mu)
        total = inner(mu, wmu, total)
    return total / (2.0 * FOUR_PI)


def _I0_shell(s, n_mu=32, n_d=40):
    """Unmollified boundary profile I_0(s) = 2 int_{upper} E_s . E_mirror,
    in source-centred ray coordinates where the volume factor cancels the
    field singularity exactly."""
    return 2.0 * _shell_quad(s, [-1.0, -0.25, 0.0, 1.0], n_mu, n_d)


def _far_shell(s, eps, n_mu=32, n_d=40):
    """The part of I_0(s) from {x3' > s + eps}, where mollified and
    unmollified integrands agree exactly."""
    return 2.0 * _shell_quad(
        s, [0.0, 0.1, 1.0], n_mu, n_d,
        d_from=lambda mu: eps / np.maximum(mu, 1e-300))


def pam_profile_odd(n_mu=32, n_d=40):
    """Quadrature of the inversion-odd companion of the boundary profile:
    int_{upper} (1 - x3^2)/(|x-e3|^3 |x+e3|^3) dx, which vanishes exactly
    under the x3 -> 1/x3 substitution.  Returned as a residual."""
    total = 0.0
    t01, w01 = _gl01(n_d)
    for lo_mu, hi_mu in ((-1.0, -0.25), (-0.25, 0.0), (0.0, 1.0)):
        mu, wmu = _gl_panel(lo_mu, hi_mu, n_mu)
        upper = np.where(mu < 0.0, 1.0 / np.maximum(-mu, 1e-300), np.inf)
        hi_near = np.minimum(upper, 4.0)
        d = hi_near[:, None] * t01[None, :]
        wd = hi_near[:, None] * w01[None, :]
        core = -mu[:, None] * (2.0 + d * mu[:, None]) / (
            4.0 + 4.0 * d * mu[:, None] + d * d) ** 1.5
        total += float(np.sum(wmu[:, None] * wd * core))
        has_tail = upper > hi_near * (1.0 + 1e-12)
        if np.any(has_tail):
            mu_t, wmu_t = mu[has_tail], wmu[has_tail]
            base = hi_near[has_tail]
            v0 = np.where(np.isfinite(upper[has_tail]),
                          base / np.maximum(upper[has_tail], 1e-300), 0.0)
            v = v0[:, None] + (1.0 - v0)[:, None] * t01[None, :]
            wv = (1.0 - v0)[:, None] * w01[None, :]
            d = base[:, None] / v
            core = -mu_t[:, None] * (2.0 + d * mu_t[:, None]) / (
                4.0 + 4.0 * d * mu_t[:, None] + d * d) ** 1.5
            total += float(np.sum(wmu_t[:, None] * wv * core *
                                  base[:, None] / v ** 2))
    return 2.0 * math.pi * total


@lru_cache(maxsize=8)
def _mass_table(eps, profile_id=STANDARD_BUMP):
    """Cumulative radial mass of the mollifier, normalized to end at 1."""
    m = make_mollifier(profile_id, eps)
    r = np.linspace(0.0, eps, 1025)
    mass = cumulative_shell_mass(r, m.density_radial(r))
    return r, mass / mass[-1]


def _enclosed_mass(dist, eps, profile_id=STANDARD_BUMP):
    r, mass = _mass_table(eps, profile_id)
    return np.interp(dist, r, mass, right=1.0)


def _dlow_field(rp, zp, s, eps, dens, n_cap=14, n_beta=24, n_r=8, chunk=192):
    """Mollified lower-half-space restriction field

        A(x') = int_{y3<0} rho_eps(x'-y) E_s(y) dy

    for axisymmetric x' = (rp, 0, zp) and a unit source at (0,0,s), via ray
    coordinates centred at the source: A = (1/4pi) int omega [chord of
    rho_eps along the ray, clipped to the lower half] dOmega.  Only points
    with |zp| < eps need the angular quadrature: above the slab A = 0,
    below it the clipped mollifier ball is whole and the Gauss law gives
    A = M_eps(L) (x'-x_s)/(4 pi L^3) exactly.
    Returns (A_x, A_z).
    """
    rp = np.asarray(rp, dtype=float)
    zp = np.asarray(zp, dtype=float)
    a_x = np.zeros(rp.shape)
    a_z = np.zeros(rp.shape)

    below = zp <= -eps
    if np.any(below):
        dr = rp[below]
        dz = zp[below] - s
        big_l = np.hypot(dr, dz)
        scale = _enclosed_mass(big_l, eps) / (FOUR_PI * big_l ** 3)
        a_x[below] = scale * dr
        a_z[below] = scale * dz

    ray = np.nonzero((zp > -eps) & (zp < eps))[0]
    if ray.size == 0:
        return a_x, a_z

    xi, wxi = _gl01(n_cap)
    beta = (np.arange(n_beta) + 0.5) * (2.0 * math.pi / n_beta)
    wbeta = 2.0 * math.pi / n_beta
    cosb = np.cos(beta)
    tr, wr = _gl01(n_r)

    for start in range(0, ray.size, chunk):
        sel = ray[start:start + chunk]
        p_r = rp[sel]
        p_z = zp[sel] - s
        big_l = np.hypot(p_r, p_z)
        safe_l = np.maximum(big_l, 1e-300)
        tiny = big_l < 1e-12
        v1 = np.where(tiny, 0.0, p_r / safe_l)
        v3 = np.where(tiny, 1.0, p_z / safe_l)
        cmin = np.where(big_l > eps,
                        np.sqrt(np.clip(1.0 - (eps / safe_l) ** 2, 0.0, 1.0)),
                        -1.0)
        c = 1.0 - xi[None, :] * (1.0 - cmin[:, None])          # (N, nc)
        wc = wxi[None, :] * (1.0 - cmin[:, None])
        sth = np.sqrt(np.clip(1.0 - c * c, 0.0, None))
        om1 = (c * v1[:, None])[:, :, None] - \
            (sth * v3[:, None])[:, :, None] * cosb[None, None, :]
        om3 = (c * v3[:, None])[:, :, None] + \
            (sth * v1[:, None])[:, :, None] * cosb[None, None, :]
        t0 = (big_l[:, None] * c)[:, :, None]
        dd = (big_l[:, None] * sth)[:, :, None]
        delta = np.sqrt(np.clip(eps * eps - dd * dd, 0.0, None))
        hits_lower = om3 < -1e-15
        r0 = np.where(hits_lower, s / np.maximum(-om3, 1e-300), np.inf)
        lo = np.maximum(np.maximum(t0 - delta, 0.0), r0)
        hi = t0 + delta
        empty = ~(lo < hi)
        lo = np.where(empty, 0.0, lo)
        span = np.where(empty, 0.0, hi - lo)
        rr = lo[..., None] + span[..., None] * tr                # (N,nc,nb,nr)
        q2 = (big_l[:, None, None, None] ** 2
              - 2.0 * rr * big_l[:, None, None, None] * c[:, :, None, None]
              + rr * rr)
        chord = np.sum(dens(np.sqrt(np.clip(q2, 0.0, None))) * wr, axis=-1)
        chord *= span
        common = chord * wbeta * wc[:, :, None] / FOUR_PI
        a_x[sel] = np.sum(om1 * common, axis=(1, 2))
        a_z[sel] = np.sum(om3 * common, axis=(1, 2))
    return a_x, a_z


def _band_nodes(s, eps, nz, nr):
    """Tensor Gauss grid over the band {|z'| <= s+eps} x {r' <= R} with
    panel edges at every kink of the mollified integrand."""
    z_edges = _dedupe_edges(
        [-s + eps, -eps, 0.0, eps, s - eps], -s - eps, s + eps)
    r_cand = [eps / 2, eps, 2 * eps, 4 * eps, s / 2, s, 2 * s, 4 * s]
    base = 4.0 * max(s, eps)
    big_r = 64.0 * (s + eps)
    while base < big_r:
        base *= 4.0
        r_cand.append(min(base, big_r))
    r_edges = _dedupe_edges(r_cand, 0.0, big_r)
    z, wz = _gl_panels(z_edges, nz)
    r, wr = _gl_panels(r_edges, nr)
    zz, rr = np.meshgrid(z, r, indexing="ij")
    ww = wz[:, None] * wr[None, :] * 2.0 * math.pi * rr
    return zz.ravel(), rr.ravel(), ww.ravel()


def _I_eps(s, eps, res=1):
    """Mollified boundary profile I_eps(s): the smooth band integral of the
    mollified cross term plus the exactly-unmollified far part."""
    dens = make_mollifier(STANDARD_BUMP, eps).density_radial
    zz, rr, ww = _band_nodes(s, eps, 8 * res, 8 * res)
    ax, az = _dlow_field(rr, zz, s, eps, dens,
                         n_cap=10 * res, n_beta=16 * res, n_r=8)
    axm, azm = _dlow_field(rr, -zz, s, eps, dens,
                           n_cap=10 * res, n_beta=16 * res, n_r=8)
    # reflected field: F A(F x')
    tax, taz = axm, -azm
    dzs = zz - s
    big_l = np.hypot(rr, dzs)
    scale = np.where(big_l < 1e-12, 0.0,
                     _enclosed_mass(big_l, eps) /
                     (FOUR_PI * np.maximum(big_l, 1e-300) ** 3))
    fx = scale * rr
    fz = scale * dzs
    phi = (fx - ax) * (tax - ax) + (fz - az) * (taz - az)
    return 2.0 * float(np.sum(ww * phi)) + _far_shell(s, eps)


def pam_profile_I(eps, s, res=1):
    """Boundary cross-term profile I_eps(s): the difference of squared
    mollified gradient kernels between the half-space-Neumann pair and the
    free kernel, integrated over the second argument, at distance s from
    the boundary.  eps = 0 gives the unmollified profile (equal to
    1/(8 pi s)); eps > 0 uses the mollified band + far-field split."""
    if s <= 0.0:
        raise DomainError("pam_profile_I requires s > 0")
    if eps < 0.0:
        raise DomainError("pam_profile_I requires eps >= 0")
    if eps == 0.0:
        return _I0_shell(s)
    if s <= eps / 4.0:
        warnings.warn("pam_profile_I: s <= eps/4 is the near-field regime; "
                      "accuracy degrades", RuntimeWarning, stacklevel=2)
    return _I_eps(s, eps, res)


@lru_cache(maxsize=2)
def _ihat_table(res=1):
    """Universal table of the scaled profile Ihat(u) = I_1(u) (so that
    I_eps(s) = Ihat(s/eps)/eps), together with its cumulative integral.
    The table covers u in [0.005, 24]; beyond it the profile is within
    ~1% of the free tail 1/(8 pi u)."""
    u = np.concatenate([
        np.geomspace(0.005, 0.4, 12),
        np.linspace(0.5, 3.0, 18),
        np.geomspace(3.4, 24.0, 16),
    ])
    vals = np.array([_I_eps(float(ui), 1.0, res) for ui in u])
    if not np.all(np.isfinite(vals)) or np.any(vals <= 0.0):
        raise ToleranceError("pam boundary profile table failed to converge "
                             "(non-finite or non-positive entries)")
    u_full = np.concatenate([[0.0], u])
    v_full = np.concatenate([[vals[0]], vals])
    cum = cumulative_trapezoid(v_full, u_full, initial=0.0)
    return u_full, v_full, cum


def pam_boundary_mass(eps, y1):
    """m_eps(y1) = int_0^{y1} I_eps(s) ds.  The substitution s = eps*u turns
    this into int_0^{y1/eps} Ihat(u) du over the universal scaled profile;
    past the table the integrand is the free tail 1/(8 pi u), integrated in
    closed form."""
    if not 0.0 < eps < 1.0:
        raise ConfigError("pam_boundary_mass requires eps in (0, 1)")
    if not eps < y1 <= 1.0:
        raise ConfigError("pam_boundary_mass requires y1 in (eps, 1]")
    u_tab, _, cum = _ihat_table()
    u_top = y1 / eps
    if u_top <= u_tab[-1]:
        return float(np.interp(u_top, u_tab, cum))
    return float(cum[-1] + math.log(u_top / u_tab[-1]) / (8.0 * math.pi))


def a_rho_estimate(pairs):
    """Estimate of the mollifier-dependent boundary constant: the mean of
    m_eps(y1) - log(y1/eps)/(8 pi) over the given (eps, y1) pairs, with its
    spread as the constancy diagnostic.  Reported as (estimate, spread)."""
    vals = [pam_boundary_mass(e, y) - math.log(y / e) / (8.0 * math.pi)
            for e, y in pairs]
    vals = np.asarray(vals)
    return float(vals.mean()), float(vals.max() - vals.min())


# --- Phi^4 boundary profile ----------------------------------------------


def phi4_boundary_mass(eps, y1, c_tilde=0.0, a_rho=0.0, n_panels=24, n_t=8):
    """Heat-kernel analogue of pam_boundary_mass: a_rho plus the quadrature
    of int_eps^{y1} I0_phi(s) ds (log-panel Gauss rule; slope log2/(32 pi)
    per halving) plus, for a Robin ladder with coefficient c_tilde > 0, the
    correction int_0^{y1} (1/s) J0(s * c_tilde) ds."""
    if not 0.0 < eps < 1.0:
        raise ConfigError("phi4_boundary_mass requires eps in (0, 1)")
    if not eps < y1 <= 1.0:
        raise ConfigError("phi4_boundary_mass requires y1 in (eps, 1]")
    sigma, w = _gl_panels(
        np.linspace(math.log(eps), math.log(y1), n_panels + 1), n_t)
    s_nodes = np.exp(sigma)
    main = float(sum(wi * si * I0_phi(si) for wi, si in zip(w, s_nodes)))
    corr = 0.0
    if c_tilde > 0.0:
        sigma, w = _gl_panels(
            np.linspace(math.log(1e-7 * y1), math.log(y1), 20), 6)
        corr = float(sum(wi * J0_of_a(float(np.exp(si) * c_tilde))
                         for wi, si in zip(w, sigma)))
    elif c_tilde < 0.0:
        raise ConfigError("phi4_boundary_mass requires c_tilde >= 0")
    return a_rho + main + corr


# --- bulk second-moment constants ----------------------------------------


def _check_pair(eps, mollifier, kernel, kind, frame=None):
    if not 0.0 < eps <= 1.0:
        raise ConfigError("eps must lie in (0, 1]")
    if mollifier is None:
        mollifier = make_mollifier(STANDARD_BUMP, eps, frame=frame) \
            if frame else make_mollifier(STANDARD_BUMP, eps)
    elif abs(mollifier.eps - eps) > 1e-15:
        raise ConfigError("mollifier scale does not match eps")
    if kernel is None:
        kernel = truncate(kind)
    elif kernel.kind != kind:
        raise ConfigError(f"expected a {kind!r} truncated kernel")
    return mollifier, kernel


def _ell_pam_2a_value(eps, m, ker, refine):
    big_r = ker.outer + 2.0 * eps + 4.0 * eps / 64.0
    h = min(eps, ker.outer - ker.inner) / (64.0 * refine)
    n = int(math.ceil(big_r / h))
    r = np.linspace(0.0, big_r, n + 1)
    f_eps = m.density_radial(r)
    mass = cumulative_shell_mass(r, f_eps)
    w = np.zeros_like(r)
    w[1:] = cutoff_chi_d2(r[1:], ker.inner, ker.outer) / (FOUR_PI * r[1:])
    conv = radial_convolve(r, f_eps, r, w, r)
    cloud = cumulative_shell_mass(r, conv)
    charge = mass - cloud
    integrand = np.zeros_like(r)
    integrand[1:] = (charge[1:] / r[1:]) ** 2
    return float(trapezoid(integrand, r)) / FOUR_PI


def ell_pam_2a(eps, mollifier=None, kernel=None):
    """Bulk constant E|grad(Kbar) * xi_eps|^2 by the 1D charge reduction:
    -Lap(Kbar) = delta_0 - w with the screening cloud w = chi''/(4 pi r),
    so the mollified gradient field is radial with enclosed charge
    Q_eps(r), and the integral is (1/4pi) int (Q_eps/r)^2 dr.  Flags
    non-convergence if grid doubling moves the value by > 0.1%."""
    m, ker = _check_pair(eps, mollifier, kernel, "poisson")
    coarse = _ell_pam_2a_value(eps, m, ker, 1)
    fine = _ell_pam_2a_value(eps, m, ker, 2)
    return _refine_guard(coarse, fine, "ell_pam_2a")


def _eta_self_1d(profile, half_width, grid):
    """Self-convolution of a compactly supported even 1D density on the
    given offsets, by a Gauss rule on the exact overlap interval."""
    x, w = _gl_panel(-half_width, half_width, 64)
    out = np.zeros_like(grid)
    inside = np.abs(grid) < 2.0 * half_width
    gi = grid[inside]
    tau = x[None, :]
    vals = profile(tau) * profile(gi[:, None] - tau)
    out[inside] = vals @ w
    return out


def _ell_phi_2_value(eps, m, ker, refine):
    half_x = ker.outer + 2.0 * eps + 8.0 * eps / 48.0
    h = eps / (48.0 * refine)
    n_x = int(math.ceil(2.0 * half_x / h)) | 1  # odd point count
    x = np.linspace(-half_x, half_x, n_x)
    h = x[1] - x[0]
    k_half = int(math.ceil(2.0 * eps / h)) + 1
    eta1 = _eta_self_1d(m.profile_space, eps, np.arange(-k_half, k_half + 1) * h)

    def eta0(delta):
        return _eta_self_1d(m.profile_time, eps * eps, np.asarray(delta))

    t_lo = eps * eps / 32.0
    n_pan = int(math.ceil(6.0 * refine * math.log10(1.0 / t_lo)))
    big_t, w_t = _gl_panels(np.exp(np.linspace(
        math.log(t_lo), 0.0, n_pan + 1)), 6)
    total = 0.0
    for ti, wti in zip(big_t, w_t):
        d_max = min(2.0 * eps * eps, 2.0 * ti * (1.0 - 1e-12))
        dlt, w_d = _gl_panel(-d_max, d_max, 10 * refine)
        eta0_vals = eta0(dlt)
        for dj, wdj, e0 in zip(dlt, w_d, eta0_vals):
            t1 = ti + 0.5 * dj
            t2 = ti - 0.5 * dj
            chi = (cutoff_chi(math.sqrt(t1), ker.inner, ker.outer)
                   * cutoff_chi(math.sqrt(t2), ker.inner, ker.outer))
            if chi == 0.0:
                continue
            g1 = heat_1d(t1, x) * cutoff_chi(np.abs(x), ker.inner, ker.outer)
            g2 = heat_1d(t2, x) * cutoff_chi(np.abs(x), ker.inner, ker.outer)
            conv = fftconvolve(g2, eta1, mode="same") * h
            q = float(np.dot(g1, conv)) * h
            total += wti * wdj * e0 * chi * q ** 3
    return total


def ell_phi_2(eps, mollifier=None, kernel=None):
    """Bulk constant E(Kbar_heat * xi_eps)^2 with the parabolic product
    mollifier and the product-form truncation chi0(sqrt t) chi1(x_i): the
    covariance pairing factorizes into a time double integral of the cubed
    per-axis overlap, each overlap a 1D mollified convolution.  Flags
    non-convergence on refinement > 0.1%."""
    m, ker = _check_pair(eps, mollifier, kernel, "heat", frame=SPACETIME4)
    coarse = _ell_phi_2_value(eps, m, ker, 1)
    fine = _ell_phi_2_value(eps, m, ker, 2)
    return _refine_guard(coarse, fine, "ell_phi_2")


# --- log-order graph constants -------------------------------------------


def _graph_pam_4a(eps, refine):
    ker = truncate("poisson")
    m = make_mollifier(STANDARD_BUMP, eps)
    big_r = ker.outer + 2.0 * eps
    h = min(eps, ker.outer - ker.inner) / (48.0 * refine)
    n = int(math.ceil(big_r / h))
    r = np.linspace(0.0, big_r, n + 1)
    f_eps = m.density_radial(r)
    w = np.zeros_like(r)
    w[1:] = cutoff_chi_d2(r[1:], ker.inner, ker.outer) / (FOUR_PI * r[1:])
    charge = f_eps - radial_convolve(r, f_eps, r, w, r)
    pot = radial_potential(r, charge)
    w_corr = radial_convolve(r, charge, r, pot, r)
    kbar_r2 = np.zeros_like(r)
    kbar_r2[1:] = r[1:] * ker.chi(r[1:]) / FOUR_PI  # r^2 * Kbar
    return 2.0 * float(trapezoid(FOUR_PI * kbar_r2 * w_corr ** 2, r))


def _graph_pam_4b(eps, refine):
    # crossed pairing: -2 int eta (Kbar * [Kbar . (Kbar * eta)]); the inner
    # product Kbar(v) (Kbar*eta)(v) ~ v^-2 for v in (eps, 1) is what makes
    # the value grow like |log eps|.
    ker = truncate("poisson")
    m = make_mollifier(STANDARD_BUMP, eps)
    big_r = ker.outer + 4.0 * eps
    h = min(eps, ker.outer - ker.inner) / (64.0 * refine)
    n = int(math.ceil(big_r / h))
    r = np.linspace(0.0, big_r, n + 1)
    f_eps = m.density_radial(r)
    eta = radial_convolve(r, f_eps, r, f_eps, r)
    kbar = np.zeros_like(r)
    kbar[1:] = ker.chi(r[1:]) / (FOUR_PI * r[1:])
    k_eta = radial_convolve(r, eta, r, kbar, r)
    # log-graded support grid for the v^-2 product (s * g(s) is integrable)
    n_log = int(math.ceil(72 * refine * math.log10(big_r / (h / 8.0))))
    r_g = np.concatenate(([0.0], np.geomspace(h / 8.0, big_r, n_log)))
    g = np.zeros_like(r_g)
    g[1:] = ker.chi(r_g[1:]) / (FOUR_PI * r_g[1:]) * np.interp(r_g[1:], r, k_eta)
    b = np.linspace(0.0, 2.0 * eps, 256 * refine + 1)
    outer = radial_convolve(r_g, g, r, kbar, b)
    eta_b = np.interp(b, r, eta)
    return -2.0 * float(trapezoid(FOUR_PI * b * b * eta_b * outer, b))


def _graph_phi_4(eps, refine):
    ker = truncate("heat")
    t_lo = eps * eps / 64.0
    edges = sorted(set(np.exp(np.linspace(math.log(t_lo), 0.0, int(
        math.ceil(8 * refine * math.log10(1.0 / t_lo))) + 1)).tolist()
        + [eps * eps]))
    sigma_t, w_t = _gl_panels(np.log(np.asarray(edges)), 6)
    total = 0.0
    u01, w01 = _gl_panels([0.0, 0.25, 1.0], 12 * refine)
    for st, wt in zip(sigma_t, w_t):
        t = math.exp(st)
        rt = math.sqrt(t)
        u_lo = eps / rt if rt < eps else 0.0
        u_hi = min(ker.outer / rt, 14.0)
        if u_hi <= u_lo:
            continue
        u = u_lo + (u_hi - u_lo) * u01
        wu = (u_hi - u_lo) * w01
        rr = rt * u
        nu = np.maximum(rt, rr)
        chi = cutoff_chi(nu, ker.inner, ker.outer)
        kern3 = (FOUR_PI * t) ** -1.5 * np.exp(-u * u / 4.0)
        c_times_r = erf(u / 2.0) / (8.0 * math.pi)
        integrand = FOUR_PI * c_times_r ** 2 * kern3 * chi ** 3
        total += wt * t * float(np.sum(wu * integrand)) * rt
    return 6.0 * total


_GRAPHS = {"PAM-4a": _graph_pam_4a, "PAM-4b": _graph_pam_4b,
           "Phi-4": _graph_phi_4}


def graph_log_constant(tree_id, eps, assembled=False):
    """Zeroth-chaos connected graph integral for the |log eps|-order trees.

    With assembled=False the raw graph value is returned, carrying its
    drawn prefactor (+2 for PAM-4a, -2 for PAM-4b, +6 for Phi-4).  With
    assembled=True the full model combination is returned instead:
    ell_pam_2a + g(PAM-4a) + 4 g(PAM-4b) for the PAM trees, and
    ell_phi_2 - 3 g(Phi-4) for the heat tree.  Either way the value is
    deterministic bit-for-bit; refinement doubling beyond 0.1% raises the
    non-convergence flag."""
    if tree_id not in _GRAPHS:
        raise ConfigError(f"unknown tree id {tree_id!r}; expected one of "
                          f"{TREE_IDS}")
    if not 0.0 < eps <= 1.0:
        raise ConfigError("eps must lie in (0, 1]")
    if assembled:
        if tree_id in ("PAM-4a", "PAM-4b"):
            return (ell_pam_2a(eps)
                    + graph_log_constant("PAM-4a", eps)
                    + 4.0 * graph_log_constant("PAM-4b", eps))
        return ell_phi_2(eps) - 3.0 * graph_log_constant("Phi-4", eps)
    fn = _GRAPHS[tree_id]
    coarse = fn(eps, 1)
    fine = fn(eps, 2)
    return _refine_guard(coarse, fine, f"graph_log_constant[{tree_id}]")


# --- the Robin-coefficient ladder ----------------------------------------


def _f_of_c(c, big_k, n_panels=10, n_per=4):
    """f(c) = c - int_{K/c}^1 (1/s) J0(s c) ds (empty integral if K/c >= 1)."""
    lo = big_k / c
    if lo >= 1.0:
        return c
    sigma, w = _gl_panels(np.linspace(math.log(lo), 0.0, n_panels + 1), n_per)
    integral = float(sum(wi * J0_of_a(float(np.exp(si) * c), n_per_seg=12)
                         for wi, si in zip(w, sigma)))
    return c - integral


def c_epsilon(eps_ladder, b_eps, b, big_k=0.25):
    """The Robin-coefficient sequence.  For finite target b the choice is
    c_eps = b identically.  For b = inf, c_eps solves
    f(c) = |log eps|/(32 pi) - b_eps by bisection, where
    f(c) = c - int_{K/c}^1 (1/s) J0(s c) ds; K must be such that J0(a) lies
    in [-3, -1] * I0_phi(1) for all a >= K (verified on a doubling grid)."""
    eps_ladder = np.asarray(eps_ladder, dtype=float)
    b_eps = np.asarray(b_eps, dtype=float)
    if eps_ladder.shape != b_eps.shape:
        raise ConfigError("eps ladder and b_eps ladder must align")
    if np.any(np.diff(eps_ladder) >= 0.0):
        raise ConfigError("eps ladder must be strictly decreasing")
    scaled = eps_ladder * b_eps
    if np.any(np.diff(scaled) > 1e-12):
        raise ConfigError("need eps * b_eps non-increasing along the ladder")
    if b != math.inf:
        return np.full(eps_ladder.shape, float(b))
    bound = I0_phi(1.0)
    a_check = big_k * 2.0 ** np.arange(0, 13)
    for a in a_check:
        j0 = J0_of_a(float(a))
        if not -3.0 * bound - 1e-12 <= j0 <= -bound + 1e-12:
            raise ToleranceError(
                f"K-property violated: J0({a:.4g}) = {j0:.6e} outside "
                f"[{-3.0 * bound:.6e}, {-bound:.6e}]")
    out = np.empty(eps_ladder.shape)
    for i, (e, be) in enumerate(zip(eps_ladder, b_eps)):
        target = abs(math.log(e)) / (32.0 * math.pi) - be
        lo, hi = big_k, max(target, big_k + 1e-9)
        if _f_of_c(lo, big_k) > target or _f_of_c(hi, big_k) < target:
            raise ToleranceError(
                f"bisection bracket failure for eps={e:g}: f({lo:g}), "
                f"f({hi:g}) do not straddle {target:.6e}")
        for _ in range(48):
            midp = 0.5 * (lo + hi)
            if _f_of_c(midp, big_k) < target:
                lo = midp
            else:
                hi = midp
        out[i] = 0.5 * (lo + hi)
    return out


# --- the per-ladder record -----------------------------------------------


@dataclass(frozen=True)
class RenormLedger:
    """Per-ladder record of renormalisation constants: the eps ladder, a
    name -> values-per-eps mapping, and the quadrature settings used."""

    eps_ladder: tuple
    constants: dict = field(default_factory=dict)
    settings: dict = field(default_factory=dict)

    def validate(self):
        ladder = np.asarray(self.eps_ladder, dtype=float)
        if ladder.size == 0 or np.any(np.diff(ladder) >= 0.0):
            raise ConfigError("eps ladder must be non-empty and strictly "
                              "decreasing")
        for name, vals in self.constants.items():
            if len(vals) != ladder.size:
                raise ConfigError(f"constant {name!r} does not align with "
                                  "the eps ladder")
        two_a = self.constants.get("ell_pam_2a")
        if two_a is not None:
            arr = np.asarray(two_a, dtype=float)
            if np.any(arr <= 0.0) or np.any(np.diff(arr) <= 0.0):
                raise ConfigError("ell_pam_2a must be positive and "
                                  "increasing as eps decreases")
        c_eps = self.constants.get("c_eps")
        if c_eps is not None and not np.all(np.isfinite(
                np.asarray(c_eps, dtype=float))):
            raise ConfigError("c_eps entries must be finite")
        return self
