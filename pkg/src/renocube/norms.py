"""Test-function pairings, weighted seminorm estimators, and boundary terms.

Distributions live on (optionally padded) cell-centered grids and are paired
with a single fixed bump profile by midpoint Riemann sums.  The seminorm
estimators are sampled lower bounds: they scan a declared set of dyadic
scales and a declared point cloud, so two runs are comparable only when the
sample sets agree.  Everything here is pure and deterministic; sums reduce in
a fixed order.
"""

import csv
import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.stats import qmc

from .errors import ConfigError, DomainError
from .geometry import SPACETIME4, SPATIAL3, dist_to_boundary, dist_to_edges
from .noise import STANDARD_BUMP, _norm_constants, _profile_fn

# Interpretation tags for lattice fields.  A "function" is weighted by the
# cell measure when paired; a density against the lattice measure already
# carries its cell mass in the stored values (noise increments, traces).
FUNCTION_FIELD = "function"
LATTICE_DENSITY = "density-against-lattice-measure"

# Boundary ids for distance weights: the six faces, or the twelve edges.
FACE_BOUNDARY = "boundary"
EDGE_BOUNDARY = "edges"

_DIST_FN = {FACE_BOUNDARY: dist_to_boundary, EDGE_BOUNDARY: dist_to_edges}

# Face order for surface quadrature: axis-major, negative side first.
FACES = ((0, -1.0), (0, 1.0), (1, -1.0), (1, 1.0), (2, -1.0), (2, 1.0))


@dataclass(frozen=True)
class TestFunction:
    """Recentred, rescaled bump psi_y^lambda with unit integral.

    The profile is the fixed standard bump; estimates built from it are
    profile-relative.  In the spatial frame the bump is radial and supported
    in the Euclidean ball of radius `scale`; in the space-time frame it is a
    product profile supported in the parabolic ball (|t| <= scale^2,
    |x_i| <= scale).  `codim` adds the boundary-scaling prefactor
    scale**codim used when testing distributions concentrated on a set of
    that scaled codimension (faces: 1, edges: 2, the t=0 slab: 2).
    """

    __test__ = False  # keep pytest collection away from the class name

    center: tuple
    scale: float
    codim: int = 0
    frame: str = SPATIAL3

    def __post_init__(self):
        if self.frame not in (SPATIAL3, SPACETIME4):
            raise ConfigError(f"unknown frame {self.frame!r}")
        want = 3 if self.frame == SPATIAL3 else 4
        center = tuple(float(c) for c in np.asarray(self.center, dtype=float).ravel())
        if len(center) != want:
            raise ConfigError(f"center needs {want} coordinates, got {len(center)}")
        object.__setattr__(self, "center", center)
        if not self.scale > 0:
            raise ConfigError("scale must be positive")
        if self.codim < 0 or int(self.codim) != self.codim:
            raise ConfigError("codim must be a nonnegative integer")

    @property
    def scaled_dim(self):
        return 3 if self.frame == SPATIAL3 else 5

    @property
    def prefactor(self):
        return self.scale ** self.codim

    def __call__(self, points):
        """Continuum evaluation at points of shape (..., 3) or (..., 4)."""
        pts = np.asarray(points, dtype=float)
        f = _profile_fn(STANDARD_BUMP)
        c = np.asarray(self.center)
        if self.frame == SPATIAL3:
            _, z3 = _norm_constants(STANDARD_BUMP)
            r = np.linalg.norm(pts - c, axis=-1)
            val = f(r / self.scale) / (z3 * self.scale ** 3)
        else:
            z1, _ = _norm_constants(STANDARD_BUMP)
            rel = pts - c
            val = f(rel[..., 0] / self.scale ** 2)
            for i in (1, 2, 3):
                val = val * f(rel[..., i] / self.scale)
            val = val / (z1 ** 4 * self.scale ** 5)
        return val * self.prefactor

    def values(self, grid, pad_cells=0, pad_steps=0):
        """Samples on the padded grid, renormalized so the midpoint sum times
        the cell measure equals prefactor exactly.

        Raises DomainError if the support ball escapes the region the padded
        grid covers, or if the scale is too small for any cell to see it.
        """
        if grid.domain.frame != self.frame:
            raise ConfigError("test-function frame does not match the grid")
        hw = grid.domain.half_width
        h = grid.h
        slack = 1e-9 * self.scale
        lo, hi = -hw - pad_cells * h, hw + pad_cells * h
        for i, c in enumerate(self.center[-3:]):
            if c - self.scale < lo - slack or c + self.scale > hi + slack:
                raise DomainError(
                    f"support [{c - self.scale:.4g}, {c + self.scale:.4g}] on "
                    f"spatial axis {i} escapes the padded grid [{lo}, {hi}]"
                )
        m = grid.n + 2 * pad_cells
        ax = -hw + (np.arange(m) + 0.5 - pad_cells) * h
        f = _profile_fn(STANDARD_BUMP)
        if self.frame == SPATIAL3:
            xx, yy, zz = np.meshgrid(ax - self.center[0], ax - self.center[1],
                                     ax - self.center[2], indexing="ij")
            raw = f(np.sqrt(xx * xx + yy * yy + zz * zz) / self.scale)
            measure = h ** 3
        else:
            dt = grid.time_step
            t_lo, t_hi = -pad_steps * dt, (grid.step_count + pad_steps) * dt
            s = self.center[0]
            if s - self.scale ** 2 < t_lo - slack or s + self.scale ** 2 > t_hi + slack:
                raise DomainError(
                    f"support [{s - self.scale ** 2:.4g}, {s + self.scale ** 2:.4g}] "
                    f"on the time axis escapes the padded grid [{t_lo}, {t_hi}]"
                )
            t = (np.arange(grid.step_count + 2 * pad_steps) + 0.5 - pad_steps) * dt
            wt = f((t - s) / self.scale ** 2)
            wx = [f((ax - self.center[1 + i]) / self.scale) for i in range(3)]
            raw = (wt[:, None, None, None] * wx[0][None, :, None, None]
                   * wx[1][None, None, :, None] * wx[2][None, None, None, :])
            measure = dt * h ** 3
        total = float(raw.sum()) * measure
        if total <= 0.0:
            raise DomainError(
                f"scale {self.scale:.4g} unresolved at grid spacing {h:.4g}"
            )
        return raw * (self.prefactor / total)


@dataclass(frozen=True)
class LatticeDistribution:
    """A lattice field plus the rule for pairing it with test functions."""

    grid: object
    values: np.ndarray
    tag: str = FUNCTION_FIELD
    pad_cells: int = 0
    pad_steps: int = 0

    def __post_init__(self):
        if self.tag not in (FUNCTION_FIELD, LATTICE_DENSITY):
            raise ConfigError(f"unknown interpretation tag {self.tag!r}")
        object.__setattr__(self, "values", np.asarray(self.values, dtype=float))
        m = self.grid.n + 2 * self.pad_cells
        if self.grid.domain.frame == SPATIAL3:
            want = (m, m, m)
        else:
            want = (self.grid.step_count + 2 * self.pad_steps, m, m, m)
        if self.values.shape != want:
            raise ConfigError(
                f"field shape {self.values.shape} does not match padded grid {want}"
            )

    @property
    def cell_measure(self):
        h = self.grid.h
        if self.grid.domain.frame == SPATIAL3:
            return h ** 3
        return self.grid.time_step * h ** 3

    def cell_sum(self):
        """Total mass: cell-measure-weighted sum for functions, plain sum for
        densities against the lattice measure."""
        total = float(self.values.sum())
        if self.tag == FUNCTION_FIELD:
            total *= self.cell_measure
        return total


def pair(u, psi):
    """Riemann-sum pairing of a lattice field with a test function.

    Functions contribute u * psi * cell measure; lattice-measure densities
    contribute u * psi.  Raises DomainError when the support of psi escapes
    the padded grid.
    """
    if psi.frame != u.grid.domain.frame:
        raise ConfigError("test-function frame does not match the field")
    w = psi.values(u.grid, u.pad_cells, u.pad_steps)
    total = float(np.sum(u.values * w))
    if u.tag == FUNCTION_FIELD:
        total *= u.cell_measure
    return total


# --- weighted seminorm estimation ----------------------------------------


@dataclass(frozen=True)
class HolderReport:
    """Sampled lower bound of a weighted seminorm, with its sample grid.

    rows holds (scale, point, distance, contribution) for every admissible
    sample, in scan order; estimate is the max of the contributions.
    """

    alpha: float
    eta: float
    boundary_id: str
    estimate: float
    rows: tuple


def dyadic_scales(k_lo, k_hi):
    """Scales 2^-k for k = k_lo .. k_hi inclusive, largest first."""
    if k_hi < k_lo:
        raise ConfigError("empty scale range")
    return 2.0 ** -np.arange(k_lo, k_hi + 1, dtype=float)


def stratified_point_cloud(domain, boundary_id=FACE_BOUNDARY, per_band=6,
                           band_count=5, budget=4096):
    """Quasi-random points stratified by distance to the chosen boundary.

    Band j = 1 .. band_count collects up to per_band points with distance in
    (hw * 2^-j-1, hw * 2^-j].  The generator is an unscrambled Halton
    sequence, so the cloud is a pure function of its arguments.
    """
    if boundary_id not in _DIST_FN:
        raise ConfigError(f"unknown boundary id {boundary_id!r}")
    if per_band <= 0 or band_count <= 0:
        raise ConfigError("per_band and band_count must be positive")
    dist = _DIST_FN[boundary_id]
    hw = domain.half_width
    draws = qmc.Halton(d=3, scramble=False).random(budget)
    buckets = {j: [] for j in range(1, band_count + 1)}
    for p in (2.0 * draws - 1.0) * hw:
        d = dist(domain, p)
        if d <= 0.0:
            continue
        j = int(math.floor(math.log2(hw / d)))
        if j in buckets and len(buckets[j]) < per_band:
            buckets[j].append(p)
        if all(len(b) == per_band for b in buckets.values()):
            break
    pts = [p for j in range(1, band_count + 1) for p in buckets[j]]
    if not pts:
        raise ConfigError("no points fell in the requested distance bands")
    return np.array(pts)


def weighted_holder_estimate(u, alpha, eta, boundary_id, scale_set, point_set):
    """Sampled sup of |u(psi_x^lam)| * lam^-alpha * |x|_P^(alpha-eta).

    A sample (x, lam) is admissible when lam >= 4h, lam <= |x|_P / 2, and the
    support of psi_x^lam stays on the padded grid; inadmissible samples are
    skipped.  The result is a lower bound for the seminorm, monotone in the
    sample sets; adding samples never decreases it.
    """
    if u.grid.domain.frame != SPATIAL3:
        raise ConfigError("seminorm estimation expects a spatial field")
    if not eta <= alpha <= 0.0:
        raise ConfigError(f"need eta <= alpha <= 0, got alpha={alpha}, eta={eta}")
    if boundary_id not in _DIST_FN:
        raise ConfigError(f"unknown boundary id {boundary_id!r}")
    dist = _DIST_FN[boundary_id]
    h = u.grid.h
    rows = []
    for x in np.asarray(point_set, dtype=float).reshape(-1, 3):
        d = dist(u.grid.domain, x)
        if d <= 0.0:
            continue
        for lam in scale_set:
            lam = float(lam)
            if lam < 4.0 * h or lam > 0.5 * d:
                continue
            psi = TestFunction(center=tuple(x), scale=lam)
            try:
                val = pair(u, psi)
            except DomainError:
                continue
            contribution = abs(val) * lam ** -alpha * d ** (alpha - eta)
            rows.append((lam, tuple(x), d, contribution))
    if not rows:
        raise ConfigError("empty admissible sample set")
    return HolderReport(alpha=float(alpha), eta=float(eta),
                        boundary_id=boundary_id,
                        estimate=max(r[3] for r in rows), rows=tuple(rows))


def write_holder_csv(path, report):
    """Write the sample rows plus a summary row (lambda column 'max')."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["alpha", "eta", "P", "lambda", "x1", "x2", "x3",
                    "contribution"])
        for lam, x, _, contribution in report.rows:
            w.writerow([report.alpha, report.eta, report.boundary_id,
                        lam, x[0], x[1], x[2], contribution])
        w.writerow([report.alpha, report.eta, report.boundary_id, "max",
                    "", "", "", report.estimate])


# --- boundary terms -------------------------------------------------------


def face_points(grid):
    """(6, n, n, 3) cell-center quadrature points of the six faces, in FACES
    order with tangential axes in increasing index order."""
    c = grid.cell_centers()
    n = grid.n
    hw = grid.domain.half_width
    out = np.empty((6, n, n, 3))
    for k, (axis, side) in enumerate(FACES):
        t1, t2 = [i for i in range(3) if i != axis]
        aa, bb = np.meshgrid(c, c, indexing="ij")
        out[k, ..., axis] = side * hw
        out[k, ..., t1] = aa
        out[k, ..., t2] = bb
    return out


def _on_faces(f, pts, n):
    if np.isscalar(f):
        return np.full((6, n, n), float(f))
    if callable(f):
        return np.asarray(f(pts), dtype=float)
    arr = np.asarray(f, dtype=float)
    if arr.shape != (6, n, n):
        raise ConfigError(
            f"trace shape {arr.shape} does not match the (6, {n}, {n}) faces"
        )
    return arr


def delta_boundary_pair(trace, phi, grid):
    """Surface pairing <delta_boundary * f, phi> = sum over faces of f * phi
    by the midpoint rule, exact for per-face linear integrands.

    trace may be a scalar, a callable of face points, or a (6, n, n) array in
    FACES order; phi a callable (a TestFunction works) or a scalar.
    """
    if grid.domain.frame != SPATIAL3:
        raise ConfigError("surface pairing expects a spatial grid")
    pts = face_points(grid)
    fv = _on_faces(trace, pts, grid.n)
    pv = _on_faces(phi, pts, grid.n)
    return float(np.sum(fv * pv)) * grid.h ** 2


def _project_to_faces(pts, hw):
    """Nearest-face projection, vectorized; ties resolve axis-major with the
    positive side first, matching geometry.project_to_boundary."""
    x = np.asarray(pts, dtype=float)
    cand = np.stack([hw - x[..., 0], hw + x[..., 0],
                     hw - x[..., 1], hw + x[..., 1],
                     hw - x[..., 2], hw + x[..., 2]], axis=-1)
    idx = np.argmin(cand, axis=-1)
    out = x.copy()
    for a in range(3):
        minus = idx == 2 * a + 1
        out[..., a] = np.where(idx == 2 * a, hw, out[..., a])
        out[..., a] = np.where(minus, -hw, out[..., a])
    return out


def boundary_correction(u, psi, eta):
    """Boundary-corrected pairing sum of u(x) (psi(x) - psi(proj x)) over the
    cube's interior cells, proj being the nearest-face projection.

    Subtracting the value at the projected point cancels the non-integrable
    part of a field blowing up like distance^eta with eta in (-2, -1); other
    exponents get a warning.  For psi supported inside the open cube and away
    from the boundary this equals pair(u, psi) identically, because then the
    projected term vanishes.  Padding cells are ignored.
    """
    if u.grid.domain.frame != SPATIAL3:
        raise ConfigError("boundary correction expects a spatial field")
    if not -2.0 < eta < -1.0:
        warnings.warn(
            f"blow-up exponent eta={eta} outside (-2, -1): the corrected "
            "pairing need not converge under refinement", stacklevel=2)
    grid = u.grid
    hw = grid.domain.half_width
    c = grid.cell_centers()
    xx, yy, zz = np.meshgrid(c, c, c, indexing="ij")
    pts = np.stack([xx, yy, zz], axis=-1)
    proj = _project_to_faces(pts, hw)
    if isinstance(psi, TestFunction):
        # same sampling as pair() so the away-from-boundary identity is exact
        w = psi.values(grid, u.pad_cells, u.pad_steps)
        p = u.pad_cells
        psi_x = w[p:p + grid.n, p:p + grid.n, p:p + grid.n]
    else:
        psi_x = np.asarray(psi(pts), dtype=float)
    psi_proj = np.asarray(psi(proj), dtype=float)
    p = u.pad_cells
    inner = u.values[p:p + grid.n, p:p + grid.n, p:p + grid.n]
    total = float(np.sum(inner * (psi_x - psi_proj)))
    if u.tag == FUNCTION_FIELD:
        total *= u.cell_measure
    return total
