"""Cube geometry: distances to boundary/edges, projections, symmetry reduction.

The canonical domain is the open cube D = (-1,1)^3.  Space-time points are
stored as (t, x1, x2, x3) and measured with the parabolic norm
max(|t|^{1/2}, |x_i|).  All functions here are pure and thread-safe.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, DomainError

SPATIAL3 = "spatial3"
SPACETIME4 = "spacetime4"

# Explicit-substep stability bound dt <= STABILITY_C * h^2 in 3D.
STABILITY_C = 1.0 / 6.0


@dataclass(frozen=True)
class Domain:
    """The cube (-half_width, half_width)^3, optionally with a time axis."""

    half_width: float = 1.0
    frame: str = SPATIAL3

    def __post_init__(self):
        if self.half_width <= 0:
            raise ConfigError("half_width must be positive")
        if self.frame not in (SPATIAL3, SPACETIME4):
            raise ConfigError(f"unknown frame {self.frame!r}")

    @property
    def scaled_dim(self):
        """Effective (scaled) dimension: 3 spatial, 5 parabolic space-time."""
        return 3 if self.frame == SPATIAL3 else 5

    def contains(self, x, closed=True):
        x = np.asarray(x, dtype=float)
        if closed:
            return bool(np.all(np.abs(x) <= self.half_width))
        return bool(np.all(np.abs(x) < self.half_width))


@dataclass(frozen=True)
class Grid:
    """Uniform cell-centered grid on the cube; h = 2*half_width/n exactly."""

    n: int
    domain: Domain = Domain()
    time_step: float = None
    step_count: int = None
    semi_implicit: bool = False

    def __post_init__(self):
        if self.n <= 0:
            raise ConfigError("cells_per_axis must be positive")
        if self.domain.frame == SPACETIME4:
            if self.time_step is None or self.step_count is None:
                raise ConfigError("space-time grid needs time_step and step_count")
            if not self.semi_implicit and self.time_step > STABILITY_C * self.h ** 2:
                raise ConfigError(
                    f"time_step {self.time_step} exceeds stability bound "
                    f"{STABILITY_C * self.h ** 2:.3e} (h={self.h}); "
                    "use semi_implicit=True to relax"
                )

    @property
    def h(self):
        return 2.0 * self.domain.half_width / self.n

    def cell_centers(self):
        """1D array of per-axis cell-center coordinates."""
        hw = self.domain.half_width
        return -hw + (np.arange(self.n) + 0.5) * self.h


def parabolic_norm(z):
    """max(|t|^{1/2}, |x_i|) for a space-time point z = (t, x1, x2, x3)."""
    z = np.asarray(z, dtype=float)
    return max(np.sqrt(abs(z[0])), np.max(np.abs(z[1:])))


def _spatial_point(dom, x):
    x = np.asarray(x, dtype=float)
    if x.shape != (3,):
        raise DomainError(f"expected a 3-point, got shape {x.shape}")
    if np.any(np.abs(x) > dom.half_width):
        raise DomainError(f"point {x.tolist()} outside the closed cube")
    return x


def dist_to_boundary(dom, x):
    """Distance from x to the boundary of the cube (min over the six faces)."""
    x = _spatial_point(dom, x)
    return float(np.min(dom.half_width - np.abs(x)))


def dist_to_edges(dom, x):
    """Euclidean distance from x to the 1-skeleton (edges) of the cube."""
    x = _spatial_point(dom, x)
    d = np.sort(dom.half_width - np.abs(x))
    # Nearest edge is the meet of the two nearest faces.
    return float(np.hypot(d[0], d[1]))


def project_to_boundary(dom, x):
    """Nearest boundary point.  Ties: axis priority x1 > x2 > x3, + before -."""
    x = _spatial_point(dom, x)
    hw = dom.half_width
    best = None
    best_d = np.inf
    for axis in range(3):
        for sign in (1.0, -1.0):
            d = hw - sign * x[axis]
            if d < best_d:
                best_d = d
                best = (axis, sign)
    axis, sign = best
    p = x.copy()
    p[axis] = sign * hw
    return p


def canonicalize_to_Q(dom, x):
    """Map x into the symmetry-reduced tetrahedron; returns (point, tag).

    The canonical region is {-hw <= x3 <= x1 <= x2 <= 0}: reflections fold
    every coordinate to be nonpositive, then a permutation sorts so the
    smallest coordinate sits third and the largest second.  Shifting by +hw
    expresses the region in face-distance coordinates, where
    dist_to_boundary = x3 + hw.  The tag (flips, perm) is exactly invertible
    via uncanonicalize; the map is idempotent on the canonical region.
    """
    x = _spatial_point(dom, x)
    flips = x > 0.0
    y = np.where(flips, -x, x)
    # Ascending source axes [x3-slot, x1-slot, x2-slot]; ties break so that
    # points already canonical get the identity permutation.
    order = np.lexsort((np.array([1, 2, 0]), y))
    perm = (int(order[1]), int(order[2]), int(order[0]))  # output slot -> source axis
    q = y[list(perm)]
    tag = (tuple(bool(f) for f in flips), perm)
    return q, tag


def uncanonicalize(dom, q, tag):
    """Invert canonicalize_to_Q: apply the inverse permutation, then unflip."""
    q = np.asarray(q, dtype=float)
    flips, perm = tag
    y = np.empty(3)
    for slot, src in enumerate(perm):
        y[src] = q[slot]
    return np.where(flips, -y, y)


def in_Q(dom, x):
    """True if x lies in the canonical region -hw <= x3 <= x1 <= x2 <= 0."""
    x = np.asarray(x, dtype=float)
    return bool(
        -dom.half_width <= x[2] <= x[0] <= x[1] <= 0.0
    )
