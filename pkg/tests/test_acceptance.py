"""Acceptance gate: every stated numeric target at its stated tolerance,
one verdict line per criterion under pytest -v.

Known failures are left failing on purpose: the direct quadrature of the
closed-form double integral disagrees with the closed form away from the
matched point, and the cubic-equation triviality gap still grows on any
ladder a desk machine can reach (the resolution of the fixed
boundary-layer covariance dominates the logarithmically slow decay).
"""

import math
import time

import numpy as np
import pytest

from renocube import experiments as ex
from renocube import renorm, solvers
from renocube.geometry import Grid
from renocube.kernels import (
    CubeRobinHeat,
    halfspace_boundary_residual_analytic,
    kernel_residual,
    robin_to_dirichlet_gap,
)

_T0 = time.monotonic()

PI = math.pi
SCRJ_POINTS = ((1.0, -1.0), (1.0, 1.0), (3.0, 1.0))


def _nonincreasing_fraction(series_map):
    good = sum(1 for pairs in series_map.values()
               if all(a[1] >= b[1] for a, b in zip(pairs, pairs[1:])))
    return good / len(series_map)


@pytest.fixture(scope="module")
def triviality_record():
    return ex.run_phi4_triviality()


# --- closed-form double integral ------------------------------------------


def test_closed_form_scrJ_value_at_1_m1():
    assert renorm.scrJ_quadrature(1.0, -1.0) == pytest.approx(
        1.0 / (64.0 * PI), rel=5e-3)


def test_closed_form_scrJ_value_at_1_1():
    assert renorm.scrJ_quadrature(1.0, 1.0) == pytest.approx(
        renorm.scrJ_closed(1.0, 1.0), rel=5e-3)


def test_closed_form_scrJ_value_at_3_1():
    assert renorm.scrJ_quadrature(3.0, 1.0) == pytest.approx(
        renorm.scrJ_closed(3.0, 1.0), rel=5e-3)


def test_closed_form_scrJ_runtime_under_one_minute():
    start = time.monotonic()
    for a, b in SCRJ_POINTS:
        renorm.scrJ_quadrature(a, b)
    assert time.monotonic() - start < 60.0


# --- erfc identity --------------------------------------------------------


def test_erfc_identity_values():
    assert PI * renorm.erfc_identity_lhs(1.0) == pytest.approx(
        PI / 2.0, abs=1e-5)
    for a in (0.5, 1.0, 2.0):
        assert renorm.erfc_identity_lhs(a) == pytest.approx(
            2.0 * math.atan(a) / (PI * a), abs=1e-5)


# --- boundary density and mass profiles -----------------------------------


def test_pam_boundary_density_profile():
    for s in (0.25, 0.5, 1.0):
        assert renorm.pam_profile_I(0.0, s) * 8.0 * PI * s == pytest.approx(
            1.0, rel=1e-2)
    assert abs(renorm.pam_profile_odd()) <= 1e-3


def test_pam_boundary_slope_eps_and_y1():
    start = time.monotonic()
    target = math.log(2.0) / (8.0 * PI)
    mass = {e: renorm.pam_boundary_mass(e, 0.5)
            for e in (2.0 ** -3, 2.0 ** -4, 2.0 ** -5, 2.0 ** -6,
                      2.0 ** -7)}
    for e in (2.0 ** -4, 2.0 ** -5, 2.0 ** -6, 2.0 ** -7):
        assert mass[e] - mass[2.0 * e] == pytest.approx(target, rel=0.05)
    for y1 in (0.25, 0.125):
        diff = (renorm.pam_boundary_mass(2.0 ** -7, 2.0 * y1)
                - renorm.pam_boundary_mass(2.0 ** -7, y1))
        assert diff == pytest.approx(target, rel=0.05)
    assert time.monotonic() - start < 600.0


def test_phi4_boundary_slope_and_I0():
    target = math.log(2.0) / (32.0 * PI)
    mass = {e: renorm.phi4_boundary_mass(e, 0.5)
            for e in (2.0 ** -3, 2.0 ** -4, 2.0 ** -5, 2.0 ** -6,
                      2.0 ** -7)}
    for e in (2.0 ** -4, 2.0 ** -5, 2.0 ** -6, 2.0 ** -7):
        assert mass[e] - mass[2.0 * e] == pytest.approx(target, rel=0.05)
    assert renorm.I0_phi(1.0) == pytest.approx(1.0 / (32.0 * PI), rel=1e-2)


# --- the a-dependent boundary integral ------------------------------------


def test_cJ_large_a_limit_and_small_a_envelope():
    assert renorm.J0_of_a(1e3) == pytest.approx(-1.0 / (16.0 * PI),
                                                rel=2e-2)
    ratios = [abs(float(renorm.J0_of_a(float(a)))) / (a * abs(math.log(a)))
              for a in np.geomspace(1e-3, 0.3, 7)]
    assert max(ratios) / min(ratios) < 3.0


# --- boundary kernels -----------------------------------------------------


def test_robin_kernel_battery():
    hs_probes = [((0.1, 0.1, 0.0, 0.0), (0.0, 0.1, 0.0, 0.2)),
                 ((0.2, 0.0, 0.3, 0.0), (0.0, 0.0, 0.0, 0.5))]
    for a in (0.5, 2.0):
        assert halfspace_boundary_residual_analytic(a, hs_probes) <= 1e-6
    y = (0.0, 0.1, -0.2)
    bd_probes = [(0.06, (1.0, 0.2, 0.1), 0.0, y),
                 (0.06, (0.3, -1.0, 0.0), 0.0, y)]
    res = {m: kernel_residual(
        CubeRobinHeat(a=math.inf, image_order=m).eval, bd_probes,
        mode="boundary", a=math.inf) for m in (1, 3)}
    assert res[3] <= res[1] / 5.0
    mass = CubeRobinHeat(a=0.0, image_order=3).mass(0.05, (0.2, 0.1, -0.3),
                                                    0.0)
    assert mass == pytest.approx(1.0, abs=1e-3)
    gap_probes = [(0.1, (0.3, -0.2, 0.1), 0.0, (0.0, 0.4, -0.3)),
                  (0.15, (0.5, 0.1, 0.0), 0.0, (-0.2, -0.1, 0.2))]
    gaps = {a: robin_to_dirichlet_gap(a, gap_probes)
            for a in (8, 16, 32, 64)}
    for a in (8, 16, 32):
        assert gaps[2 * a] / gaps[a] == pytest.approx(0.5, abs=0.15)


# --- bulk renormalisation constants ---------------------------------------


def test_bulk_constant_scaling():
    for fn in (renorm.ell_pam_2a, renorm.ell_phi_2):
        for eps in (2.0 ** -3, 2.0 ** -4, 2.0 ** -5):
            assert fn(eps / 2.0) / fn(eps) == pytest.approx(2.0, rel=0.10)
    for tree_id in ("PAM-4a", "Phi-4"):
        vals = [renorm.graph_log_constant(tree_id, e)
                for e in (2.0 ** -5, 2.0 ** -6, 2.0 ** -7)]
        diffs = np.diff(vals)
        assert np.all(np.abs(diffs / diffs.mean() - 1.0) <= 0.10)


def test_c_eps_construction():
    for c in (0.3, 1.0, 5.0):
        assert renorm._f_of_c(c, 0.25) >= c
    finite = renorm.c_epsilon(np.array([0.125, 0.0625, 0.03125]),
                              np.zeros(3), 0.7)
    assert np.all(finite == 0.7)
    ladder = np.array([1e-14, 1e-16, 1e-18])
    out = renorm.c_epsilon(ladder, np.zeros(3), math.inf)
    gaps = out - np.abs(np.log(ladder)) / (32.0 * PI)
    assert np.all(gaps < 0.0)
    assert np.all(np.diff(np.abs(gaps)) > 0.0)


# --- deterministic solver orders ------------------------------------------


def test_solver_space_order():
    def err(n):
        grid = Grid(n)
        x = grid.cell_centers()
        c = np.cos(np.pi * x)
        u_star = c[:, None, None] * c[None, :, None] * c[None, None, :]
        y = solvers.solve_neumann_poisson(grid, -3 * np.pi ** 2 * u_star)
        return np.abs(y - u_star).max()

    errs = [err(n) for n in (16, 32, 64)]
    for coarse, fine in zip(errs, errs[1:]):
        assert 3.2 < coarse / fine < 4.8  # h^2 within 20%


def test_solver_time_order():
    grid = Grid(16)
    x = np.sin(np.pi * (np.arange(grid.n) + 0.5) / grid.n)
    phi = x[:, None, None] * x[None, :, None] * x[None, None, :]
    lam = 3.0 * (4.0 / grid.h ** 2) * math.sin(math.pi / (2 * grid.n)) ** 2
    t_final = 0.5
    exact = math.exp(-lam * t_final) * phi

    def err(dt):
        u = phi
        z = np.zeros_like(phi)
        for _ in range(int(round(t_final / dt))):
            u = solvers.step_semi_implicit(grid, u, z,
                                           solvers.dirichlet0(), dt)
        return np.abs(u - exact).max()

    errs = [err(dt) for dt in (0.02, 0.01, 0.005)]
    for coarse, fine in zip(errs, errs[1:]):
        assert 1.6 < coarse / fine < 2.4  # O(dt) within 20%


def test_phi4_ode_limit():
    grid = Grid(4)
    ones = np.ones((4, 4, 4))
    t_final = 1.0
    exact = 1.0 / math.sqrt(1.0 + 2.0 * t_final)

    def rel_err(dt):
        steps = int(round(t_final / dt))
        traj = solvers.solve_phi4(grid, 0.5, solvers.neumann0(), 0.0, ones,
                                  t_final, dt, seed=0,
                                  increments=np.zeros((steps, 4, 4, 4)))
        return abs(traj.final[1, 2, 3] - exact) / exact

    assert rel_err(0.005) < 0.02
    assert rel_err(0.005) / rel_err(0.0025) > 1.6


# --- coupled-ladder SPDE trends -------------------------------------------


def test_spde_trend_pam_dirichlet_arm():
    rec = ex.run_pam_convergence("dirichlet")
    means = ex.mean_series_by_probe(rec, "successive_difference")
    assert ex.fraction_decreasing(means) >= 0.8


def test_spde_trend_pam_robin_arm():
    rec = ex.run_pam_convergence("renormalized_robin")
    means = ex.mean_series_by_probe(rec, "successive_difference")
    assert ex.fraction_decreasing(means) >= 0.8


def test_spde_trend_phi4_triviality_gap(triviality_record):
    # the measured gap still grows on every reachable ladder (see module
    # docstring); this stays red rather than loosening the criterion
    means = ex.mean_series_by_probe(triviality_record, "dirichlet_gap",
                                    arm=ex.PHI4_ARM_TRIVIAL)
    assert len(means) == 5
    assert _nonincreasing_fraction(means) >= 0.8


def test_spde_trend_phi4_control_separation(triviality_record):
    trivial = ex.mean_series_by_probe(triviality_record, "dirichlet_gap",
                                      arm=ex.PHI4_ARM_TRIVIAL)
    control = ex.mean_series_by_probe(triviality_record, "dirichlet_gap",
                                      arm=ex.PHI4_ARM_CONTROL)
    for probe, pairs in control.items():
        for (eps_c, gap_c), (eps_t, gap_t) in zip(pairs, trivial[probe]):
            assert eps_c == eps_t
            assert gap_c > 0.1
            assert gap_c >= 2.0 * gap_t


def test_full_acceptance_runtime_under_one_hour():
    assert time.monotonic() - _T0 < 3600.0
