"""Desk-scale studies of the boundary phenomena.

Each study couples every arm and ladder rung to one master noise
realization, so cross-arm comparisons see identical randomness and whole
records replay bit-for-bit from (config, seed).  Results land in flat
observable tables -- one row per recorded number, each row carrying its
(series, arm, eps, seed, probe, time) coordinates -- plus least-squares
slope fits where a log law is expected.  Convergence statements are
reported as trends along the ladder, never as pass/fail limits.
"""

import csv
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.ndimage import convolve1d

from . import norms, renorm, solvers
from .errors import ConfigError
from .geometry import SPACETIME4, SPATIAL3, Grid
from .noise import (STANDARD_BUMP, NoiseSample, _profile_fn, _rng,
                    make_mollifier, mollify, restrict_to_coarse,
                    sample_white_noise_3d)

EQ_PAM = "pam"
EQ_PHI4 = "phi4"

PAM_MODE_DIRICHLET = "dirichlet"
PAM_MODE_ROBIN = "renormalized_robin"
PAM_MODE_NEUMANN = "naive_neumann"
_PAM_MODES = (PAM_MODE_DIRICHLET, PAM_MODE_ROBIN, PAM_MODE_NEUMANN)

PHI4_ARM_DIRICHLET = "dirichlet"
PHI4_ARM_TRIVIAL = "neumann_b0"
PHI4_ARM_CONTROL = "control_b"

LOG_SLOPE_MODEL = "s*log(x)+c"

# Quadrature ladders for the boundary-profile slope fits (no lattice).
PROFILE_EPS_LADDER = (0.0625, 0.03125, 0.015625, 0.0078125)
PROFILE_Y1_GRID = (0.125, 0.25, 0.5)

# Lattice ladders.  The solver rungs must resolve their bump on the grid
# the equation is actually stepped on: below roughly four cells per eps
# the restricted noise loses variance and the ladder stops being Cauchy
# on that grid, so the stepped ladders stay in the eps >= 4h regime (the
# Phi^4 ladder reaches it through per-rung master refinements, which is
# safe there because both arms of a gap share the same restriction).
PAM_EPS_LADDER = (0.5, 0.3536, 0.25, 0.1768)
PHI4_EPS_LADDER = (0.25, 0.125, 0.0625)
TRACE_EPS_LADDER = (0.0625, 0.03125, 0.015625, 0.0078125)

# Fixed probe set: three interior bumps and two pressed near a face,
# shared by every experiment so cross-arm pairings compare like with
# like.  Entries are (id, center, scale); the scale-0.15 bumps stay
# supported inside the cube (max reach 0.95).
PROBE_SPECS = (
    ("interior-0", (0.0, 0.0, 0.0), 0.35),
    ("interior-1", (-0.45, 0.3, 0.5), 0.3),
    ("interior-2", (0.5, -0.55, -0.35), 0.3),
    ("face-0", (0.8, 0.1, -0.2), 0.15),
    ("face-1", (-0.15, -0.75, 0.78), 0.16),
)

# In-plane probes for the trace study, (id, center, scale) in the two
# tangential coordinates of the x3 = -1 face.
PLANE_PROBE_SPECS = (
    ("plane-0", (0.0, 0.0), 0.3),
    ("plane-1", (0.5, -0.25), 0.3),
    ("plane-2", (-0.6, 0.6), 0.3),
)

_ROW_KEYS = ("series", "arm", "eps", "seed", "probe", "time", "value")
_FIT_KEYS = ("slope", "intercept", "stderr", "n_points")


# --- probes ---------------------------------------------------------------


def probe_set():
    """The fixed probes as unit-mass test functions."""
    return tuple((pid, norms.TestFunction(center=c, scale=s))
                 for pid, c, s in PROBE_SPECS)


def probe_pairings(grid, field_3d):
    """id -> <field, probe> for every fixed probe."""
    u = norms.LatticeDistribution(grid, np.asarray(field_3d, dtype=float),
                                  norms.FUNCTION_FIELD)
    return {pid: norms.pair(u, tf) for pid, tf in probe_set()}


def plane_probes(grid):
    """id -> unit-sum weights on an (n, n) tangential plane."""
    ax = -grid.domain.half_width + (np.arange(grid.n) + 0.5) * grid.h
    f = _profile_fn(STANDARD_BUMP)
    out = {}
    for pid, (c1, c2), scale in PLANE_PROBE_SPECS:
        xx, yy = np.meshgrid(ax - c1, ax - c2, indexing="ij")
        raw = f(np.sqrt(xx * xx + yy * yy) / scale)
        total = float(raw.sum())
        if total <= 0.0:
            raise ConfigError(
                f"plane probe {pid} unresolved at grid spacing {grid.h:g}")
        out[pid] = raw / total
    return out


# --- least-squares log fits ----------------------------------------------


def fit_log_slope(series, model=LOG_SLOPE_MODEL):
    """Ordinary least squares for v = s*log(x) + c.

    Returns (slope, intercept, stderr) where stderr is the standard error
    of the slope; exact log data comes back with stderr 0 (to rounding).
    """
    if model != LOG_SLOPE_MODEL:
        raise ConfigError(
            f"unknown fit model {model!r}; expected {LOG_SLOPE_MODEL!r}")
    pts = [(float(x), float(v)) for x, v in series]
    if len(pts) < 3:
        raise ConfigError("log-slope fit needs at least 3 points")
    x = np.array([p[0] for p in pts])
    v = np.array([p[1] for p in pts])
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(v))):
        raise ConfigError("log-slope fit needs finite data")
    if np.any(x <= 0.0):
        raise ConfigError("log-slope fit needs positive abscissae")
    t = np.log(x)
    sxx = float(np.sum((t - t.mean()) ** 2))
    if sxx <= 1e-12:
        raise ConfigError("degenerate abscissae: log x values do not spread")
    slope = float(np.sum((t - t.mean()) * (v - v.mean())) / sxx)
    intercept = float(v.mean() - slope * t.mean())
    rss = float(np.sum((v - slope * t - intercept) ** 2))
    stderr = math.sqrt(max(rss, 0.0) / (len(pts) - 2) / sxx)
    return slope, intercept, stderr


def _fit_entry(pairs):
    slope, intercept, stderr = fit_log_slope(pairs)
    return {"slope": slope, "intercept": intercept, "stderr": stderr,
            "n_points": len(pairs)}


# --- the result record ----------------------------------------------------


@dataclass(frozen=True)
class ExperimentRecord:
    """Flat result table for one orchestrated study.

    Observable rows are dicts keyed series/arm/eps/seed/probe/time/value,
    so every number traces back to its (seed, eps, config) triple.  For
    plane-trace series the time column carries the plane height r; rows
    without a natural time leave it None.  run_date stays None unless the
    caller supplies one, keeping emitted files byte-stable.
    """

    experiment_id: str
    config: dict
    seeds: tuple
    eps_ladder: tuple
    observables: tuple = ()
    fits: dict = field(default_factory=dict)
    statuses: dict = field(default_factory=dict)
    timestamps: dict = field(default_factory=lambda: {"run_date": None})

    def __post_init__(self):
        if not self.experiment_id:
            raise ConfigError("experiment id must be non-empty")
        object.__setattr__(self, "seeds",
                           tuple(int(s) for s in self.seeds))
        if not self.seeds:
            raise ConfigError("record needs at least one seed")
        ladder = tuple(float(e) for e in self.eps_ladder)
        arr = np.asarray(ladder)
        if (arr.size == 0 or not np.all(np.isfinite(arr))
                or np.any(arr <= 0.0) or np.any(np.diff(arr) >= 0.0)):
            raise ConfigError("eps ladder must be positive, finite and "
                              "strictly decreasing")
        object.__setattr__(self, "eps_ladder", ladder)
        rows = []
        for raw in self.observables:
            row = dict(raw)
            if tuple(sorted(row)) != tuple(sorted(_ROW_KEYS)):
                raise ConfigError(f"observable row keys {sorted(row)} != "
                                  f"{sorted(_ROW_KEYS)}")
            try:
                row["eps"] = float(row["eps"])
                row["seed"] = int(row["seed"])
                row["value"] = float(row["value"])
                if row["time"] is not None:
                    row["time"] = float(row["time"])
            except (TypeError, ValueError) as err:
                raise ConfigError(
                    f"malformed observable row field: {err}") from err
            if min(abs(row["eps"] - e) for e in ladder) > 1e-12 * row["eps"]:
                raise ConfigError(f"observable eps {row['eps']!r} is not a "
                                  "ladder rung")
            if row["seed"] not in self.seeds:
                raise ConfigError("observable row cites a seed missing from "
                                  "the record")
            if not math.isfinite(row["value"]):
                raise ConfigError("observable values must be finite")
            if row["time"] is not None and not math.isfinite(row["time"]):
                raise ConfigError("observable times must be finite")
            row["series"] = str(row["series"])
            row["arm"] = str(row["arm"])
            row["probe"] = str(row["probe"])
            rows.append(row)
        object.__setattr__(self, "observables", tuple(rows))
        for name, entry in self.fits.items():
            if tuple(sorted(entry)) != tuple(sorted(_FIT_KEYS)):
                raise ConfigError(f"fit {name!r} must carry keys {_FIT_KEYS}")
        for key, status in self.statuses.items():
            if status not in (solvers.STATUS_OK, solvers.STATUS_BLOWUP):
                raise ConfigError(f"unknown status {status!r} for {key!r}")


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if obj is None or isinstance(obj, (bool, str, int)):
        return obj
    if isinstance(obj, (float, np.floating)):
        return float(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    raise ConfigError(f"value of type {type(obj).__name__} does not "
                      "serialize")


def record_to_jsonable(record):
    return {
        "experiment_id": record.experiment_id,
        "config": _jsonable(record.config),
        "seeds": list(record.seeds),
        "eps_ladder": list(record.eps_ladder),
        "observables": [_jsonable(r) for r in record.observables],
        "fits": _jsonable(record.fits),
        "statuses": _jsonable(record.statuses),
        "timestamps": _jsonable(record.timestamps),
    }


def write_record_json(path, record):
    """Full record with stable key order; reruns are byte-identical."""
    text = json.dumps(record_to_jsonable(record), sort_keys=True, indent=2)
    with open(path, "w") as fh:
        fh.write(text + "\n")


def read_record_json(path):
    with open(path) as fh:
        data = json.load(fh)
    return ExperimentRecord(
        experiment_id=data["experiment_id"],
        config=data["config"],
        seeds=tuple(data["seeds"]),
        eps_ladder=tuple(data["eps_ladder"]),
        observables=tuple(data["observables"]),
        fits=data["fits"],
        statuses=data["statuses"],
        timestamps=data["timestamps"],
    )


def write_record_csv(path, record):
    """Flat observable series: one row per recorded number."""
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(list(_ROW_KEYS))
        for row in record.observables:
            out.writerow([row["series"], row["arm"], row["eps"],
                          row["seed"], row["probe"],
                          "" if row["time"] is None else row["time"],
                          row["value"]])


def series_by_probe(record, series, arm=None):
    """probe -> [(eps, value), ...] ordered coarse-to-fine."""
    out = {}
    for row in record.observables:
        if row["series"] != series:
            continue
        if arm is not None and row["arm"] != arm:
            continue
        out.setdefault(row["probe"], []).append((row["eps"], row["value"]))
    for pairs in out.values():
        pairs.sort(key=lambda p: -p[0])
    return out


def fraction_decreasing(series_map):
    """Share of probes whose values strictly decrease along the ladder."""
    if not series_map:
        raise ConfigError("no series to evaluate")
    good = sum(1 for pairs in series_map.values()
               if all(a[1] > b[1] for a, b in zip(pairs, pairs[1:])))
    return good / len(series_map)


def mean_series_by_probe(record, series, arm=None):
    """probe -> [(eps, value averaged over seeds)] ordered coarse-to-fine.

    The per-seed rows stay in the record; this is the ensemble view used
    when judging trends, since single-seed differences fluctuate at the
    weakest probes.
    """
    acc = {}
    for row in record.observables:
        if row["series"] != series:
            continue
        if arm is not None and row["arm"] != arm:
            continue
        acc.setdefault(row["probe"], {}).setdefault(
            row["eps"], []).append(row["value"])
    out = {}
    for probe, by_eps in acc.items():
        out[probe] = [(eps, float(np.mean(by_eps[eps])))
                      for eps in sorted(by_eps, reverse=True)]
    return out


# --- shared plumbing ------------------------------------------------------


def _check_ladder(eps_ladder):
    ladder = tuple(float(e) for e in eps_ladder)
    arr = np.asarray(ladder)
    if (arr.size == 0 or not np.all(np.isfinite(arr))
            or np.any(arr <= 0.0) or np.any(np.diff(arr) >= 0.0)):
        raise ConfigError("eps ladder must be positive, finite and strictly "
                          "decreasing")
    return ladder


def _run_jobs(jobs, threads):
    """Run (key, thunk) jobs, returning key -> result in job order.

    Worker count never changes the results: each thunk is deterministic
    and the merge follows the submitted order, not completion order.
    """
    if int(threads) != threads or threads < 1:
        raise ConfigError("threads must be a positive integer")
    if threads == 1 or len(jobs) <= 1:
        return {key: fn() for key, fn in jobs}
    with ThreadPoolExecutor(max_workers=int(threads)) as pool:
        futures = [(key, pool.submit(fn)) for key, fn in jobs]
        return {key: fut.result() for key, fut in futures}


def _fine_factor(eps, h, fine_limit):
    """Smallest dyadic refinement with eps >= 4 * h / factor."""
    if fine_limit < 1 or fine_limit & (fine_limit - 1):
        raise ConfigError("fine_limit must be a power of two")
    f = 1
    while eps < 4.0 * h / f:
        if f >= fine_limit:
            raise ConfigError(f"eps={eps:g} stays below four cells even at "
                              f"refinement factor {fine_limit}")
        f *= 2
    return f


def _snapshot_times(t_final, dt):
    # lattice times in the late, quasi-stationary window; time-averaging
    # pathwise observables over them cuts single-snapshot scatter
    steps = int(round(t_final / dt))
    ks = sorted({max(1, round(0.6 * steps)), max(1, round(0.8 * steps)),
                 steps})
    return tuple(k * dt for k in ks)


def pam_master_potentials(grid, eps_ladder, seed, fine_limit=4,
                          profile=STANDARD_BUMP):
    """Mollified spatial noise for every rung from one master draw.

    The master is white noise on the finest dyadic refinement of `grid`
    any rung needs; coarser rungs mollify the block-averaged master
    (block means of white noise are white at the coarse spacing), so the
    whole ladder is a deterministic function of (seed, config) and rungs
    are exactly coupled.  Returns eps -> field on `grid`.
    """
    ladder = _check_ladder(eps_ladder)
    n, h = grid.n, grid.h
    facs = {e: _fine_factor(e, h, fine_limit) for e in ladder}
    molls = {e: make_mollifier(profile, e) for e in ladder}
    fmax = max(facs.values())
    pad = max(molls[e].stencil_radius(h / facs[e]) * (fmax // facs[e])
              for e in ladder)
    pad = -(-pad // fmax) * fmax
    master = sample_white_noise_3d(Grid(n * fmax), seed, pad_cells=pad)
    out = {}
    for eps in ladder:
        f = facs[eps]
        m = fmax // f
        vals = master.values if m == 1 else restrict_to_coarse(
            master.values, m)
        r = molls[eps].stencil_radius(h / f)
        trim = pad // m - r
        if trim:
            vals = vals[trim:-trim, trim:-trim, trim:-trim]
        samp = NoiseSample(grid=Grid(n * f), frame=SPATIAL3, seed=seed,
                           values=vals, pad_cells=r)
        fine = mollify(samp, molls[eps])
        out[eps] = fine if f == 1 else restrict_to_coarse(fine, f)
    return out


def phi4_master_increments(grid, eps_ladder, steps, dt, seed, fine_limit=4,
                           profile=STANDARD_BUMP):
    """Per-step mollified space-time increments for every rung, coupled
    through one master stream of fine spatial slabs.

    Spatial averaging runs on each rung's own refinement of the master
    slab; the temporal average runs afterwards at the solve resolution
    (the space-time bump is a per-axis product, so the order only fixes
    the floating-point grouping).  Returns eps -> (steps, n, n, n).
    """
    ladder = _check_ladder(eps_ladder)
    if int(steps) != steps or steps < 1:
        raise ConfigError("steps must be a positive integer")
    steps = int(steps)
    n, h = grid.n, grid.h
    facs = {e: _fine_factor(e, h, fine_limit) for e in ladder}
    molls = {e: make_mollifier(profile, e, frame=SPACETIME4)
             for e in ladder}
    axes = {e: molls[e].stencil_axes(h / facs[e], dt) for e in ladder}
    rts = {e: (len(axes[e][0]) - 1) // 2 for e in ladder}
    rss = {e: molls[e].stencil_radius(h / facs[e]) for e in ladder}
    fmax = max(facs.values())
    pad = max(rss[e] * (fmax // facs[e]) for e in ladder)
    pad = -(-pad // fmax) * fmax
    rt_max = max(rts.values())
    big_m = n * fmax + 2 * pad
    sigma = (dt * (h / fmax) ** 3) ** -0.5
    gen = _rng(seed)
    pre = {e: np.empty((steps + 2 * rts[e], n, n, n)) for e in ladder}
    for k in range(steps + 2 * rt_max):
        slab = gen.standard_normal((big_m, big_m, big_m))
        slab *= sigma
        for eps in ladder:
            j = k - (rt_max - rts[eps])
            if not 0 <= j < pre[eps].shape[0]:
                continue
            f = facs[eps]
            m = fmax // f
            vals = slab if m == 1 else restrict_to_coarse(slab, m)
            r = rss[eps]
            trim = pad // m - r
            if trim:
                vals = vals[trim:-trim, trim:-trim, trim:-trim]
            for ax in range(3):
                vals = convolve1d(vals, axes[eps][1 + ax], axis=ax,
                                  mode="constant")
            sl = slice(r, -r) if r else slice(None)
            vals = vals[sl, sl, sl]
            pre[eps][j] = vals if f == 1 else restrict_to_coarse(vals, f)
    out = {}
    for eps in ladder:
        rt = rts[eps]
        mixed = convolve1d(pre.pop(eps), axes[eps][0], axis=0,
                           mode="constant")
        out[eps] = mixed[rt:rt + steps].copy()
    return out


def _status_key(arm, eps, seed):
    return f"{arm}:eps={eps:g}:seed={seed}"


def _pairing_rows(series, arm, eps, seed, traj, grid):
    rows = []
    for t, snap in zip(traj.times, traj.snapshots):
        if t == 0.0:
            continue
        for pid, value in probe_pairings(grid, snap).items():
            rows.append({"series": series, "arm": arm, "eps": eps,
                         "seed": seed, "probe": pid, "time": t,
                         "value": value})
    return rows


def _final_pairings(rows, arm, eps, t_star, seed=None):
    # t_star is the lattice time steps*dt the stepper actually records,
    # which can differ from the requested t_final in the last bit.
    out = {}
    for row in rows:
        if (row["series"] == "probe_pairing" and row["arm"] == arm
                and row["eps"] == eps and row["time"] == t_star
                and (seed is None or row["seed"] == seed)):
            out[row["probe"]] = row["value"]
    return out


# --- boundary-profile slope fits -----------------------------------------


def run_profile_slopes(equation, eps_ladder=PROFILE_EPS_LADDER,
                       y1_grid=PROFILE_Y1_GRID, *, a_rho=0.0, c_tilde=0.0,
                       seed=0):
    """Quadrature tables of the boundary mass m_eps(y1) with fitted
    d m / d log(1/eps) per y1 and d m / d log y1 per eps."""
    if equation not in (EQ_PAM, EQ_PHI4):
        raise ConfigError(f"unknown equation {equation!r}")
    ladder = _check_ladder(eps_ladder)
    y1s = tuple(float(y) for y in y1_grid)
    if not y1s or any(y <= max(ladder) for y in y1s):
        raise ConfigError("every y1 must exceed the coarsest eps rung")
    rows = []
    mass = {}
    for eps in ladder:
        for y1 in y1s:
            if equation == EQ_PAM:
                m = renorm.pam_boundary_mass(eps, y1)
            else:
                m = renorm.phi4_boundary_mass(eps, y1, c_tilde=c_tilde,
                                              a_rho=a_rho)
            mass[eps, y1] = m
            rows.append({"series": "boundary_mass", "arm": equation,
                         "eps": eps, "seed": seed, "probe": f"y1={y1:g}",
                         "time": None, "value": m})
    fits = {}
    for y1 in y1s:
        pairs = [(1.0 / eps, mass[eps, y1]) for eps in ladder]
        fits[f"eps_slope[y1={y1:g}]"] = _fit_entry(pairs)
    if len(y1s) >= 3:
        for eps in ladder:
            pairs = [(y1, mass[eps, y1]) for y1 in y1s]
            fits[f"y1_slope[eps={eps:g}]"] = _fit_entry(pairs)
    config = {"experiment": "profile_slopes", "equation": equation,
              "eps_ladder": ladder, "y1_grid": y1s, "a_rho": a_rho,
              "c_tilde": c_tilde, "seed": seed,
              "mass_route": "scaled-profile table" if equation == EQ_PAM
              else "log-panel quadrature"}
    return ExperimentRecord(
        experiment_id=f"profile-slopes-{equation}", config=config,
        seeds=(seed,), eps_ladder=ladder, observables=tuple(rows),
        fits=fits, statuses={}, timestamps={"run_date": None})


# --- coupled-ladder convergence (multiplicative equation) ----------------


def _pam_bc(bc_mode, eps, a_rho):
    if bc_mode == PAM_MODE_DIRICHLET:
        return solvers.dirichlet0()
    if bc_mode == PAM_MODE_ROBIN:
        return solvers.robin(solvers.pam_robin_coefficient(eps, a_rho))
    return solvers.neumann0()


def _pam_bulk_constants(ladder, source):
    if source == "ledger":
        consts = {"ell_pam_2a": tuple(renorm.ell_pam_2a(e) for e in ladder),
                  "c_eps": tuple(renorm.graph_log_constant(
                      "PAM-4a", e, assembled=True) for e in ladder)}
    elif source == "zero":
        consts = {"c_eps": tuple(0.0 for _ in ladder)}
    else:
        raise ConfigError(f"unknown c_eps source {source!r}")
    ledger = renorm.RenormLedger(eps_ladder=ladder, constants=consts,
                                 settings={"source": source,
                                           "role": "bulk"})
    ledger.validate()
    return ledger


def run_pam_convergence(bc_mode, eps_ladder=PAM_EPS_LADDER, seed=2101, *,
                        n_seeds=4, grid_n=64, dt=5e-4, t_final=0.1,
                        a_rho=1.0, c_eps_source="ledger", fine_limit=4,
                        profile=STANDARD_BUMP, check_seed=None, threads=1):
    """Pairings of the multiplicative-equation ladder at fixed probes,
    plus the successive-difference series d_k between coupled rungs.

    Rungs share one master noise realization per ensemble member
    (consecutive seeds starting at `seed`); a second call with the same
    seeds and grid reproduces the identical potentials, so arms run in
    separate calls stay coupled pathwise.  Single-seed d_k fluctuate at
    the weakest probes, so trends are judged on the seed mean
    (mean_series_by_probe).  check_seed, when given, reruns the coarsest
    rung with an independent master for the cross-seed check.
    """
    if bc_mode not in _PAM_MODES:
        raise ConfigError(f"unknown bc mode {bc_mode!r}; expected one of "
                          f"{_PAM_MODES}")
    ladder = _check_ladder(eps_ladder)
    if int(n_seeds) != n_seeds or n_seeds < 1:
        raise ConfigError("n_seeds must be a positive integer")
    run_seeds = tuple(int(seed) + k for k in range(int(n_seeds)))
    if check_seed is not None and int(check_seed) in run_seeds:
        raise ConfigError("check_seed must lie outside the ensemble seeds")
    grid = Grid(grid_n)
    ledger = _pam_bulk_constants(ladder, c_eps_source)
    c_eps = dict(zip(ladder, ledger.constants["c_eps"]))
    snaps = _snapshot_times(t_final, dt)
    u0 = np.ones((grid_n,) * 3)

    def solve(eps, pot, run_seed):
        return solvers.solve_pam(grid, eps, _pam_bc(bc_mode, eps, a_rho),
                                 c_eps[eps], u0, t_final, dt, run_seed,
                                 snapshot_times=snaps, potential=pot)

    jobs = []
    for run_seed in run_seeds:
        pots = pam_master_potentials(grid, ladder, run_seed, fine_limit,
                                     profile)
        jobs.extend(((eps, run_seed),
                     (lambda e=eps, p=pots, s=run_seed: solve(e, p[e], s)))
                    for eps in ladder)
    if check_seed is not None:
        check_pots = pam_master_potentials(grid, ladder, check_seed,
                                           fine_limit, profile)
        jobs.append(((ladder[0], int(check_seed)),
                     lambda: solve(ladder[0], check_pots[ladder[0]],
                                   int(check_seed))))
    trajs = _run_jobs(jobs, threads)
    t_star = int(round(t_final / dt)) * dt

    rows = []
    statuses = {}
    for (eps, run_seed), traj in trajs.items():
        statuses[_status_key(bc_mode, eps, run_seed)] = traj.status
        rows.extend(_pairing_rows("probe_pairing", bc_mode, eps, run_seed,
                                  traj, grid))
    diff_rows = []
    for run_seed in run_seeds:
        per_seed = [r for r in rows if r["seed"] == run_seed]
        for coarse, fine in zip(ladder, ladder[1:]):
            p_c = _final_pairings(per_seed, bc_mode, coarse, t_star)
            p_f = _final_pairings(per_seed, bc_mode, fine, t_star)
            for pid in p_c:
                if pid in p_f:
                    diff_rows.append(
                        {"series": "successive_difference", "arm": bc_mode,
                         "eps": coarse, "seed": run_seed, "probe": pid,
                         "time": t_star,
                         "value": abs(p_c[pid] - p_f[pid])})
    rows.extend(diff_rows)
    seeds = run_seeds if check_seed is None else run_seeds + (
        int(check_seed),)
    config = {"experiment": "pam_convergence", "equation": EQ_PAM,
              "bc_mode": bc_mode, "grid_n": grid_n, "dt": dt,
              "t_final": t_final, "snapshot_times": snaps, "a_rho": a_rho,
              "c_eps_source": c_eps_source, "fine_limit": fine_limit,
              "profile": profile, "u0": "ones", "eps_ladder": ladder,
              "seed": seed,
              "n_seeds": int(n_seeds), "check_seed": check_seed,
              "probes": PROBE_SPECS,
              "ledger_constants": {k: tuple(v) for k, v in
                                   ledger.constants.items()}}
    return ExperimentRecord(
        experiment_id=f"pam-convergence-{bc_mode}", config=config,
        seeds=seeds, eps_ladder=ladder, observables=tuple(rows), fits={},
        statuses=statuses, timestamps={"run_date": None})


# --- cubic-equation boundary triviality ----------------------------------


def _phi4_bulk_constants(ladder, source):
    if source == "ledger":
        consts = {"c_eps": tuple(renorm.graph_log_constant(
            "Phi-4", e, assembled=True) for e in ladder)}
    elif source == "zero":
        consts = {"c_eps": tuple(0.0 for _ in ladder)}
    else:
        raise ConfigError(f"unknown c_eps source {source!r}")
    ledger = renorm.RenormLedger(eps_ladder=ladder, constants=consts,
                                 settings={"source": source,
                                           "role": "bulk"})
    ledger.validate()
    return ledger


def _phi4_bc(arm, eps, a_rho, b):
    if arm == PHI4_ARM_DIRICHLET:
        return solvers.dirichlet0()
    if arm == PHI4_ARM_TRIVIAL:
        return solvers.robin(solvers.phi4_robin_coefficient(a_rho, 0.0))
    b_eps = solvers.phi4_b_schedule(eps, b)
    return solvers.robin(solvers.phi4_robin_coefficient(a_rho, b_eps))


def run_phi4_triviality(eps_ladder=PHI4_EPS_LADDER, seed=2102,
                        b_eps_schedule=-1.0, *, n_seeds=3, grid_n=32,
                        steps=400, t_final=0.5, a_rho=0.0,
                        c_eps_source="ledger", fine_limit=4,
                        profile=STANDARD_BUMP, threads=1):
    """Gap series between the cubic equation's boundary arms.

    Three arms per rung -- Dirichlet, the b_eps = 0 arm, and a control
    arm with the renormalised schedule for target b -- all driven by the
    identical increments, so per-rung gaps are exact pathwise
    comparisons.  b = inf makes the control schedule vanish and the
    control arm reproduce the b_eps = 0 arm bit-for-bit.  The study
    repeats over `n_seeds` consecutive seeds; per-seed gaps stay in the
    record and trends are judged on the seed means.
    """
    ladder = _check_ladder(eps_ladder)
    b = float(b_eps_schedule)
    if int(steps) != steps or steps < 1:
        raise ConfigError("steps must be a positive integer")
    steps = int(steps)
    if int(n_seeds) != n_seeds or n_seeds < 1:
        raise ConfigError("n_seeds must be a positive integer")
    run_seeds = tuple(int(seed) + k for k in range(int(n_seeds)))
    dt = t_final / steps
    grid = Grid(grid_n)
    ledger = _phi4_bulk_constants(ladder, c_eps_source)
    c_eps = dict(zip(ladder, ledger.constants["c_eps"]))
    snaps = _snapshot_times(t_final, dt)
    u0 = np.zeros((grid_n,) * 3)
    arms = (PHI4_ARM_DIRICHLET, PHI4_ARM_TRIVIAL, PHI4_ARM_CONTROL)

    rows = []
    statuses = {}
    for run_seed in run_seeds:
        incs = phi4_master_increments(grid, ladder, steps, dt, run_seed,
                                      fine_limit, profile)
        for eps in ladder:
            xi = incs.pop(eps)

            def solve(arm, e=eps, xi=xi, s=run_seed):
                return solvers.solve_phi4(grid, e,
                                          _phi4_bc(arm, e, a_rho, b),
                                          c_eps[e], u0, t_final, dt, s,
                                          snapshot_times=snaps,
                                          increments=xi)

            trajs = _run_jobs([(arm, (lambda a=arm: solve(a)))
                               for arm in arms], threads)
            for arm, traj in trajs.items():
                statuses[_status_key(arm, eps, run_seed)] = traj.status
                rows.extend(_pairing_rows("probe_pairing", arm, eps,
                                          run_seed, traj, grid))
            # one gap row per late-window snapshot; trend judges average
            # them, which tames the single-time scatter of the pairings
            for t_snap in snaps:
                p_dir = _final_pairings(rows, PHI4_ARM_DIRICHLET, eps,
                                        t_snap, run_seed)
                for arm in (PHI4_ARM_TRIVIAL, PHI4_ARM_CONTROL):
                    p_arm = _final_pairings(rows, arm, eps, t_snap,
                                            run_seed)
                    for pid in p_arm:
                        if pid in p_dir:
                            rows.append({"series": "dirichlet_gap",
                                         "arm": arm, "eps": eps,
                                         "seed": run_seed, "probe": pid,
                                         "time": t_snap,
                                         "value": abs(p_arm[pid]
                                                      - p_dir[pid])})
    config = {"experiment": "phi4_triviality", "equation": EQ_PHI4,
              "grid_n": grid_n, "steps": steps, "dt": dt,
              "t_final": t_final, "snapshot_times": snaps, "a_rho": a_rho,
              "b": b, "c_eps_source": c_eps_source,
              "fine_limit": fine_limit, "profile": profile, "u0": "zeros",
              "eps_ladder": ladder, "seed": seed,
              "n_seeds": int(n_seeds), "arms": arms,
              "probes": PROBE_SPECS,
              "ledger_constants": {k: tuple(v) for k, v in
                                   ledger.constants.items()}}
    return ExperimentRecord(
        experiment_id="phi4-triviality", config=config, seeds=run_seeds,
        eps_ladder=ladder, observables=tuple(rows), fits={},
        statuses=statuses, timestamps={"run_date": None})


# --- plane-trace continuity of the stationary field ----------------------


def run_trace_continuity(eps_ladder=TRACE_EPS_LADDER, a=2.0, r_grid=None, *,
                         grid_n=48, seeds=(501, 502, 503, 504),
                         holder_exponent=0.125, threads=1):
    """Pairings of plane restrictions of the stationary field at heights
    r from the x3 = -1 face, with Holder-quotient diagnostics in r.

    `a` is the absorbing Robin magnitude (scalar or one value per rung;
    inf samples the Dirichlet field).  A finite `a` also runs a Dirichlet
    arm for the boundary-plane comparison.  Rungs share the modal
    Gaussians at fixed seed, so eps-halving differences of the
    diagnostic are coupled.
    """
    ladder = _check_ladder(eps_ladder)
    kappa = float(holder_exponent)
    if not 0.0 < kappa < 1.0:
        raise ConfigError("holder exponent must lie in (0, 1)")
    a_vals = (tuple(float(x) for x in a)
              if np.ndim(a) else (float(a),) * len(ladder))
    if len(a_vals) != len(ladder):
        raise ConfigError("per-rung a values must align with the ladder")
    if any(x < 0.0 for x in a_vals):
        raise ConfigError("a must be nonnegative")
    seeds = tuple(int(s) for s in seeds)
    if not seeds:
        raise ConfigError("trace study needs at least one seed")
    grid = Grid(grid_n)
    h = grid.h
    if r_grid is None:
        planes = tuple(range(min(16, grid_n)))
    else:
        planes = []
        for r in r_grid:
            j = int(round(float(r) / h - 0.5))
            if not 0 <= j < grid_n:
                raise ConfigError(f"height r={r:g} falls outside the cube")
            planes.append(j)
        planes = tuple(sorted(set(planes)))
        if len(planes) < 2:
            raise ConfigError("r grid must cover at least two planes")
    heights = tuple((j + 0.5) * h for j in planes)
    probes = plane_probes(grid)
    arm_specs = [("robin", a_vals)]
    if all(math.isinf(x) for x in a_vals):
        arm_specs = [("dirichlet", a_vals)]
    else:
        arm_specs.append(("dirichlet", (math.inf,) * len(ladder)))
    scale_pow = min(s for _, _, s in PLANE_PROBE_SPECS) ** (
        -0.5 - 6.0 * kappa)

    def study(arm, eps, a_val, s):
        psi = solvers.sample_stationary_psi(
            grid, eps, a_val, s, exclude_zero_mode=(a_val == 0.0))
        out = []
        quot = {}
        for pid, w in probes.items():
            vals = [float((psi[:, :, j] * w).sum()) for j in planes]
            for r, v in zip(heights, vals):
                out.append({"series": "plane_pairing", "arm": arm,
                            "eps": eps, "seed": s, "probe": pid, "time": r,
                            "value": v})
            best = 0.0
            for (r0, v0), (r1, v1) in zip(zip(heights, vals),
                                          zip(heights[1:], vals[1:])):
                best = max(best, abs(v1 - v0)
                           / ((r1 - r0) ** kappa * scale_pow))
            quot[pid] = best
            out.append({"series": "holder_quotient", "arm": arm,
                        "eps": eps, "seed": s, "probe": pid, "time": None,
                        "value": best})
        return out, quot

    jobs = []
    for arm, vals in arm_specs:
        for eps, a_val in zip(ladder, vals):
            for s in seeds:
                jobs.append(((arm, eps, s),
                             (lambda ar=arm, e=eps, av=a_val, sd=s:
                              study(ar, e, av, sd))))
    results = _run_jobs(jobs, threads)

    rows = []
    statuses = {}
    quots = {}
    for (arm, eps, s), (out, quot) in results.items():
        rows.extend(out)
        statuses[_status_key(arm, eps, s)] = solvers.STATUS_OK
        quots[arm, eps, s] = quot
    for arm, _ in arm_specs:
        for coarse, fine in zip(ladder, ladder[1:]):
            for s in seeds:
                qc, qf = quots[arm, coarse, s], quots[arm, fine, s]
                for pid in qc:
                    rows.append({"series": "diag_difference", "arm": arm,
                                 "eps": coarse, "seed": s, "probe": pid,
                                 "time": None,
                                 "value": abs(qc[pid] - qf[pid])})
    config = {"experiment": "trace_continuity", "grid_n": grid_n,
              "a": a_vals, "eps_ladder": ladder, "seeds": seeds,
              "holder_exponent": kappa, "planes": planes,
              "heights": heights, "arms": tuple(arm for arm, _ in arm_specs),
              "plane_probes": PLANE_PROBE_SPECS}
    return ExperimentRecord(
        experiment_id="trace-continuity", config=config, seeds=seeds,
        eps_ladder=ladder, observables=tuple(rows), fits={},
        statuses=statuses, timestamps={"run_date": None})
