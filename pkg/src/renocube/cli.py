"""Command-line front end: quadrature cross-checks, kernel diagnostics,
constants tables, and the desk studies behind one schema-checked config.

Every run resolves defaults + config file + flags into a single key-value
document, writes it next to the outputs, and stamps each output with the
sha256 of that document plus the seed, so any file traces back to its
exact configuration.  Reruns are byte-identical; --threads never changes
output bytes.
"""

import argparse
import configparser
import hashlib
import io
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import experiments as ex
from . import kernels, renorm, solvers
from .errors import ConfigError, DomainError, ToleranceError
from .geometry import Grid
from .noise import COSINE_BUMP, STANDARD_BUMP

EXIT_OK = 0
EXIT_TOLERANCE = 2
EXIT_BLOWUP = 3
EXIT_CONFIG = 4
EXIT_USAGE = 64

_BC_CHOICES = ("dirichlet", "robin", "neumann")
_PROFILE_CHOICES = (STANDARD_BUMP, COSINE_BUMP)

# defaults double as the schema: section and key names are closed, and
# each value's type decides how file/flag text is parsed
_DEFAULTS = {
    "run": {"seed": 2101, "profile": STANDARD_BUMP},
    "pam": {"grid_n": 64, "dt": 5e-4, "t_final": 0.1, "n_seeds": 4,
            "a_rho": 1.0, "c_eps_source": "ledger", "fine_limit": 4,
            "bc": "robin", "eps_ladder": ex.PAM_EPS_LADDER},
    "phi4": {"grid_n": 32, "steps": 400, "t_final": 0.5, "n_seeds": 3,
             "a_rho": 0.0, "b": -1.0, "c_eps_source": "ledger",
             "fine_limit": 4, "bc": "robin",
             "eps_ladder": ex.PHI4_EPS_LADDER},
    "trace": {"grid_n": 48, "a": 2.0, "holder_exponent": 0.125,
              "seeds": (501, 502, 503, 504),
              "eps_ladder": ex.TRACE_EPS_LADDER},
    "profile": {"equation": "both", "a_rho": 0.0, "c_tilde": 0.0,
                "y1_grid": ex.PROFILE_Y1_GRID,
                "eps_ladder": ex.PROFILE_EPS_LADDER},
    "constants": {"b": -1.0, "big_k": 0.25,
                  "eps_ladder": (0.25, 0.125, 0.0625, 0.03125)},
}

# which config section an --eps-ladder / --bc / --b flag lands in, and
# which flags each command accepts at all
_COMMAND_FLAGS = {
    "validate-closed-forms": {},
    "kernel-check": {},
    "renorm-profile": {"eps_ladder": "profile", "equation": "profile"},
    "constants": {"eps_ladder": "constants", "b": "constants"},
    "solve-pam": {"eps_ladder": "pam", "bc": "pam", "profile": "run"},
    "solve-phi4": {"eps_ladder": "phi4", "bc": "phi4", "b": "phi4",
                   "profile": "run"},
    "triviality": {"eps_ladder": "phi4", "b": "phi4", "profile": "run"},
    "trace": {"eps_ladder": "trace"},
    "norms": {"eps_ladder": "trace"},
}

_USAGE = """\
usage: renocube COMMAND [--config PATH] [--out DIR] [--seed U64]
                [--threads N] [--eps-ladder SPEC] [--bc {dirichlet,robin,
                neumann}] [--b VALUE|inf] [--profile {standard-bump,
                cosine-bump}] [--equation {pam,phi4,both}]

commands:
  validate-closed-forms  quadrature vs closed-form table; exit 2 on miss
  kernel-check           boundary-kernel residual battery; exit 2 on miss
  renorm-profile         boundary-mass profile studies (both equations)
  constants              bulk log-constants and the c_eps ladder
  solve-pam              coupled eps-ladder study of the multiplicative
                         equation (--bc picks the arm)
  solve-phi4             per-rung cubic-equation solves with one boundary
                         arm; writes trajectory tables
  triviality             three-arm cubic-equation gap study
  trace                  plane-trace continuity of the stationary field
  norms                  stationary-field probe pairings per rung

--eps-ladder takes either a comma list (0.25,0.125) or a dyadic range
(2^-2..2^-5).  --seed rebases study seed ensembles.  Exit codes: 0 ok,
2 tolerance failure, 3 blow-up, 4 config error, 64 unknown command.
"""


# --- config document ------------------------------------------------------


def parse_eps_ladder(spec):
    """Comma list of floats, or a dyadic range like 2^-2..2^-5."""
    text = spec.strip()
    if ".." in text:
        lo, _, hi = text.partition("..")
        try:
            first, last = _dyadic(lo), _dyadic(hi)
        except ValueError as err:
            raise ConfigError(f"bad eps ladder {spec!r}: {err}") from err
        if first <= last:
            raise ConfigError("dyadic eps range must go coarse..fine")
        out = []
        e = first
        while e >= last * (1.0 - 1e-12):
            out.append(e)
            e /= 2.0
        return tuple(out)
    try:
        out = tuple(float(tok) for tok in text.split(","))
    except ValueError as err:
        raise ConfigError(f"bad eps ladder {spec!r}: {err}") from err
    if not out:
        raise ConfigError("empty eps ladder")
    return out


def _dyadic(tok):
    tok = tok.strip()
    if tok.startswith("2^"):
        return 2.0 ** int(tok[2:])
    return float(tok)


def _cast(section, key, default, text):
    """Parse a config-file token with the default's type."""
    text = text.strip()
    try:
        if isinstance(default, bool):
            if text.lower() in ("true", "false"):
                return text.lower() == "true"
            raise ValueError(f"expected true/false, got {text!r}")
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            return float(text)
        if isinstance(default, tuple):
            elem = default[0]
            toks = [t for t in text.split(",") if t.strip()]
            if isinstance(elem, int) and not isinstance(elem, bool):
                return tuple(int(t) for t in toks)
            return tuple(float(t) for t in toks)
        return text
    except ValueError as err:
        raise ConfigError(
            f"config value {section}.{key} = {text!r}: {err}") from err


def load_config(path):
    """Schema-checked config document; unknown sections or keys reject."""
    cfg = {sect: dict(vals) for sect, vals in _DEFAULTS.items()}
    if path is None:
        return cfg
    parser = configparser.ConfigParser(interpolation=None)
    try:
        with open(path, encoding="utf-8") as fh:
            parser.read_file(fh)
    except OSError as err:
        raise ConfigError(f"cannot read config {path}: {err}") from err
    except configparser.Error as err:
        raise ConfigError(f"malformed config {path}: {err}") from err
    for sect in parser.sections():
        if sect not in cfg:
            raise ConfigError(f"unknown config section [{sect}]")
        for key, text in parser.items(sect):
            if key not in cfg[sect]:
                raise ConfigError(f"unknown config key {sect}.{key}")
            cfg[sect][key] = _cast(sect, key, _DEFAULTS[sect][key], text)
    return cfg


def _fmt_value(value):
    if isinstance(value, tuple):
        return ", ".join(_fmt_value(v) for v in value)
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value) if math.isfinite(value) else (
            "inf" if value > 0 else "-inf")
    return str(value)


def render_config(cfg):
    """The resolved document: every section and key, flags applied."""
    buf = io.StringIO()
    for sect, vals in cfg.items():
        buf.write(f"[{sect}]\n")
        for key, value in vals.items():
            buf.write(f"{key} = {_fmt_value(value)}\n")
        buf.write("\n")
    return buf.getvalue()


def config_hash(cfg):
    return hashlib.sha256(render_config(cfg).encode()).hexdigest()[:12]


# --- output plumbing ------------------------------------------------------


class _Run:
    """Resolved run context: config, output root, provenance stamp."""

    def __init__(self, cfg, out_dir, threads):
        self.cfg = cfg
        self.out = Path(out_dir)
        self.threads = threads
        self.hash = config_hash(cfg)
        self.seed = cfg["run"]["seed"]

    def path(self, *parts):
        p = self.out.joinpath(*parts)
        p.parent.mkdir(parents=True, exist_ok=True)
        return p

    def stamp_line(self):
        return f"# config={self.hash} seed={self.seed}\n"

    def write_csv(self, relpath, header, rows):
        path = self.path(*relpath.split("/"))
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(self.stamp_line())
            fh.write(",".join(header) + "\n")
            for row in rows:
                fh.write(",".join(_csv_cell(v) for v in row) + "\n")
        print(f"wrote {path}")
        return path

    def write_json(self, relpath, payload):
        path = self.path(*relpath.split("/"))
        payload = dict(payload)
        payload["provenance"] = {"config": self.hash, "seed": self.seed}
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(json.dumps(payload, sort_keys=True, indent=2) + "\n")
        print(f"wrote {path}")
        return path

    def write_record(self, stem, record):
        self.write_json(f"experiments/{stem}.json",
                        ex.record_to_jsonable(record))
        csv_path = self.path("experiments", f"{stem}.csv")
        ex.write_record_csv(csv_path, record)
        body = csv_path.read_text(encoding="utf-8")
        csv_path.write_text(self.stamp_line() + body, encoding="utf-8")
        print(f"wrote {csv_path}")


def _csv_cell(value):
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(float(value))  # numpy scalars repr differently
    return str(value)


def _status_exit(statuses):
    if any(s == solvers.STATUS_BLOWUP for s in statuses.values()):
        print("blow-up recorded; see statuses in the record",
              file=sys.stderr)
        return EXIT_BLOWUP
    return EXIT_OK


def _check_rows(run, relpath, rows):
    """Write a pass/fail table; exit 2 when any row fails."""
    header = ("check", "value", "reference", "tolerance", "status")
    run.write_csv(relpath, header, rows)
    failed = [r[0] for r in rows if r[4] == "fail"]
    for name in failed:
        print(f"tolerance failure: {name}", file=sys.stderr)
    return EXIT_TOLERANCE if failed else EXIT_OK


def _row(name, value, reference, tol, relative):
    gap = abs(value - reference)
    bound = tol * abs(reference) if relative else tol
    status = "pass" if gap <= bound else "fail"
    kind = "rel" if relative else "abs"
    return (name, value, reference, f"{kind}={tol:g}", status)


# --- commands -------------------------------------------------------------


def cmd_validate_closed_forms(run):
    a_grid = np.geomspace(1e-3, 1e3, 25)
    run.write_csv("cJ.csv", ("a", "value", "envelope"),
                  [(float(a), float(renorm.J0_of_a(float(a))),
                    float(a * abs(math.log(a)))) for a in a_grid])
    rows = []
    for a, b in ((1.0, -1.0), (1.0, 1.0), (3.0, 1.0)):
        rows.append(_row(f"scrJ({a:g},{b:g}) quadrature vs closed",
                         renorm.scrJ_quadrature(a, b),
                         renorm.scrJ_closed(a, b), 5e-3, True))
    rows.append(_row("pi * erfc-identity lhs(1)",
                     math.pi * renorm.erfc_identity_lhs(1.0),
                     math.pi / 2.0, 1e-5, False))
    for a in (0.5, 1.0, 2.0):
        rows.append(_row(f"erfc-identity lhs({a:g}) vs 2*atan(a)/(pi a)",
                         renorm.erfc_identity_lhs(a),
                         2.0 * math.atan(a) / (math.pi * a), 1e-5, False))
    rows.append(_row("I0_phi(1) vs 1/(32 pi)", renorm.I0_phi(1.0),
                     1.0 / (32.0 * math.pi), 1e-2, True))
    rows.append(_row("J0(1e3) vs -1/(16 pi)", renorm.J0_of_a(1e3),
                     -1.0 / (16.0 * math.pi), 2e-2, True))
    return _check_rows(run, "checks/closed_forms.csv", rows)


def cmd_kernel_check(run):
    rows = []
    hs_probes = [((0.1, 0.1, 0.0, 0.0), (0.0, 0.1, 0.0, 0.2)),
                 ((0.2, 0.0, 0.3, 0.0), (0.0, 0.0, 0.0, 0.5))]
    for a in (0.5, 2.0):
        rows.append(_row(
            f"half-space robin residual a={a:g}",
            kernels.halfspace_boundary_residual_analytic(a, hs_probes),
            0.0, 1e-6, False))
    y = (0.0, 0.1, -0.2)
    bd_probes = [(0.06, (1.0, 0.2, 0.1), 0.0, y),
                 (0.06, (0.3, -1.0, 0.0), 0.0, y)]
    res = {m: kernels.kernel_residual(
        kernels.CubeRobinHeat(a=math.inf, image_order=m).eval,
        bd_probes, mode="boundary", a=math.inf) for m in (1, 3)}
    rows.append(_row("cube dirichlet residual ratio depth 3 / depth 1",
                     res[3] / res[1], 0.0, 0.2, False))
    mass = kernels.CubeRobinHeat(a=0.0, image_order=3).mass(
        0.05, (0.2, 0.1, -0.3), 0.0)
    rows.append(_row("cube neumann mass at dt=0.05", mass, 1.0, 1e-3,
                     False))
    gap_probes = [(0.1, (0.3, -0.2, 0.1), 0.0, (0.0, 0.4, -0.3)),
                  (0.15, (0.5, 0.1, 0.0), 0.0, (-0.2, -0.1, 0.2))]
    gaps = {a: kernels.robin_to_dirichlet_gap(a, gap_probes)
            for a in (8, 16, 32, 64)}
    for a in (8, 16, 32):
        rows.append(_row(f"robin->dirichlet gap ratio a={2 * a}/{a}",
                         gaps[2 * a] / gaps[a], 0.5, 0.15, False))
    return _check_rows(run, "checks/kernels.csv", rows)


def cmd_renorm_profile(run):
    sect = run.cfg["profile"]
    wanted = ((ex.EQ_PAM, ex.EQ_PHI4) if sect["equation"] == "both"
              else (sect["equation"],))
    for equation in wanted:
        rec = ex.run_profile_slopes(
            equation, sect["eps_ladder"], sect["y1_grid"],
            a_rho=sect["a_rho"], c_tilde=sect["c_tilde"], seed=run.seed)
        run.write_record(rec.experiment_id, rec)
    return EXIT_OK


def cmd_constants(run):
    sect = run.cfg["constants"]
    ladder = sect["eps_ladder"]
    b = sect["b"]
    b_eps = tuple(solvers.phi4_b_schedule(e, b) for e in ladder)
    c_eps = renorm.c_epsilon(ladder, b_eps, b, big_k=sect["big_k"])
    table = {
        "eps": list(ladder),
        "ell_pam_2a": [renorm.ell_pam_2a(e) for e in ladder],
        "ell_phi_2": [renorm.ell_phi_2(e) for e in ladder],
        "pam_bulk": [renorm.graph_log_constant("PAM-4a", e,
                                               assembled=True)
                     for e in ladder],
        "phi4_bulk": [renorm.graph_log_constant("Phi-4", e,
                                                assembled=True)
                      for e in ladder],
        "b_eps": list(b_eps),
        "c_eps": [float(c) for c in c_eps],
    }
    run.write_json("constants.json", dict(table, b=b))
    header = ("eps", "ell_pam_2a", "ell_phi_2", "pam_bulk", "phi4_bulk",
              "b_eps", "c_eps")
    rows = list(zip(*(table[k] for k in header)))
    run.write_csv("constants.csv", header, rows)
    return EXIT_OK


_PAM_BC_MAP = {"dirichlet": ex.PAM_MODE_DIRICHLET,
               "robin": ex.PAM_MODE_ROBIN,
               "neumann": ex.PAM_MODE_NEUMANN}


def cmd_solve_pam(run):
    sect = run.cfg["pam"]
    rec = ex.run_pam_convergence(
        _PAM_BC_MAP[sect["bc"]], sect["eps_ladder"], run.seed,
        n_seeds=sect["n_seeds"], grid_n=sect["grid_n"], dt=sect["dt"],
        t_final=sect["t_final"], a_rho=sect["a_rho"],
        c_eps_source=sect["c_eps_source"], fine_limit=sect["fine_limit"],
        profile=run.cfg["run"]["profile"], threads=run.threads)
    run.write_record(rec.experiment_id, rec)
    return _status_exit(rec.statuses)


def _phi4_arm_bc(bc, eps, a_rho, b):
    if bc == "dirichlet":
        return solvers.dirichlet0()
    if bc == "neumann":
        return solvers.robin(solvers.phi4_robin_coefficient(a_rho, 0.0))
    return solvers.robin(solvers.phi4_robin_coefficient(
        a_rho, solvers.phi4_b_schedule(eps, b)))


def cmd_solve_phi4(run):
    sect = run.cfg["phi4"]
    ladder = ex._check_ladder(sect["eps_ladder"])
    steps = sect["steps"]
    dt = sect["t_final"] / steps
    grid = Grid(sect["grid_n"])
    incs = ex.phi4_master_increments(grid, ladder, steps, dt, run.seed,
                                    sect["fine_limit"],
                                    run.cfg["run"]["profile"])
    every = max(1, steps // 10)
    snaps = tuple(k * dt for k in range(every, steps + 1, every))
    probes = [tf for _, tf in ex.probe_set()]
    u0 = np.zeros((sect["grid_n"],) * 3)
    statuses = {}
    files = []
    for eps in ladder:
        bc = _phi4_arm_bc(sect["bc"], eps, sect["a_rho"], sect["b"])
        c_eps = (renorm.graph_log_constant("Phi-4", eps, assembled=True)
                 if sect["c_eps_source"] == "ledger" else 0.0)
        traj = solvers.solve_phi4(grid, eps, bc, c_eps, u0,
                                  sect["t_final"], dt, run.seed,
                                  snapshot_times=snaps,
                                  increments=incs.pop(eps))
        statuses[f"eps={eps:g}"] = traj.status
        path = run.path("trajectories", f"phi4-{sect['bc']}-eps{eps:g}.csv")
        solvers.write_trajectory_csv(path, traj, probes)
        body = path.read_text(encoding="utf-8")
        path.write_text(run.stamp_line() + body, encoding="utf-8")
        print(f"wrote {path}")
        files.append(str(path.relative_to(run.out)))
    run.write_json("experiments/solve-phi4.json",
                   {"bc": sect["bc"], "b": sect["b"],
                    "eps_ladder": list(ladder), "steps": steps,
                    "dt": dt, "statuses": statuses, "files": files})
    return _status_exit(statuses)


def cmd_triviality(run):
    sect = run.cfg["phi4"]
    rec = ex.run_phi4_triviality(
        sect["eps_ladder"], run.seed, sect["b"], n_seeds=sect["n_seeds"],
        grid_n=sect["grid_n"], steps=sect["steps"],
        t_final=sect["t_final"], a_rho=sect["a_rho"],
        c_eps_source=sect["c_eps_source"], fine_limit=sect["fine_limit"],
        profile=run.cfg["run"]["profile"], threads=run.threads)
    run.write_record(rec.experiment_id, rec)
    return _status_exit(rec.statuses)


def cmd_trace(run, seed_flagged):
    sect = run.cfg["trace"]
    seeds = (tuple(run.seed + k for k in range(4)) if seed_flagged
             else sect["seeds"])
    rec = ex.run_trace_continuity(
        sect["eps_ladder"], sect["a"], grid_n=sect["grid_n"], seeds=seeds,
        holder_exponent=sect["holder_exponent"], threads=run.threads)
    run.write_record(rec.experiment_id, rec)
    return _status_exit(rec.statuses)


def cmd_norms(run):
    sect = run.cfg["trace"]
    grid = Grid(sect["grid_n"])
    a = sect["a"]
    rows = []
    for eps in sect["eps_ladder"]:
        psi = solvers.sample_stationary_psi(grid, eps, a, run.seed,
                                            exclude_zero_mode=(a == 0.0))
        for pid, value in ex.probe_pairings(grid, psi).items():
            rows.append((eps, pid, value))
    run.write_csv("norms/psi_pairings.csv", ("eps", "probe", "value"),
                  rows)
    return EXIT_OK


# --- dispatch -------------------------------------------------------------


def _build_flag_parser():
    p = argparse.ArgumentParser(prog="renocube", add_help=False)
    p.add_argument("--config", default=None)
    p.add_argument("--out", default="out")
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--eps-ladder", dest="eps_ladder", default=None)
    p.add_argument("--bc", choices=_BC_CHOICES, default=None)
    p.add_argument("--b", default=None)
    p.add_argument("--profile", choices=_PROFILE_CHOICES, default=None)
    p.add_argument("--equation", choices=("pam", "phi4", "both"),
                   default=None)
    return p


def _parse_flags(argv):
    try:
        ns, extra = _build_flag_parser().parse_known_args(argv)
    except SystemExit as err:  # argparse reports its own message
        raise ConfigError("bad flag value") from err
    if extra:
        raise ConfigError(f"unknown arguments: {' '.join(extra)}")
    if ns.seed is not None and not 0 <= ns.seed < 2 ** 64:
        raise ConfigError("--seed must fit in an unsigned 64-bit integer")
    if ns.threads < 1:
        raise ConfigError("--threads must be at least 1")
    return ns


def _apply_flags(cfg, ns, command):
    allowed = _COMMAND_FLAGS[command]
    if ns.seed is not None:
        cfg["run"]["seed"] = ns.seed
    for flag in ("eps_ladder", "bc", "b", "profile", "equation"):
        value = getattr(ns, flag)
        if value is None:
            continue
        if flag not in allowed:
            raise ConfigError(
                f"--{flag.replace('_', '-')} does not apply to {command}")
        sect = allowed[flag]
        if flag == "eps_ladder":
            cfg[sect]["eps_ladder"] = parse_eps_ladder(value)
        elif flag == "b":
            try:
                cfg[sect]["b"] = float(value)
            except ValueError as err:
                raise ConfigError(f"--b {value!r} is not a number "
                                  "(use 'inf' for the divergent choice)"
                                  ) from err
        elif flag == "profile":
            cfg["run"]["profile"] = value
        else:
            cfg[sect][flag] = value
    if cfg["run"]["profile"] not in _PROFILE_CHOICES:
        raise ConfigError(f"unknown profile {cfg['run']['profile']!r}")
    if cfg["profile"]["equation"] not in ("pam", "phi4", "both"):
        raise ConfigError(
            f"unknown equation {cfg['profile']['equation']!r}")
    if cfg["pam"]["bc"] not in _BC_CHOICES or cfg["phi4"]["bc"] not in \
            _BC_CHOICES:
        raise ConfigError("bc must be dirichlet, robin, or neumann")
    return cfg


def dispatch(argv):
    """Run one subcommand; returns the process exit code."""
    argv = list(argv)
    if not argv or argv[0] in ("-h", "--help"):
        print(_USAGE, end="")
        return EXIT_OK
    command = argv[0]
    if command not in _COMMAND_FLAGS:
        print(f"unknown command {command!r}\n", file=sys.stderr)
        print(_USAGE, end="", file=sys.stderr)
        return EXIT_USAGE
    try:
        ns = _parse_flags(argv[1:])
        cfg = _apply_flags(load_config(ns.config), ns, command)
        run = _Run(cfg, ns.out, ns.threads)
        doc = run.path("resolved-config.ini")
        doc.write_text(render_config(cfg), encoding="utf-8")
        print(f"wrote {doc}")
        print(f"config {run.hash} seed {run.seed}")
        if command == "validate-closed-forms":
            return cmd_validate_closed_forms(run)
        if command == "kernel-check":
            return cmd_kernel_check(run)
        if command == "renorm-profile":
            return cmd_renorm_profile(run)
        if command == "constants":
            return cmd_constants(run)
        if command == "solve-pam":
            return cmd_solve_pam(run)
        if command == "solve-phi4":
            return cmd_solve_phi4(run)
        if command == "triviality":
            return cmd_triviality(run)
        if command == "trace":
            return cmd_trace(run, seed_flagged=ns.seed is not None)
        return cmd_norms(run)
    except (ConfigError, DomainError) as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except ToleranceError as err:
        print(f"tolerance failure: {err}", file=sys.stderr)
        return EXIT_TOLERANCE


def main():
    raise SystemExit(dispatch(sys.argv[1:]))


if __name__ == "__main__":
    main()
