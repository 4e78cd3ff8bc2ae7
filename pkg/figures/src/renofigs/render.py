"""render(spec) — draw one figure kind deterministically to SVG.

Same CSV in, same bytes out: fonts and sizes are pinned, text stays text
(no glyph paths), the SVG hash salt is fixed, and the date stamp is
stripped.  Reference constants are drawn as overlays only — nothing is
recomputed from the data.
"""

import math
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402  (backend must be set first)

from .spec import SchemaError, read_rows  # noqa: E402

SLOPE_8PI = 1.0 / (8.0 * math.pi)
SLOPE_32PI = 1.0 / (32.0 * math.pi)
LEVEL_M16PI = -1.0 / (16.0 * math.pi)

GUIDE_VALUES = {"1/(8 pi)": SLOPE_8PI, "1/(32 pi)": SLOPE_32PI,
                "-1/(16 pi)": LEVEL_M16PI}

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e",
           "#8c564b", "#17becf", "#7f7f7f")

_RC = {
    "figure.figsize": (6.4, 4.4),
    "figure.dpi": 100,
    "font.family": "DejaVu Sans",
    "font.size": 10,
    "svg.fonttype": "none",
    "svg.hashsalt": "renofigs",
    "axes.grid": True,
    "grid.alpha": 0.3,
}


def render(spec):
    """Draw the figure described by spec; returns the output path."""
    with plt.rc_context(_RC):
        fig, ax = plt.subplots()
        try:
            draw = _DRAWERS[spec.kind]
            handles = draw(ax, spec)
            if spec.title:
                ax.set_title(spec.title)
            if spec.xlabel:
                ax.set_xlabel(spec.xlabel)
            if spec.ylabel:
                ax.set_ylabel(spec.ylabel)
            if spec.legend and handles:
                labels = [h.get_label() for h in handles]
                ax.legend(handles, labels, loc="best", fontsize=9)
            out = Path(spec.output)
            out.parent.mkdir(parents=True, exist_ok=True)
            fig.savefig(out, format="svg", metadata={"Date": None})
        finally:
            plt.close(fig)
    return out


# --- shared helpers -------------------------------------------------------


def _record_series(spec, series_name):
    """(label, probe) -> [(eps, mean value)] from all inputs, filtered."""
    out = {}
    for path in spec.inputs:
        label = Path(path).stem
        acc = {}
        for row in read_rows(path, spec.kind):
            if row["series"] != series_name:
                continue
            if spec.arms and row["arm"] not in spec.arms:
                continue
            if spec.probes and row["probe"] not in spec.probes:
                continue
            acc.setdefault(row["probe"], {}).setdefault(
                row["eps"], []).append(row["value"])
        for probe, by_eps in acc.items():
            out[(label, probe)] = [
                (eps, sum(by_eps[eps]) / len(by_eps[eps]))
                for eps in sorted(by_eps)]
    return out


def _slope_guide(ax, anchor, eps_span, slope, label):
    """Reference line of the given slope against log eps."""
    eps0, y0 = anchor
    xs = sorted(eps_span)
    ys = [y0 + slope * math.log(eps0 / e) for e in xs]
    (line,) = ax.plot(xs, ys, "--", color="black", linewidth=1.0,
                      label=f"slope {label}")
    return line


def _pick_guides(spec, default):
    if spec.guide == "auto":
        return default
    if spec.guide == "none":
        return ()
    return (spec.guide,)


# --- figure kinds ---------------------------------------------------------


def _draw_profile(ax, spec):
    series = _record_series(spec, "boundary_mass")
    if not series:
        raise SchemaError("no boundary_mass rows after filtering")
    handles = []
    for i, key in enumerate(sorted(series)):
        pairs = series[key]
        (line,) = ax.plot([p[0] for p in pairs], [p[1] for p in pairs],
                          "o-", color=PALETTE[i % len(PALETTE)],
                          label=f"{key[0]} {key[1]}")
        handles.append(line)
    ax.set_xscale("log")
    first = series[sorted(series)[0]]
    eps_span = [p[0] for p in first]
    for name in _pick_guides(spec, ("1/(8 pi)",)):
        handles.append(_slope_guide(ax, (first[-1][0], first[-1][1]),
                                    eps_span, GUIDE_VALUES[name], name))
    if not spec.xlabel:
        ax.set_xlabel("eps")
    if not spec.ylabel:
        ax.set_ylabel("boundary mass")
    return handles


def _draw_slope_fit(ax, spec):
    per_file = {}
    for path in spec.inputs:
        label = Path(path).stem
        acc = {}
        for row in read_rows(path, spec.kind):
            if row["series"] != "boundary_mass":
                continue
            if spec.probes and row["probe"] not in spec.probes:
                continue
            acc.setdefault(row["eps"], []).append(row["value"])
        if acc:
            per_file[label] = [(eps, sum(acc[eps]) / len(acc[eps]))
                               for eps in sorted(acc)]
    if not per_file:
        raise SchemaError("no boundary_mass rows after filtering")
    handles = []
    for i, label in enumerate(sorted(per_file)):
        pairs = per_file[label]
        (line,) = ax.plot([p[0] for p in pairs], [p[1] for p in pairs],
                          "o-", color=PALETTE[i % len(PALETTE)],
                          label=label)
        handles.append(line)
    ax.set_xscale("log")
    first = per_file[sorted(per_file)[0]]
    eps_span = [p[0] for p in first]
    for name in _pick_guides(spec, ("1/(8 pi)", "1/(32 pi)")):
        handles.append(_slope_guide(ax, (first[-1][0], first[-1][1]),
                                    eps_span, GUIDE_VALUES[name], name))
    if not spec.xlabel:
        ax.set_xlabel("eps")
    if not spec.ylabel:
        ax.set_ylabel("mean boundary mass")
    return handles


def _draw_triviality_gap(ax, spec):
    gaps = {}
    for path in spec.inputs:
        for row in read_rows(path, spec.kind):
            if row["series"] != "dirichlet_gap":
                continue
            if spec.arms and row["arm"] not in spec.arms:
                continue
            if spec.probes and row["probe"] not in spec.probes:
                continue
            gaps.setdefault(row["arm"], {}).setdefault(
                row["eps"], []).append(row["value"])
    if not gaps:
        raise SchemaError("no dirichlet_gap rows after filtering")
    handles = []
    # an arm named in the spec but absent from the data is simply omitted
    for i, arm in enumerate(sorted(gaps)):
        by_eps = gaps[arm]
        pairs = [(eps, sum(by_eps[eps]) / len(by_eps[eps]))
                 for eps in sorted(by_eps)]
        (line,) = ax.plot([p[0] for p in pairs], [p[1] for p in pairs],
                          "o-", color=PALETTE[i % len(PALETTE)], label=arm)
        handles.append(line)
    ax.set_xscale("log")
    ax.set_yscale("log")
    if not spec.xlabel:
        ax.set_xlabel("eps")
    if not spec.ylabel:
        ax.set_ylabel("gap to the dirichlet arm")
    return handles


def _draw_cj_curve(ax, spec):
    rows = []
    for path in spec.inputs:
        rows.extend(read_rows(path, spec.kind))
    rows.sort(key=lambda r: r["a"])
    xs = [r["a"] for r in rows]
    ys = [r["value"] for r in rows]
    (line,) = ax.plot(xs, ys, "o-", color=PALETTE[0], markersize=3,
                      label="value")
    handles = [line]
    ax.set_xscale("log")
    for name in _pick_guides(spec, ("-1/(16 pi)",)):
        ref = ax.axhline(GUIDE_VALUES[name], linestyle="--", color="black",
                         linewidth=1.0, label=name)
        handles.append(ref)
    ratio_pts = [(r["a"], abs(r["value"]) / r["envelope"]) for r in rows
                 if isinstance(r.get("envelope"), float)
                 and r["envelope"] > 0.0]
    if ratio_pts:  # optional column: layer omitted when absent or empty
        twin = ax.twinx()
        (dots,) = twin.plot([p[0] for p in ratio_pts],
                            [p[1] for p in ratio_pts], ":",
                            color=PALETTE[4],
                            label="|value| / (a |log a|)")
        twin.set_ylabel("|value| / (a |log a|)")
        twin.grid(False)
        handles.append(dots)
    if not spec.xlabel:
        ax.set_xlabel("a")
    if not spec.ylabel:
        ax.set_ylabel("value")
    return handles


def _parse_tolerance(text, reference):
    kind, _, num = text.partition("=")
    bound = float(num)
    return bound * abs(reference) if kind == "rel" else bound


def _draw_kernel_residual(ax, spec):
    rows = []
    for path in spec.inputs:
        rows.extend(read_rows(path, spec.kind))
    names = [r["check"] for r in rows]
    gaps = [max(abs(r["value"] - r["reference"]), 1e-17) for r in rows]
    tols = [_parse_tolerance(r["tolerance"], r["reference"]) for r in rows]
    colors = ["#2a7a2a" if r["status"] == "pass" else "#aa2222"
              for r in rows]
    ypos = list(range(len(rows) - 1, -1, -1))  # first row on top
    bars = ax.barh(ypos, gaps, color=colors, height=0.6)
    marks = ax.scatter(tols, ypos, marker="|", s=200, color="black",
                       label="tolerance", zorder=3)
    ax.set_yticks(ypos, names, fontsize=8)
    ax.set_xscale("log")
    if not spec.xlabel:
        ax.set_xlabel("|value - reference|")
    bars.set_label("measured")
    return [bars, marks]


_DRAWERS = {
    "profile": _draw_profile,
    "slope-fit": _draw_slope_fit,
    "triviality-gap": _draw_triviality_gap,
    "cJ-curve": _draw_cj_curve,
    "kernel-residual": _draw_kernel_residual,
}
