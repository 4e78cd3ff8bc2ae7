"""FigureSpec — what to draw, from which CSVs, to which file.

Inputs are the flat CSV files the renocube CLI writes.  Each figure kind
expects one of three documented layouts (leading '#' provenance lines are
skipped everywhere):

  record   series,arm,eps,seed,probe,time,value   (experiments/*.csv)
  curve    a,value[,envelope]                     (cJ.csv)
  checks   check,value,reference,tolerance,status (checks/*.csv)

Columns are validated up front; a mismatch raises SchemaError naming the
offending column and file.
"""

import csv
import json
from dataclasses import dataclass, field


KINDS = ("profile", "slope-fit", "cJ-curve", "triviality-gap",
         "kernel-residual")

# figure kind -> (layout, required columns, optional columns)
SCHEMAS = {
    "profile": ("record",
                ("series", "arm", "eps", "seed", "probe", "time", "value"),
                ()),
    "slope-fit": ("record",
                  ("series", "arm", "eps", "seed", "probe", "time",
                   "value"),
                  ()),
    "triviality-gap": ("record",
                       ("series", "arm", "eps", "seed", "probe", "time",
                        "value"),
                       ()),
    "cJ-curve": ("curve", ("a", "value"), ("envelope",)),
    "kernel-residual": ("checks",
                        ("check", "value", "reference", "tolerance",
                         "status"),
                        ()),
}

# columns holding numbers, per layout; everything else stays text
NUMERIC = {
    "record": ("eps", "value"),
    "curve": ("a", "value", "envelope"),
    "checks": ("value", "reference"),
}


class SchemaError(Exception):
    """An input CSV does not match the documented layout."""


@dataclass(frozen=True)
class FigureSpec:
    """One figure: kind, input CSV path(s), output path, axis/legend options.

    guide picks the reference overlay(s); "auto" uses the kind's default
    (profile: the 1/(8 pi) slope; slope-fit: both slope constants;
    cJ-curve: the -1/(16 pi) asymptote; others: none).
    """

    kind: str
    inputs: tuple
    output: str
    title: str = ""
    xlabel: str = ""
    ylabel: str = ""
    legend: bool = True
    guide: str = "auto"
    arms: tuple = ()
    probes: tuple = ()

    def __post_init__(self):
        if self.kind not in KINDS:
            raise SchemaError(
                f"unknown figure kind {self.kind!r}; expected one of "
                f"{', '.join(KINDS)}")
        if not self.inputs:
            raise SchemaError("spec needs at least one input CSV")
        if not str(self.output).endswith(".svg"):
            raise SchemaError("output must be an .svg path")
        if self.guide not in ("auto", "none", "1/(8 pi)", "1/(32 pi)",
                              "-1/(16 pi)"):
            raise SchemaError(f"unknown guide {self.guide!r}")


_SPEC_KEYS = {"kind", "inputs", "output", "title", "xlabel", "ylabel",
              "legend", "guide", "arms", "probes"}


def load_spec(path):
    """Read a FigureSpec from a JSON file; unknown keys are rejected."""
    with open(path, encoding="utf-8") as fh:
        raw = json.load(fh)
    if not isinstance(raw, dict):
        raise SchemaError("spec file must hold a JSON object")
    unknown = sorted(set(raw) - _SPEC_KEYS)
    if unknown:
        raise SchemaError(f"unknown spec key(s): {', '.join(unknown)}")
    for key in ("inputs", "arms", "probes"):
        if key in raw:
            raw[key] = tuple(raw[key])
    missing = sorted({"kind", "inputs", "output"} - set(raw))
    if missing:
        raise SchemaError(f"spec missing key(s): {', '.join(missing)}")
    return FigureSpec(**raw)


def read_rows(path, kind):
    """Parsed rows of one input CSV, validated against the kind's schema."""
    layout, required, optional = SCHEMAS[kind]
    try:
        with open(path, encoding="utf-8", newline="") as fh:
            lines = [ln for ln in fh if not ln.startswith("#")]
    except OSError as err:
        raise SchemaError(f"cannot read {path}: {err}") from err
    reader = csv.DictReader(lines)
    header = reader.fieldnames or []
    for col in required:
        if col not in header:
            raise SchemaError(f"{path}: missing column {col!r}")
    for col in header:
        if col not in required and col not in optional:
            raise SchemaError(f"{path}: unexpected column {col!r}")
    rows = []
    for row in reader:
        parsed = {}
        for col in header:
            text = (row[col] or "").strip()
            if col in NUMERIC[layout] and text != "":
                try:
                    parsed[col] = float(text)
                except ValueError as err:
                    raise SchemaError(
                        f"{path}: column {col!r} holds non-numeric "
                        f"value {text!r}") from err
            else:
                parsed[col] = text
        rows.append(parsed)
    if not rows:
        raise SchemaError(f"{path}: no data rows")
    return rows
