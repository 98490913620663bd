"""CSV, metrics and manifest writers."""

from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from .scenario import dump_scenario

SERIES_COLUMNS = ("t", "vehicle_id", "x", "y", "phi", "v", "a", "u", "ex", "ev", "lane", "phase", "ref_x", "ref_y", "lat_err")
SWEEP_COLUMNS = ("ex", "ev", "converged", "eta_percent", "t_steady_s")


def fmt(value) -> str:
    """Nine significant digits; empty for missing values."""
    if value is None:
        return ""
    value = float(value)
    if math.isnan(value):
        return ""
    return f"{value:.9g}"


def write_series_csv(result, path) -> None:
    numeric = ("x", "y", "phi", "v", "a", "u", "ex", "ev", "lane")
    ref = ("ref_x", "ref_y", "lat_err")
    arrays = {k: getattr(result, k) for k in numeric + ref}
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SERIES_COLUMNS)
        for k in range(result.t.size):
            t = fmt(result.t[k])
            phase = result.phase[k]
            for c, vid in enumerate(result.ids):
                w.writerow(
                    [t, vid]
                    + [fmt(arrays[name][k, c]) for name in numeric]
                    + [phase]
                    + [fmt(arrays[name][k, c]) for name in ref]
                )


def _clean(obj):
    if isinstance(obj, dict):
        return {k: _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (float, np.floating)):
        return float(obj) if math.isfinite(obj) else None
    return obj


def write_metrics(result, path, extra: dict | None = None) -> None:
    data = {"scenario": result.spec.name, **result.metrics.as_dict()}
    if result.plan_lengths:
        lengths = [m for _, m in result.plan_lengths]
        data["plan_length_first"] = lengths[0]
        data["plan_length_last"] = lengths[-1]
    data["diagnostics"] = list(result.diagnostics)
    if extra:
        data.update(extra)
    Path(path).write_text(json.dumps(_clean(data), indent=2) + "\n", encoding="utf-8")


def write_manifest(spec, path) -> None:
    Path(path).write_text(dump_scenario(spec), encoding="utf-8")


def write_sweep_csv(rows, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SWEEP_COLUMNS)
        for r in rows:
            w.writerow([fmt(r.ex), fmt(r.ev), int(r.converged), fmt(r.eta), fmt(r.t_steady)])
