"""Command-line driver: ``dcplatoon {run,sweep,stability,feasible-ap,compare}``.

Exit codes: 0 success, 1 unstable gains (``stability`` only), 2 collision,
3 invalid input.  Diagnostics go to stderr, data to files.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from .controller import GAIN_GROUPS, CascadeGains, SpacingPolicy
from .lanechange import LANE_OFFSET, REFERENCE_COMFORT_BOUNDS, feasible_ap_domain, omega_upper_bound
from .output import write_manifest, write_metrics, write_series_csv, write_sweep_csv
from .scenario import ScenarioError, load_preset, load_scenario, preset_names, with_gains
from .sim import CollisionError, grid_values, run_scenario, run_sweep, single_pid_baseline
from .stability import evaluate

EXIT_OK, EXIT_UNSTABLE, EXIT_COLLISION, EXIT_INVALID = 0, 1, 2, 3

log = logging.getLogger("dcplatoon")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_INVALID)


def parse_gains(text: str) -> CascadeGains | str:
    """``group1``, ``group2``, ``auto`` or six comma-separated numbers."""
    if text in GAIN_GROUPS or text == "auto":
        return text
    try:
        values = [float(p) for p in text.split(",")]
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid gains {text!r}") from None
    if len(values) != 6:
        raise argparse.ArgumentTypeError("gains need six comma-separated values kpx,kix,kdx,kpv,kiv,kdv")
    try:
        return CascadeGains.from_sequence(values)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _resolve_gains(g) -> CascadeGains:
    if isinstance(g, CascadeGains):
        return g
    if g == "auto":
        raise ScenarioError("auto gains are not a fixed gain set")
    return GAIN_GROUPS[g]


def _load(name: str):
    """A scenario file path, or the name of a shipped preset."""
    if os.path.exists(name) or name.endswith((".yaml", ".yml")):
        return load_scenario(name)
    return load_preset(name)


def _write_run(result, out: Path, extra=None) -> None:
    out.mkdir(parents=True, exist_ok=True)
    write_series_csv(result, out / "series.csv")
    write_metrics(result, out / "metrics.json", extra)
    write_manifest(result.spec, out / "manifest.yaml")


def _summary(result) -> str:
    m = result.metrics
    parts = [f"t_steady={m.t_steady}", f"eta={m.eta:.3f}%", f"min_gap={m.min_gap:.3f} m"]
    if m.t0 is not None:
        parts += [f"t0={m.t0:.2f} s", f"te={m.te if m.te is None else round(m.te, 2)} s"]
    if m.max_lateral_error is not None:
        parts.append(f"max_lat_err={m.max_lateral_error:.2e} m")
    return ", ".join(parts)


def cmd_run(args) -> int:
    spec = _load(args.scenario)
    if args.gains is not None:
        spec = with_gains(spec, args.gains)
    out = Path(args.out)
    try:
        result = run_scenario(spec, controller=args.controller)
    except CollisionError as exc:
        _write_run(exc.result, out)
        print(f"collision: {exc}", file=sys.stderr)
        return EXIT_COLLISION
    _write_run(result, out)
    for d in result.diagnostics:
        print(d, file=sys.stderr)
    print(_summary(result), file=sys.stderr)
    return EXIT_OK


def cmd_sweep(args) -> int:
    try:
        ex = grid_values(args.ex_min, args.ex_max, args.ex_step)
        ev = grid_values(args.ev_min, args.ev_max, args.ev_step)
    except ValueError as exc:
        raise ScenarioError(str(exc), source="sweep") from None
    if not args.speed > 0:
        raise ScenarioError("--speed must be positive", source="sweep")
    base = {"v_leader": args.speed, "tau": args.tau, "duration": args.duration}
    if args.gains is not None:
        base["gains"] = _resolve_gains(args.gains)
    rows = run_sweep(ex, ev, base=base, workers=args.workers)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_sweep_csv(rows, out / "sweep.csv")
    n_conv = sum(r.converged for r in rows)
    below = sum(r.converged and r.eta < 5.0 for r in rows)
    print(
        f"{len(rows)} grid points ({len(ex)} x {len(ev)}); {n_conv} converged; "
        f"{below} with eta < 5%",
        file=sys.stderr,
    )
    return EXIT_OK


def cmd_stability(args) -> int:
    gains = _resolve_gains(args.gains or "group2")
    try:
        p, verdict = evaluate(gains, ht=args.ht, Ts=args.Ts, tau=args.tau, t=args.t)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    print(f"f_v        = {p.f_v:.6f}")
    print(f"f_ex_dot   = {p.f_ex_dot:.6f}")
    print(f"f_d        = {p.f_d:.6f}")
    print(f"local margin       (f_v - f_ex_dot, needs < 0)              = {verdict.margin_local:.6f}")
    print(f"asymptotic margin  (f_v^2/2 - f_v*f_ex_dot - f_d, needs > 0) = {verdict.margin_asymptotic:.6f}")
    print(f"local stability:      {'yes' if verdict.local else 'no'}")
    print(f"asymptotic stability: {'yes' if verdict.asymptotic else 'no'}")
    return EXIT_OK if verdict.stable else EXIT_UNSTABLE


def cmd_feasible_ap(args) -> int:
    v = args.speed
    if not v > 0:
        print(f"error: speed must be positive, got {v}", file=sys.stderr)
        return EXIT_INVALID
    omega = omega_upper_bound(v)
    ap = feasible_ap_domain(v, yd=args.yd)
    print(f"speed                 = {v:g} m/s")
    print(f"yaw-rate upper bound  = {omega:.5f} rad/s")
    print(f"largest feasible a_p  = {ap:.4f} m/s^2")
    ref = REFERENCE_COMFORT_BOUNDS.get(float(v))
    if ref is not None:
        print(f"tabulated reference   : yaw-rate bound {ref[0]:.4f} rad/s, a_p bound {ref[1]:.3f} m/s^2")
    return EXIT_OK


def _peaks(result) -> dict:
    return {
        "peak_abs_ex": float(np.nanmax(np.abs(result.ex))),
        "peak_abs_ev": float(np.nanmax(np.abs(result.ev))),
        "t_steady": result.metrics.t_steady,
        "min_gap": result.metrics.min_gap,
    }


def cmd_compare(args) -> int:
    spec = _load(args.scenario)
    if args.gains is not None:
        spec = with_gains(spec, args.gains)
    out = Path(args.out)
    summary = {}
    code = EXIT_OK
    for arm, runner in (("dcpid", lambda s: run_scenario(s, controller="dcpid")), ("single_pid", single_pid_baseline)):
        try:
            res = runner(spec)
        except CollisionError as exc:
            res = exc.result
            code = EXIT_COLLISION
            print(f"{arm}: collision: {exc}", file=sys.stderr)
        _write_run(res, out / arm)
        summary[arm] = _peaks(res)
        print(
            f"{arm:10s} peak|ex|={summary[arm]['peak_abs_ex']:.4f} m  peak|ev|={summary[arm]['peak_abs_ev']:.4f} m/s  "
            f"t_steady={summary[arm]['t_steady']}",
            file=sys.stderr,
        )
    (out / "comparison.json").write_text(json.dumps(summary, indent=2) + "\n", encoding="utf-8")
    return code


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="dcplatoon", description="Platoon control and cooperative lane-change simulator.")
    p.add_argument("--seedless", action="store_true", help="no-op: every command is deterministic")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    gains_help = "group1, group2, auto, or kpx,kix,kdx,kpv,kiv,kdv"
    presets = ", ".join(preset_names())

    r = sub.add_parser("run", help="simulate one scenario")
    r.add_argument("--scenario", required=True, help=f"scenario YAML file or preset name ({presets})")
    r.add_argument("--out", required=True, help="output directory")
    r.add_argument("--gains", type=parse_gains, help=gains_help)
    r.add_argument("--controller", choices=("dcpid", "single_pid"), help="override the control law")
    r.set_defaults(func=cmd_run)

    s = sub.add_parser("sweep", help="two-vehicle grid over initial spacing and speed errors")
    s.add_argument("--ex-min", type=float, default=-10.0)
    s.add_argument("--ex-max", type=float, default=10.0)
    s.add_argument("--ex-step", type=float, default=1.0)
    s.add_argument("--ev-min", type=float, default=-5.0)
    s.add_argument("--ev-max", type=float, default=5.0)
    s.add_argument("--ev-step", type=float, default=0.5)
    s.add_argument("--speed", type=float, default=30.0, help="leader speed (m/s)")
    s.add_argument("--tau", type=float, default=0.7, help="follower inertial lag (s)")
    s.add_argument("--duration", type=float, default=40.0)
    s.add_argument("--gains", type=parse_gains, help=gains_help)
    s.add_argument("--workers", type=int, default=1)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_sweep)

    st = sub.add_parser("stability", help="evaluate the local and string stability conditions")
    st.add_argument("--gains", type=parse_gains, help=gains_help)
    st.add_argument("--tau", type=float, default=0.7)
    st.add_argument("--ht", type=float, default=SpacingPolicy().ht)
    st.add_argument("--Ts", type=float, default=0.02)
    st.add_argument("--t", type=float, default=0.0, help="time at which integral terms are evaluated")
    st.set_defaults(func=cmd_stability)

    f = sub.add_parser("feasible-ap", help="comfort-feasible lateral acceleration parameter")
    f.add_argument("--speed", type=float, required=True)
    f.add_argument("--yd", type=float, default=LANE_OFFSET, help="lateral offset (m)")
    f.set_defaults(func=cmd_feasible_ap)

    c = sub.add_parser("compare", help="cascade controller against the single-loop PID")
    c.add_argument("--scenario", required=True)
    c.add_argument("--out", required=True)
    c.add_argument("--gains", type=parse_gains, help=gains_help)
    c.set_defaults(func=cmd_compare)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=sys.stderr)
    try:
        return args.func(args)
    except ScenarioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
