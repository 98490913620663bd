"""Scenario description, validation and the YAML file format.

A scenario file is a YAML mapping::

    name: fig12
    Ts: 0.02
    duration: 40
    policy: {d0: 4, ht: 0.8}
    limits: {u_min: -3, u_max: 3, a_min: -3, a_max: 3, v_min: 0, v_max: 40}
    gains: group2              # group1 | group2 | auto | [kpx, kix, kdx, kpv, kiv, kdv]
    controller: dcpid          # dcpid | single_pid
    overshoot: approach        # approach | above
    vehicle_defaults: {length: 5, wheelbase: 2.7}
    vehicles:
      - {id: 1, x: 0, y: -1.875, v: 20, tau: 0.5}
      - {id: 2, gap: 20, y: -1.875, v: 20, tau: 0.51}
    lane_change: {sv: 5, target_y: -1.875, a_p: 0.1, tfv: 2,
                  tfv_profile: [{t_start: 0, t_end: 2.5, accel: -2}]}
    disturbance: {vehicle: 1, eps_u: 3, t_start: 6, t_end: 8}

A vehicle gives either ``x`` (front bumper) or ``gap``, the bumper-to-bumper
distance behind the previously listed vehicle in the same lane.  Errors are
reported with the line they refer to.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from importlib import resources

import yaml

from .controller import GAIN_GROUPS, GROUP_2, CascadeGains, SpacingPolicy
from .dynamics import Limits, VehicleParams


class ScenarioError(ValueError):
    def __init__(self, message: str, line: int | None = None, source: str = "<scenario>", subject=None):
        self.message = message
        self.line = line
        self.source = source
        # vehicle id or top-level section the error is about, used to find its line
        self.subject = subject
        where = f"{source}:{line}: " if line is not None else f"{source}: "
        super().__init__(where + message)


@dataclass(frozen=True)
class AccelSegment:
    """Scripted acceleration command over ``[t_start, t_end)``."""

    t_start: float
    t_end: float
    accel: float


@dataclass(frozen=True)
class VehicleSpec:
    id: int
    x: float
    y: float
    v: float
    params: VehicleParams
    a: float = 0.0
    script: tuple[AccelSegment, ...] = ()


@dataclass(frozen=True)
class LaneChangeSpec:
    sv_id: int
    target_y: float
    a_p: float = 0.1
    tfv_override: int | None = None
    tfv_profile: tuple[AccelSegment, ...] = ()
    epsilon_gate: float = 0.1


@dataclass(frozen=True)
class Disturbance:
    vehicle_id: int
    eps_u: float
    t_start: float
    t_end: float


GAIN_MODES = ("fixed", "auto")
CONTROLLERS = ("dcpid", "single_pid")
OVERSHOOT_MODES = ("approach", "above")


@dataclass(frozen=True)
class ScenarioSpec:
    vehicles: tuple[VehicleSpec, ...]
    policy: SpacingPolicy = field(default_factory=SpacingPolicy)
    limits: Limits = field(default_factory=Limits)
    Ts: float = 0.02
    duration: float = 40.0
    lane_change: LaneChangeSpec | None = None
    disturbance: Disturbance | None = None
    gains_mode: str = "fixed"
    gains: CascadeGains = GROUP_2
    controller: str = "dcpid"
    overshoot: str = "approach"
    name: str = ""

    @property
    def n_steps(self) -> int:
        return int(round(self.duration / self.Ts))

    def vehicle(self, vid: int) -> VehicleSpec:
        for v in self.vehicles:
            if v.id == vid:
                return v
        raise KeyError(vid)


def validate(spec: ScenarioSpec) -> None:
    """Raise ScenarioError unless ``spec`` satisfies every invariant."""
    if not spec.vehicles:
        raise ScenarioError("at least one vehicle is required")
    if not (spec.Ts > 0 and math.isfinite(spec.Ts)):
        raise ScenarioError(f"Ts must be positive, got {spec.Ts!r}", subject="Ts")
    if not (spec.duration > 0 and math.isfinite(spec.duration)):
        raise ScenarioError(f"duration must be positive, got {spec.duration!r}", subject="duration")
    if spec.gains_mode not in GAIN_MODES:
        raise ScenarioError(f"unknown gains mode {spec.gains_mode!r}")
    if spec.controller not in CONTROLLERS:
        raise ScenarioError(f"unknown controller {spec.controller!r}")
    if spec.overshoot not in OVERSHOOT_MODES:
        raise ScenarioError(f"unknown overshoot mode {spec.overshoot!r}")
    ids = [v.id for v in spec.vehicles]
    if len(set(ids)) != len(ids):
        raise ScenarioError(f"vehicle ids must be unique, got {ids}")
    for v in spec.vehicles:
        if not all(math.isfinite(q) for q in (v.x, v.y, v.v, v.a)):
            raise ScenarioError(f"vehicle {v.id}: non-finite initial state", subject=v.id)
        if not spec.limits.v_min <= v.v <= spec.limits.v_max:
            raise ScenarioError(f"vehicle {v.id}: speed {v.v} outside limits", subject=v.id)
        try:
            v.params.check_sample_time(spec.Ts)
        except ValueError as exc:
            raise ScenarioError(f"vehicle {v.id}: {exc}", subject=v.id) from None
        _check_segments(v.script, f"vehicle {v.id} script", v.id)
    lanes: dict[float, list[VehicleSpec]] = {}
    for v in spec.vehicles:
        lanes.setdefault(v.y, []).append(v)
    for y, members in lanes.items():
        members = sorted(members, key=lambda v: -v.x)
        for front, back in zip(members, members[1:]):
            gap = front.x - back.x - front.params.length
            if not gap > 0:
                raise ScenarioError(
                    f"vehicles {front.id} and {back.id} overlap in lane y={y} (gap {gap:g} m)",
                    subject=back.id,
                )
    lc = spec.lane_change
    if lc is not None:
        if lc.sv_id not in ids:
            raise ScenarioError(f"lane change: unknown SV id {lc.sv_id}", subject="lane_change")
        sv = spec.vehicle(lc.sv_id)
        if sv.y == lc.target_y:
            raise ScenarioError("lane change: SV already on the target lane", subject="lane_change")
        if lc.target_y not in lanes:
            raise ScenarioError(f"lane change: no vehicle on target lane y={lc.target_y}", subject="lane_change")
        if not lc.a_p > 0:
            raise ScenarioError(f"lane change: a_p must be positive, got {lc.a_p!r}", subject="lane_change")
        if not lc.epsilon_gate > 0:
            raise ScenarioError("lane change: epsilon_gate must be positive", subject="lane_change")
        if lc.tfv_override is not None:
            if lc.tfv_override not in ids:
                raise ScenarioError(f"lane change: unknown TFV id {lc.tfv_override}", subject="lane_change")
            if spec.vehicle(lc.tfv_override).y != lc.target_y:
                raise ScenarioError("lane change: TFV is not on the target lane", subject="lane_change")
        elif not any(v.x > sv.x for v in lanes[lc.target_y]):
            raise ScenarioError("lane change: no target-lane vehicle ahead of the SV", subject="lane_change")
        _check_segments(lc.tfv_profile, "lane change TFV profile", "lane_change")
    d = spec.disturbance
    if d is not None:
        if d.vehicle_id not in ids:
            raise ScenarioError(f"disturbance: unknown vehicle id {d.vehicle_id}", subject="disturbance")
        if not d.t_start < d.t_end:
            raise ScenarioError("disturbance: t_start must precede t_end", subject="disturbance")


def _check_segments(segments, what, subject):
    for s in segments:
        if not s.t_start < s.t_end:
            raise ScenarioError(f"{what}: t_start must precede t_end", subject=subject)


# --- YAML ---------------------------------------------------------------


class _Doc:
    """Node tree of a YAML document with line-aware accessors."""

    def __init__(self, text: str, source: str):
        self.source = source
        self.loader = yaml.SafeLoader(text)
        try:
            self.root = self.loader.get_single_node()
        except yaml.YAMLError as exc:
            mark = getattr(exc, "problem_mark", None)
            line = mark.line + 1 if mark is not None else None
            raise ScenarioError(f"YAML syntax error: {getattr(exc, 'problem', exc)}", line, source) from None
        if self.root is None:
            raise ScenarioError("empty scenario file", 1, source)

    def error(self, node, message):
        return ScenarioError(message, node.start_mark.line + 1 if node is not None else None, self.source)

    def mapping(self, node, what, allowed):
        if not isinstance(node, yaml.MappingNode):
            raise self.error(node, f"{what} must be a mapping")
        out = {}
        for k, v in node.value:
            key = self.loader.construct_object(k, deep=True)
            if key not in allowed:
                raise self.error(k, f"unknown key {key!r} in {what}")
            if key in out:
                raise self.error(k, f"duplicate key {key!r} in {what}")
            out[key] = v
        return out

    def sequence(self, node, what):
        if not isinstance(node, yaml.SequenceNode):
            raise self.error(node, f"{what} must be a list")
        return node.value

    def scalar(self, node):
        return self.loader.construct_object(node, deep=True)

    def number(self, node, what):
        val = self.scalar(node)
        if isinstance(val, bool) or not isinstance(val, (int, float)):
            raise self.error(node, f"{what} must be a number, got {val!r}")
        if not math.isfinite(val):
            raise self.error(node, f"{what} must be finite")
        return float(val)

    def integer(self, node, what):
        val = self.scalar(node)
        if isinstance(val, bool) or not isinstance(val, int):
            raise self.error(node, f"{what} must be an integer, got {val!r}")
        return val

    def string(self, node, what, choices=None):
        val = self.scalar(node)
        if not isinstance(val, str):
            raise self.error(node, f"{what} must be a string, got {val!r}")
        if choices is not None and val not in choices:
            raise self.error(node, f"{what} must be one of {', '.join(choices)}, got {val!r}")
        return val


_TOP = {
    "name", "Ts", "duration", "policy", "limits", "gains", "controller", "overshoot",
    "vehicle_defaults", "vehicles", "lane_change", "disturbance",
}
_VEHICLE = {"id", "x", "gap", "y", "v", "a", "tau", "length", "wheelbase", "script"}
_SEGMENT = ("t_start", "t_end", "accel")


def _segments(doc: _Doc, node, what):
    out = []
    for item in doc.sequence(node, what):
        m = doc.mapping(item, what, set(_SEGMENT))
        missing = [k for k in _SEGMENT if k not in m]
        if missing:
            raise doc.error(item, f"{what}: missing {', '.join(missing)}")
        seg = AccelSegment(*(doc.number(m[k], f"{what} {k}") for k in _SEGMENT))
        if not seg.t_start < seg.t_end:
            raise doc.error(item, f"{what}: t_start must precede t_end")
        out.append(seg)
    return tuple(out)


def _dataclass_from(doc, node, cls, what, required=()):
    names = set(cls.__dataclass_fields__)
    m = doc.mapping(node, what, names)
    for k in required:
        if k not in m:
            raise doc.error(node, f"{what}: missing {k}")
    kwargs = {k: doc.number(v, f"{what} {k}") for k, v in m.items()}
    try:
        return cls(**kwargs)
    except ValueError as exc:
        raise doc.error(node, f"{what}: {exc}") from None


def _gains(doc: _Doc, node):
    if isinstance(node, yaml.ScalarNode):
        name = doc.string(node, "gains", tuple(GAIN_GROUPS) + ("auto",))
        if name == "auto":
            return "auto", GROUP_2
        return "fixed", GAIN_GROUPS[name]
    values = [doc.number(v, "gain") for v in doc.sequence(node, "gains")]
    if len(values) != 6:
        raise doc.error(node, f"gains need 6 values, got {len(values)}")
    try:
        return "fixed", CascadeGains.from_sequence(values)
    except ValueError as exc:
        raise doc.error(node, str(exc)) from None


def parse_scenario(text: str, source: str = "<scenario>") -> ScenarioSpec:
    """Parse and validate scenario YAML text."""
    doc = _Doc(text, source)
    top = doc.mapping(doc.root, "scenario", _TOP)
    if "vehicles" not in top:
        raise doc.error(doc.root, "scenario: missing vehicles")

    kw: dict = {}
    if "name" in top:
        kw["name"] = doc.string(top["name"], "name")
    for key in ("Ts", "duration"):
        if key in top:
            kw[key] = doc.number(top[key], key)
    if "policy" in top:
        kw["policy"] = _dataclass_from(doc, top["policy"], SpacingPolicy, "policy")
    if "limits" in top:
        kw["limits"] = _dataclass_from(doc, top["limits"], Limits, "limits")
    if "gains" in top:
        kw["gains_mode"], kw["gains"] = _gains(doc, top["gains"])
    if "controller" in top:
        kw["controller"] = doc.string(top["controller"], "controller", CONTROLLERS)
    if "overshoot" in top:
        kw["overshoot"] = doc.string(top["overshoot"], "overshoot", OVERSHOOT_MODES)

    defaults = {"length": 5.0, "wheelbase": 2.7}
    if "vehicle_defaults" in top:
        m = doc.mapping(top["vehicle_defaults"], "vehicle_defaults", {"length", "wheelbase", "tau"})
        defaults.update({k: doc.number(v, f"vehicle_defaults {k}") for k, v in m.items()})

    vehicles = []
    last_in_lane: dict[float, VehicleSpec] = {}
    vehicle_nodes = {}
    for item in doc.sequence(top["vehicles"], "vehicles"):
        m = doc.mapping(item, "vehicle", _VEHICLE)
        for k in ("id", "y", "v"):
            if k not in m:
                raise doc.error(item, f"vehicle: missing {k}")
        vid = doc.integer(m["id"], "vehicle id")
        if vid in vehicle_nodes:
            raise doc.error(m["id"], f"duplicate vehicle id {vid}")
        vehicle_nodes[vid] = item
        y = doc.number(m["y"], "y")
        num = {k: doc.number(m[k], k) for k in ("v", "a", "tau", "length", "wheelbase") if k in m}
        try:
            params = VehicleParams(
                tau=num.get("tau", defaults.get("tau", 0.5)),
                length=num.get("length", defaults["length"]),
                wheelbase=num.get("wheelbase", defaults["wheelbase"]),
            )
        except ValueError as exc:
            raise doc.error(item, f"vehicle {vid}: {exc}") from None
        if ("x" in m) == ("gap" in m):
            raise doc.error(item, f"vehicle {vid}: give exactly one of x or gap")
        if "x" in m:
            x = doc.number(m["x"], "x")
        else:
            front = last_in_lane.get(y)
            if front is None:
                raise doc.error(m["gap"], f"vehicle {vid}: gap needs a preceding vehicle in lane y={y}")
            x = front.x - front.params.length - doc.number(m["gap"], "gap")
        script = _segments(doc, m["script"], f"vehicle {vid} script") if "script" in m else ()
        veh = VehicleSpec(id=vid, x=x, y=y, v=num["v"], a=num.get("a", 0.0), params=params, script=script)
        vehicles.append(veh)
        last_in_lane[y] = veh
    kw["vehicles"] = tuple(vehicles)

    if "lane_change" in top:
        node = top["lane_change"]
        m = doc.mapping(node, "lane_change", {"sv", "target_y", "a_p", "tfv", "tfv_profile", "epsilon_gate"})
        for k in ("sv", "target_y"):
            if k not in m:
                raise doc.error(node, f"lane_change: missing {k}")
        kw["lane_change"] = LaneChangeSpec(
            sv_id=doc.integer(m["sv"], "lane_change sv"),
            target_y=doc.number(m["target_y"], "lane_change target_y"),
            a_p=doc.number(m["a_p"], "a_p") if "a_p" in m else 0.1,
            tfv_override=doc.integer(m["tfv"], "lane_change tfv") if "tfv" in m else None,
            tfv_profile=_segments(doc, m["tfv_profile"], "tfv_profile") if "tfv_profile" in m else (),
            epsilon_gate=doc.number(m["epsilon_gate"], "epsilon_gate") if "epsilon_gate" in m else 0.1,
        )
    if "disturbance" in top:
        node = top["disturbance"]
        m = doc.mapping(node, "disturbance", {"vehicle", "eps_u", "t_start", "t_end"})
        missing = [k for k in ("vehicle", "eps_u", "t_start", "t_end") if k not in m]
        if missing:
            raise doc.error(node, f"disturbance: missing {', '.join(missing)}")
        kw["disturbance"] = Disturbance(
            vehicle_id=doc.integer(m["vehicle"], "disturbance vehicle"),
            eps_u=doc.number(m["eps_u"], "eps_u"),
            t_start=doc.number(m["t_start"], "t_start"),
            t_end=doc.number(m["t_end"], "t_end"),
        )

    spec = ScenarioSpec(**kw)
    try:
        validate(spec)
    except ScenarioError as exc:
        node = vehicle_nodes.get(exc.subject) or top.get(exc.subject) or top["vehicles"]
        raise ScenarioError(exc.message, node.start_mark.line + 1, source) from None
    return spec


def load_scenario(path) -> ScenarioSpec:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ScenarioError(f"cannot read scenario: {exc.strerror}", None, str(path)) from None
    return parse_scenario(text, str(path))


def _segments_out(segments):
    return [{"t_start": s.t_start, "t_end": s.t_end, "accel": s.accel} for s in segments]


def scenario_to_dict(spec: ScenarioSpec) -> dict:
    """Fully resolved plain-data form; ``parse_scenario`` of its YAML gives ``spec`` back."""
    out: dict = {}
    if spec.name:
        out["name"] = spec.name
    out["Ts"] = spec.Ts
    out["duration"] = spec.duration
    out["policy"] = {"d0": spec.policy.d0, "ht": spec.policy.ht}
    lim = spec.limits
    out["limits"] = {k: getattr(lim, k) for k in ("u_min", "u_max", "a_min", "a_max", "v_min", "v_max")}
    out["gains"] = "auto" if spec.gains_mode == "auto" else list(spec.gains.as_tuple())
    out["controller"] = spec.controller
    out["overshoot"] = spec.overshoot
    vehicles = []
    for v in spec.vehicles:
        d = {
            "id": v.id, "x": v.x, "y": v.y, "v": v.v, "a": v.a,
            "tau": v.params.tau, "length": v.params.length, "wheelbase": v.params.wheelbase,
        }
        if v.script:
            d["script"] = _segments_out(v.script)
        vehicles.append(d)
    out["vehicles"] = vehicles
    lc = spec.lane_change
    if lc is not None:
        d = {"sv": lc.sv_id, "target_y": lc.target_y, "a_p": lc.a_p, "epsilon_gate": lc.epsilon_gate}
        if lc.tfv_override is not None:
            d["tfv"] = lc.tfv_override
        if lc.tfv_profile:
            d["tfv_profile"] = _segments_out(lc.tfv_profile)
        out["lane_change"] = d
    if spec.disturbance is not None:
        dist = spec.disturbance
        out["disturbance"] = {
            "vehicle": dist.vehicle_id, "eps_u": dist.eps_u, "t_start": dist.t_start, "t_end": dist.t_end,
        }
    return out


def dump_scenario(spec: ScenarioSpec) -> str:
    return yaml.safe_dump(scenario_to_dict(spec), sort_keys=False, default_flow_style=None)


# --- presets --------------------------------------------------------------

PLATOON_TAUS = (0.51, 0.75, 0.78, 0.70, 0.73, 0.72, 0.62)
LEADER_TAU = 0.5


def preset_names() -> list[str]:
    files = resources.files(__package__).joinpath("presets")
    return sorted(p.name[:-5] for p in files.iterdir() if p.name.endswith(".yaml"))


def load_preset(name: str) -> ScenarioSpec:
    path = resources.files(__package__).joinpath("presets").joinpath(f"{name}.yaml")
    if not path.is_file():
        raise ScenarioError(f"unknown preset {name!r}; available: {', '.join(preset_names())}")
    return parse_scenario(path.read_text(encoding="utf-8"), f"preset:{name}")


def two_vehicle_spec(
    ex: float,
    ev: float,
    v_leader: float = 30.0,
    tau: float = 0.7,
    gains: CascadeGains = GROUP_2,
    duration: float = 40.0,
    policy: SpacingPolicy | None = None,
) -> ScenarioSpec:
    """Constant-speed leader and one follower displaced by ``(ex, ev)`` from equilibrium.

    The follower drives at ``v_leader - ev`` with a gap ``ex`` larger than the
    desired spacing at its own speed.
    """
    policy = policy or SpacingPolicy()
    v_f = v_leader - ev
    gap = policy.d0 + policy.ht * v_f + ex
    lead = VehicleSpec(id=1, x=0.0, y=0.0, v=v_leader, params=VehicleParams(tau=LEADER_TAU))
    fol = VehicleSpec(id=2, x=-5.0 - gap, y=0.0, v=v_f, params=VehicleParams(tau=tau))
    return ScenarioSpec(
        vehicles=(lead, fol), policy=policy, duration=duration, gains=gains,
        name=f"two_vehicle ex={ex:g} ev={ev:g}",
    )


def with_gains(spec: ScenarioSpec, gains: str | CascadeGains) -> ScenarioSpec:
    if isinstance(gains, CascadeGains):
        return replace(spec, gains_mode="fixed", gains=gains)
    if gains == "auto":
        return replace(spec, gains_mode="auto")
    return replace(spec, gains_mode="fixed", gains=GAIN_GROUPS[gains])
