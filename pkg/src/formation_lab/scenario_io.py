"""JSON scenario documents: schema checks, parsing into a :class:`Scenario`, and serialization.

Complex numbers are written as ``[re, im]`` pairs. Maneuver profiles are
objects tagged with ``kind`` (constant, ramp, smoothstep, sinusoid).
"""

from __future__ import annotations

import copy
import json
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from .control import GainConfig, certify_gain
from .errors import (
    ContractViolation,
    FormationError,
    NotLocalizableError,
    SchemaError,
    ScenarioValidationError,
)
from .graph import build_graph, symmetrize_follower_edges
from .laplacian import NominalConfig, assemble, xi_bound
from .maneuver import (
    PROFILE_KINDS,
    Constant,
    ManeuverPiece2D,
    ManeuverPiece3D,
    ManeuverSchedule2D,
    ManeuverSchedule3D,
    OrientationPlan,
    Sinusoid,
    _Blend,
    orientation_plan,
    shape_interp,
    target_speed_bound,
)
from .sim import FOLLOWER_MODES, Scenario, check_nominal_assumptions, structural_checks, validate_scenario

__all__ = [
    "SCHEMA",
    "parse_scenario",
    "load_scenario",
    "loads_document",
    "serialize_scenario",
    "dump_scenario",
    "bundled_path",
    "bundled_names",
    "encode_profile",
    "decode_profile",
]

_num = {"type": "number"}
_pair = {"type": "array", "items": _num, "minItems": 2, "maxItems": 2}
_triple = {"type": "array", "items": _num, "minItems": 3, "maxItems": 3}
_interval = {"type": "array", "items": _num, "minItems": 2, "maxItems": 2}
_profile = {"type": "object", "required": ["kind"],
            "properties": {"kind": {"enum": sorted(PROFILE_KINDS)}}}

SCHEMA = {
    "type": "object",
    "required": ["meta", "graph", "nominal", "gains", "initial", "integrator"],
    "properties": {
        "meta": {
            "type": "object", "required": ["name", "dimension"],
            "properties": {"name": {"type": "string"}, "dimension": {"enum": [2, 3]}},
        },
        "graph": {
            "type": "object", "required": ["n", "m", "constraint_neighbors"],
            "properties": {
                "n": {"type": "integer", "minimum": 2},
                "m": {"type": "integer", "minimum": 1},
                "constraint_neighbors": {
                    "type": "array",
                    "items": {"type": "array", "items": {"type": "integer"}, "minItems": 3, "maxItems": 3},
                },
                "extra_comm": {
                    "type": "array",
                    "items": {"type": "array", "items": {"type": "integer"}, "minItems": 2, "maxItems": 2},
                },
                "symmetrize_followers": {"type": "boolean"},
            },
        },
        "nominal": {
            "type": "object",
            "properties": {
                "r": {"type": "array", "items": _pair},
                "epsilon": {"type": "array", "items": _num},
                "q": {"type": "array", "items": _triple},
            },
            "oneOf": [{"required": ["r"], "not": {"required": ["q"]}},
                      {"required": ["q"], "not": {"required": ["r"]}}],
        },
        "orientation": {
            "type": "object", "required": ["phases"],
            "properties": {
                "center": _triple,
                "t_end": _num,
                "phases": {
                    "type": "array",
                    "items": {"type": "object", "required": ["phase", "interval", "theta"],
                              "properties": {"phase": {"enum": ["yaw", "pitch", "roll"]},
                                             "interval": _interval, "theta": _profile}},
                },
            },
        },
        "schedule": {
            "type": "array", "minItems": 1,
            "items": {
                "type": "object", "required": ["interval"],
                "properties": {
                    "interval": _interval,
                    "phase": {"enum": ["yaw", "pitch", "roll"]},
                    "beta": _profile, "h": _profile, "theta": _profile, "s_L": _profile,
                    "beta_p": _profile, "beta_tau": _profile, "s_L_p": _profile, "s_L_tau": _profile,
                    "shape_interp": {"type": "object", "required": ["s_end"],
                                     "properties": {"s_end": {"type": "array", "items": _pair}}},
                },
            },
        },
        "gains": {
            "type": "object", "required": ["follower_mode"],
            "properties": {
                "follower_mode": {"enum": list(FOLLOWER_MODES)},
                "alpha1": _num,
                "alpha2": {"anyOf": [_num, {"const": "certified"}]},
                "sig_epsilon": _num,
                "strict_certificate": {"type": "boolean"},
            },
        },
        "initial": {
            "type": "object",
            "properties": {
                "positions": {"type": "array", "items": {"anyOf": [_pair, _triple]}},
                "target_offsets": {"type": "array", "items": {"anyOf": [_pair, _triple]}},
            },
            "oneOf": [{"required": ["positions"]}, {"required": ["target_offsets"]}],
        },
        "integrator": {
            "type": "object", "required": ["dt", "T"],
            "properties": {"dt": {"type": "number", "exclusiveMinimum": 0},
                           "T": {"type": "number", "exclusiveMinimum": 0},
                           "record_stride": {"type": "integer", "minimum": 1}},
        },
    },
}

_VALIDATOR = jsonschema.Draft202012Validator(SCHEMA)


# --------------------------------------------------------------------------
# value codecs
# --------------------------------------------------------------------------

def _c(v) -> complex:
    return complex(v[0], v[1])


def _cvec(vs) -> np.ndarray:
    return np.array([_c(v) for v in vs], dtype=complex)


def _enc_c(z) -> list:
    z = complex(z)
    return [z.real, z.imag]


def _enc_value(v, is_complex: bool):
    a = np.asarray(v)
    if is_complex:
        if a.ndim == 0:
            return _enc_c(a)
        return [_enc_c(z) for z in a]
    if a.ndim == 0:
        return float(a)
    return [float(x) for x in a]


def _dec_value(v, is_complex: bool, where: str):
    try:
        if is_complex:
            if len(v) == 2 and all(isinstance(x, (int, float)) for x in v):
                return _c(v)
            return _cvec(v)
        if isinstance(v, (int, float)):
            return float(v)
        return np.array([float(x) for x in v])
    except (TypeError, ValueError, IndexError):
        raise SchemaError(f"malformed {'complex' if is_complex else 'real'} value {v!r}", field=where) from None


def encode_profile(prof, is_complex: bool) -> dict:
    if isinstance(prof, Constant):
        return {"kind": "constant", "value": _enc_value(prof.value, is_complex)}
    if isinstance(prof, _Blend):
        return {"kind": prof.kind, "t0": float(prof.t0), "t1": float(prof.t1),
                "start": _enc_value(prof.start, is_complex), "end": _enc_value(prof.end, is_complex)}
    if isinstance(prof, Sinusoid):
        return {"kind": "sinusoid", "amplitude": _enc_value(prof.amplitude, is_complex),
                "omega": float(prof.omega), "phase": float(prof.phase),
                "offset": _enc_value(prof.offset, is_complex)}
    raise ContractViolation(f"cannot serialize profile {prof!r}")


def decode_profile(d: dict, is_complex: bool, where: str):
    kind = d.get("kind")
    try:
        if kind == "constant":
            return Constant(_dec_value(d["value"], is_complex, where + ".value"))
        if kind in ("ramp", "smoothstep"):
            return PROFILE_KINDS[kind](float(d["t0"]), float(d["t1"]),
                                       _dec_value(d["start"], is_complex, where + ".start"),
                                       _dec_value(d["end"], is_complex, where + ".end"))
        if kind == "sinusoid":
            zero = 0j if is_complex else 0.0
            return Sinusoid(_dec_value(d["amplitude"], is_complex, where + ".amplitude"), float(d["omega"]),
                            float(d.get("phase", 0.0)),
                            _dec_value(d["offset"], is_complex, where + ".offset") if "offset" in d else zero)
    except KeyError as exc:
        raise SchemaError(f"profile of kind {kind!r} is missing {exc.args[0]!r}", field=where) from None
    except ValueError as exc:
        raise SchemaError(str(exc), field=where) from None
    raise SchemaError(f"unknown profile kind {kind!r}", field=where)


# --------------------------------------------------------------------------
# parsing
# --------------------------------------------------------------------------

def loads_document(text: str) -> dict:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}",
                          field=f"line {exc.lineno}") from None
    if not isinstance(doc, dict):
        raise SchemaError("scenario document must be a JSON object")
    return doc


def _schema_errors(doc: dict) -> list[SchemaError]:
    out = []
    for err in sorted(_VALIDATOR.iter_errors(doc), key=lambda e: list(map(str, e.absolute_path))):
        path = ".".join(str(p) for p in err.absolute_path) or "<root>"
        out.append(SchemaError(err.message, field=path))
    return out


def _piece_2d(i: int, d: dict, r: np.ndarray, b) -> ManeuverPiece2D:
    where = f"schedule.{i}"
    t0, t1 = map(float, d["interval"])
    kw = {}
    for key, cx in (("beta", True), ("h", False), ("theta", False)):
        if key in d:
            kw[key] = decode_profile(d[key], cx, f"{where}.{key}")
    if "shape_interp" in d:
        if "s_L" in d:
            raise SchemaError("give either s_L or shape_interp, not both", field=where)
        s_end = _cvec(d["shape_interp"]["s_end"])
        return shape_interp(r, s_end, t0, t1, b, **kw)
    s_L = decode_profile(d["s_L"], True, f"{where}.s_L") if "s_L" in d else Constant(r[:b.m])
    return ManeuverPiece2D(t0, t1, s_L=s_L, **kw)


def _piece_3d(i: int, d: dict, r, eps, m) -> ManeuverPiece3D:
    where = f"schedule.{i}"
    t0, t1 = map(float, d["interval"])
    kw = {}
    for key, cx in (("beta_p", True), ("beta_tau", False), ("h", False), ("theta", False),
                    ("s_L_p", True), ("s_L_tau", False)):
        if key in d:
            kw[key] = decode_profile(d[key], cx, f"{where}.{key}")
    kw.setdefault("s_L_p", Constant(r[:m]))
    kw.setdefault("s_L_tau", Constant(eps[:m]))
    if d.get("phase", "yaw") != "yaw":
        raise ContractViolation("explicit 3-D schedules run in the yaw plane; use an orientation plan to switch",
                                field=f"{where}.phase")
    return ManeuverPiece3D(t0, t1, "yaw", **kw)


def _collect(errors: list, fn, *args, **kw):
    try:
        return fn(*args, **kw)
    except ScenarioValidationError as exc:
        errors.extend(exc.errors)
    except FormationError as exc:
        errors.append(exc)
    return None


def parse_scenario(doc: dict | str, *, strict: bool | None = None, dt: float | None = None,
                   T: float | None = None, record_stride: int | None = None) -> Scenario:
    """Build and fully validate a scenario from a document (dict or JSON text).

    Every violation found is reported together in one
    :class:`ScenarioValidationError`. Keyword overrides replace the
    corresponding document settings.
    """
    if isinstance(doc, str):
        doc = loads_document(doc)
    errs = _schema_errors(doc)
    if errs:
        raise ScenarioValidationError(errs)
    doc = copy.deepcopy(doc)
    dim = doc["meta"]["dimension"]
    nominal = doc["nominal"]
    errors: list[FormationError] = []

    gdoc = doc["graph"]
    g = _collect(errors, build_graph, gdoc["n"], gdoc["m"], [tuple(t) for t in gdoc["constraint_neighbors"]],
                 [tuple(e) for e in gdoc.get("extra_comm", ())])
    if g is not None and gdoc.get("symmetrize_followers"):
        g = symmetrize_follower_edges(g)

    # nominal geometry
    q = r = eps = None
    if "q" in nominal:
        if dim != 3:
            errors.append(SchemaError("q is only valid for 3-D scenarios", field="nominal.q"))
        if "orientation" not in doc:
            errors.append(SchemaError("a q configuration needs an orientation section", field="orientation"))
        q = np.array(nominal["q"], dtype=float)
        npos = len(q)
    else:
        r = _cvec(nominal["r"])
        npos = len(r)
        if dim == 3:
            if "epsilon" not in nominal:
                errors.append(SchemaError("3-D scenarios need nominal.epsilon", field="nominal.epsilon"))
            else:
                eps = np.array(nominal["epsilon"], dtype=float)
                if len(eps) != len(r):
                    errors.append(SchemaError("epsilon and r lengths differ", field="nominal.epsilon"))
                    eps = None
        elif "epsilon" in nominal:
            errors.append(SchemaError("epsilon given for a 2-D scenario", field="nominal.epsilon"))
        if "schedule" not in doc:
            errors.append(SchemaError("missing schedule", field="schedule"))
    if g is not None and npos != g.n:
        errors.append(SchemaError(f"nominal has {npos} agents, graph has {g.n}", field="nominal"))
        g = None

    gains = _gains(doc["gains"], errors)
    initial_doc = doc["initial"]
    integ = doc["integrator"]
    dt = float(integ["dt"]) if dt is None else float(dt)
    T = float(integ["T"]) if T is None else float(T)
    stride = int(integ.get("record_stride", 10)) if record_stride is None else int(record_stride)
    strict = bool(doc["gains"].get("strict_certificate", False)) if strict is None else strict

    if g is None or errors:
        raise ScenarioValidationError(errors)

    # Assumptions on the nominal configuration; assembly would fail on these.
    plan: OrientationPlan | None = None
    if q is not None:
        r_yaw = q[:, 0] + 1j * q[:, 1]
        bad = check_nominal_assumptions(g, r_yaw, q[:, 2], "yaw plane")
        if bad:
            raise ScenarioValidationError(errors + bad)
        o = doc["orientation"]
        phases = [(p["phase"], decode_profile(p["theta"], False, f"orientation.phases.{i}.theta"),
                   tuple(map(float, p["interval"]))) for i, p in enumerate(o["phases"])]
        plan = _collect(errors, orientation_plan, q, g, phases, center=tuple(o.get("center", q.mean(axis=0))),
                        t0=float(o["phases"][0]["interval"][0]) if o["phases"] else 0.0,
                        t_end=float(o["t_end"]) if "t_end" in o else None)
        if plan is None:
            raise ScenarioValidationError(errors)
        schedule, blocks = plan.schedule, plan.blocks
        nominal_cfg = q
    else:
        bad = check_nominal_assumptions(g, r, eps)
        if bad:
            raise ScenarioValidationError(errors + bad)
        cfg = NominalConfig(r, eps)
        b = _collect(errors, assemble, g, cfg, plane="xy" if dim == 3 else None)
        if b is None:
            raise ScenarioValidationError(errors)
        if not b.report.invertible:
            # still run the rest of validation to report everything at once
            pieces = []
        else:
            pieces = []
            for i, pd in enumerate(doc["schedule"]):
                if dim == 2:
                    pc = _collect(errors, _piece_2d, i, pd, r, b)
                else:
                    pc = _collect(errors, _piece_3d, i, pd, r, eps, g.m)
                if pc is not None:
                    pieces.append(pc)
        schedule = None
        if pieces and len(pieces) == len(doc["schedule"]):
            cls = ManeuverSchedule2D if dim == 2 else ManeuverSchedule3D
            schedule = _collect(errors, cls, tuple(pieces))
        if schedule is None:
            if not b.report.invertible:
                errors.extend(structural_checks(g, doc["gains"]["follower_mode"])[1])
                errors.extend(_not_localizable(b))
            raise ScenarioValidationError(errors)
        blocks = (b,) * len(schedule.pieces)
        nominal_cfg = cfg

    sc = Scenario(graph=g, schedule=schedule, blocks=tuple(blocks), gains=gains, initial=None,
                  follower_mode=doc["gains"]["follower_mode"], dt=dt, T=T, record_stride=stride,
                  strict_certificate=strict, nominal=nominal_cfg, plan=plan, name=doc["meta"]["name"],
                  document=doc)
    init = _collect(errors, _initial, initial_doc, sc)
    if init is None:
        raise ScenarioValidationError(errors)
    sc.initial = init

    alpha2_spec = doc["gains"].get("alpha2", 1.0)
    if alpha2_spec == "certified":
        amin = _collect(errors, _certified_alpha2, sc)
        if amin is not None:
            sc.gains = GainConfig(sc.gains.alpha1, amin, sc.gains.sig_epsilon)

    rep = validate_scenario(sc, raise_on_error=False)
    errors.extend(rep.errors)
    if errors:
        raise ScenarioValidationError(errors)
    sc.report = rep
    return sc


def _not_localizable(b):
    return [NotLocalizableError(f"follower block not invertible (cond={b.report.cond:.3g})", field="nominal")]


def _certified_alpha2(sc: Scenario) -> float:
    for b in sc.blocks:
        b.require_localizable()
    xi = max(xi_bound(b) for b in {id(b): b for b in sc.blocks}.values())
    sc.delta = target_speed_bound(sc.schedule)
    return certify_gain(xi, sc.delta, sc.m)


def _gains(gd: dict, errors: list) -> GainConfig:
    a2 = gd.get("alpha2", 1.0)
    try:
        return GainConfig(float(gd.get("alpha1", 1.0)), 1.0 if a2 == "certified" else float(a2),
                          float(gd.get("sig_epsilon", 0.0)))
    except FormationError as exc:
        errors.append(exc)
        return GainConfig()


def _initial(d: dict, sc: Scenario) -> np.ndarray:
    key = "positions" if "positions" in d else "target_offsets"
    vals = d[key]
    n = sc.n
    if len(vals) != n:
        raise SchemaError(f"initial.{key} has {len(vals)} entries, expected {n}", field=f"initial.{key}")
    width = 2 if sc.dimension == 2 else 3
    for i, v in enumerate(vals):
        if len(v) != width:
            raise SchemaError(f"entry {i} should have {width} components", field=f"initial.{key}.{i}",
                              agent=i + 1)
    if sc.dimension == 2:
        X = _cvec(vals)
        if key == "target_offsets":
            X = X + sc.target(sc.t0).p_star
    else:
        X = np.array(vals, dtype=float)
        if key == "target_offsets":
            X = X + sc.target(sc.t0).world
    return X


def load_scenario(path, **overrides) -> Scenario:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise SchemaError(f"cannot read {path}: {exc.strerror}", field=str(path)) from None
    return parse_scenario(loads_document(text), **overrides)


# --------------------------------------------------------------------------
# serialization
# --------------------------------------------------------------------------

def _enc_piece(p) -> dict:
    if isinstance(p, ManeuverPiece3D):
        return {"interval": [p.t_start, p.t_end], "phase": p.phase,
                "beta_p": encode_profile(p.beta_p, True), "beta_tau": encode_profile(p.beta_tau, False),
                "h": encode_profile(p.h, False), "theta": encode_profile(p.theta, False),
                "s_L_p": encode_profile(p.s_L_p, True), "s_L_tau": encode_profile(p.s_L_tau, False)}
    return {"interval": [p.t_start, p.t_end], "beta": encode_profile(p.beta, True),
            "h": encode_profile(p.h, False), "theta": encode_profile(p.theta, False),
            "s_L": encode_profile(p.s_L, True)}


def serialize_scenario(sc: Scenario) -> dict:
    """Canonical document for ``sc``; parsing it yields an equivalent scenario.

    Schedules are written piece by piece (shape interpolation pieces become
    explicit smoothstep shapes), the gain is written as its numeric value and
    initial positions are absolute.
    """
    g = sc.graph
    doc = {
        "meta": {"name": sc.name, "dimension": sc.dimension},
        "graph": {"n": g.n, "m": g.m,
                  "constraint_neighbors": [[i, j, k] for i, (j, k) in g.constraint_neighbors.items()],
                  "extra_comm": [list(e) for e in g.extra_comm()]},
    }
    if sc.plan is not None:
        q = np.asarray(sc.nominal, dtype=float)
        o = (sc.document or {}).get("orientation")
        if o is None:
            raise ContractViolation("orientation-plan scenarios can only be serialized from a parsed document")
        doc["nominal"] = {"q": q.tolist()}
        doc["orientation"] = copy.deepcopy(o)
    else:
        cfg: NominalConfig = sc.nominal
        doc["nominal"] = {"r": [_enc_c(z) for z in cfg.r]}
        if cfg.epsilon is not None:
            doc["nominal"]["epsilon"] = [float(x) for x in cfg.epsilon]
        doc["schedule"] = [_enc_piece(p) for p in sc.schedule.pieces]
    doc["gains"] = {"follower_mode": sc.follower_mode, "alpha1": sc.gains.alpha1, "alpha2": sc.gains.alpha2,
                    "sig_epsilon": sc.gains.sig_epsilon, "strict_certificate": sc.strict_certificate}
    X = np.asarray(sc.initial)
    doc["initial"] = {"positions": [_enc_c(z) for z in X] if sc.dimension == 2 else X.tolist()}
    doc["integrator"] = {"dt": sc.dt, "T": sc.T, "record_stride": sc.record_stride}
    return doc


def dump_scenario(sc: Scenario, path=None) -> str:
    text = json.dumps(serialize_scenario(sc), indent=2) + "\n"
    if path is not None:
        Path(path).write_text(text, encoding="utf-8")
    return text


# --------------------------------------------------------------------------
# bundled fixtures
# --------------------------------------------------------------------------

def bundled_names() -> list[str]:
    root = resources.files("formation_lab") / "scenarios"
    return sorted(p.name for p in root.iterdir() if p.name.endswith(".scn"))


def bundled_path(name: str) -> Path:
    """Filesystem path of a bundled ``.scn`` fixture (``.scn`` suffix optional)."""
    if not name.endswith(".scn"):
        name += ".scn"
    p = Path(str(resources.files("formation_lab") / "scenarios" / name))
    if not p.is_file():
        raise SchemaError(f"no bundled scenario named {name!r}", field="scenario")
    return p
