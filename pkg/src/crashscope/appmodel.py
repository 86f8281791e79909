"""Declarative app models: types, JSON loading, serialization and validation.

An app model stands in for an installed application. It declares the
manifest, a call graph annotated with contextual API uses, the windows and
their widgets, and an ordered list of behavior rules that decide what each
GUI event does.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any, Mapping, Optional, Union


class ModelError(Exception):
    """Base class for app-model problems."""


class ModelParseError(ModelError):
    """The file is not a well-formed app-model document."""


class ModelValidationError(ModelError):
    """The document parsed but violates a structural invariant."""

    def __init__(self, violations: list[str]):
        self.violations = violations
        super().__init__(violations[0] if violations else "invalid model")


class ContextFeature(str, Enum):
    NETWORK = "network"
    GPS = "gps"
    ACCELEROMETER = "accelerometer"
    MAGNETOMETER = "magnetometer"
    TEMPERATURE = "temperature"


# Fixed order used wherever several features are applied at once.
FEATURE_ORDER = (
    ContextFeature.NETWORK,
    ContextFeature.GPS,
    ContextFeature.ACCELEROMETER,
    ContextFeature.MAGNETOMETER,
    ContextFeature.TEMPERATURE,
)

SENSOR_FEATURES = (
    ContextFeature.ACCELEROMETER,
    ContextFeature.MAGNETOMETER,
    ContextFeature.TEMPERATURE,
)


class KeyboardType(str, Enum):
    PLAIN_TEXT = "plain_text"
    NUMBER = "number"
    EMAIL = "email"
    PHONE = "phone"
    URI = "uri"


_ALNUM = "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789"
_DIGITS = "0123456789"

# keyboard -> (base charset, special characters)
KEYBOARD_CHARSETS: dict[KeyboardType, tuple[str, str]] = {
    KeyboardType.PLAIN_TEXT: (_ALNUM + " ", "!@#$%^&*()_+-=[]{};':\",./<>?"),
    KeyboardType.NUMBER: (_DIGITS, "-.,"),
    KeyboardType.EMAIL: (_ALNUM + ".@", "_+-"),
    KeyboardType.PHONE: (_DIGITS, "+-#*()"),
    KeyboardType.URI: (_ALNUM + ":/.", "?&=%#_-"),
}


class ActionKind(str, Enum):
    TAP = "tap"
    LONG_TAP = "long_tap"
    TYPE_TEXT = "type_text"
    BACK = "back"
    ROTATE = "rotate"


COMPONENT_ACTIONS = (ActionKind.TAP, ActionKind.LONG_TAP, ActionKind.TYPE_TEXT)


class WindowKind(str, Enum):
    ACTIVITY = "activity"
    DIALOG = "dialog"


@dataclass(frozen=True)
class AppInfo:
    name: str
    version: str
    package: str


@dataclass(frozen=True)
class ActivityDecl:
    name: str
    rotatable: bool = False
    is_main: bool = False


@dataclass(frozen=True)
class Manifest:
    activities: tuple[ActivityDecl, ...]

    def activity(self, name: str) -> Optional[ActivityDecl]:
        for decl in self.activities:
            if decl.name == name:
                return decl
        return None


@dataclass(frozen=True)
class ContextualCall:
    method: str
    feature: ContextFeature


@dataclass(frozen=True)
class CallGraph:
    methods: frozenset[str] = frozenset()
    edges: frozenset[tuple[str, str]] = frozenset()
    contextual_calls: frozenset[ContextualCall] = frozenset()
    activity_entries: Mapping[str, frozenset[str]] = field(default_factory=dict)


@dataclass(frozen=True)
class ComponentModel:
    id: str
    widget_type: str
    text: str
    bounds: tuple[int, int, int, int]
    clickable: bool = False
    long_clickable: bool = False
    is_text_field: bool = False
    keyboard: Optional[KeyboardType] = None


@dataclass(frozen=True)
class WindowModel:
    id: str
    kind: WindowKind
    activity_name: str
    size: tuple[int, int]
    components: tuple[ComponentModel, ...] = ()

    def component(self, component_id: str) -> Optional[ComponentModel]:
        for comp in self.components:
            if comp.id == component_id:
                return comp
        return None


@dataclass(frozen=True)
class CrashSignature:
    exception_class: str
    message: str
    stack: tuple[str, ...]

    def to_dict(self) -> dict[str, Any]:
        return {
            "exception_class": self.exception_class,
            "message": self.message,
            "stack": list(self.stack),
        }

    @classmethod
    def from_dict(cls, data: Mapping[str, Any]) -> CrashSignature:
        return cls(
            str(data["exception_class"]),
            str(data.get("message", "")),
            tuple(str(f) for f in data["stack"]),
        )


UNKNOWN_SIGNATURE = CrashSignature("unknown", "", ("unknown",))


@dataclass(frozen=True)
class Trigger:
    window: str
    action: ActionKind
    component: Optional[str] = None


@dataclass(frozen=True)
class Guards:
    network: Optional[bool] = None  # True = on
    orientation: Optional[str] = None
    gps_invalid: Optional[bool] = None
    sensor_adverse: Optional[ContextFeature] = None
    text_matches: Mapping[str, str] = field(default_factory=dict)


@dataclass(frozen=True)
class Result:
    """Effect of a matched rule.

    ``kind`` is one of navigate, open_dialog, crash, exception, none;
    ``window`` is set for the first two, ``signature`` for the last two.
    """

    kind: str
    window: Optional[str] = None
    signature: Optional[CrashSignature] = None


RESULT_KINDS = ("navigate", "open_dialog", "crash", "exception", "none")


@dataclass(frozen=True)
class BehaviorRule:
    trigger: Trigger
    result: Result
    guards: Guards = field(default_factory=Guards)


@dataclass(frozen=True)
class DeviceProfile:
    name: str = "simdevice"
    os_version: str = "SimDevice 4.4.2"
    resolution: tuple[int, int] = (1200, 1920)
    # Inject a foreign-pid FATAL EXCEPTION decoy every N events; 0 disables.
    decoy_period: int = 0


@dataclass(frozen=True)
class AppModel:
    app: AppInfo
    manifest: Manifest
    call_graph: CallGraph
    windows: tuple[WindowModel, ...]
    behavior: tuple[BehaviorRule, ...]
    initial_window: str
    device: DeviceProfile = field(default_factory=DeviceProfile)

    def window(self, window_id: str) -> Optional[WindowModel]:
        for win in self.windows:
            if win.id == window_id:
                return win
        return None

    def match_rule_index(self, window: str, component: Optional[str], action: ActionKind, guard_ok) -> Optional[int]:
        """Index of the first rule triggered by the event whose guards pass ``guard_ok``."""
        for i, rule in enumerate(self.behavior):
            t = rule.trigger
            if t.window == window and t.component == component and t.action == action and guard_ok(rule.guards):
                return i
        return None


# ---------------------------------------------------------------------------
# Parsing


def _req(data: Mapping[str, Any], key: str, where: str) -> Any:
    if not isinstance(data, Mapping):
        raise ModelParseError(f"{where}: expected an object")
    if key not in data:
        raise ModelParseError(f"{where}: missing key {key!r}")
    return data[key]


def _int_tuple(value: Any, n: int, where: str) -> tuple[int, ...]:
    if not isinstance(value, list) or len(value) != n or not all(
        isinstance(v, int) and not isinstance(v, bool) for v in value
    ):
        raise ModelParseError(f"{where}: expected a list of {n} integers")
    return tuple(value)


def _bool(data: Mapping[str, Any], key: str, where: str) -> bool:
    value = data.get(key, False)
    if not isinstance(value, bool):
        raise ModelParseError(f"{where}.{key}: expected a boolean")
    return value


def _enum(cls, value: Any, where: str):
    try:
        return cls(value)
    except ValueError:
        raise ModelParseError(f"{where}: unknown {cls.__name__} {value!r}") from None


def _parse_signature(data: Any, where: str) -> CrashSignature:
    stack = _req(data, "stack", where)
    if not isinstance(stack, list):
        raise ModelParseError(f"{where}.stack: expected a list")
    return CrashSignature(
        str(_req(data, "exception_class", where)),
        str(data.get("message", "")),
        tuple(str(f) for f in stack),
    )


def _parse_result(data: Any, where: str) -> Result:
    if data == "none" or data is None:
        return Result("none")
    if not isinstance(data, Mapping) or len(data) != 1:
        raise ModelParseError(f"{where}: result must be \"none\" or a single-key object")
    (kind, value), = data.items()
    if kind in ("navigate", "open_dialog"):
        return Result(kind, window=str(value))
    if kind in ("crash", "exception"):
        return Result(kind, signature=_parse_signature(value, f"{where}.{kind}"))
    raise ModelParseError(f"{where}: unknown result kind {kind!r}")


def _parse_guards(data: Any, where: str) -> Guards:
    if data is None:
        return Guards()
    if not isinstance(data, Mapping):
        raise ModelParseError(f"{where}: expected an object")
    network = data.get("network")
    if network is not None and network not in ("on", "off"):
        raise ModelParseError(f"{where}.network: expected \"on\" or \"off\"")
    orientation = data.get("orientation")
    if orientation is not None and not isinstance(orientation, str):
        raise ModelParseError(f"{where}.orientation: expected a string")
    gps_invalid = data.get("gps_invalid")
    if gps_invalid is not None and not isinstance(gps_invalid, bool):
        raise ModelParseError(f"{where}.gps_invalid: expected a boolean")
    sensor = data.get("sensor_adverse")
    text_matches = data.get("text_matches") or {}
    if not isinstance(text_matches, Mapping):
        raise ModelParseError(f"{where}.text_matches: expected an object")
    return Guards(
        network=None if network is None else network == "on",
        orientation=orientation,
        gps_invalid=gps_invalid,
        sensor_adverse=None if sensor is None else _enum(ContextFeature, sensor, f"{where}.sensor_adverse"),
        text_matches={str(k): str(v) for k, v in text_matches.items()},
    )


def _parse_component(data: Any, where: str) -> ComponentModel:
    keyboard = data.get("keyboard") if isinstance(data, Mapping) else None
    return ComponentModel(
        id=str(_req(data, "id", where)),
        widget_type=str(_req(data, "widget_type", where)),
        text=str(data.get("text", "")),
        bounds=_int_tuple(_req(data, "bounds", where), 4, f"{where}.bounds"),
        clickable=_bool(data, "clickable", where),
        long_clickable=_bool(data, "long_clickable", where),
        is_text_field=_bool(data, "is_text_field", where),
        keyboard=None if keyboard is None else _enum(KeyboardType, keyboard, f"{where}.keyboard"),
    )


def _parse_window(data: Any, where: str) -> WindowModel:
    comps = data.get("components", []) if isinstance(data, Mapping) else []
    if not isinstance(comps, list):
        raise ModelParseError(f"{where}.components: expected a list")
    return WindowModel(
        id=str(_req(data, "id", where)),
        kind=_enum(WindowKind, _req(data, "kind", where), f"{where}.kind"),
        activity_name=str(_req(data, "activity", where)),
        size=_int_tuple(_req(data, "size", where), 2, f"{where}.size"),
        components=tuple(_parse_component(c, f"{where}.components[{i}]") for i, c in enumerate(comps)),
    )


def _parse_call_graph(data: Any) -> CallGraph:
    where = "call_graph"
    if data is None:
        return CallGraph()
    if not isinstance(data, Mapping):
        raise ModelParseError(f"{where}: expected an object")
    edges = []
    for i, edge in enumerate(data.get("edges", [])):
        if not isinstance(edge, list) or len(edge) != 2:
            raise ModelParseError(f"{where}.edges[{i}]: expected [caller, callee]")
        edges.append((str(edge[0]), str(edge[1])))
    calls = []
    for i, call in enumerate(data.get("contextual_calls", [])):
        w = f"{where}.contextual_calls[{i}]"
        calls.append(ContextualCall(str(_req(call, "method", w)), _enum(ContextFeature, _req(call, "feature", w), w)))
    entries = data.get("activity_entries", {})
    if not isinstance(entries, Mapping):
        raise ModelParseError(f"{where}.activity_entries: expected an object")
    return CallGraph(
        methods=frozenset(str(m) for m in data.get("methods", [])),
        edges=frozenset(edges),
        contextual_calls=frozenset(calls),
        activity_entries={str(k): frozenset(str(m) for m in v) for k, v in entries.items()},
    )


def _parse_device(data: Any) -> DeviceProfile:
    if data is None:
        return DeviceProfile()
    if not isinstance(data, Mapping):
        raise ModelParseError("device: expected an object")
    default = DeviceProfile()
    period = data.get("decoy_period", 0)
    if not isinstance(period, int) or isinstance(period, bool) or period < 0:
        raise ModelParseError("device.decoy_period: expected a non-negative integer")
    return DeviceProfile(
        name=str(data.get("name", default.name)),
        os_version=str(data.get("os_version", default.os_version)),
        resolution=_int_tuple(data.get("resolution", list(default.resolution)), 2, "device.resolution"),
        decoy_period=period,
    )


def model_from_dict(data: Any) -> AppModel:
    """Build an (unvalidated) model from a decoded JSON document."""
    try:
        return _model_from_dict(data)
    except ModelParseError:
        raise
    except (TypeError, ValueError, AttributeError) as exc:
        raise ModelParseError(f"malformed model: {exc}") from exc


def _model_from_dict(data: Any) -> AppModel:
    if not isinstance(data, Mapping):
        raise ModelParseError("top level: expected an object")
    app = _req(data, "app", "top level")
    manifest = _req(data, "manifest", "top level")
    activities = _req(manifest, "activities", "manifest")
    if not isinstance(activities, list):
        raise ModelParseError("manifest.activities: expected a list")
    windows = _req(data, "windows", "top level")
    behavior = data.get("behavior", [])
    if not isinstance(windows, list) or not isinstance(behavior, list):
        raise ModelParseError("windows and behavior must be lists")

    rules = []
    for i, raw in enumerate(behavior):
        where = f"behavior[{i}]"
        trig = _req(raw, "trigger", where)
        comp = trig.get("component") if isinstance(trig, Mapping) else None
        rules.append(
            BehaviorRule(
                trigger=Trigger(
                    window=str(_req(trig, "window", f"{where}.trigger")),
                    action=_enum(ActionKind, _req(trig, "action", f"{where}.trigger"), f"{where}.trigger.action"),
                    component=None if comp is None else str(comp),
                ),
                guards=_parse_guards(raw.get("guards"), f"{where}.guards"),
                result=_parse_result(raw.get("result", "none"), f"{where}.result"),
            )
        )

    return AppModel(
        app=AppInfo(
            name=str(_req(app, "name", "app")),
            version=str(_req(app, "version", "app")),
            package=str(_req(app, "package", "app")),
        ),
        manifest=Manifest(
            tuple(
                ActivityDecl(
                    name=str(_req(a, "name", f"manifest.activities[{i}]")),
                    rotatable=_bool(a, "rotatable", f"manifest.activities[{i}]"),
                    is_main=_bool(a, "is_main", f"manifest.activities[{i}]"),
                )
                for i, a in enumerate(activities)
            )
        ),
        call_graph=_parse_call_graph(data.get("call_graph")),
        windows=tuple(_parse_window(w, f"windows[{i}]") for i, w in enumerate(windows)),
        behavior=tuple(rules),
        initial_window=str(_req(data, "initial_window", "top level")),
        device=_parse_device(data.get("device")),
    )


def parse_app_model(text: str) -> AppModel:
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ModelParseError(f"malformed JSON: {exc}") from exc
    model = model_from_dict(data)
    violations = validate(model)
    if violations:
        raise ModelValidationError(violations)
    return model


def load_app_model(path: Union[str, Path]) -> AppModel:
    """Load and validate an app-model file.

    Raises ModelParseError for malformed documents and ModelValidationError
    (message = first violation) when an invariant does not hold.
    """
    return parse_app_model(Path(path).read_text(encoding="utf-8"))


# ---------------------------------------------------------------------------
# Serialization


def _result_to_json(result: Result) -> Any:
    if result.kind == "none":
        return "none"
    if result.kind in ("navigate", "open_dialog"):
        return {result.kind: result.window}
    return {result.kind: result.signature.to_dict()}


def _guards_to_json(g: Guards) -> Optional[dict[str, Any]]:
    out: dict[str, Any] = {}
    if g.network is not None:
        out["network"] = "on" if g.network else "off"
    if g.orientation is not None:
        out["orientation"] = g.orientation
    if g.gps_invalid is not None:
        out["gps_invalid"] = g.gps_invalid
    if g.sensor_adverse is not None:
        out["sensor_adverse"] = g.sensor_adverse.value
    if g.text_matches:
        out["text_matches"] = dict(g.text_matches)
    return out or None


def model_to_dict(model: AppModel) -> dict[str, Any]:
    cg = model.call_graph
    rules = []
    for rule in model.behavior:
        trig: dict[str, Any] = {"window": rule.trigger.window, "action": rule.trigger.action.value}
        if rule.trigger.component is not None:
            trig["component"] = rule.trigger.component
        entry: dict[str, Any] = {"trigger": trig}
        guards = _guards_to_json(rule.guards)
        if guards:
            entry["guards"] = guards
        entry["result"] = _result_to_json(rule.result)
        rules.append(entry)

    def comp_json(c: ComponentModel) -> dict[str, Any]:
        out: dict[str, Any] = {
            "id": c.id,
            "widget_type": c.widget_type,
            "text": c.text,
            "bounds": list(c.bounds),
            "clickable": c.clickable,
            "long_clickable": c.long_clickable,
            "is_text_field": c.is_text_field,
        }
        if c.keyboard is not None:
            out["keyboard"] = c.keyboard.value
        return out

    return {
        "app": {"name": model.app.name, "version": model.app.version, "package": model.app.package},
        "manifest": {
            "activities": [
                {"name": a.name, "rotatable": a.rotatable, "is_main": a.is_main} for a in model.manifest.activities
            ]
        },
        "call_graph": {
            "methods": sorted(cg.methods),
            "edges": [list(e) for e in sorted(cg.edges)],
            "contextual_calls": [
                {"method": c.method, "feature": c.feature.value}
                for c in sorted(cg.contextual_calls, key=lambda c: (c.method, c.feature.value))
            ],
            "activity_entries": {k: sorted(v) for k, v in sorted(cg.activity_entries.items())},
        },
        "windows": [
            {
                "id": w.id,
                "kind": w.kind.value,
                "activity": w.activity_name,
                "size": list(w.size),
                "components": [comp_json(c) for c in w.components],
            }
            for w in model.windows
        ],
        "behavior": rules,
        "initial_window": model.initial_window,
        "device": {
            "name": model.device.name,
            "os_version": model.device.os_version,
            "resolution": list(model.device.resolution),
            "decoy_period": model.device.decoy_period,
        },
    }


def dump_app_model(model: AppModel) -> str:
    return json.dumps(model_to_dict(model), indent=2) + "\n"


# ---------------------------------------------------------------------------
# Validation


def validate(model: AppModel) -> list[str]:
    """Return a description of every violated invariant (empty when valid).

    Total: never raises, whatever the model contents.
    """
    out: list[str] = []
    try:
        _validate(model, out)
    except Exception as exc:  # malformed field types built by hand
        out.append(f"AppModel: unexpected structure ({type(exc).__name__}: {exc})")
    return out


def _validate(model: AppModel, out: list[str]) -> None:
    names = [a.name for a in model.manifest.activities]
    seen: set[str] = set()
    for n in names:
        if n in seen:
            out.append(f"Manifest.activities: duplicate activity name {n!r}")
        seen.add(n)
    mains = [a.name for a in model.manifest.activities if a.is_main]
    if len(mains) != 1:
        out.append(f"Manifest.activities: expected exactly one main activity, found {len(mains)}")

    cg = model.call_graph
    for caller, callee in sorted(cg.edges):
        for m in (caller, callee):
            if m not in cg.methods:
                out.append(f"CallGraph.edges: unknown method {m!r}")
    for call in sorted(cg.contextual_calls, key=lambda c: (c.method, c.feature.value)):
        if call.method not in cg.methods:
            out.append(f"CallGraph.contextual_calls: unknown method {call.method!r}")
    for act, methods in sorted(cg.activity_entries.items()):
        if act not in seen:
            out.append(f"CallGraph.activity_entries: unknown activity {act!r}")
        for m in sorted(methods):
            if m not in cg.methods:
                out.append(f"CallGraph.activity_entries: unknown method {m!r} for activity {act!r}")

    res_w, res_h = model.device.resolution
    if res_w <= 0 or res_h <= 0:
        out.append(f"DeviceProfile.resolution: must be positive, got {model.device.resolution}")
    if model.device.decoy_period < 0:
        out.append("DeviceProfile.decoy_period: must be >= 0")

    win_ids: set[str] = set()
    activity_windows: set[str] = set()
    for win in model.windows:
        if win.id in win_ids:
            out.append(f"WindowModel.id: duplicate window id {win.id!r}")
        win_ids.add(win.id)
        if win.activity_name not in seen:
            out.append(f"WindowModel.activity_name: window {win.id!r} names unknown activity {win.activity_name!r}")
        if win.kind == WindowKind.ACTIVITY:
            if win.activity_name in activity_windows:
                out.append(f"WindowModel.activity_name: activity {win.activity_name!r} has more than one window")
            activity_windows.add(win.activity_name)
        w, h = win.size
        if w <= 0 or h <= 0:
            out.append(f"WindowModel.size: window {win.id!r} has non-positive size {win.size}")
        elif w > res_w or h > res_h:
            out.append(f"WindowModel.size: window {win.id!r} exceeds the device resolution")
        comp_ids: set[str] = set()
        for comp in win.components:
            if comp.id in comp_ids:
                out.append(f"ComponentModel.id: duplicate component id {comp.id!r} in window {win.id!r}")
            comp_ids.add(comp.id)
            x1, y1, x2, y2 = comp.bounds
            if x1 > x2 or y1 > y2:
                out.append(f"ComponentModel.bounds: component {comp.id!r} in window {win.id!r} has inverted bounds")
            elif x1 < 0 or y1 < 0 or x2 > w or y2 > h:
                out.append(f"ComponentModel.bounds: component {comp.id!r} in window {win.id!r} lies outside the window")
            if (comp.keyboard is not None) != comp.is_text_field:
                out.append(
                    f"ComponentModel.keyboard: component {comp.id!r} in window {win.id!r} "
                    "must carry a keyboard if and only if it is a text field"
                )

    initial = model.window(model.initial_window)
    if initial is None:
        out.append(f"AppModel.initial_window: unknown initial window {model.initial_window!r}")
    elif initial.kind != WindowKind.ACTIVITY:
        out.append(f"AppModel.initial_window: initial window {model.initial_window!r} is not an activity")

    for i, rule in enumerate(model.behavior):
        where = f"BehaviorRule[{i}]"
        trig = rule.trigger
        win = model.window(trig.window)
        if win is None:
            out.append(f"{where}.trigger.window: unknown window {trig.window!r}")
            continue
        if trig.action in COMPONENT_ACTIONS:
            if trig.component is None:
                out.append(f"{where}.trigger.component: {trig.action.value} requires a component")
            elif win.component(trig.component) is None:
                out.append(f"{where}.trigger.component: unknown component {trig.component!r} in window {trig.window!r}")
        elif trig.component is not None:
            out.append(f"{where}.trigger.component: {trig.action.value} takes no component")
        g = rule.guards
        if g.orientation is not None and g.orientation not in ("portrait", "landscape"):
            out.append(f"{where}.guards.orientation: invalid orientation {g.orientation!r}")
        for comp_id, pattern in sorted(g.text_matches.items()):
            comp = win.component(comp_id)
            if comp is None or not comp.is_text_field:
                out.append(f"{where}.guards.text_matches: {comp_id!r} is not a text field of window {trig.window!r}")
            try:
                re.compile(pattern)
            except re.error as exc:
                out.append(f"{where}.guards.text_matches: regex for {comp_id!r} does not compile ({exc})")
        res = rule.result
        if res.kind not in RESULT_KINDS:
            out.append(f"{where}.result: unknown result kind {res.kind!r}")
        elif res.kind in ("navigate", "open_dialog"):
            target = model.window(res.window or "")
            if target is None:
                out.append(f"{where}.result: unknown target window {res.window!r}")
            elif res.kind == "navigate" and target.kind != WindowKind.ACTIVITY:
                out.append(f"{where}.result: navigate target {res.window!r} is not an activity")
            elif res.kind == "open_dialog":
                if target.kind != WindowKind.DIALOG:
                    out.append(f"{where}.result: open_dialog target {res.window!r} is not a dialog")
                elif target.activity_name != win.activity_name:
                    out.append(
                        f"{where}.result: dialog {res.window!r} belongs to activity {target.activity_name!r}, "
                        f"not {win.activity_name!r}"
                    )
        elif res.kind in ("crash", "exception"):
            sig = res.signature
            if sig is None or not sig.stack:
                out.append(f"{where}.result: crash signature has an empty stack")
            elif not sig.stack[0].startswith(model.app.package + "."):
                out.append(f"{where}.result: first frame {sig.stack[0]!r} is outside package {model.app.package!r}")
