"""Simulated device: an emulator-plus-adb stand-in driven by an AppModel."""

from __future__ import annotations

import abc
import re
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Optional, Union
from xml.sax.saxutils import escape, quoteattr

from .appmodel import (
    ActionKind,
    AppModel,
    ComponentModel,
    ContextFeature,
    CrashSignature,
    Guards,
    KeyboardType,
    SENSOR_FEATURES,
    WindowKind,
    WindowModel,
)

INVALID_GPS = (999.0, 999.0)
DEFAULT_GPS = (37.2710, -76.7075)

ADVERSE_SENSOR_VALUES: dict[ContextFeature, tuple[float, ...]] = {
    ContextFeature.ACCELEROMETER: (1e6, 1e6, 1e6),  # m/s^2
    ContextFeature.MAGNETOMETER: (1e6, 1e6, 1e6),  # uT
    ContextFeature.TEMPERATURE: (1e6,),  # degC
}
NORMAL_SENSOR_VALUES: dict[ContextFeature, tuple[float, ...]] = {
    ContextFeature.ACCELEROMETER: (0.0, 9.81, 0.0),
    ContextFeature.MAGNETOMETER: (22.0, -5.0, -43.0),
    ContextFeature.TEMPERATURE: (21.0,),
}
# Readings whose magnitude exceeds these are physically implausible.
SENSOR_LIMITS = {
    ContextFeature.ACCELEROMETER: 200.0,
    ContextFeature.MAGNETOMETER: 2000.0,
    ContextFeature.TEMPERATURE: 150.0,
}

FATAL_MARKER = "FATAL EXCEPTION"
EXCEPTION_MARKER = "EXCEPTION"
FIRST_PID = 4100
SYSTEM_PID = 612


class DeviceError(Exception):
    pass


class StaleTargetError(DeviceError):
    """The event names a component that is not on the foreground window."""


class KeyboardError(DeviceError):
    pass


class Orientation(str, Enum):
    PORTRAIT = "portrait"
    LANDSCAPE = "landscape"


@dataclass(frozen=True)
class GpsFix:
    lat: float
    lon: float
    invalid: bool = False


@dataclass(frozen=True)
class ContextualState:
    network: bool = True
    gps: GpsFix = GpsFix(*DEFAULT_GPS)
    sensor_adverse: frozenset[ContextFeature] = frozenset()
    orientation: Orientation = Orientation.PORTRAIT

    def to_dict(self) -> dict:
        return {
            "network": "on" if self.network else "off",
            "gps": {"lat": self.gps.lat, "lon": self.gps.lon, "invalid": self.gps.invalid},
            "sensor_adverse": sorted(f.value for f in self.sensor_adverse),
            "orientation": self.orientation.value,
        }

    @classmethod
    def from_dict(cls, data: dict) -> ContextualState:
        gps = data["gps"]
        return cls(
            network=data["network"] == "on",
            gps=GpsFix(float(gps["lat"]), float(gps["lon"]), bool(gps["invalid"])),
            sensor_adverse=frozenset(ContextFeature(f) for f in data["sensor_adverse"]),
            orientation=Orientation(data["orientation"]),
        )


@dataclass(frozen=True)
class Event:
    kind: ActionKind
    target: Optional[str] = None
    point: Optional[tuple[int, int]] = None
    text: Optional[str] = None


@dataclass(frozen=True)
class LogEntry:
    pid: int
    severity: str
    marker: str
    payload: Union[CrashSignature, str]


@dataclass(frozen=True)
class CrashDialog:
    dialog_text: str


@dataclass(frozen=True)
class DeviceObservation:
    crash_dialog: Optional[CrashDialog]
    log_entries: tuple[LogEntry, ...]
    foreground_window: Optional[str]  # None for dialogs and when the app is not running
    window_size: Optional[tuple[int, int]]
    hit: Optional[str] = None  # component resolved for the event, if any

    def merged(self, later: DeviceObservation) -> DeviceObservation:
        return replace(later, log_entries=self.log_entries + later.log_entries)


@dataclass(frozen=True)
class ComponentSnapshot:
    id: str
    widget_type: str
    text: str
    bounds: tuple[int, int, int, int]
    clickable: bool
    long_clickable: bool
    is_text_field: bool


@dataclass(frozen=True)
class HierarchyDump:
    window: Optional[str]  # dialogs carry no stable name
    activity: str
    kind: WindowKind
    size: tuple[int, int]
    components: tuple[ComponentSnapshot, ...]

    def find(self, component_id: str) -> Optional[ComponentSnapshot]:
        for comp in self.components:
            if comp.id == component_id:
                return comp
        return None


class DeviceInterface(abc.ABC):
    """What the exploration engine and the replayer need from a device."""

    supports_context = True

    @abc.abstractmethod
    def reset(self) -> None: ...

    @abc.abstractmethod
    def launch_app(self) -> HierarchyDump: ...

    @abc.abstractmethod
    def current_hierarchy(self) -> Optional[HierarchyDump]: ...

    @abc.abstractmethod
    def perform(self, event: Event) -> DeviceObservation: ...

    @abc.abstractmethod
    def keyboard_type_of(self, component_id: str) -> KeyboardType: ...

    @abc.abstractmethod
    def press_back(self) -> DeviceObservation: ...

    @abc.abstractmethod
    def set_network(self, on: bool) -> DeviceObservation: ...

    @abc.abstractmethod
    def set_gps(self, lat: float, lon: float) -> DeviceObservation: ...

    @abc.abstractmethod
    def set_sensor(self, feature: ContextFeature, value: tuple[float, ...]) -> DeviceObservation: ...

    @abc.abstractmethod
    def rotate(self, orientation: Orientation) -> DeviceObservation: ...

    @abc.abstractmethod
    def crash_dialog(self) -> Optional[CrashDialog]: ...

    @abc.abstractmethod
    def drain_log(self) -> list[LogEntry]: ...

    @abc.abstractmethod
    def screenshot(self) -> str: ...

    @property
    @abc.abstractmethod
    def app_pid(self) -> int: ...

    @property
    @abc.abstractmethod
    def context(self) -> ContextualState: ...

    def set_gps_invalid(self) -> DeviceObservation:
        return self.set_gps(*INVALID_GPS)

    def set_sensor_adverse(self, feature: ContextFeature) -> DeviceObservation:
        return self.set_sensor(feature, ADVERSE_SENSOR_VALUES[feature])


def _snapshot(comp: ComponentModel) -> ComponentSnapshot:
    return ComponentSnapshot(
        comp.id, comp.widget_type, comp.text, comp.bounds, comp.clickable, comp.long_clickable, comp.is_text_field
    )


class SimDevice(DeviceInterface):
    """Single-threaded simulator of one device running one app model."""

    def __init__(self, model: AppModel):
        self.model = model
        self.reset()

    def reset(self) -> None:
        self._context = ContextualState()
        self._sensor_values = dict(NORMAL_SENSOR_VALUES)
        self._running = False
        self._stack: list[str] = []
        self._crash: Optional[CrashDialog] = None
        self._log: list[LogEntry] = []
        self._typed: dict[tuple[str, str], str] = {}
        self._focus: Optional[str] = None
        self._keyboard_shown = False
        self._pid = FIRST_PID - 1
        self._events = 0

    # -- state accessors ---------------------------------------------------

    @property
    def app_pid(self) -> int:
        return self._pid

    @property
    def context(self) -> ContextualState:
        return self._context

    @property
    def running(self) -> bool:
        return self._running

    @property
    def back_stack(self) -> list[str]:
        return list(self._stack)

    def _foreground(self) -> Optional[WindowModel]:
        if not self._running or not self._stack:
            return None
        return self.model.window(self._stack[-1])

    def crash_dialog(self) -> Optional[CrashDialog]:
        return self._crash

    def drain_log(self) -> list[LogEntry]:
        entries, self._log = self._log, []
        return entries

    def _observe(self, hit: Optional[str] = None) -> DeviceObservation:
        win = self._foreground()
        return DeviceObservation(
            crash_dialog=self._crash,
            log_entries=tuple(self.drain_log()),
            foreground_window=win.id if win is not None and win.kind == WindowKind.ACTIVITY else None,
            window_size=win.size if win is not None else None,
            hit=hit,
        )

    def current_hierarchy(self) -> Optional[HierarchyDump]:
        win = self._foreground()
        if win is None:
            return None
        return HierarchyDump(
            window=win.id if win.kind == WindowKind.ACTIVITY else None,
            activity=win.activity_name,
            kind=win.kind,
            size=win.size,
            components=tuple(_snapshot(c) for c in win.components),
        )

    # -- lifecycle ---------------------------------------------------------

    def launch_app(self) -> HierarchyDump:
        self._pid += 1
        self._running = True
        self._crash = None
        self._stack = [self.model.initial_window]
        self._typed = {}
        self._focus = None
        self._keyboard_shown = False
        return self.current_hierarchy()

    def _change_window(self) -> None:
        self._focus = None
        self._keyboard_shown = False

    def press_back(self) -> DeviceObservation:
        if self._crash is not None:
            self._crash = None
            self._running = False
            self._stack = []
        elif self._running:
            self._stack.pop()
            if not self._stack:
                self._running = False
            self._change_window()
        self._tick()
        return self._observe()

    # -- events ------------------------------------------------------------

    def _tick(self) -> None:
        self._events += 1
        period = self.model.device.decoy_period
        if period and self._events % period == 0:
            # Alternate between a system process and the previous app process.
            pid = SYSTEM_PID if (self._events // period) % 2 else self._pid - 1
            self._log.append(
                LogEntry(
                    pid,
                    "E",
                    FATAL_MARKER,
                    CrashSignature(
                        "java.lang.RuntimeException",
                        "decoy from foreign process",
                        ("com.android.systemui.statusbar.PhoneStatusBar.update(PhoneStatusBar.java:311)",),
                    ),
                )
            )

    def _guards_hold(self, guards: Guards, window_id: str) -> bool:
        ctx = self._context
        if guards.network is not None and guards.network != ctx.network:
            return False
        if guards.orientation is not None and guards.orientation != ctx.orientation.value:
            return False
        if guards.gps_invalid is not None and guards.gps_invalid != ctx.gps.invalid:
            return False
        if guards.sensor_adverse is not None and guards.sensor_adverse not in ctx.sensor_adverse:
            return False
        for comp_id, pattern in guards.text_matches.items():
            typed = self._typed.get((window_id, comp_id))
            if typed is None or re.search(pattern, typed) is None:
                return False
        return True

    def _dispatch(self, window: WindowModel, component: Optional[str], action: ActionKind) -> None:
        idx = self.model.match_rule_index(
            window.id, component, action, lambda g: self._guards_hold(g, window.id)
        )
        if idx is None:
            return
        result = self.model.behavior[idx].result
        if result.kind in ("navigate", "open_dialog"):
            self._stack.append(result.window)
            self._change_window()
        elif result.kind == "crash":
            self._crash = CrashDialog(f"{self.model.app.name} has stopped")
            self._running = False
            self._log.append(LogEntry(self._pid, "E", FATAL_MARKER, result.signature))
        elif result.kind == "exception":
            self._log.append(LogEntry(self._pid, "W", EXCEPTION_MARKER, result.signature))

    def _hit_test(self, window: WindowModel, point: tuple[int, int]) -> Optional[ComponentModel]:
        x, y = point
        hit = None
        for comp in window.components:  # later components are drawn on top
            x1, y1, x2, y2 = comp.bounds
            if x1 <= x <= x2 and y1 <= y <= y2:
                hit = comp
        return hit

    def perform(self, event: Event) -> DeviceObservation:
        if event.kind == ActionKind.BACK:
            return self.press_back()
        if event.kind == ActionKind.ROTATE:
            other = Orientation.LANDSCAPE if self._context.orientation == Orientation.PORTRAIT else Orientation.PORTRAIT
            return self.rotate(other)
        win = self._foreground()
        if win is None:
            raise DeviceError("app not running")

        if event.kind == ActionKind.TYPE_TEXT:
            if event.text is None or "\n" in event.text:
                raise DeviceError("type_text needs single-line text")
            target = event.target if event.target is not None else self._focus
            if target is None:
                raise DeviceError("no focused text field")
            comp = win.component(target)
            if comp is None:
                raise StaleTargetError(f"stale target {target!r}")
            if not comp.is_text_field:
                raise DeviceError(f"{target!r} is not a text field")
            self._focus = comp.id
            self._typed[(win.id, comp.id)] = event.text
            self._tick()
            self._dispatch(win, comp.id, ActionKind.TYPE_TEXT)
            return self._observe(hit=comp.id)

        if event.target is not None:
            comp = win.component(event.target)
            if comp is None:
                raise StaleTargetError(f"stale target {event.target!r}")
        elif event.point is not None:
            comp = self._hit_test(win, event.point)
            if comp is None:
                self._tick()
                return self._observe()
        else:
            raise DeviceError(f"{event.kind.value} needs a target or a point")

        self._tick()
        self._focus = comp.id if comp.is_text_field else None
        self._keyboard_shown = comp.is_text_field
        self._dispatch(win, comp.id, event.kind)
        return self._observe(hit=comp.id)

    def keyboard_type_of(self, component_id: str) -> KeyboardType:
        win = self._foreground()
        if win is None:
            raise DeviceError("app not running")
        comp = win.component(component_id)
        if comp is None:
            raise StaleTargetError(f"stale target {component_id!r}")
        if not comp.is_text_field:
            raise KeyboardError(f"{component_id!r} is not a text field")
        if self._focus != component_id or not self._keyboard_shown:
            raise KeyboardError("keyboard not shown")
        return comp.keyboard

    # -- context (telnet-like) ---------------------------------------------

    def set_network(self, on: bool) -> DeviceObservation:
        self._context = replace(self._context, network=on)
        return self._observe()

    def set_gps(self, lat: float, lon: float) -> DeviceObservation:
        if -90.0 <= lat <= 90.0 and -180.0 <= lon <= 180.0:
            fix = GpsFix(float(lat), float(lon))
        else:
            fix = GpsFix(*INVALID_GPS, invalid=True)
        self._context = replace(self._context, gps=fix)
        return self._observe()

    def set_sensor(self, feature: ContextFeature, value: tuple[float, ...]) -> DeviceObservation:
        if feature not in SENSOR_FEATURES:
            raise DeviceError(f"{feature.value} is not a settable sensor")
        self._sensor_values[feature] = tuple(value)
        adverse = set(self._context.sensor_adverse)
        if max(abs(v) for v in value) > SENSOR_LIMITS[feature]:
            adverse.add(feature)
        else:
            adverse.discard(feature)
        self._context = replace(self._context, sensor_adverse=frozenset(adverse))
        return self._observe()

    def rotate(self, orientation: Orientation) -> DeviceObservation:
        win = self._foreground()
        if win is None:
            self._context = replace(self._context, orientation=orientation)
            return self._observe()
        decl = self.model.manifest.activity(win.activity_name)
        if decl is None or not decl.rotatable or orientation == self._context.orientation:
            return self._observe()
        self._context = replace(self._context, orientation=orientation)
        self._tick()
        self._dispatch(win, None, ActionKind.ROTATE)
        return self._observe()

    # -- rendering ---------------------------------------------------------

    def screenshot(self) -> str:
        return render_screen(self.model, self._foreground(), self._crash, self._typed)


_FILLS = {"button": "#dfe6f5", "edit text": "#ffffff", "text": "#f4f4f4"}


def render_screen(
    model: AppModel,
    window: Optional[WindowModel],
    crash: Optional[CrashDialog] = None,
    typed: Optional[dict[tuple[str, str], str]] = None,
) -> str:
    """Deterministic SVG rendering: window frame, component boxes, labels."""
    typed = typed or {}
    res_w, res_h = model.device.resolution
    lines = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{res_w // 4}" height="{res_h // 4}" '
        f'viewBox="0 0 {res_w} {res_h}" font-family="sans-serif">',
        f'<rect x="0" y="0" width="{res_w}" height="{res_h}" fill="#202124"/>',
    ]
    if window is not None:
        w, h = window.size
        lines.append(f'<rect x="0" y="0" width="{w}" height="{h}" fill="#fafafa" stroke="#5f6368" stroke-width="4"/>')
        lines.append(f'<text x="24" y="56" font-size="40" fill="#5f6368">{escape(window.activity_name)}</text>')
        for comp in window.components:
            x1, y1, x2, y2 = comp.bounds
            fill = _FILLS.get(comp.widget_type, "#eeeeee")
            lines.append(
                f'<rect x="{x1}" y="{y1}" width="{x2 - x1}" height="{y2 - y1}" '
                f'fill="{fill}" stroke="#9aa0a6" stroke-width="2" data-id={quoteattr(comp.id)}/>'
            )
            label = typed.get((window.id, comp.id), comp.text) or f"[{comp.widget_type}]"
            lines.append(
                f'<text x="{(x1 + x2) // 2}" y="{(y1 + y2) // 2 + 12}" font-size="36" '
                f'text-anchor="middle" fill="#202124">{escape(label)}</text>'
            )
    if crash is not None:
        lines.append(
            f'<rect x="{res_w // 10}" y="{res_h * 2 // 5}" width="{res_w * 4 // 5}" height="{res_h // 5}" '
            'fill="#ffffff" stroke="#d93025" stroke-width="6"/>'
        )
        lines.append(
            f'<text x="{res_w // 2}" y="{res_h // 2}" font-size="48" text-anchor="middle" '
            f'fill="#d93025">{escape(crash.dialog_text)}</text>'
        )
    lines.append("</svg>")
    return "\n".join(lines) + "\n"
