"""Replay scripts: adb-input-style command lists with contextual-state markers."""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Optional, Union

from .appmodel import ActionKind, ContextFeature, CrashSignature
from .explorer import detect_crash
from .simdevice import DeviceInterface, DeviceObservation, Event, Orientation
from .trace import ExecutionTrace, StepAction

SCRIPT_MAGIC = "# crashscope-script v1"
LONG_PRESS_MS = 800


class ScriptError(Exception):
    pass


class ReplayError(Exception):
    pass


# -- lines --------------------------------------------------------------------


@dataclass(frozen=True)
class Launch:
    def render(self) -> str:
        return "launch"


@dataclass(frozen=True)
class Tap:
    x: int
    y: int

    def render(self) -> str:
        return f"input tap {self.x} {self.y}"


@dataclass(frozen=True)
class LongTap:
    x: int
    y: int
    duration_ms: int = LONG_PRESS_MS

    def render(self) -> str:
        return f"input swipe {self.x} {self.y} {self.x} {self.y} {self.duration_ms}"


@dataclass(frozen=True)
class Text:
    text: str

    def render(self) -> str:
        return f"input text {escape_text(self.text)}"


@dataclass(frozen=True)
class Back:
    def render(self) -> str:
        return "input keyevent BACK"


@dataclass(frozen=True)
class Sleep:
    ms: int

    def render(self) -> str:
        return f"sleep {self.ms}"


@dataclass(frozen=True)
class Marker:
    """Contextual-state change: Wifi_OFF, Wifi_ON, GPS_INVALID, SENSOR_ADVERSE <f>, ROTATE <o>."""

    name: str
    arg: Optional[str] = None

    def render(self) -> str:
        return f"<{self.name}>" if self.arg is None else f"<{self.name} {self.arg}>"


ScriptLine = Union[Launch, Tap, LongTap, Text, Back, Sleep, Marker]

_MARKERS = {"Wifi_OFF": None, "Wifi_ON": None, "GPS_INVALID": None, "SENSOR_ADVERSE": "feature", "ROTATE": "orientation"}


@dataclass(frozen=True)
class ReplayScript:
    app: str
    strategy: str
    seed: int
    lines: tuple[ScriptLine, ...]

    def serialize(self) -> str:
        head = [SCRIPT_MAGIC, f"# app: {self.app}", f"# strategy: {self.strategy}", f"# seed: {self.seed}"]
        return "\n".join(head + [line.render() for line in self.lines]) + "\n"


# -- text escaping ------------------------------------------------------------


def escape_text(text: str) -> str:
    """adb ``input text`` escaping: space -> %s, backslash-escape quotes, ``\\`` and ``%``."""
    if "\n" in text or "\r" in text:
        raise ScriptError("newlines cannot be typed")
    out = []
    for ch in text:
        if ch == " ":
            out.append("%s")
        elif ch in "\"'\\%":
            out.append("\\" + ch)
        else:
            out.append(ch)
    return "".join(out)


def unescape_text(raw: str) -> str:
    out = []
    i = 0
    while i < len(raw):
        ch = raw[i]
        if ch == "\\" and i + 1 < len(raw):
            out.append(raw[i + 1])
            i += 2
        elif raw.startswith("%s", i):
            out.append(" ")
            i += 2
        else:
            out.append(ch)
            i += 1
    return "".join(out)


# -- generation ---------------------------------------------------------------


def component_center(bounds: tuple[int, int, int, int]) -> tuple[int, int]:
    x1, y1, x2, y2 = bounds
    return (x1 + x2) // 2, (y1 + y2) // 2


def generate_script(trace: ExecutionTrace) -> ReplayScript:
    if not trace.crashed:
        raise ScriptError("scripts are generated for crashed traces only")
    lines: list[ScriptLine] = [Launch()]
    for step in trace.steps:
        a = step.action
        if a == StepAction.WIFI_OFF:
            lines.append(Marker("Wifi_OFF"))
        elif a == StepAction.WIFI_ON:
            lines.append(Marker("Wifi_ON"))
        elif a == StepAction.GPS_INVALID:
            lines.append(Marker("GPS_INVALID"))
        elif a == StepAction.SENSOR_ADVERSE:
            lines.append(Marker("SENSOR_ADVERSE", step.feature.value))
        elif a == StepAction.ROTATE_LANDSCAPE:
            lines.append(Marker("ROTATE", "landscape"))
        elif a == StepAction.ROTATE_PORTRAIT:
            lines.append(Marker("ROTATE", "portrait"))
        elif a == StepAction.BACK:
            lines.append(Back())
        else:
            x, y = component_center(step.component.bounds)
            if a == StepAction.LONG_TAP:
                lines.append(LongTap(x, y))
            else:
                lines.append(Tap(x, y))
                if a == StepAction.TYPE_TEXT:
                    lines.append(Text(step.typed_text))
    return ReplayScript(trace.meta.app_name, trace.meta.strategy, trace.meta.seed, tuple(lines))


# -- parsing ------------------------------------------------------------------

_TAP = re.compile(r"input tap (\d+) (\d+)")
_SWIPE = re.compile(r"input swipe (\d+) (\d+) (\d+) (\d+) (\d+)")
_MARKER = re.compile(r"<(\w+)(?: (\w+))?>")


def parse_script(text: str) -> ReplayScript:
    raw = text.splitlines()
    if not raw or raw[0] != SCRIPT_MAGIC:
        raise ScriptError("missing script header")
    header: dict[str, str] = {}
    lines: list[ScriptLine] = []
    for n, line in enumerate(raw[1:], start=2):
        if line.startswith("# "):
            key, _, value = line[2:].partition(": ")
            header[key] = value
            continue
        if not line.strip():
            continue
        lines.append(_parse_line(line, n))
    try:
        return ReplayScript(header["app"], header["strategy"], int(header["seed"]), tuple(lines))
    except (KeyError, ValueError) as exc:
        raise ScriptError(f"incomplete script header: {exc}") from None


def _parse_line(line: str, n: int) -> ScriptLine:
    if line == "launch":
        return Launch()
    if line == "input keyevent BACK":
        return Back()
    if line.startswith("input text "):
        return Text(unescape_text(line[len("input text "):]))
    if m := _TAP.fullmatch(line):
        return Tap(int(m[1]), int(m[2]))
    if m := _SWIPE.fullmatch(line):
        x1, y1, x2, y2, ms = map(int, m.groups())
        if (x1, y1) != (x2, y2):
            raise ScriptError(f"line {n}: swipes other than long presses are not supported")
        return LongTap(x1, y1, ms)
    if line.startswith("sleep "):
        return Sleep(int(line[6:]))
    if m := _MARKER.fullmatch(line):
        name, arg = m[1], m[2]
        if name not in _MARKERS or (_MARKERS[name] is None) != (arg is None):
            raise ScriptError(f"line {n}: unknown marker {line!r}")
        if name == "SENSOR_ADVERSE":
            ContextFeature(arg)
        if name == "ROTATE":
            Orientation(arg)
        return Marker(name, arg)
    raise ScriptError(f"line {n}: cannot parse {line!r}")


# -- replaying ----------------------------------------------------------------


@dataclass(frozen=True)
class ReplayOutcome:
    reproduced: bool
    signature: Optional[CrashSignature]
    crash_line: Optional[int] = None  # 1-based index into script.lines
    noop_lines: tuple[int, ...] = ()


def replay(script: ReplayScript, device: DeviceInterface) -> ReplayOutcome:
    """Execute the script in order and report whether the app crashed."""
    noops = []
    for n, line in enumerate(script.lines, start=1):
        obs = _execute(line, device)
        if obs is not None and obs.hit is None and isinstance(line, (Tap, LongTap)):
            noops.append(n)
        if obs is not None and obs.crash_dialog is not None:
            return ReplayOutcome(True, detect_crash(obs, device.app_pid), n, tuple(noops))
    return ReplayOutcome(False, None, None, tuple(noops))


def _execute(line: ScriptLine, device: DeviceInterface) -> Optional[DeviceObservation]:
    if isinstance(line, Launch):
        device.launch_app()
        return None
    if isinstance(line, Sleep):
        return None
    if isinstance(line, Tap):
        return device.perform(Event(ActionKind.TAP, point=(line.x, line.y)))
    if isinstance(line, LongTap):
        return device.perform(Event(ActionKind.LONG_TAP, point=(line.x, line.y)))
    if isinstance(line, Text):
        return device.perform(Event(ActionKind.TYPE_TEXT, text=line.text))
    if isinstance(line, Back):
        return device.press_back()
    if not device.supports_context:
        raise ReplayError(f"device cannot apply {line.render()}")
    if line.name == "Wifi_OFF":
        return device.set_network(False)
    if line.name == "Wifi_ON":
        return device.set_network(True)
    if line.name == "GPS_INVALID":
        return device.set_gps_invalid()
    if line.name == "SENSOR_ADVERSE":
        return device.set_sensor_adverse(ContextFeature(line.arg))
    return device.rotate(Orientation(line.arg))
