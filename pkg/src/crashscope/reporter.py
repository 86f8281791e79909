"""Natural-language crash reports rendered as self-contained HTML."""

from __future__ import annotations

import html
import logging
from dataclasses import dataclass
from typing import Mapping, Optional

from .appmodel import ContextFeature, CrashSignature
from .simdevice import ContextualState, Orientation
from .trace import ExecutionStep, ExecutionTrace, StepAction
from .tracestore import trace_file_name

log = logging.getLogger(__name__)

_ROWS = ("top", "", "bottom")
_COLS = ("left", "", "right")


class ReportError(Exception):
    pass


def relative_location(bounds: tuple[int, int, int, int], size: tuple[int, int]) -> str:
    """Cell of a 3x3 grid over the window that holds the component's center.

    Centers lying on a grid line belong to the upper/left cell.
    """
    x1, y1, x2, y2 = bounds
    w, h = size
    cx2, cy2 = x1 + x2, y1 + y2  # twice the center, keeps the arithmetic exact

    def cell(c2: int, extent: int) -> int:
        # smallest k with c <= (k + 1) * extent / 3
        return min(2, max(0, -(-3 * c2 // (2 * extent)) - 1))

    row, col = _ROWS[cell(cy2, h)], _COLS[cell(cx2, w)]
    if row and col:
        return f"{row} {col}"
    return row or col or "center"


_SENSOR_NAMES = {
    ContextFeature.ACCELEROMETER: "accelerometer",
    ContextFeature.MAGNETOMETER: "magnetometer",
    ContextFeature.TEMPERATURE: "temperature sensor",
}

_FIXED_SENTENCES = {
    StepAction.WIFI_OFF: "Disable the network connection.",
    StepAction.WIFI_ON: "Enable the network connection.",
    StepAction.GPS_INVALID: "Set the GPS to an invalid location.",
    StepAction.ROTATE_LANDSCAPE: "Rotate the device to landscape.",
    StepAction.ROTATE_PORTRAIT: "Rotate the device to portrait.",
    StepAction.BACK: "Press the back button.",
}


def _component_phrase(text: str, widget_type: str) -> str:
    return f'"{text}" {widget_type}' if text else widget_type


def render_step_sentence(step: ExecutionStep) -> str:
    if step.action in _FIXED_SENTENCES:
        return _FIXED_SENTENCES[step.action]
    if step.action == StepAction.SENSOR_ADVERSE:
        return f"Set the {_SENSOR_NAMES[step.feature]} to adverse values."
    comp = step.component
    if comp is None or step.window_size is None:
        raise ReportError(f"step {step.index} has no component snapshot")
    where = f"which is located on the {relative_location(comp.bounds, step.window_size)} of the screen."
    phrase = _component_phrase(comp.text, comp.widget_type)
    if step.action == StepAction.TYPE_TEXT:
        return f'Type "{step.typed_text}" on the {phrase}, {where}'
    verb = "Tap" if step.action == StepAction.TAP else "Long-tap"
    return f"{verb} on {phrase}, {where}"


def prune_stack_trace(sig: CrashSignature, package: str) -> CrashSignature:
    prefix = package + "."
    frames = tuple(f for f in sig.stack if f.startswith(prefix))
    if not frames:
        frames = sig.stack[:1]
    return CrashSignature(sig.exception_class, sig.message, frames)


# -- contextual icons ---------------------------------------------------------

# (css class, glyph, legend text)
ICONS = {
    "wifi_on": ("ic-net-on", "W", "Network connection enabled"),
    "wifi_off": ("ic-net-off", "W&#824;", "Network connection disabled"),
    "gps_ok": ("ic-gps-ok", "G", "GPS reports a valid location"),
    "gps_invalid": ("ic-gps-bad", "G!", "GPS set to an invalid location"),
    "accelerometer": ("ic-sensor", "A!", "Accelerometer set to adverse values"),
    "magnetometer": ("ic-sensor", "M!", "Magnetometer set to adverse values"),
    "temperature": ("ic-sensor", "T!", "Temperature sensor set to adverse values"),
    "portrait": ("ic-orient", "P", "Portrait orientation"),
    "landscape": ("ic-orient", "L", "Landscape orientation"),
}


def context_icons(ctx: ContextualState) -> list[str]:
    icons = ["wifi_on" if ctx.network else "wifi_off", "gps_invalid" if ctx.gps.invalid else "gps_ok"]
    icons += [f.value for f in (ContextFeature.ACCELEROMETER, ContextFeature.MAGNETOMETER, ContextFeature.TEMPERATURE)
              if f in ctx.sensor_adverse]
    icons.append(ctx.orientation.value)
    return icons


def _icon_html(name: str) -> str:
    css, glyph, text = ICONS[name]
    return f'<span class="icon {css}" title="{html.escape(text)}">{glyph}</span>'


# -- report model -------------------------------------------------------------


@dataclass(frozen=True)
class ReportStep:
    index: int
    sentence: str
    icons: tuple[str, ...]
    screenshot: Optional[str]
    highlight: Optional[tuple[int, int, int, int]]


@dataclass(frozen=True)
class CrashReport:
    general: dict[str, str]
    steps: tuple[ReportStep, ...]
    pruned_trace: CrashSignature

    @property
    def screen_flow(self) -> list[tuple[Optional[str], Optional[tuple[int, int, int, int]]]]:
        return [(s.screenshot, s.highlight) for s in self.steps]


def build_report(trace: ExecutionTrace) -> CrashReport:
    if not trace.crashed:
        raise ReportError("reports are generated for crashed traces only")
    last = trace.steps[-1]
    res_w, res_h = trace.meta.resolution
    if last.context.orientation == Orientation.LANDSCAPE:
        res_w, res_h = res_h, res_w
    general = {
        "Application": trace.meta.app_name,
        "Version": trace.meta.app_version,
        "Android version": trace.meta.os_version,
        "Device": trace.meta.device_name,
        "Orientation at crash": last.context.orientation.value,
        "Resolution at crash": f"{res_w}x{res_h}",
        "Strategy": trace.meta.strategy,
    }
    steps = tuple(
        ReportStep(
            index=s.index,
            sentence=render_step_sentence(s),
            icons=tuple(context_icons(s.context)),
            screenshot=s.screenshot,
            highlight=None if s.component is None else s.component.bounds,
        )
        for s in trace.steps
    )
    return CrashReport(general, steps, prune_stack_trace(trace.crash_signature, trace.meta.package))


_CSS = """
body{font-family:sans-serif;margin:2em;color:#202124}
h1{font-size:1.6em}h2{border-bottom:1px solid #dadce0;padding-bottom:.2em}
table.general td{padding:.2em 1em .2em 0}
.icon{display:inline-block;min-width:1.6em;padding:0 .2em;margin-right:.2em;border-radius:.3em;
font-size:.8em;text-align:center;color:#fff;background:#5f6368}
.ic-net-off,.ic-gps-bad,.ic-sensor{background:#d93025}.ic-net-on,.ic-gps-ok{background:#188038}
ol.steps li{margin:.4em 0}
.flow{display:flex;flex-wrap:wrap;gap:1em}.flow figure{margin:0}
.flow figcaption{text-align:center;font-size:.9em}
pre.stack{background:#f1f3f4;padding:1em}
""".strip()


def _screen_html(svg: Optional[str], highlight) -> str:
    if svg is None:
        return (
            '<svg xmlns="http://www.w3.org/2000/svg" width="300" height="480" viewBox="0 0 300 480">'
            '<rect width="300" height="480" fill="#e8eaed"/>'
            '<text x="150" y="240" text-anchor="middle" font-size="20">screenshot unavailable</text></svg>'
        )
    svg = svg.strip()
    if highlight is not None:
        x1, y1, x2, y2 = highlight
        mark = (
            f'<rect class="highlight" x="{x1}" y="{y1}" width="{x2 - x1}" height="{y2 - y1}" '
            'fill="none" stroke="#d93025" stroke-width="12"/>'
        )
        svg = svg[: svg.rindex("</svg>")] + mark + "\n</svg>"
    return svg


def generate_report(trace: ExecutionTrace, renderings: Mapping[str, str]) -> str:
    """Self-contained HTML report for a crashed trace.

    ``renderings`` maps screenshot references to SVG documents; missing ones
    are drawn as placeholders.
    """
    report = build_report(trace)
    esc = html.escape
    out = [
        "<!DOCTYPE html>",
        '<html lang="en"><head><meta charset="utf-8">',
        f"<title>Crash report: {esc(trace.meta.app_name)} ({esc(trace.meta.strategy)} {esc(trace.meta.run_id)})</title>",
        f"<style>{_CSS}</style></head><body>",
        f"<h1>Crash report for {esc(trace.meta.app_name)}</h1>",
        '<section id="general"><h2>General Information</h2><table class="general">',
    ]
    for name, value in report.general.items():
        out.append(f"<tr><td>{esc(name)}</td><td>{esc(value)}</td></tr>")
    out.append("</table><h3>Contextual state legend</h3><ul class=\"legend\">")
    for name in ICONS:
        out.append(f"<li>{_icon_html(name)} {esc(ICONS[name][2])}</li>")
    out.append("</ul></section>")

    out.append('<section id="steps"><h2>Reproduction Steps</h2><ol class="steps">')
    for step in report.steps:
        icons = "".join(_icon_html(i) for i in step.icons)
        out.append(f'<li value="{step.index}">{icons} {esc(step.sentence)}</li>')
    out.append("</ol></section>")

    out.append('<section id="screen-flow"><h2>Crash Screen Flow</h2><div class="flow">')
    for step in report.steps:
        svg = renderings.get(step.screenshot) if step.screenshot else None
        if svg is None:
            log.warning("screenshot %s for step %d is missing; using a placeholder", step.screenshot, step.index)
        out.append(f"<figure>{_screen_html(svg, step.highlight)}<figcaption>Step {step.index}</figcaption></figure>")
    out.append("</div></section>")

    sig = report.pruned_trace
    frames = "\n".join(f"    at {esc(f)}" for f in sig.stack)
    out.append('<section id="stack-trace"><h2>Stack Trace</h2>')
    out.append(f'<pre class="stack">{esc(sig.exception_class)}: {esc(sig.message)}\n{frames}</pre></section>')
    out.append("</body></html>")
    return "\n".join(out) + "\n"


def report_file_name(trace: ExecutionTrace) -> str:
    return trace_file_name(trace.meta)[: -len(".trace")] + "__report.html"
