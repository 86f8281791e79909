"""Execution traces: the per-session record every downstream artifact is built from."""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Any, NamedTuple, Optional

from .appmodel import ContextFeature, CrashSignature, WindowKind
from .simdevice import ContextualState, HierarchyDump


class WindowKey(NamedTuple):
    """Activity name for activities; (activity, width, height) for dialogs."""

    activity: str
    width: Optional[int] = None
    height: Optional[int] = None

    @property
    def is_dialog(self) -> bool:
        return self.width is not None

    def __str__(self) -> str:
        if self.is_dialog:
            return f"{self.activity}@{self.width}x{self.height}"
        return self.activity

    @classmethod
    def parse(cls, text: str) -> WindowKey:
        if "@" in text:
            activity, size = text.rsplit("@", 1)
            w, h = size.split("x")
            return cls(activity, int(w), int(h))
        return cls(text)

    @classmethod
    def of(cls, dump: HierarchyDump) -> WindowKey:
        if dump.kind == WindowKind.DIALOG:
            return cls(dump.activity, dump.size[0], dump.size[1])
        return cls(dump.activity)


class StepAction(str, Enum):
    TAP = "tap"
    LONG_TAP = "long_tap"
    TYPE_TEXT = "type_text"
    BACK = "back"
    WIFI_OFF = "wifi_off"
    WIFI_ON = "wifi_on"
    GPS_INVALID = "gps_invalid"
    SENSOR_ADVERSE = "sensor_adverse"
    ROTATE_LANDSCAPE = "rotate_landscape"
    ROTATE_PORTRAIT = "rotate_portrait"


CONTEXT_ACTIONS = frozenset(
    {
        StepAction.WIFI_OFF,
        StepAction.WIFI_ON,
        StepAction.GPS_INVALID,
        StepAction.SENSOR_ADVERSE,
        StepAction.ROTATE_LANDSCAPE,
        StepAction.ROTATE_PORTRAIT,
    }
)


class Purpose(str, Enum):
    """Why the engine issued a step; only ``explore`` steps consume work items."""

    EXPLORE = "explore"
    FILL = "fill"
    NAVIGATE = "navigate"
    BACKTRACK = "backtrack"
    CONTEXT = "context"


@dataclass(frozen=True)
class ComponentRef:
    id: str
    widget_type: str
    text: str
    bounds: tuple[int, int, int, int]


@dataclass(frozen=True)
class Outcome:
    kind: str  # none | transition | crash | exception
    signature: Optional[CrashSignature] = None

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {"kind": self.kind}
        if self.signature is not None:
            out["signature"] = self.signature.to_dict()
        return out

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> Outcome:
        sig = data.get("signature")
        return cls(data["kind"], None if sig is None else CrashSignature.from_dict(sig))


@dataclass(frozen=True)
class ExecutionStep:
    index: int
    action: StepAction
    purpose: Purpose
    context: ContextualState
    outcome: Outcome
    window_before: Optional[WindowKey] = None
    window_after: Optional[WindowKey] = None
    window_size: Optional[tuple[int, int]] = None
    component: Optional[ComponentRef] = None
    typed_text: Optional[str] = None
    feature: Optional[ContextFeature] = None
    screenshot: Optional[str] = None

    def to_dict(self) -> dict[str, Any]:
        return {
            "index": self.index,
            "action": self.action.value,
            "purpose": self.purpose.value,
            "component": None
            if self.component is None
            else {
                "id": self.component.id,
                "widget_type": self.component.widget_type,
                "text": self.component.text,
                "bounds": list(self.component.bounds),
            },
            "typed_text": self.typed_text,
            "feature": None if self.feature is None else self.feature.value,
            "window_before": None if self.window_before is None else str(self.window_before),
            "window_after": None if self.window_after is None else str(self.window_after),
            "window_size": None if self.window_size is None else list(self.window_size),
            "context": self.context.to_dict(),
            "screenshot": self.screenshot,
            "outcome": self.outcome.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> ExecutionStep:
        comp = data.get("component")
        return cls(
            index=int(data["index"]),
            action=StepAction(data["action"]),
            purpose=Purpose(data["purpose"]),
            component=None
            if comp is None
            else ComponentRef(comp["id"], comp["widget_type"], comp["text"], tuple(comp["bounds"])),
            typed_text=data.get("typed_text"),
            feature=None if data.get("feature") is None else ContextFeature(data["feature"]),
            window_before=None if data.get("window_before") is None else WindowKey.parse(data["window_before"]),
            window_after=None if data.get("window_after") is None else WindowKey.parse(data["window_after"]),
            window_size=None if data.get("window_size") is None else tuple(data["window_size"]),
            context=ContextualState.from_dict(data["context"]),
            screenshot=data.get("screenshot"),
            outcome=Outcome.from_dict(data["outcome"]),
        )


@dataclass(frozen=True)
class Skip:
    window: str
    component: str
    action: str
    reason: str


@dataclass(frozen=True)
class RunMetadata:
    app_name: str
    app_version: str
    package: str
    os_version: str
    device_name: str
    resolution: tuple[int, int]
    strategy: str
    seed: int
    run_id: str

    def to_dict(self) -> dict[str, Any]:
        return {
            "app_name": self.app_name,
            "app_version": self.app_version,
            "package": self.package,
            "os_version": self.os_version,
            "device_name": self.device_name,
            "resolution": list(self.resolution),
            "strategy": self.strategy,
            "seed": self.seed,
            "run_id": self.run_id,
        }

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> RunMetadata:
        return cls(
            app_name=data["app_name"],
            app_version=data["app_version"],
            package=data["package"],
            os_version=data["os_version"],
            device_name=data["device_name"],
            resolution=tuple(data["resolution"]),
            strategy=data["strategy"],
            seed=int(data["seed"]),
            run_id=data["run_id"],
        )


@dataclass
class ExecutionTrace:
    meta: RunMetadata
    steps: list[ExecutionStep] = field(default_factory=list)
    skipped: list[Skip] = field(default_factory=list)

    @property
    def crashed(self) -> bool:
        return bool(self.steps) and self.steps[-1].outcome.kind == "crash"

    @property
    def crash_signature(self) -> Optional[CrashSignature]:
        return self.steps[-1].outcome.signature if self.crashed else None
