"""Systematic GUI exploration with contextual-state testing and crash recovery."""

from __future__ import annotations

import hashlib
import itertools
import logging
import random
from collections import deque
from dataclasses import dataclass
from enum import Enum
from typing import Callable, Iterable, NamedTuple, Optional

from .analyzer import FeatureMap
from .appmodel import (
    ActionKind,
    AppModel,
    ContextFeature,
    CrashSignature,
    FEATURE_ORDER,
    KEYBOARD_CHARSETS,
    KeyboardType,
    UNKNOWN_SIGNATURE,
    WindowKind,
)
from .simdevice import (
    DeviceError,
    DeviceInterface,
    DeviceObservation,
    Event,
    EXCEPTION_MARKER,
    FATAL_MARKER,
    HierarchyDump,
    KeyboardError,
    Orientation,
    StaleTargetError,
)
from .trace import (
    ComponentRef,
    ExecutionStep,
    ExecutionTrace,
    Outcome,
    Purpose,
    RunMetadata,
    Skip,
    StepAction,
    WindowKey,
)

log = logging.getLogger(__name__)

DEFAULT_BUDGET = 500


class Traversal(str, Enum):
    TOP_DOWN = "top_down"
    BOTTOM_UP = "bottom_up"


class TextMode(str, Enum):
    NO_TEXT = "no_text"
    EXPECTED = "expected"
    UNEXPECTED = "unexpected"


class ContextMode(str, Enum):
    ENABLED = "context_enabled"
    DISABLED = "context_disabled"


_TEXT_LABELS = {TextMode.NO_TEXT: "notext", TextMode.EXPECTED: "expected", TextMode.UNEXPECTED: "unexpected"}
_TRAVERSAL_LABELS = {Traversal.TOP_DOWN: "topdown", Traversal.BOTTOM_UP: "bottomup"}
_CONTEXT_LABELS = {ContextMode.ENABLED: "ctxon", ContextMode.DISABLED: "ctxoff"}


@dataclass(frozen=True)
class ExplorationStrategy:
    traversal: Traversal
    text_mode: TextMode
    context_mode: ContextMode
    seed: int = 1
    budget: int = DEFAULT_BUDGET

    def __post_init__(self):
        if self.seed <= 0 or self.budget <= 0:
            raise ValueError("seed and budget must be positive")

    @property
    def label(self) -> str:
        return "_".join(
            (_TEXT_LABELS[self.text_mode], _TRAVERSAL_LABELS[self.traversal], _CONTEXT_LABELS[self.context_mode])
        )

    @property
    def context_enabled(self) -> bool:
        return self.context_mode == ContextMode.ENABLED

    @classmethod
    def from_label(cls, label: str, seed: int = 1, budget: int = DEFAULT_BUDGET) -> ExplorationStrategy:
        try:
            text, trav, ctx = label.split("_")
            return cls(
                traversal={v: k for k, v in _TRAVERSAL_LABELS.items()}[trav],
                text_mode={v: k for k, v in _TEXT_LABELS.items()}[text],
                context_mode={v: k for k, v in _CONTEXT_LABELS.items()}[ctx],
                seed=seed,
                budget=budget,
            )
        except (KeyError, ValueError):
            raise ValueError(f"unknown strategy label {label!r}") from None


def all_strategies(seed: int = 1, budget: int = DEFAULT_BUDGET) -> list[ExplorationStrategy]:
    return [
        ExplorationStrategy(trav, text, ctx, seed, budget)
        for text, trav, ctx in itertools.product(TextMode, Traversal, ContextMode)
    ]


def order_components(dump: Optional[HierarchyDump], traversal: Traversal) -> list[str]:
    if dump is None:
        return []
    ids = [c.id for c in dump.components]
    return ids if traversal == Traversal.TOP_DOWN else ids[::-1]


def generate_text(keyboard: KeyboardType, text_mode: TextMode, rng: random.Random) -> str:
    """Random input for a text field of the given keyboard type.

    Expected text uses only the keyboard's base charset (4-12 chars);
    unexpected text mixes in the keyboard's special characters (4-16 chars,
    at least one special).
    """
    base, specials = KEYBOARD_CHARSETS[keyboard]
    if text_mode == TextMode.EXPECTED:
        return "".join(rng.choice(base) for _ in range(rng.randint(4, 12)))
    if text_mode != TextMode.UNEXPECTED:
        raise ValueError("no text is generated in no_text mode")
    pool = base + specials
    chars = [rng.choice(pool) for _ in range(rng.randint(4, 16))]
    if not any(c in specials for c in chars):
        chars[rng.randrange(len(chars))] = rng.choice(specials)
    return "".join(chars)


def detect_crash(obs: DeviceObservation, app_pid: int) -> Optional[CrashSignature]:
    if obs.crash_dialog is None:
        return None
    for entry in obs.log_entries:
        if entry.pid == app_pid and entry.marker == FATAL_MARKER and isinstance(entry.payload, CrashSignature):
            return entry.payload
    log.warning("crash dialog without a matching FATAL EXCEPTION entry for pid %d", app_pid)
    return UNKNOWN_SIGNATURE


def collect_exceptions(obs: DeviceObservation, app_pid: int) -> list[CrashSignature]:
    return [
        e.payload
        for e in obs.log_entries
        if e.pid == app_pid and e.marker in (FATAL_MARKER, EXCEPTION_MARKER) and isinstance(e.payload, CrashSignature)
    ]


class WorkItem(NamedTuple):
    window: WindowKey
    component: str
    action: ActionKind


class Edge(NamedTuple):
    source: WindowKey
    component: str
    action: ActionKind
    target: WindowKey


class TransitionGraph:
    def __init__(self, root: Optional[WindowKey] = None):
        self.root = root
        self.nodes: dict[WindowKey, None] = {}
        self._edges: dict[tuple[WindowKey, str, ActionKind], WindowKey] = {}
        if root is not None:
            self.add_node(root)

    def add_node(self, key: WindowKey) -> None:
        self.nodes.setdefault(key, None)

    def add_edge(self, source: WindowKey, component: str, action: ActionKind, target: WindowKey) -> bool:
        """Record a transition; an existing edge for (source, component, action) is kept."""
        self.add_node(source)
        self.add_node(target)
        slot = (source, component, action)
        if slot in self._edges:
            return False
        self._edges[slot] = target
        return True

    def remove_edge(self, source: WindowKey, component: str, action: ActionKind) -> None:
        self._edges.pop((source, component, action), None)

    @property
    def edges(self) -> list[Edge]:
        return [Edge(s, c, a, t) for (s, c, a), t in self._edges.items()]

    def shortest_path(self, target: WindowKey, source: Optional[WindowKey] = None) -> Optional[list[Edge]]:
        source = self.root if source is None else source
        if source == target:
            return []
        out: dict[WindowKey, list[Edge]] = {}
        for e in self.edges:
            out.setdefault(e.source, []).append(e)
        parent: dict[WindowKey, Edge] = {}
        seen = {source}
        queue = deque([source])
        while queue:
            node = queue.popleft()
            for e in out.get(node, ()):
                if e.target in seen:
                    continue
                seen.add(e.target)
                parent[e.target] = e
                if e.target == target:
                    path = [e]
                    while path[0].source != source:
                        path.insert(0, parent[path[0].source])
                    return path
                queue.append(e.target)
        return None


class UnvisitedStack:
    """LIFO of work items; an item can be pushed at most once per run."""

    def __init__(self):
        self._items: list[WorkItem] = []
        self._ever: set[WorkItem] = set()

    def push(self, item: WorkItem) -> bool:
        if item in self._ever:
            return False
        self._ever.add(item)
        self._items.append(item)
        return True

    def peek(self) -> Optional[WorkItem]:
        return self._items[-1] if self._items else None

    def pop(self) -> WorkItem:
        return self._items.pop()

    def remove_window(self, key: WindowKey) -> list[WorkItem]:
        dropped = [i for i in self._items if i.window == key]
        self._items = [i for i in self._items if i.window != key]
        return dropped

    def drain(self) -> list[WorkItem]:
        items, self._items = self._items[::-1], []
        return items

    def __len__(self) -> int:
        return len(self._items)


def _default_perform(device: DeviceInterface, edge: Edge) -> Optional[WindowKey]:
    obs = device.perform(Event(edge.action, target=edge.component))
    if obs.crash_dialog is not None:
        return None
    dump = device.current_hierarchy()
    return None if dump is None else WindowKey.of(dump)


def navigate_to(
    graph: TransitionGraph,
    device: DeviceInterface,
    target: WindowKey,
    perform: Optional[Callable[[Edge], Optional[WindowKey]]] = None,
) -> bool:
    """Replay the shortest recorded path from the initial window to ``target``.

    The app must be on the initial window. Returns False when no path is
    known or a replayed edge does not lead where it did before.
    """
    path = graph.shortest_path(target)
    if path is None:
        return False
    for edge in path:
        dump = device.current_hierarchy()
        if dump is None or WindowKey.of(dump) != edge.source:
            return False
        try:
            reached = perform(edge) if perform is not None else _default_perform(device, edge)
        except StaleTargetError:
            return False
        if reached != edge.target:
            return False
    return True


class _Crashed(Exception):
    pass


class _Restart(Exception):
    pass


class _Halt(Exception):
    pass


_CONTEXT_STEP = {
    ContextFeature.NETWORK: StepAction.WIFI_OFF,
    ContextFeature.GPS: StepAction.GPS_INVALID,
    ContextFeature.ACCELEROMETER: StepAction.SENSOR_ADVERSE,
    ContextFeature.MAGNETOMETER: StepAction.SENSOR_ADVERSE,
    ContextFeature.TEMPERATURE: StepAction.SENSOR_ADVERSE,
}

_MAX_RESTARTS = 3


class Explorer:
    """One strategy run against one device; produces one trace per app session."""

    def __init__(
        self,
        model: AppModel,
        features: FeatureMap,
        device: DeviceInterface,
        strategy: ExplorationStrategy,
        screens: Optional[dict[str, str]] = None,
    ):
        self.model = model
        self.features = features
        self.device = device
        self.strategy = strategy
        self.screens = screens if screens is not None else {}
        self.rng = random.Random(strategy.seed)
        self.graph = TransitionGraph()
        self.stack = UnvisitedStack()
        self.traces: list[ExecutionTrace] = []
        self.trace: Optional[ExecutionTrace] = None
        self.nav: list[WindowKey] = []
        self._discovered: set[WindowKey] = set()
        self._active: set[ContextFeature] = set()
        self._rotated: set[str] = set()
        self._broken_fields: set[tuple[WindowKey, str]] = set()
        self._events = 0
        self._restarts = 0

    # -- driver ------------------------------------------------------------

    def run(self) -> list[ExecutionTrace]:
        need_session = True
        while True:
            try:
                if need_session:
                    need_session = False
                    self._open_session()
                item = self.stack.peek()
                if item is None:
                    break
                if self._reach(item.window):
                    self._work(item)
            except _Crashed:
                self._close_session()
                # Dismiss the crash dialog between sessions; it is not part of either trace.
                if self.device.crash_dialog() is not None:
                    self.device.press_back()
                need_session = True
            except _Restart:
                self._close_session()
                need_session = True
                self._restarts += 1
                item = self.stack.peek()
                if item is not None and self._restarts > _MAX_RESTARTS:
                    self._skip_window(item.window, "window could not be re-entered")
                    self._restarts = 0
            except _Halt:
                if self.trace is None:
                    self._new_trace()
                for item in self.stack.drain():
                    self._skip(item, "budget exhausted")
                break
        if self.trace is not None:
            self._close_session()
        return self.traces

    def _new_trace(self) -> None:
        m = self.model
        self.trace = ExecutionTrace(
            RunMetadata(
                app_name=m.app.name,
                app_version=m.app.version,
                package=m.app.package,
                os_version=m.device.os_version,
                device_name=m.device.name,
                resolution=m.device.resolution,
                strategy=self.strategy.label,
                seed=self.strategy.seed,
                run_id=f"{self.strategy.seed}-{len(self.traces) + 1:03d}",
            )
        )

    def _open_session(self) -> None:
        self._new_trace()
        self.nav = []
        # Sessions start from the fresh-device orientation; no app is running here.
        if self.device.context.orientation != Orientation.PORTRAIT:
            self.device.rotate(Orientation.PORTRAIT)
        if self.strategy.context_enabled:
            wanted = self._active | set(self.features.app_level)
            for feature in FEATURE_ORDER:
                if feature in wanted:
                    self._context_step(feature)
        dump = self.device.launch_app()
        key = WindowKey.of(dump)
        self.nav = [key]
        if self.graph.root is None:
            self.graph.root = key
            self.graph.add_node(key)
        self._enter(key, dump)

    def _close_session(self) -> None:
        self.traces.append(self.trace)
        self.trace = None

    def _skip(self, item: WorkItem, reason: str) -> None:
        self.trace.skipped.append(Skip(str(item.window), item.component, item.action.value, reason))

    def _skip_window(self, key: WindowKey, reason: str) -> None:
        for item in self.stack.remove_window(key):
            self._skip(item, reason)

    # -- window bookkeeping ------------------------------------------------

    def _key(self) -> Optional[WindowKey]:
        dump = self.device.current_hierarchy()
        return None if dump is None else WindowKey.of(dump)

    def _enter(self, key: WindowKey, dump: HierarchyDump) -> None:
        if key in self._discovered:
            return
        self._discovered.add(key)
        self.graph.add_node(key)
        items = []
        for comp_id in order_components(dump, self.strategy.traversal):
            comp = dump.find(comp_id)
            if comp.is_text_field:
                continue
            if comp.clickable:
                items.append(WorkItem(key, comp_id, ActionKind.TAP))
            if comp.long_clickable:
                items.append(WorkItem(key, comp_id, ActionKind.LONG_TAP))
        for item in reversed(items):
            self.stack.push(item)

        if not self.strategy.context_enabled:
            return
        for feature in self.features.features_for(dump.activity):
            if feature not in self._active:
                self._context_step(feature)
        if (
            dump.kind == WindowKind.ACTIVITY
            and dump.activity in self.features.rotatable
            and dump.activity not in self._rotated
        ):
            self._rotated.add(dump.activity)
            for orientation, action in (
                (Orientation.LANDSCAPE, StepAction.ROTATE_LANDSCAPE),
                (Orientation.PORTRAIT, StepAction.ROTATE_PORTRAIT),
            ):
                shot = self._begin()
                obs = self.device.rotate(orientation)
                if self._finish(action, Purpose.CONTEXT, obs, dump, shot) != key:
                    return

    # -- steps -------------------------------------------------------------

    def _begin(self) -> str:
        if self._events >= self.strategy.budget:
            raise _Halt()
        self._events += 1
        svg = self.device.screenshot()
        ref = hashlib.sha1(svg.encode("utf-8")).hexdigest()[:16]
        self.screens[ref] = svg
        return ref

    def _finish(
        self,
        action: StepAction,
        purpose: Purpose,
        obs: DeviceObservation,
        dump: Optional[HierarchyDump],
        shot: str,
        comp=None,
        typed: Optional[str] = None,
        feature: Optional[ContextFeature] = None,
        edge_action: Optional[ActionKind] = None,
    ) -> Optional[WindowKey]:
        """Record a step from its observation and follow any window change."""
        pid = self.device.app_pid
        crash = detect_crash(obs, pid)
        exceptions = collect_exceptions(obs, pid)
        before = None if dump is None else WindowKey.of(dump)
        after_dump = None if crash is not None else self.device.current_hierarchy()
        after = None if after_dump is None else WindowKey.of(after_dump)
        if crash is not None:
            outcome = Outcome("crash", crash)
        elif exceptions:
            outcome = Outcome("exception", exceptions[0])
        elif after != before:
            outcome = Outcome("transition")
        else:
            outcome = Outcome("none")
        self.trace.steps.append(
            ExecutionStep(
                index=len(self.trace.steps) + 1,
                action=action,
                purpose=purpose,
                context=self.device.context,
                outcome=outcome,
                window_before=before,
                window_after=after,
                window_size=None if dump is None else dump.size,
                component=None if comp is None else ComponentRef(comp.id, comp.widget_type, comp.text, comp.bounds),
                typed_text=typed,
                feature=feature,
                screenshot=shot,
            )
        )
        if crash is not None:
            raise _Crashed()
        if after != before and before is not None:
            if after is None:
                raise _Restart()
            if edge_action is not None and comp is not None:
                self.graph.add_edge(before, comp.id, edge_action, after)
            if purpose != Purpose.BACKTRACK:
                self.nav.append(after)
            self._enter(after, after_dump)
        return after

    def _context_step(self, feature: ContextFeature) -> None:
        dump = self.device.current_hierarchy()
        shot = self._begin()
        if feature == ContextFeature.NETWORK:
            obs = self.device.set_network(False)
        elif feature == ContextFeature.GPS:
            obs = self.device.set_gps_invalid()
        else:
            obs = self.device.set_sensor_adverse(feature)
        self._active.add(feature)
        sensor = feature if _CONTEXT_STEP[feature] == StepAction.SENSOR_ADVERSE else None
        self._finish(_CONTEXT_STEP[feature], Purpose.CONTEXT, obs, dump, shot, feature=sensor)

    def _event_step(self, kind: ActionKind, comp, dump: HierarchyDump, purpose: Purpose) -> Optional[WindowKey]:
        shot = self._begin()
        obs = self.device.perform(Event(kind, target=comp.id))
        action = StepAction.TAP if kind == ActionKind.TAP else StepAction.LONG_TAP
        return self._finish(action, purpose, obs, dump, shot, comp=comp, edge_action=kind)

    def _back_to(self, target: WindowKey) -> None:
        while self.nav and self.nav[-1] != target:
            dump = self.device.current_hierarchy()
            shot = self._begin()
            obs = self.device.press_back()
            self.nav.pop()
            after = self._finish(StepAction.BACK, Purpose.BACKTRACK, obs, dump, shot)
            if not self.nav or after != self.nav[-1]:
                raise _Restart()

    def _reach(self, target: WindowKey) -> bool:
        if self._key() == target:
            return True
        if target in self.nav:
            self._back_to(target)
            return True
        self._back_to(self.nav[0])
        if navigate_to(self.graph, self.device, target, perform=self._nav_perform):
            return True
        self._skip_window(target, "window unreachable through recorded transitions")
        return False

    def _nav_perform(self, edge: Edge) -> Optional[WindowKey]:
        dump = self.device.current_hierarchy()
        comp = dump.find(edge.component)
        if comp is None:
            return None
        try:
            return self._event_step(edge.action, comp, dump, Purpose.NAVIGATE)
        except _Crashed:
            # The edge now crashes under the current context; never route through it again.
            self.graph.remove_edge(edge.source, edge.component, edge.action)
            raise

    def _fill(self, key: WindowKey, comp, dump: HierarchyDump) -> bool:
        """Focus, query and type into one text field; True if the window changed."""
        shot = self._begin()
        obs = self.device.perform(Event(ActionKind.TAP, target=comp.id))
        if obs.crash_dialog is not None or self._key() != key:
            self._broken_fields.add((key, comp.id))
            return self._finish(StepAction.TAP, Purpose.FILL, obs, dump, shot, comp=comp) != key
        try:
            keyboard = self.device.keyboard_type_of(comp.id)
        except KeyboardError:
            self._finish(StepAction.TAP, Purpose.FILL, obs, dump, shot, comp=comp)
            return False
        text = generate_text(keyboard, self.strategy.text_mode, self.rng)
        obs = obs.merged(self.device.perform(Event(ActionKind.TYPE_TEXT, target=comp.id, text=text)))
        if obs.crash_dialog is not None:
            self._broken_fields.add((key, comp.id))
        return self._finish(StepAction.TYPE_TEXT, Purpose.FILL, obs, dump, shot, comp=comp, typed=text) != key

    def _work(self, item: WorkItem) -> None:
        dump = self.device.current_hierarchy()
        comp = dump.find(item.component)
        if comp is None:
            dump = self.device.current_hierarchy()
            comp = dump.find(item.component)
            if comp is None:
                self.stack.pop()
                self._skip(item, "stale target")
                return
        if self.strategy.text_mode != TextMode.NO_TEXT:
            for field_id in order_components(dump, self.strategy.traversal):
                field = dump.find(field_id)
                if not field.is_text_field or (item.window, field_id) in self._broken_fields:
                    continue
                if self._fill(item.window, field, dump):
                    return
        self.stack.pop()
        try:
            self._event_step(item.action, comp, dump, Purpose.EXPLORE)
        except StaleTargetError:
            self._events -= 1
            dump = self.device.current_hierarchy()
            comp = None if dump is None else dump.find(item.component)
            if comp is None:
                self._skip(item, "stale target")
                return
            try:
                self._event_step(item.action, comp, dump, Purpose.EXPLORE)
            except StaleTargetError:
                self._events -= 1
                self._skip(item, "stale target")
                return
        self._restarts = 0


def explore(
    model: AppModel,
    features: FeatureMap,
    device: DeviceInterface,
    strategy: ExplorationStrategy,
    screens: Optional[dict[str, str]] = None,
) -> list[ExecutionTrace]:
    """Run one strategy from a reset device; one trace per app session.

    Screenshots referenced by the steps are added to ``screens`` (ref -> SVG).
    """
    device.reset()
    return Explorer(model, features, device, strategy, screens).run()


def strategies_from(labels: Iterable[str], seed: int, budget: int) -> list[ExplorationStrategy]:
    return [ExplorationStrategy.from_label(label, seed, budget) for label in labels]
