import random
import re

import pytest
from hypothesis import given, settings, strategies as st

from crashscope.analyzer import classify_contextual_features
from crashscope.appmodel import (
    ActionKind,
    CrashSignature,
    KEYBOARD_CHARSETS,
    KeyboardType,
    UNKNOWN_SIGNATURE,
    WindowKind,
    model_from_dict,
    model_to_dict,
)
from crashscope.explorer import (
    ContextMode,
    ExplorationStrategy,
    TextMode,
    TransitionGraph,
    Traversal,
    UnvisitedStack,
    WorkItem,
    all_strategies,
    collect_exceptions,
    detect_crash,
    explore,
    generate_text,
    navigate_to,
    order_components,
)
from crashscope.simdevice import (
    EXCEPTION_MARKER,
    FATAL_MARKER,
    ComponentSnapshot,
    CrashDialog,
    DeviceObservation,
    HierarchyDump,
    LogEntry,
    SimDevice,
    StaleTargetError,
)
from crashscope.trace import CONTEXT_ACTIONS, Purpose, StepAction, WindowKey
from crashscope.tracestore import serialize_trace

from conftest import load

SIG = CrashSignature("java.lang.NullPointerException", "boom", ("com.example.app.Main.run(Main.java:1)",))


def run(model, label, **kw):
    strategy = ExplorationStrategy.from_label(label, **kw)
    return explore(model, classify_contextual_features(model), SimDevice(model), strategy)


def explored_items(traces):
    return [
        (str(s.window_before), s.component.id, s.action.value)
        for t in traces
        for s in t.steps
        if s.purpose == Purpose.EXPLORE
    ]


# -- strategies ---------------------------------------------------------------


def test_twelve_strategies():
    strategies = all_strategies()
    assert len(strategies) == 12
    assert len({s.label for s in strategies}) == 12
    assert ExplorationStrategy(Traversal.TOP_DOWN, TextMode.NO_TEXT, ContextMode.ENABLED) in strategies


def test_label_round_trip():
    for s in all_strategies(seed=5, budget=40):
        assert ExplorationStrategy.from_label(s.label, 5, 40) == s
    assert ExplorationStrategy.from_label("unexpected_topdown_ctxon").text_mode == TextMode.UNEXPECTED
    with pytest.raises(ValueError):
        ExplorationStrategy.from_label("sideways_topdown_ctxon")


@pytest.mark.parametrize("seed,budget", [(0, 10), (1, 0), (-1, 5)])
def test_strategy_rejects_non_positive(seed, budget):
    with pytest.raises(ValueError):
        ExplorationStrategy(Traversal.TOP_DOWN, TextMode.NO_TEXT, ContextMode.DISABLED, seed, budget)


# -- ordering and text ----------------------------------------------------------


def _dump(ids):
    comps = tuple(ComponentSnapshot(i, "button", i, (0, 0, 1, 1), True, False, False) for i in ids)
    return HierarchyDump("w", "A", WindowKind.ACTIVITY, (10, 10), comps)


def test_order_components():
    assert order_components(_dump(["c1", "c2", "c3"]), Traversal.TOP_DOWN) == ["c1", "c2", "c3"]
    assert order_components(_dump(["c1", "c2", "c3"]), Traversal.BOTTOM_UP) == ["c3", "c2", "c1"]
    assert order_components(_dump([]), Traversal.TOP_DOWN) == []


@pytest.mark.parametrize("keyboard", list(KeyboardType))
def test_expected_text_oracle(keyboard):
    base, _ = KEYBOARD_CHARSETS[keyboard]
    pattern = re.compile("[" + re.escape(base) + "]{4,12}")
    rng = random.Random(3)
    for _ in range(10_000):
        assert pattern.fullmatch(generate_text(keyboard, TextMode.EXPECTED, rng))


@pytest.mark.parametrize("keyboard", list(KeyboardType))
def test_unexpected_text_oracle(keyboard):
    base, specials = KEYBOARD_CHARSETS[keyboard]
    allowed = set(base) | set(specials)
    rng = random.Random(4)
    for _ in range(10_000):
        text = generate_text(keyboard, TextMode.UNEXPECTED, rng)
        assert 4 <= len(text) <= 16
        assert set(text) <= allowed
        assert set(text) & set(specials)


def test_number_expected_matches_digits():
    rng = random.Random(1)
    assert all(re.fullmatch(r"[0-9]{4,12}", generate_text(KeyboardType.NUMBER, TextMode.EXPECTED, rng))
               for _ in range(1000))


@given(st.sampled_from(list(KeyboardType)), st.sampled_from([TextMode.EXPECTED, TextMode.UNEXPECTED]), st.integers(1, 2**32))
def test_text_is_deterministic(keyboard, mode, seed):
    assert generate_text(keyboard, mode, random.Random(seed)) == generate_text(keyboard, mode, random.Random(seed))


# -- crash detection ------------------------------------------------------------


def _obs(dialog, *entries):
    return DeviceObservation(CrashDialog(dialog) if dialog else None, tuple(entries), None, None)


def test_detect_crash_with_matching_pid():
    obs = _obs("ExampleApp has stopped", LogEntry(4100, "E", FATAL_MARKER, SIG))
    assert detect_crash(obs, 4100) == SIG


def test_foreign_pid_is_ignored():
    obs = _obs(None, LogEntry(612, "E", FATAL_MARKER, SIG))
    assert detect_crash(obs, 4100) is None
    assert collect_exceptions(obs, 4100) == []


def test_non_fatal_exception_collected():
    obs = _obs(None, LogEntry(4100, "W", EXCEPTION_MARKER, SIG))
    assert detect_crash(obs, 4100) is None
    assert collect_exceptions(obs, 4100) == [SIG]


def test_dialog_without_entry_is_unknown(caplog):
    obs = _obs("ExampleApp has stopped", LogEntry(612, "E", FATAL_MARKER, SIG))
    assert detect_crash(obs, 4100) == UNKNOWN_SIGNATURE
    assert "without a matching" in caplog.text


# -- graph, stack, navigation ---------------------------------------------------


def test_graph_first_edge_wins_and_bfs():
    s1, s2, s3 = WindowKey("S1"), WindowKey("S2"), WindowKey("S3")
    g = TransitionGraph(s1)
    assert g.add_edge(s1, "a", ActionKind.TAP, s2)
    assert not g.add_edge(s1, "a", ActionKind.TAP, s3)
    g.add_edge(s2, "b", ActionKind.TAP, s3)
    g.add_edge(s1, "c", ActionKind.LONG_TAP, s3)
    assert [e.component for e in g.shortest_path(s3)] == ["c"]
    assert g.shortest_path(s1) == []
    assert g.shortest_path(WindowKey("S9")) is None


def test_unvisited_stack_pushes_once():
    stack = UnvisitedStack()
    item = WorkItem(WindowKey("A"), "b", ActionKind.TAP)
    assert stack.push(item)
    assert not stack.push(item)
    assert stack.pop() == item
    assert not stack.push(item)  # never re-pushed after being popped
    assert len(stack) == 0


def _chain_model():
    windows = []
    behavior = []
    names = ["S1", "S2", "S3"]
    for i, name in enumerate(names):
        comps = [{"id": "next", "widget_type": "button", "text": "Next", "bounds": [0, 0, 100, 100], "clickable": True}]
        windows.append({"id": name.lower(), "kind": "activity", "activity": name, "size": [1200, 1920], "components": comps})
        if i + 1 < len(names):
            behavior.append({"trigger": {"window": name.lower(), "action": "tap", "component": "next"},
                             "result": {"navigate": names[i + 1].lower()}})
    return model_from_dict({
        "app": {"name": "Chain", "version": "1", "package": "org.sample.chain"},
        "manifest": {"activities": [{"name": n, "is_main": n == "S1"} for n in names]},
        "call_graph": {}, "windows": windows, "behavior": behavior, "initial_window": "s1",
    })


def test_navigate_to_replays_shortest_path():
    model = _chain_model()
    s1, s2, s3 = WindowKey("S1"), WindowKey("S2"), WindowKey("S3")
    g = TransitionGraph(s1)
    g.add_edge(s1, "next", ActionKind.TAP, s2)
    g.add_edge(s2, "next", ActionKind.TAP, s3)
    dev = SimDevice(model)
    dev.launch_app()
    assert navigate_to(g, dev, s3)
    assert dev.back_stack == ["s1", "s2", "s3"]
    dev.launch_app()
    assert navigate_to(g, dev, s1)
    assert dev.back_stack == ["s1"]
    assert not navigate_to(g, dev, WindowKey("Elsewhere"))


def test_navigate_to_detects_divergence():
    s1, s2 = WindowKey("S1"), WindowKey("S2")
    g = TransitionGraph(s1)
    g.add_edge(s1, "next", ActionKind.TAP, WindowKey("S3"))  # recorded wrongly
    dev = SimDevice(_chain_model())
    dev.launch_app()
    assert not navigate_to(g, dev, WindowKey("S3"))


# -- whole runs -------------------------------------------------------------------


@pytest.mark.parametrize("strategy", all_strategies(), ids=lambda s: s.label)
def test_unconditional_crash_any_strategy(strategy):
    model = load("unconditional.json")
    traces = explore(model, classify_contextual_features(model), SimDevice(model), strategy)
    crashed = [t for t in traces if t.crashed]
    assert len(crashed) == 1
    steps = crashed[0].steps
    assert [s.action for s in steps] == [StepAction.TAP]
    assert steps[0].component.id == "crash"
    assert crashed[0].crash_signature.exception_class == "java.lang.NullPointerException"
    assert [t.crashed for t in traces] == [True, False]


def test_network_crash_needs_context():
    model = load("schedule_net.json")
    finders = [s.label for s in all_strategies() if any(t.crashed for t in run(model, s.label))]
    assert len(finders) == 6  # context on, under every text mode and traversal
    for strategy in all_strategies():
        crashed = [t for t in run(model, strategy.label) if t.crashed]
        if strategy.context_enabled:
            assert len(crashed) == 1, strategy.label
            assert crashed[0].steps[0].action == StepAction.WIFI_OFF
        else:
            assert crashed == [], strategy.label


def test_two_disjoint_crashes():
    data = model_to_dict(load("three_crashes.json"))
    data["behavior"] = [r for r in data["behavior"] if r["trigger"]["window"] != "gamma"]
    traces = run(model_from_dict(data), "notext_topdown_ctxoff")
    assert [t.crashed for t in traces] == [True, True, False]
    items = explored_items(traces)
    assert len(items) == len(set(items))


def test_three_crashes_resumes_via_graph():
    traces = run(load("three_crashes.json"), "notext_topdown_ctxoff")
    assert [t.crashed for t in traces] == [True, True, True, False]
    assert len({t.crash_signature for t in traces if t.crashed}) == 3
    items = explored_items(traces)
    assert len(items) == len(set(items))


def test_resume_navigates_back_to_crashed_window():
    data = model_to_dict(load("three_crashes.json"))
    alpha = next(w for w in data["windows"] if w["id"] == "alpha")
    alpha["components"].reverse()  # crash button first, OK remains pending
    traces = run(model_from_dict(data), "notext_topdown_ctxoff")
    second = traces[1].steps
    assert second[0].purpose == Purpose.NAVIGATE
    assert (str(second[0].window_before), str(second[0].window_after)) == ("Hub", "Alpha")
    assert (second[1].purpose, second[1].component.id) == (Purpose.EXPLORE, "ok")
    items = explored_items(traces)
    assert len(items) == len(set(items))


@pytest.mark.parametrize("fixture", ["crash_free.json", "notes_tap.json", "same_size_dialogs.json"])
def test_systematic_completeness(fixture):
    model = load(fixture)
    traces = run(model, "notext_topdown_ctxoff")
    items = explored_items(traces)
    assert len(items) == len(set(items))
    expected = set()
    for t in traces:
        for s in t.steps:
            for key in (s.window_before, s.window_after):
                if key is None:
                    continue
                win = next(w for w in model.windows if WindowKey.of(_as_dump(w)) == key)
                for c in win.components:
                    if c.is_text_field:
                        continue
                    if c.clickable:
                        expected.add((str(key), c.id, "tap"))
                    if c.long_clickable:
                        expected.add((str(key), c.id, "long_tap"))
    assert set(items) == expected
    assert not any(sk.reason for t in traces for sk in t.skipped)


def _as_dump(win):
    return HierarchyDump(win.id, win.activity_name, win.kind, win.size, ())


def test_bottom_up_reverses_order():
    model = load("crash_free.json")
    top = [i[1] for i in explored_items(run(model, "notext_topdown_ctxoff"))]
    bottom = [i[1] for i in explored_items(run(model, "notext_bottomup_ctxoff"))]
    assert top[0] == "about" and bottom[0] == "noop"
    assert sorted(top) == sorted(bottom)


def test_same_size_dialogs_share_a_node():
    traces = run(load("same_size_dialogs.json"), "notext_topdown_ctxoff")
    keys = {str(s.window_after) for t in traces for s in t.steps if s.window_after is not None}
    assert keys == {"Main", "Main@900x600", "Main@900x400"}
    # The second 900x600 dialog reuses the first node, so its buttons are never explored.
    comps = {i[1] for i in explored_items(traces)}
    assert "dismiss" not in comps and "yes" in comps


def test_context_targeting():
    for fixture in ["schedule_net.json", "compass_sensor.json", "weather_gps.json", "notes_tap.json"]:
        model = load(fixture)
        fmap = classify_contextual_features(model)
        reported = set(fmap.app_level) | set(fmap.activity_level)
        for strategy in all_strategies():
            steps = [s for t in run(model, strategy.label) for s in t.steps]
            ctx = [s for s in steps if s.action in CONTEXT_ACTIONS]
            if not strategy.context_enabled:
                assert ctx == []
                continue
            for s in ctx:
                if s.action == StepAction.WIFI_OFF:
                    assert "network" in {f.value for f in reported}
                elif s.action == StepAction.GPS_INVALID:
                    assert "gps" in {f.value for f in reported}
                elif s.action == StepAction.SENSOR_ADVERSE:
                    assert s.feature in reported


def test_app_level_set_before_launch():
    traces = run(load("weather_gps.json"), "notext_topdown_ctxon")
    first = traces[0].steps[0]
    assert first.action == StepAction.GPS_INVALID
    assert first.window_before is None


def test_rotation_on_first_entry():
    traces = run(load("quiz_rot.json"), "notext_topdown_ctxon")
    steps = traces[0].steps
    actions = [s.action for s in steps]
    assert actions[:2] == [StepAction.TAP, StepAction.ROTATE_LANDSCAPE]
    assert traces[0].crashed
    off = run(load("quiz_rot.json"), "notext_topdown_ctxoff")
    assert not any(t.crashed for t in off)


def test_rotation_round_trip_on_surviving_activity():
    data = model_to_dict(load("player_rot.json"))
    data["behavior"] = []
    traces = run(model_from_dict(data), "notext_topdown_ctxon")
    actions = [s.action for s in traces[0].steps]
    assert actions[:2] == [StepAction.ROTATE_LANDSCAPE, StepAction.ROTATE_PORTRAIT]
    assert actions.count(StepAction.ROTATE_LANDSCAPE) == 1


def test_text_fields_filled_before_each_clickable():
    traces = run(load("contacts_text.json"), "expected_topdown_ctxoff")
    steps = [s for t in traces for s in t.steps]
    add = [i for i, s in enumerate(steps) if s.window_before == WindowKey("AddContactActivity")
           and s.purpose == Purpose.EXPLORE]
    assert add
    for i in add:
        before = steps[i - 3:i]
        assert [s.action for s in before] == [StepAction.TYPE_TEXT] * 3
        assert [s.component.id for s in before] == ["name", "email", "phone"]


def test_unexpected_text_finds_email_crash():
    traces = run(load("contacts_text.json"), "unexpected_topdown_ctxoff")
    crashed = [t for t in traces if t.crashed]
    assert len(crashed) == 1
    email = [s.typed_text for s in crashed[0].steps if s.component and s.component.id == "email"][-1]
    assert set(email) & set("_+-")


def test_budget_exhaustion_records_skips():
    traces = run(load("notes_tap.json"), "unexpected_topdown_ctxoff", budget=5)
    assert sum(len(t.steps) for t in traces) == 5
    assert not traces[-1].crashed
    skipped = [sk for t in traces for sk in t.skipped]
    assert skipped and all(sk.reason == "budget exhausted" for sk in skipped)


def test_determinism():
    model = load("notes_tap.json")
    a = [serialize_trace(t) for t in run(model, "unexpected_bottomup_ctxon", seed=9)]
    b = [serialize_trace(t) for t in run(model, "unexpected_bottomup_ctxon", seed=9)]
    assert a == b
    c = [serialize_trace(t) for t in run(model, "unexpected_bottomup_ctxon", seed=10)]
    assert a != c


def test_crash_only_on_last_step():
    for strategy in all_strategies():
        for t in run(load("three_crashes.json"), strategy.label):
            kinds = [s.outcome.kind for s in t.steps]
            assert "crash" not in kinds[:-1]
            assert [s.index for s in t.steps] == list(range(1, len(t.steps) + 1))


class FlakyDevice(SimDevice):
    """Raises a stale-target error for the first ``fail`` taps on ``component``."""

    def __init__(self, model, component, fail):
        super().__init__(model)
        self.component, self.fail = component, fail

    def perform(self, event):
        if event.target == self.component and self.fail > 0:
            self.fail -= 1
            raise StaleTargetError(f"stale target {event.target!r}")
        return super().perform(event)


def _run_flaky(fail):
    model = load("crash_free.json")
    strategy = ExplorationStrategy.from_label("notext_topdown_ctxoff")
    return explore(model, classify_contextual_features(model), FlakyDevice(model, "noop", fail), strategy)


def test_stale_target_retried_once():
    traces = _run_flaky(1)
    assert ("Home", "noop", "tap") in explored_items(traces)
    assert not any(t.skipped for t in traces)


def test_stale_target_twice_is_skipped():
    traces = _run_flaky(2)
    assert ("Home", "noop", "tap") not in explored_items(traces)
    skips = [sk for t in traces for sk in t.skipped]
    assert [(sk.component, sk.reason) for sk in skips] == [("noop", "stale target")]
