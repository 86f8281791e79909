"""Static analysis: where contextual features are used, and which activities rotate."""

from __future__ import annotations

from collections import defaultdict, deque
from dataclasses import dataclass, field

from .appmodel import AppModel, CallGraph, ContextFeature, FEATURE_ORDER, Manifest


@dataclass(frozen=True)
class FeatureMap:
    activity_level: dict[ContextFeature, frozenset[str]] = field(default_factory=dict)
    app_level: frozenset[ContextFeature] = frozenset()
    rotatable: frozenset[str] = frozenset()

    def features_for(self, activity: str) -> list[ContextFeature]:
        """Activity-level features of ``activity`` in application order."""
        return [f for f in FEATURE_ORDER if activity in self.activity_level.get(f, ())]

    def to_dict(self) -> dict:
        return {
            "activity_level": {
                f.value: sorted(self.activity_level[f]) for f in FEATURE_ORDER if f in self.activity_level
            },
            "app_level": [f.value for f in FEATURE_ORDER if f in self.app_level],
            "rotatable": sorted(self.rotatable),
        }


def ancestors(graph: CallGraph, method: str) -> set[str]:
    """``method`` plus every method that can reach it through call edges."""
    callers: dict[str, list[str]] = defaultdict(list)
    for caller, callee in graph.edges:
        callers[callee].append(caller)
    seen = {method}
    queue = deque([method])
    while queue:
        for caller in callers[queue.popleft()]:
            if caller not in seen:
                seen.add(caller)
                queue.append(caller)
    return seen


def rotatable_activities(manifest: Manifest) -> frozenset[str]:
    return frozenset(a.name for a in manifest.activities if a.rotatable)


def classify_contextual_features(model: AppModel) -> FeatureMap:
    """Split contextual features into activity-level and app-level.

    A call site is traceable when some activity entry method reaches it.
    Features with at least one traceable site are tested at the activities
    that reach them; features whose sites are all untraceable are tested for
    the whole app.
    """
    graph = model.call_graph
    traced: dict[ContextFeature, set[str]] = defaultdict(set)
    untraced: set[ContextFeature] = set()
    for call in graph.contextual_calls:
        reach = ancestors(graph, call.method)
        hits = {act for act, entries in graph.activity_entries.items() if entries & reach}
        if hits:
            traced[call.feature] |= hits
        else:
            untraced.add(call.feature)
    return FeatureMap(
        activity_level={f: frozenset(acts) for f, acts in traced.items()},
        app_level=frozenset(untraced - traced.keys()),
        rotatable=rotatable_activities(model.manifest),
    )
