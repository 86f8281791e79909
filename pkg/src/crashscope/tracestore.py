"""File-backed trace archive: one line-oriented JSON file per trace."""

from __future__ import annotations

import json
import logging
import os
import re
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Union

from .trace import ExecutionStep, ExecutionTrace, RunMetadata, Skip

log = logging.getLogger(__name__)

TRACE_SUFFIX = ".trace"
FORMAT_VERSION = 1


class TraceFormatError(Exception):
    pass


class TraceCollisionError(Exception):
    pass


def slug(name: str) -> str:
    """File-name-safe form of an app name."""
    return re.sub(r"[^A-Za-z0-9.-]+", "-", name).strip("-") or "app"


def trace_file_name(meta: RunMetadata) -> str:
    return f"{slug(meta.app_name)}__{meta.strategy}__{meta.run_id}{TRACE_SUFFIX}"


def _dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False)


def serialize_trace(trace: ExecutionTrace) -> str:
    header = {
        "format": FORMAT_VERSION,
        "meta": trace.meta.to_dict(),
        "crashed": trace.crashed,
        "steps": len(trace.steps),
        "skipped": [vars(s) for s in trace.skipped],
    }
    lines = [_dumps(header)] + [_dumps(step.to_dict()) for step in trace.steps]
    return "\n".join(lines) + "\n"


def parse_trace(text: str) -> ExecutionTrace:
    lines = text.splitlines()
    if not lines:
        raise TraceFormatError("empty trace file")
    try:
        header = json.loads(lines[0])
        trace = ExecutionTrace(
            meta=RunMetadata.from_dict(header["meta"]),
            steps=[ExecutionStep.from_dict(json.loads(line)) for line in lines[1:]],
            skipped=[Skip(**s) for s in header.get("skipped", [])],
        )
    except (ValueError, KeyError, TypeError) as exc:
        raise TraceFormatError(f"unreadable trace: {exc}") from exc
    if header.get("format") != FORMAT_VERSION:
        raise TraceFormatError(f"unsupported trace format {header.get('format')!r}")
    if header.get("steps") != len(trace.steps):
        raise TraceFormatError("step count in header does not match the file")
    if [s.index for s in trace.steps] != list(range(1, len(trace.steps) + 1)):
        raise TraceFormatError("step indices are not contiguous from 1")
    if bool(header.get("crashed")) != trace.crashed:
        raise TraceFormatError("crashed flag disagrees with the last step outcome")
    return trace


def load_trace(path: Union[str, Path]) -> ExecutionTrace:
    return parse_trace(Path(path).read_text(encoding="utf-8"))


@dataclass(frozen=True)
class TraceArchive:
    root: Path

    def __init__(self, root: Union[str, Path]):
        object.__setattr__(self, "root", Path(root))

    @property
    def screens_dir(self) -> Path:
        return self.root / "screens"

    def index(self) -> dict[tuple[str, str, str], Path]:
        """(app slug, strategy label, run id) -> path, rebuilt from the directory listing."""
        out = {}
        if not self.root.is_dir():
            return out
        for path in sorted(self.root.glob(f"*{TRACE_SUFFIX}")):
            parts = path.name[: -len(TRACE_SUFFIX)].split("__")
            if len(parts) == 3:
                out[tuple(parts)] = path
        return out


def append_trace(archive: TraceArchive, trace: ExecutionTrace) -> Path:
    archive.root.mkdir(parents=True, exist_ok=True)
    path = archive.root / trace_file_name(trace.meta)
    try:
        with open(path, "x", encoding="utf-8") as fh:
            fh.write(serialize_trace(trace))
    except FileExistsError:
        raise TraceCollisionError(f"run already archived: {path.name}") from None
    return path


def store_screens(archive: TraceArchive, screens: dict[str, str]) -> None:
    """Write screenshots by content reference; existing refs are left alone."""
    archive.screens_dir.mkdir(parents=True, exist_ok=True)
    for ref, svg in sorted(screens.items()):
        path = archive.screens_dir / f"{ref}.svg"
        if path.exists():
            continue
        fd, tmp = tempfile.mkstemp(dir=archive.screens_dir, suffix=".tmp")
        with os.fdopen(fd, "w", encoding="utf-8") as fh:
            fh.write(svg)
        os.replace(tmp, path)


def load_screens(archive: TraceArchive, refs) -> dict[str, str]:
    out = {}
    for ref in refs:
        if ref is None:
            continue
        path = archive.screens_dir / f"{ref}.svg"
        if path.is_file():
            out[ref] = path.read_text(encoding="utf-8")
    return out


def load_crashing_traces(archive: TraceArchive, app_name: str) -> list[ExecutionTrace]:
    """Crashed traces of one app sorted by (strategy, run id); unreadable files are skipped."""
    found = []
    for (app, strategy, run_id), path in archive.index().items():
        if app != slug(app_name):
            continue
        try:
            trace = load_trace(path)
        except (OSError, TraceFormatError) as exc:
            log.warning("skipping %s: %s", path.name, exc)
            continue
        if trace.crashed:
            found.append(trace)
    found.sort(key=lambda t: (t.meta.strategy, t.meta.run_id))
    return found
