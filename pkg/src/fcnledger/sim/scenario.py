"""Line-oriented scenario scripts.

One event per line: ``tick kind key=value ...``. Values may be quoted
with shell rules (``order="hold the bridge"``). ``#`` starts a comment.
A first line of the form ``# fcn-scenario v1`` documents the format
version; other versions are refused.
"""

from __future__ import annotations

import re
import shlex
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Mapping

from fcnledger.errors import ErrorCode, ScenarioError

FORMAT_VERSION = "v1"
_VERSION_RE = re.compile(r"^#\s*fcn-scenario\s+(\S+)\s*$")


class EventKind(str, Enum):
    DEPLOY = "Deploy"
    CONFIGURE_ASSET = "ConfigureAsset"
    ENROLL_KEY = "EnrollKey"
    MISSION_ORDER = "MissionOrder"
    DRONE_CRASH = "DroneCrash"
    FILE_REPORT = "FileReport"
    NODE_CRASH = "NodeCrash"
    NODE_RECOVER = "NodeRecover"


# parameters each kind cannot do without
_REQUIRED = {
    EventKind.DEPLOY: ("admin", "account"),
    EventKind.CONFIGURE_ASSET: ("op", "caller"),
    EventKind.ENROLL_KEY: ("op", "caller"),
    EventKind.MISSION_ORDER: ("caller", "to", "order"),
    EventKind.DRONE_CRASH: ("drone", "admin"),
    EventKind.FILE_REPORT: ("author", "report", "to", "content"),
    EventKind.NODE_CRASH: ("node",),
    EventKind.NODE_RECOVER: ("node",),
}


@dataclass(frozen=True)
class ScenarioEvent:
    tick: int
    kind: EventKind
    params: Mapping[str, str] = field(default_factory=dict)
    line: int = 0

    def get(self, name: str, default: str | None = None) -> str | None:
        return self.params.get(name, default)

    def render(self) -> str:
        parts = [str(self.tick), self.kind.value]
        parts += [f"{k}={shlex.quote(v)}" for k, v in self.params.items()]
        return " ".join(parts)


def parse_script(text: str) -> list[ScenarioEvent]:
    """Parse a script and return its events in processing order.

    Events are ordered by tick; events sharing a tick keep file order.
    """
    events = []
    for number, raw in enumerate(text.splitlines(), start=1):
        match = _VERSION_RE.match(raw.strip())
        if match:
            if match.group(1) != FORMAT_VERSION:
                raise ScenarioError(ErrorCode.MALFORMED_SCRIPT, f"unsupported script version {match.group(1)}")
            continue
        try:
            tokens = shlex.split(raw, comments=True)
        except ValueError as exc:
            raise ScenarioError(ErrorCode.MALFORMED_SCRIPT, f"line {number}: {exc}") from exc
        if not tokens:
            continue
        if len(tokens) < 2:
            raise ScenarioError(ErrorCode.MALFORMED_SCRIPT, f"line {number}: expected 'tick kind ...'")
        try:
            tick = int(tokens[0])
            if tick < 0:
                raise ValueError
        except ValueError:
            raise ScenarioError(ErrorCode.MALFORMED_SCRIPT, f"line {number}: bad tick {tokens[0]!r}") from None
        try:
            kind = EventKind(tokens[1])
        except ValueError:
            raise ScenarioError(ErrorCode.MALFORMED_SCRIPT, f"line {number}: unknown kind {tokens[1]!r}") from None
        params: dict[str, str] = {}
        for token in tokens[2:]:
            key, sep, value = token.partition("=")
            if not sep or not key:
                raise ScenarioError(ErrorCode.MALFORMED_SCRIPT, f"line {number}: expected key=value, got {token!r}")
            if key in params:
                raise ScenarioError(ErrorCode.MALFORMED_SCRIPT, f"line {number}: repeated parameter {key!r}")
            params[key] = value
        missing = [p for p in _REQUIRED[kind] if p not in params]
        if missing:
            raise ScenarioError(ErrorCode.MALFORMED_SCRIPT, f"line {number}: {kind.value} needs {', '.join(missing)}")
        events.append(ScenarioEvent(tick, kind, params, number))
    return sorted(events, key=lambda e: e.tick)


def load_script(path: str | Path) -> list[ScenarioEvent]:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ScenarioError(ErrorCode.MALFORMED_SCRIPT, str(exc)) from exc
    return parse_script(text)
