"""Trace files: byte-stable run records.

One record per line.  Ghost data (true originators, sealed payloads) is
serialized under "ghost:" markers so downstream tools can strip it; the
`--no-ghost` rendering produces exactly that observable projection, which
is for demonstration only and cannot be replayed.

    protolab-trace v1
    level abstract
    scn <embedded scenario record>...
    init digest=<12 hex>
    event i=<n> actor=<id> stmt=<name> [arg=<token>] act=<action|-> digest=<12 hex>
    verdict spec=<id> holds=<true|false> [detail="..."]
    end events=<n>

Digests cover the global state, all machine states and the inbox, so a
replay diverging anywhere is caught at the first differing event.
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass, field

from .crypto import WireMsg, payload_for_trace
from .model import (
    GlobalState,
    Invent,
    Msg,
    Nonce,
    render_content,
    render_item,
)
from .roles import Inbox, RoleMachine

HEADER = "protolab-trace v1"


class TraceError(Exception):
    """Malformed or unreplayable trace file."""


# ── canonical rendering ──────────────────────────────────────────────────────


def render_action(action, ghost: bool = True) -> str:
    if isinstance(action, Invent):
        return f"invent({action.user},{action.what!r})"
    if isinstance(action, Msg):
        if ghost:
            return f"msg(rec={action.rec},ghost:sender={action.sender},{render_content(action.content)})"
        return f"msg(rec={action.rec},{render_content(action.content)})"
    assert isinstance(action, WireMsg)
    if ghost:
        payload = render_content(payload_for_trace(action.body))
        return (
            f"wire(enc({action.body.pk!r}),ghost:sender={action.ghost_sender},"
            f"ghost:payload={payload})"
        )
    return f"wire(enc({action.body.pk!r}))"


def _render_user(uid, user) -> str:
    sessions = sorted(set(user.knows) | set(user.complete) | set(user.int_partner))
    parts = []
    for sid in sessions:
        knows = ",".join(repr(n) for n in sorted(user.knows.get(sid, frozenset())))
        parts.append(
            f"{sid}:partner={user.int_partner.get(sid, '-')}"
            f":knows={{{knows}}}:complete={str(user.complete.get(sid, False)).lower()}"
        )
    return f"{uid}(conforms={str(user.conforms).lower()};{';'.join(parts)})"


def canonical_state(state: GlobalState) -> str:
    users = "|".join(_render_user(uid, state.users[uid]) for uid in sorted(state.users))
    history = ";".join(render_action(a) for a in state.history)
    pkeys = ",".join(f"{uid}={state.pkeys[uid]!r}" for uid in sorted(state.pkeys))
    return f"users:{users}\nhistory:{history}\npkeys:{pkeys}"


def _render_machine(machine: RoleMachine) -> str:
    locals_ = ",".join(f"{k}={render_item(v)}" for k, v in machine.locals)
    return (
        f"{machine.actor_id}:variant={machine.variant.value}:peer={machine.peer or '-'}"
        f":pc={machine.pc}:status={machine.status.value}:locals={{{locals_}}}"
    )


def node_digest(state: GlobalState, machines, inbox: Inbox) -> str:
    body = canonical_state(state)
    body += "\nmachines:" + "|".join(_render_machine(m) for m in machines)
    body += "\ninbox:" + ",".join(
        f"{uid}={{{';'.join(str(i) for i in sorted(taken))}}}" for uid, taken in inbox.consumed
    )
    return hashlib.sha256(body.encode("utf-8")).hexdigest()[:12]


# ── documents ────────────────────────────────────────────────────────────────


@dataclass(frozen=True)
class TraceEvent:
    index: int
    actor: str
    stmt: str
    arg: str | None
    action_text: str  # ghost-full rendering, "-" when nothing was appended
    digest: str


@dataclass
class TraceDoc:
    level: str
    scenario_text: str
    init_digest: str
    events: list[TraceEvent] = field(default_factory=list)
    verdicts: list[tuple[str, bool, str]] = field(default_factory=list)


_GHOST_FIELD_RE = re.compile(r",ghost:[a-z]+=(\[[^\]]*\]|[^,)]+)")


def strip_ghost(action_text: str) -> str:
    return _GHOST_FIELD_RE.sub("", action_text)


def render_trace(doc: TraceDoc, no_ghost: bool = False) -> str:
    lines = [HEADER, f"level {doc.level}"]
    for line in doc.scenario_text.strip().splitlines():
        lines.append(f"scn {line}")
    lines.append(f"init digest={doc.init_digest}")
    for ev in doc.events:
        act = strip_ghost(ev.action_text) if no_ghost else ev.action_text
        arg = f" arg={ev.arg}" if ev.arg is not None else ""
        lines.append(
            f"event i={ev.index} actor={ev.actor} stmt={ev.stmt}{arg} act={act} digest={ev.digest}"
        )
    for spec, holds, detail in doc.verdicts:
        suffix = f' detail="{detail}"' if detail else ""
        lines.append(f"verdict spec={spec} holds={str(holds).lower()}{suffix}")
    lines.append(f"end events={len(doc.events)}")
    return "\n".join(lines) + "\n"


_EVENT_RE = re.compile(
    r"^event i=(\d+) actor=(\S+) stmt=(\S+?)(?: arg=(\S+))? act=(\S+) digest=([0-9a-f]{12})$"
)
_VERDICT_RE = re.compile(r'^verdict spec=(\S+) holds=(true|false)(?: detail="(.*)")?$')


def parse_trace(text: str) -> TraceDoc:
    lines = text.splitlines()
    if not lines or lines[0] != HEADER:
        raise TraceError(f"header: first record must be {HEADER!r}")
    level: str | None = None
    scn_lines: list[str] = []
    init_digest: str | None = None
    events: list[TraceEvent] = []
    verdicts: list[tuple[str, bool, str]] = []
    declared_events: int | None = None
    for line in lines[1:]:
        if not line.strip():
            continue
        if line.startswith("level "):
            level = line.split(" ", 1)[1]
        elif line.startswith("scn "):
            scn_lines.append(line[4:])
        elif line.startswith("init "):
            m = re.match(r"^init digest=([0-9a-f]{12})$", line)
            if not m:
                raise TraceError(f"init: malformed record {line!r}")
            init_digest = m.group(1)
        elif line.startswith("event "):
            m = _EVENT_RE.match(line)
            if not m:
                raise TraceError(f"event: malformed record {line!r}")
            index, actor, stmt, arg, act, digest = m.groups()
            if act.startswith(("msg(", "wire(")) and "ghost:" not in act:
                # observable-only projections drop information replay needs
                raise TraceError("event: trace was rendered without ghost data; not replayable")
            events.append(TraceEvent(int(index), actor, stmt, arg, act, digest))
        elif line.startswith("verdict "):
            m = _VERDICT_RE.match(line)
            if not m:
                raise TraceError(f"verdict: malformed record {line!r}")
            spec, holds, detail = m.groups()
            verdicts.append((spec, holds == "true", detail or ""))
        elif line.startswith("end "):
            m = re.match(r"^end events=(\d+)$", line)
            if not m:
                raise TraceError(f"end: malformed record {line!r}")
            declared_events = int(m.group(1))
        else:
            raise TraceError(f"unknown record {line.split(' ', 1)[0]!r}")
    if level not in ("abstract", "concrete"):
        raise TraceError("level: missing or invalid")
    if init_digest is None:
        raise TraceError("init: record missing")
    if not scn_lines:
        raise TraceError("scn: embedded scenario missing")
    if declared_events is None or declared_events != len(events):
        raise TraceError("end: event count missing or inconsistent")
    for pos, ev in enumerate(events, start=1):
        if ev.index != pos:
            raise TraceError(f"event: index {ev.index} out of order (expected {pos})")
    return TraceDoc(
        level=level,
        scenario_text="\n".join(scn_lines) + "\n",
        init_digest=init_digest,
        events=events,
        verdicts=verdicts,
    )


# ── parsing rendered actions back into structured form (for replay) ─────────

_MSG_RE = re.compile(r"^msg\(rec=([^,]+),ghost:sender=([^,]+),\[([^\]]*)\]\)$")
_WIRE_RE = re.compile(
    r"^wire\(enc\(([^)]+)\),ghost:sender=([^,]+),ghost:payload=\[([^\]]*)\]\)$"
)
_NONCE_RE = re.compile(r"^n(\d+)$")


def parse_items(text: str) -> tuple:
    if not text:
        return ()
    items = []
    for token in text.split(","):
        m = _NONCE_RE.match(token)
        items.append(Nonce(int(m.group(1))) if m else token)
    return tuple(items)


def parse_message_text(act: str) -> dict:
    """Structured fields of a rendered message: recipient or key atom,
    ghost sender, content items."""
    m = _MSG_RE.match(act)
    if m:
        return {
            "kind": "msg",
            "rec": m.group(1),
            "sender": m.group(2),
            "content": parse_items(m.group(3)),
        }
    m = _WIRE_RE.match(act)
    if m:
        return {
            "kind": "wire",
            "pk_atom": m.group(1),
            "sender": m.group(2),
            "content": parse_items(m.group(3)),
        }
    raise TraceError(f"act: cannot parse message text {act!r}")
