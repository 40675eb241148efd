"""Executable role state machines for the three-message public-key handshake.

Each machine runs one role instance (initiator or responder) of either the
original protocol (NS) or the identity-checked variant (NSL), one statement
per step.  Sends and receives go through a medium object so the same
statement code drives both the abstract level (messages readable only by
their recipient) and the encrypted wire level.

Receive semantics: a receive consumes the most recent unread message that
is readable by the owner and whose content matches the statement's pattern
by arity and item kind.  Messages that do not match are left unread for
other machines of the same owner.  The NSL initiator additionally checks
that the identity claimed in the reply equals the intended partner and
aborts on mismatch; both variants abort when a returned nonce is not the
one expected.
"""

from __future__ import annotations

import enum
import functools
from dataclasses import dataclass, replace
from typing import Sequence

from .model import (
    GlobalState,
    Invent,
    Item,
    Msg,
    Nonce,
    Sid,
    Uid,
    add_knows,
    append_action,
    is_nonce,
    is_uid,
    next_nonce,
    set_complete,
    set_partner,
)


class Variant(enum.Enum):
    NS = "ns"
    NSL = "nsl"


class RoleKind(enum.Enum):
    SENDER = "sender"
    RECEIVER = "receiver"


class Status(enum.Enum):
    RUNNING = "running"
    BLOCKED = "blocked"
    COMPLETED = "completed"
    ABORTED = "aborted"


class DeadlockError(Exception):
    """Both honest machines blocked with nothing deliverable."""


# ── statements ───────────────────────────────────────────────────────────────

# pattern kinds: "u" = principal identifier, "n" = nonce


@dataclass(frozen=True)
class SetPartner:
    name: str = "set-partner"


@dataclass(frozen=True)
class InventStmt:
    bind: str
    name: str = "invent"


@dataclass(frozen=True)
class SendStmt:
    template: tuple[str, ...]  # "this" or a local name per position
    target: str  # "peer" or a local name holding a principal
    name: str = "send"


@dataclass(frozen=True)
class RecvStmt:
    pattern: tuple[str, ...]
    binds: tuple[str, ...]
    guard: str | None = None  # "sender-check" | "ret-eq-nb"
    learn: tuple[str, ...] = ()
    bind_partner: str | None = None  # local name to record as intended partner
    name: str = "recv"


@dataclass(frozen=True)
class FinishStmt:
    name: str = "finish"


@functools.cache
def sender_statements(variant: Variant) -> tuple:
    if variant is Variant.NS:
        recv = RecvStmt(("n", "n"), ("ret", "Nt"), guard="sender-check", learn=("Nt",))
    else:
        recv = RecvStmt(
            ("u", "n", "n"), ("claim", "ret", "Nt"), guard="sender-check", learn=("Nt",)
        )
    return (
        SetPartner(),
        InventStmt("NA"),
        SendStmt(("this", "NA"), "peer"),
        recv,
        SendStmt(("Nt",), "peer"),
        FinishStmt(),
    )


@functools.cache
def receiver_statements(variant: Variant) -> tuple:
    reply = ("Nf", "NB") if variant is Variant.NS else ("this", "Nf", "NB")
    return (
        RecvStmt(("u", "n"), ("from", "Nf"), learn=("Nf",), bind_partner="from"),
        InventStmt("NB"),
        SendStmt(reply, "from"),
        RecvStmt(("n",), ("ret",), guard="ret-eq-nb"),
        FinishStmt(),
    )


# ── media ────────────────────────────────────────────────────────────────────


class AbstractMedium:
    """Recipient-only readability modelled directly on the message record."""

    level = "abstract"

    def send_action(self, owner: Uid, target: Uid, items: Sequence[Item], state: GlobalState):
        return Msg(rec=target, sender=owner, content=tuple(items))

    def readable(self, action, me: Uid, state: GlobalState):
        if isinstance(action, Msg) and action.rec == me:
            return action.content
        return None

    def is_message(self, action) -> bool:
        return isinstance(action, Msg)

    def matches_sent(self, action, me: Uid, target: Uid, items, state: GlobalState) -> bool:
        return (
            isinstance(action, Msg)
            and action.sender == me
            and action.rec == target
            and action.content == tuple(items)
        )

    def replay_action(self, action, me: Uid):
        """Verbatim re-emission; only the ghost originator changes."""
        return Msg(rec=action.rec, sender=me, content=action.content)


ABSTRACT = AbstractMedium()


# ── machines ─────────────────────────────────────────────────────────────────


@dataclass(frozen=True)
class RoleMachine:
    owner: Uid
    variant: Variant
    kind: RoleKind
    session: Sid
    peer: Uid | None  # intended partner; None until chosen for a sender
    pc: int = 0
    locals: tuple[tuple[str, Item], ...] = ()
    status: Status = Status.RUNNING

    @property
    def actor_id(self) -> str:
        return f"{self.kind.value}@{self.session}"

    def statements(self) -> tuple:
        if self.kind is RoleKind.SENDER:
            return sender_statements(self.variant)
        return receiver_statements(self.variant)

    def current(self):
        return self.statements()[self.pc]

    def local(self, name: str) -> Item:
        for key, value in self.locals:
            if key == name:
                return value
        raise KeyError(name)


def make_machine(
    owner: Uid, kind: RoleKind, variant: Variant, session: Sid, peer: Uid | None = None
) -> RoleMachine:
    return RoleMachine(owner=owner, variant=variant, kind=kind, session=session, peer=peer)


@dataclass(frozen=True)
class Inbox:
    """Per-user record of which history entries have been consumed.

    The set only grows, and an entry is consumed by at most one machine of
    its owner.
    """

    consumed: tuple[tuple[Uid, frozenset[int]], ...] = ()

    def consumed_for(self, uid: Uid) -> frozenset[int]:
        for key, value in self.consumed:
            if key == uid:
                return value
        return frozenset()

    def consume(self, uid: Uid, index: int) -> Inbox:
        entries = dict(self.consumed)
        entries[uid] = entries.get(uid, frozenset()) | {index}
        return Inbox(tuple(sorted(entries.items())))


def kinds_match(items: Sequence[Item], pattern: Sequence[str]) -> bool:
    if len(items) != len(pattern):
        return False
    return all(
        (kind == "n" and is_nonce(item)) or (kind == "u" and is_uid(item))
        for kind, item in zip(pattern, items)
    )


def find_match(
    machine: RoleMachine,
    state: GlobalState,
    inbox: Inbox,
    medium=ABSTRACT,
) -> int | None:
    """Index of the most recent unread, readable, pattern-matching entry."""
    stmt = machine.current()
    assert isinstance(stmt, RecvStmt)
    taken = inbox.consumed_for(machine.owner)
    for index in range(len(state.history) - 1, -1, -1):
        if index in taken:
            continue
        items = medium.readable(state.history[index], machine.owner, state)
        if items is not None and kinds_match(items, stmt.pattern):
            return index
    return None


def needs_peer_choice(machine: RoleMachine) -> bool:
    return (
        machine.status in (Status.RUNNING, Status.BLOCKED)
        and isinstance(machine.current(), SetPartner)
        and machine.peer is None
    )


def can_fire(machine: RoleMachine, state: GlobalState, inbox: Inbox, medium=ABSTRACT) -> bool:
    """Whether a step would make progress right now."""
    if machine.status in (Status.COMPLETED, Status.ABORTED):
        return False
    stmt = machine.current()
    if isinstance(stmt, SetPartner) and machine.peer is None:
        return False
    if isinstance(stmt, RecvStmt):
        return find_match(machine, state, inbox, medium) is not None
    return True


def _with_locals(machine: RoleMachine, binds: dict[str, Item]) -> RoleMachine:
    merged = dict(machine.locals)
    merged.update(binds)
    return replace(machine, locals=tuple(sorted(merged.items())))


def _guard_passes(machine: RoleMachine, stmt: RecvStmt, bound: dict[str, Item]) -> bool:
    if stmt.guard == "sender-check":
        if bound["ret"] != machine.local("NA"):
            return False
        if machine.variant is Variant.NSL and bound["claim"] != machine.peer:
            return False
        return True
    if stmt.guard == "ret-eq-nb":
        return bound["ret"] == machine.local("NB")
    assert stmt.guard is None
    return True


def step(
    machine: RoleMachine,
    state: GlobalState,
    inbox: Inbox,
    medium=ABSTRACT,
    chosen_peer: Uid | None = None,
) -> tuple[RoleMachine, GlobalState, Inbox]:
    """Execute one statement.  A receive with nothing deliverable yields a
    Blocked machine and leaves state and inbox untouched; a failed content
    check consumes the message and aborts the machine."""
    if machine.status in (Status.COMPLETED, Status.ABORTED):
        return machine, state, inbox
    stmt = machine.current()

    if isinstance(stmt, SetPartner):
        peer = machine.peer if machine.peer is not None else chosen_peer
        assert peer is not None, "sender needs an intended partner"
        state = set_partner(state, machine.owner, machine.session, peer)
        machine = replace(machine, peer=peer, pc=machine.pc + 1, status=Status.RUNNING)
        return machine, state, inbox

    if isinstance(stmt, InventStmt):
        nonce = next_nonce(state)
        state = append_action(state, Invent(machine.owner, nonce))
        state = add_knows(state, machine.owner, machine.session, (nonce,))
        machine = _with_locals(machine, {stmt.bind: nonce})
        machine = replace(machine, pc=machine.pc + 1, status=Status.RUNNING)
        return machine, state, inbox

    if isinstance(stmt, SendStmt):
        items = tuple(
            machine.owner if token == "this" else machine.local(token)
            for token in stmt.template
        )
        target = machine.peer if stmt.target == "peer" else machine.local(stmt.target)
        assert is_uid(target)
        state = append_action(state, medium.send_action(machine.owner, target, items, state))
        machine = replace(machine, pc=machine.pc + 1, status=Status.RUNNING)
        return machine, state, inbox

    if isinstance(stmt, RecvStmt):
        index = find_match(machine, state, inbox, medium)
        if index is None:
            return replace(machine, status=Status.BLOCKED), state, inbox
        items = medium.readable(state.history[index], machine.owner, state)
        assert items is not None
        bound = dict(zip(stmt.binds, items))
        inbox = inbox.consume(machine.owner, index)
        machine = _with_locals(machine, bound)
        if not _guard_passes(machine, stmt, bound):
            return replace(machine, status=Status.ABORTED), state, inbox
        if stmt.bind_partner is not None:
            partner = bound[stmt.bind_partner]
            assert is_uid(partner)
            state = set_partner(state, machine.owner, machine.session, partner)
        learned = [bound[name] for name in stmt.learn]
        assert all(isinstance(n, Nonce) for n in learned)
        if learned:
            state = add_knows(state, machine.owner, machine.session, learned)
        machine = replace(machine, pc=machine.pc + 1, status=Status.RUNNING)
        return machine, state, inbox

    assert isinstance(stmt, FinishStmt)
    state = set_complete(state, machine.owner, machine.session)
    machine = replace(machine, pc=machine.pc + 1, status=Status.COMPLETED)
    return machine, state, inbox


def run_honest_pair(frm: Uid, to: Uid, variant: Variant):
    """Round-robin a fresh initiator/responder pair to completion.

    Returns the final global state and the run record.  Raises
    DeadlockError if the pair quiesces before both machines complete,
    which cannot happen without interference.
    """
    from .runner import execute_scripted  # deferred: runner builds on roles
    from .scenario import IntruderDecl, RoleDecl, Scenario, default_bounds

    users = ((frm, True),) if frm == to else ((frm, True), (to, True))
    scenario = Scenario(
        users=users,
        roles=(
            RoleDecl(user=frm, kind=RoleKind.SENDER, peer=to, variant=variant),
            RoleDecl(user=to, kind=RoleKind.RECEIVER, peer=None, variant=variant),
        ),
        intruder=IntruderDecl(kind="none"),
        bounds=default_bounds(),
        level="abstract",
    )
    run = execute_scripted(scenario)
    if not all(m.status is Status.COMPLETED for m in run.machines):
        raise DeadlockError(
            "honest pair quiesced before completion: "
            + ", ".join(f"{m.actor_id}={m.status.value}" for m in run.machines)
        )
    return run.final_state, run
