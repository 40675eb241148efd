"""Symbolic universe for protocol runs.

Everything here is a value: principals and nonces are symbolic atoms,
messages are flat sequences of items, and the global state is an immutable
record that every step replaces rather than mutates.  The `sender` field of
a message is ghost data: it records the true originator for checking
purposes but is stripped (`MsgView`) before any role code sees the message.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Iterable, Sequence, Union

Uid = str  # principal identifier, a symbolic atom from the scenario universe
Sid = str  # session identifier, rendered "<uid>#<n>"


class FreshnessViolation(Exception):
    """An Invent tried to reuse a nonce symbol already present in the history."""


class LengthMismatch(Exception):
    """select() was given a mask whose length differs from the sequence."""


@dataclass(frozen=True, order=True)
class Nonce:
    """Fresh symbolic value.  Identity is the creation index, never structure."""

    ix: int

    def __repr__(self) -> str:
        return f"n{self.ix}"


Item = Union[Nonce, Uid]


def is_nonce(item: Item) -> bool:
    return isinstance(item, Nonce)


def is_uid(item: Item) -> bool:
    return isinstance(item, str)


def item_key(item: Item) -> tuple:
    """Total order over items: uids first (by name), then nonces (by index)."""
    if isinstance(item, Nonce):
        return (1, item.ix)
    return (0, item)


def render_item(item: Item) -> str:
    return repr(item) if isinstance(item, Nonce) else item


def render_content(content: Sequence[Item]) -> str:
    return "[" + ",".join(render_item(i) for i in content) + "]"


@dataclass(frozen=True)
class MsgView:
    """A message as role code may see it: recipient and content, no sender."""

    rec: Uid
    content: tuple[Item, ...]


@dataclass(frozen=True)
class Msg:
    rec: Uid
    sender: Uid  # ghost: true originator, invisible to role code
    content: tuple[Item, ...]

    def __post_init__(self) -> None:
        if not self.content:
            raise ValueError("message content must be non-empty")

    def view(self) -> MsgView:
        return MsgView(self.rec, self.content)


@dataclass(frozen=True)
class Invent:
    user: Uid
    what: Nonce


Action = Union[Msg, Invent]


@dataclass(frozen=True)
class PKey:
    atom: str

    def __repr__(self) -> str:
        return self.atom


@dataclass(frozen=True)
class SKey:
    atom: str

    def __repr__(self) -> str:
        return self.atom


@dataclass(frozen=True)
class UserState:
    """Per-principal record, keyed by session where a field is session local.

    `int_partner` is bound the moment the partner becomes known (a sender
    knows it up front, a receiver learns it from the first message), so its
    domain may lag behind `knows`/`complete`, which are initialised to
    empty/False when the session starts.  `conforms` never changes during
    a run.
    """

    int_partner: dict[Sid, Uid]
    knows: dict[Sid, frozenset[Nonce]]
    skey: SKey
    conforms: bool
    complete: dict[Sid, bool]


@dataclass(frozen=True)
class GlobalState:
    users: dict[Uid, UserState]
    history: tuple[Action, ...]
    pkeys: dict[Uid, PKey]


def initial_state(conforms: dict[Uid, bool]) -> GlobalState:
    """Fresh state for the given universe; every user gets a key pair."""
    users = {
        uid: UserState(
            int_partner={},
            knows={},
            skey=SKey(f"sk:{uid}"),
            conforms=flag,
            complete={},
        )
        for uid, flag in conforms.items()
    }
    pkeys = {uid: PKey(f"pk:{uid}") for uid in conforms}
    return GlobalState(users=users, history=(), pkeys=pkeys)


# ── state update helpers (always copy, never mutate) ────────────────────────


def _with_user(state: GlobalState, uid: Uid, user: UserState) -> GlobalState:
    users = dict(state.users)
    users[uid] = user
    return replace(state, users=users)


def open_session(state: GlobalState, uid: Uid, sid: Sid) -> GlobalState:
    """Start a session: knows empty, complete false, partner not yet bound."""
    u = state.users[uid]
    knows = dict(u.knows)
    complete = dict(u.complete)
    knows.setdefault(sid, frozenset())
    complete.setdefault(sid, False)
    return _with_user(state, uid, replace(u, knows=knows, complete=complete))


def set_partner(state: GlobalState, uid: Uid, sid: Sid, partner: Uid) -> GlobalState:
    u = state.users[uid]
    partners = dict(u.int_partner)
    partners[sid] = partner
    return _with_user(state, uid, replace(u, int_partner=partners))


def add_knows(state: GlobalState, uid: Uid, sid: Sid, nonces: Iterable[Nonce]) -> GlobalState:
    u = state.users[uid]
    knows = dict(u.knows)
    knows[sid] = knows.get(sid, frozenset()) | frozenset(nonces)
    return _with_user(state, uid, replace(u, knows=knows))


def set_complete(state: GlobalState, uid: Uid, sid: Sid) -> GlobalState:
    u = state.users[uid]
    complete = dict(u.complete)
    complete[sid] = True
    return _with_user(state, uid, replace(u, complete=complete))


def next_nonce(state: GlobalState) -> Nonce:
    """Next fresh nonce: one past the highest index in the history, so it is
    fresh by construction even on hand-written histories.  Deriving the
    counter from the history keeps branching explorations deterministic
    without a shared mutable context.
    """
    highest = max((n.ix for n in _nonces_in_history(state.history)), default=0)
    return Nonce(highest + 1)


def _nonces_in_history(history: Sequence) -> set[Nonce]:
    seen: set[Nonce] = set()
    for act in history:
        if isinstance(act, Invent):
            seen.add(act.what)
        elif isinstance(act, Msg):
            seen.update(i for i in act.content if isinstance(i, Nonce))
    return seen


def append_action(state: GlobalState, act) -> GlobalState:
    """Extend the history by one action; all other state is untouched.

    Raises FreshnessViolation when an Invent reuses a nonce symbol that
    already occurs anywhere in the history (as an invention or inside
    readable message content).
    """
    if isinstance(act, Invent) and act.what in _nonces_in_history(state.history):
        raise FreshnessViolation(f"nonce {act.what!r} already appears in the history")
    return replace(state, history=state.history + (act,))


# ── history functions ────────────────────────────────────────────────────────


def u_hist(history: Sequence[Action], user: Uid):
    """The history restricted to one user's activities, order preserved.

    A message belongs to the user when it is addressed to them or when the
    ghost sender is them; an invention belongs to its inventor.
    """
    out = []
    for act in history:
        if isinstance(act, Msg) and (act.rec == user or act.sender == user):
            out.append(act)
        elif isinstance(act, Invent) and act.user == user:
            out.append(act)
    return tuple(out)


def user_key(user: UserState) -> tuple:
    return (
        tuple(sorted(user.int_partner.items())),
        tuple(sorted((sid, tuple(sorted(ns))) for sid, ns in user.knows.items())),
        user.skey,
        user.conforms,
        tuple(sorted(user.complete.items())),
    )


def state_key(state: GlobalState) -> tuple:
    """Hashable canonical key for duplicate detection."""
    return (
        tuple(sorted((uid, user_key(u)) for uid, u in state.users.items())),
        state.history,
        tuple(sorted(state.pkeys.items())),
    )


def select(sel: Sequence[bool], s: Sequence) -> tuple:
    """Keep s[i] where sel[i] is true, order preserved."""
    if len(sel) != len(s):
        raise LengthMismatch(f"mask length {len(sel)} != sequence length {len(s)}")
    return tuple(x for keep, x in zip(sel, s) if keep)


def subseq(s1: Sequence, s2: Sequence) -> bool:
    """True iff some boolean mask over s2 selects exactly s1."""
    it = iter(s2)
    return all(any(x == y for y in it) for x in s1)
