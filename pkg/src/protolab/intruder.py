"""Dolev-Yao intruder: sees all traffic, reads only what is addressed to it,
and builds new messages from what it knows.

The intruder is an ordinary (non-conforming) principal.  Its ghost sender
is always its true identity: forgery lives in message *content*, never in
the bookkeeping fields.  Opaque traffic (mail it cannot read) can still be
replayed verbatim.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Sequence, Union

from .model import (
    GlobalState,
    Invent,
    Item,
    Nonce,
    Sid,
    Uid,
    add_knows,
    append_action,
    is_nonce,
    is_uid,
    item_key,
    next_nonce,
)
from .roles import ABSTRACT


@dataclass(frozen=True)
class IntruderKnowledge:
    known_items: frozenset[Item]
    observed_opaque: tuple[int, ...]  # history indices of unreadable messages


EMPTY_KNOWLEDGE = IntruderKnowledge(frozenset(), ())


@dataclass(frozen=True)
class MoveBounds:
    max_content: int
    max_invents: int  # remaining invention allowance, not a run total


@dataclass(frozen=True)
class InventNonce:
    pass


@dataclass(frozen=True)
class Compose:
    rec: Uid
    content: tuple[Item, ...]


@dataclass(frozen=True)
class ReplayOpaque:
    index: int


IntruderMove = Union[InventNonce, Compose, ReplayOpaque]


def closure(
    knowledge: IntruderKnowledge,
    state: GlobalState,
    me: Uid,
    medium=ABSTRACT,
) -> IntruderKnowledge:
    """Everything derivable from the history: all principal names, every item
    in mail the intruder can read, its own inventions, and the indices of
    opaque messages.  Idempotent; contents are flat, so one pass suffices."""
    known = set(knowledge.known_items)
    known.update(state.users)
    opaque = set(knowledge.observed_opaque)
    for index, act in enumerate(state.history):
        if isinstance(act, Invent):
            if act.user == me:
                known.add(act.what)
            continue
        items = medium.readable(act, me, state)
        if items is not None:
            known.update(items)
        elif medium.is_message(act):
            opaque.add(index)
    return IntruderKnowledge(frozenset(known), tuple(sorted(opaque)))


def legal_moves(knowledge: IntruderKnowledge, bounds: MoveBounds) -> list[IntruderMove]:
    """Every move the intruder may take, in a fixed enumeration order:
    one invention (if allowed), then compositions by recipient and content,
    then replays by history index."""
    moves: list[IntruderMove] = []
    if bounds.max_invents > 0:
        moves.append(InventNonce())
    recipients = sorted(i for i in knowledge.known_items if is_uid(i))
    pool = sorted(knowledge.known_items, key=item_key)
    for rec in recipients:
        for length in range(1, bounds.max_content + 1):
            for content in itertools.product(pool, repeat=length):
                moves.append(Compose(rec=rec, content=content))
    for index in knowledge.observed_opaque:
        moves.append(ReplayOpaque(index))
    return moves


def apply_move(
    state: GlobalState,
    me: Uid,
    session: Sid,
    move: IntruderMove,
    medium=ABSTRACT,
) -> GlobalState:
    """Perform one intruder move and absorb everything now readable into the
    intruder's knowledge record."""
    if isinstance(move, InventNonce):
        nonce = next_nonce(state)
        state = append_action(state, Invent(me, nonce))
    elif isinstance(move, Compose):
        state = append_action(state, medium.send_action(me, move.rec, move.content, state))
    else:
        assert isinstance(move, ReplayOpaque)
        original = state.history[move.index]
        state = append_action(state, medium.replay_action(original, me))
    know = closure(EMPTY_KNOWLEDGE, state, me, medium)
    nonces = [i for i in know.known_items if isinstance(i, Nonce)]
    return add_knows(state, me, session, nonces)


@dataclass(frozen=True)
class LoweScript:
    """The classic interception strategy against an initiator who chose the
    intruder as partner: forward the opener to the second victim under the
    victim's key, then forward the confirmation nonce the initiator sends
    back.  State-free: pending work is derived from the history."""

    me: Uid
    victim_a: Uid
    victim_b: Uid

    def pending_move(self, state: GlobalState, medium=ABSTRACT) -> Compose | None:
        for act in state.history:
            items = medium.readable(act, self.me, state)
            if items is None:
                continue
            forward: Sequence[Item] | None = None
            if len(items) == 2 and items[0] == self.victim_a and is_nonce(items[1]):
                forward = items
            elif len(items) == 1 and is_nonce(items[0]):
                forward = items
            if forward is None:
                continue
            if not self._already_sent(state, tuple(forward), medium):
                return Compose(rec=self.victim_b, content=tuple(forward))
        return None

    def _already_sent(self, state: GlobalState, items: tuple[Item, ...], medium) -> bool:
        return any(
            medium.matches_sent(act, self.me, self.victim_b, items, state)
            for act in state.history
        )


def lowe_script(me: Uid, victim_a: Uid, victim_b: Uid) -> LoweScript:
    assert me != victim_a and me != victim_b and victim_a != victim_b
    return LoweScript(me=me, victim_a=victim_a, victim_b=victim_b)
