"""State and history predicates, usable as run-time assertions and as
explorer safety checks.  Every predicate returns a report carrying a
witness when it fails, so counterexamples stay explainable.

Index conventions in witnesses are 1-based (history positions as a human
would count them).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .model import (
    Action,
    GlobalState,
    Invent,
    Msg,
    Uid,
    is_nonce,
    is_uid,
    u_hist,
)


@dataclass(frozen=True)
class PredicateReport:
    name: str
    holds: bool
    witness: str | None = None

    def __post_init__(self) -> None:
        assert (self.witness is not None) == (not self.holds)


def _ok(name: str) -> PredicateReport:
    return PredicateReport(name, True)


def _fail(name: str, witness: str) -> PredicateReport:
    return PredicateReport(name, False, witness)


def unique_nonces(history: Sequence[Action]) -> PredicateReport:
    """No two distinct inventions carry the same nonce symbol."""
    seen: dict = {}
    for pos, act in enumerate(history, start=1):
        if not isinstance(act, Invent):
            continue
        if act.what in seen:
            return _fail(
                "unique-nonces",
                f"nonce {act.what!r} invented at ({seen[act.what]},{pos})",
            )
        seen[act.what] = pos
    return _ok("unique-nonces")


def no_read_others(state: GlobalState) -> PredicateReport:
    """Every nonce a user knows is justified by an invention of their own or
    by a message addressed to them that carried it."""
    justified: dict[Uid, set] = {uid: set() for uid in state.users}
    for act in state.history:
        if isinstance(act, Invent):
            justified.setdefault(act.user, set()).add(act.what)
        elif isinstance(act, Msg):
            justified.setdefault(act.rec, set()).update(
                i for i in act.content if is_nonce(i)
            )
    for uid in sorted(state.users):
        known = set().union(*state.users[uid].knows.values()) if state.users[uid].knows else set()
        for nonce in sorted(known - justified.get(uid, set())):
            return _fail("no-read-others", f"user {uid} knows unjustified {nonce!r}")
    return _ok("no-read-others")


def _received_then_sent_pairs(actions: Sequence[Action]):
    """Message pairs (i, j), i before j, where j's ghost sender equals i's
    recipient: the owner of the history received i and later sent j."""
    msgs = [(pos, a) for pos, a in enumerate(actions, start=1) if isinstance(a, Msg)]
    for x in range(len(msgs)):
        for y in range(x + 1, len(msgs)):
            pi, mi = msgs[x]
            pj, mj = msgs[y]
            if mj.sender == mi.rec:
                yield pi, mi, pj, mj


def no_leaks(actions: Sequence[Action]) -> PredicateReport:
    """Ghost-sender form of the leak rule.

    Over a single user's history: whenever a nonce received in an earlier
    message is re-sent in a later one, the later message must go back to the
    ghost sender of the earlier one.  Note that an environment which forges
    claimed identities can make this fail for a perfectly honest user (the
    user cannot observe ghost senders); `no_app_leaks` is the form a user
    can actually guarantee.
    """
    for pi, mi, pj, mj in _received_then_sent_pairs(actions):
        shared = sorted(
            (n for n in set(mi.content) & set(mj.content) if is_nonce(n)),
        )
        if shared and mj.rec != mi.sender:
            return _fail(
                "no-leaks",
                f"nonce {shared[0]!r} received at {pi} from {mi.sender} "
                f"re-sent at {pj} to {mj.rec}",
            )
    return _ok("no-leaks")


def no_app_leaks(actions: Sequence[Action]) -> PredicateReport:
    """Claimed-sender form of the leak rule.

    Like `no_leaks`, but the required return target is the principal named
    inside the earlier message's content rather than its ghost sender.  An
    earlier message naming nobody constrains nothing.  When a message names
    several principals the rule is applied to each of them (the stricter
    reading of an ambiguous quantifier).
    """
    for pi, mi, pj, mj in _received_then_sent_pairs(actions):
        shared = sorted(
            (n for n in set(mi.content) & set(mj.content) if is_nonce(n)),
        )
        if not shared:
            continue
        for claimed in (i for i in mi.content if is_uid(i)):
            if mj.rec != claimed:
                return _fail(
                    "no-app-leaks",
                    f"nonce {shared[0]!r} received at {pi} claiming sender "
                    f"{claimed} re-sent at {pj} to {mj.rec}",
                )
    return _ok("no-app-leaks")


def no_forge(actions: Sequence[Action], owner: Uid | None = None) -> PredicateReport:
    """Users only sign honestly: a principal named in message content must be
    the message's true (ghost) sender.

    With `owner` given, only messages sent by that owner are constrained;
    this is the obligation chargeable to the owner of the history, whose
    received mail may well contain someone else's forgeries.
    """
    for pos, act in enumerate(actions, start=1):
        if not isinstance(act, Msg):
            continue
        if owner is not None and act.sender != owner:
            continue
        for item in act.content:
            if is_uid(item) and item != act.sender:
                return _fail(
                    "no-forge",
                    f"message at {pos} from {act.sender} claims identity {item}",
                )
    return _ok("no-forge")


def inv_sigma(state: GlobalState) -> PredicateReport:
    """Global state invariant: fresh nonces, recipient-only readability, and
    for every conforming user the obligations an honest implementation can
    actually discharge: no forged identities in messages they send, and
    forwarded nonces returned to the principal the carrying message named.

    The ghost-sender leak rule (`no_leaks`) is deliberately not charged to
    conforming users here: a forged claimed identity elsewhere in the run
    can break it for a user who behaved honestly on the information
    available to them.  It remains available as a separate diagnostic.
    """
    rep = unique_nonces(state.history)
    if not rep.holds:
        return _fail("inv-sigma", f"{rep.name}: {rep.witness}")
    rep = no_read_others(state)
    if not rep.holds:
        return _fail("inv-sigma", f"{rep.name}: {rep.witness}")
    for uid in sorted(state.users):
        if not state.users[uid].conforms:
            continue
        uh = u_hist(state.history, uid)
        for rep in (no_app_leaks(uh), no_forge(uh, owner=uid)):
            if not rep.holds:
                return _fail("inv-sigma", f"{rep.name} for user {uid}: {rep.witness}")
    return _ok("inv-sigma")


def dyn_inv(before: GlobalState, after: GlobalState) -> PredicateReport:
    """Transition invariant: the history only grows (prefix order), per-session
    knowledge only grows, and conformity flags never change."""
    n = len(before.history)
    if after.history[:n] != before.history:
        return _fail("dyn-inv", "history is not extended prefix-preservingly")
    for uid in sorted(before.users):
        b = before.users[uid]
        a = after.users.get(uid)
        if a is None:
            return _fail("dyn-inv", f"user {uid} disappeared")
        if a.conforms != b.conforms:
            return _fail("dyn-inv", f"conforms flag changed for {uid}")
        for sid, nonces in b.knows.items():
            if not nonces <= a.knows.get(sid, frozenset()):
                return _fail("dyn-inv", f"knows shrank for ({uid},{sid})")
    return _ok("dyn-inv")
