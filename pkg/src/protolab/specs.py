"""Protocol contracts as checkable verdicts.

`check_post_ns` is the full-functionality contract for one initiator /
responder pairing: mutual partner records, both sessions complete, and a
pair of distinct shared nonces nobody else holds.  `check_post_nsl_ft` is
the fault-tolerance layer: when a conforming third party holds one of the
initiator's session nonces and claims the initiator as partner, the
initiator must not have completed.

The `*_all` sweeps evaluate those contracts over every eligible session of
a state, which is what the run driver and the explorer consume: they do not
need to be told who attacked whom.

Rely conditions are treated as assumptions about environment steps.  When a
sweep finds a violated contract and is given the run's transitions, it
checks whether some environment step modified the pair's own records; if
so, the failure is downgraded to "environment broke rely" rather than
charged to the protocol.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

from .invariants import (
    PredicateReport,
    dyn_inv,
    inv_sigma,
    no_app_leaks,
    no_forge,
    no_read_others,
    unique_nonces,
)
from .model import GlobalState, Sid, Uid, u_hist

SPEC_POST_NS = "post-ns"
SPEC_NSL_FT = "nsl-ft"
SPEC_INV = "inv"


class PreconditionUnmet(Exception):
    """The before-state does not satisfy the contract's precondition."""


@dataclass(frozen=True)
class SpecVerdict:
    spec: str
    holds: bool
    detail: str = ""
    counterexample: object | None = None
    inconclusive: bool = False
    states: int = 0
    rely_broken: bool = False


# ── Fig-style frame conditions ───────────────────────────────────────────────


def check_guar_no_mods(before: GlobalState, after: GlobalState, u: Uid, sess: Sid) -> bool:
    """u's completion flag and partner binding for `sess` are unchanged."""
    b, a = before.users[u], after.users[u]
    return (
        a.complete.get(sess) == b.complete.get(sess)
        and a.int_partner.get(sess) == b.int_partner.get(sess)
    )


def check_no_mods_to_others(
    before: GlobalState, after: GlobalState, good: set[Uid], sess: Sid
) -> bool:
    """Users outside `good` are completely untouched, and good users are
    untouched outside the session `sess`."""
    for uid in before.users:
        if uid not in good:
            if after.users.get(uid) != before.users[uid]:
                return False
            continue
        b, a = before.users[uid], after.users[uid]
        if {k: v for k, v in a.complete.items() if k != sess} != {
            k: v for k, v in b.complete.items() if k != sess
        }:
            return False
        if {k: v for k, v in a.int_partner.items() if k != sess} != {
            k: v for k, v in b.int_partner.items() if k != sess
        }:
            return False
    return True


# ── full-functionality contract ──────────────────────────────────────────────


def _third_party_holders(state: GlobalState, pair, exclude: set[Uid]):
    for uid in sorted(state.users):
        if uid in exclude:
            continue
        for sid in sorted(state.users[uid].knows):
            if set(pair) <= state.users[uid].knows[sid]:
                yield uid, sid


def _post_ns_violations(
    after: GlobalState, frm: Uid, to: Uid, sf: Sid, st: Sid
) -> list[str]:
    v: list[str] = []
    fu, tu = after.users[frm], after.users[to]
    if fu.int_partner.get(sf) != to:
        v.append(f"partner: {frm} session {sf} is bound to {fu.int_partner.get(sf)}, not {to}")
    if tu.int_partner.get(st) != frm:
        v.append(f"partner: {to} session {st} is bound to {tu.int_partner.get(st)}, not {frm}")
    if not fu.complete.get(sf) or not tu.complete.get(st):
        v.append(f"completion: sessions ({frm},{sf})/({to},{st}) are not both complete")
    shared = sorted(fu.knows.get(sf, frozenset()) & tu.knows.get(st, frozenset()))
    pairs = list(itertools.combinations(shared, 2))
    if not pairs:
        v.append(f"shared-nonces: sessions ({frm},{sf})/({to},{st}) share fewer than two nonces")
        return v
    leaks = []
    for pair in pairs:
        holders = list(_third_party_holders(after, pair, {frm, to}))
        if not holders:
            return v  # some distinct pair is exclusive to the two endpoints
        leaks.append((pair, holders[0]))
    pair, (uid, sid) = leaks[0]
    v.append(
        "secrecy: nonces {"
        + ",".join(repr(n) for n in pair)
        + f"}} of sessions ({frm},{sf})/({to},{st}) also known to {uid} session {sid}"
    )
    return v


def check_post_ns(
    before: GlobalState, after: GlobalState, frm: Uid, to: Uid, sf: Sid, st: Sid
) -> SpecVerdict:
    bu, bt = before.users[frm], before.users[to]
    if bu.complete.get(sf) or bt.complete.get(st):
        raise PreconditionUnmet("a session is already complete in the before-state")
    if not bu.conforms or not bt.conforms:
        raise PreconditionUnmet("both endpoints must be conforming")
    violations = _post_ns_violations(after, frm, to, sf, st)
    return SpecVerdict(SPEC_POST_NS, holds=not violations, detail="; ".join(violations))


def check_post_ns_all(
    before: GlobalState, after: GlobalState, transitions=None
) -> SpecVerdict:
    """Contract sweep: every completed session of a conforming user whose
    recorded partner is also conforming must be half of a pairing that
    satisfies the full contract."""
    violations: list[str] = []
    affected_sessions: set[tuple[Uid, Sid]] = set()
    for uid in sorted(after.users):
        user = after.users[uid]
        if not user.conforms:
            continue
        for sid in sorted(user.complete):
            if not user.complete[sid]:
                continue
            partner = user.int_partner.get(sid)
            if partner is None or not after.users[partner].conforms:
                continue
            back_sessions = [
                sx
                for sx in sorted(after.users[partner].complete)
                if after.users[partner].complete[sx]
                and after.users[partner].int_partner.get(sx) == uid
            ]
            if not back_sessions:
                violations.append(
                    f"mutual-partner: {uid} session {sid} completed with partner {partner} "
                    f"but {partner} has no completed session with partner {uid}"
                )
                affected_sessions.add((uid, sid))
                nonces = sorted(user.knows.get(sid, frozenset()))
                for pair in itertools.combinations(nonces, 2):
                    holders = list(_third_party_holders(after, pair, {uid, partner}))
                    if holders:
                        huid, hsid = holders[0]
                        violations.append(
                            "secrecy: nonces {"
                            + ",".join(repr(n) for n in pair)
                            + f"}} of session ({uid},{sid}) also known to {huid} session {hsid}"
                        )
                        break
                continue
            if not any(
                not _post_ns_violations(after, partner, uid, sx, sid) for sx in back_sessions
            ):
                violations.extend(_post_ns_violations(after, partner, uid, back_sessions[0], sid))
                affected_sessions.add((uid, sid))
                affected_sessions.add((partner, back_sessions[0]))
    violations = list(dict.fromkeys(violations))
    if not violations:
        return SpecVerdict(SPEC_POST_NS, holds=True)
    rely_broken = _environment_broke_rely(transitions, affected_sessions)
    detail = "; ".join(violations)
    if rely_broken:
        detail = "environment broke rely (own records modified by another actor); " + detail
    return SpecVerdict(SPEC_POST_NS, holds=False, detail=detail, rely_broken=rely_broken)


def _environment_broke_rely(transitions, sessions: set[tuple[Uid, Sid]]) -> bool:
    """True when a step taken by some other actor modified the completion
    or partner record of one of the given (user, session) slots.

    `transitions` iterates (actor_id, session, before, after)."""
    if not transitions:
        return False
    for actor_id, step_session, b, a in transitions:
        for uid, sid in sessions:
            own = step_session == sid and step_session.split("#", 1)[0] == uid
            if not own and not check_guar_no_mods(b, a, uid, sid):
                return True
    return False


# ── fault-tolerance layer ────────────────────────────────────────────────────


def _nsl_ft_violations(after: GlobalState, frm: Uid, to: Uid | None, sf: Sid) -> list[str]:
    fu = after.users[frm]
    if not fu.complete.get(sf):
        return []
    exclude = {frm} | ({to} if to is not None else set())
    for nonce in sorted(fu.knows.get(sf, frozenset())):
        for uid in sorted(after.users):
            if uid in exclude or not after.users[uid].conforms:
                continue
            third = after.users[uid]
            for sid in sorted(third.knows):
                if nonce in third.knows[sid] and third.int_partner.get(sid) == frm:
                    return [
                        f"abnormal-termination: {frm} completed session {sf} while conforming "
                        f"{uid} session {sid} holds {nonce!r} and records {frm} as partner"
                    ]
    return []


def check_post_nsl_ft(
    before: GlobalState, after: GlobalState, frm: Uid, to: Uid, sf: Sid
) -> SpecVerdict:
    """The quantifier reading used here: the contract fails exactly when the
    initiator completed although some conforming third party holds one of
    the initiator's session nonces and records the initiator as partner.
    (An alternative parse scopes the completion flag outside the witness
    search; on the states this tool produces the two readings agree, and the
    implication reading is the one the contract's purpose dictates.)"""
    if not before.users[frm].conforms:
        raise PreconditionUnmet(f"initiator {frm} must be conforming")
    if before.users[frm].complete.get(sf):
        raise PreconditionUnmet(f"session ({frm},{sf}) already complete in the before-state")
    if any(before.users[to].complete.values()):
        raise PreconditionUnmet(f"partner {to} has a completed session in the before-state")
    violations = _nsl_ft_violations(after, frm, to, sf)
    return SpecVerdict(SPEC_NSL_FT, holds=not violations, detail="; ".join(violations))


def check_nsl_ft_all(before: GlobalState, after: GlobalState, transitions=None) -> SpecVerdict:
    violations: list[str] = []
    for uid in sorted(after.users):
        user = after.users[uid]
        if not user.conforms:
            continue
        for sid in sorted(user.complete):
            partner = user.int_partner.get(sid)
            violations.extend(_nsl_ft_violations(after, uid, partner, sid))
    violations = list(dict.fromkeys(violations))
    return SpecVerdict(SPEC_NSL_FT, holds=not violations, detail="; ".join(violations))


# ── trace-wide obligation suite ──────────────────────────────────────────────


def check_lemma_suite(run) -> list[PredicateReport]:
    """Audit a run record end to end:

    - the transition invariant on every adjacent state pair,
    - nonce freshness and recipient-only readability in every state,
    - for every conforming user, at every history prefix, the honest-code
      obligations (no forged identities in sent mail, forwarded nonces
      returned to the principal the carrying message named),
    - completion flags of conforming users never reset,
    - each step touches only the stepping principal's own session records,
    - an aborted machine's session never reaches completion.
    """
    reports: list[PredicateReport] = []
    states = run.checkable_states()

    rep = _first_failure(
        "dyn-inv",
        (dyn_inv(b, a) for b, a in zip(states, states[1:])),
    )
    reports.append(rep)
    reports.append(_first_failure("unique-nonces", (unique_nonces(s.history) for s in states)))
    reports.append(_first_failure("no-read-others", (no_read_others(s) for s in states)))
    reports.append(_first_failure("inv-sigma", (inv_sigma(s) for s in states)))

    def conforming_obligations():
        for state in states:
            for uid in sorted(state.users):
                if not state.users[uid].conforms:
                    continue
                uh = u_hist(state.history, uid)
                yield no_app_leaks(uh)
                yield no_forge(uh, owner=uid)

    reports.append(_first_failure("conforming-obligations", conforming_obligations()))

    def complete_monotone():
        for b, a in zip(states, states[1:]):
            for uid in sorted(b.users):
                if not b.users[uid].conforms:
                    continue
                for sid, was in b.users[uid].complete.items():
                    if was and not a.users[uid].complete.get(sid, False):
                        yield PredicateReport(
                            "complete-monotone",
                            False,
                            f"completion reset for ({uid},{sid})",
                        )
        yield PredicateReport("complete-monotone", True)

    reports.append(_first_failure("complete-monotone", complete_monotone()))

    def step_frames():
        for actor_id, sess, b, a in run.transitions():
            owner = sess.split("#", 1)[0]
            if not check_no_mods_to_others(b, a, {owner}, sess):
                yield PredicateReport(
                    "guarantee-no-mods-to-others",
                    False,
                    f"step by {actor_id} modified records outside its own session",
                )
        yield PredicateReport("guarantee-no-mods-to-others", True)

    reports.append(_first_failure("guarantee-no-mods-to-others", step_frames()))

    def abort_exclusive():
        final = states[-1]
        for machine in run.machines:
            if machine.status.value == "aborted":
                if any(s.users[machine.owner].complete.get(machine.session) for s in states):
                    yield PredicateReport(
                        "abort-never-completes",
                        False,
                        f"aborted session ({machine.owner},{machine.session}) shows complete",
                    )
            if machine.status.value == "completed" and not final.users[machine.owner].complete.get(
                machine.session
            ):
                yield PredicateReport(
                    "abort-never-completes",
                    False,
                    f"completed machine without completion flag ({machine.owner},{machine.session})",
                )
        yield PredicateReport("abort-never-completes", True)

    reports.append(_first_failure("abort-never-completes", abort_exclusive()))
    return reports


def _first_failure(name: str, reports) -> PredicateReport:
    for rep in reports:
        if not rep.holds:
            return rep
    return PredicateReport(name, True)


def evaluate_run_specs(run, names) -> list[SpecVerdict]:
    """Evaluate the requested specs over a finished run record."""
    states = run.checkable_states()
    initial, final = states[0], states[-1]
    out: list[SpecVerdict] = []
    for name in names:
        if name == SPEC_POST_NS:
            out.append(check_post_ns_all(initial, final, list(run.transitions())))
        elif name == SPEC_NSL_FT:
            out.append(check_nsl_ft_all(initial, final))
        elif name == SPEC_INV:
            reports = check_lemma_suite(run)
            failing = [r for r in reports if not r.holds]
            if failing:
                out.append(
                    SpecVerdict(
                        SPEC_INV, holds=False, detail=f"{failing[0].name}: {failing[0].witness}"
                    )
                )
            else:
                out.append(SpecVerdict(SPEC_INV, holds=True))
        else:
            raise ValueError(f"unknown spec {name!r}")
    return out


def resolve_spec_names(token: str) -> list[str]:
    if token == "all":
        return [SPEC_POST_NS, SPEC_NSL_FT, SPEC_INV]
    if token in (SPEC_POST_NS, SPEC_NSL_FT, SPEC_INV):
        return [token]
    raise ValueError(f"unknown spec {token!r}")
