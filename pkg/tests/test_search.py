"""Bounded exploration: rediscovery of the interception attack, its absence
for the identity-checked variant, determinism, and layering."""

import pytest

from protolab.model import Msg, Nonce, state_key
from protolab.scenario import ScenarioError, load_scenario, parse_scenario

from conftest import scenario
from protolab.search import explore
from protolab.specs import check_post_ns_all

HONEST_SEARCH = """protolab-scenario v1
user A conforms=true
user B conforms=true
role sender user=A peer=B variant=ns
role receiver user=B variant=ns
intruder none
bounds max_steps=14 max_content_len=2 max_intruder_invents=0 max_sessions_per_user=4
level abstract
"""


@pytest.fixture(scope="module")
def ns_cex():
    return explore(load_scenario(scenario('ns-search')), spec="post-ns")


@pytest.fixture(scope="module")
def nsl_quiescents():
    collected = []
    verdict = explore(
        load_scenario(scenario('nsl-search')), spec="all", on_quiescent=collected.append
    )
    return verdict, collected


def message_shapes(history):
    """(recipient, ghost sender, content) triples with nonces renamed by
    first occurrence, for comparison up to nonce renaming."""
    renaming = {}
    shapes = []
    for act in history:
        if not isinstance(act, Msg):
            continue
        content = []
        for item in act.content:
            if isinstance(item, Nonce):
                renaming.setdefault(item, f"x{len(renaming) + 1}")
                content.append(renaming[item])
            else:
                content.append(item)
        shapes.append((act.rec, act.sender, tuple(content)))
    return shapes


def test_ns_search_finds_the_classic_interception(ns_cex):
    assert not ns_cex.holds and not ns_cex.inconclusive
    assert ns_cex.spec == "post-ns"
    run = ns_cex.counterexample
    assert message_shapes(run.final_state.history) == [
        ("I", "A", ("A", "x1")),
        ("B", "I", ("A", "x1")),
        ("A", "B", ("x1", "x2")),
        ("I", "A", ("x2",)),
        ("B", "I", ("x2",)),
    ]
    final = run.final_state
    assert final.users["B"].complete["B#1"]
    assert final.users["B"].int_partner["B#1"] == "A"
    assert {Nonce(1), Nonce(2)} <= final.users["I"].knows["I#1"]
    assert "mutual-partner" in ns_cex.detail and "secrecy" in ns_cex.detail


def test_ns_counterexample_witnesses_are_checkable(ns_cex):
    run = ns_cex.counterexample
    verdict = check_post_ns_all(run.initial, run.final_state)
    assert not verdict.holds


def test_nsl_search_holds_within_bounds(nsl_quiescents):
    verdict, _ = nsl_quiescents
    assert verdict.holds and not verdict.inconclusive
    assert verdict.states > 0


def test_layering_mutually_complete_states_satisfy_full_contract(nsl_quiescents):
    from protolab.runner import build_execution

    verdict, collected = nsl_quiescents
    initial = build_execution(load_scenario(scenario('nsl-search')), "abstract").state
    seen = set()
    mutual = 0
    for state in collected:
        key = state_key(state)
        if key in seen:
            continue
        seen.add(key)
        has_conforming_pair = any(
            done and user.int_partner.get(sid) is not None
            and state.users[user.int_partner[sid]].conforms
            for user in state.users.values()
            if user.conforms
            for sid, done in user.complete.items()
        )
        if has_conforming_pair:
            mutual += 1
            assert check_post_ns_all(initial, state).holds
    assert mutual > 0


def test_state_counts_are_reproducible(ns_cex):
    again = explore(load_scenario(scenario('ns-search')), spec="post-ns")
    assert again.states == ns_cex.states
    assert again.counterexample.digests == ns_cex.counterexample.digests


def test_counterexample_replays_to_identical_states(ns_cex):
    from protolab.runner import replay_doc

    run = ns_cex.counterexample
    divergence, replayed = replay_doc(run.to_doc([ns_cex]))
    assert divergence is None
    assert replayed.final_state == run.final_state  # ghost fields included


def test_max_steps_zero_trivially_holds():
    verdict = explore(load_scenario(scenario('ns-search')).with_max_steps(0))
    assert verdict.holds
    assert verdict.states == 1


def test_too_small_bound_is_inconclusive():
    verdict = explore(load_scenario(scenario('ns-search')).with_max_steps(5), spec="post-ns")
    assert not verdict.holds
    assert verdict.inconclusive


def test_honest_only_exploration_never_violates():
    verdict = explore(parse_scenario(HONEST_SEARCH), spec="post-ns")
    assert verdict.holds and not verdict.inconclusive


def test_workers_do_not_change_verdict_or_counterexample(ns_cex):
    parallel = explore(load_scenario(scenario('ns-search')), spec="post-ns", workers=2)
    assert parallel.holds == ns_cex.holds
    assert parallel.counterexample.digests == ns_cex.counterexample.digests
    assert parallel.detail == ns_cex.detail


def test_explore_rejects_scripted_scenarios():
    with pytest.raises(ScenarioError):
        explore(load_scenario(scenario('lowe-on-ns')))


def test_symmetry_reduction_never_changes_the_verdict(ns_cex):
    reduced = explore(
        load_scenario(scenario('ns-search')), spec="post-ns", symmetry_reduction=True
    )
    assert reduced.holds == ns_cex.holds
    assert reduced.counterexample.digests == ns_cex.counterexample.digests
    assert reduced.states == ns_cex.states  # fresh nonces are already canonical


def test_invention_moves_are_searched_and_bounded():
    from dataclasses import replace

    sc = load_scenario(scenario('ns-search'))
    sc = replace(sc, bounds=replace(sc.bounds, max_intruder_invents=1, max_steps=6))
    verdict = explore(sc, spec="post-ns")
    # six steps cannot complete a session, so the bound cuts live branches;
    # the point is that invention moves enumerate finitely and deterministically
    assert verdict.inconclusive
    again = explore(sc, spec="post-ns")
    assert again.states == verdict.states
