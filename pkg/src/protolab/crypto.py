"""Symbolic public-key encryption and the wire-level message medium.

Recipient-only readability is realised here by sealed terms: an `EncMsg`
exposes nothing but the public key it was built under, and only `dec` with
the matching secret key reveals the payload.  Wire messages carry no
recipient field at all; the recipient is implicit in the key.  The ghost
originator is retained for checking only.

Equality of sealed terms is structural, so an observer can recognise a
replayed ciphertext without being able to open it.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .model import GlobalState, Invent, Item, Msg, PKey, SKey, Uid


class EmptyContent(Exception):
    """Encryption of an empty item sequence."""


class UnknownKey(Exception):
    """A wire message was built under a key no registry entry owns."""


@dataclass(frozen=True)
class DecryptFailure:
    """Returned (not raised) when a secret key does not match; roles treat
    the carrying message as unreadable."""


DECRYPT_FAILED = DecryptFailure()


class EncMsg:
    """Sealed term.  The payload has no public accessor; use `dec`."""

    __slots__ = ("_payload", "pk")

    def __init__(self, payload: Sequence[Item], pk: PKey) -> None:
        if not payload:
            raise EmptyContent("cannot encrypt an empty content sequence")
        object.__setattr__(self, "_payload", tuple(payload))
        object.__setattr__(self, "pk", pk)

    def __setattr__(self, name, value):  # pragma: no cover - guard only
        raise AttributeError("EncMsg is immutable")

    def __eq__(self, other) -> bool:
        return (
            isinstance(other, EncMsg)
            and self._payload == other._payload
            and self.pk == other.pk
        )

    def __hash__(self) -> int:
        return hash(("enc", self._payload, self.pk))

    def __repr__(self) -> str:
        return f"enc(<sealed>,{self.pk})"


@dataclass(frozen=True)
class WireMsg:
    body: EncMsg
    ghost_sender: Uid  # checking only, never readable by roles


@dataclass(frozen=True)
class KeyRegistry:
    pkeys: dict[Uid, PKey]
    skeys: dict[Uid, SKey]

    def owner_of_pkey(self, pk: PKey) -> Uid | None:
        owners = sorted(u for u, key in self.pkeys.items() if key == pk)
        return owners[0] if owners else None


def registry_from_state(state: GlobalState) -> KeyRegistry:
    return KeyRegistry(
        pkeys=dict(state.pkeys),
        skeys={uid: user.skey for uid, user in state.users.items()},
    )


def match(pk: PKey, sk: SKey, registry: KeyRegistry) -> bool:
    """Keys match exactly when one principal owns both."""
    return any(
        registry.pkeys.get(uid) == pk and registry.skeys.get(uid) == sk
        for uid in registry.pkeys
    )


def enc(content: Sequence[Item], pk: PKey) -> EncMsg:
    return EncMsg(tuple(content), pk)


def dec(m: EncMsg, sk: SKey, registry: KeyRegistry):
    """Payload iff the keys match, otherwise the DecryptFailure value."""
    if match(m.pk, sk, registry):
        return m._payload
    return DECRYPT_FAILED


def payload_for_trace(m: EncMsg) -> tuple[Item, ...]:
    """Omniscient access for trace records and projection; the returned
    items are tagged as ghost data wherever they are rendered."""
    return m._payload


def abstract_of(wire_history: Sequence, registry: KeyRegistry) -> tuple:
    """Project a wire-level history to the recipient-field model: the
    recipient is the owner of the encryption key (lowest-named owner if the
    registry is degenerate and several share one), the sender is the ghost
    originator, the content is the sealed payload.  Inventions map to
    themselves."""
    out = []
    for act in wire_history:
        if isinstance(act, Invent):
            out.append(act)
            continue
        assert isinstance(act, WireMsg)
        owner = registry.owner_of_pkey(act.body.pk)
        if owner is None:
            raise UnknownKey(f"no registry owner for {act.body.pk!r}")
        out.append(Msg(rec=owner, sender=act.ghost_sender, content=payload_for_trace(act.body)))
    return tuple(out)


class ConcreteMedium:
    """Wire-level medium: sends encrypt for the target's public key, receives
    succeed only where decryption does."""

    level = "concrete"

    def __init__(self, registry: KeyRegistry) -> None:
        self.registry = registry

    def send_action(self, owner: Uid, target: Uid, items: Sequence[Item], state: GlobalState):
        return WireMsg(body=enc(tuple(items), self.registry.pkeys[target]), ghost_sender=owner)

    def readable(self, action, me: Uid, state: GlobalState):
        if isinstance(action, WireMsg):
            out = dec(action.body, self.registry.skeys[me], self.registry)
            if not isinstance(out, DecryptFailure):
                return out
        return None

    def is_message(self, action) -> bool:
        return isinstance(action, WireMsg)

    def matches_sent(self, action, me: Uid, target: Uid, items, state: GlobalState) -> bool:
        return (
            isinstance(action, WireMsg)
            and action.ghost_sender == me
            and action.body == enc(tuple(items), self.registry.pkeys[target])
        )

    def replay_action(self, action, me: Uid):
        return WireMsg(body=action.body, ghost_sender=me)


def check_refinement(scenario):
    """Run a scripted scenario at both levels and check that the wire run
    projects exactly onto the recipient-field run: identical histories,
    identical user records, and recipient-only readability on every
    projected state."""
    from .invariants import no_read_others
    from .runner import execute_scripted
    from .specs import SpecVerdict

    abstract_run = execute_scripted(scenario, level="abstract")
    concrete_run = execute_scripted(scenario, level="concrete")
    registry = concrete_run.registry
    assert registry is not None

    projected = abstract_of(concrete_run.final_state.history, registry)
    if projected != abstract_run.final_state.history:
        return SpecVerdict(
            spec="refinement",
            holds=False,
            detail="projected wire history differs from the recipient-field history",
        )
    if concrete_run.final_state.users != abstract_run.final_state.users:
        return SpecVerdict(
            spec="refinement", holds=False, detail="final user records differ across levels"
        )
    for state in concrete_run.checkable_states():
        rep = no_read_others(state)
        if not rep.holds:
            return SpecVerdict(
                spec="refinement",
                holds=False,
                detail=f"projected state breaks recipient-only readability: {rep.witness}",
            )
    return SpecVerdict(spec="refinement", holds=True)
