"""Simulated quantum and classical channels.

Channels are synchronous and lossless; their job is bookkeeping and giving an
adversary its one seam.  A quantum delivery may invoke an interception hook
before it completes; every (tuple, recipient) pair must be delivered exactly
once per run.  Classical broadcasts go onto an append-only public log that the
spymaster and any eavesdropper read alike.  Channel objects live for a single
run and are never shared across runs.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

from .bits import BitString


class ProtocolIntegrityError(RuntimeError):
    """A channel-level rule was violated (e.g. a qubit delivered twice)."""


@dataclass(frozen=True)
class QuantumEnvelope:
    """One qubit in transit: tuple index, destination player, qubit handle.

    ``recipient`` is a player id: agents are 0..n-2, the spymaster is n-1.
    ``qubit`` is the qubit's index in the joint simulated state, or None when
    the engine never materializes a state.
    """

    tuple_index: int
    recipient: int
    qubit: Optional[int] = None


@dataclass(frozen=True)
class ClassicalMessage:
    """A public broadcast: the sending agent's index and her measured register."""

    sender: int
    payload: BitString
    visibility: str = "public"


@dataclass
class QuantumChannel:
    """Delivers qubits during distribution, at most once per (tuple, recipient)."""

    events: list = field(default_factory=list)
    _delivered: set = field(default_factory=set)

    def deliver(self, envelope: QuantumEnvelope, hook: Optional[Callable] = None) -> None:
        key = (envelope.tuple_index, envelope.recipient)
        if key in self._delivered:
            raise ProtocolIntegrityError(
                f"tuple {envelope.tuple_index} already delivered to player {envelope.recipient}"
            )
        self._delivered.add(key)
        note = None
        if hook is not None:
            note = hook(envelope)
        self.events.append(
            {"type": "deliver", "tuple": envelope.tuple_index,
             "recipient": envelope.recipient, "note": note}
        )


@dataclass
class ClassicalChannel:
    """Append-only, totally ordered public log of broadcasts."""

    log: list = field(default_factory=list)

    def broadcast(self, message: ClassicalMessage) -> None:
        self.log.append(message)

    def public_view(self) -> tuple[ClassicalMessage, ...]:
        """Everything on the channel so far, in broadcast order."""
        return tuple(self.log)
