"""Eavesdropper models and what each one actually buys Eve.

Three active strategies are modeled, plus a passive log reader:

* intercept-and-resend: Eve measures every qubit in transit in a fixed basis
  and forwards a fresh computational-basis qubit prepared from the result;
* photon-number splitting: a fraction of the entangled tuples are emitted one
  qubit larger, and Eve keeps the extra qubit, mimicking a player;
* blinding: Eve destroys a third-party source's tuples outright and
  distributes her own enlarged tuples, keeping one qubit of each.

Every model carries its own seed; Eve's randomness never shares a stream with
the honest parties'.  After a run, a report records what she saw, her best
guess of the secret, whether the guess hit, and whether the spymaster's
reconstruction was silently corrupted.

Eve's guessing rules: with broadcasts alone (passive, intercept) she XORs the
broadcasts, which is only right when the spymaster measured all zeros.  When
she holds a register of her own (splitting, blinding) she knows the secret up
to the spymaster's unknown measurement, so she completes the XOR with a
uniform blind guess of that register, succeeding with probability exactly
2^-m.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

from .bits import BitString, random_bits, xor_all
from .channels import QuantumEnvelope
from .statevector import QuantumState, apply_hadamard, measure_subset

ATTACK_KINDS = ("none", "intercept", "pns", "blinding")


@dataclass(frozen=True)
class AttackModel:
    """Tagged attack selector with per-model parameters.

    ``basis`` is the intercept measurement basis; ``eve_basis`` is Eve's
    strategy for a register she holds herself (``"x"`` = Hadamard then
    measure, like the players; ``"z"`` = measure immediately on receipt,
    which collapses the tuples and wrecks the run for everyone).
    """

    kind: str = "none"
    basis: str = "z"
    eve_basis: str = "x"
    pns_fraction: float = 1.0
    eve_seed: int = 0

    def __post_init__(self):
        if self.kind not in ATTACK_KINDS:
            raise ValueError(f"unknown attack kind {self.kind!r}")
        if self.basis not in ("z", "x"):
            raise ValueError(f"intercept basis must be 'z' or 'x', got {self.basis!r}")
        if self.eve_basis not in ("z", "x"):
            raise ValueError(f"eve basis must be 'z' or 'x', got {self.eve_basis!r}")
        if not 0.0 <= self.pns_fraction <= 1.0:
            raise ValueError(f"pns fraction must be in [0, 1], got {self.pns_fraction}")

    @property
    def active(self) -> bool:
        return self.kind != "none"

    @property
    def holds_register(self) -> bool:
        """True when Eve ends up with her own qubit in (some) tuples."""
        return self.kind in ("pns", "blinding")

    def validate_source(self, source: str) -> None:
        if self.kind == "blinding" and source != "third-party":
            raise ValueError(
                "blinding requires a third-party source; a player-operated "
                "source leaves Eve nothing to substitute"
            )

    def to_dict(self) -> dict:
        if not self.active:
            return {"kind": "none"}
        out = {"kind": self.kind, "eve_seed": self.eve_seed}
        if self.kind == "intercept":
            out["basis"] = self.basis
        else:
            out["eve_basis"] = self.eve_basis
        if self.kind == "pns":
            out["fraction"] = self.pns_fraction
        return out


@dataclass(frozen=True)
class EveReport:
    """Everything Eve saw in one run, her guess, and how it went."""

    observed: dict
    guess: BitString
    success: bool
    alice_corrupted: bool

    def to_dict(self) -> dict:
        return {
            "observed": self.observed,
            "guess": str(self.guess),
            "success": self.success,
            "alice_corrupted": self.alice_corrupted,
        }


@dataclass
class RunView:
    """The finished run as the adversary code sees it."""

    model: AttackModel
    n: int
    m: int
    secret: BitString
    a: BitString
    ys: tuple
    reconstructed: BitString
    broadcasts: tuple
    intercepted: tuple = ()
    y_e: Optional[BitString] = None
    affected: frozenset = field(default_factory=frozenset)


def affected_tuples(model: AttackModel, m: int, rng_eve) -> frozenset:
    """Which tuple positions Eve holds a qubit in."""
    if model.kind == "blinding":
        return frozenset(range(m))
    if model.kind == "pns":
        draws = rng_eve.random(m)
        return frozenset(j for j in range(m) if draws[j] < model.pns_fraction)
    return frozenset()


def make_intercept_hook(model: AttackModel, state: QuantumState, rng_eve, records: list):
    """Dense-engine delivery hook: measure in Eve's basis, resend |result>.

    Measuring in the X basis is a Hadamard followed by a computational
    measurement, which leaves the qubit in the computational state matching
    the result; so for either basis the collapsed qubit is exactly the fresh
    photon Eve forwards.
    """

    def hook(envelope: QuantumEnvelope):
        if model.basis == "x":
            apply_hadamard(state, envelope.qubit)
        outcome, _ = measure_subset(state, [envelope.qubit], rng_eve)
        bit = outcome.value
        records.append((envelope.tuple_index, envelope.recipient, bit))
        return {"kind": "intercept", "basis": model.basis, "bit": bit}

    return hook


def delivery_note(model: AttackModel, tuple_index: int, affected) -> Optional[dict]:
    """Channel-event annotation for tuples Eve tampered with at the source."""
    if model.kind == "blinding":
        return {"kind": "blinding-substitute"}
    if model.kind == "pns" and tuple_index in affected:
        return {"kind": "pns-split"}
    return None


def intercept_factorized_draws(model: AttackModel, n: int, m: int, source: str, rng_eve):
    """Eve's measurement record under interception, without a state vector.

    Returns ``(records, forced_a)``.  ``records`` lists (tuple, recipient,
    bit) in delivery order.  ``forced_a`` is the spymaster's now-deterministic
    measurement when her qubit stayed quantum while Eve X-measured everything
    else; None when her register ends up uniform.

    The per-tuple rules mirror a collapsing GHZ tuple:
    * Z basis: all intercepted bits of a tuple agree and are a fair coin.
    * X basis: intercepted bits are fair coins, except that measuring the
      whole tuple constrains their XOR to 0, so the last recipient's bit
      completes the parity.
    """
    recipients = list(range(n - 1)) if source == "spymaster" else list(range(n))
    records = []
    forced_a_bits = []
    for j in range(m):
        if model.basis == "z":
            b = int(rng_eve.integers(0, 2))
            records.extend((j, r, b) for r in recipients)
        else:
            bits = [int(rng_eve.integers(0, 2)) for _ in recipients[:-1]]
            if source == "third-party":
                bits.append(sum(bits) % 2)  # full-tuple X parity is even
            else:
                bits.append(int(rng_eve.integers(0, 2)))
            records.extend(zip([j] * len(recipients), recipients, bits))
            forced_a_bits.append(sum(bits) % 2)
    forced_a = None
    if model.basis == "x" and source == "spymaster":
        forced_a = BitString.from_bits(forced_a_bits)
    return records, forced_a


# ---------------------------------------------------------------------------
# reports
# ---------------------------------------------------------------------------

def eve_passive_guess(broadcasts: Sequence[BitString], m: Optional[int] = None, rng=None) -> BitString:
    """Eve's guess from the public log alone: XOR of all broadcasts.

    That guess equals the secret exactly when the spymaster measured all
    zeros, the one value the restart rule forbids.  With nothing observed she
    can only draw uniformly, which needs the length and a generator.
    """
    if broadcasts:
        return xor_all(list(broadcasts))
    if m is None or rng is None:
        raise ValueError("with no broadcasts a length and a generator are required")
    return random_bits(m, rng)


def attack_intercept_resend(view: RunView, rng_eve) -> EveReport:
    """Report for intercept-and-resend: intercepted bits plus the passive guess."""
    guess = eve_passive_guess(view.broadcasts)
    return EveReport(
        observed={
            "intercepted": [list(rec) for rec in view.intercepted],
            "broadcasts": [str(b) for b in view.broadcasts],
        },
        guess=guess,
        success=guess == view.secret,
        alice_corrupted=view.reconstructed != view.secret,
    )


def _extra_player_report(view: RunView, rng_eve) -> EveReport:
    # Eve knows  secret = a xor y_e xor (xor of broadcasts)  but lacks a,
    # so she completes the equation with a uniform blind guess of a.
    a_guess = random_bits(view.m, rng_eve)
    guess = xor_all([view.y_e, *view.broadcasts, a_guess])
    return EveReport(
        observed={
            "y_e": str(view.y_e),
            "affected_tuples": sorted(view.affected),
            "broadcasts": [str(b) for b in view.broadcasts],
        },
        guess=guess,
        success=guess == view.secret,
        alice_corrupted=view.reconstructed != view.secret,
    )


def attack_pns(view: RunView, rng_eve) -> EveReport:
    """Report for photon-number splitting: Eve as an uninvited extra player."""
    return _extra_player_report(view, rng_eve)


def attack_blinding(view: RunView, rng_eve) -> EveReport:
    """Report for blinding: splitting at fraction one, with Eve as the source."""
    return _extra_player_report(view, rng_eve)


def build_report(view: RunView, rng_eve) -> EveReport:
    if view.model.kind == "intercept":
        return attack_intercept_resend(view, rng_eve)
    if view.model.kind == "pns":
        return attack_pns(view, rng_eve)
    if view.model.kind == "blinding":
        return attack_blinding(view, rng_eve)
    raise ValueError(f"no report for attack kind {view.model.kind!r}")
