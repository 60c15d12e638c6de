"""One complete aggregation game, end to end.

A run distributes m entangled n-tuples to the players, lets every agent fold
her zero-padded key into the shared state through a phase oracle, applies the
final Hadamard layer, measures, enforces the all-zeros restart rule, collects
the agents' broadcasts, and lets the spymaster XOR everything back together.
The correlation law guarantees that, absent an adversary, her result is the
complete secret on every single shot.

Two interchangeable engines produce the measurement outcomes:

* ``dense``       -- a full state-vector simulation of the joint circuit;
* ``factorized``  -- per-position sampling from the parity-constrained
  distribution the circuit provably induces (each tuple contributes one
  independent position: the joint outcome is uniform over the bit tuples
  whose XOR equals that secret bit).

The two engines agree exactly in distribution; ``exact_dense_distribution``
(integer arithmetic, no sampling, no floats) and ``factorized_distribution``
(closed form) exist so the agreement can be checked as an identity of
rational numbers rather than statistically.

Randomness: every (shot, restart attempt) gets its own counter-based stream,
keyed by (master seed, shot index, attempt, role).  Runs are therefore pure
functions of (config, adversary, shot index) and can execute concurrently
in any order.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterator, Optional

import numpy as np

from . import adversary as adv
from .bits import BitString, KeyLayout, complete_secret, extend_partial_key, random_bits, reconstruct_secret
from .channels import ClassicalChannel, ClassicalMessage, QuantumChannel, QuantumEnvelope
from .statevector import (
    DENSE_QUBIT_LIMIT,
    QuantumState,
    ensure_normalized,
    apply_hadamard,
    apply_phase_oracle,
    apply_schedule,
    ghz_schedule,
    measure_all,
    measure_subset,
)

SOURCES = ("spymaster", "third-party")
ENGINES = ("dense", "factorized")

# role tags for the per-(shot, attempt) Philox streams
_STREAM_MEASURE = 0
_STREAM_EVE = 1
_STREAM_KEYS = 2

PHASE_LABELS = ("psi0", "psi1", "psi2", "psi3", "psi4")


class RestartLimitExceeded(RuntimeError):
    """Every allowed attempt measured all zeros; astronomically unlikely."""


def stream(seed: int, shot: int, attempt: int, role: int) -> np.random.Generator:
    """Counter-based generator for one (seed, shot, attempt, role) cell."""
    key = (
        (seed & 0xFFFFFFFFFFFFFFFF)
        | (shot & 0xFFFFFFFF) << 64
        | (attempt & 0xFFFF) << 96
        | (role & 0xF) << 112
    )
    return np.random.Generator(np.random.Philox(key=key))


@dataclass(frozen=True)
class ProtocolConfig:
    """Everything one shot depends on, besides the adversary."""

    n: int
    layout: KeyLayout
    seed: int
    partial_keys: Optional[tuple] = None  # None = sample fresh keys per shot
    source: str = "spymaster"
    engine: str = "factorized"
    max_restarts: int = 64
    restart_on_zero: bool = True
    dense_limit: int = DENSE_QUBIT_LIMIT

    def __post_init__(self):
        if self.n < 3:
            raise ValueError(f"need at least 3 players, got n={self.n}")
        if self.layout.num_agents != self.n - 1:
            raise ValueError(
                f"layout has {self.layout.num_agents} keys but there are {self.n - 1} agents"
            )
        if self.source not in SOURCES:
            raise ValueError(f"source must be one of {SOURCES}, got {self.source!r}")
        if self.engine not in ENGINES:
            raise ValueError(f"engine must be one of {ENGINES}, got {self.engine!r}")
        if self.max_restarts < 1:
            raise ValueError("max_restarts must be at least 1")
        if self.partial_keys is not None:
            keys = tuple(self.partial_keys)
            object.__setattr__(self, "partial_keys", keys)
            if len(keys) != self.layout.num_agents:
                raise ValueError(
                    f"expected {self.layout.num_agents} partial keys, got {len(keys)}"
                )
            for i, key in enumerate(keys):
                if key.length != self.layout.lengths[i]:
                    raise ValueError(
                        f"partial key {i} has length {key.length}, layout says {self.layout.lengths[i]}"
                    )

    @property
    def m(self) -> int:
        return self.layout.total

    def keys_for_shot(self, shot_index: int) -> tuple:
        if self.partial_keys is not None:
            return self.partial_keys
        rng = stream(self.seed, shot_index, 0, _STREAM_KEYS)
        return tuple(random_bits(l, rng) for l in self.layout.lengths)


@dataclass(frozen=True)
class PhaseMark:
    label: str
    digest: Optional[str] = None


@dataclass(frozen=True)
class Transcript:
    """Full record of one run; serializes with stable field names."""

    n: int
    m: int
    layout: tuple
    source: str
    engine: str
    seed: int
    shot_index: int
    secret: BitString
    a: BitString
    ys: tuple
    broadcasts: tuple
    reconstructed: BitString
    restarts: int
    phases: tuple
    events: tuple
    attack: Optional[adv.AttackModel]
    attack_events: tuple
    y_e: Optional[BitString] = None

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "m": self.m,
            "layout": list(self.layout),
            "source": self.source,
            "engine": self.engine,
            "seed": self.seed,
            "shot": self.shot_index,
            "s": str(self.secret),
            "a": str(self.a),
            "ys": [str(y) for y in self.ys],
            "y_e": None if self.y_e is None else str(self.y_e),
            "broadcasts": [
                {"sender": b.sender, "payload": str(b.payload)} for b in self.broadcasts
            ],
            "reconstructed": str(self.reconstructed),
            "restarts": self.restarts,
            "phases": [
                {"label": p.label, "digest": p.digest} for p in self.phases
            ],
            "events": list(self.events),
            "attack": (self.attack or adv.AttackModel()).to_dict(),
            "attack_events": list(self.attack_events),
        }

    def to_json_line(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))


def fcp_holds(transcript: Transcript, s: BitString) -> bool:
    """Does a xor y_{n-2} xor ... xor y_0 equal s for this run?"""
    return reconstruct_secret(transcript.a, list(transcript.ys)) == s


def outcome_value(a: BitString, ys, y_e: Optional[BitString] = None) -> int:
    """Joint outcome as one integer: y_e | a | y_{n-2} | ... | y_0, agent 0 lowest."""
    m = a.length
    value = 0
    for i, y in enumerate(ys):
        value |= y.value << (i * m)
    value |= a.value << (len(ys) * m)
    if y_e is not None:
        value |= y_e.value << ((len(ys) + 1) * m)
    return value


def split_outcome(value: int, n: int, m: int, with_eve: bool = False):
    """Inverse of outcome_value."""
    mask = (1 << m) - 1
    ys = tuple(BitString((value >> (i * m)) & mask, m) for i in range(n - 1))
    a = BitString((value >> ((n - 1) * m)) & mask, m)
    y_e = BitString((value >> (n * m)) & mask, m) if with_eve else None
    return a, ys, y_e


def is_parity_valid(value: int, n: int, m: int, s: BitString) -> bool:
    """Membership in the correlated outcome set (players only, no Eve bits)."""
    acc = 0
    mask = (1 << m) - 1
    for i in range(n):
        acc ^= (value >> (i * m)) & mask
    return acc == s.value


# ---------------------------------------------------------------------------
# one attempt, either engine
# ---------------------------------------------------------------------------

@dataclass
class _Attempt:
    a: BitString
    ys: tuple
    y_e: Optional[BitString]
    intercepted: tuple
    affected: frozenset
    phases: tuple
    events: tuple


def _delivery_plan(n: int, m: int, source: str):
    """(tuple, recipient) pairs in delivery order; the source's own qubit never transits."""
    recipients = list(range(n - 1)) if source == "spymaster" else list(range(n))
    return [(j, r) for j in range(m) for r in recipients]


def _digest(arr: np.ndarray) -> str:
    return hashlib.sha256(arr.tobytes()).hexdigest()[:16]


def _attempt_dense(config: ProtocolConfig, keys, model: adv.AttackModel, rng, rng_eve) -> _Attempt:
    n, m = config.n, config.m
    affected = adv.affected_tuples(model, m, rng_eve) if model.active else frozenset()
    with_eve = model.holds_register
    participants = n + 1 if with_eve else n
    total_qubits = participants * m
    if total_qubits > config.dense_limit:
        raise ValueError(
            f"dense engine needs {total_qubits} qubits, over the {config.dense_limit} limit; "
            "use the factorized engine"
        )

    state = QuantumState(total_qubits, limit=config.dense_limit)
    for j in range(m):
        size = n + 1 if (with_eve and j in affected) else n
        qubit_map = [r * m + j for r in range(size)]  # player r holds qubit r*m+j, Eve is player n
        apply_schedule(state, ghz_schedule(size), qubit_map)

    channel = QuantumChannel()
    intercepted: list = []
    hook = (
        adv.make_intercept_hook(model, state, rng_eve, intercepted)
        if model.kind == "intercept"
        else None
    )
    for j, recipient in _delivery_plan(n, m, config.source):
        channel.deliver(QuantumEnvelope(j, recipient, qubit=recipient * m + j), hook)
        if hook is None and model.holds_register:
            channel.events[-1]["note"] = adv.delivery_note(model, j, affected)

    # An immediate Z measurement by Eve collapses her tuples on receipt.
    eve_z_bits = {}
    if with_eve and model.eve_basis == "z" and affected:
        for j in sorted(affected):
            outcome, _ = measure_subset(state, [n * m + j], rng_eve)
            eve_z_bits[j] = outcome.value

    phases = [PhaseMark("psi0", _digest(state.amplitudes))]
    # agents' output qubits are |-> and never materialized, so psi1 == psi0 here
    phases.append(PhaseMark("psi1", phases[0].digest))

    for i in range(n - 1):
        extended = extend_partial_key(keys[i], config.layout, i)
        apply_phase_oracle(state, extended, [i * m + j for j in range(m)])
    phases.append(PhaseMark("psi2", _digest(state.amplitudes)))

    for player in range(n):  # one norm check per register-wide layer
        for j in range(m):
            apply_hadamard(state, player * m + j, _check=False)
        ensure_normalized(state)
    if with_eve and model.eve_basis == "x":
        for j in sorted(affected):
            apply_hadamard(state, n * m + j, _check=False)
        ensure_normalized(state)
    phases.append(PhaseMark("psi3", _digest(state.amplitudes)))

    measured = measure_all(state, rng)
    a, ys, y_e = split_outcome(measured.value, n, m, with_eve=with_eve)
    if with_eve:
        # positions Eve never held read as zero in her register
        kept = sum((y_e.bit(j) << j) for j in affected) if affected else 0
        y_e = BitString(kept, m)
    phases.append(PhaseMark("psi4", hashlib.sha256(str(measured).encode()).hexdigest()[:16]))

    return _Attempt(
        a=a,
        ys=ys,
        y_e=y_e,
        intercepted=tuple(intercepted),
        affected=affected,
        phases=tuple(phases),
        events=tuple(channel.events),
    )


def _attempt_factorized(config: ProtocolConfig, keys, s: BitString, model: adv.AttackModel, rng, rng_eve) -> _Attempt:
    n, m = config.n, config.m
    affected = adv.affected_tuples(model, m, rng_eve) if model.active else frozenset()

    channel = QuantumChannel()
    intercepted: list = []
    forced_a = None
    notes = {}
    if model.kind == "intercept":
        records, forced_a = adv.intercept_factorized_draws(
            model, n, m, config.source, rng_eve
        )
        intercepted = records
        notes = {(j, r): {"kind": "intercept", "basis": model.basis, "bit": b}
                 for j, r, b in records}
    for j, recipient in _delivery_plan(n, m, config.source):
        channel.deliver(QuantumEnvelope(j, recipient, qubit=None))
        if model.kind == "intercept":
            channel.events[-1]["note"] = notes.get((j, recipient))
        elif model.holds_register:
            channel.events[-1]["note"] = adv.delivery_note(model, j, affected)

    eve_z_bits = {}
    if model.holds_register and model.eve_basis == "z":
        for j in sorted(affected):
            eve_z_bits[j] = int(rng_eve.integers(0, 2))

    # Per position, sample the final joint measurement from the distribution
    # the circuit induces after the attack (or the clean parity law).
    agent_bits = rng.integers(0, 2, size=(m, n - 1))
    a_bits = []
    y_e_bits = []
    for j in range(m):
        row = agent_bits[j]
        s_j = s.bit(j)
        if model.kind == "intercept":
            # resent computational qubits: every register bit is a fair coin,
            # except the spymaster's under X interception, which is forced
            if forced_a is not None:
                a_bits.append(forced_a.bit(j))
            else:
                a_bits.append(int(rng.integers(0, 2)))
        elif model.holds_register and j in affected:
            if model.eve_basis == "z":
                # tuple collapsed at distribution time: all bits independent
                a_bits.append(int(rng.integers(0, 2)))
                y_e_bits.append((j, eve_z_bits[j]))
            else:
                e = int(rng.integers(0, 2))
                y_e_bits.append((j, e))
                a_bits.append(s_j ^ e ^ (int(row.sum()) & 1))
        else:
            a_bits.append(s_j ^ (int(row.sum()) & 1))

    ys = tuple(
        BitString.from_bits(agent_bits[:, i].tolist()) for i in range(n - 1)
    )
    a = BitString.from_bits(a_bits)
    y_e = None
    if model.holds_register:
        y_e = BitString(sum(bit << j for j, bit in y_e_bits), m)

    phases = tuple(
        [PhaseMark(label) for label in PHASE_LABELS[:4]]
        + [PhaseMark("psi4", hashlib.sha256(
            f"{y_e or ''}|{a}|{'|'.join(map(str, ys))}".encode()).hexdigest()[:16])]
    )
    return _Attempt(
        a=a,
        ys=ys,
        y_e=y_e,
        intercepted=tuple(intercepted),
        affected=affected,
        phases=phases,
        events=tuple(channel.events),
    )


# ---------------------------------------------------------------------------
# full runs
# ---------------------------------------------------------------------------

def run_protocol(config: ProtocolConfig, adversary: Optional[adv.AttackModel] = None,
                 shot_index: int = 0) -> Transcript:
    """Execute one complete game and return its transcript.

    Repeats the whole process, fresh tuples and fresh randomness, every time
    the spymaster measures all zeros, up to the configured attempt budget.
    """
    model = adversary if adversary is not None else adv.AttackModel()
    model.validate_source(config.source)

    keys = config.keys_for_shot(shot_index)
    s = complete_secret(list(keys), config.layout)

    attempt_result = None
    restarts = 0
    for attempt in range(config.max_restarts):
        rng = stream(config.seed, shot_index, attempt, _STREAM_MEASURE)
        rng_eve = stream(model.eve_seed, shot_index, attempt, _STREAM_EVE)
        if config.engine == "dense":
            attempt_result = _attempt_dense(config, keys, model, rng, rng_eve)
        else:
            attempt_result = _attempt_factorized(config, keys, s, model, rng, rng_eve)
        if config.restart_on_zero and attempt_result.a.is_zero:
            restarts += 1
            continue
        break
    else:
        raise RestartLimitExceeded(
            f"{config.max_restarts} attempts all measured zero "
            f"(probability 2^-{config.m * config.max_restarts})"
        )

    classical = ClassicalChannel()
    for i, y in enumerate(attempt_result.ys):
        classical.broadcast(ClassicalMessage(sender=i, payload=y))
    broadcasts = classical.public_view()

    reconstructed = reconstruct_secret(
        attempt_result.a, [msg.payload for msg in broadcasts]
    )

    attack_events = ()
    if model.active:
        final_eve_rng = stream(model.eve_seed, shot_index, config.max_restarts, _STREAM_EVE)
        view = adv.RunView(
            model=model,
            n=config.n,
            m=config.m,
            secret=s,
            a=attempt_result.a,
            ys=attempt_result.ys,
            reconstructed=reconstructed,
            broadcasts=tuple(msg.payload for msg in broadcasts),
            intercepted=attempt_result.intercepted,
            y_e=attempt_result.y_e,
            affected=attempt_result.affected,
        )
        report = adv.build_report(view, final_eve_rng)
        attack_events = (report.to_dict(),)

    return Transcript(
        n=config.n,
        m=config.m,
        layout=config.layout.lengths,
        source=config.source,
        engine=config.engine,
        seed=config.seed,
        shot_index=shot_index,
        secret=s,
        a=attempt_result.a,
        ys=attempt_result.ys,
        broadcasts=broadcasts,
        reconstructed=reconstructed,
        restarts=restarts,
        phases=attempt_result.phases,
        events=attempt_result.events,
        attack=model if model.active else None,
        attack_events=attack_events,
        y_e=attempt_result.y_e,
    )


def run_factorized(config: ProtocolConfig, adversary: Optional[adv.AttackModel] = None,
                   shot_index: int = 0) -> Transcript:
    """The per-position sampling path; requires engine == 'factorized'."""
    if config.engine != "factorized":
        raise ValueError("run_factorized requires a factorized-engine config")
    return run_protocol(config, adversary, shot_index)


def run_batch(config: ProtocolConfig, shots: int,
              adversary: Optional[adv.AttackModel] = None,
              start: int = 0) -> Iterator[Transcript]:
    """Lazily run ``shots`` independent games with consecutive shot indices."""
    if shots < 1:
        raise ValueError("shots must be at least 1")
    for i in range(start, start + shots):
        yield run_protocol(config, adversary, shot_index=i)


# ---------------------------------------------------------------------------
# exact distributions (no sampling, no floats)
# ---------------------------------------------------------------------------

_EXACT_QUBIT_GUARD = 16


def exact_dense_distribution(config: ProtocolConfig,
                             adversary: Optional[adv.AttackModel] = None,
                             explicit_outputs: bool = False,
                             shot_index: int = 0) -> dict:
    """Joint outcome distribution of the dense circuit, as exact rationals.

    Amplitudes under H, CNOT and sign oracles stay integer multiples of a
    global power of 1/sqrt(2), so the whole circuit can be enumerated in
    integer arithmetic and each probability emerges as an exact Fraction.

    ``explicit_outputs`` allocates each agent's single output qubit, prepares
    it |1>, Hadamards it, and runs the two-register oracle instead of the
    phase-only reduction; output qubits are traced out of the returned
    distribution.  Only pure-circuit adversaries (splitting at fraction one,
    blinding, both with the mimic-a-player strategy) are enumerable here.
    """
    model = adversary if adversary is not None else adv.AttackModel()
    model.validate_source(config.source)
    if model.kind == "intercept":
        raise ValueError("interception measures mid-circuit; not a pure circuit")
    if model.holds_register and model.eve_basis == "z":
        raise ValueError("a Z-measuring Eve collapses mid-run; not a pure circuit")
    if model.kind == "pns" and model.pns_fraction not in (0.0, 1.0):
        raise ValueError("exact enumeration needs an all-or-nothing tuple fraction")

    n, m = config.n, config.m
    with_eve = model.holds_register and (model.kind == "blinding" or model.pns_fraction == 1.0)
    participants = n + 1 if with_eve else n
    num_outputs = (n - 1) if explicit_outputs else 0
    k = participants * m + num_outputs
    if k > _EXACT_QUBIT_GUARD:
        raise ValueError(f"{k} qubits is past the exact-enumeration guard of {_EXACT_QUBIT_GUARD}")

    keys = config.keys_for_shot(shot_index)
    size = 1 << k
    amps = [0] * size
    start_index = 0
    for out in range(num_outputs):
        start_index |= 1 << (participants * m + out)  # outputs initialized |1>
    amps[start_index] = 1
    sqrt2_pow = 0

    def h(q):
        nonlocal sqrt2_pow
        bit = 1 << q
        for i in range(size):
            if not i & bit:
                lo, hi = amps[i], amps[i | bit]
                amps[i], amps[i | bit] = lo + hi, lo - hi
        sqrt2_pow += 1

    def cnot(c, t):
        cbit, tbit = 1 << c, 1 << t
        for i in range(size):
            if i & cbit and not i & tbit:
                amps[i], amps[i | tbit] = amps[i | tbit], amps[i]

    def parity_mask(key_bits: BitString, register):
        mask = 0
        for j, q in enumerate(register):
            if key_bits.bit(j):
                mask |= 1 << q
        return mask

    # tuple preparation through the log-depth schedules
    for j in range(m):
        schedule = ghz_schedule(participants)
        qubit_map = [r * m + j for r in range(participants)]
        for layer in schedule.layers:
            for gate in layer:
                if gate[0] == "h":
                    h(qubit_map[gate[1]])
                else:
                    cnot(qubit_map[gate[1]], qubit_map[gate[2]])

    for out in range(num_outputs):
        h(participants * m + out)

    for i in range(n - 1):
        extended = extend_partial_key(keys[i], config.layout, i)
        mask = parity_mask(extended, [i * m + j for j in range(m)])
        if explicit_outputs:
            out_bit = 1 << (participants * m + i)
            for idx in range(size):
                if not idx & out_bit and (idx & mask).bit_count() & 1:
                    amps[idx], amps[idx | out_bit] = amps[idx | out_bit], amps[idx]
        else:
            for idx in range(size):
                if (idx & mask).bit_count() & 1:
                    amps[idx] = -amps[idx]

    for q in range(participants * m):
        h(q)

    register_mask = (1 << (participants * m)) - 1
    denom = 1 << sqrt2_pow
    dist: dict = {}
    for idx, amp in enumerate(amps):
        if amp:
            key = idx & register_mask
            dist[key] = dist.get(key, Fraction(0)) + Fraction(amp * amp, denom)
    return dist


def factorized_distribution(config: ProtocolConfig,
                            adversary: Optional[adv.AttackModel] = None,
                            shot_index: int = 0) -> dict:
    """Closed-form joint outcome distribution of the parity law, as Fractions.

    Honest runs: uniform over every (a, ys) with a xor (xor ys) = s.  With Eve
    holding a register in every tuple (splitting at fraction one or blinding,
    mimic strategy), uniform over every (y_e, a, ys) whose full XOR is s.
    """
    model = adversary if adversary is not None else adv.AttackModel()
    model.validate_source(config.source)
    if model.active and not model.holds_register:
        raise ValueError("closed form available for honest runs and register-holding Eve only")
    if model.holds_register:
        if model.eve_basis == "z":
            raise ValueError("no closed form for a Z-measuring Eve")
        if model.kind == "pns" and model.pns_fraction != 1.0:
            raise ValueError("closed form needs an all-or-nothing tuple fraction")

    n, m = config.n, config.m
    with_eve = model.holds_register
    free = (n - 1 + (1 if with_eve else 0)) * m
    if free > 20:
        raise ValueError("outcome set too large to enumerate")
    keys = config.keys_for_shot(shot_index)
    s = complete_secret(list(keys), config.layout)

    mask = (1 << m) - 1
    weight = Fraction(1, 1 << free)
    dist: dict = {}
    for combo in range(1 << free):
        acc = 0
        for block in range(free // m):
            acc ^= (combo >> (block * m)) & mask
        a_value = acc ^ s.value
        if with_eve:
            y_e = (combo >> ((n - 1) * m)) & mask
            below = combo & ((1 << ((n - 1) * m)) - 1)
            outcome = below | (a_value << ((n - 1) * m)) | (y_e << (n * m))
        else:
            outcome = combo | (a_value << ((n - 1) * m))
        dist[outcome] = weight
    return dist
