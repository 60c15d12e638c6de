"""Dense complex state-vector engine over k qubits.

The gate set is exactly what the aggregation game needs: Hadamard, CNOT, the
agents' inner-product phase oracles, and computational-basis measurement of any
qubit subset.  Basis states are indexed by integers with qubit 0 in the least
significant bit.  Gates mutate the state in place and return it; a state is
owned by a single shot at a time, so no locking is needed.

Normalization is checked after every gate (and after every schedule layer) and
a violation raises instead of silently renormalizing, because silent
renormalization can mask gate bugs.  The only renormalization ever applied is
the one demanded by the Born rule after a subset measurement collapse.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .bits import BitString

DENSE_QUBIT_LIMIT = 24

_NORM_TOL = 1e-10
_MEASURE_NORM_TOL = 1e-6
_INV_SQRT2 = 1.0 / math.sqrt(2.0)


class StateCorruptionError(RuntimeError):
    """The state vector lost normalization beyond tolerance."""


class QuantumState:
    """Normalized complex amplitude vector over ``num_qubits`` qubits."""

    def __init__(self, num_qubits: int, amplitudes=None, limit: int = DENSE_QUBIT_LIMIT):
        if not 1 <= num_qubits <= limit:
            raise ValueError(
                f"num_qubits must be in [1, {limit}], got {num_qubits}"
            )
        self.num_qubits = num_qubits
        dim = 1 << num_qubits
        if amplitudes is None:
            amps = np.zeros(dim, dtype=np.complex128)
            amps[0] = 1.0
        else:
            amps = np.asarray(amplitudes, dtype=np.complex128)
            if amps.shape != (dim,):
                raise ValueError(f"need {dim} amplitudes, got shape {amps.shape}")
            amps = amps.copy()
        self.amplitudes = amps
        ensure_normalized(self)

    def copy(self) -> "QuantumState":
        return QuantumState(self.num_qubits, self.amplitudes, limit=self.num_qubits)

    def norm(self) -> float:
        return float(np.sqrt(np.sum(np.abs(self.amplitudes) ** 2)))

    def __repr__(self) -> str:
        return f"QuantumState(num_qubits={self.num_qubits})"


def ensure_normalized(state: QuantumState, tol: float = _NORM_TOL) -> None:
    """Raise unless the state's norm is within ``tol`` of one."""
    norm = math.sqrt(np.vdot(state.amplitudes, state.amplitudes).real)
    if abs(norm - 1.0) > tol:
        raise StateCorruptionError(
            f"state norm {norm!r} deviates from 1 beyond {tol}"
        )


def _check_target(state: QuantumState, q: int) -> None:
    if not 0 <= q < state.num_qubits:
        raise ValueError(f"qubit index {q} out of range for {state.num_qubits} qubits")


def apply_hadamard(state: QuantumState, target: int, _check: bool = True) -> QuantumState:
    """Single-qubit Hadamard on ``target``."""
    _check_target(state, target)
    block = 1 << target
    a = state.amplitudes.reshape(-1, 2, block)
    lo = a[:, 0, :].copy()
    hi = a[:, 1, :]
    a[:, 0, :] = (lo + hi) * _INV_SQRT2
    a[:, 1, :] = (lo - hi) * _INV_SQRT2
    if _check:
        ensure_normalized(state)
    return state


def apply_cnot(state: QuantumState, control: int, target: int, _check: bool = True) -> QuantumState:
    """CNOT: flip ``target`` on every basis state whose ``control`` bit is 1."""
    _check_target(state, control)
    _check_target(state, target)
    if control == target:
        raise ValueError("control and target must differ")
    k = state.num_qubits
    hi, lo = max(control, target), min(control, target)
    a = state.amplitudes.reshape(
        1 << (k - hi - 1), 2, 1 << (hi - lo - 1), 2, 1 << lo
    )
    if control > target:
        swap_a, swap_b = a[:, 1, :, 0, :], a[:, 1, :, 1, :]
    else:
        swap_a, swap_b = a[:, 0, :, 1, :], a[:, 1, :, 1, :]
    tmp = swap_a.copy()
    swap_a[...] = swap_b
    swap_b[...] = tmp
    if _check:
        ensure_normalized(state)
    return state


def _register_parity(num_qubits: int, key: BitString, register: Sequence[int]) -> np.ndarray:
    """Boolean array over all basis indices: key . (register bits of index)."""
    register = list(register)
    if len(set(register)) != len(register):
        raise ValueError("register qubits must be distinct")
    for q in register:
        if not 0 <= q < num_qubits:
            raise ValueError(f"register qubit {q} out of range")
    if key.length != len(register):
        raise ValueError(
            f"key length {key.length} does not match register size {len(register)}"
        )
    mask = 0
    for j, q in enumerate(register):
        if key.bit(j):
            mask |= 1 << q
    idx = np.arange(1 << num_qubits, dtype=np.uint64)
    return (np.bitwise_count(idx & np.uint64(mask)) & 1).astype(bool)


def apply_phase_oracle(state: QuantumState, key: BitString, register: Sequence[int]) -> QuantumState:
    """Multiply each basis amplitude by (-1)^(key . x), x read from ``register``.

    This is the net effect of an agent's oracle once its single output qubit is
    known to sit in the minus state: the function value kicks back as a sign,
    so the output qubit never has to be allocated.
    """
    odd = _register_parity(state.num_qubits, key, register)
    state.amplitudes[odd] *= -1.0
    ensure_normalized(state)
    return state


def apply_oracle_explicit(
    state: QuantumState, key: BitString, register: Sequence[int], output_qubit: int
) -> QuantumState:
    """XOR f(x) = key . x into ``output_qubit``.

    The textbook two-register oracle.  Kept for small-instance verification of
    the phase-only reduction; the production path never allocates the output.
    """
    _check_target(state, output_qubit)
    if output_qubit in register:
        raise ValueError("output qubit cannot be part of the input register")
    fx = _register_parity(state.num_qubits, key, register)
    idx = np.arange(state.amplitudes.size, dtype=np.uint64)
    out_is_zero = ~((idx >> np.uint64(output_qubit)) & np.uint64(1)).astype(bool)
    i0 = idx[fx & out_is_zero]
    i1 = i0 | np.uint64(1 << output_qubit)
    tmp = state.amplitudes[i0].copy()
    state.amplitudes[i0] = state.amplitudes[i1]
    state.amplitudes[i1] = tmp
    ensure_normalized(state)
    return state


# ---------------------------------------------------------------------------
# schedules and GHZ preparation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CircuitSchedule:
    """Ordered layers of gates; within a layer no qubit appears twice.

    Gates are tagged tuples: ``("h", target)`` or ``("cnot", control, target)``.
    """

    num_qubits: int
    layers: tuple[tuple[tuple, ...], ...]

    def __post_init__(self):
        for layer in self.layers:
            touched = set()
            for gate in layer:
                qubits = gate[1:]
                for q in qubits:
                    if q in touched:
                        raise ValueError(
                            f"qubit {q} appears twice in layer {layer}"
                        )
                    touched.add(q)

    @property
    def cnot_layer_count(self) -> int:
        return sum(
            1 for layer in self.layers if any(g[0] == "cnot" for g in layer)
        )


def ghz_schedule(n: int) -> CircuitSchedule:
    """Log-depth preparation of the n-qubit GHZ state.

    One Hadamard layer on qubit 0, then ceil(lg n) CNOT layers; every layer
    doubles the entangled set by fanning out from each already-entangled qubit
    to one fresh qubit.
    """
    if n < 1:
        raise ValueError("need at least one qubit")
    layers = [(("h", 0),)]
    entangled = 1
    while entangled < n:
        take = min(entangled, n - entangled)
        layers.append(
            tuple(("cnot", src, entangled + src) for src in range(take))
        )
        entangled += take
    return CircuitSchedule(n, tuple(layers))


def apply_schedule(state: QuantumState, schedule: CircuitSchedule, qubit_map=None) -> QuantumState:
    """Run a schedule, optionally mapping its abstract qubits onto the state.

    ``qubit_map[q]`` gives the physical index of the schedule's qubit q.
    Normalization is checked once per layer.
    """
    if qubit_map is None:
        qubit_map = list(range(schedule.num_qubits))
    for layer in schedule.layers:
        for gate in layer:
            if gate[0] == "h":
                apply_hadamard(state, qubit_map[gate[1]], _check=False)
            elif gate[0] == "cnot":
                apply_cnot(state, qubit_map[gate[1]], qubit_map[gate[2]], _check=False)
            else:
                raise ValueError(f"unknown gate {gate!r}")
        ensure_normalized(state)
    return state


def prepare_ghz(n: int, limit: int = DENSE_QUBIT_LIMIT) -> QuantumState:
    """(|0...0> + |1...1>)/sqrt(2) over n qubits, built through the schedule."""
    state = QuantumState(n, limit=limit)
    return apply_schedule(state, ghz_schedule(n))


def prepare_ghz_product(n: int, m: int, limit: int = DENSE_QUBIT_LIMIT) -> QuantumState:
    """m independent GHZ_n tuples in one register, tuple j on qubits [j*n, (j+1)*n)."""
    if m < 1:
        raise ValueError("need at least one tuple")
    state = QuantumState(n * m, limit=limit)
    schedule = ghz_schedule(n)
    for j in range(m):
        apply_schedule(state, schedule, qubit_map=[j * n + r for r in range(n)])
    return state


def tensor(low: QuantumState, high: QuantumState) -> QuantumState:
    """Combined state with ``low``'s qubits below ``high``'s."""
    k = low.num_qubits + high.num_qubits
    amps = np.kron(high.amplitudes, low.amplitudes)
    return QuantumState(k, amps, limit=max(k, DENSE_QUBIT_LIMIT))


# ---------------------------------------------------------------------------
# measurement
# ---------------------------------------------------------------------------

def measurement_distribution(state: QuantumState, targets: Sequence[int]) -> np.ndarray:
    """Marginal outcome probabilities for the listed qubits.

    Entry p[pattern] with bit j of pattern taken from targets[j].
    """
    targets = list(targets)
    if len(set(targets)) != len(targets):
        raise ValueError("target qubits must be distinct")
    for q in targets:
        _check_target(state, q)
    probs = np.abs(state.amplitudes) ** 2
    idx = np.arange(probs.size, dtype=np.uint64)
    pattern = np.zeros(probs.size, dtype=np.int64)
    for j, q in enumerate(targets):
        pattern |= (((idx >> np.uint64(q)) & np.uint64(1)) << np.uint64(j)).astype(np.int64)
    return np.bincount(pattern, weights=probs, minlength=1 << len(targets))


def _sample(probs: np.ndarray, rng) -> int:
    cdf = np.cumsum(probs)
    return int(np.searchsorted(cdf, rng.random() * cdf[-1], side="right"))


def measure_all(state: QuantumState, rng) -> BitString:
    """Sample a basis state from |amplitude|^2.

    The array is left untouched (pure sampling), but physically the system
    has collapsed: protocol code treats the state as consumed, while tests
    may resample the same state to estimate its distribution.
    """
    ensure_normalized(state, tol=_MEASURE_NORM_TOL)
    probs = np.abs(state.amplitudes) ** 2
    return BitString(_sample(probs, rng), state.num_qubits)


def measure_subset(state: QuantumState, targets: Sequence[int], rng) -> tuple[BitString, QuantumState]:
    """Measure the listed qubits; collapse and renormalize the full state.

    Returns the joint outcome (bit j from targets[j]) and the post-measurement
    state, which is the same object mutated in place.
    """
    ensure_normalized(state, tol=_MEASURE_NORM_TOL)
    targets = list(targets)
    dist = measurement_distribution(state, targets)
    outcome = _sample(dist, rng)
    idx = np.arange(state.amplitudes.size, dtype=np.uint64)
    keep = np.ones(state.amplitudes.size, dtype=bool)
    for j, q in enumerate(targets):
        bit = (outcome >> j) & 1
        keep &= ((idx >> np.uint64(q)) & np.uint64(1)) == np.uint64(bit)
    state.amplitudes[~keep] = 0.0
    state.amplitudes /= math.sqrt(dist[outcome])
    ensure_normalized(state)
    return BitString(outcome, len(targets)), state


def dump_nonzero(state: QuantumState, threshold: float = 1e-12) -> list[tuple[int, float, float]]:
    """(basis index, real, imaginary) for amplitudes above threshold, index order."""
    out = []
    for i, amp in enumerate(state.amplitudes):
        if abs(amp) > threshold:
            out.append((i, float(amp.real), float(amp.imag)))
    return out
