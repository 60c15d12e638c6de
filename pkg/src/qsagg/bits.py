"""Exact bit-string algebra: XOR, inner product mod 2, key padding, reconstruction.

A BitString is an immutable value; bit 0 is the least significant bit and the
textual form prints the most significant bit first, so ``BitString.from_text("1001")``
has bit 0 = 1, bit 3 = 1.  Internally the bits live in a single arbitrary-precision
integer, which makes XOR and parity single machine operations for any length.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence


@dataclass(frozen=True)
class BitString:
    """Fixed-length bit sequence, LSB at index 0, rendered MSB-first."""

    value: int
    length: int

    def __post_init__(self):
        if self.length < 1:
            raise ValueError("BitString length must be positive")
        if not 0 <= self.value < (1 << self.length):
            raise ValueError(f"value {self.value} does not fit in {self.length} bits")

    @classmethod
    def from_text(cls, text: str) -> "BitString":
        """Parse a big-endian string of '0'/'1' characters."""
        if not text:
            raise ValueError("empty bit string")
        if any(ch not in "01" for ch in text):
            raise ValueError(f"invalid bit string {text!r}")
        return cls(int(text, 2), len(text))

    @classmethod
    def from_bits(cls, bits: Iterable[int]) -> "BitString":
        """Build from an iterable of bits given LSB-first."""
        bits = list(bits)
        if not bits:
            raise ValueError("empty bit sequence")
        value = 0
        for j, b in enumerate(bits):
            if b not in (0, 1):
                raise ValueError(f"bit {j} is {b!r}, expected 0 or 1")
            value |= b << j
        return cls(value, len(bits))

    @classmethod
    def zeros(cls, length: int) -> "BitString":
        return cls(0, length)

    def bit(self, j: int) -> int:
        """Bit at index j (0 = least significant)."""
        if not 0 <= j < self.length:
            raise IndexError(f"bit index {j} out of range for length {self.length}")
        return (self.value >> j) & 1

    def bits(self) -> tuple[int, ...]:
        """All bits, LSB-first."""
        return tuple((self.value >> j) & 1 for j in range(self.length))

    @property
    def is_zero(self) -> bool:
        return self.value == 0

    def __len__(self) -> int:
        return self.length

    def __getitem__(self, j: int) -> int:
        return self.bit(j)

    def __xor__(self, other: "BitString") -> "BitString":
        return xor(self, other)

    def __str__(self) -> str:
        return format(self.value, f"0{self.length}b")

    def __repr__(self) -> str:
        return f"BitString('{self}')"


@dataclass(frozen=True)
class KeyLayout:
    """Agreed ordering and lengths of the agents' partial keys.

    ``lengths[i]`` is the length of agent i's partial key; the total is the
    length m of the complete secret.  Every party knows the layout.
    """

    lengths: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "lengths", tuple(self.lengths))
        if not self.lengths:
            raise ValueError("layout needs at least one key length")
        if any(l < 1 for l in self.lengths):
            raise ValueError(f"all key lengths must be >= 1, got {self.lengths}")

    @property
    def num_agents(self) -> int:
        return len(self.lengths)

    @property
    def total(self) -> int:
        """m, the length of the complete secret."""
        return sum(self.lengths)

    def offset(self, agent_index: int) -> int:
        """Number of trailing (low-order) zero bits in agent_index's extended key."""
        if not 0 <= agent_index < self.num_agents:
            raise IndexError(f"agent index {agent_index} out of range")
        return sum(self.lengths[:agent_index])


def xor(a: BitString, b: BitString) -> BitString:
    """Bitwise XOR of two equal-length bit strings."""
    if a.length != b.length:
        raise ValueError(f"length mismatch: {a.length} != {b.length}")
    return BitString(a.value ^ b.value, a.length)


def xor_all(strings: Sequence[BitString]) -> BitString:
    """XOR-fold a non-empty sequence of equal-length bit strings."""
    if not strings:
        raise ValueError("cannot fold an empty sequence")
    out = strings[0]
    for s in strings[1:]:
        out = xor(out, s)
    return out


def inner_product_mod2(z: BitString, x: BitString) -> int:
    """z.x = z_{m-1}x_{m-1} xor ... xor z_0 x_0."""
    if z.length != x.length:
        raise ValueError(f"length mismatch: {z.length} != {x.length}")
    return (z.value & x.value).bit_count() & 1


def extend_partial_key(p: BitString, layout: KeyLayout, agent_index: int) -> BitString:
    """Zero-pad a partial key into its m-bit slot.

    Agent i's slot sits above the slots of agents 0..i-1, so the extended key
    is p shifted left by the summed lengths of the lower-indexed agents.
    Distinct agents therefore occupy disjoint bit ranges.
    """
    if not 0 <= agent_index < layout.num_agents:
        raise IndexError(f"agent index {agent_index} out of range")
    if p.length != layout.lengths[agent_index]:
        raise ValueError(
            f"partial key has length {p.length}, layout expects {layout.lengths[agent_index]}"
        )
    return BitString(p.value << layout.offset(agent_index), layout.total)


def complete_secret(partial_keys: Sequence[BitString], layout: KeyLayout) -> BitString:
    """XOR of all extended partial keys: the complete secret."""
    if len(partial_keys) != layout.num_agents:
        raise ValueError(
            f"expected {layout.num_agents} partial keys, got {len(partial_keys)}"
        )
    return xor_all(
        [extend_partial_key(p, layout, i) for i, p in enumerate(partial_keys)]
    )


def reconstruct_secret(a: BitString, ys: Sequence[BitString]) -> BitString:
    """a xor y_{n-2} xor ... xor y_0, the receiving side of the correlation law."""
    return xor_all([a, *ys])


def random_bits(length: int, rng) -> BitString:
    """Uniform random BitString drawn from a numpy Generator."""
    if length < 1:
        raise ValueError("length must be positive")
    value = 0
    # 32-bit limbs keep the draw order fixed for all lengths
    for limb in range((length + 31) // 32):
        value |= int(rng.integers(0, 1 << 32)) << (32 * limb)
    return BitString(value & ((1 << length) - 1), length)
