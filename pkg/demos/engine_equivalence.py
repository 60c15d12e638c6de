"""Two engines, one distribution, checked as an identity of rationals.

The dense route enumerates the full circuit in integer arithmetic (every
amplitude is an integer times a power of 1/sqrt(2)), the factorized route
writes the parity law down directly.  The probabilities agree
Fraction-for-Fraction, not just within a tolerance.  The two-register oracle
variant with explicit output qubits collapses to the same distribution.
"""

from fractions import Fraction

from qsagg import BitString, KeyLayout, ProtocolConfig, exact_dense_distribution, factorized_distribution

config = ProtocolConfig(
    n=3, layout=KeyLayout((2, 1)), seed=1, engine="dense",
    partial_keys=(BitString.from_text("10"), BitString.from_text("1")),
)

dense = exact_dense_distribution(config)
closed = factorized_distribution(config)
explicit = exact_dense_distribution(config, explicit_outputs=True)

print("secret s = 110 (agent 1's bit, then agent 0's two bits)")
print(f"dense circuit enumeration:   {len(dense)} outcomes")
print(f"factorized parity law:       {len(closed)} outcomes")
print(f"explicit-output enumeration: {len(explicit)} outcomes")
print("dense == closed form:   ", dense == closed)
print("dense == explicit form: ", dense == explicit)
print("total probability:      ", sum(dense.values()) == Fraction(1))

print("\nfirst outcomes (a | y1 | y0 -> probability):")
for outcome in sorted(dense)[:6]:
    a = (outcome >> 6) & 0b111
    y1 = (outcome >> 3) & 0b111
    y0 = outcome & 0b111
    print(f"  {a:03b} | {y1:03b} | {y0:03b}  ->  {dense[outcome]}")
print(f"  ... ({len(dense)} in total, every one with probability {dense[min(dense)]})")
