"""Log-depth entanglement: preparing GHZ states through fan-out schedules.

The schedule starts with one Hadamard and then doubles the entangled set
every CNOT layer, so n qubits need only ceil(lg n) CNOT layers.  The
resulting state always has exactly two nonzero amplitudes.
"""

import math

from qsagg import dump_nonzero, ghz_schedule, prepare_ghz

for n in (2, 3, 5, 8, 13):
    schedule = ghz_schedule(n)
    print(f"n = {n:2d}: {schedule.cnot_layer_count} CNOT layers "
          f"(ceil(lg n) = {math.ceil(math.log2(n))})")
    for depth, layer in enumerate(schedule.layers):
        pretty = ", ".join(
            f"H q{g[1]}" if g[0] == "h" else f"CNOT q{g[1]}->q{g[2]}" for g in layer
        )
        print(f"    layer {depth}: {pretty}")

print("\nstate vector for n = 5:")
for index, re, im in dump_nonzero(prepare_ghz(5)):
    print(f"  |{index:05b}>  {re:+.6f} {im:+.6f}")
