"""Simulator for a GHZ-entanglement based multi-party secret aggregation game.

A spymaster and n-1 spatially separated agents share m entangled n-tuples;
each agent folds her zero-padded partial key into the joint state through a
phase oracle, everyone Hadamards and measures, and the agents' broadcast
measurements let the spymaster XOR out the complete secret.  The package
simulates the whole game (two interchangeable engines), verifies its
correctness and security properties over seeded repeated runs, and models
three eavesdropping attacks.
"""

from .adversary import AttackModel, EveReport, eve_passive_guess
from .analysis import (
    ShotBatch,
    UniformityVerdict,
    chi_square_two_sample,
    chi_square_uniform,
    outcome_histogram,
    uniformity_over_valid_outcomes,
    verify_batch,
)
from .bits import (
    BitString,
    KeyLayout,
    complete_secret,
    extend_partial_key,
    inner_product_mod2,
    reconstruct_secret,
    xor,
    xor_all,
)
from .channels import (
    ClassicalChannel,
    ClassicalMessage,
    ProtocolIntegrityError,
    QuantumChannel,
    QuantumEnvelope,
)
from .protocol import (
    ProtocolConfig,
    RestartLimitExceeded,
    Transcript,
    exact_dense_distribution,
    factorized_distribution,
    fcp_holds,
    run_batch,
    run_factorized,
    run_protocol,
)
from .statevector import (
    CircuitSchedule,
    QuantumState,
    StateCorruptionError,
    apply_cnot,
    apply_hadamard,
    apply_oracle_explicit,
    apply_phase_oracle,
    dump_nonzero,
    ghz_schedule,
    measure_all,
    measure_subset,
    prepare_ghz,
    prepare_ghz_product,
    tensor,
)

__version__ = "0.1.0"
