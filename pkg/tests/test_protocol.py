import math
from fractions import Fraction

import numpy as np
import pytest

from qsagg.analysis import chi_square_uniform
from qsagg.bits import BitString, KeyLayout, complete_secret
from qsagg.protocol import (
    ProtocolConfig,
    RestartLimitExceeded,
    exact_dense_distribution,
    factorized_distribution,
    fcp_holds,
    is_parity_valid,
    outcome_value,
    run_batch,
    run_factorized,
    run_protocol,
    split_outcome,
)
from qsagg.statevector import (
    QuantumState,
    apply_hadamard,
    apply_phase_oracle,
    apply_schedule,
    ghz_schedule,
)

TOY_LAYOUT = KeyLayout((2, 2))
TOY_KEYS = (BitString.from_text("01"), BitString.from_text("10"))


def toy_config(engine="factorized", **kw):
    return ProtocolConfig(
        n=3, layout=TOY_LAYOUT, seed=kw.pop("seed", 42),
        partial_keys=TOY_KEYS, engine=engine, **kw
    )


# ---------------------------------------------------------------------------
# basic runs
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("engine", ["dense", "factorized"])
def test_toy_instance_reconstructs_secret(engine):
    for shot in range(5):
        t = run_protocol(toy_config(engine), shot_index=shot)
        assert str(t.secret) == "1001"
        assert t.reconstructed == t.secret
        assert fcp_holds(t, t.secret)


@pytest.mark.parametrize("engine", ["dense", "factorized"])
def test_zero_keys_give_zero_secret(engine):
    config = ProtocolConfig(
        n=3, layout=TOY_LAYOUT, seed=7,
        partial_keys=(BitString.zeros(2), BitString.zeros(2)), engine=engine,
    )
    t = run_protocol(config)
    assert t.secret.is_zero
    assert t.reconstructed.is_zero


def test_random_key_sweep_always_reconstructs():
    config = ProtocolConfig(n=4, layout=KeyLayout((2, 2, 2)), seed=20, engine="factorized")
    for t in run_batch(config, 1000):
        assert t.reconstructed == t.secret


def test_dense_random_key_runs():
    for n, lengths in [(3, (1, 1)), (3, (2, 1)), (4, (1, 1, 1))]:
        config = ProtocolConfig(n=n, layout=KeyLayout(lengths), seed=33, engine="dense")
        for t in run_batch(config, 60):
            assert t.reconstructed == t.secret
            assert fcp_holds(t, t.secret)


def test_wide_registers_run_through_the_whole_protocol():
    # a 100-bit secret exercises the arbitrary-length register path end to end
    lengths = (40, 35, 25)
    config = ProtocolConfig(n=4, layout=KeyLayout(lengths), seed=12, engine="factorized")
    for t in run_batch(config, 25):
        assert t.m == 100
        assert t.reconstructed == t.secret
        assert fcp_holds(t, t.secret)
        assert len(str(t.a)) == 100


def test_keys_fixed_across_restarts_and_shots():
    config = ProtocolConfig(n=3, layout=TOY_LAYOUT, seed=5, engine="factorized")
    secrets = {str(t.secret) for t in run_batch(config, 50)}
    assert len(secrets) > 1  # random keys resample per shot
    fixed = toy_config()
    assert {str(t.secret) for t in run_batch(fixed, 20)} == {"1001"}


# ---------------------------------------------------------------------------
# engine equivalence, exact
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("lengths", [(1, 1), (2, 1), (1, 2), (2, 2)])
def test_exact_dense_equals_factorized_closed_form(lengths):
    keys = tuple(BitString((0b1101 >> i) & ((1 << l) - 1), l) for i, l in enumerate(lengths))
    config = ProtocolConfig(n=3, layout=KeyLayout(lengths), seed=1,
                            partial_keys=keys, engine="dense")
    dense = exact_dense_distribution(config)
    closed = factorized_distribution(config)
    assert dense == closed
    assert sum(dense.values()) == Fraction(1)
    m = sum(lengths)
    assert len(dense) == 1 << (2 * m)


def test_float_engine_matches_exact_enumeration():
    # drive the float engine to the pre-measurement state by the public API,
    # independently of the integer enumerator, and compare distributions
    lengths = (2, 1)
    keys = (BitString.from_text("10"), BitString.from_text("1"))
    n, m = 3, 3
    config = ProtocolConfig(n=n, layout=KeyLayout(lengths), seed=1,
                            partial_keys=keys, engine="dense")
    state = QuantumState(n * m)
    for j in range(m):
        apply_schedule(state, ghz_schedule(n), [r * m + j for r in range(n)])
    s = complete_secret(list(keys), config.layout)
    for i in range(n - 1):
        from qsagg.bits import extend_partial_key
        apply_phase_oracle(state, extend_partial_key(keys[i], config.layout, i),
                           [i * m + j for j in range(m)])
    for q in range(n * m):
        apply_hadamard(state, q)
    probs = np.abs(state.amplitudes) ** 2
    exact = exact_dense_distribution(config)
    for idx in range(probs.size):
        expected = float(exact.get(idx, Fraction(0)))
        assert abs(probs[idx] - expected) <= 1e-12


def test_toy_instance_has_256_outcomes():
    dist = factorized_distribution(toy_config("dense"))
    assert len(dist) == 256
    assert all(p == Fraction(1, 256) for p in dist.values())
    s = BitString.from_text("1001")
    assert all(is_parity_valid(v, 3, 4, s) for v in dist)


def test_parity_violating_outcome_has_zero_probability():
    config = ProtocolConfig(
        n=3, layout=KeyLayout((1, 1)), seed=1,
        partial_keys=(BitString.from_text("1"), BitString.from_text("1")),
        engine="dense",
    )
    dist = exact_dense_distribution(config)
    # s = 11, so e.g. the all-zeros joint outcome violates the parity law
    assert 0 not in dist
    s = BitString.from_text("11")
    assert all(is_parity_valid(v, 3, 2, s) for v in dist)


def test_per_position_marginal_is_uniform_on_even_parity_triples():
    # marginal of one position, zero secret bit: the four even-parity triples
    config = ProtocolConfig(
        n=3, layout=KeyLayout((1, 1)), seed=1,
        partial_keys=(BitString.zeros(1), BitString.zeros(1)), engine="dense",
    )
    dist = exact_dense_distribution(config)
    marginal: dict = {}
    for outcome, p in dist.items():
        a, ys, _ = split_outcome(outcome, 3, 2)
        triple = (a.bit(0), ys[1].bit(0), ys[0].bit(0))
        marginal[triple] = marginal.get(triple, Fraction(0)) + p
    assert marginal == {
        (0, 0, 0): Fraction(1, 4),
        (0, 1, 1): Fraction(1, 4),
        (1, 0, 1): Fraction(1, 4),
        (1, 1, 0): Fraction(1, 4),
    }


def test_explicit_output_variant_matches_reduced_path():
    for lengths in [(1, 1), (2, 1)]:
        keys = tuple(BitString((0b10 >> i) & ((1 << l) - 1), l) for i, l in enumerate(lengths))
        config = ProtocolConfig(n=3, layout=KeyLayout(lengths), seed=1,
                                partial_keys=keys, engine="dense")
        assert exact_dense_distribution(config, explicit_outputs=True) == \
            exact_dense_distribution(config)


# ---------------------------------------------------------------------------
# restart rule
# ---------------------------------------------------------------------------

def test_restart_rule_excludes_zero_measurement():
    config = ProtocolConfig(n=3, layout=KeyLayout((1, 1)), seed=8, engine="factorized")
    transcripts = list(run_batch(config, 600))
    assert all(not t.a.is_zero for t in transcripts)
    assert any(t.restarts > 0 for t in transcripts)


def test_restart_disabled_allows_zero():
    config = ProtocolConfig(n=3, layout=KeyLayout((1, 1)), seed=8,
                            engine="factorized", restart_on_zero=False)
    transcripts = list(run_batch(config, 600))
    assert any(t.a.is_zero for t in transcripts)
    assert all(t.restarts == 0 for t in transcripts)


def test_restart_frequency_tracks_two_to_minus_m():
    shots = 2000
    for lengths in [(1, 1), (2, 2)]:
        m = sum(lengths)
        config = ProtocolConfig(n=3, layout=KeyLayout(lengths), seed=13, engine="factorized")
        restarted = sum(t.restarts > 0 for t in run_batch(config, shots))
        p = 2.0**-m
        band = 5 * math.sqrt(p * (1 - p) / shots)
        assert abs(restarted / shots - p) <= band


def test_restart_budget_exhaustion_raises():
    config = ProtocolConfig(n=3, layout=KeyLayout((1, 1)), seed=0,
                            engine="factorized", max_restarts=1)
    # with a single attempt allowed, some shot measures 0 soon (P = 1/4)
    with pytest.raises(RestartLimitExceeded):
        for t in run_batch(config, 200):
            pass


def test_run_factorized_requires_matching_engine():
    with pytest.raises(ValueError):
        run_factorized(toy_config("dense"))
    t = run_factorized(toy_config("factorized"))
    assert t.reconstructed == t.secret


# ---------------------------------------------------------------------------
# marginals
# ---------------------------------------------------------------------------

def test_agent_measurements_uniform_and_spymaster_uniform_on_nonzero():
    lengths = (2, 1)
    m = 3
    shots = 64 * (1 << m) * 4
    config = ProtocolConfig(n=3, layout=KeyLayout(lengths), seed=3, engine="factorized",
                            partial_keys=(BitString.from_text("10"), BitString.from_text("1")))
    a_counts: dict = {}
    y_counts = [dict(), dict()]
    for t in run_batch(config, shots):
        a_counts[t.a.value] = a_counts.get(t.a.value, 0) + 1
        for i, y in enumerate(t.ys):
            y_counts[i][y.value] = y_counts[i].get(y.value, 0) + 1
    # agents: uniform over all 2^m register values
    for counts in y_counts:
        verdict = chi_square_uniform(counts, 1 << m)
        assert verdict.passed and verdict.reliable
    # spymaster: the restart rule removes zero, leaving 2^m - 1 values
    assert 0 not in a_counts
    shifted = {value - 1: count for value, count in a_counts.items()}
    verdict = chi_square_uniform(shifted, (1 << m) - 1)
    assert verdict.passed and verdict.reliable


# ---------------------------------------------------------------------------
# transcripts
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("engine", ["dense", "factorized"])
def test_determinism_byte_for_byte(engine):
    lines_a = [run_protocol(toy_config(engine), shot_index=i).to_json_line() for i in range(6)]
    lines_b = [run_protocol(toy_config(engine), shot_index=i).to_json_line() for i in range(6)]
    assert lines_a == lines_b
    other_seed = [run_protocol(toy_config(engine, seed=43), shot_index=i).to_json_line()
                  for i in range(6)]
    assert lines_a != other_seed


def test_determinism_holds_under_attack():
    from qsagg.adversary import AttackModel

    for kind, extra in [("intercept", {}), ("pns", {"pns_fraction": 0.5})]:
        attack = AttackModel(kind=kind, eve_seed=9, **extra)
        for engine in ("dense", "factorized"):
            one = [run_protocol(toy_config(engine), adversary=attack, shot_index=i).to_json_line()
                   for i in range(4)]
            two = [run_protocol(toy_config(engine), adversary=attack, shot_index=i).to_json_line()
                   for i in range(4)]
            assert one == two


def test_transcript_schema_is_stable():
    record = run_protocol(toy_config("dense")).to_dict()
    assert sorted(record) == [
        "a", "attack", "attack_events", "broadcasts", "engine", "events",
        "layout", "m", "n", "phases", "reconstructed", "restarts", "s",
        "seed", "shot", "source", "y_e", "ys",
    ]


def test_transcript_stable_field_names():
    t = run_protocol(toy_config("dense"))
    record = t.to_dict()
    for field in ("n", "m", "layout", "s", "a", "ys", "reconstructed",
                  "restarts", "attack", "seed"):
        assert field in record
    assert record["s"] == "1001"
    assert record["attack"] == {"kind": "none"}
    assert all(set(y) <= {"0", "1"} and len(y) == 4 for y in record["ys"])


def test_phase_markers_cover_all_five_phases():
    dense = run_protocol(toy_config("dense"))
    assert [p.label for p in dense.phases] == ["psi0", "psi1", "psi2", "psi3", "psi4"]
    assert all(p.digest for p in dense.phases)
    # the implicit output-register Hadamard leaves psi1 materially equal to psi0
    assert dense.phases[0].digest == dense.phases[1].digest
    assert dense.phases[2].digest != dense.phases[3].digest
    factorized = run_protocol(toy_config("factorized"))
    assert [p.label for p in factorized.phases] == ["psi0", "psi1", "psi2", "psi3", "psi4"]


def test_delivery_events_exactly_once_per_tuple_and_agent():
    t = run_protocol(toy_config("dense"))
    deliveries = [(e["tuple"], e["recipient"]) for e in t.events if e["type"] == "deliver"]
    assert sorted(deliveries) == [(j, r) for j in range(4) for r in range(2)]
    third = run_protocol(toy_config("dense", source="third-party"))
    deliveries = [(e["tuple"], e["recipient"]) for e in third.events]
    assert sorted(deliveries) == [(j, r) for j in range(4) for r in range(3)]


def test_outcome_value_round_trip():
    a = BitString.from_text("101")
    ys = (BitString.from_text("011"), BitString.from_text("110"))
    value = outcome_value(a, ys)
    back_a, back_ys, _ = split_outcome(value, 3, 3)
    assert back_a == a and back_ys == ys


from hypothesis import HealthCheck, given, settings, strategies as st


@settings(max_examples=30, deadline=None,
          suppress_health_check=[HealthCheck.too_slow])
@given(
    lengths=st.lists(st.integers(1, 5), min_size=2, max_size=5),
    seed=st.integers(0, 2**32 - 1),
)
def test_any_layout_reconstructs_the_secret(lengths, seed):
    config = ProtocolConfig(n=len(lengths) + 1, layout=KeyLayout(tuple(lengths)),
                            seed=seed, engine="factorized")
    for shot in range(3):
        t = run_protocol(config, shot_index=shot)
        assert t.reconstructed == t.secret
        assert fcp_holds(t, t.secret)
        assert not t.a.is_zero


# ---------------------------------------------------------------------------
# config validation
# ---------------------------------------------------------------------------

def test_config_validation():
    with pytest.raises(ValueError):
        ProtocolConfig(n=2, layout=KeyLayout((1,)), seed=0)
    with pytest.raises(ValueError):
        ProtocolConfig(n=3, layout=KeyLayout((1, 1, 1)), seed=0)
    with pytest.raises(ValueError):
        ProtocolConfig(n=3, layout=TOY_LAYOUT, seed=0, partial_keys=(TOY_KEYS[0],))
    with pytest.raises(ValueError):
        ProtocolConfig(n=3, layout=TOY_LAYOUT, seed=0,
                       partial_keys=(BitString.from_text("011"), TOY_KEYS[1]))
    with pytest.raises(ValueError):
        ProtocolConfig(n=3, layout=TOY_LAYOUT, seed=0, source="satellite")
    with pytest.raises(ValueError):
        ProtocolConfig(n=3, layout=TOY_LAYOUT, seed=0, engine="tensor-network")
    with pytest.raises(ValueError):
        ProtocolConfig(n=3, layout=TOY_LAYOUT, seed=0, max_restarts=0)


def test_dense_qubit_budget_enforced():
    config = ProtocolConfig(n=5, layout=KeyLayout((2, 2, 2, 2)), seed=0,
                            engine="dense", dense_limit=24)
    with pytest.raises(ValueError, match="factorized"):
        run_protocol(config)


def test_exact_distribution_guards():
    from qsagg.adversary import AttackModel

    config = toy_config("dense")
    with pytest.raises(ValueError, match="mid-circuit"):
        exact_dense_distribution(config, adversary=AttackModel(kind="intercept"))
    with pytest.raises(ValueError, match="pure circuit"):
        exact_dense_distribution(
            config, adversary=AttackModel(kind="pns", eve_basis="z"))
    with pytest.raises(ValueError, match="all-or-nothing"):
        exact_dense_distribution(
            config, adversary=AttackModel(kind="pns", pns_fraction=0.5))
    big = ProtocolConfig(n=6, layout=KeyLayout((2, 2, 2, 1, 1)), seed=0,
                         engine="dense",
                         partial_keys=tuple(BitString.zeros(l) for l in (2, 2, 2, 1, 1)))
    with pytest.raises(ValueError, match="guard"):
        exact_dense_distribution(big)
    with pytest.raises(ValueError, match="closed form"):
        factorized_distribution(config, adversary=AttackModel(kind="intercept"))
    with pytest.raises(ValueError):
        list(run_batch(toy_config(), 0))
