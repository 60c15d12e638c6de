"""Experiment runner.

Subcommands:

* ``run``     -- execute a batch of shots, writing transcripts.jsonl,
                 histogram.csv and summary.json; exit status reflects the
                 hard assertions (correlation law on attack-free shots,
                 histogram support inside the valid outcome set).
* ``verify``  -- run the built-in invariant suite: GHZ amplitudes and depth,
                 exact engine equivalence, the tensor identity, and the
                 oracle reduction.  One PASS/FAIL line per check.
* ``attack``  -- sweep an attack's parameters and emit success/corruption
                 curves as CSV.
* ``ghz``     -- prepare a GHZ state through the schedule and dump its
                 nonzero amplitudes.

Seeds are always explicit: there is no wall-clock fallback, so the same
command line reproduces the same bytes.  A flat JSON spec file can carry any
``run`` option; flags override it.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Optional

import numpy as np

from .adversary import AttackModel
from .analysis import (
    ShotBatch,
    export_histogram_csv,
    export_summary_json,
    outcome_histogram,
    verify_batch,
)
from .bits import BitString, KeyLayout
from .protocol import (
    ProtocolConfig,
    exact_dense_distribution,
    factorized_distribution,
    run_protocol,
)
from .statevector import dump_nonzero, ghz_schedule, prepare_ghz, prepare_ghz_product, tensor

EXIT_OK = 0
EXIT_ASSERTION = 1
EXIT_CONFIG = 2


class ConfigError(ValueError):
    pass


class AssertionFailure(RuntimeError):
    pass


@dataclass
class ExperimentSpec:
    """Flat description of one experiment; the spec-file schema."""

    n: Optional[int] = None
    m: Optional[int] = None
    key_lengths: Optional[list] = None
    keys: Optional[list] = None
    random_keys: bool = False
    shots: int = 1
    seed: Optional[int] = None
    engine: str = "factorized"
    source: Optional[str] = None  # default spymaster; blinding implies third-party
    attack: str = "none"
    pns_fraction: float = 1.0
    eve_basis: Optional[str] = None
    eve_seed: Optional[int] = None
    threads: int = 1
    out_dir: str = "qsagg-out"
    max_restarts: int = 64
    restart_on_zero: bool = True
    paper_example: bool = False

    @classmethod
    def from_file(cls, path: str) -> "ExperimentSpec":
        with open(path) as fh:
            raw = json.load(fh)
        known = {f.name for f in fields(cls)}
        unknown = set(raw) - known
        if unknown:
            raise ConfigError(f"unknown spec-file fields: {sorted(unknown)}")
        return cls(**raw)


def even_key_lengths(m: int, agents: int) -> list:
    """Split m bits across the agents as evenly as possible, extras first."""
    if m < agents:
        raise ConfigError(
            f"a secret of {m} bits cannot be split among {agents} agents "
            "(every partial key needs at least one bit)"
        )
    base, extra = divmod(m, agents)
    return [base + 1 if i < extra else base for i in range(agents)]


def spec_to_config(spec: ExperimentSpec) -> tuple:
    """Resolve an ExperimentSpec into (ProtocolConfig, AttackModel, spec)."""
    if spec.paper_example:
        spec.n = 3
        spec.keys = ["01", "10"]
        spec.key_lengths = None
        spec.random_keys = False
        spec.shots = 4096
        if spec.seed is None:
            spec.seed = 42
        spec.engine = "dense"
        spec.attack = "none"
        # the original toy circuit has no restart machinery, so the whole
        # 2^8-outcome support, spymaster-zero rows included, stays reachable
        spec.restart_on_zero = False

    if spec.seed is None:
        raise ConfigError("an explicit --seed is required (no wall-clock seeding)")
    if spec.n is None:
        raise ConfigError("--n is required")
    agents = spec.n - 1

    keys = None
    if spec.keys:
        try:
            keys = tuple(BitString.from_text(k) for k in spec.keys)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        lengths = [k.length for k in keys]
        if spec.key_lengths and list(spec.key_lengths) != lengths:
            raise ConfigError("--keys and --key-lengths disagree")
    elif spec.random_keys:
        if spec.key_lengths:
            lengths = list(spec.key_lengths)
        elif spec.m is not None:
            lengths = even_key_lengths(spec.m, agents)
        else:
            raise ConfigError("--random-keys needs --key-lengths or --m")
    else:
        raise ConfigError("provide --keys, or --random-keys with --key-lengths/--m")
    if spec.m is not None and sum(lengths) != spec.m:
        raise ConfigError(f"--m {spec.m} does not match key lengths {lengths}")

    if spec.source is None:
        spec.source = "third-party" if spec.attack == "blinding" else "spymaster"

    try:
        config = ProtocolConfig(
            n=spec.n,
            layout=KeyLayout(tuple(lengths)),
            seed=spec.seed,
            partial_keys=keys,
            source=spec.source,
            engine=spec.engine,
            max_restarts=spec.max_restarts,
            restart_on_zero=spec.restart_on_zero,
        )
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc

    attack = AttackModel()
    if spec.attack != "none":
        basis = spec.eve_basis or ("z" if spec.attack == "intercept" else "x")
        try:
            attack = AttackModel(
                kind=spec.attack,
                basis=basis if spec.attack == "intercept" else "z",
                eve_basis=basis if spec.attack != "intercept" else "x",
                pns_fraction=spec.pns_fraction,
                eve_seed=spec.eve_seed if spec.eve_seed is not None else spec.seed ^ 0xE5E,
            )
            attack.validate_source(config.source)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc

    if spec.shots < 1:
        raise ConfigError("--shots must be at least 1")
    if spec.threads < 1:
        raise ConfigError("--threads must be at least 1")
    return config, attack, spec


def execute_shots(config: ProtocolConfig, attack: AttackModel, shots: int, threads: int):
    """Run the batch; per-shot streams make the result order-independent."""
    adversary = attack if attack.active else None
    if threads == 1:
        return [run_protocol(config, adversary, shot_index=i) for i in range(shots)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        indexed = pool.map(
            lambda i: (i, run_protocol(config, adversary, shot_index=i)), range(shots)
        )
        return [t for _, t in sorted(indexed, key=lambda pair: pair[0])]


def cmd_run(args) -> int:
    spec = ExperimentSpec.from_file(args.spec) if args.spec else ExperimentSpec()
    _apply_flag_overrides(spec, args)
    config, attack, spec = spec_to_config(spec)

    transcripts = execute_shots(config, attack, spec.shots, spec.threads)
    batch = ShotBatch(tuple(transcripts))
    summary = verify_batch(batch)
    # threads and output paths don't affect results; keep artifacts byte-stable
    summary["spec"] = {
        k: v for k, v in asdict(spec).items() if k not in ("out_dir", "threads")
    }

    out_dir = Path(spec.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "transcripts.jsonl", "w") as fh:
        for t in transcripts:
            fh.write(t.to_json_line() + "\n")

    hist = None
    num_classes = 1 << (config.m * (config.n - 1))
    if batch.planted_secret is not None and num_classes <= (1 << 20):
        hist = outcome_histogram(batch)  # raises on an invalid attack-free support
        export_histogram_csv(hist, batch.shots, config.n * config.m, out_dir / "histogram.csv")
        summary["histogram_classes"] = num_classes
        summary["histogram_support"] = len(hist)
    export_summary_json(summary, out_dir / "summary.json")

    failures = []
    if not attack.active:
        if summary["fcp_fraction"] != 1.0:
            failures.append("correlation law violated on an attack-free shot")
        if summary["reconstruction_success_fraction"] != 1.0:
            failures.append("reconstruction missed the planted secret")
    if hist is not None and sum(hist.values()) != batch.shots:
        failures.append("histogram counts do not sum to the shot count")
    if failures:
        raise AssertionFailure("; ".join(failures))

    print(json.dumps(summary, sort_keys=True, indent=2))
    return EXIT_OK


def _apply_flag_overrides(spec: ExperimentSpec, args) -> None:
    for name in (
        "n", "m", "shots", "seed", "engine", "source", "attack", "pns_fraction",
        "eve_basis", "eve_seed", "threads", "out_dir", "max_restarts",
    ):
        value = getattr(args, name, None)
        if value is not None:
            setattr(spec, name, value)
    if getattr(args, "key_lengths", None):
        spec.key_lengths = [int(x) for x in args.key_lengths.split(",")]
    if getattr(args, "keys", None):
        spec.keys = args.keys.split(",")
    if getattr(args, "random_keys", False):
        spec.random_keys = True
    if getattr(args, "no_restart", False):
        spec.restart_on_zero = False
    if getattr(args, "paper_example", False):
        spec.paper_example = True


# ---------------------------------------------------------------------------
# verify
# ---------------------------------------------------------------------------

def _verify_checks():
    inv_sqrt2 = 1.0 / math.sqrt(2.0)

    def ghz_amplitudes():
        for n in range(1, 9):
            state = prepare_ghz(n)
            amps = state.amplitudes
            if abs(amps[0] - inv_sqrt2) > 1e-12 or abs(amps[-1] - inv_sqrt2) > 1e-12:
                return False
            if np.any(amps[1:-1] != 0):
                return False
            if n >= 2 and ghz_schedule(n).cnot_layer_count != math.ceil(math.log2(n)):
                return False
        return True

    def engine_equivalence():
        for lengths in [(1, 1), (2, 1), (1, 2), (2, 2)]:
            config = ProtocolConfig(
                n=3, layout=KeyLayout(lengths), seed=1, engine="dense",
                partial_keys=tuple(
                    BitString((0b1010101 >> i) & ((1 << l) - 1), l)
                    for i, l in enumerate(lengths)
                ),
            )
            if exact_dense_distribution(config) != factorized_distribution(config):
                return False
        return True

    def tensor_identity():
        for n in (1, 2, 3):
            for m in (1, 2):
                joint = prepare_ghz_product(n, m + 1)
                split = tensor(prepare_ghz_product(n, m), prepare_ghz(n))
                if not np.array_equal(joint.amplitudes, split.amplitudes):
                    return False
        return True

    def oracle_reduction():
        config = ProtocolConfig(
            n=3, layout=KeyLayout((2, 1)), seed=1, engine="dense",
            partial_keys=(BitString.from_text("10"), BitString.from_text("1")),
        )
        return exact_dense_distribution(config, explicit_outputs=True) == \
            exact_dense_distribution(config)

    return [
        ("ghz-amplitudes-and-depth", ghz_amplitudes),
        ("engine-equivalence-exact", engine_equivalence),
        ("tensor-identity", tensor_identity),
        ("oracle-reduction", oracle_reduction),
    ]


def cmd_verify(args) -> int:
    status = EXIT_OK
    for name, check in _verify_checks():
        ok = check()
        print(f"{'PASS' if ok else 'FAIL'} {name}")
        if not ok:
            status = EXIT_ASSERTION
    return status


# ---------------------------------------------------------------------------
# attack sweeps
# ---------------------------------------------------------------------------

def cmd_attack(args) -> int:
    spec = ExperimentSpec()
    _apply_flag_overrides(spec, args)
    spec.random_keys = spec.random_keys or not spec.keys
    if spec.attack == "none":
        raise ConfigError("pick an attack to sweep: intercept, pns or blinding")

    if spec.attack == "pns":
        values = [float(x) for x in (args.fractions or "0,0.25,0.5,0.75,1").split(",")]
        parameter = "fraction"
    elif spec.attack == "intercept":
        values = (args.bases or "z,x").split(",")
        parameter = "basis"
    else:
        values = ["-"]
        parameter = "none"

    rows = []
    for value in values:
        point = ExperimentSpec(**asdict(spec))
        if parameter == "fraction":
            point.pns_fraction = float(value)
        elif parameter == "basis":
            point.eve_basis = value
        config, attack, point = spec_to_config(point)
        transcripts = execute_shots(config, attack, point.shots, point.threads)
        summary = verify_batch(ShotBatch(tuple(transcripts)))
        rows.append({
            "attack": spec.attack,
            "parameter": parameter,
            "value": value,
            "shots": point.shots,
            "eve_success": summary.get("eve_success_fraction", 0.0),
            "alice_corrupted": summary.get("alice_corrupted_fraction", 0.0),
            "extended_parity": summary.get("extended_parity_fraction", ""),
        })

    out_dir = Path(spec.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    out_path = out_dir / "attack_curves.csv"
    with open(out_path, "w") as fh:
        header = ["attack", "parameter", "value", "shots", "eve_success",
                  "alice_corrupted", "extended_parity"]
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(str(row[h]) for h in header) + "\n")
    for row in rows:
        print(f"{row['attack']} {row['parameter']}={row['value']}: "
              f"eve_success={row['eve_success']:.5f} "
              f"alice_corrupted={row['alice_corrupted']:.5f}")
    print(f"wrote {out_path}")
    return EXIT_OK


def cmd_ghz(args) -> int:
    state = prepare_ghz(args.n)
    triples = dump_nonzero(state)
    if args.json:
        print(json.dumps({"n": args.n, "nonzero": triples}))
    else:
        schedule = ghz_schedule(args.n)
        print(f"# GHZ over {args.n} qubits; {len(schedule.layers)} layers "
              f"({schedule.cnot_layer_count} CNOT layers)")
        for index, re, im in triples:
            print(f"{index:0{args.n}b} {re:+.12f} {im:+.12f}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# argument plumbing
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qsagg",
        description="Run and analyze the entanglement-based secret aggregation game.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--n", type=int, help="total players (spymaster + agents)")
        p.add_argument("--m", type=int, help="secret length; keys split evenly")
        p.add_argument("--key-lengths", help="comma-separated per-agent key lengths")
        p.add_argument("--keys", help="comma-separated partial keys, agent 0 first")
        p.add_argument("--random-keys", action="store_true",
                       help="sample fresh keys every shot")
        p.add_argument("--shots", type=int)
        p.add_argument("--seed", type=int, help="master seed (required, never implicit)")
        p.add_argument("--engine", choices=["dense", "factorized"])
        p.add_argument("--source", choices=["spymaster", "third-party"])
        p.add_argument("--attack", choices=["none", "intercept", "pns", "blinding"])
        p.add_argument("--pns-fraction", type=float)
        p.add_argument("--eve-basis", choices=["x", "z"])
        p.add_argument("--eve-seed", type=int)
        p.add_argument("--threads", type=int)
        p.add_argument("--out-dir")
        p.add_argument("--max-restarts", type=int)
        p.add_argument("--no-restart", action="store_true",
                       help="disable the all-zeros restart rule")

    run_p = sub.add_parser("run", help="run a batch and write artifacts")
    add_common(run_p)
    run_p.add_argument("--spec", help="flat JSON spec file; flags override it")
    run_p.add_argument("--paper-example", action="store_true",
                       help="the 3-player toy instance: keys 01,10, 4096 shots, seed 42")
    run_p.set_defaults(func=cmd_run)

    verify_p = sub.add_parser("verify", help="run the invariant suite")
    verify_p.set_defaults(func=cmd_verify)

    attack_p = sub.add_parser("attack", help="sweep attack parameters, emit curves")
    add_common(attack_p)
    attack_p.add_argument("--fractions", help="comma list of tuple fractions (pns)")
    attack_p.add_argument("--bases", help="comma list of intercept bases")
    attack_p.set_defaults(func=cmd_attack)

    ghz_p = sub.add_parser("ghz", help="dump a prepared GHZ state")
    ghz_p.add_argument("--n", type=int, required=True)
    ghz_p.add_argument("--json", action="store_true")
    ghz_p.set_defaults(func=cmd_ghz)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(json.dumps({"error": "config", "message": str(exc)}), file=sys.stderr)
        return EXIT_CONFIG
    except (AssertionFailure, AssertionError) as exc:
        print(json.dumps({"error": "assertion", "message": str(exc)}), file=sys.stderr)
        return EXIT_ASSERTION


if __name__ == "__main__":
    sys.exit(main())
