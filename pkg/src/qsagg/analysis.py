"""Aggregate statistics over many shots.

Verification rates, outcome histograms keyed by the concatenated measurement
a|y_{n-2}|...|y_0, and Pearson uniformity tests.  Everything here is a pure
function over immutable batches; batches can be partitioned and the counts
merged.

The chi-square survival function is the regularized upper incomplete gamma
function Q(dof/2, statistic/2); scipy's implementation is used, which is
accurate to machine precision (well past the 1e-10 the verdicts need).
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence

from scipy.special import gammaincc

from .bits import BitString, reconstruct_secret
from .protocol import is_parity_valid, outcome_value

P_VALUE_THRESHOLD = 0.001
HISTOGRAM_CLASS_GUARD = 1 << 20
MIN_EXPECTED_PER_CLASS = 5.0


@dataclass(frozen=True)
class ShotBatch:
    """Transcripts of repeated runs of one configuration."""

    transcripts: tuple

    def __post_init__(self):
        if not self.transcripts:
            raise ValueError("a batch needs at least one transcript")
        object.__setattr__(self, "transcripts", tuple(self.transcripts))

        def fingerprint(t):
            return (t.n, t.m, t.layout, t.source, t.engine, t.seed, t.attack)

        head = fingerprint(self.transcripts[0])
        for t in self.transcripts:
            if fingerprint(t) != head:
                raise ValueError("mixed configurations in one batch")

    @property
    def shots(self) -> int:
        return len(self.transcripts)

    @property
    def n(self) -> int:
        return self.transcripts[0].n

    @property
    def m(self) -> int:
        return self.transcripts[0].m

    @property
    def attack_free(self) -> bool:
        return all(t.attack is None for t in self.transcripts)

    @property
    def planted_secret(self) -> Optional[BitString]:
        """The common secret, or None when keys were sampled per shot."""
        s = self.transcripts[0].secret
        if all(t.secret == s for t in self.transcripts):
            return s
        return None


@dataclass(frozen=True)
class UniformityVerdict:
    """Pearson test outcome against the uniform distribution."""

    statistic: float
    dof: int
    p_value: float
    passed: bool
    reliable: bool


def chi_square_uniform(counts: Mapping[int, int] | Sequence[int], num_classes: int) -> UniformityVerdict:
    """Pearson uniformity test over ``num_classes`` equally likely classes.

    ``counts`` maps class index to observed count (missing classes are zero)
    or lists counts positionally.  When the expected count per class falls
    below 5 the classical validity rule is broken and the verdict is marked
    unreliable rather than silently passed.
    """
    if num_classes < 2:
        raise ValueError("need at least two classes")
    if isinstance(counts, Mapping):
        values = dict(counts)
    else:
        values = {i: c for i, c in enumerate(counts)}
    if any(k < 0 or k >= num_classes for k in values):
        raise ValueError("count key outside the class range")
    total = sum(values.values())
    if total <= 0:
        raise ValueError("no observations")
    expected = total / num_classes
    statistic = sum((c - expected) ** 2 for c in values.values()) / expected
    statistic += (num_classes - len(values)) * expected  # empty classes
    dof = num_classes - 1
    p_value = float(gammaincc(dof / 2.0, statistic / 2.0))
    return UniformityVerdict(
        statistic=float(statistic),
        dof=dof,
        p_value=p_value,
        passed=p_value > P_VALUE_THRESHOLD,
        reliable=expected >= MIN_EXPECTED_PER_CLASS,
    )


def chi_square_two_sample(counts_a: Mapping[int, int], counts_b: Mapping[int, int],
                          num_classes: int) -> UniformityVerdict:
    """Pearson two-sample homogeneity test: were both samples drawn alike?

    Classes empty in both samples contribute nothing and drop out of the
    degrees of freedom.
    """
    total_a = sum(counts_a.values())
    total_b = sum(counts_b.values())
    if total_a <= 0 or total_b <= 0:
        raise ValueError("both samples need observations")
    scale_a = math.sqrt(total_b / total_a)
    scale_b = math.sqrt(total_a / total_b)
    statistic = 0.0
    occupied = 0
    for i in range(num_classes):
        ca = counts_a.get(i, 0)
        cb = counts_b.get(i, 0)
        if ca + cb == 0:
            continue
        occupied += 1
        statistic += (scale_a * ca - scale_b * cb) ** 2 / (ca + cb)
    dof = occupied - 1
    if dof < 1:
        raise ValueError("need at least two occupied classes")
    p_value = float(gammaincc(dof / 2.0, statistic / 2.0))
    expected = min(total_a, total_b) / num_classes
    return UniformityVerdict(
        statistic=float(statistic),
        dof=dof,
        p_value=p_value,
        passed=p_value > P_VALUE_THRESHOLD,
        reliable=expected >= MIN_EXPECTED_PER_CLASS,
    )


def verify_batch(batch: ShotBatch) -> dict:
    """Correlation-law rate, reconstruction rate, restart spread, Eve tallies."""
    shots = batch.shots
    fcp = 0
    reconstructed_ok = 0
    restart_counts: dict = {}
    eve_success = 0
    eve_corrupted = 0
    extended_parity = 0
    with_eve = 0
    for t in batch.transcripts:
        fcp += reconstruct_secret(t.a, list(t.ys)) == t.secret
        reconstructed_ok += t.reconstructed == t.secret
        restart_counts[t.restarts] = restart_counts.get(t.restarts, 0) + 1
        if t.attack_events:
            report = t.attack_events[0]
            eve_success += report["success"]
            eve_corrupted += report["alice_corrupted"]
        if t.y_e is not None:
            with_eve += 1
            extended_parity += (
                reconstruct_secret(t.a, [*t.ys, t.y_e]) == t.secret
            )
    summary = {
        "shots": shots,
        "fcp_fraction": fcp / shots,
        "reconstruction_success_fraction": reconstructed_ok / shots,
        "restart_counts": {str(k): v for k, v in sorted(restart_counts.items())},
        "planted_secret": None if batch.planted_secret is None else str(batch.planted_secret),
    }
    if not batch.attack_free:
        summary["eve_success_fraction"] = eve_success / shots
        summary["alice_corrupted_fraction"] = eve_corrupted / shots
        if with_eve:
            summary["extended_parity_fraction"] = extended_parity / with_eve
    return summary


def outcome_histogram(batch: ShotBatch) -> dict:
    """Counts of the joint outcome a|y_{n-2}|...|y_0 across the batch.

    Attack-free batches must stay inside the parity-valid outcome set; a
    violation is a simulator bug, not sampling noise, and raises.
    """
    n, m = batch.n, batch.m
    num_classes = 1 << (m * (n - 1))
    if num_classes > HISTOGRAM_CLASS_GUARD:
        raise ValueError(
            f"2^{m * (n - 1)} outcome classes exceed the {HISTOGRAM_CLASS_GUARD} guard"
        )
    s = batch.planted_secret
    if s is None:
        raise ValueError("histogram needs a fixed planted secret across the batch")
    hist: dict = {}
    for t in batch.transcripts:
        value = outcome_value(t.a, t.ys)
        hist[value] = hist.get(value, 0) + 1
        if batch.attack_free and not is_parity_valid(value, n, m, s):
            raise AssertionError(
                f"attack-free outcome {value:0{n * m}b} violates the correlation law"
            )
    return hist


def histogram_class_index(outcome: int, n: int, m: int, s: BitString) -> int:
    """Rank of a parity-valid outcome inside its 2^(m(n-1))-element class set.

    The free coordinates are the agents' registers; the spymaster's register
    is determined, so the free part is simply the low m(n-1) bits.
    """
    return outcome & ((1 << (m * (n - 1))) - 1)


def uniformity_over_valid_outcomes(batch: ShotBatch) -> UniformityVerdict:
    """Chi-square of the outcome histogram against uniform on the valid set."""
    s = batch.planted_secret
    if s is None:
        raise ValueError("needs a fixed planted secret")
    hist = outcome_histogram(batch)
    num_classes = 1 << (batch.m * (batch.n - 1))
    indexed = {
        histogram_class_index(value, batch.n, batch.m, s): count
        for value, count in hist.items()
    }
    return chi_square_uniform(indexed, num_classes)


def export_histogram_csv(hist: Mapping[int, int], shots: int, width: int, path) -> None:
    """CSV with header outcome,count,probability; outcomes fixed-width, sorted."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["outcome", "count", "probability"])
        for value in sorted(hist):
            count = hist[value]
            writer.writerow([format(value, f"0{width}b"), count, repr(count / shots)])


def export_summary_json(summary: dict, path) -> None:
    import json

    with open(path, "w") as fh:
        json.dump(summary, fh, sort_keys=True, indent=2)
        fh.write("\n")
