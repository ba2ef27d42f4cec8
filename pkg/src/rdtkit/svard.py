"""Per-row threshold assignment and preventive-refresh overhead proxies.

PARA and Chronus are modeled only by how many preventive refreshes they issue
on a synthetic activation trace; refresh rate stands in for performance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from fractions import Fraction

import numpy as np

from .profiler import ABOVE_GRID, ProfileSummary

POLICIES = ("one-size-fits-all", "svard-two-bin")
TRACE_KINDS = ("uniform", "single-row-hammer", "double-sided", "zipf")


@dataclass(frozen=True)
class ThresholdMap:
    thresholds: dict[int, int]
    bins: dict[int, str]
    guarded: int
    relaxed: int
    policy: str
    demotions: dict[int, int] = field(default_factory=dict)

    def __getitem__(self, row: int) -> int:
        return self.thresholds[row]

    @property
    def rows(self) -> list[int]:
        return list(self.thresholds)

    def guarded_fraction(self) -> float:
        return sum(b == "guarded" for b in self.bins.values()) / len(self.bins)


def guarded_threshold(rdt_min: int, guardband: float = 0.21) -> int:
    return math.floor(rdt_min * (1 - Fraction(str(guardband))))


def assign_thresholds(profile: ProfileSummary, policy: str = "svard-two-bin", guardband: float = 0.21,
                      tail_fraction: float = 0.10, extra_demotion: float = 0.10) -> ThresholdMap:
    """Map every profiled row to a guarded or relaxed threshold.

    Two-bin: rows measured below RDT_90% plus the next-weakest rows, up to
    ``tail_fraction + extra_demotion`` of all rows, are guarded.
    """
    if policy not in POLICIES:
        raise ValueError(f"policy must be one of {POLICIES}")
    if not profile.reference_rdts:
        raise ValueError("profile has no per-row reference measurement")
    guarded = guarded_threshold(profile.rdt_min, guardband)
    relaxed = int(profile.rdt_p10)
    if not guarded < relaxed:
        raise ValueError(f"guarded threshold {guarded} must be below relaxed {relaxed}")
    rows = sorted(profile.reference_rdts)
    if policy == "one-size-fits-all":
        return ThresholdMap({r: guarded for r in rows}, {r: "guarded" for r in rows}, guarded, relaxed, policy)

    def key(r):
        v = profile.reference_rdts[r]
        return (math.inf if v == ABOVE_GRID else v, r)

    ordered = sorted(rows, key=key)
    below = sum(1 for r in rows if key(r)[0] < relaxed)
    target = round((tail_fraction + extra_demotion) * len(rows))
    low = set(ordered[:max(below, target)])
    bins = {r: ("guarded" if r in low else "relaxed") for r in rows}
    thresholds = {r: (guarded if r in low else relaxed) for r in rows}
    return ThresholdMap(thresholds, bins, guarded, relaxed, policy)


def demote_row(tmap: ThresholdMap, row: int) -> ThresholdMap:
    """Halve a row's threshold (floor, minimum 1) after it shows bitflips."""
    if row not in tmap.thresholds:
        raise KeyError(f"row {row} not in threshold map")
    thresholds = dict(tmap.thresholds)
    thresholds[row] = max(1, thresholds[row] // 2)
    demotions = dict(tmap.demotions)
    demotions[row] = demotions.get(row, 0) + 1
    return replace(tmap, thresholds=thresholds, demotions=demotions)


def residual_delta_l(locations, demoted_rows) -> int:
    """Bitflip locations (row, bit) left once ``demoted_rows`` can no longer flip."""
    demoted = set(demoted_rows)
    return sum(1 for row, _ in locations if row not in demoted)


# ---------------------------------------------------------------------------
# traces

@dataclass(frozen=True)
class AccessTrace:
    kind: str
    rows: np.ndarray
    seed: int

    def __len__(self):
        return len(self.rows)


def generate_trace(kind: str, rows, length: int, seed: int, zipf_exponent: float = 1.2) -> AccessTrace:
    if kind not in TRACE_KINDS:
        raise ValueError(f"trace kind must be one of {TRACE_KINDS}")
    if length < 0:
        raise ValueError("length must be >= 0")
    rows = np.asarray(sorted(rows), dtype=np.int64)
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(TRACE_KINDS.index(kind),)))
    if kind == "uniform":
        acts = rng.choice(rows, size=length)
    elif kind == "single-row-hammer":
        acts = np.full(length, rows[rng.integers(len(rows))])
    elif kind == "double-sided":
        pair = rng.choice(rows, size=2, replace=len(rows) < 2)
        acts = np.resize(pair, length)
    else:
        weights = 1.0 / np.arange(1, len(rows) + 1) ** zipf_exponent
        ranked = rng.permutation(rows)
        acts = ranked[rng.choice(len(rows), size=length, p=weights / weights.sum())]
    return AccessTrace(kind, acts.astype(np.int64), seed)


# ---------------------------------------------------------------------------
# mitigations

@dataclass(frozen=True)
class MitigationStats:
    mechanism: str
    total_activations: int
    preventive_refreshes: int
    refresh_rate_per_kilo_act: float
    max_counter_seen: int | None = None

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def _rate(refreshes: int, total: int) -> float:
    return 1000.0 * refreshes / total if total else 0.0


def para_probability(rdt, epsilon: float = 1e-15):
    """Per-activation refresh probability 1 - epsilon^(1/RDT)."""
    rdt = np.asarray(rdt, dtype=float)
    if np.any(rdt <= 0):
        raise ValueError("RDT must be > 0")
    return -np.expm1(np.log(epsilon) / rdt)


def simulate_para(trace: AccessTrace, tmap: ThresholdMap, epsilon: float = 1e-15, seed: int = 0) -> MitigationStats:
    """One uniform draw per activation (common random numbers across maps)."""
    thresholds = np.array([tmap[int(r)] for r in trace.rows], dtype=float)
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(0x9A5A,)))
    u = rng.random(len(trace))
    refreshes = int(np.count_nonzero(u < para_probability(thresholds, epsilon))) if len(trace) else 0
    return MitigationStats("para", len(trace), refreshes, _rate(refreshes, len(trace)))


def chronus_trigger(rdt: int) -> int:
    return max(1, rdt // 2)


def simulate_chronus(trace: AccessTrace, tmap: ThresholdMap) -> MitigationStats:
    """Per-row activation counters; refresh and reset at floor(RDT/2)."""
    counters: dict[int, int] = {}
    refreshes = 0
    peak = 0
    for r in trace.rows.tolist():
        c = counters.get(r, 0) + 1
        peak = max(peak, c)
        if c >= chronus_trigger(tmap[r]):
            refreshes += 1
            c = 0
        counters[r] = c
    return MitigationStats("chronus", len(trace), refreshes, _rate(refreshes, len(trace)), peak)
