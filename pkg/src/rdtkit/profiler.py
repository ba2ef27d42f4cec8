"""RDT testing procedures and the statistics derived from them.

Measured RDTs use :data:`ABOVE_GRID` (-1) for rows that never flip on the fine
grid; every statistic treats it as +infinity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .devsim import DeviceModel

ABOVE_GRID = -1
COARSE_GRID = (1000, 25000, 1000)


class NoFlipInGridError(RuntimeError):
    """No tested row flips anywhere on the coarse grid."""


@dataclass(frozen=True)
class HammerGrid:
    start: int
    stop: int
    step: int

    def __post_init__(self):
        if self.step <= 0 or self.start > self.stop or self.start <= 0:
            raise ValueError(f"invalid grid {self}")

    @property
    def points(self) -> np.ndarray:
        return np.arange(self.start, self.stop + 1, self.step, dtype=np.int64)

    @classmethod
    def fine(cls, rdt_min: int) -> "HammerGrid":
        """RDT_min/2 .. 2*RDT_min in steps of floor(RDT_min/30), at least 1."""
        return cls(max(1, rdt_min // 2), 2 * rdt_min, max(1, rdt_min // 30))


@dataclass
class RdtMatrix:
    """rows x iterations of measured RDT with compact flip logs.

    ``flip_masks[i, t]`` is a bitmask over ``row_cells[i]``, the bit offsets ever
    observed flipping in row ``i`` (in order of first observation).
    """

    rows: list[int]
    grid: HammerGrid
    values: np.ndarray
    flip_masks: np.ndarray
    row_cells: list[list[int]] = field(default_factory=list)

    @property
    def iterations(self) -> int:
        return self.values.shape[1]

    def flip_log(self, i: int, t: int) -> frozenset[tuple[int, int]]:
        """(row id, bit offset) pairs observed at the measured RDT."""
        mask = int(self.flip_masks[i, t])
        cells = self.row_cells[i]
        return frozenset((self.rows[i], cells[b]) for b in range(len(cells)) if mask >> b & 1)


def _as_inf(values: np.ndarray) -> np.ndarray:
    v = np.asarray(values, dtype=float)
    return np.where(v == ABOVE_GRID, np.inf, v)


def coarse_min_scan(device: DeviceModel, grid: HammerGrid = HammerGrid(*COARSE_GRID),
                    episode: int | None = None) -> int:
    """Smallest grid hammer count that flips any tested row in the current episode."""
    if episode is None:
        episode = device.episode if device.episode >= 0 else device.begin_episode()
    everyone = np.arange(device.n_tested)
    for hc in grid.points:
        if any(device.hammer_rows(everyone, int(hc), episode)):
            return int(hc)
    raise NoFlipInGridError(f"no tested row flips at hammer counts up to {grid.stop}")


def measure_row_rdt(device: DeviceModel, bank: int, row: int, grid: HammerGrid, episode: int):
    """Ascending scan; returns (measured RDT or ABOVE_GRID, BitflipSet at that count)."""
    for hc in grid.points:
        flips = device.hammer(bank, row, int(hc), episode)
        if flips:
            return int(hc), flips
    return ABOVE_GRID, frozenset()


def _scan_all(device: DeviceModel, points: np.ndarray, episode: int):
    n = device.n_tested
    measured = np.full(n, ABOVE_GRID, dtype=np.int64)
    flips: list[frozenset] = [frozenset()] * n
    pending = np.arange(n)
    for hc in points:
        sets = device.hammer_rows(pending, int(hc), episode)
        hit = np.fromiter((bool(s) for s in sets), dtype=bool, count=len(sets))
        for pos in np.flatnonzero(hit):
            i = int(pending[pos])
            measured[i] = hc
            flips[i] = sets[pos]
        pending = pending[~hit]
        if pending.size == 0:
            break
    return measured, flips


def repeated_profile(device: DeviceModel, rdt_min: int, iterations: int = 1000) -> RdtMatrix:
    """Measure every tested row once per fresh episode on the fine grid around ``rdt_min``."""
    if iterations < 1:
        raise ValueError("iterations must be >= 1")
    grid = HammerGrid.fine(rdt_min)
    points = grid.points
    n = device.n_tested
    values = np.empty((n, iterations), dtype=np.int64)
    masks = np.zeros((n, iterations), dtype=np.uint64)
    cells: list[dict[int, int]] = [dict() for _ in range(n)]
    for t in range(iterations):
        ep = device.begin_episode()
        measured, flips = _scan_all(device, points, ep)
        values[:, t] = measured
        for i, fs in enumerate(flips):
            if not fs:
                continue
            known = cells[i]
            m = 0
            for (_, _, bit) in fs:
                m |= 1 << known.setdefault(bit, len(known))
            masks[i, t] = m
    rows = [device.row_id(i) for i in range(n)]
    return RdtMatrix(rows, grid, values, masks, [list(c) for c in cells])


def reference_measurement(device: DeviceModel, rdt_min: int,
                          stop: int = COARSE_GRID[1]) -> tuple[HammerGrid, np.ndarray]:
    """One fresh episode measuring every row at the fine step up to ``stop``.

    The fine grid only spans [RDT_min/2, 2*RDT_min]; RDT percentiles need the
    whole row population, so the reference column extends to the coarse ceiling.
    """
    fine = HammerGrid.fine(rdt_min)
    grid = HammerGrid(fine.start, max(stop, fine.stop), fine.step)
    measured, _ = _scan_all(device, grid.points, device.begin_episode())
    return grid, measured


def profile_device(device: DeviceModel, iterations: int = 1000):
    """Coarse scan, reference column, repeated fine-grid profile."""
    device.begin_episode()
    rdt_min = coarse_min_scan(device)
    _, reference = reference_measurement(device, rdt_min)
    return rdt_min, reference, repeated_profile(device, rdt_min, iterations)


# ---------------------------------------------------------------------------
# statistics

def rdt_min_per_iteration(matrix: RdtMatrix) -> np.ndarray:
    return _as_inf(matrix.values).min(axis=0)


def guardband_ratio(matrix: RdtMatrix) -> float:
    mins = rdt_min_per_iteration(matrix)
    if not np.isfinite(mins).all():
        raise ValueError("an iteration had no in-grid measurement")
    return float(mins.min() / mins.max())


def rdt_percentile(values, q: float = 0.10) -> int:
    """Largest measured value v such that at least (1 - q) of rows have RDT >= v."""
    if not 0 < q < 1:
        raise ValueError("q must be in (0, 1)")
    v = np.sort(_as_inf(values))
    need = math.ceil(round((1 - q) * len(v), 9))
    pick = v[len(v) - need]
    if not np.isfinite(pick):
        # enough rows sit above the grid that any measured value qualifies
        finite = v[np.isfinite(v)]
        if finite.size == 0:
            raise ValueError("no row measured inside the grid")
        pick = finite[-1]
    return int(pick)


@dataclass
class WeakRowCensus:
    hammer_count: int
    weak_rows: list[int]
    unique_locations: int        # delta L (bit locations)
    unique_rows: int
    max_flips_in_iteration: int  # N
    flips_per_row: dict[int, int]
    flips_per_iteration: np.ndarray
    locations: list[tuple[int, int]]


def weak_row_census(matrix: RdtMatrix) -> WeakRowCensus:
    """Flips observed at hammer counts <= max RDT_min across iterations."""
    hc = float(rdt_min_per_iteration(matrix).max())
    vals = _as_inf(matrix.values)
    keep = vals <= hc
    locations: set[tuple[int, int]] = set()
    per_row: dict[int, int] = {}
    per_iter = np.zeros(matrix.iterations, dtype=np.int64)
    for i, t in zip(*np.nonzero(keep)):
        fl = matrix.flip_log(int(i), int(t))
        locations |= fl
        per_row[matrix.rows[i]] = per_row.get(matrix.rows[i], 0) + len(fl)
        per_iter[t] += len(fl)
    weak = sorted(per_row)
    return WeakRowCensus(int(hc), weak, len(locations), len(weak), int(per_iter.max(initial=0)),
                         per_row, per_iter, sorted(locations))


def rank_matrix(matrix: RdtMatrix) -> np.ndarray:
    """Rank (1 = smallest RDT, ties by row id) of each row in each iteration."""
    vals = _as_inf(matrix.values)
    ids = np.asarray(matrix.rows)
    ranks = np.empty(vals.shape, dtype=np.int64)
    for t in range(vals.shape[1]):
        order = np.lexsort((ids, vals[:, t]))
        ranks[order, t] = np.arange(1, len(order) + 1)
    return ranks


def rank_distribution(matrix: RdtMatrix, rows=None) -> dict[int, dict[int, int]]:
    """Per row (default: census weak rows), histogram rank -> iteration count."""
    ranks = rank_matrix(matrix)
    if rows is None:
        rows = weak_row_census(matrix).weak_rows
    pos = {r: i for i, r in enumerate(matrix.rows)}
    out = {}
    for r in rows:
        uniq, counts = np.unique(ranks[pos[r]], return_counts=True)
        out[r] = {int(k): int(c) for k, c in zip(uniq, counts)}
    return out


@dataclass
class BitflipCensus:
    hammer_count: int
    flips_per_repetition: np.ndarray
    cumulative_unique: np.ndarray
    new_unique: np.ndarray
    locations: set = field(repr=False, default_factory=set)

    @property
    def first_coverage(self) -> float:
        total = self.cumulative_unique[-1] if len(self.cumulative_unique) else 0
        return float(self.cumulative_unique[0] / total) if total else 1.0


def bitflip_census_at(device: DeviceModel, hc: int, repetitions: int = 1000) -> BitflipCensus:
    """Hammer every tested row at ``hc`` in ``repetitions`` fresh episodes."""
    if hc <= 0:
        raise ValueError("hammer count must be > 0")
    everyone = np.arange(device.n_tested)
    seen: set = set()
    per_rep = np.zeros(repetitions, dtype=np.int64)
    cumulative = np.zeros(repetitions, dtype=np.int64)
    for k in range(repetitions):
        ep = device.begin_episode()
        for fs in device.hammer_rows(everyone, hc, ep):
            if fs:
                per_rep[k] += len(fs)
                seen |= fs
        cumulative[k] = len(seen)
    new = np.diff(cumulative, prepend=0)
    return BitflipCensus(hc, per_rep, cumulative, new, seen)


@dataclass
class ProfileSummary:
    rdt_min: int
    rdt_min_per_iteration: list[int]
    guardband_ratio: float
    rdt_p10: int
    weak_rows: list[int]
    unique_weak_rows: int
    unique_flip_locations: int
    max_flips_in_one_iteration: int
    reference_rdts: dict[int, int]  # first iteration, ABOVE_GRID kept as-is

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        d["reference_rdts"] = {str(k): v for k, v in self.reference_rdts.items()}
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "ProfileSummary":
        required = set(cls.__dataclass_fields__)
        missing = required - set(data)
        if missing:
            raise ValueError(f"profile summary missing field(s): {sorted(missing)}")
        d = {k: data[k] for k in required}
        d["reference_rdts"] = {int(k): int(v) for k, v in data["reference_rdts"].items()}
        return cls(**d)


def summarize(matrix: RdtMatrix, reference=None, q: float = 0.10) -> ProfileSummary:
    """Profile statistics; ``reference`` defaults to the matrix's first column."""
    mins = rdt_min_per_iteration(matrix)
    census = weak_row_census(matrix)
    ref = matrix.values[:, 0] if reference is None else np.asarray(reference)
    return ProfileSummary(
        rdt_min=int(_as_inf(ref).min()),
        rdt_min_per_iteration=[int(x) for x in mins],
        guardband_ratio=guardband_ratio(matrix),
        rdt_p10=rdt_percentile(ref, q),
        weak_rows=census.weak_rows,
        unique_weak_rows=census.unique_rows,
        unique_flip_locations=census.unique_locations,
        max_flips_in_one_iteration=census.max_flips_in_iteration,
        reference_rdts={r: int(v) for r, v in zip(matrix.rows, ref)},
    )
