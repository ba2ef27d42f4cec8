"""Synthetic DRAM device with per-row read disturbance thresholds that vary over time.

Each tested row has a base RDT and a small set of weak cells. In every
measurement episode the row's realized RDT is ``round(base * scale * u)`` with
``u ~ U[1 - j, 1 + j]`` drawn independently per row and episode. Cell ``k``
flips iff the hammer count reaches ``realized * multiplier_k``; the weakest
cell has multiplier 1.0.

Episode draws come from a counter-based stream keyed by ``(seed, episode)``, so
any started episode can be replayed exactly.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, replace
from fractions import Fraction
from pathlib import Path

import numpy as np

BitflipSet = frozenset  # of (bank, row, bit_offset)

_STREAM_LAYOUT = 0
_STREAM_EPISODE = 1

# multiplicative RDT factors relative to (50 C, 35 ns); fitted placeholders, not measured laws
TEMPERATURE_FACTORS = {50: 1.0, 65: 0.95, 80: 0.88}
T_AGGON_FACTORS = {35: 1.0, 300: 0.62, 1000: 0.38}


class UntestedRowError(KeyError):
    pass


@dataclass(frozen=True)
class ChipGeometry:
    banks: int = 1
    rows_per_bank: int = 8192
    bits_per_row: int = 65536
    tested_row_fraction: Fraction = Fraction(1, 16)

    def __post_init__(self):
        for name in ("banks", "rows_per_bank", "bits_per_row"):
            v = getattr(self, name)
            if not isinstance(v, (int, np.integer)) or isinstance(v, bool) or v <= 0:
                raise ValueError(f"geometry.{name} must be a positive integer, got {v!r}")
        frac = Fraction(self.tested_row_fraction)
        if not 0 < frac <= 1:
            raise ValueError("geometry.tested_row_fraction must be in (0, 1]")
        object.__setattr__(self, "tested_row_fraction", frac)

    @property
    def tested_per_bank(self) -> int:
        return max(1, math.floor(self.rows_per_bank * self.tested_row_fraction))


@dataclass(frozen=True)
class ConditionPreset:
    temperature: int = 50
    t_aggon: int = 35
    rdt_scale: float | None = None

    def __post_init__(self):
        if self.temperature not in TEMPERATURE_FACTORS:
            raise ValueError(f"temperature must be one of {sorted(TEMPERATURE_FACTORS)}")
        if self.t_aggon not in T_AGGON_FACTORS:
            raise ValueError(f"t_aggon must be one of {sorted(T_AGGON_FACTORS)}")
        if self.rdt_scale is None:
            scale = TEMPERATURE_FACTORS[self.temperature] * T_AGGON_FACTORS[self.t_aggon]
            object.__setattr__(self, "rdt_scale", scale)
        if self.rdt_scale <= 0:
            raise ValueError("rdt_scale must be > 0")


@dataclass(frozen=True)
class RowDistribution:
    """Base-RDT law: clipped log-normal bulk plus injected weak rows per bank."""

    median_rdt: float = 10000.0
    sigma: float = 0.25
    rdt_low: int = 4000
    rdt_high: int = 30000
    weak_rows_per_bank: int = 16
    weak_rdt_low: int = 2500
    weak_rdt_high: int = 14000
    jitter_half_width: float = 0.0
    max_cells_per_row: int = 6
    cell_spread: float = 0.25

    def __post_init__(self):
        if not 0 <= self.jitter_half_width < 1:
            raise ValueError("jitter_half_width must be in [0, 1)")
        if self.rdt_low <= 0 or self.rdt_low > self.rdt_high:
            raise ValueError("need 0 < rdt_low <= rdt_high")
        if self.weak_rows_per_bank < 0:
            raise ValueError("weak_rows_per_bank must be >= 0")
        if self.weak_rows_per_bank and not 0 < self.weak_rdt_low <= self.weak_rdt_high:
            raise ValueError("need 0 < weak_rdt_low <= weak_rdt_high")
        if self.max_cells_per_row < 1:
            raise ValueError("max_cells_per_row must be >= 1")
        if self.sigma < 0 or self.median_rdt <= 0 or self.cell_spread < 0:
            raise ValueError("median_rdt must be > 0; sigma, cell_spread >= 0")


# "paper-worst": jitter searched so the 1000-episode min/max of RDT_min is ~0.79
# (scripts/calibrate_device.py)
PAPER_WORST = RowDistribution(jitter_half_width=0.12)
PAPER_TYPICAL = RowDistribution(jitter_half_width=0.055)
DISTRIBUTION_PRESETS = {"paper-worst": PAPER_WORST, "paper-typical": PAPER_TYPICAL, "static": RowDistribution()}


@dataclass(frozen=True)
class CellFault:
    bit_offset: int
    threshold_multiplier: float


@dataclass(frozen=True)
class RowModel:
    base_rdt: float
    jitter_half_width: float
    cells: tuple[CellFault, ...]


@dataclass(frozen=True)
class DeviceSpec:
    geometry: ChipGeometry = field(default_factory=ChipGeometry)
    distribution: RowDistribution = field(default_factory=RowDistribution)
    preset: ConditionPreset = field(default_factory=ConditionPreset)
    seed: int = 0

    def to_dict(self) -> dict:
        d = asdict(self)
        d["geometry"]["tested_row_fraction"] = str(self.geometry.tested_row_fraction)
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "DeviceSpec":
        geometry = ChipGeometry(**{k: (Fraction(v) if k == "tested_row_fraction" else v)
                                   for k, v in data.get("geometry", {}).items()})
        dist = data.get("distribution", {})
        if isinstance(dist, str):
            dist = {"preset": dist}
        dist = dict(dist)
        base = DISTRIBUTION_PRESETS[dist.pop("preset")] if "preset" in dist else RowDistribution()
        distribution = replace(base, **dist)
        preset = ConditionPreset(**data.get("preset", {}))
        if "seed" not in data:
            raise ValueError("device spec requires a seed")
        return cls(geometry, distribution, preset, int(data["seed"]))

    @classmethod
    def load(cls, path) -> "DeviceSpec":
        return cls.from_dict(json.loads(Path(path).read_text()))


def round_half_up(x):
    return np.floor(np.asarray(x, dtype=float) + 0.5).astype(np.int64)


class DeviceModel:
    """Hammerable device. Calls are serialized; the object holds a per-episode cache."""

    def __init__(self, spec: DeviceSpec):
        self.spec = spec
        g, d = spec.geometry, spec.distribution
        rng = np.random.default_rng(np.random.SeedSequence(spec.seed, spawn_key=(_STREAM_LAYOUT,)))
        rows = []
        for bank in range(g.banks):
            picks = np.sort(rng.choice(g.rows_per_bank, size=g.tested_per_bank, replace=False))
            rows.extend((bank, int(r)) for r in picks)
        self.tested_rows: list[tuple[int, int]] = rows
        self._index = {r: i for i, r in enumerate(rows)}
        n = len(rows)

        base = np.clip(d.median_rdt * np.exp(d.sigma * rng.standard_normal(n)), d.rdt_low, d.rdt_high)
        per_bank = g.tested_per_bank
        for bank in range(g.banks):
            k = min(d.weak_rows_per_bank, per_bank)
            if k:
                idx = bank * per_bank + rng.choice(per_bank, size=k, replace=False)
                base[idx] = np.exp(rng.uniform(math.log(d.weak_rdt_low), math.log(d.weak_rdt_high), size=k))
        self.base_rdt = base

        max_cells = min(d.max_cells_per_row, g.bits_per_row)
        counts = rng.integers(1, max_cells + 1, size=n)
        self.cell_offsets = np.full((n, max_cells), -1, dtype=np.int64)
        self.cell_mult = np.full((n, max_cells), np.inf)
        for i in range(n):
            c = int(counts[i])
            self.cell_offsets[i, :c] = rng.choice(g.bits_per_row, size=c, replace=False)
            extra = np.sort(1.0 + rng.exponential(d.cell_spread, size=c - 1))
            self.cell_mult[i, :c] = np.concatenate([[1.0], extra])

        self.episode = -1
        self._cache_episode = -2
        self._cache_rdt: np.ndarray | None = None

    # -- layout ---------------------------------------------------------
    @property
    def n_tested(self) -> int:
        return len(self.tested_rows)

    def row_index(self, bank: int, row: int) -> int:
        try:
            return self._index[(bank, row)]
        except KeyError:
            raise UntestedRowError(f"row ({bank}, {row}) is not in the tested subset") from None

    def row_id(self, i: int) -> int:
        bank, row = self.tested_rows[i]
        return bank * self.spec.geometry.rows_per_bank + row

    def row_model(self, bank: int, row: int) -> RowModel:
        i = self.row_index(bank, row)
        cells = tuple(CellFault(int(o), float(m)) for o, m in zip(self.cell_offsets[i], self.cell_mult[i]) if o >= 0)
        return RowModel(float(self.base_rdt[i]), self.spec.distribution.jitter_half_width, cells)

    # -- episodes -------------------------------------------------------
    def begin_episode(self) -> int:
        self.episode += 1
        return self.episode

    def _realized(self, episode: int) -> np.ndarray:
        if not 0 <= episode <= self.episode:
            raise ValueError(f"episode {episode} has not been started (current {self.episode})")
        if episode != self._cache_episode:
            j = self.spec.distribution.jitter_half_width
            scaled = self.base_rdt * self.spec.preset.rdt_scale
            if j == 0:
                u = 1.0
            else:
                rng = np.random.default_rng(
                    np.random.SeedSequence(self.spec.seed, spawn_key=(_STREAM_EPISODE, episode)))
                u = rng.uniform(1.0 - j, 1.0 + j, size=self.n_tested)
            self._cache_rdt = np.maximum(round_half_up(scaled * u), 1)
            self._cache_episode = episode
        return self._cache_rdt

    # -- hammering ------------------------------------------------------
    def _flipset(self, i: int, hammer_count: int, realized: int) -> BitflipSet:
        bank, row = self.tested_rows[i]
        mask = self.cell_mult[i] * realized <= hammer_count
        return frozenset((bank, row, int(o)) for o in self.cell_offsets[i][mask])

    def hammer(self, bank: int, row: int, hammer_count: int, episode: int) -> BitflipSet:
        if hammer_count <= 0:
            raise ValueError("hammer_count must be > 0")
        i = self.row_index(bank, row)
        realized = int(self._realized(episode)[i])
        if hammer_count < realized:
            return frozenset()
        return self._flipset(i, hammer_count, realized)

    def hammer_rows(self, indices, hammer_count: int, episode: int) -> list[BitflipSet]:
        """Batch form of :meth:`hammer` over tested-row indices."""
        if hammer_count <= 0:
            raise ValueError("hammer_count must be > 0")
        indices = np.asarray(indices, dtype=np.int64)
        realized = self._realized(episode)[indices]
        empty = frozenset()
        out = [empty] * len(indices)
        for pos in np.flatnonzero(realized <= hammer_count):
            out[pos] = self._flipset(int(indices[pos]), hammer_count, int(realized[pos]))
        return out

    def oracle_true_rdt(self, bank: int, row: int, episode: int) -> int:
        """Realized RDT (test introspection only)."""
        return int(self._realized(episode)[self.row_index(bank, row)])


def new_device(geometry: ChipGeometry = ChipGeometry(), row_distribution: RowDistribution = RowDistribution(),
               preset: ConditionPreset = ConditionPreset(), seed: int = 0) -> DeviceModel:
    return DeviceModel(DeviceSpec(geometry, row_distribution, preset, seed))
