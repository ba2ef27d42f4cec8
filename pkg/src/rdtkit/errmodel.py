"""Stochastic read-disturbance bitflip process under ECC and scrubbing.

A set ``L`` of possible bitflip locations grows by ``delta_l`` uniformly random
addresses every ``growth_period`` epochs. Each epoch, ``n`` distinct members of
``L`` flip. A codeword that collects two or more distinct flipped addresses
before the next scrub is uncorrectable.

Two drivers are provided:

* :func:`step_epoch` / :func:`scrub` operate on an explicit :class:`ModelState`
  and follow the process literally. :func:`run_reference_trial` chains them.
* :func:`simulate_trial` samples the same process in count space. Only members
  that share a codeword with another entity are tracked individually; the rest
  are a single exchangeable pool whose hit count is drawn hypergeometrically.
  Epochs that cannot change the outcome are skipped with geometric jumps.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from functools import lru_cache

import numpy as np
from scipy.stats import hypergeom

DEFAULT_FLIP_SPACE_BITS = 4096 * 65536
REMOVAL_MODES = ("scrub", "immediate")


@dataclass(frozen=True)
class ModelParams:
    delta_l: int
    n: int
    growth_period: int = 1000
    scrub_interval: int = 1000
    flip_space_bits: int = DEFAULT_FLIP_SPACE_BITS
    codeword_data_bits: int = 128
    codeword_total_bits: int = 136
    removal_enabled: bool = False
    removal_mode: str = "scrub"

    def __post_init__(self):
        for name in ("delta_l", "n", "growth_period", "scrub_interval",
                     "flip_space_bits", "codeword_data_bits"):
            value = getattr(self, name)
            if isinstance(value, bool) or not isinstance(value, (int, np.integer)) or value < 1:
                raise ValueError(f"{name} must be a positive integer, got {value!r}")
        if self.codeword_total_bits < self.codeword_data_bits:
            raise ValueError("codeword_total_bits must be >= codeword_data_bits")
        if self.flip_space_bits % self.codeword_data_bits:
            raise ValueError("flip_space_bits must be divisible by codeword_data_bits")
        if self.removal_mode not in REMOVAL_MODES:
            raise ValueError(f"removal_mode must be one of {REMOVAL_MODES}")

    @property
    def n_codewords(self) -> int:
        return self.flip_space_bits // self.codeword_data_bits

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ModelParams":
        known = set(cls.__dataclass_fields__)
        extra = set(data) - known
        if extra:
            raise ValueError(f"unknown model parameter(s): {sorted(extra)}")
        return cls(**data)


@dataclass(frozen=True)
class UncorrectableEvent:
    epoch: int
    codeword: int
    addresses: tuple[int, ...]


@dataclass
class ModelState:
    """Mutable state of one trial.

    ``locations`` is an insertion-ordered set (dict keys) so that draws are
    reproducible. ``next_growth_epoch`` is the epoch of the next ``L`` growth.
    """

    epoch: int = 0
    locations: dict[int, None] = field(default_factory=dict)
    window_flips: dict[int, set[int]] = field(default_factory=dict)
    failed: bool = False
    event: UncorrectableEvent | None = None
    next_growth_epoch: int = 0


def location_to_codeword(bit_address: int, params: ModelParams) -> int:
    if not 0 <= bit_address < params.flip_space_bits:
        raise ValueError(f"bit address {bit_address} outside flip space [0, {params.flip_space_bits})")
    return bit_address // params.codeword_data_bits


def new_state(params: ModelParams, initial_locations=None) -> ModelState:
    """Fresh state. With ``initial_locations`` the epoch-0 growth is skipped."""
    state = ModelState()
    if initial_locations is not None:
        for a in initial_locations:
            location_to_codeword(int(a), params)
            state.locations[int(a)] = None
        state.next_growth_epoch = params.growth_period
    return state


def fresh_addresses(rng: np.random.Generator, existing, k: int, space: int) -> list[int]:
    """Draw up to ``k`` distinct addresses in ``[0, space)`` not in ``existing``."""
    free = space - len(existing)
    k = min(k, free)
    if k <= 0:
        return []
    if free <= 4 * k or space <= 1 << 16:
        pool = np.setdiff1d(np.arange(space, dtype=np.int64),
                            np.fromiter(existing, dtype=np.int64, count=len(existing)),
                            assume_unique=True)
        return [int(a) for a in rng.choice(pool, size=k, replace=False)]
    out: dict[int, None] = {}
    while len(out) < k:
        for a in rng.integers(0, space, size=k - len(out)).tolist():
            if a not in existing and a not in out:
                out[a] = None
    return list(out)


def step_epoch(state: ModelState, params: ModelParams, rng: np.random.Generator) -> ModelState:
    """Advance one epoch in place and return the state (no-op once failed)."""
    if state.failed:
        return state
    if state.epoch == state.next_growth_epoch:
        for a in fresh_addresses(rng, state.locations, params.delta_l, params.flip_space_bits):
            state.locations[a] = None
        state.next_growth_epoch += params.growth_period
    members = list(state.locations)
    k = min(params.n, len(members))
    if k:
        picks = [members[i] for i in rng.choice(len(members), size=k, replace=False)]
        for a in picks:
            cw = a // params.codeword_data_bits
            flipped = state.window_flips.setdefault(cw, set())
            flipped.add(a)
            if len(flipped) >= 2 and not state.failed:
                state.failed = True
                state.event = UncorrectableEvent(state.epoch, cw, tuple(sorted(flipped)))
        if params.removal_enabled and params.removal_mode == "immediate":
            for a in picks:
                state.locations.pop(a, None)
    state.epoch += 1
    return state


def scrub(state: ModelState, params: ModelParams) -> tuple[ModelState, list[int]]:
    """Correct the window's flips; with removal, drop detected addresses from ``L``."""
    detected = sorted(a for flipped in state.window_flips.values() for a in flipped)
    state.window_flips = {}
    if params.removal_enabled:
        for a in detected:
            state.locations.pop(a, None)
    return state, detected


def run_reference_trial(params: ModelParams, rng: np.random.Generator, horizon: int,
                        state: ModelState | None = None) -> int | None:
    """Epoch-by-epoch trial. Returns the first failure epoch (1-based) or None."""
    state = new_state(params) if state is None else state
    while state.epoch < horizon:
        step_epoch(state, params, rng)
        if state.failed:
            return state.epoch
        if state.epoch % params.scrub_interval == 0:
            scrub(state, params)
    return None


# ---------------------------------------------------------------------------
# count-space sampler

def _log_prob_no_hit(pool: int, r: int, s: int) -> float:
    """log P(a draw of s from pool misses all r marked members)."""
    if s > pool - r:
        return -math.inf
    return (math.lgamma(pool - r + 1) - math.lgamma(pool - r - s + 1)
            - math.lgamma(pool + 1) + math.lgamma(pool - s + 1))


@lru_cache(maxsize=512)
def _unhit_after(pool: int, s: int, steps: int) -> np.ndarray:
    """Cumulative rows of T^steps for the unhit count of a frozen pool.

    Row ``u`` is the CDF of the unhit count after ``steps`` epochs of drawing
    ``s`` of ``pool`` members, starting from ``u`` unhit.
    """
    u = np.arange(pool + 1)
    x = np.arange(s + 1)
    pmf = hypergeom.pmf(x[None, :], pool, u[:, None], s)
    trans = np.zeros((pool + 1, pool + 1))
    for j in x:
        rows = u[u - j >= 0]
        trans[rows, rows - j] += pmf[rows, j]
    out = np.eye(pool + 1)
    base = trans
    k = steps
    while k:
        if k & 1:
            out = out @ base
        k >>= 1
        if k:
            base = base @ base
    return np.cumsum(out, axis=1)


class _FastTrial:
    def __init__(self, params: ModelParams, rng: np.random.Generator):
        self.p = params
        self.rng = rng
        self.cw_bits = params.codeword_data_bits
        self.immediate = params.removal_enabled and params.removal_mode == "immediate"
        # unhit pool members need tracking when detections matter or when
        # growth can land inside a window with earlier flips
        self.track_pool = params.removal_enabled or params.growth_period % params.scrub_interval != 0
        self.members: dict[int, int] = {}
        self.by_cw: dict[int, list[int]] = {}
        self.multi_cw: dict[int, None] = {}
        self.cw_hit: dict[int, set[int]] = {}
        self.tracked: dict[int, None] = {}
        self.hit_in_l = 0      # resolved hits still in L (scrub mode)
        self.unhit_pool = 0    # unhit members of the untracked pool
        self.dirty = False     # draws happened since last resolve/reset
        self.epoch = 0
        self.next_growth = 0
        self.failure_epoch: int | None = None

    # membership -------------------------------------------------------
    def _add(self, a: int) -> None:
        cw = a // self.cw_bits
        peers = self.by_cw.setdefault(cw, [])
        hits = self.cw_hit.get(cw, ())
        entities = len(peers) + (len(hits) if self.immediate else 0)
        if entities:
            self.tracked[a] = None
            for m in peers:
                if m not in self.tracked and m not in hits:
                    self.tracked[m] = None
                    self.unhit_pool -= 1
        else:
            self.unhit_pool += 1
        peers.append(a)
        if len(peers) >= 2:
            self.multi_cw[cw] = None
        self.members[a] = cw

    def _add_many(self, addrs: np.ndarray) -> None:
        """Bulk :meth:`_add`; members landing in an empty codeword skip the peer bookkeeping."""
        by_cw, members = self.by_cw, self.members
        blocked = self.cw_hit if self.immediate else {}
        lone = 0
        for a, cw in zip(addrs.tolist(), (addrs // self.cw_bits).tolist()):
            if cw in by_cw or cw in blocked:
                self._add(a)
            else:
                by_cw[cw] = [a]
                members[a] = cw
                lone += 1
        self.unhit_pool += lone

    def _rebuild(self, keep) -> None:
        self.members = {}
        self.by_cw = {}
        self.multi_cw = {}
        for a in keep:
            cw = a // self.cw_bits
            self.members[a] = cw
            peers = self.by_cw.setdefault(cw, [])
            peers.append(a)
            if len(peers) >= 2:
                self.multi_cw[cw] = None

    def _remove(self, a: int) -> None:
        cw = self.members.pop(a)
        peers = self.by_cw[cw]
        peers.remove(a)
        if not peers:
            del self.by_cw[cw]
        if len(peers) < 2:
            self.multi_cw.pop(cw, None)

    def _pool_size(self) -> int:
        if self.immediate:
            return len(self.tracked) + self.unhit_pool
        return len(self.members)

    def _resolve(self) -> None:
        """Assign identities to the untracked pool's hits (exchangeable)."""
        if not self.dirty:
            return
        hit_known = {a for s in self.cw_hit.values() for a in s}
        pool = [a for a in self.members if a not in self.tracked and a not in hit_known]
        n_hit = len(pool) - self.unhit_pool
        if n_hit > 0:
            idx = self.rng.choice(len(pool), size=n_hit, replace=False)
            for i in sorted(idx.tolist()):
                a = pool[i]
                self.cw_hit.setdefault(self.members[a], set()).add(a)
                if self.immediate:
                    self._remove(a)
                else:
                    self.hit_in_l += 1
        self.dirty = False

    def _grow(self) -> None:
        if self.track_pool:
            self._resolve()
        fresh = fresh_addresses(self.rng, self.members, self.p.delta_l, self.p.flip_space_bits)
        self._add_many(np.asarray(fresh, dtype=np.int64))

    def _scrub(self) -> None:
        if self.p.removal_enabled:
            survivors = len(self.tracked) + self.unhit_pool
            if 2 * survivors < len(self.members):
                # every hit goes; sampling the unhit pool members is cheaper than resolving hits
                hit_known = {a for hits in self.cw_hit.values() for a in hits}
                pool = [a for a in self.members if a not in self.tracked and a not in hit_known]
                pick = self.rng.choice(len(pool), size=self.unhit_pool, replace=False)
                self._rebuild(list(self.tracked) + [pool[i] for i in sorted(pick.tolist())])
                return self._reset_window()
            self._resolve()
            gone = {a for hits in self.cw_hit.values() for a in hits if a in self.members}
            if 2 * len(gone) > len(self.members):
                self._rebuild([a for a in self.members if a not in gone])
            else:
                for a in gone:
                    self._remove(a)
        self._reset_window()

    def _reset_window(self) -> None:
        self.cw_hit = {}
        self.hit_in_l = 0
        self.dirty = False
        self.tracked = {a: None for cw in self.multi_cw for a in self.by_cw[cw]}
        self.unhit_pool = len(self.members) - len(self.tracked)

    # draws --------------------------------------------------------------
    def _hit_tracked(self, k: int) -> bool:
        tracked = list(self.tracked)
        idx = self.rng.choice(len(tracked), size=k, replace=False) if k < len(tracked) else range(k)
        for i in sorted(int(j) for j in idx):
            a = tracked[i]
            del self.tracked[a]
            cw = self.members[a]
            hits = self.cw_hit.setdefault(cw, set())
            hits.add(a)
            if self.immediate:
                self._remove(a)
            else:
                self.hit_in_l += 1
            if len(hits) >= 2:
                self.failure_epoch = self.epoch + 1
                return True
        return False

    def _conditional_k(self, pool: int, r: int, s: int) -> int:
        """Number of tracked members hit, conditioned on at least one."""
        top = min(r, s)
        if top == 1:
            return 1
        ks = np.arange(1, top + 1)
        logp = np.array([
            math.lgamma(r + 1) - math.lgamma(k + 1) - math.lgamma(r - k + 1)
            + math.lgamma(pool - r + 1) - math.lgamma(s - k + 1) - math.lgamma(pool - r - s + k + 1)
            if s - k <= pool - r else -math.inf
            for k in ks
        ])
        w = np.exp(logp - logp.max())
        return int(self.rng.choice(ks, p=w / w.sum()))

    def _run_segment(self, end: int) -> bool:
        n = self.p.n
        while self.epoch < end:
            r = len(self.tracked)
            need_pool = self.track_pool and self.unhit_pool > 0
            if r == 0 and not need_pool:
                break
            pool = self._pool_size()
            s = min(n, pool)
            if r == 0:
                # only the untracked pool evolves: jump to the segment end
                steps = end - self.epoch
                if self.immediate:
                    self.unhit_pool = max(0, self.unhit_pool - n * steps)
                else:
                    cdf = _unhit_after(pool, s, steps)[self.unhit_pool]
                    self.unhit_pool = int(min(np.searchsorted(cdf, self.rng.random() * cdf[-1], side="right"),
                                              self.unhit_pool))
                self.dirty = True
                break
            if not need_pool:
                # pool composition is frozen until a tracked member is hit
                p_any = -math.expm1(_log_prob_no_hit(pool, r, s))
                wait = int(self.rng.geometric(p_any)) if p_any < 1.0 else 1
                if self.epoch + wait > end:
                    break
                self.epoch += wait - 1
                k = self._conditional_k(pool, r, s)
            else:
                k = int(self.rng.hypergeometric(r, pool - r, s)) if r and s else 0
                rest = s - k
                if rest and self.unhit_pool:
                    x = int(self.rng.hypergeometric(self.unhit_pool, pool - r - self.unhit_pool, rest))
                    self.unhit_pool -= x
                self.dirty = True
            if k and self._hit_tracked(k):
                return True
            self.epoch += 1
        self.epoch = end
        return False

    def run(self, horizon: int) -> int | None:
        w = self.p.scrub_interval
        while self.epoch < horizon:
            if self.epoch == self.next_growth:
                self._grow()
                self.next_growth += self.p.growth_period
            end = min((self.epoch // w + 1) * w, self.next_growth, horizon)
            if self._run_segment(end):
                return self.failure_epoch
            if self.epoch % w == 0:
                self._scrub()
        return None


def simulate_trial(params: ModelParams, rng: np.random.Generator, horizon: int) -> int | None:
    """First failure epoch (1-based) of one trial, or None if it survives ``horizon``."""
    return _FastTrial(params, rng).run(horizon)


def simulate_window(params: ModelParams, rng: np.random.Generator, locations) -> bool:
    """Whether one scrub window starting from ``locations`` (no growth) fails."""
    trial = _FastTrial(params, rng)
    for a in locations:
        trial._add(int(a))
    return trial._run_segment(params.scrub_interval)
