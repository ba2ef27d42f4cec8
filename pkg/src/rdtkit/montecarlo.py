"""Trial ensembles over the bitflip process: failure curves, MTTUE, sweeps."""

from __future__ import annotations

import math
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass

import numpy as np

from .errmodel import ModelParams, fresh_addresses, simulate_trial, simulate_window


class InsufficientFailuresError(RuntimeError):
    """No trial failed before the horizon; MTTUE cannot be extrapolated."""


@dataclass(frozen=True)
class EpochClock:
    rows_hammered_per_epoch: int = 262144
    hammer_count: int = 10000
    seconds_per_hammer: float = 90e-9

    @property
    def epoch_seconds(self) -> float:
        return self.rows_hammered_per_epoch * self.hammer_count * self.seconds_per_hammer


def epoch_hours(clock: EpochClock = EpochClock()) -> float:
    if clock.rows_hammered_per_epoch < 0 or clock.hammer_count < 0 or clock.seconds_per_hammer <= 0:
        raise ValueError("clock fields must be non-negative with a positive hammer time")
    return clock.epoch_seconds / 3600.0


@dataclass(frozen=True)
class TrialResult:
    trial: int
    first_failure_epoch: int | None  # None: censored at the horizon


@dataclass(frozen=True)
class FailureCurve:
    epochs: np.ndarray
    p_fail: np.ndarray
    trials: int
    horizon: int


@dataclass(frozen=True)
class MttueEstimate:
    mttue_epochs: float
    mttue_hours: float
    censored_fraction: float
    method: str  # "empirical-mean" | "hazard-extrapolated"
    trials: int
    failures: int
    std_error_epochs: float

    def to_dict(self) -> dict:
        return asdict(self)


def trial_rng(seed: int, trial: int) -> np.random.Generator:
    """Counter-mode stream for one trial; independent of execution order."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(trial,)))


def _run_chunk(args):
    params, horizon, seed, lo, hi = args
    return [simulate_trial(params, trial_rng(seed, t), horizon) for t in range(lo, hi)]


def curve_epochs(horizon: int, scrub_interval: int, max_boundaries: int = 2000, log_points: int = 60) -> np.ndarray:
    """Scrub boundaries plus a log-spaced grid, always including 1 and the horizon."""
    boundaries = np.arange(scrub_interval, horizon + 1, scrub_interval, dtype=np.int64)
    if boundaries.size > max_boundaries:
        boundaries = boundaries[np.linspace(0, boundaries.size - 1, max_boundaries).astype(np.int64)]
    logs = np.unique(np.geomspace(1, horizon, log_points).round().astype(np.int64))
    return np.unique(np.concatenate([[1, horizon], boundaries, logs]))


def failure_curve(results, horizon: int, scrub_interval: int) -> FailureCurve:
    fails = np.sort(np.array([r.first_failure_epoch for r in results
                              if r.first_failure_epoch is not None], dtype=np.int64))
    epochs = curve_epochs(horizon, scrub_interval)
    p = np.searchsorted(fails, epochs, side="right") / len(results)
    return FailureCurve(epochs, p, len(results), horizon)


def run_trials(params: ModelParams, trials: int = 10000, horizon: int = 1_000_000,
               seed: int = 0, threads: int = 1) -> tuple[list[TrialResult], FailureCurve]:
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if horizon < params.scrub_interval:
        raise ValueError("horizon must cover at least one scrub interval")
    if threads > 1 and trials > 1:
        step = math.ceil(trials / (4 * threads))
        chunks = [(params, horizon, seed, lo, min(lo + step, trials)) for lo in range(0, trials, step)]
        with ProcessPoolExecutor(max_workers=threads) as pool:
            firsts = [f for part in pool.map(_run_chunk, chunks) for f in part]
    else:
        firsts = _run_chunk((params, horizon, seed, 0, trials))
    results = [TrialResult(t, f) for t, f in enumerate(firsts)]
    return results, failure_curve(results, horizon, params.scrub_interval)


def estimate_mttue(results, horizon: int, scrub_interval: int = 1000,
                   clock: EpochClock = EpochClock()) -> MttueEstimate:
    """Mean first-failure epoch; censored ensembles get a constant per-window hazard tail."""
    if not results:
        raise ValueError("need at least one trial")
    fails = np.array([r.first_failure_epoch for r in results if r.first_failure_epoch is not None],
                     dtype=float)
    total = len(results)
    censored = total - fails.size
    hours = epoch_hours(clock)
    if censored == 0:
        mean = float(fails.mean())
        se = float(fails.std(ddof=1) / math.sqrt(total)) if total > 1 else math.nan
        return MttueEstimate(mean, mean * hours, 0.0, "empirical-mean", total, total, se)
    if fails.size == 0:
        raise InsufficientFailuresError(
            f"no failures in {total} trials within {horizon} epochs; use a longer horizon")
    w = scrub_interval
    exposure = float(np.ceil(fails / w).sum()) + censored * horizon / w
    h = fails.size / exposure
    offset = float(((fails - 1) % w + 1).mean())
    resume = math.ceil(horizon / w) * w
    tail = resume + (1.0 / h - 1.0) * w + offset
    mean = (float(fails.sum()) + censored * tail) / total
    se = (censored / total) * (w / h) / math.sqrt(fails.size)
    return MttueEstimate(mean, mean * hours, censored / total, "hazard-extrapolated",
                         total, int(fails.size), se)


# ---------------------------------------------------------------------------
# analytic oracle (removal disabled)

def pair_collision_probability(params: ModelParams) -> float:
    """P(two distinct uniform addresses share a codeword)."""
    b, w = params.flip_space_bits, params.codeword_data_bits
    if b == 1:
        return 0.0
    return (w - 1) / (b - 1)


def pair_hit_cdf(m: int, n: int, t):
    """P(both members of a fixed pair flipped within t epochs), |L| = m constant."""
    if m < 2:
        return np.zeros_like(np.asarray(t, dtype=float))
    s = min(n, m)
    a = (m - s) / m
    b = (m - s) * (m - s - 1) / (m * (m - 1))
    t = np.asarray(t, dtype=float)
    return 1.0 - 2.0 * a ** t + b ** t


def _check_oracle_params(params: ModelParams) -> None:
    if params.removal_enabled:
        raise ValueError("analytic oracle supports removal-disabled configurations only")
    if params.growth_period % params.scrub_interval:
        raise ValueError("analytic oracle needs growth aligned to scrub windows")


def window_size(params: ModelParams, window_index: int) -> int:
    grown = (window_index * params.scrub_interval) // params.growth_period
    return min(params.delta_l * (1 + grown), params.flip_space_bits)


def analytic_window_oracle(params: ModelParams, window_index: int) -> float:
    """Approximate P(window fails) for |L| uniform distinct addresses.

    Pairs are treated as independent: 1 - (1 - p_pair * cover)^(|L| choose 2),
    where cover is the exact probability that both members of a pair flip in
    the window. Exact for |L| = 2; within 10% relative while |L|^2 << codewords.
    """
    _check_oracle_params(params)
    m = window_size(params, window_index)
    pairs = m * (m - 1) / 2
    cover = float(pair_hit_cdf(m, params.n, params.scrub_interval))
    x = pair_collision_probability(params) * cover
    if x >= 1.0:
        return 1.0 if pairs >= 1 else 0.0
    return float(-np.expm1(pairs * np.log1p(-x)))


def oracle_mttue(params: ModelParams, max_windows: int = 10_000_000, tol: float = 1e-12) -> float:
    """MTTUE in epochs from a Poisson model of colliding pairs born as ``L`` grows.

    Colliding pairs appear at rate p_pair * d(|L| choose 2); each undetected
    pair is caught in window j with probability cover_j. Failure-epoch offsets
    within a window use the pair hit-time distribution.
    """
    _check_oracle_params(params)
    w = params.scrub_interval
    p_pair = pair_collision_probability(params)
    t = np.arange(1, w + 1)
    lam_prev = 0.0
    pending = 0.0   # expected undetected colliding pairs
    detected = 0.0  # cumulative hazard
    surv_prev = 1.0
    mean = 0.0
    cache: dict[int, tuple[float, float]] = {}
    for k in range(max_windows):
        m = window_size(params, k)
        if m not in cache:
            cdf = pair_hit_cdf(m, params.n, t)
            cover = float(cdf[-1])
            pmf = np.diff(np.concatenate([[0.0], cdf]))
            offset = float((t * pmf).sum() / cover) if cover > 0 else w / 2
            cache[m] = (cover, offset)
        cover, offset = cache[m]
        lam = p_pair * m * (m - 1) / 2
        pending += lam - lam_prev
        lam_prev = lam
        caught = pending * cover
        pending -= caught
        detected += caught
        surv = math.exp(-detected)
        mean += (surv_prev - surv) * (k * w + offset)
        surv_prev = surv
        if surv < tol:
            return mean
    raise RuntimeError("oracle survival did not converge; raise max_windows")


def window_failure_frequency(params: ModelParams, window_index: int, samples: int, seed: int) -> float:
    """Monte-Carlo frequency of failure in one window with |L| fresh uniform addresses."""
    m = window_size(params, window_index)
    fails = 0
    for i in range(samples):
        rng = trial_rng(seed, i)
        locs = fresh_addresses(rng, {}, m, params.flip_space_bits)
        fails += simulate_window(params, rng, locs)
    return fails / samples


# ---------------------------------------------------------------------------
# sweeps

@dataclass(frozen=True)
class SweepRow:
    label: str
    params: ModelParams
    clock: EpochClock
    estimate: MttueEstimate | None  # None when no trial failed within the horizon
    curve: FailureCurve


def label_seed(seed: int, label: str) -> int:
    return (int(seed) << 32) ^ zlib.crc32(label.encode())


def sweep(configs, trials: int = 10000, horizon: int = 1_000_000, seed: int = 0,
          threads: int = 1) -> list[SweepRow]:
    """One ensemble per ``(label, params, clock)``; seeds derive from ``(seed, label)``.

    ``horizon`` may be an int or a mapping label -> int. A config with no
    failures keeps its curve and gets ``estimate=None``.
    """
    rows = []
    for label, params, clock in configs:
        h = horizon[label] if isinstance(horizon, dict) else horizon
        results, curve = run_trials(params, trials, h, label_seed(seed, label), threads)
        try:
            est = estimate_mttue(results, h, params.scrub_interval, clock)
        except InsufficientFailuresError:
            est = None
        rows.append(SweepRow(label, params, clock, est, curve))
    return rows
