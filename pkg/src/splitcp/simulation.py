"""Seeded Monte Carlo over calibration draws.

Each trial draws a fresh calibration set and a held-out evaluation set
from a score source, calibrates once, and measures the conditional
coverage of that single calibration. Aggregated over many trials this
reproduces the spread of calibration-conditional coverage that the
marginal guarantee hides.

Reproducibility contract: the full report is a pure function of
(config, source). Per-trial seeds are derived up front with a SplitMix64
avalanche of the master seed and the trial index, each trial runs its
own counter-based Philox generator, and aggregation happens in trial
order, so any execution schedule (including threads) produces an
identical report.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .core import CalibratedPredictor, ProbabilityRecord, calibrate
from .errors import InputError
from .guarantees import CoverageLaw, coverage_law

WITHOUT_REPLACEMENT = "without-replacement"
WITH_REPLACEMENT = "with-replacement"
SAMPLING_MODES = (WITHOUT_REPLACEMENT, WITH_REPLACEMENT)

_MASK64 = (1 << 64) - 1
_SPLITMIX_GAMMA = 0x9E3779B97F4A7C15
_SPLITMIX_MUL1 = 0xBF58476D1CE4E5B9
_SPLITMIX_MUL2 = 0x94D049BB133111EB


def derive_trial_seed(master_seed: int, trial_index: int) -> int:
    """64-bit trial seed from (master seed, trial index).

    SplitMix64 output function applied to master_seed advanced by
    (trial_index + 1) golden-gamma steps. Fixed by contract: changing it
    would invalidate golden report files.
    """
    if not (0 <= master_seed <= _MASK64):
        raise InputError(f"master seed must fit in 64 bits, got {master_seed!r}")
    if trial_index < 0:
        raise InputError(f"trial index must be >= 0, got {trial_index!r}")
    z = (master_seed + (trial_index + 1) * _SPLITMIX_GAMMA) & _MASK64
    z = ((z ^ (z >> 30)) * _SPLITMIX_MUL1) & _MASK64
    z = ((z ^ (z >> 27)) * _SPLITMIX_MUL2) & _MASK64
    return z ^ (z >> 31)


def trial_generator(trial_seed: int) -> np.random.Generator:
    """Counter-based Philox generator keyed by the trial seed.

    Philox is used (not the platform default) because its keyed stream is
    defined independently of platform and scheduling, which the
    byte-identical-report contract requires.
    """
    return np.random.Generator(np.random.Philox(key=int(trial_seed)))


@dataclass(frozen=True)
class SyntheticUniformSource:
    """Tie-free oracle source.

    Every conformity score, true label and others alike, is an
    independent Uniform(0, 1) draw, so the analytic coverage law is exact
    for this source. Emitted vectors are score-space (entry c is
    1 - score_c): they are not normalized probability distributions.

    Draw order per batch: n labels first, then the n-by-C score matrix.
    """

    num_classes: int = 2

    kind = "synthetic-uniform"

    def __post_init__(self) -> None:
        if not isinstance(self.num_classes, int) or self.num_classes < 2:
            raise InputError(f"num_classes must be an integer >= 2, got {self.num_classes!r}")

    def sample(
        self, rng: np.random.Generator, n: int, replace: bool = True
    ) -> tuple[np.ndarray, np.ndarray]:
        # The source is infinite; `replace` is irrelevant and ignored.
        labels = rng.integers(0, self.num_classes, size=n)
        probs = 1.0 - rng.random((n, self.num_classes))
        return labels, probs


class EmpiricalPoolSource:
    """Finite pool of labeled probability rows to subsample per trial."""

    kind = "empirical-pool"

    def __init__(self, labels: np.ndarray, probs: np.ndarray) -> None:
        labels = np.asarray(labels)
        probs = np.asarray(probs, dtype=float)
        if probs.ndim != 2 or probs.shape[1] < 2:
            raise InputError("pool probabilities must be a 2-d array with >= 2 classes")
        if labels.shape != (probs.shape[0],):
            raise InputError("pool labels and probabilities disagree in length")
        if labels.size == 0:
            raise InputError("pool must contain at least one row")
        if not np.issubdtype(labels.dtype, np.integer):
            raise InputError("pool labels must be integers (every row must be labeled)")
        if labels.min() < 0 or labels.max() >= probs.shape[1]:
            raise InputError("pool labels out of range for the class count")
        self.labels = labels
        self.probs = probs

    @classmethod
    def from_records(cls, records: list[ProbabilityRecord]) -> "EmpiricalPoolSource":
        if not records:
            raise InputError("pool must contain at least one row")
        for r in records:
            if r.label is None:
                raise InputError(f"pool record {r.id!r} has no label")
        return cls(
            np.array([r.label for r in records], dtype=np.int64),
            np.array([r.probs for r in records], dtype=float),
        )

    @property
    def size(self) -> int:
        return int(self.labels.size)

    @property
    def num_classes(self) -> int:
        return int(self.probs.shape[1])

    def sample(
        self, rng: np.random.Generator, n: int, replace: bool = False
    ) -> tuple[np.ndarray, np.ndarray]:
        idx = rng.choice(self.size, size=n, replace=replace)
        return self.labels[idx], self.probs[idx]


def synthetic_uniform_draw(
    rng: np.random.Generator, num_classes: int = 2
) -> tuple[int, np.ndarray]:
    """One draw from the tie-free oracle: (label, score-space vector).

    The true-label conformity score 1 - probs[label] is exactly
    Uniform(0, 1); all other class scores are independent uniforms.
    Stream-compatible with ``SyntheticUniformSource.sample(rng, 1)``.
    """
    source = SyntheticUniformSource(num_classes=num_classes)
    labels, probs = source.sample(rng, 1)
    return int(labels[0]), probs[0]


@dataclass(frozen=True)
class SimulationConfig:
    """One simulation run: M independent calibrations of size m, each
    scored on K held-out draws."""

    m: int
    alpha: float
    trials: int
    eval_size: int
    seed: int
    shortfall_threshold: float = 0.85
    sampling: str = WITHOUT_REPLACEMENT
    histogram_bins: int = 40

    def __post_init__(self) -> None:
        for name in ("m", "trials", "eval_size", "histogram_bins"):
            value = getattr(self, name)
            if not isinstance(value, int) or value < 1:
                raise InputError(f"{name} must be an integer >= 1, got {value!r}")
        if not (0.0 < self.alpha < 1.0):
            raise InputError(f"alpha must be in (0, 1), got {self.alpha!r}")
        if not (0.0 < self.shortfall_threshold < 1.0):
            raise InputError(
                f"shortfall_threshold must be in (0, 1), got {self.shortfall_threshold!r}"
            )
        if self.sampling not in SAMPLING_MODES:
            raise InputError(
                f"sampling must be one of {SAMPLING_MODES}, got {self.sampling!r}"
            )
        if not isinstance(self.seed, int) or not (0 <= self.seed <= _MASK64):
            raise InputError(f"seed must be an unsigned 64-bit integer, got {self.seed!r}")


@dataclass(frozen=True)
class TrialResult:
    """Outcome of one calibration draw."""

    trial_index: int
    conditional_coverage: float
    mean_set_size: float
    trial_seed: int


@dataclass(frozen=True)
class Histogram:
    """Fixed-width histogram over [0, 1]; bins are right-open except the
    last, which is closed at 1."""

    bin_edges: tuple[float, ...]
    counts: tuple[int, ...]
    frequencies: tuple[float, ...]


@dataclass(frozen=True)
class SimulationReport:
    """Aggregate of one simulation run, plus per-trial detail."""

    config: SimulationConfig
    source_kind: str
    num_classes: int
    pool_size: int | None
    trials: tuple[TrialResult, ...]
    histogram: Histogram
    mean_coverage: float
    shortfall_fraction: float
    analytic_law: CoverageLaw | None

    @property
    def coverages(self) -> np.ndarray:
        return np.array([t.conditional_coverage for t in self.trials])


def build_histogram(values, bins: int) -> Histogram:
    """Histogram of values in [0, 1] with ``bins`` equal-width bins.

    Counts sum to the number of values; frequencies are counts divided by
    that number (all zero for empty input). Values outside [0, 1] are
    rejected so coverage histograms across runs always share axes.
    """
    if not isinstance(bins, int) or bins < 1:
        raise InputError(f"bins must be an integer >= 1, got {bins!r}")
    arr = np.asarray(values, dtype=float)
    if arr.size and (arr.min() < 0.0 or arr.max() > 1.0):
        raise InputError("histogram values must lie in [0, 1]")
    counts, edges = np.histogram(arr, bins=bins, range=(0.0, 1.0))
    n = int(arr.size)
    freqs = counts / n if n else np.zeros(bins)
    return Histogram(
        bin_edges=tuple(float(e) for e in edges),
        counts=tuple(int(c) for c in counts),
        frequencies=tuple(float(f) for f in freqs),
    )


def _run_trial(
    config: SimulationConfig, source, trial_index: int, trial_seed: int
) -> TrialResult:
    """One calibration + evaluation. Pure function of its arguments."""
    rng = trial_generator(trial_seed)
    n = config.m + config.eval_size
    labels, probs = source.sample(
        rng, n, replace=(config.sampling == WITH_REPLACEMENT)
    )
    scores = 1.0 - probs
    true_scores = scores[np.arange(n), labels]

    predictor = calibrate(true_scores[: config.m], config.alpha)
    eval_true = true_scores[config.m :]
    if predictor.covers_all:
        coverage = 1.0
        mean_size = float(probs.shape[1])
    else:
        # Vectorized equivalent of predict_set/evaluate_coverage on the
        # K held-out rows (the record-level path cannot meet the runtime
        # budget; equivalence is covered by tests).
        coverage = float(np.count_nonzero(eval_true <= predictor.q_hat) / config.eval_size)
        mean_size = float((scores[config.m :] <= predictor.q_hat).sum(axis=1).mean())
    return TrialResult(
        trial_index=trial_index,
        conditional_coverage=coverage,
        mean_set_size=mean_size,
        trial_seed=trial_seed,
    )


def run_simulation(config: SimulationConfig, source, n_jobs: int = 1) -> SimulationReport:
    """Run the full Monte Carlo and aggregate.

    Parameters
    ----------
    config : SimulationConfig
    source : SyntheticUniformSource or EmpiricalPoolSource
        Where calibration and evaluation draws come from. Empirical pools
        must hold at least m + eval_size rows per trial under
        without-replacement sampling; there is no silent fallback to
        with-replacement.
    n_jobs : int
        Trials are independent; values > 1 run them on a thread pool.
        The report is identical for any n_jobs.
    """
    if isinstance(source, EmpiricalPoolSource):
        needed = config.m + config.eval_size
        if config.sampling == WITHOUT_REPLACEMENT and source.size < needed:
            raise InputError(
                f"pool holds {source.size} rows but without-replacement sampling "
                f"needs m + eval_size = {needed} per trial"
            )
        num_classes = source.num_classes
        pool_size: int | None = source.size
    elif isinstance(source, SyntheticUniformSource):
        num_classes = source.num_classes
        pool_size = None
    else:
        raise InputError(f"unsupported score source: {source!r}")

    seeds = [derive_trial_seed(config.seed, j) for j in range(config.trials)]
    if n_jobs == 1:
        results = [
            _run_trial(config, source, j, seeds[j]) for j in range(config.trials)
        ]
    else:
        if not isinstance(n_jobs, int) or n_jobs < 1:
            raise InputError(f"n_jobs must be an integer >= 1, got {n_jobs!r}")
        with ThreadPoolExecutor(max_workers=n_jobs) as pool:
            results = list(
                pool.map(
                    lambda j: _run_trial(config, source, j, seeds[j]),
                    range(config.trials),
                )
            )

    coverages = np.array([r.conditional_coverage for r in results])
    analytic = (
        coverage_law(config.m, config.alpha)
        if isinstance(source, SyntheticUniformSource)
        else None
    )
    return SimulationReport(
        config=config,
        source_kind=source.kind,
        num_classes=num_classes,
        pool_size=pool_size,
        trials=tuple(results),
        histogram=build_histogram(coverages, config.histogram_bins),
        mean_coverage=float(coverages.mean()),
        shortfall_fraction=float(
            np.count_nonzero(coverages < config.shortfall_threshold) / config.trials
        ),
        analytic_law=analytic,
    )
