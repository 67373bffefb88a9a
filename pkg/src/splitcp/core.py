"""Split conformal prediction over per-class probability scores.

The model itself is out of scope: records carry the per-class probability
vectors a trained classifier produced. Calibration turns the conformity
scores of a labeled calibration set into a single threshold; prediction
sets are then every class whose score falls at or below it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ConfigurationError, InputError

#: Tolerance for the sum-to-one check on ingested probability vectors.
#: Loose enough for float32 softmax exports, tight enough to catch
#: column mix-ups.
PROB_SUM_TOL = 1e-6

#: Built-in conformity score functions, selected by identifier.
SCORE_FUNCTIONS = ("lac",)

#: A conformity score is a plain float; in [0, 1] under the "lac" score.
ConformityScore = float


class _CoverAll:
    """Sentinel threshold: the calibration set was too small for the
    requested alpha, so every prediction set must contain all classes."""

    __slots__ = ()

    def __repr__(self) -> str:
        return "COVER_ALL"

    def __eq__(self, other: object) -> bool:
        return isinstance(other, _CoverAll)

    def __hash__(self) -> int:
        return hash(_CoverAll)


COVER_ALL = _CoverAll()


@dataclass(frozen=True)
class LabelSpace:
    """The finite set of class indices 0 .. num_classes - 1."""

    num_classes: int

    def __post_init__(self) -> None:
        if not isinstance(self.num_classes, int) or self.num_classes < 2:
            raise InputError(f"num_classes must be an integer >= 2, got {self.num_classes!r}")


@dataclass(frozen=True)
class ProbabilityRecord:
    """One example at the score level: an identifier, an optional true
    label, and the model's per-class probability vector.

    Parameters
    ----------
    id : str
        Opaque identifier.
    label : int or None
        True class index, when known.
    probs : sequence of float
        Per-class probabilities, entries in [0, 1]. With
        ``normalized=True`` (the default) they must sum to 1 within
        ``PROB_SUM_TOL``.
    normalized : bool
        Set to False for score-space vectors (entry c encodes a raw
        conformity score as ``1 - score_c``) that are not a probability
        distribution. Used by the synthetic simulation oracle; ingested
        files are always normalized.
    """

    id: str
    label: int | None
    probs: tuple[float, ...]
    normalized: bool = field(default=True, compare=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "probs", tuple(float(p) for p in self.probs))
        if len(self.probs) < 2:
            raise InputError(f"record {self.id!r}: needs at least 2 classes, got {len(self.probs)}")
        for c, p in enumerate(self.probs):
            if not math.isfinite(p) or p < 0.0 or p > 1.0:
                raise InputError(f"record {self.id!r}: probability for class {c} is {p!r}, not in [0, 1]")
        if self.normalized and abs(math.fsum(self.probs) - 1.0) > PROB_SUM_TOL:
            raise InputError(
                f"record {self.id!r}: probabilities sum to {math.fsum(self.probs)!r}, "
                f"expected 1 within {PROB_SUM_TOL}"
            )
        if self.label is not None and not (0 <= self.label < len(self.probs)):
            raise InputError(
                f"record {self.id!r}: label {self.label} out of range for {len(self.probs)} classes"
            )

    @property
    def num_classes(self) -> int:
        return len(self.probs)


@dataclass(frozen=True)
class CalibratedPredictor:
    """Frozen result of one calibration run.

    ``q_hat`` is either a real threshold or the ``COVER_ALL`` sentinel,
    which is used exactly when the required order statistic would exceed
    the calibration size.
    """

    alpha: float
    m: int
    score_fn: str
    q_hat: float | _CoverAll
    ties_warning: bool = False

    @property
    def covers_all(self) -> bool:
        return isinstance(self.q_hat, _CoverAll)


@dataclass(frozen=True)
class PredictionSet:
    """Set of candidate class indices for one record."""

    labels: frozenset[int]

    @property
    def set_size(self) -> int:
        return len(self.labels)

    def __contains__(self, label: int) -> bool:
        return label in self.labels


@dataclass(frozen=True)
class CoverageReport:
    """Empirical coverage of one fixed predictor on labeled records."""

    n_eval: int
    empirical_coverage: float
    mean_set_size: float


def calibration_rank(m: int, alpha: float) -> int:
    """Rank k of the calibration order statistic used as threshold.

    k = ceil((1 - alpha) * (m + 1)); when k > m the calibration set is
    too small and the predictor must cover all classes.

    The product (m + 1) * alpha is rounded to 12 decimal places before
    flooring so that values that are exact integers in decimal (e.g.
    alpha = 0.1, m = 9) do not straddle the floor boundary through float
    noise. The rank is derived as m + 1 - floor(...) from that single
    rounded quantity, so this module and the guarantees module always
    agree on the degenerate boundary.
    """
    _validate_m_alpha(m, alpha)
    slack = math.floor(round((m + 1) * alpha, 12))
    return (m + 1) - slack


def score_record(record: ProbabilityRecord, class_index: int, score_fn: str = "lac") -> float:
    """Conformity score of ``record`` at ``class_index``.

    The built-in "lac" score is the inverse probability 1 - p_class:
    lower means more conforming.
    """
    if score_fn not in SCORE_FUNCTIONS:
        raise ConfigurationError(
            f"unknown score function {score_fn!r}; available: {', '.join(SCORE_FUNCTIONS)}"
        )
    if not (0 <= class_index < record.num_classes):
        raise InputError(
            f"class index {class_index} out of range for {record.num_classes} classes"
        )
    return 1.0 - record.probs[class_index]


def calibrate(
    cal_scores: Sequence[float] | np.ndarray,
    alpha: float,
    *,
    score_fn: str = "lac",
    jitter: float = 0.0,
    jitter_seed: int = 0,
) -> CalibratedPredictor:
    """Select the conformal threshold from calibration scores.

    Parameters
    ----------
    cal_scores : sequence of float
        Conformity scores of the m calibration examples at their true
        labels.
    alpha : float
        Miscoverage level in (0, 1).
    score_fn : str
        Identifier recorded on the predictor (the scores themselves are
        taken as given).
    jitter : float
        When > 0, add independent Uniform[0, jitter) noise to each score
        before ranking. Breaks ties for exactness experiments; opt-in and
        never applied silently.
    jitter_seed : int
        Seed for the jitter noise stream (Philox).

    Returns
    -------
    CalibratedPredictor
        With ``q_hat`` equal to the k-th smallest score for
        k = ceil((1 - alpha) * (m + 1)), or ``COVER_ALL`` when k > m.
        ``ties_warning`` is set when duplicate scores remain among the
        ranked values, since exactness claims assume continuous scores.
    """
    if score_fn not in SCORE_FUNCTIONS:
        raise ConfigurationError(
            f"unknown score function {score_fn!r}; available: {', '.join(SCORE_FUNCTIONS)}"
        )
    scores = np.asarray(cal_scores, dtype=float)
    if scores.ndim != 1 or scores.size == 0:
        raise InputError("calibration scores must be a non-empty 1-d sequence")
    if not np.all(np.isfinite(scores)):
        raise InputError("calibration scores must all be finite")
    if not (0.0 < alpha < 1.0):
        raise InputError(f"alpha must be in (0, 1), got {alpha!r}")
    if jitter < 0.0:
        raise InputError(f"jitter must be >= 0, got {jitter!r}")

    m = int(scores.size)
    if jitter > 0.0:
        rng = np.random.Generator(np.random.Philox(key=int(jitter_seed)))
        scores = scores + rng.random(m) * jitter

    ties = bool(np.unique(scores).size < m)
    k = calibration_rank(m, alpha)
    if k > m:
        q_hat: float | _CoverAll = COVER_ALL
    else:
        q_hat = float(np.sort(scores)[k - 1])
    return CalibratedPredictor(alpha=float(alpha), m=m, score_fn=score_fn, q_hat=q_hat, ties_warning=ties)


def predict_set(
    record: ProbabilityRecord,
    predictor: CalibratedPredictor,
    *,
    label_space: LabelSpace | None = None,
    force_nonempty: bool = False,
) -> PredictionSet:
    """Prediction set for one record under a calibrated threshold.

    Contains every class whose conformity score is <= q_hat; all classes
    under the ``COVER_ALL`` sentinel. Empty sets are permitted (they are
    what thresholding produces); ``force_nonempty`` replaces an empty set
    with the single lowest-score class.
    """
    if label_space is not None and record.num_classes != label_space.num_classes:
        raise InputError(
            f"record {record.id!r} has {record.num_classes} classes, "
            f"label space expects {label_space.num_classes}"
        )
    classes = range(record.num_classes)
    if predictor.covers_all:
        return PredictionSet(frozenset(classes))
    scores = [score_record(record, c, predictor.score_fn) for c in classes]
    labels = frozenset(c for c in classes if scores[c] <= predictor.q_hat)
    if force_nonempty and not labels:
        labels = frozenset({min(classes, key=lambda c: scores[c])})
    return PredictionSet(labels)


def evaluate_coverage(
    labeled_records: Sequence[ProbabilityRecord],
    predictor: CalibratedPredictor,
    *,
    label_space: LabelSpace | None = None,
    force_nonempty: bool = False,
) -> CoverageReport:
    """Empirical coverage and mean set size over labeled records.

    This is the conditional-coverage estimator for one fixed calibration
    draw: the fraction of the K records whose true label lands in the
    prediction set.
    """
    if len(labeled_records) == 0:
        raise InputError("need at least one labeled record")
    covered = 0
    total_size = 0
    for i, record in enumerate(labeled_records):
        if record.label is None:
            raise InputError(f"record {record.id!r} (position {i}) has no label")
        pset = predict_set(
            record, predictor, label_space=label_space, force_nonempty=force_nonempty
        )
        covered += record.label in pset
        total_size += pset.set_size
    n = len(labeled_records)
    return CoverageReport(
        n_eval=n,
        empirical_coverage=covered / n,
        mean_set_size=total_size / n,
    )


def _validate_m_alpha(m: int, alpha: float) -> None:
    if not isinstance(m, (int, np.integer)) or m < 1:
        raise InputError(f"m must be an integer >= 1, got {m!r}")
    if not (0.0 < alpha < 1.0):
        raise InputError(f"alpha must be in (0, 1), got {alpha!r}")
