"""MUSHRA prediction, confidence intervals, and the evaluation metrics
(Pearson, Spearman, outlier ratio) with scatter-data export.

Predicted MUSHRA = 100 * alpha / (alpha + beta). The confidence interval
scales the Beta variance to score units (x 100^2) and applies the
t-distribution for a simulated panel of N listeners.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.stats import t as t_dist

from . import prob_beta
from .audio_io import SignalPair
from .errors import MetricError
from .gammatone import GammatoneConfig, build_features
from .network import ParameterSet, forward
from .prob_beta import BetaParams

DEFAULT_LISTENERS = 12
DEFAULT_CI_LEVEL = 0.95


@dataclass
class Prediction:
    mushra: float
    params: BetaParams
    ci_low: float
    ci_high: float
    ci_level: float
    n_listeners: int


@dataclass
class EvalRecord:
    item_id: str
    condition_id: str
    prediction: Prediction
    subjective_scores: list[float]

    @property
    def subjective_mean(self) -> float:
        return float(np.mean(self.subjective_scores))

    @property
    def subjective_ci_halfwidth(self) -> float:
        scores = np.asarray(self.subjective_scores, dtype=np.float64)
        if scores.size < 2:
            raise MetricError("need at least 2 subjective scores per record")
        q = t_dist.ppf(0.975, scores.size - 1)
        return float(q * scores.std(ddof=1) / math.sqrt(scores.size))


@dataclass
class MetricsSummary:
    rp: float
    rs: float
    outlier_ratio: float
    n_points: int


def predicted_mushra(p: BetaParams) -> float:
    return 100.0 * prob_beta.mean(p)


def confidence_interval(
    p: BetaParams, n_listeners: int, level: float = DEFAULT_CI_LEVEL
) -> tuple[float, float]:
    """t-interval around 100*mean with sigma = 100*sqrt(Var)/sqrt(N),
    clipped to [0, 100] after construction."""
    if n_listeners < 2:
        raise MetricError("confidence interval needs at least 2 listeners")
    if not 0.0 < level < 1.0:
        raise MetricError("level must lie in (0, 1)")
    center = predicted_mushra(p)
    q = t_dist.ppf((1.0 + level) / 2.0, n_listeners - 1)
    half = q * 100.0 * math.sqrt(prob_beta.variance(p)) / math.sqrt(n_listeners)
    return max(0.0, center - half), min(100.0, center + half)


def prediction_from_params(
    p: BetaParams, n_listeners: int = DEFAULT_LISTENERS, level: float = DEFAULT_CI_LEVEL
) -> Prediction:
    low, high = confidence_interval(p, n_listeners, level)
    return Prediction(
        mushra=predicted_mushra(p),
        params=p,
        ci_low=low,
        ci_high=high,
        ci_level=level,
        n_listeners=n_listeners,
    )


def predict(
    params: ParameterSet,
    pair: SignalPair,
    gt_cfg: GammatoneConfig,
    n_listeners: int = DEFAULT_LISTENERS,
    level: float = DEFAULT_CI_LEVEL,
) -> Prediction:
    """Full-pipeline prediction for an aligned signal pair."""
    feats = build_features(pair, gt_cfg)
    raw = forward(params, feats)
    return prediction_from_params(prob_beta.map_params(raw), n_listeners, level)


# ---------------------------------------------------------------- metrics

def _check_xy(x, y):
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise MetricError("inputs must be 1-D and equally long")
    if x.size < 3:
        raise MetricError("need at least 3 points")
    return x, y


def pearson(x, y) -> float:
    x, y = _check_xy(x, y)
    xc = x - x.mean()
    yc = y - y.mean()
    vx = float(xc @ xc)
    vy = float(yc @ yc)
    if vx == 0.0 or vy == 0.0:
        raise MetricError("correlation undefined for zero-variance input")
    return float(xc @ yc / math.sqrt(vx * vy))


def rank_average_ties(x) -> np.ndarray:
    """Fractional ranks (1-based); tied values share the average rank."""
    x = np.asarray(x, dtype=np.float64)
    order = np.argsort(x, kind="stable")
    ranks = np.empty(x.size, dtype=np.float64)
    i = 0
    while i < x.size:
        j = i
        while j + 1 < x.size and x[order[j + 1]] == x[order[i]]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def spearman(x, y) -> float:
    x, y = _check_xy(x, y)
    return pearson(rank_average_ties(x), rank_average_ties(y))


def outlier_ratio(records: list[EvalRecord]) -> float:
    """Fraction of records whose prediction falls outside the listener-mean
    95% t-interval."""
    if not records:
        raise MetricError("no records to evaluate")
    outliers = sum(
        1
        for r in records
        if abs(r.prediction.mushra - r.subjective_mean) > r.subjective_ci_halfwidth
    )
    return outliers / len(records)


def summarize(records: list[EvalRecord]) -> MetricsSummary:
    preds = [r.prediction.mushra for r in records]
    means = [r.subjective_mean for r in records]
    return MetricsSummary(
        rp=pearson(preds, means),
        rs=spearman(preds, means),
        outlier_ratio=outlier_ratio(records),
        n_points=len(records),
    )


def write_scatter(path: str | Path, records: list[EvalRecord]) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["group_id", "ground_truth", "prediction", "ci_low", "ci_high"]
        )
        for r in records:
            writer.writerow(
                [
                    f"{r.item_id}/{r.condition_id}",
                    f"{r.subjective_mean:.6f}",
                    f"{r.prediction.mushra:.6f}",
                    f"{r.prediction.ci_low:.6f}",
                    f"{r.prediction.ci_high:.6f}",
                ]
            )
