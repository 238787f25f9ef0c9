"""Calibration evaluation: global curves, per-position stratification, and
prefix-level comparison of predicted vs empirical quantiles.

An end score that ties a predicted quantile exactly counts as half below; the
synthetic scorer has atoms, so ties actually occur when predictions come from
the exact oracle.
"""
from __future__ import annotations

import csv
import json
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from .quantile import LEVELS


@dataclass
class CalibrationCurve:
    levels: np.ndarray
    positions: list[int]
    fractions: np.ndarray      # [n_positions, n_levels]
    counts: np.ndarray         # [n_positions]
    aggregate: np.ndarray      # [n_levels], all positions pooled
    total: int
    min_count: int = 100

    def max_abs_deviation(self, min_count: int | None = None) -> float:
        mc = self.min_count if min_count is None else min_count
        dev = 0.0
        for i, n in enumerate(self.counts):
            if n < mc:
                continue
            dev = max(dev, float(np.abs(self.fractions[i] - self.levels).max()))
        return dev

    def mean_abs_deviation(self, min_count: int | None = None) -> float:
        mc = self.min_count if min_count is None else min_count
        devs = [np.abs(self.fractions[i] - self.levels)
                for i, n in enumerate(self.counts) if n >= mc]
        if not devs:
            return 0.0
        return float(np.mean(np.concatenate(devs)))

    def aggregate_deviation(self) -> float:
        return float(np.abs(self.aggregate - self.levels).max())


def _below_indicator(y: float, row: np.ndarray) -> np.ndarray:
    return (y < row) + 0.5 * (y == row)


def global_calibration(head, validation, channel: str = "valence",
                       min_count: int = 100, positions_of=None) -> CalibrationCurve:
    """Fraction of end scores below each predicted quantile, per level and
    per token position. `head` needs a trajectory(example) -> [T, 10] method."""
    sums: dict[int, np.ndarray] = {}
    counts: Counter = Counter()
    agg = np.zeros(len(LEVELS))
    total = 0
    for ex in validation:
        traj = head.trajectory(ex)
        y = float(ex.scores[channel])
        for t in range(traj.shape[0]):
            ind = _below_indicator(y, traj[t])
            if t not in sums:
                sums[t] = np.zeros(len(LEVELS))
            sums[t] += ind
            counts[t] += 1
            agg += ind
            total += 1
    positions = sorted(sums)
    fractions = np.array([sums[t] / counts[t] for t in positions])
    return CalibrationCurve(
        levels=np.asarray(LEVELS), positions=positions, fractions=fractions,
        counts=np.array([counts[t] for t in positions]), aggregate=agg / max(total, 1),
        total=total, min_count=min_count)


def pivot_calibration(head, validation, pivot: str = "but",
                      channel: str = "valence") -> np.ndarray:
    """Single pooled curve over all occurrences of the pivot token.

    Returns the per-level below-fractions (identity line = perfectly
    calibrated pivot predictions)."""
    agg = np.zeros(len(LEVELS))
    n = 0
    for ex in validation:
        toks = list(ex.seq)
        if pivot not in toks:
            continue
        traj = head.trajectory(ex)
        y = float(ex.scores[channel])
        for t, tok in enumerate(toks):
            if tok == pivot:
                agg += _below_indicator(y, traj[t])
                n += 1
    if n == 0:
        return np.full(len(LEVELS), np.nan)
    return agg / n


def empirical_quantiles(scores, levels=LEVELS) -> np.ndarray:
    """Type-7 (linear interpolation of order statistics) empirical quantiles."""
    return np.quantile(np.asarray(scores, dtype=float), levels, method="linear")


@dataclass
class PrefixStats:
    prefix: tuple[str, ...]
    count: int
    empirical: np.ndarray
    predicted: np.ndarray
    max_deviation: float


def prefix_compare(head, validation, top_n: int = 50, min_len: int = 2,
                   channel: str = "valence", featurizer=None) -> list[PrefixStats]:
    """The top_n most frequent proper prefixes (length >= min_len) with
    empirical vs predicted quantiles at the last prefix position."""
    if top_n < 1:
        raise ValueError("top_n must be >= 1")
    by_prefix: dict[tuple[str, ...], list[float]] = {}
    for ex in validation:
        toks = tuple(ex.seq)
        y = float(ex.scores[channel])
        for L in range(min_len, len(toks)):
            by_prefix.setdefault(toks[:L], []).append(y)
    ranked = sorted(by_prefix.items(), key=lambda kv: (-len(kv[1]), kv[0]))[:top_n]
    out = []
    for prefix, ys in ranked:
        emp = empirical_quantiles(ys)
        feats = featurizer.featurize(list(prefix))
        pred = head.predict(feats)[-1]
        out.append(PrefixStats(prefix, len(ys), emp, pred,
                               float(np.abs(pred - emp).max())))
    return out


def average_max_deviation(stats: list[PrefixStats]) -> float:
    return float(np.mean([s.max_deviation for s in stats]))


def write_curve_csv(curve: CalibrationCurve, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["level", "position", "fraction", "count"])
        for i, pos in enumerate(curve.positions):
            for j, lvl in enumerate(curve.levels):
                w.writerow([f"{lvl:.2f}", pos, f"{curve.fractions[i, j]:.6f}",
                            int(curve.counts[i])])


def write_summary_json(curve: CalibrationCurve, channel: str, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump({"channel": channel,
                   "max_abs_dev": curve.max_abs_deviation(),
                   "mean_abs_dev": curve.mean_abs_deviation()}, fh, indent=2)
        fh.write("\n")
