"""Trajectory analytics: spread series, variance-peak scanning, and pivot
transition statistics."""
from __future__ import annotations

import csv
from collections import Counter
from dataclasses import dataclass

import numpy as np

from .quantile import LEVELS


def interp_quantile(values: np.ndarray, p: float, levels=LEVELS) -> float:
    """Linearly interpolated quantile at probability p on the level grid.

    At a grid knot this returns the knot value exactly; outside the grid it
    clamps to the end values.
    """
    if p <= levels[0]:
        return float(values[0])
    if p >= levels[-1]:
        return float(values[-1])
    return float(np.interp(p, levels, values))


@dataclass
class Trajectory:
    sentence_id: int
    tokens: tuple[str, ...]
    quants: np.ndarray  # [T, 10], rows sorted

    def medians(self) -> np.ndarray:
        return np.array([interp_quantile(row, 0.5) for row in self.quants])


def variance_series(traj: Trajectory) -> np.ndarray:
    """|q(0.75) - q(0.25)| per position, interpolated on the level grid."""
    out = np.empty(traj.quants.shape[0])
    for t, row in enumerate(traj.quants):
        out[t] = abs(interp_quantile(row, 0.75) - interp_quantile(row, 0.25))
    return out


@dataclass
class VariancePeak:
    sentence_id: int
    position: int
    token: str
    value: float
    preceding: tuple[str, ...]


def scan_peaks(trajectories, top_pct: float = 1.0):
    """Strict local maxima of the spread series above the (100 - top_pct)
    percentile of per-sentence maximum spread.

    Returns (peaks, token_table) where the table rows are
    (token, peak_count, total_count, share) ordered by the share of the
    token's occurrences that are peaks.
    """
    if not 0 < top_pct <= 100:
        raise ValueError("top_pct must be in (0, 100]")
    series = [(traj, variance_series(traj)) for traj in trajectories]
    sent_max = np.array([v.max() for _, v in series if len(v)])
    threshold = float(np.percentile(sent_max, 100.0 - top_pct)) if len(sent_max) else 0.0

    peaks: list[VariancePeak] = []
    total_counts: Counter = Counter()
    peak_counts: Counter = Counter()
    for traj, v in series:
        total_counts.update(traj.tokens)
        for t in range(1, len(v) - 1):
            if v[t] > v[t - 1] and v[t] > v[t + 1] and v[t] > threshold:
                peaks.append(VariancePeak(traj.sentence_id, t, traj.tokens[t],
                                          float(v[t]), traj.tokens[max(0, t - 3):t]))
                peak_counts[traj.tokens[t]] += 1
    table = [(tok, peak_counts[tok], total_counts[tok],
              peak_counts[tok] / total_counts[tok]) for tok in peak_counts]
    table.sort(key=lambda r: (-r[3], r[0]))
    return peaks, table


@dataclass
class TransitionStat:
    sentence_id: int
    position: int
    median_before: float
    median_at: float


def transition_stats(trajectories, pivot: str, marginal_median: float = 0.0):
    """One stat per pivot occurrence: predicted median just before the pivot
    vs at the pivot token. A sentence-initial pivot falls back to the supplied
    marginal median for its "before" value."""
    if not pivot:
        raise ValueError("pivot must be nonempty")
    stats: list[TransitionStat] = []
    for traj in trajectories:
        med = None
        for t, tok in enumerate(traj.tokens):
            if tok != pivot:
                continue
            if med is None:
                med = traj.medians()
            before = marginal_median if t == 0 else float(med[t - 1])
            stats.append(TransitionStat(traj.sentence_id, t, before, float(med[t])))
    gaps = [s.median_at - s.median_before for s in stats]
    summary = {
        "n": len(stats),
        "mean_gap": float(np.mean(gaps)) if gaps else 0.0,
    }
    return stats, summary


def trajectories_from(head, examples) -> list[Trajectory]:
    return [Trajectory(i, tuple(ex.seq), head.trajectory(ex))
            for i, ex in enumerate(examples)]


def write_peaks_csv(peaks, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["sentence_id", "position", "token", "value", "preceding"])
        for p in peaks:
            w.writerow([p.sentence_id, p.position, p.token, f"{p.value:.6f}",
                        " ".join(p.preceding)])


def write_token_table_csv(table, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["token", "peak_count", "total_count", "share"])
        for tok, pk, tot, share in table:
            w.writerow([tok, pk, tot, f"{share:.6f}"])


def write_transitions_csv(stats, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["sentence_id", "position", "before", "at"])
        for s in stats:
            w.writerow([s.sentence_id, s.position, f"{s.median_before:.6f}",
                        f"{s.median_at:.6f}"])
