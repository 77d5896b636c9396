"""Predictive evaluation and reporting.

Average negative log-likelihood over train/test splits under the online
protocol (one continuous filtering sweep whose per-match predictive
log-probabilities are split at the cutoff), plus comparison tables and
plot-ready trajectory exports.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import MatchStream, Outcome
from .discrete import (
    DiscreteFilterTrace,
    DiscreteParams,
    DiscreteSmoothResult,
    categorical_mean_var,
    run_discrete_filter,
)
from .gaussian import (
    EloParams,
    GaussianFilterTrace,
    GaussianSSMParams,
    Method,
    SmoothResult,
    run_filter,
)
from .smc import SmcConfig, SmcFilterTrace, SmcSmoothResult, run_smc_filter


@dataclass
class EvalReport:
    """One method x dataset cell of a comparison table.

    avg NLL fields are None when the method cannot emit normalised draw
    predictions on this data (point-rating spread caps have no draw model
    of their own, so Glicko is reported unavailable on draw sports).
    """

    method: str
    dataset: str
    train_avg_nll: float | None
    test_avg_nll: float | None
    train_matches: int
    test_matches: int
    train_draw_fraction: float
    test_draw_fraction: float


def _draw_fraction(stream: MatchStream) -> float:
    if not stream.records:
        return 0.0
    return sum(r.outcome is Outcome.DRAW for r in stream.records) / len(stream.records)


def run_method_filter(
    stream: MatchStream,
    method: Method,
    theta: EloParams | GaussianSSMParams | DiscreteParams,
    smc_config: SmcConfig | None = None,
):
    """Dispatch one filtering sweep for any method."""
    if method is Method.DISCRETE:
        return run_discrete_filter(stream, None, theta)
    if method is Method.SMC:
        if smc_config is None:
            raise ValueError("SMC evaluation requires an SmcConfig")
        return run_smc_filter(stream, None, theta, smc_config)
    return run_filter(stream, None, theta, method)


def evaluate(
    stream_train: MatchStream,
    stream_test: MatchStream,
    method: Method,
    theta,
    dataset: str = "",
    smc_config: SmcConfig | None = None,
) -> EvalReport:
    """Online-protocol evaluation with frozen static parameters.

    One continuous sweep covers the concatenated streams, so the test
    filter starts from the train-terminal beliefs and keeps updating as
    test matches are consumed; the per-match predictive log-probabilities
    are split at the cutoff.
    """
    has_draws = stream_train.has_draws() or stream_test.has_draws()
    k_train, k_test = stream_train.num_matches, stream_test.num_matches
    if method is Method.GLICKO and has_draws:
        return EvalReport(
            method.value, dataset, None, None, k_train, k_test,
            _draw_fraction(stream_train), _draw_fraction(stream_test),
        )
    combined = MatchStream(stream_train.records + stream_test.records, players=stream_train.players)
    trace = run_method_filter(combined, method, theta, smc_config)
    train_nll = -sum(trace.logpreds[:k_train]) / k_train if k_train else None
    test_nll = -sum(trace.logpreds[k_train:]) / k_test if k_test else None
    return EvalReport(
        method.value, dataset, train_nll, test_nll, k_train, k_test,
        _draw_fraction(stream_train), _draw_fraction(stream_test),
    )


# ---------------------------------------------------------------------------
# Reporting


def report_to_csv(reports: list[EvalReport], path: str | Path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["method", "dataset", "train_avg_nll", "test_avg_nll",
             "train_matches", "test_matches", "train_draw_fraction", "test_draw_fraction"]
        )
        for r in reports:
            writer.writerow([
                r.method, r.dataset,
                "" if r.train_avg_nll is None else repr(float(r.train_avg_nll)),
                "" if r.test_avg_nll is None else repr(float(r.test_avg_nll)),
                r.train_matches, r.test_matches,
                repr(float(r.train_draw_fraction)), repr(float(r.test_draw_fraction)),
            ])


def format_report_table(reports: list[EvalReport]) -> str:
    """Aligned text table: one row per method, train/test NLL per dataset."""
    def fmt(x: float | None) -> str:
        return "-" if x is None else f"{x:.3f}"

    rows = [("method", "dataset", "train NLL", "test NLL")]
    for r in reports:
        rows.append((r.method, r.dataset or "-", fmt(r.train_avg_nll), fmt(r.test_avg_nll)))
    widths = [max(len(row[c]) for row in rows) for c in range(4)]
    lines = ["  ".join(cell.ljust(w) for cell, w in zip(row, widths)).rstrip() for row in rows]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines)


# ---------------------------------------------------------------------------
# Trajectory export


@dataclass
class TrajectoryRow:
    k: int
    t: float
    filter_mean: float
    filter_sd: float
    smooth_mean: float | None
    smooth_sd: float | None


def trajectory_rows(trace, smooth, player: str) -> list[TrajectoryRow]:
    """Filter/smooth mean +- sd time series for one player's matchtimes.

    Anchor points are omitted; a player with no matches yields an empty
    series.
    """
    if player not in trace.players:
        raise KeyError(f"unknown player {player!r}")
    i = trace.players.index(player)
    smooth_by_k: dict[int, tuple[float, float]] = {}
    if isinstance(smooth, SmoothResult):
        for pt in smooth.per_player[i]:
            smooth_by_k[pt.k] = (pt.mean, math.sqrt(max(pt.var, 0.0)))
    elif isinstance(smooth, DiscreteSmoothResult):
        for pt in smooth.per_player[i]:
            m, v = categorical_mean_var(pt.dist)
            smooth_by_k[pt.k] = (m, math.sqrt(max(v, 0.0)))
    elif isinstance(smooth, SmcSmoothResult):
        traj = smooth.trajectories[i]
        for col, pt in enumerate(smooth.points[i]):
            smooth_by_k[pt.k] = (float(traj[:, col].mean()), float(traj[:, col].std()))

    rows: list[TrajectoryRow] = []
    if isinstance(trace, GaussianFilterTrace):
        points = [(pt.k, pt.t, pt.filt_mean, math.sqrt(max(pt.filt_var, 0.0))) for pt in trace.per_player[i]]
    elif isinstance(trace, DiscreteFilterTrace):
        points = []
        for pt in trace.per_player[i]:
            m, v = categorical_mean_var(pt.filt)
            points.append((pt.k, pt.t, m, math.sqrt(max(v, 0.0))))
    elif isinstance(trace, SmcFilterTrace):
        points = []
        for pt in trace.per_player[i]:
            m = float(np.sum(pt.weights * pt.positions))
            v = float(np.sum(pt.weights * pt.positions**2) - m * m)
            points.append((pt.k, pt.t, m, math.sqrt(max(v, 0.0))))
    else:
        raise TypeError(f"unsupported trace type {type(trace).__name__}")
    for k, t, m, sd in points:
        if k == 0:
            continue
        sm = smooth_by_k.get(k)
        rows.append(TrajectoryRow(k, t, m, sd, sm[0] if sm else None, sm[1] if sm else None))
    return rows


def export_trajectory(trace, smooth, player: str, path: str | Path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["match_index", "time", "filter_mean", "filter_sd", "smooth_mean", "smooth_sd"])
        for row in trajectory_rows(trace, smooth, player):
            writer.writerow([
                row.k, repr(float(row.t)), repr(float(row.filter_mean)), repr(float(row.filter_sd)),
                "" if row.smooth_mean is None else repr(float(row.smooth_mean)),
                "" if row.smooth_sd is None else repr(float(row.smooth_sd)),
            ])
