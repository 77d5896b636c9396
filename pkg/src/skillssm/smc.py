"""Sequential Monte Carlo for the Gaussian dynamic-skill model.

Bootstrap particle filtering with index-paired assimilation and factorial
marginalisation, backward-simulation smoothing, and the particle
sufficient statistics consumed by the EM routines.

Every random draw comes from a counter-based generator keyed by named
(kind, player, match) streams, so results are bit-identical regardless of
how the work is scheduled across threads.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np
from scipy.special import expit, ndtr

from .core import (
    OUTCOMES,
    MatchStream,
    Outcome,
    PredictiveProbs,
    SparseIndex,
    build_sparse_index,
)
from .gaussian import LOG_FLOOR, GaussianSSMParams, Sigmoid

# named RNG stream kinds
_KIND_INIT = 0  # (player,)        initial particle draws
_KIND_PROP = 1  # (player, match)  propagation noise
_KIND_ASSIM = 2  # (match,)        joint resampling
_KIND_BACKWARD = 3  # (player,)    backward-simulation draws


def stream_rng(seed: int, *key: int) -> np.random.Generator:
    """Independent counter-based generator for one named stream."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=key)))


class ResampleSchedule(Enum):
    EVERY_STEP = "every_step"


@dataclass(frozen=True)
class SmcConfig:
    num_particles: int
    seed: int = 0
    resample: ResampleSchedule = ResampleSchedule.EVERY_STEP

    def __post_init__(self):
        if self.num_particles < 2:
            raise ValueError(f"need at least 2 particles, got {self.num_particles}")


@dataclass
class ParticleBelief:
    """Weighted particle approximation of one player's skill belief."""

    positions: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        self.positions = np.asarray(self.positions, dtype=float)
        self.weights = np.asarray(self.weights, dtype=float)
        if self.positions.size < 2 or self.positions.shape != self.weights.shape:
            raise ValueError("positions and weights must be equal-length vectors, J >= 2")
        if not np.all(np.isfinite(self.positions)):
            raise ValueError("non-finite particle positions")
        if np.any(self.weights < 0) or abs(self.weights.sum() - 1.0) > 1e-9:
            raise ValueError("weights must be nonnegative and sum to 1")

    @classmethod
    def uniform(cls, positions: np.ndarray) -> "ParticleBelief":
        positions = np.asarray(positions, dtype=float)
        return cls(positions, np.full(positions.size, 1.0 / positions.size))


def sample_prior(p: GaussianSSMParams, num_particles: int, rng: np.random.Generator) -> ParticleBelief:
    return ParticleBelief.uniform(rng.normal(0.0, p.sigma0, num_particles))


def smc_propagate(
    b: ParticleBelief, dt: float, p: GaussianSSMParams, rng: np.random.Generator
) -> ParticleBelief:
    """Move each particle through the random-walk dynamics; weights unchanged."""
    if dt < 0:
        raise ValueError(f"negative time step dt={dt}")
    sd = p.tau * math.sqrt(dt)
    if sd == 0.0:
        return ParticleBelief(b.positions.copy(), b.weights.copy())
    return ParticleBelief(b.positions + rng.normal(0.0, sd, b.positions.size), b.weights.copy())


def _outcome_likelihood_vec(d: np.ndarray, y: Outcome, p: GaussianSSMParams) -> np.ndarray:
    sig = expit if p.sigmoid is Sigmoid.LOGISTIC else ndtr
    if y is Outcome.HOME_WIN:
        return sig(d - p.epsilon)
    if y is Outcome.AWAY_WIN:
        return 1.0 - sig(d + p.epsilon)
    return np.clip(sig(d + p.epsilon) - sig(d - p.epsilon), 0.0, None)


def smc_assimilate(
    bh: ParticleBelief,
    ba: ParticleBelief,
    y: Outcome,
    p: GaussianSSMParams,
    rng: np.random.Generator,
) -> tuple[ParticleBelief, ParticleBelief, float]:
    """Pair particles by index, reweight by the outcome likelihood,
    multinomial-resample the joint pairs to uniform weights and unpair.

    logpred is the self-normalised predictive estimate
    log( sum_j w_j G_j / sum_j w_j ) with w_j the paired prior weights.
    """
    if bh.positions.size != ba.positions.size:
        raise ValueError("particle counts differ between the two players")
    w = bh.weights * ba.weights
    like = _outcome_likelihood_vec(bh.positions - ba.positions, y, p)
    unnorm = w * like
    total = unnorm.sum()
    if not total > 0.0:
        raise FloatingPointError(f"outcome {y} has zero probability on every particle pair")
    logpred = max(math.log(total / w.sum()), LOG_FLOOR)
    idx = rng.choice(unnorm.size, size=unnorm.size, p=unnorm / total)
    return (
        ParticleBelief.uniform(bh.positions[idx]),
        ParticleBelief.uniform(ba.positions[idx]),
        logpred,
    )


def smc_match_probs(bh: ParticleBelief, ba: ParticleBelief, p: GaussianSSMParams) -> PredictiveProbs:
    """Normalised particle estimates of the three outcome probabilities."""
    w = bh.weights * ba.weights
    d = bh.positions - ba.positions
    z = {y: float(np.sum(w * _outcome_likelihood_vec(d, y, p))) for y in OUTCOMES}
    return PredictiveProbs.normalised(z[Outcome.HOME_WIN], z[Outcome.AWAY_WIN], z[Outcome.DRAW])


# ---------------------------------------------------------------------------
# Filtering sweep


@dataclass
class SmcPoint:
    """Weighted filter approximation at one (player, matchtime).

    positions are the propagated (pre-resampling) particles and weights the
    post-assimilation weights, which is the representation the backward
    simulation pass requires. k = 0 marks the prior anchor. is_home says
    which side of match k the player was on (None for anchors).
    """

    k: int
    t: float
    dt: float
    positions: np.ndarray
    weights: np.ndarray
    is_home: bool | None = None


@dataclass
class SmcFilterTrace:
    params: GaussianSSMParams
    config: SmcConfig
    players: tuple[str, ...]
    per_player: list[list[SmcPoint]]
    probs: list[PredictiveProbs]
    logpreds: list[float]

    @property
    def loglik(self) -> float:
        return sum(self.logpreds)


def run_smc_filter(
    stream: MatchStream,
    index: SparseIndex | None,
    params: GaussianSSMParams,
    config: SmcConfig,
) -> SmcFilterTrace:
    """One sequential sweep of the bootstrap filter over the match stream.

    New players are anchored at their first matchtime with particles drawn
    from the prior.
    """
    if stream.has_draws() and params.epsilon == 0.0:
        raise ValueError("stream contains draws but the draw propensity epsilon is zero")
    if index is None:
        index = build_sparse_index(stream)
    j, seed = config.num_particles, config.seed
    uniform = np.full(j, 1.0 / j)

    n = stream.num_players
    per_player: list[list[SmcPoint]] = [[] for _ in range(n)]
    state: list[ParticleBelief | None] = [None] * n
    last_t = [0.0] * n
    probs_out: list[PredictiveProbs] = []
    logpreds: list[float] = []

    def anchor(i: int, t: float) -> None:
        state[i] = sample_prior(params, j, stream_rng(seed, _KIND_INIT, i))
        last_t[i] = t
        per_player[i].append(SmcPoint(0, t, 0.0, state[i].positions.copy(), uniform.copy()))

    for r in stream.records:
        ih, ia = stream.player_index[r.home], stream.player_index[r.away]
        for i in (ih, ia):
            if state[i] is None:
                anchor(i, r.t)
        dth, dta = r.t - last_t[ih], r.t - last_t[ia]
        ph = smc_propagate(state[ih], dth, params, stream_rng(seed, _KIND_PROP, ih, r.k))
        pa = smc_propagate(state[ia], dta, params, stream_rng(seed, _KIND_PROP, ia, r.k))
        probs = smc_match_probs(ph, pa, params)
        fh, fa, logpred = smc_assimilate(ph, pa, r.outcome, params, stream_rng(seed, _KIND_ASSIM, r.k))
        # post-assimilation weights on the propagated particles, kept for smoothing
        w = ph.weights * pa.weights * _outcome_likelihood_vec(
            ph.positions - pa.positions, r.outcome, params
        )
        w = w / w.sum()
        per_player[ih].append(SmcPoint(r.k, r.t, dth, ph.positions, w.copy(), True))
        per_player[ia].append(SmcPoint(r.k, r.t, dta, pa.positions, w.copy(), False))
        state[ih], state[ia] = fh, fa
        last_t[ih] = last_t[ia] = r.t
        probs_out.append(probs)
        logpreds.append(logpred)

    for i in range(n):
        if state[i] is None:
            anchor(i, 0.0)

    return SmcFilterTrace(params, config, stream.players, per_player, probs_out, logpreds)


# ---------------------------------------------------------------------------
# Backward simulation


@dataclass
class SmcSmoothResult:
    """J unweighted smoothing trajectories per player.

    trajectories[i] has shape (J, number of that player's trace points) and
    shares point metadata (k, t) with the filter trace.
    """

    players: tuple[str, ...]
    points: list[list[SmcPoint]] = field(repr=False)
    trajectories: list[np.ndarray] = field(repr=False)


def _gaussian_kernel_logpdf(x_prev: np.ndarray, x_next: float, var: float) -> np.ndarray:
    return -0.5 * (x_prev - x_next) ** 2 / var


def _sample_backward_step(
    positions: np.ndarray,
    weights: np.ndarray,
    next_values: np.ndarray,
    var: float,
    rng: np.random.Generator,
    kernel_logpdf=None,
) -> np.ndarray:
    """Draw one earlier-time value per trajectory given its later value.

    O(J^2) in general; trajectories sharing the same later value reuse one
    reweighted distribution, so duplicated values (common after multinomial
    resampling) cost nothing extra.
    """
    out = np.empty(next_values.size)
    uniq, inverse = np.unique(next_values, return_inverse=True)
    for u, value in enumerate(uniq):
        slots = np.nonzero(inverse == u)[0]
        if kernel_logpdf is not None:
            logw = kernel_logpdf(positions, value)
        elif var > 0.0:
            logw = _gaussian_kernel_logpdf(positions, value, var)
        else:
            logw = np.where(positions == value, 0.0, -np.inf)
        w = weights * np.exp(logw - logw.max())
        total = w.sum()
        if not total > 0.0:
            # degenerate kernel with no matching support: keep the value
            out[slots] = value
            continue
        idx = rng.choice(positions.size, size=slots.size, p=w / total)
        out[slots] = positions[idx]
    return out


def backward_simulate(
    trace: SmcFilterTrace,
    index: SparseIndex | None = None,
    p: GaussianSSMParams | None = None,
    kernel_logpdf=None,
) -> SmcSmoothResult:
    """Backward-simulation smoothing from the stored filter approximations.

    Per player, J joint trajectories are drawn over that player's
    matchtimes: the terminal point from its filter weights, then each
    earlier point from the filter reweighted by the transition density to
    the already-sampled later value. kernel_logpdf(positions, value)
    overrides the Gaussian transition density (the elapsed time is bound by
    the caller); it must absorb dt itself.
    """
    p = p or trace.params
    j = trace.config.num_particles
    trajectories: list[np.ndarray] = []
    for i, pts in enumerate(trace.per_player):
        rng = stream_rng(trace.config.seed, _KIND_BACKWARD, i)
        if not pts:
            trajectories.append(np.empty((j, 0)))
            continue
        traj = np.empty((j, len(pts)))
        last = pts[-1]
        idx = rng.choice(last.positions.size, size=j, p=last.weights)
        traj[:, -1] = last.positions[idx]
        for col in range(len(pts) - 2, -1, -1):
            nxt = pts[col + 1]
            var = p.tau**2 * nxt.dt
            bound = None
            if kernel_logpdf is not None:
                bound = lambda pos, val, _dt=nxt.dt: kernel_logpdf(pos, val, _dt)
            traj[:, col] = _sample_backward_step(
                pts[col].positions, pts[col].weights, traj[:, col + 1], var, rng, bound
            )
        trajectories.append(traj)
    return SmcSmoothResult(trace.players, trace.per_player, trajectories)


# ---------------------------------------------------------------------------
# EM sufficient statistics


@dataclass
class SmcEmStats:
    """Particle sufficient statistics for the analytic and numerical M-steps.

    sum_sq_initial aggregates squared anchor positions over players and
    trajectories; sum_sq_scaled_increments aggregates (x_k - x_{k-1})^2/dt
    over all positive-dt transitions; match_diffs[k] holds the J smoothed
    home-minus-away skill samples at match k.
    """

    sum_sq_initial: float
    num_anchor_samples: int
    sum_sq_scaled_increments: float
    num_transitions: int
    num_trajectories: int
    match_diffs: dict[int, np.ndarray]


def smc_em_statistics(smooth: SmcSmoothResult, index: SparseIndex | None = None) -> SmcEmStats:
    sum_sq_initial = 0.0
    num_anchor = 0
    sum_sq_scaled = 0.0
    num_transitions = 0
    num_traj = 0
    sides: dict[int, np.ndarray] = {}  # match -> signed samples seen so far
    match_diffs: dict[int, np.ndarray] = {}
    for pts, traj in zip(smooth.points, smooth.trajectories):
        if not pts:
            continue
        num_traj = traj.shape[0]
        sum_sq_initial += float(np.sum(traj[:, 0] ** 2))
        num_anchor += traj.shape[0]
        for col, pt in enumerate(pts):
            if col > 0 and pt.dt > 0.0:
                sum_sq_scaled += float(np.sum((traj[:, col] - traj[:, col - 1]) ** 2)) / pt.dt
                num_transitions += 1
            if pt.k > 0:
                signed = traj[:, col] if pt.is_home else -traj[:, col]
                if pt.k in sides:
                    match_diffs[pt.k] = sides.pop(pt.k) + signed
                else:
                    sides[pt.k] = signed
    return SmcEmStats(
        sum_sq_initial, num_anchor, sum_sq_scaled, num_transitions, num_traj, match_diffs
    )


def trajectories_to_csv(smooth: SmcSmoothResult, path: str | Path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["player", "time", "sample_index", "position"])
        for player, pts, traj in zip(smooth.players, smooth.points, smooth.trajectories):
            for col, pt in enumerate(pts):
                for s in range(traj.shape[0]):
                    writer.writerow([player, repr(float(pt.t)), s, repr(float(traj[s, col]))])
