"""Gaussian-family rating methods.

Elo-Davidson point ratings, Glicko (Extended Kalman with a variance cap),
Extended Kalman assimilation of the logistic/probit pairwise likelihood,
and TrueSkill2 moment matching, sharing one propagate step and one backward
Kalman smoother with lag-one autocovariances.

Skills are on the identifiable scale with prior mean 0 and likelihood
scale 1; times are fractional days, so the dynamics rate tau carries units
of skill per square-root day.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from enum import Enum
from pathlib import Path
from typing import NamedTuple

from scipy.special import expit, log_expit, log_ndtr, ndtr

from .core import (
    OUTCOMES,
    MatchStream,
    Outcome,
    PredictiveProbs,
    SparseIndex,
    build_sparse_index,
)

VAR_FLOOR = 1e-12
LOG_FLOOR = -745.0  # below this, exp underflows to 0

_SQRT_2PI = math.sqrt(2.0 * math.pi)


def _npdf(u: float) -> float:
    return math.exp(-0.5 * u * u) / _SQRT_2PI


class Method(Enum):
    ELO_DAVIDSON = "elo_davidson"
    GLICKO = "glicko"
    EXTENDED_KALMAN = "extended_kalman"
    TRUESKILL2 = "trueskill2"
    SMC = "smc"
    DISCRETE = "discrete"


GAUSSIAN_METHODS = (Method.GLICKO, Method.EXTENDED_KALMAN, Method.TRUESKILL2)


class Sigmoid(Enum):
    LOGISTIC = "logistic"
    INVERSE_PROBIT = "inverse_probit"


@dataclass(frozen=True)
class GaussianSkill:
    mean: float
    var: float

    def __post_init__(self):
        if not (self.var > 0.0 and math.isfinite(self.var) and math.isfinite(self.mean)):
            raise ValueError(f"invalid Gaussian skill belief {self}")


@dataclass(frozen=True)
class EloParams:
    """Elo-Davidson static parameters (scale s fixed to 1)."""

    k: float = 32.0
    kappa: float = 0.0
    s: float = 1.0

    def __post_init__(self):
        if self.k <= 0 or self.kappa < 0 or self.s <= 0:
            raise ValueError(f"invalid Elo-Davidson parameters {self}")


@dataclass(frozen=True)
class GaussianSSMParams:
    """Static parameters of the Gaussian dynamic-skill model.

    sigma_max is the Glicko-only spread cap; leave None for the uncapped
    Extended Kalman / TrueSkill2 dynamics.
    """

    sigma0: float = 1.0
    tau: float = 0.1
    epsilon: float = 0.0
    sigmoid: Sigmoid = Sigmoid.LOGISTIC
    sigma_max: float | None = None

    def __post_init__(self):
        if self.sigma0 <= 0 or self.tau < 0 or self.epsilon < 0:
            raise ValueError(f"invalid Gaussian SSM parameters {self}")
        if self.sigma_max is not None and self.sigma_max <= 0:
            raise ValueError(f"sigma_max must be positive, got {self.sigma_max}")


# ---------------------------------------------------------------------------
# Elo-Davidson


def _elo_g(z: float, kappa: float) -> float:
    """Expected score (win + half draw) at rating difference z, base 10."""
    ez = 10.0**z
    return (ez + kappa / 2.0) / (1.0 / ez + ez + kappa)


def elo_davidson_probs(xh: float, xa: float, p: EloParams) -> PredictiveProbs:
    z = (xh - xa) / p.s
    return PredictiveProbs.normalised(10.0**z, 10.0**-z, p.kappa)


def elo_davidson_update(
    xh: float, xa: float, y: Outcome, p: EloParams
) -> tuple[float, float, PredictiveProbs]:
    probs = elo_davidson_probs(xh, xa, p)
    score_h = {Outcome.HOME_WIN: 1.0, Outcome.AWAY_WIN: 0.0, Outcome.DRAW: 0.5}[y]
    z = (xh - xa) / p.s
    xh2 = xh + p.k * (score_h - _elo_g(z, p.kappa))
    xa2 = xa + p.k * ((1.0 - score_h) - _elo_g(-z, p.kappa))
    return xh2, xa2, probs


# ---------------------------------------------------------------------------
# Shared Gaussian machinery


def gaussian_propagate(b: GaussianSkill, dt: float, p: GaussianSSMParams) -> GaussianSkill:
    """Random-walk predict step: variance grows by tau^2 * dt (capped for Glicko)."""
    if dt < 0:
        raise ValueError(f"negative time step dt={dt}")
    var = b.var + p.tau**2 * dt
    if p.sigma_max is not None:
        var = min(var, p.sigma_max**2)
    return GaussianSkill(b.mean, max(var, VAR_FLOOR))


def _sigmoid_val(u: float, sigmoid: Sigmoid) -> float:
    return expit(u) if sigmoid is Sigmoid.LOGISTIC else ndtr(u)


def outcome_likelihood(d: float, y: Outcome, p: GaussianSSMParams) -> float:
    """Probability of outcome y at skill difference d = x^h - x^a.

    The three outcome values telescope to 1 for every d; the draw case is
    identically 0 when epsilon is 0.
    """
    sig = lambda u: _sigmoid_val(u, p.sigmoid)
    if y is Outcome.HOME_WIN:
        return float(sig(d - p.epsilon))
    if y is Outcome.AWAY_WIN:
        return float(sig(-(d + p.epsilon)))
    return float(max(sig(d + p.epsilon) - sig(d - p.epsilon), 0.0))


def _loglik_derivs(d: float, y: Outcome, p: GaussianSSMParams) -> tuple[float, float, float]:
    """(log G, d log G / dd, d^2 log G / dd^2) at skill difference d."""
    eps = p.epsilon
    if p.sigmoid is Sigmoid.LOGISTIC:
        if y is Outcome.HOME_WIN:
            u = d - eps
            s = expit(u)
            return float(log_expit(u)), 1.0 - s, -s * (1.0 - s)
        if y is Outcome.AWAY_WIN:
            u = d + eps
            s = expit(u)
            return float(log_expit(-u)), -s, -s * (1.0 - s)
        sp, sm = expit(d + eps), expit(d - eps)
        g = sp - sm
        if g <= 0.0:
            return LOG_FLOOR, 0.0, 0.0
        g1 = sp * (1 - sp) - sm * (1 - sm)
        g2 = sp * (1 - sp) * (1 - 2 * sp) - sm * (1 - sm) * (1 - 2 * sm)
        l1 = g1 / g
        return math.log(g), l1, g2 / g - l1 * l1
    # inverse probit
    if y is Outcome.HOME_WIN:
        u = d - eps
        logp = float(log_ndtr(u))
        r = math.exp(math.log(_npdf(u)) - logp) if _npdf(u) > 0 else max(-u, 0.0)
        return logp, r, -u * r - r * r
    if y is Outcome.AWAY_WIN:
        u = d + eps
        logp = float(log_ndtr(-u))
        r = math.exp(math.log(_npdf(u)) - logp) if _npdf(u) > 0 else max(u, 0.0)
        return logp, -r, u * r - r * r
    g = ndtr(d + eps) - ndtr(d - eps)
    if g <= 0.0:
        return LOG_FLOOR, 0.0, 0.0
    g1 = _npdf(d + eps) - _npdf(d - eps)
    g2 = -(d + eps) * _npdf(d + eps) + (d - eps) * _npdf(d - eps)
    l1 = g1 / g
    return math.log(g), l1, g2 / g - l1 * l1


class EkUpdate(NamedTuple):
    home: GaussianSkill
    away: GaussianSkill
    rho: float
    logpred: float
    used_fallback: bool


def _conjugate_update(
    bh: GaussianSkill, ba: GaussianSkill, l0: float, l1: float, l2: float
) -> EkUpdate:
    """Exactly assimilate the quadratic log-likelihood l0 + l1*dz + l2/2*dz^2.

    The likelihood depends on the difference z = x^h - x^a only, so the
    gradient is l1*(1,-1) and the Hessian l2 times the difference outer
    product. Returns the joint posterior marginals, its cross-covariance and
    the Gaussian integral of the surrogate against the predictive beliefs.
    """
    vh, va = bh.var, ba.var
    ah = 1.0 / vh - l2
    aa = 1.0 / va - l2
    det_a = ah * aa - l2 * l2
    det_iph = 1.0 - l2 * (vh + va)  # det(I - P H), same sign as det_a
    if not (det_a > 0.0 and ah > 0.0 and math.isfinite(det_a)):
        # gradient-only fallback: posterior precision loses definiteness
        logpred = l0 + 0.5 * l1 * l1 * (vh + va)
        return EkUpdate(
            GaussianSkill(bh.mean + vh * l1, vh),
            GaussianSkill(ba.mean - va * l1, va),
            0.0,
            logpred,
            True,
        )
    c00 = aa / det_a
    c11 = ah / det_a
    c01 = -l2 / det_a
    quad = l1 * l1 * (c00 - 2.0 * c01 + c11)
    logpred = l0 - 0.5 * math.log(det_iph) + 0.5 * quad
    return EkUpdate(
        GaussianSkill(bh.mean + l1 * (c00 - c01), max(c00, VAR_FLOOR)),
        GaussianSkill(ba.mean + l1 * (c01 - c11), max(c11, VAR_FLOOR)),
        c01,
        logpred,
        False,
    )


def ek_assimilate(
    bh: GaussianSkill, ba: GaussianSkill, y: Outcome, p: GaussianSSMParams
) -> EkUpdate:
    """Extended Kalman assimilation of a match outcome.

    Builds the linear-Gaussian surrogate from a second-order expansion of
    log G around the predictive means and assimilates it exactly; the
    cross-covariance rho is reported but discarded by the marginalise step.
    """
    l0, l1, l2 = _loglik_derivs(bh.mean - ba.mean, y, p)
    return _conjugate_update(bh, ba, l0, l1, l2)


def assimilate_gaussian_obs(
    bh: GaussianSkill, ba: GaussianSkill, value: float, obs_var: float
) -> EkUpdate:
    """Assimilate a Gaussian pseudo-observation of x^h - x^a.

    The log-likelihood is exactly quadratic, so the Extended Kalman update
    is the exact conjugate posterior; used for calibration and oracle tests.
    """
    z0 = bh.mean - ba.mean
    resid = value - z0
    l0 = -0.5 * resid * resid / obs_var - 0.5 * math.log(2.0 * math.pi * obs_var)
    return _conjugate_update(bh, ba, l0, resid / obs_var, -1.0 / obs_var)


def probit_gaussian_cdf_integral(mu: float, var: float) -> float:
    """Closed form of the standard-Gaussian expectation of the probit CDF."""
    if var < 0:
        raise ValueError(f"negative variance {var}")
    return float(ndtr(mu / math.sqrt(1.0 + var)))


def _ts2_normaliser(m: float, v: float, y: Outcome, eps: float) -> tuple[float, float, float]:
    """(Z, dZ/dm, d2Z/dm2) of the probit predictive normaliser.

    z = x^h - x^a is Gaussian with mean m and variance v under the
    predictive beliefs; Z marginalises the probit outcome likelihood.
    """
    c = math.sqrt(1.0 + v)
    if y is Outcome.HOME_WIN:
        u = (m - eps) / c
        return float(ndtr(u)), _npdf(u) / c, -u * _npdf(u) / (c * c)
    if y is Outcome.AWAY_WIN:
        u = (m + eps) / c
        return float(ndtr(-u)), -_npdf(u) / c, u * _npdf(u) / (c * c)
    up, um = (m + eps) / c, (m - eps) / c
    z = float(ndtr(up) - ndtr(um))
    dz = (_npdf(up) - _npdf(um)) / c
    d2z = (-up * _npdf(up) + um * _npdf(um)) / (c * c)
    return z, dz, d2z


class Ts2Update(NamedTuple):
    home: GaussianSkill
    away: GaussianSkill
    logpred: float


def ts2_assimilate(
    bh: GaussianSkill, ba: GaussianSkill, y: Outcome, p: GaussianSSMParams
) -> Ts2Update:
    """Moment-matching assimilation under the inverse-probit likelihood.

    The returned beliefs carry the exact marginal mean and variance of the
    non-Gaussian joint filter, obtained from the first two derivatives of
    the log-normaliser; logpred is the exact predictive log-probability.
    """
    if p.sigmoid is not Sigmoid.INVERSE_PROBIT:
        raise ValueError("TrueSkill2 moment matching requires the inverse-probit sigmoid")
    m = bh.mean - ba.mean
    v = bh.var + ba.var
    z, dz, d2z = _ts2_normaliser(m, v, y, p.epsilon)
    if not z > 1e-300:
        raise FloatingPointError(
            f"outcome {y} has vanishing probability under current beliefs (m={m}, v={v})"
        )
    lp = dz / z
    lpp = d2z / z - lp * lp
    home = GaussianSkill(bh.mean + bh.var * lp, max(bh.var + bh.var**2 * lpp, VAR_FLOOR))
    away = GaussianSkill(ba.mean - ba.var * lp, max(ba.var + ba.var**2 * lpp, VAR_FLOOR))
    return Ts2Update(home, away, math.log(z))


def ts2_match_probs(bh: GaussianSkill, ba: GaussianSkill, p: GaussianSSMParams) -> PredictiveProbs:
    """Exact normalised outcome probabilities under predictive beliefs."""
    m = bh.mean - ba.mean
    v = bh.var + ba.var
    zs = {y: _ts2_normaliser(m, v, y, p.epsilon)[0] for y in OUTCOMES}
    return PredictiveProbs.normalised(
        zs[Outcome.HOME_WIN], zs[Outcome.AWAY_WIN], zs[Outcome.DRAW]
    )


def ek_match_probs(bh: GaussianSkill, ba: GaussianSkill, p: GaussianSSMParams) -> PredictiveProbs:
    """Surrogate outcome probabilities, normalised across the alphabet.

    Each outcome gets its own linear-Gaussian surrogate; the raw surrogate
    integrals are close to, but not exactly, normalised, so they are
    renormalised here.
    """
    weights = {}
    for y in OUTCOMES:
        if y is Outcome.DRAW and p.epsilon == 0.0:
            weights[y] = 0.0
            continue
        weights[y] = math.exp(max(ek_assimilate(bh, ba, y, p).logpred, LOG_FLOOR))
    return PredictiveProbs.normalised(
        weights[Outcome.HOME_WIN], weights[Outcome.AWAY_WIN], weights[Outcome.DRAW]
    )


def kalman_smooth_step(
    filt_k: GaussianSkill, smooth_k1: GaussianSkill, dt: float, tau: float
) -> tuple[GaussianSkill, float]:
    """One backward Kalman step; also returns the lag-one moment E[x_k x_{k+1}]."""
    if dt < 0:
        raise ValueError(f"negative time step dt={dt}")
    pred_var = filt_k.var + tau**2 * dt
    return _smooth_step_with_pred(filt_k, smooth_k1, pred_var)


def _smooth_step_with_pred(
    filt_k: GaussianSkill, smooth_k1: GaussianSkill, pred_var: float
) -> tuple[GaussianSkill, float]:
    d = filt_k.var / pred_var
    mean = filt_k.mean + d * (smooth_k1.mean - filt_k.mean)
    var = filt_k.var + d * d * (smooth_k1.var - pred_var)
    lag_one = mean * smooth_k1.mean + d * smooth_k1.var
    return GaussianSkill(mean, max(var, VAR_FLOOR)), lag_one


# ---------------------------------------------------------------------------
# Sequential sweeps over a match stream


@dataclass
class TracePoint:
    """Per (player, matchtime) filtering statistics.

    k = 0 marks the prior anchor placed at the player's first matchtime.
    dt is the elapsed time since the player's previous point.
    """

    k: int
    t: float
    dt: float
    pred_mean: float
    pred_var: float
    filt_mean: float
    filt_var: float


@dataclass
class GaussianFilterTrace:
    method: Method
    params: EloParams | GaussianSSMParams
    players: tuple[str, ...]
    per_player: list[list[TracePoint]]
    probs: list[PredictiveProbs]
    logpreds: list[float]
    fallbacks: list[bool]

    @property
    def loglik(self) -> float:
        return sum(self.logpreds)

    def terminal_beliefs(self) -> dict[int, tuple[float, float, float]]:
        """player index -> (last time, mean, var) for players with any point."""
        return {
            i: (pts[-1].t, pts[-1].filt_mean, pts[-1].filt_var)
            for i, pts in enumerate(self.per_player)
            if pts
        }


@dataclass
class SmoothPoint:
    k: int
    t: float
    mean: float
    var: float
    lag_one: float  # E[x at this point * x at the player's next point]; nan at the last


@dataclass
class SmoothResult:
    players: tuple[str, ...]
    per_player: list[list[SmoothPoint]]


def _check_draw_support(stream: MatchStream, method: Method, draw_propensity: float) -> None:
    if stream.has_draws() and draw_propensity == 0.0:
        raise ValueError(
            f"stream contains draws but {method.value} was bound with zero draw propensity"
        )


def run_filter(
    stream: MatchStream,
    index: SparseIndex | None,
    params: EloParams | GaussianSSMParams,
    method: Method,
) -> GaussianFilterTrace:
    """One sequential sweep: propagate, assimilate and record every match.

    New players are anchored at their first matchtime with the prior belief
    directly, so sigma0 is the predictive spread of a debutant.
    """
    if method is Method.ELO_DAVIDSON:
        if not isinstance(params, EloParams):
            raise TypeError("Elo-Davidson requires EloParams")
        _check_draw_support(stream, method, params.kappa)
    else:
        if method not in GAUSSIAN_METHODS:
            raise ValueError(f"run_filter does not handle method {method}")
        if not isinstance(params, GaussianSSMParams):
            raise TypeError(f"{method.value} requires GaussianSSMParams")
        if method is Method.TRUESKILL2 and params.sigmoid is not Sigmoid.INVERSE_PROBIT:
            raise ValueError("TrueSkill2 requires the inverse-probit sigmoid")
        _check_draw_support(stream, method, params.epsilon)
        if method is Method.GLICKO and params.sigma_max is None:
            params = replace(params, sigma_max=params.sigma0)
        elif method is not Method.GLICKO:
            params = replace(params, sigma_max=None)
    if index is None:
        index = build_sparse_index(stream)

    n = stream.num_players
    per_player: list[list[TracePoint]] = [[] for _ in range(n)]
    state: list[GaussianSkill | float | None] = [None] * n
    last_t = [0.0] * n
    probs_out: list[PredictiveProbs] = []
    logpreds: list[float] = []
    fallbacks: list[bool] = []

    elo = method is Method.ELO_DAVIDSON
    prior_var = 0.0 if elo else params.sigma0**2

    for r in stream.records:
        ih, ia = stream.player_index[r.home], stream.player_index[r.away]
        for i in (ih, ia):
            if state[i] is None:
                state[i] = 0.0 if elo else GaussianSkill(0.0, prior_var)
                last_t[i] = r.t
                per_player[i].append(TracePoint(0, r.t, 0.0, 0.0, prior_var, 0.0, prior_var))
        if elo:
            xh, xa = state[ih], state[ia]
            xh2, xa2, probs = elo_davidson_update(xh, xa, r.outcome, params)
            per_player[ih].append(TracePoint(r.k, r.t, r.t - last_t[ih], xh, 0.0, xh2, 0.0))
            per_player[ia].append(TracePoint(r.k, r.t, r.t - last_t[ia], xa, 0.0, xa2, 0.0))
            state[ih], state[ia] = xh2, xa2
            fallbacks.append(False)
        else:
            dth, dta = r.t - last_t[ih], r.t - last_t[ia]
            ph = gaussian_propagate(state[ih], dth, params)
            pa = gaussian_propagate(state[ia], dta, params)
            if method is Method.TRUESKILL2:
                probs = ts2_match_probs(ph, pa, params)
                fh, fa, _ = ts2_assimilate(ph, pa, r.outcome, params)
                fallbacks.append(False)
            else:
                probs = ek_match_probs(ph, pa, params)
                upd = ek_assimilate(ph, pa, r.outcome, params)
                fh, fa = upd.home, upd.away
                fallbacks.append(upd.used_fallback)
            per_player[ih].append(TracePoint(r.k, r.t, dth, ph.mean, ph.var, fh.mean, fh.var))
            per_player[ia].append(TracePoint(r.k, r.t, dta, pa.mean, pa.var, fa.mean, fa.var))
            state[ih], state[ia] = fh, fa
        last_t[ih] = last_t[ia] = r.t
        probs_out.append(probs)
        logpreds.append(max(math.log(probs.of(r.outcome)) if probs.of(r.outcome) > 0 else LOG_FLOOR, LOG_FLOOR))

    # players registered but never playing keep a prior anchor at t=0
    for i in range(n):
        if state[i] is None:
            per_player[i].append(TracePoint(0, 0.0, 0.0, 0.0, prior_var, 0.0, prior_var))

    return GaussianFilterTrace(method, params, stream.players, per_player, probs_out, logpreds, fallbacks)


def run_smoother(
    trace: GaussianFilterTrace, index: SparseIndex | None = None, params: GaussianSSMParams | None = None
) -> SmoothResult:
    """Per-player backward Kalman sweep over each player's own matchtimes."""
    if trace.method is Method.ELO_DAVIDSON:
        raise ValueError("Elo-Davidson is not model-based; smoothing is undefined")
    params = params or trace.params
    per_player: list[list[SmoothPoint]] = []
    for pts in trace.per_player:
        out: list[SmoothPoint] = []
        if not pts:
            per_player.append(out)
            continue
        last = pts[-1]
        smooth = GaussianSkill(last.filt_mean, max(last.filt_var, VAR_FLOOR))
        out.append(SmoothPoint(last.k, last.t, smooth.mean, smooth.var, math.nan))
        for j in range(len(pts) - 2, -1, -1):
            filt = GaussianSkill(pts[j].filt_mean, max(pts[j].filt_var, VAR_FLOOR))
            # the recorded predict variance honours the Glicko cap
            smooth, lag = _smooth_step_with_pred(filt, smooth, max(pts[j + 1].pred_var, VAR_FLOOR))
            out.append(SmoothPoint(pts[j].k, pts[j].t, smooth.mean, smooth.var, lag))
        out.reverse()
        per_player.append(out)
    return SmoothResult(trace.players, per_player)


@dataclass(frozen=True)
class PseudoObs:
    """A direct noisy measurement of a skill difference x^h - x^a.

    The Gaussian observation model makes the whole sweep exactly conjugate,
    which is useful for calibration and for validating the match-outcome
    machinery against closed-form linear-Gaussian answers.
    """

    k: int
    t: float
    home: str
    away: str
    value: float
    obs_var: float

    def __post_init__(self):
        if self.obs_var <= 0:
            raise ValueError(f"observation variance must be positive, got {self.obs_var}")


def run_pseudo_obs_filter(
    observations: list[PseudoObs], params: GaussianSSMParams
) -> GaussianFilterTrace:
    """Sequential exact Kalman sweep over Gaussian difference measurements.

    Mirrors run_filter (same anchoring and trace layout) so the smoother and
    the dynamics-parameter machinery apply unchanged; logpred entries are
    exact Gaussian predictive log-densities.
    """
    index: dict[str, int] = {}
    for o in observations:
        index.setdefault(o.home, len(index))
        index.setdefault(o.away, len(index))
    n = len(index)
    per_player: list[list[TracePoint]] = [[] for _ in range(n)]
    state: list[GaussianSkill | None] = [None] * n
    last_t = [0.0] * n
    logpreds: list[float] = []
    prior_var = params.sigma0**2
    for o in observations:
        ih, ia = index[o.home], index[o.away]
        for i in (ih, ia):
            if state[i] is None:
                state[i] = GaussianSkill(0.0, prior_var)
                last_t[i] = o.t
                per_player[i].append(TracePoint(0, o.t, 0.0, 0.0, prior_var, 0.0, prior_var))
        dth, dta = o.t - last_t[ih], o.t - last_t[ia]
        ph = gaussian_propagate(state[ih], dth, params)
        pa = gaussian_propagate(state[ia], dta, params)
        upd = assimilate_gaussian_obs(ph, pa, o.value, o.obs_var)
        per_player[ih].append(TracePoint(o.k, o.t, dth, ph.mean, ph.var, upd.home.mean, upd.home.var))
        per_player[ia].append(TracePoint(o.k, o.t, dta, pa.mean, pa.var, upd.away.mean, upd.away.var))
        state[ih], state[ia] = upd.home, upd.away
        last_t[ih] = last_t[ia] = o.t
        logpreds.append(upd.logpred)
    return GaussianFilterTrace(
        Method.EXTENDED_KALMAN,
        params,
        tuple(index),
        per_player,
        [],
        logpreds,
        [False] * len(observations),
    )


# ---------------------------------------------------------------------------
# Serialization


def trace_to_csv(trace: GaussianFilterTrace, path: str | Path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["player", "match_index", "time", "kind", "mean", "var"])
        for player, pts in zip(trace.players, trace.per_player):
            for pt in pts:
                writer.writerow([player, pt.k, repr(float(pt.t)), "predict", repr(float(pt.pred_mean)), repr(float(pt.pred_var))])
                writer.writerow([player, pt.k, repr(float(pt.t)), "filter", repr(float(pt.filt_mean)), repr(float(pt.filt_var))])


def smooth_to_csv(result: SmoothResult, path: str | Path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["player", "match_index", "time", "kind", "mean", "var", "lag_one"])
        for player, pts in zip(result.players, result.per_player):
            for pt in pts:
                lag = "" if math.isnan(pt.lag_one) else repr(float(pt.lag_one))
                writer.writerow([player, pt.k, repr(float(pt.t)), "smooth", repr(float(pt.mean)), repr(float(pt.var)), lag])
