"""Finite-state skill model (factorial hidden Markov model).

Skills live on the grid [1..S] and evolve as a continuous-time reflected
random walk with rate tau_d. A one-off spectral decomposition of the
generator turns every propagate and smoothing step into O(S^2) dense
linear algebra, without ever assembling the transition matrix.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

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
from .gaussian import LOG_FLOOR, Sigmoid

# categorical skill beliefs are plain probability row vectors of length S
CategoricalSkill = np.ndarray


@dataclass(frozen=True)
class DiscreteParams:
    """Static parameters of the finite-state skill model.

    sigma_d is the pseudo-time the uniform-median anchor is diffused for,
    tau_d the jump rate of the skill walk (per day), epsilon_d the draw
    propensity and s_d the likelihood scale (default S/5, which keeps the
    effective skill-difference scale comparable across grid resolutions).
    """

    num_states: int
    sigma_d: float = 1.0
    tau_d: float = 0.1
    epsilon_d: float = 0.0
    s_d: float | None = None
    sigmoid: Sigmoid = Sigmoid.INVERSE_PROBIT

    def __post_init__(self):
        if self.num_states < 2:
            raise ValueError(f"need at least 2 states, got {self.num_states}")
        if self.sigma_d < 0 or self.tau_d < 0 or self.epsilon_d < 0:
            raise ValueError(f"invalid finite-state parameters {self}")
        if self.s_d is not None and self.s_d <= 0:
            raise ValueError(f"s_d must be positive, got {self.s_d}")

    @property
    def scale(self) -> float:
        return self.s_d if self.s_d is not None else self.num_states / 5.0


@dataclass(frozen=True)
class Spectrum:
    """Orthogonal eigendecomposition Q = psi.T @ diag(lam) @ psi.

    Rows of psi are eigenvectors; lam <= 0 with the stationary eigenvalue
    pinned to exactly 0. closed_form records whether the analytic cosine
    basis passed the reconstruction gate or a numerical decomposition was
    used instead.
    """

    psi: np.ndarray
    lam: np.ndarray
    closed_form: bool


def build_generator(num_states: int) -> np.ndarray:
    """Generator of the continuous-time reflected random walk on [1..S].

    Poissonisation of the lazy reflected walk: rate 1/2 to each grid
    neighbour, with the missing boundary rate appearing as a slower exit
    rate at the two end states. Rows sum to zero and the matrix is
    symmetric, hence the uniform distribution is stationary.
    """
    s = num_states
    p = np.zeros((s, s))
    idx = np.arange(s - 1)
    p[idx, idx + 1] = 0.5
    p[idx + 1, idx] = 0.5
    p[0, 0] = 0.5
    p[-1, -1] = 0.5
    return p - np.eye(s)


def _closed_form_spectrum(num_states: int) -> Spectrum:
    s = num_states
    i = np.arange(1, s + 1)[:, None]  # eigenvalue index
    j = np.arange(1, s + 1)[None, :]  # state index
    psi = np.sqrt(2.0 / s) * np.cos(np.pi * (i - 1) * (2 * j - 1) / s)
    psi[0, :] = 1.0 / math.sqrt(s)
    lam = np.cos(2.0 * np.pi * (i[:, 0] - 1) / s) - 1.0
    return Spectrum(psi, lam, True)


def build_spectrum(num_states: int, tol: float = 1e-8) -> Spectrum:
    """Spectral decomposition of the walk generator, gated then salvaged.

    The analytic cosine basis is accepted only if it is orthogonal and
    reconstructs the generator to ``tol``; otherwise a dense symmetric
    eigendecomposition is used. Positive eigenvalue round-off is clamped so
    propagation can never amplify mass.
    """
    q = build_generator(num_states)
    cand = _closed_form_spectrum(num_states)
    ortho = np.abs(cand.psi @ cand.psi.T - np.eye(num_states)).max()
    recon = np.abs(cand.psi.T @ (cand.lam[:, None] * cand.psi) - q).max()
    if ortho <= tol and recon <= tol:
        return Spectrum(cand.psi, np.minimum(cand.lam, 0.0), True)
    w, v = np.linalg.eigh(q)
    lam = np.minimum(w, 0.0)
    # pin the stationary mode (and any round-off jitter) to exactly zero
    lam[lam > -1e-12] = 0.0
    return Spectrum(v.T, lam, False)


def kernel_apply(pi: np.ndarray, elapsed: float, spectrum: Spectrum) -> np.ndarray:
    """Row-vector product pi @ expm(elapsed * Q) in O(S^2)."""
    if elapsed < 0:
        raise ValueError(f"negative elapsed rate-time {elapsed}")
    return (pi @ spectrum.psi.T * np.exp(elapsed * spectrum.lam)) @ spectrum.psi


def assemble_kernel(elapsed: float, spectrum: Spectrum) -> np.ndarray:
    """Dense expm(elapsed * Q); O(S^3), for diagnostics and pairwise laws."""
    if elapsed < 0:
        raise ValueError(f"negative elapsed rate-time {elapsed}")
    return spectrum.psi.T @ (np.exp(elapsed * spectrum.lam)[:, None] * spectrum.psi)


def _project(pi: np.ndarray) -> np.ndarray:
    """Clip spectral round-off below zero and renormalise.

    Anything more negative than round-off scale signals a real numerical
    problem rather than jitter, so it is an error instead of a silent clip.
    """
    low = pi.min()
    if low < -1e-9:
        raise FloatingPointError(f"probability entry {low} below round-off tolerance")
    pi = np.clip(pi, 0.0, None)
    total = pi.sum()
    if not total > 0.0:
        raise FloatingPointError("probability vector lost all mass")
    return pi / total


def discrete_propagate(
    pi: CategoricalSkill, dt: float, params: DiscreteParams, spectrum: Spectrum
) -> CategoricalSkill:
    """Predict step through the rate-tau_d walk over dt days."""
    elapsed = params.tau_d * dt
    if elapsed == 0.0:
        return pi.copy()
    return _project(kernel_apply(pi, elapsed, spectrum))


def build_initial(params: DiscreteParams, spectrum: Spectrum) -> CategoricalSkill:
    """Anchor belief: uniform mass on the median state(s), diffused for
    pseudo-time sigma_d^2 at rate 1. The walk accumulates variance at unit
    rate, so the anchor's spread has standard deviation of order sigma_d
    (away from the boundary), and the limit sigma_d -> inf is uniform."""
    s = params.num_states
    nu = np.zeros(s)
    medians = sorted({math.floor(s / 2), math.ceil(s / 2)})  # 1-based states
    for m in medians:
        nu[m - 1] = 1.0 / len(medians)
    if params.sigma_d == 0.0:
        return nu
    return _project(kernel_apply(nu, params.sigma_d**2, spectrum))


@lru_cache(maxsize=64)
def _likelihood_tables(
    num_states: int, epsilon: float, scale: float, sigmoid: Sigmoid
) -> dict[Outcome, np.ndarray]:
    grid = np.arange(1, num_states + 1, dtype=float)
    diff = grid[:, None] - grid[None, :]  # (home state, away state)
    sig = expit if sigmoid is Sigmoid.LOGISTIC else ndtr
    lo = sig((diff - epsilon) / scale)
    hi = sig((diff + epsilon) / scale)
    return {
        Outcome.HOME_WIN: lo,
        Outcome.AWAY_WIN: 1.0 - hi,
        Outcome.DRAW: np.clip(hi - lo, 0.0, None),
    }


def likelihood_matrix(y: Outcome, params: DiscreteParams) -> np.ndarray:
    """S x S outcome probabilities indexed (home state, away state)."""
    if y is Outcome.DRAW and params.epsilon_d == 0.0:
        raise ValueError("draw table requested but the draw propensity epsilon_d is zero")
    return _likelihood_tables(params.num_states, params.epsilon_d, params.scale, params.sigmoid)[y]


def discrete_match_probs(
    ph: CategoricalSkill, pa: CategoricalSkill, params: DiscreteParams
) -> PredictiveProbs:
    """Exact predictive outcome probabilities under predictive beliefs."""
    weights = {}
    for y in OUTCOMES:
        if y is Outcome.DRAW and params.epsilon_d == 0.0:
            weights[y] = 0.0
            continue
        weights[y] = float(ph @ likelihood_matrix(y, params) @ pa)
    return PredictiveProbs.normalised(
        weights[Outcome.HOME_WIN], weights[Outcome.AWAY_WIN], weights[Outcome.DRAW]
    )


def discrete_assimilate(
    ph: CategoricalSkill, pa: CategoricalSkill, y: Outcome, params: DiscreteParams
) -> tuple[CategoricalSkill, CategoricalSkill, float]:
    """Exact joint conditioning followed by marginalisation.

    Returns the two filtered marginals and the log predictive probability
    of the observed outcome.
    """
    joint = (ph[:, None] * pa[None, :]) * likelihood_matrix(y, params)
    z = joint.sum()
    if not z > 0.0:
        raise FloatingPointError(
            f"outcome {y} has zero probability under current beliefs"
        )
    return joint.sum(axis=1) / z, joint.sum(axis=0) / z, max(math.log(z), LOG_FLOOR)


def discrete_smooth_step(
    filt_k: CategoricalSkill,
    smooth_k1: CategoricalSkill,
    predict_k1: CategoricalSkill,
    dt: float,
    params: DiscreteParams,
    spectrum: Spectrum,
) -> CategoricalSkill:
    """One backward smoothing step in O(S^2).

    Marginalising the bridge joint before assembling it reduces the step to
    two kernel-vector products; the symmetric kernel makes the transpose
    product free. A zero elapsed time is a deterministic link, so the
    smoothing law passes through unchanged.
    """
    elapsed = params.tau_d * dt
    if elapsed == 0.0:
        return smooth_k1.copy()
    ratio = np.divide(
        smooth_k1, predict_k1, out=np.zeros_like(smooth_k1), where=predict_k1 > 0.0
    )
    return _project(filt_k * kernel_apply(ratio, elapsed, spectrum))


def discrete_bridge_joint(
    filt_k: CategoricalSkill,
    smooth_k1: CategoricalSkill,
    predict_k1: CategoricalSkill,
    dt: float,
    params: DiscreteParams,
    spectrum: Spectrum,
) -> np.ndarray:
    """Pairwise smoothing law over consecutive matchtimes; O(S^3) reference.

    Entry (a, b) is the joint smoothed probability of state a at the
    earlier time and state b at the later one. Marginalising over b
    reproduces the O(S^2) smoothing step exactly.
    """
    elapsed = params.tau_d * dt
    if elapsed == 0.0:
        return np.diag(smooth_k1)
    ratio = np.divide(
        smooth_k1, predict_k1, out=np.zeros_like(smooth_k1), where=predict_k1 > 0.0
    )
    joint = (filt_k[:, None] * ratio[None, :]) * assemble_kernel(elapsed, spectrum)
    joint = np.clip(joint, 0.0, None)
    return joint / joint.sum()


# ---------------------------------------------------------------------------
# Sequential sweeps


@dataclass
class DiscretePoint:
    """Per (player, matchtime) filtering vectors; k = 0 is the anchor."""

    k: int
    t: float
    dt: float
    predict: np.ndarray
    filt: np.ndarray


@dataclass
class DiscreteFilterTrace:
    params: DiscreteParams
    spectrum: Spectrum = field(repr=False)
    players: tuple[str, ...]
    per_player: list[list[DiscretePoint]]
    probs: list[PredictiveProbs]
    logpreds: list[float]

    @property
    def loglik(self) -> float:
        return sum(self.logpreds)


@dataclass
class DiscreteSmoothPoint:
    k: int
    t: float
    dist: np.ndarray


@dataclass
class DiscreteSmoothResult:
    players: tuple[str, ...]
    per_player: list[list[DiscreteSmoothPoint]]


def run_discrete_filter(
    stream: MatchStream,
    index: SparseIndex | None,
    params: DiscreteParams,
    spectrum: Spectrum | None = None,
) -> DiscreteFilterTrace:
    """One sequential sweep: propagate, assimilate and record every match.

    New players are anchored at their first matchtime with the diffused
    median belief directly.
    """
    if stream.has_draws() and params.epsilon_d == 0.0:
        raise ValueError("stream contains draws but the draw propensity epsilon_d is zero")
    if index is None:
        index = build_sparse_index(stream)
    spectrum = spectrum or build_spectrum(params.num_states)
    m0 = build_initial(params, spectrum)

    n = stream.num_players
    per_player: list[list[DiscretePoint]] = [[] for _ in range(n)]
    state: list[np.ndarray | None] = [None] * n
    last_t = [0.0] * n
    probs_out: list[PredictiveProbs] = []
    logpreds: list[float] = []

    for r in stream.records:
        ih, ia = stream.player_index[r.home], stream.player_index[r.away]
        for i in (ih, ia):
            if state[i] is None:
                state[i] = m0.copy()
                last_t[i] = r.t
                per_player[i].append(DiscretePoint(0, r.t, 0.0, m0.copy(), m0.copy()))
        dth, dta = r.t - last_t[ih], r.t - last_t[ia]
        ph = discrete_propagate(state[ih], dth, params, spectrum)
        pa = discrete_propagate(state[ia], dta, params, spectrum)
        probs = discrete_match_probs(ph, pa, params)
        fh, fa, _ = discrete_assimilate(ph, pa, r.outcome, params)
        per_player[ih].append(DiscretePoint(r.k, r.t, dth, ph, fh))
        per_player[ia].append(DiscretePoint(r.k, r.t, dta, pa, fa))
        state[ih], state[ia] = fh, fa
        last_t[ih] = last_t[ia] = r.t
        probs_out.append(probs)
        p_obs = probs.of(r.outcome)
        logpreds.append(max(math.log(p_obs) if p_obs > 0 else LOG_FLOOR, LOG_FLOOR))

    for i in range(n):
        if state[i] is None:
            per_player[i].append(DiscretePoint(0, 0.0, 0.0, m0.copy(), m0.copy()))

    return DiscreteFilterTrace(params, spectrum, stream.players, per_player, probs_out, logpreds)


def run_discrete_smoother(
    trace: DiscreteFilterTrace, index: SparseIndex | None = None, params: DiscreteParams | None = None
) -> DiscreteSmoothResult:
    """Per-player backward sweep over each player's own matchtimes."""
    params, spectrum = trace.params, trace.spectrum
    per_player: list[list[DiscreteSmoothPoint]] = []
    for pts in trace.per_player:
        out: list[DiscreteSmoothPoint] = []
        if not pts:
            per_player.append(out)
            continue
        smooth = pts[-1].filt.copy()
        out.append(DiscreteSmoothPoint(pts[-1].k, pts[-1].t, smooth))
        for j in range(len(pts) - 2, -1, -1):
            nxt = pts[j + 1]
            smooth = discrete_smooth_step(pts[j].filt, smooth, nxt.predict, nxt.dt, params, spectrum)
            out.append(DiscreteSmoothPoint(pts[j].k, pts[j].t, smooth))
        out.reverse()
        per_player.append(out)
    return DiscreteSmoothResult(trace.players, per_player)


def skill_grid(params: DiscreteParams) -> np.ndarray:
    return np.arange(1, params.num_states + 1, dtype=float)


def categorical_mean_var(pi: CategoricalSkill) -> tuple[float, float]:
    grid = np.arange(1, pi.size + 1, dtype=float)
    mean = float(pi @ grid)
    return mean, float(pi @ grid**2 - mean**2)


# ---------------------------------------------------------------------------
# Dynamics-rate objective and gradient


def _transitions(trace: DiscreteFilterTrace, smooth: DiscreteSmoothResult):
    """Yield (filter at k, smoothed at k+1, dt) over all player transitions.

    Zero-length links (the anchor-to-first-match link) carry a
    deterministic kernel and contribute nothing to the dynamics objective,
    so they are skipped.
    """
    for pts, spts in zip(trace.per_player, smooth.per_player):
        for j in range(len(pts) - 1):
            dt = pts[j + 1].dt
            if dt > 0.0:
                yield pts[j].filt, spts[j + 1].dist, dt


def q2_value(
    trace: DiscreteFilterTrace,
    smooth: DiscreteSmoothResult,
    tau: float,
) -> float:
    """Expected complete-data log-likelihood of the dynamics at rate tau.

    The expectation is under the pairwise laws held fixed at the trace's
    own rate; only the kernel inside the logarithm varies with tau. The
    pairwise law over a transition is the normalised product of the earlier
    filter, the later smoothed marginal and the kernel.
    """
    spectrum = trace.spectrum
    tau_hat = trace.params.tau_d
    kernels: dict[float, tuple[np.ndarray, np.ndarray]] = {}
    total = 0.0
    for filt, smo, dt in _transitions(trace, smooth):
        if dt not in kernels:
            m_hat = np.clip(assemble_kernel(tau_hat * dt, spectrum), 0.0, None)
            m_tau = np.clip(assemble_kernel(tau * dt, spectrum), 0.0, None)
            kernels[dt] = (m_hat, np.log(np.maximum(m_tau, 1e-300)))
        m_hat, log_m_tau = kernels[dt]
        joint = (filt[:, None] * smo[None, :]) * m_hat
        z = joint.sum()
        if not z > 0.0:
            continue
        total += float((joint * log_m_tau).sum()) / z
    return total


def q2_gradient(trace: DiscreteFilterTrace, smooth: DiscreteSmoothResult) -> float:
    """d q2_value / d tau at the trace's own rate, in O(S^2) per transition.

    Spectral identity: with F and Sv the filter and smoothed vectors in the
    eigenbasis and e = exp(tau * dt * lam), each transition contributes
    sum(F * dt * lam * e * Sv) / sum(F * e * Sv).
    """
    spectrum = trace.spectrum
    tau_hat = trace.params.tau_d
    total = 0.0
    for filt, smo, dt in _transitions(trace, smooth):
        f = filt @ spectrum.psi.T
        sv = smo @ spectrum.psi.T
        e = np.exp(tau_hat * dt * spectrum.lam)
        denom = float(np.sum(f * e * sv))
        if not denom > 0.0:
            continue
        total += float(np.sum(f * dt * spectrum.lam * e * sv)) / denom
    return total
