"""Static-parameter estimation.

Expectation-maximisation with analytic M-steps for the dynamics parameters,
a golden-section Gauss-Hermite step for the draw propensity, a spectral
gradient-ascent step for the finite-state rate, Fisher-identity gradients
for diagnostics, and grid search for the non-model-based methods.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from numpy.polynomial.hermite import hermgauss
from scipy.special import expit, log_expit, log_ndtr, ndtr

from . import discrete as _discrete
from . import gaussian as _gaussian
from . import smc as _smc
from .core import OUTCOMES, MatchStream, Outcome, build_sparse_index
from .discrete import (
    DiscreteFilterTrace,
    DiscreteParams,
    DiscreteSmoothResult,
    Spectrum,
    build_initial,
    build_spectrum,
    q2_gradient,
    q2_value,
    run_discrete_filter,
    run_discrete_smoother,
)
from .gaussian import (
    GaussianFilterTrace,
    GaussianSSMParams,
    EloParams,
    Method,
    Sigmoid,
    SmoothResult,
    run_filter,
    run_smoother,
)
from .smc import SmcConfig, backward_simulate, run_smc_filter, smc_em_statistics

EPSILON_BRACKET = (0.0, 5.0)
GOLDEN_TOL = 1e-6
_NPDF_NORM = 1.0 / math.sqrt(2.0 * math.pi)


@dataclass
class EmState:
    """Result of an EM run; loglik_history[i] is the total predictive
    log-likelihood of the parameters held at the start of iteration i."""

    theta: GaussianSSMParams | DiscreteParams
    iteration: int
    loglik_history: list[float]
    converged: bool
    theta_history: list | None = None  # theta held at the start of each iteration

    def __post_init__(self):
        if len(self.loglik_history) != self.iteration + 1:
            raise ValueError("loglik_history length must equal iteration + 1")


@dataclass(frozen=True)
class QuadratureRule:
    """Nodes/weights such that E[f(Z)] ~= sum(w * f(mu + sigma * nodes))
    for standard-normal-distributed Z shifted to N(mu, sigma^2)."""

    nodes: np.ndarray
    weights: np.ndarray

    @classmethod
    def gauss_hermite(cls, n: int = 30) -> "QuadratureRule":
        x, w = hermgauss(n)
        return cls(x * math.sqrt(2.0), w / math.sqrt(math.pi))

    def expect(self, f, mu: float, sigma: float) -> float:
        return float(np.sum(self.weights * f(mu + sigma * self.nodes)))


def golden_section_max(f, lo: float, hi: float, tol: float = GOLDEN_TOL) -> float:
    """Argmax of a unimodal function on [lo, hi] to absolute tolerance tol."""
    inv_phi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - inv_phi * (b - a)
    d = a + inv_phi * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - inv_phi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + inv_phi * (b - a)
            fd = f(d)
    return 0.5 * (a + b)


# ---------------------------------------------------------------------------
# Gaussian M-steps


def m_step_gaussian(smooth: SmoothResult, index=None) -> tuple[float, float | None]:
    """Closed-form maximisers of the dynamics terms of the surrogate.

    Returns (sigma0_hat, tau_hat); tau_hat is None when no player has two
    distinct matchtimes (no transitions to inform the rate).
    """
    sq0 = 0.0
    n_players = 0
    trans_sum = 0.0
    n_trans = 0
    for pts in smooth.per_player:
        if not pts:
            continue
        n_players += 1
        sq0 += pts[0].var + pts[0].mean**2
        for j in range(len(pts) - 1):
            dt = pts[j + 1].t - pts[j].t
            if dt <= 0.0:
                continue
            a, b = pts[j], pts[j + 1]
            trans_sum += (a.var + a.mean**2 - 2.0 * a.lag_one + b.var + b.mean**2) / dt
            n_trans += 1
    sigma0_hat = math.sqrt(sq0 / n_players)
    if n_trans == 0:
        return sigma0_hat, None
    return sigma0_hat, math.sqrt(max(trans_sum, 0.0) / n_trans)


def match_difference_laws(
    stream: MatchStream, smooth: SmoothResult
) -> list[tuple[float, float, Outcome]]:
    """Per match: (mean, var) of the smoothed home-minus-away skill plus
    the outcome, under the factorial (independent-players) approximation."""
    by_k = [{pt.k: pt for pt in pts} for pts in smooth.per_player]
    player_index = {p: i for i, p in enumerate(smooth.players)}
    laws = []
    for r in stream.records:
        h = by_k[player_index[r.home]][r.k]
        a = by_k[player_index[r.away]][r.k]
        laws.append((h.mean - a.mean, h.var + a.var, r.outcome))
    return laws


def _log_outcome_matrix(z: np.ndarray, y: Outcome, epsilon: float, sigmoid: Sigmoid) -> np.ndarray:
    """Elementwise log G(y | z; epsilon), numerically safe in the tails."""
    if sigmoid is Sigmoid.LOGISTIC:
        if y is Outcome.HOME_WIN:
            return log_expit(z - epsilon)
        if y is Outcome.AWAY_WIN:
            return log_expit(-(z + epsilon))
        g = expit(z + epsilon) - expit(z - epsilon)
        return np.log(np.maximum(g, 1e-300))
    if y is Outcome.HOME_WIN:
        return log_ndtr(z - epsilon)
    if y is Outcome.AWAY_WIN:
        return log_ndtr(-(z + epsilon))
    g = ndtr(z + epsilon) - ndtr(z - epsilon)
    return np.log(np.maximum(g, 1e-300))


def epsilon_objective(
    epsilon: float,
    laws: list[tuple[float, float, Outcome]],
    sigmoid: Sigmoid,
    quadrature: QuadratureRule,
) -> float:
    """Expected outcome log-likelihood under the smoothed difference laws."""
    total = 0.0
    for mu, var, y in laws:
        z = mu + math.sqrt(max(var, 0.0)) * quadrature.nodes
        total += float(np.sum(quadrature.weights * _log_outcome_matrix(z, y, epsilon, sigmoid)))
    return total


def m_step_epsilon(
    laws: list[tuple[float, float, Outcome]],
    sigmoid: Sigmoid,
    quadrature: QuadratureRule | None = None,
    bracket: tuple[float, float] = EPSILON_BRACKET,
    tol: float = GOLDEN_TOL,
) -> float:
    """Golden-section maximiser of the draw-propensity surrogate term.

    Without any draws the objective decreases in epsilon, so the boundary
    maximiser 0 is returned directly.
    """
    if not any(y is Outcome.DRAW for _, _, y in laws):
        return 0.0
    quadrature = quadrature or QuadratureRule.gauss_hermite()
    return golden_section_max(
        lambda e: epsilon_objective(e, laws, sigmoid, quadrature), *bracket, tol=tol
    )


def m_step_epsilon_samples(
    sample_laws: list[tuple[np.ndarray, Outcome]],
    sigmoid: Sigmoid,
    bracket: tuple[float, float] = EPSILON_BRACKET,
    tol: float = GOLDEN_TOL,
) -> float:
    """Draw-propensity step with particle difference samples as the law."""
    if not any(y is Outcome.DRAW for _, y in sample_laws):
        return 0.0

    def objective(e: float) -> float:
        return sum(
            float(np.mean(_log_outcome_matrix(z, y, e, sigmoid))) for z, y in sample_laws
        )

    return golden_section_max(objective, *bracket, tol=tol)


def gaussian_q_value(
    smooth: SmoothResult,
    stream: MatchStream,
    theta: GaussianSSMParams,
    quadrature: QuadratureRule | None = None,
) -> float:
    """Surrogate objective Q(theta | theta_hat) up to theta-free constants.

    The expectation statistics come from ``smooth`` (computed at theta_hat);
    only the log-densities inside carry theta.
    """
    quadrature = quadrature or QuadratureRule.gauss_hermite()
    total = 0.0
    for pts in smooth.per_player:
        if not pts:
            continue
        total += -math.log(theta.sigma0) - (pts[0].var + pts[0].mean**2) / (2.0 * theta.sigma0**2)
        for j in range(len(pts) - 1):
            dt = pts[j + 1].t - pts[j].t
            if dt <= 0.0:
                continue
            a, b = pts[j], pts[j + 1]
            ssq = a.var + a.mean**2 - 2.0 * a.lag_one + b.var + b.mean**2
            total += -math.log(theta.tau) - 0.5 * math.log(dt) - ssq / (2.0 * theta.tau**2 * dt)
    total += epsilon_objective(
        theta.epsilon, match_difference_laws(stream, smooth), theta.sigmoid, quadrature
    )
    return total


# ---------------------------------------------------------------------------
# Fisher-identity gradients


def fisher_gradient_dynamics(smooth: SmoothResult, theta: GaussianSSMParams) -> tuple[float, float]:
    """(d/d sigma0, d/d tau) of the data log-likelihood via the smoothed
    expectation of the complete-data score."""
    d_sigma0 = 0.0
    d_tau = 0.0
    s0, tau = theta.sigma0, theta.tau
    for pts in smooth.per_player:
        if not pts:
            continue
        d_sigma0 += -1.0 / s0 + (pts[0].var + pts[0].mean**2) / s0**3
        for j in range(len(pts) - 1):
            dt = pts[j + 1].t - pts[j].t
            if dt <= 0.0:
                continue
            a, b = pts[j], pts[j + 1]
            ssq = a.var + a.mean**2 - 2.0 * a.lag_one + b.var + b.mean**2
            d_tau += -1.0 / tau + ssq / (tau**3 * dt)
    return d_sigma0, d_tau


def _d_epsilon_log_outcome(z: np.ndarray, y: Outcome, epsilon: float, sigmoid: Sigmoid) -> np.ndarray:
    if sigmoid is Sigmoid.LOGISTIC:
        def pdf(u):
            s = expit(u)
            return s * (1.0 - s)
    else:
        def pdf(u):
            return _NPDF_NORM * np.exp(-0.5 * u * u)
    if y is Outcome.HOME_WIN:
        g = _log_outcome_matrix(z, y, epsilon, sigmoid)
        return -pdf(z - epsilon) / np.exp(g)
    if y is Outcome.AWAY_WIN:
        g = _log_outcome_matrix(z, y, epsilon, sigmoid)
        return -pdf(z + epsilon) / np.exp(g)
    g = np.exp(_log_outcome_matrix(z, y, epsilon, sigmoid))
    return (pdf(z + epsilon) + pdf(z - epsilon)) / np.maximum(g, 1e-300)


def fisher_gradient(
    stream: MatchStream,
    smooth: SmoothResult,
    theta: GaussianSSMParams,
    quadrature: QuadratureRule | None = None,
) -> np.ndarray:
    """Gradient of log P(outcomes | theta) in (sigma0, tau, epsilon).

    Assembled from smoothed expectations of the complete-data score; exact
    up to the quality of the smoothing approximation itself.
    """
    quadrature = quadrature or QuadratureRule.gauss_hermite()
    d_sigma0, d_tau = fisher_gradient_dynamics(smooth, theta)
    d_eps = 0.0
    for mu, var, y in match_difference_laws(stream, smooth):
        z = mu + math.sqrt(max(var, 0.0)) * quadrature.nodes
        d_eps += float(
            np.sum(quadrature.weights * _d_epsilon_log_outcome(z, y, theta.epsilon, theta.sigmoid))
        )
    return np.array([d_sigma0, d_tau, d_eps])


# ---------------------------------------------------------------------------
# Discrete M-steps


def aggregate_anchor_distribution(smooth: DiscreteSmoothResult) -> np.ndarray:
    """Sum over players of the smoothed anchor (k = 0) distribution."""
    total = None
    for pts in smooth.per_player:
        for pt in pts:
            if pt.k == 0:
                total = pt.dist.copy() if total is None else total + pt.dist
    if total is None:
        raise ValueError("no anchor points in smoothing result")
    return total


def aggregate_match_joints(
    stream: MatchStream, smooth: DiscreteSmoothResult
) -> dict[Outcome, np.ndarray]:
    """Per outcome: sum over matches of outer(home smooth, away smooth)."""
    by_k = [{pt.k: pt for pt in pts} for pts in smooth.per_player]
    player_index = {p: i for i, p in enumerate(smooth.players)}
    s = next(pt.dist.size for pts in smooth.per_player for pt in pts)
    agg = {y: np.zeros((s, s)) for y in OUTCOMES}
    for r in stream.records:
        h = by_k[player_index[r.home]][r.k].dist
        a = by_k[player_index[r.away]][r.k].dist
        agg[r.outcome] += h[:, None] * a[None, :]
    return agg


def m_step_sigma_discrete(
    anchor: np.ndarray,
    params: DiscreteParams,
    spectrum: Spectrum,
    tol: float = GOLDEN_TOL,
) -> float:
    """Golden-section maximiser of the anchor term over the initial spread
    sigma_d. Once sigma_d exceeds the grid width the anchor is effectively
    uniform, which bounds the useful search range."""
    hi = 2.0 * params.num_states

    def objective(sig: float) -> float:
        m0 = build_initial(replace(params, sigma_d=sig), spectrum)
        return float(anchor @ np.log(np.maximum(m0, 1e-300)))

    return golden_section_max(objective, 1e-9, hi, tol=max(tol, hi * 1e-9))


def m_step_epsilon_discrete(
    joints: dict[Outcome, np.ndarray],
    params: DiscreteParams,
    bracket: tuple[float, float] = EPSILON_BRACKET,
    tol: float = GOLDEN_TOL,
) -> float:
    """Draw-propensity step with exact table sums as the expectation."""
    if not np.any(joints[Outcome.DRAW]):
        return 0.0

    def objective(e: float) -> float:
        p = replace(params, epsilon_d=e)
        return sum(
            float(np.sum(joints[y] * np.log(np.maximum(_discrete.likelihood_matrix(y, p), 1e-300))))
            for y in OUTCOMES
            if np.any(joints[y])
        )

    return golden_section_max(objective, *bracket, tol=tol)


def ascend_tau_discrete(
    trace: DiscreteFilterTrace,
    smooth: DiscreteSmoothResult,
    initial_step_factor: float = 0.1,
    backtrack: float = 0.5,
    max_halvings: int = 20,
) -> float:
    """One gradient-ascent step on the dynamics term of the surrogate.

    The step starts at 0.1 * tau_d along the sign of the spectral gradient
    and backtracks until the dynamics surrogate does not decrease; on
    failure the current rate is kept.
    """
    tau_hat = trace.params.tau_d
    grad = q2_gradient(trace, smooth)
    if grad == 0.0 or tau_hat == 0.0:
        return tau_hat
    base = q2_value(trace, smooth, tau_hat)
    step = initial_step_factor * tau_hat * (1.0 if grad > 0 else -1.0)
    for _ in range(max_halvings):
        cand = tau_hat + step
        if cand > 0.0 and q2_value(trace, smooth, cand) >= base:
            return cand
        step *= backtrack
    return tau_hat


def discrete_q_value(
    trace: DiscreteFilterTrace,
    smooth: DiscreteSmoothResult,
    stream: MatchStream,
    theta: DiscreteParams,
) -> float:
    """Surrogate objective for the finite-state model at theta, with
    expectations held at the trace's own parameters."""
    anchor = aggregate_anchor_distribution(smooth)
    m0 = build_initial(theta, trace.spectrum)
    total = float(anchor @ np.log(np.maximum(m0, 1e-300)))
    total += q2_value(trace, smooth, theta.tau_d)
    joints = aggregate_match_joints(stream, smooth)
    for y in OUTCOMES:
        if np.any(joints[y]):
            table = _discrete.likelihood_matrix(y, theta)
            total += float(np.sum(joints[y] * np.log(np.maximum(table, 1e-300))))
    return total


# ---------------------------------------------------------------------------
# EM driver


def em_fit(
    stream: MatchStream,
    method: Method,
    init_theta: GaussianSSMParams | DiscreteParams,
    max_iters: int = 1000,
    tol: float = 1e-6,
    smc_config: SmcConfig | None = None,
    quadrature: QuadratureRule | None = None,
) -> EmState:
    """Maximum-likelihood estimation by expectation-maximisation.

    Each iteration runs a filtering sweep (recording the total predictive
    log-likelihood), a smoothing sweep, then the per-parameter M-steps.
    Stops when the average NLL moves by less than ``tol`` or at
    ``max_iters``; a non-finite log-likelihood aborts with the last good
    parameters.
    """
    if method not in (Method.EXTENDED_KALMAN, Method.TRUESKILL2, Method.SMC, Method.DISCRETE):
        raise ValueError(f"em_fit does not support method {method}")
    if method is Method.SMC and smc_config is None:
        raise ValueError("SMC fitting requires an SmcConfig")
    quadrature = quadrature or QuadratureRule.gauss_hermite()
    index = build_sparse_index(stream)
    k = max(stream.num_matches, 1)
    spectrum = build_spectrum(init_theta.num_states) if method is Method.DISCRETE else None

    theta = init_theta
    history: list[float] = []
    thetas: list = []
    converged = False
    for _ in range(max_iters):
        try:
            loglik, theta_new = _em_iteration(stream, index, method, theta, smc_config, quadrature, spectrum)
        except FloatingPointError:
            break
        if not math.isfinite(loglik):
            break
        history.append(loglik)
        thetas.append(theta)
        if len(history) > 1 and abs(history[-1] - history[-2]) / k < tol:
            converged = True
            break
        theta = theta_new
    if not history:
        raise FloatingPointError("filtering diverged on the first EM iteration")
    return EmState(theta, len(history) - 1, history, converged, thetas)


def _em_iteration(stream, index, method, theta, smc_config, quadrature, spectrum):
    if method is Method.DISCRETE:
        trace = run_discrete_filter(stream, index, theta, spectrum)
        smooth = run_discrete_smoother(trace)
        sigma_hat = m_step_sigma_discrete(aggregate_anchor_distribution(smooth), theta, spectrum)
        eps_hat = m_step_epsilon_discrete(aggregate_match_joints(stream, smooth), theta)
        tau_hat = ascend_tau_discrete(trace, smooth)
        return trace.loglik, replace(theta, sigma_d=sigma_hat, tau_d=tau_hat, epsilon_d=eps_hat)
    if method is Method.SMC:
        trace = run_smc_filter(stream, index, theta, smc_config)
        stats = smc_em_statistics(backward_simulate(trace, index, theta), index)
        sigma0_hat = math.sqrt(stats.sum_sq_initial / max(stats.num_anchor_samples, 1))
        tau_hat = theta.tau
        if stats.num_transitions > 0:
            tau_hat = math.sqrt(
                stats.sum_sq_scaled_increments / (stats.num_transitions * stats.num_trajectories)
            )
        sample_laws = [(stats.match_diffs[r.k], r.outcome) for r in stream.records]
        eps_hat = m_step_epsilon_samples(sample_laws, theta.sigmoid)
        return trace.loglik, replace(theta, sigma0=sigma0_hat, tau=tau_hat, epsilon=eps_hat)
    trace = run_filter(stream, index, theta, method)
    smooth = run_smoother(trace, index, theta)
    sigma0_hat, tau_hat = m_step_gaussian(smooth, index)
    eps_hat = m_step_epsilon(match_difference_laws(stream, smooth), theta.sigmoid, quadrature)
    return trace.loglik, replace(
        theta, sigma0=sigma0_hat, tau=tau_hat if tau_hat is not None else theta.tau, epsilon=eps_hat
    )


# ---------------------------------------------------------------------------
# Grid search


@dataclass
class GridSearchResult:
    field1: str
    field2: str
    values1: np.ndarray
    values2: np.ndarray
    surface: np.ndarray  # average NLL, shape (len(values1), len(values2))
    best_params: EloParams | GaussianSSMParams

    @property
    def best_avg_nll(self) -> float:
        return float(self.surface.min())


def grid_search(
    stream: MatchStream,
    method: Method,
    base_params: EloParams | GaussianSSMParams,
    field1: str,
    values1,
    field2: str,
    values2,
    threads: int | None = None,
) -> GridSearchResult:
    """Average filter NLL over a 2-D parameter grid; returns the argmin.

    Each point costs one independent filtering sweep, so points evaluate
    concurrently when ``threads`` allows.
    """
    values1 = np.asarray(values1, dtype=float)
    values2 = np.asarray(values2, dtype=float)
    if values1.size == 0 or values2.size == 0:
        raise ValueError("grid axes must be non-empty")
    index = build_sparse_index(stream)
    k = max(stream.num_matches, 1)
    points = [
        (i, j, replace(base_params, **{field1: float(v1), field2: float(v2)}))
        for i, v1 in enumerate(values1)
        for j, v2 in enumerate(values2)
    ]

    def avg_nll(params) -> float:
        return -run_filter(stream, index, params, method).loglik / k

    surface = np.empty((values1.size, values2.size))
    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            for (i, j, _), val in zip(points, pool.map(lambda p: avg_nll(p[2]), points)):
                surface[i, j] = val
    else:
        for i, j, params in points:
            surface[i, j] = avg_nll(params)
    bi, bj = np.unravel_index(np.argmin(surface), surface.shape)
    best = replace(base_params, **{field1: float(values1[bi]), field2: float(values2[bj])})
    return GridSearchResult(field1, field2, values1, values2, surface, best)


# ---------------------------------------------------------------------------
# Serialization


def em_trace_to_csv(state: EmState, thetas: list | None, path: str | Path, num_matches: int) -> None:
    """EM trace: iteration, parameter values, average NLL.

    thetas optionally supplies the per-iteration parameters; without it
    only the NLL column is populated per iteration plus the final theta.
    """
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iteration", "sigma0", "tau", "epsilon", "avg_nll"])
        for i, loglik in enumerate(state.loglik_history):
            theta = thetas[i] if thetas else (state.theta if i == state.iteration else None)
            row = [i]
            if isinstance(theta, DiscreteParams):
                row += [repr(float(theta.sigma_d)), repr(float(theta.tau_d)), repr(float(theta.epsilon_d))]
            elif theta is not None:
                row += [repr(float(theta.sigma0)), repr(float(theta.tau)), repr(float(theta.epsilon))]
            else:
                row += ["", "", ""]
            row.append(repr(float(-loglik / max(num_matches, 1))))
            writer.writerow(row)


def grid_to_csv(result: GridSearchResult, path: str | Path) -> None:
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow([result.field1, result.field2, "avg_nll"])
        for i, v1 in enumerate(result.values1):
            for j, v2 in enumerate(result.values2):
                writer.writerow([repr(float(v1)), repr(float(v2)), repr(float(result.surface[i, j]))])
