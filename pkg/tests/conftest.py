"""Shared synthetic-data generators and the acceptance summary hook."""

from __future__ import annotations

import math

import numpy as np

from skillssm.core import MatchRecord, MatchStream, Outcome
from skillssm.discrete import (
    DiscreteParams,
    assemble_kernel,
    build_initial,
    build_spectrum,
    likelihood_matrix,
)
from skillssm.gaussian import GaussianSSMParams, Sigmoid, outcome_likelihood


def sample_outcome(rng: np.random.Generator, d: float, p: GaussianSSMParams) -> Outcome:
    probs = [outcome_likelihood(d, y, p) for y in (Outcome.HOME_WIN, Outcome.AWAY_WIN, Outcome.DRAW)]
    u = rng.random()
    if u < probs[0]:
        return Outcome.HOME_WIN
    if u < probs[0] + probs[1]:
        return Outcome.AWAY_WIN
    return Outcome.DRAW


def synth_gaussian_stream(
    seed: int,
    n_players: int,
    n_matches: int,
    params: GaussianSSMParams,
    matches_per_day: int = 5,
) -> MatchStream:
    """Simulate a match stream from the Gaussian random-walk skill model.

    Skills are anchored at each player's first matchtime with N(0, sigma0^2)
    and follow the tau random walk between that player's matches, mirroring
    the filter's own anchoring convention.
    """
    rng = np.random.default_rng(seed)
    last_t: dict[int, float] = {}
    skill: dict[int, float] = {}
    records = []
    for k in range(1, n_matches + 1):
        t = float((k - 1) // matches_per_day)
        h, a = rng.choice(n_players, size=2, replace=False)
        for i in (int(h), int(a)):
            if i not in skill:
                skill[i] = rng.normal(0.0, params.sigma0)
            else:
                dt = t - last_t[i]
                if dt > 0:
                    skill[i] += rng.normal(0.0, params.tau * math.sqrt(dt))
            last_t[i] = t
        y = sample_outcome(rng, skill[int(h)] - skill[int(a)], params)
        records.append(MatchRecord(k, t, f"p{int(h)}", f"p{int(a)}", y))
    return MatchStream(records)


def synth_discrete_stream(
    seed: int,
    n_players: int,
    n_matches: int,
    params: DiscreteParams,
    matches_per_day: int = 5,
) -> MatchStream:
    """Simulate a match stream from the finite-state skill model."""
    rng = np.random.default_rng(seed)
    spectrum = build_spectrum(params.num_states)
    m0 = build_initial(params, spectrum)
    tables = {
        y: likelihood_matrix(y, params)
        for y in (Outcome.HOME_WIN, Outcome.AWAY_WIN)
        + ((Outcome.DRAW,) if params.epsilon_d > 0 else ())
    }
    last_t: dict[int, float] = {}
    state: dict[int, int] = {}  # 0-based state index
    kernels: dict[float, np.ndarray] = {}
    records = []
    for k in range(1, n_matches + 1):
        t = float((k - 1) // matches_per_day)
        h, a = rng.choice(n_players, size=2, replace=False)
        for i in (int(h), int(a)):
            if i not in state:
                state[i] = int(rng.choice(params.num_states, p=m0))
            else:
                dt = t - last_t[i]
                if dt > 0:
                    if dt not in kernels:
                        kernels[dt] = np.clip(assemble_kernel(params.tau_d * dt, spectrum), 0.0, None)
                    row = kernels[dt][state[i]]
                    state[i] = int(rng.choice(params.num_states, p=row / row.sum()))
            last_t[i] = t
        probs = np.array([tables[y][state[int(h)], state[int(a)]] for y in tables])
        y = list(tables)[int(rng.choice(probs.size, p=probs / probs.sum()))]
        records.append(MatchRecord(k, t, f"p{int(h)}", f"p{int(a)}", y))
    return MatchStream(records)


# ---------------------------------------------------------------------------
# Acceptance summary: collected lines are echoed after the pytest summary so
# the per-criterion verdicts appear in the captured test output.

ACCEPTANCE_LINES: list[str] = []


def record_acceptance(line: str) -> None:
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
