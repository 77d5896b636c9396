"""Command-line front end.

Subcommands cover the full workflow on match-result CSVs: ``fit`` (EM or
grid search for the static parameters), ``rate`` (filtering sweep),
``smooth`` (historical skill trajectories), ``predict`` (fixture outcome
probabilities) and ``evaluate`` (train/test average NLL report). All
outputs are plain CSV / key=value files for external plotting.

Exit codes: 0 success, 2 input error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import math
import sys
from pathlib import Path

import numpy as np

from . import discrete as _discrete
from . import gaussian as _gaussian
from . import smc as _smc
from .core import MatchStream, PredictiveProbs
from .discrete import DiscreteParams, build_spectrum, run_discrete_filter
from .evaluate import (
    evaluate,
    export_trajectory,
    format_report_table,
    report_to_csv,
    run_method_filter,
    trajectory_rows,
)
from .gaussian import (
    EloParams,
    GaussianSkill,
    GaussianSSMParams,
    Method,
    Sigmoid,
    run_filter,
    run_smoother,
)
from .ingest import SchemaDescriptor, load_csv
from .learn import em_fit, em_trace_to_csv, grid_search, grid_to_csv
from .smc import ParticleBelief, SmcConfig, backward_simulate, sample_prior, smc_propagate, stream_rng

_METHOD_ALIASES = {
    "elo": Method.ELO_DAVIDSON,
    "elo_davidson": Method.ELO_DAVIDSON,
    "glicko": Method.GLICKO,
    "ek": Method.EXTENDED_KALMAN,
    "extended_kalman": Method.EXTENDED_KALMAN,
    "ts2": Method.TRUESKILL2,
    "trueskill2": Method.TRUESKILL2,
    "smc": Method.SMC,
    "discrete": Method.DISCRETE,
}


def parse_method(name: str) -> Method:
    try:
        return _METHOD_ALIASES[name.strip().lower()]
    except KeyError:
        raise ValueError(f"unknown method {name!r}; choose from {sorted(_METHOD_ALIASES)}")


# ---------------------------------------------------------------------------
# Parameter files (flat key=value)


def write_params_kv(theta, path: Path) -> None:
    lines = []
    if isinstance(theta, EloParams):
        lines += ["type=elo_davidson", f"k={theta.k!r}", f"kappa={theta.kappa!r}", f"s={theta.s!r}"]
    elif isinstance(theta, GaussianSSMParams):
        lines += [
            "type=gaussian",
            f"sigma0={theta.sigma0!r}",
            f"tau={theta.tau!r}",
            f"epsilon={theta.epsilon!r}",
            f"sigmoid={theta.sigmoid.value}",
        ]
        if theta.sigma_max is not None:
            lines.append(f"sigma_max={theta.sigma_max!r}")
    elif isinstance(theta, DiscreteParams):
        lines += [
            "type=discrete",
            f"num_states={theta.num_states}",
            f"sigma_d={theta.sigma_d!r}",
            f"tau_d={theta.tau_d!r}",
            f"epsilon_d={theta.epsilon_d!r}",
            f"sigmoid={theta.sigmoid.value}",
        ]
        if theta.s_d is not None:
            lines.append(f"s_d={theta.s_d!r}")
    else:
        raise TypeError(f"cannot serialize parameters of type {type(theta).__name__}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_params_kv(path: Path):
    fields: dict[str, str] = {}
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}: line {lineno}: expected key=value, got {line!r}")
        key, value = line.split("=", 1)
        fields[key.strip()] = value.strip()
    kind = fields.pop("type", None)
    if kind == "elo_davidson":
        return EloParams(
            k=float(fields.get("k", 32.0)),
            kappa=float(fields.get("kappa", 0.0)),
            s=float(fields.get("s", 1.0)),
        )
    if kind == "gaussian":
        return GaussianSSMParams(
            sigma0=float(fields.get("sigma0", 1.0)),
            tau=float(fields.get("tau", 0.1)),
            epsilon=float(fields.get("epsilon", 0.0)),
            sigmoid=Sigmoid(fields.get("sigmoid", "logistic")),
            sigma_max=float(fields["sigma_max"]) if "sigma_max" in fields else None,
        )
    if kind == "discrete":
        return DiscreteParams(
            num_states=int(fields["num_states"]),
            sigma_d=float(fields.get("sigma_d", 1.0)),
            tau_d=float(fields.get("tau_d", 0.1)),
            epsilon_d=float(fields.get("epsilon_d", 0.0)),
            s_d=float(fields["s_d"]) if "s_d" in fields else None,
            sigmoid=Sigmoid(fields.get("sigmoid", "inverse_probit")),
        )
    raise ValueError(f"{path}: missing or unknown params type {kind!r}")


def default_params(method: Method, stream: MatchStream, states: int):
    """Sensible starting parameters when no params file is supplied."""
    eps = 0.5 if stream.has_draws() else 0.0
    if method is Method.ELO_DAVIDSON:
        return EloParams(k=32.0, kappa=1.0 if stream.has_draws() else 0.0)
    if method in (Method.GLICKO, Method.EXTENDED_KALMAN):
        return GaussianSSMParams(sigma0=1.0, tau=0.02, epsilon=eps, sigmoid=Sigmoid.LOGISTIC)
    if method in (Method.TRUESKILL2, Method.SMC):
        return GaussianSSMParams(sigma0=1.0, tau=0.02, epsilon=eps, sigmoid=Sigmoid.INVERSE_PROBIT)
    return DiscreteParams(num_states=states, sigma_d=states, tau_d=0.1, epsilon_d=eps)


# ---------------------------------------------------------------------------
# Shared helpers


def _load_stream(args) -> MatchStream:
    schema = SchemaDescriptor.load(args.schema) if getattr(args, "schema", None) else None
    return load_csv(args.data, schema)


def _parse_cut(value: str, origin) -> float:
    """Split cutoff / fixture date -> fractional day on the stream's axis."""
    try:
        return float(value)
    except ValueError:
        pass
    day = _dt.date.fromisoformat(value)
    if not isinstance(origin, _dt.date):
        raise ValueError(
            f"calendar cutoff {value!r} but the data uses plain day numbers"
        )
    return float((day - origin).days)


def _split(stream: MatchStream, cutoff: str):
    from .ingest import split_by_date

    t_cut = _parse_cut(cutoff, getattr(stream, "origin", None))
    return split_by_date(stream, t_cut)


def _theta(args, method: Method, stream: MatchStream):
    if args.params:
        return read_params_kv(Path(args.params))
    return default_params(method, stream, args.states)


def _smc_config(args) -> SmcConfig:
    return SmcConfig(num_particles=args.particles, seed=args.seed)


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _parse_grid(spec: str) -> list[tuple[str, np.ndarray]]:
    """Parse 'field=lo:hi:n,field=lo:hi:n' into named linspace axes."""
    axes = []
    for part in spec.split(","):
        if "=" not in part or part.count(":") != 2:
            raise ValueError(f"bad grid axis {part!r}; expected field=lo:hi:n")
        field, rng = part.split("=", 1)
        lo, hi, n = rng.split(":")
        axes.append((field.strip(), np.linspace(float(lo), float(hi), int(n))))
    if len(axes) != 2:
        raise ValueError("grid search needs exactly two axes")
    return axes


# ---------------------------------------------------------------------------
# Subcommands


def cmd_fit(args) -> int:
    stream = _load_stream(args)
    if args.split:
        stream, _ = _split(stream, args.split)
    if not stream.records:
        raise ValueError("no matches to fit on")
    method = parse_method(args.method)
    out = _out_dir(args)
    theta = _theta(args, method, stream)
    if method in (Method.ELO_DAVIDSON, Method.GLICKO):
        if not args.grid:
            raise ValueError(f"{method.value} is fitted by grid search; pass --grid field=lo:hi:n,field=lo:hi:n")
        (f1, v1), (f2, v2) = _parse_grid(args.grid)
        result = grid_search(stream, method, theta, f1, v1, f2, v2, threads=args.threads)
        grid_to_csv(result, out / "grid.csv")
        write_params_kv(result.best_params, out / "params.kv")
        print(f"best {f1}={getattr(result.best_params, f1)!r} {f2}={getattr(result.best_params, f2)!r} "
              f"avg_nll={result.best_avg_nll:.6f}")
        return 0
    smc_config = _smc_config(args) if method is Method.SMC else None
    state = em_fit(stream, method, theta, max_iters=args.max_iters, tol=args.tol, smc_config=smc_config)
    em_trace_to_csv(state, state.theta_history, out / "em_trace.csv", stream.num_matches)
    write_params_kv(state.theta, out / "params.kv")
    avg_nll = -state.loglik_history[-1] / stream.num_matches
    print(f"iterations={state.iteration} converged={state.converged} avg_nll={avg_nll:.6f}")
    return 0


def cmd_rate(args) -> int:
    stream = _load_stream(args)
    method = parse_method(args.method)
    theta = _theta(args, method, stream)
    smc_config = _smc_config(args) if method is Method.SMC else None
    trace = run_method_filter(stream, method, theta, smc_config)
    out = _out_dir(args)
    with (out / "ratings.csv").open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["player", "match_index", "time", "mean", "sd"])
        for player in trace.players:
            for row in trajectory_rows(trace, None, player):
                writer.writerow([player, row.k, repr(float(row.t)), repr(float(row.filter_mean)), repr(float(row.filter_sd))])
    return 0


def cmd_smooth(args) -> int:
    stream = _load_stream(args)
    method = parse_method(args.method)
    if method is Method.ELO_DAVIDSON:
        raise ValueError("elo_davidson keeps point ratings only; smoothing is undefined")
    theta = _theta(args, method, stream)
    smc_config = _smc_config(args) if method is Method.SMC else None
    trace = run_method_filter(stream, method, theta, smc_config)
    if method is Method.DISCRETE:
        from .discrete import run_discrete_smoother

        smooth = run_discrete_smoother(trace)
    elif method is Method.SMC:
        smooth = backward_simulate(trace)
    else:
        smooth = run_smoother(trace)
    out = _out_dir(args)
    with (out / "smooth.csv").open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["player", "match_index", "time", "filter_mean", "filter_sd", "smooth_mean", "smooth_sd"])
        for player in trace.players:
            for row in trajectory_rows(trace, smooth, player):
                writer.writerow([
                    player, row.k, repr(float(row.t)), repr(float(row.filter_mean)), repr(float(row.filter_sd)),
                    "" if row.smooth_mean is None else repr(float(row.smooth_mean)),
                    "" if row.smooth_sd is None else repr(float(row.smooth_sd)),
                ])
    return 0


def _fixture_probs(method, theta, trace, stream, t: float, home: str, away: str, fixture_idx: int):
    """Predictive outcome probabilities for one fixture at time t.

    Unknown players fall back to the prior anchor belief; returns
    (PredictiveProbs, used_prior flag).
    """
    used_prior = False

    if method is Method.DISCRETE:
        spectrum = trace.spectrum
        m0 = _discrete.build_initial(theta, spectrum)

        def belief(player):
            nonlocal used_prior
            i = stream.player_index.get(player)
            if i is None or not trace.per_player[i]:
                used_prior = True
                return m0.copy()
            pt = trace.per_player[i][-1]
            return _discrete.discrete_propagate(pt.filt, max(t - pt.t, 0.0), theta, spectrum)

        return _discrete.discrete_match_probs(belief(home), belief(away), theta), used_prior

    if method is Method.SMC:
        def belief(player):
            nonlocal used_prior
            i = stream.player_index.get(player)
            rng = stream_rng(trace.config.seed, 4, fixture_idx, 0 if player == home else 1)
            if i is None or not trace.per_player[i]:
                used_prior = True
                return sample_prior(theta, trace.config.num_particles, rng)
            pt = trace.per_player[i][-1]
            b = ParticleBelief(pt.positions.copy(), pt.weights.copy())
            return smc_propagate(b, max(t - pt.t, 0.0), theta, rng)

        return _smc.smc_match_probs(belief(home), belief(away), theta), used_prior

    if method is Method.ELO_DAVIDSON:
        def rating(player):
            nonlocal used_prior
            i = stream.player_index.get(player)
            if i is None or not trace.per_player[i]:
                used_prior = True
                return 0.0
            return trace.per_player[i][-1].filt_mean

        return _gaussian.elo_davidson_probs(rating(home), rating(away), theta), used_prior

    effective = theta
    if method is Method.GLICKO and theta.sigma_max is None:
        from dataclasses import replace

        effective = replace(theta, sigma_max=theta.sigma0)

    def belief(player):
        nonlocal used_prior
        i = stream.player_index.get(player)
        if i is None or not trace.per_player[i]:
            used_prior = True
            return GaussianSkill(0.0, theta.sigma0**2)
        pt = trace.per_player[i][-1]
        return _gaussian.gaussian_propagate(
            GaussianSkill(pt.filt_mean, max(pt.filt_var, 1e-12)), max(t - pt.t, 0.0), effective
        )

    bh, ba = belief(home), belief(away)
    if method is Method.TRUESKILL2:
        return _gaussian.ts2_match_probs(bh, ba, theta), used_prior
    return _gaussian.ek_match_probs(bh, ba, effective), used_prior


def cmd_predict(args) -> int:
    stream = _load_stream(args)
    method = parse_method(args.method)
    theta = _theta(args, method, stream)
    smc_config = _smc_config(args) if method is Method.SMC else None
    trace = run_method_filter(stream, method, theta, smc_config)
    origin = getattr(stream, "origin", None)
    out = _out_dir(args)
    with Path(args.fixtures).open(newline="", encoding="utf-8-sig") as fh:
        reader = csv.DictReader(fh)
        for col in ("date", "home", "away"):
            if col not in (reader.fieldnames or []):
                raise ValueError(f"{args.fixtures}: missing column {col!r}")
        fixtures = [(row["date"].strip(), row["home"].strip(), row["away"].strip()) for row in reader]
    with (out / "predictions.csv").open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["date", "home", "away", "p_home", "p_away", "p_draw", "used_prior"])
        for idx, (date, home, away) in enumerate(fixtures):
            t = _parse_cut(date, origin)
            probs, used_prior = _fixture_probs(method, theta, trace, stream, t, home, away, idx)
            writer.writerow([date, home, away, repr(float(probs.home)), repr(float(probs.away)), repr(float(probs.draw)),
                             int(used_prior)])
    return 0


def cmd_evaluate(args) -> int:
    stream = _load_stream(args)
    if not args.split:
        raise ValueError("evaluate requires --split")
    train, test = _split(stream, args.split)
    method = parse_method(args.method)
    theta = _theta(args, method, train)
    smc_config = _smc_config(args) if method is Method.SMC else None
    report = evaluate(train, test, method, theta, dataset=Path(args.data).stem, smc_config=smc_config)
    out = _out_dir(args)
    report_to_csv([report], out / "report.csv")
    print(format_report_table([report]))
    return 0


# ---------------------------------------------------------------------------
# Entry point


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="skillssm",
        description="Dynamic skill rating on match streams: filtering, smoothing, "
        "parameter fitting and predictive evaluation.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    commands = {
        "fit": cmd_fit,
        "rate": cmd_rate,
        "smooth": cmd_smooth,
        "predict": cmd_predict,
        "evaluate": cmd_evaluate,
    }
    for name, func in commands.items():
        p = sub.add_parser(name)
        p.set_defaults(func=func)
        p.add_argument("--method", required=True, help="elo|glicko|ek|ts2|smc|discrete")
        p.add_argument("--data", required=True, help="match results CSV")
        p.add_argument("--schema", help="schema descriptor for non-canonical CSVs")
        p.add_argument("--split", help="train/test cutoff (ISO date or day number)")
        p.add_argument("--params", help="params.kv file (defaults per method otherwise)")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--out", default=".", help="output directory")
        p.add_argument("--particles", type=int, default=1000, help="SMC particle count")
        p.add_argument("--states", type=int, default=100, help="finite-state grid size")
        p.add_argument("--max-iters", type=int, default=1000, dest="max_iters")
        p.add_argument("--tol", type=float, default=1e-6)
        p.add_argument("--threads", type=int, default=1)
        if name == "fit":
            p.add_argument("--grid", help="grid axes 'field=lo:hi:n,field=lo:hi:n' for elo/glicko")
        if name == "predict":
            p.add_argument("--fixtures", required=True, help="CSV with date,home,away")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (FloatingPointError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except (ValueError, KeyError, TypeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
