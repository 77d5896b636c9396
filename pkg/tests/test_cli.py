"""End-to-end command-line workflows in temporary directories."""

import csv
import math
from pathlib import Path

import pytest

from skillssm.cli import (
    default_params,
    main,
    parse_method,
    read_params_kv,
    write_params_kv,
)
from skillssm.core import MatchStream, build_sparse_index
from skillssm.discrete import DiscreteParams
from skillssm.gaussian import (
    EloParams,
    GaussianSSMParams,
    Method,
    Sigmoid,
    run_filter,
)
from skillssm.ingest import load_csv, write_csv

from conftest import synth_gaussian_stream


@pytest.fixture
def data_csv(tmp_path):
    params = GaussianSSMParams(sigma0=1.1, tau=0.2, epsilon=0.4)
    stream = synth_gaussian_stream(41, 6, 80, params)
    path = tmp_path / "matches.csv"
    write_csv(stream, path)
    return path


class TestParseMethod:
    def test_aliases(self):
        assert parse_method("elo") is Method.ELO_DAVIDSON
        assert parse_method(" EK ") is Method.EXTENDED_KALMAN
        assert parse_method("ts2") is Method.TRUESKILL2

    def test_unknown(self):
        with pytest.raises(ValueError, match="unknown method"):
            parse_method("chess-engine")


class TestParamsKv:
    @pytest.mark.parametrize(
        "theta",
        [
            EloParams(k=0.05, kappa=0.7, s=1.0),
            GaussianSSMParams(sigma0=1.3, tau=0.21, epsilon=0.45, sigmoid=Sigmoid.INVERSE_PROBIT),
            GaussianSSMParams(sigma0=1.0, tau=0.1, sigma_max=1.6),
            DiscreteParams(num_states=25, sigma_d=4.0, tau_d=0.8, epsilon_d=0.3),
        ],
    )
    def test_round_trip(self, tmp_path, theta):
        path = tmp_path / "params.kv"
        write_params_kv(theta, path)
        assert read_params_kv(path) == theta

    def test_comments_and_blank_lines(self, tmp_path):
        path = tmp_path / "params.kv"
        path.write_text("# fitted by hand\ntype=elo_davidson\n\nk=0.08  # rate\nkappa=0.5\n")
        assert read_params_kv(path) == EloParams(k=0.08, kappa=0.5)

    def test_missing_type_rejected(self, tmp_path):
        path = tmp_path / "params.kv"
        path.write_text("sigma0=1.0\n")
        with pytest.raises(ValueError, match="params type"):
            read_params_kv(path)

    def test_default_params_draw_awareness(self, data_csv):
        stream = load_csv(data_csv)
        assert stream.has_draws()
        theta = default_params(Method.EXTENDED_KALMAN, stream, 100)
        assert theta.epsilon == 0.5
        elo = default_params(Method.ELO_DAVIDSON, stream, 100)
        assert elo.kappa == 1.0


class TestFit:
    def test_grid_fit_elo(self, tmp_path, data_csv, capsys):
        out = tmp_path / "fit"
        rc = main([
            "fit", "--method", "elo", "--data", str(data_csv),
            "--grid", "k=0.01:0.16:4,kappa=0.2:1.0:3", "--out", str(out),
        ])
        assert rc == 0
        assert "best k=" in capsys.readouterr().out
        best = read_params_kv(out / "params.kv")
        with (out / "grid.csv").open() as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 12
        surface_best = min(rows, key=lambda r: float(r["avg_nll"]))
        assert float(surface_best["k"]) == best.k
        assert float(surface_best["kappa"]) == best.kappa

    def test_grid_fit_reruns_byte_identical(self, tmp_path, data_csv):
        outs = []
        for name in ("a", "b"):
            out = tmp_path / name
            rc = main([
                "fit", "--method", "elo", "--data", str(data_csv),
                "--grid", "k=0.01:0.16:4,kappa=0.2:1.0:3", "--out", str(out),
            ])
            assert rc == 0
            outs.append((out / "grid.csv").read_bytes() + (out / "params.kv").read_bytes())
        assert outs[0] == outs[1]

    def test_grid_required_for_elo(self, tmp_path, data_csv, capsys):
        rc = main(["fit", "--method", "elo", "--data", str(data_csv), "--out", str(tmp_path)])
        assert rc == 2
        assert "grid search" in capsys.readouterr().err

    def test_em_fit_then_evaluate_consistency(self, tmp_path, data_csv, capsys):
        out = tmp_path / "fit"
        rc = main([
            "fit", "--method", "ek", "--data", str(data_csv),
            "--max-iters", "20", "--out", str(out),
        ])
        assert rc == 0
        theta = read_params_kv(out / "params.kv")
        assert isinstance(theta, GaussianSSMParams)
        with (out / "em_trace.csv").open() as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) >= 1 and rows[0]["iteration"] == "0"

        # the fitted parameters feed evaluate; with the cutoff past the end
        # the whole stream is the train split
        ev_out = tmp_path / "eval"
        rc = main([
            "evaluate", "--method", "ek", "--data", str(data_csv),
            "--split", "999999", "--params", str(out / "params.kv"), "--out", str(ev_out),
        ])
        assert rc == 0
        with (ev_out / "report.csv").open() as fh:
            report = next(csv.DictReader(fh))
        stream = load_csv(data_csv)
        expected = -run_filter(stream, None, theta, Method.EXTENDED_KALMAN).loglik / stream.num_matches
        assert float(report["train_avg_nll"]) == pytest.approx(expected, abs=1e-9)
        assert report["test_avg_nll"] == ""


class TestRateAndSmooth:
    def test_rate_matches_filter_sweep(self, tmp_path, data_csv):
        out = tmp_path / "rate"
        rc = main(["rate", "--method", "ek", "--data", str(data_csv), "--out", str(out)])
        assert rc == 0
        stream = load_csv(data_csv)
        theta = default_params(Method.EXTENDED_KALMAN, stream, 100)
        trace = run_filter(stream, None, theta, Method.EXTENDED_KALMAN)
        with (out / "ratings.csv").open() as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 2 * stream.num_matches
        by_player = {}
        for row in rows:
            by_player.setdefault(row["player"], []).append(row)
        for i, player in enumerate(trace.players):
            pts = [pt for pt in trace.per_player[i] if pt.k > 0]
            assert len(by_player.get(player, [])) == len(pts)
            for row, pt in zip(by_player[player], pts):
                assert float(row["mean"]) == pytest.approx(pt.filt_mean, abs=1e-12)
                assert float(row["sd"]) == pytest.approx(math.sqrt(pt.filt_var), abs=1e-12)

    @pytest.mark.parametrize("method", ["ek", "discrete", "smc"])
    def test_smooth_terminal_equals_filter(self, tmp_path, data_csv, method):
        out = tmp_path / f"smooth-{method}"
        particles = 1000
        rc = main([
            "smooth", "--method", method, "--data", str(data_csv),
            "--out", str(out), "--states", "12", "--particles", str(particles),
        ])
        assert rc == 0
        with (out / "smooth.csv").open() as fh:
            rows = list(csv.DictReader(fh))
        assert rows and all(r["smooth_mean"] != "" for r in rows)
        last_by_player = {r["player"]: r for r in rows}
        for row in last_by_player.values():
            # the particle smoother redraws the terminal point, so it only
            # matches the filter up to Monte Carlo error
            tol = 6.0 * float(row["filter_sd"]) / math.sqrt(particles) if method == "smc" else 1e-9
            assert float(row["smooth_mean"]) == pytest.approx(float(row["filter_mean"]), abs=tol)

    def test_smooth_rejects_elo(self, tmp_path, data_csv, capsys):
        rc = main(["smooth", "--method", "elo", "--data", str(data_csv), "--out", str(tmp_path)])
        assert rc == 2
        assert "smoothing is undefined" in capsys.readouterr().err


class TestPredict:
    def _write_fixtures(self, tmp_path, stream):
        last_t = stream.records[-1].t
        known_home, known_away = stream.records[-1].home, stream.records[-1].away
        path = tmp_path / "fixtures.csv"
        with path.open("w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["date", "home", "away"])
            writer.writerow([repr(last_t), known_home, known_away])
            writer.writerow([repr(last_t + 3.0), "debutant1", "debutant2"])
        return path

    @pytest.mark.parametrize("method", ["elo", "glicko", "ek", "ts2", "smc", "discrete"])
    def test_rows_normalised_and_prior_flagged(self, tmp_path, data_csv, method):
        stream = load_csv(data_csv)
        fixtures = self._write_fixtures(tmp_path, stream)
        out = tmp_path / f"pred-{method}"
        rc = main([
            "predict", "--method", method, "--data", str(data_csv),
            "--fixtures", str(fixtures), "--out", str(out),
            "--states", "12", "--particles", "200",
        ])
        assert rc == 0
        with (out / "predictions.csv").open() as fh:
            rows = list(csv.DictReader(fh))
        assert len(rows) == 2
        for row in rows:
            total = float(row["p_home"]) + float(row["p_away"]) + float(row["p_draw"])
            assert total == pytest.approx(1.0, abs=1e-9)
        assert rows[0]["used_prior"] == "0"
        assert rows[1]["used_prior"] == "1"
        # two debutants are exchangeable up to the draw band; the particle
        # method only achieves this up to Monte Carlo error
        tol = 0.05 if method == "smc" else 1e-9
        assert float(rows[1]["p_home"]) == pytest.approx(float(rows[1]["p_away"]), abs=tol)

    def test_missing_fixture_column(self, tmp_path, data_csv, capsys):
        path = tmp_path / "fixtures.csv"
        path.write_text("date,home\n1.0,A\n")
        rc = main([
            "predict", "--method", "ek", "--data", str(data_csv),
            "--fixtures", str(path), "--out", str(tmp_path),
        ])
        assert rc == 2
        assert "missing column" in capsys.readouterr().err


class TestExitCodes:
    def test_missing_data_file(self, tmp_path, capsys):
        rc = main(["rate", "--method", "ek", "--data", str(tmp_path / "nope.csv"), "--out", str(tmp_path)])
        assert rc == 2

    def test_unknown_method(self, tmp_path, data_csv):
        rc = main(["rate", "--method", "wizard", "--data", str(data_csv), "--out", str(tmp_path)])
        assert rc == 2

    def test_numerical_failure_maps_to_3(self, tmp_path, data_csv, monkeypatch, capsys):
        import skillssm.cli as cli_mod

        def boom(*args, **kwargs):
            raise FloatingPointError("synthetic divergence")

        monkeypatch.setattr(cli_mod, "run_method_filter", boom)
        rc = main(["rate", "--method", "ek", "--data", str(data_csv), "--out", str(tmp_path)])
        assert rc == 3
        assert "numerical failure" in capsys.readouterr().err

    def test_evaluate_requires_split(self, tmp_path, data_csv):
        rc = main(["evaluate", "--method", "ek", "--data", str(data_csv), "--out", str(tmp_path)])
        assert rc == 2

    def test_calendar_cutoff_on_day_numbered_data(self, tmp_path, data_csv, capsys):
        rc = main([
            "evaluate", "--method", "ek", "--data", str(data_csv),
            "--split", "2021-06-01", "--out", str(tmp_path),
        ])
        assert rc == 2
        assert "day numbers" in capsys.readouterr().err
