import csv
import io
import json
from pathlib import Path

import numpy as np
import pytest

from ebtopm.cli import main
from ebtopm.ingestion import format_observations_csv
from ebtopm.priors import NormalPrior, Observation, dumps_prior, loads_prior, posterior_moments

DATA = Path(__file__).parent / "data"


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


@pytest.fixture
def obs_file(tmp_path):
    rng = np.random.default_rng(4)
    n = 50
    s = rng.choice([0.5, 1.0, 2.0], n)
    x = rng.normal(0, 1.5, n) + s * rng.standard_normal(n)
    p = tmp_path / "obs.csv"
    p.write_text(format_observations_csv([f"u{i:02d}" for i in range(n)],
                                         [Observation(a, b) for a, b in zip(x, s)]), newline="")
    return p


@pytest.fixture
def prior_file(tmp_path):
    p = tmp_path / "prior.json"
    p.write_text(dumps_prior(NormalPrior(0.0, 1.0)))
    return p


class TestIngest:
    def test_fixture(self, capsys, tmp_path):
        out = tmp_path / "o.csv"
        code, stdout, _ = run(capsys, "ingest", "--input", DATA / "experiments_fixture.csv",
                              "--output", out)
        assert code == 0
        assert out.read_bytes() == (DATA / "observations_golden.csv").read_bytes()
        report = json.loads(stdout)
        assert report["kept_rows"] == 8
        assert (report["min_impressions"], report["min_clicks"]) == (1000, 100)

    def test_five_rows_two_filtered(self, capsys, tmp_path):
        src = tmp_path / "in.csv"
        rows = ["a,2000,200,2000,210", "b,2000,200,2000,220", "c,500,200,2000,230",
                "d,2000,200,2000,50", "e,3000,300,3000,310"]
        src.write_text("experiment_id,control_impressions,control_clicks,treatment_impressions,"
                       "treatment_clicks\n" + "\n".join(rows) + "\n")
        code, stdout, _ = run(capsys, "ingest", "--input", src, "--output", tmp_path / "o.csv")
        assert code == 0 and json.loads(stdout)["kept_rows"] == 3

    def test_sigma_law(self, capsys, tmp_path):
        law = tmp_path / "h0.json"
        code, _, _ = run(capsys, "ingest", "--input", DATA / "experiments_fixture.csv",
                         "--output", tmp_path / "o.csv", "--sigma-prior", law)
        prior = loads_prior(law.read_text())
        assert code == 0 and len(prior.atoms) == 8 and sum(prior.weights) == pytest.approx(1)

    def test_empty_file(self, capsys, tmp_path):
        src = tmp_path / "empty.csv"
        src.write_bytes(b"")
        assert run(capsys, "ingest", "--input", src, "--output", tmp_path / "o.csv")[0] == 3

    def test_missing_file(self, capsys, tmp_path):
        assert run(capsys, "ingest", "--input", tmp_path / "nope", "--output", tmp_path / "o")[0] == 3


class TestFit:
    def test_normal_two_obs(self, capsys, tmp_path):
        obs = tmp_path / "two.csv"
        obs.write_text(format_observations_csv(["a", "b"], [Observation(1, 1), Observation(-1, 1)]),
                       newline="")
        out = tmp_path / "p.json"
        code, stdout, _ = run(capsys, "fit", "--observations", obs, "--family", "normal",
                              "--output", out)
        assert code == 0
        assert isinstance(loads_prior(out.read_text()), NormalPrior)
        assert set(json.loads(stdout)) == {"final_log_likelihood", "iterations", "converged"}

    @pytest.mark.parametrize("family", ["nsm", "npmle"])
    def test_weights_and_determinism(self, capsys, tmp_path, obs_file, family):
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        assert run(capsys, "fit", "--observations", obs_file, "--family", family, "--output", a)[0] == 0
        assert run(capsys, "fit", "--observations", obs_file, "--family", family, "--output", b)[0] == 0
        assert a.read_bytes() == b.read_bytes()
        assert sum(loads_prior(a.read_text()).weights) == pytest.approx(1, abs=1e-12)

    def test_grid_size(self, capsys, tmp_path, obs_file):
        out = tmp_path / "p.json"
        run(capsys, "fit", "--observations", obs_file, "--family", "npmle", "--grid-size", "7",
            "--output", out)
        assert len(loads_prior(out.read_text()).atoms) <= 7

    def test_unknown_family(self, capsys, tmp_path, obs_file):
        assert run(capsys, "fit", "--observations", obs_file, "--family", "gamma",
                   "--output", tmp_path / "p")[0] == 2


class TestSelect:
    def _rows(self, text):
        return list(csv.DictReader(io.StringIO(text)))

    def test_alpha_and_ordering(self, capsys, obs_file, prior_file):
        code, stdout, _ = run(capsys, "select", "--observations", obs_file, "--prior", prior_file,
                              "--alpha", "0.1")
        assert code == 0
        rows = self._rows(stdout)
        assert sum(int(r["selected"]) for r in rows) == 5
        pm = [float(r["posterior_mean"]) for r in rows]
        assert pm == sorted(pm, reverse=True)
        assert all(r["selected"] == "1" for r in rows[:5])

    def test_homoskedastic_top_by_x(self, capsys, tmp_path, prior_file):
        x = np.random.default_rng(1).normal(size=30)
        obs = tmp_path / "h.csv"
        obs.write_text(format_observations_csv([str(i) for i in range(30)],
                                               [Observation(v, 0.7) for v in x]), newline="")
        out = tmp_path / "sel.csv"
        assert run(capsys, "select", "--observations", obs, "--prior", prior_file, "--m", "4",
                   "--output", out)[0] == 0
        chosen = {int(r["experiment_id"]) for r in self._rows(out.read_text()) if r["selected"] == "1"}
        assert chosen == set(np.argsort(-x)[:4])

    def test_exit_codes(self, capsys, tmp_path, obs_file, prior_file):
        assert run(capsys, "select", "--observations", obs_file, "--prior", prior_file,
                   "--m", "0")[0] == 2
        assert run(capsys, "select", "--observations", obs_file, "--prior", prior_file,
                   "--m", "3", "--alpha", "0.1")[0] == 2
        degenerate = tmp_path / "d.json"
        degenerate.write_text(dumps_prior(NormalPrior(0.0, 0.0)))
        assert run(capsys, "select", "--observations", obs_file, "--prior", degenerate,
                   "--m", "3")[0] == 3

    def test_unknown_flag(self, capsys, obs_file, prior_file):
        assert run(capsys, "select", "--observations", obs_file, "--prior", prior_file,
                   "--m", "3", "--bogus")[0] == 2


class TestSimulate:
    def _config(self, tmp_path, **kw):
        doc = json.loads((Path(__file__).resolve().parents[1] / "configs/desk_study.json").read_text())
        doc.update({"n_grid": [250], "iterations": 2, "methods": ["UN"], **kw})
        p = tmp_path / "cfg.json"
        p.write_text(json.dumps(doc))
        return p

    def test_row_count_and_outputs(self, capsys, tmp_path):
        out = tmp_path / "out"
        code, stdout, _ = run(capsys, "simulate", "--config", self._config(tmp_path),
                              "--output-dir", out)
        assert code == 0
        lines = (out / "summary.csv").read_bytes().split(b"\r\n")
        assert len(lines) - 2 == 3  # UN has no W1 row
        assert json.loads(stdout)["slopes"][0]["method"] == "UN"
        assert (out / "summary.json").exists() and (out / "slopes.json").exists()

    def test_threads_do_not_change_bytes(self, capsys, tmp_path):
        cfg = self._config(tmp_path, methods=["UN", "EB-NN"], n_grid=[250, 500])
        run(capsys, "simulate", "--config", cfg, "--output-dir", tmp_path / "a", "--threads", "1")
        run(capsys, "simulate", "--config", cfg, "--output-dir", tmp_path / "b", "--threads", "3")
        assert (tmp_path / "a/summary.csv").read_bytes() == (tmp_path / "b/summary.csv").read_bytes()

    def test_invalid_config(self, capsys, tmp_path):
        assert run(capsys, "simulate", "--config", self._config(tmp_path, alpha=2.0),
                   "--output-dir", tmp_path / "o")[0] == 3
        bad = tmp_path / "bad.json"
        bad.write_text("{")
        assert run(capsys, "simulate", "--config", bad, "--output-dir", tmp_path / "o")[0] == 3

    def test_zero_iterations(self, capsys, tmp_path):
        assert run(capsys, "simulate", "--config", self._config(tmp_path, iterations=0),
                   "--output-dir", tmp_path / "o")[0] == 2


class TestSharpness:
    def _config(self, tmp_path, **kw):
        doc = {"n_grid": [1024], "iterations": 50, "alpha": 0.5, "master_seed": 5, "eta0": 0.0}
        doc.update(kw)
        p = tmp_path / "s.json"
        p.write_text(json.dumps(doc))
        return p

    def test_one_row_positive(self, capsys, tmp_path):
        a, b = tmp_path / "a.csv", tmp_path / "b.csv"
        cfg = self._config(tmp_path)
        assert run(capsys, "sharpness", "--config", cfg, "--output", a)[0] == 0
        assert run(capsys, "sharpness", "--config", cfg, "--output", b)[0] == 0
        assert a.read_bytes() == b.read_bytes()
        (row,) = list(csv.DictReader(io.StringIO(a.read_text())))
        assert float(row["mean_nR"]) > 0

    def test_zero_iterations(self, capsys, tmp_path):
        assert run(capsys, "sharpness", "--config", self._config(tmp_path, iterations=0),
                   "--output", tmp_path / "o.csv")[0] == 2


class TestPosterior:
    def test_normal(self, capsys, prior_file):
        code, stdout, _ = run(capsys, "posterior", "--prior", prior_file, "--sigma", "1", "--x", "2")
        assert code == 0
        doc = json.loads(stdout)
        assert doc["posterior_mean"] == 1.0 and doc["posterior_variance"] == 0.5

    def test_symmetric_zero(self, capsys, tmp_path):
        p = tmp_path / "nsm.json"
        p.write_text('{"family": "scale_mixture", "variances": [1, 4], "weights": [0.5, 0.5]}')
        assert json.loads(run(capsys, "posterior", "--prior", p, "--sigma", "1", "--x", "0")[1])[
            "posterior_mean"] == 0.0

    def test_matches_library(self, capsys, tmp_path):
        p = tmp_path / "d.json"
        prior = loads_prior('{"family": "discrete", "atoms": [-1, 0.3, 2], "weights": [0.2, 0.5, 0.3]}')
        p.write_text(dumps_prior(prior))
        doc = json.loads(run(capsys, "posterior", "--prior", p, "--sigma", "0.7", "--x", "1.1")[1])
        _, pm, pv = posterior_moments(prior, 0.7, 1.1)
        assert doc == {"posterior_mean": float(pm), "posterior_variance": float(pv)}

    @pytest.mark.parametrize("sigma", ["0", "-1"])
    def test_bad_sigma(self, capsys, prior_file, sigma):
        assert run(capsys, "posterior", "--prior", prior_file, "--sigma", sigma, "--x", "1")[0] == 3


def test_no_subcommand(capsys):
    assert main([]) == 2
