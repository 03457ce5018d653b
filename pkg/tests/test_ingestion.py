import math
from pathlib import Path

import numpy as np
import pytest

from ebtopm.errors import InputError
from ebtopm.ingestion import (
    RawExperiment,
    compute_effects,
    empirical_sigma_distribution,
    format_observations_csv,
    ingest,
    parse_experiments_csv,
    read_observations_csv,
)
from ebtopm.priors import Observation, sample_prior

DATA = Path(__file__).parent / "data"
HEADER = b"experiment_id,control_impressions,control_clicks,treatment_impressions,treatment_clicks\n"


def test_golden_file_is_byte_exact():
    ids, obs, report = ingest((DATA / "experiments_fixture.csv").read_bytes())
    out = format_observations_csv(ids, obs).encode("utf-8")
    assert out == (DATA / "observations_golden.csv").read_bytes()
    assert (report.total_rows, report.kept_rows, report.dropped_filter,
            report.dropped_malformed) == (12, 8, 3, 1)
    assert report.total_rows == report.kept_rows + report.dropped_filter + report.dropped_malformed


def test_hand_computed_effects():
    identical = RawExperiment("a", 2000, 200, 2000, 200)
    lifted = RawExperiment("b", 4000, 400, 4000, 600)
    (o1, o2) = compute_effects([identical, lifted])
    assert o1.x == 0.0
    assert o1.sigma == pytest.approx(math.sqrt(2 * 0.1 * 0.9 / 2000), rel=1e-15)
    assert o1.sigma == pytest.approx(0.009487, abs=5e-7)
    assert o2.x == pytest.approx(0.05, abs=1e-15)
    assert o2.sigma == pytest.approx(math.sqrt(0.2175 / 4000), rel=1e-15)
    assert o2.sigma == pytest.approx(0.007374, abs=5e-7)


@pytest.mark.parametrize("raw", [RawExperiment("x", 999, 200, 2000, 200),
                                 RawExperiment("x", 2000, 200, 2000, 99)])
def test_filter_thresholds(raw):
    assert compute_effects([raw]) == []


def test_filter_boundary_kept():
    assert len(compute_effects([RawExperiment("x", 1000, 100, 1000, 100)])) == 1


def test_empty_body():
    raws, report = parse_experiments_csv(HEADER)
    assert raws == [] and report.total_rows == 0


def test_rows_in_file_order():
    body = HEADER + b"c,2000,200,2000,210\na,2000,200,2000,220\nb,2000,200,2000,230\n"
    raws, report = parse_experiments_csv(body)
    assert [r.experiment_id for r in raws] == ["c", "a", "b"]
    assert report.total_rows == 3


@pytest.mark.parametrize("row", [b"x,10,11,10,5", b"x,10,5,10", b"x,ten,5,10,5", b"x,10,-1,10,5",
                                 b",10,5,10,5", b"x,1.5,1,10,5"])
def test_malformed_rows_counted(row):
    raws, report = parse_experiments_csv(HEADER + row + b"\n")
    assert raws == [] and report.dropped_malformed == 1


def test_bom_and_crlf_accepted():
    body = b"\xef\xbb\xbf" + HEADER.replace(b"\n", b"\r\n") + b"a,2000,200,2000,210\r\n"
    raws, _ = parse_experiments_csv(body)
    assert len(raws) == 1


@pytest.mark.parametrize("body", [b"", b"id,a,b\n1,2,3\n", b"\xff\xfe"])
def test_bad_header_or_encoding(body):
    with pytest.raises(InputError):
        parse_experiments_csv(body)


def test_raw_invariants():
    with pytest.raises(InputError):
        RawExperiment("x", 10, 11, 10, 5)


def test_observations_round_trip():
    ids, obs, _ = ingest((DATA / "experiments_fixture.csv").read_bytes())
    ids2, obs2 = read_observations_csv(format_observations_csv(ids, obs).encode())
    assert ids2 == ids and obs2 == obs


class TestEmpiricalSigma:
    def test_frequencies(self):
        d = empirical_sigma_distribution([Observation(0, 1), Observation(1, 1), Observation(2, 2)])
        assert d.atoms == (1.0, 2.0)
        assert d.weights == pytest.approx((2 / 3, 1 / 3), abs=1e-15)

    def test_single(self):
        d = empirical_sigma_distribution([Observation(0, 0.3)])
        assert d.atoms == (0.3,) and d.weights == (1.0,)

    def test_empty(self):
        with pytest.raises(InputError):
            empirical_sigma_distribution([])

    def test_sampling_reproduces_table(self):
        sig = [0.5] * 3 + [1.0] * 5 + [2.0] * 2
        d = empirical_sigma_distribution([Observation(0, s) for s in sig])
        draws = sample_prior(d, 10**5, np.random.default_rng(8))
        freq = np.array([np.mean(draws == a) for a in d.atoms])
        assert np.max(np.abs(freq - np.array(d.weights))) <= 0.01
