"""A/B experiment counts to (effect, standard error) observations."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np

from .errors import InputError
from .priors import DiscretePrior, Observation

HEADER = ("experiment_id", "control_impressions", "control_clicks",
          "treatment_impressions", "treatment_clicks")


@dataclass(frozen=True)
class RawExperiment:
    experiment_id: str
    control_impressions: int
    control_clicks: int
    treatment_impressions: int
    treatment_clicks: int

    def __post_init__(self):
        counts = (self.control_impressions, self.control_clicks,
                  self.treatment_impressions, self.treatment_clicks)
        if any(c < 0 for c in counts):
            raise InputError("counts must be nonnegative")
        if self.control_clicks > self.control_impressions:
            raise InputError("control clicks exceed impressions")
        if self.treatment_clicks > self.treatment_impressions:
            raise InputError("treatment clicks exceed impressions")


@dataclass
class IngestReport:
    total_rows: int = 0
    kept_rows: int = 0
    dropped_filter: int = 0
    dropped_malformed: int = 0
    min_impressions: int = 1000
    min_clicks: int = 100

    def to_dict(self):
        return dict(self.__dict__)


def _parse_count(text):
    text = text.strip()
    if not text or not (text.isdigit()):
        raise ValueError(text)
    return int(text)


def parse_experiments_csv(data: bytes):
    """Parse experiment rows; malformed rows are counted and skipped.

    The report returned here has ``kept_rows`` equal to the number of parsed
    rows; filtering is accounted for by :func:`ingest`.
    """
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise InputError("input is not valid UTF-8") from exc
    if text.startswith("\ufeff"):
        text = text[1:]
    reader = csv.reader(io.StringIO(text, newline=""))
    header = next(reader, None)
    if header is None or tuple(header) != HEADER:
        raise InputError(f"expected header {','.join(HEADER)}")
    report = IngestReport()
    raws = []
    for row in reader:
        if not row:
            continue
        report.total_rows += 1
        if len(row) != len(HEADER) or not row[0].strip():
            report.dropped_malformed += 1
            continue
        try:
            raw = RawExperiment(row[0], *(_parse_count(c) for c in row[1:]))
        except (ValueError, InputError):
            report.dropped_malformed += 1
            continue
        raws.append(raw)
    report.kept_rows = len(raws)
    return raws, report


def passes_filter(raw: RawExperiment, min_impressions=1000, min_clicks=100) -> bool:
    return (raw.control_impressions >= min_impressions
            and raw.treatment_impressions >= min_impressions
            and raw.control_clicks >= min_clicks
            and raw.treatment_clicks >= min_clicks)


def _effect(raw):
    pt = raw.treatment_clicks / raw.treatment_impressions
    pc = raw.control_clicks / raw.control_impressions
    se = math.sqrt(pt * (1.0 - pt) / raw.treatment_impressions
                   + pc * (1.0 - pc) / raw.control_impressions)
    return pt - pc, se


def filter_experiments(raw, min_impressions=1000, min_clicks=100):
    """Experiments that pass the per-arm filters and have a positive standard error."""
    return [r for r in raw if passes_filter(r, min_impressions, min_clicks) and _effect(r)[1] > 0]


def compute_effects(raw, min_impressions=1000, min_clicks=100):
    """Click-through-rate difference and unpooled binomial standard error per surviving experiment."""
    return [Observation(*_effect(r)) for r in filter_experiments(raw, min_impressions, min_clicks)]


def ingest(data: bytes, min_impressions=1000, min_clicks=100):
    """Parse, filter and convert. Returns ``(ids, observations, report)``."""
    raws, report = parse_experiments_csv(data)
    kept = filter_experiments(raws, min_impressions, min_clicks)
    report.dropped_filter = len(raws) - len(kept)
    report.kept_rows = len(kept)
    report.min_impressions = min_impressions
    report.min_clicks = min_clicks
    obs = [Observation(*_effect(r)) for r in kept]
    return [r.experiment_id for r in kept], obs, report


def empirical_sigma_distribution(obs) -> DiscretePrior:
    """Empirical law of the observations' sigma values."""
    sig = np.array([o.sigma for o in obs], dtype=np.float64)
    if sig.size == 0:
        raise InputError("need at least one observation")
    atoms, counts = np.unique(sig, return_counts=True)
    weights = counts / sig.size
    return DiscretePrior(tuple(atoms), tuple(weights))


def format_observations_csv(ids, obs) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(("experiment_id", "x", "sigma"))
    for i, o in zip(ids, obs):
        w.writerow((i, format(o.x, ".17g"), format(o.sigma, ".17g")))
    return buf.getvalue()


def read_observations_csv(data: bytes):
    """Inverse of :func:`format_observations_csv`: returns ``(ids, observations)``."""
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise InputError("observations file is not valid UTF-8") from exc
    reader = csv.reader(io.StringIO(text, newline=""))
    header = next(reader, None)
    if header is None or [h.strip() for h in header] != ["experiment_id", "x", "sigma"]:
        raise InputError("expected header experiment_id,x,sigma")
    ids, obs = [], []
    for lineno, row in enumerate(reader, start=2):
        if not row:
            continue
        if len(row) != 3:
            raise InputError(f"line {lineno}: expected 3 fields")
        try:
            ob = Observation(float(row[1]), float(row[2]))
        except ValueError as exc:
            raise InputError(f"line {lineno}: {exc}") from exc
        ids.append(row[0])
        obs.append(ob)
    return ids, obs
