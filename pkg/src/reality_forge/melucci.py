"""Monte-Carlo two-slit retrieval experiment.

A source emits documents; each is relevant with probability ``pR``.  In a
filter mode only relevant (``filter_R``) or only non-relevant
(``filter_notR``) documents pass the slit; in ``no_filter`` every document
passes.  A detector then fires when the passed document contains a term
``X``.  In ``no_filter`` mode the detection probability is the total
probability ``pX|R * pR + pX|~R * (1 - pR)`` shifted by an interference term
``delta``; with ``delta != 0`` the three runs admit no single classical
model and the estimated invariant leaves ``[0, 1]``.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from typing import NamedTuple

import numpy as np

from ._validation import check_positive_int, check_probability, check_seed
from .errors import ConfigError, DecodeError, ModeMismatch, StarvationError, ZeroCount
from .probcheck import MelucciStats, accardi_invariant, accardi_invariant_se

MODES = ("filter_R", "filter_notR", "no_filter")
MAX_EMISSIONS = 10**8


@dataclass(frozen=True)
class SourceConfig:
    pR: float = 0.5
    pX_given_R: float = 0.8
    pX_given_notR: float = 0.2
    delta: float = 0.0
    N: int = 100_000
    seed: int = 0

    def __post_init__(self):
        for name in ("pR", "pX_given_R", "pX_given_notR"):
            check_probability(getattr(self, name), name, exc=ConfigError)
        if isinstance(self.delta, bool) or not isinstance(self.delta, (int, float)) or not math.isfinite(self.delta):
            raise ConfigError(f"delta must be a finite real, got {self.delta!r}")
        check_positive_int(self.N, "N")
        check_seed(self.seed)
        p = self.p_detect_unfiltered
        if not (0.0 <= p <= 1.0):
            raise ConfigError(f"total detection probability with interference is {p}, outside [0, 1]")

    @property
    def p_detect_unfiltered(self) -> float:
        return self.pX_given_R * self.pR + self.pX_given_notR * (1.0 - self.pR) + self.delta

    @property
    def expected_invariant(self) -> float:
        """Population value of the invariant (``pR + delta / (pX|R - pX|~R)``)."""
        return accardi_invariant(
            MelucciStats(self.p_detect_unfiltered, self.pX_given_R, self.pX_given_notR, self.pR)
        )

    @classmethod
    def from_dict(cls, doc: dict) -> "SourceConfig":
        unknown = set(doc) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown source config keys: {sorted(unknown)}")
        return cls(**doc)


PRESETS = {
    "classical": SourceConfig(),
    "interference": SourceConfig(delta=0.4),
}


@dataclass(frozen=True)
class ExperimentCounts:
    mode: str
    emitted: int
    passed_slit: int
    detected_X: int

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"unknown mode {self.mode!r}; expected one of {MODES}")
        for name in ("emitted", "passed_slit", "detected_X"):
            v = getattr(self, name)
            if isinstance(v, bool) or not isinstance(v, (int, np.integer)):
                raise ConfigError(f"{name} must be an integer, got {v!r}")
            object.__setattr__(self, name, int(v))
        if not (0 <= self.detected_X <= self.passed_slit <= self.emitted):
            raise ConfigError(
                f"counts must satisfy 0 <= detected_X <= passed_slit <= emitted, got "
                f"{self.detected_X}, {self.passed_slit}, {self.emitted}"
            )

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, doc: dict) -> "ExperimentCounts":
        try:
            return cls(doc["mode"], doc["emitted"], doc["passed_slit"], doc["detected_X"])
        except (KeyError, TypeError) as exc:
            raise DecodeError(f"malformed counts record: {exc!r}") from None


def run_experiment(cfg: SourceConfig, mode: str) -> ExperimentCounts:
    """Emit documents until ``cfg.N`` pass the slit, and count detections.

    Relevance and detection are independent Bernoulli draws per document,
    so the number of emissions is ``N`` plus a negative binomial number of
    blocked documents and the detections are binomial.  Each mode draws
    from its own generator seeded with ``(cfg.seed, mode index)``.
    """
    if mode not in MODES:
        raise ConfigError(f"unknown mode {mode!r}; expected one of {MODES}")
    rng = np.random.default_rng([check_seed(cfg.seed), MODES.index(mode)])
    N = cfg.N
    if mode == "no_filter":
        emitted, p_detect = N, cfg.p_detect_unfiltered
    else:
        p_pass = cfg.pR if mode == "filter_R" else 1.0 - cfg.pR
        if p_pass <= 0.0:
            raise StarvationError(f"no document can pass the {mode} slit (pass probability 0)")
        if N / p_pass > 10 * MAX_EMISSIONS:
            raise StarvationError(f"{mode} would need about {N / p_pass:.3g} emissions to pass {N}")
        blocked = int(rng.negative_binomial(N, p_pass)) if p_pass < 1.0 else 0
        emitted = N + blocked
        if emitted > MAX_EMISSIONS:
            raise StarvationError(f"{mode} did not pass {N} documents within {MAX_EMISSIONS} emissions")
        p_detect = cfg.pX_given_R if mode == "filter_R" else cfg.pX_given_notR
    detected = int(rng.binomial(N, p_detect))
    return ExperimentCounts(mode, emitted, N, detected)


def run_all(cfg: SourceConfig) -> tuple[ExperimentCounts, ExperimentCounts, ExperimentCounts]:
    return tuple(run_experiment(cfg, m) for m in MODES)


class StandardErrors(NamedTuple):
    pX: float
    pX_given_R: float
    pX_given_notR: float
    pR: float


class StatsEstimate(NamedTuple):
    stats: MelucciStats
    se: StandardErrors


def binomial_estimate(successes: int, trials: int) -> tuple[float, float]:
    """Relative frequency and its binomial standard error ``sqrt(p(1-p)/n)``."""
    if trials <= 0:
        raise ZeroCount("no trials: the frequency is undefined")
    p = successes / trials
    return p, math.sqrt(p * (1.0 - p) / trials)


def estimate_stats(c_R: ExperimentCounts, c_notR: ExperimentCounts, c_none: ExperimentCounts) -> StatsEstimate:
    """Relative frequencies from the three runs, each with its standard error.

    ``pR`` is the pass rate of the ``filter_R`` run.
    """
    got = (c_R.mode, c_notR.mode, c_none.mode)
    if got != MODES:
        raise ModeMismatch(f"expected counts for modes {MODES} in that order, got {got}")
    for c in (c_R, c_notR, c_none):
        if c.passed_slit == 0:
            raise ZeroCount(f"{c.mode} run passed no documents")
    pXR, seR = binomial_estimate(c_R.detected_X, c_R.passed_slit)
    pXnR, senR = binomial_estimate(c_notR.detected_X, c_notR.passed_slit)
    pX, seX = binomial_estimate(c_none.detected_X, c_none.passed_slit)
    pR, sepR = binomial_estimate(c_R.passed_slit, c_R.emitted)
    return StatsEstimate(MelucciStats(pX, pXR, pXnR, pR), StandardErrors(seX, seR, senR, sepR))


def invariant_estimate(est: StatsEstimate) -> tuple[float, float]:
    """Estimated invariant and its delta-method standard error."""
    A = accardi_invariant(est.stats)
    return A, accardi_invariant_se(est.stats, est.se.pX, est.se.pX_given_R, est.se.pX_given_notR)


def counts_to_json(counts) -> str:
    return json.dumps([c.to_dict() for c in counts], separators=(",", ":")) + "\n"


def counts_from_json(text: str) -> list[ExperimentCounts]:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DecodeError(f"counts are not valid JSON: {exc}") from None
    if isinstance(doc, dict):
        doc = doc.get("counts", doc)
    if not isinstance(doc, list):
        raise DecodeError("counts must be a JSON list of records")
    return [ExperimentCounts.from_dict(d) for d in doc]
