import numpy as np
import pytest
from hypothesis import given, strategies as st

from reality_forge.errors import ConfigError, DecodeError, ModeMismatch, StarvationError, ZeroCount
from reality_forge.melucci import (
    MODES,
    PRESETS,
    ExperimentCounts,
    SourceConfig,
    binomial_estimate,
    counts_from_json,
    counts_to_json,
    estimate_stats,
    invariant_estimate,
    run_all,
    run_experiment,
)
from reality_forge.probcheck import NONCLASSICAL, classify_accardi, total_probability_residual


def test_classical_run_recovers_pr():
    cfg = SourceConfig(pR=0.3, N=100_000, seed=1)
    A, se = invariant_estimate(estimate_stats(*run_all(cfg)))
    assert abs(A - 0.3) < 3 * se


def test_interference_preset():
    cfg = PRESETS["interference"]
    assert cfg.expected_invariant == pytest.approx(7 / 6)
    A, se = invariant_estimate(estimate_stats(*run_all(cfg)))
    assert abs(A - 7 / 6) < 3 * se
    assert classify_accardi(A) == NONCLASSICAL


def test_residual_within_combined_se():
    est = estimate_stats(*run_all(SourceConfig(pR=0.6, seed=4)))
    s, e = est.stats, est.se
    # residual = pX - a pR - b (1 - pR); independent estimates, delta method
    var = e.pX**2 + (s.pR * e.pX_given_R) ** 2 + ((1 - s.pR) * e.pX_given_notR) ** 2
    var += ((s.pX_given_R - s.pX_given_notR) * e.pR) ** 2
    assert abs(total_probability_residual(s)) < 3 * np.sqrt(var)


def test_calibration_coverage():
    hits = 0
    for seed in range(200):
        cfg = SourceConfig(pR=0.4, pX_given_R=0.7, pX_given_notR=0.1, N=10_000, seed=seed)
        A, se = invariant_estimate(estimate_stats(*run_all(cfg)))
        hits += abs(A - 0.4) <= 3 * se
    assert hits >= 198


def test_counts_invariants():
    for c in run_all(SourceConfig(pR=0.2, N=5000, seed=3)):
        assert 0 <= c.detected_X <= c.passed_slit <= c.emitted
        assert c.passed_slit == 5000
    with pytest.raises(ConfigError):
        ExperimentCounts("filter_R", 3, 5, 1)


def test_no_filter_emits_exactly_n():
    c = run_experiment(SourceConfig(N=1234), "no_filter")
    assert c.emitted == c.passed_slit == 1234


def test_deterministic():
    cfg = SourceConfig(seed=99, N=5000)
    for mode in MODES:
        assert run_experiment(cfg, mode) == run_experiment(cfg, mode)
    assert run_all(cfg) != run_all(SourceConfig(seed=100, N=5000))


def test_starvation():
    with pytest.raises(StarvationError):
        run_experiment(SourceConfig(pR=1.0), "filter_notR")
    with pytest.raises(StarvationError):
        run_experiment(SourceConfig(pR=0.0), "filter_R")
    with pytest.raises(StarvationError):
        run_experiment(SourceConfig(pR=1e-9, N=10**6), "filter_R")


@pytest.mark.parametrize(
    "kw", [{"pR": 1.5}, {"pX_given_R": -0.1}, {"N": 0}, {"delta": 0.6}, {"delta": float("nan")}]
)
def test_config_errors(kw):
    with pytest.raises(ConfigError):
        SourceConfig(**kw)


@given(st.floats(0, 1), st.floats(0, 1), st.floats(0, 1), st.floats(-1, 1))
def test_delta_never_leaves_unit_interval(pR, a, b, delta):
    try:
        cfg = SourceConfig(pR, a, b, delta)
    except ConfigError:
        return
    assert 0.0 <= cfg.p_detect_unfiltered <= 1.0


def test_binomial_estimate():
    assert binomial_estimate(2, 4) == (0.5, 0.25)
    with pytest.raises(ZeroCount):
        binomial_estimate(0, 0)


def test_estimate_errors():
    c = run_all(SourceConfig(N=100))
    with pytest.raises(ModeMismatch):
        estimate_stats(c[1], c[0], c[2])
    with pytest.raises(ZeroCount):
        estimate_stats(ExperimentCounts("filter_R", 5, 0, 0), c[1], c[2])


def test_counts_json_round_trip():
    counts = run_all(SourceConfig(N=500))
    assert tuple(counts_from_json(counts_to_json(counts))) == counts
    with pytest.raises(DecodeError):
        counts_from_json("[{}]")


def test_unknown_config_key():
    with pytest.raises(ConfigError):
        SourceConfig.from_dict({"pR": 0.5, "p_r": 0.5})
