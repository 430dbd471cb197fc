import itertools
import json

import numpy as np
import pytest
from hypothesis import assume, given, strategies as st
from scipy.optimize import linprog

from reality_forge.errors import DegenerateDenominator, InconsistentInput, RangeError, ScaleError
from reality_forge.probcheck import (
    CLASSICAL,
    NONCLASSICAL,
    DichotomicTriple,
    MelucciStats,
    ObservableFamily,
    accardi_fedullo_classical,
    accardi_invariant,
    accardi_invariant_se,
    bell_sum,
    classify_accardi,
    kolmogorov_feasible,
    total_probability_residual,
    verdict_report,
    witness_residual,
)

prob = st.floats(0.0, 1.0)


# -- bell_sum ----------------------------------------------------------------


@pytest.mark.parametrize(
    "args, total, ok",
    [((1, 1, 1), 3.0, True), ((0.25, 0.25, 0.25), 0.75, False), ((0.5, 0.5, 0), 1.0, True)],
)
def test_bell_examples(args, total, ok):
    r = bell_sum(*args)
    assert r.sum == total and r.classical_consistent is ok


def test_bell_range():
    with pytest.raises(RangeError):
        bell_sum(1.2, 0, 0)


# -- Accardi-Fedullo ---------------------------------------------------------


@pytest.mark.parametrize(
    "p, q, r, expected",
    [(0.5, 0.5, 0.5, True), (0.25, 0.25, 0.25, False), (0.3, 0.8, 0.1, True)],
)
def test_af_examples_agree_with_lp(p, q, r, expected):
    t = DichotomicTriple(p, q, r)
    assert accardi_fedullo_classical(t) is expected
    assert kolmogorov_feasible(t.to_family()).feasible is expected


def test_triple_range():
    with pytest.raises(RangeError):
        DichotomicTriple(0.5, -0.1, 0.5)


def af_margin(p, q, r):
    return min(r - abs(p + q - 1), 1 - abs(p - q) - r)


@given(prob, prob, prob)
def test_af_matches_lp(p, q, r):
    assume(abs(af_margin(p, q, r)) > 1e-9)
    t = DichotomicTriple(p, q, r)
    res = kolmogorov_feasible(t.to_family())
    assert res.feasible == accardi_fedullo_classical(t)
    if res.feasible:
        assert witness_residual(t.to_family(), res.witness) <= 1e-9


# -- LP oracle ---------------------------------------------------------------


def scipy_feasible(f):
    atoms = list(itertools.product(range(f.n), repeat=f.T))
    rows, rhs = [[1.0] * len(atoms)], [1.0]
    for a in range(f.T):
        for i in range(f.n):
            rows.append([float(x[a] == i) for x in atoms])
            rhs.append(f.marg[a, i])
    for a, b in f.pairs():
        for i in range(f.n):
            for j in range(f.n):
                rows.append([float(x[a] == i and x[b] == j) for x in atoms])
                rhs.append(f.cond[a][b][i, j] * f.marg[a, i])
    res = linprog(np.zeros(len(atoms)), A_eq=rows, b_eq=rhs, bounds=(0, None), method="highs")
    return res.status == 0


def random_family(rng, T, n, feasible_bias):
    """Family from a random joint (feasible) or with perturbed conditionals."""
    joint = rng.dirichlet(np.ones(n**T)).reshape((n,) * T)
    marg = [joint.sum(axis=tuple(k for k in range(T) if k != a)) for a in range(T)]
    cond = [[None] * T for _ in range(T)]
    for a, b in itertools.permutations(range(T), 2):
        if rng.random() < 0.7:
            pair = joint.sum(axis=tuple(k for k in range(T) if k not in (a, b)))
            if a > b:
                pair = pair.T
            c = pair / pair.sum(axis=1, keepdims=True)
            if not feasible_bias:
                c = 0.5 * c + 0.5 * rng.dirichlet(np.ones(n), size=n)
            cond[a][b] = c
    return ObservableFamily(T, n, cond, marg)


@pytest.mark.parametrize("seed", range(40))
def test_lp_matches_scipy(seed):
    rng = np.random.default_rng(seed)
    T, n = int(rng.integers(2, 4)), int(rng.integers(2, 4))
    f = random_family(rng, T, n, feasible_bias=seed % 2 == 0)
    res = kolmogorov_feasible(f)
    assert res.feasible == scipy_feasible(f)
    if seed % 2 == 0:
        assert res.feasible
    if res.feasible:
        assert witness_residual(f, res.witness) <= 1e-9
        assert np.all(res.witness >= 0)


def test_single_observable():
    f = ObservableFamily(1, 3, [[None]], [[0.2, 0.3, 0.5]])
    res = kolmogorov_feasible(f)
    assert res.feasible
    assert np.allclose(res.witness, [0.2, 0.3, 0.5], atol=1e-12)


def test_family_validation():
    with pytest.raises(InconsistentInput):
        ObservableFamily(2, 2, [[None, [[0.5, 0.4], [0.5, 0.5]]], [None, None]], [[0.5, 0.5]] * 2)
    with pytest.raises(InconsistentInput):
        ObservableFamily(1, 2, [[None]], [[0.5, 0.6]])
    with pytest.raises(RangeError):
        ObservableFamily(1, 2, [[None]], [[1.5, -0.5]])


def test_scale_error():
    f = ObservableFamily(21, 2, [[None] * 21 for _ in range(21)], [[0.5, 0.5]] * 21)
    with pytest.raises(ScaleError):
        kolmogorov_feasible(f)


def test_family_json_round_trip():
    f = DichotomicTriple(0.3, 0.6, 0.4).to_family()
    g = ObservableFamily.from_json(json.dumps(f.to_dict()))
    assert g.to_dict() == f.to_dict()


# -- Accardi invariant -------------------------------------------------------


def test_invariant_examples():
    assert accardi_invariant(MelucciStats(0.5, 0.8, 0.2, 0.5)) == pytest.approx(0.5, abs=1e-15)
    A = accardi_invariant(MelucciStats(0.9, 0.8, 0.2, 0.5))
    assert A == pytest.approx(7 / 6, abs=1e-14)
    assert classify_accardi(A) == NONCLASSICAL
    with pytest.raises(DegenerateDenominator):
        accardi_invariant(MelucciStats(0.5, 0.4, 0.4, 0.5))


@pytest.mark.parametrize("A, verdict", [(0.5, CLASSICAL), (1.0, CLASSICAL), (0.0, CLASSICAL),
                                        (7 / 6, NONCLASSICAL), (-0.01, NONCLASSICAL)])
def test_classify_examples(A, verdict):
    assert classify_accardi(A) == verdict


def test_classify_rejects_nonfinite():
    with pytest.raises(RangeError):
        classify_accardi(float("nan"))


@given(st.floats(-3, 3), st.floats(0, 2), st.floats(0, 2))
def test_classify_monotone_in_tol(A, t1, t2):
    lo, hi = sorted((t1, t2))
    if classify_accardi(A, lo) == CLASSICAL:
        assert classify_accardi(A, hi) == CLASSICAL


@given(prob, prob, prob)
def test_ltp_consistent_invariant_is_pr(pR, a, b):
    assume(abs(a - b) > 1e-3)
    s = MelucciStats(a * pR + b * (1 - pR), a, b, pR)
    assert accardi_invariant(s) == pytest.approx(pR, abs=1e-12)
    assert abs(total_probability_residual(s)) < 1e-15


def test_residual_examples():
    assert total_probability_residual(MelucciStats(0.9, 0.8, 0.2, 0.5)) == pytest.approx(0.4, abs=1e-15)
    assert total_probability_residual(MelucciStats(0, 0, 0, 0.3)) == 0.0


def test_invariant_se_matches_numerical_gradient():
    s = MelucciStats(0.55, 0.8, 0.3, 0.5)
    se = (0.01, 0.02, 0.03)
    h = 1e-6
    base = accardi_invariant(s)
    grads = []
    for name in ("pX", "pX_given_R", "pX_given_notR"):
        bumped = MelucciStats(**{**s.__dict__, name: getattr(s, name) + h})
        grads.append((accardi_invariant(bumped) - base) / h)
    expected = np.sqrt(sum((g * e) ** 2 for g, e in zip(grads, se)))
    assert accardi_invariant_se(s, *se) == pytest.approx(expected, rel=1e-5)


def test_verdict_report_shape():
    r = verdict_report("bell", {"p_ab": 0.25}, 0.75, "violated")
    assert set(r) == {"test", "inputs", "value", "verdict"}
