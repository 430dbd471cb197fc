import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from reality_forge.errors import CycleError, DecodeError, DimensionMismatch, EmptySubspace, MaskViolation
from reality_forge.rota import (
    Dag,
    TemplateMatrix,
    algebra_closure,
    is_closed_algebra,
    propagate,
    reflexive_transitive_closure,
    spatialize,
    subspace_from_json,
    template_matrix,
)

from rota_oracle import POSET_COUNTS, closed_dags, mask_of


def E(m, j, k):
    M = np.zeros((m, m))
    M[j, k] = 1.0
    return M


@st.composite
def dags(draw, max_m=5):
    m = draw(st.integers(1, max_m))
    perm = draw(st.permutations(range(m)))
    edges = [(perm[j], perm[k]) for j in range(m) for k in range(j + 1, m) if draw(st.booleans())]
    return Dag(m, edges)


@st.composite
def masks(draw, max_m=5):
    m = draw(st.integers(1, max_m))
    bits = draw(st.lists(st.booleans(), min_size=m * m, max_size=m * m))
    M = np.array(bits).reshape(m, m) | np.eye(m, dtype=bool)
    return TemplateMatrix(M)


# -- DAG ---------------------------------------------------------------------


def test_cycle_detected_with_path():
    with pytest.raises(CycleError) as exc:
        Dag(3, [(0, 1), (1, 2), (2, 0)])
    assert "0 -> 1 -> 2 -> 0" in str(exc.value)
    with pytest.raises(CycleError):
        Dag(2, [(1, 1)])


def test_bad_dag_input():
    with pytest.raises(DecodeError):
        Dag(2, [(0, 5)])
    with pytest.raises(DecodeError):
        Dag(0)
    with pytest.raises(DecodeError):
        Dag.from_dict({"edges": []})


def test_dag_json_round_trip():
    d = Dag(4, [(0, 1), (2, 3), (1, 3)])
    assert Dag.from_dict(json.loads(json.dumps(d.to_dict()))) == d


# -- templates ---------------------------------------------------------------


def test_one_arrow_pattern():
    assert template_matrix(Dag(2, [(0, 1)])).pattern() == [["*", "*"], ["0", "*"]]


def test_single_vertex():
    assert template_matrix(Dag(1)).pattern() == [["*"]]


def test_chain_template():
    t = template_matrix(Dag(3, [(0, 1), (1, 2)]))
    assert t.pattern() == [["*", "*", "0"], ["0", "*", "*"], ["0", "0", "*"]]
    assert not is_closed_algebra(t)
    assert algebra_closure(t).pattern() == [["*", "*", "*"], ["0", "*", "*"], ["0", "0", "*"]]


def test_closedness_examples():
    assert is_closed_algebra(template_matrix(Dag(2, [(0, 1)])))
    assert is_closed_algebra(template_matrix(Dag(4)))


def test_basis_spans_mask():
    t = template_matrix(Dag(3, [(0, 2)]))
    B = t.basis()
    assert len(B) == 4
    assert np.array_equal(sum(B) > 0, t.mask)


@settings(max_examples=100, deadline=None)
@given(masks(), st.integers(0, 2**32 - 1))
def test_closedness_matches_numeric_products(t, seed):
    rng = np.random.default_rng(seed)
    conforming = lambda: np.where(t.mask, rng.uniform(0.5, 2.0, t.mask.shape), 0.0)
    # positive entries cannot cancel, so the product support is the boolean product
    P = conforming() @ conforming()
    assert is_closed_algebra(t) == bool(np.all((np.abs(P) <= 1e-12) | t.mask))


@given(masks(), masks())
def test_closure_operator(a, b):
    ca = algebra_closure(a)
    assert np.all(ca.mask >= a.mask)  # extensive
    assert algebra_closure(ca) == ca  # idempotent
    assert is_closed_algebra(ca)
    if a.m == b.m:
        joint = TemplateMatrix(a.mask | b.mask)
        assert np.all(algebra_closure(joint).mask >= ca.mask)  # monotone


@given(masks())
def test_closure_is_least(t):
    # any closed mask containing t contains its closure; the full mask is one
    c = algebra_closure(t)
    for j, k in zip(*np.nonzero(c.mask & ~t.mask)):
        smaller = np.array(c.mask)
        smaller[j, k] = False
        assert not (is_closed_algebra(TemplateMatrix(smaller)) and np.all(smaller >= t.mask))


# -- propagate ---------------------------------------------------------------


def test_propagate_examples():
    t = template_matrix(Dag(2, [(0, 1)]))
    W = np.array([[1.0, 2.0], [0.0, 1.0]])
    assert np.array_equal(propagate(t, W, [1, 1]), [3.0, 1.0])
    assert np.array_equal(propagate(t, np.eye(2), [0.3, -2.0], layers=4), [0.3, -2.0])
    assert np.array_equal(propagate(t, W, [0, 0], layers=3), [0.0, 0.0])
    assert np.array_equal(propagate(t, W, [1, 1], layers=2), W @ W @ [1, 1])


def test_propagate_errors():
    t = template_matrix(Dag(2, [(0, 1)]))
    with pytest.raises(MaskViolation):
        propagate(t, [[1.0, 0.0], [0.5, 1.0]], [1, 1])
    with pytest.raises(DimensionMismatch):
        propagate(t, np.eye(3), [1, 1])
    with pytest.raises(DimensionMismatch):
        propagate(t, np.eye(2), [1, 1, 1])


@given(dags(), st.integers(0, 2**32 - 1), st.floats(-3, 3), st.floats(-3, 3), st.integers(0, 3))
def test_propagate_linear(d, seed, alpha, beta, layers):
    t = template_matrix(d)
    rng = np.random.default_rng(seed)
    W = np.where(t.mask, rng.normal(size=t.mask.shape), 0.0)
    u, v = rng.normal(size=d.m), rng.normal(size=d.m)
    lhs = propagate(t, W, alpha * u + beta * v, layers)
    rhs = alpha * propagate(t, W, u, layers) + beta * propagate(t, W, v, layers)
    assert np.allclose(lhs, rhs, atol=1e-9)


# -- spatialize --------------------------------------------------------------


def test_spatialize_one_arrow():
    s = spatialize([E(2, 0, 0), E(2, 0, 1), E(2, 1, 1)])
    assert s.topology.n_points == 2
    assert s.topology.leq.tolist() == [[True, True], [False, True]]
    assert s.dag == Dag(2, [(0, 1)])
    assert s.topology.open_sets() == [frozenset(), frozenset({1}), frozenset({0, 1})]


def test_spatialize_full_algebra_collapses():
    s = spatialize([E(3, j, k) for j in range(3) for k in range(3)])
    assert s.topology.n_points == 1 and s.dag is None
    assert s.cycles == ((0, 1, 2),)


def test_spatialize_diagonal_discrete():
    s = spatialize([np.diag([1.0, 2.0, 3.0])])
    assert s.dag == Dag(3)
    assert len(s.topology.open_sets()) == 8


def test_spatialize_threshold():
    M = np.eye(2)
    M[0, 1] = 1e-13
    assert spatialize([M]).dag == Dag(2)


def test_spatialize_errors():
    with pytest.raises(EmptySubspace):
        spatialize([])
    with pytest.raises(DimensionMismatch):
        spatialize([np.eye(2), np.eye(3)])


def test_subspace_json():
    mats = subspace_from_json('{"matrices": [[[1, 0], [0, 1]]]}')
    assert np.array_equal(mats[0], np.eye(2))
    with pytest.raises(DecodeError):
        subspace_from_json('"x"')


@pytest.mark.parametrize("m", [1, 2, 3, 4])
def test_round_trip_small(m):
    found = closed_dags(m)
    assert len(found) == POSET_COUNTS[m]
    for edges in found:
        d = Dag(m, edges)
        t = template_matrix(d)
        assert is_closed_algebra(t)
        s = spatialize(t.basis())
        assert s.dag is not None
        assert np.array_equal(reflexive_transitive_closure(s.dag), t.mask)
        assert np.array_equal(mask_of(m, edges), t.mask)


@given(dags())
def test_spatialize_recovers_cover_of_any_dag(d):
    s = spatialize(template_matrix(d).basis())
    assert np.array_equal(reflexive_transitive_closure(s.dag), reflexive_transitive_closure(d))
    # the recovered DAG is a transitive reduction: no edge is implied by others
    for e in s.dag.edges:
        rest = Dag(d.m, s.dag.edges - {e})
        assert not reflexive_transitive_closure(rest)[e]


@given(dags())
def test_open_sets_are_up_sets(d):
    topo = spatialize(template_matrix(d).basis()).topology
    opens = set(topo.open_sets())
    assert frozenset() in opens and frozenset(range(topo.n_points)) in opens
    for U in opens:
        for V in opens:
            assert U | V in opens and U & V in opens
