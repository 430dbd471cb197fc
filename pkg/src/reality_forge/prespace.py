"""Discrete pre-space: click distances, transversal layers and the skeleton.

Points are clicks, addressed by :class:`PointRef` ``(stream_index, seq)``.
Layer ``k`` holds every ``k``-th click.  The skeleton keeps the threads
(consecutive clicks of a stream) and adds nearest-neighbor links between
clicks of different streams in the same or adjacent layers.
"""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np
import scipy.sparse as sp
from sklearn.base import BaseEstimator, TransformerMixin

from ._validation import check_positive_int
from .clicklog import Click, ClickstreamCollection
from .errors import ConfigError, DecodeError

SCHEMES = ("cosine", "jaccard")
EDGE_KINDS = ("thread", "neighbor")


class PointRef(NamedTuple):
    stream_index: int
    seq: int


@dataclass(frozen=True)
class Layer:
    label: int
    points: tuple[PointRef, ...]


class Edge(NamedTuple):
    a: PointRef
    b: PointRef
    length: float
    kind: str


def _check_scheme(scheme):
    if scheme not in SCHEMES:
        raise ConfigError(f"unknown distance scheme {scheme!r}; expected one of {SCHEMES}")


def _cosine_from_counts(dot: int, na2: int, nb2: int) -> float:
    if na2 == 0 and nb2 == 0:
        return 0.0
    if na2 == 0 or nb2 == 0:
        return 1.0
    # Cauchy-Schwarz equality in exact integers: bags equal up to scale
    if dot * dot == na2 * nb2:
        return 0.0
    return min(1.0, max(0.0, 1.0 - dot / math.sqrt(na2 * nb2)))


def _jaccard_from_counts(inter: int, size_a: int, size_b: int) -> float:
    union = size_a + size_b - inter
    if union == 0:
        return 0.0
    return 1.0 - inter / union


def bag_distance(a: Counter, b: Counter, scheme: str = "cosine") -> float:
    _check_scheme(scheme)
    if scheme == "cosine":
        dot = sum(v * b[t] for t, v in a.items() if t in b)
        return _cosine_from_counts(
            dot, sum(v * v for v in a.values()), sum(v * v for v in b.values())
        )
    inter = len(a.keys() & b.keys())
    return _jaccard_from_counts(inter, len(a), len(b))


def click_distance(a: Click, b: Click, scheme: str = "cosine") -> float:
    """Dissimilarity of two clicks in ``[0, 1]``.

    Bags are the query and response terms pooled.  ``cosine`` is one minus
    the cosine of the count vectors; ``jaccard`` is one minus the Jaccard
    index of the term sets.  Two empty bags are at distance 0, an empty and
    a nonempty bag at distance 1.  Not a metric: the triangle inequality
    can fail for ``cosine``.
    """
    return bag_distance(a.bag(), b.bag(), scheme)


class _BagMatrix:
    """Sparse term-count rows for every click of a collection."""

    def __init__(self, collection: ClickstreamCollection, scheme: str):
        self.scheme = scheme
        vocab = collection.vocabulary
        rows, cols, vals = [], [], []
        self.row_of: dict[PointRef, int] = {}
        r = 0
        for i, click in collection.clicks():
            self.row_of[PointRef(i, click.seq)] = r
            for term, count in click.bag().items():
                rows.append(r)
                cols.append(vocab[term])
                vals.append(count if scheme == "cosine" else 1)
            r += 1
        self.X = sp.csr_matrix(
            (np.asarray(vals, dtype=np.int64), (rows, cols)), shape=(r, max(len(vocab), 1))
        )
        self.sq = np.asarray(self.X.multiply(self.X).sum(axis=1)).ravel().astype(np.int64)

    def block(self, left: Sequence[PointRef], right: Sequence[PointRef]) -> np.ndarray:
        li = [self.row_of[p] for p in left]
        ri = [self.row_of[p] for p in right]
        G = (self.X[li] @ self.X[ri].T).toarray().astype(np.int64)
        a = self.sq[li][:, None]
        b = self.sq[ri][None, :]
        if self.scheme == "jaccard":
            union = a + b - G
            with np.errstate(invalid="ignore", divide="ignore"):
                D = 1.0 - G / union
            D[union == 0] = 0.0
            return D
        prod = a * b
        with np.errstate(invalid="ignore", divide="ignore"):
            D = 1.0 - G / np.sqrt(prod.astype(float))
        np.clip(D, 0.0, 1.0, out=D)
        # exact zero for bags equal up to scale; integer check avoids float fuzz
        near = np.argwhere(D < 1e-9)
        for u, v in near:
            g, pa, pb = int(G[u, v]), int(a[u, 0]), int(b[0, v])
            if g * g == pa * pb:
                D[u, v] = 0.0
        D[(a == 0) | (b == 0)] = 1.0
        D[(a == 0) & (b == 0)] = 0.0
        return D


def build_layers(collection: ClickstreamCollection) -> list[Layer]:
    """Group clicks by position: layer ``k`` holds every stream's ``k``-th click."""
    depth = max((len(s) for s in collection), default=0)
    return [
        Layer(k, tuple(PointRef(i, k) for i, s in enumerate(collection) if len(s) > k))
        for k in range(depth)
    ]


@dataclass(frozen=True, eq=False)
class LayeredSkeleton:
    """Layers plus an undirected, canonically sorted edge list.

    Each edge is stored once with ``a < b``.  ``points`` lists every point in
    ``PointRef`` order; ``edge_index``/``lengths``/``is_thread`` are array
    views of the edges against that ordering.
    """

    layers: tuple[Layer, ...]
    edges: tuple[Edge, ...]
    scheme: str = "cosine"
    n_neighbors: int = 0
    points: tuple[PointRef, ...] = field(init=False)
    index: dict = field(init=False, repr=False)
    edge_index: np.ndarray = field(init=False, repr=False)
    lengths: np.ndarray = field(init=False, repr=False)
    is_thread: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        pts = tuple(sorted(p for layer in self.layers for p in layer.points))
        index = {p: k for k, p in enumerate(pts)}
        ei = np.array([[index[e.a], index[e.b]] for e in self.edges], dtype=np.intp).reshape(-1, 2)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "index", index)
        object.__setattr__(self, "edge_index", ei)
        object.__setattr__(self, "lengths", np.array([e.length for e in self.edges], dtype=float))
        object.__setattr__(
            self, "is_thread", np.array([e.kind == "thread" for e in self.edges], dtype=bool)
        )

    @property
    def n_points(self) -> int:
        return len(self.points)

    def layer_labels(self) -> np.ndarray:
        return np.array([p.seq for p in self.points], dtype=float)

    def __eq__(self, other):
        if not isinstance(other, LayeredSkeleton):
            return NotImplemented
        return self.layers == other.layers and self.edges == other.edges

    __hash__ = None

    def to_json(self) -> str:
        return skeleton_to_json(self)


def _canonical(p: PointRef, q: PointRef) -> tuple[PointRef, PointRef]:
    return (p, q) if p < q else (q, p)


def build_skeleton(
    collection: ClickstreamCollection, scheme: str = "cosine", K: int = 8
) -> LayeredSkeleton:
    """Thread edges plus each point's ``K`` nearest cross-stream neighbors.

    Neighbor candidates are the points of the same and the two adjacent
    layers, minus the point itself and its own stream (whose members there
    are exactly its thread partners).  Ties are broken by ``(layer,
    stream_index)``.  Neighbor relations are symmetrized by union.
    """
    _check_scheme(scheme)
    if isinstance(K, bool) or not isinstance(K, (int, np.integer)) or K < 0:
        raise ConfigError(f"K must be a nonnegative integer, got {K!r}")
    layers = build_layers(collection)
    if not layers:
        return LayeredSkeleton((), (), scheme, int(K))
    bags = _BagMatrix(collection, scheme)
    edges: dict[tuple[PointRef, PointRef], Edge] = {}

    for layer in layers[:-1]:
        for p in layer.points:
            q = PointRef(p.stream_index, p.seq + 1)
            if q in bags.row_of:
                d = float(bags.block([p], [q])[0, 0])
                edges[(p, q)] = Edge(p, q, d, "thread")

    if K > 0:
        for L, layer in enumerate(layers):
            cands = [
                q
                for M in (L - 1, L, L + 1)
                if 0 <= M < len(layers)
                for q in layers[M].points
            ]
            if not cands:
                continue
            D = bags.block(layer.points, cands)
            for r, p in enumerate(layer.points):
                ranked = sorted(
                    (D[r, c], q.seq, q.stream_index, c)
                    for c, q in enumerate(cands)
                    if q.stream_index != p.stream_index
                )
                for d, _, _, c in ranked[:K]:
                    key = _canonical(p, cands[c])
                    if key not in edges:
                        edges[key] = Edge(key[0], key[1], float(d), "neighbor")

    ordered = tuple(edges[k] for k in sorted(edges))
    return LayeredSkeleton(tuple(layers), ordered, scheme, int(K))


class SkeletonBuilder(TransformerMixin, BaseEstimator):
    """Estimator wrapper around :func:`build_skeleton`.

    ``fit`` stores the skeleton of the training collection in
    ``skeleton_``; ``transform`` builds the skeleton of any collection with
    the same parameters (nothing is learned across collections).
    """

    def __init__(self, scheme="cosine", n_neighbors=8):
        self.scheme = scheme
        self.n_neighbors = n_neighbors

    def _check(self, X):
        if not isinstance(X, ClickstreamCollection):
            raise TypeError(f"expected a ClickstreamCollection, got {type(X).__name__}")
        _check_scheme(self.scheme)
        check_positive_int(self.n_neighbors, "n_neighbors", minimum=0)

    def fit(self, X, y=None):
        self._check(X)
        self.skeleton_ = build_skeleton(X, self.scheme, self.n_neighbors)
        self.n_points_ = self.skeleton_.n_points
        return self

    def transform(self, X):
        self._check(X)
        return build_skeleton(X, self.scheme, self.n_neighbors)

    def fit_transform(self, X, y=None, **fit_params):
        return self.fit(X).skeleton_


# --------------------------------------------------------------------------
# serialization


def skeleton_to_json(s: LayeredSkeleton) -> str:
    """JSON text with edge lengths printed to 17 significant digits."""
    head = json.dumps(
        {
            "scheme": s.scheme,
            "n_neighbors": s.n_neighbors,
            "layers": [
                {"label": layer.label, "points": [[p.stream_index, p.seq] for p in layer.points]}
                for layer in s.layers
            ],
        },
        separators=(",", ":"),
    )
    rows = [
        '{"i_stream":%d,"i_seq":%d,"j_stream":%d,"j_seq":%d,"length":%s,"kind":"%s"}'
        % (e.a.stream_index, e.a.seq, e.b.stream_index, e.b.seq, format(e.length, ".17g"), e.kind)
        for e in s.edges
    ]
    return head[:-1] + ',"edges":[' + ",\n".join(rows) + "]}\n"


def skeleton_from_json(text: str) -> LayeredSkeleton:
    try:
        doc = json.loads(text)
        layers = tuple(
            Layer(int(layer["label"]), tuple(PointRef(int(a), int(b)) for a, b in layer["points"]))
            for layer in doc["layers"]
        )
        edges = tuple(
            Edge(
                PointRef(int(e["i_stream"]), int(e["i_seq"])),
                PointRef(int(e["j_stream"]), int(e["j_seq"])),
                float(e["length"]),
                e["kind"],
            )
            for e in doc["edges"]
        )
        scheme = doc.get("scheme", "cosine")
        k = int(doc.get("n_neighbors", 0))
    except (KeyError, TypeError, ValueError) as exc:
        raise DecodeError(f"malformed skeleton document: {exc}") from None
    for e in edges:
        if e.kind not in EDGE_KINDS:
            raise DecodeError(f"unknown edge kind {e.kind!r}")
    known = {p for layer in layers for p in layer.points}
    for e in edges:
        if e.a not in known or e.b not in known:
            raise DecodeError(f"edge {e.a}-{e.b} references an unknown point")
    return LayeredSkeleton(layers, edges, scheme, k)
