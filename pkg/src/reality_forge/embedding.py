"""Projection of the skeleton into an (n+1)-dimensional spacetime.

Coordinate 0 is time, fixed to ``layer * time_scale``.  The ``n`` spatial
coordinates minimize a normalized edge stress plus a thread-continuity
penalty.  A random start is first pulled into shape by majorizing a
stress over skeleton path lengths, then refined by gradient descent with
Barzilai-Borwein steps and halving backtracking.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field
from typing import Mapping, NamedTuple

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import shortest_path
from scipy.spatial.distance import pdist, squareform
from sklearn.base import BaseEstimator, TransformerMixin

from ._validation import check_positive_int, check_positive_real, check_seed
from .errors import ConfigError, DecodeError, DimensionMismatch, EmptySkeletonError, MissingCoordError
from .prespace import LayeredSkeleton, PointRef


INIT_MODES = ("layered", "random")


@dataclass(frozen=True)
class EmbedParams:
    n: int = 2
    max_iters: int = 20000
    tol: float = 1e-10
    time_scale: float = 1.0
    temporal_stiffness: float = 0.1
    seed: int = 0
    n_init: int = 8
    warm_start: bool = True
    init: str = "layered"
    block_layers: int = 5

    def validate(self) -> "EmbedParams":
        check_positive_int(self.n, "n")
        check_positive_int(self.max_iters, "max_iters")
        check_positive_real(self.tol, "tol")
        check_positive_real(self.time_scale, "time_scale")
        check_positive_real(self.temporal_stiffness, "temporal_stiffness", allow_zero=True)
        check_seed(self.seed)
        check_positive_int(self.n_init, "n_init")
        if not isinstance(self.warm_start, bool):
            raise ConfigError("warm_start must be a boolean")
        if self.init not in INIT_MODES:
            raise ConfigError(f"init must be one of {INIT_MODES}, got {self.init!r}")
        check_positive_int(self.block_layers, "block_layers")
        return self


@dataclass(frozen=True, eq=False)
class SpacetimeEmbedding:
    points: tuple[PointRef, ...]
    coords: np.ndarray
    params: EmbedParams
    final_stress: float
    stress_history: tuple[float, ...] = field(default=(), repr=False)

    def __post_init__(self):
        self.coords.setflags(write=False)
        object.__setattr__(self, "_index", {p: k for k, p in enumerate(self.points)})

    def __getitem__(self, p: PointRef) -> np.ndarray:
        try:
            return self.coords[self._index[p]]
        except KeyError:
            raise MissingCoordError(f"no coordinates for {p}") from None

    def __contains__(self, p):
        return p in self._index

    def __len__(self):
        return len(self.points)

    @property
    def spatial(self) -> np.ndarray:
        return self.coords[:, 1:]

    def as_mapping(self) -> dict[PointRef, np.ndarray]:
        return {p: self.coords[k] for k, p in enumerate(self.points)}


def _coords_array(skeleton: LayeredSkeleton, coords) -> np.ndarray:
    if isinstance(coords, SpacetimeEmbedding):
        coords = coords.as_mapping() if coords.points != skeleton.points else coords.coords
    if isinstance(coords, Mapping):
        rows = []
        for p in skeleton.points:
            if p not in coords:
                raise MissingCoordError(f"no coordinates for {p}")
            rows.append(np.asarray(coords[p], dtype=float))
        if not rows:
            return np.zeros((0, 1))
        return np.vstack(rows)
    arr = np.asarray(coords, dtype=float)
    if arr.ndim != 2 or arr.shape[0] != skeleton.n_points:
        raise MissingCoordError(
            f"expected one coordinate row per skeleton point ({skeleton.n_points}), got shape {arr.shape}"
        )
    return arr


class _StressObjective:
    """Stress of the spatial block, with its gradient, over fixed edges."""

    def __init__(self, skeleton: LayeredSkeleton, temporal_stiffness: float):
        self.i = skeleton.edge_index[:, 0]
        self.j = skeleton.edge_index[:, 1]
        self.d = skeleton.lengths
        denom = float(np.sum(self.d**2))
        self.inv_norm = 1.0 / denom if denom > 0 else 1.0
        self.ti = self.i[skeleton.is_thread]
        self.tj = self.j[skeleton.is_thread]
        self.lam = temporal_stiffness
        self.n_points = skeleton.n_points

    def value(self, x: np.ndarray) -> float:
        diff = x[self.i] - x[self.j]
        r = np.sqrt(np.sum(diff * diff, axis=1))
        s = float(np.sum((r - self.d) ** 2)) * self.inv_norm
        if self.lam:
            td = x[self.tj] - x[self.ti]
            s += self.lam * float(np.sum(td * td))
        return s

    def gradient(self, x: np.ndarray) -> np.ndarray:
        diff = x[self.i] - x[self.j]
        r = np.sqrt(np.sum(diff * diff, axis=1))
        with np.errstate(invalid="ignore", divide="ignore"):
            coef = np.where(r > 0, 2.0 * (r - self.d) / r, 0.0) * self.inv_norm
        contrib = coef[:, None] * diff
        if self.lam:
            ti_contrib = 2.0 * self.lam * (x[self.ti] - x[self.tj])
        g = np.empty_like(x)
        # bincount sums in a fixed order, so the gradient is reproducible
        for c in range(x.shape[1]):
            col = np.bincount(self.i, weights=contrib[:, c], minlength=self.n_points)
            col -= np.bincount(self.j, weights=contrib[:, c], minlength=self.n_points)
            if self.lam:
                col += np.bincount(self.ti, weights=ti_contrib[:, c], minlength=self.n_points)
                col -= np.bincount(self.tj, weights=ti_contrib[:, c], minlength=self.n_points)
            g[:, c] = col
        return g


def stress(skeleton: LayeredSkeleton, coords, temporal_stiffness: float = 0.0) -> float:
    """Normalized edge stress plus thread-continuity penalty.

    ``sum_e (|x_i - x_j| - d_e)^2 / sum_e d_e^2 + lambda * sum_threads |x_{t+1} - x_t|^2``

    Norms are over the spatial block only (column 0, time, is ignored).
    ``coords`` may be an ``(N, n+1)`` array in ``skeleton.points`` order, a
    mapping from :class:`PointRef` to vectors, or a
    :class:`SpacetimeEmbedding`.
    """
    arr = _coords_array(skeleton, coords)
    if skeleton.n_points == 0:
        return 0.0
    obj = _StressObjective(skeleton, float(temporal_stiffness))
    return obj.value(np.ascontiguousarray(arr[:, 1:]))


WARM_START_MAX_POINTS = 4000
# normalized stress below this is an exact fit; relative improvement is
# meaningless there and the descent would creep on to max_iters
STRESS_FLOOR = 1e-14
SCREEN_ITERS = 1000


def _graph_majorization(skeleton: LayeredSkeleton, x: np.ndarray, max_iter: int = 300, tol: float = 1e-5):
    """Weighted stress majorization on all-pairs skeleton path lengths.

    Weights are ``1 / D_ij^2`` (the usual graph-drawing choice).  Pairs in
    different connected components get weight zero.  Only used to pull the
    random start into the right basin; the skeleton stress is minimized
    afterwards.
    """
    N = x.shape[0]
    W = sp.coo_matrix(
        (skeleton.lengths, (skeleton.edge_index[:, 0], skeleton.edge_index[:, 1])), shape=(N, N)
    ).tocsr()
    # zero-length edges would vanish from a sparse graph; keep them as tiny lengths
    W.data = np.maximum(W.data, 1e-12)
    D = shortest_path(W, directed=False)
    with np.errstate(divide="ignore"):
        wt = np.where(np.isfinite(D) & (D > 0), 1.0 / D**2, 0.0)
    D = np.where(np.isfinite(D), D, 0.0)
    V = -wt
    V[np.diag_indices(N)] = wt.sum(axis=1)
    # V is singular along the all-ones direction; the rank-one shift fixes translation
    V_inv = np.linalg.inv(V + 1.0 / N)

    def energy(y):
        R = squareform(pdist(y))
        return float(np.sum(wt * (R - D) ** 2))

    prev = energy(x)
    for _ in range(max_iter):
        R = squareform(pdist(x))
        with np.errstate(divide="ignore", invalid="ignore"):
            B = -np.where(R > 0, wt * D / R, 0.0)
        B[np.diag_indices(N)] = -B.sum(axis=1)
        x = V_inv @ (B @ x)
        cur = energy(x)
        if prev <= 0 or (prev - cur) / prev < tol:
            break
        prev = cur
    return x


def _descend(obj: _StressObjective, x: np.ndarray, max_iters: int, tol: float):
    """Gradient descent with Barzilai-Borwein trial steps and halving backtracking.

    A step is accepted only if it lowers the stress, so the history is
    monotone.  Returns ``(x, f, history)``.
    """
    f = obj.value(x)
    history = [f]
    g = obj.gradient(x)
    step = 1.0
    for _ in range(max_iters):
        if f <= STRESS_FLOOR or not np.any(g):
            break
        for _ in range(60):
            trial = x - step * g
            ft = obj.value(trial)
            if ft < f:
                break
            step *= 0.5
        else:
            break
        gt = obj.gradient(trial)
        s, y = trial - x, gt - g
        improvement = (f - ft) / f
        x, f, g = trial, ft, gt
        history.append(f)
        sy = float(np.sum(s * y))
        step = float(np.sum(s * s)) / sy if sy > 0 else 2.0 * step
        if improvement < tol:
            break
    return x, f, history


class _Edges(NamedTuple):
    """The parts of a skeleton the stress needs, possibly restricted."""

    edge_index: np.ndarray
    lengths: np.ndarray
    is_thread: np.ndarray
    n_points: int


def _edges_within(skeleton, keep: np.ndarray, relabel: bool) -> _Edges:
    ei = skeleton.edge_index
    m = keep[ei[:, 0]] & keep[ei[:, 1]]
    sub = ei[m]
    n = skeleton.n_points
    if relabel:
        new_id = np.cumsum(keep) - 1
        sub, n = new_id[sub], int(keep.sum())
    return _Edges(sub, skeleton.lengths[m], skeleton.is_thread[m], n)


def _random_start(skeleton, rng, n, warm_start):
    x = rng.uniform(-0.5, 0.5, size=(skeleton.n_points, n))
    if warm_start and 1 < skeleton.n_points <= WARM_START_MAX_POINTS and len(skeleton.edge_index):
        x = _graph_majorization(skeleton, x)
    return x


def _best_of_starts(skeleton, p: EmbedParams, tol: float):
    """Run ``n_init`` seeded starts on ``skeleton``; keep the lowest stress.

    With several starts each is screened for ``SCREEN_ITERS`` steps and only
    the best one is descended to convergence.
    """
    obj = _StressObjective(skeleton, p.temporal_stiffness)
    seed = check_seed(p.seed)
    budget = min(p.max_iters, SCREEN_ITERS) if p.n_init > 1 else p.max_iters
    best = None
    for run in range(p.n_init):
        rng = np.random.default_rng([seed, run] if p.n_init > 1 else seed)
        x = _random_start(skeleton, rng, p.n, p.warm_start)
        x, f, history = _descend(obj, x, budget, tol)
        if best is None or f < best[1]:
            best = (x, f, history)
    if budget < p.max_iters:
        x, f, history = best
        x, f, more = _descend(obj, x, p.max_iters - budget, tol)
        best = (x, f, history + more[1:])
    return best


def _layered(skeleton: LayeredSkeleton, p: EmbedParams):
    """Grow the embedding a few layers at a time.

    The first ``block_layers`` layers are embedded on their own (best of
    ``n_init`` starts).  Each further block enters by linear extrapolation
    along its threads and the stress over all layers so far is descended.
    Streams that run side by side therefore never have to pass through one
    another, which is the usual way a plain descent gets stuck.
    """
    seqs = np.array([q.seq for q in skeleton.points])
    depth = int(seqs.max()) + 1
    block = min(p.block_layers, depth)
    first = seqs < block
    x = np.zeros((skeleton.n_points, p.n))
    x[first], _, history = _best_of_starts(_edges_within(skeleton, first, relabel=True), p, p.tol)
    index = skeleton.index
    prev = np.array([index.get((q.stream_index, q.seq - 1), -1) for q in skeleton.points])
    prev2 = np.array([index.get((q.stream_index, q.seq - 2), -1) for q in skeleton.points])
    top = block
    while top < depth:
        nxt = min(top + block, depth)
        for k in range(top, nxt):
            rows = np.flatnonzero(seqs == k)
            a = prev[rows]
            b = np.where(prev2[rows] >= 0, prev2[rows], a)
            x[rows] = 2.0 * x[a] - x[b]
        top = nxt
        obj = _StressObjective(_edges_within(skeleton, seqs < top, relabel=False), p.temporal_stiffness)
        x, _, history = _descend(obj, x, p.max_iters, p.tol)
    f = _StressObjective(skeleton, p.temporal_stiffness).value(x)
    return x, f, history


def embed(skeleton: LayeredSkeleton, params: EmbedParams | None = None) -> SpacetimeEmbedding:
    """Embed ``skeleton`` in R^{n+1}.

    Time coordinates are ``layer * time_scale``.  Spatial coordinates
    minimize the skeleton stress by gradient descent: each trial step
    (Barzilai-Borwein length) is halved until it lowers the stress,
    otherwise the descent stops.  It also stops when the relative
    improvement falls below ``tol`` or after ``max_iters`` steps.

    ``init`` picks the starting configuration:

    ``"layered"``
        The first ``block_layers`` layers are embedded alone, then the
        remaining layers are added block by block, each entering by linear
        extrapolation along its threads.
    ``"random"``
        Uniform in ``[-0.5, 0.5]^n``.

    Every random start is seeded, optionally pulled into shape by a
    majorization pass over skeleton path lengths (``warm_start``), and
    repeated ``n_init`` times keeping the lowest stress.  The result is
    translated so the spatial centroid is the origin; ``stress_history``
    logs the final descent.
    """
    p = (params or EmbedParams()).validate()
    if skeleton.n_points == 0:
        raise EmptySkeletonError("cannot embed an empty skeleton")
    obj = _StressObjective(skeleton, p.temporal_stiffness)
    if p.init == "layered":
        best = _layered(skeleton, p)
    else:
        best = _best_of_starts(skeleton, p, p.tol)

    x, _, history = best
    x = x - x.mean(axis=0)
    f = obj.value(x)
    time = skeleton.layer_labels() * p.time_scale
    coords = np.column_stack([time, x])
    return SpacetimeEmbedding(skeleton.points, coords, p, f, tuple(history))


class SpacetimeEmbedder(TransformerMixin, BaseEstimator):
    """Estimator form of :func:`embed`.

    Parameters
    ----------
    n_components : int
        Spatial dimension ``n``; the output has ``n + 1`` columns.
    max_iter, tol : int, float
        Stopping rule of the descent.
    time_scale : float
        Temporal spacing between layers.
    temporal_stiffness : float
        Weight of the thread-continuity penalty.
    random_state : int
        Seed of the initial configuration.
    n_init : int
        Number of seeded starts; the lowest stress is kept.
    warm_start : bool
        Run the path-length majorization on each random start.
    init : {"layered", "random"}
        Starting configuration, see :func:`embed`.
    block_layers : int
        Layers added per stage in ``layered`` mode.

    Attributes
    ----------
    embedding_ : SpacetimeEmbedding
    stress_ : float
    n_iter_ : int
        Number of accepted descent steps.
    """

    def __init__(
        self,
        n_components=2,
        max_iter=20000,
        tol=1e-10,
        time_scale=1.0,
        temporal_stiffness=0.1,
        random_state=0,
        n_init=8,
        warm_start=True,
        init="layered",
        block_layers=5,
    ):
        self.n_components = n_components
        self.max_iter = max_iter
        self.tol = tol
        self.time_scale = time_scale
        self.temporal_stiffness = temporal_stiffness
        self.random_state = random_state
        self.n_init = n_init
        self.warm_start = warm_start
        self.init = init
        self.block_layers = block_layers

    def _params(self) -> EmbedParams:
        return EmbedParams(
            n=self.n_components,
            max_iters=self.max_iter,
            tol=self.tol,
            time_scale=self.time_scale,
            temporal_stiffness=self.temporal_stiffness,
            seed=self.random_state,
            n_init=self.n_init,
            warm_start=self.warm_start,
            init=self.init,
            block_layers=self.block_layers,
        ).validate()

    def fit(self, X, y=None):
        if not isinstance(X, LayeredSkeleton):
            raise TypeError(f"expected a LayeredSkeleton, got {type(X).__name__}")
        self.embedding_ = embed(X, self._params())
        self.stress_ = self.embedding_.final_stress
        self.n_iter_ = len(self.embedding_.stress_history) - 1
        return self

    def fit_transform(self, X, y=None, **fit_params):
        return np.array(self.fit(X).embedding_.coords)

    def transform(self, X):
        # the embedding is transductive: only the fitted skeleton has coordinates
        emb = self.embedding_
        if X is not None and getattr(X, "points", None) != emb.points:
            raise DimensionMismatch("transform only applies to the skeleton passed to fit")
        return np.array(emb.coords)


def procrustes_align(reference, coords, time_axis: bool = False):
    """Rigidly align ``coords`` to ``reference``.

    Finds the rotation/reflection and translation of the spatial block that
    minimizes the summed squared difference to ``reference``.  With
    ``time_axis=True`` column 0 of both arrays is time: it is passed through
    untouched and left out of the residual.

    Returns ``(aligned, residual)`` where ``residual`` is the minimized sum
    of squared differences over the spatial block.
    """
    ref = np.asarray(reference, dtype=float)
    X = np.asarray(coords, dtype=float)
    if ref.shape != X.shape or ref.ndim != 2:
        raise DimensionMismatch(f"shape mismatch: {ref.shape} vs {X.shape}")
    lo = 1 if time_axis else 0
    if X.shape[1] <= lo:
        raise DimensionMismatch("no spatial columns to align")
    A, B = ref[:, lo:], X[:, lo:]
    mu_a, mu_b = A.mean(axis=0), B.mean(axis=0)
    A0, B0 = A - mu_a, B - mu_b
    U, _, Vt = np.linalg.svd(B0.T @ A0)
    R = U @ Vt
    aligned_sp = B0 @ R + mu_a
    residual = float(np.sum((aligned_sp - A) ** 2))
    aligned = X.copy()
    aligned[:, lo:] = aligned_sp
    return aligned, residual


# --------------------------------------------------------------------------
# serialization


def embedding_to_csv(e: SpacetimeEmbedding) -> str:
    buf = io.StringIO()
    n = e.coords.shape[1] - 1
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["stream", "seq", "t"] + [f"x{k}" for k in range(1, n + 1)])
    for p, row in zip(e.points, e.coords):
        w.writerow([p.stream_index, p.seq] + [repr(float(v)) for v in row])
    return buf.getvalue()


def embedding_sidecar(e: SpacetimeEmbedding) -> str:
    doc = {
        "params": asdict(e.params),
        "final_stress": e.final_stress,
        "iterations": len(e.stress_history) - 1,
    }
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def embedding_from_csv(text: str, sidecar: str | None = None) -> SpacetimeEmbedding:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or rows[0][:3] != ["stream", "seq", "t"]:
        raise DecodeError("embedding CSV must start with header stream,seq,t,x1..xn")
    points, coords = [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        try:
            points.append(PointRef(int(row[0]), int(row[1])))
            coords.append([float(v) for v in row[2:]])
        except ValueError:
            raise DecodeError("non-numeric embedding row", line=lineno) from None
        if len(coords[-1]) != len(rows[0]) - 2:
            raise DecodeError("row width does not match header", line=lineno)
    arr = np.array(coords, dtype=float).reshape(len(points), len(rows[0]) - 2)
    if sidecar is not None:
        meta = json.loads(sidecar)
        params = EmbedParams(**meta["params"])
        final = float(meta["final_stress"])
    else:
        params = EmbedParams(n=max(arr.shape[1] - 1, 1))
        final = float("nan")
    order = sorted(range(len(points)), key=points.__getitem__)
    if len(set(points)) != len(points):
        raise DecodeError("duplicate point in embedding CSV")
    return SpacetimeEmbedding(
        tuple(points[k] for k in order), arr[order], params, final
    )
