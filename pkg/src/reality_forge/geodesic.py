"""Metric field over the embedded spacetime, and geodesic motion in it.

A :class:`MetricField` stores one symmetric positive-definite tensor per
node of a regular grid; between nodes it is multilinearly interpolated.
Christoffel symbols come from central differences of the interpolant, and
geodesics are integrated with classical fourth-order Runge--Kutta.
"""

from __future__ import annotations

import csv
import io
import itertools
import json
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from sklearn.base import BaseEstimator

from ._validation import as_point, check_positive_int, check_positive_real
from .embedding import SpacetimeEmbedding
from .errors import (
    ConfigError,
    DecodeError,
    InvalidGrid,
    MissingCoordError,
    OutOfHull,
    ShortPrefix,
    SingularMetric,
)
from .prespace import LayeredSkeleton

MAX_GRID_NODES = 2_000_000
EDGES_PER_CELL = 16
_SNAP = 1e-9


def _floor_spd(g: np.ndarray, eps: float) -> np.ndarray:
    """Symmetrize and lift every eigenvalue to at least ``eps``.

    Works on a single matrix or a stack.  Matrices that already satisfy the
    floor come back bit-identical after symmetrization.
    """
    g = 0.5 * (g + np.swapaxes(g, -1, -2))
    w, V = np.linalg.eigh(g)
    low = w.min(axis=-1) < eps
    if not np.any(low):
        return g
    w = np.maximum(w, eps)
    lifted = (V * w[..., None, :]) @ np.swapaxes(V, -1, -2)
    lifted = 0.5 * (lifted + np.swapaxes(lifted, -1, -2))
    if g.ndim == 2:
        return lifted
    out = g.copy()
    out[low] = lifted[low]
    return out


class MetricField:
    """SPD tensors on a regular grid.

    Parameters
    ----------
    origin, spacing : array-like, shape (D,)
        Position of node ``(0, ..., 0)`` and node spacing per axis.
    tensors : ndarray, shape (*grid_shape, D, D)
    epsilon : float
        Eigenvalue floor applied to stored and interpolated tensors.
    """

    def __init__(self, origin, spacing, tensors, epsilon: float, n_fallback: int = 0):
        origin = np.asarray(origin, dtype=float)
        spacing = np.asarray(spacing, dtype=float)
        tensors = np.asarray(tensors, dtype=float)
        D = origin.shape[0]
        if spacing.shape != (D,) or np.any(~np.isfinite(spacing)) or np.any(spacing <= 0):
            raise InvalidGrid("spacing must be positive and match the dimension")
        if tensors.ndim != D + 2 or tensors.shape[-2:] != (D, D):
            raise InvalidGrid(f"tensors must have shape (*grid, {D}, {D}), got {tensors.shape}")
        if any(s < 2 for s in tensors.shape[:D]):
            raise InvalidGrid("grid needs at least two nodes per axis")
        if not (epsilon > 0 and math.isfinite(epsilon)):
            raise InvalidGrid(f"epsilon must be positive, got {epsilon}")
        self.origin = origin
        self.spacing = spacing
        self.epsilon = float(epsilon)
        self.tensors = _floor_spd(tensors, self.epsilon)
        self.tensors.setflags(write=False)
        self.n_fallback = int(n_fallback)
        self._corners = np.array(list(itertools.product((0, 1), repeat=D)), dtype=np.intp)

    @property
    def dim(self) -> int:
        return self.origin.shape[0]

    @property
    def shape(self) -> tuple[int, ...]:
        return self.tensors.shape[: self.dim]

    @property
    def upper(self) -> np.ndarray:
        return self.origin + (np.asarray(self.shape) - 1) * self.spacing

    def node_position(self, index: Sequence[int]) -> np.ndarray:
        return self.origin + np.asarray(index, dtype=float) * self.spacing

    def contains(self, x, pad: float = 0.0) -> bool:
        """Whether ``x`` lies in the grid hull shrunk by ``pad`` cells."""
        u = (np.asarray(x, dtype=float) - self.origin) / self.spacing
        hi = np.asarray(self.shape) - 1
        return bool(np.all(u >= pad - _SNAP) and np.all(u <= hi - pad + _SNAP))

    @classmethod
    def from_function(
        cls,
        func: Callable[[np.ndarray], np.ndarray],
        origin,
        spacing,
        shape: Sequence[int],
        epsilon: float = 1e-9,
    ) -> "MetricField":
        """Sample ``func`` (point -> D x D matrix) at every grid node."""
        origin = np.asarray(origin, dtype=float)
        spacing = np.asarray(spacing, dtype=float) * np.ones_like(origin)
        D = origin.shape[0]
        tensors = np.empty(tuple(shape) + (D, D))
        for idx in np.ndindex(*shape):
            tensors[idx] = func(origin + np.asarray(idx) * spacing)
        return cls(origin, spacing, tensors, epsilon)

    # ------------------------------------------------------------------
    def _interp(self, X: np.ndarray) -> np.ndarray:
        """Multilinear interpolation at the rows of ``X``; no floor applied."""
        U = (X - self.origin) / self.spacing
        R = np.round(U)
        U = np.where(np.abs(U - R) < _SNAP, R, U)
        hi = np.asarray(self.shape) - 1
        if np.any(U < 0) or np.any(U > hi):
            bad = X[np.any((U < 0) | (U > hi), axis=1)][0]
            raise OutOfHull(f"point {bad.tolist()} lies outside the metric grid")
        base = np.clip(np.floor(U).astype(np.intp), 0, hi - 1)
        frac = U - base
        D = self.dim
        out = np.zeros((X.shape[0], D, D))
        for corner in self._corners:
            w = np.prod(np.where(corner == 1, frac, 1.0 - frac), axis=1)
            nz = w != 0.0
            if not np.any(nz):
                continue
            idx = tuple((base[nz] + corner).T)
            out[nz] += w[nz, None, None] * self.tensors[idx]
        return out

    def at(self, x) -> np.ndarray:
        return metric_at(self, x)

    # ------------------------------------------------------------------
    def to_json(self) -> str:
        doc = {
            "origin": self.origin.tolist(),
            "spacing": self.spacing.tolist(),
            "shape": list(self.shape),
            "epsilon": self.epsilon,
            "n_fallback": self.n_fallback,
            "tensors": self.tensors.ravel().tolist(),
        }
        return json.dumps(doc, separators=(",", ":")) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "MetricField":
        try:
            doc = json.loads(text)
            D = len(doc["origin"])
            tensors = np.asarray(doc["tensors"], dtype=float).reshape(
                tuple(doc["shape"]) + (D, D)
            )
            return cls(doc["origin"], doc["spacing"], tensors, doc["epsilon"], doc.get("n_fallback", 0))
        except (KeyError, TypeError, ValueError) as exc:
            raise DecodeError(f"malformed metric field document: {exc}") from None


def metric_at(field: MetricField, x) -> np.ndarray:
    """Interpolated metric at ``x``, symmetrized and eigenvalue-floored.

    At a grid node the stored tensor is returned unchanged.
    """
    x = as_point(x, field.dim, "x")
    g = field._interp(x[None, :])[0]
    return _floor_spd(g, field.epsilon)


def christoffel(field: MetricField, x) -> np.ndarray:
    """Christoffel symbols ``G[k, i, j]`` of the second kind at ``x``.

    Metric derivatives along axis ``l`` are central differences with step
    ``spacing[l] / 2``; the whole stencil must lie inside the grid.
    """
    x = as_point(x, field.dim, "x")
    D = field.dim
    half = 0.5 * field.spacing
    pts = np.empty((2 * D + 1, D))
    pts[0] = x
    for l in range(D):
        pts[1 + 2 * l] = x
        pts[1 + 2 * l, l] += half[l]
        pts[2 + 2 * l] = x
        pts[2 + 2 * l, l] -= half[l]
    G = _floor_spd(field._interp(pts), field.epsilon)
    dg = np.empty((D, D, D))
    for l in range(D):
        dg[l] = (G[1 + 2 * l] - G[2 + 2 * l]) / (pts[1 + 2 * l, l] - pts[2 + 2 * l, l])
    try:
        ginv = np.linalg.inv(G[0])
    except np.linalg.LinAlgError:
        raise SingularMetric(f"metric at {x.tolist()} is singular; check epsilon") from None
    if not np.all(np.isfinite(ginv)):
        raise SingularMetric(f"metric at {x.tolist()} is singular; check epsilon")
    # term[l, i, j] = d_i g_jl + d_j g_il - d_l g_ij
    term = np.transpose(dg, (2, 0, 1)) + np.transpose(dg, (2, 1, 0)) - dg
    return 0.5 * np.einsum("kl,lij->kij", ginv, term)


@dataclass(frozen=True, eq=False)
class GeodesicPath:
    positions: np.ndarray
    velocities: np.ndarray
    dt: float
    truncated: bool = False

    def __len__(self):
        return self.positions.shape[0]

    @property
    def samples(self) -> list[tuple[np.ndarray, np.ndarray]]:
        return list(zip(self.positions, self.velocities))

    def to_csv(self) -> str:
        D = self.positions.shape[1]
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t"] + [f"x{k}" for k in range(1, D)] + [f"v{k}" for k in range(D)])
        for x, v in zip(self.positions, self.velocities):
            w.writerow([repr(float(a)) for a in x] + [repr(float(a)) for a in v])
        return buf.getvalue()


def _acceleration(field, x, v):
    return -np.einsum("kij,i,j->k", christoffel(field, x), v, v)


def _rk4_step(field, x, v, dt):
    k1x, k1v = v, _acceleration(field, x, v)
    x2, v2 = x + 0.5 * dt * k1x, v + 0.5 * dt * k1v
    k2x, k2v = v2, _acceleration(field, x2, v2)
    x3, v3 = x + 0.5 * dt * k2x, v + 0.5 * dt * k2v
    k3x, k3v = v3, _acceleration(field, x3, v3)
    x4, v4 = x + dt * k3x, v + dt * k3v
    k4x, k4v = v4, _acceleration(field, x4, v4)
    x_new = x + (dt / 6.0) * (k1x + 2.0 * k2x + 2.0 * k3x + k4x)
    v_new = v + (dt / 6.0) * (k1v + 2.0 * k2v + 2.0 * k3v + k4v)
    return x_new, v_new


def integrate_geodesic(field: MetricField, x0, v0, steps: int, dt: float) -> GeodesicPath:
    """Integrate ``x'' = -Gamma(x)[x', x']`` from ``(x0, v0)`` with RK4.

    The path stops early, with ``truncated=True``, as soon as a stage would
    need the metric outside the grid.
    """
    x = as_point(x0, field.dim, "x0")
    v = as_point(v0, field.dim, "v0")
    steps = check_positive_int(steps, "steps", minimum=0)
    if not (isinstance(dt, (int, float)) and math.isfinite(dt)):
        raise ConfigError(f"dt must be finite, got {dt!r}")
    christoffel(field, x)  # raises OutOfHull when the start is unusable
    xs, vs = [x], [v]
    truncated = False
    for _ in range(steps):
        try:
            x, v = _rk4_step(field, x, v, float(dt))
        except OutOfHull:
            truncated = True
            break
        xs.append(x)
        vs.append(v)
    return GeodesicPath(np.array(xs), np.array(vs), float(dt), truncated)


def predict_next(field: MetricField, prefix, dt: float = 1.0) -> np.ndarray:
    """Extrapolate a trajectory one geodesic step ahead.

    The velocity is the last displacement of ``prefix`` (one unit of
    parameter per click); one RK4 step of size ``dt`` is taken from the last
    point.  With ``dt = 1`` the prediction targets the next click.
    """
    pts = [as_point(p, field.dim, "prefix point") for p in prefix]
    if len(pts) < 2:
        raise ShortPrefix(f"need at least 2 prefix points, got {len(pts)}")
    for p in pts:
        if not field.contains(p):
            raise OutOfHull(f"prefix point {p.tolist()} lies outside the metric grid")
    v = pts[-1] - pts[-2]
    x, _ = _rk4_step(field, pts[-1], v, float(dt))
    return x


# --------------------------------------------------------------------------
# fitting


def auto_cells(n_edges: int, dim: int) -> int:
    """Cells per axis leaving about ``EDGES_PER_CELL`` edges in each cell."""
    return max(1, int((max(n_edges, 1) / EDGES_PER_CELL) ** (1.0 / dim) + 1e-9))


@dataclass(frozen=True)
class GridSpec:
    """Grid for :func:`fit_metric_field`.

    ``spacing`` (scalar or one value per axis) takes precedence over
    ``cells`` (number of cells spanning each axis of the data bounding box).
    With neither, ``cells`` is chosen so that the bounding box holds about
    ``EDGES_PER_CELL`` fitted edges per cell.  ``margin`` is the number of
    extra cells on every side.
    """

    spacing: float | tuple[float, ...] | None = None
    cells: int | tuple[int, ...] | None = None
    margin: int = 1
    cutoff: float = 3.0

    def resolve(
        self, lo: np.ndarray, hi: np.ndarray, n_edges: int = 0
    ) -> tuple[np.ndarray, np.ndarray, tuple[int, ...]]:
        D = lo.shape[0]
        if isinstance(self.margin, bool) or not isinstance(self.margin, int) or self.margin < 1:
            raise InvalidGrid(f"margin must be an integer >= 1, got {self.margin!r}")
        extent = hi - lo
        if self.spacing is not None:
            h = np.asarray(self.spacing, dtype=float) * np.ones(D)
        else:
            cells = self.cells if self.cells is not None else auto_cells(n_edges, D)
            cells = np.asarray(cells, dtype=float) * np.ones(D)
            if np.any(cells < 1):
                raise InvalidGrid("cells must be >= 1")
            h = np.where(extent > 0, extent / cells, 1.0)
        if h.shape != (D,) or np.any(~np.isfinite(h)) or np.any(h <= 0):
            raise InvalidGrid(f"grid spacing must be positive, got {h}")
        inner = np.ceil(extent / h - 1e-9).astype(int)
        inner = np.maximum(inner, 0)
        shape = tuple(int(k) + 2 * self.margin + 1 for k in inner)
        if math.prod(shape) > MAX_GRID_NODES:
            raise InvalidGrid(f"grid of shape {shape} exceeds {MAX_GRID_NODES} nodes")
        return lo - self.margin * h, h, shape


def _aligned_coords(embedding: SpacetimeEmbedding, skeleton: LayeredSkeleton) -> np.ndarray:
    if embedding.points == skeleton.points:
        return np.asarray(embedding.coords)
    rows = []
    for p in skeleton.points:
        if p not in embedding:
            raise MissingCoordError(f"embedding has no coordinates for {p}")
        rows.append(embedding[p])
    return np.array(rows)


def fit_metric_field(
    embedding: SpacetimeEmbedding,
    skeleton: LayeredSkeleton,
    grid: GridSpec | None = None,
    epsilon: float | None = None,
    edge_mask: np.ndarray | None = None,
) -> MetricField:
    """Kernel-weighted least-squares metric fit on the skeleton edges.

    At each node ``g`` minimizes ``sum_e w_e (dx_e^T g dx_e - d_e^2)^2`` where
    ``dx_e`` is the coordinate displacement of edge ``e``, ``d_e`` its
    measured length and ``w_e`` a Gaussian of the distance from the edge
    midpoint to the node, per-axis scaled by the grid spacing (weights past
    ``grid.cutoff`` bandwidths are zero).  Nodes with zero total weight get
    the identity, and directions the edges leave unconstrained keep their
    identity component (least-norm correction to ``I``).  The default floor ``epsilon`` is ``1e-3`` times the
    median diagonal entry of the fitted tensors.

    ``edge_mask`` restricts the fit to a subset of the skeleton edges, e.g.
    to hold out part of the data; the grid still covers every point.
    """
    grid = grid or GridSpec()
    X = _aligned_coords(embedding, skeleton)
    if X.shape[0] == 0:
        raise InvalidGrid("cannot fit a metric field without points")
    D = X.shape[1]
    check_positive_real(grid.cutoff, "cutoff")

    ei, d = skeleton.edge_index, skeleton.lengths
    if edge_mask is not None:
        ei, d = ei[edge_mask], d[edge_mask]
    origin, h, shape = grid.resolve(X.min(axis=0), X.max(axis=0), n_edges=len(d))
    dx = X[ei[:, 1]] - X[ei[:, 0]]
    mid = 0.5 * (X[ei[:, 1]] + X[ei[:, 0]])
    iu = np.triu_indices(D)
    factor = np.where(iu[0] == iu[1], 1.0, 2.0)
    Phi = dx[:, iu[0]] * dx[:, iu[1]] * factor  # (E, P)
    target = d**2
    eye_vec = (iu[0] == iu[1]).astype(float)

    nodes = origin + np.stack(np.meshgrid(*[np.arange(s) for s in shape], indexing="ij"), axis=-1).reshape(-1, D) * h
    n_nodes = nodes.shape[0]
    P = Phi.shape[1]
    sol = np.zeros((n_nodes, P))
    has_data = np.zeros(n_nodes, dtype=bool)
    chunk = max(1, 4_000_000 // max(len(d), 1))
    for s in range(0, n_nodes, chunk):
        z2 = np.sum(((nodes[s : s + chunk, None, :] - mid[None, :, :]) / h) ** 2, axis=-1)
        W = np.where(z2 <= grid.cutoff**2, np.exp(-0.5 * z2), 0.0)  # (chunk, E)
        tot = W.sum(axis=1)
        M = np.einsum("ne,ep,eq->npq", W, Phi, Phi)
        rhs = W @ (Phi * target[:, None])
        ok = tot > 0
        has_data[s : s + chunk] = ok
        if np.any(ok):
            # least-norm correction to the identity: directions no edge
            # constrains stay flat instead of collapsing to the floor
            r = rhs[ok] - M[ok] @ eye_vec
            sol[s : s + chunk][ok] = eye_vec + np.einsum(
                "npq,nq->np", np.linalg.pinv(M[ok], rcond=1e-10, hermitian=True), r
            )

    tensors = np.empty((n_nodes, D, D))
    tensors[:, iu[0], iu[1]] = sol
    tensors[:, iu[1], iu[0]] = sol
    tensors[~has_data] = np.eye(D)
    if epsilon is None:
        diag = np.diagonal(tensors[has_data], axis1=1, axis2=2)
        med = float(np.median(diag)) if diag.size else 1.0
        epsilon = 1e-3 * med if med > 0 else 1e-3
    epsilon = check_positive_real(epsilon, "epsilon")
    return MetricField(
        origin, h, tensors.reshape(shape + (D, D)), epsilon, n_fallback=int(np.sum(~has_data))
    )


class GeodesicPredictor(BaseEstimator):
    """Fit a metric field to an embedded skeleton and extrapolate trajectories.

    Parameters
    ----------
    cells : int, optional
        Grid cells spanning each axis of the embedding's bounding box;
        chosen from the edge count when omitted.
    spacing : float or tuple, optional
        Explicit node spacing; overrides ``cells``.
    margin : int
        Extra cells on each side of the bounding box.
    epsilon : float, optional
        Eigenvalue floor; defaults to ``1e-3`` x median fitted diagonal.
    horizon : float
        Geodesic parameter advanced per prediction (1 = one click).
    """

    def __init__(self, cells=None, spacing=None, margin=1, epsilon=None, horizon=1.0):
        self.cells = cells
        self.spacing = spacing
        self.margin = margin
        self.epsilon = epsilon
        self.horizon = horizon

    def fit(self, X, y=None, edge_mask=None):
        """``X`` is a :class:`SpacetimeEmbedding`, ``y`` its :class:`LayeredSkeleton`."""
        if not isinstance(X, SpacetimeEmbedding) or not isinstance(y, LayeredSkeleton):
            raise TypeError("fit expects (SpacetimeEmbedding, LayeredSkeleton)")
        grid = GridSpec(spacing=self.spacing, cells=self.cells, margin=self.margin)
        self.metric_field_ = fit_metric_field(X, y, grid, self.epsilon, edge_mask=edge_mask)
        return self

    def predict(self, prefixes) -> np.ndarray:
        field = self.metric_field_
        return np.array([predict_next(field, p, self.horizon) for p in prefixes])


@dataclass(frozen=True)
class HoldoutResult:
    """One-step-ahead predictions of held-out stream suffixes.

    ``errors[i]`` is the mean distance between predicted and embedded
    positions over stream ``i``'s suffix; ``steps[i]`` its mean spatial
    step length.  Streams too short to leave a 2-point prefix are skipped.
    """

    streams: tuple[int, ...]
    errors: np.ndarray
    steps: np.ndarray
    predictions: dict

    @property
    def mean_error(self) -> float:
        return float(np.mean(self.errors)) if len(self.errors) else float("nan")

    @property
    def mean_step(self) -> float:
        return float(np.mean(self.steps)) if len(self.steps) else float("nan")

    @property
    def relative_error(self) -> float:
        return self.mean_error / self.mean_step


def holdout_prediction(
    embedding: SpacetimeEmbedding,
    skeleton: LayeredSkeleton,
    holdout: int = 1,
    grid: GridSpec | None = None,
    epsilon: float | None = None,
    dt: float = 1.0,
) -> HoldoutResult:
    """Fit the metric without each stream's last ``holdout`` clicks, then
    predict every held-out click from the embedded clicks before it."""
    check_positive_int(holdout, "holdout")
    lengths: dict[int, int] = {}
    for p in skeleton.points:
        lengths[p.stream_index] = max(lengths.get(p.stream_index, 0), p.seq + 1)
    held = np.array([p.seq >= lengths[p.stream_index] - holdout for p in skeleton.points], dtype=bool)
    ei = skeleton.edge_index
    mask = ~(held[ei[:, 0]] | held[ei[:, 1]]) if len(ei) else np.zeros(0, dtype=bool)
    field = fit_metric_field(embedding, skeleton, grid, epsilon, edge_mask=mask)

    streams, errors, steps, preds = [], [], [], {}
    for i in sorted(lengths):
        L = lengths[i]
        if L - holdout < 2:
            continue
        pts = np.array([embedding[(i, k)] for k in range(L)])
        errs = []
        for k in range(L - holdout, L):
            x = predict_next(field, pts[:k], dt)
            preds[(i, k)] = x
            errs.append(float(np.linalg.norm(x - pts[k])))
        streams.append(i)
        errors.append(np.mean(errs))
        steps.append(float(np.mean(np.linalg.norm(np.diff(pts[:, 1:], axis=0), axis=1))))
    return HoldoutResult(tuple(streams), np.array(errors), np.array(steps), preds)
