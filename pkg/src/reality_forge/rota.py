"""Template matrices of directed acyclic graphs and their spatialization.

A DAG on ``m`` vertices gives a boolean mask: entry ``(j, k)`` is a
wildcard when ``j -> k`` or ``j == k``.  Matrices that vanish outside the
mask carry signals along the graph.  Going the other way, the union of the
supports of a set of matrices is a relation on indices whose
reflexive-transitive closure is a preorder; its quotient by mutual
reachability is a finite T0 space (open sets are the up-sets), and when no
two indices collapse the transitive reduction recovers a DAG.

Vertices are ``0 .. m-1`` throughout.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import CycleError, DecodeError, DimensionMismatch, EmptySubspace, MaskViolation

SUPPORT_THRESHOLD = 1e-12


@dataclass(frozen=True)
class Dag:
    m: int
    edges: frozenset

    def __init__(self, m: int, edges: Iterable[Sequence[int]] = ()):
        if isinstance(m, bool) or not isinstance(m, (int, np.integer)) or m < 1:
            raise DecodeError(f"vertex count must be a positive integer, got {m!r}")
        es = set()
        for e in edges:
            try:
                j, k = (int(v) for v in e)
            except (TypeError, ValueError):
                raise DecodeError(f"edge {e!r} is not a pair of vertex indices") from None
            if not (0 <= j < m and 0 <= k < m):
                raise DecodeError(f"edge ({j}, {k}) references a vertex outside 0..{m - 1}")
            if j == k:
                raise CycleError(f"self-loop at vertex {j}")
            es.add((j, k))
        object.__setattr__(self, "m", int(m))
        object.__setattr__(self, "edges", frozenset(es))
        cycle = _find_cycle(self.m, self.edges)
        if cycle:
            raise CycleError("graph has a cycle through " + " -> ".join(map(str, cycle)))

    def adjacency(self) -> np.ndarray:
        A = np.zeros((self.m, self.m), dtype=bool)
        for j, k in self.edges:
            A[j, k] = True
        return A

    def to_dict(self) -> dict:
        return {"m": self.m, "edges": [list(e) for e in sorted(self.edges)]}

    @classmethod
    def from_dict(cls, doc: dict) -> "Dag":
        try:
            return cls(doc["m"], doc.get("edges", []))
        except (KeyError, TypeError, AttributeError) as exc:
            raise DecodeError(f"malformed DAG document: {exc!r}") from None


def _find_cycle(m, edges):
    succ = [[] for _ in range(m)]
    for j, k in sorted(edges):
        succ[j].append(k)
    color = [0] * m  # 0 new, 1 on stack, 2 done
    parent = [-1] * m
    for root in range(m):
        if color[root]:
            continue
        stack = [(root, iter(succ[root]))]
        color[root] = 1
        while stack:
            v, it = stack[-1]
            nxt = next(it, None)
            if nxt is None:
                color[v] = 2
                stack.pop()
            elif color[nxt] == 1:
                path = [v]
                while path[-1] != nxt:
                    path.append(parent[path[-1]])
                return path[::-1] + [nxt]
            elif color[nxt] == 0:
                parent[nxt] = v
                color[nxt] = 1
                stack.append((nxt, iter(succ[nxt])))
    return None


@dataclass(frozen=True, eq=False)
class TemplateMatrix:
    """Boolean ``m x m`` support mask (``True`` = wildcard entry)."""

    mask: np.ndarray

    def __post_init__(self):
        mask = np.array(self.mask, dtype=bool)
        if mask.ndim != 2 or mask.shape[0] != mask.shape[1] or mask.shape[0] == 0:
            raise DimensionMismatch(f"a template must be a nonempty square mask, got shape {mask.shape}")
        mask.setflags(write=False)
        object.__setattr__(self, "mask", mask)

    @property
    def m(self) -> int:
        return self.mask.shape[0]

    def __eq__(self, other):
        if not isinstance(other, TemplateMatrix):
            return NotImplemented
        return self.mask.shape == other.mask.shape and bool(np.all(self.mask == other.mask))

    __hash__ = None

    def pattern(self) -> list[list[str]]:
        """Rendering with ``*`` for wildcards and ``0`` for forced zeros."""
        return [["*" if v else "0" for v in row] for row in self.mask]

    def basis(self) -> list[np.ndarray]:
        """Matrix units ``E_jk`` spanning the conforming matrices."""
        out = []
        for j, k in zip(*np.nonzero(self.mask)):
            E = np.zeros(self.mask.shape)
            E[j, k] = 1.0
            out.append(E)
        return out

    def to_dict(self) -> dict:
        return {"m": self.m, "mask": self.mask.astype(int).tolist(), "pattern": self.pattern()}


def template_matrix(d: Dag) -> TemplateMatrix:
    """Wildcard at ``(j, k)`` iff ``j -> k`` or ``j == k``."""
    return TemplateMatrix(d.adjacency() | np.eye(d.m, dtype=bool))


def _bool_product(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return (a.astype(np.int64) @ b.astype(np.int64)) > 0


def is_closed_algebra(t: TemplateMatrix) -> bool:
    """Whether conforming matrices are closed under products (mask^2 within mask)."""
    sq = _bool_product(t.mask, t.mask)
    return bool(np.all(~sq | t.mask))


def _warshall(R: np.ndarray) -> np.ndarray:
    R = R.copy()
    for k in range(R.shape[0]):
        R |= np.outer(R[:, k], R[k, :])
    return R


def algebra_closure(t: TemplateMatrix) -> TemplateMatrix:
    """Least transitively closed mask containing ``t``."""
    return TemplateMatrix(_warshall(np.array(t.mask)))


def propagate(t: TemplateMatrix, weights, signal, layers: int = 1) -> np.ndarray:
    """Apply ``weights`` to ``signal`` ``layers`` times (``W @ ... @ W @ s``).

    ``weights`` must vanish wherever the mask does.
    """
    W = np.asarray(weights, dtype=float)
    s = np.asarray(signal, dtype=float)
    if W.shape != t.mask.shape:
        raise DimensionMismatch(f"weights have shape {W.shape}, template is {t.mask.shape}")
    if s.shape != (t.m,):
        raise DimensionMismatch(f"signal has shape {s.shape}, expected ({t.m},)")
    if isinstance(layers, bool) or not isinstance(layers, (int, np.integer)) or layers < 0:
        raise DimensionMismatch(f"layers must be a nonnegative integer, got {layers!r}")
    bad = np.argwhere((W != 0) & ~t.mask)
    if bad.size:
        j, k = bad[0]
        raise MaskViolation(f"weight ({j}, {k}) = {W[j, k]!r} lies outside the template")
    for _ in range(int(layers)):
        s = W @ s
    return s


@dataclass(frozen=True)
class FinitePreorderTopology:
    """T0 quotient of a finite preorder with its Alexandrov topology.

    ``classes[c]`` lists the indices collapsed into point ``c``; ``leq`` is
    the specialization order on points (``leq[a, b]`` iff ``a`` reaches
    ``b``).  Open sets are the up-sets of ``leq``.
    """

    classes: tuple
    leq: np.ndarray

    @property
    def n_points(self) -> int:
        return len(self.classes)

    def is_open(self, points: Iterable[int]) -> bool:
        U = set(points)
        return all(b in U for a in U for b in np.flatnonzero(self.leq[a]))

    def open_sets(self) -> list[frozenset]:
        """Every up-set, smallest first (exponential in the number of points)."""
        n = self.n_points
        if n > 20:
            raise DimensionMismatch("refusing to enumerate open sets of more than 20 points")
        out = []
        for bits in range(1 << n):
            U = [i for i in range(n) if bits >> i & 1]
            if self.is_open(U):
                out.append(frozenset(U))
        return sorted(out, key=lambda u: (len(u), sorted(u)))

    def minimal_open(self, point: int) -> frozenset:
        return frozenset(int(b) for b in np.flatnonzero(self.leq[point]))

    def to_dict(self) -> dict:
        return {
            "classes": [list(c) for c in self.classes],
            "order": [[int(a), int(b)] for a, b in zip(*np.nonzero(self.leq)) if a != b],
        }


@dataclass(frozen=True)
class Spatialization:
    topology: FinitePreorderTopology
    support: np.ndarray  # reflexive-transitive support relation on indices
    dag: Dag | None
    cycles: tuple  # classes with more than one index

    def to_dict(self) -> dict:
        doc = {"topology": self.topology.to_dict(), "support": self.support.astype(int).tolist()}
        doc["dag"] = None if self.dag is None else self.dag.to_dict()
        doc["cycles"] = [list(c) for c in self.cycles]
        return doc


def _transitive_reduction(R: np.ndarray) -> np.ndarray:
    """Covering relation of a partial order given as a reflexive, transitive matrix."""
    S = R & ~np.eye(R.shape[0], dtype=bool)
    return S & ~_bool_product(S, S)


def spatialize(matrices: Sequence) -> Spatialization:
    """Recover a finite space (and, if possible, a DAG) from a spanning set.

    An index pair ``(j, k)`` is related when some matrix has
    ``|M[j, k]| > 1e-12``.  The relation plus the diagonal is closed
    transitively; mutually reachable indices are collapsed.  When every
    class is a single index, the transitive reduction is returned as a
    DAG; otherwise the collapsed classes are reported as cycles.
    """
    mats = [np.asarray(M, dtype=float) for M in matrices]
    if not mats:
        raise EmptySubspace("spatialization needs at least one matrix")
    m = mats[0].shape[0] if mats[0].ndim == 2 else -1
    for M in mats:
        if M.ndim != 2 or M.shape != (m, m) or m == 0:
            raise DimensionMismatch("all matrices must be square and of one size")
    R = np.eye(m, dtype=bool)
    for M in mats:
        R |= np.abs(M) > SUPPORT_THRESHOLD
    R = _warshall(R)
    mutual = R & R.T
    classes, seen = [], np.zeros(m, dtype=bool)
    for j in range(m):
        if not seen[j]:
            members = tuple(int(k) for k in np.flatnonzero(mutual[j]))
            seen[list(members)] = True
            classes.append(members)
    reps = [c[0] for c in classes]
    leq = R[np.ix_(reps, reps)]
    topo = FinitePreorderTopology(tuple(classes), leq)
    cycles = tuple(c for c in classes if len(c) > 1)
    dag = None
    if not cycles:
        cover = _transitive_reduction(R)
        dag = Dag(m, [(int(j), int(k)) for j, k in zip(*np.nonzero(cover))])
    return Spatialization(topo, R, dag, cycles)


def reflexive_transitive_closure(d: Dag) -> np.ndarray:
    return _warshall(d.adjacency() | np.eye(d.m, dtype=bool))


def subspace_from_json(text: str) -> list[np.ndarray]:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DecodeError(f"subspace is not valid JSON: {exc}") from None
    if isinstance(doc, dict):
        doc = doc.get("matrices")
    if not isinstance(doc, list):
        raise DecodeError("subspace must be a JSON list of square matrices")
    try:
        return [np.asarray(M, dtype=float) for M in doc]
    except (TypeError, ValueError) as exc:
        raise DecodeError(f"subspace entry is not a numeric matrix: {exc}") from None
