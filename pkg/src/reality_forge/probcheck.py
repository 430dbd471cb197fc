"""Tests for a classical (single sample space) model of measured frequencies.

Four routes are provided:

* :func:`bell_sum` -- the three-variable agreement inequality
  ``P(a=b) + P(b=c) + P(a=c) >= 1``;
* :func:`accardi_fedullo_classical` -- the closed-form condition for three
  dichotomic observables with bistochastic transition matrices;
* :func:`kolmogorov_feasible` -- the general decision, as a linear
  feasibility problem over joint distributions, solved by a self-contained
  phase-1 simplex;
* :func:`accardi_invariant` -- the statistic
  ``A = (P(X) - P(X|~R)) / (P(X|R) - P(X|~R))``, which equals ``P(R)`` and so
  lies in ``[0, 1]`` whenever the law of total probability holds.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from ._validation import check_probability
from .errors import DegenerateDenominator, InconsistentInput, RangeError, ScaleError

MAX_ATOMS = 1_000_000
MAX_TABLEAU_ENTRIES = 50_000_000
FEASIBILITY_TOL = 1e-9
CLASSICAL = "classical"
NONCLASSICAL = "nonclassical"


# --------------------------------------------------------------------------
# domain types


@dataclass(frozen=True)
class DichotomicTriple:
    """Parameters of the bistochastic matrices ``P(A|B)``, ``P(B|C)``, ``P(C|A)``.

    Each matrix is ``[[p, 1-p], [1-p, p]]``: ``p`` is the probability that
    the two observables agree.
    """

    p: float
    q: float
    r: float

    def __post_init__(self):
        for name in ("p", "q", "r"):
            object.__setattr__(self, name, check_probability(getattr(self, name), name))

    def to_family(self) -> "ObservableFamily":
        """The ``T=3, n=2`` family with uniform marginals induced by the triple."""

        def bis(x):
            return [[x, 1.0 - x], [1.0 - x, x]]

        cond = [[None] * 3 for _ in range(3)]
        cond[1][0] = bis(self.p)  # P(A | B)
        cond[2][1] = bis(self.q)  # P(B | C)
        cond[0][2] = bis(self.r)  # P(C | A)
        return ObservableFamily(3, 2, cond, [[0.5, 0.5]] * 3)


class ObservableFamily:
    """``T`` observables with ``n`` values each, plus measured statistics.

    Parameters
    ----------
    T, n : int
    cond : nested sequence, shape ``(T, T, n, n)``
        ``cond[a][b][i][j] = P(A_b = j | A_a = i)``.  Any ``cond[a][b]`` may
        be ``None`` for a pair that was not measured.
    marg : nested sequence, shape ``(T, n)``
        ``marg[a][i] = P(A_a = i)``.
    """

    def __init__(self, T: int, n: int, cond, marg):
        if isinstance(T, bool) or not isinstance(T, (int, np.integer)) or T < 1:
            raise InconsistentInput(f"T must be a positive integer, got {T!r}")
        if isinstance(n, bool) or not isinstance(n, (int, np.integer)) or n < 1:
            raise InconsistentInput(f"n must be a positive integer, got {n!r}")
        self.T, self.n = int(T), int(n)
        self.marg = self._matrix(marg, (self.T, self.n), "marg")
        if len(cond) != self.T or any(len(row) != self.T for row in cond):
            raise InconsistentInput(f"cond must be a {self.T}x{self.T} array of n x n blocks or None")
        self.cond: list[list[np.ndarray | None]] = [
            [None if cond[a][b] is None else self._matrix(cond[a][b], (self.n, self.n), f"cond[{a}][{b}]")
             for b in range(self.T)]
            for a in range(self.T)
        ]
        for a in range(self.T):
            if abs(self.marg[a].sum() - 1.0) > 1e-9:
                raise InconsistentInput(f"marginals of observable {a} sum to {self.marg[a].sum()!r}, not 1")
            for b in range(self.T):
                c = self.cond[a][b]
                if c is None:
                    continue
                bad = np.flatnonzero(np.abs(c.sum(axis=1) - 1.0) > 1e-9)
                if bad.size:
                    raise InconsistentInput(
                        f"row {int(bad[0])} of cond[{a}][{b}] sums to {c[bad[0]].sum()!r}, not 1"
                    )

    @staticmethod
    def _matrix(values, shape, name) -> np.ndarray:
        try:
            arr = np.asarray(values, dtype=float)
        except (TypeError, ValueError):
            raise InconsistentInput(f"{name} is not numeric") from None
        if arr.shape != shape:
            raise InconsistentInput(f"{name} has shape {arr.shape}, expected {shape}")
        if not np.all(np.isfinite(arr)) or np.any(arr < 0) or np.any(arr > 1):
            raise RangeError(f"{name} has entries outside [0, 1]")
        return arr

    def pairs(self):
        """Measured ordered pairs ``(a, b)`` with ``a != b``."""
        return [(a, b) for a in range(self.T) for b in range(self.T) if a != b and self.cond[a][b] is not None]

    def to_dict(self) -> dict:
        return {
            "T": self.T,
            "n": self.n,
            "cond": [[None if c is None else c.tolist() for c in row] for row in self.cond],
            "marg": self.marg.tolist(),
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "ObservableFamily":
        try:
            return cls(doc["T"], doc["n"], doc["cond"], doc["marg"])
        except (KeyError, TypeError) as exc:
            raise InconsistentInput(f"malformed observable family: {exc!r}") from None

    @classmethod
    def from_json(cls, text: str) -> "ObservableFamily":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise InconsistentInput(f"observable family is not valid JSON: {exc}") from None
        if not isinstance(doc, dict):
            raise InconsistentInput("observable family must be a JSON object")
        return cls.from_dict(doc)


@dataclass(frozen=True)
class MelucciStats:
    """Relevance-filtered detection frequencies of a term ``X``."""

    pX: float
    pX_given_R: float
    pX_given_notR: float
    pR: float

    def __post_init__(self):
        for name in ("pX", "pX_given_R", "pX_given_notR", "pR"):
            object.__setattr__(self, name, check_probability(getattr(self, name), name))


class BellResult(NamedTuple):
    sum: float
    classical_consistent: bool


class FeasibilityResult(NamedTuple):
    feasible: bool
    witness: np.ndarray | None
    """Weights over the ``n**T`` atoms in lexicographic order of value tuples."""


# --------------------------------------------------------------------------
# closed forms


def bell_sum(p_ab: float, p_bc: float, p_ac: float) -> BellResult:
    """Sum of the three agreement probabilities and whether it reaches 1."""
    vals = [check_probability(v, name) for v, name in ((p_ab, "p_ab"), (p_bc, "p_bc"), (p_ac, "p_ac"))]
    total = vals[0] + vals[1] + vals[2]
    return BellResult(total, total >= 1.0 - 1e-12)


def accardi_fedullo_classical(t: DichotomicTriple) -> bool:
    """``|p + q - 1| <= r <= 1 - |p - q|`` within ``1e-12``."""
    return abs(t.p + t.q - 1.0) <= t.r + 1e-12 and t.r <= 1.0 - abs(t.p - t.q) + 1e-12


def accardi_invariant(s: MelucciStats) -> float:
    denom = s.pX_given_R - s.pX_given_notR
    if abs(denom) <= 1e-12:
        raise DegenerateDenominator(
            "P(X|R) and P(X|not R) coincide; the invariant is undefined for this term"
        )
    return (s.pX - s.pX_given_notR) / denom


def accardi_invariant_se(s: MelucciStats, se_pX: float, se_R: float, se_notR: float) -> float:
    """Delta-method standard error of :func:`accardi_invariant`.

    The three frequencies are treated as independent estimates (they come
    from separate runs of the experiment).
    """
    denom = s.pX_given_R - s.pX_given_notR
    if abs(denom) <= 1e-12:
        raise DegenerateDenominator("P(X|R) and P(X|not R) coincide; no standard error")
    A = (s.pX - s.pX_given_notR) / denom
    d_pX = 1.0 / denom
    d_R = -A / denom
    d_notR = (A - 1.0) / denom
    return math.sqrt((d_pX * se_pX) ** 2 + (d_R * se_R) ** 2 + (d_notR * se_notR) ** 2)


def classify_accardi(A: float, tol: float = 0.0) -> str:
    """``classical`` iff ``-tol <= A <= 1 + tol``."""
    A = float(A)
    if not math.isfinite(A):
        raise RangeError(f"invariant must be finite, got {A!r}")
    tol = float(tol)
    if not (tol >= 0 and math.isfinite(tol)):
        raise RangeError(f"tol must be a finite nonnegative number, got {tol!r}")
    return CLASSICAL if -tol <= A <= 1.0 + tol else NONCLASSICAL


def total_probability_residual(s: MelucciStats) -> float:
    return s.pX - (s.pX_given_R * s.pR + s.pX_given_notR * (1.0 - s.pR))


# --------------------------------------------------------------------------
# linear feasibility


def _phase_one(A: np.ndarray, b: np.ndarray, tol: float = FEASIBILITY_TOL):
    """Find ``x >= 0`` with ``A x = b`` by the phase-1 simplex method.

    Dense tableau, one artificial variable per row, Bland's rule for both
    the entering and the leaving variable.  Returns ``x`` or ``None``.
    """
    m, k = A.shape
    A = A.copy()
    b = b.copy()
    neg = b < 0
    A[neg] *= -1.0
    b[neg] *= -1.0
    # columns: k structural, m artificial, then right-hand side
    tab = np.zeros((m + 1, k + m + 1))
    tab[:m, :k] = A
    tab[:m, k : k + m] = np.eye(m)
    tab[:m, -1] = b
    basis = np.arange(k, k + m)
    # reduced costs of the artificial-sum objective
    tab[m, :k] = -A.sum(axis=0)
    tab[m, -1] = -b.sum()

    while True:
        cost = tab[m, : k + m]
        entering = np.flatnonzero(cost < -tol)
        if entering.size == 0:
            break
        j = int(entering[0])
        col = tab[:m, j]
        pos = col > tol
        if not np.any(pos):
            # unbounded is impossible for a phase-1 objective bounded below by 0
            break
        ratios = np.full(m, np.inf)
        ratios[pos] = tab[:m, -1][pos] / col[pos]
        best = ratios.min()
        ties = np.flatnonzero(ratios <= best + tol * max(1.0, abs(best)))
        r = int(ties[np.argmin(basis[ties])])
        tab[r] /= tab[r, j]
        others = np.arange(m + 1) != r
        tab[others] -= np.outer(tab[others, j], tab[r])
        basis[r] = j

    if -tab[m, -1] > tol:
        return None
    x = np.zeros(k + m)
    x[basis] = tab[:m, -1]
    x = np.clip(x[:k], 0.0, None)
    return x


def _constraints(f: ObservableFamily):
    atoms = np.array(list(itertools.product(range(f.n), repeat=f.T)), dtype=np.intp).reshape(-1, f.T)
    rows, rhs = [np.ones(len(atoms))], [1.0]
    for a in range(f.T):
        for i in range(f.n):
            rows.append((atoms[:, a] == i).astype(float))
            rhs.append(f.marg[a, i])
    for a, b in f.pairs():
        c = f.cond[a][b]
        for i in range(f.n):
            for j in range(f.n):
                rows.append(((atoms[:, a] == i) & (atoms[:, b] == j)).astype(float))
                rhs.append(c[i, j] * f.marg[a, i])
    return np.vstack(rows), np.asarray(rhs)


def kolmogorov_feasible(f: ObservableFamily) -> FeasibilityResult:
    """Decide whether one joint distribution reproduces all measured statistics.

    The unknowns are weights of the ``n**T`` atoms (value assignments to all
    observables).  Constraints: total mass 1, every marginal, and for each
    measured pair ``P(A_a = i, A_b = j) = cond[a][b][i][j] * marg[a][i]``.
    A returned witness satisfies every constraint within ``1e-9``.
    """
    if f.n**f.T > MAX_ATOMS:
        raise ScaleError(f"{f.n}**{f.T} atoms exceeds the limit of {MAX_ATOMS}")
    n_rows = 1 + f.T * f.n + len(f.pairs()) * f.n * f.n
    if (n_rows + 1) * (f.n**f.T + n_rows + 1) > MAX_TABLEAU_ENTRIES:
        raise ScaleError(f"simplex tableau of {n_rows} rows x {f.n ** f.T} atoms is too large")
    A, b = _constraints(f)
    x = _phase_one(A, b)
    if x is None or np.max(np.abs(A @ x - b)) > FEASIBILITY_TOL:
        return FeasibilityResult(False, None)
    return FeasibilityResult(True, x)


def witness_residual(f: ObservableFamily, witness: Sequence[float]) -> float:
    """Largest constraint violation of ``witness`` against ``f``."""
    A, b = _constraints(f)
    x = np.asarray(witness, dtype=float)
    return float(max(np.max(np.abs(A @ x - b)), -min(0.0, float(x.min()))))


def verdict_report(test: str, inputs: dict, value, verdict: str) -> dict:
    """JSON-ready verdict record ``{test, inputs, value, verdict}``."""
    return {"test": test, "inputs": inputs, "value": value, "verdict": verdict}
