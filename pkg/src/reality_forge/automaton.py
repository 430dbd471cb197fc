"""Moore automata as black boxes with an unknown initial state.

An experiment feeds an input word and records the output word.  Grouping
the candidate initial states by the output they produce gives a partition;
the propositions an experimenter can verify are unions of cells of such
partitions.  Two experiments are complementary when running one destroys
the information the other would have delivered.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from typing import Callable, Hashable, Iterable, Sequence

from ._validation import check_positive_int
from .errors import ConfigError, DecodeError, UnknownState, UnknownSymbol

Word = tuple
LOGIC_MODES = ("all_cells", "designated")


@dataclass(frozen=True)
class MooreAutomaton:
    """Finite Moore machine.

    ``delta[state][input]`` is the next state and ``omega[state]`` the
    output shown in that state.  ``initial_states`` lists the candidate
    initial states of the experimenter's ensemble (all states by default);
    partitions and propositions are subsets of it.
    """

    states: tuple
    inputs: tuple
    outputs: tuple
    delta: dict
    omega: dict
    initial_states: tuple = None
    _order: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        for name in ("states", "inputs", "outputs"):
            seq = tuple(getattr(self, name))
            if len(set(seq)) != len(seq):
                raise ConfigError(f"{name} contains duplicates")
            object.__setattr__(self, name, seq)
        if not self.states:
            raise ConfigError("an automaton needs at least one state")
        states, inputs, outputs = set(self.states), set(self.inputs), set(self.outputs)
        for s in self.states:
            if s not in self.omega:
                raise ConfigError(f"omega is undefined for state {s!r}")
            if self.omega[s] not in outputs:
                raise UnknownSymbol(f"omega({s!r}) = {self.omega[s]!r} is not an output symbol")
            row = self.delta.get(s)
            if row is None:
                raise ConfigError(f"delta is undefined for state {s!r}")
            for a in self.inputs:
                if a not in row:
                    raise ConfigError(f"delta is undefined for ({s!r}, {a!r})")
                if row[a] not in states:
                    raise UnknownState(f"delta({s!r}, {a!r}) = {row[a]!r} is not a state")
            extra = set(row) - inputs
            if extra:
                raise UnknownSymbol(f"delta row of {s!r} uses unknown inputs {sorted(map(str, extra))}")
        extra = set(self.delta) - states
        if extra:
            raise UnknownState(f"delta has rows for unknown states {sorted(map(str, extra))}")
        init = self.states if self.initial_states is None else tuple(self.initial_states)
        if not init:
            raise ConfigError("initial_states must be nonempty")
        for s in init:
            if s not in states:
                raise UnknownState(f"initial state {s!r} is not a state")
        if len(set(init)) != len(init):
            raise ConfigError("initial_states contains duplicates")
        object.__setattr__(self, "initial_states", init)
        object.__setattr__(self, "delta", {s: dict(self.delta[s]) for s in self.states})
        object.__setattr__(self, "omega", {s: self.omega[s] for s in self.states})
        object.__setattr__(self, "_order", {s: k for k, s in enumerate(self.states)})

    @property
    def omega_set(self) -> frozenset:
        """The full proposition ``Omega``: every candidate initial state."""
        return frozenset(self.initial_states)

    def sort_key(self, subset: Iterable) -> tuple:
        idx = sorted(self._order[s] for s in subset)
        return (len(idx), idx)

    def check_word(self, w: Sequence) -> Word:
        w = tuple(w)
        for a in w:
            if a not in self.delta[self.states[0]]:
                raise UnknownSymbol(f"input symbol {a!r} is not in the alphabet")
        return w

    # ---------------------------------------------------------------- I/O

    def to_dict(self) -> dict:
        doc = {
            "states": list(self.states),
            "inputs": list(self.inputs),
            "outputs": list(self.outputs),
            "delta": {str(s): {str(a): self.delta[s][a] for a in self.inputs} for s in self.states},
            "omega": {str(s): self.omega[s] for s in self.states},
        }
        if self.initial_states != self.states:
            doc["initial_states"] = list(self.initial_states)
        return doc

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    @classmethod
    def from_dict(cls, doc: dict) -> "MooreAutomaton":
        # JSON object keys are strings, so every symbol is read as a string
        try:
            init = doc.get("initial_states")
            return cls(
                tuple(map(str, doc["states"])),
                tuple(map(str, doc["inputs"])),
                tuple(map(str, doc["outputs"])),
                {str(s): {str(a): str(t) for a, t in row.items()} for s, row in doc["delta"].items()},
                {str(s): str(o) for s, o in doc["omega"].items()},
                None if init is None else tuple(map(str, init)),
            )
        except (KeyError, TypeError, AttributeError) as exc:
            raise DecodeError(f"malformed automaton document: {exc!r}") from None

    @classmethod
    def from_json(cls, text: str) -> "MooreAutomaton":
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise DecodeError(f"automaton is not valid JSON: {exc}") from None
        if not isinstance(doc, dict):
            raise DecodeError("automaton document must be a JSON object")
        return cls.from_dict(doc)


@dataclass(frozen=True)
class StatePartition:
    cells: tuple  # of frozensets, in order of first appearance along initial_states
    experiment: Word
    outcomes: tuple  # output word of each cell

    def cell_of(self, state) -> frozenset:
        for c in self.cells:
            if state in c:
                return c
        raise UnknownState(f"{state!r} is not covered by the partition")

    def refines(self, other: "StatePartition") -> bool:
        """Every cell of ``self`` lies inside a cell of ``other``."""
        return all(any(c <= d for d in other.cells) for c in self.cells)


@dataclass(frozen=True)
class PropositionPoset:
    elements: tuple  # frozensets, sorted by (size, state order)
    omega: frozenset
    labels: tuple = ()  # state order used for rendering

    def __contains__(self, subset) -> bool:
        return frozenset(subset) in set(self.elements)

    def __len__(self):
        return len(self.elements)

    def as_sets(self) -> set:
        return set(self.elements)

    def hasse_edges(self) -> list[tuple[int, int]]:
        """Covering pairs ``(i, j)``: ``elements[i]`` is covered by ``elements[j]``."""
        els = self.elements
        below = {
            j: [i for i in range(len(els)) if els[i] < els[j]] for j in range(len(els))
        }
        edges = []
        for j, lower in below.items():
            for i in lower:
                if not any(els[i] < els[k] for k in lower if k != i):
                    edges.append((i, j))
        return sorted(edges)

    def to_dict(self) -> dict:
        order = {s: k for k, s in enumerate(self.labels)}

        def render(subset):
            return sorted(subset, key=lambda s: order.get(s, len(order)))

        return {
            "elements": [render(e) for e in self.elements],
            "hasse_edges": [list(e) for e in self.hasse_edges()],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"


# --------------------------------------------------------------------------
# experiments


def run_experiment(m: MooreAutomaton, w: Sequence, s0: Hashable) -> Word:
    """Outputs ``omega(s0)`` then ``omega`` after each transition (``len(w) + 1`` symbols)."""
    if s0 not in m.delta:
        raise UnknownState(f"{s0!r} is not a state")
    w = m.check_word(w)
    s = s0
    out = [m.omega[s]]
    for a in w:
        s = m.delta[s][a]
        out.append(m.omega[s])
    return tuple(out)


def experiment_partition(m: MooreAutomaton, w: Sequence) -> StatePartition:
    """Group the candidate initial states by the output word ``w`` produces."""
    w = m.check_word(w)
    groups: dict[Word, list] = {}
    for s in m.initial_states:
        groups.setdefault(run_experiment(m, w, s), []).append(s)
    return StatePartition(tuple(frozenset(g) for g in groups.values()), w, tuple(groups))


def words(m: MooreAutomaton, max_len: int):
    """All input words of length ``0..max_len`` in length-lexicographic order."""
    for k in range(max_len + 1):
        yield from itertools.product(m.inputs, repeat=k)


def _as_predicate(verified) -> Callable[[Word], bool]:
    if callable(verified):
        return verified
    return lambda outcome: outcome[-1] == verified


def property_logic(
    m: MooreAutomaton,
    max_len: int,
    mode: str = "all_cells",
    verified=None,
) -> PropositionPoset:
    """Propositions verifiable by experiments of length at most ``max_len``.

    ``all_cells`` keeps every union of cells within one partition.
    ``designated`` keeps only the cells whose output word counts as a
    verification: ``verified`` is either a predicate on the output word or
    an output symbol that the last output must equal.  ``{}`` and
    ``Omega`` are always present.
    """
    check_positive_int(max_len, "max_len", minimum=0)
    if mode not in LOGIC_MODES:
        raise ConfigError(f"mode must be one of {LOGIC_MODES}, got {mode!r}")
    if mode == "designated" and verified is None:
        raise ConfigError("designated mode needs a verification predicate or output symbol")
    full = m.omega_set
    props = {frozenset(), full}
    pred = _as_predicate(verified) if mode == "designated" else None
    for w in words(m, max_len):
        part = experiment_partition(m, w)
        if mode == "all_cells":
            cells = part.cells
            for r in range(1, len(cells) + 1):
                for combo in itertools.combinations(cells, r):
                    props.add(frozenset().union(*combo))
        else:
            for cell, outcome in zip(part.cells, part.outcomes):
                if pred(outcome):
                    props.add(cell)
    return PropositionPoset(tuple(sorted(props, key=m.sort_key)), full, m.initial_states)


def is_complementary(m: MooreAutomaton, w1: Sequence, w2: Sequence) -> bool:
    """Whether two experiments exclude each other.

    True iff neither partition refines the other, and running either word
    first destroys what the other would reveal: the partition of ``w1 w2``
    does not refine that of ``w2``, and the partition of ``w2 w1`` does not
    refine that of ``w1``.
    """
    w1, w2 = m.check_word(w1), m.check_word(w2)
    p1, p2 = experiment_partition(m, w1), experiment_partition(m, w2)
    if p1.refines(p2) or p2.refines(p1):
        return False
    p12 = experiment_partition(m, w1 + w2)
    p21 = experiment_partition(m, w2 + w1)
    return not p12.refines(p2) and not p21.refines(p1)


# --------------------------------------------------------------------------
# presets


def toggler() -> MooreAutomaton:
    """Two states; input ``a`` flips the state; the output is the state name."""
    return MooreAutomaton(
        ("0", "1"), ("a",), ("0", "1"), {"0": {"a": "1"}, "1": {"a": "0"}}, {"0": "0", "1": "1"}
    )


def _probe_automaton(move: Callable[[int], int]) -> MooreAutomaton:
    """Four positions 1..4 probed by inputs 1..4.

    Unprobed positions show ``idle``; probing ``k`` reports ``hit`` iff
    the position is ``k`` and moves the position by ``move``.
    """
    positions = ["1", "2", "3", "4"]
    states = positions + [f"{p}/{r}" for p in positions for r in ("hit", "miss")]
    delta, omega = {}, {}
    for s in states:
        pos = int(s.split("/")[0])
        omega[s] = s.split("/")[1] if "/" in s else "idle"
        delta[s] = {
            str(k): f"{move(pos)}/{'hit' if pos == k else 'miss'}" for k in range(1, 5)
        }
    return MooreAutomaton(
        tuple(states), tuple(positions), ("idle", "hit", "miss"), delta, omega, tuple(positions)
    )


def hit_detector() -> MooreAutomaton:
    """Probing ``k`` reports whether the position is ``k`` and leaves it unchanged."""
    return _probe_automaton(lambda pos: pos)


def finkelstein() -> MooreAutomaton:
    """Probing reports hit/miss and moves the position to its clockwise
    neighbor on the square 1-2-3-4, so a second probe sees a disturbed state."""
    return _probe_automaton(lambda pos: pos % 4 + 1)


PRESETS = {"toggler": toggler, "hit_detector": hit_detector, "finkelstein": finkelstein}
