"""Speaker-aware directed acyclic conversation graphs.

Each utterance ``i >= 2`` looks back over earlier utterances, newest first,
linking every one it visits. The look-back stops once ``omega`` utterances
by the same speaker as ``i`` have been linked. Edge relation 1 marks
same-speaker links, 0 different-speaker links.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Sequence

import numpy as np

from lsdgnn.errors import ConfigError, DataError, FormatError, LabelIndexError

MODALITIES = ("text", "audio", "visual")

Edge = tuple[int, int, int]  # (source, target, relation), 1-based


@dataclass(frozen=True, eq=False)
class Utterance:
    index: int
    speaker: str
    label: int | None = None
    text: np.ndarray | None = None
    audio: np.ndarray | None = None
    visual: np.ndarray | None = None

    def __post_init__(self):
        if self.index < 1:
            raise DataError(f"utterance index must be >= 1, got {self.index}")
        if not self.speaker:
            raise DataError(f"utterance {self.index}: empty speaker")
        for m in MODALITIES:
            v = getattr(self, m)
            if v is not None:
                object.__setattr__(self, m, np.asarray(v, dtype=np.float64).reshape(-1))


@dataclass(frozen=True, eq=False)
class Conversation:
    id: str
    utterances: tuple[Utterance, ...]

    def __post_init__(self):
        utts = tuple(self.utterances)
        object.__setattr__(self, "utterances", utts)
        indices = [u.index for u in utts]
        if len(set(indices)) != len(indices):
            raise FormatError(f"conversation {self.id!r}: duplicate utterance indices")
        if indices != list(range(1, len(utts) + 1)):
            raise FormatError(f"conversation {self.id!r}: utterance indices must be 1..N in order")

    def __len__(self) -> int:
        return len(self.utterances)

    @property
    def speakers(self) -> tuple[str, ...]:
        return tuple(u.speaker for u in self.utterances)

    @property
    def labels(self) -> list[int | None]:
        return [u.label for u in self.utterances]

    @cached_property
    def features(self) -> dict[str, np.ndarray]:
        """Per-modality (n, width) matrices; absent modalities have width 0."""
        out = {}
        for m in MODALITIES:
            rows = [getattr(u, m) for u in self.utterances]
            width = max((0 if r is None else r.size) for r in rows)
            mat = np.zeros((len(rows), width))
            for k, r in enumerate(rows):
                if r is not None and r.size:
                    if r.size != width:
                        raise DataError(
                            f"conversation {self.id!r} utterance {k + 1}: {m} width {r.size} != {width}"
                        )
                    mat[k] = r
            out[m] = mat
        return out


def _check_omega(omega: int | None) -> None:
    if omega is not None and (isinstance(omega, bool) or not isinstance(omega, int) or omega < 1):
        raise ConfigError(f"omega must be a positive integer or None (unbounded), got {omega!r}")


@dataclass(frozen=True)
class ConversationDAG:
    """Nodes ``1..n_nodes``; ``edges`` sorted by (target, source)."""

    n_nodes: int
    edges: tuple[Edge, ...]
    omega: int | None
    speakers: tuple[str, ...]
    _preds: tuple[tuple[tuple[int, int], ...], ...] = field(init=False, repr=False, compare=False)
    _violations: list = field(init=False, repr=False, compare=False, default=None)

    def __post_init__(self):
        edges = tuple(sorted(self.edges, key=lambda e: (e[1], e[0])))
        object.__setattr__(self, "edges", edges)
        preds: list[list[tuple[int, int]]] = [[] for _ in range(self.n_nodes + 1)]
        for s, t, r in edges:
            if 1 <= t <= self.n_nodes:
                preds[t].append((s, r))
        object.__setattr__(self, "_preds", tuple(tuple(p) for p in preds))

    def edge_set(self) -> frozenset[Edge]:
        return frozenset(self.edges)

    def is_valid(self) -> bool:
        if self._violations is None:
            object.__setattr__(self, "_violations", validate_dag(self))
        return not self._violations

    @cached_property
    def pred_arrays(self) -> tuple[tuple[np.ndarray, tuple[tuple[int, np.ndarray], ...]], ...]:
        """Per node (0-based): source positions and, per relation present, positions into them."""
        out = []
        for i in range(1, self.n_nodes + 1):
            p = self._preds[i]
            idx = np.array([s - 1 for s, _ in p], dtype=np.intp)
            rel = np.array([r for _, r in p], dtype=np.intp)
            groups = tuple((r, np.flatnonzero(rel == r)) for r in (0, 1) if np.any(rel == r))
            out.append((idx, groups))
        return tuple(out)

    def attention_mask(self):
        """(n, n) 0/1 matrix with ``[i-1, j-1] = 1`` for every edge j -> i."""
        mask = np.zeros((self.n_nodes, self.n_nodes))
        for s, t, _ in self.edges:
            mask[t - 1, s - 1] = 1.0
        return mask


def build_dag(conversation: Conversation | Sequence[str], omega: int | None) -> ConversationDAG:
    """Build the graph for a conversation (or a bare speaker sequence).

    ``omega=None`` means unbounded look-back (every earlier utterance).
    """
    _check_omega(omega)
    if isinstance(conversation, Conversation):
        speakers = conversation.speakers
    else:
        speakers = tuple(conversation)
    if not speakers:
        raise ConfigError("cannot build a graph for an empty conversation")
    # Positions (0-based) of each speaker's utterances seen so far.
    history: dict[str, list[int]] = {}
    edges: list[Edge] = []
    for i, spk in enumerate(speakers):
        own = history.setdefault(spk, [])
        if i > 0:
            if omega is None or len(own) < omega:
                start = 0
            else:
                start = own[-omega]
            for j in range(start, i):
                edges.append((j + 1, i + 1, int(speakers[j] == spk)))
        own.append(i)
    return ConversationDAG(n_nodes=len(speakers), edges=tuple(edges), omega=omega, speakers=speakers)


def predecessors(dag: ConversationDAG, i: int) -> tuple[tuple[int, int], ...]:
    """``(source, relation)`` pairs of edges into node ``i``, sources ascending."""
    if not 1 <= i <= dag.n_nodes:
        raise LabelIndexError(f"node {i} out of range [1, {dag.n_nodes}]")
    return dag._preds[i]


def validate_dag(dag: ConversationDAG) -> list[str]:
    """Every invariant violation found in ``dag`` (empty list means valid)."""
    problems: list[str] = []
    n = dag.n_nodes
    if len(dag.speakers) != n:
        problems.append(f"speaker count {len(dag.speakers)} != n_nodes {n}")
    seen: set[tuple[int, int]] = set()
    same_count: dict[int, int] = {}
    for s, t, r in dag.edges:
        tag = f"edge ({s},{t},{r})"
        if not (1 <= s <= n and 1 <= t <= n):
            problems.append(f"{tag}: node index out of range")
            continue
        if (s, t) in seen:
            problems.append(f"{tag}: duplicate edge")
        seen.add((s, t))
        if not s < t:
            problems.append(f"{tag}: violates source < target")
        if t == 1:
            problems.append(f"{tag}: node 1 must have no incoming edges")
        if r not in (0, 1):
            problems.append(f"{tag}: relation must be 0 or 1")
        elif len(dag.speakers) == n and r != int(dag.speakers[s - 1] == dag.speakers[t - 1]):
            problems.append(f"{tag}: relation/speaker mismatch")
        if r == 1:
            same_count[t] = same_count.get(t, 0) + 1
    if dag.omega is not None:
        for t, count in sorted(same_count.items()):
            if count > dag.omega:
                problems.append(f"node {t}: {count} same-speaker sources exceed omega={dag.omega}")
    return problems


def format_edge_list(dag: ConversationDAG) -> str:
    """``source target relation`` per line, sorted by (target, source)."""
    return "".join(f"{s} {t} {r}\n" for s, t, r in dag.edges)


def parse_edge_list(text: str) -> list[Edge]:
    edges = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 3:
            raise FormatError(f"expected 'source target relation', got {line!r}", lineno)
        try:
            edges.append(tuple(int(p) for p in parts))
        except ValueError:
            raise FormatError(f"non-integer field in {line!r}", lineno) from None
    return edges


def edges_subset(small: Iterable[Edge], large: Iterable[Edge]) -> bool:
    return set(small) <= set(large)
