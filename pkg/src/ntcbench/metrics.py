"""Closed-form compositionality metrics, computed exactly over a protocol.

Five metrics: topographic similarity, positional disentanglement, bag-of-words
disentanglement, context independence and conflict count.  Each consumes the
protocol's entire table (no sampling) and returns a MetricScore carrying the
value, its orientation and whether the metric is defined for the protocol.

Variable-length messages are right-padded with the reserved PAD symbol for
the positional statistics; PAD then behaves as an ordinary symbol value, so
message length itself becomes an information-bearing signal.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import permutations
from typing import Callable, Literal

import numpy as np

from . import _backend
from .core import PAD_LABEL, Concept, Message, Protocol, Symbol, flatten
from .infostats import entropy, joint_counts, mutual_information, spearman

Orientation = Literal["higher", "lower"]

#: Orientation of every metric in the suite (including the trained ones).
ORIENTATIONS: dict[str, Orientation] = {
    "topsim": "higher",
    "posdis": "higher",
    "bosdis": "higher",
    "context_independence": "higher",
    "conflict_count": "lower",
    "generalisation": "higher",
    "tre": "lower",
}


@dataclass(frozen=True)
class MetricScore:
    metric: str
    value: float | None
    orientation: Orientation
    defined: bool = True

    def __post_init__(self) -> None:
        if self.defined and self.value is None:
            raise ValueError("a defined score needs a value")
        if not self.defined and self.value is not None:
            raise ValueError("an undefined score must not carry a value")


def _undefined(metric: str) -> MetricScore:
    return MetricScore(metric, None, ORIENTATIONS[metric], defined=False)


@dataclass(frozen=True)
class PaddedView:
    """Integer-coded table of a protocol, totalised over message positions.

    ``messages`` is right-padded with PAD to the protocol's max length (PAD is
    appended to ``symbols`` only when some message is short); ``slots`` holds
    global concept ids of the flattened derivations, padded with a NONE id
    when tuple lengths were ragged (they never are for the bundled games).
    Padding never alters unpadded prefixes.
    """

    symbols: tuple[Symbol, ...]
    pad_index: int | None
    messages: np.ndarray  # (D, L) int32
    lengths: np.ndarray  # (D,) int32
    concepts: tuple[Concept, ...]
    none_index: int | None
    slots: np.ndarray  # (D, K) int32 global concept ids

    @classmethod
    def from_protocol(cls, p: Protocol) -> "PaddedView":
        sym_id = {s: i for i, s in enumerate(p.alphabet)}
        flats = [flatten(d) for d in p.entries]
        msgs = list(p.entries.values())
        D = len(msgs)
        L = p.max_len
        K = max(len(f) for f in flats)

        lengths = np.array([len(m) for m in msgs], dtype=np.int32)
        pad_needed = bool((lengths < L).any())
        pad_index = len(p.alphabet) if pad_needed else None
        symbols = p.alphabet
        if pad_needed:
            symbols = symbols + (Symbol(len(p.alphabet), PAD_LABEL),)

        messages = np.full((D, L), pad_index if pad_needed else 0, dtype=np.int32)
        for i, m in enumerate(msgs):
            messages[i, : len(m)] = [sym_id[s] for s in m]

        concept_id: dict[Concept, int] = {}
        for f in flats:
            for c in f:
                if c not in concept_id:
                    concept_id[c] = len(concept_id)
        ragged = any(len(f) < K for f in flats)
        none_index = len(concept_id) if ragged else None
        slots = np.full((D, K), -1, dtype=np.int32)
        for i, f in enumerate(flats):
            row = [concept_id[c] for c in f]
            row += [none_index] * (K - len(row))
            slots[i] = row

        return cls(
            symbols=symbols,
            pad_index=pad_index,
            messages=messages,
            lengths=lengths,
            concepts=tuple(concept_id),
            none_index=none_index,
            slots=slots,
        )

    @property
    def n_symbols(self) -> int:
        return len(self.symbols)

    def slot_codes(self, k: int) -> tuple[np.ndarray, int]:
        """Slot column compacted to 0..n-1 codes, plus its cardinality."""
        values, codes = np.unique(self.slots[:, k], return_inverse=True)
        return codes.astype(np.intp), len(values)


def _condensed_hamming(slots: np.ndarray) -> np.ndarray:
    """Pairwise Hamming distances between flattened derivations, condensed."""
    D, K = slots.shape
    iu, ju = np.triu_indices(D, k=1)
    out = np.zeros(iu.size, dtype=np.int32)
    for k in range(K):
        col = slots[:, k]
        out += (col[iu] != col[ju]).astype(np.int32)
    return out


def topographic_similarity(p: Protocol) -> MetricScore:
    """Spearman correlation between message edit distances and derivation
    Hamming distances over all unordered derivation pairs."""
    view = PaddedView.from_protocol(p)
    if view.messages.shape[0] < 2:
        raise ValueError("topographic similarity needs at least two derivations")
    lev = _backend.levenshtein_matrix(view.messages, view.lengths)
    ham = _condensed_hamming(view.slots)
    rho = spearman(lev, ham)
    if rho is None:
        return _undefined("topsim")
    return MetricScore("topsim", float(rho), "higher")


def _top_two_gap(mis: list[float]) -> float:
    """I(top concept slot) - I(runner-up), ties broken by lowest slot index."""
    order = sorted(range(len(mis)), key=lambda k: (-mis[k], k))
    return mis[order[0]] - mis[order[1]]


def positional_disentanglement(p: Protocol) -> MetricScore:
    """For each message position: the gap between the two most informative
    concept slots, normalised by the position's entropy.  Positions with zero
    entropy are ignored; undefined when every position is constant."""
    view = PaddedView.from_protocol(p)
    D, L = view.messages.shape
    if D < 2:
        raise ValueError("positional disentanglement needs at least two derivations")
    K = view.slots.shape[1]
    if K < 2:
        raise ValueError("need at least two concept slots")
    slot_data = [view.slot_codes(k) for k in range(K)]
    terms = []
    for j in range(L):
        col = view.messages[:, j].astype(np.intp)
        counts = np.bincount(col, minlength=view.n_symbols)
        if np.count_nonzero(counts) < 2:
            continue
        h = entropy(counts)
        mis = [
            mutual_information(joint_counts(col, codes, view.n_symbols, n_vals))
            for codes, n_vals in slot_data
        ]
        terms.append(_top_two_gap(mis) / h)
    if not terms:
        return _undefined("posdis")
    return MetricScore("posdis", float(np.mean(terms)), "higher")


def bow_disentanglement(p: Protocol) -> MetricScore:
    """Positional disentanglement's order-free variant: the per-message count
    of each symbol replaces the symbol at a position.  Symbols whose count
    never varies are skipped; undefined when all counts are constant."""
    view = PaddedView.from_protocol(p)
    D, L = view.messages.shape
    if D < 2:
        raise ValueError("bag-of-words disentanglement needs at least two derivations")
    K = view.slots.shape[1]
    if K < 2:
        raise ValueError("need at least two concept slots")
    slot_data = [view.slot_codes(k) for k in range(K)]
    counts = np.zeros((D, view.n_symbols), dtype=np.intp)
    rows = np.arange(D)
    for j in range(L):
        counts[rows, view.messages[:, j]] += 1
    terms = []
    for s in range(view.n_symbols):
        var = counts[:, s]
        hist = np.bincount(var, minlength=L + 1)
        if np.count_nonzero(hist) < 2:
            continue
        h = entropy(hist)
        mis = [
            mutual_information(joint_counts(var, codes, L + 1, n_vals))
            for codes, n_vals in slot_data
        ]
        terms.append(_top_two_gap(mis) / h)
    if not terms:
        return _undefined("bosdis")
    return MetricScore("bosdis", float(np.mean(terms)), "higher")


def context_independence(p: Protocol) -> MetricScore:
    """Mean over concepts of p(s|c) * p(c|s) for the concept's favourite
    symbol s = argmax p(c|s); containment probabilities over the raw
    (unpadded) messages."""
    view = PaddedView.from_protocol(p)
    D, L = view.messages.shape
    n_sym = len(p.alphabet)  # padding plays no role in containment
    n_con = len(view.concepts)

    contains = np.zeros((D, n_sym), dtype=bool)
    for j in range(L):
        active = view.lengths > j
        contains[np.flatnonzero(active), view.messages[active, j]] = True
    present = np.zeros((D, n_con), dtype=bool)
    K = view.slots.shape[1]
    for k in range(K):
        col = view.slots[:, k]
        real = col != (view.none_index if view.none_index is not None else -1)
        present[np.flatnonzero(real), col[real]] = True

    both = present.T.astype(np.int64) @ contains.astype(np.int64)  # (C, S)
    n_c = present.sum(axis=0)
    n_s = contains.sum(axis=0)
    p_s_given_c = both / n_c[:, None]
    with np.errstate(invalid="ignore"):
        p_c_given_s = np.where(n_s > 0, both / np.maximum(n_s, 1)[None, :], 0.0)
    best = np.argmax(p_c_given_s, axis=1)  # ties -> lowest symbol index
    rows = np.arange(n_con)
    ci = float(np.mean(p_s_given_c[rows, best] * p_c_given_s[rows, best]))
    return MetricScore("context_independence", ci, "higher")


def conflict_count(p: Protocol) -> MetricScore:
    """Violations of a one-to-one symbol-position/concept-slot mapping,
    minimised over all position-to-slot permutations by brute force.

    Requires every message to have the same length L = number of concept
    slots; undefined otherwise (negation and context-sensitive games).
    """
    view = PaddedView.from_protocol(p)
    D, L = view.messages.shape
    K = view.slots.shape[1]
    if view.pad_index is not None or L != K:
        return _undefined("conflict_count")
    # violations[j, k]: majority-vote misses when position j names slot k
    viol = np.empty((L, K), dtype=np.int64)
    for j in range(L):
        col = view.messages[:, j].astype(np.intp)
        for k in range(K):
            codes, n_vals = view.slot_codes(k)
            joint = joint_counts(col, codes, view.n_symbols, n_vals)
            viol[j, k] = joint.sum() - joint.max(axis=1).sum()
    best = min(sum(viol[j, phi[j]] for j in range(L)) for phi in permutations(range(K)))
    return MetricScore("conflict_count", float(best), "lower")


#: The five closed-form metrics by harness name.
CLOSED_FORM_METRICS: dict[str, Callable[[Protocol], MetricScore]] = {
    "topsim": topographic_similarity,
    "posdis": positional_disentanglement,
    "bosdis": bow_disentanglement,
    "context_independence": context_independence,
    "conflict_count": conflict_count,
}
