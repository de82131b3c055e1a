"""Domain types for signalling-game communication protocols.

A *derivation* is a small tree of concepts describing a situation (a colour
paired with a shape, optionally wrapped in a conversational context).  A
*protocol* is a total mapping from an enumerated derivation set to messages
over a finite symbol alphabet.  Everything downstream -- the protocol
generators and every compositionality metric -- consumes these types.

All types are immutable after construction and safe to share across workers.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterator, Literal, Union

Category = Literal["colour", "shape", "context"]

#: Labels of the three conversational contexts, in enumeration order.
CONTEXT_LABELS = ("colour", "shape", "both")

#: Reserved label used when padding messages to a fixed length.  It never
#: appears inside an unpadded message.
PAD_LABEL = "_"

#: Reserved labels of the negation protocol.
NEGATION_LABEL = "!"
BOX_WORD_LABEL = "x"

_LETTERS = "abcdefghijklmnopqrstuvwxyz"


@dataclass(frozen=True)
class Concept:
    """A primitive derivation: one colour, shape or context tag."""

    category: Category
    index: int
    label: str

    def __post_init__(self) -> None:
        if self.index < 0:
            raise ValueError(f"concept index must be non-negative, got {self.index}")


@dataclass(frozen=True)
class ConceptSpace:
    """The primitive concepts available to a game, grouped by category.

    ``contexts`` is present only for the context-sensitive game and is then
    exactly (colour, shape, both).
    """

    colours: tuple[Concept, ...]
    shapes: tuple[Concept, ...]
    contexts: tuple[Concept, ...] | None = None

    def __post_init__(self) -> None:
        if not self.colours or not self.shapes:
            raise ValueError("concept space needs at least one colour and one shape")
        if self.contexts is not None:
            got = tuple(c.label for c in self.contexts)
            if got != CONTEXT_LABELS:
                raise ValueError(f"contexts must be {CONTEXT_LABELS}, got {got}")
        labels = [c.label for c in self.concepts()]
        if len(set(labels)) != len(labels):
            raise ValueError("concept labels must be unique across categories")

    @property
    def n_colours(self) -> int:
        return len(self.colours)

    @property
    def n_shapes(self) -> int:
        return len(self.shapes)

    def concepts(self) -> tuple[Concept, ...]:
        """All concepts, colours first, then shapes, then contexts."""
        out = self.colours + self.shapes
        if self.contexts is not None:
            out = out + self.contexts
        return out


@dataclass(frozen=True)
class Leaf:
    concept: Concept


@dataclass(frozen=True)
class Node:
    left: "Derivation"
    right: "Derivation"


#: A derivation is a leaf concept or an ordered pair of sub-derivations.
#: Only two shapes occur here: node(leaf, leaf) for the standard game and
#: node(leaf(context), node(leaf, leaf)) for the context-sensitive one.
Derivation = Union[Leaf, Node]

DerivationShape = Literal["standard", "context_sensitive"]


@dataclass(frozen=True)
class Symbol:
    index: int
    label: str

    def __post_init__(self) -> None:
        if self.index < 0:
            raise ValueError(f"symbol index must be non-negative, got {self.index}")
        if not self.label:
            raise ValueError("symbol label must be non-empty")


@dataclass(frozen=True)
class Message:
    """A non-empty, ordered sequence of symbols."""

    symbols: tuple[Symbol, ...]

    def __post_init__(self) -> None:
        if len(self.symbols) == 0:
            raise ValueError("messages must contain at least one symbol")

    def __len__(self) -> int:
        return len(self.symbols)

    def __iter__(self) -> Iterator[Symbol]:
        return iter(self.symbols)

    def labels(self) -> tuple[str, ...]:
        return tuple(s.label for s in self.symbols)


@dataclass(frozen=True)
class Protocol:
    """A total mapping from an enumerated derivation list to messages.

    ``entries`` preserves enumeration order; ``max_len`` equals the longest
    message length.  Construction validates totality over the given list,
    alphabet closure and the length bookkeeping.
    """

    name: str
    alphabet: tuple[Symbol, ...]
    entries: dict[Derivation, Message] = field(repr=False)
    max_len: int

    def __post_init__(self) -> None:
        if not self.entries:
            raise ValueError("a protocol must map at least one derivation")
        allowed = set(self.alphabet)
        if len(allowed) != len(self.alphabet):
            raise ValueError("alphabet contains duplicate symbols")
        longest = 0
        for message in self.entries.values():
            longest = max(longest, len(message))
            for sym in message:
                if sym not in allowed:
                    raise ValueError(f"message symbol {sym.label!r} not in alphabet")
                if sym.label == PAD_LABEL:
                    raise ValueError("PAD must not appear in an unpadded message")
        if self.max_len != longest:
            raise ValueError(f"max_len is {self.max_len} but longest message is {longest}")

    @property
    def derivations(self) -> tuple[Derivation, ...]:
        return tuple(self.entries)

    def message(self, d: Derivation) -> Message:
        return self.entries[d]


def symbol_label(index: int) -> str:
    """Deterministic printable label for a symbol index: a..z, then aa..zz, etc."""
    if index < 0:
        raise ValueError("symbol index must be non-negative")
    chars = []
    i = index
    while True:
        chars.append(_LETTERS[i % 26])
        i = i // 26 - 1
        if i < 0:
            break
    return "".join(reversed(chars))


def make_alphabet(n: int, skip: tuple[str, ...] = ()) -> tuple[Symbol, ...]:
    """First ``n`` symbols of the generated label sequence, skipping reserved labels."""
    out: list[Symbol] = []
    i = 0
    while len(out) < n:
        label = symbol_label(i)
        i += 1
        if label in skip:
            continue
        out.append(Symbol(index=len(out), label=label))
    return tuple(out)


def build_concept_space(
    n_colours: int, n_shapes: int, with_contexts: bool = False
) -> ConceptSpace:
    """Concept space with generated labels c0.., s0.. and optional contexts."""
    if n_colours < 1 or n_shapes < 1:
        raise ValueError("category sizes must be at least 1")
    colours = tuple(Concept("colour", i, f"c{i}") for i in range(n_colours))
    shapes = tuple(Concept("shape", i, f"s{i}") for i in range(n_shapes))
    contexts = None
    if with_contexts:
        contexts = tuple(Concept("context", i, lab) for i, lab in enumerate(CONTEXT_LABELS))
    return ConceptSpace(colours=colours, shapes=shapes, contexts=contexts)


def enumerate_derivations(
    space: ConceptSpace, shape: DerivationShape = "standard"
) -> tuple[Derivation, ...]:
    """All derivations of the requested shape, in colour-major order.

    Standard: (colour, shape) pairs, colours outermost.  Context-sensitive:
    every pair is repeated under the three contexts, contexts innermost, so
    the colour-major ordering of the pairs is preserved.
    """
    if shape == "standard":
        return tuple(
            Node(Leaf(c), Leaf(s)) for c in space.colours for s in space.shapes
        )
    if shape == "context_sensitive":
        if space.contexts is None:
            raise ValueError("context_sensitive enumeration needs a space with contexts")
        return tuple(
            Node(Leaf(k), Node(Leaf(c), Leaf(s)))
            for c in space.colours
            for s in space.shapes
            for k in space.contexts
        )
    raise ValueError(f"unknown derivation shape {shape!r}")


def flatten(d: Derivation) -> tuple[Concept, ...]:
    """Left-to-right leaf concepts: (colour, shape) or (context, colour, shape).

    Rejects anything that is not one of the two legal derivation shapes,
    including bare leaves and deeper trees.
    """
    if isinstance(d, Node) and isinstance(d.left, Leaf):
        if isinstance(d.right, Leaf):
            return (d.left.concept, d.right.concept)
        if (
            isinstance(d.right, Node)
            and isinstance(d.right.left, Leaf)
            and isinstance(d.right.right, Leaf)
        ):
            return (d.left.concept, d.right.left.concept, d.right.right.concept)
    raise ValueError(f"derivation does not have a legal shape: {d!r}")


# --- JSON serialisation ----------------------------------------------------
#
# Field order is fixed so that equal inputs give byte-identical dumps.


def space_to_json(space: ConceptSpace) -> str:
    obj = {
        "colours": [c.label for c in space.colours],
        "shapes": [s.label for s in space.shapes],
        "contexts": None if space.contexts is None else [k.label for k in space.contexts],
    }
    return json.dumps(obj, indent=2)


def protocol_to_json(p: Protocol) -> str:
    obj = {
        "name": p.name,
        "alphabet": [s.label for s in p.alphabet],
        "entries": [
            {
                "derivation": [c.label for c in flatten(d)],
                "message": list(m.labels()),
            }
            for d, m in p.entries.items()
        ],
    }
    return json.dumps(obj, indent=2)
