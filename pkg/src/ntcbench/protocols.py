"""Constructors for the nine reference communication protocols.

One trivially-compositional protocol (``tc``), two non-compositional
baselines (``holistic``, ``random``) and six non-trivially compositional
probes (``entangled``, ``rotated``, ``order_sensitive``, ``diagonal``,
``negation``, ``context_sensitive``).  Every generator is a pure function of
(space, seed): identical inputs give identical protocol tables.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .core import (
    BOX_WORD_LABEL,
    NEGATION_LABEL,
    ConceptSpace,
    Derivation,
    Message,
    Protocol,
    Symbol,
    build_concept_space,
    enumerate_derivations,
    flatten,
    make_alphabet,
)


@dataclass(frozen=True)
class ProtocolConfig:
    """Inputs shared by every generator.

    ``seed`` fully determines any randomised choice; the random stream is
    derived from (seed, name) so different families never share draws.
    """

    space: ConceptSpace
    seed: int = 0
    name: str | None = None

    def __post_init__(self) -> None:
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must fit in 64 unsigned bits")


def _rng(config: ProtocolConfig, family: str) -> np.random.Generator:
    name = config.name or family
    tag = int.from_bytes(hashlib.sha256(name.encode()).digest()[:8], "little")
    return np.random.default_rng(np.random.SeedSequence([config.seed, tag]))


def _protocol(name: str, alphabet: tuple[Symbol, ...], entries: dict[Derivation, Message]) -> Protocol:
    max_len = max(len(m) for m in entries.values())
    return Protocol(name=name, alphabet=alphabet, entries=entries, max_len=max_len)


def _square_size(space: ConceptSpace, family: str) -> int:
    if space.n_colours != space.n_shapes:
        raise ValueError(
            f"{family} needs equally many colours and shapes, "
            f"got {space.n_colours}x{space.n_shapes}"
        )
    return space.n_colours


def gen_tc(config: ProtocolConfig) -> Protocol:
    """Trivially compositional: a seeded bijection concept -> symbol, concatenated."""
    space = config.space
    alphabet = make_alphabet(space.n_colours + space.n_shapes)
    perm = _rng(config, "tc").permutation(len(alphabet))
    entries: dict[Derivation, Message] = {}
    for d in enumerate_derivations(space):
        colour, shape = flatten(d)
        s1 = alphabet[perm[colour.index]]
        s2 = alphabet[perm[space.n_colours + shape.index]]
        entries[d] = Message((s1, s2))
    return _protocol(config.name or "tc", alphabet, entries)


def gen_holistic(config: ProtocolConfig, n_symbols: int | None = None) -> Protocol:
    """Messages sampled without replacement from symbol pairs: wholes are
    distinct but parts carry no standalone meaning."""
    space = config.space
    n = n_symbols if n_symbols is not None else max(space.n_colours, space.n_shapes)
    derivations = enumerate_derivations(space)
    if n * n < len(derivations):
        raise ValueError(
            f"alphabet of {n} symbols offers {n * n} pairs "
            f"but {len(derivations)} derivations need distinct messages"
        )
    alphabet = make_alphabet(n)
    codes = _rng(config, "holistic").choice(n * n, size=len(derivations), replace=False)
    entries = {
        d: Message((alphabet[code // n], alphabet[code % n]))
        for d, code in zip(derivations, codes)
    }
    return _protocol(config.name or "holistic", alphabet, entries)


def gen_random(config: ProtocolConfig, n_symbols: int | None = None) -> Protocol:
    """Both symbols drawn independently and uniformly; collisions permitted."""
    space = config.space
    n = n_symbols if n_symbols is not None else max(space.n_colours, space.n_shapes)
    alphabet = make_alphabet(n)
    derivations = enumerate_derivations(space)
    draws = _rng(config, "random").integers(0, n, size=(len(derivations), 2))
    entries = {
        d: Message((alphabet[int(a)], alphabet[int(b)]))
        for d, (a, b) in zip(derivations, draws)
    }
    return _protocol(config.name or "random", alphabet, entries)


def gen_entangled(config: ProtocolConfig) -> Protocol:
    """Both symbols depend on both concepts: s1 = (c - s) mod n, s2 = (c + s) mod n."""
    space = config.space
    n = _square_size(space, "entangled")
    alphabet = make_alphabet(n)
    entries: dict[Derivation, Message] = {}
    for d in enumerate_derivations(space):
        colour, shape = flatten(d)
        s1 = (colour.index - shape.index) % n
        s2 = (colour.index + shape.index) % n
        entries[d] = Message((alphabet[s1], alphabet[s2]))
    return _protocol(config.name or "entangled", alphabet, entries)


def gen_rotated(config: ProtocolConfig) -> Protocol:
    """Coordinate system rotated by 45 degrees, no wrap-around:
    s1 = c - s + n, s2 = c + s, over a 2n+1 symbol alphabet."""
    space = config.space
    n = _square_size(space, "rotated")
    alphabet = make_alphabet(2 * n + 1)
    entries: dict[Derivation, Message] = {}
    for d in enumerate_derivations(space):
        colour, shape = flatten(d)
        s1 = colour.index - shape.index + n
        s2 = colour.index + shape.index
        entries[d] = Message((alphabet[s1], alphabet[s2]))
    return _protocol(config.name or "rotated", alphabet, entries)


def gen_order_sensitive(config: ProtocolConfig) -> Protocol:
    """One shared alphabet; a symbol names a colour in first position and a
    shape in second, via two independent seeded bijections."""
    space = config.space
    n = _square_size(space, "order_sensitive")
    alphabet = make_alphabet(n)
    rng = _rng(config, "order_sensitive")
    colour_perm = rng.permutation(n)
    shape_perm = rng.permutation(n)
    entries: dict[Derivation, Message] = {}
    for d in enumerate_derivations(space):
        colour, shape = flatten(d)
        entries[d] = Message((alphabet[colour_perm[colour.index]], alphabet[shape_perm[shape.index]]))
    return _protocol(config.name or "order_sensitive", alphabet, entries)


def gen_diagonal(config: ProtocolConfig) -> Protocol:
    """Intensity-plus-axis coding with n1 = n_colours - 1, n2 = n_shapes - 1:
    s1 = c + s; s2 = s if c + s <= n1 else n1 - c."""
    space = config.space
    n1 = space.n_colours - 1
    n2 = space.n_shapes - 1
    alphabet = make_alphabet(n1 + n2 + 1)
    entries: dict[Derivation, Message] = {}
    for d in enumerate_derivations(space):
        colour, shape = flatten(d)
        s1 = colour.index + shape.index
        s2 = shape.index if s1 <= n1 else n1 - colour.index
        entries[d] = Message((alphabet[s1], alphabet[s2]))
    return _protocol(config.name or "diagonal", alphabet, entries)


def gen_negation(config: ProtocolConfig) -> Protocol:
    """Two shapes only: shape 0 (the box) has a word, shape 1 (the circle) is
    `not box'.  Messages are (colour, x) or (colour, !, x)."""
    space = config.space
    if space.n_shapes != 2:
        raise ValueError(f"negation needs exactly 2 shapes, got {space.n_shapes}")
    colour_syms = make_alphabet(space.n_colours, skip=(BOX_WORD_LABEL,))
    box = Symbol(space.n_colours, BOX_WORD_LABEL)
    neg = Symbol(space.n_colours + 1, NEGATION_LABEL)
    alphabet = colour_syms + (box, neg)
    perm = _rng(config, "negation").permutation(space.n_colours)
    entries: dict[Derivation, Message] = {}
    for d in enumerate_derivations(space):
        colour, shape = flatten(d)
        c = colour_syms[perm[colour.index]]
        entries[d] = Message((c, box) if shape.index == 0 else (c, neg, box))
    return _protocol(config.name or "negation", alphabet, entries)


def gen_context_sensitive(config: ProtocolConfig) -> Protocol:
    """Message length is a function of context: only the requested concepts
    are communicated."""
    space = config.space
    if space.contexts is None:
        raise ValueError("context_sensitive needs a space with contexts")
    alphabet = make_alphabet(space.n_colours + space.n_shapes)
    perm = _rng(config, "context_sensitive").permutation(len(alphabet))
    entries: dict[Derivation, Message] = {}
    for d in enumerate_derivations(space, "context_sensitive"):
        context, colour, shape = flatten(d)
        sc = alphabet[perm[colour.index]]
        ss = alphabet[perm[space.n_colours + shape.index]]
        if context.label == "colour":
            entries[d] = Message((sc,))
        elif context.label == "shape":
            entries[d] = Message((ss,))
        else:
            entries[d] = Message((sc, ss))
    return _protocol(config.name or "context_sensitive", alphabet, entries)


#: Generator registry in canonical reporting order.
FAMILIES: dict[str, Callable[[ProtocolConfig], Protocol]] = {
    "tc": gen_tc,
    "holistic": gen_holistic,
    "random": gen_random,
    "entangled": gen_entangled,
    "rotated": gen_rotated,
    "order_sensitive": gen_order_sensitive,
    "context_sensitive": gen_context_sensitive,
    "negation": gen_negation,
    "diagonal": gen_diagonal,
}

#: Families requiring equally many colours and shapes.
SQUARE_FAMILIES = ("entangled", "rotated", "order_sensitive")


def space_for_family(
    family: str, n_colours: int, n_shapes: int
) -> tuple[ConceptSpace, list[str]]:
    """Concept space for a protocol family, applying its structural needs.

    Negation forces two shapes, context_sensitive enables contexts, and the
    square families force n_shapes = n_colours.  Returns the space plus
    human-readable notes for every adjustment made.
    """
    notes: list[str] = []
    with_contexts = False
    if family == "negation":
        if n_shapes != 2:
            notes.append(f"negation: n_shapes forced to 2 (requested {n_shapes})")
        n_shapes = 2
    elif family == "context_sensitive":
        with_contexts = True
        notes.append("context_sensitive: contexts (colour, shape, both) enabled")
    elif family in SQUARE_FAMILIES and n_colours != n_shapes:
        notes.append(f"{family}: n_shapes forced to {n_colours} (requested {n_shapes})")
        n_shapes = n_colours
    return build_concept_space(n_colours, n_shapes, with_contexts), notes


def make_protocol(
    family: str, n_colours: int, n_shapes: int, seed: int
) -> tuple[Protocol, list[str]]:
    """Build a named protocol family at the requested grid size."""
    if family not in FAMILIES:
        raise ValueError(f"unknown protocol family {family!r}")
    space, notes = space_for_family(family, n_colours, n_shapes)
    protocol = FAMILIES[family](ProtocolConfig(space=space, seed=seed, name=family))
    return protocol, notes


def format_table(p: Protocol) -> str:
    """Plain-text derivation/message table for eyeballing a protocol."""
    rows = []
    joiner = "" if all(len(s.label) == 1 for s in p.alphabet) else " "
    for d, m in p.entries.items():
        rows.append(("(" + ",".join(c.label for c in flatten(d)) + ")", joiner.join(m.labels())))
    width = max(len(r[0]) for r in rows)
    width = max(width, len("derivation"))
    lines = [f"{'derivation':<{width}}  message"]
    lines.extend(f"{d:<{width}}  {m}" for d, m in rows)
    return "\n".join(lines) + "\n"
