"""Tree reconstruction error: the irreducible loss of the best compositional
approximation of a protocol.

Each concept gets a learnable N-vector (N = alphabet size x max message
length, with PAD joining the alphabet for variable-length protocols); complex
derivations are encoded by recursively applying a composition function
bottom-up.  The N-vector is read as one logit block per message position and
scored with summed cross-entropy against the true message.  Full-batch Adam
minimises the mean loss plus an L2 penalty; the reported TRE excludes the
penalty.

Compositions: ``additive`` (vector addition), ``linear`` (A v1 + B v2) and
``nonlinear`` (a two-layer tanh network).
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Literal

import numpy as np

from .core import Concept, Derivation, Leaf, Node, Protocol, Symbol, PAD_LABEL
from .metrics import PaddedView

CompositionKind = Literal["additive", "linear", "nonlinear"]

COMPOSITIONS = ("additive", "linear", "nonlinear")

#: Gradient-check tolerances per composition (max relative error).
GRAD_CHECK_TOLERANCES = {"additive": 1e-6, "linear": 1e-6, "nonlinear": 1e-4}


class TreDivergenceError(RuntimeError):
    """Raised when training hits a non-finite loss."""


@dataclass(frozen=True)
class TreConfig:
    composition: CompositionKind = "linear"
    epochs: int = 1000
    learning_rate: float = 0.1
    weight_decay: float = 1e-5
    hidden: int = 50
    seed: int = 0

    def __post_init__(self) -> None:
        if self.composition not in COMPOSITIONS:
            raise ValueError(f"unknown composition {self.composition!r}")
        if self.epochs < 1 or self.hidden < 1:
            raise ValueError("epochs and hidden size must be positive")
        if self.learning_rate <= 0 or self.weight_decay < 0:
            raise ValueError("learning rate must be positive, weight decay non-negative")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must fit in 64 unsigned bits")


@dataclass
class TreParams:
    """Concept embeddings plus the composition function's parameters.

    ``comp`` is empty for additive, {A, B} for linear and
    {W2, W11, W12, b1, b2} for nonlinear.
    """

    concepts: tuple[Concept, ...]
    embeddings: np.ndarray  # (n_concepts, N)
    comp: dict[str, np.ndarray] = field(default_factory=dict)


@dataclass
class TreResult:
    tre: float
    loss_curve: np.ndarray  # per-epoch mean loss; tre equals its last entry
    params: TreParams


# --- protocol plan ----------------------------------------------------------


@dataclass(frozen=True)
class _Plan:
    """Batched encoding of a protocol's derivation trees.

    Level-1 nodes are the unique (leaf, leaf) pairs; level-2 nodes (context
    games) pair a leaf with a level-1 node.  Derivation outputs all live on
    one level.  The hot matrices turn per-node gradient scatters into small
    dense matmuls; ``pair_group`` is set when level-2 nodes reference their
    level-1 node in contiguous equal-size blocks (reshape beats scatter then).
    """

    concepts: tuple[Concept, ...]
    n_classes: int
    max_len: int
    targets: np.ndarray  # (D, L) int64 symbol ids, PAD-padded
    pairs1: np.ndarray  # (M1, 2) int64 concept ids
    pairs2: np.ndarray | None  # (M2, 2) int64 (concept id, level-1 row)
    out_idx: np.ndarray  # (D,) rows of the output level
    hot1l: np.ndarray  # (C, M1) one-hot of pairs1[:, 0]
    hot1r: np.ndarray  # (C, M1) one-hot of pairs1[:, 1]
    hot2l: np.ndarray | None  # (C, M2) one-hot of pairs2[:, 0]
    pair_group: int | None

    @property
    def n_dims(self) -> int:
        return self.n_classes * self.max_len


def _build_plan(p: Protocol, use_pad: bool = True) -> _Plan:
    view = PaddedView.from_protocol(p)
    if view.pad_index is not None and not use_pad:
        raise ValueError("padding disabled but the protocol has variable-length messages")

    concept_id: dict[Concept, int] = {}

    def cid(c: Concept) -> int:
        if c not in concept_id:
            concept_id[c] = len(concept_id)
        return concept_id[c]

    pair1_rows: dict[tuple[int, int], int] = {}
    pairs2: list[tuple[int, int]] = []
    out_idx: list[int] = []
    levels: set[int] = set()
    for d in p.entries:
        if isinstance(d, Node) and isinstance(d.left, Leaf) and isinstance(d.right, Leaf):
            key = (cid(d.left.concept), cid(d.right.concept))
            row = pair1_rows.setdefault(key, len(pair1_rows))
            out_idx.append(row)
            levels.add(1)
        elif (
            isinstance(d, Node)
            and isinstance(d.left, Leaf)
            and isinstance(d.right, Node)
            and isinstance(d.right.left, Leaf)
            and isinstance(d.right.right, Leaf)
        ):
            key = (cid(d.right.left.concept), cid(d.right.right.concept))
            row = pair1_rows.setdefault(key, len(pair1_rows))
            pairs2.append((cid(d.left.concept), row))
            out_idx.append(len(pairs2) - 1)
            levels.add(2)
        else:
            raise ValueError(f"derivation does not have a legal shape: {d!r}")
    if len(levels) != 1:
        raise ValueError("protocols mixing derivation depths are not supported")

    def one_hot(ids: np.ndarray, n: int) -> np.ndarray:
        out = np.zeros((n, ids.size))
        out[ids, np.arange(ids.size)] = 1.0
        return out

    n_concepts = len(concept_id)
    pairs1_arr = np.array(sorted(pair1_rows, key=pair1_rows.get), dtype=np.int64)
    pairs2_arr = np.array(pairs2, dtype=np.int64) if 2 in levels else None
    pair_group = None
    hot2l = None
    if pairs2_arr is not None:
        hot2l = one_hot(pairs2_arr[:, 0], n_concepts)
        m1, m2 = len(pairs1_arr), len(pairs2_arr)
        if m2 % m1 == 0:
            size = m2 // m1
            if np.array_equal(pairs2_arr[:, 1], np.repeat(np.arange(m1), size)):
                pair_group = size

    return _Plan(
        concepts=tuple(concept_id),
        n_classes=view.n_symbols,
        max_len=p.max_len,
        targets=view.messages.astype(np.int64),
        pairs1=pairs1_arr,
        pairs2=pairs2_arr,
        out_idx=np.array(out_idx, dtype=np.int64),
        hot1l=one_hot(pairs1_arr[:, 0], n_concepts),
        hot1r=one_hot(pairs1_arr[:, 1], n_concepts),
        hot2l=hot2l,
        pair_group=pair_group,
    )


# --- parameters -------------------------------------------------------------


def _param_shapes(kind: CompositionKind, n_concepts: int, n: int, hidden: int):
    shapes = [("emb", (n_concepts, n))]
    if kind == "linear":
        shapes += [("A", (n, n)), ("B", (n, n))]
    elif kind == "nonlinear":
        shapes += [
            ("W2", (n, hidden)),
            ("W11", (hidden, n)),
            ("W12", (hidden, n)),
            ("b1", (hidden,)),
            ("b2", (n,)),
        ]
    return shapes


def _views(flat: np.ndarray, shapes) -> dict[str, np.ndarray]:
    out = {}
    off = 0
    for name, shape in shapes:
        size = int(np.prod(shape))
        out[name] = flat[off : off + size].reshape(shape)
        off += size
    if off != flat.size:
        raise ValueError("parameter vector does not match layout")
    return out


def _init_flat(kind: CompositionKind, n_concepts: int, n: int, hidden: int, seed: int) -> np.ndarray:
    size = sum(int(np.prod(s)) for _, s in _param_shapes(kind, n_concepts, n, hidden))
    tag = int.from_bytes(hashlib.sha256(b"tre-init").digest()[:8], "little")
    rng = np.random.default_rng(np.random.SeedSequence([seed, tag]))
    return rng.standard_normal(size)  # embeddings and weights alike


def _params_from_views(plan: _Plan, views: dict[str, np.ndarray]) -> TreParams:
    comp = {k: v for k, v in views.items() if k != "emb"}
    return TreParams(concepts=plan.concepts, embeddings=views["emb"], comp=comp)


# --- composition ------------------------------------------------------------


def _compose_fwd(kind: CompositionKind, par: dict[str, np.ndarray], x1, x2):
    """Returns (output, cache-for-backward). Inputs are (M, N) or (N,)."""
    if kind == "additive":
        return x1 + x2, None
    if kind == "linear":
        return x1 @ par["A"].T + x2 @ par["B"].T, None
    t = np.tanh(x1 @ par["W11"].T + x2 @ par["W12"].T + par["b1"])
    return t @ par["W2"].T + par["b2"], t


def _compose_bwd(kind, par, grads, x1, x2, t, dz):
    """Accumulates parameter grads into ``grads``; returns (dx1, dx2)."""
    if kind == "additive":
        return dz, dz
    if kind == "linear":
        grads["A"] += dz.T @ x1
        grads["B"] += dz.T @ x2
        return dz @ par["A"], dz @ par["B"]
    dt = dz @ par["W2"]
    grads["W2"] += dz.T @ t
    grads["b2"] += dz.sum(axis=0)
    dpre = dt * (1.0 - t * t)
    grads["W11"] += dpre.T @ x1
    grads["W12"] += dpre.T @ x2
    grads["b1"] += dpre.sum(axis=0)
    return dpre @ par["W11"], dpre @ par["W12"]


def compose(kind: CompositionKind, params: TreParams, v1: np.ndarray, v2: np.ndarray) -> np.ndarray:
    """Apply the composition function to two representation vectors."""
    v1 = np.asarray(v1, dtype=np.float64)
    v2 = np.asarray(v2, dtype=np.float64)
    if v1.shape != v2.shape or v1.shape[-1] != params.embeddings.shape[1]:
        raise ValueError("operand dimensions do not match the parameters")
    out, _ = _compose_fwd(kind, params.comp, v1, v2)
    return out


def reconstruct(p: Protocol, d: Derivation, params: TreParams, kind: CompositionKind) -> np.ndarray:
    """Composed embedding of one derivation, reshaped to (L, alphabet) logits."""
    if d not in p.entries:
        raise ValueError("derivation does not belong to the protocol")
    index = {c: i for i, c in enumerate(params.concepts)}

    def walk(node: Derivation) -> np.ndarray:
        if isinstance(node, Leaf):
            if node.concept not in index:
                raise ValueError(f"unknown concept {node.concept.label!r}")
            return params.embeddings[index[node.concept]]
        left = walk(node.left)
        right = walk(node.right)
        out, _ = _compose_fwd(kind, params.comp, left, right)
        return out

    vec = walk(d)
    return vec.reshape(p.max_len, vec.size // p.max_len)


# --- loss and gradients ------------------------------------------------------


def _loss_and_dout(out: np.ndarray, plan: _Plan, want_grad: bool):
    """Summed-over-positions softmax cross-entropy, averaged over derivations."""
    D, L = plan.targets.shape
    z = out.reshape(D, L, plan.n_classes)
    z = z - z.max(axis=2, keepdims=True)
    ez = np.exp(z)
    sz = ez.sum(axis=2, keepdims=True)
    rows = np.arange(D)[:, None]
    cols = np.arange(L)[None, :]
    picked = z[rows, cols, plan.targets]
    loss = float((np.log(sz[:, :, 0]) - picked).sum(axis=1).mean())
    if not want_grad:
        return loss, None
    g = ez / sz
    g[rows, cols, plan.targets] -= 1.0
    g /= D
    return loss, g.reshape(D, L * plan.n_classes)


def _segsum_pairs(dv2: np.ndarray, plan: _Plan, m1: int) -> np.ndarray:
    """Sum level-2 node gradients into their level-1 node rows."""
    if plan.pair_group is not None:
        return dv2.reshape(m1, plan.pair_group, dv2.shape[1]).sum(axis=1)
    out = np.zeros((m1, dv2.shape[1]))
    np.add.at(out, plan.pairs2[:, 1], dv2)
    return out


def _fb_bilinear(flat, plan: _Plan, kind: CompositionKind, want_grad: bool):
    """Additive/linear path: composition is linear in each operand, so all
    per-node work reduces to concept-level matmuls plus gathers/segment sums."""
    shapes = _param_shapes(kind, len(plan.concepts), plan.n_dims, 1)
    par = _views(flat, shapes)
    emb = par["emb"]
    linear = kind == "linear"
    ea = emb @ par["A"].T if linear else emb
    eb = emb @ par["B"].T if linear else emb

    v1 = ea[plan.pairs1[:, 0]] + eb[plan.pairs1[:, 1]]
    if plan.pairs2 is not None:
        bv1 = v1 @ par["B"].T if linear else v1
        v2 = ea[plan.pairs2[:, 0]] + bv1[plan.pairs2[:, 1]]
        out = v2[plan.out_idx]
    else:
        out = v1[plan.out_idx]

    loss, dout = _loss_and_dout(out, plan, want_grad)
    if dout is None:
        return loss, None

    gflat = np.zeros_like(flat)
    grads = _views(gflat, shapes)
    gemb = grads["emb"]

    # segment-sum of output gradients by left concept / right operand
    if plan.pairs2 is not None:
        dv2 = np.zeros_like(v2)
        dv2[plan.out_idx] = dout
        s2l = plan.hot2l @ dv2  # (C, N)
        dv1 = _segsum_pairs(dv2, plan, len(plan.pairs1))
        if linear:
            grads["A"] += s2l.T @ emb
            gemb += s2l @ par["A"]
            grads["B"] += dv1.T @ v1
            dv1 = dv1 @ par["B"]
        else:
            gemb += s2l
    else:
        dv1 = np.zeros_like(v1)
        dv1[plan.out_idx] = dout

    s1l = plan.hot1l @ dv1
    s1r = plan.hot1r @ dv1
    if linear:
        grads["A"] += s1l.T @ emb
        grads["B"] += s1r.T @ emb
        gemb += s1l @ par["A"] + s1r @ par["B"]
    else:
        gemb += s1l + s1r
    return loss, gflat


def _fb_generic(flat, plan: _Plan, kind: CompositionKind, hidden: int, want_grad: bool):
    """Reference path for the nonlinear composition (no operand linearity)."""
    shapes = _param_shapes(kind, len(plan.concepts), plan.n_dims, hidden)
    par = _views(flat, shapes)
    emb = par["emb"]

    x1a = emb[plan.pairs1[:, 0]]
    x1b = emb[plan.pairs1[:, 1]]
    v1, t1 = _compose_fwd(kind, par, x1a, x1b)
    if plan.pairs2 is not None:
        x2a = emb[plan.pairs2[:, 0]]
        v1in = v1[plan.pairs2[:, 1]]
        v2, t2 = _compose_fwd(kind, par, x2a, v1in)
        out = v2[plan.out_idx]
    else:
        out = v1[plan.out_idx]

    loss, dout = _loss_and_dout(out, plan, want_grad)
    if dout is None:
        return loss, None

    gflat = np.zeros_like(flat)
    grads = _views(gflat, shapes)
    gemb = grads["emb"]

    if plan.pairs2 is not None:
        dv2 = np.zeros_like(v2)
        dv2[plan.out_idx] = dout
        dx2a, dv1in = _compose_bwd(kind, par, grads, x2a, v1in, t2, dv2)
        gemb += plan.hot2l @ dx2a
        dv1 = _segsum_pairs(dv1in, plan, len(plan.pairs1))
    else:
        dv1 = np.zeros_like(v1)
        dv1[plan.out_idx] = dout
    dx1a, dx1b = _compose_bwd(kind, par, grads, x1a, x1b, t1, dv1)
    gemb += plan.hot1l @ dx1a
    gemb += plan.hot1r @ dx1b
    return loss, gflat


def _forward_backward(flat, plan: _Plan, kind: CompositionKind, hidden: int, want_grad: bool = True):
    if kind == "nonlinear":
        return _fb_generic(flat, plan, kind, hidden, want_grad)
    return _fb_bilinear(flat, plan, kind, want_grad)


def tre_loss(p: Protocol, params: TreParams, kind: CompositionKind) -> float:
    """Mean summed cross-entropy of the compositional reconstruction over the
    protocol's full table (no weight-decay term)."""
    plan = _build_plan(p)
    if params.embeddings.shape != (len(plan.concepts), plan.n_dims):
        raise ValueError("embedding matrix does not match the protocol")
    hidden = params.comp["b1"].size if kind == "nonlinear" else 1
    shapes = _param_shapes(kind, len(plan.concepts), plan.n_dims, hidden)
    pieces = [params.embeddings.ravel()]
    pieces += [params.comp[name].ravel() for name, _ in shapes[1:]]
    flat = np.concatenate(pieces)
    loss, _ = _forward_backward(flat, plan, kind, hidden, want_grad=False)
    return loss


def tre_fit(p: Protocol, config: TreConfig, curve_path: str | None = None, use_pad: bool = True) -> TreResult:
    """Full-batch Adam fit of the compositional approximation.

    Minimises mean loss + weight_decay * ||params||^2; the loss curve (and the
    reported TRE, its last entry) excludes the penalty.  ``curve_path``
    optionally dumps an epoch,loss CSV.
    """
    plan = _build_plan(p, use_pad=use_pad)
    flat = _init_flat(config.composition, len(plan.concepts), plan.n_dims, config.hidden, config.seed)
    m = np.zeros_like(flat)
    v = np.zeros_like(flat)
    beta1, beta2, eps = 0.9, 0.999, 1e-8
    losses = np.empty(config.epochs)
    for epoch in range(config.epochs):
        loss, grad = _forward_backward(flat, plan, config.composition, config.hidden)
        if not np.isfinite(loss):
            raise TreDivergenceError(
                f"non-finite loss at epoch {epoch} "
                f"({p.name}, {config.composition}, seed {config.seed})"
            )
        losses[epoch] = loss
        grad += 2.0 * config.weight_decay * flat
        m *= beta1
        m += (1.0 - beta1) * grad
        v *= beta2
        v += (1.0 - beta2) * grad * grad
        mhat = m / (1.0 - beta1 ** (epoch + 1))
        vhat = v / (1.0 - beta2 ** (epoch + 1))
        flat -= config.learning_rate * mhat / (np.sqrt(vhat) + eps)
    if curve_path is not None:
        with open(curve_path, "w", encoding="utf-8") as fh:
            fh.write("epoch,loss\n")
            for i, value in enumerate(losses):
                fh.write(f"{i},{value:.9g}\n")
    shapes = _param_shapes(config.composition, len(plan.concepts), plan.n_dims, config.hidden)
    params = _params_from_views(plan, _views(flat, shapes))
    return TreResult(tre=float(losses[-1]), loss_curve=losses, params=params)


def grad_check(kind: CompositionKind, seed: int, step: float = 1e-5) -> float:
    """Max relative error between analytic and central-difference gradients
    of the reconstruction loss, on a tiny fixed protocol (3 concepts, N = 6).

    Relative error is |g_a - g_n| / max(|g_a|, |g_n|, 1).
    """
    from .core import build_concept_space
    from .protocols import ProtocolConfig, gen_tc

    space = build_concept_space(2, 1)
    p = gen_tc(ProtocolConfig(space=space, seed=seed))
    plan = _build_plan(p)
    config = TreConfig(composition=kind, seed=seed)
    flat = _init_flat(kind, len(plan.concepts), plan.n_dims, config.hidden, seed)
    _, analytic = _forward_backward(flat, plan, kind, config.hidden)
    numeric = np.empty_like(flat)
    for i in range(flat.size):
        keep = flat[i]
        flat[i] = keep + step
        up, _ = _forward_backward(flat, plan, kind, config.hidden, want_grad=False)
        flat[i] = keep - step
        down, _ = _forward_backward(flat, plan, kind, config.hidden, want_grad=False)
        flat[i] = keep
        numeric[i] = (up - down) / (2.0 * step)
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1.0)
    return float(np.max(np.abs(analytic - numeric) / denom))
