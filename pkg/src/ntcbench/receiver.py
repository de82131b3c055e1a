"""Generalisation probe: train a sequence reader to recover derivations from
messages, report held-out exact-match accuracy.

The probe embeds each symbol, runs a single-layer LSTM over the message
(variable lengths consumed as-is, no padding), and feeds the final hidden
state through a two-layer rectifier head ending in one categorical block per
concept slot.  Training is batch-size-1 Adam with summed cross-entropy until
the train set is perfectly predicted or the epoch budget runs out.  The hot
loop lives in the kernel backend; evaluation is a batched NumPy forward pass.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from . import _backend
from ._py_kernels import _param_views, _sigmoid
from .core import Concept, Message, Protocol, Symbol, flatten
from .metrics import MetricScore

Example = tuple[Message, tuple[Concept, ...]]


@dataclass(frozen=True)
class ReceiverConfig:
    embed_dim: int = 50
    recurrent_hidden: int = 50
    head_hidden: int = 50
    learning_rate: float = 1e-2
    weight_decay: float = 1e-6
    max_epochs: int = 100
    batch_size: int = 1
    split_ratio: float = 0.8
    seed: int = 0

    def __post_init__(self) -> None:
        if min(self.embed_dim, self.recurrent_hidden, self.head_hidden, self.max_epochs) < 1:
            raise ValueError("network sizes and epoch budget must be positive")
        if self.batch_size != 1:
            raise ValueError("the probe trains with batch size 1")
        if not 0.0 < self.split_ratio < 1.0:
            raise ValueError("split_ratio must lie in (0, 1)")
        if self.learning_rate <= 0 or self.weight_decay < 0:
            raise ValueError("learning rate must be positive, weight decay non-negative")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must fit in 64 unsigned bits")


@dataclass(frozen=True)
class SplitDataset:
    """Disjoint train/test halves whose union is the full protocol table."""

    train: tuple[Example, ...]
    test: tuple[Example, ...]
    seed: int


def _rng(seed: int, tag: str) -> np.random.Generator:
    t = int.from_bytes(hashlib.sha256(tag.encode()).digest()[:8], "little")
    return np.random.default_rng(np.random.SeedSequence([seed, t]))


def split(p: Protocol, config: ReceiverConfig) -> SplitDataset:
    """Seeded uniform shuffle; the first ceil(ratio * |D|) derivations train."""
    items: list[Example] = [(m, flatten(d)) for d, m in p.entries.items()]
    if len(items) < 2:
        raise ValueError("need at least two derivations to split")
    order = _rng(config.seed, "receiver-split").permutation(len(items))
    n_train = math.ceil(config.split_ratio * len(items))
    train = tuple(items[i] for i in order[:n_train])
    test = tuple(items[i] for i in order[n_train:])
    return SplitDataset(train=train, test=test, seed=config.seed)


@dataclass
class TrainedReceiver:
    """Probe weights plus the codecs needed to run it on new messages."""

    alphabet: tuple[Symbol, ...]
    slot_concepts: tuple[tuple[Concept, ...], ...]
    dims: np.ndarray
    slot_offsets: np.ndarray
    flat: np.ndarray
    epochs_run: int
    log: list[tuple[int, float, float]]  # (epoch, mean train loss, train exact-match)

    def encode_messages(self, messages: Sequence[Message]) -> tuple[np.ndarray, np.ndarray]:
        sym_id = {s: i for i, s in enumerate(self.alphabet)}
        lmax = int(self.dims[6])
        msgs = np.zeros((len(messages), lmax), dtype=np.int32)
        lengths = np.empty(len(messages), dtype=np.int32)
        for i, message in enumerate(messages):
            lengths[i] = len(message)
            msgs[i, : len(message)] = [sym_id[s] for s in message]
        return msgs, lengths

    def encode_targets(self, tuples: Sequence[tuple[Concept, ...]]) -> np.ndarray:
        maps = [{c: i for i, c in enumerate(slot)} for slot in self.slot_concepts]
        out = np.empty((len(tuples), len(maps)), dtype=np.int32)
        for i, tup in enumerate(tuples):
            out[i] = [maps[k][c] for k, c in enumerate(tup)]
        return out

    def predict(self, messages: Sequence[Message]) -> np.ndarray:
        """Per-slot argmax codes, shape (n, n_slots); ties pick lowest index."""
        msgs, lengths = self.encode_messages(messages)
        logits = _forward_batch(self.flat, self.dims, msgs, lengths)
        preds = np.empty((len(messages), len(self.slot_concepts)), dtype=np.int32)
        for k in range(len(self.slot_concepts)):
            lo, hi = int(self.slot_offsets[k]), int(self.slot_offsets[k + 1])
            preds[:, k] = np.argmax(logits[:, lo:hi], axis=1)
        return preds


def _forward_batch(flat: np.ndarray, dims: np.ndarray, msgs: np.ndarray, lengths: np.ndarray) -> np.ndarray:
    """Deterministic batched forward pass; returns head logits (n, O)."""
    S, E, H, Hh, O, n_slots, lmax = (int(x) for x in dims)
    emb, wx, wh, b, w1, b1, w2, b2 = _param_views(flat, S, E, H, Hh, O)
    n = msgs.shape[0]
    h = np.zeros((n, H))
    c = np.zeros((n, H))
    for step in range(lmax):
        active = lengths > step
        if not active.any():
            break
        a = emb[msgs[:, step]] @ wx.T + h @ wh.T + b
        gi = _sigmoid(a[:, :H])
        gf = _sigmoid(a[:, H : 2 * H])
        gg = np.tanh(a[:, 2 * H : 3 * H])
        go = _sigmoid(a[:, 3 * H :])
        c_new = gf * c + gi * gg
        h_new = go * np.tanh(c_new)
        mask = active[:, None]
        h = np.where(mask, h_new, h)
        c = np.where(mask, c_new, c)
    r = np.maximum(h @ w1.T + b1, 0.0)
    return r @ w2.T + b2


def _slot_concept_order(data: SplitDataset) -> tuple[tuple[Concept, ...], ...]:
    tuples = [t for _, t in data.train] + [t for _, t in data.test]
    n_slots = len(tuples[0])
    if any(len(t) != n_slots for t in tuples):
        raise ValueError("all derivations must flatten to the same number of slots")
    slots: list[dict[Concept, int]] = [{} for _ in range(n_slots)]
    for tup in tuples:
        for k, c in enumerate(tup):
            slots[k].setdefault(c, len(slots[k]))
    return tuple(tuple(s) for s in slots)


def train_receiver(
    data: SplitDataset,
    alphabet: tuple[Symbol, ...],
    config: ReceiverConfig,
    log_path: str | None = None,
) -> TrainedReceiver:
    """Fit the probe on the train half; stops early at train accuracy 1."""
    if not data.train:
        raise ValueError("empty train set")
    slot_concepts = _slot_concept_order(data)
    n_slots = len(slot_concepts)
    block_sizes = [len(s) for s in slot_concepts]
    slot_offsets = np.concatenate([[0], np.cumsum(block_sizes)]).astype(np.int32)
    O = int(slot_offsets[-1])

    S = len(alphabet)
    E, H, Hh = config.embed_dim, config.recurrent_hidden, config.head_hidden
    lmax = max(len(m) for m, _ in list(data.train) + list(data.test))
    dims = np.array([S, E, H, Hh, O, n_slots, lmax], dtype=np.int64)

    # Embeddings from a standard normal; remaining weights uniform in
    # +-1/sqrt(fan), LSTM biases included.
    init = _rng(config.seed, "receiver-init")
    k_rec = 1.0 / math.sqrt(H)
    k_head = 1.0 / math.sqrt(Hh)
    parts = [
        init.standard_normal((S, E)).ravel(),
        init.uniform(-k_rec, k_rec, 4 * H * E),
        init.uniform(-k_rec, k_rec, 4 * H * H),
        init.uniform(-k_rec, k_rec, 4 * H),
        init.uniform(-k_rec, k_rec, Hh * H),
        init.uniform(-k_rec, k_rec, Hh),
        init.uniform(-k_head, k_head, O * Hh),
        init.uniform(-k_head, k_head, O),
    ]
    flat = np.concatenate(parts)
    grad = np.zeros_like(flat)
    m = np.zeros_like(flat)
    v = np.zeros_like(flat)

    trained = TrainedReceiver(
        alphabet=alphabet,
        slot_concepts=slot_concepts,
        dims=dims,
        slot_offsets=slot_offsets,
        flat=flat,
        epochs_run=0,
        log=[],
    )
    msgs, lengths = trained.encode_messages([m_ for m_, _ in data.train])
    targets = trained.encode_targets([t for _, t in data.train])

    shuffle = _rng(config.seed, "receiver-epochs")
    t_step = 0
    for epoch in range(config.max_epochs):
        order = shuffle.permutation(len(data.train)).astype(np.int32)
        loss, t_step = _backend.receiver_train_epoch(
            flat, grad, m, v, msgs, lengths, targets, slot_offsets, dims, order,
            config.learning_rate, config.weight_decay, 0.9, 0.999, 1e-8, t_step,
        )
        if not np.isfinite(loss):
            raise RuntimeError(f"receiver training diverged at epoch {epoch} (seed {config.seed})")
        preds = trained.predict([m_ for m_, _ in data.train])
        train_acc = float(np.mean(np.all(preds == targets, axis=1)))
        trained.epochs_run = epoch + 1
        trained.log.append((epoch, float(loss), train_acc))
        if train_acc == 1.0:
            break
    if log_path is not None:
        with open(log_path, "w", encoding="utf-8") as fh:
            fh.write("epoch,train_loss,train_acc\n")
            for epoch, loss, acc in trained.log:
                fh.write(f"{epoch},{loss:.9g},{acc:.9g}\n")
    return trained


@dataclass(frozen=True)
class ReceiverRun:
    exact_match: float
    per_slot: tuple[float, ...]
    epochs_run: int
    seed: int


def evaluate(trained: TrainedReceiver, examples: Sequence[Example]) -> tuple[float, tuple[float, ...]]:
    """Exact-match accuracy (all slots right) plus per-slot accuracies."""
    preds = trained.predict([m for m, _ in examples])
    targets = trained.encode_targets([t for _, t in examples])
    exact = float(np.mean(np.all(preds == targets, axis=1)))
    per_slot = tuple(float(np.mean(preds[:, k] == targets[:, k])) for k in range(targets.shape[1]))
    return exact, per_slot


def run_once(p: Protocol, config: ReceiverConfig, log_path: str | None = None) -> ReceiverRun:
    """Split, train and score one seed's probe on its held-out derivations."""
    data = split(p, config)
    trained = train_receiver(data, p.alphabet, config, log_path=log_path)
    exact, per_slot = evaluate(trained, data.test)
    return ReceiverRun(exact_match=exact, per_slot=per_slot, epochs_run=trained.epochs_run, seed=config.seed)


def generalisation(p: Protocol, config: ReceiverConfig = ReceiverConfig(), n_seeds: int = 5) -> MetricScore:
    """Held-out accuracy averaged across ``n_seeds`` consecutive seeds."""
    runs = [run_once(p, replace(config, seed=config.seed + i)) for i in range(n_seeds)]
    return MetricScore("generalisation", float(np.mean([r.exact_match for r in runs])), "higher")
