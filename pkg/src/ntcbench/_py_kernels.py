"""Pure-NumPy implementations of the hot kernels.

Same contracts as the compiled extension in ``_kernels.pyx``; selected by
``_backend`` when the extension is unavailable or explicitly disabled.  The
two backends implement identical arithmetic, so results agree to floating
precision (bit-for-bit determinism holds within a backend, not across them).
"""

from __future__ import annotations

import numpy as np

from .infostats import levenshtein

NAME = "python"


def levenshtein_matrix(msgs: np.ndarray, lengths: np.ndarray) -> np.ndarray:
    """Condensed all-pairs Levenshtein distances over integer-coded messages.

    ``msgs`` is (n, Lmax) with rows padded arbitrarily past their true length;
    only the first ``lengths[i]`` entries of row i are compared.  Pair order
    matches numpy's triu convention: (0,1), (0,2), ..., (1,2), ...
    """
    n = len(lengths)
    rows = [msgs[i, : lengths[i]].tolist() for i in range(n)]
    out = np.empty(n * (n - 1) // 2, dtype=np.int32)
    pos = 0
    for i in range(n):
        a = rows[i]
        for j in range(i + 1, n):
            out[pos] = levenshtein(a, rows[j])
            pos += 1
    return out


def _param_views(flat: np.ndarray, S: int, E: int, H: int, Hh: int, O: int):
    G = 4 * H
    shapes = ((S, E), (G, E), (G, H), (G,), (Hh, H), (Hh,), (O, Hh), (O,))
    views = []
    off = 0
    for shape in shapes:
        size = int(np.prod(shape))
        views.append(flat[off : off + size].reshape(shape))
        off += size
    if off != flat.size:
        raise ValueError(f"parameter vector has {flat.size} entries, layout needs {off}")
    return views


def _sigmoid(x: np.ndarray) -> np.ndarray:
    return 1.0 / (1.0 + np.exp(-x))


def receiver_train_epoch(
    flat: np.ndarray,
    grad: np.ndarray,
    m: np.ndarray,
    v: np.ndarray,
    msgs: np.ndarray,
    lengths: np.ndarray,
    targets: np.ndarray,
    slot_offsets: np.ndarray,
    dims: np.ndarray,
    order: np.ndarray,
    lr: float,
    weight_decay: float,
    beta1: float,
    beta2: float,
    eps: float,
    clip_norm: float,
    t0: int,
) -> tuple[float, int]:
    """One epoch of batch-size-1 training of the message receiver.

    Embedding -> LSTM -> two-layer rectifier head -> one softmax block per
    concept slot, summed cross-entropy, dense Adam update after every
    example.  Gradients are norm-clipped to ``clip_norm`` when positive
    (before weight decay).  Mutates ``flat``/``m``/``v`` in place; ``grad``
    is scratch.  Returns (mean loss over the epoch, new Adam step count).
    """
    S, E, H, Hh, O, n_slots, Lmax = (int(x) for x in dims)
    emb, wx, wh, b, w1, b1, w2, b2 = _param_views(flat, S, E, H, Hh, O)
    g_emb, g_wx, g_wh, g_b, g_w1, g_b1, g_w2, g_b2 = _param_views(grad, S, E, H, Hh, O)

    hs = np.zeros((Lmax + 1, H))
    cs = np.zeros((Lmax + 1, H))
    gates = np.zeros((Lmax, 4 * H))
    t = int(t0)
    total = 0.0

    for idx in order:
        idx = int(idx)
        L = int(lengths[idx])
        syms = msgs[idx, :L]
        grad[:] = 0.0
        hs[0] = 0.0
        cs[0] = 0.0
        for step in range(L):
            a = wx @ emb[syms[step]] + wh @ hs[step] + b
            gi = _sigmoid(a[:H])
            gf = _sigmoid(a[H : 2 * H])
            gg = np.tanh(a[2 * H : 3 * H])
            go = _sigmoid(a[3 * H :])
            gates[step, :H] = gi
            gates[step, H : 2 * H] = gf
            gates[step, 2 * H : 3 * H] = gg
            gates[step, 3 * H :] = go
            cs[step + 1] = gf * cs[step] + gi * gg
            hs[step + 1] = go * np.tanh(cs[step + 1])
        z1 = w1 @ hs[L] + b1
        r = np.maximum(z1, 0.0)
        z2 = w2 @ r + b2

        dz2 = np.empty(O)
        loss = 0.0
        for k in range(n_slots):
            lo, hi = int(slot_offsets[k]), int(slot_offsets[k + 1])
            block = z2[lo:hi]
            ex = np.exp(block - block.max())
            p = ex / ex.sum()
            tgt = int(targets[idx, k])
            loss -= np.log(p[tgt])
            dz2[lo:hi] = p
            dz2[lo + tgt] -= 1.0
        total += loss

        g_w2 += np.outer(dz2, r)
        g_b2 += dz2
        dr = w2.T @ dz2
        dz1 = dr * (r > 0.0)
        g_w1 += np.outer(dz1, hs[L])
        g_b1 += dz1
        dh = w1.T @ dz1
        dc = np.zeros(H)
        for step in range(L - 1, -1, -1):
            gi = gates[step, :H]
            gf = gates[step, H : 2 * H]
            gg = gates[step, 2 * H : 3 * H]
            go = gates[step, 3 * H :]
            tc = np.tanh(cs[step + 1])
            do = dh * tc
            dc = dc + dh * go * (1.0 - tc * tc)
            di = dc * gg
            dg = dc * gi
            df = dc * cs[step]
            da = np.concatenate(
                [
                    di * gi * (1.0 - gi),
                    df * gf * (1.0 - gf),
                    dg * (1.0 - gg * gg),
                    do * go * (1.0 - go),
                ]
            )
            x = emb[syms[step]]
            g_wx += np.outer(da, x)
            g_wh += np.outer(da, hs[step])
            g_b += da
            g_emb[syms[step]] += wx.T @ da
            dh = wh.T @ da
            dc = dc * gf

        t += 1
        if clip_norm > 0.0:
            norm = float(np.sqrt(grad @ grad))
            if norm > clip_norm:
                grad *= clip_norm / norm
        if weight_decay != 0.0:
            grad += weight_decay * flat
        m *= beta1
        m += (1.0 - beta1) * grad
        v *= beta2
        v += (1.0 - beta2) * grad * grad
        mhat = m / (1.0 - beta1**t)
        vhat = v / (1.0 - beta2**t)
        flat -= lr * mhat / (np.sqrt(vhat) + eps)

    return total / len(order), t
