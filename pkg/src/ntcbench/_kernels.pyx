# cython: language_level=3
"""Compiled hot kernels: all-pairs Levenshtein distances and the receiver
training epoch.  Mirrors the arithmetic of ``_py_kernels`` exactly; see that
module for the documented contracts."""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, log, pow, sqrt, tanh
from libc.string cimport memset

NAME = "compiled"


cdef int _lev(cnp.int32_t[:, ::1] msgs, Py_ssize_t ia, int la, Py_ssize_t ib, int lb,
              cnp.int32_t[::1] buf) noexcept nogil:
    # Two-row DP over buf: prev = buf[0:lb+1], curr = buf[lb+1:2*(lb+1)].
    cdef int i, j, best, tmp, W = lb + 1
    for j in range(W):
        buf[j] = j
    for i in range(1, la + 1):
        buf[W] = i
        for j in range(1, W):
            best = buf[j - 1] + (0 if msgs[ia, i - 1] == msgs[ib, j - 1] else 1)
            tmp = buf[j] + 1
            if tmp < best:
                best = tmp
            tmp = buf[W + j - 1] + 1
            if tmp < best:
                best = tmp
            buf[W + j] = best
        for j in range(W):
            buf[j] = buf[W + j]
    return buf[lb]


def levenshtein_matrix(msgs, lengths):
    msgs_arr = np.ascontiguousarray(msgs, dtype=np.int32)
    len_arr = np.ascontiguousarray(lengths, dtype=np.int32)
    cdef cnp.int32_t[:, ::1] mv = msgs_arr
    cdef cnp.int32_t[::1] lv = len_arr
    cdef Py_ssize_t n = len_arr.shape[0]
    out = np.empty(n * (n - 1) // 2, dtype=np.int32)
    cdef cnp.int32_t[::1] ov = out
    buf = np.empty(2 * (msgs_arr.shape[1] + 1), dtype=np.int32)
    cdef cnp.int32_t[::1] bv = buf
    cdef Py_ssize_t i, j, pos = 0
    with nogil:
        for i in range(n):
            for j in range(i + 1, n):
                ov[pos] = _lev(mv, i, lv[i], j, lv[j], bv)
                pos += 1
    return out


def receiver_train_epoch(flat, grad, m, v, msgs, lengths, targets, slot_offsets,
                         dims, order, double lr, double weight_decay,
                         double beta1, double beta2, double eps, double clip_norm, t0):
    cdef double[::1] fb = flat
    cdef double[::1] gb = grad
    cdef double[::1] mb = m
    cdef double[::1] vb = v
    cdef cnp.int32_t[:, ::1] msg_v = msgs
    cdef cnp.int32_t[::1] len_v = lengths
    cdef cnp.int32_t[:, ::1] tgt_v = targets
    cdef cnp.int32_t[::1] so = slot_offsets
    cdef cnp.int32_t[::1] ord_v = order

    cdef Py_ssize_t S = int(dims[0]), E = int(dims[1]), H = int(dims[2])
    cdef Py_ssize_t Hh = int(dims[3]), O = int(dims[4])
    cdef Py_ssize_t n_slots = int(dims[5]), Lmax = int(dims[6])
    cdef Py_ssize_t G = 4 * H

    cdef Py_ssize_t o_emb = 0
    cdef Py_ssize_t o_wx = o_emb + S * E
    cdef Py_ssize_t o_wh = o_wx + G * E
    cdef Py_ssize_t o_b = o_wh + G * H
    cdef Py_ssize_t o_w1 = o_b + G
    cdef Py_ssize_t o_b1 = o_w1 + Hh * H
    cdef Py_ssize_t o_w2 = o_b1 + Hh
    cdef Py_ssize_t o_b2 = o_w2 + O * Hh
    cdef Py_ssize_t P = o_b2 + O
    if P != fb.shape[0]:
        raise ValueError("parameter vector does not match layout")

    hs_arr = np.zeros((Lmax + 1, H))
    cs_arr = np.zeros((Lmax + 1, H))
    gates_arr = np.zeros((Lmax, G))
    scratch = np.zeros(G + O + O + Hh + Hh + H + H)
    cdef double[:, ::1] hs = hs_arr
    cdef double[:, ::1] cs = cs_arr
    cdef double[:, ::1] gates = gates_arr
    cdef double[::1] sc = scratch
    # scratch slices: abuf/da (G), z2 (O), dz2 (O), z1r (Hh), dr (Hh), dh (H), dc (H)
    cdef Py_ssize_t s_a = 0, s_z2 = G, s_dz2 = G + O, s_z1r = G + 2 * O
    cdef Py_ssize_t s_dr = s_z1r + Hh, s_dh = s_dr + Hh, s_dc = s_dh + H

    cdef Py_ssize_t n_order = ord_v.shape[0]
    cdef long long t = int(t0)
    cdef double total = 0.0, loss_ex, acc, mx, zsum, d_, bc1, bc2, g_
    cdef double gi, gf, gg, go, tc, do_, dcc, di, dg, df, cval
    cdef Py_ssize_t oi, idx, L, step, sym, row, col, kH, k, lo, hi, tgt, ii, base, xbase

    with nogil:
        for oi in range(n_order):
            idx = ord_v[oi]
            L = len_v[idx]
            memset(&gb[0], 0, P * sizeof(double))
            for kH in range(H):
                hs[0, kH] = 0.0
                cs[0, kH] = 0.0
            for step in range(L):
                sym = msg_v[idx, step]
                xbase = o_emb + sym * E
                for row in range(G):
                    acc = fb[o_b + row]
                    base = o_wx + row * E
                    for col in range(E):
                        acc += fb[base + col] * fb[xbase + col]
                    base = o_wh + row * H
                    for col in range(H):
                        acc += fb[base + col] * hs[step, col]
                    sc[s_a + row] = acc
                for kH in range(H):
                    gi = 1.0 / (1.0 + exp(-sc[s_a + kH]))
                    gf = 1.0 / (1.0 + exp(-sc[s_a + H + kH]))
                    gg = tanh(sc[s_a + 2 * H + kH])
                    go = 1.0 / (1.0 + exp(-sc[s_a + 3 * H + kH]))
                    gates[step, kH] = gi
                    gates[step, H + kH] = gf
                    gates[step, 2 * H + kH] = gg
                    gates[step, 3 * H + kH] = go
                    cval = gf * cs[step, kH] + gi * gg
                    cs[step + 1, kH] = cval
                    hs[step + 1, kH] = go * tanh(cval)
            for row in range(Hh):
                acc = fb[o_b1 + row]
                base = o_w1 + row * H
                for col in range(H):
                    acc += fb[base + col] * hs[L, col]
                sc[s_z1r + row] = acc if acc > 0.0 else 0.0
            for row in range(O):
                acc = fb[o_b2 + row]
                base = o_w2 + row * Hh
                for col in range(Hh):
                    acc += fb[base + col] * sc[s_z1r + col]
                sc[s_z2 + row] = acc

            loss_ex = 0.0
            for k in range(n_slots):
                lo = so[k]
                hi = so[k + 1]
                mx = sc[s_z2 + lo]
                for ii in range(lo + 1, hi):
                    if sc[s_z2 + ii] > mx:
                        mx = sc[s_z2 + ii]
                zsum = 0.0
                for ii in range(lo, hi):
                    d_ = exp(sc[s_z2 + ii] - mx)
                    sc[s_dz2 + ii] = d_
                    zsum += d_
                for ii in range(lo, hi):
                    sc[s_dz2 + ii] /= zsum
                tgt = tgt_v[idx, k]
                loss_ex -= log(sc[s_dz2 + lo + tgt])
                sc[s_dz2 + lo + tgt] -= 1.0
            total += loss_ex

            # head backward
            for row in range(O):
                d_ = sc[s_dz2 + row]
                gb[o_b2 + row] += d_
                base = o_w2 + row * Hh
                for col in range(Hh):
                    gb[base + col] += d_ * sc[s_z1r + col]
            for col in range(Hh):
                acc = 0.0
                for row in range(O):
                    acc += fb[o_w2 + row * Hh + col] * sc[s_dz2 + row]
                sc[s_dr + col] = acc if sc[s_z1r + col] > 0.0 else 0.0
            for row in range(Hh):
                d_ = sc[s_dr + row]
                gb[o_b1 + row] += d_
                base = o_w1 + row * H
                for col in range(H):
                    gb[base + col] += d_ * hs[L, col]
            for col in range(H):
                acc = 0.0
                for row in range(Hh):
                    acc += fb[o_w1 + row * H + col] * sc[s_dr + row]
                sc[s_dh + col] = acc
            for kH in range(H):
                sc[s_dc + kH] = 0.0

            # backward through time
            for step in range(L - 1, -1, -1):
                sym = msg_v[idx, step]
                for kH in range(H):
                    gi = gates[step, kH]
                    gf = gates[step, H + kH]
                    gg = gates[step, 2 * H + kH]
                    go = gates[step, 3 * H + kH]
                    tc = tanh(cs[step + 1, kH])
                    do_ = sc[s_dh + kH] * tc
                    dcc = sc[s_dc + kH] + sc[s_dh + kH] * go * (1.0 - tc * tc)
                    di = dcc * gg
                    dg = dcc * gi
                    df = dcc * cs[step, kH]
                    sc[s_a + kH] = di * gi * (1.0 - gi)
                    sc[s_a + H + kH] = df * gf * (1.0 - gf)
                    sc[s_a + 2 * H + kH] = dg * (1.0 - gg * gg)
                    sc[s_a + 3 * H + kH] = do_ * go * (1.0 - go)
                    sc[s_dc + kH] = dcc * gf
                xbase = o_emb + sym * E
                for row in range(G):
                    d_ = sc[s_a + row]
                    gb[o_b + row] += d_
                    base = o_wx + row * E
                    for col in range(E):
                        gb[base + col] += d_ * fb[xbase + col]
                    base = o_wh + row * H
                    for col in range(H):
                        gb[base + col] += d_ * hs[step, col]
                for col in range(E):
                    acc = 0.0
                    for row in range(G):
                        acc += fb[o_wx + row * E + col] * sc[s_a + row]
                    gb[xbase + col] += acc
                for col in range(H):
                    acc = 0.0
                    for row in range(G):
                        acc += fb[o_wh + row * H + col] * sc[s_a + row]
                    sc[s_dh + col] = acc

            # dense Adam step, torch-style weight decay, optional norm clip
            t += 1
            if clip_norm > 0.0:
                acc = 0.0
                for ii in range(P):
                    acc += gb[ii] * gb[ii]
                acc = sqrt(acc)
                if acc > clip_norm:
                    d_ = clip_norm / acc
                    for ii in range(P):
                        gb[ii] *= d_
            bc1 = 1.0 - pow(beta1, <double> t)
            bc2 = 1.0 - pow(beta2, <double> t)
            for ii in range(P):
                g_ = gb[ii] + weight_decay * fb[ii]
                mb[ii] = beta1 * mb[ii] + (1.0 - beta1) * g_
                vb[ii] = beta2 * vb[ii] + (1.0 - beta2) * g_ * g_
                fb[ii] -= lr * (mb[ii] / bc1) / (sqrt(vb[ii] / bc2) + eps)

    return total / n_order, int(t)
