"""Compiled SGD kernels.

Every kernel releases the GIL so several Python threads can run them against
the same parameter arrays at once. No locks are taken: concurrent workers may
overwrite each other's updates.
"""

import math

import numba
import numpy as np

TEXT, CONTINUOUS, ADDITIVE, MAX, GATED, BILINEAR, BILINEAR_GATED, DISCRETIZED = range(8)
GATE_TEXT, GATE_VISUAL = 0, 1


@numba.njit(cache=True, nogil=True, inline="always")
def _sigmoid(x):
    return 1.0 / (1.0 + math.exp(-x))


@numba.njit(cache=True, nogil=True, fastmath={"reassoc", "contract", "nsz"})
def _step(U, V, W, fusion, gate, alpha, pseudo, toks, label, x, lr,
          ht, hv, a, b, h, dh, dht, dhv, logits, scal):
    """Forward, backward and in-place SGD update for one document.

    Returns the loss at the parameters before the update. ``dh`` is formed
    from ``W`` before ``W`` is written, so the update is an exact gradient
    step for a single worker.
    """
    H = U.shape[1]
    K = W.shape[0]
    Hout = W.shape[1]
    ntok = toks.shape[0]

    n_words = 0
    n_pseudo = 0
    if fusion == DISCRETIZED:
        for t in toks:
            if pseudo[t]:
                n_pseudo += 1
            else:
                n_words += 1
    else:
        n_words = ntok
    w_word = 1.0 / n_words if n_words > 0 else 0.0
    w_pseudo = alpha / n_pseudo if n_pseudo > 0 else 0.0

    for i in range(H):
        ht[i] = 0.0
    if fusion != CONTINUOUS:
        for t in toks:
            w = w_pseudo if (fusion == DISCRETIZED and pseudo[t]) else w_word
            for i in range(H):
                ht[i] += w * U[t, i]

    use_v = fusion != TEXT and fusion != DISCRETIZED
    if use_v:
        D = V.shape[1]
        for i in range(H):
            s = scal[0]
            for j in range(D):
                s += V[i, j] * x[j]
            hv[i] = s

    # a/b are the (possibly gated) operands of the fusion rule
    if fusion == TEXT or fusion == DISCRETIZED:
        for i in range(H):
            h[i] = ht[i]
    elif fusion == CONTINUOUS:
        for i in range(H):
            h[i] = hv[i]
    elif fusion == ADDITIVE:
        for i in range(H):
            h[i] = ht[i] + hv[i]
    elif fusion == MAX:
        for i in range(H):
            h[i] = ht[i] if ht[i] >= hv[i] else hv[i]
    else:
        for i in range(H):
            a[i] = ht[i]
            b[i] = hv[i]
        if fusion == GATED or fusion == BILINEAR_GATED:
            if gate == GATE_TEXT:
                for i in range(H):
                    a[i] = _sigmoid(ht[i])
            else:
                for i in range(H):
                    b[i] = _sigmoid(hv[i])
        if fusion == GATED:
            for i in range(H):
                h[i] = a[i] * b[i]
        else:
            for i in range(H):
                ai = a[i]
                for j in range(H):
                    h[i * H + j] = ai * b[j]

    zmax = -np.inf
    for k in range(K):
        s = scal[0]
        for j in range(Hout):
            s += W[k, j] * h[j]
        logits[k] = s
        if s > zmax:
            zmax = s
    z = 0.0
    for k in range(K):
        logits[k] = math.exp(logits[k] - zmax)
        z += logits[k]
    loss = -math.log(logits[label] / z)

    for j in range(Hout):
        dh[j] = 0.0
    for k in range(K):
        g64 = logits[k] / z
        if k == label:
            g64 -= 1.0
        # scal[1:] hold scalars in the parameter dtype so float32 loops stay float32;
        # scal[0] is always zero
        scal[1] = g64
        scal[2] = lr * g64
        g = scal[1]
        step = scal[2]
        for j in range(Hout):
            dh[j] += g * W[k, j]
            W[k, j] -= step * h[j]

    if fusion == TEXT or fusion == DISCRETIZED:
        for i in range(H):
            dht[i] = dh[i]
    elif fusion == CONTINUOUS:
        for i in range(H):
            dhv[i] = dh[i]
    elif fusion == ADDITIVE:
        for i in range(H):
            dht[i] = dh[i]
            dhv[i] = dh[i]
    elif fusion == MAX:
        for i in range(H):
            if ht[i] >= hv[i]:
                dht[i] = dh[i]
                dhv[i] = 0.0
            else:
                dht[i] = 0.0
                dhv[i] = dh[i]
    else:
        # gradients w.r.t. the operands a, b
        if fusion == GATED:
            for i in range(H):
                dht[i] = dh[i] * b[i]
                dhv[i] = dh[i] * a[i]
        else:
            for i in range(H):
                s = scal[0]
                for j in range(H):
                    s += dh[i * H + j] * b[j]
                dht[i] = s
            for j in range(H):
                dhv[j] = 0.0
            for i in range(H):
                ai = a[i]
                for j in range(H):
                    dhv[j] += dh[i * H + j] * ai
        if fusion == GATED or fusion == BILINEAR_GATED:
            if gate == GATE_TEXT:
                for i in range(H):
                    dht[i] *= a[i] * (1.0 - a[i])
            else:
                for i in range(H):
                    dhv[i] *= b[i] * (1.0 - b[i])

    if fusion != CONTINUOUS:
        for t in toks:
            w = w_pseudo if (fusion == DISCRETIZED and pseudo[t]) else w_word
            scal[2] = lr * w
            step = scal[2]
            for i in range(H):
                U[t, i] -= step * dht[i]
    if use_v:
        D = V.shape[1]
        for i in range(H):
            scal[2] = lr * dhv[i]
            step = scal[2]
            for j in range(D):
                V[i, j] -= step * x[j]
    return loss


@numba.njit(cache=True, nogil=True)
def make_scratch(U, W):
    H = U.shape[1]
    Hout = W.shape[1]
    K = W.shape[0]
    return (np.zeros(H, U.dtype), np.zeros(H, U.dtype), np.zeros(H, U.dtype),
            np.zeros(H, U.dtype), np.zeros(Hout, U.dtype), np.zeros(Hout, U.dtype),
            np.zeros(H, U.dtype), np.zeros(H, U.dtype), np.zeros(K, np.float64),
            np.zeros(3, U.dtype))


@numba.njit(cache=True, nogil=True)
def single_step(U, V, W, fusion, gate, alpha, pseudo, toks, label, x, lr):
    ht, hv, a, b, h, dh, dht, dhv, logits, scal = make_scratch(U, W)
    return _step(U, V, W, fusion, gate, alpha, pseudo, toks, label, x, lr,
                 ht, hv, a, b, h, dh, dht, dhv, logits, scal)


@numba.njit(cache=True, nogil=True)
def run_epoch(U, V, W, fusion, gate, alpha, pseudo, tokens, offsets, labels, feats,
              order, lr0, budget, counters, worker, ema):
    """One pass over ``order``; returns the summed loss.

    The learning rate decays linearly with the total work done by all
    workers, read from ``counters`` without synchronization. Each worker only
    writes its own counter slot.
    """
    ht, hv, a, b, h, dh, dht, dhv, logits, scal = make_scratch(U, W)
    use_v = fusion != TEXT and fusion != DISCRETIZED
    total = 0.0
    nworkers = counters.shape[0]
    for idx in order:
        done = 0
        for w in range(nworkers):
            done += counters[w]
        p = done / budget
        if p > 1.0:
            p = 1.0
        lr = lr0 * (1.0 - p)
        s = offsets[idx]
        e = offsets[idx + 1]
        counters[worker] += e - s + 1
        label = labels[idx]
        if label < 0:
            continue
        x = feats[idx] if use_v else feats[0]
        loss = _step(U, V, W, fusion, gate, alpha, pseudo, tokens[s:e], label, x, lr,
                     ht, hv, a, b, h, dh, dht, dhv, logits, scal)
        total += loss
        ema[worker] = loss if ema[worker] < 0 else 0.9999 * ema[worker] + 0.0001 * loss
    return total
