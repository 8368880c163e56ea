"""Scalar reference implementations written with plain Python loops.

They share no code with the package: lists of floats in, lists of floats out.
"""

import math


def tolist(t):
    return t.detach().double().tolist()


def matvec(x, W, b=None):
    """Row vector ``x`` times ``W`` (in x out), plus optional bias."""
    out = []
    for j in range(len(W[0])):
        acc = 0.0
        for i in range(len(x)):
            acc += x[i] * W[i][j]
        out.append(acc + (b[j] if b is not None else 0.0))
    return out


def softmax(xs):
    m = max(xs)
    es = [math.exp(x - m) for x in xs]
    s = sum(es)
    return [e / s for e in es]


def layer_norm(x, g, b, eps=1e-5):
    mu = sum(x) / len(x)
    var = sum((v - mu) ** 2 for v in x) / len(x)
    return [(x[i] - mu) / math.sqrt(var + eps) * g[i] + b[i] for i in range(len(x))]


def gelu(v):
    return 0.5 * v * (1.0 + math.erf(v / math.sqrt(2.0)))


def adapter(down_w, down_b, up_w, up_b, h, r):
    z = [max(0.0, v) for v in matvec(h, down_w, down_b)]
    u = matvec(z, up_w, up_b)
    return [u[i] + r[i] for i in range(len(r))]


def fusion(qw, qb, kw, kb, vw, vb, query, outs):
    q = matvec(query, qw, qb)
    scores = []
    for a in outs:
        k = matvec(a, kw, kb)
        scores.append(sum(q[i] * k[i] for i in range(len(q))) / math.sqrt(len(query)))
    w = softmax(scores)
    fused = [0.0] * len(query)
    for n, a in enumerate(outs):
        v = matvec(a, vw, vb)
        for i in range(len(fused)):
            fused[i] += w[n] * v[i]
    return fused, w


def cross_entropy(logits, targets, ignore=-100):
    """Mean over counted positions of -log softmax(logits)[target]; logits B x N x K."""
    total, count = 0.0, 0
    for b in range(len(logits)):
        for t in range(len(logits[b])):
            y = targets[b][t]
            if y == ignore:
                continue
            row = logits[b][t]
            m = max(row)
            lse = m + math.log(sum(math.exp(v - m) for v in row))
            total += lse - row[y]
            count += 1
    return total / count


def encoder(P, ids, mask, layers, heads, hook=None):
    """Pre-LN encoder over one sequence; returns the per-layer states and final output.

    ``hook(layer, y, r + y)`` receives one position's vectors at a time.
    """
    n = len(ids)
    h = len(P["backbone.tok_emb"][0])
    dh = h // heads
    x = [[P["backbone.tok_emb"][ids[t]][i] + P["backbone.pos_emb"][t][i] for i in range(h)]
         for t in range(n)]
    states = [x]
    for l in range(layers):
        p = f"backbone.layer{l}."
        a = [layer_norm(x[t], P[p + "ln1_g"], P[p + "ln1_b"]) for t in range(n)]
        q = [matvec(a[t], P[p + "wq"], P[p + "bq"]) for t in range(n)]
        k = [matvec(a[t], P[p + "wk"], P[p + "bk"]) for t in range(n)]
        v = [matvec(a[t], P[p + "wv"], P[p + "bv"]) for t in range(n)]
        ctx = [[0.0] * h for _ in range(n)]
        for hd in range(heads):
            sl = range(hd * dh, (hd + 1) * dh)
            for t in range(n):
                scores, keys = [], []
                for s in range(n):
                    if mask[s]:
                        scores.append(sum(q[t][i] * k[s][i] for i in sl) / math.sqrt(dh))
                        keys.append(s)
                w = softmax(scores)
                for j, s in enumerate(keys):
                    for i in sl:
                        ctx[t][i] += w[j] * v[s][i]
        r = []
        for t in range(n):
            o = matvec(ctx[t], P[p + "wo"], P[p + "bo"])
            r.append([x[t][i] + o[i] for i in range(h)])
        new = []
        for t in range(n):
            f = layer_norm(r[t], P[p + "ln2_g"], P[p + "ln2_b"])
            mid = [gelu(v_) for v_ in matvec(f, P[p + "w1"], P[p + "b1"])]
            y = matvec(mid, P[p + "w2"], P[p + "b2"])
            ry = [r[t][i] + y[i] for i in range(h)]
            new.append(hook(l, y, ry) if hook else ry)
        x = new
        states.append(x)
    out = [layer_norm(x[t], P["backbone.lnf_g"], P["backbone.lnf_b"]) for t in range(n)]
    return states, out


def flatten(x):
    if isinstance(x, (list, tuple)):
        return [v for item in x for v in flatten(item)]
    return [float(x)]


def max_abs_diff(a, b):
    fa, fb = flatten(a), flatten(b)
    assert len(fa) == len(fb), (len(fa), len(fb))
    return max((abs(u - v) for u, v in zip(fa, fb)), default=0.0)
