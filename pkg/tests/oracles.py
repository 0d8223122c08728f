"""Brute-force reference implementations built from scalar loops and ``math``.

Nothing here imports the package under test.
"""

import math


def softmax(xs):
    m = max(xs)
    exps = [math.exp(x - m) for x in xs]
    total = math.fsum(exps)
    return [e / total for e in exps]


def entropy(ps):
    return -math.fsum(p * math.log(p) for p in ps if p > 0.0)


def cosine(u, v):
    dot = math.fsum(a * b for a, b in zip(u, v))
    nu = math.sqrt(math.fsum(a * a for a in u))
    nv = math.sqrt(math.fsum(b * b for b in v))
    return dot / (nu * nv)


def matvec(rows, vec):
    return [math.fsum(r[j] * vec[j] for j in range(len(vec))) for r in rows]


def fuse(lo_a, lo_b, s_a, s_b, u_a, u_b):
    """Returns (dominant, fused logits, argmax)."""
    if u_a < u_b:
        dom, aux, s, name = lo_a, lo_b, s_b, "A"
    else:
        dom, aux, s, name = lo_b, lo_a, s_a, "B"
    re = matvec(s, aux)
    fused = [d + r for d, r in zip(dom, re)]
    best = 0
    for i, f in enumerate(fused):
        if f > fused[best]:
            best = i
    return name, fused, best


def pstd(xs):
    mu = math.fsum(xs) / len(xs)
    return math.sqrt(math.fsum((x - mu) ** 2 for x in xs) / len(xs))


def uncertainty(module_logits_a, module_logits_b):
    """DMSS for one sample from per-module logit lists; returns dict of pairs."""
    ha = [entropy(softmax(lo)) for lo in module_logits_a]
    hb = [entropy(softmax(lo)) for lo in module_logits_b]
    ea, eb = pstd(ha), pstd(hb)
    n = len(module_logits_a[0])
    mean_a = [math.fsum(lo[i] for lo in module_logits_a) / len(module_logits_a) for i in range(n)]
    mean_b = [math.fsum(lo[i] for lo in module_logits_b) / len(module_logits_b) for i in range(n)]
    hpa, hpb = entropy(softmax(mean_a)), entropy(softmax(mean_b))
    inc = (0.5, 0.5) if ea + eb == 0 else (ea / (ea + eb), eb / (ea + eb))
    dif = (0.5, 0.5) if hpa + hpb == 0 else (hpa / (hpa + hpb), hpb / (hpa + hpb))
    return {"inc": inc, "dif": dif, "u": (inc[0] + dif[0], inc[1] + dif[1])}


def prune_topk(s, k):
    """Keep per row the diagonal plus the k-1 largest off-diagonal entries (lower index wins ties)."""
    n = len(s)
    out = [[0.0] * n for _ in range(n)]
    for i in range(n):
        others = sorted((j for j in range(n) if j != i), key=lambda j: (-s[i][j], j))
        for j in [i] + others[: k - 1]:
            out[i][j] = s[i][j]
    return out


def ensemble_ce(module_logits, label):
    """Module-averaged CE plus CE of the mean-logit posterior, one sample."""
    k = len(module_logits)
    per = [-math.log(softmax(lo)[label]) for lo in module_logits]
    n = len(module_logits[0])
    mean = [math.fsum(lo[i] for lo in module_logits) / k for i in range(n)]
    return math.fsum(per) / k - math.log(softmax(mean)[label])
