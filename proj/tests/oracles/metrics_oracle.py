#!/usr/bin/env python3
"""Straight-line reference values for the metrics test fixture.

Usage: metrics_oracle.py tests/fixtures/metrics_fixture.json
Prints one `name value` line per metric; the C++ test pins these numbers.
"""
import json
import math
import sys
from collections import Counter


def grams(toks, n):
    return Counter(tuple(toks[i:i + n]) for i in range(len(toks) - n + 1))


def bleu4(hyps, refs, eps=1e-9):
    match = [0] * 4
    total = [0] * 4
    c = sum(len(h) for h in hyps)
    r = sum(len(x) for x in refs)
    for h, ref in zip(hyps, refs):
        for n in range(1, 5):
            hg, rg = grams(h, n), grams(ref, n)
            match[n - 1] += sum(min(k, rg[g]) for g, k in hg.items())
            total[n - 1] += sum(hg.values())
    if c == 0:
        return 0.0
    logs = [math.log(m / t) if m > 0 else math.log(eps) for m, t in zip(match, total)]
    bp = 1.0 if c > r else math.exp(1 - r / c)
    return 100 * bp * math.exp(sum(logs) / 4)


def distinct(hyps, n):
    allg = Counter()
    for h in hyps:
        allg.update(grams(h, n))
    tot = sum(allg.values())
    return 0.0 if tot == 0 else 100 * len(allg) / tot


def lcs(a, b):
    t = [[0] * (len(b) + 1) for _ in range(len(a) + 1)]
    for i in range(len(a)):
        for j in range(len(b)):
            t[i + 1][j + 1] = t[i][j] + 1 if a[i] == b[j] else max(t[i][j + 1], t[i + 1][j])
    return t[-1][-1]


def rouge(hyps, refs):
    out = []
    for h, r in zip(hyps, refs):
        l = lcs(h, r)
        if not h or not r or l == 0:
            out.append(0.0)
            continue
        p, q = l / len(h), l / len(r)
        out.append(100 * 2 * p * q / (p + q))
    return sum(out) / len(out)


def cider(hyps, refs, sigma=6.0):
    df = Counter()
    for r in refs:
        seen = set()
        for n in range(1, 5):
            seen.update(grams(r, n).keys())
        df.update(seen)
    logn = math.log(len(refs))

    def vec(toks):
        v, norm = [], []
        for n in range(1, 5):
            d = {g: k * (logn - math.log(max(1.0, df[g]))) for g, k in grams(toks, n).items()}
            v.append(d)
            norm.append(math.sqrt(sum(x * x for x in d.values())))
        return v, norm

    scores = []
    for h, r in zip(hyps, refs):
        vh, nh = vec(h)
        vr, nr = vec(r)
        delta = len(h) - len(r)
        s = 0.0
        for n in range(4):
            val = sum(min(x, vr[n].get(g, 0.0)) * vr[n].get(g, 0.0) for g, x in vh[n].items())
            if nh[n] != 0 and nr[n] != 0:
                val /= nh[n] * nr[n]
            s += val * math.exp(-(delta ** 2) / (2 * sigma ** 2))
        scores.append(s / 4 * 10)
    return sum(scores) / len(scores)


def main():
    data = json.load(open(sys.argv[1]))
    hyps = [h.split() for h in data["hypotheses"]]
    refs = [r.split() for r in data["references"]]
    print("bleu4_pair0 %.15g" % bleu4(hyps[:1], refs[:1]))
    print("bleu4 %.15g" % bleu4(hyps, refs))
    print("dist1 %.15g" % distinct(hyps, 1))
    print("dist2 %.15g" % distinct(hyps, 2))
    print("rouge_l %.15g" % rouge(hyps, refs))
    print("cider %.15g" % cider(hyps, refs))


if __name__ == "__main__":
    main()
