"""Naive reference implementations, kept deliberately independent of the
package internals: pure-python loops, no shared helpers. Fast paths are
cross-checked against these."""

import math


def naive_cosine(a, b):
    dot = sum(float(x) * float(y) for x, y in zip(a, b))
    na = math.sqrt(sum(float(x) * float(x) for x in a))
    nb = math.sqrt(sum(float(y) * float(y) for y in b))
    return dot / (na * nb)


def naive_top_n(ids, vectors, query, n, t):
    """Full scan: every cosine, filter by >= t, sort by (-sim, id), first n."""
    scored = [(naive_cosine(v, query), i) for i, v in zip(ids, vectors)]
    eligible = [(s, i) for s, i in scored if s >= t]
    eligible.sort(key=lambda pair: (-pair[0], pair[1]))
    return eligible[:n]


def naive_mean(values):
    return sum(values) / len(values)


def naive_median(values):
    ordered = sorted(values)
    mid = len(ordered) // 2
    if len(ordered) % 2 == 1:
        return ordered[mid]
    return (ordered[mid - 1] + ordered[mid]) / 2


def naive_weighted_mean(values, weights):
    clamped = [max(0.0, w) for w in weights]
    total = sum(clamped)
    if total == 0.0:
        return naive_mean(values)
    return sum(w * v for v, w in zip(values, clamped)) / total


def naive_rmse(predicted, actual):
    return math.sqrt(sum((p - a) ** 2 for p, a in zip(predicted, actual)) / len(predicted))
