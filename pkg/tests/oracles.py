"""Independent brute-force reference implementations for the tests.

Everything here is pure-Python float arithmetic over the direct formulas, on
purpose sharing no code with the library: the tests compare the library's
vectorized/log-space paths against these.
"""

from __future__ import annotations

import math


def distance(p, q, norm_order: float = 2.0) -> float:
    if isinstance(p, (int, float)):
        return abs(float(p) - float(q))
    diffs = [abs(a - b) for a, b in zip(p, q)]
    if math.isinf(norm_order):
        return max(diffs)
    return sum(d**norm_order for d in diffs) ** (1.0 / norm_order)


def similarity(d: float, family: str, theta: float) -> float:
    if family == "polynomial":
        return d**-theta
    return math.exp(-theta * d)


def response_distribution(points, query, target, family, theta, norm_order=2.0):
    """Pr(R = r | query, target) by direct evaluation of the similarity ratio."""
    sims = [
        similarity(distance(points[target], points[q], norm_order), family, theta)
        for q in query
    ]
    total = sum(sims)
    return [s / total for s in sims]


def bayes_update(points, prior, query, response, family, theta, norm_order=2.0):
    """Exhaustive-enumeration Bayes step.

    Conditions on the target not being among the queried points, then weights
    each surviving point by its probability of producing the observed
    response, renormalizing at each stage.
    """
    cond = [0.0 if i in query else p for i, p in enumerate(prior)]
    total = sum(cond)
    if total <= 0.0:
        raise ZeroDivisionError("no mass outside the query")
    cond = [p / total for p in cond]
    weighted = []
    for i, p in enumerate(cond):
        if p == 0.0:
            weighted.append(0.0)
            continue
        probs = response_distribution(points, query, i, family, theta, norm_order)
        weighted.append(p * probs[response])
    z = sum(weighted)
    return [w / z for w in weighted]


def marginal_responses(points, prior, query, family, theta, norm_order=2.0):
    k = len(query)
    out = [0.0] * k
    for i, p in enumerate(prior):
        if p == 0.0 or i in query:
            continue
        probs = response_distribution(points, query, i, family, theta, norm_order)
        for r in range(k):
            out[r] += p * probs[r]
    total = sum(out)
    return [o / total for o in out]


def entropy_bits(dist) -> float:
    return -sum(p * math.log2(p) for p in dist if p > 0.0)


def kl_bits(a, b) -> float:
    return sum(p * math.log2(p / q) for p, q in zip(a, b) if p > 0.0)


def expected_gain_direct(points, prior, query, family, theta, norm_order=2.0):
    """Sum over responses of Pr(response) * entropy drop, fully enumerated."""
    h0 = entropy_bits(prior)
    marg = marginal_responses(points, prior, query, family, theta, norm_order)
    gain = 0.0
    for r in range(len(query)):
        post = bayes_update(points, prior, query, r, family, theta, norm_order)
        gain += marg[r] * (h0 - entropy_bits(post))
    return gain
