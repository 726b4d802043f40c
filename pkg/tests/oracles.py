"""Slow, direct reference implementations used to check the fast code."""

import itertools
import math


def quantile(xs, p):
    s = sorted(xs)
    pos = (len(s) - 1) * p
    lo = math.floor(pos)
    hi = min(lo + 1, len(s) - 1)
    return s[lo] + (pos - lo) * (s[hi] - s[lo])


def window_stats(xs, bins=16, lag=1):
    """The 14 window statistics, one formula at a time, in plain Python."""
    n = len(xs)
    mu = math.fsum(xs) / n
    dev = [x - mu for x in xs]
    m2 = math.fsum(d * d for d in dev) / n
    m3 = math.fsum(d ** 3 for d in dev) / n
    m4 = math.fsum(d ** 4 for d in dev) / n
    lo, hi = min(xs), max(xs)
    const = lo == hi
    s = sorted(xs)
    median = s[n // 2] if n % 2 else (s[n // 2 - 1] + s[n // 2]) / 2
    std = 0.0 if const else math.sqrt(math.fsum(d * d for d in dev) / (n - 1))
    aad = 0.0 if const else math.fsum(abs(d) for d in dev) / n
    skew = 0.0 if const else m3 / m2 ** 1.5
    kurt = 0.0 if const else m4 / m2 ** 2 - 3.0

    ent = 0.0
    if not const:
        counts = [0] * bins
        w = (hi - lo) / bins
        for x in xs:
            k = int((x - lo) / w) if x < hi else bins - 1
            counts[min(k, bins - 1)] += 1
        for c in counts:
            if c:
                p = c / n
                ent -= p * math.log2(p)

    den = math.fsum(d * d for d in dev)
    acf = 0.0 if const or den == 0 else math.fsum(dev[t] * dev[t + lag] for t in range(n - lag)) / den

    zc, prev = 0, 0
    for d in dev if not const else []:
        sign = (d > 0) - (d < 0)
        if sign == 0:
            continue
        if prev and sign != prev:
            zc += 1
        prev = sign

    energy = math.fsum(x * x for x in xs) / n
    return [lo, hi, mu, median, quantile(xs, 0.25), quantile(xs, 0.75), std, aad,
            skew, ent, kurt, acf, float(zc), energy]


def sugeno_measure(densities, lam, subset):
    """g(A) from the closed product form (prod(1 + lam*g) - 1) / lam.

    Evaluated as expm1(sum log1p(lam*g)) / lam so large lambda keeps its digits.
    """
    if not subset:
        return 0.0
    if lam == 0.0:
        return math.fsum(densities[i] for i in subset)
    return math.expm1(math.fsum(math.log1p(lam * densities[i]) for i in subset)) / lam


def choquet_bruteforce(f, densities, lam):
    """Sorted-difference form, with every needed subset measured from scratch."""
    n = len(f)
    table = {}
    for r in range(n + 1):
        for combo in itertools.combinations(range(n), r):
            table[frozenset(combo)] = sugeno_measure(densities, lam, combo)
    # boundary condition of a fuzzy measure; near sum(g) = 1 lambda is too
    # ill-conditioned for the product form to land on 1 by itself
    table[frozenset(range(n))] = 1.0
    order = sorted(range(n), key=lambda i: (f[i], i))
    total, prev = 0.0, 0.0
    for k, i in enumerate(order):
        total += (f[i] - prev) * table[frozenset(order[k:])]
        prev = f[i]
    return total


def pairwise_auc(truth, scores):
    pos = [s for t, s in zip(truth, scores) if t == 1]
    neg = [s for t, s in zip(truth, scores) if t == 0]
    wins = 0.0
    for p in pos:
        for q in neg:
            wins += 1.0 if p > q else 0.5 if p == q else 0.0
    return wins / (len(pos) * len(neg))


def lambda_bisect(g, iters=200):
    """Plain bisection for prod(1 + lam*g) = 1 + lam.

    The residual is negative just right of the root when sum(g) < 1 (root
    above 0) and positive just left of it when sum(g) > 1 (root in (-1, 0)).
    """
    f = lambda lam: math.prod(1 + lam * x for x in g) - (1 + lam)  # noqa: E731
    total = math.fsum(g)
    if abs(total - 1) < 1e-15:
        return 0.0
    if total < 1:
        lo, hi = 0.0, 1.0
        while f(hi) <= 0:
            hi *= 2
        for _ in range(iters):
            mid = (lo + hi) / 2
            lo, hi = (mid, hi) if f(mid) <= 0 else (lo, mid)
    else:
        lo, hi = -1.0, 0.0
        for _ in range(iters):
            mid = (lo + hi) / 2
            lo, hi = (mid, hi) if f(mid) > 0 else (lo, mid)
    return (lo + hi) / 2
