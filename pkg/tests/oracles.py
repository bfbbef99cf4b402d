"""Independent brute-force oracles shared by the unit and acceptance tests.

None of these import package internals; they use plain integers, sets and
exhaustive enumeration.
"""
import itertools
from fractions import Fraction


def threshold(n, p, fpr):
    """Smallest m with P[X > m] < fpr for X ~ Binomial(n, p), in exact integer arithmetic.

    With p = a/b and fpr = c/e the test ``P[X > m] < fpr`` becomes
    ``e * sum_{k>m} C(n,k) a^k (b-a)^(n-k) < c * b^n``.
    """
    pf, ff = Fraction(p), Fraction(fpr)
    a, b = pf.numerator, pf.denominator
    c, e = ff.numerator, ff.denominator
    if a == 0:
        return 0
    rhs = c * b**n
    tail = 0
    term = a**n  # C(n, m) a^m (b-a)^(n-m) at m = n
    for m in range(n, -1, -1):
        # tail holds the scaled P[X > m]
        if e * tail >= rhs:
            return m + 1
        tail += term
        if m:
            # Stepping to m - 1 multiplies by m (b-a) / ((n-m+1) a); the division is exact.
            num = term * m * (b - a)
            den = (n - m + 1) * a
            assert num % den == 0
            term = num // den
    return 0


def connected(tiles):
    tiles = set(tiles)
    if not tiles:
        return False
    start = next(iter(tiles))
    seen, todo = {start}, [start]
    while todo:
        r, c = todo.pop()
        for nb in ((r + 1, c), (r - 1, c), (r, c + 1), (r, c - 1)):
            if nb in tiles and nb not in seen:
                seen.add(nb)
                todo.append(nb)
    return seen == tiles


def reaches(routing, host):
    """Vertical access: a host tile is served from directly above or below."""
    r, c = host
    return bool({(r - 1, c), (r + 1, c)} & set(routing))


def candidates(ids, placement, support, blocked=()):
    free = [t for t in ids if t not in placement.values() and t not in blocked]
    ok = []
    for k in range(1, len(free) + 1):
        for sub in itertools.combinations(free, k):
            if connected(sub) and all(reaches(sub, placement[q]) for q in support):
                if not any(set(o) < set(sub) for o in ok):
                    ok.append(sub)
    return {frozenset(s) for s in ok}


def min_steps(ids, placement, supports, blocked=()):
    """Fewest steps over every assignment of rotations to steps, or None if some rotation cannot run."""
    cands = [candidates(ids, placement, s, blocked) for s in supports]
    if any(not c for c in cands):
        return None

    def feasible(group):
        for choice in itertools.product(*(cands[r] for r in group)):
            if sum(len(c) for c in choice) == len(frozenset().union(*choice)):
                return True
        return False

    n = len(supports)
    for k in range(1, n + 1):
        for labels in itertools.product(range(k), repeat=n):
            if len(set(labels)) != k:
                continue
            groups = [[r for r in range(n) if labels[r] == g] for g in range(k)]
            if all(feasible(g) for g in groups):
                return k
    return None
