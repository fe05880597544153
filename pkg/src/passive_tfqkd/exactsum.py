"""Error-free products and correctly rounded dot products.

Products are split exactly into two doubles (Dekker), and the pieces are
summed with :func:`math.fsum`, so each result is the exact value rounded once.
"""

import math
from itertools import chain

import numpy as np

_SPLITTER = 134217729.0   # 2**27 + 1


def _split(a):
    t = _SPLITTER * a
    high = t - (t - a)
    return high, a - high


def exact_products(a, b):
    """``a * b`` as an unevaluated sum ``p + e`` of two doubles (Dekker)."""
    p = a * b
    ah, al = _split(a)
    bh, bl = _split(b)
    e = ((ah * bh - p) + ah * bl + al * bh) + al * bl
    return p, e


def accurate_matvec(mat, vec, base=None):
    """Correctly rounded ``base + mat @ vec`` for each row."""
    mat = np.asarray(mat, float)
    p, e = exact_products(mat, np.asarray(vec, float)[None, :])
    pieces = np.concatenate([p, e], axis=1).tolist()
    if base is None:
        return np.array([math.fsum(row) for row in pieces])
    return np.array([math.fsum(chain(row, (b,))) for row, b in zip(pieces, np.asarray(base, float).tolist())])


def accurate_dot(a, b) -> float:
    """Correctly rounded ``sum(a * b)`` over all elements."""
    p, e = exact_products(np.asarray(a, float), np.asarray(b, float))
    return math.fsum(chain(p.ravel().tolist(), e.ravel().tolist()))
