"""Slow, obviously-correct reference implementations used as test oracles."""
import numpy as np


def gini_ref(labels):
    n = len(labels)
    if n == 0:
        return 0.0
    total = 0.0
    for c in set(labels):
        p = labels.count(c) / n
        total += p * (1 - p)
    return total


def brute_force_split(X, y, min_samples_leaf=1):
    """Enumerate every feature and every midpoint between distinct values.

    Returns (feature, threshold, decrease) of the best split; ties go to the
    lowest feature, then the lowest threshold.  None if nothing is valid.
    """
    X = np.asarray(X, dtype=float)
    y = list(np.asarray(y).tolist())
    n = len(y)
    parent = gini_ref(y)
    best = None
    for f in range(X.shape[1]):
        values = sorted(set(X[:, f].tolist()))
        for lo, hi in zip(values, values[1:]):
            t = (lo + hi) / 2
            if t == hi:
                t = lo
            left = [y[i] for i in range(n) if X[i, f] <= t]
            right = [y[i] for i in range(n) if X[i, f] > t]
            if len(left) < min_samples_leaf or len(right) < min_samples_leaf:
                continue
            dec = parent - len(left) / n * gini_ref(left) - len(right) / n * gini_ref(right)
            if best is None or dec > best[2] + 1e-12:
                best = (f, t, dec)
    return best


def numeric_grad(fun, x, h=1e-6):
    g = np.zeros_like(x)
    for i in np.ndindex(x.shape):
        old = x[i]
        x[i] = old + h
        fp = fun(x)
        x[i] = old - h
        fm = fun(x)
        x[i] = old
        g[i] = (fp - fm) / (2 * h)
    return g
