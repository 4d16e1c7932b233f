"""Upper concave envelopes of point sets sorted by abscissa."""

from __future__ import annotations

import numpy as np


def upper_hull_indices(x, y) -> np.ndarray:
    """Indices of the vertices of the smallest concave majorant.

    Monotone chain over points already sorted by ``x``; O(len(x)).
    Collinear middle points are dropped so every returned vertex is a
    strict kink (or an endpoint).
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.shape != y.shape or x.ndim != 1:
        raise ValueError("x and y must be 1-d arrays of equal length")
    if x.size and np.any(np.diff(x) <= 0):
        raise ValueError("x must be strictly increasing")
    hull: list[int] = []
    for i in range(x.size):
        while len(hull) >= 2:
            a, b = hull[-2], hull[-1]
            # drop b unless it lies strictly above the chord a -> i
            cross = (x[b] - x[a]) * (y[i] - y[a]) - (y[b] - y[a]) * (x[i] - x[a])
            if cross >= 0:
                hull.pop()
            else:
                break
        hull.append(i)
    return np.asarray(hull, dtype=int)


def upper_concave_envelope(x, y) -> tuple[np.ndarray, np.ndarray]:
    """Evaluate the smallest concave majorant of ``(x, y)`` at every ``x``.

    Returns ``(envelope, vertices)``. Envelope values equal ``y`` exactly
    at the vertices.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size == 0:
        return y.copy(), np.zeros(0, dtype=int)
    idx = upper_hull_indices(x, y)
    env = np.interp(x, x[idx], y[idx])
    env[idx] = y[idx]
    return env, idx


def bridges(vertices: np.ndarray) -> list[tuple[int, int]]:
    """Pairs of consecutive hull vertices that skip at least one point."""
    return [(int(a), int(b)) for a, b in zip(vertices[:-1], vertices[1:]) if b - a > 1]


def gift_wrap_upper_hull(x, y) -> np.ndarray:
    """Reference O(n^2) upper hull: from each vertex jump to the point of
    steepest slope (the farthest one on ties). Used to cross-check
    :func:`upper_hull_indices`.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size == 0:
        return np.zeros(0, dtype=int)
    hull = [0]
    i = 0
    while i < x.size - 1:
        slopes = (y[i + 1:] - y[i]) / (x[i + 1:] - x[i])
        best = np.flatnonzero(slopes == slopes.max())
        i = i + 1 + int(best[-1])
        hull.append(i)
    return np.asarray(hull, dtype=int)
