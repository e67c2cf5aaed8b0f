"""Slow, obviously-correct reference implementations used by the tests."""

import itertools
import math

import numpy as np


def circle_dist(x, y):
    d = abs(x - y) % 1.0
    return min(d, 1.0 - d)


def brute_cr_cells(n, edges):
    """Cells on a closed path, found by enumerating paths breadth first.

    ``reach[k]`` holds the cells reachable from each start by paths of length
    exactly ``k``; a cell is chain recurrent iff it reaches itself for some
    ``k <= n``.
    """
    succ = [set() for _ in range(n)]
    for a, b in edges:
        succ[a].add(b)
    out = []
    for c in range(n):
        frontier, seen = {c}, set()
        found = False
        for _ in range(n):
            nxt = set()
            for v in frontier:
                nxt |= succ[v]
            if c in nxt:
                found = True
                break
            frontier = nxt - seen
            seen |= nxt
            if not frontier:
                break
        if found:
            out.append(c)
    return out


def brute_edges(T, reps, dist, d, slack):
    """Edge list of the transition graph by testing every pair."""
    edges = []
    for i, r in enumerate(reps):
        img = T(r)
        for j, s in enumerate(reps):
            if dist(img, s) <= d + slack + 1e-12:
                edges.append((i, j))
    return edges


def return_times(T, x, center, radius, horizon, dist):
    times, y = [], x
    for m in range(horizon + 1):
        if dist(y, center) < radius:
            times.append(m)
        y = T(y)
    return times


def upper_density(K, range_end):
    K = set(K)
    best = 0.0
    for N in range(1, range_end + 2):
        best = max(best, sum(1 for k in K if k < N) / N)
    return best


def min_cover_size(cover):
    """Smallest number of columns covering every row, by exhaustive search."""
    cover = np.asarray(cover, dtype=bool)
    m = cover.shape[1]
    for size in range(1, m + 1):
        for cols in itertools.combinations(range(m), size):
            if cover[:, cols].any(axis=1).all():
                return size
    return math.inf


def continuum_radius_circle(points, probes=20001):
    """Covering radius of a point set on the circle, sampled on a fine grid."""
    xs = np.arange(probes) / probes
    pts = np.asarray(points, dtype=float)
    d = np.abs(xs[:, None] - pts[None, :]) % 1.0
    return float(np.minimum(d, 1.0 - d).min(axis=1).max())
