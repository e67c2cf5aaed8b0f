"""Empirical invariant measures on grid cells.

Measures are histograms over the cells of a :class:`~shadowlab.space.Grid`.
The module builds them from time averages along sequences, transports them
with the cell map, averages iterates (Cesàro), combines several of them with
geometric weights into a measure of full support, and reports invariance and
recurrence statistics.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError, SingularDerivativeError, UnsupportedOperationError
from .space import distance, nearest
from .systems import orbit_segment

NORM_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class EmpiricalMeasure:
    """Nonnegative cell weights summing to one."""

    grid: object
    weights: np.ndarray
    provenance: str = ""

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if w.shape != (self.grid.n_cells,):
            raise InvalidInputError("one weight per grid cell expected")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-9:
            raise InvalidInputError("weights must be nonnegative and sum to 1")
        # renormalize so every measure is exact to rounding
        object.__setattr__(self, "weights", w / w.sum())

    @property
    def support(self):
        return np.flatnonzero(self.weights > 0)

    def integrate(self, f):
        """``sum_c f(rep_c) w_c`` for a vectorized function ``f``."""
        return float(np.dot(self.weights, f(self.grid.reps)))

    def to_dict(self):
        return {
            "kind": "empirical-measure",
            "mesh": self.grid.mesh,
            "n_cells": self.grid.n_cells,
            "support_size": int(len(self.support)),
            "provenance": self.provenance,
        }

    def to_csv(self):
        """``cell, rep, weight`` rows for every cell."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["cell", "rep", "weight"])
        for c, (r, x) in enumerate(zip(self.grid.reps, self.weights)):
            w.writerow([c, repr(float(r)), repr(float(x))])
        return buf.getvalue()


def _normalized(grid, counts, provenance):
    counts = np.asarray(counts, dtype=float)
    return EmpiricalMeasure(grid, counts / counts.sum(), provenance)


def point_mass(grid, x):
    w = np.zeros(grid.n_cells)
    w[int(grid.assign(x))] = 1.0
    return EmpiricalMeasure(grid, w, "point-mass")


def uniform_measure(grid):
    return EmpiricalMeasure(grid, np.full(grid.n_cells, 1.0 / grid.n_cells), "uniform")


def birkhoff_measure(pseudo, grid, window=None):
    """Time average of cell indicators over the index window ``[start, end)``.

    Parameters
    ----------
    pseudo : Pseudotrajectory or array_like
    window : (int, int), optional
        Indices of the sequence (default: the whole range).
    """
    pts = getattr(pseudo, "points", pseudo)
    k_min = getattr(pseudo, "k_min", 0)
    pts = np.asarray(pts)
    start, end = (k_min, k_min + len(pts)) if window is None else (int(window[0]), int(window[1]))
    if end <= start:
        raise InvalidInputError("empty window")
    if start < k_min or end > k_min + len(pts):
        raise InvalidInputError("window outside the sequence range")
    cells = grid.assign(pts[start - k_min:end - k_min])
    counts = np.bincount(cells, minlength=grid.n_cells)
    return _normalized(grid, counts, f"birkhoff[{start},{end})")


def cell_map(system, grid):
    """Cell of ``T(rep_c)`` for every cell ``c``."""
    return grid.assign(system.T(grid.reps))


def push_forward(system, measure, cmap=None):
    """Transport each cell's mass to the cell of the image of its representative."""
    cmap = cell_map(system, measure.grid) if cmap is None else cmap
    w = np.bincount(cmap, weights=measure.weights, minlength=measure.grid.n_cells)
    return EmpiricalMeasure(measure.grid, w, measure.provenance + "|push")


def total_variation(p, q):
    return float(0.5 * np.abs(np.asarray(p.weights) - np.asarray(q.weights)).sum())


def invariance_defect(system, measure, cmap=None):
    """Total variation between a measure and its push-forward."""
    return total_variation(measure, push_forward(system, measure, cmap))


def cesaro_invariantize(system, measure, n, cmap=None):
    """``(1/n) sum_{i<n} T_#^i mu`` with the cell map."""
    if n < 1:
        raise InvalidInputError("n must be at least 1")
    cmap = cell_map(system, measure.grid) if cmap is None else cmap
    size = measure.grid.n_cells
    cur = np.asarray(measure.weights, dtype=float)
    acc = np.zeros(size)
    for _ in range(int(n)):
        acc += cur
        cur = np.bincount(cmap, weights=cur, minlength=size)
    return _normalized(measure.grid, acc, f"{measure.provenance}|cesaro{int(n)}")


def atomic_cesaro(system, points, grid, n, weights=None):
    """Cesàro average of an atomic measure, with atoms moved along exact orbits.

    Binning the atoms only after they move keeps the average free of the
    cell map's artifacts (a rotation by an irrational angle becomes a
    permutation of cells, which may split into several cycles).
    """
    pts = np.atleast_1d(np.asarray(points, dtype=float))
    if len(pts) == 0:
        raise InvalidInputError("no atoms")
    w = np.full(len(pts), 1.0 / len(pts)) if weights is None else np.asarray(weights, dtype=float)
    orbits = system.orbit_block(pts, int(n) - 1)
    cells = grid.assign(orbits)
    counts = np.bincount(cells.ravel(), weights=np.repeat(w, orbits.shape[1]), minlength=grid.n_cells)
    return _normalized(grid, counts, f"atomic-cesaro{int(n)}")


def combine_full_support(measures):
    """``sum_m 2^-m mu_m`` over the list, renormalized."""
    measures = list(measures)
    if not measures:
        raise InvalidInputError("no measures to combine")
    grid = measures[0].grid
    if any(not m.grid.same_as(grid) for m in measures):
        raise InvalidInputError("measures live on different grids")
    coef = 0.5 ** np.arange(1, len(measures) + 1)
    w = sum(c * m.weights for c, m in zip(coef, measures))
    return _normalized(grid, w, f"combined[{len(measures)}]")


def full_support_pipeline(system, grid, eps_list, networks, n):
    """Uniform atomic measures on each network, averaged along orbits, then combined.

    Parameters
    ----------
    eps_list : sequence of float
        Scales ``eps_m``, recorded in the provenance.
    networks : sequence of array_like
        Point sets ``A_m`` (one per scale).
    n : int
        Cesàro length.

    Returns
    -------
    (EmpiricalMeasure, list of EmpiricalMeasure)
        The combined measure and the averaged ``mu_m``.
    """
    parts = [atomic_cesaro(system, A, grid, n) for A in networks]
    combined = combine_full_support(parts)
    label = ",".join(f"{e:g}" for e in eps_list)
    return EmpiricalMeasure(grid, combined.weights, f"full-support[eps={label}]"), parts


def mass_near(measure, cells, radius):
    """Mass of the cells whose representative is within ``radius`` of the given cells' representatives."""
    cells = np.asarray(cells, dtype=np.int64)
    if len(cells) == 0:
        return 0.0
    grid = measure.grid
    d, _ = nearest(grid.space, grid.reps[cells], grid.reps)
    return float(measure.weights[d <= radius + 1e-12].sum())


def near_mask(system, points, eps, targets):
    """Boolean mask: ``x_k`` within ``eps`` of some target point."""
    targets = np.asarray(targets, dtype=float)
    if len(targets) == 0:
        return np.zeros(len(points), bool)
    d, _ = nearest(system.space, targets, np.asarray(points))
    return d <= eps


def recurrent_fraction(system, pseudo, eps, recurrent_points, min_window=None):
    """Smallest fraction of indices near the recurrent points over windows ``[0, N)``, ``N >= min_window``.

    ``min_window`` defaults to a tenth of the sequence length.
    """
    pts = getattr(pseudo, "points", pseudo)
    near = near_mask(system, pts, eps, recurrent_points)
    L = len(near)
    w = max(1, L // 10) if min_window is None else int(min_window)
    frac = np.cumsum(near) / np.arange(1, L + 1)
    return float(frac[min(w, L) - 1:].min())


def lyapunov_estimate(system, x, n):
    """``(1/n) sum_{k<n} log|T'(T^k x)|`` for a 1-D system with a derivative."""
    if system.derivative is None:
        raise UnsupportedOperationError(f"{system.name} has no derivative")
    if n < 1:
        raise InvalidInputError("n must be at least 1")
    orbit = np.atleast_1d(orbit_segment(system, x, 0, int(n) - 1))
    der = np.abs(np.asarray(system.derivative(orbit), dtype=float))
    zero = np.flatnonzero(der == 0)
    if len(zero):
        raise SingularDerivativeError(int(zero[0]))
    return float(np.mean(np.log(der)))


def trig_polynomials(rng, count, degree=5):
    """Random real trigonometric polynomials on the circle (period 1), as callables."""
    out = []
    for _ in range(count):
        a = rng.normal(size=degree + 1)
        b = rng.normal(size=degree + 1)
        k = np.arange(degree + 1)

        def f(x, a=a, b=b):
            x = np.asarray(x, dtype=float)[..., None]
            return (a * np.cos(2 * math.pi * k * x) + b * np.sin(2 * math.pi * k * x)).sum(axis=-1)

        out.append(f)
    return out


def chebyshev_polynomials(rng, count, degree=5, a=-1.0, b=1.0):
    """Random Chebyshev series on ``[a, b]``, as callables."""
    out = []
    for _ in range(count):
        c = rng.normal(size=degree + 1)
        out.append(lambda x, c=c: np.polynomial.chebyshev.chebval((2 * np.asarray(x) - a - b) / (b - a), c))
    return out


def sup_norm(f, grid):
    return float(np.max(np.abs(f(grid.reps))))


def function_gap(system, measure, f, cmap=None):
    """``|int f o T dmu - int f dmu|`` with ``f o T`` taken at grid scale.

    ``f o T`` at cell ``c`` is ``f`` at the representative of the cell of
    ``T(rep_c)``, which is what the push-forward transports. This makes
    ``function_gap <= 2 * invariance_defect * max|f|`` hold exactly.
    """
    cmap = cell_map(system, measure.grid) if cmap is None else cmap
    reps = measure.grid.reps
    return abs(float(np.dot(measure.weights, f(reps[cmap]) - f(reps))))
