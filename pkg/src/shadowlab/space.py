"""Compact metric spaces, grids, and epsilon-network verification.

Four space kinds are supported:

* ``circle``: circumference 1, coordinates in ``[0, 1)``, arc distance.
* ``interval``: a closed interval ``[a, b]`` with the usual distance.
* ``torus``: the product of two circles with the sup (product) metric.
* ``finite``: points ``0..m-1`` with an explicit distance table.

One-dimensional points are plain floats (or float arrays), torus points are
arrays whose last axis has length 2, and finite-space points are integer
indices.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .errors import InvalidInputError

KINDS = ("circle", "interval", "torus", "finite")


def _circle_reduce(x):
    """Reduce coordinates mod 1 into ``[0, 1)``, guarding the ``1.0`` rounding edge."""
    r = np.mod(x, 1.0)
    return np.where(r >= 1.0, 0.0, r)


@dataclass(frozen=True, eq=False)
class SpaceDescriptor:
    """A compact metric space of one of the supported kinds.

    Use the :meth:`circle`, :meth:`interval`, :meth:`torus` and :meth:`finite`
    constructors rather than calling the class directly.
    """

    kind: str
    a: float = 0.0
    b: float = 1.0
    table: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise InvalidInputError(f"unknown space kind {self.kind!r}")
        if self.kind == "interval" and not self.b > self.a:
            raise InvalidInputError("interval needs a < b")
        if self.kind == "finite":
            _check_table(self.table)

    # constructors -------------------------------------------------------
    @classmethod
    def circle(cls):
        return cls("circle")

    @classmethod
    def interval(cls, a=0.0, b=1.0):
        return cls("interval", float(a), float(b))

    @classmethod
    def torus(cls):
        return cls("torus")

    @classmethod
    def finite(cls, table):
        t = np.array(table, dtype=float)
        t.setflags(write=False)
        return cls("finite", table=t)

    # derived quantities -------------------------------------------------
    @property
    def dimension(self):
        return {"circle": 1, "interval": 1, "torus": 2, "finite": 0}[self.kind]

    @property
    def is_one_dimensional(self):
        return self.kind in ("circle", "interval")

    @property
    def diameter(self):
        if self.kind == "interval":
            return self.b - self.a
        if self.kind == "finite":
            return float(self.table.max())
        return 0.5

    @property
    def size(self):
        """Number of points of a finite space."""
        return 0 if self.table is None else self.table.shape[0]

    def key(self):
        """Hashable identity used to compare spaces."""
        if self.kind == "finite":
            return ("finite", self.table.tobytes())
        return (self.kind, self.a, self.b)

    def __eq__(self, other):
        return isinstance(other, SpaceDescriptor) and self.key() == other.key()

    def __hash__(self):
        return hash(self.key())

    # points -------------------------------------------------------------
    def canonical(self, x):
        """Return ``x`` normalized to the canonical coordinate range."""
        if self.kind == "circle":
            return _circle_reduce(np.asarray(x, dtype=float))
        if self.kind == "interval":
            return np.clip(np.asarray(x, dtype=float), self.a, self.b)
        if self.kind == "torus":
            x = np.asarray(x, dtype=float)
            if x.shape[-1:] != (2,):
                raise InvalidInputError("torus points need a trailing axis of length 2")
            return _circle_reduce(x)
        x = np.asarray(x)
        if not np.issubdtype(x.dtype, np.integer):
            if np.any(x != np.round(x)):
                raise InvalidInputError("finite-space points are integer indices")
            x = x.astype(np.int64)
        if np.any((x < 0) | (x >= self.size)):
            raise InvalidInputError("finite-space index out of range")
        return x

    def contains(self, x):
        """True if every coordinate already lies in the canonical range."""
        x = np.asarray(x)
        if self.kind == "circle":
            return bool(np.all((x >= 0) & (x < 1)))
        if self.kind == "interval":
            return bool(np.all((x >= self.a) & (x <= self.b)))
        if self.kind == "torus":
            return x.shape[-1:] == (2,) and bool(np.all((x >= 0) & (x < 1)))
        return bool(np.all((x >= 0) & (x < self.size)))

    def distance(self, x, y):
        """Metric between (broadcastable arrays of) points."""
        return distance(self, x, y)

    def to_dict(self):
        params = {}
        if self.kind == "interval":
            params = {"a": self.a, "b": self.b}
        elif self.kind == "finite":
            params = {"table": self.table.tolist()}
        return {"kind": self.kind, "params": params}

    @classmethod
    def from_dict(cls, data):
        kind, params = data["kind"], data.get("params", {})
        if kind == "circle":
            return cls.circle()
        if kind == "interval":
            return cls.interval(params["a"], params["b"])
        if kind == "torus":
            return cls.torus()
        if kind == "finite":
            return cls.finite(params["table"])
        raise InvalidInputError(f"unknown space kind {kind!r}")


def _check_table(table):
    if table is None:
        raise InvalidInputError("finite space needs a distance table")
    t = np.asarray(table, dtype=float)
    if t.ndim != 2 or t.shape[0] != t.shape[1] or t.shape[0] < 1:
        raise InvalidInputError("distance table must be square and nonempty")
    if np.any(t < 0) or np.any(np.diag(t) != 0) or not np.allclose(t, t.T, atol=0):
        raise InvalidInputError("distance table must be symmetric, nonnegative, zero-diagonal")
    # triangle inequality: t[i, k] <= t[i, j] + t[j, k]
    via = (t[:, :, None] + t[None, :, :]).min(axis=1)
    if np.any(t > via + 1e-12):
        raise InvalidInputError("distance table violates the triangle inequality")
    if t.shape[0] > 1 and np.any(t[~np.eye(t.shape[0], dtype=bool)] == 0):
        raise InvalidInputError("distinct finite points need positive distance")


def distance(space, x, y):
    """Distance between points ``x`` and ``y`` of ``space``.

    Parameters
    ----------
    space : SpaceDescriptor
    x, y : array_like
        Points (or broadcastable arrays of points) in canonical coordinates.

    Returns
    -------
    float or ndarray
    """
    kind = space.kind
    if kind == "finite":
        xi, yi = np.asarray(x), np.asarray(y)
        out = space.table[xi, yi]
        return float(out) if np.ndim(out) == 0 else out
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if kind == "torus":
        if x.shape[-1:] != (2,) or y.shape[-1:] != (2,):
            raise InvalidInputError("dimension mismatch: torus points have 2 coordinates")
        d = np.abs(x - y)
        d = np.minimum(d, 1.0 - d).max(axis=-1)
    else:
        d = np.abs(x - y)
        if kind == "circle":
            d = np.minimum(d, 1.0 - d)
    return float(d) if d.ndim == 0 else d


def signed_circle_difference(x, y):
    """Signed arc ``x - y`` on the circle, in ``[-1/2, 1/2)``."""
    return np.mod(np.asarray(x, dtype=float) - y + 0.5, 1.0) - 0.5


class Grid:
    """Finite set of cell representatives forming a ``mesh/2``-network.

    Attributes
    ----------
    space : SpaceDescriptor
    mesh : float
        Requested mesh.
    reps : ndarray
        Cell representatives; ``reps[i]`` represents cell ``i``.
    radius : float
        Largest distance from a point of the space to its representative
        (at most ``mesh/2``).
    """

    def __init__(self, space, mesh, reps, radius, divisions=None):
        self.space = space
        self.mesh = float(mesh)
        self.reps = reps
        self.reps.setflags(write=False)
        self.radius = float(radius)
        self.divisions = divisions

    def __len__(self):
        return len(self.reps)

    @property
    def n_cells(self):
        return len(self.reps)

    @property
    def uniform(self):
        """True for the evenly spaced grids of one-dimensional spaces."""
        return self.divisions is not None and self.space.is_one_dimensional

    def key(self):
        return (self.space.key(), self.mesh, len(self.reps))

    def same_as(self, other):
        return self.key() == other.key()

    def assign(self, points):
        """Index of the nearest representative; ties go to the lowest index."""
        space = self.space
        n = self.divisions
        if space.kind == "circle":
            x = np.asarray(points, dtype=float) * n
            idx = np.ceil(x - 0.5).astype(np.int64)
            # x*n == n - 1/2 ties between cells n-1 and 0
            idx = np.where((idx >= n) | (x == n - 0.5), 0, idx)
            return idx % n
        if space.kind == "interval":
            x = (np.asarray(points, dtype=float) - space.a) * (n / (space.b - space.a))
            return np.clip(np.ceil(x - 0.5).astype(np.int64), 0, n)
        if space.kind == "torus":
            p = np.asarray(points, dtype=float) * n
            ij = np.ceil(p - 0.5).astype(np.int64)
            ij = np.where((ij >= n) | (p == n - 0.5), 0, ij) % n
            return ij[..., 0] * n + ij[..., 1]
        _, idx = nearest(space, self.reps, np.asarray(points))
        return idx

    def cell_points(self, cells):
        return self.reps[np.asarray(cells, dtype=np.int64)]


def build_grid(space, mesh):
    """Build a grid whose representatives form a ``mesh/2``-network.

    Parameters
    ----------
    space : SpaceDescriptor
    mesh : float
        Requested spacing, ``0 < mesh <= diameter``.

    Returns
    -------
    Grid

    Examples
    --------
    >>> build_grid(SpaceDescriptor.circle(), 0.25).reps
    array([0.  , 0.25, 0.5 , 0.75])
    """
    mesh = float(mesh)
    if not mesh > 0 or not math.isfinite(mesh):
        raise InvalidInputError("mesh must be positive")
    if mesh > space.diameter * (1 + 1e-12):
        raise InvalidInputError("mesh must not exceed the diameter")
    kind = space.kind
    if kind == "circle":
        n = max(1, math.ceil(1.0 / mesh - 1e-9))
        return Grid(space, mesh, np.arange(n) / n, 0.5 / n, n)
    if kind == "interval":
        length = space.b - space.a
        n = max(1, math.ceil(length / mesh - 1e-9))
        reps = space.a + np.arange(n + 1) * (length / n)
        reps[-1] = space.b
        return Grid(space, mesh, reps, 0.5 * length / n, n)
    if kind == "torus":
        n = max(1, math.ceil(1.0 / mesh - 1e-9))
        g = np.arange(n) / n
        reps = np.stack(np.meshgrid(g, g, indexing="ij"), axis=-1).reshape(-1, 2)
        return Grid(space, mesh, reps, 0.5 / n, n)
    # finite: greedy net in index order
    chosen = []
    t = space.table
    for i in range(space.size):
        if not chosen or t[i, chosen].min() > mesh / 2:
            chosen.append(i)
    reps = np.array(chosen, dtype=np.int64)
    radius = float(t[:, reps].min(axis=1).max())
    return Grid(space, mesh, reps, radius)


def nearest(space, candidates, probes):
    """Distance from each probe to its nearest candidate, and that candidate's index.

    Ties break toward the lowest candidate index.
    """
    cand = np.asarray(candidates)
    probes = np.asarray(probes)
    if cand.size == 0:
        raise InvalidInputError("candidate set is empty")
    kind = space.kind
    if kind == "finite":
        d = space.table[np.ix_(cand.ravel(), probes.ravel())]
        idx = d.argmin(axis=0)
        return d[idx, np.arange(d.shape[1])].reshape(probes.shape), idx.reshape(probes.shape)
    if kind == "torus":
        cand = cand.reshape(-1, 2)
        flat = probes.reshape(-1, 2)
        tree = cKDTree(cand, boxsize=1.0)
        k = min(2, len(cand))
        dist, idx = tree.query(flat, k=k, p=np.inf)
        if k == 2:
            tie = np.isclose(dist[:, 0], dist[:, 1], rtol=0, atol=1e-15)
            best = np.where(tie, np.minimum(idx[:, 0], idx[:, 1]), idx[:, 0])
            dist = dist[:, 0]
        else:
            best, dist = idx, dist
        best = np.asarray(best).reshape(probes.shape[:-1])
        return distance(space, flat, cand[best.ravel()]).reshape(best.shape), best
    # one-dimensional: sort the unique candidate values, keep lowest index per value
    cand = cand.astype(float).ravel()
    values, first = np.unique(cand, return_index=True)
    p = probes.astype(float).ravel()
    m = len(values)
    pos = np.searchsorted(values, p)
    if kind == "circle":
        left = (pos - 1) % m
        right = pos % m
    else:
        left = np.clip(pos - 1, 0, m - 1)
        right = np.clip(pos, 0, m - 1)
    dl = distance(space, p, values[left])
    dr = distance(space, p, values[right])
    il, ir = first[left], first[right]
    pick_left = (dl < dr) | ((dl == dr) & (il <= ir))
    dist = np.where(pick_left, dl, dr)
    idx = np.where(pick_left, il, ir)
    return dist.reshape(probes.shape), idx.reshape(probes.shape)


@dataclass(frozen=True)
class NetworkCheck:
    """Outcome of :func:`verify_epsilon_network`.

    ``worst_probe`` is a probe at maximal distance from the candidate set
    (lowest index on ties); ``slack`` is the probe-grid radius that must be
    added to ``eps`` to turn probe coverage into coverage of the space.
    """

    passed: bool
    eps: float
    worst_distance: float
    worst_index: int
    worst_probe: object
    slack: float

    @property
    def certified_radius(self):
        return self.eps + self.slack

    def __bool__(self):
        return self.passed


def verify_epsilon_network(space, candidate, probes, eps, slack=None):
    """Check that every probe lies within ``eps`` of some candidate point.

    Parameters
    ----------
    space : SpaceDescriptor
    candidate : array_like
        Candidate network points (nonempty).
    probes : Grid or array_like
        Probe points. When a :class:`Grid` is passed its radius is reported
        as the slack.
    eps : float
    slack : float, optional
        Slack to report for explicit probe arrays (default 0).

    Returns
    -------
    NetworkCheck
    """
    cand = np.asarray(candidate)
    if cand.size == 0:
        raise InvalidInputError("candidate set is empty")
    if isinstance(probes, Grid):
        slack = probes.radius if slack is None else slack
        probes = probes.reps
    probes = np.asarray(probes)
    if probes.size == 0:
        raise InvalidInputError("probe set is empty")
    dist, _ = nearest(space, cand, probes)
    dist = np.asarray(dist).ravel()
    worst = int(np.argmax(dist))
    probe = probes.reshape(len(dist), -1)[worst]
    probe = probe if space.kind == "torus" else probe.item()
    return NetworkCheck(
        passed=bool(dist[worst] <= eps),
        eps=float(eps),
        worst_distance=float(dist[worst]),
        worst_index=worst,
        worst_probe=probe,
        slack=float(slack or 0.0),
    )
