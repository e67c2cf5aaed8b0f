"""Almost-invariant epsilon-networks and their measure-theoretic relaxation.

A point set ``A`` is an almost-invariant ``eps``-network when every iterate
``T^n(A)`` is an ``eps``-network. Certificates are stamped with the checked
range of ``n`` and the slack of the probe grid. The constructors follow the
two routes from the theory: segments of minimal orbits (which need minimal
points to be dense), and multishadowed periodic chains through the chain
recurrent set.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError, UnsupportedOperationError
from .pseudo import periodic_chain, repeat_chain
from .recurrence import chain_recurrent_cells, gaps_with_sentinels
from .space import Grid, build_grid, distance, nearest
from .systems import orbit_segment
from .shadowing import multishadow_search, thin_points

CHUNK = 2_000_000


def _nearest_columns_1d(space, cols, probes):
    """Distance from every probe to the nearest point of every column.

    ``cols`` has shape ``(m, B)``; the result has shape ``(len(probes), B)``.
    Columns are sorted and laid end to end with a per-column offset, so a
    single ``searchsorted`` serves all of them.
    """
    m, B = cols.shape
    srt = np.sort(cols, axis=0)
    if space.kind == "circle":
        span = 1.0
        padded = np.vstack([srt[-1:] - 1.0, srt, srt[:1] + 1.0])
    else:
        span = space.b - space.a
        lo = np.full((1, B), space.a - 4 * span)
        hi = np.full((1, B), space.b + 4 * span)
        padded = np.vstack([lo, srt, hi])
    step = 16.0 * span
    offs = step * np.arange(B)
    flat = (padded + offs[None, :]).T.ravel()
    q = probes[:, None] + offs[None, :]
    pos = np.searchsorted(flat, q.ravel()).reshape(q.shape)
    left = flat[pos - 1]
    right = flat[pos]
    return np.minimum(q - left, right - q)


def _continuum_radius_1d(space, cols):
    """Exact covering radius of the whole 1-D space by every column of ``cols``."""
    srt = np.sort(cols, axis=0)
    if space.kind == "circle":
        gaps = np.diff(np.vstack([srt, srt[:1] + 1.0]), axis=0)
        return gaps.max(axis=0) / 2
    inner = np.diff(srt, axis=0).max(axis=0) / 2 if len(srt) > 1 else np.zeros(srt.shape[1])
    return np.maximum(np.maximum(srt[0] - space.a, space.b - srt[-1]), inner)


def _coverage(space, cols, probes):
    """Worst probe distance and its probe index for every column of ``cols``."""
    if space.is_one_dimensional:
        d = _nearest_columns_1d(space, cols, probes)
    else:
        d = np.stack([nearest(space, cols[:, j], probes)[0] for j in range(cols.shape[1])], axis=1)
    worst = np.argmax(d, axis=0)
    return d[worst, np.arange(d.shape[1])], worst


def _probe_points(probes):
    if isinstance(probes, Grid):
        return probes.reps, probes.radius
    return np.asarray(probes, dtype=float), 0.0


def iterate_sets(system, A, n_min, n_max):
    """``T^n(A)`` for ``n_min <= n <= n_max`` as columns of an array ``(len(A), n_max - n_min + 1)``."""
    A = np.atleast_1d(np.asarray(A, dtype=float))
    if n_min < 0 and not system.invertible:
        raise UnsupportedOperationError(f"{system.name} is not invertible; negative iterates requested")
    if n_min >= 0:
        block = system.orbit_block(A, n_max)
        return block[:, n_min:]
    return np.atleast_2d(orbit_segment(system, A, n_min, n_max))


@dataclass(frozen=True, eq=False)
class EpsilonNetwork:
    """A verified almost-invariant ``eps``-network over ``n_min..n_max``."""

    system: str
    points: np.ndarray
    eps: float
    n_min: int
    n_max: int
    worst_radius: np.ndarray
    slack: float
    provenance: str
    probes: object
    found: bool = True

    @property
    def size(self):
        return len(self.points)

    @property
    def certified_radius(self):
        return float(np.max(self.worst_radius)) + self.slack

    def to_dict(self):
        return {
            "kind": "epsilon-network",
            "system": self.system,
            "points": np.asarray(self.points).tolist(),
            "eps": self.eps,
            "n_min": self.n_min,
            "n_max": self.n_max,
            "max_worst_radius": float(np.max(self.worst_radius)),
            "slack": self.slack,
            "provenance": self.provenance,
            "coverage": "exact" if isinstance(self.probes, Grid) else "probes",
        }

    def radius_csv(self):
        """Per-iterate worst coverage radius as ``n,radius`` CSV text."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["n", "radius"])
        for n, r in zip(range(self.n_min, self.n_max + 1), self.worst_radius):
            w.writerow([n, repr(float(r))])
        return buf.getvalue()


@dataclass(frozen=True)
class NetworkFailure:
    """The first iterate ``n`` at which some probe is farther than ``eps`` from ``T^n(A)``."""

    system: str
    eps: float
    n: int
    probe: object
    distance: float
    size: int
    found: bool = False

    def to_dict(self):
        return {
            "kind": "network-failure",
            "system": self.system,
            "eps": self.eps,
            "n": self.n,
            "probe": np.asarray(self.probe).tolist(),
            "distance": self.distance,
            "size": self.size,
        }


@dataclass(frozen=True)
class ConstructionImpossible:
    """Minimal points are not ``eps/2``-dense: ``witness`` is farther than that from all of them."""

    system: str
    eps: float
    witness: object
    distance: float
    found: bool = False

    def to_dict(self):
        return {
            "kind": "construction-impossible",
            "system": self.system,
            "eps": self.eps,
            "witness": np.asarray(self.witness).tolist(),
            "distance": self.distance,
        }


def verify_almost_invariant(system, A, eps, N_range, probe_grid, two_sided=False, provenance="manual"):
    """Check that ``T^n(A)`` covers the probes within ``eps`` for every checked ``n``.

    The range is ``[0, N_range]``, or ``[-N_range, N_range]`` with
    ``two_sided`` (invertible systems only).

    Returns
    -------
    EpsilonNetwork or NetworkFailure
        On failure, the lowest violating ``n`` and its worst probe.
    """
    A = np.atleast_1d(np.asarray(A, dtype=float))
    if A.size == 0:
        raise InvalidInputError("A is empty")
    if two_sided and not system.invertible:
        raise UnsupportedOperationError(f"{system.name} is not invertible; two-sided range requested")
    space = system.space
    # a full 1-D grid stands for the whole space: use the exact covering radius
    exact = isinstance(probe_grid, Grid) and space.is_one_dimensional
    probes, slack = _probe_points(probe_grid)
    if exact:
        slack = 0.0
    n_min = -int(N_range) if two_sided else 0
    n_max = int(N_range)
    cols = iterate_sets(system, A, n_min, n_max)
    chunk = max(1, CHUNK // max(1, len(probes)))
    radii = np.empty(cols.shape[1])
    for s in range(0, cols.shape[1], chunk):
        block = cols[:, s:s + chunk]
        if exact:
            worst = _continuum_radius_1d(space, block)
        else:
            worst, idx = _coverage(space, block, probes)
        radii[s:s + chunk] = worst
        bad = np.flatnonzero(worst > eps)
        if len(bad):
            j = int(bad[0])
            if exact:
                # report the worst probe of the failing iterate
                w, idx = _coverage(space, block[:, j:j + 1], probes)
                probe = probes[idx[0]]
            else:
                probe = probes[idx[j]]
            return NetworkFailure(system.label, float(eps), n_min + s + j, probe, float(worst[j]), len(A))
    return EpsilonNetwork(system.label, A, float(eps), n_min, n_max, radii, float(slack), provenance, probe_grid if exact else probes)


def covering_lower_bound(space, eps):
    """Least number of closed ``eps``-balls that can cover a 1-D space."""
    if not space.is_one_dimensional:
        raise UnsupportedOperationError("covering bound implemented for 1-D spaces")
    length = 1.0 if space.kind == "circle" else space.b - space.a
    return max(1, math.ceil(length / (2 * eps) - 1e-12))


def max_return_gap(system, x, cells_grid, horizon):
    """Largest gap between visits of the orbit of ``x`` to each cell it visits (lead gap included)."""
    orbit = np.atleast_1d(orbit_segment(system, x, 0, int(horizon)))
    labels = cells_grid.assign(orbit)
    worst = 1
    for c in np.unique(labels):
        worst = max(worst, int(gaps_with_sentinels(np.flatnonzero(labels == c), horizon).max()))
    return worst


def construct_from_minimal_orbits(system, eps, report, grid, horizon, N_range=None, restrict_to_cr=False, probes=None):
    """Build a network from segments ``x, T(x), ..., T^n(x)`` of minimal orbits.

    Parameters
    ----------
    report : RecurrenceReport
        Source of minimal-consistent (and chain recurrent) cells of ``grid``.
    horizon : int
        Horizon for the return gaps that size each segment.
    N_range : int, optional
        Verification range (default ``horizon``).
    restrict_to_cr : bool
        Cover only the chain recurrent cells instead of the whole space.

    Returns
    -------
    EpsilonNetwork, NetworkFailure or ConstructionImpossible
    """
    space = system.space
    half = eps / 2
    if restrict_to_cr:
        targets = thin_points(space, grid.reps[report.cr], half)
        probe_pts = grid.reps[report.cr] if probes is None else probes
    else:
        targets = build_grid(space, half).reps
        probe_pts = grid if probes is None else probes
    minimal = grid.reps[report.minimal]
    if len(minimal) == 0:
        return ConstructionImpossible(system.label, float(eps), targets[0], math.inf)
    dist, idx = nearest(space, minimal, targets)
    if np.max(dist) > half:
        w = int(np.argmax(dist))
        return ConstructionImpossible(system.label, float(eps), targets[w], float(dist[w]))
    balls = build_grid(space, half)
    chosen = []
    for b, j in zip(targets, idx):
        if chosen and np.min(distance(space, np.concatenate(chosen), b)) <= half:
            continue
        x = minimal[j]
        n = max_return_gap(system, x, balls, horizon)
        chosen.append(np.atleast_1d(orbit_segment(system, x, 0, n)))
    A = np.unique(np.concatenate(chosen))
    return verify_almost_invariant(
        system, A, eps, horizon if N_range is None else N_range, probe_pts, provenance="minimal-orbits"
    )


def construct_from_periodic_chains(system, eps, d, graph, budget, N_range, repeats=4, candidate_grid=None):
    """Build a network from multishadowed periodic ``d``-chains through the chain recurrent cells.

    For an ``eps``-net ``x_j`` of the chain recurrent representatives, a
    closed chain through ``x_j`` is repeated and multishadowed by orbits
    ``A(x_j)``; the network is the union of ``T^i(A(x_j))`` over one period.
    Coverage is verified on the chain recurrent representatives at ``2 eps``.

    ``graph`` must be built with jump ``d - grid.radius`` so that chains
    read off it are ``d``-pseudotrajectories.

    Returns
    -------
    EpsilonNetwork, NetworkFailure or MultishadowFailure
    """
    grid = graph.grid
    space = system.space
    cr_pts = grid.reps[chain_recurrent_cells(graph)]
    centers = thin_points(space, cr_pts, eps)
    parts = []
    for x in centers:
        chain = periodic_chain(system, x, d, grid, graph=graph)
        if chain is None:
            continue
        k = chain.meta["period"]
        seq = repeat_chain(system, chain, max(1, repeats))
        cert = multishadow_search(system, seq, eps, candidate_grid, budget)
        if not cert.found:
            return cert
        for p, a in zip(cert.points, cert.anchors):
            # the orbit point at time 0, then one period of its iterates
            y0 = p if a == 0 else _orbit_start(system, p, a, seq)
            parts.append(np.atleast_1d(orbit_segment(system, y0, 0, k - 1)))
    if not parts:
        return NetworkFailure(system.label, float(eps), 0, cr_pts[0] if len(cr_pts) else 0.0, math.inf, 0)
    A = np.unique(np.concatenate(parts))
    return verify_almost_invariant(system, A, 2 * eps, N_range, cr_pts, provenance="periodic-chains")


def _orbit_start(system, point, anchor, seq):
    from .shadowing import anchored_orbit

    return anchored_orbit(system, point, anchor, seq.k_min, seq.k_max, guide=seq.points)[0]


def minimize_network(system, network, two_sided=False):
    """Greedy removal: drop points (most crowded first) while verification still passes.

    Duplicates are removed first. The result is re-verified with the
    original ``eps``, range and probes.
    """
    space = system.space
    pts = np.unique(np.asarray(network.points, dtype=float))
    N = network.n_max
    two_sided = two_sided or network.n_min < 0

    def check(P):
        return verify_almost_invariant(system, P, network.eps, N, network.probes, two_sided, network.provenance)

    if len(pts) > 1:
        crowd = np.array([np.min(distance(space, np.delete(pts, i), p)) for i, p in enumerate(pts)])
        order = np.lexsort((np.arange(len(pts)), crowd))
        keep = np.ones(len(pts), bool)
        for i in order:
            keep[i] = False
            if not keep.any() or not check(pts[keep]).found:
                keep[i] = True
        pts = pts[keep]
    result = check(pts)
    if not result.found:
        return network
    return EpsilonNetwork(
        result.system, result.points, result.eps, result.n_min, result.n_max, result.worst_radius,
        network.slack, network.provenance, result.probes,
    )


@dataclass(frozen=True, eq=False)
class MuNetwork:
    """Iterates of ``A`` carry mass above ``1 - eps`` of the measure for every checked ``n``."""

    system: str
    points: np.ndarray
    eps: float
    n_min: int
    n_max: int
    covered_mass: np.ndarray
    found: bool = True

    @property
    def min_mass(self):
        return float(np.min(self.covered_mass))

    def to_dict(self):
        return {
            "kind": "mu-network",
            "system": self.system,
            "points": np.asarray(self.points).tolist(),
            "eps": self.eps,
            "n_min": self.n_min,
            "n_max": self.n_max,
            "min_covered_mass": self.min_mass,
        }


@dataclass(frozen=True)
class MuNetworkFailure:
    """Iterate ``n`` covers only ``mass <= 1 - eps``."""

    system: str
    eps: float
    n: int
    mass: float
    found: bool = False

    def to_dict(self):
        return {"kind": "mu-network-failure", "system": self.system, "eps": self.eps, "n": self.n, "mass": self.mass}


def verify_mu_almost_invariant(system, A, eps, measure, N_range, two_sided=False):
    """Check ``mu(U_eps(T^n(A))) > 1 - eps`` for every checked ``n``.

    Cells count as covered when their representative lies within ``eps``
    of ``T^n(A)``.
    """
    w = np.asarray(measure.weights, dtype=float)
    if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-9:
        raise InvalidInputError("measure is not normalized")
    A = np.atleast_1d(np.asarray(A, dtype=float))
    if A.size == 0:
        raise InvalidInputError("A is empty")
    support = np.flatnonzero(w > 0)
    reps = measure.grid.reps[support]
    ws = w[support]
    n_min = -int(N_range) if two_sided else 0
    cols = iterate_sets(system, A, n_min, int(N_range))
    space = system.space
    chunk = max(1, CHUNK // max(1, len(reps)))
    mass = np.empty(cols.shape[1])
    for s in range(0, cols.shape[1], chunk):
        block = cols[:, s:s + chunk]
        if space.is_one_dimensional:
            d = _nearest_columns_1d(space, block, reps)
        else:
            d = np.stack([nearest(space, block[:, j], reps)[0] for j in range(block.shape[1])], axis=1)
        mass[s:s + chunk] = ws @ (d <= eps)
    bad = np.flatnonzero(mass <= 1 - eps)
    if len(bad):
        j = int(bad[0])
        return MuNetworkFailure(system.label, float(eps), n_min + j, float(mass[j]))
    return MuNetwork(system.label, A, float(eps), n_min, int(N_range), mass)
