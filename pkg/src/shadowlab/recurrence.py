"""Finite-scale recurrence structure.

Transition graphs on grid cells, chain-recurrent cells, return-time sets,
syndetic tests, a three-valued minimality classifier, omega-limit samples,
and a report tying them together along the inclusion chain
``minimal <= recurrent <= nonwandering <= chain recurrent``.

Gap convention: for visit times ``t_0 < ... < t_r`` in ``[0, H]`` the gaps
are the successive differences of ``-1, t_0, ..., t_r, H + 1``. The first
and last entries measure the wait before the first visit and after the last
one. A constant visit sequence (every ``m``) has all gaps equal to 1.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components, shortest_path
from scipy.spatial import cKDTree

from .errors import InvalidInputError, ResourceError
from .space import build_grid, distance, nearest
from .systems import orbit_segment

EDGE_TOL = 1e-12
DEFAULT_MAX_CELLS = 200_000


@dataclass(frozen=True, eq=False)
class TransitionGraph:
    """Directed graph on grid cells: ``c -> c'`` iff ``rho(T(rep_c), rep_c') <= d + slack``.

    ``slack`` is the grid radius (at most ``mesh/2``).
    """

    grid: object
    d: float
    slack: float
    matrix: csr_matrix
    system_label: str

    @property
    def n_cells(self):
        return self.matrix.shape[0]

    def successors(self, cell):
        m = self.matrix
        return m.indices[m.indptr[cell]:m.indptr[cell + 1]]

    def edge_keys(self):
        """Sorted int64 keys ``src * n + dst`` of all edges."""
        m = self.matrix
        rows = np.repeat(np.arange(m.shape[0], dtype=np.int64), np.diff(m.indptr))
        return rows * m.shape[0] + m.indices.astype(np.int64)

    def has_edges(self, src, dst):
        keys = self.edge_keys()
        q = np.asarray(src, dtype=np.int64) * self.n_cells + np.asarray(dst, dtype=np.int64)
        pos = np.clip(np.searchsorted(keys, q), 0, max(len(keys) - 1, 0))
        return keys[pos] == q if len(keys) else np.zeros(q.shape, bool)

    def edge_list(self):
        m = self.matrix.tocoo()
        order = np.lexsort((m.col, m.row))
        return np.stack([m.row[order], m.col[order]], axis=1)

    def edge_text(self):
        """Plain ``src dst`` lines for external graph tools."""
        return "".join(f"{a} {b}\n" for a, b in self.edge_list())


def _neighbors_1d(grid, images, radius):
    """Rows/cols of all (image i, rep j) pairs within ``radius`` on a uniform 1-D grid."""
    space, n = grid.space, grid.divisions
    if space.kind == "circle":
        pos = images * n
        lo = np.ceil(pos - radius * n - 1e-9).astype(np.int64)
        width = int(np.floor(2 * radius * n + 1e-9)) + 3
        cand = lo[:, None] + np.arange(width)[None, :]
        cols = cand % n
    else:
        scale = n / (space.b - space.a)
        pos = (images - space.a) * scale
        lo = np.ceil(pos - radius * scale - 1e-9).astype(np.int64)
        width = int(np.floor(2 * radius * scale + 1e-9)) + 3
        cand = lo[:, None] + np.arange(width)[None, :]
        cols = np.clip(cand, 0, n)
    rows = np.broadcast_to(np.arange(len(images))[:, None], cols.shape)
    ok = distance(space, images[:, None], grid.reps[cols]) <= radius
    return rows[ok], cols[ok]


def build_transition_graph(system, grid, d, max_cells=DEFAULT_MAX_CELLS):
    """Build the ``d``-transition graph of ``system`` on ``grid``.

    Parameters
    ----------
    system : SystemSpec
    grid : Grid
    d : float
        Jump bound, ``d >= 0``.
    max_cells : int
        Cap on the cell count.

    Returns
    -------
    TransitionGraph
        A path of cells certifies a ``(d + mesh)``-chain between representatives.
    """
    if d < 0:
        raise InvalidInputError("d must be nonnegative")
    n = grid.n_cells
    if n > max_cells:
        raise ResourceError(f"grid has {n} cells, above the cap of {max_cells}")
    radius = d + grid.radius + EDGE_TOL
    images = system.T(grid.reps)
    space = grid.space
    if grid.uniform:
        rows, cols = _neighbors_1d(grid, images, radius)
    elif space.kind == "finite":
        ok = space.table[np.ix_(images.astype(np.int64), grid.reps)] <= radius
        rows, cols = np.nonzero(ok)
    else:
        tree = cKDTree(grid.reps, boxsize=1.0 if space.kind == "torus" else None)
        lists = tree.query_ball_point(images, r=radius, p=np.inf)
        rows = np.concatenate([np.full(len(l), i) for i, l in enumerate(lists)])
        cols = np.concatenate([np.asarray(l, dtype=np.int64) for l in lists])
    mat = csr_matrix((np.ones(len(rows), dtype=bool), (rows, cols)), shape=(n, n))
    mat.sum_duplicates()
    mat.sort_indices()
    return TransitionGraph(grid=grid, d=float(d), slack=grid.radius, matrix=mat, system_label=system.label)


def chain_recurrent_cells(graph):
    """Cells lying on a cycle: strongly connected components with an edge inside.

    Returns
    -------
    ndarray
        Sorted cell indices.
    """
    n, labels = connected_components(graph.matrix, directed=True, connection="strong")
    sizes = np.bincount(labels, minlength=n)
    self_loop = graph.matrix.diagonal().astype(bool)
    return np.flatnonzero((sizes[labels] >= 2) | self_loop)


def shortest_cycle(graph, cell, max_len=None):
    """Shortest closed path through ``cell`` as a list of cells (start first), or None."""
    cell = int(cell)
    if graph.matrix[cell, cell]:
        return [cell]
    dist, pred = shortest_path(graph.matrix, unweighted=True, indices=cell, return_predecessors=True)
    into = graph.matrix[:, cell].nonzero()[0]
    into = into[np.isfinite(dist[into])]
    if not len(into):
        return None
    best = into[np.lexsort((into, dist[into]))[0]]
    path = [int(best)]
    while path[-1] != cell:
        path.append(int(pred[path[-1]]))
    cycle = path[::-1]
    if max_len is not None and len(cycle) > max_len:
        return None
    return cycle


# ---------------------------------------------------------------------------
# return times and minimality

def gaps_with_sentinels(times, horizon):
    """Gaps of ``-1, times..., horizon + 1`` (see module docstring)."""
    t = np.concatenate([[-1], np.asarray(times, dtype=np.int64), [horizon + 1]])
    return np.diff(t)


@dataclass(frozen=True, eq=False)
class ReturnTimeSet:
    """Visit times of ``T^m(x)`` to the ball ``B(center, radius)`` for ``m <= horizon``."""

    x: object
    center: object
    radius: float
    horizon: int
    times: np.ndarray
    max_gap: int
    gap_bound: float

    @property
    def syndetic(self):
        return bool(self.max_gap <= self.gap_bound)


def return_times(system, x, center, radius, horizon, gap_bound=None):
    """Exact visit list of the forward orbit of ``x`` to an open ball.

    The syndetic verdict at the horizon is ``max_gap <= gap_bound``
    (default ``horizon / 10``).
    """
    if horizon < 1 or not radius > 0:
        raise InvalidInputError("need horizon >= 1 and radius > 0")
    orbit = orbit_segment(system, x, 0, int(horizon))
    times = np.flatnonzero(distance(system.space, orbit, center) < radius)
    gaps = gaps_with_sentinels(times, horizon)
    bound = horizon / 10 if gap_bound is None else gap_bound
    return ReturnTimeSet(x, center, float(radius), int(horizon), times, int(gaps.max()), float(bound))


MINIMAL, REFUTED, INCONCLUSIVE = "minimal-consistent", "refuted", "inconclusive"


@dataclass(frozen=True)
class MinimalVerdict:
    """Three-valued minimality verdict with the deciding ball as witness."""

    verdict: str
    witness_center: object
    witness_gap: int
    ball_radius: float
    horizon: int

    @property
    def consistent(self):
        return self.verdict == MINIMAL


def _ball_gap_stats(labels, horizon, n_balls):
    """Per-row worst leading gap and worst later gap over visited balls.

    Returns arrays (lead, lead_ball, after, after_ball); ties go to the
    lowest ball index.
    """
    m, width = labels.shape
    key = np.arange(m, dtype=np.int64)[:, None] * n_balls + labels
    flat = key.ravel()
    order = np.argsort(flat, kind="stable")
    ks = flat[order]
    ts = (order % width).astype(np.int64)
    new = np.ones(len(ks), bool)
    new[1:] = ks[1:] != ks[:-1]
    starts = np.flatnonzero(new)
    ends = np.append(starts[1:], len(ks)) - 1
    g_key = ks[starts]
    g_row, g_ball = g_key // n_balls, g_key % n_balls
    g_lead = ts[starts] + 1
    diffs = np.diff(ts)
    g_after = np.maximum(horizon + 1 - ts[ends], 0)
    # diffs[j] is a within-ball gap when j and j+1 share a group
    inner = np.flatnonzero(~new[1:])
    seg_max = np.zeros(len(starts), np.int64)
    np.maximum.at(seg_max, np.searchsorted(starts, inner + 1, side="right") - 1, diffs[inner])
    g_after = np.maximum(g_after, seg_max)

    def per_row(values):
        best = np.full(m, -1, np.int64)
        ball = np.zeros(m, np.int64)
        order = np.lexsort((g_ball, -values, g_row))
        first = np.ones(len(order), bool)
        first[1:] = g_row[order][1:] != g_row[order][:-1]
        sel = order[first]
        best[g_row[sel]] = values[sel]
        ball[g_row[sel]] = g_ball[sel]
        return best, ball

    lead, lead_ball = per_row(g_lead)
    after, after_ball = per_row(g_after)
    return lead, lead_ball, after, after_ball


def classify_orbits(system, orbits, eps, gap_fraction=0.1):
    """Classify many forward orbits (rows of ``orbits``) at ball scale ``eps``.

    Balls are the cells of a grid of mesh ``eps`` (each inside the ``eps``-ball
    around its center). An orbit is minimal-consistent when every visited
    ball is first reached and then revisited with all gaps at most
    ``gap_fraction * horizon``; it is refuted when some visited ball has a
    later gap above that bound; otherwise the verdict is inconclusive.

    Returns
    -------
    list of MinimalVerdict
    """
    orbits = np.asarray(orbits)
    horizon = orbits.shape[1] - 1
    bound = gap_fraction * horizon
    balls = build_grid(system.space, eps)
    labels = balls.assign(orbits)
    lead, lead_ball, after, after_ball = _ball_gap_stats(labels, horizon, balls.n_cells)
    out = []
    for i in range(len(orbits)):
        if after[i] > bound:
            v, b, g = REFUTED, after_ball[i], after[i]
        elif lead[i] > bound:
            v, b, g = INCONCLUSIVE, lead_ball[i], lead[i]
        else:
            v, b, g = MINIMAL, after_ball[i], max(after[i], lead[i])
        center = balls.reps[b]
        center = center.tolist() if np.ndim(center) else center.item()
        out.append(MinimalVerdict(v, center, int(g), float(eps), int(horizon)))
    return out


def classify_minimal(system, x, eps, horizon, gap_fraction=0.1):
    """Finite-horizon minimality test for the orbit of ``x`` (see :func:`classify_orbits`)."""
    if not eps > 0:
        raise InvalidInputError("eps must be positive")
    orbit = np.atleast_2d(orbit_segment(system, x, 0, int(horizon)))
    return classify_orbits(system, orbit, eps, gap_fraction)[0]


def omega_limit_cells(system, x, grid, burn_in, horizon):
    """Cells visited by ``T^k(x)`` for ``burn_in <= k <= horizon``."""
    if not burn_in < horizon:
        raise InvalidInputError("burn_in must be below horizon")
    orbit = orbit_segment(system, x, int(burn_in), int(horizon))
    return np.unique(grid.assign(orbit))


# ---------------------------------------------------------------------------
# report

@dataclass(eq=False)
class RecurrenceReport:
    """Cell sets at scale ``(mesh, d, horizon)``; all sets are sorted index arrays."""

    system: str
    mesh: float
    d: float
    horizon: int
    minimal_eps: float
    gap_fraction: float
    n_cells: int
    cr: np.ndarray
    minimal: np.ndarray
    recurrent: np.ndarray
    omega: np.ndarray
    omega_sample: np.ndarray
    omega_sample_starts: np.ndarray
    invalid_steps: int
    violations: dict = field(default_factory=dict)

    @property
    def chain_holds(self):
        return not any(self.violations.values())

    def to_dict(self):
        def arr(a):
            return [int(v) for v in a]

        return {
            "system": self.system,
            "params": {
                "mesh": self.mesh,
                "d": self.d,
                "horizon": self.horizon,
                "minimal_eps": self.minimal_eps,
                "gap_fraction": self.gap_fraction,
            },
            "n_cells": self.n_cells,
            "cr": arr(self.cr),
            "minimal": arr(self.minimal),
            "recurrent": arr(self.recurrent),
            "omega": arr(self.omega),
            "omega_sample": arr(self.omega_sample),
            "omega_sample_starts": arr(self.omega_sample_starts),
            "invalid_steps": int(self.invalid_steps),
            "violations": {k: int(v) for k, v in self.violations.items()},
            "chain_holds": self.chain_holds,
        }

    def to_json(self):
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"

    @classmethod
    def from_dict(cls, data):
        p = data["params"]
        a = lambda k: np.array(data[k], dtype=np.int64)
        return cls(
            system=data["system"],
            mesh=p["mesh"],
            d=p["d"],
            horizon=p["horizon"],
            minimal_eps=p["minimal_eps"],
            gap_fraction=p["gap_fraction"],
            n_cells=data["n_cells"],
            cr=a("cr"),
            minimal=a("minimal"),
            recurrent=a("recurrent"),
            omega=a("omega"),
            omega_sample=a("omega_sample"),
            omega_sample_starts=a("omega_sample_starts"),
            invalid_steps=data["invalid_steps"],
            violations=dict(data["violations"]),
        )


def inclusion_violations(minimal, recurrent, omega, cr):
    """Counts of cells breaking ``minimal <= recurrent <= omega <= cr``."""
    return {
        "minimal_not_recurrent": int(len(np.setdiff1d(minimal, recurrent))),
        "recurrent_not_omega": int(len(np.setdiff1d(recurrent, omega))),
        "omega_not_cr": int(len(np.setdiff1d(omega, cr))),
    }


def recurrence_report(
    system,
    grid,
    d,
    horizon,
    minimal_eps=0.02,
    gap_fraction=0.1,
    omega_samples=8,
    graph=None,
    chunk_elements=3_000_000,
):
    """Assemble the recurrence structure of ``system`` at grid scale.

    * chain recurrent: cells on a cycle of the ``d``-transition graph;
    * nonwandering (approximation): cells that some representative's orbit
      visits twice while its cell itinerary stays a path of the graph;
    * recurrent: cells whose representative's orbit is back in its own cell
      at some time in ``[horizon/2, horizon]`` along such an itinerary;
    * minimal: recurrent cells whose representative is minimal-consistent
      under :func:`classify_orbits` at ball scale ``minimal_eps`` (minimal
      points are recurrent, so only recurrent cells are classified).

    Returns
    -------
    RecurrenceReport
        The inclusion chain is checked and any violations are counted.
    """
    if graph is None:
        graph = build_transition_graph(system, grid, d)
    cr = chain_recurrent_cells(graph)
    keys = graph.edge_keys()
    n = grid.n_cells
    H = int(horizon)
    half = H // 2
    omega_mask = np.zeros(n, bool)
    recurrent, minimal = [], []
    invalid = 0
    samples = np.unique(np.linspace(0, n - 1, min(omega_samples, n)).astype(np.int64))
    sample_cells = []
    rows_per_chunk = max(1, chunk_elements // (H + 1))
    for start in range(0, n, rows_per_chunk):
        idx = np.arange(start, min(n, start + rows_per_chunk))
        orbits = system.orbit_block(grid.reps[idx], H)
        cells = grid.assign(orbits)
        q = cells[:, :-1] * n + cells[:, 1:]
        pos = np.clip(np.searchsorted(keys, q), 0, len(keys) - 1)
        valid = keys[pos] == q
        invalid += int((~valid).sum())
        seg = np.zeros(cells.shape, np.int64)
        seg[:, 1:] = np.cumsum(~valid, axis=1)
        # revisits within one valid itinerary segment
        rk = ((np.arange(len(idx))[:, None] * (H + 2) + seg) * n + cells).ravel()
        uniq, counts = np.unique(rk, return_counts=True)
        omega_mask[np.unique(uniq[counts >= 2] % n)] = True
        own = cells[:, :1]
        back = (cells == own) & (seg == 0)
        back[:, :half] = False
        rec_rows = np.flatnonzero(back.any(axis=1))
        recurrent.extend(int(c) for c in own[rec_rows, 0])
        if len(rec_rows):
            verdicts = classify_orbits(system, orbits[rec_rows], minimal_eps, gap_fraction)
            minimal.extend(int(own[r, 0]) for r, v in zip(rec_rows, verdicts) if v.consistent)
        for s in samples[(samples >= idx[0]) & (samples <= idx[-1])]:
            sample_cells.append(cells[s - start, half:])
    recurrent = np.unique(np.array(recurrent, dtype=np.int64))
    minimal = np.unique(np.array(minimal, dtype=np.int64))
    omega = np.flatnonzero(omega_mask)
    omega_sample = np.unique(np.concatenate(sample_cells)) if sample_cells else np.array([], np.int64)
    return RecurrenceReport(
        system=system.label,
        mesh=grid.mesh,
        d=float(d),
        horizon=H,
        minimal_eps=float(minimal_eps),
        gap_fraction=float(gap_fraction),
        n_cells=n,
        cr=cr,
        minimal=minimal,
        recurrent=recurrent,
        omega=omega,
        omega_sample=omega_sample,
        omega_sample_starts=samples,
        invalid_steps=invalid,
        violations=inclusion_violations(minimal, recurrent, omega, cr),
    )


@dataclass(frozen=True)
class ClosureVerdict:
    """Whether the chain-recurrent cells match the closure of the minimal cells at scale ``tol``."""

    equal: bool
    tol: float
    worst_cell: int
    worst_distance: float
    minimal_outside_cr: int

    @property
    def label(self):
        return "CR = closure(M) at scale" if self.equal else "CR != closure(M)"


def cr_vs_minimal_closure(report, grid, tol):
    """Compare CR cells with the ``tol``-neighborhood of the minimal cells.

    ``equal`` holds when every CR cell lies within ``tol`` of a minimal cell
    and every minimal cell is chain recurrent.
    """
    outside = int(len(np.setdiff1d(report.minimal, report.cr)))
    if len(report.cr) == 0:
        return ClosureVerdict(outside == 0 and len(report.minimal) == 0, tol, -1, 0.0, outside)
    if len(report.minimal) == 0:
        return ClosureVerdict(False, tol, int(report.cr[0]), float("inf"), outside)
    dist, _ = nearest(grid.space, grid.reps[report.minimal], grid.reps[report.cr])
    worst = int(np.argmax(dist))
    return ClosureVerdict(
        equal=bool(dist[worst] <= tol and outside == 0),
        tol=float(tol),
        worst_cell=int(report.cr[worst]),
        worst_distance=float(dist[worst]),
        minimal_outside_cr=outside,
    )
