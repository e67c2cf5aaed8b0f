"""Certificate search for shadowing, multishadowing and subsequence shadowing.

Candidate orbits are described by a point and an anchor time: the orbit
passes through ``point`` at time ``anchor`` and is listed over the index
range of the pseudotrajectory. Forward from the anchor the orbit is
``T^k(point)``. Backward it uses the inverse when the system has one and
otherwise the preimage branch nearest to the pseudotrajectory (the classical
pullback used for expanding maps). Orbits are recomputed from
``(point, anchor)`` deterministically, and re-verification checks both the
one-step defect (``<= ORBIT_TOL``) and the stated error bounds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import Bounds, LinearConstraint, milp

from .errors import InvalidInputError, UnsupportedOperationError
from .pseudo import Pseudotrajectory
from .space import distance
from .systems import orbit_segment

ORBIT_TOL = 1e-9
BOUND_TOL = 1e-12


def _label(point):
    return point.tolist() if isinstance(point, np.ndarray) else float(point)


def anchored_orbit(system, point, anchor, k_min, k_max, guide=None):
    """Orbit through ``point`` at time ``anchor``, listed for ``k_min..k_max``.

    Parameters
    ----------
    guide : array_like, optional
        Points indexed from ``k_min``; required for backward steps of a
        non-invertible system, where the preimage nearest ``guide[k]`` is
        taken at each step.
    """
    if not k_min <= anchor <= k_max:
        raise InvalidInputError("anchor outside the index range")
    space = system.space
    fwd = np.atleast_1d(orbit_segment(system, point, 0, k_max - anchor))
    if anchor == k_min:
        return fwd
    if system.invertible:
        back = orbit_segment(system, point, k_min - anchor, 0)
        return np.concatenate([back[:-1], fwd])
    if system.preimages is None or guide is None:
        raise UnsupportedOperationError(f"{system.name}: backward orbit needs an inverse or preimages and a guide")
    n = anchor - k_min
    out = np.empty(n + 1)
    out[-1] = float(space.canonical(point))
    guide = np.asarray(guide)
    if space.is_one_dimensional:
        # scalar loop; numpy calls on two-element arrays dominate otherwise
        wrap = space.kind == "circle"
        g = guide[:n].tolist()
        y = out[-1]
        for i in range(n - 1, -1, -1):
            best, best_d = None, math.inf
            for p in system.preimages(y).tolist():
                dd = abs(p - g[i])
                if wrap:
                    dd = min(dd, 1.0 - dd)
                if dd < best_d:
                    best, best_d = p, dd
            out[i] = y = best
    else:
        for k in range(anchor - 1, k_min - 1, -1):
            pre = system.preimages(out[k + 1 - k_min])
            j = int(np.argmin(distance(space, pre, guide[k - k_min])))
            out[k - k_min] = pre[j]
    return np.concatenate([out[:-1], fwd])


def orbit_defect(system, orbit):
    """Largest one-step error ``rho(y_{k+1}, T(y_k))`` of a listed orbit."""
    orbit = np.asarray(orbit)
    if len(orbit) < 2:
        return 0.0
    return float(np.max(distance(system.space, orbit[1:], system.T(orbit[:-1]))))


def _pseudo_points(pseudo):
    if not isinstance(pseudo, Pseudotrajectory):
        raise InvalidInputError("expected a Pseudotrajectory")
    return pseudo.points


# ---------------------------------------------------------------------------
# single-orbit shadowing

@dataclass(frozen=True)
class ShadowCertificate:
    """An exact orbit through ``point`` at ``anchor`` that ``eps``-shadows the sequence."""

    system: str
    point: object
    anchor: int
    eps: float
    k_min: int
    k_max: int
    max_error: float
    candidate_mesh: float | None
    two_sided: bool
    found: bool = True

    @property
    def y0(self):
        """Alias for ``point`` when the orbit starts at ``k_min``."""
        return self.point

    def to_dict(self):
        return {
            "kind": "shadow-certificate",
            "system": self.system,
            "point": _label(self.point),
            "anchor": self.anchor,
            "eps": self.eps,
            "k_min": self.k_min,
            "k_max": self.k_max,
            "max_error": self.max_error,
            "candidate_mesh": self.candidate_mesh,
            "two_sided": self.two_sided,
        }


@dataclass(frozen=True)
class ShadowFailure:
    """No candidate shadowed within ``eps``; the witness has the least sup-error."""

    system: str
    point: object
    anchor: int
    eps: float
    min_sup_error: float
    worst_index: int
    candidates_tried: int
    candidate_mesh: float | None
    found: bool = False

    def to_dict(self):
        return {
            "kind": "shadow-failure",
            "system": self.system,
            "point": _label(self.point),
            "anchor": self.anchor,
            "eps": self.eps,
            "min_sup_error": self.min_sup_error,
            "worst_index": self.worst_index,
            "candidates_tried": self.candidates_tried,
            "candidate_mesh": self.candidate_mesh,
        }


def _sup_error(system, pseudo, point, anchor):
    orbit = anchored_orbit(system, point, anchor, pseudo.k_min, pseudo.k_max, guide=pseudo.points)
    errs = distance(system.space, pseudo.points, orbit)
    i = int(np.argmax(errs))
    return float(errs[i]), pseudo.k_min + i


def shadow_search(system, pseudo, eps, candidate_grid, refine_levels=30):
    """Look for a single exact orbit that ``eps``-shadows ``pseudo``.

    Candidates, in order: the forward orbit of ``x_{k_min}``; the orbit
    pulled back from the last point; grid representatives within
    ``eps + radius`` of ``x_{k_min}``; finally a 1-D bisection refinement
    around the best candidate so far.

    Returns
    -------
    ShadowCertificate or ShadowFailure
    """
    if not eps > 0:
        raise InvalidInputError("eps must be positive")
    pts = _pseudo_points(pseudo)
    k0, k1 = pseudo.k_min, pseudo.k_max
    space = system.space
    cands = [(pts[0], k0), (pts[-1], k1)]
    mesh = None
    if candidate_grid is not None:
        mesh = candidate_grid.mesh
        near = distance(space, candidate_grid.reps, pts[0]) <= eps + candidate_grid.radius
        cands += [(r, k0) for r in candidate_grid.reps[np.atleast_1d(near)]]
    if not cands:
        raise InvalidInputError("empty candidate set")
    best = None
    tried = 0
    for point, anchor in cands:
        tried += 1
        err, worst = _sup_error(system, pseudo, point, anchor)
        if err <= eps + BOUND_TOL:
            return ShadowCertificate(system.label, point, anchor, float(eps), k0, k1, err, mesh, pseudo.two_sided)
        if best is None or err < best[0]:
            best = (err, worst, point, anchor)
    if space.is_one_dimensional:
        err, worst, point, anchor = best
        step = eps if mesh is None else max(mesh, eps / 8)
        for _ in range(refine_levels):
            improved = False
            for sign in (-1.0, 1.0):
                trial = float(space.canonical(point + sign * step))
                tried += 1
                e, w = _sup_error(system, pseudo, trial, anchor)
                if e <= eps + BOUND_TOL:
                    return ShadowCertificate(system.label, trial, anchor, float(eps), k0, k1, e, mesh, pseudo.two_sided)
                if e < err:
                    err, worst, point, improved = e, w, trial, True
                    break
            if not improved:
                step /= 2
        best = (err, worst, point, anchor)
    err, worst, point, anchor = best
    return ShadowFailure(system.label, point, anchor, float(eps), err, worst, tried, mesh)


def verify_shadow(system, pseudo, cert):
    """Recompute the certificate's orbit and check the defect and the ``eps`` bound."""
    orbit = anchored_orbit(system, cert.point, cert.anchor, pseudo.k_min, pseudo.k_max, guide=pseudo.points)
    errs = distance(system.space, pseudo.points, orbit)
    return bool(orbit_defect(system, orbit) <= ORBIT_TOL and np.max(errs) <= cert.eps + BOUND_TOL)


# ---------------------------------------------------------------------------
# multishadowing

@dataclass(eq=False)
class CandidatePool:
    """Forward orbits of grid representatives over a fixed length, for reuse across sequences."""

    system: object
    grid: object
    length: int
    orbits: np.ndarray

    @classmethod
    def build(cls, system, grid, length):
        return cls(system, grid, int(length), system.orbit_block(grid.reps, int(length) - 1))


@dataclass(frozen=True)
class MultishadowCertificate:
    """Orbits ``(point_i, anchor_i)`` such that every index is ``eps``-tracked by one of them."""

    system: str
    points: list
    anchors: list
    eps: float
    k_min: int
    k_max: int
    assignment: np.ndarray
    errors: np.ndarray
    lower_bound: int
    lower_bound_exact: bool
    greedy_n: int
    candidate_mesh: float | None
    two_sided: bool
    budget: int
    found: bool = True

    @property
    def n_orbits(self):
        return len(self.points)

    @property
    def interval(self):
        """``(lower, upper)`` bounds on the orbit count over the candidate pool."""
        return self.lower_bound, self.n_orbits

    def to_dict(self):
        return {
            "kind": "multishadow-certificate",
            "system": self.system,
            "points": [_label(p) for p in self.points],
            "anchors": [int(a) for a in self.anchors],
            "eps": self.eps,
            "k_min": self.k_min,
            "k_max": self.k_max,
            "N": self.n_orbits,
            "lower_bound": self.lower_bound,
            "lower_bound_exact": self.lower_bound_exact,
            "greedy_N": self.greedy_n,
            "assignment": [int(a) for a in self.assignment],
            "max_error": float(np.max(self.errors)),
            "candidate_mesh": self.candidate_mesh,
            "two_sided": self.two_sided,
            "budget": self.budget,
        }


@dataclass(frozen=True)
class MultishadowFailure:
    """The greedy cover needed more than ``budget`` orbits."""

    system: str
    eps: float
    budget: int
    greedy_n: int
    lower_bound: int
    lower_bound_exact: bool
    points: list
    anchors: list
    candidate_mesh: float | None
    found: bool = False

    def to_dict(self):
        return {
            "kind": "multishadow-failure",
            "system": self.system,
            "eps": self.eps,
            "budget": self.budget,
            "greedy_N": self.greedy_n,
            "lower_bound": self.lower_bound,
            "lower_bound_exact": self.lower_bound_exact,
            "points": [_label(p) for p in self.points],
            "anchors": [int(a) for a in self.anchors],
            "candidate_mesh": self.candidate_mesh,
        }


def cover_lower_bound(cover, time_limit=20.0):
    """Minimum number of columns of boolean ``cover`` (rows = indices) covering every row.

    Solved as a 0-1 integer program over distinct rows and columns.

    Returns
    -------
    (int, bool, list or None)
        The bound, whether it is the proven optimum (otherwise the rounded-up
        dual bound of the solver), and the original column indices of an
        optimal cover when one was proven.
    """
    cover = np.asarray(cover, dtype=bool)
    rows = np.unique(np.packbits(cover, axis=1), axis=0)
    rows = np.unpackbits(rows, axis=1, count=cover.shape[1]).astype(bool)
    cols, first = np.unique(rows, axis=1, return_index=True)
    if not cols.any(axis=1).all():
        raise InvalidInputError("some index is covered by no candidate")
    n = cols.shape[1]
    res = milp(
        c=np.ones(n),
        constraints=LinearConstraint(cols.astype(float), lb=1.0, ub=np.inf),
        integrality=np.ones(n),
        bounds=Bounds(0, 1),
        options={"time_limit": float(time_limit)},
    )
    if res.status == 0:
        picked = sorted(int(first[j]) for j in np.flatnonzero(res.x > 0.5))
        return len(picked), True, picked
    bound = getattr(res, "mip_dual_bound", None)
    if bound is None or not np.isfinite(bound):
        return 1, False, None
    return max(1, int(math.ceil(bound - 1e-9))), False, None


def multishadow_search(system, pseudo, eps, candidate_grid, budget_N, pool=None, exact_bound=True, time_limit=20.0):
    """Greedy set cover of the index range by exact orbits.

    The pool holds the forward orbits of ``x_{k_min}`` and of all grid
    representatives and, for non-invertible systems, the orbit pulled back
    from the last point along nearest preimages. Before
    each greedy pick, an orbit through the first uncovered point is added, so
    every pick makes progress. The greedy count is an upper bound on
    ``N(eps)`` over the pool. With ``exact_bound`` a 0-1 integer program
    gives the exact minimum over the same pool; when optimality is proven
    the certificate uses that optimal cover.

    Returns
    -------
    MultishadowCertificate or MultishadowFailure
        Success iff the certified orbit count is at most ``budget_N``.
    """
    if budget_N < 1:
        raise InvalidInputError("budget_N must be at least 1")
    if not eps > 0:
        raise InvalidInputError("eps must be positive")
    pts = _pseudo_points(pseudo)
    k0, k1 = pseudo.k_min, pseudo.k_max
    L = len(pts)
    space = system.space
    cand_pts, cand_anchor, cover, err_rows = [], [], [], []

    def add(point, anchor, orbit):
        e = distance(space, pts, orbit)
        cand_pts.append(point)
        cand_anchor.append(int(anchor))
        cover.append(e <= eps + BOUND_TOL)
        err_rows.append(e)

    add(pts[0], k0, anchored_orbit(system, pts[0], k0, k0, k1))
    if L > 1 and not system.invertible:
        add(pts[-1], k1, anchored_orbit(system, pts[-1], k1, k0, k1, guide=pts))
    mesh = None
    if candidate_grid is not None:
        mesh = candidate_grid.mesh
        if pool is None or pool.length != L or not pool.grid.same_as(candidate_grid):
            pool = CandidatePool.build(system, candidate_grid, L)
        for r, orb in zip(candidate_grid.reps, pool.orbits):
            add(r, k0, orb)
    anchored = {a for a in cand_anchor}
    uncovered = np.ones(L, bool)
    chosen = []
    while uncovered.any():
        a = int(np.argmax(uncovered)) + k0
        if a not in anchored:
            anchored.add(a)
            add(pts[a - k0], a, anchored_orbit(system, pts[a - k0], a, k0, k1, guide=pts))
        gains = np.array([np.count_nonzero(c & uncovered) for c in cover])
        j = int(np.argmax(gains))
        chosen.append(j)
        uncovered &= ~cover[j]
    greedy_n = len(chosen)
    cover_mat = np.stack(cover, axis=1)
    lower, exact, optimal = (1, False, None)
    if exact_bound:
        lower, exact, optimal = cover_lower_bound(cover_mat, time_limit)
    if optimal is not None and len(optimal) < greedy_n:
        chosen = optimal
    points = [cand_pts[j] for j in chosen]
    anchors = [cand_anchor[j] for j in chosen]
    if len(chosen) > budget_N:
        return MultishadowFailure(system.label, float(eps), int(budget_N), greedy_n, lower, exact, points, anchors, mesh)
    sub = cover_mat[:, chosen]
    assign = np.argmax(sub, axis=1)
    e = np.stack([err_rows[j] for j in chosen], axis=1)[np.arange(L), assign]
    return MultishadowCertificate(
        system.label, points, anchors, float(eps), k0, k1, assign, e, lower, exact, greedy_n, mesh,
        pseudo.two_sided, int(budget_N),
    )


def verify_multishadow(system, pseudo, cert):
    """Recompute every orbit and check that index ``k`` is ``eps``-close to orbit ``assignment[k]``."""
    errs = []
    for p, a in zip(cert.points, cert.anchors):
        orb = anchored_orbit(system, p, a, pseudo.k_min, pseudo.k_max, guide=pseudo.points)
        if orbit_defect(system, orb) > ORBIT_TOL:
            return False
        errs.append(distance(system.space, pseudo.points, orb))
    errs = np.stack(errs, axis=1)
    picked = errs[np.arange(len(pseudo)), np.asarray(cert.assignment)]
    return bool(cert.n_orbits >= 1 and np.all(picked <= cert.eps + BOUND_TOL))


# ---------------------------------------------------------------------------
# subsequence shadowing

def density(K, range_end):
    """Finite-range upper density ``max_N |K cap [0, N-1]| / N`` for ``N = 1..range_end+1``.

    Examples
    --------
    >>> density([0, 1, 2], 2)
    1.0
    >>> density([], 10)
    0.0
    """
    K = np.unique(np.asarray(K, dtype=np.int64))
    if len(K) == 0:
        return 0.0
    if K[0] < 0 or K[-1] > range_end:
        raise InvalidInputError("K must lie in [0, range_end]")
    # the max over N is attained right after an element of K
    counts = np.arange(1, len(K) + 1)
    return float(np.max(counts / (K + 1)))


def _column_density(mask, min_window=1):
    """Upper density of each column of a boolean matrix, windows of length >= min_window."""
    c = np.cumsum(mask, axis=0)
    n = np.arange(1, mask.shape[0] + 1)[:, None]
    return np.max((c / n)[min_window - 1:], axis=0)


@dataclass(frozen=True)
class SubsequenceCertificate:
    """Indices ``K`` along which the orbit of ``y`` stays within ``eps`` of the sequence."""

    system: str
    y: object
    center: object
    shift: int
    eps: float
    K: np.ndarray
    density: float
    tail_density: float
    minimal_flag: bool
    k_min: int
    k_max: int
    found: bool = True

    def to_dict(self):
        return {
            "kind": "subsequence-certificate",
            "system": self.system,
            "y": _label(self.y),
            "center": _label(self.center),
            "shift": self.shift,
            "eps": self.eps,
            "K": [int(k) for k in self.K],
            "density": self.density,
            "tail_density": self.tail_density,
            "minimal_flag": self.minimal_flag,
            "k_min": self.k_min,
            "k_max": self.k_max,
        }


def thin_points(space, points, spacing):
    """Greedy subsequence of ``points`` (in order) with pairwise gaps above ``spacing``."""
    points = np.asarray(points)
    keep = []
    for i, p in enumerate(points):
        if not keep or np.min(distance(space, points[keep], p)) > spacing:
            keep.append(i)
    return points[keep]


def subsequence_shadow_search(system, pseudo, eps, horizon_P, centers, minimal_flag=False, min_window=None):
    """Finite-scale version of the positive-density subsequence argument.

    1. Pick the center ``c`` whose ball of radius ``eps/2`` the sequence
       visits with the largest upper density.
    2. Among ``y_r = T^r(c)``, ``r = 0..horizon_P``, pick the one maximizing
       the density of indices where both ``x_k`` and ``T^k(y_r)`` are in that ball.
    3. Return ``K = {k : rho(x_k, T^k(y_r)) < eps}``.

    Densities are computed over the nonnegative indices. Selection scores
    use windows of at least ``min_window`` (default a tenth of the length)
    to avoid ties among the many balls that contain ``x_0``; the reported
    ``density`` follows :func:`density`.

    Parameters
    ----------
    centers : array_like
        Candidate centers, usually representatives of minimal-consistent
        cells thinned with :func:`thin_points`.
    minimal_flag : bool
        Recorded in the certificate: whether ``centers`` are minimal-consistent.
    """
    if not eps > 0:
        raise InvalidInputError("eps must be positive")
    space = system.space
    start = max(pseudo.k_min, 0)
    pts = pseudo.points[start - pseudo.k_min:]
    L = len(pts)
    if L < 1:
        raise InvalidInputError("no nonnegative indices")
    centers = np.asarray(centers, dtype=float)
    if len(centers) == 0:
        raise InvalidInputError("no candidate centers")
    w = max(1, L // 10) if min_window is None else int(min_window)
    w = min(w, L)
    visits = distance(space, pts[:, None], centers[None, :]) < eps / 2
    score = _column_density(visits, w)
    ci = int(np.argmax(score))
    c = centers[ci]
    in_ball = visits[:, ci]
    P = int(horizon_P)
    orbit_c = np.atleast_1d(orbit_segment(system, c, 0, start + L - 1 + P))
    # T^k(y_r) = T^(k+r)(c) for k >= start
    shifts = np.arange(P + 1)
    ks = np.arange(start, start + L)
    near = distance(space, orbit_c[ks[:, None] + shifts[None, :]], c) <= eps / 2
    r = int(np.argmax(_column_density(near & in_ball[:, None], w)))
    y = orbit_c[r]
    orbit_y = np.atleast_1d(orbit_segment(system, y, start, start + L - 1))
    K = ks[distance(space, pts, orbit_y) < eps]
    a = density(K - start, L - 1)
    mask = np.zeros(L, bool)
    mask[K - start] = True
    tail = float(_column_density(mask[:, None], w)[0])
    return SubsequenceCertificate(
        system.label, y, c, r, float(eps), K, a, tail, bool(minimal_flag), pseudo.k_min, pseudo.k_max
    )


def verify_subsequence(system, pseudo, cert):
    """Recompute ``T^k(y)`` over ``K`` and check the strict ``eps`` bound and the density."""
    if len(cert.K) == 0:
        return False
    start = max(pseudo.k_min, 0)
    orbit_y = np.atleast_1d(orbit_segment(system, cert.y, start, pseudo.k_max))
    K = np.asarray(cert.K)
    ok = np.all(distance(system.space, pseudo.points[K - pseudo.k_min], orbit_y[K - start]) < cert.eps)
    return bool(ok and abs(density(K - start, pseudo.k_max - start) - cert.density) <= 1e-12)


# ---------------------------------------------------------------------------
# visits to the minimal set

@dataclass(frozen=True)
class SyndeticVisits:
    """Indices near the minimal set, their largest gap, and the complementary excursion set."""

    eps: float
    hits: np.ndarray
    max_gap: int
    gap_bound: float
    excursions: np.ndarray

    @property
    def syndetic(self):
        return bool(self.max_gap <= self.gap_bound)

    @property
    def excursion_is_prefix(self):
        e = self.excursions
        return bool(len(e) == 0 or (e[0] == 0 and e[-1] == len(e) - 1))

    def to_dict(self):
        return {
            "eps": self.eps,
            "n_hits": int(len(self.hits)),
            "max_gap": self.max_gap,
            "gap_bound": self.gap_bound,
            "syndetic": self.syndetic,
            "n_excursions": int(len(self.excursions)),
            "excursion_is_prefix": self.excursion_is_prefix,
        }


def syndetic_visit_check(system, pseudo, eps, minimal_points, gap_bound=500):
    """Gaps between indices with ``x_k`` within ``eps`` of a minimal point.

    Indices are counted from the start of the sequence (position 0). Gaps
    include the wait before the first hit and after the last one, so a
    sequence that never qualifies has gap ``len + 1``.
    """
    from .recurrence import gaps_with_sentinels
    from .space import nearest

    pts = pseudo.points
    minimal_points = np.asarray(minimal_points, dtype=float)
    if len(minimal_points) == 0:
        near = np.zeros(len(pts), bool)
    else:
        dist, _ = nearest(system.space, minimal_points, pts)
        near = dist <= eps
    hits = np.flatnonzero(near)
    gaps = gaps_with_sentinels(hits, len(pts) - 1)
    return SyndeticVisits(float(eps), hits, int(gaps.max()), float(gap_bound), np.flatnonzero(~near))
