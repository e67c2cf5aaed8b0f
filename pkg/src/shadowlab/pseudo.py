"""Generation and verification of d-pseudotrajectories.

A d-pseudotrajectory is a finite sequence with ``rho(x_{k+1}, T(x_k)) <= d``
for every consecutive pair. Besides random perturbations this module builds
the adversarial sequences used throughout the package: winding sequences
that jump through semistable fixed points, arc sequences that connect two
orbits of an equicontinuous homeomorphism, periodic chains read off a
transition graph, and a sequence that crosses the semistable point of the
quartic flow.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import BudgetExceededError, InvalidInputError, UnsupportedOperationError
from .space import distance, signed_circle_difference
from .systems import orbit_segment

# Absolute tolerance for floating-point noise in step-error checks.
STEP_TOL = 1e-12

PROVENANCES = ("noisy", "winding", "arc", "periodic-chain", "exact", "external", "crossing", "spliced")


@dataclass(frozen=True, eq=False)
class Pseudotrajectory:
    """A finite indexed sequence ``x_{k_min}, ..., x_{k_max}`` with error bound ``d``."""

    points: np.ndarray
    d: float
    k_min: int = 0
    two_sided: bool = False
    provenance: str = "external"
    seed: int | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.provenance not in PROVENANCES:
            raise InvalidInputError(f"unknown provenance {self.provenance!r}")
        if len(self.points) < 2:
            raise InvalidInputError("a pseudotrajectory needs at least two points")
        if self.d < 0:
            raise InvalidInputError("d must be nonnegative")

    def __len__(self):
        return len(self.points)

    @property
    def k_max(self):
        return self.k_min + len(self.points) - 1

    @property
    def indices(self):
        return np.arange(self.k_min, self.k_max + 1)

    def at(self, k):
        return self.points[k - self.k_min]


@dataclass(frozen=True)
class PseudoCheck:
    """Result of :func:`verify_pseudotrajectory`.

    ``worst_index`` is the index ``k + 1`` of the target point of the step
    with the largest error (lowest on ties).
    """

    passed: bool
    max_error: float
    worst_index: int
    errors: np.ndarray

    def __bool__(self):
        return self.passed


def step_errors(system, points):
    """Array of ``rho(x_{k+1}, T(x_k))`` over consecutive pairs."""
    pts = np.asarray(points)
    return np.atleast_1d(distance(system.space, pts[1:], system.T(pts[:-1])))


def verify_pseudotrajectory(system, sequence, d, tol=STEP_TOL):
    """Check that ``sequence`` is a ``d``-pseudotrajectory of ``system``.

    Parameters
    ----------
    system : SystemSpec
    sequence : Pseudotrajectory or array_like
    d : float
    tol : float
        Absolute allowance for rounding noise.

    Returns
    -------
    PseudoCheck
    """
    k_min = 0
    if isinstance(sequence, Pseudotrajectory):
        k_min, sequence = sequence.k_min, sequence.points
    pts = np.asarray(sequence)
    if len(pts) < 2:
        raise InvalidInputError("sequence needs at least two points")
    errs = step_errors(system, pts)
    worst = int(np.argmax(errs))
    return PseudoCheck(
        passed=bool(errs[worst] <= d + tol),
        max_error=float(errs[worst]),
        worst_index=k_min + worst + 1,
        errors=errs,
    )


def make_pseudo(system, points, d, k_min=0, provenance="external", seed=None, meta=None):
    """Build a :class:`Pseudotrajectory`, verifying the step bound first."""
    points = system.space.canonical(np.asarray(points))
    if k_min < 0 and not system.invertible:
        raise UnsupportedOperationError("two-sided sequences need an invertible system")
    check = verify_pseudotrajectory(system, points, d)
    if not check.passed:
        raise InvalidInputError(
            f"step error {check.max_error:.3g} exceeds d={d:.3g} at index {k_min + check.worst_index}"
        )
    return Pseudotrajectory(
        points=points,
        d=float(d),
        k_min=int(k_min),
        two_sided=k_min < 0,
        provenance=provenance,
        seed=seed,
        meta=dict(meta or {}),
    )


def exact_pseudo(system, x0, length, k_min=0):
    """An exact orbit segment as a 0-pseudotrajectory."""
    pts = orbit_segment(system, x0, k_min, k_min + length - 1)
    return make_pseudo(system, pts, 0.0, k_min=k_min, provenance="exact")


def _random_start(space, rng):
    if space.kind == "interval":
        return rng.uniform(space.a, space.b)
    if space.kind == "torus":
        return rng.uniform(0, 1, size=2)
    return rng.uniform(0, 1)


def noisy_orbits(system, x0s, d, length, seeds):
    """Batch version of :func:`noisy_orbit`, one row per seed.

    ``x0s`` may be ``None`` (or contain ``None``) to draw each start point
    uniformly from the space using that seed's generator.
    """
    space = system.space
    if space.kind == "finite":
        raise UnsupportedOperationError("noisy orbits need a continuous space")
    if d < 0 or length < 2:
        raise InvalidInputError("need d >= 0 and length >= 2")
    seeds = [int(s) for s in seeds]
    if x0s is None:
        x0s = [None] * len(seeds)
    shape = (length - 1, 2) if space.kind == "torus" else (length - 1,)
    starts, noise = [], []
    for x0, seed in zip(x0s, seeds):
        rng = np.random.default_rng(seed)
        starts.append(_random_start(space, rng) if x0 is None else x0)
        noise.append(rng.uniform(-d, d, size=shape))
    noise = np.stack(noise, axis=1)  # (length-1, batch[, 2])
    out = np.empty((length,) + noise.shape[1:])
    out[0] = space.canonical(np.array(starts, dtype=float))
    for k in range(length - 1):
        out[k + 1] = space.canonical(system.T(out[k]) + noise[k])
    return np.moveaxis(out, 0, 1), [np.asarray(s, dtype=float).tolist() for s in starts]


def noisy_orbit(system, x0, d, length, seed):
    """Orbit of ``x0`` with a uniform perturbation of size at most ``d`` after every step.

    Parameters
    ----------
    system : SystemSpec
    x0 : float or None
        Start point; ``None`` draws it from the seeded generator.
    d : float
        Perturbation bound (uniform on ``[-d, d]`` per coordinate, projected
        back to the canonical range).
    length : int
    seed : int

    Returns
    -------
    Pseudotrajectory
    """
    rows, starts = noisy_orbits(system, [x0], d, length, [seed])
    return make_pseudo(system, rows[0], d, provenance="noisy", seed=int(seed), meta={"x0": starts[0]})


def winding_pseudo(system, d, turns, x0=0.0, dwell=None, max_steps=1_000_000):
    """A pseudotrajectory that winds ``turns`` times around the circle.

    The sequence follows ``T`` exactly while ``|T(x) - x| > d/2`` and, in the
    stagnation zones around fixed points, steps ``d/2`` past ``T(x)``. It
    stops at the first index whose lift has advanced by ``turns``.

    Parameters
    ----------
    system : SystemSpec
        A circle map whose displacement ``T(x) - x`` is nonnegative, such as
        ``sin2_circle``.
    d : float
    turns : int
    x0 : float
        Start point (default: the fixed point at 0).
    dwell : sequence of int, optional
        Extra exact steps spent in the i-th stagnation zone before pushing.
    max_steps : int
        Step budget.

    Returns
    -------
    Pseudotrajectory
        ``meta`` holds the lift displacement and the per-step phase trace
        (0 = exact flow, 1 = push, 2 = dwell).
    """
    if system.space.kind != "circle":
        raise InvalidInputError("winding_pseudo needs a circle system")
    if not d > 0:
        raise InvalidInputError("d must be positive")
    turns = int(turns)
    x = float(system.space.canonical(x0))
    if turns <= 0:
        pts = np.array([x, float(system.T(x))])
        return make_pseudo(system, pts, d, provenance="exact", meta={"lift": float(signed_circle_difference(pts[1], pts[0])), "phases": [0]})
    dwell = list(dwell or [])
    pts, phases = [x], []
    lift = 0.0
    zone, zones_entered, dwell_left = False, 0, 0
    while lift < turns:
        if len(pts) > max_steps:
            raise BudgetExceededError(f"winding did not finish within {max_steps} steps")
        tx = float(system.T(x))
        disp = float(signed_circle_difference(tx, x))
        stagnant = abs(disp) <= d / 2
        if stagnant and not zone:
            zone = True
            dwell_left = dwell[zones_entered] if zones_entered < len(dwell) else 0
            zones_entered += 1
        elif not stagnant:
            zone = False
        if stagnant and dwell_left > 0:
            nxt, phase = tx, 2
            dwell_left -= 1
        elif stagnant:
            nxt, phase = float(system.space.canonical(tx + d / 2)), 1
            disp += d / 2
        else:
            nxt, phase = tx, 0
        lift += disp
        pts.append(nxt)
        phases.append(phase)
        x = nxt
    meta = {"lift": lift, "turns": turns, "phases": phases, "dwell": dwell}
    return make_pseudo(system, np.array(pts), d, provenance="winding", meta=meta)


def transit_lengths(phases):
    """Lengths of the maximal runs of exact-flow steps in a winding trace."""
    runs, cur = [], 0
    for p in phases:
        if p == 0:
            cur += 1
        elif cur:
            runs.append(cur)
            cur = 0
    if cur:
        runs.append(cur)
    return runs


def equicontinuity_modulus(system, delta, horizon=10_000, probes=64, max_halvings=60):
    """Largest ``kappa = delta / 2^j`` for which sampled pairs at distance ``kappa``
    stay within ``delta`` for ``horizon`` iterates."""
    space = system.space
    if not space.is_one_dimensional:
        raise UnsupportedOperationError("equicontinuity probing is implemented for 1-D spaces")
    a = np.linspace(space.a, space.b, probes, endpoint=space.kind == "interval")
    kappa = float(delta)
    for _ in range(max_halvings):
        b = space.canonical(a + kappa) if space.kind == "circle" else np.clip(a + kappa, space.a, space.b)
        oa = system.orbit_block(a, horizon)
        ob = system.orbit_block(b, horizon)
        if float(np.max(distance(space, oa, ob))) < delta:
            return kappa
        kappa /= 2
    raise BudgetExceededError("no equicontinuity modulus found; is the system equicontinuous?")


def arc_pseudo(system, y, z, delta, horizon=10_000, tail=10):
    """Two-sided pseudotrajectory from the orbit of ``y`` to the orbit of ``z``.

    ``p_k = T^k(y)`` for ``k <= 0``, ``T^k(x_k)`` for ``0 < k < N`` and
    ``T^k(z)`` for ``k >= N``, where ``x_0 = y, ..., x_N = z`` walk from ``y``
    to ``z`` in steps shorter than a sampled equicontinuity modulus.
    """
    if not system.invertible:
        raise UnsupportedOperationError("arc_pseudo needs an invertible system")
    if not delta > 0:
        raise InvalidInputError("delta must be positive")
    space = system.space
    y = float(space.canonical(y))
    z = float(space.canonical(z))
    gap = float(distance(space, y, z))
    if gap == 0:
        pts = orbit_segment(system, y, -tail, tail)
        return make_pseudo(system, pts, delta, k_min=-tail, provenance="arc", meta={"N": 0})
    kappa = equicontinuity_modulus(system, delta, horizon)
    n_steps = int(np.ceil(gap / (kappa * (1 - 1e-9))))
    if n_steps + tail > horizon:
        raise BudgetExceededError("arc longer than the probed horizon")
    shift = float(signed_circle_difference(z, y)) if space.kind == "circle" else z - y
    walk = space.canonical(y + shift * np.arange(n_steps + 1) / n_steps)
    ks = np.arange(-tail, n_steps + tail + 1)
    pts = np.empty(len(ks))
    for i, k in enumerate(ks):
        base = y if k <= 0 else (z if k >= n_steps else walk[k])
        pts[i] = system.apply_n(base, k)
    meta = {"kappa": kappa, "N": n_steps, "horizon": horizon}
    return make_pseudo(system, pts, delta, k_min=-tail, provenance="arc", meta=meta)


def periodic_chain(system, x, d, grid, max_len=None, graph=None):
    """A closed ``d``-chain through the cell of ``x``, or ``None``.

    The chain runs through cell representatives and is closed at the
    representative of ``x``'s cell. It is read off the transition graph with
    jump bound ``d - grid.radius`` so that every step errs by at most ``d``.
    """
    from .recurrence import build_transition_graph, shortest_cycle

    if not d > grid.mesh:
        raise InvalidInputError("periodic_chain needs d > grid mesh")
    if graph is None:
        graph = build_transition_graph(system, grid, d - grid.radius)
    cell = int(grid.assign(system.space.canonical(x)))
    cycle = shortest_cycle(graph, cell, max_len=max_len)
    if cycle is None:
        return None
    cells = list(cycle) + [cycle[0]]
    pts = grid.reps[np.array(cells)]
    meta = {"cells": [int(c) for c in cycle], "period": len(cycle)}
    return make_pseudo(system, pts, d, provenance="periodic-chain", meta=meta)


def repeat_chain(system, chain, repeats):
    """Periodic extension of a closed chain over ``repeats`` periods."""
    base = chain.points[:-1]
    pts = np.concatenate([np.tile(base, repeats), base[:1]])
    return make_pseudo(system, pts, chain.d, provenance="periodic-chain", meta=dict(chain.meta, repeats=repeats))


def splice(system, first, second):
    """Concatenate two one-sided pseudotrajectories; the junction must err by at most max(d)."""
    d = max(first.d, second.d)
    junction = float(distance(system.space, second.points[0], system.T(first.points[-1])))
    if junction > d + STEP_TOL:
        raise InvalidInputError(f"junction error {junction:.3g} exceeds d={d:.3g}")
    pts = np.concatenate([first.points, second.points])
    return make_pseudo(system, pts, d, k_min=first.k_min, provenance="spliced")


def crossing_pseudo(system, x0=-0.6, cross_from=-0.05, cross_to=0.05, length=1000):
    """Exact flow from ``x0`` until ``cross_from`` is passed, one jump to ``cross_to``,
    then exact flow again; ``d`` is the measured jump error."""
    if system.space.kind != "interval":
        raise InvalidInputError("crossing_pseudo needs an interval system")
    pts = [float(x0)]
    while pts[-1] < cross_from:
        if len(pts) >= length:
            raise BudgetExceededError("did not reach the crossing point within length")
        pts.append(float(system.T(pts[-1])))
    jump_at = len(pts)
    rest = orbit_segment(system, cross_to, 0, length - jump_at - 1)
    pts = np.concatenate([pts, np.atleast_1d(rest)])
    d = float(step_errors(system, pts).max())
    return make_pseudo(system, pts, d, provenance="crossing", meta={"jump_index": jump_at})


# ---------------------------------------------------------------------------
# serialization

def _jsonable(value):
    if isinstance(value, np.ndarray):
        return value.tolist()
    if isinstance(value, (np.floating, np.integer)):
        return value.item()
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    return value


def write_pseudo(pseudo, path, system=None):
    """Write ``k, coordinates...`` rows to ``path`` and metadata to ``path.json``."""
    path = Path(path)
    pts = np.asarray(pseudo.points)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        cols = ["k", "x0", "x1"] if pts.ndim == 2 else ["k", "x"]
        w.writerow(cols)
        for k, p in zip(pseudo.indices, pts):
            w.writerow([int(k)] + [repr(float(v)) for v in np.atleast_1d(p)])
    side = {
        "d": pseudo.d,
        "k_min": pseudo.k_min,
        "two_sided": pseudo.two_sided,
        "provenance": pseudo.provenance,
        "seed": pseudo.seed,
        "system": system.to_dict() if system is not None else None,
        "meta": _jsonable(pseudo.meta),
    }
    sidecar(path).write_text(json.dumps(side, sort_keys=True, indent=2) + "\n")
    return path


def sidecar(path):
    path = Path(path)
    return path.with_name(path.name + ".json")


def read_pseudo(path):
    """Read a pseudotrajectory written by :func:`write_pseudo`.

    Returns
    -------
    (Pseudotrajectory, dict or None)
        The sequence and the stored system record. The step bound is not
        re-verified here; call :func:`verify_pseudotrajectory`.
    """
    path = Path(path)
    with path.open(newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0][0] != "k":
        raise InvalidInputError(f"{path} is not a pseudotrajectory CSV")
    body = np.array([[float(v) for v in r] for r in rows[1:]])
    ks = body[:, 0].astype(int)
    pts = body[:, 1] if body.shape[1] == 2 else body[:, 1:]
    meta = {}
    side = sidecar(path)
    if side.exists():
        meta = json.loads(side.read_text())
    d = meta.get("d")
    if d is None:
        raise InvalidInputError(f"missing sidecar with d for {path}")
    pseudo = Pseudotrajectory(
        points=pts,
        d=float(d),
        k_min=int(ks[0]),
        two_sided=bool(meta.get("two_sided", ks[0] < 0)),
        provenance=meta.get("provenance", "external"),
        seed=meta.get("seed"),
        meta=meta.get("meta", {}),
    )
    return pseudo, meta.get("system")
