"""The system zoo: concrete pairs (X, T) and orbit computation.

Every system is a :class:`SystemSpec` holding a space, a vectorized forward
map and, where available, an inverse, a derivative (1-D systems) and a
closed-form ``power(x, n)`` for ``T^n``.

The two flow discretizations (``sin2_circle`` and ``quartic_interval``) are
evaluated through exact conjugacies to a translation by ``h``, which makes
``T^n`` a closed-form expression. A fixed-step RK4 integrator with step
``h/100`` is available through ``integrator="rk4"`` and serves as a
cross-check.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import InvalidInputError, UnsupportedOperationError
from .space import SpaceDescriptor, distance

GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0
TWO_PI = 2.0 * math.pi

# Odd lattice for the doubling map: 2 is invertible mod Q, j/125 points are
# exact, and round trips x -> x*Q stay well inside float precision.
DOUBLING_LATTICE = 5**21


@dataclass(frozen=True, eq=False)
class SystemSpec:
    """A compact dynamical system ``(X, T)``.

    Attributes
    ----------
    name : str
        Zoo name.
    params : dict
        Parameter record; together with ``name`` it identifies the system.
    space : SpaceDescriptor
    forward : callable
        Vectorized map on canonical coordinates.
    inverse : callable, optional
    derivative : callable, optional
        Scalar derivative ``T'(x)`` for 1-D systems.
    power : callable, optional
        Closed-form ``power(x, n)`` returning ``T^n(x)``.
    preimages : callable, optional
        For non-invertible maps, all preimages stacked on a new last axis.
    lipschitz : float, optional
        An upper bound on the Lipschitz constant of ``T``.
    scalar : callable, optional
        Pure-Python ``T`` on a float, used to iterate single 1-D orbits
        without per-step array overhead.
    fixed_points : tuple
        Known fixed points (for documentation and tests).
    """

    name: str
    params: dict
    space: SpaceDescriptor
    forward: Callable
    inverse: Callable | None = None
    derivative: Callable | None = None
    power: Callable | None = None
    preimages: Callable | None = None
    lipschitz: float | None = None
    fixed_points: tuple = ()
    block: Callable | None = field(default=None, repr=False)
    scalar: Callable | None = field(default=None, repr=False)

    @property
    def invertible(self):
        return self.inverse is not None

    @property
    def label(self):
        return format_system(self.name, self.params)

    def T(self, x):
        return self.forward(self.space.canonical(x))

    def T_inv(self, x):
        if self.inverse is None:
            raise UnsupportedOperationError(f"{self.name} is not invertible")
        return self.inverse(self.space.canonical(x))

    def apply_n(self, x, n):
        return apply_n(self, x, n)

    def orbit(self, x, k_min, k_max):
        return orbit_segment(self, x, k_min, k_max)

    def orbit_block(self, xs, n_steps):
        """Forward orbits of many points: array of shape ``(len(xs), n_steps + 1)``."""
        xs = self.space.canonical(np.atleast_1d(np.asarray(xs, dtype=float)))
        if self.block is not None:
            return self.block(xs, int(n_steps))
        if self.power is not None:
            return self.power(xs[:, None], np.arange(n_steps + 1)[None, :])
        out = np.empty((len(xs), n_steps + 1))
        out[:, 0] = xs
        for k in range(n_steps):
            out[:, k + 1] = self.forward(out[:, k])
        return out

    def to_dict(self):
        return {"name": self.name, "params": dict(self.params)}


def apply_n(system, x, n):
    """Return ``T^n(x)``; negative ``n`` requires an invertible system.

    Examples
    --------
    >>> float(apply_n(zoo("rotation", alpha=0.25), 0.0, 3))
    0.75
    """
    n = int(n)
    if n < 0 and not system.invertible:
        raise UnsupportedOperationError(f"{system.name} is not invertible; n={n} < 0")
    x = system.space.canonical(x)
    if system.power is not None:
        return system.power(x, n)
    step = system.forward if n >= 0 else system.inverse
    for _ in range(abs(n)):
        x = step(x)
    return x


def orbit_segment(system, x, k_min, k_max):
    """Points ``T^k(x)`` for ``k_min <= k <= k_max``.

    For an array ``x`` of shape ``(m,)`` the result has shape ``(m, K)``.
    """
    k_min, k_max = int(k_min), int(k_max)
    if k_min > k_max:
        raise InvalidInputError("k_min must not exceed k_max")
    if k_min < 0 and not system.invertible:
        raise UnsupportedOperationError(f"{system.name} is not invertible; negative range")
    x = system.space.canonical(x)
    scalar = np.ndim(x) == 0
    xs = np.atleast_1d(x).astype(float)
    # the warm-started block only pays off for many rows
    if system.power is not None and (system.block is None or k_min < 0 or len(xs) < 32):
        ks = np.arange(k_min, k_max + 1)
        out = system.power(xs[:, None], ks[None, :])
    else:
        width = k_max - k_min + 1
        out = np.empty((len(xs), width))
        # forward part from max(k_min, 0), backward part below 0
        start = max(k_min, 0)
        if start <= k_max:
            cur = xs.copy()
            for _ in range(start):
                cur = system.forward(cur)
            if system.block is not None:
                out[:, start - k_min:] = system.block(cur, k_max - start)
            elif system.scalar is not None and len(xs) == 1:
                f = system.scalar
                y = float(cur[0])
                row = [y]
                for _ in range(k_max - start):
                    y = f(y)
                    row.append(y)
                out[0, start - k_min:] = row
            else:
                out[:, start - k_min] = cur
                for k in range(start + 1, k_max + 1):
                    cur = system.forward(cur)
                    out[:, k - k_min] = cur
        if k_min < 0:
            cur = xs.copy()
            for k in range(-1, k_min - 1, -1):
                cur = system.inverse(cur)
                if k <= k_max:
                    out[:, k - k_min] = cur
    return out[0] if scalar else out


def is_fixed_point(system, x, tol):
    """True iff ``rho(T(x), x) <= tol``."""
    if tol < 0:
        raise InvalidInputError("tol must be nonnegative")
    return bool(distance(system.space, system.T(x), system.space.canonical(x)) <= tol)


# ---------------------------------------------------------------------------
# numerical helpers

def _safeguarded_newton(f, fprime, lo, hi, x0, tol=4e-16, max_iter=200):
    """Vectorized Newton iteration for increasing ``f`` with a maintained bracket.

    Solves ``f(x) = 0`` given ``f(lo) <= 0 <= f(hi)``.
    """
    lo, hi = np.array(lo, dtype=float), np.array(hi, dtype=float)
    x = np.clip(np.array(x0, dtype=float), lo, hi)
    for _ in range(max_iter):
        fx = f(x)
        lo = np.where(fx <= 0, x, lo)
        hi = np.where(fx >= 0, x, hi)
        with np.errstate(divide="ignore", invalid="ignore"):
            step = fx / fprime(x)
        nxt = x - step
        outside = ~np.isfinite(nxt) | (nxt < lo) | (nxt > hi)
        scale = tol * np.maximum(1.0, np.abs(x))
        done = (fx == 0) | (~outside & (np.abs(step) <= scale)) | (hi - lo <= scale)
        x = np.where(done, np.where(outside, x, nxt), np.where(outside, 0.5 * (lo + hi), nxt))
        if np.all(done):
            break
    return x


def rk4_flow(vector_field, x, t, substeps=100):
    """Integrate ``x' = vector_field(x)`` for time ``t`` with fixed-step RK4."""
    x = np.array(x, dtype=float)
    dt = t / substeps
    for _ in range(substeps):
        k1 = vector_field(x)
        k2 = vector_field(x + 0.5 * dt * k1)
        k3 = vector_field(x + 0.5 * dt * k2)
        k4 = vector_field(x + dt * k3)
        x = x + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    return x


def _circle(x):
    r = np.mod(x, 1.0)
    return np.where(r >= 1.0, 0.0, r)


# ---------------------------------------------------------------------------
# zoo members

def _identity(space="circle"):
    spaces = {"circle": SpaceDescriptor.circle(), "interval": SpaceDescriptor.interval(-1, 1)}
    if space not in spaces:
        raise InvalidInputError(f"identity supports spaces {sorted(spaces)}")

    def ident(x):
        return np.array(x, dtype=float)

    return SystemSpec(
        name="identity",
        params={"space": space},
        space=spaces[space],
        forward=ident,
        inverse=ident,
        derivative=lambda x: np.ones_like(np.asarray(x, dtype=float)),
        power=lambda x, n: np.broadcast_to(np.asarray(x, dtype=float), np.broadcast(np.asarray(x), np.asarray(n)).shape).copy(),
        lipschitz=1.0,
    )


def _rotation(alpha=GOLDEN):
    alpha = float(alpha)

    def power(x, n):
        return _circle(np.asarray(x, dtype=float) + np.asarray(n) * alpha)

    return SystemSpec(
        name="rotation",
        params={"alpha": alpha},
        space=SpaceDescriptor.circle(),
        forward=lambda x: _circle(np.asarray(x, dtype=float) + alpha),
        inverse=lambda x: _circle(np.asarray(x, dtype=float) - alpha),
        derivative=lambda x: np.ones_like(np.asarray(x, dtype=float)),
        power=power,
        lipschitz=1.0,
    )


def _doubling():
    Q = DOUBLING_LATTICE

    def to_int(x):
        return np.rint(np.asarray(x, dtype=float) * Q).astype(np.int64) % Q

    def forward(x):
        return ((2 * to_int(x)) % Q) / Q

    def block(xs, n):
        out = np.empty((len(xs), n + 1))
        m = to_int(xs)
        out[:, 0] = xs
        for k in range(n):
            m = (2 * m) % Q
            out[:, k + 1] = m / Q
        return out

    def preimages(x):
        x = np.asarray(x, dtype=float)
        return np.stack([x / 2.0, (x + 1.0) / 2.0], axis=-1)

    return SystemSpec(
        name="doubling",
        params={},
        space=SpaceDescriptor.circle(),
        forward=forward,
        derivative=lambda x: np.full_like(np.asarray(x, dtype=float), 2.0),
        preimages=preimages,
        lipschitz=2.0,
        fixed_points=(0.0,),
        block=block,
    )


def _north_south(h=0.5):
    h = float(h)
    if not 0 < h < 2 / math.pi:
        raise InvalidInputError("north_south needs 0 < h < 2/pi to be a homeomorphism")
    amp = h / 4.0

    def lift(z):
        return z + amp * np.sin(TWO_PI * z)

    def forward(x):
        return _circle(lift(np.asarray(x, dtype=float)))

    def derivative(x):
        return 1.0 + amp * TWO_PI * np.cos(TWO_PI * np.asarray(x, dtype=float))

    def inverse(y):
        y = np.asarray(y, dtype=float)
        z = _safeguarded_newton(lambda z: lift(z) - y, derivative, y - amp, y + amp, y)
        return _circle(z)

    def scalar(x):
        z = (x + amp * math.sin(TWO_PI * x)) % 1.0
        return 0.0 if z >= 1.0 else z

    return SystemSpec(
        name="north_south",
        params={"h": h},
        space=SpaceDescriptor.circle(),
        forward=forward,
        inverse=inverse,
        derivative=derivative,
        lipschitz=1.0 + amp * TWO_PI,
        fixed_points=(0.0, 0.5),
        scalar=scalar,
    )


def _sin2_parts(x):
    """Split x into the semicircle offset and cot of the angle inside it."""
    x = np.asarray(x, dtype=float)
    half = np.where(x >= 0.5, 0.5, 0.0)
    y = x - half
    with np.errstate(divide="ignore", over="ignore"):
        c = np.where(y <= 0.25, 1.0 / np.tan(TWO_PI * y), -1.0 / np.tan(TWO_PI * (0.5 - y)))
    return half, c


def _sin2_field(x):
    return np.sin(TWO_PI * x) ** 2 / TWO_PI


def _sin2_circle(h=0.1, integrator="exact"):
    h = float(h)
    if not h > 0:
        raise InvalidInputError("h must be positive")

    # In the angle phi = 2 pi x the flow of phi' = sin^2 phi satisfies
    # cot(phi(t)) = cot(phi(0)) - t inside each semicircle.
    def power(x, n):
        half, c = _sin2_parts(x)
        c2 = c - np.asarray(n) * h
        y = np.arctan2(1.0, c2) / TWO_PI
        return _circle(half + y)

    def derivative(x):
        _, c = _sin2_parts(x)
        c2 = c - h
        with np.errstate(invalid="ignore", over="ignore"):
            r = (1.0 + c * c) / (1.0 + c2 * c2)
        return np.where(np.isfinite(c), r, 1.0)

    c_star = (h + math.sqrt(h * h + 4)) / 2
    lip = (1 + c_star**2) / (1 + (c_star - h) ** 2)
    if integrator == "exact":
        forward = lambda x: power(x, 1)
        inverse = lambda x: power(x, -1)
        pw = power
    elif integrator == "rk4":
        forward = lambda x: _circle(rk4_flow(_sin2_field, x, h))
        inverse = lambda x: _circle(rk4_flow(_sin2_field, x, -h))
        pw = None
    else:
        raise InvalidInputError("integrator must be 'exact' or 'rk4'")
    return SystemSpec(
        name="sin2_circle",
        params={"h": h, "integrator": integrator},
        space=SpaceDescriptor.circle(),
        forward=forward,
        inverse=inverse,
        derivative=derivative,
        power=pw,
        lipschitz=lip,
        fixed_points=(0.0, 0.5),
    )


def _solve_g(s, u0=None):
    """Solve ``u - coth(u) = s`` for ``u > 0`` (vectorized)."""
    s = np.asarray(s, dtype=float)

    def root(t):
        # positive root of u - 1/u = t, computed without cancellation
        r = np.sqrt(t * t + 4.0)
        return np.where(t >= 0, (t + r) / 2.0, 2.0 / (r - t))

    lo, hi = root(s), root(s + 1.0)
    # g(u) = u - coth(u) is increasing and concave with g'(u) = coth(u)^2,
    # so Newton started at lo (where g <= s) climbs monotonically to the root.
    u = lo if u0 is None else np.clip(u0, lo, hi)
    for _ in range(80):
        t = np.tanh(u)
        step = (u - 1.0 / t - s) * (t * t)
        nxt = np.clip(u - step, lo, hi)
        if np.all(np.abs(nxt - u) <= 4e-16 * np.maximum(1.0, u)):
            return nxt
        u = nxt
    return u


def _quartic_field(x):
    return x * x - x**4


def _log_quartic_field(u):
    # log f(tanh u) with f(x) = x^2 (1 - x^2), stable for large |u|
    u = np.abs(u)
    log_cosh = u + np.log1p(np.exp(-2.0 * u)) - math.log(2.0)
    return 2.0 * np.log(np.tanh(u)) - 2.0 * log_cosh


def _quartic_interval(h=0.1, integrator="exact"):
    h = float(h)
    if not h > 0:
        raise InvalidInputError("h must be positive")

    # On each branch (-1, 0) and (0, 1), tau(x) = -1/x + artanh(x) is a time
    # coordinate; with u = artanh(x) it reads tau = u - coth(u).
    def power(x, n):
        x, n = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(n))
        out = np.array(x, dtype=float)
        pos = (x > 0) & (x < 1)
        neg = (x < 0) & (x > -1)
        if pos.any():
            u = np.arctanh(x[pos])
            tau = u - 1.0 / np.tanh(u) + n[pos] * h
            out[pos] = np.tanh(_solve_g(tau))
        if neg.any():
            v = np.arctanh(-x[neg])
            tau = -(v - 1.0 / np.tanh(v)) + n[neg] * h
            out[neg] = -np.tanh(_solve_g(-tau))
        return out

    def derivative(x):
        x = np.asarray(x, dtype=float)
        out = np.ones_like(x)
        out = np.where(x >= 1.0, math.exp(-2.0 * h), out)
        out = np.where(x <= -1.0, math.exp(2.0 * h), out)
        inner = (x > -1) & (x < 1) & (x != 0)
        if inner.any():
            xi = x[inner]
            u = np.arctanh(xi)
            tau = u - 1.0 / np.tanh(u)
            sgn = np.sign(xi)
            u2 = np.where(sgn > 0, _solve_g(tau + h), -_solve_g(-(tau + h)))
            out[inner] = np.exp(_log_quartic_field(u2) - _log_quartic_field(u))
        return out

    def block(xs, n):
        # column-wise sweep with warm starts; same values as power() to rounding
        out = np.empty((len(xs), n + 1))
        out[:, 0] = xs
        out[:, 1:] = xs[:, None]
        for mask, sign in (((xs > 0) & (xs < 1), 1.0), ((xs < 0) & (xs > -1), -1.0)):
            if not mask.any():
                continue
            v = np.arctanh(sign * xs[mask])
            target = sign * (v - 1.0 / np.tanh(v))
            # tanh(u) rounds to 1 once u > 20, so saturated orbits drop out
            cols = np.full((n, len(v)), 40.0)
            live = np.arange(len(v))
            for k in range(1, n + 1):
                s_k = sign * (target[live] + k * h)
                keep = s_k < 25.0
                if not keep.all():
                    live, s_k, v = live[keep], s_k[keep], v[keep]
                    if not len(live):
                        break
                v = _solve_g(s_k, u0=v)
                cols[k - 1, live] = v
            out[mask, 1:] = sign * np.tanh(cols.T)
        return out

    if integrator == "exact":
        forward = lambda x: power(x, 1)
        inverse = lambda x: power(x, -1)
        pw, blk = power, block
    elif integrator == "rk4":
        blk = None
        forward = lambda x: np.clip(rk4_flow(_quartic_field, x, h), -1.0, 1.0)
        inverse = lambda x: np.clip(rk4_flow(_quartic_field, x, -h), -1.0, 1.0)
        pw = None
    else:
        raise InvalidInputError("integrator must be 'exact' or 'rk4'")
    return SystemSpec(
        name="quartic_interval",
        params={"h": h, "integrator": integrator},
        space=SpaceDescriptor.interval(-1.0, 1.0),
        forward=forward,
        inverse=inverse,
        derivative=derivative,
        power=pw,
        lipschitz=math.exp(2.0 * h),
        fixed_points=(-1.0, 0.0, 1.0),
        block=blk,
    )


ZOO = {
    "identity": _identity,
    "rotation": _rotation,
    "doubling": _doubling,
    "north_south": _north_south,
    "sin2_circle": _sin2_circle,
    "quartic_interval": _quartic_interval,
}


def zoo(name, **params):
    """Build a named zoo system.

    Parameters
    ----------
    name : str
        One of ``identity``, ``rotation``, ``doubling``, ``north_south``,
        ``sin2_circle``, ``quartic_interval``.
    **params
        System parameters (``alpha`` for rotation, ``h`` for the others,
        ``integrator`` for the flow discretizations).
    """
    if name not in ZOO:
        raise InvalidInputError(f"unknown system {name!r}; choose from {sorted(ZOO)}")
    try:
        return ZOO[name](**params)
    except TypeError as exc:
        raise InvalidInputError(f"bad parameters for {name}: {exc}") from None


def _coerce(value):
    for cast in (int, float):
        try:
            return cast(value)
        except ValueError:
            pass
    return value


def parse_system(selector):
    """Parse ``"name[:k=v[,k=v...]]"`` into a zoo system.

    >>> parse_system("rotation:alpha=0.25").params["alpha"]
    0.25
    """
    name, _, rest = selector.partition(":")
    params = {}
    for item in filter(None, rest.replace(":", ",").split(",")):
        key, eq, value = item.partition("=")
        if not eq:
            raise InvalidInputError(f"malformed parameter {item!r} in {selector!r}")
        params[key.strip()] = _coerce(value.strip())
    return zoo(name.strip(), **params)


def format_system(name, params):
    if not params:
        return name
    return name + ":" + ",".join(f"{k}={v}" for k, v in sorted(params.items()))


def system_from_dict(data):
    return zoo(data["name"], **data.get("params", {}))
