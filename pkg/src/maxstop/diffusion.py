"""Scale function, speed measure and Green-function integrals of a 1-d diffusion.

The diffusion solves ``dX = drift(X) dt + volatility(X) dB`` on the open
interval ``(state_lo, state_hi)``.  The scale function is normalised by
``L(x_ref) = 0`` and ``L'(x) = exp(-int_{x_ref}^x 2 drift / volatility^2)``.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from .errors import ArgumentError, DivergenceError, DomainError
from .functions import Constant, Fn, from_config

__all__ = [
    "BoundaryKind",
    "DiffusionSpec",
    "brownian_motion",
    "reflected_brownian_motion",
    "scale",
    "speed_density",
    "exit_up_probability",
    "exit_down_probability",
    "expected_cost_to_exit",
]

ABS_TOL = 1e-10
REL_TOL = 1e-8


class BoundaryKind(str, enum.Enum):
    NATURAL = "natural"
    EXIT = "exit"
    ENTRANCE = "entrance"
    REGULAR_REFLECTING = "regular_reflecting"


@dataclass(frozen=True, eq=False)
class DiffusionSpec:
    drift: Fn
    volatility: Fn
    state_lo: float = -math.inf
    state_hi: float = math.inf
    boundary_kind_lo: BoundaryKind = BoundaryKind.NATURAL
    boundary_kind_hi: BoundaryKind = BoundaryKind.NATURAL
    x_ref: float | None = None
    abs_tol: float = ABS_TOL
    rel_tol: float = REL_TOL
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        set_ = object.__setattr__
        set_(self, "drift", from_config(self.drift))
        set_(self, "volatility", from_config(self.volatility))
        set_(self, "state_lo", float(self.state_lo))
        set_(self, "state_hi", float(self.state_hi))
        set_(self, "boundary_kind_lo", BoundaryKind(self.boundary_kind_lo))
        set_(self, "boundary_kind_hi", BoundaryKind(self.boundary_kind_hi))
        if not self.state_lo < self.state_hi:
            raise DomainError("state interval must satisfy state_lo < state_hi")
        if self.x_ref is None:
            set_(self, "x_ref", _default_ref(self.state_lo, self.state_hi))
        set_(self, "x_ref", float(self.x_ref))
        if not self.state_lo < self.x_ref < self.state_hi:
            raise DomainError(f"x_ref={self.x_ref} must lie inside the state interval")
        ratio = None
        if self.drift.is_zero:
            ratio = 0.0
        else:
            d, v = self.drift.constant_value, self.volatility.constant_value
            if d is not None and v is not None:
                ratio = 2.0 * d / v**2
        set_(self, "_ratio", ratio)

    # -- domain ---------------------------------------------------------------

    def contains(self, x) -> bool:
        return self.state_lo < x < self.state_hi

    def _check(self, x: float) -> None:
        if not self.contains(x):
            raise DomainError(
                f"x={x} outside the open state interval ({self.state_lo}, {self.state_hi})"
            )

    @property
    def is_driftless(self) -> bool:
        return self._ratio == 0.0

    # -- scale function -------------------------------------------------------

    def _log_lprime(self, x: float) -> float:
        if self._ratio is not None:
            return -self._ratio * (x - self.x_ref)
        return -self._integrate_ratio(x)

    def _integrate_ratio(self, x: float) -> float:
        key = ("ratio", x)
        if key not in self._cache:
            f = lambda u: 2.0 * self.drift(u) / self.volatility(u) ** 2
            val, _ = integrate.quad(f, self.x_ref, x, epsabs=self.abs_tol, epsrel=self.rel_tol, limit=200)
            self._cache[key] = val
        return self._cache[key]

    def lprime(self, x):
        """Derivative of the scale function (vectorised)."""
        if np.ndim(x):
            return np.array([self.lprime(float(v)) for v in np.ravel(x)]).reshape(np.shape(x))
        if self._ratio == 0.0:
            return 1.0
        return math.exp(self._log_lprime(x))

    def L(self, x):
        """Scale function (vectorised)."""
        if np.ndim(x):
            if self._ratio == 0.0:
                return np.asarray(x, dtype=float) - self.x_ref
            return np.array([self.L(float(v)) for v in np.ravel(x)]).reshape(np.shape(x))
        if self._ratio is not None:
            k = self._ratio
            dx = x - self.x_ref
            if k == 0.0:
                return dx
            return -math.expm1(-k * dx) / k
        key = ("L", x)
        if key not in self._cache:
            val, _ = integrate.quad(
                lambda u: math.exp(self._log_lprime(u)),
                self.x_ref,
                x,
                epsabs=self.abs_tol,
                epsrel=self.rel_tol,
                limit=200,
            )
            self._cache[key] = val
        return self._cache[key]

    def speed(self, x):
        """Speed-measure density ``2 / (L'(x) sigma(x)^2)``."""
        return 2.0 / (self.lprime(x) * np.asarray(self.volatility(x)) ** 2)


def _default_ref(lo: float, hi: float) -> float:
    if math.isfinite(lo) and math.isfinite(hi):
        return 0.5 * (lo + hi)
    if math.isfinite(lo):
        return lo + 1.0
    if math.isfinite(hi):
        return hi - 1.0
    return 0.0


def brownian_motion(sigma: float = 1.0, x_ref: float = 0.0) -> DiffusionSpec:
    return DiffusionSpec(Constant(0.0), Constant(sigma), x_ref=x_ref)


def reflected_brownian_motion(x_ref: float = 1.0) -> DiffusionSpec:
    """``|B|`` on ``[0, inf)``: natural scale, instantaneously reflecting at 0."""
    return DiffusionSpec(
        Constant(0.0),
        Constant(1.0),
        state_lo=0.0,
        boundary_kind_lo=BoundaryKind.REGULAR_REFLECTING,
        x_ref=x_ref,
    )


# --------------------------------------------------------------------------- #
# Operations
# --------------------------------------------------------------------------- #


def scale(d: DiffusionSpec, x: float) -> tuple[float, float]:
    """Return ``(L(x), L'(x))``."""
    x = float(x)
    d._check(x)
    return float(d.L(x)), float(d.lprime(x))


def speed_density(d: DiffusionSpec, x: float) -> float:
    x = float(x)
    d._check(x)
    return float(d.speed(x))


def _check_interval(d: DiffusionSpec, a: float, b: float, x: float) -> None:
    if not a < b:
        raise ArgumentError(f"need a < b, got a={a}, b={b}")
    if not a <= x <= b:
        raise ArgumentError(f"x={x} outside [{a}, {b}]")
    if a < d.state_lo or b > d.state_hi:
        raise ArgumentError(f"[{a}, {b}] not inside the state interval")


def exit_up_probability(d: DiffusionSpec, a: float, b: float, x: float) -> float:
    """Probability of reaching ``b`` before ``a`` from ``x``."""
    _check_interval(d, a, b, x)
    La, Lb, Lx = d.L(a), d.L(b), d.L(x)
    return float((Lx - La) / (Lb - La))


def exit_down_probability(d: DiffusionSpec, a: float, b: float, x: float) -> float:
    return 1.0 - exit_up_probability(d, a, b, x)


def _cost_fn(c):
    return c if callable(c) else from_config(c)


def _split_points(c, a: float, b: float, extra=()) -> list[float]:
    pts = set(extra)
    pts.update(getattr(c, "breakpoints", ()))
    pts.update(getattr(c, "discontinuity_points", ()))
    return sorted(p for p in pts if a < p < b)


def expected_cost_to_exit(d: DiffusionSpec, c, a: float, b: float, x: float) -> float:
    """``E_x int_0^rho c(X_u) du`` with ``rho`` the exit time of ``[a, b]``.

    Uses the Green function of the interval in natural scale.
    """
    _check_interval(d, a, b, x)
    c = _cost_fn(c)
    if x in (a, b):
        return 0.0
    La, Lb, Lx = d.L(a), d.L(b), d.L(x)
    span = Lb - La

    def lower(y):
        return (d.L(y) - La) * (Lb - Lx) / span * c(y) * d.speed(y)

    def upper(y):
        return (Lx - La) * (Lb - d.L(y)) / span * c(y) * d.speed(y)

    total = 0.0
    for fn, lo, hi in ((lower, a, x), (upper, x, b)):
        total += _integrate_pieces(fn, lo, hi, _split_points(c, lo, hi), d)
    if not math.isfinite(total):
        raise DivergenceError("cost integral diverges on the exit interval", a=a, b=b, x=x)
    return max(total, 0.0)


def _integrate_pieces(fn, lo: float, hi: float, points, d: DiffusionSpec) -> float:
    edges = [lo, *points, hi]
    total = 0.0
    for u, v in zip(edges[:-1], edges[1:]):
        if v <= u:
            continue
        probe = np.linspace(u, v, 5)[1:-1]
        if not np.all(np.isfinite([fn(p) for p in probe])):
            raise DivergenceError(f"integrand is infinite on ({u}, {v})")
        val, _ = integrate.quad(fn, u, v, epsabs=d.abs_tol, epsrel=d.rel_tol, limit=200)
        total += val
    return total
