"""Target measures, barycentre function and optimal embedding pairs.

A target law ``mu`` on the line is a continuous part with density ``f``
plus finitely many atoms.  The barycentre function is

    Psi(x) = E[Z | Z >= x] = x + E[(Z - x)^+] / mu([x, inf)),

left-continuous and equal to the mean (0) left of the support.  The stopping
rule ``inf{t: S_t >= Psi(B_t)}`` embeds ``mu`` in Brownian motion, and the
pair ``phi' = 1{Psi(R)}``, ``c = f / (2 mu([x, inf)))`` makes it optimal.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from numpy.polynomial import Polynomial
from scipy import integrate, interpolate, special

from .boundary import Boundary
from .errors import (
    ArgumentError,
    ConfigError,
    DomainError,
    InconsistentMeasureError,
    RangeError,
    UnsupportedError,
)
from .functions import Affine, Constant, Fn, Piecewise, from_config
from .meilijson import ValueFunctionH
from .problem import CostSpec, RewardSpec

__all__ = [
    "TargetMeasure",
    "barycentre",
    "inverse_barycentre",
    "hazard_cost",
    "embedding_pair",
    "meilijson_value",
    "meilijson_reward",
    "validate_pair",
    "loglogl_check",
    "azema_yor_boundary",
]

MASS_TOL = 1e-10
MEAN_TOL = 1e-8
TAIL_QUANTILE = 1e-8

# --------------------------------------------------------------------------- #
# Continuous components (normalised to mass one)
# --------------------------------------------------------------------------- #


class _Component:
    """Probability density with exact (or accurately tabulated) tail integrals.

    ``tail(x) = int_x^hi f`` and ``excess(x) = int_x^hi (y - x) f(y) dy`` for
    ``x`` inside the support; callers clip ``x`` into ``[lo, hi]``.
    """

    lo: float
    hi: float
    breakpoints: tuple[float, ...] = ()

    def pdf(self, x):
        raise NotImplementedError

    def tail(self, x):
        raise NotImplementedError

    def excess(self, x):
        raise NotImplementedError

    def mean(self) -> float:
        raise NotImplementedError


class _Uniform(_Component):
    def __init__(self, lo: float, hi: float):
        if not (math.isfinite(lo) and math.isfinite(hi) and lo < hi):
            raise ConfigError("uniform density needs finite lo < hi")
        self.lo, self.hi = float(lo), float(hi)
        self.w = self.hi - self.lo

    def pdf(self, x):
        return np.where((x >= self.lo) & (x <= self.hi), 1.0 / self.w, 0.0)

    def tail(self, x):
        return (self.hi - x) / self.w

    def excess(self, x):
        return 0.5 * (self.hi - x) ** 2 / self.w

    def mean(self):
        return 0.5 * (self.lo + self.hi)


class _Exponential(_Component):
    def __init__(self, rate: float, loc: float = 0.0):
        if not rate > 0:
            raise ConfigError("exponential density needs rate > 0")
        self.rate, self.lo, self.hi = float(rate), float(loc), math.inf

    def pdf(self, x):
        return np.where(x >= self.lo, self.rate * np.exp(-self.rate * np.maximum(x - self.lo, 0.0)), 0.0)

    def tail(self, x):
        return np.exp(-self.rate * (x - self.lo))

    def excess(self, x):
        return self.tail(x) / self.rate

    def mean(self):
        return self.lo + 1.0 / self.rate


class _TruncatedGaussian(_Component):
    def __init__(self, mean: float = 0.0, sd: float = 1.0, lo: float = -math.inf, hi: float = math.inf):
        if not sd > 0 or not lo < hi:
            raise ConfigError("gaussian density needs sd > 0 and lo < hi")
        self.m, self.sd, self.lo, self.hi = float(mean), float(sd), float(lo), float(hi)
        self.za, self.zb = (self.lo - self.m) / self.sd, (self.hi - self.m) / self.sd
        self.Z = float(special.ndtr(-self.za) - special.ndtr(-self.zb))
        if not self.Z > 0:
            raise ConfigError("gaussian truncation interval carries no mass")

    def _phi(self, z):
        return np.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi)

    def pdf(self, x):
        z = (x - self.m) / self.sd
        return np.where((x >= self.lo) & (x <= self.hi), self._phi(z) / (self.sd * self.Z), 0.0)

    def tail(self, x):
        z = (x - self.m) / self.sd
        return (special.ndtr(-z) - special.ndtr(-self.zb)) / self.Z

    def excess(self, x):
        z = (x - self.m) / self.sd
        phib = self._phi(self.zb) if math.isfinite(self.zb) else 0.0
        return (self.sd * (self._phi(z) - phib)) / self.Z + (self.m - x) * self.tail(x)

    def mean(self):
        pa = self._phi(self.za) if math.isfinite(self.za) else 0.0
        pb = self._phi(self.zb) if math.isfinite(self.zb) else 0.0
        return self.m + self.sd * (pa - pb) / self.Z


class _PiecewisePolynomial(_Component):
    """Density given by polynomials (ascending coefficients in ``x``) on
    consecutive intervals ``[breaks[i], breaks[i+1])``."""

    def __init__(self, breaks: Sequence[float], coeffs: Sequence[Sequence[float]]):
        b = np.asarray(breaks, dtype=float)
        if b.ndim != 1 or b.size < 2 or np.any(np.diff(b) <= 0) or not np.all(np.isfinite(b)):
            raise ConfigError("piecewise polynomial needs finite, strictly increasing breaks")
        if len(coeffs) != b.size - 1:
            raise ConfigError("piecewise polynomial needs one coefficient list per interval")
        polys = [Polynomial(np.asarray(c, dtype=float)) for c in coeffs]
        x = Polynomial([0.0, 1.0])
        self.p = polys
        self.P0 = [q.integ() for q in polys]
        self.P1 = [(x * q).integ() for q in polys]
        self.b = b
        self.lo, self.hi = float(b[0]), float(b[-1])
        full0 = np.array([P(b[i + 1]) - P(b[i]) for i, P in enumerate(self.P0)])
        full1 = np.array([P(b[i + 1]) - P(b[i]) for i, P in enumerate(self.P1)])
        mass = float(full0.sum())
        if not mass > 0:
            raise ConfigError("piecewise polynomial density has no mass")
        probe = np.concatenate([np.linspace(b[i], b[i + 1], 65) for i in range(b.size - 1)])
        if np.any(self._raw(probe) < -1e-12):
            raise ConfigError("piecewise polynomial density is negative somewhere")
        self.scale = 1.0 / mass
        # suffix sums over whole pieces strictly to the right of piece i
        self.suf0 = np.concatenate([np.cumsum(full0[::-1])[::-1][1:], [0.0]])
        self.suf1 = np.concatenate([np.cumsum(full1[::-1])[::-1][1:], [0.0]])
        self.breakpoints = tuple(b.tolist())
        self._mean = float(full1.sum()) * self.scale

    def _idx(self, x):
        return np.clip(np.searchsorted(self.b, x, side="right") - 1, 0, self.b.size - 2)

    def _raw(self, x):
        x = np.asarray(x, dtype=float)
        i = self._idx(x)
        out = np.zeros(x.shape)
        for k, q in enumerate(self.p):
            m = i == k
            if np.any(m):
                out[m] = q(x[m])
        return np.where((x >= self.lo) & (x <= self.hi), out, 0.0)

    def pdf(self, x):
        return self._raw(x) * self.scale

    def _partial(self, x, prims, suf):
        x = np.asarray(x, dtype=float)
        i = self._idx(x)
        out = np.empty(x.shape)
        for k, P in enumerate(prims):
            m = i == k
            if np.any(m):
                out[m] = P(self.b[k + 1]) - P(x[m]) + suf[k]
        return out * self.scale

    def tail(self, x):
        return self._partial(x, self.P0, self.suf0)

    def excess(self, x):
        return self._partial(x, self.P1, self.suf1) - np.asarray(x, dtype=float) * self.tail(x)

    def mean(self):
        return self._mean


_GL_X, _GL_W = np.polynomial.legendre.leggauss(32)


class _Custom(_Component):
    """Arbitrary density: quadrature on a node grid, Gauss-Legendre inside cells."""

    def __init__(self, fn: Callable, lo: float, hi: float, breakpoints: Sequence[float] = (), n_core: int = 512):
        if not lo < hi:
            raise ConfigError("custom density needs lo < hi")
        self.fn, self.lo, self.hi = fn, float(lo), float(hi)
        c0 = self.lo if math.isfinite(self.lo) else min(-1.0, self.hi - 1.0)
        c1 = self.hi if math.isfinite(self.hi) else max(1.0, c0 + 1.0)
        nodes = set(np.linspace(c0, c1, n_core + 1).tolist())
        nodes.update(p for p in breakpoints if c0 < p < c1)
        # geometric cells out to ~1e18 on infinite sides
        if not math.isfinite(self.hi):
            nodes.update((c1 + (2.0**k - 1.0) * max(1.0, abs(c1))) for k in range(1, 61))
        if not math.isfinite(self.lo):
            nodes.update((c0 - (2.0**k - 1.0) * max(1.0, abs(c0))) for k in range(1, 61))
        self.nodes = np.array(sorted(nodes))
        self.breakpoints = tuple(p for p in breakpoints)
        m0 = self._cells(lambda y: self._f(y))
        m1 = self._cells(lambda y: y * self._f(y))
        # outer tails beyond the node grid
        t0_hi = t1_hi = t0_lo = t1_lo = 0.0
        if not math.isfinite(self.hi):
            t0_hi = integrate.quad(self._f, self.nodes[-1], math.inf, limit=200)[0]
            t1_hi = integrate.quad(lambda y: y * self._f(y), self.nodes[-1], math.inf, limit=200)[0]
        if not math.isfinite(self.lo):
            t0_lo = integrate.quad(self._f, -math.inf, self.nodes[0], limit=200)[0]
            t1_lo = integrate.quad(lambda y: y * self._f(y), -math.inf, self.nodes[0], limit=200)[0]
        mass = float(m0.sum() + t0_hi + t0_lo)
        if not (mass > 0 and math.isfinite(mass)):
            raise ConfigError("custom density has no finite positive mass")
        first = float(m1.sum() + t1_hi + t1_lo)
        if not math.isfinite(first):
            raise DomainError("target measure has no finite first moment")
        self.scale = 1.0 / mass
        self.suf0 = (np.concatenate([np.cumsum(m0[::-1])[::-1], [0.0]]) + t0_hi) * self.scale
        self.suf1 = (np.concatenate([np.cumsum(m1[::-1])[::-1], [0.0]]) + t1_hi) * self.scale
        self.t0_lo, self.t1_lo = t0_lo * self.scale, t1_lo * self.scale
        self._mean = first * self.scale

    def _f(self, y):
        y = np.asarray(y, dtype=float)
        val = np.asarray(self.fn(y), dtype=float) * np.ones(y.shape)
        return np.where((y >= self.lo) & (y <= self.hi), val, 0.0)

    def _cells(self, g):
        out = np.empty(self.nodes.size - 1)
        for k, (u, v) in enumerate(zip(self.nodes[:-1], self.nodes[1:])):
            out[k] = integrate.quad(g, u, v, limit=200, epsabs=0.0, epsrel=1e-13)[0]
        return out

    def _gl(self, g, u, v):
        # vectorised Gauss-Legendre over arrays of intervals [u, v]
        half = 0.5 * (v - u)
        mid = 0.5 * (v + u)
        y = mid[:, None] + half[:, None] * _GL_X[None, :]
        return half * np.sum(_GL_W[None, :] * g(y), axis=1)

    def _partial(self, x, weight, suf, t_lo):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        out = np.empty(x.shape)
        inside = (x >= self.nodes[0]) & (x <= self.nodes[-1])
        if np.any(inside):
            xi = x[inside]
            k = np.clip(np.searchsorted(self.nodes, xi, side="right") - 1, 0, self.nodes.size - 2)
            right = self.nodes[k + 1]
            part = self._gl(lambda y: weight(y) * self._f(y), xi, right) * self.scale
            out[inside] = part + suf[k + 1]
        for i in np.flatnonzero(~inside):
            if x[i] > self.nodes[-1]:
                out[i] = integrate.quad(lambda y: weight(y) * self._f(y), x[i], math.inf, limit=200)[0] * self.scale
            else:
                missing = integrate.quad(lambda y: weight(y) * self._f(y), x[i], self.nodes[0], limit=200)[0]
                out[i] = suf[0] + missing * self.scale
        return out

    def pdf(self, x):
        return self._f(x) * self.scale

    def tail(self, x):
        return self._partial(x, lambda y: 1.0, self.suf0, self.t0_lo)

    def excess(self, x):
        x = np.asarray(x, dtype=float)
        return self._partial(x, lambda y: y, self.suf1, self.t1_lo) - np.atleast_1d(x) * self.tail(x)

    def mean(self):
        return self._mean


class _Shifted(_Component):
    """Density of ``Z - m``."""

    def __init__(self, inner: _Component, m: float):
        self.inner, self.m = inner, float(m)
        self.lo, self.hi = inner.lo - self.m, inner.hi - self.m
        self.breakpoints = tuple(b - self.m for b in inner.breakpoints)

    def pdf(self, x):
        return self.inner.pdf(np.asarray(x) + self.m)

    def tail(self, x):
        return self.inner.tail(np.asarray(x) + self.m)

    def excess(self, x):
        return self.inner.excess(np.asarray(x) + self.m)

    def mean(self):
        return self.inner.mean() - self.m


def _component_from_config(kind: str, params: dict, support) -> _Component:
    try:
        if kind == "uniform":
            lo, hi = params.get("lo", support[0] if support else None), params.get("hi", support[1] if support else None)
            return _Uniform(float(lo), float(hi))
        if kind == "exponential":
            return _Exponential(params.get("rate", 1.0), params.get("loc", 0.0))
        if kind in ("gaussian", "truncated_gaussian"):
            lo, hi = (support or (-math.inf, math.inf))
            return _TruncatedGaussian(
                params.get("mean", 0.0), params.get("sd", 1.0), params.get("lo", lo), params.get("hi", hi)
            )
        if kind == "piecewise_polynomial":
            return _PiecewisePolynomial(params["breaks"], params["coeffs"])
        if kind == "tabulated":
            xs = np.asarray(params["x"], dtype=float)
            ys = np.asarray(params["y"], dtype=float)
            if xs.shape != ys.shape or xs.size < 2:
                raise ConfigError("tabulated density needs matching x/y lists")
            slopes = np.diff(ys) / np.diff(xs)
            coeffs = [[ys[i] - slopes[i] * xs[i], slopes[i]] for i in range(slopes.size)]
            return _PiecewisePolynomial(xs, coeffs)
        if kind == "expr":
            if not support:
                raise ConfigError("expr density needs a 'support' entry")
            fn = from_config({"kind": "expr", "expr": params["expr"]})
            return _Custom(fn, float(support[0]), float(support[1]), params.get("breakpoints", ()))
    except KeyError as exc:
        raise ConfigError(f"density {kind!r} is missing parameter {exc.args[0]!r}") from exc
    raise ConfigError(f"unknown density kind {kind!r}")


# --------------------------------------------------------------------------- #
# Target measure
# --------------------------------------------------------------------------- #


@dataclass(frozen=True, eq=False)
class TargetMeasure:
    """Centred law: ``weight * density + sum p_i delta_{j_i}``.

    The continuous component is normalised to mass one and scaled by
    ``weight = 1 - sum p_i``.  A measure whose mean is not zero is shifted
    to mean zero when ``recenter`` is set and rejected otherwise; the shift
    applied is kept in ``shift``.
    """

    component: _Component | None
    atoms: tuple[tuple[float, float], ...] = ()
    recenter: bool = True
    shift: float = 0.0
    weight: float = field(init=False, default=0.0)

    def __post_init__(self):
        set_ = object.__setattr__
        atoms = tuple((float(j), float(p)) for j, p in self.atoms)
        if any(p <= 0 for _, p in atoms):
            raise DomainError("atom masses must be positive")
        if any(b[0] <= a[0] for a, b in zip(atoms[:-1], atoms[1:])):
            raise DomainError("atom locations must be strictly ascending")
        atom_mass = sum(p for _, p in atoms)
        comp = self.component
        if comp is None:
            if abs(atom_mass - 1.0) > MASS_TOL:
                raise DomainError(f"total mass {atom_mass} differs from 1")
            weight = 0.0
        else:
            weight = 1.0 - atom_mass
            if weight <= MASS_TOL:
                raise DomainError("atoms leave no mass for the density")
        mean = (weight * comp.mean() if comp is not None else 0.0) + sum(j * p for j, p in atoms)
        if not math.isfinite(mean):
            raise DomainError("target measure has no finite first moment")
        shift = float(self.shift)
        if abs(mean) > MEAN_TOL:
            if not self.recenter:
                raise InconsistentMeasureError(f"target measure has mean {mean}, expected 0", mean=mean)
            if comp is not None:
                comp = _Shifted(comp, mean)
            atoms = tuple((j - mean, p) for j, p in atoms)
            shift += mean
        set_(self, "component", comp)
        set_(self, "atoms", atoms)
        set_(self, "shift", shift)
        set_(self, "weight", weight)
        set_(self, "_aj", np.array([j for j, _ in atoms]))
        set_(self, "_ap", np.array([p for _, p in atoms]))

    # -- construction ------------------------------------------------------------

    @classmethod
    def from_config(cls, spec: dict) -> "TargetMeasure":
        """Keys: ``density.kind``, ``density.params``, ``atoms[]``, ``support``,
        ``recenter``.  Atoms are ``[location, mass]`` pairs or mappings with
        ``at``/``mass``."""
        if not isinstance(spec, dict):
            raise ConfigError("measure config must be a mapping")
        atoms = []
        for a in spec.get("atoms", ()) or ():
            if isinstance(a, dict):
                atoms.append((float(a["at"]), float(a["mass"])))
            else:
                atoms.append((float(a[0]), float(a[1])))
        dens = spec.get("density")
        support = spec.get("support")
        if support is not None:
            support = tuple(float(v) for v in support)
        comp = None
        if dens is not None and dens.get("kind", "none") != "none":
            comp = _component_from_config(dens["kind"], dens.get("params", {}) or {}, support)
        return cls(comp, tuple(sorted(atoms)), recenter=bool(spec.get("recenter", True)))

    @classmethod
    def uniform(cls, lo: float = -1.0, hi: float = 1.0, **kw) -> "TargetMeasure":
        return cls(_Uniform(lo, hi), **kw)

    @classmethod
    def exponential(cls, rate: float = 1.0, loc: float = -1.0, **kw) -> "TargetMeasure":
        return cls(_Exponential(rate, loc), **kw)

    @classmethod
    def gaussian(cls, mean=0.0, sd=1.0, lo=-math.inf, hi=math.inf, **kw) -> "TargetMeasure":
        return cls(_TruncatedGaussian(mean, sd, lo, hi), **kw)

    @classmethod
    def piecewise_polynomial(cls, breaks, coeffs, **kw) -> "TargetMeasure":
        return cls(_PiecewisePolynomial(breaks, coeffs), **kw)

    @classmethod
    def custom(cls, pdf: Callable, lo: float, hi: float, breakpoints=(), **kw) -> "TargetMeasure":
        return cls(_Custom(pdf, lo, hi, breakpoints), **kw)

    @classmethod
    def discrete(cls, atoms, **kw) -> "TargetMeasure":
        return cls(None, tuple(sorted((float(j), float(p)) for j, p in atoms)), **kw)

    # -- basic quantities ---------------------------------------------------------

    @property
    def a(self) -> float:
        vals = [self.component.lo] if self.component is not None else []
        vals += [j for j, _ in self.atoms]
        return float(min(vals))

    @property
    def b(self) -> float:
        vals = [self.component.hi] if self.component is not None else []
        vals += [j for j, _ in self.atoms]
        return float(max(vals))

    @property
    def has_density(self) -> bool:
        return self.component is not None

    def _clip(self, x):
        c = self.component
        return np.clip(x, c.lo, c.hi)

    def density(self, x):
        x = np.asarray(x, dtype=float)
        if self.component is None:
            return np.zeros(x.shape)
        return self.weight * self.component.pdf(x)

    def _cont_tail(self, x):
        if self.component is None:
            return np.zeros(np.shape(x))
        c = self.component
        out = self.weight * np.where(x >= c.hi, 0.0, c.tail(self._clip(x)))
        return np.reshape(out, np.shape(x))

    def _cont_excess(self, x):
        if self.component is None:
            return np.zeros(np.shape(x))
        c = self.component
        xc = self._clip(x)
        base = c.excess(xc) + (xc - x) * c.tail(xc)
        return np.reshape(self.weight * np.where(x >= c.hi, 0.0, base), np.shape(x))

    def _atom_sum(self, x, strict: bool, excess: bool = False):
        if not self.atoms:
            return np.zeros(np.shape(x))
        x = np.asarray(x, dtype=float)
        diff = self._aj - x[..., None]
        hit = diff > 0 if strict else diff >= 0
        w = self._ap * (diff if excess else 1.0)
        return np.sum(np.where(hit, w, 0.0), axis=-1)

    def tail(self, x):
        """``mu([x, inf))``."""
        x = np.asarray(x, dtype=float)
        return self._cont_tail(x) + self._atom_sum(x, strict=False)

    def tail_open(self, x):
        """``mu((x, inf))``."""
        x = np.asarray(x, dtype=float)
        return self._cont_tail(x) + self._atom_sum(x, strict=True)

    def excess(self, x):
        """``E[(Z - x)^+]``."""
        x = np.asarray(x, dtype=float)
        return self._cont_excess(x) + self._atom_sum(x, strict=True, excess=True)

    def cdf(self, x):
        """Right-continuous distribution function ``mu((-inf, x])``."""
        return 1.0 - self.tail_open(x)

    def cdf_left(self, x):
        return 1.0 - self.tail(x)

    def mean(self) -> float:
        comp = self.weight * self.component.mean() if self.component is not None else 0.0
        return float(comp + sum(j * p for j, p in self.atoms))

    def atom_at(self, x: float) -> float:
        for j, p in self.atoms:
            if j == x:
                return p
        return 0.0

    def quantile_upper(self, q: float = TAIL_QUANTILE) -> float:
        """Smallest ``x`` (to bisection accuracy) with ``mu([x, inf)) <= q``."""
        if math.isfinite(self.b):
            return self.b
        lo, hi = 0.0, 1.0
        while float(self.tail(hi)) > q:
            lo, hi = hi, 2.0 * hi + 1.0
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if float(self.tail(mid)) > q:
                lo = mid
            else:
                hi = mid
            if hi - lo <= 1e-12 * max(1.0, abs(hi)):
                break
        return hi

    def quantile_lower(self, q: float = TAIL_QUANTILE) -> float:
        if math.isfinite(self.a):
            return self.a
        lo, hi = -1.0, 0.0
        while float(self.cdf(lo)) > q:
            lo, hi = 2.0 * lo - 1.0, lo
        for _ in range(200):
            mid = 0.5 * (lo + hi)
            if float(self.cdf(mid)) > q:
                hi = mid
            else:
                lo = mid
            if hi - lo <= 1e-12 * max(1.0, abs(lo)):
                break
        return lo

    # -- barycentre -----------------------------------------------------------------

    def psi(self, x, right: bool = False):
        """Barycentre ``Psi(x)``; ``right=True`` gives ``Psi(x+)``."""
        x = np.asarray(x, dtype=float)
        t = self.tail_open(x) if right else self.tail(x)
        e = self.excess(x)
        left_of = x < self.a if right else x <= self.a
        if np.any((t <= 0) & ~left_of):
            bad = np.atleast_1d(x)[np.atleast_1d((t <= 0) & ~left_of)][0]
            raise RangeError(f"no mass at or right of x={bad}", x=float(bad))
        with np.errstate(divide="ignore", invalid="ignore"):
            val = x + e / np.where(t > 0, t, 1.0)
        return np.where(left_of, 0.0, np.maximum(val, x))

    @property
    def psi_sup(self) -> float:
        """``sup Psi``; attained only when there is an atom at ``b``."""
        return self.b

    def psi_inverse(self, s):
        """Left-continuous inverse ``max(a, inf{x: Psi(x) >= s})`` (vectorised)."""
        s = np.asarray(s, dtype=float)
        flat = np.atleast_1d(s)
        top_ok = bool(self.atom_at(self.b) > 0)
        bad = (flat < 0) | (flat > self.b)
        if not top_ok:
            bad |= flat == self.b
        if np.any(bad):
            raise RangeError(f"s={flat[bad][0]} outside the range [0, {self.b}) of the barycentre")
        a = self.a
        hi = np.minimum(flat, self.b)  # Psi(x) >= x, so Psi(s) >= s
        if math.isfinite(a):
            lo = np.full(flat.shape, a)
        else:
            lo = np.minimum(flat, 0.0) - 1.0
            while True:
                too_high = self.psi(lo) >= flat
                if not np.any(too_high):
                    break
                lo = np.where(too_high, 2.0 * lo - 1.0, lo)
        # invariant: Psi(lo) < s <= Psi(hi) where s > 0
        active = flat > 0
        lo_a, hi_a, s_a = lo[active], hi[active], flat[active]
        for _ in range(200):
            mid = 0.5 * (lo_a + hi_a)
            up = self.psi(mid) >= s_a
            hi_a = np.where(up, mid, hi_a)
            lo_a = np.where(up, lo_a, mid)
            if np.all(hi_a - lo_a <= 4e-16 * np.maximum(1.0, np.abs(hi_a))):
                break
        out = np.full(flat.shape, a)
        out[active] = np.maximum(hi_a, a)
        return float(out[0]) if s.ndim == 0 else out.reshape(s.shape)

    def hazard(self, x):
        """``f(x) / (2 mu([x, inf)))``."""
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            return self.density(x) / (2.0 * self.tail(x))

    def atom_gaps(self) -> list[tuple[float, float]]:
        """Intervals ``(Psi(j), Psi(j+)]`` skipped by the barycentre at atoms."""
        out = []
        for j, p in self.atoms:
            if self.tail_open(j) <= 0:
                continue
            lo, hi = float(self.psi(j)), float(self.psi(j, right=True))
            if hi > lo:
                out.append((lo, hi))
        return out


# --------------------------------------------------------------------------- #
# Operations
# --------------------------------------------------------------------------- #


def barycentre(mu: TargetMeasure, x: float) -> float:
    return float(mu.psi(float(x)))


def inverse_barycentre(mu: TargetMeasure, s: float) -> float:
    return float(mu.psi_inverse(float(s)))


def hazard_cost(mu: TargetMeasure, x: float) -> float:
    x = float(x)
    if mu.atom_at(x) > 0:
        raise ArgumentError(f"mu has an atom at x={x}; the density is undefined there")
    if not mu.has_density or not (mu.component.lo <= x < mu.component.hi):
        raise RangeError(f"x={x} outside the support of the density")
    return float(mu.hazard(x))


class _HazardFn(Fn):
    def __init__(self, mu: TargetMeasure):
        self.mu = mu
        self.breakpoints = tuple(sorted({mu.a, mu.b, *mu.component.breakpoints, *(j for j, _ in mu.atoms)} - {math.inf, -math.inf}))

    def _eval(self, x):
        c = self.mu.component
        inside = (x >= c.lo) & (x < c.hi)
        val = self.mu.hazard(np.where(inside, x, c.lo if math.isfinite(c.lo) else 0.0))
        return np.where(inside, val, math.inf)

    def _deriv(self, x):
        h = 1e-6 * np.maximum(1.0, np.abs(x))
        return (self._eval(x + h) - self._eval(x - h)) / (2.0 * h)


def _identity_with_gaps(gaps: list[tuple[float, float]], top: float) -> Fn:
    """Continuous ``phi`` with ``phi(0)=0``, slope one off ``gaps`` on
    ``[0, top]``, and flat below 0, on the gaps and above ``top``."""
    breaks: list[float] = []
    pieces: list[Fn] = [Constant(0.0)]
    level, pos = 0.0, 0.0
    for lo, hi in sorted(gaps):
        lo, hi = max(lo, 0.0), min(hi, top)
        if hi <= lo:
            continue
        if lo > pos:
            breaks.append(pos)
            pieces.append(Affine(1.0, level - pos))
            level += lo - pos
        breaks.append(lo)
        pieces.append(Constant(level))
        pos = hi
    if math.isfinite(top):
        if top > pos:
            breaks.append(pos)
            pieces.append(Affine(1.0, level - pos))
            level += top - pos
        breaks.append(top)
        pieces.append(Constant(level))
    else:
        breaks.append(pos)
        pieces.append(Affine(1.0, level - pos))
    # a repeated break means the earlier piece has zero width
    out_b: list[float] = []
    out_p: list[Fn] = [pieces[0]]
    for b, piece in zip(breaks, pieces[1:]):
        if out_b and b == out_b[-1]:
            out_p[-1] = piece
        else:
            out_b.append(b)
            out_p.append(piece)
    return Piecewise(out_b, out_p)


def embedding_pair(mu: TargetMeasure) -> tuple[RewardSpec, CostSpec]:
    """``(phi, c)`` whose optimal stopping rule is the Azema-Yor embedding of ``mu``."""
    if not mu.has_density:
        raise UnsupportedError("purely atomic target: the pair degenerates to phi = c = 0")
    comp = mu.component
    if mu.atoms:
        lo = comp.lo if math.isfinite(comp.lo) else mu.quantile_lower()
        hi = comp.hi if math.isfinite(comp.hi) else mu.quantile_upper()
        probe = np.linspace(lo, hi, 2049)[1:-1]
        if np.any(mu.density(probe) <= 0):
            raise UnsupportedError("atoms together with a vanishing density are not covered")
    phi = _identity_with_gaps(mu.atom_gaps(), mu.b)
    reward = RewardSpec(phi)
    cost = CostSpec(_HazardFn(mu), finite_interval=(comp.lo, comp.hi))
    return reward, cost


def _x_grid(mu: TargetMeasure, n: int) -> np.ndarray:
    lo = mu.quantile_lower()
    hi = mu.quantile_upper()
    xs = set(np.linspace(lo, hi, n).tolist())
    xs.update(j for j, _ in mu.atoms)
    return np.array(sorted(xs))


def azema_yor_boundary(mu: TargetMeasure, n: int = 4001) -> Boundary:
    """Boundary ``g = Psi^{-1}`` as nodes ``(Psi(x), x)``; flats of ``Psi``
    become jumps of ``g`` and atoms become flat stretches."""
    xs = _x_grid(mu, n)
    top = mu.tail(xs) > 0
    xs = xs[top]
    s = list(mu.psi(xs))
    g = list(xs)
    for j, _ in mu.atoms:
        if mu.tail_open(j) > 0:
            s.append(float(mu.psi(j, right=True)))
            g.append(j)
    order = np.lexsort((np.array(g), np.array(s)))
    s_arr, g_arr = np.array(s)[order], np.array(g)[order]
    keep_s, keep_g = [s_arr[0]], [g_arr[0]]
    for si, gi in zip(s_arr[1:], g_arr[1:]):
        if si == keep_s[-1] and len(keep_s) > 1 and keep_s[-2] == si:
            keep_g[-1] = gi  # at most two nodes per abscissa
        else:
            keep_s.append(si)
            keep_g.append(gi)
    if keep_s[0] > 0.0:
        keep_s.insert(0, 0.0)
        keep_g.insert(0, mu.a)
    b = mu.b
    if math.isfinite(b):
        # S cannot pass b in continuous time, but a discretised path can
        # overshoot; g(s) = s beyond b stops it at once
        if keep_s[-1] < b:
            keep_s.append(b)
            keep_g.append(b)
        far = b + 1e3 * max(1.0, b - mu.a)
        keep_s.append(far)
        keep_g.append(far)
    return Boundary(np.array(keep_s), np.array(keep_g), meta={"kind": "azema_yor"})


def meilijson_value(mu: TargetMeasure, c: float, n: int = 4001) -> ValueFunctionH:
    """``H`` with ``H'(x) = 2c (x - Psi^{-1}(x))`` on ``[a, b]``, ``H(a) = 0``."""
    if not c > 0:
        raise ArgumentError("cost must be a positive constant")
    a = mu.quantile_lower()
    top = mu.b if math.isfinite(mu.b) else float(mu.psi(mu.quantile_upper()))
    if top <= a:
        x = np.array([a, a + 1.0])
        return ValueFunctionH(x, np.zeros(2), np.zeros(2), float(c), float(a))
    x = np.unique(np.concatenate([np.linspace(a, top, n), [0.0] if a < 0.0 < top else []]))
    s = np.clip(x, 0.0, None)
    inv = np.full(x.shape, a)
    ok = (s > 0) & ((s < mu.b) | (mu.atom_at(mu.b) > 0))
    inv[ok] = mu.psi_inverse(s[ok])
    # s = b without an atom there: the inverse tends to b
    inv[(s >= mu.b) & ~ok] = mu.b
    dH = 2.0 * c * (x - inv)
    if np.any(dH < -1e-12):
        raise InconsistentMeasureError("H' is negative: the inverse barycentre exceeds x", x=float(x[np.argmin(dH)]))
    dH = np.maximum(dH, 0.0)
    H = integrate.cumulative_trapezoid(dH, x, initial=0.0)
    return ValueFunctionH(x, H, dH, float(c), float(top))


class _MonotoneSpline(Fn):
    def __init__(self, x, y, breakpoints=()):
        self._f = interpolate.PchipInterpolator(x, y, extrapolate=False)
        self._d = self._f.derivative()
        self.lo, self.hi = float(x[0]), float(x[-1])
        self.vlo, self.vhi = float(y[0]), float(y[-1])
        self.breakpoints = tuple(breakpoints)

    def _eval(self, x):
        v = self._f(np.clip(x, self.lo, self.hi))
        return np.where(x < self.lo, self.vlo, np.where(x > self.hi, self.vhi, v))

    def _deriv(self, x):
        d = self._d(np.clip(x, self.lo, self.hi))
        return np.where((x < self.lo) | (x >= self.hi), 0.0, np.maximum(d, 0.0))


def meilijson_reward(mu: TargetMeasure, c: float, n: int = 4001) -> RewardSpec:
    """``phi = H - (H')^2 / (4c)`` for the value function ``H`` of :func:`meilijson_value`."""
    H = meilijson_value(mu, c, n)
    phi = H.H - H.dH**2 / (4.0 * c)
    phi = np.maximum.accumulate(phi)  # trapezoid noise only; phi is non-decreasing
    if np.ptp(phi) <= 1e-12 * max(1.0, np.max(np.abs(phi))):
        return RewardSpec(Constant(float(phi[0])))
    return RewardSpec(_MonotoneSpline(H.x, phi, breakpoints=(H.x[0], H.x[-1])))


# --------------------------------------------------------------------------- #
# Validation
# --------------------------------------------------------------------------- #


def _density_grid(mu: TargetMeasure, n: int) -> np.ndarray:
    comp = mu.component
    lo = comp.lo if math.isfinite(comp.lo) else mu.quantile_lower()
    hi = comp.hi if math.isfinite(comp.hi) else mu.quantile_upper()
    u = np.linspace(lo, hi, n)[1:-1]
    u = u[mu.density(u) > 0]
    if mu.atoms:
        u = u[~np.isin(u, mu._aj)]
    return u


def _dyadic_increments(mu: TargetMeasure, h: Callable, x0: float) -> tuple[np.ndarray, bool]:
    """Integrals of ``h dmu`` over ``[x0 2^k, x0 2^{k+1})`` up to the
    truncation quantile; second value tells whether the support ended."""
    x_end = mu.quantile_upper()
    incs = []
    ended = False
    k = 0
    while k < 200:
        u, v = x0 * 2.0**k, x0 * 2.0 ** (k + 1)
        if u >= mu.b:
            ended = True
            break
        v_eff = min(v, mu.b)
        val = 0.0
        if mu.component is not None:
            val += mu.weight * integrate.quad(lambda y: h(y) * mu.component.pdf(y), u, v_eff, limit=200)[0]
        val += sum(p * h(j) for j, p in mu.atoms if u <= j < v)
        incs.append(val)
        if v >= x_end and not math.isfinite(mu.b):
            break
        k += 1
    return np.array(incs), ended


def _tail_converges(incs: np.ndarray, ended: bool) -> bool:
    """Dyadic-block rule: summable when the blocks stop (compact support),
    vanish, decay geometrically (ratio <= 0.9) or decay like ``k^-(1+d)``
    with local log-log slope <= -1.5 over the second half of the blocks."""
    if ended or incs.size == 0:
        return True
    tail = incs[incs.size // 2 :]
    if np.all(tail == 0):
        return True
    if tail.size >= 2 and np.all(tail[1:] <= 0.9 * tail[:-1]):
        return True
    k = np.arange(incs.size // 2, incs.size) + 1.0
    pos = tail > 0
    if pos.sum() < 3:
        return True
    slope = np.polyfit(np.log(k[pos]), np.log(tail[pos]), 1)[0]
    return bool(slope <= -1.5)


def loglogl_check(mu: TargetMeasure) -> bool:
    """Numeric test of ``int_1^inf x log x dmu(x) < inf``."""
    incs, ended = _dyadic_increments(mu, lambda y: y * math.log(y) if y > 1 else 0.0, 1.0)
    return _tail_converges(incs, ended)


def validate_pair(mu: TargetMeasure, reward: RewardSpec, cost: CostSpec, n: int = 2001) -> dict:
    """Check ``phi'(Psi(u)) / (2 c(u)) = mu([u, inf)) / f(u)`` on a grid.

    Returns the JSON report with keys ``cond_pair_max_violation``,
    ``cond_pair_phi_integral`` and ``loglogl`` plus diagnostics.  The
    violation is ``|c(u) - c_implied(u)| / c_implied(u)``.
    """
    if not mu.has_density:
        return {
            "cond_pair_max_violation": None,
            "cond_pair_phi_integral": None,
            "loglogl": loglogl_check(mu),
            "reason": "no density",
        }
    u = _density_grid(mu, n)
    psi = mu.psi(u)
    implied = np.asarray(reward.derivative(psi), dtype=float) * mu.density(u) / (2.0 * mu.tail(u))
    actual = np.asarray(cost(u), dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        rel = np.where(implied > 0, np.abs(actual - implied) / implied, np.where(actual == 0, 0.0, np.inf))
    worst = int(np.argmax(rel))

    # int phi(Psi(x)) dmu: body by quadrature, tail judged by the dyadic rule
    body = 0.0
    lo = mu.component.lo if math.isfinite(mu.component.lo) else mu.quantile_lower()
    hi = mu.component.hi if math.isfinite(mu.component.hi) else mu.quantile_upper()
    integrand = lambda y: float(reward(float(mu.psi(y)))) * float(mu.density(y))
    edges = [lo, *[p for p in mu.component.breakpoints if lo < p < hi], hi]
    for e0, e1 in zip(edges[:-1], edges[1:]):
        body += integrate.quad(integrand, e0, e1, limit=400)[0]
    body += sum(p * float(reward(float(mu.psi(j)))) for j, p in mu.atoms if mu.tail(j) > 0)
    finite = True
    if not math.isfinite(mu.b):
        incs, ended = _dyadic_increments(mu, lambda y: abs(float(reward(float(mu.psi(y))))), max(1.0, hi / 2.0**20))
        finite = _tail_converges(incs, ended)
    return {
        "cond_pair_max_violation": float(rel[worst]),
        "cond_pair_phi_integral": float(body) if finite else None,
        "cond_pair_phi_divergent": not finite,
        "loglogl": loglogl_check(mu),
        "worst_u": float(u[worst]),
        "n_grid": int(u.size),
        "truncation": {"lo": float(lo), "hi": float(hi), "quantile": TAIL_QUANTILE},
    }
