"""Coefficient and reward functions built from config presets.

Every function object here is a vectorised callable ``f(x)`` accepting a
float or an ndarray, and exposes ``derivative`` (a callable for the
right-continuous derivative) plus ``breakpoints`` (points where the value or
the derivative may be discontinuous).

Expressions use a small arithmetic grammar over the variable ``x``::

    expr := number | x | pi | e | inf
          | expr (+ | - | * | / | **) expr | -expr
          | exp(expr) | log(expr) | abs(expr) | sqrt(expr)
          | pow(expr, expr) | min(expr, expr) | max(expr, expr)

Derivatives of expressions are built symbolically from the same parse tree.
"""

from __future__ import annotations

import ast
import math
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigError

__all__ = [
    "Fn",
    "Constant",
    "Affine",
    "Power",
    "Table",
    "Step",
    "Expression",
    "Piecewise",
    "Scaled",
    "from_config",
    "to_config",
]


def _as_array(x):
    return np.asarray(x, dtype=float)


def _like(x, out):
    out = np.asarray(out, dtype=float)
    if np.ndim(x) == 0:
        return float(out) if out.ndim == 0 else float(out.reshape(-1)[0])
    return np.broadcast_to(out, np.shape(x)).astype(float, copy=True)


class Fn:
    """Base class: subclasses implement ``_eval`` and ``_deriv``."""

    breakpoints: tuple[float, ...] = ()

    def __call__(self, x):
        return _like(x, self._eval(_as_array(x)))

    def derivative(self, x):
        return _like(x, self._deriv(_as_array(x)))

    def _eval(self, x):  # pragma: no cover - abstract
        raise NotImplementedError

    def _deriv(self, x):  # pragma: no cover - abstract
        raise NotImplementedError

    @property
    def is_zero(self) -> bool:
        return False

    @property
    def constant_value(self) -> float | None:
        return None


class Constant(Fn):
    def __init__(self, value: float):
        self.value = float(value)

    def _eval(self, x):
        return np.full(x.shape, self.value)

    def _deriv(self, x):
        return np.zeros(x.shape)

    @property
    def is_zero(self) -> bool:
        return self.value == 0.0

    @property
    def constant_value(self) -> float | None:
        return self.value

    def __repr__(self):
        return f"Constant({self.value})"


class Affine(Fn):
    """``intercept + slope * x``."""

    def __init__(self, slope: float, intercept: float = 0.0):
        self.slope = float(slope)
        self.intercept = float(intercept)

    def _eval(self, x):
        return self.intercept + self.slope * x

    def _deriv(self, x):
        return np.full(x.shape, self.slope)

    @property
    def is_zero(self) -> bool:
        return self.slope == 0.0 and self.intercept == 0.0

    @property
    def constant_value(self) -> float | None:
        return self.intercept if self.slope == 0.0 else None

    def __repr__(self):
        return f"Affine({self.slope}, {self.intercept})"


class Power(Fn):
    """``coef * (x - shift) ** exponent`` on ``x >= shift``.

    ``0 ** 0`` evaluates to 1, so ``Power(c, 0)`` is the constant ``c``.
    """

    def __init__(self, coef: float, exponent: float, shift: float = 0.0):
        self.coef = float(coef)
        self.exponent = float(exponent)
        self.shift = float(shift)

    def _eval(self, x):
        with np.errstate(divide="ignore", invalid="ignore"):
            return self.coef * np.power(x - self.shift, self.exponent)

    def _deriv(self, x):
        if self.exponent == 0.0:
            return np.zeros(x.shape)
        with np.errstate(divide="ignore", invalid="ignore"):
            return self.coef * self.exponent * np.power(x - self.shift, self.exponent - 1.0)

    @property
    def constant_value(self) -> float | None:
        return self.coef if self.exponent == 0.0 else None

    def __repr__(self):
        return f"Power({self.coef}, {self.exponent}, shift={self.shift})"


class Table(Fn):
    """Piecewise-linear interpolation, constant beyond the end nodes."""

    def __init__(self, xs: Sequence[float], ys: Sequence[float]):
        self.xs = np.asarray(xs, dtype=float)
        self.ys = np.asarray(ys, dtype=float)
        if self.xs.ndim != 1 or self.xs.shape != self.ys.shape or self.xs.size < 2:
            raise ConfigError("table needs matching x/y lists with at least two nodes")
        if np.any(np.diff(self.xs) <= 0):
            raise ConfigError("table x values must be strictly increasing")
        self.slopes = np.diff(self.ys) / np.diff(self.xs)
        self.breakpoints = tuple(self.xs)

    def _eval(self, x):
        return np.interp(x, self.xs, self.ys)

    def _deriv(self, x):
        idx = np.searchsorted(self.xs, x, side="right") - 1
        inside = (idx >= 0) & (idx < self.slopes.size)
        out = np.zeros(x.shape)
        out[inside] = self.slopes[idx[inside]]
        return out


class Step(Fn):
    """Right-continuous step function: ``values[i]`` on ``[breaks[i-1], breaks[i])``."""

    def __init__(self, breaks: Sequence[float], values: Sequence[float]):
        self.breaks = np.asarray(breaks, dtype=float)
        self.values = np.asarray(values, dtype=float)
        if self.values.size != self.breaks.size + 1:
            raise ConfigError("step needs len(values) == len(breaks) + 1")
        if np.any(np.diff(self.breaks) <= 0):
            raise ConfigError("step breaks must be strictly increasing")
        self.breakpoints = tuple(self.breaks)

    def _eval(self, x):
        return self.values[np.searchsorted(self.breaks, x, side="right")]

    def _deriv(self, x):
        return np.zeros(x.shape)


class Scaled(Fn):
    """``factor * inner(x)``."""

    def __init__(self, inner: Fn, factor: float):
        self.inner = inner
        self.factor = float(factor)
        self.breakpoints = inner.breakpoints

    def _eval(self, x):
        return self.factor * self.inner._eval(x)

    def _deriv(self, x):
        return self.factor * self.inner._deriv(x)

    @property
    def is_zero(self) -> bool:
        return self.factor == 0.0 or self.inner.is_zero


class Piecewise(Fn):
    """Right-continuous piecewise function: ``pieces[i]`` on ``[breaks[i-1], breaks[i])``."""

    def __init__(self, breaks: Sequence[float], pieces: Sequence[Fn]):
        self.breaks = np.asarray(breaks, dtype=float)
        self.pieces = list(pieces)
        if len(self.pieces) != self.breaks.size + 1:
            raise ConfigError("piecewise needs len(pieces) == len(breaks) + 1")
        if np.any(np.diff(self.breaks) <= 0):
            raise ConfigError("piecewise breaks must be strictly increasing")
        inner = [b for p in self.pieces for b in p.breakpoints]
        self.breakpoints = tuple(sorted(set(self.breaks.tolist()) | set(inner)))

    def _select(self, x, attr):
        idx = np.searchsorted(self.breaks, x, side="right")
        out = np.empty(x.shape)
        for i, piece in enumerate(self.pieces):
            mask = idx == i
            if np.any(mask):
                out[mask] = getattr(piece, attr)(x[mask])
        return out

    def _eval(self, x):
        return self._select(x, "_eval")

    def _deriv(self, x):
        return self._select(x, "_deriv")

    def jumps(self) -> list[tuple[float, float]]:
        """(point, jump size) for every break where the value is discontinuous."""
        out = []
        for i, b in enumerate(self.breaks):
            left = float(self.pieces[i]._eval(np.array([b]))[0])
            right = float(self.pieces[i + 1]._eval(np.array([b]))[0])
            if not math.isclose(left, right, rel_tol=1e-12, abs_tol=1e-12):
                out.append((float(b), right - left))
        return out


# --------------------------------------------------------------------------- #
# Expression grammar
# --------------------------------------------------------------------------- #

_Pair = tuple[Callable[[np.ndarray], np.ndarray], Callable[[np.ndarray], np.ndarray]]

_NAMES = {"pi": math.pi, "e": math.e, "inf": math.inf}
_UNARY = {"exp", "log", "abs", "sqrt"}
_BINARY = {"pow", "min", "max"}


def _const(v: float) -> _Pair:
    return (lambda x: np.full(x.shape, v)), (lambda x: np.zeros(x.shape))


def _compile(node: ast.AST) -> _Pair:
    if isinstance(node, ast.Expression):
        return _compile(node.body)
    if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)):
        return _const(float(node.value))
    if isinstance(node, ast.Name):
        if node.id == "x":
            return (lambda x: x), (lambda x: np.ones(x.shape))
        if node.id in _NAMES:
            return _const(_NAMES[node.id])
        raise ConfigError(f"unknown name {node.id!r} in expression")
    if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
        f, df = _compile(node.operand)
        if isinstance(node.op, ast.UAdd):
            return f, df
        return (lambda x: -f(x)), (lambda x: -df(x))
    if isinstance(node, ast.BinOp):
        return _binop(node.op, _compile(node.left), _compile(node.right))
    if isinstance(node, ast.Call) and isinstance(node.func, ast.Name) and not node.keywords:
        name = node.func.id
        args = [_compile(a) for a in node.args]
        if name in _UNARY and len(args) == 1:
            return _unary(name, args[0])
        if name in _BINARY and len(args) == 2:
            if name == "pow":
                return _binop(ast.Pow(), args[0], args[1])
            return _minmax(name, args[0], args[1])
        raise ConfigError(f"bad call {name}() with {len(args)} argument(s)")
    raise ConfigError(f"unsupported syntax in expression: {ast.dump(node)}")


def _binop(op: ast.operator, a: _Pair, b: _Pair) -> _Pair:
    f, df = a
    g, dg = b
    if isinstance(op, ast.Add):
        return (lambda x: f(x) + g(x)), (lambda x: df(x) + dg(x))
    if isinstance(op, ast.Sub):
        return (lambda x: f(x) - g(x)), (lambda x: df(x) - dg(x))
    if isinstance(op, ast.Mult):
        return (lambda x: f(x) * g(x)), (lambda x: df(x) * g(x) + f(x) * dg(x))
    if isinstance(op, ast.Div):
        return (lambda x: f(x) / g(x)), (lambda x: (df(x) * g(x) - f(x) * dg(x)) / g(x) ** 2)
    if isinstance(op, ast.Pow):

        def d_pow(x):
            u, v, du, dv = f(x), g(x), df(x), dg(x)
            # constant exponent: v u^(v-1) u'; general case adds u^v log(u) v'
            out = np.where(du == 0.0, 0.0, v * np.power(u, v - 1.0) * du)
            general = dv != 0.0
            if np.any(general):
                out = out + np.where(general, np.power(u, v) * np.log(np.where(general, u, 1.0)) * dv, 0.0)
            return out

        return (lambda x: np.power(f(x), g(x))), d_pow
    raise ConfigError(f"unsupported operator {type(op).__name__}")


def _unary(name: str, a: _Pair) -> _Pair:
    f, df = a
    if name == "exp":
        return (lambda x: np.exp(f(x))), (lambda x: np.exp(f(x)) * df(x))
    if name == "log":
        return (lambda x: np.log(f(x))), (lambda x: df(x) / f(x))
    if name == "sqrt":
        return (lambda x: np.sqrt(f(x))), (lambda x: df(x) / (2.0 * np.sqrt(f(x))))

    def d_abs(x):
        u, du = f(x), df(x)
        # right derivative at u == 0
        return np.where(u > 0, du, np.where(u < 0, -du, np.abs(du)))

    return (lambda x: np.abs(f(x))), d_abs


def _minmax(name: str, a: _Pair, b: _Pair) -> _Pair:
    f, df = a
    g, dg = b
    pick, tie = (np.minimum, np.minimum) if name == "min" else (np.maximum, np.maximum)

    def d(x):
        u, v, du, dv = f(x), g(x), df(x), dg(x)
        first = (u < v) if name == "min" else (u > v)
        second = (u > v) if name == "min" else (u < v)
        return np.where(first, du, np.where(second, dv, tie(du, dv)))

    return (lambda x: pick(f(x), g(x))), d


class Expression(Fn):
    def __init__(self, source: str, breakpoints: Sequence[float] = ()):
        self.source = str(source)
        try:
            tree = ast.parse(self.source, mode="eval")
        except SyntaxError as exc:
            raise ConfigError(f"cannot parse expression {self.source!r}: {exc.msg}") from exc
        self._f, self._df = _compile(tree)
        self.breakpoints = tuple(float(b) for b in breakpoints)

    def _eval(self, x):
        with np.errstate(all="ignore"):
            return np.asarray(self._f(x), dtype=float) * np.ones(x.shape)

    def _deriv(self, x):
        with np.errstate(all="ignore"):
            return np.asarray(self._df(x), dtype=float) * np.ones(x.shape)

    def __repr__(self):
        return f"Expression({self.source!r})"


# --------------------------------------------------------------------------- #
# Config presets
# --------------------------------------------------------------------------- #


def from_config(spec) -> Fn:
    """Build a function from a config value.

    Accepts a bare number, an expression string, or a mapping with ``kind``
    in {constant, affine, power, table, step, expr, piecewise}.
    """
    if isinstance(spec, Fn):
        return spec
    if isinstance(spec, (int, float)) and not isinstance(spec, bool):
        return Constant(spec)
    if isinstance(spec, str):
        return Expression(spec)
    if not isinstance(spec, dict) or "kind" not in spec:
        raise ConfigError(f"cannot build a function from {spec!r}")
    kind = spec["kind"]
    try:
        if kind == "constant":
            return Constant(spec["value"])
        if kind == "affine":
            return Affine(spec.get("slope", 0.0), spec.get("intercept", 0.0))
        if kind == "power":
            return Power(spec.get("coef", 1.0), spec["exponent"], spec.get("shift", 0.0))
        if kind == "table":
            return Table(spec["x"], spec["y"])
        if kind == "step":
            return Step(spec["breaks"], spec["values"])
        if kind == "expr":
            return Expression(spec["expr"], spec.get("breakpoints", ()))
        if kind == "piecewise":
            return Piecewise(spec["breaks"], [from_config(p) for p in spec["pieces"]])
    except KeyError as exc:
        raise ConfigError(f"function preset {kind!r} is missing key {exc.args[0]!r}") from exc
    raise ConfigError(f"unknown function kind {kind!r}")


def to_config(fn: Fn):
    """Inverse of :func:`from_config` for the serialisable function kinds."""
    if isinstance(fn, Constant):
        return {"kind": "constant", "value": fn.value}
    if isinstance(fn, Affine):
        return {"kind": "affine", "slope": fn.slope, "intercept": fn.intercept}
    if isinstance(fn, Power):
        return {"kind": "power", "coef": fn.coef, "exponent": fn.exponent, "shift": fn.shift}
    if isinstance(fn, Table):
        return {"kind": "table", "x": fn.xs.tolist(), "y": fn.ys.tolist()}
    if isinstance(fn, Step):
        return {"kind": "step", "breaks": fn.breaks.tolist(), "values": fn.values.tolist()}
    if isinstance(fn, Expression):
        return {"kind": "expr", "expr": fn.source, "breakpoints": list(fn.breakpoints)}
    if isinstance(fn, Piecewise):
        return {"kind": "piecewise", "breaks": fn.breaks.tolist(), "pieces": [to_config(p) for p in fn.pieces]}
    raise ConfigError(f"cannot serialise {type(fn).__name__}")
