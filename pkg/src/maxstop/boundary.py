"""Monotone piecewise-linear stopping boundaries ``s -> g(s)``."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import ArgumentError, ConfigError, SimulationError

__all__ = ["Boundary"]


@dataclass(frozen=True, eq=False)
class Boundary:
    """Boundary stored as nodes ``(s_i, g_i)``.

    ``s`` is non-decreasing; a repeated abscissa encodes a jump with the left
    value first.  Evaluation is right-continuous and linear between nodes.
    Below ``clip_level`` (when finite) the boundary equals ``floor``.
    """

    s: np.ndarray
    g: np.ndarray
    clip_level: float = -math.inf
    floor: float = -math.inf
    flags: tuple[str, ...] = ()
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        s = np.asarray(self.s, dtype=float)
        g = np.asarray(self.g, dtype=float)
        if s.ndim != 1 or s.shape != g.shape or s.size < 2:
            raise ArgumentError("boundary needs matching 1-d node arrays with >= 2 nodes")
        ds = np.diff(s)
        if np.any(ds < 0):
            raise ArgumentError("boundary abscissae must be non-decreasing")
        dup = np.flatnonzero(ds == 0)
        if np.any(np.diff(dup) == 1):
            raise ArgumentError("at most two nodes may share an abscissa")
        object.__setattr__(self, "s", s)
        object.__setattr__(self, "g", g)
        object.__setattr__(self, "flags", tuple(self.flags))

    # -- construction ----------------------------------------------------------

    @classmethod
    def from_function(cls, fn: Callable, s: Sequence[float], **kw) -> "Boundary":
        s = np.asarray(s, dtype=float)
        return cls(s, np.asarray(fn(s), dtype=float), **kw)

    @classmethod
    def linear(cls, slope: float, intercept: float, s_lo: float, s_hi: float, n: int = 2) -> "Boundary":
        s = np.linspace(s_lo, s_hi, n)
        return cls(s, intercept + slope * s)

    # -- evaluation ------------------------------------------------------------

    @property
    def s_lo(self) -> float:
        return float(self.s[0])

    @property
    def s_hi(self) -> float:
        return float(self.s[-1])

    @property
    def jumps(self) -> list[tuple[float, float, float]]:
        """``(s, left value, right value)`` for every jump."""
        idx = np.flatnonzero(np.diff(self.s) == 0)
        return [(float(self.s[i]), float(self.g[i]), float(self.g[i + 1])) for i in idx]

    def defined(self, s) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        lo = self.s_lo if not math.isfinite(self.clip_level) else -math.inf
        return (s >= lo) & (s <= self.s_hi)

    def _eval(self, s: np.ndarray, side: str) -> np.ndarray:
        if np.any(~self.defined(s)):
            bad = s[~self.defined(s)]
            raise SimulationError(
                f"boundary undefined at s={bad[0]!r} (defined on [{self.s_lo}, {self.s_hi}])",
                n_outside=int(bad.size),
            )
        nodes, vals = self.s, self.g
        i = np.searchsorted(nodes, s, side=side) - (1 if side == "right" else 0)
        if side == "left":
            # left limit: use the segment (nodes[i-1], nodes[i]] ending at s
            i = np.clip(i - 1, 0, nodes.size - 2)
        else:
            i = np.clip(i, 0, nodes.size - 2)
        s0, s1 = nodes[i], nodes[i + 1]
        g0, g1 = vals[i], vals[i + 1]
        width = s1 - s0
        with np.errstate(invalid="ignore", divide="ignore"):
            w = np.where(width > 0, (s - s0) / np.where(width > 0, width, 1.0), 1.0)
        out = g0 + np.clip(w, 0.0, 1.0) * (g1 - g0)
        if math.isfinite(self.clip_level):
            out = np.where(s < self.clip_level, self.floor, out)
            below = s < self.s_lo
            out = np.where(below, self.floor, out)
        return out

    def __call__(self, s):
        arr = np.asarray(s, dtype=float)
        out = self._eval(np.atleast_1d(arr), "right")
        return float(out[0]) if arr.ndim == 0 else out.reshape(arr.shape)

    def left_limit(self, s):
        arr = np.asarray(s, dtype=float)
        out = self._eval(np.atleast_1d(arr), "left")
        return float(out[0]) if arr.ndim == 0 else out.reshape(arr.shape)

    # -- diagnostics ------------------------------------------------------------

    def is_monotone(self, tol: float = 1e-12) -> bool:
        return bool(np.all(np.diff(self.g) >= -tol))

    def flat_intervals(self, tol: float = 1e-9, min_len: float = 0.0) -> list[tuple[float, float]]:
        """Maximal runs of consecutive nodes over which ``g`` is constant."""
        out = []
        start = None
        for i in range(self.s.size - 1):
            flat = abs(self.g[i + 1] - self.g[i]) <= tol and self.s[i + 1] > self.s[i]
            if flat and start is None:
                start = self.s[i]
            elif not flat and start is not None:
                out.append((float(start), float(self.s[i])))
                start = None
        if start is not None:
            out.append((float(start), float(self.s[-1])))
        return [iv for iv in out if iv[1] - iv[0] > min_len]

    def sup_distance(self, other: "Boundary | Callable", s: Iterable[float]) -> float:
        s = np.asarray(list(s), dtype=float)
        return float(np.max(np.abs(self(s) - np.asarray(other(s), dtype=float))))

    # -- CSV ----------------------------------------------------------------------

    def to_csv(self, path: str | Path | None = None) -> str:
        """Write ``s,g,side``; ``side`` is ``left``/``right`` on jump rows."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["s", "g", "side"])
        jump_rows = set()
        for i in np.flatnonzero(np.diff(self.s) == 0):
            jump_rows.update({int(i), int(i) + 1})
        for i, (s, g) in enumerate(zip(self.s, self.g)):
            side = ""
            if i in jump_rows:
                side = "left" if i + 1 < self.s.size and self.s[i + 1] == s else "right"
            w.writerow([repr(float(s)), repr(float(g)), side])
        text = buf.getvalue()
        if path is not None:
            Path(path).write_text(text, encoding="utf-8")
        return text

    @classmethod
    def from_csv(cls, source: str | Path) -> "Boundary":
        text = Path(source).read_text(encoding="utf-8") if _looks_like_path(source) else str(source)
        rows = list(csv.reader(io.StringIO(text)))
        if not rows or [h.strip() for h in rows[0]] != ["s", "g", "side"]:
            raise ConfigError("boundary CSV must start with header 's,g,side'")
        s, g = [], []
        for r in rows[1:]:
            if not r:
                continue
            s.append(float(r[0]))
            g.append(float(r[1]))
        return cls(np.array(s), np.array(g))


def _looks_like_path(source) -> bool:
    if isinstance(source, Path):
        return True
    return "\n" not in str(source) and Path(str(source)).exists()
