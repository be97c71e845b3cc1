"""Closed convex sets with closed-form metric projections."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def _vec(x) -> np.ndarray:
    return np.asarray(x, dtype=np.float64)


class ConvexSet:
    """Base class; subclasses implement :meth:`project`."""

    dim: int | None = None

    def _check(self, x: np.ndarray) -> None:
        if self.dim is not None and x.shape != (self.dim,):
            raise ValueError(f"dimension mismatch: set lives in R^{self.dim}, got shape {x.shape}")

    def project(self, x) -> np.ndarray:
        raise NotImplementedError

    def contains(self, x, tol: float = 0.0) -> bool:
        x = _vec(x)
        return bool(np.linalg.norm(self.project(x) - x) <= tol)


@dataclass(frozen=True, eq=False)
class Box(ConvexSet):
    """``{x : lo <= x <= hi}``; bounds may be scalars or vectors."""

    lo: float | np.ndarray
    hi: float | np.ndarray

    def __post_init__(self):
        lo, hi = _vec(self.lo), _vec(self.hi)
        if np.any(lo > hi):
            raise ValueError("box needs lo <= hi componentwise")
        if lo.ndim or hi.ndim:
            n = max(lo.size if lo.ndim else 0, hi.size if hi.ndim else 0)
            object.__setattr__(self, "dim", n)

    def project(self, x) -> np.ndarray:
        x = _vec(x)
        self._check(x)
        return np.clip(x, self.lo, self.hi)


@dataclass(frozen=True, eq=False)
class NonNegative(ConvexSet):
    """The nonnegative orthant."""

    def project(self, x) -> np.ndarray:
        return np.maximum(_vec(x), 0.0)


@dataclass(frozen=True, eq=False)
class Singleton(ConvexSet):
    point: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "point", _vec(self.point).copy())
        object.__setattr__(self, "dim", self.point.size)

    def project(self, x) -> np.ndarray:
        self._check(_vec(x))
        return self.point.copy()


@dataclass(frozen=True, eq=False)
class HalfSpace(ConvexSet):
    """``{z : <normal, z> <= offset}``."""

    normal: np.ndarray
    offset: float

    def __post_init__(self):
        a = _vec(self.normal).copy()
        nrm2 = float(a @ a)
        if nrm2 == 0.0:
            raise ValueError("half-space normal must be nonzero")
        object.__setattr__(self, "normal", a)
        object.__setattr__(self, "dim", a.size)
        object.__setattr__(self, "_norm2", nrm2)

    def project(self, x) -> np.ndarray:
        x = _vec(x)
        self._check(x)
        excess = float(self.normal @ x) - self.offset
        # points already projected sit within rounding of the boundary
        slack = 8 * np.finfo(float).eps * (abs(self.offset) + float(np.abs(self.normal) @ np.abs(x)))
        if excess <= slack:
            return x.copy()
        return x - (excess / self._norm2) * self.normal


@dataclass(frozen=True, eq=False)
class WholeSpace(ConvexSet):
    def project(self, x) -> np.ndarray:
        return _vec(x).copy()


def project(S: ConvexSet, x) -> np.ndarray:
    """Nearest point of ``S`` to ``x`` in the Euclidean norm."""
    return S.project(x)


def relaxed_project(S: ConvexSet, x, mu: float) -> np.ndarray:
    """``(1 - mu) x + mu P_S(x)`` for ``0 < mu < 2``."""
    if not 0.0 < mu < 2.0:
        raise ValueError(f"relaxation mu={mu} must lie in (0, 2)")
    px = S.project(x)
    if mu == 1.0:
        return px
    x = _vec(x)
    return (1.0 - mu) * x + mu * px


def parse_set(text: str, dim: int | None = None) -> ConvexSet:
    """Parse a CLI constraint description: ``box:LO,HI``, ``nonneg`` or ``none``."""
    text = text.strip().lower()
    if text in ("none", "whole", "whole_space"):
        return WholeSpace()
    if text in ("nonneg", "nonnegative"):
        return NonNegative()
    if text.startswith("box"):
        lo, hi = 0.0, 1.0
        if ":" in text:
            lo, hi = (float(v) for v in text.split(":", 1)[1].split(","))
        return Box(lo, hi)
    raise ValueError(f"unknown constraint set {text!r}")
