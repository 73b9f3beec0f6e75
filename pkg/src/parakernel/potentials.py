"""Radial potentials W(r).

Potentials compose with ordinary arithmetic, so the coupling family used for
critical operators reads ``w1 - c * (w2 - q)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


class Potential:
    """Base class; subclasses implement ``__call__`` and ``support_radius``."""

    def __call__(self, r):
        raise NotImplementedError

    @property
    def support_radius(self):
        """Radius beyond which W vanishes identically (``inf`` if none)."""
        return math.inf

    def abs(self):
        return Absolute(self)

    def __add__(self, other):
        return Sum((self, other))

    def __sub__(self, other):
        return Sum((self, Scaled(-1.0, other)))

    def __neg__(self):
        return Scaled(-1.0, self)

    def __mul__(self, c):
        return Scaled(float(c), self)

    __rmul__ = __mul__


@dataclass(frozen=True)
class Zero(Potential):
    def __call__(self, r):
        return np.zeros(np.shape(r))

    @property
    def support_radius(self):
        return 0.0


@dataclass(frozen=True)
class Bump(Potential):
    """Smooth bump supported on [center - width, center + width] with peak ``amplitude``.

    Shape: ``amplitude * exp(1 - 1/(1 - u^2))``, ``u = (r - center)/width``.
    """

    center: float
    width: float
    amplitude: float = 1.0

    def __post_init__(self):
        if self.width <= 0:
            raise ValueError("bump width must be positive")

    def __call__(self, r):
        u = (np.asarray(r, dtype=float) - self.center) / self.width
        inside = np.abs(u) < 1.0
        u2 = np.where(inside, u * u, 0.0)
        return np.where(inside, self.amplitude * np.exp(1.0 - 1.0 / (1.0 - u2)), 0.0)

    @property
    def support_radius(self):
        return self.center + self.width


@dataclass(frozen=True)
class PowerDecay(Potential):
    """W(r) = amplitude * (2 + r)^(-exponent)."""

    amplitude: float
    exponent: float

    def __call__(self, r):
        return self.amplitude * (2.0 + np.asarray(r, dtype=float)) ** (-self.exponent)


@dataclass(frozen=True)
class Sum(Potential):
    terms: tuple

    def __call__(self, r):
        out = np.zeros(np.shape(r))
        for t in self.terms:
            out = out + t(r)
        return out

    @property
    def support_radius(self):
        return max((t.support_radius for t in self.terms), default=0.0)


@dataclass(frozen=True)
class Scaled(Potential):
    coupling: float
    inner: Potential

    def __call__(self, r):
        return self.coupling * self.inner(r)

    @property
    def support_radius(self):
        return 0.0 if self.coupling == 0 else self.inner.support_radius


@dataclass(frozen=True)
class Absolute(Potential):
    inner: Potential

    def __call__(self, r):
        return np.abs(self.inner(r))

    @property
    def support_radius(self):
        return self.inner.support_radius


@dataclass(frozen=True)
class Tabulated(Potential):
    """Potential given by samples, linearly interpolated in log r; zero outside."""

    r: np.ndarray
    values: np.ndarray

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        v = np.interp(np.log(np.maximum(r, self.r[0])), np.log(self.r), self.values)
        return np.where(r <= self.r[-1], v, 0.0)

    @property
    def support_radius(self):
        return float(self.r[-1])


def build(kind, center=None, width=None, amplitude=1.0, exponent=None, coupling=1.0, terms=()):
    """Construct a potential from config fields (``terms`` already resolved)."""
    if kind == "bump":
        base = Bump(center, width, amplitude)
    elif kind == "power":
        base = PowerDecay(amplitude, exponent)
    elif kind == "zero":
        base = Zero()
    elif kind == "sum":
        base = Sum(tuple(terms))
    else:
        raise ValueError(f"unknown potential kind '{kind}'")
    return base if coupling == 1.0 else Scaled(coupling, base)
