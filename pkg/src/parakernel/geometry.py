"""Radially symmetric weighted manifolds reduced to an area density m(r).

A geometry is described by ``m(r)``, the weighted (N-1)-volume of the sphere
of radius r about the pole, so that ``V(r) = int_0^r m``. Everything else
(volume, the reciprocal-volume integrals H and H-hat, parabolicity) is
computed from it by quadrature.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable

import numpy as np

from . import quadrature
from .errors import EvaluationError, UnsupportedGeometryError

DEFAULT_RTOL = 1e-8
DEFAULT_PER_DECADE = 64


def sphere_area(n):
    """Area of the unit sphere S^{n-1} in R^n."""
    return 2.0 * math.pi ** (n / 2) / math.gamma(n / 2)


@dataclass(frozen=True)
class GridFunction:
    """Values on a strictly increasing radial grid."""

    r: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.r, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if r.shape != v.shape or r.ndim != 1:
            raise ValueError("grid and values must be 1-d arrays of equal length")
        if r.size > 1 and np.any(np.diff(r) <= 0):
            raise ValueError("grid must be strictly increasing")
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "values", v)

    def __len__(self):
        return self.r.size

    def at(self, r):
        """Linear interpolation in log r (constant extrapolation)."""
        return np.interp(np.log(np.maximum(r, self.r[0])), np.log(self.r), self.values)


def log_grid(r_min, r_max, per_decade=DEFAULT_PER_DECADE):
    """Log-spaced radii from ``r_min`` to ``r_max`` inclusive."""
    n = max(int(round(math.log10(r_max / r_min) * per_decade)), 1)
    return np.geomspace(r_min, r_max, n + 1)


def _polynomial_blend(beta, b):
    """Coefficients (c3, c4, c5) of r + c3 r^3 + c4 r^4 + c5 r^5 joining r^beta at r=b in C^2."""
    target = np.array([
        b ** beta - b,
        beta * b ** (beta - 1) - 1.0,
        beta * (beta - 1) * b ** (beta - 2),
    ])
    mat = np.array([
        [b ** 3, b ** 4, b ** 5],
        [3 * b ** 2, 4 * b ** 3, 5 * b ** 4],
        [6 * b, 12 * b ** 2, 20 * b ** 3],
    ])
    return np.linalg.solve(mat, target)


@dataclass(frozen=True)
class PowerWarping:
    """psi(r) = r^beta for r >= blend_radius, a C^2 quintic with psi(0)=0, psi'(0)=1, psi''(0)=0 below."""

    beta: float
    blend_radius: float = 1.0

    def __post_init__(self):
        c = _polynomial_blend(self.beta, self.blend_radius)
        object.__setattr__(self, "_c", c)
        r = np.linspace(self.blend_radius * 1e-3, self.blend_radius, 2001)
        if np.any(self._poly(r) <= 0):
            raise ValueError(f"blend for beta={self.beta} is not positive on (0, {self.blend_radius}]")

    def _poly(self, r):
        c3, c4, c5 = self._c
        return r + r ** 3 * (c3 + r * (c4 + r * c5))

    def _dpoly(self, r):
        c3, c4, c5 = self._c
        return 1.0 + r ** 2 * (3 * c3 + r * (4 * c4 + r * 5 * c5))

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        inner = r < self.blend_radius
        safe = np.where(inner, self.blend_radius, r)
        return np.where(inner, self._poly(r), safe ** self.beta)

    def derivative(self, r):
        r = np.asarray(r, dtype=float)
        inner = r < self.blend_radius
        safe = np.where(inner, self.blend_radius, r)
        return np.where(inner, self._dpoly(r), self.beta * safe ** (self.beta - 1))


@dataclass(frozen=True, eq=False)
class RadialGeometry:
    """A radially symmetric weighted manifold.

    Parameters
    ----------
    density : callable
        Area density m(r) > 0, vectorized over numpy arrays.
    dimension : int
        Topological dimension N (near the pole m(r) ~ const * r^(N-1)).
    label : str
        One of flat-plane, half-cylinder, model, log-plane, custom,
        transformed.
    warping : callable, optional
        psi for model manifolds (m = omega_N psi^(N-1)).
    weight : callable, optional
        Radial weight w for weighted planes (m = 2 pi r w).
    remote_ball : callable, optional
        ``remote_ball(abs_x, r)`` approximating V(x, r); required by H-hat.
    log_slope : callable, optional
        m'(r)/m(r); finite differences are used when absent.
    """

    density: Callable
    dimension: int = 2
    label: str = "custom"
    warping: Callable | None = None
    weight: Callable | None = None
    remote_ball: Callable | None = None
    log_slope: Callable | None = None
    quad_rtol: float = DEFAULT_RTOL
    per_decade: int = DEFAULT_PER_DECADE
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.dimension < 2:
            raise ValueError("dimension must be >= 2")

    def m(self, r):
        return np.asarray(self.density(np.asarray(r, dtype=float)), dtype=float)

    def dlogm(self, r):
        r = np.asarray(r, dtype=float)
        if self.log_slope is not None:
            return np.asarray(self.log_slope(r), dtype=float)
        eps = 1e-6 * np.maximum(r, 1e-12)
        return (np.log(self.m(r + eps)) - np.log(self.m(r - eps))) / (2 * eps)

    @cached_property
    def _volume(self):
        return quadrature.Antiderivative(self.m, lo=0.0, rtol=self.quad_rtol * 1e-2)

    @cached_property
    def _h_integral(self):
        return quadrature.Antiderivative(
            lambda s: 2.0 * s / self._volume(s), lo=1.0, rtol=self.quad_rtol * 1e-2
        )

    @cached_property
    def _scale(self):
        return quadrature.Antiderivative(
            lambda s: 1.0 / self.m(s), lo=1e-6, rtol=self.quad_rtol * 1e-2
        )

    def volume(self, r):
        """V(r) = int_0^r m(s) ds."""
        r = np.asarray(r, dtype=float)
        if np.any(r < 0):
            raise ValueError("radius must be nonnegative")
        return self._volume(r)

    def big_h(self, r):
        """H(r) = 1 + (int_1^r 2s/V(s) ds)_+ ."""
        r = np.asarray(r, dtype=float)
        out = np.ones(r.shape)
        far = r > 1.0
        if np.any(far):
            out[far] += self._h_integral(r[far])
        return out

    def scale_integral(self, r0, r1):
        """int_{r0}^{r1} ds / m(s) for r0, r1 >= 1e-6."""
        return self._scale(r1) - self._scale(r0)

    def hat_h(self, abs_y):
        """H-hat(y) = 1 + (int_1^|y| 2s / V(y, s) ds)_+ using the remote-ball envelope."""
        if self.remote_ball is None:
            raise UnsupportedGeometryError(f"geometry '{self.label}' has no remote-ball rule")
        abs_y = np.asarray(abs_y, dtype=float)
        flat = abs_y.ravel()
        out = np.ones(flat.size)
        for i, y in enumerate(flat):
            if y <= 1.0:
                continue
            edges = np.geomspace(1.0, y, max(int(math.log10(y) * 8), 1) + 1)
            val, _ = quadrature.integrate(
                lambda s, y=y: 2.0 * s / self.remote_ball(y, s),
                edges[:-1], edges[1:], rtol=self.quad_rtol,
            )
            out[i] += val.sum()
        return out.reshape(abs_y.shape)

    def with_density(self, density, label, log_slope=None, **params):
        return RadialGeometry(
            density=density,
            dimension=self.dimension,
            label=label,
            remote_ball=None,
            log_slope=log_slope,
            quad_rtol=self.quad_rtol,
            per_decade=self.per_decade,
            params=params,
        )

    def grid(self, r_min, r_max):
        return log_grid(r_min, r_max, self.per_decade)


# ---------------------------------------------------------------- builders


def flat_plane(**kw):
    def remote(abs_x, r):
        return math.pi * np.asarray(r) ** 2

    return RadialGeometry(
        density=lambda r: 2.0 * math.pi * r,
        dimension=2,
        label="flat-plane",
        remote_ball=remote,
        log_slope=lambda r: 1.0 / r,
        **kw,
    )


def model_manifold(dimension=3, beta=0.5, blend_radius=1.0, label="model", **kw):
    """R^N with metric dr^2 + psi(r)^2 dtheta^2, psi(r) = r^beta beyond the blend."""
    psi = PowerWarping(beta, blend_radius)
    omega = sphere_area(dimension)
    unit_ball = omega / dimension
    n1 = dimension - 1

    def density(r):
        return omega * psi(r) ** n1

    def log_slope(r):
        return n1 * psi.derivative(r) / psi(r)

    def remote(abs_x, r):
        # r^N below psi(|x|), r psi(|x|)^(N-1) above; continuous at r = psi(|x|).
        p = float(psi(abs_x))
        r = np.asarray(r, dtype=float)
        return unit_ball * np.where(r <= p, r ** dimension, r * p ** n1)

    return RadialGeometry(
        density=density,
        dimension=dimension,
        label=label,
        warping=psi,
        remote_ball=remote,
        log_slope=log_slope,
        params={"beta": beta, "blend_radius": blend_radius},
        **kw,
    )


def half_cylinder(dimension=3, blend_radius=1.0, **kw):
    """Hemisphere capped cylinder: the beta = 0 model (V(r) ~ r for r > 1)."""
    return model_manifold(dimension, 0.0, blend_radius, label="half-cylinder", **kw)


def log_plane(**kw):
    """R^2 with d mu = log(2 + |x|) dx."""

    def density(r):
        return 2.0 * math.pi * r * np.log(2.0 + r)

    def log_slope(r):
        return 1.0 / r + 1.0 / ((2.0 + r) * np.log(2.0 + r))

    def remote(abs_x, r):
        r = np.asarray(r, dtype=float)
        return math.pi * r ** 2 * np.log(2.0 + abs_x + r)

    return RadialGeometry(
        density=density,
        dimension=2,
        label="log-plane",
        weight=lambda r: np.log(2.0 + r),
        remote_ball=remote,
        log_slope=log_slope,
        **kw,
    )


def custom(density, dimension=2, **kw):
    """Wrap a user density; checks m(r)/r^(N-1) settles near the pole."""
    geom = RadialGeometry(density=density, dimension=dimension, label="custom", **kw)
    probe = np.array([1e-7, 1e-6, 1e-5])
    ratio = geom.m(probe) / probe ** (dimension - 1)
    if not np.all(np.isfinite(ratio)) or np.any(ratio <= 0):
        raise EvaluationError("density must be positive and finite near the pole")
    if abs(ratio[0] / ratio[-1] - 1.0) > 1e-2:
        raise ValueError("m(r)/r^(N-1) does not converge to a positive constant at r -> 0")
    return geom


def build(kind, dimension=None, beta=0.5, blend_radius=1.0, **kw):
    """Construct a built-in geometry by config name."""
    if kind == "flat-plane":
        return flat_plane(**kw)
    if kind == "log-plane":
        return log_plane(**kw)
    if kind == "half-cylinder":
        return half_cylinder(dimension or 3, blend_radius, **kw)
    if kind == "model":
        return model_manifold(dimension or 3, beta, blend_radius, **kw)
    raise ValueError(f"unknown geometry kind '{kind}'")


# ---------------------------------------------------------------- tests on V


@dataclass
class ParabolicityResult:
    """Outcome of the finite-horizon parabolicity test.

    ``status`` is ``"parabolic"``, ``"non-parabolic"`` or ``"undetermined"``.
    ``exponents`` are local decay exponents p of the doubling increments,
    increment_k ~ k^(-p); a summable tail needs p > 1.
    """

    status: str
    radii: np.ndarray
    partial_integrals: np.ndarray
    exponents: np.ndarray

    @property
    def parabolic(self):
        return {"parabolic": True, "non-parabolic": False}.get(self.status)

    def __bool__(self):
        return self.status == "parabolic"


def is_parabolic(geom, r_max=1e8, converge_exponent=1.5, diverge_exponent=1.2):
    """Decide whether int_1^inf dt / V(sqrt t) diverges, from doublings up to ``r_max``.

    The doubling increments of J(R) = int_1^(R^2) dt/V(sqrt t) are fit to
    k^(-p) over the last three doublings: p >= ``converge_exponent`` on all
    three declares non-parabolic, p <= ``diverge_exponent`` on all three
    declares parabolic, anything else is undetermined.
    """
    k_max = int(math.floor(math.log2(r_max)))
    k = np.arange(0, k_max + 1)
    radii = 2.0 ** k
    partial = geom.big_h(radii) - 1.0
    inc = np.diff(partial)
    kk = k[1:].astype(float)
    with np.errstate(divide="ignore", invalid="ignore"):
        p = -np.diff(np.log(inc)) / np.diff(np.log(kk))
    last = p[-3:]
    tiny = inc[-3:] <= 1e-14 * max(partial[-1], 1e-300)
    if np.all(tiny) or np.all(last >= converge_exponent):
        status = "non-parabolic"
    elif np.all(last <= diverge_exponent):
        status = "parabolic"
    else:
        status = "undetermined"
    return ParabolicityResult(status, radii, partial, p)


@dataclass
class DoublingCheck:
    passed: bool
    worst_ratio: float
    worst_ratio_half_range: float
    pair: tuple


def doubling_exponent_check(geom, delta, r_range=(1.0, 1e6), per_decade=16, growth_tol=0.05):
    """Scan sup V(r) / (V(s) (r/s)^(2+delta)) over 1 <= s < r in ``r_range``.

    A finite scan is always finite, so "passes" means the supremum has
    stabilised: the sup over the full range exceeds the sup over the lower
    half of the range (in log scale) by at most ``growth_tol``.
    """
    lo, hi = r_range
    grid = log_grid(lo, hi, per_decade)
    vol = geom.volume(grid)
    lv = np.log(vol)
    lr = np.log(grid)
    ratio = lv[None, :] - lv[:, None] - (2.0 + delta) * (lr[None, :] - lr[:, None])
    upper = np.triu(np.ones_like(ratio, dtype=bool), k=1)
    ratio = np.where(upper, ratio, -np.inf)
    i, j = np.unravel_index(np.argmax(ratio), ratio.shape)
    worst = float(np.exp(ratio[i, j]))
    half = grid <= math.sqrt(lo * hi)
    worst_half = float(np.exp(np.max(ratio[np.ix_(half, half)])))
    passed = worst <= (1.0 + growth_tol) * worst_half
    return DoublingCheck(passed, worst, worst_half, (float(grid[i]), float(grid[j])))
