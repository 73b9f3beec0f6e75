"""Radial Schroedinger operators Delta_mu + W.

Sign convention: Delta_mu >= 0, so on radial functions
``(Delta_mu + W) h = -(m h')'/m + W h``. Profiles are the regular solutions
at the pole, obtained from the first-order system ``h' = a/m``,
``a' = W m h`` where ``a = m h'`` is the flux through the sphere of radius r.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp

from . import quadrature
from .errors import (
    BracketError,
    DegenerateInputError,
    NonParabolicError,
    ParakernelError,
    SolverError,
)
from .geometry import GridFunction, RadialGeometry, is_parabolic, log_grid
from .potentials import Potential

SUBCRITICAL = "Subcritical"
CRITICAL = "Critical"
SUPERCRITICAL = "Supercritical"
UNDETERMINED = "Undetermined"

R0 = 1e-6
_FLOAT_LOG_MAX = math.log(np.finfo(float).max)


def apply_operator(geom, W, h):
    """Second-order conservative finite differences of ``(Delta_mu + W) h``.

    Endpoint values are NaN (no one-sided stencil is used there).
    """
    r = h.r
    if r.size < 3:
        raise ValueError("applyOperator needs at least 3 grid nodes")
    u = h.values
    # differences in s = log r, so faces at geometric means are centred
    s = np.log(r)
    face = np.sqrt(r[:-1] * r[1:])
    flux = geom.m(face) / face * np.diff(u) / np.diff(s)
    out = np.full(r.size, np.nan)
    div = np.diff(flux) / np.diff(np.log(face)) / r[1:-1]
    out[1:-1] = -div / geom.m(r[1:-1]) + W(r[1:-1]) * u[1:-1]
    return GridFunction(r, out)


@dataclass
class Classification:
    """Trichotomy verdict with the evidence it was based on."""

    kind: str
    node_radius: float | None = None
    node_log_radius: float | None = None
    extrapolated: bool = False
    flux: float = 0.0
    flux_threshold: float = 0.0
    growth: float = 1.0
    fit: tuple = (float("nan"), float("nan"))

    def __str__(self):
        return self.kind


@dataclass(eq=False)
class Profile:
    """Regular solution h of (Delta_mu + W) h = 0 with h(0) = h0.

    ``r``, ``h``, ``flux`` are samples on a log grid; calling the profile
    evaluates it anywhere, using the harmonic continuation
    ``h(R) + a(R) int_R^r ds/m`` beyond the last radius.
    """

    geometry: RadialGeometry
    potential: Potential
    r: np.ndarray
    h: np.ndarray
    flux: np.ndarray
    flux_variation: float
    node_radius: float | None
    residual: float
    tol: float
    h0: float = 1.0
    classification: Classification | None = None
    _sol: object = field(default=None, repr=False)

    @property
    def grid_function(self):
        return GridFunction(self.r, self.h)

    @property
    def flux_function(self):
        return GridFunction(self.r, self.flux)

    @property
    def terminal_flux(self):
        return float(self.flux[-1])

    @property
    def r_end(self):
        return float(self.r[-1])

    def _state(self, r):
        s = np.log(np.clip(r, R0, self.r_end))
        return self._sol(s)

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        out = np.empty(r.shape)
        inside = r <= self.r_end
        out[inside] = self._state(r[inside])[0] if np.any(inside) else 0.0
        far = ~inside
        if np.any(far):
            if self.node_radius is not None:
                raise ValueError("profile has a node; no continuation beyond it")
            R = self.r_end
            out[far] = self.h[-1] + self.flux[-1] * self.geometry.scale_integral(R, r[far])
        return out

    def derivative(self, r):
        r = np.asarray(r, dtype=float)
        a = np.where(r <= self.r_end, self._state(np.minimum(r, self.r_end))[1], self.flux[-1])
        return a / self.geometry.m(np.maximum(r, R0))

    def flux_at(self, r):
        r = np.asarray(r, dtype=float)
        return np.where(r <= self.r_end, self._state(np.minimum(r, self.r_end))[1], self.flux[-1])


def solve_profile(geom, W, r_max=1e6, tol=1e-10, h0=1.0, per_decade=None, max_step=0.05):
    """Integrate the regular profile from the pole out to ``r_max``.

    The system is integrated in s = log r with an explicit 8th-order
    Runge-Kutta method. A sign change of h stops the run; the node radius
    is located by root refinement of the dense output.
    """
    if r_max <= 1:
        raise ValueError("r_max must exceed 1")
    if tol <= 0:
        raise ValueError("tol must be positive")
    per_decade = per_decade or geom.per_decade

    def rhs(s, y):
        r = math.exp(s)
        m = float(geom.m(r))
        w = float(W(r))
        return [r * y[1] / m, r * w * m * y[0], r * abs(w) * m * abs(y[0])]

    def node(s, y):
        return y[0]

    node.terminal = True
    node.direction = -1

    a0 = h0 * float(W(R0)) * float(geom.volume(R0))
    sol = solve_ivp(
        rhs,
        (math.log(R0), math.log(r_max)),
        [h0, a0, abs(a0)],
        method="DOP853",
        rtol=tol,
        atol=tol * 1e-4 * h0,
        dense_output=True,
        events=node,
        max_step=max_step,
    )
    if sol.status == -1:
        raise SolverError(f"profile integration failed: {sol.message}", radius=math.exp(sol.t[-1]))
    node_radius = None
    s_end = math.log(r_max)
    if sol.status == 1 and sol.t_events[0].size:
        s_end = float(sol.t_events[0][0])
        node_radius = math.exp(s_end)
    r = log_grid(R0, math.exp(s_end), per_decade)
    r[-1] = math.exp(s_end)
    y = sol.sol(np.log(r))
    if node_radius is not None:
        y[0, -1] = 0.0
    prof = Profile(
        geometry=geom,
        potential=W,
        r=r,
        h=y[0],
        flux=y[1],
        flux_variation=float(y[2, -1]),
        node_radius=node_radius,
        residual=float("nan"),
        tol=tol,
        h0=h0,
        _sol=sol.sol,
    )
    res = apply_operator(geom, W, prof.grid_function).values
    prof.residual = float(np.nanmax(np.abs(res)))
    # the trichotomy rules (and node extrapolation) only apply on a parabolic base
    parabolic = is_parabolic(geom).status == "parabolic"
    prof.classification = classify_profile(prof, parabolic=parabolic)
    return prof


def _extrapolated_node(prof):
    """Radius where the harmonic continuation of a negative-flux profile vanishes."""
    geom = prof.geometry
    R = prof.r_end
    target = prof.h[-1] / -prof.flux[-1]
    # Bracket in decades, then bisect in log r.
    lo = math.log(R)
    hi = lo
    while True:
        hi += math.log(10.0)
        if hi > _FLOAT_LOG_MAX - 1:
            return None
        if geom.scale_integral(R, math.exp(hi)) >= target:
            break
        lo = hi
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if geom.scale_integral(R, math.exp(mid)) < target:
            lo = mid
        else:
            hi = mid
        if hi - lo < 1e-10 * max(1.0, abs(hi)):
            break
    return 0.5 * (lo + hi)


def _growth_fit(prof):
    geom = prof.geometry
    sel = prof.r >= prof.r_end / 100.0
    basis = np.column_stack([np.ones(sel.sum()), geom.big_h(prof.r[sel])])
    coef, *_ = np.linalg.lstsq(basis, prof.h[sel], rcond=None)
    return float(coef[0]), float(coef[1])


def classify_profile(prof, flux_rel=1e-6, growth_threshold=3.0, parabolic=True):
    """Apply the trichotomy rules to a computed profile.

    Order: node (direct, or on the harmonic continuation when the terminal
    flux is negative on a parabolic base) -> Supercritical; terminal flux
    above threshold -> Subcritical; bounded growth -> Critical; else
    Undetermined.
    """
    a_inf = prof.terminal_flux
    threshold = flux_rel * (1.0 + prof.flux_variation)
    r = prof.r
    first = prof.h[r <= r[0] * 10.0]
    last = prof.h[r >= prof.r_end / 10.0]
    growth = float(np.max(np.abs(last)) / np.max(np.abs(first)))
    ev = dict(flux=a_inf, flux_threshold=threshold, growth=growth)
    if prof.node_radius is not None:
        return Classification(
            SUPERCRITICAL, node_radius=prof.node_radius,
            node_log_radius=math.log(prof.node_radius), **ev,
        )
    fit = _growth_fit(prof)
    ev["fit"] = fit
    if parabolic and a_inf < -threshold:
        log_node = _extrapolated_node(prof)
        radius = math.exp(log_node) if log_node is not None else math.inf
        return Classification(
            SUPERCRITICAL, node_radius=radius, node_log_radius=log_node,
            extrapolated=True, **ev,
        )
    if not parabolic:
        return Classification(UNDETERMINED, **ev)
    if a_inf > threshold:
        return Classification(SUBCRITICAL, **ev)
    if growth < growth_threshold:
        return Classification(CRITICAL, **ev)
    return Classification(UNDETERMINED, **ev)


def classify(geom, W, r_max=1e6, tol=1e-10, flux_rel=1e-6, growth_threshold=3.0, profile=None):
    """Classify Delta_mu + W as Subcritical, Critical, Supercritical or Undetermined.

    Requires a parabolic base geometry.
    """
    status = is_parabolic(geom).status
    if status != "parabolic":
        raise NonParabolicError(f"classification rules need a parabolic base (got {status})")
    prof = profile or solve_profile(geom, W, r_max=r_max, tol=tol)
    return classify_profile(prof, flux_rel, growth_threshold)


@dataclass
class CouplingResult:
    coupling: float
    classification: Classification
    lower: float
    upper: float
    lower_evidence: Classification
    upper_evidence: Classification
    iterations: int


def critical_coupling(geom, w1, w2, q, c_lo, c_hi, tol=1e-3, retry_budget=3, r_max=1e6,
                      ode_tol=1e-10, **classify_kw):
    """Bisect c so that Delta_mu + w1 - c (w2 - q) sits on the critical threshold.

    Returns the midpoint of the final bracket; the bracket ends carry their
    classifications (non-supercritical below, Supercritical above).
    """
    diff = w2 - q
    grid = log_grid(R0, r_max, geom.per_decade)
    values = diff(grid)
    if np.all(np.abs(values) == 0.0):
        raise DegenerateInputError("W2 - q vanishes identically on the grid")
    if not np.any(values > 0):
        raise DegenerateInputError("W2 must exceed q somewhere")
    base = classify(geom, w1, r_max=r_max, tol=ode_tol, **classify_kw)
    if base.kind != SUBCRITICAL:
        raise ParakernelError(f"Delta + W1 must be subcritical, got {base.kind}")

    def at(c):
        t = ode_tol
        for _ in range(retry_budget + 1):
            cl = classify(geom, w1 - c * diff, r_max=r_max, tol=t, **classify_kw)
            if cl.kind != UNDETERMINED:
                return cl
            t /= 10.0
        raise SolverError(f"classification undetermined at c={c} after {retry_budget} retries")

    lo_cl, hi_cl = at(c_lo), at(c_hi)
    if lo_cl.kind == SUPERCRITICAL or hi_cl.kind != SUPERCRITICAL:
        raise BracketError(
            f"invalid bracket: c_lo={c_lo} -> {lo_cl.kind}, c_hi={c_hi} -> {hi_cl.kind}"
        )
    n = 0
    while c_hi - c_lo > tol:
        mid = 0.5 * (c_lo + c_hi)
        cl = at(mid)
        if cl.kind == SUPERCRITICAL:
            c_hi, hi_cl = mid, cl
        else:
            c_lo, lo_cl = mid, cl
        n += 1
    c_star = 0.5 * (c_lo + c_hi)
    return CouplingResult(c_star, at(c_star), c_lo, c_hi, lo_cl, hi_cl, n)


@dataclass(frozen=True, eq=False)
class TransformedGeometry(RadialGeometry):
    """Geometry with density m h^2 for a profile h of Delta_mu + W."""

    base: RadialGeometry | None = None
    profile: Profile | None = None

    @property
    def potential(self):
        return self.profile.potential

    def scale_tail(self, r):
        """int_r^inf ds / (m h^2), closed form beyond the profile's last radius.

        Past R the profile is h(R) + a S(R, r) with S' = 1/m, so the tail
        integrates to 1/(a h(max(r, R))).
        """
        prof = self.profile
        a = prof.terminal_flux
        if a <= 0:
            return np.full(np.shape(r), np.inf)
        r = np.atleast_1d(np.asarray(r, dtype=float))
        R = prof.r_end
        out = np.empty(r.shape)
        far = r >= R
        out[far] = 1.0 / (a * prof(r[far]))
        near = ~far
        if np.any(near):
            edges_val = quadrature.cumulative(
                lambda s: 1.0 / self.m(s), np.concatenate([np.sort(r[near]), [R]]), rtol=1e-10
            )
            # edges_val[i] = int_{r_sorted[0]}^{x_i}; tail from each point to R
            to_R = edges_val[-1] - edges_val[:-1]
            order = np.argsort(r[near])
            vals = np.empty(order.size)
            vals[order] = to_R
            out[near] = vals + 1.0 / (a * prof.h[-1])
        return out


def h_transform(geom, profile):
    """Doob transform: the geometry with density m h^2."""
    if profile.node_radius is not None or (
        profile.classification is not None and profile.classification.kind == SUPERCRITICAL
    ):
        raise ParakernelError("h-transform needs a positive profile (supercritical input)")

    def density(r):
        return geom.m(r) * profile(r) ** 2

    def log_slope(r):
        r = np.asarray(r, dtype=float)
        return geom.dlogm(r) + 2.0 * profile.derivative(r) / profile(r)

    return TransformedGeometry(
        density=density,
        dimension=geom.dimension,
        label="transformed",
        log_slope=log_slope,
        quad_rtol=geom.quad_rtol,
        per_decade=geom.per_decade,
        params={"base": geom.label},
        base=geom,
        profile=profile,
    )


def compose_profiles(h, g):
    """Pointwise product g*h on g's grid; h is resampled through its continuous evaluation."""
    return GridFunction(g.r, g.h * h(g.r))


def gauge_profile(tg, W, r_max=1e6, tol=1e-10):
    """Profile of Delta_nu + W on a transformed geometry, normalized to 1 at infinity.

    On a non-parabolic transform a bounded profile has a finite limit
    g(R) + a(R) int_R^inf ds/m_nu; dividing by it gives the Feynman-Kac
    gauge normalization.
    """
    g = solve_profile(tg, W, r_max=r_max, tol=tol)
    if g.node_radius is not None:
        raise ParakernelError("profile on the transform has a node; W is not gaugeable")
    limit = g.h[-1] + g.flux[-1] * float(tg.scale_tail(g.r_end)[0])
    return g, limit
