"""Green's functions at the pole, Green envelopes, Kato integrals and gauge bounds."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import quadrature
from .errors import DivergentKatoError, ParabolicError
from .geometry import GridFunction, is_parabolic, log_grid

CONVERGENT = "convergent"
DIVERGENT = "divergent"
UNDETERMINED = "undetermined"


def _tail_integral(f, r, rtol=1e-8, tail_tol=1e-2, max_decades=300):
    """int_r^inf f for a positive, eventually decaying f, by decades.

    Stops once the geometric-series bound on the remaining tail, built from
    the ratio of the last two decade increments, is below ``tail_tol`` of
    the accumulated value, and adds that estimate.
    """
    total = 0.0
    prev = None
    lo = r
    for _ in range(max_decades):
        hi = lo * 10.0
        inc = float(quadrature.integrate(f, [lo], [hi], rtol=rtol)[0][0])
        total += inc
        if prev is not None and prev > 0:
            rho = inc / prev
            if rho < 1.0:
                tail = inc * rho / (1.0 - rho)
                if tail <= tail_tol * total:
                    return total + tail
        prev = inc
        lo = hi
    raise ParabolicError(f"tail of int ds/m from r={r} does not settle; geometry looks parabolic")


@dataclass
class GreenPoleFunction:
    """G(r) = G_nu(x, o) for |x| = r."""

    geometry: object
    r: np.ndarray
    values: np.ndarray

    @property
    def grid_function(self):
        return GridFunction(self.r, self.values)


def green_at_pole(tg, r_grid, rtol=1e-8):
    """Pole Green's function G(r) = int_r^inf ds / m_nu(s).

    Transformed geometries of a subcritical profile use the closed-form
    tail beyond the profile's last radius; other non-parabolic geometries
    use decade-by-decade tail quadrature.
    """
    if is_parabolic(tg).status == "parabolic":
        raise ParabolicError("Green's function requested on a parabolic geometry")
    r = np.asarray(r_grid, dtype=float)
    values = pole_green(tg, r, rtol)
    return GreenPoleFunction(tg, r, np.asarray(values, dtype=float))


def pole_green(tg, r, rtol=1e-8):
    """int_r^inf ds / m_nu(s) without the parabolicity precheck."""
    r = np.asarray(r, dtype=float)
    if getattr(tg, "profile", None) is not None:
        return tg.scale_tail(r).reshape(r.shape)
    flat = r.ravel()
    order = np.argsort(flat)
    r_sorted = flat[order]
    inv = lambda s: 1.0 / tg.m(s)  # noqa: E731
    far = _tail_integral(inv, r_sorted[-1], rtol=rtol, tail_tol=rtol)
    inner = quadrature.cumulative(inv, r_sorted, rtol=rtol)
    values = np.empty_like(flat)
    values[order] = far + inner[-1] - inner
    return values.reshape(r.shape)


def ball_volume(geom, abs_y, r):
    """Approximate V(y, r): remote-ball envelope for r < |y|, anchored volume beyond.

    Points with |y| <= 1 (or geometries without a remote-ball rule) use V(r).
    """
    r = np.asarray(r, dtype=float)
    anchored = geom.volume(r)
    if abs_y <= 1.0 or geom.remote_ball is None:
        return anchored
    remote = np.asarray(geom.remote_ball(abs_y, r), dtype=float)
    return np.where(r < abs_y, remote, np.maximum(remote, anchored))


def green_envelope(geom, abs_x, abs_y, d, rtol=1e-8):
    """Two-sided Green envelope on the h-transform of a parabolic base (constants 1).

    ``(H(|x|)+H(|y|))^-2 (int_{d^2}^{max(1,|x|^2,|y|^2)} dt/V(y, sqrt t))_+
    + (H(|x|)+H(|y|))^-1``, with the t-integral computed as
    ``int 2s/V(y,s) ds``. The distance d is not checked against
    |x| + |y|, so the expression can be probed at any scale.
    """
    if min(abs_x, abs_y, d) < 0:
        raise ValueError("envelope inputs must be nonnegative")
    hsum = float(geom.big_h(np.array([abs_x]))[0] + geom.big_h(np.array([abs_y]))[0])
    top = max(1.0, abs_x, abs_y)
    integral = 0.0
    if d < top:
        lo = max(d, 1e-12)
        edges = np.geomspace(lo, top, max(int(math.log10(top / lo) * 8), 1) + 1)
        vals, _ = quadrature.integrate(
            lambda s: 2.0 * s / ball_volume(geom, abs_y, s), edges[:-1], edges[1:], rtol=rtol
        )
        integral = float(vals.sum())
    return integral / hsum**2 + 1.0 / hsum


@dataclass
class KatoReport:
    radii: np.ndarray
    partial_integrals: np.ndarray
    increments: np.ndarray
    verdict: str
    tail_exponent: float = float("nan")
    used_hat_h: bool = True
    notes: list = field(default_factory=list)

    @property
    def total(self):
        return float(self.partial_integrals[-1])


def _hat_h_table(geom, r_max, per_decade=16):
    """Interpolant of H-hat in log-log, tabulated once (H-hat >= 1, smooth in log r)."""
    grid = log_grid(1.0, max(r_max, 10.0), per_decade)
    values = geom.hat_h(grid)
    lg, lv = np.log(grid), np.log(values)

    def table(r):
        r = np.asarray(r, dtype=float)
        return np.where(r <= 1.0, 1.0, np.exp(np.interp(np.log(np.maximum(r, 1.0)), lg, lv)))

    return table


def kato_integral(geom, W, k_max=60, rel_tol=1e-4, div_tol=1e-2, rtol=1e-9):
    """I(R) = int_0^R |W| (H + H-hat) m dr at R = 2^k, k = 0..k_max, with a verdict.

    Convergent: the last three relative doubling increments are below
    ``rel_tol``. Divergent: the last three are above ``div_tol``.
    Geometries without a remote-ball rule use H in place of H-hat.
    """
    radii = 2.0 ** np.arange(0, k_max + 1)
    notes = []
    if geom.remote_ball is not None:
        hat = _hat_h_table(geom, radii[-1])
        used_hat = True
    else:
        hat = geom.big_h
        used_hat = False
        notes.append("no remote-ball rule; H used in place of H-hat")

    def f(r):
        return np.abs(W(r)) * (geom.big_h(r) + hat(r)) * geom.m(r)

    edges = np.concatenate([[0.0], radii])
    # split each doubling into 4 log pieces so localized potentials are resolved
    pieces = []
    for a, b in zip(edges[:-1], edges[1:]):
        if a == 0.0:
            sub = np.array([0.0, 0.25, 0.5, 0.75, 1.0])
        else:
            sub = np.geomspace(a, b, 5)
        pieces.append(sub)
    lo = np.concatenate([p[:-1] for p in pieces])
    hi = np.concatenate([p[1:] for p in pieces])
    vals, _ = quadrature.integrate(f, lo, hi, rtol=rtol)
    per_interval = vals.reshape(len(pieces), 4).sum(axis=1)
    partial = np.cumsum(per_interval)
    inc = np.diff(partial)
    with np.errstate(divide="ignore", invalid="ignore"):
        rel = np.where(partial[1:] > 0, inc / partial[1:], 0.0)
    last = rel[-3:]
    if partial[-1] == 0.0 or np.all(last < rel_tol):
        verdict = CONVERGENT
    elif np.all(last > div_tol):
        verdict = DIVERGENT
    else:
        verdict = UNDETERMINED
    tail = float("nan")
    pos = inc[-4:]
    if np.all(pos > 0):
        # increments ~ 2^(-k * exponent)
        tail = float(-np.polyfit(np.arange(pos.size), np.log2(pos), 1)[0])
    return KatoReport(radii, partial, np.concatenate([[partial[0]], inc]), verdict, tail, used_hat, notes)


def radial_occupation(tg, W, r, rtol=1e-9, r_cut=None):
    """u(r) = int G_nu(x, y) |W(y)| dnu(y) for |x| = r and radial W.

    For radial W the angular average of the Green's function is the pole
    Green's function at the larger radius, so
    ``u(r) = int_0^inf G(max(r, s)) |W(s)| m_nu(s) ds`` exactly.
    """
    r = np.atleast_1d(np.asarray(r, dtype=float))
    support = W.support_radius
    top = support if math.isfinite(support) else (r_cut or 1e6)
    top = max(top, 1e-6)

    def weight(s):
        return np.abs(W(s)) * tg.m(s)

    def weighted_green(s):
        return pole_green(tg, np.maximum(s, 1e-6)) * weight(s)

    grid = np.concatenate([[0.0], log_grid(1e-6, top, 8)])
    out = np.empty(r.size)
    for i, x in enumerate(r):
        # s < x contributes G(x) int_0^x |W| m_nu, s > x contributes int_x G |W| m_nu
        cut = min(x, top)
        inner = outer = 0.0
        if cut > 0:
            edges = np.concatenate([grid[grid < cut], [cut]])
            inner = float(quadrature.integrate(weight, edges[:-1], edges[1:], rtol=rtol)[0].sum())
            inner *= float(pole_green(tg, np.array([max(x, 1e-6)]))[0])
        if cut < top:
            edges = np.concatenate([[cut], grid[grid > cut]])
            outer = float(quadrature.integrate(weighted_green, edges[:-1], edges[1:], rtol=rtol)[0].sum())
        out[i] = inner + outer
    return out


@dataclass
class GreenNorm:
    samples: np.ndarray
    integrals: np.ndarray
    bound: float
    envelope_estimate: float
    kato: KatoReport | None = None


def green_bound_norm(tg, W, sample_x, base=None, kato=None, rtol=1e-9, r_cut=1e6):
    """Upper estimate of sup_x int G_nu(x, y) |W(y)| dnu(y).

    The sampled values are exact radial Green integrals. Since they
    decrease in |x|, the supremum is the value at the pole; the bound is
    that value inflated by the quadrature tolerance. The envelope-kernel
    estimate (pole Green's function replaced by the two-sided envelope) is
    reported alongside.
    """
    base = base or getattr(tg, "base", None)
    if kato is None and base is not None:
        kato = kato_integral(base, W)
    if kato is not None and kato.verdict == DIVERGENT:
        raise DivergentKatoError("Kato integral diverges; Green norm is infinite", report=kato)
    samples = np.atleast_1d(np.asarray(sample_x, dtype=float))
    if W.support_radius == 0.0:
        zero = np.zeros(samples.size)
        return GreenNorm(samples, zero, 0.0, 0.0, kato)
    values = radial_occupation(tg, W, samples, rtol=rtol, r_cut=r_cut)
    at_pole = float(radial_occupation(tg, W, [0.0], rtol=rtol, r_cut=r_cut)[0])
    bound = max(at_pole, float(values.max())) * (1.0 + 1e3 * rtol)
    envelope = float("nan")
    if base is not None:
        top = W.support_radius if math.isfinite(W.support_radius) else r_cut
        grid = np.concatenate([[0.0], log_grid(1e-6, top, 8)])
        env = lambda s: np.array([green_envelope(base, 0.0, float(v), float(v)) for v in np.atleast_1d(s)])  # noqa: E731
        envelope = float(quadrature.integrate(
            lambda s: env(s) * np.abs(W(s)) * tg.m(s), grid[:-1], grid[1:], rtol=1e-6
        )[0].sum())
    return GreenNorm(samples, values, bound, envelope, kato)


@dataclass(frozen=True)
class GaugeBound:
    applicable: bool
    value: float


def khasminskii_bound(alpha):
    """Gauge bound (1 - alpha)^-1 when the Green norm alpha is below 1."""
    if alpha < 0:
        raise ValueError("alpha must be nonnegative")
    if alpha >= 1:
        return GaugeBound(False, math.inf)
    return GaugeBound(True, 1.0 / (1.0 - alpha))
