"""Radial heat equation (d/dt + Delta_mu + W) u = 0 and heat-kernel envelope checks.

Space is discretized by conservative finite volumes on a log-spaced grid:
cell 0 is the ball [0, r_min], the rest are log-uniform shells out to an
absorbing sphere at r_max. Time stepping is the theta-scheme (Crank-Nicolson
by default) with a few backward-Euler half steps at the start to damp the
rough initial datum.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.linalg import solve_banded

from . import quadrature
from .errors import AccuracyGuardError, EmptyRegionError, SolverError
from .geometry import GridFunction, log_grid


@dataclass(frozen=True)
class HeatRunConfig:
    """Discretization parameters for a radial heat run.

    Time steps are uniform in phi(t) = t/t_floor below t_floor and
    1 + log(t/t_floor) above, so dt ~ step_ratio * max(t, t_floor).
    """

    r_max: float = 100.0
    t_max: float = 100.0
    times: tuple = ()
    per_decade: int = 64
    r_min: float | None = None
    theta: float = 0.5
    step_ratio: float = 0.02
    guard_ratio: float = 0.1
    rannacher_steps: int = 2
    delta_width: float = 0.1
    boundary_margin: float = 4.0
    probe_radii: tuple = ()
    clip_tol: float = 1e-10

    def __post_init__(self):
        if self.r_max <= 0 or self.t_max <= 0:
            raise ValueError("r_max and t_max must be positive")
        if not 0.5 <= self.theta <= 1.0:
            raise ValueError("theta must lie in [1/2, 1]")
        if self.per_decade < 4:
            raise ValueError("per_decade must be at least 4")
        if self.delta_width <= 0:
            raise ValueError("delta_width must be positive")
        if self.r_inner >= self.r_max:
            raise ValueError("inner cell radius must be below r_max")
        if any(t <= 0 or t > self.t_max for t in self.times):
            raise ValueError("output times must lie in (0, t_max]")

    @property
    def r_inner(self):
        return self.r_min if self.r_min is not None else self.delta_width / 10.0

    @property
    def t_floor(self):
        return self.delta_width**2

    @property
    def output_times(self):
        return tuple(sorted(set(self.times) | {self.t_max}))

    def check_guard(self):
        if self.step_ratio > self.guard_ratio:
            raise AccuracyGuardError(
                f"step_ratio {self.step_ratio} exceeds the accuracy guard {self.guard_ratio}"
            )
        if self.r_inner > self.delta_width / 3.0:
            raise AccuracyGuardError("the inner cell must be at most a third of the delta width")

    def refined(self):
        """One refinement level: twice the spatial nodes, half the time steps."""
        return replace(self, per_decade=2 * self.per_decade, step_ratio=self.step_ratio / 2)


@dataclass
class RadialMesh:
    edges: np.ndarray
    centers: np.ndarray
    volumes: np.ndarray
    conductance: np.ndarray
    outer_conductance: float
    potential: np.ndarray

    @property
    def radii(self):
        """Report radii: 0 for the pole cell, centers elsewhere."""
        r = self.centers.copy()
        r[0] = 0.0
        return r


def build_mesh(geom, W, cfg):
    inner = cfg.r_inner
    shells = log_grid(inner, cfg.r_max, cfg.per_decade)
    edges = np.concatenate([[0.0], shells])
    centers = np.concatenate([[0.5 * inner], np.sqrt(shells[:-1] * shells[1:])])
    volumes = np.diff(geom.volume(edges))
    inv = lambda s: 1.0 / geom.m(s)  # noqa: E731
    resist, _ = quadrature.integrate(inv, centers[:-1], centers[1:], rtol=1e-10)
    outer, _ = quadrature.integrate(inv, [centers[-1]], [cfg.r_max], rtol=1e-10)
    wm, _ = quadrature.integrate(lambda s: W(s) * geom.m(s), edges[:-1], edges[1:], rtol=1e-10)
    return RadialMesh(edges, centers, volumes, 1.0 / resist, float(1.0 / outer[0]), wm / volumes)


@dataclass
class KernelSlice:
    """Heat solution u(t, r) at output times, with bookkeeping.

    ``values[i, j]`` is u at ``times[i]`` in cell j (``r[j]``). Mass
    history is kept at every time step; ``boundary_loss`` is the mass
    absorbed at r_max and ``killed`` the mass removed by W.
    """

    times: np.ndarray
    r: np.ndarray
    values: np.ndarray
    step_times: np.ndarray
    mass: np.ndarray
    boundary_loss: np.ndarray
    killed: np.ndarray
    initial_mass: float
    clipped: int
    cfg: HeatRunConfig
    geometry: object = None
    potential: object = None
    probe_radii: np.ndarray = field(default_factory=lambda: np.zeros(0))
    probe_values: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))

    def at(self, t):
        i = int(np.argmin(np.abs(self.times - t)))
        if not math.isclose(self.times[i], t, rel_tol=1e-12):
            raise KeyError(f"time {t} is not an output time")
        return GridFunction(self.r, self.values[i])

    def time_integral(self):
        """int_0^t_max u(t, r) dt at the probe radii (trapezoid over all steps)."""
        return np.trapezoid(self.probe_values, self.step_times, axis=0)


def _phi(t, tf):
    return np.where(t <= tf, t / tf, 1.0 + np.log(np.maximum(t, tf) / tf))


def _phi_inv(p, tf):
    return np.where(p <= 1.0, p * tf, tf * np.exp(p - 1.0))


def time_schedule(cfg):
    """Step times from 0 to t_max hitting every output time exactly."""
    tf = cfg.t_floor
    marks = [0.0, *cfg.output_times]
    out = [np.array([0.0])]
    for a, b in zip(marks[:-1], marks[1:]):
        pa, pb = float(_phi(a, tf)), float(_phi(b, tf))
        n = max(1, math.ceil((pb - pa) / cfg.step_ratio))
        steps = _phi_inv(np.linspace(pa, pb, n + 1)[1:], tf)
        steps[-1] = b
        out.append(steps)
    return np.concatenate(out)


def _apply(mesh, u):
    """A u for the symmetric tridiagonal operator (flux form of Delta_mu + W)."""
    k = mesh.conductance
    au = mesh.potential * mesh.volumes * u
    flow = k * (u[1:] - u[:-1])
    au[:-1] -= flow
    au[1:] += flow
    au[-1] += mesh.outer_conductance * u[-1]
    return au


def _banded(mesh, scale):
    """M + scale * A in LAPACK banded layout."""
    k = mesh.conductance
    n = mesh.volumes.size
    diag = mesh.volumes + scale * mesh.potential * mesh.volumes
    diag[:-1] += scale * k
    diag[1:] += scale * k
    diag[-1] += scale * mesh.outer_conductance
    ab = np.zeros((3, n))
    ab[0, 1:] = -scale * k
    ab[1] = diag
    ab[2, :-1] = -scale * k
    return ab


def solve_heat_radial(geom, W, init, cfg, mesh=None):
    """Theta-scheme solution of du/dt = (m u')'/m - W u with u(0) = init.

    ``init`` is a GridFunction (sampled at cell centers) or an array of
    cell values. The pole cell has no inner face (zero flux); the outer
    sphere is absorbing.
    """
    cfg.check_guard()
    mesh = mesh or build_mesh(geom, W, cfg)
    if isinstance(init, GridFunction):
        u = init.at(mesh.centers)
    else:
        u = np.asarray(init, dtype=float).copy()
    if u.shape != mesh.volumes.shape:
        raise ValueError("initial datum does not match the mesh")
    if np.any(u < 0):
        raise ValueError("initial datum must be nonnegative")

    sched = time_schedule(cfg)
    out_times = np.array(cfg.output_times)
    probes = np.asarray(cfg.probe_radii, dtype=float)
    probe_idx = np.clip(np.searchsorted(mesh.edges, probes, side="right") - 1, 0, u.size - 1)

    n_steps = sched.size - 1
    mass = np.empty(n_steps + 1)
    lost = np.zeros(n_steps + 1)
    killed = np.zeros(n_steps + 1)
    probe_vals = np.empty((n_steps + 1, probes.size))
    snaps = []
    mass[0] = mesh.volumes @ u
    probe_vals[0] = u[probe_idx]
    clipped = 0
    wv = mesh.potential * mesh.volumes
    factor_cache = {}

    def advance(u, dt, theta):
        key = (round(dt, 15), theta)
        ab = factor_cache.get(key)
        if ab is None:
            ab = _banded(mesh, theta * dt)
            if len(factor_cache) < 4:
                factor_cache[key] = ab
        rhs = mesh.volumes * u
        if theta < 1.0:
            rhs = rhs - (1.0 - theta) * dt * _apply(mesh, u)
        try:
            new = solve_banded((1, 1), ab, rhs)
        except (np.linalg.LinAlgError, ValueError) as exc:
            raise SolverError(f"tridiagonal solve failed: {exc}") from exc
        if not np.all(np.isfinite(new)):
            raise SolverError("non-finite heat solution")
        bnd = dt * mesh.outer_conductance * (theta * new[-1] + (1 - theta) * u[-1])
        kill = dt * (wv @ (theta * new + (1 - theta) * u))
        return new, bnd, kill

    j = 0
    for i in range(n_steps):
        dt = sched[i + 1] - sched[i]
        if i < cfg.rannacher_steps:
            bnd = kill = 0.0
            for _ in range(2):
                u, b, k = advance(u, dt / 2, 1.0)
                bnd += b
                kill += k
        else:
            u, bnd, kill = advance(u, dt, cfg.theta)
        neg = u < 0
        if np.any(neg):
            tiny = neg & (u >= -cfg.clip_tol * max(u.max(), 0.0))
            clipped += int(tiny.sum())
            u = np.where(tiny, 0.0, u)
        mass[i + 1] = mesh.volumes @ u
        lost[i + 1] = lost[i] + bnd
        killed[i + 1] = killed[i] + kill
        probe_vals[i + 1] = u[probe_idx]
        while j < out_times.size and math.isclose(sched[i + 1], out_times[j], rel_tol=1e-12):
            snaps.append(u.copy())
            j += 1
    return KernelSlice(
        times=out_times,
        r=mesh.radii,
        values=np.array(snaps),
        step_times=sched,
        mass=mass,
        boundary_loss=lost,
        killed=killed,
        initial_mass=float(mass[0]),
        clipped=clipped,
        cfg=cfg,
        geometry=geom,
        potential=W,
        probe_radii=probes,
        probe_values=probe_vals,
    )


def delta_init(geom, mesh, width):
    """Cell averages of exp(-r^2/width^2), normalized to unit mu-mass."""
    e = mesh.edges
    vals, _ = quadrature.integrate(
        lambda s: np.exp(-(s / width) ** 2) * geom.m(s), e[:-1], e[1:], rtol=1e-10
    )
    return vals / mesh.volumes / vals.sum()


def heat_kernel_at_pole(geom, W, cfg, scale=None):
    """Approximate p^W(t, r, o) by starting from a narrow unit-mass bump at the pole.

    ``scale`` optionally multiplies the initial cell values (used for
    the transformed run of the Doob identity, where the datum is B/h).
    """
    mesh = build_mesh(geom, W, cfg)
    init = delta_init(geom, mesh, cfg.delta_width)
    if scale is not None:
        init = init * scale(mesh.centers)
    return solve_heat_radial(geom, W, init, cfg, mesh=mesh)


# ------------------------------------------------------------------ envelopes


def envelope_critical(volume, t, d, c2=0.25):
    """1/V(y, sqrt t) * exp(-c2 d^2 / t) with c1 = 1."""
    return np.exp(-c2 * np.asarray(d, dtype=float) ** 2 / t) / volume


def envelope_subcritical(h_x, h_y, h_sqrt_t, volume, t, d, c2=0.25):
    """H(|x|) H(|y|) / ((H(|y|) + H(sqrt t))^2 V(y, sqrt t)) * exp(-c2 d^2 / t) with c1 = 1."""
    pref = np.asarray(h_x) * np.asarray(h_y) / ((np.asarray(h_y) + h_sqrt_t) ** 2 * volume)
    return pref * np.exp(-c2 * np.asarray(d, dtype=float) ** 2 / t)


SUBCRITICAL_ENVELOPE = "subcritical"
CRITICAL_ENVELOPE = "critical"


@dataclass(frozen=True)
class BoundCheckConfig:
    t_range: tuple = (1.0, 100.0)
    r_factor: float = 3.0
    gaussian_params: tuple = (1 / 8, 1 / 6, 1 / 4, 1 / 2)
    band_limit: float = 50.0
    exponent_window: tuple = (1 / 8, 1 / 2)
    loss_limit: float = 0.01


@dataclass
class BoundCheckReport:
    t_range: tuple
    r_range: tuple
    gaussian_param: float
    band_min: float
    band_max: float
    band_ratio: float
    exponents: np.ndarray
    passed: bool
    scan: list
    times: np.ndarray
    radii: np.ndarray
    mask: np.ndarray
    ratio: np.ndarray

    @property
    def exponent_range(self):
        return float(self.exponents.min()), float(self.exponents.max())


def admissible_region(kernel, t_range, r_factor, loss_limit=0.01):
    """Boolean mask over (times, r): inside the time window and r <= r_factor sqrt t,
    clear of the absorbing boundary, after the delta datum has spread, and
    before boundary losses exceed ``loss_limit`` of the initial mass.
    """
    cfg = kernel.cfg
    t = kernel.times[:, None]
    r = kernel.r[None, :]
    loss = np.interp(kernel.times, kernel.step_times, kernel.boundary_loss) / kernel.initial_mass
    mask = (
        (t >= t_range[0]) & (t <= t_range[1])
        & (t >= 10.0 * cfg.delta_width**2)
        & (r <= r_factor * np.sqrt(t))
        & (r <= cfg.r_max - cfg.boundary_margin * math.sqrt(cfg.t_max))
        & (loss[:, None] <= loss_limit)
    )
    return mask


def _envelope_field(kind, geom, times, radii, c2):
    t = times[:, None]
    r = radii[None, :]
    vol = geom.volume(np.sqrt(times))[:, None]
    if kind == CRITICAL_ENVELOPE:
        return envelope_critical(vol, t, r, c2)
    if kind == SUBCRITICAL_ENVELOPE:
        hx = geom.big_h(radii)[None, :]
        hs = geom.big_h(np.sqrt(times))[:, None]
        return envelope_subcritical(hx, 1.0, hs, vol, t, r, c2)
    raise ValueError(f"unknown envelope kind '{kind}'")


def bound_check(kernel, kind, geom, cfg=None):
    """Compare a pole kernel with an envelope (constants 1) on the admissible region.

    Scans the Gaussian parameters and keeps the one with the narrowest
    band. Exponents come from fitting log(p / prefactor) against r^2/t per
    time slice, where the prefactor is the envelope without its Gaussian.
    """
    cfg = cfg or BoundCheckConfig()
    mask = admissible_region(kernel, cfg.t_range, cfg.r_factor, cfg.loss_limit)
    if not mask.any():
        raise EmptyRegionError("no admissible (t, r) points for the bound check")
    p = kernel.values
    if np.any(p[mask] <= 0):
        raise EmptyRegionError("kernel vanishes inside the admissible region")
    scan = []
    best = None
    for c2 in cfg.gaussian_params:
        with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
            ratio = p / _envelope_field(kind, geom, kernel.times, kernel.r, c2)
        sel = ratio[mask]
        band = (float(sel.min()), float(sel.max()), float(sel.max() / sel.min()))
        scan.append((c2, *band))
        if best is None or band[2] < best[1][2]:
            best = (c2, band, ratio)
    pref = _envelope_field(kind, geom, kernel.times, kernel.r, 0.0)
    exps = []
    for i, t in enumerate(kernel.times):
        row = mask[i]
        if row.sum() < 3:
            continue
        x = kernel.r[row] ** 2 / t
        y = np.log(p[i, row] / pref[i, row])
        exps.append(-np.polyfit(x, y, 1)[0])
    exps = np.array(exps)
    c2, band, ratio = best
    lo, hi = cfg.exponent_window
    passed = band[2] <= cfg.band_limit and (exps.size == 0 or (exps.min() >= lo and exps.max() <= hi))
    rows = mask.any(axis=1)
    return BoundCheckReport(
        t_range=(float(kernel.times[rows].min()), float(kernel.times[rows].max())),
        r_range=(float(kernel.r[mask.any(axis=0)].min()), float(kernel.r[mask.any(axis=0)].max())),
        gaussian_param=c2,
        band_min=band[0],
        band_max=band[1],
        band_ratio=band[2],
        exponents=exps,
        passed=bool(passed),
        scan=scan,
        times=kernel.times,
        radii=kernel.r,
        mask=mask,
        ratio=ratio,
    )


def euclidean_kernel(t, r, dimension=2):
    """(4 pi t)^(-N/2) exp(-r^2 / 4t): the flat heat kernel in this sign convention."""
    return (4.0 * math.pi * t) ** (-dimension / 2) * np.exp(-np.asarray(r) ** 2 / (4.0 * t))


def doob_consistency(geom, q, profile, tg, cfg, region=None):
    """Max relative gap between p^q(t, r, o) and h(r) h(0) p_nu(t, r, o) on the admissible region.

    Both runs start from the same mu-mass bump B; the transformed run
    starts from B/h, so h times its solution should reproduce the
    Schroedinger run.
    """
    from .potentials import Zero

    direct = heat_kernel_at_pole(geom, q, cfg)
    mesh_nu = build_mesh(tg, Zero(), cfg)
    mesh_mu = build_mesh(geom, q, cfg)
    init = delta_init(geom, mesh_mu, cfg.delta_width) / profile(mesh_nu.centers)
    transformed = solve_heat_radial(tg, Zero(), init, cfg, mesh=mesh_nu)
    region = region or BoundCheckConfig()
    mask = admissible_region(direct, region.t_range, region.r_factor, region.loss_limit)
    if not mask.any():
        raise EmptyRegionError("no admissible points for the Doob check")
    lifted = transformed.values * profile(mesh_nu.centers)[None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        gap = np.abs(lifted - direct.values) / direct.values
    return float(gap[mask].max()), direct, transformed
