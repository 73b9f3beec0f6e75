"""Monte Carlo radial diffusion on transformed geometries and Feynman-Kac gauges.

The radial part of Brownian motion on (M, nu) solves
``dR = (m_nu'/m_nu)(R) dt + sqrt(2) dB`` (generator m_nu^-1 (m_nu u')').
Near the pole m_nu ~ r^(N-1) and the drift is (N-1)/r plus a bounded
remainder. Each Euler-Maruyama step moves a point of R^N by a Gaussian
increment plus the (capped) remainder drift along the radius and keeps its
norm: the singular part of the drift and the reflection at the pole then
come out of the N-dimensional Gaussian exactly. Every path has its own
counter-based random stream, so results do not depend on how paths are
split across threads.

Optional exit/return shortcut: once a path leaves the ball of radius
``r_out`` (beyond the support of W) the remaining excursion carries no
occupation, and the path comes back to the sphere of radius ``r_return``
with probability G(R)/G(r_return), R the radius at which the exit was
detected; it either restarts there or escapes for good. This turns the finite-horizon estimator into an infinite-horizon
one without simulating long excursions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numba as nb
import numpy as np

from . import philox
from .errors import DivergentKatoError, ParakernelError
from .geometry import log_grid

ALIVE = 0
ESCAPED = 1

_DRIFT_R_MIN = 1e-4

# the system TBB is often too old for numba; prefer OpenMP, then the builtin pool
if nb.config.THREADING_LAYER == "default":
    nb.config.THREADING_LAYER_PRIORITY = ["omp", "workqueue", "tbb"]


@nb.njit(inline="always")
def _extra_drift(r, log_r0, inv_dlog, rb_table, r_tab_max, tail_rb):
    # tabulated r*b(r) - (N-1), linear in log r; it vanishes at the pole
    if r <= 0.0:
        return 0.0
    if r >= r_tab_max:
        return tail_rb / r
    x = (math.log(r) - log_r0) * inv_dlog
    if x <= 0.0:
        return 0.0
    i = int(x)
    f = x - i
    return (rb_table[i] * (1.0 - f) + rb_table[i + 1] * f) / r


@nb.njit(inline="always")
def _potential(r, w_step, w_table):
    x = r / w_step
    i = int(x)
    if i >= w_table.size - 1:
        return 0.0
    f = x - i
    return w_table[i] * (1.0 - f) + w_table[i + 1] * f


@nb.njit(parallel=True)
def _simulate(x0, T, dt, n_paths, seed, dim, log_r0, inv_dlog, rb_table, r_tab_max, tail_rb,
              w_step, w_table, r_out, r_return, g_out, inv_m_out, g_return):
    acc = np.zeros(n_paths)
    acc_abs = np.zeros(n_paths)
    final = np.zeros(n_paths)
    status = np.zeros(n_paths, dtype=np.int8)
    steps_taken = np.zeros(n_paths, dtype=np.int64)
    n_steps = int(math.ceil(T / dt - 1e-9))
    sq = math.sqrt(2.0 * dt)
    cap = 0.5 * sq
    calls = (dim + 1) // 2
    for p in nb.prange(n_paths):
        r = x0
        a = 0.0
        b = 0.0
        w_old = _potential(r, w_step, w_table)
        k = 0
        st = ALIVE
        while k < n_steps:
            z, z2, u = philox.normals_and_uniform(seed, p, k * calls)
            perp = 0.0
            if dim >= 2:
                perp = z2 * z2
            for j in range(1, calls):
                y1, y2, _ = philox.normals_and_uniform(seed, p, k * calls + j)
                perp += y1 * y1
                if 2 * j + 1 < dim:
                    perp += y2 * y2
            drift = _extra_drift(r, log_r0, inv_dlog, rb_table, r_tab_max, tail_rb) * dt
            if drift > cap:
                drift = cap
            elif drift < -cap:
                drift = -cap
            along = r + drift + sq * z
            r = math.sqrt(along * along + sq * sq * perp)
            w_new = _potential(r, w_step, w_table)
            a += 0.5 * (w_old + w_new) * dt
            b += 0.5 * (abs(w_old) + abs(w_new)) * dt
            k += 1
            if r >= r_out:
                # return probability G(r)/G(r_return), G linear across the overshoot
                g_here = g_out - (r - r_out) * inv_m_out
                if u * g_return < g_here:
                    r = r_return
                    w_new = _potential(r, w_step, w_table)
                else:
                    st = ESCAPED
                    break
            w_old = w_new
        acc[p] = a
        acc_abs[p] = b
        final[p] = r
        status[p] = st
        steps_taken[p] = k
    return acc, acc_abs, final, status, steps_taken


@dataclass
class PathEnsemble:
    """Per-path occupation integrals int W(R_s) ds and int |W(R_s)| ds."""

    x0: float
    T: float
    dt: float
    n_paths: int
    seed: int
    occupation: np.ndarray
    abs_occupation: np.ndarray
    final_radius: np.ndarray
    status: np.ndarray
    steps: np.ndarray
    potential: object = None
    geometry: object = None
    r_out: float = math.inf
    r_return: float = math.nan
    p_return: float = 0.0
    notes: list = field(default_factory=list)

    @property
    def alive(self):
        return self.status == ALIVE


def _drift_table(tg, r_cap, per_decade=256):
    grid = log_grid(_DRIFT_R_MIN, r_cap, per_decade)
    rb = grid * tg.dlogm(grid) - (tg.dimension - 1)
    if not np.all(np.isfinite(rb)):
        bad = grid[~np.isfinite(rb)][0]
        raise ParakernelError(f"non-finite drift at r={bad:.6g}")
    return grid, rb


def _potential_table(W, r_cap, n=1 << 16):
    top = W.support_radius
    notes = []
    if not math.isfinite(top):
        top = r_cap
        notes.append(f"W treated as 0 beyond r={r_cap:g}")
    top = max(top, 1e-6)
    # one extra zero node so the table ends exactly at the support
    r = np.linspace(0.0, top, n)
    values = np.append(np.asarray(W(r), dtype=float), 0.0)
    if not np.all(np.isfinite(values)):
        raise ParakernelError("potential is not finite on the path range")
    return top / (n - 1), values, notes


def simulate_paths(tg, W, x0, T, dt, n_paths, seed, r_out=None, r_return=None, r_cap=1e8,
                   check_transient=True):
    """Simulate ``n_paths`` radial paths from |x| = x0 up to time T.

    With ``r_out`` given (it must exceed the support of W) the exit/return
    shortcut is used; the return probability comes from the pole Green's
    function of ``tg``.
    """
    from .geometry import is_parabolic
    from .green_kato import pole_green

    if dt > T / 100.0:
        raise ValueError("dt must be at most T/100")
    if n_paths < 1 or x0 < 0:
        raise ValueError("need n_paths >= 1 and x0 >= 0")
    if check_transient and is_parabolic(tg).status == "parabolic":
        raise ParakernelError("path simulation expects a non-parabolic (transient) geometry")
    grid, rb = _drift_table(tg, r_cap)
    dlog = math.log(grid[1] / grid[0])
    w_step, w_table, notes = _potential_table(W, min(r_cap, 1e4))
    p_ret = 0.0
    g_out = inv_m_out = 0.0
    g_ret = 1.0
    if r_out is None:
        r_out_v, r_ret_v = math.inf, math.nan
    else:
        if r_out <= W.support_radius:
            raise ValueError("r_out must lie beyond the support of W")
        r_ret_v = r_return if r_return is not None else W.support_radius
        if not 0 < r_ret_v < r_out:
            raise ValueError("need 0 < r_return < r_out")
        g_out, g_ret = (float(v) for v in pole_green(tg, np.array([r_out, r_ret_v])))
        inv_m_out = float(1.0 / tg.m(r_out))
        p_ret = g_out / g_ret
        r_out_v = float(r_out)
    acc, acc_abs, final, status, steps = _simulate(
        float(x0), float(T), float(dt), int(n_paths), np.uint64(seed), int(tg.dimension),
        math.log(grid[0]), 1.0 / dlog, rb, float(grid[-1]), float(rb[-1]),
        w_step, w_table, r_out_v, float(r_ret_v) if math.isfinite(r_ret_v) else 0.0,
        g_out, inv_m_out, g_ret,
    )
    if not (np.all(np.isfinite(acc)) and np.all(np.isfinite(acc_abs))):
        raise ParakernelError("non-finite occupation accumulator")
    return PathEnsemble(
        x0=float(x0), T=float(T), dt=float(dt), n_paths=int(n_paths), seed=int(seed),
        occupation=acc, abs_occupation=acc_abs, final_radius=final, status=status, steps=steps,
        potential=W, geometry=tg, r_out=r_out_v, r_return=r_ret_v, p_return=p_ret, notes=notes,
    )


@dataclass
class Estimate:
    mean: float
    stderr: float
    ci: tuple
    truncation_bound: float = 0.0

    @property
    def half_width(self):
        return 0.5 * (self.ci[1] - self.ci[0])


def _normal_summary(samples, z=1.96):
    n = samples.size
    mean = float(samples.mean())
    se = float(samples.std(ddof=1) / math.sqrt(n)) if n > 1 else 0.0
    return mean, se, (mean - z * se, mean + z * se)


def gauge_estimate(ens, occupation=None, alpha=None, kato=None):
    """Mean of exp(-int W) with a 95% normal confidence interval.

    Paths still alive at T contribute a truncation bound
    ``exp(-A_T) u(R_T) / (1 - alpha)``, where u is the radial Green
    occupation of |W| (a callable) and alpha its supremum.
    """
    if kato is not None and kato.verdict == "divergent":
        raise DivergentKatoError("gauge requested for a potential with divergent Kato integral", report=kato)
    factors = np.exp(-ens.occupation)
    mean, se, ci = _normal_summary(factors)
    bound = 0.0
    alive = ens.alive
    if np.any(alive):
        if occupation is None or alpha is None:
            bound = math.inf
        elif alpha >= 1:
            bound = math.inf
        else:
            rest = occupation(ens.final_radius[alive]) / (1.0 - alpha)
            bound = float(np.sum(factors[alive] * rest) / ens.n_paths)
    return Estimate(mean, se, ci, bound)


def occupation_norm(ens):
    """Mean of int_0^T |W(R_s)| ds with a 95% normal confidence interval."""
    mean, se, ci = _normal_summary(ens.abs_occupation)
    return Estimate(mean, se, ci)
