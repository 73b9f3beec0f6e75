"""Acceptance gate: one check per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v`` or directly with
``python3 tests/test_acceptance.py``.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np
import pytest
from scipy.integrate import solve_ivp

from parakernel import feynman_kac, geometry, green_kato, heat, schrodinger
from parakernel.geometry import log_grid
from parakernel.potentials import Bump, PowerDecay, Zero

# gentle bump: the transformed plane is non-parabolic and the subcritical
# envelope is tested well away from the critical threshold
SMALL_Q = Bump(2.0, 1.0, 0.27)
UNIT_Q = Bump(2.0, 1.0, 1.0)


@dataclass
class Outcome:
    passed: bool
    detail: str


def band(values):
    values = np.asarray(values, dtype=float)
    return float(values.max() / values.min())


def long_run_config(**kw):
    times = tuple(np.geomspace(1.0, 1e4, 17))
    return heat.HeatRunConfig(r_max=800.0, t_max=1e4, times=times, delta_width=0.1, **kw)


LONG_REGION = heat.BoundCheckConfig(t_range=(1.0, 1e4))


def critical_potential(plane):
    w1, w2, qq = Bump(2.0, 1.0, 0.1), PowerDecay(1.0, 4.0), Bump(4.0, 1.0, 0.001)
    res = schrodinger.critical_coupling(plane, w1, w2, qq, 0.0, 50.0, tol=1e-4)
    return w1 - res.lower * (w2 - qq), res


def time_tail_estimate(tg, R):
    """Constants-1 bound on int_{R^2}^inf dt / V_nu(sqrt t) = int_R^inf 2s / V_nu(s) ds.

    Past the profile's support h = h(R) + b log(s/R); with x = log s and
    f = V_nu / s^2 one has f' = 2 pi h^2 - 2 f and the integrand is 2/f.
    The remainder past x = X uses f ~ pi b^2 x^2.
    """
    prof = tg.profile
    x0 = math.log(R)
    f0 = float(tg.volume(np.array([R]))[0]) / R**2
    h_r = float(prof(np.array([R]))[0])
    b = prof.terminal_flux / (2 * math.pi)
    big_x = 1e5

    def rhs(x, y):
        h = h_r + b * (x - x0)
        return [2 * math.pi * h * h - 2 * y[0], 2.0 / y[0]]

    sol = solve_ivp(rhs, (x0, big_x), [f0, 0.0], rtol=1e-10, atol=1e-14)
    return float(sol.y[1, -1] + 2.0 / (math.pi * b * b * big_x))


# ---------------------------------------------------------------- criteria


def profile_law():
    g = geometry.flat_plane()
    start = time.perf_counter()
    prof = schrodinger.solve_profile(g, UNIT_Q)
    elapsed = time.perf_counter() - start
    h3 = float(prof(np.array([3.0]))[0])
    r = log_grid(3.0, 1e6, 8)
    cont = h3 + prof.terminal_flux / (2 * math.pi) * np.log(r / 3.0)
    err = float(np.max(np.abs(prof(r) / cont - 1.0)))
    rb = log_grid(1e2, 1e4, 16)
    b = band(prof(rb) / g.big_h(rb))
    ok = err <= 1e-6 and b <= 2.0 and elapsed <= 5.0
    return Outcome(ok, f"continuation error {err:.2e} (<= 1e-6), h/H band {b:.3f} (<= 2), {elapsed:.2f}s (<= 5s)")


def exact_critical_coupling():
    g = geometry.flat_plane()
    start = time.perf_counter()
    res = schrodinger.critical_coupling(g, UNIT_Q, 2 * UNIT_Q, UNIT_Q, 0.0, 3.0, tol=1e-3)
    below = schrodinger.classify(g, UNIT_Q - (res.coupling - 2e-3) * UNIT_Q).kind
    above = schrodinger.classify(g, UNIT_Q - (res.coupling + 2e-3) * UNIT_Q).kind
    elapsed = time.perf_counter() - start
    ok = (abs(res.coupling - 1.0) <= 1e-3 and below == schrodinger.SUBCRITICAL
          and above == schrodinger.SUPERCRITICAL and elapsed <= 30.0)
    return Outcome(ok, f"c* = {res.coupling:.6f} (1 +- 1e-3), c*-2e-3: {below}, c*+2e-3: {above}, {elapsed:.1f}s (<= 30s)")


def pole_green_law():
    g = geometry.flat_plane()
    tg = schrodinger.h_transform(g, schrodinger.solve_profile(g, UNIT_Q))
    r = log_grid(10.0, 1e3, 16)
    b = band(green_kato.green_at_pole(tg, r).values * g.big_h(r))
    T = 1e10
    probes = (0.25, 0.5, 1.0)
    cfg = heat.HeatRunConfig(r_max=8 * math.sqrt(T), t_max=T, times=(T,), delta_width=0.02, probe_radii=probes)
    integral = heat.heat_kernel_at_pole(tg, Zero(), cfg).time_integral()
    G = green_kato.pole_green(tg, np.array(probes))
    err = float(np.max(np.abs(integral / G - 1.0)))
    tail = time_tail_estimate(tg, math.sqrt(T)) / float(G.min())
    ok = b <= 2.0 and err <= 0.10 and tail <= 0.05
    return Outcome(ok, f"G*H band {b:.3f} (<= 2), time-integral gap {err:.2%} (<= 10%), tail bound {tail:.2%} (<= 5%)")


def kato_dichotomy():
    g = geometry.flat_plane()
    fast = green_kato.kato_integral(g, PowerDecay(1.0, 2.5))
    slow = green_kato.kato_integral(g, PowerDecay(1.0, 2.0))
    sel = np.arange(slow.radii.size) >= 10
    r2 = float(np.corrcoef(np.log(slow.radii[sel]), np.sqrt(slow.partial_integrals[sel]))[0, 1] ** 2)
    ok = fast.verdict == green_kato.CONVERGENT and slow.verdict == green_kato.DIVERGENT and r2 >= 0.98
    return Outcome(ok, f"p=2.5: {fast.verdict}, p=2: {slow.verdict}, sqrt(I) vs log R R^2 = {r2:.5f} (>= 0.98)")


def heat_baseline():
    g = geometry.flat_plane()
    cfg = heat.HeatRunConfig(r_max=80.0, t_max=100.0, times=tuple(np.geomspace(1.0, 100.0, 9)), delta_width=0.1)
    run = heat.heat_kernel_at_pole(g, Zero(), cfg)
    worst = 0.0
    for i, t in enumerate(run.times):
        sel = run.r <= 4 * math.sqrt(t)
        worst = max(worst, float(np.max(np.abs(run.values[i, sel] / heat.euclidean_kernel(t, run.r[sel]) - 1))))
    return Outcome(worst <= 0.02, f"max relative error {worst:.2%} (<= 2%)")


def subcritical_band():
    g = geometry.flat_plane()
    cfg = long_run_config()
    rep = heat.bound_check(heat.heat_kernel_at_pole(g, SMALL_Q, cfg), heat.SUBCRITICAL_ENVELOPE, g, LONG_REGION)
    fine = heat.bound_check(heat.heat_kernel_at_pole(g, SMALL_Q, cfg.refined()), heat.SUBCRITICAL_ENVELOPE, g,
                            LONG_REGION)
    growth = fine.band_ratio / rep.band_ratio - 1.0
    lo, hi = rep.exponent_range
    ok = rep.passed and rep.band_ratio <= 50 and growth <= 0.25
    return Outcome(ok, f"band {rep.band_ratio:.3f} at c2={rep.gaussian_param:.3g} (<= 50), "
                       f"refined {fine.band_ratio:.3f} (growth {growth:+.1%}, <= 25%), exponents [{lo:.3f}, {hi:.3f}]")


def critical_band():
    g = geometry.flat_plane()
    W, res = critical_potential(g)
    rep = heat.bound_check(heat.heat_kernel_at_pole(g, W, long_run_config()), heat.CRITICAL_ENVELOPE, g, LONG_REGION)
    lo, hi = rep.exponent_range
    ok = rep.passed and rep.band_ratio <= 50
    return Outcome(ok, f"c* = {res.coupling:.6f}, band {rep.band_ratio:.3f} at c2={rep.gaussian_param:.3g} (<= 50), "
                       f"exponents [{lo:.3f}, {hi:.3f}]")


def doob_identity():
    g = geometry.flat_plane()
    prof = schrodinger.solve_profile(g, SMALL_Q)
    tg = schrodinger.h_transform(g, prof)
    gap, _, _ = heat.doob_consistency(g, SMALL_Q, prof, tg, long_run_config(), LONG_REGION)
    return Outcome(gap <= 0.05, f"max relative gap {gap:.3%} (<= 5%)")


def gauge_cross_check():
    g = geometry.flat_plane()
    tg = schrodinger.h_transform(g, schrodinger.solve_profile(g, SMALL_Q))
    W = -0.2 * SMALL_Q
    _, limit = schrodinger.gauge_profile(tg, W)
    exact = 1.0 / limit

    def u(r):
        return green_kato.radial_occupation(tg, W, r)

    alpha = float(u([0.0])[0])
    ens = feynman_kac.simulate_paths(tg, W, 0.0, 1000.0, 4e-3, 100_000, seed=20240601, r_out=3.5)
    est = feynman_kac.gauge_estimate(ens, occupation=u, alpha=alpha)
    gap = abs(est.mean - exact)
    allowed = 3 * est.stderr + est.truncation_bound
    # Khasminskii: |W| scaled to Green norm 1/2 keeps the gauge below 2
    unit = float(green_kato.radial_occupation(tg, SMALL_Q, [0.0])[0])
    Wk = -(0.5 / unit) * SMALL_Q
    norm = green_kato.green_bound_norm(tg, Wk, [0.0]).bound
    bound = green_kato.khasminskii_bound(0.5).value
    ens_k = feynman_kac.simulate_paths(tg, Wk, 0.0, 1000.0, 4e-3, 100_000, seed=20240602, r_out=3.5)
    est_k = feynman_kac.gauge_estimate(
        ens_k, occupation=lambda r: green_kato.radial_occupation(tg, Wk, r), alpha=0.5)
    ok = gap <= allowed and est_k.ci[0] <= bound and abs(norm - 0.5) <= 1e-4
    return Outcome(ok, f"MC {est.mean:.5f} +- {est.stderr:.5f} vs profile {exact:.5f} "
                       f"(gap {gap / est.stderr:.2f} SE, allowed 3 SE + {est.truncation_bound:.1e}); "
                       f"alpha=0.5 gauge {est_k.mean:.4f} (CI low {est_k.ci[0]:.4f} <= {bound:g})")


def transform_volume_law():
    g = geometry.flat_plane()
    tg = schrodinger.h_transform(g, schrodinger.solve_profile(g, SMALL_Q))
    r = log_grid(1.0, 1e4, 16)
    b = band(tg.volume(r) / (g.volume(r) * g.big_h(r) ** 2))
    return Outcome(b <= 3.0, f"V_nu/(V H^2) band {b:.3f} (<= 3)")


def example_table():
    r = log_grid(1e2, 1e6, 16)
    cases = [
        ("half-cylinder", geometry.half_cylinder(3), 2.0 + r),
        ("model N=3 beta=1/2", geometry.model_manifold(3, 0.5), np.log(2.0 + r)),
        ("log-plane", geometry.log_plane(), np.log(np.log(2.0 + r))),
    ]
    bands = {name: band(g.big_h(r) / form) for name, g, form in cases}
    ok = all(b <= 2.0 for b in bands.values())
    return Outcome(ok, ", ".join(f"{k} {v:.3f}" for k, v in bands.items()) + " (each <= 2)")


CRITERIA = [
    (1, "profile law", profile_law),
    (2, "exact critical coupling", exact_critical_coupling),
    (3, "pole Green law", pole_green_law),
    (4, "Kato dichotomy", kato_dichotomy),
    (5, "heat solver baseline", heat_baseline),
    (6, "subcritical envelope band", subcritical_band),
    (7, "critical envelope band", critical_band),
    (8, "Doob identity", doob_identity),
    (9, "gauge cross-check", gauge_cross_check),
    (10, "h-transform volume law", transform_volume_law),
    (11, "example envelope table", example_table),
]


def report_line(number, title, outcome, elapsed):
    status = "PASS" if outcome.passed else "FAIL"
    return f"criterion {number:2d} [{status}] {title}: {outcome.detail} [{elapsed:.1f}s]"


@pytest.mark.parametrize("number, title, check", CRITERIA, ids=[f"{n}-{t.replace(' ', '-')}" for n, t, _ in CRITERIA])
def test_acceptance(number, title, check, capsys):
    start = time.perf_counter()
    outcome = check()
    line = report_line(number, title, outcome, time.perf_counter() - start)
    with capsys.disabled():
        print("\n" + line)
    assert outcome.passed, line


if __name__ == "__main__":
    failures = 0
    for number, title, check in CRITERIA:
        start = time.perf_counter()
        outcome = check()
        failures += not outcome.passed
        print(report_line(number, title, outcome, time.perf_counter() - start), flush=True)
    raise SystemExit(1 if failures else 0)
