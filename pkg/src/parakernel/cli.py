"""Batch command-line front end.

    parakernel <command> --config <path> [--out DIR] [--seed N] [--set section.key=value ...]
    parakernel reproduce <example> [--out DIR]

Each command writes CSV artifacts plus ``summary.txt`` into the output
directory. Exit status: 0 success, 1 computation error, 2 config error.
"""

from __future__ import annotations

import argparse
import csv
import math
import sys
from importlib import resources
from pathlib import Path

import numpy as np

from . import feynman_kac, geometry, green_kato, heat, schrodinger
from .config import parse_config
from .errors import ConfigError, ParakernelError

COMMANDS = (
    "geom-info", "profile", "classify", "critical-coupling", "green", "kato",
    "heat", "check-bounds", "gauge", "reproduce",
)
EXAMPLES = ("plane", "half-cylinder", "model", "log-plane")

# documented artifact headers
HEADERS = {
    "geometry": ("r", "V", "H", "hatH"),
    "profile": ("r", "h", "flux"),
    "green": ("r", "G", "GH"),
    "kato": ("R", "I", "increment"),
    "norm": ("x", "integral", "bound"),
    "kernel": ("t", "r", "p"),
    "report": ("t", "r", "ratio"),
    "summary": ("c2", "band_min", "band_max", "band_ratio", "exponent_min", "exponent_max"),
    "montecarlo": ("x0", "T", "dt", "nPaths", "seed", "gauge", "gauge_ci",
                   "occupation", "occupation_ci"),
}

CRITICAL_NAME = "@critical"


def _cell(v):
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def emit_csv(columns, rows, path, comment=None):
    """Write an RFC 4180 table with '\\n' line endings and 17-digit floats.

    ``comment`` (if given) becomes a leading ``# ...`` line.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        if comment is not None:
            fh.write(f"# {comment}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(columns)
        for row in rows:
            writer.writerow([_cell(v) for v in row])
    return path


class Run:
    """One command invocation: config, output directory and summary lines."""

    def __init__(self, cfg, out):
        self.cfg = cfg
        self.out = Path(out)
        self.lines = []
        self._geom = None

    @property
    def geom(self):
        if self._geom is None:
            self._geom = self.cfg.geometry()
        return self._geom

    def say(self, text):
        self.lines.append(text)
        print(text)

    def table(self, kind, rows, command):
        emit_csv(HEADERS[kind], rows, self.out / f"{kind}.csv",
                 comment=f"parakernel {command} seed={self.cfg.seed}")

    def finish(self):
        self.out.mkdir(parents=True, exist_ok=True)
        (self.out / "summary.txt").write_text("\n".join(self.lines) + "\n", encoding="utf-8")

    def potential(self, name):
        if name == CRITICAL_NAME:
            return self.critical()[1]
        return self.cfg.potential(name)

    def critical(self):
        c = self.cfg["coupling"]
        w1, w2, q = (self.cfg.potential(c[k]) for k in ("w1", "w2", "q"))
        res = schrodinger.critical_coupling(
            self.geom, w1, w2, q, c["c_lo"], c["c_hi"], tol=c["tol"],
            retry_budget=c["retry_budget"], r_max=self.cfg.r_max,
        )
        # the lower bracket end is the non-supercritical side
        return res, w1 - res.lower * (w2 - q)

    def transform(self, name):
        prof = schrodinger.solve_profile(self.geom, self.potential(name), r_max=self.cfg.r_max)
        return prof, schrodinger.h_transform(self.geom, prof)


def cmd_geom_info(run):
    g = run.geom
    r = geometry.log_grid(1e-2, run.cfg.r_max, 8)
    hat = g.hat_h(r) if g.remote_ball is not None else np.full(r.size, np.nan)
    run.table("geometry", zip(r, g.volume(r), g.big_h(r), hat), "geom-info")
    par = geometry.is_parabolic(g)
    run.say(f"geometry: {g.label} (N={g.dimension})")
    run.say(f"parabolic: {par.status}")
    for delta in (0.1, 0.5):
        chk = geometry.doubling_exponent_check(g, delta)
        run.say(f"doubling exponent 2+{delta}: {'pass' if chk.passed else 'fail'} "
                f"(worst ratio {chk.worst_ratio:.4g})")


def cmd_profile(run):
    p = run.cfg["profile"]
    prof = schrodinger.solve_profile(run.geom, run.potential(p["potential"]),
                                     r_max=run.cfg.r_max, tol=p["tol"])
    run.table("profile", zip(prof.r, prof.h, prof.flux), "profile")
    run.say(f"profile: terminal flux {prof.terminal_flux:.10g}, residual {prof.residual:.3g}")
    run.say(str(prof.classification))
    return prof


def cmd_classify(run):
    c = run.cfg["classify"]
    cl = schrodinger.classify(run.geom, run.potential(c["potential"]), r_max=run.cfg.r_max,
                              flux_rel=c["flux_rel"], growth_threshold=c["growth_threshold"])
    run.say(cl.kind)
    run.say(f"flux {cl.flux:.10g} (threshold {cl.flux_threshold:.3g}), growth {cl.growth:.4g}"
            + (f", node radius {cl.node_radius:.6g}" if cl.node_radius is not None else ""))


def cmd_critical_coupling(run):
    res, w = run.critical()
    run.say(f"critical coupling: {res.coupling:.10g} (bracket [{res.lower:.10g}, {res.upper:.10g}])")
    run.say(f"at c*: {res.classification.kind}; below: {res.lower_evidence.kind}; "
            f"above: {res.upper_evidence.kind}")
    prof = schrodinger.solve_profile(run.geom, w, r_max=run.cfg.r_max)
    run.table("profile", zip(prof.r, prof.h, prof.flux), "critical-coupling")


def cmd_green(run):
    gcfg = run.cfg["green"]
    prof, tg = run.transform(gcfg["profile"])
    r = geometry.log_grid(gcfg["r_min"], gcfg["r_max"], gcfg["per_decade"])
    G = green_kato.green_at_pole(tg, r)
    H = run.geom.big_h(r)
    GH = G.values * H
    run.table("green", zip(r, G.values, GH), "green")
    run.say(f"green: G*H band over [{r[0]:g}, {r[-1]:g}] = {GH.max() / GH.min():.4g}")
    if gcfg["norm_potential"]:
        W = run.potential(gcfg["norm_potential"])
        norm = green_kato.green_bound_norm(tg, W, gcfg["samples"], base=run.geom)
        run.table("norm", ((x, v, norm.bound) for x, v in zip(norm.samples, norm.integrals)), "green")
        run.say(f"green norm bound {norm.bound:.6g} (envelope estimate {norm.envelope_estimate:.6g})")


def cmd_kato(run):
    k = run.cfg["kato"]
    rep = green_kato.kato_integral(run.geom, run.potential(k["potential"]), k_max=k["k_max"],
                                   rel_tol=k["rel_tol"], div_tol=k["div_tol"])
    run.table("kato", zip(rep.radii, rep.partial_integrals, rep.increments), "kato")
    run.say(f"kato: {rep.verdict} (I(2^{k['k_max']}) = {rep.total:.6g})")


def _heat_config(h):
    t_max = h["t_max"]
    times = tuple(np.geomspace(h["t_min"], t_max, h["t_points"]))
    r_max = h["r_max"] or 8.0 * math.sqrt(t_max)
    return heat.HeatRunConfig(
        r_max=r_max, t_max=t_max, times=times, per_decade=h["per_decade"], theta=h["theta"],
        step_ratio=h["step_ratio"], delta_width=h["delta_width"],
    )


def cmd_heat(run):
    h = run.cfg["heat"]
    kernel = heat.heat_kernel_at_pole(run.geom, run.potential(h["potential"]), _heat_config(h))
    rows = ((t, r, p) for i, t in enumerate(kernel.times) for r, p in zip(kernel.r, kernel.values[i]))
    run.table("kernel", rows, "heat")
    loss = kernel.boundary_loss[-1] / kernel.initial_mass
    run.say(f"heat: final mass {kernel.mass[-1]:.10g}, boundary loss {loss:.3g}, clipped {kernel.clipped}")
    return kernel


def cmd_check_bounds(run):
    h = run.cfg["heat"]
    kernel = heat.heat_kernel_at_pole(run.geom, run.potential(h["potential"]), _heat_config(h))
    bc = heat.BoundCheckConfig(
        t_range=(h["t_min"], h["t_max"]), r_factor=h["r_factor"],
        gaussian_params=h["gaussian_params"], band_limit=h["band_limit"],
    )
    rep = heat.bound_check(kernel, h["envelope"], run.geom, bc)
    idx = np.argwhere(rep.mask)
    run.table("report", ((kernel.times[i], kernel.r[j], rep.ratio[i, j]) for i, j in idx), "check-bounds")
    emin, emax = rep.exponent_range
    run.table("summary", ((c2, lo, hi, ratio, emin, emax) for c2, lo, hi, ratio in rep.scan), "check-bounds")
    run.say(f"check-bounds ({h['envelope']}): band {rep.band_ratio:.4g} at c2={rep.gaussian_param:.4g}, "
            f"exponents [{emin:.3g}, {emax:.3g}] -> {'PASS' if rep.passed else 'FAIL'}")
    return rep


def cmd_gauge(run):
    mc = run.cfg["montecarlo"]
    prof, tg = run.transform(mc["profile"])
    W = run.potential(mc["potential"])
    u0 = float(green_kato.radial_occupation(tg, W, [0.0])[0])

    def occupation(r):
        return green_kato.radial_occupation(tg, W, r)

    rows = []
    dts = [mc["dt"], mc["dt"] / 4] if mc["refine"] else [mc["dt"]]
    for dt in dts:
        ens = feynman_kac.simulate_paths(tg, W, mc["x0"], mc["T"], dt, mc["paths"], run.cfg.seed,
                                         r_out=mc["r_out"])
        est = feynman_kac.gauge_estimate(ens, occupation=occupation, alpha=u0)
        occ = feynman_kac.occupation_norm(ens)
        rows.append((mc["x0"], mc["T"], dt, mc["paths"], run.cfg.seed,
                     est.mean, est.half_width, occ.mean, occ.half_width))
        run.say(f"gauge(dt={dt:g}): {est.mean:.6g} +- {est.half_width:.3g} "
                f"(truncation bound {est.truncation_bound:.3g}); occupation {occ.mean:.6g} +- {occ.half_width:.3g}")
    run.table("montecarlo", rows, "gauge")
    run.say(f"green occupation at the pole: {u0:.6g}")


DISPATCH = {
    "geom-info": cmd_geom_info,
    "profile": cmd_profile,
    "classify": cmd_classify,
    "critical-coupling": cmd_critical_coupling,
    "green": cmd_green,
    "kato": cmd_kato,
    "heat": cmd_heat,
    "check-bounds": cmd_check_bounds,
    "gauge": cmd_gauge,
}


def canned_config(example):
    if example not in EXAMPLES:
        raise ConfigError(f"unknown example '{example}' (choose from {', '.join(EXAMPLES)})")
    return resources.files("parakernel").joinpath("configs", f"{example}.ini").read_text(encoding="utf-8")


def build_parser():
    parser = argparse.ArgumentParser(prog="parakernel", description=__doc__.split("\n\n")[0])
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("example", nargs="?", help="example name for 'reproduce'")
    parser.add_argument("--config", type=Path, help="config file (INI)")
    parser.add_argument("--out", type=Path, help="output directory (overrides run.out)")
    parser.add_argument("--seed", type=int, help="top-level seed (overrides run.seed)")
    parser.add_argument("--set", dest="overrides", action="append", default=[],
                        metavar="SECTION.KEY=VALUE", help="override one config value")
    return parser


def run_command(command, text, overrides=(), out=None, seed=None):
    """Run one command on config text; returns the exit status."""
    overrides = list(overrides)
    if seed is not None:
        overrides.append(f"run.seed={seed}")
    cfg = parse_config(text, overrides)
    run = Run(cfg, out or cfg.out)
    try:
        if command == "reproduce":
            for step in ("geom-info", "profile", "green", "check-bounds"):
                DISPATCH[step](run)
        else:
            DISPATCH[command](run)
    finally:
        if run.lines:
            run.finish()
    return 0


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "reproduce":
            if not args.example:
                parser.error("reproduce needs an example name: " + ", ".join(EXAMPLES))
            text = canned_config(args.example)
            out = args.out or Path("out") / args.example
        else:
            if args.example:
                parser.error(f"unexpected argument '{args.example}'")
            text = args.config.read_text(encoding="utf-8") if args.config else ""
            out = args.out
        return run_command(args.command, text, args.overrides, out=out, seed=args.seed)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (ParakernelError, ValueError, ArithmeticError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
