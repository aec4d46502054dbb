"""Command-line front end.

``tunnelkit <subcommand> --config run.toml [--alpha a1,a2] [--h v] [--with-reference] [--out dir]``

Exit codes: 0 success, 2 configuration error, 3 numerical failure, 4 gap violation.
Every CSV starts with a ``# schema: tunnelkit.<table>/<version>`` line followed
by a fixed header row.
"""
from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from . import __version__
from .config import dump_config, parse_config
from .errors import ConfigError, GapViolation, TunnelkitError

SCHEMA_VERSION = 1

HEADERS = {
    "spectrum": ["alpha1", "alpha2", "h", "E_ebk", "E_quartic", "y1", "y2", "flatness"],
    "agmon": ["i", "j", "x1", "x2", "d"],
    "agmon_summary": ["E", "S0", "xE_1", "xE_2", "S0_geodesic"],
    "geodesic": ["t", "x1", "x2", "xi1", "xi2", "action"],
    "cycles": ["alpha1", "alpha2", "h", "label", "y1", "y2", "mismatch", "is_cycle", "minimal",
               "S", "S0"],
    "splitting": ["alpha1", "alpha2", "h", "E", "S0", "dE_herring", "dE_stationary",
                  "dE_reference", "xE_1", "xE_2", "flags"],
    "series": ["alpha1", "alpha2", "E", "S0", "dE_herring", "dE_stationary", "dE_reference",
               "xE_1", "xE_2", "flags"],
    "verify": ["h", "E_sym", "E_anti", "delta", "gap", "grid_n"],
    "sweep": ["h", "alpha1", "alpha2", "E", "S0", "dE_herring", "dE_stationary", "dE_reference",
              "xE_1", "xE_2", "flags"],
}

SUBCOMMANDS = ("spectrum", "agmon", "geodesic", "cycles", "splitting", "series", "verify", "sweep")


def _cell(v):
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        v = float(v)
        return "" if np.isnan(v) else repr(v)
    if isinstance(v, (tuple, list)):
        return ";".join(str(x) for x in v)
    return str(v)


def write_csv(path, table, rows):
    """Write ``rows`` under the fixed header of ``table``."""
    header = HEADERS[table]
    with open(path, "w", newline="") as fh:
        fh.write(f"# schema: tunnelkit.{table}/{SCHEMA_VERSION}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            if len(r) != len(header):
                raise ValueError(f"row width {len(r)} != header width {len(header)}")
            w.writerow([_cell(v) for v in r])


def write_pgm(path, values):
    """Binary PGM (P5) of a 2-D array, min-max scaled to 0..255; non-finite -> 0.

    The scaling is written to ``path + ".txt"``.
    """
    v = np.asarray(values, dtype=float)
    ok = np.isfinite(v)
    lo = float(v[ok].min()) if ok.any() else 0.0
    hi = float(v[ok].max()) if ok.any() else 1.0
    span = hi - lo if hi > lo else 1.0
    img = np.zeros(v.shape, dtype=np.uint8)
    img[ok] = np.round(255.0 * (v[ok] - lo) / span).astype(np.uint8)
    # rows of the image run along x2, top = largest x2
    img = img.T[::-1]
    with open(path, "wb") as fh:
        fh.write(f"P5\n{img.shape[1]} {img.shape[0]}\n255\n".encode("ascii"))
        fh.write(img.tobytes())
    with open(path + ".txt", "w") as fh:
        fh.write(f"min = {lo!r}\nmax = {hi!r}\n")
        fh.write("pixel = round(255 * (value - min) / (max - min)); non-finite -> 0\n")
        fh.write(f"width = {img.shape[1]}  # x1 nodes, left to right\n")
        fh.write(f"height = {img.shape[0]}  # x2 nodes, top = largest x2\n")


# ------------------------------------------------------------- subcommands

class Context:
    def __init__(self, cfg, args):
        self.cfg = cfg
        self.args = args
        self.out = args.out or cfg.output
        self.model = cfg.model()
        self._wells = None

    @property
    def wells(self):
        if self._wells is None:
            from .potential import find_wells
            self._wells = find_wells(self.model)
        return self._wells

    @property
    def hs(self):
        return (self.args.h,) if self.args.h is not None else self.cfg.h

    @property
    def alpha(self):
        return self.args.alpha if self.args.alpha is not None else self.cfg.alpha

    @property
    def with_reference(self):
        return self.args.with_reference or self.cfg.with_reference

    def path(self, name):
        return os.path.join(self.out, name)


def cmd_spectrum(ctx):
    from .spectrum import birkhoff_quartic, flatness_ratio, spectral_series
    left = ctx.wells[0]
    try:
        nf = birkhoff_quartic(ctx.model, left, ctx.cfg.tolerances["tol_resonance"])
    except TunnelkitError:
        nf = None
    rows = []
    for h in ctx.hs:
        for st in spectral_series(left, h, ctx.cfg.E0, ctx.model, ctx.cfg.project_umbilics, nf):
            y = st.inner_umbilic(left)
            rows.append([st.alpha[0], st.alpha[1], h, st.energy, st.energy_quartic, y[0], y[1],
                         flatness_ratio(st, left)])
    write_csv(ctx.path("spectrum.csv"), "spectrum", rows)


def cmd_agmon(ctx):
    from .agmon import minimal_geodesic, s0_between_wells
    E = ctx.cfg.energy
    grid = ctx.cfg.grid_spec()
    S0, xE, field = s0_between_wells(ctx.model, E, grid, ctx.wells)
    x1, x2 = grid.axes
    rows = [[i, j, x1[i], x2[j], field.values[i, j]]
            for i in range(grid.dims[0]) for j in range(grid.dims[1])]
    write_csv(ctx.path("agmon.csv"), "agmon", rows)
    write_pgm(ctx.path("agmon.pgm"), field.values)
    geo = minimal_geodesic(ctx.model, E, wells=ctx.wells)
    write_csv(ctx.path("agmon_summary.csv"), "agmon_summary",
              [[E, S0, xE[0], xE[1], float(geo.action[-1])]])


def cmd_geodesic(ctx):
    from .agmon import minimal_geodesic
    geo = minimal_geodesic(ctx.model, ctx.cfg.energy, wells=ctx.wells)
    rows = [[t, x[0], x[1], k[0], k[1], a] for t, x, k, a in
            zip(geo.t, geo.x, geo.xi, geo.action)]
    write_csv(ctx.path("geodesic.csv"), "geodesic", rows)


def _states(ctx, h):
    from .spectrum import make_state, spectral_series
    left = ctx.wells[0]
    if ctx.args.alpha is not None:
        return [make_state(left, ctx.args.alpha, h, ctx.model, ctx.cfg.project_umbilics)]
    return spectral_series(left, h, ctx.cfg.E0, ctx.model, ctx.cfg.project_umbilics)


def cmd_cycles(ctx):
    from .agmon import minimal_geodesic
    from .tunneling import find_tunnel_cycles
    barrier = ctx.model.barrier_height()
    rows = []
    for h in ctx.hs:
        for st in _states(ctx, h):
            if st.energy >= barrier:
                continue
            S0 = float(minimal_geodesic(ctx.model, st.energy, wells=ctx.wells).action[-1])
            for c in find_tunnel_cycles(ctx.model, st, wells=ctx.wells,
                                        tol_cycle=ctx.cfg.tolerances["tol_cycle"]):
                rows.append([st.alpha[0], st.alpha[1], h, c.label, c.y_L[0], c.y_L[1],
                             c.mismatch, c.is_cycle, c.minimal, c.action, S0])
    write_csv(ctx.path("cycles.csv"), "cycles", rows)


def _reference_fn(ctx, h, n_levels):
    """Lazy eigensolver splittings by doublet rank, or ``None`` when over budget."""
    from .reference import doublet_splitting, half_spectra, preflight
    grid = ctx.cfg.reference_grid()
    r = ctx.cfg.reference
    if grid.dims[0] * grid.dims[1] // 2 > r["max_nodes"]:
        return None
    tol = ctx.cfg.tolerances["tol_eig"]
    cache = {}

    def ref(rank):
        if "spectra" not in cache:
            preflight(grid, h, max(ctx.wells[0].frequencies), r["points_per_scale"])
            cache["spectra"] = half_spectra(ctx.model, grid, h, min(n_levels + 1, 32), tol,
                                            E_margin=0.0)
        return doublet_splitting(ctx.model, grid, h, rank, tol, spectra=cache["spectra"],
                                 points_per_scale=None).delta
    return ref


def _series_rows(ctx, h, alphas=None):
    from .spectrum import birkhoff_quartic, spectral_series
    from .tunneling import spectral_tunnel_series
    left = ctx.wells[0]
    try:
        nf = birkhoff_quartic(ctx.model, left, ctx.cfg.tolerances["tol_resonance"])
    except TunnelkitError:
        nf = None
    E0 = ctx.cfg.E0
    if alphas is not None:
        E0 = max(E0, max((a[0] + a[1]) * h for a in alphas))
    n = len(spectral_series(left, h, E0))
    ref = _reference_fn(ctx, h, n) if ctx.with_reference else None
    tol = ctx.cfg.tolerances
    return spectral_tunnel_series(ctx.model, h, E0, wells=ctx.wells,
                                  project=ctx.cfg.project_umbilics, normal_form=nf,
                                  reference=ref, tol_transport=tol["tol_transport"],
                                  tol_hess=tol["tol_hess"], alphas=alphas)


def _row(est):
    return [est.alpha[0], est.alpha[1], est.E_center, est.S0, est.delta_herring,
            est.delta_stationary, est.delta_reference, est.x_E[0], est.x_E[1],
            "|".join(est.flags)]


def cmd_splitting(ctx):
    rows = []
    for h in ctx.hs:
        for est in _series_rows(ctx, h, alphas=[tuple(ctx.alpha)]):
            r = _row(est)
            rows.append(r[:2] + [h] + r[2:])
    write_csv(ctx.path("splitting.csv"), "splitting", rows)


def cmd_series(ctx):
    h = ctx.hs[0]
    write_csv(ctx.path("series.csv"), "series", [_row(e) for e in _series_rows(ctx, h)])


def cmd_verify(ctx):
    from .reference import doublet_splitting
    grid = ctx.cfg.reference_grid()
    r = ctx.cfg.reference
    rows, gap_error = [], None
    for h in ctx.hs:
        try:
            res = doublet_splitting(ctx.model, grid, h, 0, ctx.cfg.tolerances["tol_eig"],
                                    points_per_scale=r["points_per_scale"])
            rows.append([h, res.E_sym, res.E_anti, res.delta, res.gap_to_next, grid.dims[0]])
        except GapViolation as exc:
            gap_error = gap_error or exc
            rows.append([h, None, None, None, None, grid.dims[0]])
    write_csv(ctx.path("verify.csv"), "verify", rows)
    if gap_error is not None:
        raise gap_error


def _sweep_job(args):
    cfg_path, with_ref, h = args
    cfg = parse_config(cfg_path)
    ns = argparse.Namespace(h=h, alpha=None, with_reference=with_ref, out=None)
    return [_row(e) for e in _series_rows(Context(cfg, ns), h)]


def cmd_sweep(ctx):
    from .tunneling import exponent_fit
    jobs = [(ctx.args.config, ctx.args.with_reference, h) for h in ctx.hs]
    if ctx.cfg.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=ctx.cfg.jobs) as pool:
            results = list(pool.map(_sweep_job, jobs))
    else:
        results = [_sweep_job(j) for j in jobs]
    rows, hs, ds = [], [], []
    for h, block in zip(ctx.hs, results):
        for r in block:
            rows.append([h] + r)
            if (r[0], r[1]) == (0, 0) and r[4] is not None:
                hs.append(h)
                ds.append(r[4])
    if len(hs) >= 2:
        slope, icpt = exponent_fit(hs, ds)
        rows.append(["fit", 0, 0, None, slope, None, None, None, None, None,
                     f"exponent_regression;intercept={icpt!r};n={len(hs)}"])
    else:
        rows.append(["fit", 0, 0, None, None, None, None, None, None, None,
                     "exponent_regression;insufficient_points"])
    write_csv(ctx.path("sweep.csv"), "sweep", rows)


COMMANDS = {name: globals()[f"cmd_{name}"] for name in SUBCOMMANDS}


# ------------------------------------------------------------------ driver

def _alpha(text):
    try:
        a = tuple(int(v) for v in text.split(","))
    except ValueError as exc:
        raise argparse.ArgumentTypeError("alpha must be 'a1,a2'") from exc
    if len(a) != 2 or min(a) < 0:
        raise argparse.ArgumentTypeError("alpha must be two non-negative integers")
    return a


def _positive(text):
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError("h must be positive")
    return v


def build_parser():
    p = argparse.ArgumentParser(prog="tunnelkit", description="Semiclassical tunneling toolkit.")
    p.add_argument("--version", action="version", version=f"tunnelkit {__version__}")
    p.add_argument("subcommand", choices=SUBCOMMANDS)
    p.add_argument("--config", required=True)
    p.add_argument("--alpha", type=_alpha)
    p.add_argument("--h", type=_positive)
    p.add_argument("--with-reference", action="store_true")
    p.add_argument("--out")
    return p


def _error_record(exc, out=None):
    rec = {"error": type(exc).__name__, "message": str(exc),
           "exit_code": getattr(exc, "exit_code", 3)}
    for k in ("line", "column", "key"):
        if getattr(exc, k, None) is not None:
            rec[k] = getattr(exc, k)
    text = json.dumps(rec, sort_keys=True)
    print(text, file=sys.stderr)
    if out and os.path.isdir(out):
        with open(os.path.join(out, "error.json"), "w") as fh:
            fh.write(text + "\n")
    return rec["exit_code"]


def run(subcommand, cfg, args):
    """Dispatch one subcommand; returns the exit code."""
    ctx = Context(cfg, args)
    os.makedirs(ctx.out, exist_ok=True)
    with open(ctx.path("config.effective.toml"), "w") as fh:
        fh.write(dump_config(cfg))
    if cfg.warnings:
        with open(ctx.path("warnings.jsonl"), "w") as fh:
            for w in cfg.warnings:
                fh.write(json.dumps(w, sort_keys=True) + "\n")
    try:
        COMMANDS[subcommand](ctx)
    except TunnelkitError as exc:
        return _error_record(exc, ctx.out)
    return 0


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = parse_config(args.config)
    except OSError as exc:
        return _error_record(ConfigError(f"cannot read config: {exc}"))
    except ConfigError as exc:
        return _error_record(exc)
    for w in cfg.warnings:
        print(json.dumps(w, sort_keys=True), file=sys.stderr)
    return run(args.subcommand, cfg, args)


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
