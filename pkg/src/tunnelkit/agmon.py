"""Forbidden-region geometry: Agmon distances, instanton rays and action charts.

In the classically forbidden region ``{V > E}`` the eigenfunctions decay like
``exp(-d_E / h)`` where ``d_E`` is the distance in the degenerate metric
``(V - E)_+ dx^2``.  Rays of that metric are the bicharacteristics of
``q(x, xi) = xi^2 - V(x)`` on ``q = -E``::

    x' = 2 xi,    xi' = grad V(x).

The field solver is first-order fast marching; rays use a 4th-order
symplectic composition of Stoermer-Verlet (``tunnelkit.kernels``).
"""
from __future__ import annotations

import warnings

from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, ndimage, optimize
from scipy.interpolate import CubicSpline

from . import kernels
from .errors import (CausticReached, EnergyAboveBarrier, GridTooCoarse,
                     NoCrossing, NotSeparable, PoorFit, ShellDrift)
from .grid import INSIDE, OUTSIDE, SOURCE, GridSpec, ScalarField2D
from .potential import LEFT, RIGHT, well_boundary

_GL_T, _GL_W = np.polynomial.legendre.leggauss(16)
_GL_T = 0.5 * (_GL_T + 1.0)
_GL_W = 0.5 * _GL_W


# --------------------------------------------------------------- eikonal field

def _line_action(model, x, E, u, smax):
    """Integral of sqrt(V - E) from ``x`` along ``-u`` down to the level ``E``.

    ``None`` if the line stalls well above the level (e.g. at a saddle).
    """
    f = lambda s: model.value(x - s * u) - E
    v0 = f(0.0)
    # walk until the level is crossed or V stops decreasing
    ss = np.linspace(0.0, smax, 65)
    vals = np.array([f(s) for s in ss])
    below = np.nonzero(vals <= 0)[0]
    if below.size:
        k = below[0]
        s_star = optimize.brentq(f, ss[k - 1], ss[k], xtol=1e-15)
    else:
        k = int(np.argmin(vals))
        lo, hi = ss[max(k - 1, 0)], ss[min(k + 1, ss.size - 1)]
        s_star = optimize.minimize_scalar(f, bounds=(lo, hi), method="bounded",
                                          options={"xatol": 1e-12}).x
        # a line passing close to a point-like level is fine; one stuck at a saddle is not
        if f(s_star) > 0.1 * max(v0, 0.0):
            return None
    if v0 <= 0:
        return 0.0
    # s = s_star (1 - tau^2) removes the square-root endpoint behaviour
    tau = _GL_T
    s = s_star * (1.0 - tau ** 2)
    g = np.sqrt(np.maximum(model.value(x[None, :] - s[:, None] * u[None, :]) - E, 0.0))
    return float(s_star * np.sum(_GL_W * g * 2.0 * tau))


def _component(mask, seed):
    lab, _ = ndimage.label(mask)
    k = lab[seed]
    return lab == k if k else np.zeros_like(mask)


def _nearest_node(grid, x):
    idx = [int(np.clip(round((x[k] - grid.origin[k]) / grid.spacing[k]), 0, grid.dims[k] - 1))
           for k in range(2)]
    return tuple(idx)


def agmon_distance(model, E, source, grid, band_factor=4.0, backend=None):
    """Agmon distance ``d_E`` from one well (or both) on ``grid``.

    Parameters
    ----------
    model : Polynomial
    E : float
        Energy below the barrier.
    source : WellData or sequence of WellData
        Well(s) whose region ``U_E`` is the source set.
    grid : GridSpec
    band_factor : float
        Width of the initialisation band in units of ``spacing * max|grad V|``.

    Returns
    -------
    ScalarField2D
        ``mask`` marks the source well's ``U_E`` (SOURCE), other wells' ``U_E``
        (INSIDE) and the rest (OUTSIDE).
    """
    wells = [source] if hasattr(source, "center") else list(source)
    X = grid.points()
    V = model.value(X)
    G = np.linalg.norm(model.gradient(X), axis=-1)
    dxm = grid.h_max
    below = V <= E
    mask = np.full(V.shape, OUTSIDE, dtype=np.int8)
    frozen = np.zeros(V.shape, dtype=bool)
    values = np.full(V.shape, np.inf)
    src_all = np.zeros(V.shape, dtype=bool)
    band_all = np.zeros(V.shape, dtype=bool)
    for w in wells:
        seed = _nearest_node(grid, w.center)
        half = (X[..., 0] * np.sign(w.center[0]) > 0) if w.center[0] != 0 else np.ones(V.shape, bool)
        inside = _component(below & half, seed) if below[seed] else np.zeros(V.shape, bool)
        # geometric neighbourhood of U_E fixes the gradient scale of the band
        core = inside.copy()
        core[seed] = True
        dist = ndimage.distance_transform_edt(~core, sampling=grid.spacing)
        near = dist <= band_factor * dxm
        bw = band_factor * dxm * float(np.max(G[near]))
        cand = _component((V <= E + bw) & half, seed)
        band = cand & ~inside
        if inside.any() and np.any(inside & (np.abs(X[..., 0]) < 1.5 * grid.spacing[0])):
            raise EnergyAboveBarrier("source well region reaches the symmetry axis")
        smax = 4.0 * np.linalg.norm(np.asarray(grid.spacing) * grid.dims)
        for i, j in zip(*np.nonzero(band)):
            x = X[i, j]
            g = model.gradient(x)
            ng = np.linalg.norm(g)
            u = g / ng if ng > 0 else (x - w.center) / max(np.linalg.norm(x - w.center), 1e-300)
            sm = min(smax, 2.0 * np.linalg.norm(x - w.center) + 4 * dxm)
            val = _line_action(model, x, E, u, sm)
            # descent lines that miss the level (near a saddle) are left to the marcher
            if val is None:
                band[i, j] = False
            else:
                values[i, j] = val
        if band.sum() < 8:
            raise GridTooCoarse(
                f"source band has {int(band.sum())} nodes (< 8); refine the grid")
        src_all |= inside
        band_all |= band
    mask[src_all] = SOURCE
    values[src_all] = 0.0
    frozen = src_all | band_all
    other = below & ~src_all
    mask[other] = INSIDE
    slow = np.sqrt(np.maximum(V - E, 0.0))
    d = kernels.fast_march(slow, grid.spacing[0], grid.spacing[1],
                           np.where(frozen, values, np.inf), frozen, backend=backend)
    return ScalarField2D(grid, d, mask, meta={"E": float(E), "band_nodes": int(band_all.sum()),
                                              "band_width": float(bw)})


def s0_between_wells(model, E, grid, wells=None, backend=None):
    """``S0(E) = 2 min_{x in axis} d_{E,L}(x)`` and the minimiser ``x_E``.

    Returns
    -------
    S0 : float
    x_E : ndarray, shape (2,)
    field : ScalarField2D
        The left-well distance field.
    """
    from .potential import find_wells
    left = wells[0] if wells is not None else find_wells(model)[0]
    fld = agmon_distance(model, E, left, grid, backend=backend)
    x2, col = fld.column_on_axis()
    k = int(np.argmin(col))
    # parabolic refinement of the discrete minimum
    if 0 < k < col.size - 1:
        a, b, c = col[k - 1], col[k], col[k + 1]
        den = a - 2 * b + c
        off = 0.5 * (a - c) / den if den > 0 else 0.0
        dmin = b - 0.25 * (a - c) * off
        x2m = x2[k] + off * (x2[1] - x2[0])
    else:
        dmin, x2m = col[k], x2[k]
    return 2.0 * float(dmin), np.array([0.0, float(x2m)]), fld


def axis_action(model, E, side=-1.0, x_end=0.0):
    """1-D quadrature ``int sqrt(V(s, 0) - E) ds`` from the axis turning point to ``x_end``."""
    tp = axis_turning_point(model, E, side)
    f = lambda s: np.sqrt(max(model.value((s, 0.0)) - E, 0.0))
    return float(integrate.quad(f, min(tp, x_end), max(tp, x_end), epsabs=1e-13, epsrel=1e-12, limit=200)[0])


def axis_turning_point(model, E, side=-1.0):
    """Inner turning point of the well on side ``sign(side)`` along ``x2 = 0``."""
    from .potential import find_wells
    right = find_wells(model)[1]
    c = float(right.center[0])
    f = lambda s: model.value((s, 0.0)) - E
    if E <= 0:
        return float(np.sign(side) * c)
    if f(0.0) <= 0:
        raise EnergyAboveBarrier(f"E = {E} is not below V on the axis")
    return float(np.sign(side) * optimize.brentq(lambda s: f(s), 0.0, c, xtol=1e-15))


def solve_eikonal(grid, slowness, source_values, source_mask, backend=None):
    """Generic first-order fast marching, ``|grad d| = slowness`` with ``d`` fixed on the source mask."""
    frozen = np.asarray(source_mask, dtype=bool)
    return kernels.fast_march(slowness, grid.spacing[0], grid.spacing[1],
                              np.where(frozen, source_values, np.inf), frozen, backend=backend)


def eikonal_residual(field, model, E):
    """Upwind ``| |grad d|^2 - (V - E)_+ |`` at interior Outside nodes."""
    d = field.values
    dx1, dx2 = field.grid.spacing
    c = d[1:-1, 1:-1]
    g1 = np.maximum(np.maximum(c - d[:-2, 1:-1], c - d[2:, 1:-1]), 0.0) / dx1
    g2 = np.maximum(np.maximum(c - d[1:-1, :-2], c - d[1:-1, 2:]), 0.0) / dx2
    V = model.value(field.grid.points()[1:-1, 1:-1])
    res = np.abs(g1 ** 2 + g2 ** 2 - np.maximum(V - E, 0.0))
    m = field.mask[1:-1, 1:-1] == OUTSIDE
    m &= np.all(np.isfinite(np.stack([d[:-2, 1:-1], d[2:, 1:-1], d[1:-1, :-2], d[1:-1, 2:]])), axis=0)
    return res[m]


# --------------------------------------------------------------------- rays

@dataclass(frozen=True)
class GeodesicPath:
    """Sampled bicharacteristic of ``q = xi^2 - V`` on the shell ``q = -E``."""

    energy: float
    t: np.ndarray
    x: np.ndarray
    xi: np.ndarray
    action: np.ndarray
    source: np.ndarray
    reason: str = "steps"
    tangent: np.ndarray | None = field(default=None, repr=False)
    info: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def samples(self):
        return [(float(t), x, k, float(a)) for t, x, k, a in zip(self.t, self.x, self.xi, self.action)]

    @property
    def end(self):
        return self.x[-1], self.xi[-1]

    def shell_residual(self, model):
        """``|xi|^2 - (V(x) - E)``, i.e. ``q + E``."""
        return np.sum(self.xi ** 2, axis=1) - (model.value(self.x) - self.energy)

    def jacobian(self):
        """``det[dx/dt, dx/dp]`` from the linearised flow (needs ``tangent``)."""
        if self.tangent is None:
            raise ValueError("path was integrated without a tangent")
        v = 2.0 * self.xi
        d = self.tangent[:, :2]
        return v[:, 0] * d[:, 1] - v[:, 1] * d[:, 0]


def _partial_step(poly, state, dt, tangent):
    out, tan, _ = kernels.integrate_ray(poly, state, dt, 1, tangent0=tangent)
    return out[-1, 1:], (tan[-1] if tan is not None else None)


def _refine_last(poly, samples, tangents, g):
    """Shorten the last step so that ``g(state)`` vanishes; returns new end state and Simpson action."""
    prev = samples[-2, 1:]
    dt = samples[-1, 0] - samples[-2, 0]
    tprev = tangents[-2] if tangents is not None else None
    f = lambda tau: g(_partial_step(poly, prev, tau, None)[0]) if tau > 0 else g(prev)
    f0, f1 = f(0.0), g(samples[-1, 1:])
    if f0 == 0:
        tau = 0.0
    elif f0 * f1 > 0:
        tau = dt
    else:
        tau = optimize.brentq(f, 0.0, dt, xtol=1e-16, rtol=1e-15)
    end, tend = (_partial_step(poly, prev, tau, tprev) if tau > 0 else (prev, tprev))
    mid = _partial_step(poly, prev, 0.5 * tau, None)[0] if tau > 0 else prev
    fa = 2 * (prev[2] ** 2 + prev[3] ** 2)
    fm = 2 * (mid[2] ** 2 + mid[3] ** 2)
    fb = 2 * (end[2] ** 2 + end[3] ** 2)
    return tau, end, tend, tau / 6.0 * (fa + 4 * fm + fb)


def instanton_flow(model, x0, xi0, E, t_max=5.0, dt=1e-3, *, x1_stop=None, target=None,
                   stop_enter=False, enter_tol=1e-9, rmax=50.0, tangent0=None,
                   action0=0.0, tol_shell=1e-6, tol_contour=None, caustic_stop=False,
                   source=None):
    """Integrate the instanton flow ``x' = 2 xi, xi' = grad V`` from ``(x0, xi0)``.

    Parameters
    ----------
    model : Polynomial
    x0, xi0 : array_like
        Launch point and momentum; must satisfy ``|xi0|^2 = V(x0) - E``.
    E : float
    t_max, dt : float
        Time horizon and step (negative ``dt`` integrates backwards).
    x1_stop : float, optional
        Stop exactly when ``x1`` reaches this value.
    target : array_like, optional
        Stop exactly at the closest approach to this point.
    stop_enter : bool
        Stop when the ray comes back to ``{V <= E + enter_tol}``.
    tangent0 : array_like, optional
        Initial ``(dx, dxi)`` of a launch perturbation; enables ``jacobian``.
    action0 : float
        Action already accumulated at the launch point.
    caustic_stop : bool
        Truncate at the first sign change of the Jacobian.

    Returns
    -------
    GeodesicPath

    Raises
    ------
    ShellDrift
        If ``|q + E|`` exceeds ``tol_shell * (1 + |t|)`` anywhere.
    """
    x0 = np.asarray(x0, dtype=float)
    xi0 = np.asarray(xi0, dtype=float)
    if tol_contour is not None:
        r0 = abs(xi0 @ xi0 - (model.value(x0) - E))
        if r0 > tol_contour:
            raise ValueError(f"launch is off shell by {r0:.3e}")
    n = int(np.ceil(t_max / abs(dt) - 1e-9))
    state0 = np.concatenate([x0, xi0])
    out, tan, reason = kernels.integrate_ray(
        model, state0, dt, n, E=E, x1_stop=x1_stop, target=target,
        stop_enter=stop_enter, enter_tol=enter_tol, rmax=rmax, tangent0=tangent0)
    if reason == "blowup":
        out = out[:-1]
        tan = tan[:-1] if tan is not None else None
    f = 2.0 * (out[:, 3] ** 2 + out[:, 4] ** 2)
    if len(out) > 1:
        act = integrate.cumulative_simpson(f, dx=dt, initial=0.0)
    else:
        act = np.zeros(1)
    if reason in ("crossed", "closest_approach") and len(out) > 1:
        if reason == "crossed":
            g = lambda s: s[0] - x1_stop
        else:
            tg = np.asarray(target, dtype=float)
            g = lambda s: (s[0] - tg[0]) * s[2] + (s[1] - tg[1]) * s[3]
        tau, end, tend, dact = _refine_last(model, out, tan, g)
        out[-1, 0] = out[-2, 0] + tau
        out[-1, 1:] = end
        if tan is not None:
            tan[-1] = tend
        act[-1] = act[-2] + dact
    act = act + action0
    path = GeodesicPath(energy=float(E), t=out[:, 0].copy(), x=out[:, 1:3].copy(),
                        xi=out[:, 3:5].copy(), action=act, reason=reason,
                        source=np.asarray(source if source is not None else x0, dtype=float),
                        tangent=None if tan is None else tan.copy())
    res = np.abs(path.shell_residual(model))
    bad = res > tol_shell * (1.0 + np.abs(path.t))
    if np.any(bad):
        k = int(np.argmax(bad))
        raise ShellDrift(f"on-shell residual {res[k]:.3e} at t = {path.t[k]:.4g}")
    if caustic_stop and path.tangent is not None:
        path = _truncate_caustic(path)
    return path


def _truncate_caustic(path, margin=0.0):
    J = path.jacobian()
    peak = np.maximum.accumulate(np.abs(J))
    s = np.sign(J)
    nz = np.nonzero(np.abs(J) > 1e-12 * max(peak[-1], 1e-300))[0]
    if nz.size == 0:
        return path
    ref = s[nz[0]]
    bad = (s == -ref) & (np.arange(J.size) > nz[0])
    if margin > 0:
        bad |= (np.abs(J) < margin * peak) & (np.arange(J.size) > nz[0]) & (peak > 0) \
            & (np.abs(J) < np.abs(J[nz[0]:]).max())
    if not bad.any():
        return path
    k = int(np.argmax(bad))
    info = dict(path.info, caustic_t=float(path.t[k]))
    return GeodesicPath(path.energy, path.t[:k], path.x[:k], path.xi[:k], path.action[:k],
                        path.source, "caustic", path.tangent[:k], info)


def mirror_path(path):
    """Continue a half-geodesic ending on ``x1 = 0`` with ``xi2 = 0`` by reflection."""
    t, x, xi, a = path.t, path.x, path.xi, path.action
    T = t[-1]
    rt = 2 * T - t[-2::-1]
    rx = x[-2::-1] * np.array([-1.0, 1.0])
    rxi = xi[-2::-1] * np.array([1.0, -1.0])
    ra = 2 * a[-1] - a[-2::-1]
    return GeodesicPath(path.energy, np.concatenate([t, rt]), np.vstack([x, rx]),
                        np.vstack([xi, rxi]), np.concatenate([a, ra]), path.source,
                        "mirrored", None, dict(path.info))


def launch_on_shell(model, x, E, direction):
    """Momentum of modulus ``sqrt(V - E)`` along ``direction``."""
    d = np.asarray(direction, dtype=float)
    return np.sqrt(max(model.value(x) - E, 0.0)) * d / np.linalg.norm(d)


def _ellipse_launch(model, well, eps, theta):
    """Launch on the small ellipse ``d0 = eps^2 / 2`` of the harmonic approximation (E = 0)."""
    lam = np.asarray(well.frequencies)
    y = eps * np.array([np.cos(theta), np.sin(theta)]) / np.sqrt(lam)
    x = well.to_global(y)
    g = (lam * y) @ well.axes.T
    xi = launch_on_shell(model, x, 0.0, g)
    return x, xi, 0.5 * eps ** 2


@dataclass
class _Shot:
    param: float
    path: GeodesicPath
    xi2: float
    x2: float


def _default_dt(E):
    return 1e-3


def _scan_radius(model):
    from .potential import find_wells
    return 2.0 * float(abs(find_wells(model)[1].center[0])) + 1.0


def _shoot_axis(model, launcher, p, E, t_max, dt, rmax=None):
    x0, xi0, a0 = launcher(p)
    rmax = rmax or _scan_radius(model)
    try:
        path = instanton_flow(model, x0, xi0, E, t_max, dt, x1_stop=0.0, action0=a0,
                              rmax=rmax, tol_shell=1e-6)
    except ShellDrift:
        return _Shot(p, None, np.nan, np.nan)
    if path.reason != "crossed":
        return _Shot(p, path, np.nan, np.nan)
    return _Shot(p, path, float(path.xi[-1, 1]), float(path.x[-1, 1]))


def boundary_launcher(model, well, E, eps=1e-3):
    """Map a launch parameter to ``(x0, xi0, action0)`` on the well edge.

    For ``E > 0`` the parameter is arc length on ``{V = E}`` and ``xi0 = 0``;
    for ``E = 0`` it is the angle on a small ``d0`` ellipse.
    """
    if E > 0:
        wb = well_boundary(model, well, E)
        s_axis = wb.nearest_s(_axis_boundary_point(model, well, E))

        def launch(s):
            x = wb.point_at(s_axis + s)[0]
            return x, np.zeros(2), 0.0
        return launch, wb.perimeter
    theta0 = 0.0 if well.inward_sign() > 0 else np.pi

    def launch(theta):
        return _ellipse_launch(model, well, eps, theta0 + theta)
    return launch, 2 * np.pi


def _axis_boundary_point(model, well, E):
    side = np.sign(well.center[0])
    return np.array([axis_turning_point(model, E, side), 0.0])


def minimal_geodesic(model, E, grid=None, wells=None, n_scan=72, t_max=30.0, dt=1e-3,
                     tol_action=None):
    """Minimal instanton ``Upsilon_E`` from the left well to the right well.

    Shots from the left edge are scanned over the full launch parameter; the
    roots of ``xi2`` at the axis are refined with ``brentq`` and the shot of
    least action is mirrored into a full path.

    Returns
    -------
    GeodesicPath
        ``info`` carries ``launch``, ``half_action``, ``roots`` (all
        ``(param, action, x2)`` candidates), ``multiple_minima`` and, with a
        grid, ``s0_grid``.
    """
    from .potential import find_wells
    left = wells[0] if wells is not None else find_wells(model)[0]
    launch, period = boundary_launcher(model, left, E)
    ps = np.linspace(-0.5 * period, 0.5 * period, n_scan, endpoint=False)
    shots = [_shoot_axis(model, launch, p, E, t_max, dt) for p in ps]
    roots = _roots_of_xi2(model, launch, shots, E, t_max, dt)
    if not roots:
        raise NoCrossing(f"no shot from the left edge reaches the axis with xi2 = 0 at E = {E}")
    roots.sort(key=lambda r: (r.path.action[-1], abs(r.x2)))
    best = roots[0]
    tol_action = tol_action if tol_action is not None else 1e-3 * 2 * best.path.action[-1]
    close = [r for r in roots if 2 * abs(r.path.action[-1] - best.path.action[-1]) <= tol_action
             and abs(r.x2 - best.x2) > 1e-6]
    if close:
        best = min([best] + close, key=lambda r: abs(r.x2))
    full = mirror_path(best.path)
    info = {"launch": best.path.x[0].copy(), "launch_param": best.param,
            "half_action": float(best.path.action[-1]),
            "roots": [(r.param, float(r.path.action[-1]), r.x2) for r in roots],
            "multiple_minima": bool(close), "n_scan": n_scan}
    if grid is not None:
        info["s0_grid"] = s0_between_wells(model, E, grid, wells=wells)[0]
    return GeodesicPath(full.energy, full.t, full.x, full.xi, full.action, best.path.x[0].copy(),
                        "minimal", None, info)


def _roots_of_xi2(model, launch, shots, E, t_max, dt):
    roots = []
    n = len(shots)
    for k in range(n):
        a, b = shots[k], shots[(k + 1) % n]
        if not (np.isfinite(a.xi2) and np.isfinite(b.xi2)):
            continue
        if a.xi2 == 0.0:
            roots.append(a)
            continue
        if a.xi2 * b.xi2 < 0:
            pa, pb = a.param, b.param if k + 1 < n else b.param + 2 * abs(shots[0].param)
            cache = {}

            def f(p):
                s = _shoot_axis(model, launch, p, E, t_max, dt)
                cache[p] = s
                return s.xi2 if np.isfinite(s.xi2) else np.nan
            try:
                p = optimize.brentq(f, pa, pb, xtol=1e-14, rtol=1e-14)
            except ValueError:
                continue
            roots.append(cache.get(p) or _shoot_axis(model, launch, p, E, t_max, dt))
    return roots


def count_launch_minima(model, E, n_scan=144, t_max=30.0, dt=1e-3, wells=None):
    """Number of disjoint launch intervals whose shots meet the axis orthogonally."""
    g = minimal_geodesic(model, E, wells=wells, n_scan=n_scan, t_max=t_max, dt=dt)
    acts = sorted(a for _, a, _ in g.info["roots"])
    best = acts[0]
    return sum(1 for a in acts if abs(a - best) <= 1e-3 * best), g


# ---------------------------------------------------------- shooting to a point

def _signed_miss(path, x):
    """Signed distance from ``x`` to the sampled ray (positive on the left of the motion)."""
    d = np.linalg.norm(path.x - x, axis=1)
    k = int(np.argmin(d))
    k = min(max(k, 1), len(path.x) - 1)
    a, b = path.x[k - 1], path.x[k]
    u = b - a
    w = x - a
    return float((u[0] * w[1] - u[1] * w[0]) / max(np.linalg.norm(u), 1e-300)), k


def shoot_through(model, launcher, p_lo, p_hi, x, E, t_max=30.0, dt=1e-3, n_scan=41,
                  t_stop=None):
    """Find the launch parameter whose ray passes through ``x``.

    ``launcher(p)`` returns ``(x0, xi0, action0)``.  All crossing parameters in
    ``[p_lo, p_hi]`` are found; the one with least action at ``x`` wins.

    Returns
    -------
    GeodesicPath
        Ray stopped exactly at the closest approach to ``x``; ``info`` has
        ``param`` and ``miss``.
    """
    x = np.asarray(x, dtype=float)
    rmax = max(_scan_radius(model), 2.0 * float(np.linalg.norm(x)))

    def ray(p, to_target=False):
        x0, xi0, a0 = launcher(p)
        return instanton_flow(model, x0, xi0, E, t_max, dt, action0=a0,
                              target=x if to_target else None, rmax=rmax, tol_shell=1e-6,
                              x1_stop=t_stop)

    ps = np.linspace(p_lo, p_hi, n_scan)
    miss = np.array([_signed_miss(ray(p), x)[0] for p in ps])
    best = None
    for k in range(n_scan - 1):
        if miss[k] * miss[k + 1] < 0 or miss[k] == 0:
            g = lambda p: _signed_miss(ray(p), x)[0]
            p = ps[k] if miss[k] == 0 else optimize.brentq(g, ps[k], ps[k + 1], xtol=1e-14, rtol=1e-13)
            path = ray(p, to_target=True)
            m = float(np.linalg.norm(path.x[-1] - x))
            path.info.update(param=float(p), miss=m)
            if best is None or path.action[-1] < best.action[-1]:
                best = path
    if best is None:
        raise NoCrossing(f"no ray from the launch set passes through {x}")
    return best


def ray_distance(model, well, E, x, window=None, n_scan=41, dt=1e-3):
    """Agmon distance ``d_E(x)`` from one well by shooting a Lambda-boundary ray through ``x``.

    Returns
    -------
    d : float
    path : GeodesicPath
        The ray; ``path.x[0]`` is the foot point ``y(x)`` and ``path.t[-1]``
        the transit time, so ``d d_E / dE = -path.t[-1]``.
    """
    launch, period = boundary_launcher(model, well, E)
    if window is None:
        window = 0.5 * period
    p0 = _param_facing(model, well, E, launch, period, x)
    path = shoot_through(model, launch, p0 - window, p0 + window, x, E, n_scan=n_scan, dt=dt)
    return float(path.action[-1]), path


def _param_facing(model, well, E, launch, period, x):
    ps = np.linspace(-0.5 * period, 0.5 * period, 181)
    pts = np.array([launch(p)[0] for p in ps])
    return float(ps[int(np.argmin(np.linalg.norm(pts - x, axis=1)))])


# ------------------------------------------------------------- action charts

@dataclass(frozen=True)
class ActionChart:
    """Fan of rays carrying the decaying phase ``F_y^E`` of one torus sheet.

    Rays start on the caustic edges through the umbilic ``y`` with momentum
    along the edge direction; ``params`` is the launch offset (a time offset
    for corner umbilics, arc length for axis umbilics) and ``edge_phase`` the
    phase accumulated along the edge up to each launch point.
    """

    source: np.ndarray
    energy: float
    params: np.ndarray
    tube: list
    edge_phase: np.ndarray
    kind: str
    well: object = field(repr=False, compare=False)
    info: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def central(self):
        return self.tube[int(np.argmin(np.abs(self.params)))]

    def jacobians(self):
        """Transversal Jacobian ``J(t)`` per ray (linearised flow)."""
        return [p.jacobian() for p in self.tube]

    def jacobians_fd(self):
        """``det[dx/dt, dx/dp]`` by centred differences across neighbouring rays.

        Rays share the time step, so samples align by index; the first and
        last rays get ``None``.
        """
        out = [None] * len(self.tube)
        for k in range(1, len(self.tube) - 1):
            a, b, c = self.tube[k - 1], self.tube[k], self.tube[k + 1]
            m = min(len(a.t), len(b.t), len(c.t))
            dxp = (c.x[:m] - a.x[:m]) / (self.params[k + 1] - self.params[k - 1])
            v = 2.0 * b.xi[:m]
            out[k] = v[:, 0] * dxp[:, 1] - v[:, 1] * dxp[:, 0]
        return out

    def points(self, stride=1):
        """All tube samples ``(x, F, ray index, sample index)``."""
        xs, fs, ri, si = [], [], [], []
        for k, p in enumerate(self.tube):
            idx = np.arange(0, len(p.t), stride)
            xs.append(p.x[idx])
            fs.append(p.action[idx])
            ri.append(np.full(idx.size, k))
            si.append(idx)
        return np.vstack(xs), np.concatenate(fs), np.concatenate(ri), np.concatenate(si)

    def phase(self, x):
        """``F_y^E`` at arbitrary points by piecewise-linear interpolation on the tube."""
        from scipy.interpolate import LinearNDInterpolator
        f = self.info.get("_interp")
        if f is None:
            pts, fv, _, _ = self.points()
            f = LinearNDInterpolator(pts, fv)
            self.info["_interp"] = f
        return f(np.asarray(x, dtype=float))

    def crossings(self):
        """Per-ray data at the symmetry axis for rays that reached it.

        Returns a dict of arrays: ``param, x2, F, xi1, xi2, J, t, dlog_a_dt``
        (the last is ``-Laplacian F`` along the ray, from the linearised flow).
        """
        rows = []
        for k, p in enumerate(self.tube):
            if p.reason != "crossed":
                continue
            J = p.jacobian()[-1]
            lap = _laplacian_from_tangent(p.xi[-1], p.tangent[-1], self.well_model_grad(p.x[-1]))
            rows.append((self.params[k], p.x[-1, 1], p.action[-1], p.xi[-1, 0], p.xi[-1, 1],
                         J, p.t[-1], -lap))
        a = np.array(rows) if rows else np.zeros((0, 8))
        keys = ("param", "x2", "F", "xi1", "xi2", "J", "t", "dlog_a_dt")
        out = {k: a[:, i] for i, k in enumerate(keys)}
        order = np.argsort(out["x2"])
        return {k: v[order] for k, v in out.items()}

    def well_model_grad(self, x):
        return self.info["model"].gradient(x)


def _laplacian_from_tangent(xi, tan, gradV):
    """Trace of ``d xi / d x`` on the sheet from the flow direction and one tangent.

    Columns ``(dx/dt, dx/dp)`` and ``(dxi/dt, dxi/dp)`` give ``Dxi = Xi X^{-1}``.
    """
    X = np.column_stack([2.0 * xi, tan[:2]])
    XI = np.column_stack([gradV, tan[2:]])
    return float(np.trace(XI @ np.linalg.inv(X)))


def _edge_integral(model, E, a, b):
    """``int sqrt(V - E)`` along the straight segment from ``a`` to ``b``."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    L = float(np.linalg.norm(b - a))
    if L == 0:
        return 0.0
    u = (b - a) / L
    f = lambda s: np.sqrt(max(model.value(a + s * u) - E, 0.0))
    return float(integrate.quad(f, 0.0, L, epsabs=1e-14, epsrel=1e-12, limit=200)[0])


def sheet_launcher(model, well, y, E, kind=None):
    """Launch map ``p -> (x0, xi0, phase0)`` for the decaying sheet through umbilic ``y``.

    ``kind="corner"``: ``p > 0`` walks outward along the edge parallel to
    principal axis 1 by the offset ``|y1| (cosh(2 lam1 p) - 1)``, ``p < 0``
    along axis 2; the launch momentum points along the edge.

    ``kind="axis"``: the umbilic is where the whole energy sits in one mode
    (e.g. the minimal-geodesic launch point); the edge is the tangent line to
    ``{V = E}`` at ``y`` and ``p`` is signed arc length on it.

    By default ``kind`` is ``"axis"`` when ``y`` lies on principal axis 1.
    """
    yl = well.to_local(y)
    lam = np.asarray(well.frequencies)
    e = well.axes
    y = np.asarray(y, dtype=float)
    if kind is None:
        kind = "corner" if abs(yl[1]) > 1e-12 * max(1.0, abs(yl[0])) else "axis"
    if kind == "corner":
        sg = np.sign(yl)

        def launch(p):
            j = 0 if p >= 0 else 1
            yj = abs(yl[j])
            r = yj * (np.cosh(2 * lam[j] * abs(p)) - 1.0)
            d = sg[j] * e[:, j]
            x0 = y + r * d
            return x0, launch_on_shell(model, x0, E, d) if r > 0 else np.zeros(2), \
                _edge_integral(model, E, y, x0)
    elif kind == "axis":
        g = model.gradient(y)
        tdir = np.array([-g[1], g[0]])
        tdir = tdir / np.linalg.norm(tdir) if np.linalg.norm(tdir) > 0 else e[:, 1]
        if tdir @ e[:, 1] < 0:
            tdir = -tdir

        def launch(p):
            d = np.sign(p) * tdir if p != 0 else tdir
            x0 = y + abs(p) * d
            return x0, launch_on_shell(model, x0, E, d) if p != 0 else np.zeros(2), \
                _edge_integral(model, E, y, x0)
    else:
        raise ValueError(f"unknown chart kind {kind!r}")
    return launch, kind


def point_source_launcher(model, x0, E):
    """Rays leaving ``x0`` in all directions, ``p`` the launch angle."""
    x0 = np.asarray(x0, dtype=float)

    def launch(theta):
        d = np.array([np.cos(theta), np.sin(theta)])
        return x0, launch_on_shell(model, x0, E, d), 0.0
    return launch


def _launch_tangent(launch, p, dp):
    """Derivative of the launch map; one-sided at ``p = 0`` where the edges meet."""
    def pack(v):
        return np.concatenate([v[0], v[1]])
    if p == 0:
        return (pack(launch(dp)) - pack(launch(0.0))) / dp
    if np.sign(p - dp) != np.sign(p + dp):
        return (pack(launch(p + dp)) - pack(launch(p))) / dp
    return (pack(launch(p + dp)) - pack(launch(p - dp))) / (2 * dp)


def ray_fan(model, launch, params, E, source, kind, well=None, t_max=30.0, dt=1e-3,
            stop_at_axis=True, caustic_margin=0.1, require_axis=False, rmax=None, dp=None):
    """Integrate one ray per launch parameter, with the linearised flow along ``d/dp``.

    Raises
    ------
    CausticReached
        If ``require_axis`` and a ray is cut before reaching ``x1 = 0``.
    """
    params = np.asarray(params, dtype=float)
    span = float(np.ptp(params)) if params.size > 1 else 1.0
    dp = dp or 1e-6 * max(span, 1e-3)
    rmax = rmax or _scan_radius_safe(model)
    tube, phases = [], []
    for p in params:
        x0, xi0, f0 = launch(p)
        tan0 = _launch_tangent(launch, p, dp)
        path = instanton_flow(model, x0, xi0, E, t_max, dt,
                              x1_stop=0.0 if stop_at_axis else None,
                              tangent0=tan0, action0=f0, rmax=rmax, tol_shell=1e-6,
                              source=source)
        path = _truncate_caustic(path, margin=caustic_margin)
        if require_axis and path.reason != "crossed":
            raise CausticReached(f"ray p = {p:.4g} stopped ({path.reason}) before the axis")
        tube.append(path)
        phases.append(f0)
    return ActionChart(source=np.asarray(source, dtype=float), energy=float(E), params=params,
                       tube=tube, edge_phase=np.array(phases), kind=kind, well=well,
                       info={"model": model})


def _scan_radius_safe(model):
    try:
        return _scan_radius(model)
    except Exception:
        return 50.0


def action_chart(model, well, y, E, fan_width=0.3, n_rays=41, t_max=30.0, dt=1e-3,
                 stop_at_axis=True, caustic_margin=0.1, require_axis=False, kind=None):
    """Fan of decaying-sheet rays around umbilic ``y`` at energy ``E``.

    Parameters
    ----------
    model : Polynomial
    well : WellData
    y : array_like
        Umbilic on ``{V = E}``.
    fan_width : float
        Launch parameters span ``[-fan_width, fan_width]``.
    caustic_margin : float
        Rays are cut where ``|J|`` falls below this fraction of its running
        maximum (``J`` vanishes at launch, so the running peak is the scale).
    kind : {"corner", "axis"}, optional
        See ``sheet_launcher``.

    Raises
    ------
    CausticReached
        If ``require_axis`` and a ray of the fan is cut before the axis.
    """
    y = np.asarray(y, dtype=float)
    launch, kind = sheet_launcher(model, well, y, E, kind)
    params = np.linspace(-fan_width, fan_width, n_rays)
    return ray_fan(model, launch, params, E, y, kind, well, t_max, dt, stop_at_axis,
                   caustic_margin, require_axis)


# ------------------------------------------------------ defect and smoothness laws

@dataclass
class FitReport:
    K_hat: np.ndarray
    slope: float
    intercept: float
    r2: float
    n: int
    band: float
    defect_max: float
    samples: dict = field(repr=False, default_factory=dict)

    @property
    def K0(self):
        return float(np.min(self.K_hat)) if self.K_hat.size else np.nan


def foot_map(model, well, E, x, window=None):
    """Foot point ``y(x)`` on ``{V = E}``, ray distance ``d_E(x)`` and transit time."""
    d, path = ray_distance(model, well, E, x, window=window)
    return path.x[0], d, path.t[-1]


def umbilic_at(model, well, E, y1, sign2=1.0):
    """Point of ``{V = E}`` with local coordinate ``x1' = y1`` in the quadrant ``sign(x2') = sign2``."""
    f = lambda b: model.value(well.to_global((y1, sign2 * b))) - E
    hi = 1e-3
    while f(hi) < 0:
        hi *= 2.0
    if f(0.0) >= 0:
        return None
    b = optimize.brentq(f, 0.0, hi, xtol=1e-15, rtol=1e-15)
    return well.to_global((y1, sign2 * b))


def sheet_phase_at(model, well, y, E, x, fan_width=0.6):
    """``F_y^E(x)`` by shooting the sheet ray of umbilic ``y`` through ``x``."""
    launch, _ = sheet_launcher(model, well, y, E)
    path = shoot_through(model, launch, -fan_width, fan_width, x, E, n_scan=25)
    return float(path.action[-1]), path


def prop1_defect_fit(chart, field=None, C=1.0, stride=50, n_probe=6, n_umbilic=9,
                     window=0.2, r2_min=0.95, raise_on_poor=True, max_points=80):
    """Quadratic defect law ``d_E(x) - F_y^E(x) ~ -K(x, y) (y1 - y1(x))^2``.

    Two measurements on tube points with ``dist(x, {V = E}) <= C sqrt(mu)``,
    ``mu = sqrt(E)``:

    * every sample gives ``K_hat = (d_E - F) / -(y1 - y1(x))^2`` for the
      chart's own umbilic (positivity is the claim);
    * at ``n_probe`` fixed points the umbilic is moved along ``{V = E}``
      (``n_umbilic`` values of ``y1`` within ``window |y1|`` of ``y1(x)``)
      and the part of the defect even in ``y1 - y1(x)`` is regressed on
      ``-(y1 - y1(x))^2``; ``r2`` is the smallest R^2 and ``slopes`` the
      fitted ``K(x)``.

    ``d_E`` and the foot ``y(x)`` come from Lambda-boundary shots through each
    point; ``field`` (optional) adds the grid value for comparison.

    Raises
    ------
    PoorFit
        If ``r2 < r2_min`` (and ``raise_on_poor``).
    """
    model = chart.info["model"]
    well = chart.well
    E = chart.energy
    mu = np.sqrt(E)
    band = C * np.sqrt(mu)
    wb = well_boundary(model, well, E)
    pts, F, ri, si = chart.points(stride=stride)
    keep = si > 0
    pts, F = pts[keep], F[keep]
    dist = np.array([np.min(np.linalg.norm(wb.polyline - p, axis=1)) for p in pts])
    sel = dist <= band
    pts, F, dist = pts[sel], F[sel], dist[sel]
    if pts.shape[0] > max_points:
        k = np.linspace(0, pts.shape[0] - 1, max_points).round().astype(int)
        pts, F, dist = pts[k], F[k], dist[k]
    yl = well.to_local(chart.source)
    launch, period = boundary_launcher(model, well, E)
    p0 = _param_facing(model, well, E, launch, period, chart.source)
    win = 0.25 * period

    def foot(x):
        path = shoot_through(model, launch, p0 - win, p0 + win, x, E, n_scan=33)
        return float(path.action[-1]), well.to_local(path.x[0])[0]

    dE = np.empty(len(pts))
    foot1 = np.empty(len(pts))
    for k, x in enumerate(pts):
        dE[k], foot1[k] = foot(x)
    D = dE - F
    X = -(yl[0] - foot1) ** 2
    nz = np.abs(X) > 1e-10
    K_hat = D[nz] / X[nz]
    # fixed-x regressions over a family of umbilics; the even part in
    # (y1 - y1(x)) removes the y-dependence of K at first order
    order = np.argsort(dist)
    order = order[dist[order] >= 0.1 * band]
    probes = order[np.linspace(0, order.size - 1, min(n_probe, order.size)).round().astype(int)]
    slopes, r2s, probe_rows = [], [], []
    half = np.linspace(0.0, 1.0, (n_umbilic + 1) // 2)[1:]
    for k in probes:
        x = pts[k]
        y1x = foot1[k]
        Dk, Xk, Ok = [], [], []
        for o in window * abs(yl[0]) * half:
            pair = []
            for sg in (1.0, -1.0):
                yy = umbilic_at(model, well, E, y1x + sg * o, np.sign(yl[1]) or 1.0)
                if yy is None:
                    break
                try:
                    pair.append(dE[k] - sheet_phase_at(model, well, yy, E, x)[0])
                except NoCrossing:
                    break
            if len(pair) == 2:
                Dk.append(0.5 * (pair[0] + pair[1]))
                Xk.append(-o ** 2)
                Ok.append((o, pair[0], pair[1]))
        if len(Dk) < 3:
            continue
        Dk, Xk = np.array(Dk), np.array(Xk)
        A = np.column_stack([Xk, np.ones_like(Xk)])
        coef, *_ = np.linalg.lstsq(A, Dk, rcond=None)
        res = Dk - A @ coef
        tot = np.sum((Dk - Dk.mean()) ** 2)
        r2s.append(1.0 - np.sum(res ** 2) / tot if tot > 0 else 1.0)
        slopes.append(coef[0])
        probe_rows.append({"x": x, "dist": dist[k], "pairs": np.array(Ok), "defect_even": Dk,
                           "K": coef[0], "intercept": coef[1]})
    r2 = float(min(r2s)) if r2s else np.nan
    samples = {"x": pts, "F": F, "d_ray": dE, "foot1": foot1, "defect": D, "X": X,
               "dist": dist, "probes": probe_rows, "r2_probe": np.array(r2s)}
    if field is not None:
        samples["d_grid"] = np.asarray(field(pts))
    rep = FitReport(K_hat=K_hat, slope=float(np.median(slopes)) if slopes else np.nan,
                    intercept=float(np.max(np.abs([p["intercept"] for p in probe_rows])))
                    if probe_rows else np.nan,
                    r2=r2, n=int(len(D)), band=float(band),
                    defect_max=float(D.max()) if D.size else np.nan, samples=samples)
    rep.slopes = np.array(slopes)
    if r2 < r2_min and raise_on_poor:
        raise PoorFit(f"quadratic defect law fits with R^2 = {r2:.4f} < {r2_min}", rep)
    return rep


def _split_1d(model):
    if not model.is_separable():
        raise NotSeparable("potential has x1-x2 cross terms")
    t1 = model.restrict(0)
    t2 = model.restrict(1)
    V1 = lambda s: sum(c * s ** a for c, a in t1)
    V2 = lambda s: sum(c * s ** b for c, b in t2)
    return V1, V2


def _action_1d(Vj, c, Ej, x):
    """``int sqrt(Vj - Ej)`` from the turning point on the side of ``x`` (well minimum at ``c``) to ``x``."""
    v0 = Vj(c)
    f = lambda s: Vj(s) - v0 - Ej
    if f(x) <= 0:
        return 0.0, x
    tp = c if Ej <= 0 else optimize.brentq(f, c, x, xtol=1e-15, rtol=1e-15)
    g = lambda s: np.sqrt(max(f(s), 0.0))
    lo, hi = min(tp, x), max(tp, x)
    return float(integrate.quad(g, lo, hi, epsabs=1e-14, epsrel=1e-13, limit=200)[0]), tp


def separable_distance(model, well, E, x):
    """``d_E(x)`` for a separable potential: least action over the split ``E1 + E2 = E``.

    Returns ``(d, (E1, E2))``.
    """
    V1, V2 = _split_1d(model)
    c = np.asarray(well.center, dtype=float)
    x = np.asarray(x, dtype=float)
    W1 = V1(x[0]) - V1(c[0])
    W2 = V2(x[1]) - V2(c[1])
    if E <= 0:
        return _action_1d(V1, c[0], 0.0, x[0])[0] + _action_1d(V2, c[1], 0.0, x[1])[0], (0.0, 0.0)
    lo, hi = max(0.0, E - W2), min(E, W1)
    if lo > hi:
        return 0.0, (np.nan, np.nan)
    A = lambda e1: _action_1d(V1, c[0], e1, x[0])[0] + _action_1d(V2, c[1], E - e1, x[1])[0]
    if hi - lo < 1e-15:
        return A(lo), (lo, E - lo)
    r = optimize.minimize_scalar(A, bounds=(lo, hi), method="bounded",
                                 options={"xatol": 1e-14 * max(1.0, E)})
    cands = [(A(lo), lo), (A(hi), hi), (r.fun, r.x)]
    d, e1 = min(cands)
    return float(d), (float(e1), float(E - e1))


def prop2_separable_check(model, well, E, x):
    """Compare ``d_E - d_0`` with the hyperbolic surrogate ``sum iota'_j log(z'_j / y'_j)``.

    ``iota'_j = E_j / (2 lam_j)``, ``y'_j = sqrt(iota'_j)`` (the umbilic) and
    ``z'_j = (lam_j |x_j'| - xi_j) / sqrt(2 lam_j)`` with the harmonic
    ``xi_j = sqrt(lam_j^2 x_j'^2 - E_j)``.

    Returns
    -------
    lhs, rhs, residual : float
    """
    dE, (E1, E2) = separable_distance(model, well, E, x)
    d0, _ = separable_distance(model, well, 0.0, x)
    lhs = dE - d0
    lam = np.asarray(well.frequencies)
    yl = np.abs(np.asarray(x, dtype=float) - well.center)
    rhs = 0.0
    for Ej, lj, yj in zip((E1, E2), lam, yl):
        if Ej <= 0:
            continue
        io = Ej / (2 * lj)
        xi = np.sqrt(max(lj ** 2 * yj ** 2 - Ej, 0.0))
        z = (lj * yj - xi) / np.sqrt(2 * lj)
        rhs += io * np.log(z / np.sqrt(io))
    return float(lhs), float(rhs), float(lhs - rhs)


def prop2_exponent(model, well, energies, C=1.0, direction=(-np.sqrt(3) / 2, 0.5)):
    """Fitted exponent ``p`` in ``|residual| ~ mu^p`` along a ladder of energies.

    The probe point sits at ``center + C sqrt(mu) u``.
    """
    u = np.asarray(direction, dtype=float)
    u = u / np.linalg.norm(u)
    mus, res, rows = [], [], []
    for E in energies:
        mu = np.sqrt(E)
        x = well.center + C * np.sqrt(mu) * u
        lhs, rhs, r = prop2_separable_check(model, well, E, x)
        mus.append(mu)
        res.append(abs(r))
        rows.append((E, mu, lhs, rhs, r, rhs / (mu ** 2 * np.log(1 / mu))))
    slope = np.polyfit(np.log(mus), np.log(res), 1)[0]
    return float(slope), rows


def n_mu_level(E, well, s=1.0):
    """Level ``v`` of ``N_mu(s) = {V = v}``, at distance about ``s mu`` outside ``{V = E}``."""
    return float(E + 2.0 * min(well.frequencies) * s * E)


def _level_launcher(model, well, E_launch_level, Eprime):
    """Launch from ``{V = v}`` with outward normal momentum on the ``E'`` shell."""
    wb = well_boundary(model, well, E_launch_level)
    s_axis = wb.nearest_s(_axis_boundary_point(model, well, E_launch_level))

    def launch(s):
        x = wb.point_at(s_axis + s)[0]
        g = model.gradient(x)
        return x, launch_on_shell(model, x, Eprime, g), 0.0
    return launch, wb.perimeter


def level_distance(model, well, v_N, Eprime, x, window=None):
    """``d_{E'}(x, N)`` with ``N = {V = v_N}`` around ``well``.

    Separable potentials with ``x`` on the well's principal axis 1 use the
    exact 1-D quadrature; otherwise a ray from ``N`` is shot through ``x``.
    """
    x = np.asarray(x, dtype=float)
    if model.is_separable() and abs(x[1] - well.center[1]) < 1e-14:
        side = np.sign(x[0] - well.center[0])
        f = lambda s: model.value((s, well.center[1])) - v_N
        xn = optimize.brentq(f, well.center[0], x[0], xtol=1e-15, rtol=1e-15)
        g = lambda s: np.sqrt(max(model.value((s, well.center[1])) - Eprime, 0.0))
        lo, hi = sorted((xn, x[0]))
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", integrate.IntegrationWarning)
            return float(integrate.quad(g, lo, hi, epsabs=1e-15, epsrel=1e-14, limit=200)[0])
    launch, period = _level_launcher(model, well, v_N, Eprime)
    p0 = _param_facing(model, well, v_N, launch, period, x)
    win = window or 0.25 * period
    return float(shoot_through(model, launch, p0 - win, p0 + win, x, Eprime).action[-1])


@dataclass
class SmoothnessReport:
    points: np.ndarray
    second_diff: np.ndarray      # rows: points; cols: D(2 delta), D(delta), D(delta / 2)
    ratios: np.ndarray
    dE_fd: np.ndarray
    dE_transit: np.ndarray
    n_minima: int
    smooth: bool
    eps: float
    delta: float
    level: float


def prop3_smoothness_check(model, E, x0=None, n_points=4, eps=0.1, s=1.0, delta=None,
                           wells=None, tol_ratio=0.25):
    """Second differences in ``E'`` of ``d_{E'}(x, N)`` along ``Upsilon_E``.

    For each probe point the 3-point second difference ``D(delta)`` is
    evaluated at ``2 delta, delta, delta/2``; smooth dependence gives
    ``(D(2d) - D(d)) / (D(d) - D(d/2)) -> 4``.
    """
    from .potential import find_wells
    left = wells[0] if wells is not None else find_wells(model)[0]
    mu = np.sqrt(E)
    delta = delta if delta is not None else mu ** 2 / 8.0
    vN = n_mu_level(E, left, s)
    nmin, geo = count_launch_minima(model, E, wells=wells)
    if x0 is None:
        x = geo.x
        seg = np.concatenate([[0.0], np.cumsum(np.linalg.norm(np.diff(x, axis=0), axis=1))])
        u = seg / seg[-1]
        ok = (u <= 1.0 - eps) & (model.value(x) > vN + 1e-3) & (x[:, 0] * np.sign(left.center[0]) > 0)
        ok &= u <= 0.5
        cand = np.nonzero(ok)[0]
        pick = cand[np.linspace(0, cand.size - 1, n_points).round().astype(int)]
        pts = x[pick]
    else:
        pts = np.atleast_2d(np.asarray(x0, dtype=float))
    D, R, dfd, dtr = [], [], [], []
    for p in pts:
        g = {}
        for k in (-4, -2, -1, 0, 1, 2, 4):
            g[k] = level_distance(model, left, vN, E + k * delta / 2, p)
        sd = lambda m: (g[m] - 2 * g[0] + g[-m]) / (m * delta / 2) ** 2
        row = [sd(4), sd(2), sd(1)]
        D.append(row)
        R.append((row[0] - row[1]) / (row[1] - row[2]))
        dfd.append((_distance(model, left, E + delta / 2, p) - _distance(model, left, E - delta / 2, p)) / delta)
        d, path = ray_distance(model, left, E, p) if not _on_axis(model, left, p) else (None, None)
        dtr.append(-path.t[-1] if path is not None else -_axis_transit(model, left, E, p))
    R = np.array(R)
    return SmoothnessReport(points=pts, second_diff=np.array(D), ratios=R,
                            dE_fd=np.array(dfd), dE_transit=np.array(dtr), n_minima=nmin,
                            smooth=bool(np.all(np.abs(R - 4.0) <= tol_ratio * 4.0)),
                            eps=eps, delta=delta, level=vN)


def _distance(model, well, E, x):
    if model.is_separable():
        return separable_distance(model, well, E, x)[0]
    return ray_distance(model, well, E, x)[0]


def _on_axis(model, well, x):
    return model.is_separable() and abs(x[1] - well.center[1]) < 1e-14


def _axis_transit(model, well, E, x):
    """Transit time ``int ds / (2 sqrt(V - E))`` along the axis from the turning point to ``x``."""
    c = float(well.center[0])
    f = lambda s: model.value((s, 0.0)) - E
    tp = optimize.brentq(f, c, float(x[0]), xtol=1e-15, rtol=1e-15)
    # s = tp + sign * u^2 removes the endpoint singularity
    sg = np.sign(x[0] - tp)
    U = np.sqrt(abs(x[0] - tp))
    g = lambda u: u / np.sqrt(max(f(tp + sg * u * u), 1e-300))
    return float(integrate.quad(g, 0.0, U, epsabs=1e-13, epsrel=1e-12, limit=200)[0])


def agmon_energy_derivative(model, well, E, x):
    """``d d_E(x) / dE = -`` (transit time of the Lambda-boundary ray reaching ``x``)."""
    if _on_axis(model, well, x):
        return -_axis_transit(model, well, E, np.asarray(x, dtype=float))
    return -ray_distance(model, well, E, x)[1].t[-1]
