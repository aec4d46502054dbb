"""Tunnel cycles, WKB quasimodes in the forbidden region and doublet splittings.

A quasimode is ``u = a exp(-F / h)`` on a fan of instanton rays, with
``a = a0 / sqrt(|J|)`` and ``J = det[dx/dt, dx/dp]``.  The splitting of a
symmetric doublet is the flux integral

    4 h^2 int_sigma u_L (n . grad u_R) dx2

over an interval ``sigma`` of the symmetry axis ``x1 = 0``, where ``n`` is
the unit normal pointing from the first well towards the second.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from math import factorial

import numpy as np
from scipy import integrate, interpolate, optimize

from . import agmon
from .agmon import (ActionChart, GeodesicPath, action_chart, instanton_flow,
                    minimal_geodesic, mirror_path, s0_between_wells, sheet_launcher)
from .errors import (CausticReached, CoverageGap, DegenerateCriticalPoint,
                     NoCriticalPoint, TunnelkitError)
from .potential import find_wells
from .spectrum import project_radially, spectral_series

MIRROR = np.array([-1.0, 1.0])


# ------------------------------------------------------------------ cycles

@dataclass(frozen=True)
class TunnelCycle:
    """Shot from a left umbilic to the axis, compared with the mirror image.

    ``mismatch`` is the phase-space distance at the axis between the forward
    shot ``(x2, xi2)`` and the mirror-required ``(x2, -xi2)``, with ``x2``
    scaled by ``sqrt(lam2)`` and ``xi2`` by ``1/sqrt(lam2)``.
    """

    y_L: np.ndarray
    y_R: np.ndarray
    path: GeodesicPath
    mismatch: float
    is_cycle: bool
    minimal: bool
    action: float
    label: str = ""


def cycle_shot(model, y, E, lam2, t_max=30.0, dt=1e-3, rmax=None):
    """Lambda-boundary shot from ``y`` (``xi = 0``) to the axis and its mismatch.

    Works from either side of the axis.
    """
    y = np.asarray(y, dtype=float)
    rmax = rmax or agmon._scan_radius(model)
    path = instanton_flow(model, y, np.zeros(2), E, t_max, dt, x1_stop=0.0, rmax=rmax,
                          tol_shell=1e-6)
    if path.reason != "crossed":
        return path, np.inf
    return path, float(2.0 * abs(path.xi[-1, 1]) / np.sqrt(lam2))


def find_tunnel_cycles(model, state, grid=None, wells=None, tol_cycle=1e-4, tol_action=None,
                       include_axis=True, t_max=30.0, dt=1e-3):
    """Shoot from the inner left umbilics of ``state`` and classify tunnel cycles.

    Parameters
    ----------
    model : PotentialModel
    state : TorusState
        Umbilics are projected onto ``{V = E}`` if they are not on it already.
    grid : GridSpec, optional
        If given, ``S0`` comes from fast marching; otherwise from the minimal
        geodesic.
    tol_cycle : float
        Scaled mismatch below which a shot is a cycle.
    tol_action : float, optional
        Default ``1e-3 * S0``.
    include_axis : bool
        Also shoot from the launch point of the minimal geodesic.

    Returns
    -------
    list of TunnelCycle
        Possibly empty; cycles are exceptional.
    """
    left, right = wells or find_wells(model)
    E = float(state.energy)
    lam2 = left.lambda2
    geo = minimal_geodesic(model, E, wells=(left, right))
    if grid is not None:
        S0 = s0_between_wells(model, E, grid, wells=(left, right))[0]
    else:
        S0 = float(geo.action[-1])
    tol_action = 1e-3 * S0 if tol_action is None else tol_action

    cands = []
    loc = left.to_local(state.umbilics)
    s = left.inward_sign()
    for k in range(len(loc)):
        if loc[k, 0] * s > 0:
            cands.append((state.umbilics[k], "umbilic+" if loc[k, 1] >= 0 else "umbilic-"))
    pts = np.array([c[0] for c in cands])
    off = np.abs(model.value(pts) - E)
    if np.any(off > 1e-10):
        pts = project_radially(model, left, pts, E)
    cands = [(p, c[1]) for p, c in zip(pts, cands)]
    if include_axis:
        cands.append((geo.x[0].copy(), "axis"))

    out = []
    for y, label in cands:
        path, mis = cycle_shot(model, y, E, lam2, t_max, dt)
        S = 2.0 * float(path.action[-1]) if np.isfinite(mis) else np.inf
        is_cycle = bool(mis <= tol_cycle)
        minimal = bool(is_cycle and abs(S - S0) <= tol_action)
        if is_cycle:
            path = mirror_path(path)
        out.append(TunnelCycle(y_L=y, y_R=y * MIRROR, path=path, mismatch=mis,
                               is_cycle=is_cycle, minimal=minimal, action=S, label=label))
    return out


# --------------------------------------------------------------- quasimodes

def _sheet_normalization(well, alpha1, h, E):
    """Amplitude constant matching the harmonic state of index ``(alpha1, 0)``.

    Along the launch axis the ray amplitude ``a0 / sqrt(J)`` joins the
    large-argument asymptotics of the normalized oscillator eigenfunction
    in principal direction 1 times the transverse Gaussian.
    """
    lam1, lam2 = well.frequencies
    n1 = (lam1 / (np.pi * h)) ** 0.25 / np.sqrt(2.0 ** alpha1 * factorial(alpha1))
    ell = np.sqrt(h / lam1)
    b = np.sqrt(E) / lam1
    return float(n1 * (lam2 / (np.pi * h)) ** 0.25 * (2.0 / ell) ** alpha1
                 * np.sqrt(2.0 * lam1) * (b / 2.0) ** (alpha1 + 0.5)
                 * np.exp(-E / (4.0 * lam1 * h)))


@dataclass(frozen=True)
class QuasiModeWKB:
    """Leading-order WKB quasimode ``a exp(-F / h)`` carried by an action chart.

    Attributes
    ----------
    chart : ActionChart
    h : float
    a0 : float
        Normalization constant, ``a = a0 / sqrt(|J|)`` along every ray.
    amplitude : list of ndarray
        ``a`` at the samples of each ray (infinite at a launch with ``J = 0``).
    validity : str
        Where the amplitude is trustworthy.
    normalization : str
        ``"harmonic"`` when matched to the oscillator state, else ``"unit"``.
    flags : tuple of str
    """

    chart: ActionChart
    h: float
    a0: float
    amplitude: list = field(repr=False)
    validity: str = ""
    normalization: str = "unit"
    flags: tuple = ()
    alpha: tuple = (0, 0)

    def values(self, k):
        """``u`` along ray ``k``."""
        p = self.chart.tube[k]
        return self.amplitude[k] * np.exp(-p.action / self.h)

    def _interior(self, k):
        J = np.abs(self.chart.tube[k].jacobian())
        m = np.isfinite(self.amplitude[k]) & (J >= 0.05 * J.max())
        m[[0, -1]] = False
        return m

    def transport_residual(self):
        """``max |da/dt + a Lap F|`` over interior samples, relative to ``max a``.

        Along a ray ``d/dt = 2 grad F . grad``, so this is the transport residual
        ``|2 grad F . grad a + a Lap F|``; ``da/dt`` comes from a cubic spline in ``t``.
        """
        model = self.chart.info["model"]
        worst, amax = 0.0, 0.0
        for k, p in enumerate(self.chart.tube):
            if len(p.t) < 5:
                continue
            a = self.amplitude[k]
            m = self._interior(k)
            if not m.any():
                continue
            g = model.gradient(p.x)
            lap = np.full(a.shape, np.nan)
            for i in np.nonzero(m)[0]:
                lap[i] = agmon._laplacian_from_tangent(p.xi[i], p.tangent[i], g[i])
            ok = np.isfinite(a)
            da = np.full(a.shape, np.nan)
            da[ok] = interpolate.CubicSpline(p.t[ok], a[ok])(p.t[ok], 1)
            r = np.abs(da + a * lap)
            worst = max(worst, float(np.max(r[m])))
            amax = max(amax, float(np.max(a[m])))
        return worst / amax if amax > 0 else np.inf

    def jacobian_residual(self):
        """Relative gap between ``a`` and ``a0 / sqrt(|J|)`` with ``J`` from neighbouring rays."""
        fd = self.chart.jacobians_fd()
        worst, amax = 0.0, 0.0
        for k, Jk in enumerate(fd):
            if Jk is None:
                continue
            m = self._interior(k)[:Jk.size]
            a = self.amplitude[k][:Jk.size]
            with np.errstate(divide="ignore", invalid="ignore"):
                afd = self.a0 / np.sqrt(np.abs(Jk))
            with np.errstate(invalid="ignore"):
                worst = max(worst, float(np.max(np.abs(a - afd)[m], initial=0.0)))
            amax = max(amax, float(np.max(a[m], initial=0.0)))
        return worst / amax if amax > 0 else np.inf

    def axis_trace(self):
        """Splines along the symmetry axis, indexed by ``x2``.

        Returns a dict with ``F``, ``log_a``, ``xi1``, ``xi2``, ``dlog_a_dx1``
        (``CubicSpline`` objects) and ``span`` (covered ``x2`` interval).
        """
        cache = self.chart.info.setdefault("_trace", {})
        key = self.h
        if key in cache:
            return cache[key]
        c = self.chart.crossings()
        if c["x2"].size < 4:
            raise CoverageGap("fewer than four rays of the chart reach the axis")
        x2 = c["x2"]
        if np.any(np.diff(x2) <= 0):
            raise CausticReached("rays cross before reaching the axis")
        log_a = np.log(self.a0) - 0.5 * np.log(np.abs(c["J"]))
        s_log_a = interpolate.CubicSpline(x2, log_a)
        d2 = s_log_a(x2, 1)
        # d/dt log a = 2 xi1 d1 log a + 2 xi2 d2 log a
        d1 = (c["dlog_a_dt"] - 2.0 * c["xi2"] * d2) / (2.0 * c["xi1"])
        out = {
            "F": interpolate.CubicSpline(x2, c["F"]),
            "log_a": s_log_a,
            "xi1": interpolate.CubicSpline(x2, c["xi1"]),
            "xi2": interpolate.CubicSpline(x2, c["xi2"]),
            "dlog_a_dx1": interpolate.CubicSpline(x2, d1),
            "span": (float(x2[0]), float(x2[-1])),
            "nodes": x2,
        }
        cache[key] = out
        return out


def build_quasimode(chart, h, alpha=(0, 0), normalize=True):
    """Attach the transport amplitude ``a = a0 / sqrt(|J|)`` to an action chart.

    Parameters
    ----------
    chart : ActionChart
        Must carry linearised-flow tangents; rays are already cut before caustics.
    h : float
    alpha : tuple of int
        Torus index; ``alpha[0]`` enters the harmonic matching of ``a0``.
    normalize : bool
        Match ``a0`` to the oscillator state (axis charts only); otherwise ``a0 = 1``.

    Returns
    -------
    QuasiModeWKB

    Raises
    ------
    CausticReached
        If the Jacobian changes sign inside the tube.
    """
    flags = []
    if normalize and chart.kind == "axis" and chart.well is not None:
        a0 = _sheet_normalization(chart.well, int(alpha[0]), h, chart.energy)
        norm = "harmonic"
        if alpha[1] > 0:
            flags.append("transverse_excited")
    else:
        a0, norm = 1.0, "unit"
    amps = []
    for p in chart.tube:
        J = p.jacobian()
        nz = np.abs(J) > 0
        if nz.sum() > 1 and np.any(np.sign(J[nz]) != np.sign(J[nz][-1])):
            raise CausticReached("Jacobian changes sign inside the tube")
        with np.errstate(divide="ignore"):
            amps.append(a0 / np.sqrt(np.abs(J)))
    validity = "tube interior between the launch edge and the axis, before caustics"
    return QuasiModeWKB(chart=chart, h=float(h), a0=a0, amplitude=amps, validity=validity,
                        normalization=norm, flags=tuple(flags), alpha=tuple(alpha))


def mirror_chart(chart, well):
    """Reflection of an action chart through the symmetry axis."""
    tube = []
    for p in chart.tube:
        tan = None if p.tangent is None else p.tangent * np.array([-1.0, 1.0, -1.0, 1.0])
        tube.append(GeodesicPath(p.energy, p.t, p.x * MIRROR, p.xi * MIRROR, p.action,
                                 p.source * MIRROR, p.reason, tan, dict(p.info)))
    return replace(chart, source=chart.source * MIRROR, tube=tube, well=well,
                   info={"model": chart.info["model"]})


def mirror_quasimode(qm, well):
    chart = mirror_chart(qm.chart, well)
    return replace(qm, chart=chart)


def axis_quasimode_pair(model, E, h, alpha=(0, 0), wells=None, fan_width=None, n_rays=41,
                        dt=1e-3, caustic_margin=0.1):
    """Left quasimode launched from the axis turning point at ``E`` and its mirror.

    The fan spans ``4 sqrt(h / lam2)`` on each side of the axis, enough for the
    flux integrand to fall below ``1e-3`` of its peak.
    """
    left, right = wells or find_wells(model)
    y = np.array([agmon.axis_turning_point(model, E, np.sign(left.center[0])), 0.0])
    fan_width = fan_width or 4.0 * np.sqrt(h / left.lambda2)
    chart = action_chart(model, left, y, E, fan_width=fan_width, n_rays=n_rays, dt=dt,
                         kind="axis", caustic_margin=caustic_margin)
    qL = build_quasimode(chart, h, alpha)
    return qL, mirror_quasimode(qL, right)


# ---------------------------------------------------------------- splitting

def _normal(u_a, u_b):
    d = np.asarray(u_b.chart.well.center) - np.asarray(u_a.chart.well.center)
    return float(np.sign(d[0]))


def _coverage(u_a, u_b):
    ta, tb = u_a.axis_trace(), u_b.axis_trace()
    return max(ta["span"][0], tb["span"][0]), min(ta["span"][1], tb["span"][1])


def flux_integrand(u_a, u_b, x2):
    """``4 h^2 u_a (n . grad u_b)`` on the axis at heights ``x2``.

    ``n . grad u_b = n1 (-xi1_b / h + d1 log a_b) u_b`` with ``n1 = +-1``.
    """
    h = u_a.h
    ta, tb = u_a.axis_trace(), u_b.axis_trace()
    n1 = _normal(u_a, u_b)
    logu = ta["log_a"](x2) + tb["log_a"](x2) - (ta["F"](x2) + tb["F"](x2)) / h
    fac = n1 * (-tb["xi1"](x2) / h + tb["dlog_a_dx1"](x2))
    return 4.0 * h * h * np.exp(logu) * fac


def select_sigma(u_a, u_b, rel=1e-3, n=4001):
    """Interval of the axis where the flux integrand exceeds ``rel`` of its peak.

    Raises
    ------
    CoverageGap
        If the integrand is still above ``rel`` of its peak where a tube ends.
    """
    lo, hi = _coverage(u_a, u_b)
    if not hi > lo:
        raise CoverageGap("the two tubes do not overlap on the axis")
    x2 = np.linspace(lo, hi, n)
    g = np.abs(flux_integrand(u_a, u_b, x2))
    peak = g.max()
    above = np.nonzero(g >= rel * peak)[0]
    if above[0] == 0 or above[-1] == n - 1:
        raise CoverageGap(f"integrand above {rel:g} of peak at the edge of tube coverage")
    return float(x2[above[0] - 1]), float(x2[above[-1] + 1])


def herring_splitting(u_L, u_R=None, sigma=None, h=None, n=2001):
    """Flux integral ``4 h^2 int_sigma u_L (n . grad u_R) dx2`` on the symmetry axis.

    Parameters
    ----------
    u_L, u_R : QuasiModeWKB
        ``u_R`` defaults to the mirror image of ``u_L``.
    sigma : tuple of float, optional
        Integration interval on the axis; default from ``select_sigma``.
    h : float, optional
        Must agree with the quasimodes.
    n : int
        Simpson nodes on ``sigma``.

    Returns
    -------
    float
        Signed splitting estimate ``E_anti - E_sym``.

    Raises
    ------
    CoverageGap
        If ``sigma`` leaves either tube.
    """
    if u_R is None:
        raise ValueError("pass the partner quasimode (mirror_quasimode gives the symmetric one)")
    if h is not None and not (h == u_L.h == u_R.h):
        raise ValueError("h disagrees with the quasimodes")
    lo, hi = _coverage(u_L, u_R)
    if sigma is None:
        sigma = select_sigma(u_L, u_R)
    a, b = sigma
    if a < lo - 1e-12 or b > hi + 1e-12:
        raise CoverageGap(f"sigma = ({a:.4g}, {b:.4g}) leaves tube coverage ({lo:.4g}, {hi:.4g})")
    x2 = np.linspace(a, b, n | 1)
    return float(integrate.simpson(flux_integrand(u_L, u_R, x2), x=x2))


@dataclass(frozen=True)
class StationaryPoint:
    x2: float
    phase: float
    hessian: float
    S_L: float
    S_R: float


def phase_critical_point(u_a, u_b, sigma=None, tol_hess=1e-8):
    """Critical point of ``F_a + F_b`` on the axis.

    ``d/dx2 (F_a + F_b) = xi2_a + xi2_b`` is interpolated over the tube nodes
    and its root located by ``brentq``.

    Raises
    ------
    NoCriticalPoint
        If the derivative keeps one sign on ``sigma``.
    DegenerateCriticalPoint
        If the second derivative is below ``tol_hess``.
    """
    ta, tb = u_a.axis_trace(), u_b.axis_trace()
    lo, hi = sigma if sigma is not None else _coverage(u_a, u_b)
    d = lambda s: float(ta["xi2"](s) + tb["xi2"](s))
    nodes = np.union1d(ta["nodes"], tb["nodes"])
    nodes = np.concatenate([[lo], nodes[(nodes > lo) & (nodes < hi)], [hi]])
    vals = np.array([d(s) for s in nodes])
    zero = np.nonzero(vals == 0)[0]
    if zero.size:
        x = float(nodes[zero[0]])
    else:
        k = np.nonzero(np.sign(vals[:-1]) != np.sign(vals[1:]))[0]
        if k.size == 0:
            raise NoCriticalPoint("phase has no stationary point on sigma")
        x = optimize.brentq(d, nodes[k[0]], nodes[k[0] + 1], xtol=1e-15, rtol=1e-15)
    hess = float(ta["xi2"](x, 1) + tb["xi2"](x, 1))
    if abs(hess) < tol_hess:
        raise DegenerateCriticalPoint(f"|phase''| = {abs(hess):.3e} at x2 = {x:.6g}")
    Fa, Fb = float(ta["F"](x)), float(tb["F"](x))
    return StationaryPoint(x2=float(x), phase=Fa + Fb, hessian=hess, S_L=Fa, S_R=Fb)


def stationary_phase_splitting(u_L, u_R, sigma=None, h=None, tol_hess=1e-8):
    """Leading Gaussian evaluation of the flux integral around its critical point.

    ``4 h^2 a_L a_R (n . (-grad F_R / h + grad log a_R)) sqrt(2 pi h / |phase''|)
    exp(-phase / h)`` with every factor taken at the critical point.

    Raises
    ------
    NoCriticalPoint, DegenerateCriticalPoint
    """
    h = u_L.h if h is None else h
    cp = phase_critical_point(u_L, u_R, sigma, tol_hess)
    x = cp.x2
    tL, tR = u_L.axis_trace(), u_R.axis_trace()
    n1 = _normal(u_L, u_R)
    amp = np.exp(tL["log_a"](x) + tR["log_a"](x))
    fac = n1 * (-tR["xi1"](x) / h + tR["dlog_a_dx1"](x))
    return float(4.0 * h * h * amp * fac * np.sqrt(2.0 * np.pi * h / abs(cp.hessian))
                 * np.exp(-cp.phase / h))


# ---------------------------------------------------------- telescoping

@dataclass(frozen=True)
class CorrespondenceDefect:
    """The three telescoping terms of ``2 F(x_bar) - S0(E')``.

    ``terms[0] = 2 (F(x_bar) - d_E(x_bar))`` (chart phase against eikonal),
    ``terms[1] = 2 (d_E(x_bar) - d_E'(x_bar))`` (energy shift),
    ``terms[2] = 2 (d_E'(x_bar) - d_E'(x_E'))`` (transport along the axis).
    """

    terms: tuple
    total: float
    x_bar: np.ndarray
    E: float
    E_prime: float
    term2_taylor: float
    info: dict = field(default_factory=dict, repr=False)


def _critical_sheet_point(model, well, y, E, n_scan=24):
    """Point of the axis reached by the torus sheet through ``y`` with ``xi2 = 0``.

    Returns ``(x_bar, F, xi)``.  The launch edge itself may reach the axis;
    its endpoint then counts when the momentum there is normal to the axis.
    """
    launch, kind = sheet_launcher(model, well, y, E)
    rmax = agmon._scan_radius(model)

    def shot(p):
        x0, xi0, f0 = launch(p)
        if abs(x0[0]) < 1e-13:
            return x0, f0, xi0
        path = instanton_flow(model, x0, xi0, E, 30.0, 1e-3, x1_stop=0.0, action0=f0,
                              rmax=rmax, tol_shell=1e-6)
        if path.reason != "crossed":
            return None
        return path.x[-1], float(path.action[-1]), path.xi[-1]

    if kind == "axis":
        lo, hi = -0.5, 0.5
    else:
        yl = well.to_local(y)
        d = np.sign(yl[0]) * well.axes[:, 0]
        if d[0] * (-y[0]) <= 0:
            raise NoCriticalPoint("the outward edge does not face the axis")
        dist = -y[0] / d[0]
        pmax = np.arccosh(1.0 + dist / abs(yl[0])) / (2.0 * well.lambda1)
        lo, hi = 0.0, float(pmax)
        end = launch(hi)
        if abs(end[1][1]) < 1e-12 * max(1.0, np.linalg.norm(end[1])):
            return end[0].copy(), float(end[2]), end[1]
        hi = float(np.nextafter(hi, 0.0))
    ps = np.linspace(lo, hi, n_scan)
    shots = [shot(p) for p in ps]
    g = np.array([s[2][1] if s is not None else np.nan for s in shots])
    k = np.nonzero(np.isfinite(g[:-1]) & np.isfinite(g[1:]) & (np.sign(g[:-1]) != np.sign(g[1:])))[0]
    if k.size == 0:
        raise NoCriticalPoint("no ray of the sheet meets the axis normally")
    p = optimize.brentq(lambda q: shot(q)[2][1], ps[k[0]], ps[k[0] + 1], xtol=1e-14)
    x, F, xi = shot(p)
    return np.asarray(x), float(F), np.asarray(xi)


def correspondence_defect(model, state=None, E_prime=None, grid=None, wells=None,
                          umbilic=None):
    """Split ``2 F(x_bar) - S0(E')`` into its three telescoping terms.

    Parameters
    ----------
    model : PotentialModel
    state : TorusState, optional
        Supplies the energy and the inner umbilic.
    E_prime : float, optional
        Comparison energy, default the state energy.
    grid : GridSpec, optional
        Adds fast-marching values of the same terms under ``info["grid_terms"]``.
    umbilic : array_like or "axis", optional
        Override the umbilic; ``"axis"`` uses the launch point of the minimal
        geodesic (the minimal cycle).

    Returns
    -------
    CorrespondenceDefect

    Raises
    ------
    NoCriticalPoint
        If the sheet never meets the axis with normal momentum.
    """
    left, right = wells or find_wells(model)
    E = float(state.energy)
    Ep = E if E_prime is None else float(E_prime)
    if isinstance(umbilic, str) and umbilic == "axis":
        y = minimal_geodesic(model, E, wells=(left, right)).x[0].copy()
    elif umbilic is not None:
        y = np.asarray(umbilic, dtype=float)
    else:
        y = state.inner_umbilic(left)
        if abs(model.value(y) - E) > 1e-10:
            y = project_radially(model, left, [y], E)[0]
    x_bar, F, _ = _critical_sheet_point(model, left, y, E)
    d_E = agmon._distance(model, left, E, x_bar)
    d_Ep = d_E if Ep == E else agmon._distance(model, left, Ep, x_bar)
    geo = minimal_geodesic(model, Ep, wells=(left, right))
    half = float(geo.info.get("half_action", geo.action[-1] / 2.0))
    terms = (2.0 * (F - d_E), 2.0 * (d_E - d_Ep), 2.0 * (d_Ep - half))
    Em = 0.5 * (E + Ep)
    taylor = 2.0 * (E - Ep) * agmon.agmon_energy_derivative(model, left, Em, x_bar) \
        if E != Ep else 0.0
    info = {"umbilic": y, "F": F, "S0_prime": 2.0 * half}
    if grid is not None:
        fE = agmon.agmon_distance(model, E, left, grid)
        fEp = fE if Ep == E else agmon.agmon_distance(model, Ep, left, grid)
        S0g = s0_between_wells(model, Ep, grid, wells=(left, right))[0]
        gE, gEp = float(fE(x_bar)), float(fEp(x_bar))
        info["grid_terms"] = (2 * (F - gE), 2 * (gE - gEp), 2 * gEp - S0g)
    return CorrespondenceDefect(terms=tuple(float(t) for t in terms), total=float(sum(terms)),
                                x_bar=x_bar, E=E, E_prime=Ep, term2_taylor=float(taylor),
                                info=info)


# ------------------------------------------------------------------ series

@dataclass(frozen=True)
class SplittingEstimate:
    """One row of the spectral tunnel series.

    Splittings are signed ``E_anti - E_sym``; ``None`` means not computed.
    """

    alpha: tuple
    h: float
    E_center: float
    S0: float
    x_E: np.ndarray
    delta_herring: float | None
    delta_stationary: float | None
    delta_reference: float | None = None
    S_L: float | None = None
    S_R: float | None = None
    flags: tuple = ()
    errors: dict = field(default_factory=dict)

    @property
    def sign(self):
        d = self.delta_herring
        return None if d is None else int(np.sign(d))


def splitting_for(model, E, h, alpha=(0, 0), wells=None, n_rays=41, tol_hess=1e-8):
    """Herring and stationary-phase splittings for one state energy.

    Returns ``(delta_herring, delta_stationary, StationaryPoint, QuasiModeWKB)``.
    """
    qL, qR = axis_quasimode_pair(model, E, h, alpha, wells, n_rays=n_rays)
    sigma = select_sigma(qL, qR)
    dh = herring_splitting(qL, qR, sigma)
    cp = phase_critical_point(qL, qR, sigma, tol_hess)
    ds = stationary_phase_splitting(qL, qR, sigma, tol_hess=tol_hess)
    return dh, ds, cp, qL


def _series_row(model, st, h, grid, wells, barrier, n_rays, tol_transport, tol_hess):
    E = float(st.energy)
    flags, errors = [], {}
    S0, x_E = np.nan, np.full(2, np.nan)
    dh = ds = SL = SR = None
    if E >= barrier:
        flags.append("above_barrier")
        return dict(S0=S0, x_E=x_E, dh=dh, ds=ds, SL=SL, SR=SR, flags=flags, errors=errors)
    try:
        geo = minimal_geodesic(model, E, grid=grid, wells=wells)
        S0 = float(geo.action[-1])
        x_E = geo.x[int(np.argmin(np.abs(geo.x[:, 0])))].copy()
        if "s0_grid" in geo.info:
            errors["S0_grid"] = float(geo.info["s0_grid"])
    except TunnelkitError as exc:
        flags.append(type(exc).__name__)
        errors["S0"] = str(exc)
    if st.alpha[1] > 0:
        flags.append("transverse_excited")
    elif np.isfinite(S0):
        try:
            dh, ds, cp, qL = splitting_for(model, E, h, st.alpha, wells, n_rays, tol_hess)
            SL, SR = cp.S_L, cp.S_R
            x_E = np.array([0.0, cp.x2])
            if qL.transport_residual() > tol_transport:
                flags.append("transport_residual")
        except CausticReached as exc:
            flags.append("caustic")
            errors["splitting"] = str(exc)
        except TunnelkitError as exc:
            flags.append(type(exc).__name__)
            errors["splitting"] = str(exc)
    return dict(S0=S0, x_E=x_E, dh=dh, ds=ds, SL=SL, SR=SR, flags=flags, errors=errors)


def spectral_tunnel_series(model, h, E0, grid=None, wells=None, project=True,
                           normal_form=None, reference=None, n_rays=41, tol_transport=1e-3,
                           tol_hess=1e-8, alphas=None):
    """Splitting estimates for every state of the EBK series ``|alpha| h <= E0``.

    Parameters
    ----------
    model : PotentialModel
    h, E0 : float
    grid : GridSpec, optional
        Fast-marching ``S0`` is recorded next to the ray value.
    normal_form : NormalForm, optional
        Orders states by the quartic-corrected energy for reference matching.
    reference : callable, optional
        ``reference(rank) -> delta`` supplying eigensolver splittings by
        doublet rank; errors it raises are recorded per state.
    alphas : iterable of tuple, optional
        Restrict the rows to these indices.

    Returns
    -------
    list of SplittingEstimate
        Per-state failures are recorded in ``flags`` and ``errors``.
    """
    left, right = wells or find_wells(model)
    states = spectral_series(left, h, E0, model, project, normal_form)
    barrier = model.barrier_height()
    key = (lambda s: s.energy_quartic) if normal_form is not None else (lambda s: s.energy)
    ranked = sorted(range(len(states)), key=lambda i: (key(states[i]), states[i].alpha))
    rank = {i: r for r, i in enumerate(ranked)}
    keep = None if alphas is None else {tuple(a) for a in alphas}
    rows = []
    for i, st in enumerate(states):
        if keep is not None and st.alpha not in keep:
            continue
        r = _series_row(model, st, h, grid, (left, right), barrier, n_rays, tol_transport,
                        tol_hess)
        dr = None
        if reference is not None and "above_barrier" not in r["flags"]:
            try:
                dr = float(reference(rank[i]))
            except TunnelkitError as exc:
                r["flags"].append(type(exc).__name__)
                r["errors"]["reference"] = str(exc)
        rows.append(SplittingEstimate(alpha=st.alpha, h=float(h), E_center=float(st.energy),
                                      S0=r["S0"], x_E=r["x_E"], delta_herring=r["dh"],
                                      delta_stationary=r["ds"], delta_reference=dr,
                                      S_L=r["SL"], S_R=r["SR"], flags=tuple(r["flags"]),
                                      errors=r["errors"]))
    return rows


def exponent_fit(hs, deltas):
    """Least-squares slope and intercept of ``-log |delta|`` against ``1 / h``."""
    x = 1.0 / np.asarray(hs, dtype=float)
    y = -np.log(np.abs(np.asarray(deltas, dtype=float)))
    A = np.column_stack([x, np.ones_like(x)])
    (slope, icpt), *_ = np.linalg.lstsq(A, y, rcond=None)
    return float(slope), float(icpt)
