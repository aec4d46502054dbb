"""Polynomial double-well potentials, well location and well boundaries.

A potential is a finite sum ``V(x1, x2) = sum c * x1**a * x2**b``.  Everything
downstream (Taylor data for the normal form, the ray integrator, the
eikonal source band) needs exact derivatives, which polynomials give for
free.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from math import comb

import numpy as np
from scipy import optimize

from .errors import (DegenerateWell, EnergyAboveBarrier, NoConvergence,
                     SymmetryViolation)

LEFT = "left"
RIGHT = "right"


def _combine(terms):
    acc = {}
    for c, a, b in terms:
        a, b = int(a), int(b)
        if a < 0 or b < 0:
            raise ValueError("exponents must be non-negative")
        acc[(a, b)] = acc.get((a, b), 0.0) + float(c)
    return tuple(sorted((c, a, b) for (a, b), c in acc.items() if c != 0.0))


class Polynomial:
    """Bivariate polynomial with analytic gradient and Hessian.

    ``terms`` is an iterable of ``(coefficient, a, b)`` triples.  Like terms
    are merged and zero coefficients dropped on construction.
    """

    def __init__(self, terms):
        self.terms = _combine(terms)
        self.coeffs = np.array([t[0] for t in self.terms], dtype=float)
        self.ea = np.array([t[1] for t in self.terms], dtype=np.int64)
        self.eb = np.array([t[2] for t in self.terms], dtype=np.int64)
        self.degree = int(max((a + b for _, a, b in self.terms), default=0))

    def __repr__(self):
        return f"{type(self).__name__}({list(self.terms)!r})"

    def __eq__(self, other):
        return isinstance(other, Polynomial) and self.terms == other.terms

    def __hash__(self):
        return hash(self.terms)

    @staticmethod
    def _split(x):
        x = np.asarray(x, dtype=float)
        return x[..., 0], x[..., 1]

    def value(self, x):
        x1, x2 = self._split(x)
        out = np.zeros(np.broadcast(x1, x2).shape)
        # even powers of |x| keep V(-x1, x2) == V(x1, x2) bit-exact
        ax1, ax2 = np.abs(x1), np.abs(x2)
        for c, a, b in self.terms:
            out = out + c * (ax1 if a % 2 == 0 else x1)**a * (ax2 if b % 2 == 0 else x2)**b
        return out if out.ndim else float(out)

    def gradient(self, x):
        x1, x2 = self._split(x)
        g1 = np.zeros(np.broadcast(x1, x2).shape)
        g2 = np.zeros_like(g1)
        for c, a, b in self.terms:
            if a:
                g1 = g1 + c * a * x1**(a - 1) * x2**b
            if b:
                g2 = g2 + c * b * x1**a * x2**(b - 1)
        return np.stack([g1, g2], axis=-1)

    def hessian(self, x):
        x1, x2 = self._split(x)
        shape = np.broadcast(x1, x2).shape
        h11 = np.zeros(shape)
        h12 = np.zeros(shape)
        h22 = np.zeros(shape)
        for c, a, b in self.terms:
            if a >= 2:
                h11 = h11 + c * a * (a - 1) * x1**(a - 2) * x2**b
            if a and b:
                h12 = h12 + c * a * b * x1**(a - 1) * x2**(b - 1)
            if b >= 2:
                h22 = h22 + c * b * (b - 1) * x1**a * x2**(b - 2)
        row1 = np.stack([h11, h12], axis=-1)
        row2 = np.stack([h12, h22], axis=-1)
        return np.stack([row1, row2], axis=-2)

    def shifted(self, center):
        """Coefficients of ``V(center + y)`` as a polynomial in ``y``."""
        c1, c2 = float(center[0]), float(center[1])
        out = []
        for c, a, b in self.terms:
            for i in range(a + 1):
                for j in range(b + 1):
                    coef = c * comb(a, i) * comb(b, j) * c1**(a - i) * c2**(b - j)
                    out.append((coef, i, j))
        return Polynomial(out)

    def linear_transform(self, m):
        """Polynomial in ``y`` equal to ``V(m @ y)`` for a 2x2 matrix ``m``."""
        m = np.asarray(m, dtype=float)
        out = []
        # (m00 y1 + m01 y2)^a (m10 y1 + m11 y2)^b, expanded binomially
        for c, a, b in self.terms:
            for i in range(a + 1):
                for j in range(b + 1):
                    coef = (c * comb(a, i) * comb(b, j)
                            * m[0, 0]**i * m[0, 1]**(a - i)
                            * m[1, 0]**j * m[1, 1]**(b - j))
                    out.append((coef, i + j, (a - i) + (b - j)))
        return Polynomial(_clean(out))

    def homogeneous(self, degree):
        return {(a, b): c for c, a, b in self.terms if a + b == degree}

    def is_separable(self):
        return all(a == 0 or b == 0 for _, a, b in self.terms)

    def restrict(self, axis):
        """1-D part depending only on coordinate ``axis`` (0 or 1), constants excluded."""
        if axis == 0:
            return [(c, a) for c, a, b in self.terms if b == 0 and a > 0]
        return [(c, b) for c, a, b in self.terms if a == 0 and b > 0]


def _clean(terms, rel=1e-14):
    merged = _combine(terms)
    scale = max((abs(c) for c, _, _ in merged), default=0.0)
    return [(c, a, b) for c, a, b in merged if abs(c) > rel * scale]


class PotentialModel(Polynomial):
    """Mirror-symmetric polynomial potential, ``V(-x1, x2) == V(x1, x2)``.

    Symmetry is checked on the merged coefficients: every surviving term
    must carry an even power of ``x1``.
    """

    def __init__(self, terms):
        super().__init__(terms)
        odd = [(c, a, b) for c, a, b in self.terms if a % 2]
        if odd:
            raise SymmetryViolation(
                f"terms {odd} break the x1 -> -x1 mirror symmetry")

    @classmethod
    def quartic_double_well(cls, transverse=1.0, depth=0.25):
        """``depth * (x1**2 - 1)**2 + transverse * x2**2``."""
        return cls([(depth, 4, 0), (-2 * depth, 2, 0), (depth, 0, 0),
                    (transverse, 0, 2)])

    def barrier_height(self):
        """Lowest value of V on the symmetry axis (the mountain-pass level)."""
        g = lambda s: self.value((0.0, s))
        grid = np.linspace(-4.0, 4.0, 801)
        vals = np.array([g(s) for s in grid])
        k = int(np.argmin(vals))
        lo, hi = grid[max(k - 1, 0)], grid[min(k + 1, grid.size - 1)]
        res = optimize.minimize_scalar(g, bounds=(lo, hi), method="bounded",
                                       options={"xatol": 1e-12})
        return float(min(res.fun, vals[k]))


@dataclass(frozen=True)
class WellData:
    center: np.ndarray
    frequencies: tuple
    hessian: np.ndarray
    side: str
    axes: np.ndarray = field(repr=False)   # columns: principal directions 1, 2

    @property
    def lambda1(self):
        return self.frequencies[0]

    @property
    def lambda2(self):
        return self.frequencies[1]

    def to_local(self, x):
        """Well-centred principal coordinates of global points ``x``."""
        return (np.asarray(x, dtype=float) - self.center) @ self.axes

    def to_global(self, y):
        return np.asarray(y, dtype=float) @ self.axes.T + self.center

    def inward_sign(self):
        """+1 if the symmetry axis lies in the +x1' direction of this well."""
        toward = -np.sign(self.center[0]) if self.center[0] != 0 else 1.0
        return float(np.sign(self.axes[0, 0] * toward) or 1.0)


def principal_frame(hessian, tol_posdef=1e-10):
    """Frequencies and axes with the convention of :class:`WellData`.

    Direction 1 is the eigenvector closest to the x1 axis (ties: smaller
    eigenvalue first).  Eigenvectors are oriented so that their dominant
    component is positive.
    """
    w, v = np.linalg.eigh(np.asarray(hessian, dtype=float))
    if np.any(w <= tol_posdef):
        raise DegenerateWell(f"Hessian eigenvalues {w} not positive definite")
    align = np.abs(v[0, :])
    order = sorted(range(2), key=lambda k: (-round(align[k], 12), w[k]))
    w = w[order]
    v = v[:, order]
    for k in range(2):
        dom = int(np.argmax(np.abs(v[:, k])))
        if v[dom, k] < 0:
            v[:, k] = -v[:, k]
    lam = tuple(float(np.sqrt(wk / 2.0)) for wk in w)
    return lam, v


def find_wells(model, seed=(0.8, 0.1), max_iter=100, tol=1e-13, tol_posdef=1e-10):
    """Locate the two mirror minima by Newton iteration from ``seed``.

    Returns ``(left, right)``.  The left well is the exact mirror image of
    the right one.
    """
    x = np.asarray(seed, dtype=float).copy()
    for _ in range(max_iter):
        g = model.gradient(x)
        if np.max(np.abs(g)) <= tol:
            break
        hess = model.hessian(x)
        try:
            step = np.linalg.solve(hess, g)
        except np.linalg.LinAlgError as exc:
            raise NoConvergence(f"singular Hessian at {x}") from exc
        x = x - step
        if not np.all(np.isfinite(x)):
            raise NoConvergence("Newton iteration diverged")
    else:
        g = model.gradient(x)
        if np.max(np.abs(g)) > 1e3 * tol:
            raise NoConvergence(f"Newton did not converge from {seed}: |grad V| = {np.abs(g).max():.3g}")
    hess = model.hessian(x)
    lam, axes = principal_frame(hess, tol_posdef)
    if x[0] <= 1e-8:
        raise SymmetryViolation(
            f"critical point {x} is not in the right half-plane; "
            "the potential does not have two mirror wells")
    right = WellData(center=x.copy(), frequencies=lam, hessian=hess, side=RIGHT, axes=axes)
    mirror = np.diag([-1.0, 1.0])
    left_axes = mirror @ axes
    for k in range(2):
        dom = int(np.argmax(np.abs(left_axes[:, k])))
        if left_axes[dom, k] < 0:
            left_axes[:, k] = -left_axes[:, k]
    left = WellData(center=np.array([-x[0], x[1]]), frequencies=lam,
                    hessian=mirror @ hess @ mirror, side=LEFT, axes=left_axes)
    return left, right


def single_well(model, center=(0.0, 0.0), tol_posdef=1e-10):
    """WellData for a potential with a single minimum (e.g. pure harmonic)."""
    c = np.asarray(center, dtype=float)
    hess = model.hessian(c)
    lam, axes = principal_frame(hess, tol_posdef)
    return WellData(center=c, frequencies=lam, hessian=hess, side=RIGHT, axes=axes)


@dataclass(frozen=True)
class WellBoundary:
    """Closed polyline approximating ``{V = E}`` around one well.

    ``polyline`` holds the vertices once (the closing edge is implicit).
    """

    energy: float
    polyline: np.ndarray
    model: Polynomial = field(repr=False, compare=False)
    center: np.ndarray = field(repr=False)

    @property
    def closed(self):
        return np.vstack([self.polyline, self.polyline[:1]])

    def arclength(self):
        seg = np.linalg.norm(np.diff(self.closed, axis=0), axis=1)
        return np.concatenate([[0.0], np.cumsum(seg)])

    @property
    def perimeter(self):
        return float(self.arclength()[-1])

    def residual(self):
        return np.abs(self.model.value(self.polyline) - self.energy)

    def point_at(self, s, tol=1e-13):
        """Point at arc-length ``s`` (periodic), projected back onto ``V = E``."""
        s_nodes = self.arclength()
        pts = self.closed
        s = np.mod(np.atleast_1d(np.asarray(s, dtype=float)), s_nodes[-1])
        x = np.stack([np.interp(s, s_nodes, pts[:, 0]),
                      np.interp(s, s_nodes, pts[:, 1])], axis=-1)
        x = project_to_level(self.model, x, self.energy, tol=tol)
        return x

    def tangent_at(self, s, ds=None):
        ds = ds or 1e-4 * self.perimeter
        a = self.point_at(np.asarray(s) - ds)
        b = self.point_at(np.asarray(s) + ds)
        t = b - a
        return t / np.linalg.norm(t, axis=-1, keepdims=True)

    def nearest_s(self, x):
        """Arc-length parameter of the vertex nearest to ``x``."""
        d = np.linalg.norm(self.polyline - np.asarray(x, dtype=float), axis=1)
        return float(self.arclength()[int(np.argmin(d))])

    def is_simple(self):
        pts = self.closed
        a = pts[:-1]
        b = pts[1:]
        n = len(a)
        for i in range(n):
            j = np.arange(i + 2, n)
            if i == 0:
                j = j[j != n - 1]
            if j.size == 0:
                continue
            if np.any(_segments_cross(a[i], b[i], a[j], b[j])):
                return False
        return True


def _segments_cross(p, q, r, s):
    def orient(u, v, w):
        return ((v[..., 0] - u[..., 0]) * (w[..., 1] - u[..., 1])
                - (v[..., 1] - u[..., 1]) * (w[..., 0] - u[..., 0]))
    d1 = orient(p, q, r)
    d2 = orient(p, q, s)
    d3 = orient(r, s, p)
    d4 = orient(r, s, q)
    return (d1 * d2 < 0) & (d3 * d4 < 0)


def project_to_level(model, x, level, tol=1e-13, max_iter=50):
    """Newton projection of points onto ``{V = level}`` along the gradient."""
    x = np.array(x, dtype=float, copy=True)
    flat = x.reshape(-1, 2)
    for k in range(flat.shape[0]):
        p = flat[k]
        for _ in range(max_iter):
            r = model.value(p) - level
            if abs(r) <= tol:
                break
            g = model.gradient(p)
            gg = float(g @ g)
            if gg == 0.0:
                break
            p = p - r * g / gg
        flat[k] = p
    return flat.reshape(x.shape)


def _point_in_polygon(pt, poly):
    x, y = pt
    xs, ys = poly[:, 0], poly[:, 1]
    xj, yj = np.roll(xs, 1), np.roll(ys, 1)
    crossing = ((ys > y) != (yj > y)) & (x < (xj - xs) * (y - ys) / (yj - ys + 1e-300) + xs)
    return bool(np.count_nonzero(crossing) % 2)


def well_boundary(model, well, E, n=256, tol_contour=1e-10, box=None):
    """Level curve ``{V = E}`` around ``well`` by marching squares.

    Vertices returned by the contour tracer sit on grid edges; each one is
    re-solved on its edge with a bracketing root finder so that
    ``|V - E| <= tol_contour``.
    """
    from skimage import measure

    if E <= 0:
        raise ValueError("well_boundary needs E > 0")
    if isinstance(model, PotentialModel) and well.center[0] != 0:
        if E >= model.barrier_height():
            raise EnergyAboveBarrier(f"E = {E} is not below the barrier")
    c = np.asarray(well.center, dtype=float)
    if box is None:
        r = 3.0 * np.sqrt(E) / min(well.frequencies) + 0.05
        box = (c[0] - r, c[0] + r, c[1] - r, c[1] + r)
    x1 = np.linspace(box[0], box[1], n)
    x2 = np.linspace(box[2], box[3], n)
    X1, X2 = np.meshgrid(x1, x2, indexing="ij")
    vals = model.value(np.stack([X1, X2], axis=-1))
    contours = measure.find_contours(vals, E)
    chosen = None
    for cont in contours:
        if not np.allclose(cont[0], cont[-1]):
            continue
        pts = np.stack([np.interp(cont[:, 0], np.arange(n), x1),
                        np.interp(cont[:, 1], np.arange(n), x2)], axis=-1)
        if _point_in_polygon(c, pts):
            chosen = (cont, pts)
            break
    if chosen is None:
        raise EnergyAboveBarrier(
            f"no closed contour of V = {E} encloses the well at {c}; "
            "the level set is open or merged with the mirror well")
    cont, pts = chosen
    if isinstance(model, PotentialModel) and well.center[0] != 0:
        if np.any(np.sign(pts[:, 0]) != np.sign(c[0])):
            raise EnergyAboveBarrier("contour crosses the symmetry axis")
    refined = _refine_on_edges(model, cont[:-1], x1, x2, E, tol_contour)
    return WellBoundary(energy=float(E), polyline=refined, model=model, center=c)


def _refine_on_edges(model, cont, x1, x2, E, tol):
    out = np.empty((len(cont), 2))
    n1, n2 = len(x1), len(x2)
    for k, (r, q) in enumerate(cont):
        if abs(r - round(r)) < 1e-9:
            i = int(round(r))
            j0 = min(int(np.floor(q)), n2 - 2)
            a, b = np.array([x1[i], x2[j0]]), np.array([x1[i], x2[j0 + 1]])
        else:
            j = int(round(q))
            i0 = min(int(np.floor(r)), n1 - 2)
            a, b = np.array([x1[i0], x2[j]]), np.array([x1[i0 + 1], x2[j]])
        f = lambda u: model.value(a + u * (b - a)) - E
        fa, fb = f(0.0), f(1.0)
        if fa == 0.0:
            u = 0.0
        elif fb == 0.0:
            u = 1.0
        elif fa * fb < 0:
            u = optimize.brentq(f, 0.0, 1.0, xtol=1e-15, rtol=1e-15)
        else:
            u = float(np.clip(r - np.floor(r) if abs(q - round(q)) < 1e-9 else q - np.floor(q), 0, 1))
        p = a + u * (b - a)
        if abs(model.value(p) - E) > tol:
            p = project_to_level(model, p, E, tol=0.1 * tol)
        out[k] = p
    return out
