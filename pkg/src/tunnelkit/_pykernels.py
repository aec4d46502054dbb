"""Pure-Python reference kernels.

Same signatures and semantics as the compiled ``tunnelkit._ext._kernels``;
used automatically when the extension is not available.
"""
import heapq
import math

import numpy as np


def _solve(T, n, accepted, i, j, n1, n2, dx1, dx2):
    a = b = math.inf
    na = nb = 0.0
    for ii in (i - 1, i + 1):
        if 0 <= ii < n1 and accepted[ii, j] and T[ii, j] < a:
            a, na = T[ii, j], n[ii, j]
    for jj in (j - 1, j + 1):
        if 0 <= jj < n2 and accepted[i, jj] and T[i, jj] < b:
            b, nb = T[i, jj], n[i, jj]
    ta = a + dx1 * 0.5 * (n[i, j] + na) if a < math.inf else math.inf
    tb = b + dx2 * 0.5 * (n[i, j] + nb) if b < math.inf else math.inf
    t = min(ta, tb)
    if a < math.inf and b < math.inf:
        neff = 0.5 * n[i, j] + 0.25 * (na + nb)
        w1, w2 = 1.0 / dx1 ** 2, 1.0 / dx2 ** 2
        s = w1 + w2
        m = a * w1 + b * w2
        disc = m * m - s * (a * a * w1 + b * b * w2 - neff * neff)
        if disc >= 0:
            r = (m + math.sqrt(disc)) / s
            if r >= a and r >= b and r < t:
                t = r
    return t


def fast_march(slowness, dx1, dx2, values, frozen):
    """First-order fast marching; ``frozen`` nodes keep their ``values``."""
    n = np.asarray(slowness, dtype=float)
    n1, n2 = n.shape
    T = np.where(frozen, np.asarray(values, dtype=float), np.inf)
    accepted = np.asarray(frozen, dtype=bool).copy()
    heap = []

    def relax(i, j):
        for ii, jj in ((i - 1, j), (i + 1, j), (i, j - 1), (i, j + 1)):
            if 0 <= ii < n1 and 0 <= jj < n2 and not accepted[ii, jj]:
                t = _solve(T, n, accepted, ii, jj, n1, n2, dx1, dx2)
                if t < T[ii, jj]:
                    T[ii, jj] = t
                    heapq.heappush(heap, (t, ii, jj))

    for i, j in zip(*np.nonzero(accepted)):
        relax(i, j)
    while heap:
        t, i, j = heapq.heappop(heap)
        if accepted[i, j] or t > T[i, j]:
            continue
        accepted[i, j] = True
        relax(i, j)
    return T


class _Poly:
    def __init__(self, coeffs, ea, eb):
        self.c = np.asarray(coeffs, dtype=float)
        self.a = np.asarray(ea, dtype=np.int64)
        self.b = np.asarray(eb, dtype=np.int64)

    def value(self, x1, x2):
        return float(np.sum(self.c * x1 ** self.a * x2 ** self.b))

    def grad_hess(self, x1, x2, want_h):
        c, a, b = self.c, self.a, self.b
        am, bm = np.maximum(a - 1, 0), np.maximum(b - 1, 0)
        g1 = float(np.sum(c * a * x1 ** am * x2 ** b))
        g2 = float(np.sum(c * b * x1 ** a * x2 ** bm))
        if not want_h:
            return g1, g2, None
        h11 = float(np.sum(c * a * (a - 1) * x1 ** np.maximum(a - 2, 0) * x2 ** b))
        h12 = float(np.sum(c * a * b * x1 ** am * x2 ** bm))
        h22 = float(np.sum(c * b * (b - 1) * x1 ** a * x2 ** np.maximum(b - 2, 0)))
        return g1, g2, (h11, h12, h22)


def _sv(P, tau, s, d):
    tangent = d is not None
    for half in (0, 1):
        g1, g2, H = P.grad_hess(s[0], s[1], tangent)
        s[2] += 0.5 * tau * g1
        s[3] += 0.5 * tau * g2
        if tangent:
            d[2] += 0.5 * tau * (H[0] * d[0] + H[1] * d[1])
            d[3] += 0.5 * tau * (H[1] * d[0] + H[2] * d[1])
        if half == 0:
            s[0] += 2.0 * tau * s[2]
            s[1] += 2.0 * tau * s[3]
            if tangent:
                d[0] += 2.0 * tau * d[2]
                d[1] += 2.0 * tau * d[3]


def integrate_rays(coeffs, ea, eb, state0, dt, nsteps, E, x1_stop, target,
                   stop_enter, enter_tol, rmax, tangent0):
    """Yoshida-composed Stoermer-Verlet integration of one ray (see the compiled twin)."""
    P = _Poly(coeffs, ea, eb)
    tangent = len(tangent0) == 4
    w1 = 1.0 / (2.0 - 2.0 ** (1.0 / 3.0))
    w0 = 1.0 - 2.0 * w1
    s = [float(v) for v in state0]
    d = [float(v) for v in tangent0] if tangent else None
    rows = [[0.0] + s]
    tans = [list(d)] if tangent else None
    use_cross = math.isfinite(x1_stop)
    use_target = len(target) == 2
    side0 = s[0] - x1_stop if use_cross else 0.0
    appr0 = ((s[0] - target[0]) * s[2] + (s[1] - target[1]) * s[3]) if use_target else 0.0
    left_zone = False
    reason = 0
    for step in range(1, nsteps + 1):
        for w in (w1, w0, w1):
            _sv(P, w * dt, s, d)
        rows.append([step * dt] + s)
        if tangent:
            tans.append(list(d))
        if not all(math.isfinite(v) for v in s):
            reason = 5
            break
        if use_cross:
            side = s[0] - x1_stop
            if side * side0 <= 0 and side0 != 0:
                reason = 1
                break
        if stop_enter:
            v = P.value(s[0], s[1]) - E
            if v > 10.0 * enter_tol:
                left_zone = True
            elif left_zone and v <= enter_tol:
                reason = 2
                break
        if use_target:
            appr = (s[0] - target[0]) * s[2] + (s[1] - target[1]) * s[3]
            if appr0 < 0 and appr >= 0:
                reason = 4
                break
            appr0 = appr
        if s[0] ** 2 + s[1] ** 2 > rmax ** 2:
            reason = 3
            break
    return np.array(rows), (np.array(tans) if tangent else None), reason
