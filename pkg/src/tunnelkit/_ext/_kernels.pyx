# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot loops: fast marching and the 4th-order symplectic ray integrator.

Semantics mirror ``tunnelkit._pykernels`` exactly; that module is the
reference used when this extension is not built.
"""
import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, fabs, INFINITY, isfinite, cbrt

cnp.import_array()

# ---------------------------------------------------------------- fast marching

cdef inline void _sift_up(long[:] heap, double[:] key, long[:] pos, long k) noexcept nogil:
    cdef long item = heap[k]
    cdef long parent
    while k > 0:
        parent = (k - 1) >> 1
        if key[heap[parent]] <= key[item]:
            break
        heap[k] = heap[parent]
        pos[heap[k]] = k
        k = parent
    heap[k] = item
    pos[item] = k


cdef inline void _sift_down(long[:] heap, double[:] key, long[:] pos, long k, long size) noexcept nogil:
    cdef long item = heap[k]
    cdef long child
    while True:
        child = 2 * k + 1
        if child >= size:
            break
        if child + 1 < size and key[heap[child + 1]] < key[heap[child]]:
            child += 1
        if key[heap[child]] >= key[item]:
            break
        heap[k] = heap[child]
        pos[heap[k]] = k
        k = child
    heap[k] = item
    pos[item] = k


cdef inline double _solve(double[:] T, double[:] n, unsigned char[:] state,
                          long idx, long i, long j, long n1, long n2,
                          double dx1, double dx2) noexcept nogil:
    cdef double a = INFINITY, b = INFINITY, na = 0.0, nb = 0.0
    cdef long k
    cdef double t, s, disc, ta, tb, w1, w2, neff
    if i > 0:
        k = idx - n2
        if state[k] == 2 and T[k] < a:
            a = T[k]; na = n[k]
    if i < n1 - 1:
        k = idx + n2
        if state[k] == 2 and T[k] < a:
            a = T[k]; na = n[k]
    if j > 0:
        k = idx - 1
        if state[k] == 2 and T[k] < b:
            b = T[k]; nb = n[k]
    if j < n2 - 1:
        k = idx + 1
        if state[k] == 2 and T[k] < b:
            b = T[k]; nb = n[k]
    ta = INFINITY
    tb = INFINITY
    if a < INFINITY:
        ta = a + dx1 * 0.5 * (n[idx] + na)
    if b < INFINITY:
        tb = b + dx2 * 0.5 * (n[idx] + nb)
    t = ta if ta < tb else tb
    if a < INFINITY and b < INFINITY:
        neff = 0.5 * n[idx] + 0.25 * (na + nb)
        w1 = 1.0 / (dx1 * dx1)
        w2 = 1.0 / (dx2 * dx2)
        # (t-a)^2 w1 + (t-b)^2 w2 = neff^2
        s = w1 + w2
        disc = (a * w1 + b * w2) * (a * w1 + b * w2) - s * (a * a * w1 + b * b * w2 - neff * neff)
        if disc >= 0:
            s = ((a * w1 + b * w2) + sqrt(disc)) / s
            if s >= a and s >= b and s < t:
                t = s
    return t


def fast_march(double[:, ::1] slowness, double dx1, double dx2,
               double[:, ::1] values, unsigned char[:, ::1] frozen):
    """First-order fast marching; ``frozen`` nodes keep their ``values``."""
    cdef long n1 = slowness.shape[0], n2 = slowness.shape[1]
    cdef long N = n1 * n2
    out = np.array(values, dtype=np.float64, copy=True).reshape(-1)
    cdef double[:] T = out
    cdef double[:] n = np.ascontiguousarray(slowness).reshape(-1)
    cdef unsigned char[:] fz = np.ascontiguousarray(frozen).reshape(-1)
    st_arr = np.zeros(N, dtype=np.uint8)        # 0 far, 1 trial, 2 accepted
    cdef unsigned char[:] state = st_arr
    cdef long[:] heap = np.empty(N, dtype=np.int64)
    cdef long[:] pos = np.full(N, -1, dtype=np.int64)
    cdef long size = 0
    cdef long idx, i, j, nb, m, k
    cdef double t
    cdef long di[4]
    cdef long dj[4]
    di[0] = -1; di[1] = 1; di[2] = 0; di[3] = 0
    dj[0] = 0; dj[1] = 0; dj[2] = -1; dj[3] = 1
    with nogil:
        for idx in range(N):
            if fz[idx]:
                state[idx] = 2
            else:
                T[idx] = INFINITY
        for idx in range(N):
            if state[idx] != 2:
                continue
            i = idx // n2
            j = idx - i * n2
            for m in range(4):
                if i + di[m] < 0 or i + di[m] >= n1 or j + dj[m] < 0 or j + dj[m] >= n2:
                    continue
                nb = idx + di[m] * n2 + dj[m]
                if state[nb] == 2:
                    continue
                t = _solve(T, n, state, nb, i + di[m], j + dj[m], n1, n2, dx1, dx2)
                if state[nb] == 0:
                    T[nb] = t
                    state[nb] = 1
                    heap[size] = nb
                    size += 1
                    _sift_up(heap, T, pos, size - 1)
                elif t < T[nb]:
                    T[nb] = t
                    _sift_up(heap, T, pos, pos[nb])
        while size > 0:
            idx = heap[0]
            size -= 1
            if size > 0:
                heap[0] = heap[size]
                pos[heap[0]] = 0
                _sift_down(heap, T, pos, 0, size)
            pos[idx] = -1
            state[idx] = 2
            i = idx // n2
            j = idx - i * n2
            for m in range(4):
                if i + di[m] < 0 or i + di[m] >= n1 or j + dj[m] < 0 or j + dj[m] >= n2:
                    continue
                nb = idx + di[m] * n2 + dj[m]
                if state[nb] == 2:
                    continue
                t = _solve(T, n, state, nb, i + di[m], j + dj[m], n1, n2, dx1, dx2)
                if state[nb] == 0:
                    T[nb] = t
                    state[nb] = 1
                    heap[size] = nb
                    size += 1
                    _sift_up(heap, T, pos, size - 1)
                elif t < T[nb]:
                    T[nb] = t
                    _sift_up(heap, T, pos, pos[nb])
    return out.reshape(n1, n2)


# ---------------------------------------------------------------- ray integrator

cdef struct Poly:
    int nterms
    int deg
    double* c
    long* a
    long* b


cdef inline void _grad_hess(Poly* P, double x1, double x2, double* g, double* H,
                            double* p1, double* p2, bint want_h) noexcept nogil:
    cdef int k, a, b
    cdef double c
    p1[0] = 1.0
    p2[0] = 1.0
    for k in range(1, P.deg + 1):
        p1[k] = p1[k - 1] * x1
        p2[k] = p2[k - 1] * x2
    g[0] = 0.0; g[1] = 0.0
    if want_h:
        H[0] = 0.0; H[1] = 0.0; H[2] = 0.0
    for k in range(P.nterms):
        c = P.c[k]; a = P.a[k]; b = P.b[k]
        if a >= 1:
            g[0] += c * a * p1[a - 1] * p2[b]
        if b >= 1:
            g[1] += c * b * p1[a] * p2[b - 1]
        if want_h:
            if a >= 2:
                H[0] += c * a * (a - 1) * p1[a - 2] * p2[b]
            if a >= 1 and b >= 1:
                H[1] += c * a * b * p1[a - 1] * p2[b - 1]
            if b >= 2:
                H[2] += c * b * (b - 1) * p1[a] * p2[b - 2]


cdef inline double _value(Poly* P, double x1, double x2, double* p1, double* p2) noexcept nogil:
    cdef int k
    cdef double v = 0.0
    p1[0] = 1.0
    p2[0] = 1.0
    for k in range(1, P.deg + 1):
        p1[k] = p1[k - 1] * x1
        p2[k] = p2[k - 1] * x2
    for k in range(P.nterms):
        v += P.c[k] * p1[P.a[k]] * p2[P.b[k]]
    return v


cdef inline void _sv(Poly* P, double tau, double* s, double* d, bint tangent,
                     double* p1, double* p2) noexcept nogil:
    # kick-drift-kick Stoermer-Verlet for q = xi^2 - V: x' = 2 xi, xi' = grad V
    cdef double g[2]
    cdef double H[3]
    _grad_hess(P, s[0], s[1], g, H, p1, p2, tangent)
    s[2] += 0.5 * tau * g[0]
    s[3] += 0.5 * tau * g[1]
    if tangent:
        d[2] += 0.5 * tau * (H[0] * d[0] + H[1] * d[1])
        d[3] += 0.5 * tau * (H[1] * d[0] + H[2] * d[1])
    s[0] += 2.0 * tau * s[2]
    s[1] += 2.0 * tau * s[3]
    if tangent:
        d[0] += 2.0 * tau * d[2]
        d[1] += 2.0 * tau * d[3]
    _grad_hess(P, s[0], s[1], g, H, p1, p2, tangent)
    s[2] += 0.5 * tau * g[0]
    s[3] += 0.5 * tau * g[1]
    if tangent:
        d[2] += 0.5 * tau * (H[0] * d[0] + H[1] * d[1])
        d[3] += 0.5 * tau * (H[1] * d[0] + H[2] * d[1])


def integrate_rays(double[::1] coeffs, long[::1] ea, long[::1] eb,
                   double[::1] state0, double dt, long nsteps, double E,
                   double x1_stop, double[::1] target, int stop_enter,
                   double enter_tol, double rmax, double[::1] tangent0):
    """Yoshida-composed Stoermer-Verlet integration of one ray.

    Returns ``(samples[m, 5], tangents[m, 4] or None, reason)`` with reasons
    0 = step budget, 1 = crossed ``x1_stop``, 2 = re-entered ``{V < E}``,
    3 = left the disc of radius ``rmax``, 4 = passed closest approach to ``target``,
    5 = non-finite state.
    """
    cdef Poly P
    cdef int deg = 0
    cdef long k
    for k in range(coeffs.shape[0]):
        if ea[k] + eb[k] > deg:
            deg = ea[k] + eb[k]
    P.nterms = coeffs.shape[0]
    P.deg = deg
    P.c = &coeffs[0] if coeffs.shape[0] else NULL
    P.a = &ea[0] if coeffs.shape[0] else NULL
    P.b = &eb[0] if coeffs.shape[0] else NULL
    p1_arr = np.empty(deg + 2)
    p2_arr = np.empty(deg + 2)
    cdef double[::1] p1 = p1_arr
    cdef double[::1] p2 = p2_arr
    cdef bint tangent = tangent0.shape[0] == 4
    out = np.empty((nsteps + 1, 5))
    cdef double[:, ::1] o = out
    tan_arr = np.empty((nsteps + 1, 4)) if tangent else np.empty((1, 4))
    cdef double[:, ::1] tn = tan_arr
    cdef double s[4]
    cdef double d[4]
    cdef double w1 = 1.0 / (2.0 - cbrt(2.0))
    cdef double w0 = 1.0 - 2.0 * w1
    cdef int reason = 0
    cdef double side0, side, v, appr0, appr
    cdef bint left_zone = False
    cdef bint use_cross = isfinite(x1_stop)
    cdef bint use_target = target.shape[0] == 2
    cdef long step = 0
    for k in range(4):
        s[k] = state0[k]
        d[k] = tangent0[k] if tangent else 0.0
    o[0, 0] = 0.0
    for k in range(4):
        o[0, k + 1] = s[k]
        if tangent:
            tn[0, k] = d[k]
    side0 = s[0] - x1_stop if use_cross else 0.0
    appr0 = 0.0
    if use_target:
        appr0 = (s[0] - target[0]) * s[2] + (s[1] - target[1]) * s[3]
    with nogil:
        for step in range(1, nsteps + 1):
            _sv(&P, w1 * dt, s, d, tangent, &p1[0], &p2[0])
            _sv(&P, w0 * dt, s, d, tangent, &p1[0], &p2[0])
            _sv(&P, w1 * dt, s, d, tangent, &p1[0], &p2[0])
            o[step, 0] = step * dt
            for k in range(4):
                o[step, k + 1] = s[k]
                if tangent:
                    tn[step, k] = d[k]
            if not (isfinite(s[0]) and isfinite(s[1]) and isfinite(s[2]) and isfinite(s[3])):
                reason = 5
                break
            if use_cross:
                side = s[0] - x1_stop
                if side * side0 <= 0 and side0 != 0:
                    reason = 1
                    break
            if stop_enter:
                v = _value(&P, s[0], s[1], &p1[0], &p2[0]) - E
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
            if s[0] * s[0] + s[1] * s[1] > rmax * rmax:
                reason = 3
                break
        else:
            step = nsteps
    m = step + 1 if reason else nsteps + 1
    return out[:m].copy(), (tan_arr[:m].copy() if tangent else None), reason
