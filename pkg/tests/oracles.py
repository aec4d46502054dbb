"""Independent reference values, computed without tunnelkit."""
import numpy as np
from scipy import integrate, optimize
from scipy.linalg import eigh_tridiagonal


def quartic_1d(s, depth=0.25):
    return depth * (s * s - 1.0) ** 2


def axis_action(V1, E, a=-1.0, b=1.0):
    """``int sqrt(V1 - E)`` between the two inner turning points of a 1-D double well."""
    if E <= 0:
        lo, hi = a, b
    else:
        f = lambda s: V1(s) - E
        lo = optimize.brentq(f, a, 0.0, xtol=1e-15)
        hi = optimize.brentq(f, 0.0, b, xtol=1e-15)
    g = lambda s: np.sqrt(max(V1(s) - E, 0.0))
    return integrate.quad(g, lo, hi, epsabs=1e-14, epsrel=1e-13, limit=200)[0]


def dense_levels_1d(V1, h, L, n, k):
    """Lowest ``k`` levels of ``-h^2 d^2 + V1`` on ``[-L, L]`` (Dirichlet, second order)."""
    x = np.linspace(-L, L, n + 2)[1:-1]
    d = x[1] - x[0]
    diag = 2 * h * h / d ** 2 + V1(x)
    off = np.full(n - 1, -h * h / d ** 2)
    return eigh_tridiagonal(diag, off, select="i", select_range=(0, k - 1))[0]


def half_line_splitting(V1, h, L, n):
    """Ground splitting of a symmetric 1-D double well from the half line ``[-L, 0]``.

    Cell-centred nodes; mirror ghost (even states) and odd ghost (odd states) at 0.
    """
    d = L / n
    x = -L + (np.arange(n) + 0.5) * d
    diag = 2 * h * h / d ** 2 + V1(x)
    off = np.full(n - 1, -h * h / d ** 2)
    even = diag.copy()
    even[-1] -= h * h / d ** 2
    odd = diag.copy()
    odd[-1] += h * h / d ** 2
    e0 = eigh_tridiagonal(even, off, select="i", select_range=(0, 0))[0][0]
    o0 = eigh_tridiagonal(odd, off, select="i", select_range=(0, 0))[0][0]
    return o0 - e0, e0, o0


def harmonic_levels(lam, h, k):
    """Lowest ``k`` levels of ``-h^2 Lap + sum lam_j^2 x_j^2``."""
    vals = sorted(h * (lam[0] * (2 * a + 1) + lam[1] * (2 * b + 1))
                  for a in range(k + 1) for b in range(k + 1))
    return np.array(vals[:k])


def fd_gradient(f, x, eps=1e-6):
    x = np.asarray(x, dtype=float)
    out = np.empty(2)
    for j in range(2):
        e = np.zeros(2)
        e[j] = eps
        out[j] = (f(x + e) - f(x - e)) / (2 * eps)
    return out
