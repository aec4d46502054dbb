"""EBK quantization of one well, quartic Birkhoff corrections, umbilic lattice.

Actions are quantized as ``iota = (alpha + nu/4) h`` with Maslov vector
``nu = (2, 2)``; the leading-order energy is ``2 lam1 iota1 + 2 lam2 iota2``.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from math import factorial

import numpy as np
from scipy import optimize

from .errors import EmptySeries, ResonanceError

MASLOV = (2, 2)


@dataclass(frozen=True)
class TorusState:
    alpha: tuple
    h: float
    actions: tuple
    energy: float
    umbilics: np.ndarray = field(default=None, repr=False, compare=False)
    maslov: tuple = MASLOV
    energy_quartic: float | None = None
    partial_energies: tuple | None = None   # harmonic split (2 lam1 iota1, 2 lam2 iota2)

    def inner_umbilic(self, well):
        """Umbilic on the axis-facing side, upper half (x2' >= 0)."""
        if self.umbilics is None:
            raise ValueError("state carries no umbilics")
        loc = well.to_local(self.umbilics)
        s = well.inward_sign()
        cand = [k for k in range(len(loc)) if loc[k, 0] * s > 0 and loc[k, 1] >= 0]
        return self.umbilics[cand[0]]


def actions(alpha, h, maslov=MASLOV):
    return tuple((a + m / 4.0) * h for a, m in zip(alpha, maslov))


def ebk_energy(well, alpha, h):
    """Leading-order EBK energy ``H_lin(iota_alpha)``."""
    if h <= 0:
        raise ValueError("h must be positive")
    iota = actions(alpha, h)
    return float(2 * well.frequencies[0] * iota[0] + 2 * well.frequencies[1] * iota[1])


def harmonic_umbilics(well, iota):
    """The four corners ``(+-sqrt(2 iota1/lam1), +-sqrt(2 iota2/lam2))`` in global coordinates."""
    lam = np.asarray(well.frequencies)
    y = np.sqrt(2.0 * np.asarray(iota) / lam)
    local = np.array([[s1 * y[0], s2 * y[1]] for s1 in (1, -1) for s2 in (1, -1)])
    return well.to_global(local)


def make_state(well, alpha, h, model=None, project=False, normal_form=None):
    alpha = tuple(int(a) for a in alpha)
    iota = actions(alpha, h)
    E = ebk_energy(well, alpha, h)
    umb = harmonic_umbilics(well, iota)
    if project and model is not None:
        umb = project_radially(model, well, umb, E)
    eq = normal_form.energy(alpha, h) if normal_form is not None else None
    partial = (2 * well.frequencies[0] * iota[0], 2 * well.frequencies[1] * iota[1])
    return TorusState(alpha=alpha, h=float(h), actions=iota, energy=E, umbilics=umb,
                      energy_quartic=eq, partial_energies=partial)


def spectral_series(well, h, E0, model=None, project=False, normal_form=None):
    """All states with ``|alpha| h <= E0``, sorted by EBK energy."""
    nmax = int(np.floor(E0 / h + 1e-12))
    if nmax < 0 or E0 < 0:
        raise EmptySeries(f"E0 = {E0} admits no state at h = {h}")
    states = [make_state(well, (a1, n - a1), h, model, project, normal_form)
              for n in range(nmax + 1) for a1 in range(n + 1)]
    states.sort(key=lambda s: (s.energy, s.alpha))
    return states


def energy_window(h, delta=0.5, C=1.0):
    """The Birkhoff-regime window ``C h <= E <= h**delta``."""
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    return (C * h, h**delta)


def flatness_ratio(state, well=None, lam=None):
    """``min(iota1 lam2, iota2 lam1) / max(...)``; 1 for a square caustic rectangle."""
    if lam is None:
        lam = well.frequencies
    a = state.actions[0] * lam[1]
    b = state.actions[1] * lam[0]
    return float(min(a, b) / max(a, b))


def project_radially(model, well, points, E):
    """Move points along the ray from the well centre onto ``{V = E}``."""
    c = np.asarray(well.center, dtype=float)
    out = np.array(points, dtype=float, copy=True)
    for k, p in enumerate(out):
        d = p - c
        r0 = float(np.linalg.norm(d))
        u = d / r0
        f = lambda r: model.value(c + r * u) - E
        hi = r0
        while f(hi) < 0:
            hi *= 1.5
        lo = 0.0
        out[k] = c + optimize.brentq(f, lo, hi, xtol=1e-15) * u
    return out


@dataclass
class UmbilicLattice:
    states: list
    nearest_spacing: np.ndarray      # per state, distance to nearest other umbilic (same quadrant)
    estimate: np.ndarray             # h ((alpha1 h)^-1 + (alpha2 h)^-1)^(1/2), nan on the edges


def umbilic_lattice(well, h, E_window, model=None, project=False, normal_form=None):
    """States with ``E_alpha`` in ``E_window`` and their umbilics.

    Also reports, per state, the nearest-neighbour spacing between
    inner-upper umbilics of the lattice next to the scale estimate
    ``h ((alpha1 h)^-1 + (alpha2 h)^-1)^(1/2)``.
    """
    lo, hi = E_window
    lam_min = min(well.frequencies)
    nmax = int(np.ceil(hi / (2 * lam_min * h))) + 1
    states = []
    for a1, a2 in itertools.product(range(nmax + 1), repeat=2):
        E = ebk_energy(well, (a1, a2), h)
        if lo <= E <= hi:
            states.append(make_state(well, (a1, a2), h, model, project, normal_form))
    states.sort(key=lambda s: (s.energy, s.alpha))
    if not states:
        return UmbilicLattice(states, np.array([]), np.array([]))
    # lattice for spacing: corner in the (+,+) local quadrant of every alpha
    pts = np.array([well.to_local(s.umbilics)[0] for s in states])
    nn = np.empty(len(states))
    est = np.empty(len(states))
    for k, s in enumerate(states):
        d = np.linalg.norm(pts - pts[k], axis=1)
        d[k] = np.inf
        nn[k] = d.min() if len(states) > 1 else np.nan
        a1, a2 = s.alpha
        est[k] = h * np.sqrt(1.0 / (a1 * h) + 1.0 / (a2 * h)) if a1 and a2 else np.nan
    return UmbilicLattice(states, nn, est)


# --------------------------------------------------------------------------
# quartic Birkhoff normal form

@dataclass(frozen=True)
class NormalForm:
    linear: tuple          # (2 lam1, 2 lam2)
    quadratic: np.ndarray  # symmetric c_jk, H = linear . iota + iota^T C iota
    quantum_shift: float   # h**2 constant from Weyl ordering (second-order RS)
    frequencies: tuple

    def hamiltonian(self, iota):
        iota = np.asarray(iota, dtype=float)
        return float(np.dot(self.linear, iota) + iota @ self.quadratic @ iota)

    def energy(self, alpha, h):
        return self.hamiltonian(actions(alpha, h)) + self.quantum_shift * h * h


def _local_taylor(model, well):
    """Taylor polynomial of V in well-centred principal coordinates."""
    return model.shifted(well.center).linear_transform(well.axes)


# polynomials in complex coordinates: dict {(a1, a2, b1, b2): coefficient}
# z_j = (q_j + i p_j)/sqrt2, w_j = conj(z_j), {z_j, w_k} = -i delta_jk

def _pmul(f, g):
    out = {}
    for ka, ca in f.items():
        for kb, cb in g.items():
            k = tuple(x + y for x, y in zip(ka, kb))
            out[k] = out.get(k, 0) + ca * cb
    return out


def _ppow(f, n):
    out = {(0, 0, 0, 0): 1.0 + 0j}
    for _ in range(n):
        out = _pmul(out, f)
    return out


def _padd(*fs):
    out = {}
    for f in fs:
        for k, c in f.items():
            out[k] = out.get(k, 0) + c
    return out


def _pscale(f, s):
    return {k: c * s for k, c in f.items()}


def _pderiv(f, idx):
    out = {}
    for k, c in f.items():
        if k[idx]:
            kk = list(k)
            kk[idx] -= 1
            kk = tuple(kk)
            out[kk] = out.get(kk, 0) + c * k[idx]
    return out


def _bracket(f, g):
    terms = []
    for j in range(2):
        terms.append(_pmul(_pderiv(f, j), _pderiv(g, 2 + j)))
        terms.append(_pscale(_pmul(_pderiv(f, 2 + j), _pderiv(g, j)), -1))
    return _pscale(_padd(*terms), -1j)


def _to_complex(taylor, degree, lam):
    """Homogeneous part of V in (z, w) after q_j = sqrt(lam_j) y_j."""
    out = {}
    for (a, b), c in taylor.homogeneous(degree).items():
        y1 = _pscale({(1, 0, 0, 0): 1.0 + 0j, (0, 0, 1, 0): 1.0 + 0j}, 1 / np.sqrt(2 * lam[0]))
        y2 = _pscale({(0, 1, 0, 0): 1.0 + 0j, (0, 0, 0, 1): 1.0 + 0j}, 1 / np.sqrt(2 * lam[1]))
        out = _padd(out, _pscale(_pmul(_ppow(y1, a), _ppow(y2, b)), c))
    return out


def classical_quartic_coefficients(taylor, lam, tol_resonance=1e-3):
    """Order-4 Birkhoff coefficients by a single Lie transform.

    ``taylor`` is V in principal coordinates around the minimum.  The cubic
    part is removed by a generator solving the homological equation; the
    resonant (``a == b``) monomials of ``H4 + {H3, W3}/2`` give the ``I_j I_k``
    coefficients.
    """
    h3 = _to_complex(taylor, 3, lam)
    h4 = _to_complex(taylor, 4, lam)
    w3 = {}
    for k, c in h3.items():
        if abs(c) < 1e-300:
            continue
        d = lam[0] * (k[0] - k[2]) + lam[1] * (k[1] - k[3])
        if abs(d) < tol_resonance:
            raise ResonanceError(f"small denominator {d:.3g} for monomial {k}")
        # {H2, m} = 2i (lam.(a-b)) m, so W3 = -H3 / (2i lam.(a-b)) solves H3 + {H2, W3} = 0
        w3[k] = -c / (2j * d)
    k4 = _padd(h4, _pscale(_bracket(h3, w3), 0.5))
    scale = max((abs(c) for c in k4.values()), default=0.0)
    for k, c in k4.items():
        if k[:2] != k[2:] and abs(c) > 1e-12 * scale:
            d = lam[0] * (k[0] - k[2]) + lam[1] * (k[1] - k[3])
            if abs(d) < tol_resonance:
                raise ResonanceError(f"resonant quartic monomial {k} (denominator {d:.3g})")
    c11 = k4.get((2, 0, 2, 0), 0.0)
    c22 = k4.get((0, 2, 0, 2), 0.0)
    c12 = k4.get((1, 1, 1, 1), 0.0)
    for c in (c11, c12, c22):
        if abs(np.imag(c)) > 1e-9 * (1 + abs(c)):
            raise ResonanceError("normal form coefficient is not real")
    C = np.array([[c11.real, c12.real / 2], [c12.real / 2, c22.real]])
    if not np.all(np.isfinite(C)):
        raise ResonanceError("non-finite normal form coefficients")
    return C


def _ladder_position(n, ell):
    """Matrix of y = ell (a + a^dagger)/sqrt2 on the first n Fock states."""
    off = np.sqrt(np.arange(1, n)) / np.sqrt(2.0) * ell
    return np.diag(off, 1) + np.diag(off, -1)


def rs_energy(taylor, lam, alpha, h, tol_resonance=1e-3):
    """Second-order Rayleigh-Schroedinger energy of ``-h^2 Lap + V`` in the harmonic basis."""
    lam = np.asarray(lam, dtype=float)
    alpha = tuple(int(a) for a in alpha)
    ell = np.sqrt(h / lam)
    size = [a + 6 for a in alpha]
    Y = [_ladder_position(size[j] + 4, ell[j]) for j in range(2)]
    powers = [[np.linalg.matrix_power(Y[j], k)[:size[j], :size[j]] for k in range(5)]
              for j in range(2)]

    def element(poly, b1, b2):
        val = 0.0
        for (a, b), c in poly.items():
            val += c * powers[0][a][b1, alpha[0]] * powers[1][b][b2, alpha[1]]
        return val

    e0 = lambda n1, n2: h * (lam[0] * (2 * n1 + 1) + lam[1] * (2 * n2 + 1))
    v3 = taylor.homogeneous(3)
    v4 = taylor.homogeneous(4)
    E = e0(*alpha) + element(v4, *alpha)
    for b1 in range(max(0, alpha[0] - 3), alpha[0] + 4):
        for b2 in range(max(0, alpha[1] - 3), alpha[1] + 4):
            if (b1, b2) == alpha:
                continue
            m = element(v3, b1, b2)
            if m == 0.0:
                continue
            den = e0(*alpha) - e0(b1, b2)
            if abs(den) < tol_resonance * h:
                raise ResonanceError(f"near-degenerate levels {alpha} and {(b1, b2)}")
            E += m * m / den
    return float(E)


def birkhoff_quartic(model, well, tol_resonance=1e-3):
    """Quartic Birkhoff normal form of ``p = xi^2 + V`` at ``well``.

    The ``iota_j iota_k`` coefficients come from the classical Lie
    transform.  The quantum ``h^2`` offset (an alpha-independent constant at
    this order) is fixed from second-order perturbation theory of the
    ground state.
    """
    lam = tuple(well.frequencies)
    taylor = _local_taylor(model, well)
    C = classical_quartic_coefficients(taylor, lam, tol_resonance)
    linear = (2 * lam[0], 2 * lam[1])
    e_rs = rs_energy(taylor, lam, (0, 0), 1.0, tol_resonance)
    iota0 = np.array([0.5, 0.5])
    shift = e_rs - (np.dot(linear, iota0) + iota0 @ C @ iota0)
    return NormalForm(linear=linear, quadratic=C, quantum_shift=float(shift),
                      frequencies=lam)


def hermite_value(n, z):
    """Physicists' Hermite polynomial ``H_n(z)``."""
    return float(np.polynomial.hermite.hermval(z, [0] * n + [1]))


def oscillator_state(n, lam, h, y):
    """L2-normalised eigenfunction of ``-h^2 d^2 + lam^2 y^2`` (level ``n``)."""
    ell = np.sqrt(h / lam)
    z = np.asarray(y, dtype=float) / ell
    norm = 1.0 / np.sqrt(2.0**n * factorial(n) * np.sqrt(np.pi) * ell)
    return norm * np.polynomial.hermite.hermval(z, [0] * n + [1]) * np.exp(-z * z / 2)
