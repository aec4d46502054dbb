"""Finite-difference reference spectra of ``P = -h^2 Lap + V``.

Five-point stencil on a cell-centred grid, Dirichlet on the outer rectangle.
Doublet splittings come from the half domain ``x1 < 0`` solved twice, with a
mirror ghost (Neumann, symmetric states) and an odd ghost (Dirichlet,
antisymmetric states) on the symmetry axis.  The two half-domain spectra
together are exactly the spectrum of the full symmetric grid.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.sparse import linalg as splinalg

from .errors import BoxTooSmall, GapViolation, GridTooCoarse, NoConvergence
from .grid import GridSpec

AXIS_CONDITIONS = (None, "neumann", "dirichlet")


@dataclass(frozen=True)
class DiscreteOperator:
    """Sparse symmetric matrix of ``-h^2 Lap + V`` on ``grid``.

    ``axis_condition`` is ``None`` for the full grid, otherwise the grid is
    the half ``x1 < 0`` of a symmetric grid with the given condition on the axis.
    """

    grid: GridSpec
    h: float
    matrix: sparse.csr_matrix = field(repr=False)
    diagonal: np.ndarray = field(repr=False)
    axis_condition: str | None = None

    @property
    def shape(self):
        return tuple(self.grid.dims)


def half_grid(grid):
    """Columns ``x1 < 0`` of a grid symmetric about the axis."""
    x1 = grid.axes[0]
    n = int(np.sum(x1 < 0))
    if n == 0 or not np.allclose(x1[:n], -x1[::-1][:n], atol=1e-12 * grid.spacing[0]):
        raise ValueError("grid is not symmetric about x1 = 0")
    if n != grid.dims[0] - n:
        raise ValueError("half-domain mode needs a cell-centred symmetric grid")
    return GridSpec(grid.origin, grid.spacing, (n, grid.dims[1]))


def _lap1d(n, d, last=0.0):
    """``-d^2/dx^2`` with Dirichlet ends; ``last`` adds to the final diagonal entry."""
    main = np.full(n, 2.0 / d ** 2)
    main[-1] += last / d ** 2
    off = np.full(n - 1, -1.0 / d ** 2)
    return sparse.diags([off, main, off], [-1, 0, 1], format="csr")


def preflight(grid, h, lam_max, points_per_scale=8):
    """Require ``points_per_scale`` nodes per oscillator length ``sqrt(h / lam_max)``.

    Raises
    ------
    GridTooCoarse
    """
    scale = np.sqrt(h / lam_max)
    if grid.h_max > scale / points_per_scale:
        raise GridTooCoarse(f"spacing {grid.h_max:.4g} exceeds sqrt(h/lam)/{points_per_scale}"
                            f" = {scale / points_per_scale:.4g}")


def assemble(model, grid, h, axis_condition=None, E_max=None, margin=0.0):
    """Assemble the five-point discretization.

    Parameters
    ----------
    model : Polynomial
    grid : GridSpec
        Full grid; for an axis condition it must be cell-centred and symmetric
        about ``x1 = 0`` and only its left half is used.
    h : float
    axis_condition : {None, "neumann", "dirichlet"}
    E_max, margin : float, optional
        If ``E_max`` is given, ``V >= E_max + margin`` is required on the
        outer boundary nodes.

    Raises
    ------
    BoxTooSmall
    """
    if axis_condition not in AXIS_CONDITIONS:
        raise ValueError(f"unknown axis condition {axis_condition!r}")
    g = grid if axis_condition is None else half_grid(grid)
    n1, n2 = g.dims
    d1, d2 = g.spacing
    V = model.value(g.points())
    if E_max is not None:
        edge = np.concatenate([V[0], V[:, 0], V[:, -1]] + ([V[-1]] if axis_condition is None else []))
        if edge.min() < E_max + margin:
            raise BoxTooSmall(f"min V on the box edge {edge.min():.4g} < {E_max + margin:.4g}")
    last = {None: 0.0, "neumann": -1.0, "dirichlet": 1.0}[axis_condition]
    L1 = _lap1d(n1, d1, last)
    L2 = _lap1d(n2, d2)
    A = h * h * (sparse.kron(L1, sparse.identity(n2)) + sparse.kron(sparse.identity(n1), L2))
    A = (A + sparse.diags(V.ravel())).tocsr()
    A.sort_indices()
    return DiscreteOperator(grid=g, h=float(h), matrix=A, diagonal=V, axis_condition=axis_condition)


def lowest_eigenpairs(op, k, tol_eig=1e-8, sigma=None, seed=0):
    """``k`` lowest eigenpairs by shift-invert Lanczos.

    Parameters
    ----------
    op : DiscreteOperator
    k : int
        At most 32.
    tol_eig : float
        Required ``||A v - lam v|| <= tol_eig ||v||``.
    sigma : float, optional
        Shift; default just below ``min V`` (below the whole spectrum).
    seed : int
        Seeds the fixed start vector, so reruns are bit-identical.

    Returns
    -------
    values : ndarray, shape (k,)
    vectors : ndarray, shape (n, k)
        Orthonormal columns, ascending eigenvalues.

    Raises
    ------
    NoConvergence
    """
    if not 1 <= k <= 32:
        raise ValueError("k must lie in [1, 32]")
    A = op.matrix
    if sigma is None:
        sigma = float(op.diagonal.min()) - 1e-3 * max(1.0, abs(float(op.diagonal.min())))
    v0 = np.random.default_rng(seed).standard_normal(A.shape[0])
    try:
        w, v = splinalg.eigsh(A, k=k, sigma=sigma, which="LM", v0=v0, tol=0.0,
                              maxiter=max(1000, 20 * k))
    except splinalg.ArpackNoConvergence as exc:
        raise NoConvergence(f"eigsh stopped with {len(exc.eigenvalues)} of {k} pairs") from exc
    order = np.argsort(w)
    w, v = w[order], v[:, order]
    res = residuals(op, w, v)
    if np.any(res > tol_eig):
        j = int(np.argmax(res))
        raise NoConvergence(f"residual {res[j]:.3e} > {tol_eig:g} for eigenvalue {w[j]:.10g}")
    return w, v


def residuals(op, values, vectors):
    """``||A v - lam v|| / ||v||`` per pair."""
    R = op.matrix @ vectors - vectors * values
    return np.linalg.norm(R, axis=0) / np.linalg.norm(vectors, axis=0)


@dataclass(frozen=True)
class DoubletResult:
    E_sym: float
    E_anti: float
    delta: float
    residuals: tuple
    gap_to_next: float
    index: int = 0
    grid_n: tuple = ()


def half_spectra(model, grid, h, k, tol_eig=1e-8, E_margin=None):
    """Lowest ``k`` symmetric (Neumann) and antisymmetric (Dirichlet) levels.

    Returns ``(wN, wD, resN, resD)``.
    """
    out = []
    for cond in ("neumann", "dirichlet"):
        op = assemble(model, grid, h, cond)
        w, v = lowest_eigenpairs(op, k, tol_eig)
        out.append((w, residuals(op, w, v)))
    (wN, rN), (wD, rD) = out
    if E_margin is not None:
        assemble(model, grid, h, "neumann", E_max=float(max(wN[-1], wD[-1])), margin=E_margin)
    return wN, wD, rN, rD


def doublet_splitting(model, grid, h, doublet_index=0, tol_eig=1e-8, check_gap=True,
                      E_margin=0.0, spectra=None, points_per_scale=8):
    """Splitting ``E_anti - E_sym`` of the ``doublet_index``-th doublet.

    Parameters
    ----------
    model : PotentialModel
        Mirror symmetric in ``x1``.
    grid : GridSpec
        Cell-centred grid symmetric about ``x1 = 0``.
    h : float
    doublet_index : int
        0 for the ground doublet.
    E_margin : float
        Box check: ``V >= E_anti + E_margin`` on the outer boundary.
    spectra : tuple, optional
        Precomputed ``half_spectra`` output with enough levels.
    points_per_scale : int or None
        Resolution preflight (see ``preflight``); ``None`` skips it.

    Raises
    ------
    GapViolation
        If the next level is closer than ``10 |delta|``.
    GridTooCoarse, BoxTooSmall
    """
    if points_per_scale:
        from .potential import find_wells
        preflight(grid, h, max(find_wells(model)[0].frequencies), points_per_scale)
    k = doublet_index + 2
    if spectra is None:
        spectra = half_spectra(model, grid, h, k, tol_eig, E_margin)
    wN, wD, rN, rD = spectra
    i = doublet_index
    Es, Ea = float(wN[i]), float(wD[i])
    delta = Ea - Es
    nxt = min(wN[i + 1], wD[i + 1]) if len(wN) > i + 1 and len(wD) > i + 1 else np.inf
    gap = float(nxt - max(Es, Ea))
    if check_gap and gap < 10.0 * abs(delta):
        raise GapViolation(f"gap {gap:.3e} < 10 |delta| = {10 * abs(delta):.3e}")
    return DoubletResult(E_sym=Es, E_anti=Ea, delta=delta,
                         residuals=(float(rN[i]), float(rD[i])), gap_to_next=gap,
                         index=i, grid_n=tuple(grid.dims))
