import numpy as np
import pytest
from hypothesis import given, strategies as st

from oracles import half_line_splitting, harmonic_levels, quartic_1d
from tunnelkit.errors import BoxTooSmall, GapViolation, GridTooCoarse, NoConvergence
from tunnelkit.grid import GridSpec
from tunnelkit.potential import PotentialModel
from tunnelkit.reference import (assemble, doublet_splitting, half_spectra, lowest_eigenpairs,
                                 preflight, residuals)

HARMONIC = PotentialModel([(1.0, 2, 0), (2.0, 0, 2)])
LAM = (1.0, np.sqrt(2.0))


@pytest.fixture(scope="module")
def harmonic_pairs():
    op = assemble(HARMONIC, GridSpec.symmetric(1.2, 1.2, 256), 0.05)
    return op, *lowest_eigenpairs(op, 5)


def test_harmonic_ladder(harmonic_pairs):
    _, w, _ = harmonic_pairs
    np.testing.assert_allclose(w, harmonic_levels(LAM, 0.05, 5), rtol=1e-3)


def test_orthonormal_and_converged(harmonic_pairs):
    op, w, v = harmonic_pairs
    np.testing.assert_allclose(v.T @ v, np.eye(5), atol=1e-10)
    assert np.all(residuals(op, w, v) <= 1e-8)


def test_matrix_exactly_symmetric(quartic):
    for cond in (None, "neumann", "dirichlet"):
        A = assemble(quartic, GridSpec.symmetric(2.0, 1.5, 32), 0.1, cond).matrix
        assert (A != A.T).nnz == 0


@given(st.floats(-2.0, 2.0), st.floats(0.05, 0.5))
def test_constant_potential_bound(c, h):
    op = assemble(PotentialModel([(c, 0, 0)]), GridSpec.symmetric(1.0, 1.0, 16), h)
    w = np.linalg.eigvalsh(op.matrix.toarray())
    assert w.min() >= c - 1e-12


def test_second_order_refinement():
    h = 0.1
    exact = h * (LAM[0] + LAM[1])
    err = [abs(lowest_eigenpairs(assemble(HARMONIC, GridSpec.symmetric(1.5, 1.5, n), h), 1)[0][0]
               - exact) for n in (32, 64, 128)]
    r = err[1] / err[2]
    assert 3.5 <= r <= 4.5
    assert 3.0 <= err[0] / err[1] <= 5.0


def test_separable_splitting_matches_1d(quartic):
    h = 0.05
    res = doublet_splitting(quartic, GridSpec.symmetric(2.2, 1.3, 256, 128), h)
    d1, _, _ = half_line_splitting(quartic_1d, h, 2.2, 128)
    assert -h * np.log(res.delta) == pytest.approx(-h * np.log(d1), rel=0.05)
    # identical x1 discretization, so the match is far tighter than required
    assert res.delta == pytest.approx(d1, rel=1e-4)
    assert max(res.residuals) <= 1e-8


def test_neumann_below_dirichlet(quartic):
    g = GridSpec.symmetric(2.0, 1.5, 64, 32)
    for h in (0.3, 0.15, 0.1):
        wN, wD, _, _ = half_spectra(quartic, g, h, 3)
        assert np.all(wN <= wD)


def test_half_domains_tile_full_spectrum(quartic):
    g = GridSpec.symmetric(1.6, 1.2, 32, 16)
    full = np.linalg.eigvalsh(assemble(quartic, g, 0.3).matrix.toarray())
    half = np.concatenate([np.linalg.eigvalsh(assemble(quartic, g, 0.3, c).matrix.toarray())
                           for c in ("neumann", "dirichlet")])
    np.testing.assert_allclose(np.sort(half), full, atol=1e-12)


def test_box_growth_lowers_levels(quartic):
    small = assemble(quartic, GridSpec.symmetric(1.2, 1.2, 48), 0.1)
    big = assemble(quartic, GridSpec.symmetric(1.6, 1.6, 64), 0.1)
    assert small.grid.spacing == pytest.approx(big.grid.spacing)
    ws = lowest_eigenpairs(small, 3)[0]
    wb = lowest_eigenpairs(big, 3)[0]
    assert np.all(wb <= ws + 1e-12)


def test_rerun_bit_identical(quartic):
    g = GridSpec.symmetric(2.2, 1.3, 64, 32)
    a = doublet_splitting(quartic, g, 0.15, points_per_scale=None)
    b = doublet_splitting(quartic, g, 0.15, points_per_scale=None)
    assert a == b


def test_gap_violation(quartic):
    with pytest.raises(GapViolation):
        doublet_splitting(quartic, GridSpec.symmetric(2.2, 1.3, 64, 32), 0.3,
                          points_per_scale=None)


def test_box_too_small(quartic):
    with pytest.raises(BoxTooSmall):
        assemble(quartic, GridSpec.symmetric(1.0, 0.5, 32), 0.1, E_max=0.5)


def test_grid_too_coarse(quartic):
    with pytest.raises(GridTooCoarse):
        preflight(GridSpec.symmetric(2.2, 1.3, 32, 16), 0.05, np.sqrt(2))
    with pytest.raises(GridTooCoarse):
        doublet_splitting(quartic, GridSpec.symmetric(2.2, 1.3, 32, 16), 0.05)


def test_no_convergence_and_k_limit(quartic):
    op = assemble(quartic, GridSpec.symmetric(2.0, 1.5, 32), 0.1)
    with pytest.raises(NoConvergence):
        lowest_eigenpairs(op, 2, tol_eig=1e-30)
    with pytest.raises(ValueError):
        lowest_eigenpairs(op, 33)
