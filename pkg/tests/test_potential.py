import numpy as np
import pytest
from hypothesis import given, strategies as st

from oracles import fd_gradient
from tunnelkit.errors import (DegenerateWell, EnergyAboveBarrier, SymmetryViolation)
from tunnelkit.potential import (Polynomial, PotentialModel, find_wells, single_well,
                                 well_boundary)

coef = st.floats(-2.0, 2.0, allow_nan=False)
exps = st.integers(0, 4)
terms = st.lists(st.tuples(coef, exps, exps), min_size=1, max_size=6)
points = st.tuples(st.floats(-1.5, 1.5), st.floats(-1.5, 1.5))


def test_quartic_minimum(quartic):
    assert quartic.value((1.0, 0.0)) == 0.0
    np.testing.assert_array_equal(quartic.gradient((1.0, 0.0)), [0.0, 0.0])


@given(terms, points)
def test_gradient_matches_central_differences(t, x):
    p = Polynomial(t)
    g = p.gradient(x)
    fd = fd_gradient(p.value, x)
    scale = max(1.0, np.abs(g).max())
    np.testing.assert_allclose(g, fd, rtol=0, atol=1e-6 * scale)


@given(terms, points)
def test_hessian_matches_gradient_differences(t, x):
    p = Polynomial(t)
    H = p.hessian(x)
    fd = np.column_stack([fd_gradient(lambda y: p.gradient(y)[i], x) for i in range(2)]).T
    scale = max(1.0, np.abs(H).max())
    np.testing.assert_allclose(H, fd, rtol=0, atol=1e-6 * scale)
    assert np.allclose(H, H.T)


@given(st.lists(st.tuples(coef, st.sampled_from([0, 2, 4]), exps), min_size=1, max_size=6),
       points)
def test_mirror_symmetry_exact(t, x):
    try:
        m = PotentialModel(t)
    except SymmetryViolation:
        return
    assert m.value((-x[0], x[1])) == m.value(x)


def test_odd_term_rejected():
    with pytest.raises(SymmetryViolation):
        PotentialModel([(1.0, 3, 0), (1.0, 0, 2)])


def test_vectorised_evaluation_matches_scalar(quartic, rng):
    x = rng.uniform(-2, 2, size=(7, 3, 2))
    v = quartic.value(x)
    assert v.shape == (7, 3)
    assert v[4, 1] == quartic.value(tuple(x[4, 1]))


def test_find_wells_quartic(quartic):
    L, R = find_wells(quartic, seed=(0.8, 0.1))
    np.testing.assert_allclose(R.center, [1.0, 0.0], atol=1e-12)
    np.testing.assert_allclose(L.center, [-1.0, 0.0], atol=1e-12)
    np.testing.assert_allclose(R.frequencies, [1.0, 1.0], rtol=1e-12)
    assert np.abs(quartic.gradient(R.center)).max() <= 1e-12
    np.testing.assert_array_equal(L.center, R.center * [-1, 1])
    assert L.frequencies == R.frequencies


def test_find_wells_stiff_transverse():
    m = PotentialModel.quartic_double_well(transverse=2.0)
    _, R = find_wells(m)
    np.testing.assert_allclose(R.frequencies, [1.0, np.sqrt(2.0)], rtol=1e-12)


def test_single_well_is_rejected():
    with pytest.raises((DegenerateWell, SymmetryViolation)):
        find_wells(PotentialModel([(1.0, 2, 0), (1.0, 0, 2)]))


def test_principal_axis_convention_rotated_well():
    # x2 frequency lower than x1 frequency: lambda1 still follows the x1 direction
    m = PotentialModel([(0.25, 4, 0), (-0.5, 2, 0), (0.25, 0, 0), (0.1, 0, 2)])
    _, R = find_wells(m)
    assert abs(R.axes[0, 0]) > abs(R.axes[1, 0])
    np.testing.assert_allclose(R.frequencies, [1.0, np.sqrt(0.1)], rtol=1e-12)


def test_boundary_harmonic_ellipse():
    m = Polynomial([(1.0, 2, 0), (2.0, 0, 2)])
    w = single_well(m)
    wb = well_boundary(m, w, 0.1)
    assert wb.residual().max() <= 1e-10
    np.testing.assert_allclose(np.abs(wb.polyline[:, 0]).max(), np.sqrt(0.1), rtol=1e-3)
    np.testing.assert_allclose(np.abs(wb.polyline[:, 1]).max(), np.sqrt(0.05), rtol=1e-3)


def _simple(poly):
    """No two non-adjacent edges intersect."""
    P = np.vstack([poly, poly[:1]])
    n = len(poly)

    def cross(a, b, c):
        return (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])

    for i in range(0, n, 3):
        for j in range(i + 2, n):
            if (j + 1) % n == i:
                continue
            a, b, c, d = P[i], P[i + 1], P[j], P[j + 1]
            if (cross(a, b, c) * cross(a, b, d) < 0) and (cross(c, d, a) * cross(c, d, b) < 0):
                return False
    return True


def test_boundary_quartic_closed_and_simple(quartic, wells):
    wb = well_boundary(quartic, wells[0], 0.05)
    assert wb.residual().max() <= 1e-10
    assert _simple(wb.polyline)
    assert np.all(wb.polyline[:, 0] < 0)


def test_boundary_above_barrier(quartic, wells):
    with pytest.raises(EnergyAboveBarrier):
        well_boundary(quartic, wells[0], quartic.barrier_height() + 0.1)
