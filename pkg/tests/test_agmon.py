import numpy as np
import pytest
from hypothesis import given, strategies as st

from oracles import axis_action, quartic_1d
from tunnelkit.agmon import (action_chart, agmon_distance, agmon_energy_derivative,
                             count_launch_minima, eikonal_residual, instanton_flow,
                             minimal_geodesic, point_source_launcher, prop2_exponent,
                             prop2_separable_check, ray_fan, s0_between_wells, solve_eikonal)
from tunnelkit.errors import GridTooCoarse, NotSeparable, ShellDrift
from tunnelkit.grid import OUTSIDE, SOURCE, GridSpec
from tunnelkit.potential import PotentialModel


def _disk_error(n, r0=0.25):
    g = GridSpec.symmetric(1.0, 1.0, n, n)
    r = np.linalg.norm(g.points(), axis=-1)
    src = r <= r0
    d = solve_eikonal(g, np.ones(g.dims), np.zeros(g.dims), src)
    exact = r - r0
    return np.max(np.abs(d - exact)[~src]) / exact.max()


def test_flat_metric_disk_and_refinement():
    e = [_disk_error(n) for n in (128, 256, 512)]
    assert e[1] <= 0.02
    assert e[0] / e[1] >= 1.8 and e[1] / e[2] >= 1.8


def _axis_oracle(E, x1):
    """d_E on the axis from the left well, by 1-D quadrature from the turning point."""
    from scipy import integrate, optimize
    tp = -1.0 if E == 0 else optimize.brentq(lambda s: quartic_1d(s) - E, -1.0, 0.0)
    if E > 0 and x1 < -1.0:
        tp = optimize.brentq(lambda s: quartic_1d(s) - E, -3.0, -1.0)
    g = lambda s: np.sqrt(max(quartic_1d(s) - E, 0.0))
    return integrate.quad(g, min(tp, x1), max(tp, x1), epsabs=1e-13)[0]


def test_distance_on_axis_matches_quadrature(quartic, wells):
    g = GridSpec.symmetric(2.0, 1.5, 512, 512)
    f = agmon_distance(quartic, 0.05, wells[0], g)
    for x1 in (-1.6, -0.6, -0.4, -0.2, -0.01):
        ref = _axis_oracle(0.05, x1)
        assert f((x1, 0.0)) == pytest.approx(ref, rel=0.01)


def test_field_contract(fields_E005):
    f = fields_E005[128]
    assert np.all(f.values[f.mask == SOURCE] == 0.0)
    assert np.all(np.isfinite(f.values[f.mask != 2]))


def test_distance_monotone_in_energy(quartic, wells, fields_E005):
    g = fields_E005[128].grid
    lo = agmon_distance(quartic, 0.03, wells[0], g)
    hi = fields_E005[128]
    both = (lo.mask == OUTSIDE) & (hi.mask == OUTSIDE)
    assert np.all(hi.values[both] <= lo.values[both] + 1e-12)


def test_eikonal_residual_first_order(quartic, fields_E005):
    c = {}
    for n, f in fields_E005.items():
        c[n] = eikonal_residual(f, quartic, 0.05).max() / f.grid.h_max
    # the residual scales with the spacing: the constant is stable under refinement
    assert c[256] <= 1.2 * c[128]


def test_mirror_symmetry_of_fields(quartic, wells, fields_E005):
    g = fields_E005[128].grid
    right = agmon_distance(quartic, 0.05, wells[1], g)
    left = fields_E005[128]
    ok = np.isfinite(right.values)
    np.testing.assert_array_equal(left.values[::-1][ok], right.values[ok])


def test_triangle_inequality_on_samples(quartic, fields_E005, rng):
    f = fields_E005[256]
    pts = rng.uniform([-1.8, -1.2], [-0.05, 1.2], size=(40, 2))
    tol = 3 * np.max(np.abs(fields_E005[128](pts) - f(pts)))
    s = np.linspace(0, 1, 201)
    for a, b in zip(pts[::2], pts[1::2]):
        seg = a + s[:, None] * (b - a)
        length = np.trapezoid(np.sqrt(np.maximum(quartic.value(seg) - 0.05, 0)), s) * np.linalg.norm(b - a)
        assert f(b) <= f(a) + length + tol


def test_band_too_small(quartic, wells):
    with pytest.raises(GridTooCoarse):
        agmon_distance(quartic, 0.05, wells[0], GridSpec.symmetric(2.0, 1.5, 16, 16),
                       band_factor=0.5)


def test_s0_at_zero_energy(quartic):
    S0, xE, _ = s0_between_wells(quartic, 0.0, GridSpec.symmetric(2.0, 1.5, 512, 512))
    assert S0 == pytest.approx(2.0 / 3.0, rel=0.01)
    np.testing.assert_array_equal(xE, [0.0, 0.0])


def test_s0_decreasing_in_energy(quartic):
    g = GridSpec.symmetric(2.0, 1.5, 256, 256)
    s = [s0_between_wells(quartic, E, g)[0] for E in (0.0, 0.02, 0.04, 0.06, 0.08, 0.1)]
    assert np.all(np.diff(s) < 0)
    for E, v in zip((0.0, 0.04, 0.08), s[::2]):
        assert v == pytest.approx(axis_action(quartic_1d, E), rel=0.01)


def test_instanton_harmonic_cosh():
    lam, E = 0.8, 0.1
    m = PotentialModel([(lam ** 2, 2, 0)])
    x0 = np.sqrt(E) / lam
    p = instanton_flow(m, (x0, 0.0), (0.0, 0.0), E, t_max=1.0, dt=1e-3)
    assert p.x[-1, 0] == pytest.approx(x0 * np.cosh(2 * lam), rel=1e-6)


def test_instanton_shell_and_reversal(quartic):
    from tunnelkit.agmon import axis_turning_point
    E = 0.05
    x0 = np.array([axis_turning_point(quartic, E), 0.02])
    x0[0] += 0.01
    xi0 = np.sqrt(quartic.value(x0) - E) * np.array([0.6, 0.8])
    p = instanton_flow(quartic, x0, xi0, E, t_max=1.5, dt=1e-3)
    assert np.abs(p.shell_residual(quartic)).max() <= 1e-8
    assert np.all(np.diff(p.action) >= 0)
    back = instanton_flow(quartic, p.x[-1], p.xi[-1], E, t_max=1.5, dt=-1e-3)
    np.testing.assert_allclose(back.x[-1], x0, atol=1e-6)
    np.testing.assert_allclose(back.xi[-1], xi0, atol=1e-6)


def test_instanton_off_shell_launch(quartic):
    with pytest.raises(ValueError):
        instanton_flow(quartic, (-0.5, 0.0), (1.0, 0.0), 0.05, tol_contour=1e-10)


def test_shell_drift_detected(quartic):
    with pytest.raises(ShellDrift):
        instanton_flow(quartic, (-0.7, 0.3), (0.0, 0.0), float(quartic.value((-0.7, 0.3))),
                       t_max=2.0, dt=0.2, tol_shell=1e-9)


def test_minimal_geodesic_is_axis(quartic):
    g = minimal_geodesic(quartic, 0.05)
    assert np.abs(g.x[:, 1]).max() <= 1e-8
    assert g.action[-1] == pytest.approx(axis_action(quartic_1d, 0.05), rel=1e-6)
    from oracles import quartic_1d as V1
    from scipy import optimize
    tp = optimize.brentq(lambda s: V1(s) - 0.05, -1.0, 0.0)
    assert np.linalg.norm(g.source - [tp, 0.0]) <= 4.0 / 256
    assert abs(quartic.value(g.x[0]) - 0.05) <= 1e-10
    np.testing.assert_array_equal(g.xi[0], [0.0, 0.0])


def test_minimal_geodesic_zero_energy(quartic):
    g = minimal_geodesic(quartic, 0.0)
    assert g.action[-1] == pytest.approx(2.0 / 3.0, rel=0.01)


def test_geodesic_reproduces_field(quartic, fields_E005):
    g = minimal_geodesic(quartic, 0.05)
    half = g.x[:, 0] <= 0
    f = fields_E005[256]
    tol = 3 * np.max(np.abs(fields_E005[128](g.x[half]) - f(g.x[half])))
    assert np.max(np.abs(g.action[half] - f(g.x[half]))) <= tol


def test_single_launch_minimum(quartic):
    n, _ = count_launch_minima(quartic, 0.05)
    assert n == 1


def test_flat_metric_chart_is_euclidean():
    m = PotentialModel([(1.0, 0, 0)])
    y = np.array([-0.5, 0.2])
    fan = ray_fan(m, point_source_launcher(m, y, 0.0), np.linspace(-1, 1, 9), 0.0, y, "point",
                  t_max=0.5, stop_at_axis=False, caustic_margin=0.0)
    for p in fan.tube:
        np.testing.assert_allclose(p.action, np.linalg.norm(p.x - y, axis=1), atol=1e-12)


def _axis_chart(quartic, wells, E=0.05):
    from tunnelkit.agmon import axis_turning_point
    y = np.array([axis_turning_point(quartic, E), 0.0])
    return action_chart(quartic, wells[0], y, E, fan_width=0.3, n_rays=21)


def test_chart_central_path_equals_distance(quartic, wells, fields_E005):
    ch = _axis_chart(quartic, wells)
    c = ch.central
    f = fields_E005[256]
    pts = c.x[5:]
    tol = 2 * np.max(np.abs(fields_E005[128](pts) - f(pts)))
    assert np.max(np.abs(c.action[5:] - f(pts))) <= tol
    # F dominates d on the whole tube, up to the local grid error
    x, F, _, _ = ch.points(stride=40)
    inside = (np.abs(x[:, 0]) < 1.9) & (np.abs(x[:, 1]) < 1.4)
    x, F = x[inside], F[inside]
    local = np.abs(fields_E005[128](x) - f(x))
    assert np.all(F >= f(x) - 3 * local - 1e-6)


def test_chart_jacobian_positive_monotone(quartic, wells):
    ch = _axis_chart(quartic, wells)
    for p in ch.tube:
        J = p.jacobian()[1:]
        J = J * np.sign(J[0])
        assert J[0] > 0
        k = int(np.argmax(J))
        assert np.all(np.diff(J[:k + 1]) >= 0)


def test_defect_equality_on_central_ray(defect_fit_report):
    s = defect_fit_report.samples
    on_ray = np.abs(s["X"]) < 1e-8
    if on_ray.any():
        assert np.max(np.abs(s["defect"][on_ray])) <= 1e-6


def test_defect_quadratic_law(defect_fit_report):
    assert defect_fit_report.r2 >= 0.99
    assert defect_fit_report.K_hat.size > 0 and defect_fit_report.K0 > 0
    assert defect_fit_report.defect_max <= 1e-6


def test_separable_check_trivial_at_zero(quartic, wells):
    lhs, rhs, res = prop2_separable_check(quartic, wells[0], 0.0, wells[0].center + [0.3, 0.2])
    assert lhs == 0.0 and rhs == 0.0 and res == 0.0


def test_separable_exponent_and_scale(quartic, wells):
    p, rows = prop2_exponent(quartic, wells[0], [0.01, 0.02, 0.04])
    assert p >= 1.7
    scale = np.array([r[5] for r in rows])
    assert np.all(np.abs(scale) >= 0.1) and np.all(np.abs(scale) <= 10)


def test_separable_check_rejects_coupling(wells):
    m = PotentialModel([(0.25, 4, 0), (-0.5, 2, 0), (0.25, 0, 0), (1.0, 0, 2), (0.1, 2, 2)])
    with pytest.raises(NotSeparable):
        prop2_separable_check(m, wells[0], 0.02, (-0.6, 0.2))


def test_smoothness_report(smoothness_report):
    r = smoothness_report
    assert r.n_minima == 1
    assert r.smooth
    np.testing.assert_allclose(r.ratios, 4.0, atol=1.0)
    np.testing.assert_allclose(r.dE_fd, r.dE_transit, rtol=0.02)


def test_transit_endpoint_exclusion(quartic, smoothness_report):
    g = minimal_geodesic(quartic, 0.05)
    seg = np.concatenate([[0.0], np.cumsum(np.linalg.norm(np.diff(g.x, axis=0), axis=1))])
    for p in smoothness_report.points:
        k = int(np.argmin(np.linalg.norm(g.x - p, axis=1)))
        assert seg[k] / seg[-1] <= 1.0 - smoothness_report.eps


@given(st.floats(-0.6, -0.05))
def test_energy_derivative_is_minus_transit(x1):
    from oracles import quartic_1d as V1
    from scipy import integrate, optimize
    m = PotentialModel.quartic_double_well()
    from tunnelkit.potential import find_wells
    L = find_wells(m)[0]
    E = 0.05
    tp = optimize.brentq(lambda s: V1(s) - E, -1.0, 0.0)
    if x1 <= tp + 1e-3:
        return
    d = lambda e: integrate.quad(lambda s: np.sqrt(max(V1(s) - e, 0)),
                                 optimize.brentq(lambda s: V1(s) - e, -1.0, 0.0), x1,
                                 epsabs=1e-14, epsrel=1e-13)[0]
    fd = (d(E + 1e-5) - d(E - 1e-5)) / 2e-5
    assert agmon_energy_derivative(m, L, E, (x1, 0.0)) == pytest.approx(fd, rel=1e-4)
