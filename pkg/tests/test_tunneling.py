import numpy as np
import pytest
from scipy import integrate, optimize

from oracles import quartic_1d
from tunnelkit import tunneling as T
from tunnelkit.agmon import minimal_geodesic
from tunnelkit.errors import CoverageGap, DegenerateCriticalPoint
from tunnelkit.grid import GridSpec
from tunnelkit.potential import PotentialModel
from tunnelkit.spectrum import make_state

LADDER = (0.08, 0.04, 0.02)


def _transit_to_axis(y1, V1=quartic_1d):
    """``int dx / (2 sqrt(V1(x) - V1(y1)))`` from ``y1`` to the axis (endpoint substitution)."""
    e = V1(y1)
    g = lambda u: u / np.sqrt(max(V1(y1 + u * u) - e, 1e-300))
    return integrate.quad(g, 0.0, np.sqrt(-y1), epsabs=1e-14, epsrel=1e-13, limit=200)[0]


@pytest.fixture(scope="module")
def corner_state(quartic, wells):
    return make_state(wells[0], (1, 1), 0.02, model=quartic, project=True)


@pytest.fixture(scope="module")
def pairs(quartic):
    return {h: T.axis_quasimode_pair(quartic, 2 * h, h) for h in LADDER + (0.05,)}


def test_axis_shot_is_minimal_cycle(quartic, corner_state):
    cyc = T.find_tunnel_cycles(quartic, corner_state)
    ax = [c for c in cyc if c.label == "axis"][0]
    assert ax.is_cycle and ax.minimal
    assert ax.mismatch <= 1e-6
    S0 = minimal_geodesic(quartic, corner_state.energy).action[-1]
    assert abs(ax.action - S0) <= 1e-3 * S0


def test_cycle_invariants(quartic, wells, corner_state):
    cyc = T.find_tunnel_cycles(quartic, corner_state)
    S0 = minimal_geodesic(quartic, corner_state.energy).action[-1]
    for c in cyc:
        assert c.mismatch >= 0
        assert c.is_cycle == (c.mismatch <= 1e-4)
        assert abs(quartic.value(c.y_L) - corner_state.energy) <= 1e-10
        np.testing.assert_array_equal(c.y_R, c.y_L * [-1, 1])
        if c.minimal:
            assert abs(c.action - S0) <= 1e-3 * S0


def test_corner_mismatch_closed_form(quartic, wells, corner_state):
    lam2 = wells[0].lambda2
    y = corner_state.inner_umbilic(wells[0])
    _, mis = T.cycle_shot(quartic, y, corner_state.energy, lam2)
    t_star = _transit_to_axis(y[0])
    ref = 2 * np.sqrt(lam2) * abs(y[1]) * np.sinh(2 * lam2 * t_star)
    assert mis == pytest.approx(ref, rel=1e-6)
    assert mis > 1e-4


def test_mismatch_mirror_symmetric(quartic, wells, corner_state):
    y = corner_state.inner_umbilic(wells[0])
    _, a = T.cycle_shot(quartic, y, corner_state.energy, wells[0].lambda2)
    _, b = T.cycle_shot(quartic, y * [-1, 1], corner_state.energy, wells[0].lambda2)
    assert abs(a - b) <= 1e-10


def test_defect_vanishes_on_minimal_cycle(quartic, corner_state):
    d = T.correspondence_defect(quartic, corner_state, umbilic="axis")
    assert np.all(np.abs(d.terms) <= 1e-6)
    assert abs(d.total) <= 1e-6


def test_defect_decreases_along_ladder(quartic, wells):
    tot = [abs(T.correspondence_defect(quartic, make_state(wells[0], (1, 0), h, model=quartic,
                                                           project=True)).total)
           for h in (0.04, 0.02, 0.01)]
    assert tot[0] > tot[1] > tot[2]


def test_defect_energy_term_taylor(quartic, wells):
    s = make_state(wells[0], (1, 0), 0.02, model=quartic, project=True)
    d = T.correspondence_defect(quartic, s, E_prime=s.energy * 0.97)
    assert d.terms[1] == pytest.approx(d.term2_taylor, rel=0.05)


def test_point_source_amplitude_spreading():
    m = PotentialModel([(1.0, 0, 0)])
    y = np.array([-0.5, 0.0])
    fan = T.agmon.ray_fan(m, T.agmon.point_source_launcher(m, y, 0.0), np.linspace(-0.3, 0.3, 7),
                          0.0, y, "point", t_max=1.0, stop_at_axis=False, caustic_margin=0.0)
    q = T.build_quasimode(fan, 0.1, normalize=False)
    for k, p in enumerate(fan.tube):
        r = np.linalg.norm(p.x - y, axis=1)[50:]
        c = q.amplitude[k][50:] * np.sqrt(r)
        assert np.ptp(c) <= 0.02 * c.mean()


def test_axis_amplitude_matches_1d_wkb(quartic, pairs):
    # the transverse ground state shifts the longitudinal energy by lam2 h
    h = 0.02
    qL, _ = pairs[h]
    k = int(np.argmin(np.abs(qL.chart.params)))
    c, a = qL.chart.tube[k], qL.amplitude[k]
    E1 = 2 * h - h
    tp = optimize.brentq(lambda s: quartic_1d(s) - E1, -1.0, 0.0)
    x = c.x[:, 0]
    sel = (x > -0.4) & (x < -0.02)
    u = a[sel] * np.exp(-c.action[sel] / h)
    w = np.array([(quartic_1d(s) - E1) ** -0.25 * np.exp(-integrate.quad(
        lambda r: np.sqrt(quartic_1d(r) - E1), tp, s)[0] / h) for s in x[sel]])
    r = u / w
    assert 1 - r.min() / r.max() <= 0.03


def test_phase_amplitude_separation(quartic, pairs):
    ch = pairs[0.05][0].chart
    q1 = T.build_quasimode(ch, 0.05, normalize=False)
    q2 = T.build_quasimode(ch, 0.1, normalize=False)
    for k in (0, 20, 40):
        u1, u2 = q1.values(k), q2.values(k)
        ok = np.isfinite(u1) & (u1 > 0)
        F = ch.tube[k].action[ok]
        np.testing.assert_allclose(np.log(u1[ok]) - np.log(u2[ok]), -F * (1 / 0.05 - 1 / 0.1),
                                   rtol=1e-12, atol=1e-12)


def test_quasimode_transport(pairs):
    for h, (qL, _) in pairs.items():
        assert qL.transport_residual() <= 1e-3
        assert qL.jacobian_residual() <= 1e-3
        assert all(np.all(a[qL._interior(k)] > 0) for k, a in enumerate(qL.amplitude))


def test_herring_sigma_concentration(pairs):
    qL, qR = pairs[0.05]
    full = T.herring_splitting(qL, qR)
    lo, hi = T.select_sigma(qL, qR)
    part = T.herring_splitting(qL, qR, sigma=(lo, lo + 0.3 * (hi - lo)))
    assert abs(part) * 10 <= abs(full)


def test_herring_swap_symmetric(pairs):
    qL, qR = pairs[0.05]
    assert T.herring_splitting(qR, qL) == pytest.approx(T.herring_splitting(qL, qR), rel=1e-10)


def test_herring_independent_right_chart(quartic, wells, pairs):
    qL, qR = pairs[0.05]
    y = np.array([-qL.chart.source[0], 0.0])
    ch = T.action_chart(quartic, wells[1], y, 0.1, fan_width=qL.chart.params.max(), n_rays=41,
                        kind="axis")
    qR2 = T.build_quasimode(ch, 0.05)
    assert T.herring_splitting(qL, qR2) == pytest.approx(T.herring_splitting(qL, qR), rel=1e-6)


def test_herring_coverage_gap(pairs):
    qL, qR = pairs[0.05]
    lo, hi = T._coverage(qL, qR)
    with pytest.raises(CoverageGap):
        T.herring_splitting(qL, qR, sigma=(lo - 0.5, hi))


def test_stationary_phase_consistency(pairs):
    dev = []
    for h in LADDER:
        qL, qR = pairs[h]
        dh = T.herring_splitting(qL, qR)
        ds = T.stationary_phase_splitting(qL, qR)
        assert np.sign(dh) == np.sign(ds)
        dev.append(abs(ds / dh - 1) / h)
    C = max(dev)
    print(f"stationary-phase constant C = {C:.3g}")
    assert C <= 1.0


def test_critical_point_on_axis(quartic, pairs):
    cp = T.phase_critical_point(*pairs[0.05])
    assert cp.x2 == 0.0
    from tunnelkit.agmon import s0_between_wells
    g = GridSpec.symmetric(2.0, 1.5, 128, 128)
    xE = s0_between_wells(quartic, 0.1, g)[1]
    assert abs(cp.x2 - xE[1]) <= 2 * g.spacing[1]


def test_degenerate_critical_point(pairs):
    with pytest.raises(DegenerateCriticalPoint):
        T.phase_critical_point(*pairs[0.05], tol_hess=1e6)


def test_exponent_law(quartic):
    hs = (0.05, 0.04, 0.03, 0.02)
    d = [T.splitting_for(quartic, 2 * h, h)[0] for h in hs]
    assert all(x > 0 for x in d)
    slope, _ = T.exponent_fit(hs, d)
    assert slope == pytest.approx(2 / 3, rel=0.05)


@pytest.fixture(scope="module")
def series(quartic):
    return T.spectral_tunnel_series(quartic, 0.02, 0.12)


def test_series_rows(series):
    ladder = [r for r in series if r.alpha[1] == 0 and "above_barrier" not in r.flags]
    assert len(ladder) >= 6
    for r in ladder:
        assert np.isfinite(r.S0)
        assert r.delta_herring is not None and abs(r.delta_herring) > 0
        assert r.sign == np.sign(r.delta_stationary)
    for r in series:
        if "above_barrier" in r.flags:
            assert r.delta_herring is None and not np.isfinite(r.S0)
        elif r.alpha[1] > 0:
            assert "transverse_excited" in r.flags
            assert r.delta_herring is None and r.delta_stationary is None


def test_series_s0_monotone(series):
    for a2 in (0, 1):
        rows = sorted((r for r in series if r.alpha[1] == a2 and "above_barrier" not in r.flags),
                      key=lambda r: r.E_center)
        assert np.all(np.diff([r.S0 for r in rows]) <= 1e-12)


def test_series_ground_row_matches_standalone(quartic, series):
    g = [r for r in series if r.alpha == (0, 0)][0]
    dh, ds, _, _ = T.splitting_for(quartic, g.E_center, 0.02)
    assert g.delta_herring == dh and g.delta_stationary == ds


def test_series_above_barrier_flag(quartic):
    rows = T.spectral_tunnel_series(quartic, 0.05, 0.3, alphas=[(3, 0), (0, 0)])
    top = [r for r in rows if r.alpha == (3, 0)][0]
    assert "above_barrier" in top.flags and top.delta_herring is None
