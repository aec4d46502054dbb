"""Acceptance criteria, one test each; every test prints a PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py -v`` (the lines are printed
outside pytest's capture) or as ``python3 tests/test_acceptance.py``.
"""
import itertools
import sys

import numpy as np
import pytest

from oracles import axis_action, quartic_1d
from tunnelkit import agmon
from tunnelkit.grid import GridSpec
from tunnelkit.potential import PotentialModel, single_well
from tunnelkit.reference import assemble, doublet_splitting, half_spectra, lowest_eigenpairs, residuals
from tunnelkit.spectrum import ebk_energy, make_state
from tunnelkit.tunneling import (correspondence_defect, exponent_fit, find_tunnel_cycles,
                                 splitting_for)

QUARTIC = PotentialModel.quartic_double_well()
REF_GRID = GridSpec.symmetric(2.2, 1.3, 256, 128)
TOL_FIT = 1e-6
TOL_EIG = 1e-8


@pytest.fixture
def report(request, pytestconfig):
    capman = pytestconfig.pluginmanager.getplugin("capturemanager")

    def emit(ok, detail):
        line = f"{'PASS' if ok else 'FAIL'} {request.node.name[5:]}: {detail}"
        if capman is not None:
            with capman.global_and_fixture_disabled():
                print("\n" + line)
        else:
            print(line)
        assert ok, line
    return emit


def test_ebk_harmonic(report):
    m = PotentialModel([(1.0, 2, 0), (2.0, 0, 2)])
    h = 0.05
    w = single_well(m)
    ebk = np.sort([ebk_energy(w, a, h) for a in itertools.product(range(9), repeat=2)])[:9]
    fd, _ = lowest_eigenpairs(assemble(m, GridSpec.symmetric(1.2, 1.2, 256), h), 9, TOL_EIG)
    err = np.max(np.abs(ebk - fd) / fd)
    report(err <= 1e-3, f"max relative error {err:.2e} (tol 1e-3)")


@pytest.fixture(scope="module")
def reference_ladder():
    hs = (0.1, 0.08, 0.06, 0.05, 0.04)
    return hs, [doublet_splitting(QUARTIC, REF_GRID, h, tol_eig=TOL_EIG) for h in hs]


def test_agmon_exponent(report, reference_ladder):
    hs, res = reference_ladder
    slope, _ = exponent_fit(hs, [r.delta for r in res])
    S0 = axis_action(quartic_1d, 0.0)
    rel = abs(slope / S0 - 1)
    report(rel <= 0.10, f"slope {slope:.4f} vs S0 {S0:.4f}, deviation {rel:.1%} (tol 10%)")


def test_herring_consistency(report, reference_ladder):
    hs, res = reference_ladder
    h = 0.05
    ref = res[hs.index(h)].delta
    dh, ds, _, _ = splitting_for(QUARTIC, 2 * h, h)
    rel = abs(np.log(abs(dh)) / np.log(abs(ref)) - 1)
    ratio = ds / dh
    ok = rel <= 0.05 and 0.8 <= ratio <= 1.25
    report(ok, f"-h log delta deviation {rel:.2%} (tol 5%), stationary/Herring {ratio:.4f}"
               " (band [0.8, 1.25])")


def test_defect_quadratic_law(report, defect_fit_report):
    r = defect_fit_report
    ok = r.r2 >= 0.99 and r.K_hat.size > 0 and bool(np.all(r.K_hat > 0))
    report(ok, f"R^2 {r.r2:.4f} (>= 0.99), min K {r.K_hat.min():.3g} over {r.K_hat.size} samples")


def test_separable_residual_exponent(report, wells):
    p, _ = agmon.prop2_exponent(QUARTIC, wells[0], [0.01, 0.02, 0.04])
    report(p >= 1.7, f"residual exponent {p:.3f} (>= 1.7)")


def test_transit_smoothness(report, smoothness_report):
    r = smoothness_report
    n, _ = agmon.count_launch_minima(QUARTIC, 0.05)
    ok = bool(np.all(np.abs(r.ratios - 4.0) <= 1.0)) and r.n_minima == 1 and n == 1
    report(ok, f"ratios {np.array2string(r.ratios, precision=3)} (4 +- 1), "
               f"launch minima {r.n_minima}/{n}")


def test_tunnel_cycles(report, wells):
    st = make_state(wells[0], (1, 1), 0.02, model=QUARTIC, project=True)
    ax = [c for c in find_tunnel_cycles(QUARTIC, st, wells=wells) if c.label == "axis"][0]
    S0 = axis_action(quartic_1d, st.energy)
    d_ax = correspondence_defect(QUARTIC, st, wells=wells, umbilic="axis").total
    ladder = [abs(correspondence_defect(QUARTIC, make_state(wells[0], (1, 0), h, model=QUARTIC,
                                                             project=True), wells=wells).total)
              for h in (0.04, 0.02, 0.01)]
    ok = (ax.is_cycle and ax.minimal and ax.mismatch <= 1e-6
          and abs(ax.action - S0) <= 1e-3 * S0 and abs(d_ax) <= TOL_FIT
          and ladder[0] > ladder[1] > ladder[2])
    report(ok, f"mismatch {ax.mismatch:.1e}, |S - S0|/S0 {abs(ax.action - S0) / S0:.1e}, "
               f"defect {abs(d_ax):.1e}, ladder {', '.join(f'{v:.4f}' for v in ladder)}")


def _disk_error(n, r0=0.25):
    g = GridSpec.symmetric(1.0, 1.0, n, n)
    r = np.linalg.norm(g.points(), axis=-1)
    src = r <= r0
    d = agmon.solve_eikonal(g, np.ones(g.dims), np.zeros(g.dims), src)
    return np.max(np.abs(d - (r - r0))[~src]) / (r - r0).max()


def test_numerical_hygiene(report):
    e128, e256 = _disk_error(128), _disk_error(256)
    E = 0.05
    ray = agmon.instanton_flow(QUARTIC, (agmon.axis_turning_point(QUARTIC, E, -1), 0.0),
                               (0.0, 0.0), E, t_max=5.0, dt=1e-3)
    q = np.abs(ray.shell_residual(QUARTIC)).max()
    g = GridSpec.symmetric(2.2, 1.3, 128, 64)
    wN, wD, rN, rD = half_spectra(QUARTIC, g, 0.1, 4, TOL_EIG)
    res = max(rN.max(), rD.max())
    again = half_spectra(QUARTIC, g, 0.1, 4, TOL_EIG)
    f1 = agmon.s0_between_wells(QUARTIC, E, GridSpec.symmetric(2.0, 1.5, 128))
    f2 = agmon.s0_between_wells(QUARTIC, E, GridSpec.symmetric(2.0, 1.5, 128))
    same = (all(np.array_equal(a, b) for a, b in zip((wN, wD, rN, rD), again))
            and f1[0] == f2[0] and np.array_equal(f1[2].values, f2[2].values))
    ok = e256 <= 0.02 and e128 / e256 >= 1.8 and q <= 1e-8 and res <= TOL_EIG and same
    report(ok, f"disk error {e256:.2%} at 256^2 (gain {e128 / e256:.2f}), q drift {q:.1e}, "
               f"eigen-residual {res:.1e}, deterministic {same}")


if __name__ == "__main__":  # pragma: no cover
    sys.exit(pytest.main([__file__, "-q"]))
