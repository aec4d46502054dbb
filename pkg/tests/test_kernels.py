import numpy as np
import pytest
from hypothesis import given, strategies as st

from tunnelkit import kernels
from tunnelkit.potential import PotentialModel

cython = pytest.mark.skipif(kernels.BACKEND != "cython", reason="compiled kernels not built")


def _march_case(seed, n=24):
    rng = np.random.default_rng(seed)
    s = rng.uniform(0.5, 2.0, size=(n, n + 3))
    frozen = np.zeros(s.shape, dtype=bool)
    frozen[n // 2, n // 3] = True
    vals = np.where(frozen, 0.0, np.inf)
    return s, vals, frozen


@cython
@pytest.mark.parametrize("seed", [0, 1, 2])
def test_fast_march_parity(seed):
    s, v, f = _march_case(seed)
    a = kernels.fast_march(s, 0.1, 0.07, v, f, backend="cython")
    b = kernels.fast_march(s, 0.1, 0.07, v, f, backend="python")
    np.testing.assert_allclose(a, b, rtol=1e-14, atol=0)


@cython
def test_ray_parity(quartic):
    x0 = np.array([-0.7, 0.05])
    xi0 = np.array([0.0, 0.0])
    E = float(quartic.value(x0))
    kw = dict(E=E, x1_stop=0.0, tangent0=[0.0, 1.0, 0.0, 0.0])
    a = kernels.integrate_ray(quartic, np.r_[x0, xi0], 1e-3, 4000, backend="cython", **kw)
    b = kernels.integrate_ray(quartic, np.r_[x0, xi0], 1e-3, 4000, backend="python", **kw)
    assert a[2] == b[2] == "crossed"
    np.testing.assert_allclose(a[0], b[0], rtol=1e-12, atol=1e-14)
    np.testing.assert_allclose(a[1], b[1], rtol=1e-12, atol=1e-14)


def test_fast_march_flat_point_source():
    n = 41
    s = np.ones((n, n))
    frozen = np.zeros_like(s, dtype=bool)
    frozen[20, 20] = True
    d = kernels.fast_march(s, 0.05, 0.05, np.where(frozen, 0.0, np.inf), frozen)
    # axis-aligned distances are exact for the first-order upwind scheme
    np.testing.assert_allclose(d[20, 20:], 0.05 * np.arange(21), atol=1e-14)
    np.testing.assert_allclose(d[20:, 20], 0.05 * np.arange(21), atol=1e-14)
    # diagonal distance overestimates Euclidean by at most the first-order bias
    r = np.hypot(*np.meshgrid(np.arange(n) - 20, np.arange(n) - 20, indexing="ij")) * 0.05
    assert np.all(d >= r - 1e-12)
    assert np.max(d - r) <= 0.3 * r.max()


@given(st.floats(0.2, 3.0), st.floats(0.2, 3.0))
def test_fast_march_scales_with_slowness(c1, c2):
    s, v, f = _march_case(7, n=12)
    a = kernels.fast_march(c1 * s, 0.1, 0.1, v, f)
    b = kernels.fast_march(c2 * s, 0.1, 0.1, v, f)
    np.testing.assert_allclose(a / c1, b / c2, rtol=1e-12)


def test_ray_reversibility(quartic):
    state = np.array([-0.6, 0.1, 0.05, 0.02])
    E = float(quartic.value(state[:2]) - state[2:] @ state[2:])
    out, _, _ = kernels.integrate_ray(quartic, state, 1e-3, 800, E=E)
    back, _, _ = kernels.integrate_ray(quartic, out[-1, 1:], -1e-3, 800, E=E)
    np.testing.assert_allclose(back[-1, 1:], state, atol=1e-10)


def test_ray_harmonic_closed_form():
    lam = 1.3
    m = PotentialModel([(lam ** 2, 2, 0)])
    E = 0.2
    x0 = np.sqrt(E) / lam
    out, _, _ = kernels.integrate_ray(m, np.array([x0, 0.0, 0.0, 0.0]), 1e-3, 1000, E=E)
    assert out[-1, 0] == pytest.approx(1.0)
    assert out[-1, 1] == pytest.approx(x0 * np.cosh(2 * lam * 1.0), rel=1e-6)
