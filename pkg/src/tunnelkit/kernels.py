"""Kernel selection: compiled extension if importable, else the pure-Python twin.

Set ``TUNNELKIT_PURE_PYTHON=1`` to force the fallback.
"""
import math
import os

import numpy as np

from . import _pykernels

BACKEND = "python"
_impl = _pykernels
if os.environ.get("TUNNELKIT_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from ._ext import _kernels as _compiled
    except ImportError:  # pragma: no cover - depends on build
        pass
    else:
        _impl = _compiled
        BACKEND = "cython"

REASONS = {0: "steps", 1: "crossed", 2: "entered_well", 3: "left_box",
           4: "closest_approach", 5: "blowup"}


def fast_march(slowness, dx1, dx2, values, frozen, backend=None):
    """Solve ``|grad T| = slowness`` outward from the frozen nodes."""
    impl = _select(backend)
    n = np.ascontiguousarray(slowness, dtype=np.float64)
    v = np.ascontiguousarray(values, dtype=np.float64)
    f = np.ascontiguousarray(frozen, dtype=np.uint8)
    return impl.fast_march(n, float(dx1), float(dx2), v, f)


def integrate_ray(poly, state0, dt, nsteps, *, E=0.0, x1_stop=None, target=None,
                  stop_enter=False, enter_tol=1e-9, rmax=1e3, tangent0=None,
                  backend=None):
    """Integrate ``x' = 2 xi, xi' = grad V`` from ``state0 = (x, xi)``.

    Returns
    -------
    samples : ndarray, shape (m, 5)
        Columns ``t, x1, x2, xi1, xi2``.
    tangents : ndarray or None, shape (m, 4)
        Linearised flow applied to ``tangent0``.
    reason : str
        Why integration stopped, one of ``REASONS.values()``.
    """
    impl = _select(backend)
    coeffs = np.ascontiguousarray(poly.coeffs, dtype=np.float64)
    ea = np.ascontiguousarray(poly.ea, dtype=np.int64)
    eb = np.ascontiguousarray(poly.eb, dtype=np.int64)
    tgt = np.empty(0) if target is None else np.ascontiguousarray(target, dtype=np.float64)
    tan = np.empty(0) if tangent0 is None else np.ascontiguousarray(tangent0, dtype=np.float64)
    xs = math.nan if x1_stop is None else float(x1_stop)
    out, tans, code = impl.integrate_rays(
        coeffs, ea, eb, np.ascontiguousarray(state0, dtype=np.float64), float(dt),
        int(nsteps), float(E), xs, tgt, int(bool(stop_enter)), float(enter_tol),
        float(rmax), tan)
    return out, tans, REASONS[int(code)]


def _select(backend):
    if backend is None:
        return _impl
    if backend == "python":
        return _pykernels
    if backend == "cython":
        from ._ext import _kernels
        return _kernels
    raise ValueError(f"unknown backend {backend!r}")
