"""Regular grids and scalar fields sampled on them."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import interpolate

INSIDE = 0
OUTSIDE = 1
SOURCE = 2


@dataclass(frozen=True)
class GridSpec:
    """Node-centred rectangular grid, ``x = origin + (i, j) * spacing``."""

    origin: tuple
    spacing: tuple
    dims: tuple

    def __post_init__(self):
        if min(self.dims) < 16:
            raise ValueError("grid needs at least 16 nodes per direction")
        if min(self.spacing) <= 0:
            raise ValueError("spacing must be positive")

    @classmethod
    def symmetric(cls, half_width, half_height, n1, n2=None):
        """Cell-centred grid on ``[-a, a] x [-b, b]``; no node lies on ``x1 = 0``."""
        n2 = n1 if n2 is None else n2
        dx1 = 2.0 * half_width / n1
        dx2 = 2.0 * half_height / n2
        return cls((-half_width + dx1 / 2, -half_height + dx2 / 2), (dx1, dx2), (int(n1), int(n2)))

    @property
    def axes(self):
        return tuple(self.origin[k] + self.spacing[k] * np.arange(self.dims[k]) for k in range(2))

    def mesh(self):
        return np.meshgrid(*self.axes, indexing="ij")

    def points(self):
        x1, x2 = self.mesh()
        return np.stack([x1, x2], axis=-1)

    def refined(self, factor=2):
        """Same extent, spacing divided by ``factor`` (cell-centred grids stay cell-centred)."""
        lo = [self.origin[k] - self.spacing[k] / 2 for k in range(2)]
        sp = [self.spacing[k] / factor for k in range(2)]
        return GridSpec((lo[0] + sp[0] / 2, lo[1] + sp[1] / 2), tuple(sp),
                        tuple(int(n * factor) for n in self.dims))

    def coarsened(self, factor=2):
        lo = [self.origin[k] - self.spacing[k] / 2 for k in range(2)]
        sp = [self.spacing[k] * factor for k in range(2)]
        return GridSpec((lo[0] + sp[0] / 2, lo[1] + sp[1] / 2), tuple(sp),
                        tuple(int(n // factor) for n in self.dims))

    @property
    def h_max(self):
        return float(max(self.spacing))


@dataclass(frozen=True)
class ScalarField2D:
    grid: GridSpec
    values: np.ndarray
    mask: np.ndarray
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        v, m = self.values, self.mask
        if v.shape != tuple(self.grid.dims) or m.shape != v.shape:
            raise ValueError("values/mask shape does not match grid")
        if not np.all(np.isfinite(v[m != INSIDE])):
            raise ValueError("field must be finite on Outside and Source nodes")
        if np.any(v[m == SOURCE] != 0):
            raise ValueError("field must vanish on Source nodes")

    def interpolator(self, kx=3, ky=3):
        vals = np.where(np.isfinite(self.values), self.values, 0.0)
        x1, x2 = self.grid.axes
        return interpolate.RectBivariateSpline(x1, x2, vals, kx=kx, ky=ky)

    def __call__(self, x):
        """Bicubic interpolation at points ``x`` (shape ``(..., 2)``)."""
        x = np.asarray(x, dtype=float)
        f = self.meta.get("_spline")
        if f is None:
            f = self.interpolator()
            self.meta["_spline"] = f
        out = f.ev(x[..., 0], x[..., 1])
        return out if out.ndim else float(out)

    def column_on_axis(self):
        """Values on ``x1 = 0`` (exact node column, or linear blend of the two straddling ones)."""
        x1, x2 = self.grid.axes
        j = int(np.searchsorted(x1, 0.0))
        if j < x1.size and abs(x1[j]) < 1e-12 * self.grid.spacing[0]:
            return x2, self.values[j].copy()
        if j == 0 or j == x1.size:
            raise ValueError("grid does not straddle the symmetry axis")
        w = -x1[j - 1] / (x1[j] - x1[j - 1])
        return x2, (1 - w) * self.values[j - 1] + w * self.values[j]
