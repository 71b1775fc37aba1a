"""Hermitian prequantum bundle powers L^k via unit-frame chart data.

A section of L^k is represented by its values in per-chart *unit* frames
(|frame| = 1 pointwise), so transition functions are pure phases and the
connection becomes d - i k A with a real 1-form A satisfying dA = omega:

* sphere charts: A = Im(d(rho)/dz * dz) with rho the Kahler potential, so
  the round case reproduces the familiar monopole potential
  (x dy - y dx)/(1+|z|^2) and the N/S transition is (z/|z|)^k;
* torus: Landau gauge A = (flux density) * x dy, with magnetic-translation
  quasi-periodicity exp(i k B L1 y) across the x-period.

Discrete sections live on a GridSystem; covariant derivatives use the
grid's 4th-order stencils.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import geometry as geo
from .geometry import ChartPoint, Tangent
from .grids import GridSystem, interp2


class BundleError(ValueError):
    pass


@dataclass
class BundleData:
    """Connection data for L^k over a model."""

    model: object
    k: int

    def potential(self, p: ChartPoint) -> np.ndarray:
        """Real 1-form A (per unit of k) with dA = omega, chart components."""
        model = self.model
        if model.kind == "flat_torus":
            model._check(p)
            return np.array([0.0, model.flux_density * (p.coords[0] - 0.5 * model.periods[0])])
        alpha = model.potential_dz(p)
        return np.array([alpha.imag, alpha.real])

    def transition(self, p: ChartPoint, to_chart: str) -> complex:
        """Phase g with value_to(chart image of p) = g * value_from(p)."""
        model = self.model
        if model.kind == "flat_torus":
            return 1.0 + 0.0j
        model._check(p)
        if to_chart == p.chart:
            return 1.0 + 0.0j
        w = 1.0 / p.z  # coordinates in the target chart
        return (w / abs(w)) ** self.k

    def torus_translation_phases(self, p: ChartPoint) -> tuple[complex, complex]:
        """(U1, U2) with s(x+L1,y) = U1 s(x,y), s(x,y+L2) = U2 s(x,y)."""
        model = self.model
        kb = self.k * model.flux_density * model.periods[0]
        return complex(np.exp(1j * kb * p.coords[1])), 1.0 + 0.0j

    # -- invariant checks ------------------------------------------------------

    def curvature_residual(self, points, fd_step=1e-4) -> float:
        """max |dA - omega| over points, by centered differences of A."""
        worst = 0.0
        for p in points:
            x, y = p.coords
            h = fd_step

            def pot(xx, yy):
                return self.potential(ChartPoint(p.chart, (xx, yy)))

            day_dx = (pot(x + h, y)[1] - pot(x - h, y)[1]) / (2 * h)
            dax_dy = (pot(x, y + h)[0] - pot(x, y - h)[0]) / (2 * h)
            worst = max(worst, abs(day_dx - dax_dy - self.model.area_density(p)))
        return worst

    def cocycle_residual(self, points) -> float:
        """|g_ab g_ba - 1| over overlap points (two charts: the full cocycle)."""
        if self.model.kind == "flat_torus":
            l1, l2 = self.model.periods
            kb = self.k * self.model.flux_density * l1
            # going around the cell corner must close up: exp(i k B L1 L2) = 1
            return abs(np.exp(1j * kb * l2) - 1.0)
        worst = 0.0
        for p in points:
            g1 = self.transition(p, "S" if p.chart == "N" else "N")
            q = self.model.to_chart(p, "S" if p.chart == "N" else "N")
            g2 = self.transition(q, p.chart)
            worst = max(worst, abs(g1 * g2 - 1.0), abs(abs(g1) - 1.0))
        return worst

    def gauge_compatibility_residual(self, points) -> float:
        """|A_a - T*(A_b) - d(arg transition)/k...| with the k=1 form.

        For the sphere the transition is exp(i k arg z), so the potentials in
        overlapping charts must differ by d(arg z).
        """
        if self.model.kind == "flat_torus":
            return 0.0
        worst = 0.0
        for p in points:
            other = "S" if p.chart == "N" else "N"
            q = self.model.to_chart(p, other)
            jac = self.model.transition_jacobian(p)
            a_here = self.potential(p)
            a_there = self.potential(q)
            x, y = p.coords
            r2 = x * x + y * y
            dlam = np.array([-y / r2, x / r2])  # d(arg z)
            resid = a_here - jac.T @ a_there - dlam
            worst = max(worst, float(np.abs(resid).max()))
        return worst


def build_bundle(model, k: int) -> BundleData:
    """Construct L^k data; validates the prequantum condition."""
    if k < 0:
        raise BundleError("tensor power k must be >= 0")
    area = geo.TOTAL_AREA
    if abs(area / (2 * math.pi) - round(area / (2 * math.pi))) > 1e-12:
        raise BundleError("symplectic class not integral under the convention")
    return BundleData(model=model, k=int(k))


class DiscreteSection:
    """Unit-frame values of a section on a GridSystem.

    ``dof`` holds the owned-node values; the filled per-chart arrays (ghosts
    included) and covariant-derivative arrays are materialized lazily.
    """

    def __init__(self, grid: GridSystem, dof: np.ndarray):
        if dof.shape[0] != grid.ndof:
            raise ValueError("dof vector does not match grid")
        self.grid = grid
        self.k = grid.k
        self.dof = np.asarray(dof, dtype=complex)
        self._arrays = None
        self._deriv = None

    @property
    def chart_arrays(self):
        if self._arrays is None:
            self._arrays = self.grid.extended(self.dof)
        return self._arrays

    @property
    def deriv_arrays(self):
        """Per chart: (C_x values, C_y values) as 2-d arrays."""
        if self._deriv is None:
            out = []
            ext = self.grid.extension @ self.dof
            n = self.grid.n
            for ci, cd in enumerate(self.grid.charts):
                block = ext[ci * n * n:(ci + 1) * n * n]
                cx, cy = self.grid.cov_ops[ci]
                out.append(((cx @ block).reshape(n, n), (cy @ block).reshape(n, n)))
            self._deriv = out
        return self._deriv

    def value_at(self, p: ChartPoint) -> complex:
        p = self.grid.model.preferred_chart(p)
        ci = self.grid.chart_index(p.chart)
        cd = self.grid.charts[ci]
        if self.grid.model.kind == "flat_torus":
            return _torus_interp(self.grid, self.chart_arrays[ci], p)
        return interp2(self.chart_arrays[ci], cd.axis, p.coords[0], p.coords[1])


def _torus_interp(grid, values, p: ChartPoint, pad=4):
    """Quasi-periodic interpolation on the torus grid.

    The grid is padded periodically in y and with magnetic-translation
    phases exp(i k B L1 y) per x-wrap; works for stacked value arrays.
    """
    cd = grid.charts[0]
    n = cd.n
    model = grid.model
    kb = grid.k * model.flux_density * model.periods[0]
    idx = np.arange(-pad, n + pad)
    wrap = idx // n
    core = idx % n
    big = values[np.ix_(core, core)]
    phase = np.exp(1j * kb * np.outer(wrap, cd.axis[core]))
    big = big * (phase.reshape(phase.shape + (1,) * (values.ndim - 2)))
    axis_big = cd.axis[0] + idx * cd.h
    p = model.canonical(p)
    return interp2(big, axis_big, p.coords[0], p.coords[1])


def covariant_derivative(b: BundleData, s: DiscreteSection, x: ChartPoint,
                         v: Tangent) -> complex:
    """(nabla_v s)(x) in the unit frame of x's preferred chart."""
    grid = s.grid
    x = grid.model.preferred_chart(x)
    v = grid.model.push_tangent(v, x.chart) if v.base.chart != x.chart else v
    ci = grid.chart_index(x.chart)
    cd = grid.charts[ci]
    dx_arr, dy_arr = s.deriv_arrays[ci]
    if grid.model.kind == "flat_torus":
        gx = _torus_interp(grid, dx_arr, x)
        gy = _torus_interp(grid, dy_arr, x)
    else:
        gx = interp2(dx_arr, cd.axis, x.coords[0], x.coords[1])
        gy = interp2(dy_arr, cd.axis, x.coords[0], x.coords[1])
    return complex(v.vec[0] * gx + v.vec[1] * gy)


def l2_inner_product(b: BundleData, s1: DiscreteSection, s2: DiscreteSection) -> complex:
    """Riemannian L2 pairing, conjugate-linear in the first slot."""
    if s1.grid is not s2.grid:
        if (s1.grid.n != s2.grid.n) or (s1.grid.k != s2.grid.k):
            raise ValueError("grid mismatch")
    w = s1.grid.mass_weights()
    v1 = s1.grid.extension @ s1.dof
    v2 = s2.grid.extension @ s2.dof
    return complex(np.vdot(v1 * w, v2) + 0.0)


def random_smooth_section(grid: GridSystem, seed=0, bump_center=(0.0, 0.0),
                          bump_radius=0.55) -> DiscreteSection:
    """A smooth compactly-supported test section (vanishes near chart seams)."""
    rng = np.random.default_rng(seed)
    coeff = rng.standard_normal(6) + 1j * rng.standard_normal(6)
    cd = grid.charts[0]
    xx, yy = np.meshgrid(cd.axis, cd.axis, indexing="ij")
    if grid.model.kind == "flat_torus":
        l1, l2 = grid.model.periods
        cx, cy = l1 / 2, l2 / 2
    else:
        cx, cy = bump_center
    r2 = ((xx - cx) ** 2 + (yy - cy) ** 2) / bump_radius**2
    bump = np.where(r2 < 1.0, np.exp(-1.0 / np.maximum(1.0 - r2, 1e-300)), 0.0)
    osc = (coeff[0] + coeff[1] * xx + coeff[2] * yy + coeff[3] * xx * yy
           + coeff[4] * np.cos(3 * xx + yy) + coeff[5] * np.sin(2 * yy - xx))
    field = bump * osc
    if grid.model.kind == "flat_torus":
        dof = field.ravel().astype(complex)
    else:
        dof = _sphere_dof(grid, field)
    return DiscreteSection(grid, dof)


def _sphere_dof(grid, field_n):
    """Owned-node values from a field given on the N chart (zero elsewhere)."""
    dof = np.zeros(grid.ndof, dtype=complex)
    pos = 0
    for cd in grid.charts:
        ii, jj = np.nonzero(cd.owned)
        for i, j in zip(ii, jj):
            if cd.chart == "N":
                dof[pos] = field_n[i, j]
            else:
                # value of the N-chart field at the image point, with transition
                z = 1.0 / complex(cd.axis[i], cd.axis[j])
                if abs(z) < 1e-14:
                    dof[pos] = 0.0
                else:
                    val = interp2(field_n, cd.axis, z.real, z.imag) \
                        if max(abs(z.real), abs(z.imag)) < cd.axis[-1] else 0.0
                    w = complex(cd.axis[i], cd.axis[j])
                    dof[pos] = (w / abs(w)) ** grid.k * val
            pos += 1
    return dof
