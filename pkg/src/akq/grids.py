"""Discrete chart grids for sections of the k-th bundle power.

The finite-difference backend stores a section as its unit-frame values on
per-chart uniform grids.

Sphere models use two overlapping square grids (charts "N" and "S").  Chart c
*owns* its nodes with |z| <= 1 (ties to "N"); every other node inside the
fill radius is a *ghost* whose value is defined by transition-phase times
6-point tensor Lagrange interpolation from the other chart.  The linear map
from owned values to all filled values is assembled once as a sparse
extension matrix E, so quadratic forms built on top of it are exactly
Hermitian.  Ghosts are filled outward-in in passes; each pass only consumes
already-available source nodes.

The torus uses a single periodic grid; quasi-periodicity enters through
magnetic-translation phases on wrapped stencil legs, not through E (which is
the identity there).

All charts are isothermal, so the Dirichlet form of the Bochner Laplacian
needs no metric factor: <Delta s, s> = sum_c int chi_c |grad_A s|^2 dx dy.
The chi_c are a smooth partition of unity in ln|z|.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .geometry import ChartPoint

# geometry of the sphere composite grid
SQUARE_HALF_WIDTH = 1.32
FILL_RADIUS = 1.30
CHI_LOG_WIDTH = 0.15     # chi transition half-width in ln|z|
DERIV_RADIUS_PAD = 0.012  # extra radius (pre-stencil) where C-rows are built
INTERP_POINTS = 6        # tensor Lagrange points per axis
STENC = np.array([1.0, -8.0, 0.0, 8.0, -1.0]) / 12.0  # 4th-order d/dx
DIFF4 = np.array([1.0, -4.0, 6.0, -4.0, 1.0])         # undivided 4th difference
PENALTY = 0.01           # Nyquist-mode penalty strength (see assemble_laplacian)
RESOLUTION_CONSTANT = {"sphere": 0.155, "flat_torus": 0.175}  # h <= c/sqrt(k)
MIN_NODES = {"sphere": 56, "flat_torus": 32}


def _smoothstep(t):
    """C^inf step: 0 for t <= 0, 1 for t >= 1."""
    t = np.clip(np.asarray(t, dtype=float), 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore"):
        a = np.where(t > 0.0, np.exp(-1.0 / np.maximum(t, 1e-300)), 0.0)
        b = np.where(t < 1.0, np.exp(-1.0 / np.maximum(1.0 - t, 1e-300)), 0.0)
    return a / (a + b)


def chi_profile(r):
    """Partition-of-unity weight as a function of |z|; chi(r)+chi(1/r) = 1."""
    r = np.asarray(r, dtype=float)
    t = np.where(r > 0, np.log(np.maximum(r, 1e-300)), -np.inf) / CHI_LOG_WIDTH
    return 1.0 - _smoothstep((t + 1.0) / 2.0)


def resolution_rule(model, k: int, constant: float | None = None) -> int:
    """Grid nodes per axis.

    Two length scales matter: the kernel scale 1/sqrt(k) (spacing <= c/sqrt(k))
    and the gauge phase winding of the unit-frame representation, which caps
    k*h*|A| at WINDING_CAP.  On the torus the winding dominates (|A| up to
    B*L/2); on the sphere |A| <= 1/2 and the two scales cross near k ~ 40.
    Constants are calibrated against the exact sphere backend; see README.
    """
    if model.kind == "flat_torus":
        lmax = max(model.periods)
        amax = 0.5 * model.flux_density * lmax
        n_wind = int(math.ceil(max(k, 1) * amax * lmax / WINDING_CAP))
        c = constant or RESOLUTION_CONSTANT["flat_torus"]
        n_len = int(math.ceil(lmax * math.sqrt(max(k, 1)) / c))
        n = max(MIN_NODES["flat_torus"], n_wind, n_len)
        return n + (n % 2)
    c = constant or RESOLUTION_CONSTANT["sphere"]
    width = 2.0 * SQUARE_HALF_WIDTH
    n_len = int(math.ceil(width * math.sqrt(max(k, 1)) / c)) + 1
    n_wind = int(math.ceil(max(k, 1) * 0.5 * width / WINDING_CAP)) + 1
    n = max(MIN_NODES["sphere"], n_len, n_wind)
    return n + 1 - (n % 2)  # odd: keeps a node at the origin


# calibrated against the exact sphere backend (principal angles <= 1e-3 at
# the listed k); used where backend cross-checks need tight band accuracy
ACCURACY_NODES_SPHERE = {4: 111, 8: 135, 16: 161}
WINDING_CAP = 0.52


def _lagrange_1d(xs, x):
    npts = len(xs)
    w = np.ones(npts)
    for j in range(npts):
        for m in range(npts):
            if m != j:
                w[j] *= (x - xs[m]) / (xs[j] - xs[m])
    return w


def lagrange_weights(axis, x, npts=INTERP_POINTS):
    """(i0, w): centered interpolation start index and weights along axis."""
    h = axis[1] - axis[0]
    i0 = int(np.floor((x - axis[0]) / h)) - (npts // 2 - 1)
    i0 = min(max(i0, 0), len(axis) - npts)
    return i0, _lagrange_1d(axis[i0:i0 + npts], x)


def interp2(values, axis, x, y, npts=INTERP_POINTS):
    """Tensor Lagrange interpolation at one point.

    ``values`` may carry trailing dimensions (e.g. one slot per basis
    section); they are preserved.
    """
    i0, wx = lagrange_weights(axis, x, npts)
    j0, wy = lagrange_weights(axis, y, npts)
    block = values[i0:i0 + npts, j0:j0 + npts]
    return np.einsum("i,ij...,j->...", wx, block, wy)


@dataclass
class ChartGridData:
    chart: str
    axis: np.ndarray
    h: float
    radius: np.ndarray          # |z| at nodes, shape (n, n)
    owned: np.ndarray           # bool
    fill: np.ndarray            # bool: nodes that receive values
    chi: np.ndarray             # partition-of-unity weight
    deriv_rows: np.ndarray      # bool: nodes where C-rows are assembled
    area: np.ndarray            # conformal density s(x, y)
    pot: tuple                  # (A_x, A_y) arrays
    offset: int = 0             # global node offset
    n: int = field(init=False)

    def __post_init__(self):
        self.n = len(self.axis)

    def flat(self, i, j):
        return self.offset + i * self.n + j


class GridSystem:
    """Discrete section space for (model, k) at a given resolution."""

    def __init__(self, model, k: int, n: int | None = None,
                 gauge_twist=None):
        if k < 0:
            raise ValueError("tensor power k must be >= 0")
        self.model = model
        self.k = int(k)
        self.n = int(n or resolution_rule(model, max(k, 1)))
        self.gauge_twist = gauge_twist
        if model.kind == "flat_torus":
            self._build_torus()
        else:
            self._build_sphere()
        self._build_diff_ops()

    # -- construction --------------------------------------------------------

    def _potential(self, chart: str, xx, yy):
        """Unit-frame connection potential A with dA = omega, plus any twist."""
        model = self.model
        if model.kind == "flat_torus":
            # Landau gauge centered in the cell: halves the worst phase winding
            ax = np.zeros_like(xx)
            ay = model.flux_density * (xx - 0.5 * model.periods[0])
        else:
            zz = xx + 1j * yy
            c1, c2 = model._chi_coeffs(chart)
            from .geometry import _u1_dz, _u2_dz
            alpha = np.conj(zz) / (1.0 + np.abs(zz) ** 2) + c1 * _u1_dz(zz) + c2 * _u2_dz(zz)
            ax, ay = np.imag(alpha), np.real(alpha)
        if self.gauge_twist is not None:
            gx, gy = self.gauge_twist.grad_arrays(chart, xx, yy)
            ax, ay = ax + gx, ay + gy
        return ax, ay

    def _area(self, chart, xx, yy):
        if self.model.kind == "flat_torus":
            return np.full_like(xx, self.model.flux_density)
        from .geometry import _u1_dzdzbar, _u2_dzdzbar
        zz = xx + 1j * yy
        c1, c2 = self.model._chi_coeffs(chart)
        d = 1.0 / (1.0 + np.abs(zz) ** 2) ** 2 + c1 * _u1_dzdzbar(zz) + c2 * _u2_dzdzbar(zz)
        return 2.0 * np.real(d)

    def _build_torus(self):
        model = self.model
        l1, l2 = model.periods
        if abs(l1 - l2) > 1e-12:
            raise NotImplementedError("anisotropic torus grids not supported")
        ax = np.linspace(0.0, l1, self.n, endpoint=False)
        h = ax[1] - ax[0]
        xx, yy = np.meshgrid(ax, ax, indexing="ij")
        ones = np.ones_like(xx, dtype=bool)
        self.charts = [ChartGridData(
            chart="T", axis=ax, h=h, radius=np.zeros_like(xx),
            owned=ones, fill=ones, chi=np.ones_like(xx), deriv_rows=ones,
            area=self._area("T", xx, yy), pot=self._potential("T", xx, yy))]
        nn = self.n * self.n
        self.ndof = nn
        self.dof_node = np.arange(nn)
        self.extension = sp.identity(nn, dtype=complex, format="csr")
        self.total_nodes = nn

    def _build_sphere(self):
        a = SQUARE_HALF_WIDTH
        ax = np.linspace(-a, a, self.n)
        h = ax[1] - ax[0]
        xx, yy = np.meshgrid(ax, ax, indexing="ij")
        rr = np.hypot(xx, yy)
        charts = []
        for ci, chart in enumerate(("N", "S")):
            owned = (rr <= 1.0) if chart == "N" else (rr < 1.0)
            fill = rr <= FILL_RADIUS
            owned = owned & fill
            chi = np.where(fill, chi_profile(np.maximum(rr, 1e-300)), 0.0)
            # C-rows everywhere their stencil legs stay filled; this covers both
            # the chi-weighted form (|z| <= e^delta) and jet interpolation
            # blocks for queries with |z| <= 1 (block corner <= 1 + 3h*sqrt(2)).
            deriv = fill & (rr <= FILL_RADIUS - 2 * h - 1e-12)
            if math.exp(CHI_LOG_WIDTH) > FILL_RADIUS - 2 * h:
                raise RuntimeError("grid too coarse for the chart overlap")
            charts.append(ChartGridData(
                chart=chart, axis=ax, h=h, radius=rr, owned=owned, fill=fill,
                chi=chi, deriv_rows=deriv,
                area=self._area(chart, xx, yy), pot=self._potential(chart, xx, yy),
                offset=ci * self.n * self.n))
        self.charts = charts
        self.total_nodes = 2 * self.n * self.n
        self._build_extension()

    def _build_extension(self):
        """Sparse E: owned values -> values at every filled node (both charts).

        Every ghost's transition image w = 1/z lies strictly inside the unit
        disk, so each ghost interpolates from owned nodes only; interpolation
        blocks are biased inward (up to 3 nodes per axis) where a centered
        block would spill over the ownership boundary.
        """
        n = self.n
        axis = self.charts[0].axis
        k = self.k
        npts = INTERP_POINTS

        owned_idx = {}
        dof = 0
        for cd in self.charts:
            ii, jj = np.nonzero(cd.owned)
            for i, j in zip(ii, jj):
                owned_idx[(cd.chart, i, j)] = dof
                dof += 1
        self.ndof = dof
        owned_mask = {cd.chart: cd.owned for cd in self.charts}

        def other(c):
            return "S" if c == "N" else "N"

        data, ri, ci = [], [], []
        for cd in self.charts:
            oc = other(cd.chart)
            ii, jj = np.nonzero(cd.owned)
            for i, j in zip(ii, jj):
                ri.append(cd.flat(i, j))
                ci.append(owned_idx[(cd.chart, i, j)])
                data.append(1.0 + 0.0j)
            gi, gj = np.nonzero(cd.fill & ~cd.owned)
            for i, j in zip(gi, gj):
                z = complex(axis[i], axis[j])
                w = 1.0 / z
                i0c, _ = lagrange_weights(axis, w.real)
                j0c, _ = lagrange_weights(axis, w.imag)
                sx = -1 if w.real > 0 else 1
                sy = -1 if w.imag > 0 else 1
                placed = False
                for shift in sorted(
                        ((a, b) for a in range(4) for b in range(4)),
                        key=lambda s: s[0] + s[1]):
                    i0 = min(max(i0c + sx * shift[0], 0), n - npts)
                    j0 = min(max(j0c + sy * shift[1], 0), n - npts)
                    if owned_mask[oc][i0:i0 + npts, j0:j0 + npts].all():
                        placed = True
                        break
                if not placed:
                    raise RuntimeError(
                        "ghost interpolation block does not fit in the owned "
                        "disk; grid too coarse")
                wx = _lagrange_1d(axis[i0:i0 + npts], w.real)
                wy = _lagrange_1d(axis[j0:j0 + npts], w.imag)
                phase = (z / abs(z)) ** k
                row_node = cd.flat(i, j)
                for aa in range(npts):
                    for bb in range(npts):
                        cwt = phase * wx[aa] * wy[bb]
                        ri.append(row_node)
                        ci.append(owned_idx[(oc, i0 + aa, j0 + bb)])
                        data.append(cwt)
        self.extension = sp.csr_matrix(
            (np.array(data, dtype=complex), (ri, ci)),
            shape=(self.total_nodes, self.ndof))
        node_of_dof = np.empty(self.ndof, dtype=np.int64)
        for cd in self.charts:
            ii, jj = np.nonzero(cd.owned)
            for i, j in zip(ii, jj):
                node_of_dof[owned_idx[(cd.chart, i, j)]] = cd.flat(i, j)
        self.dof_node = node_of_dof

    def _diff_matrix_chart(self, cd: ChartGridData, direction: int):
        """4th-order d/dx or d/dy on one chart (rows only where deriv_rows)."""
        n, h = cd.n, cd.h
        rows, cols, vals = [], [], []
        torus = self.model.kind == "flat_torus"
        l1 = self.model.periods[0] if torus else None
        kb = self.k * self.model.flux_density * l1 if torus else 0.0
        ii, jj = np.nonzero(cd.deriv_rows)
        for i, j in zip(ii, jj):
            r = cd.flat(i, j)
            for s, coef in zip((-2, -1, 1, 2), (STENC[0], STENC[1], STENC[3], STENC[4])):
                if direction == 0:
                    i2, j2 = i + s, j
                else:
                    i2, j2 = i, j + s
                phase = 1.0 + 0.0j
                if torus:
                    if direction == 0:
                        wrap, i2 = divmod(i2, n)
                        # psi(x + L1) = exp(i k B L1 y) psi(x)
                        phase = cmath.exp(1j * kb * cd.axis[j] * wrap)
                    else:
                        j2 %= n
                else:
                    if not (0 <= i2 < n and 0 <= j2 < n) or not cd.fill[i2, j2]:
                        raise RuntimeError("stencil leg outside filled region")
                rows.append(r - cd.offset)
                cols.append(cd.flat(i2, j2) - cd.offset)
                vals.append(coef / h * phase)
        nn = n * n
        return sp.csr_matrix((vals, (rows, cols)), shape=(nn, nn))

    def _build_diff_ops(self):
        """Covariant derivative operators C_mu = D_mu - i k A_mu, per chart."""
        self.cov_ops = []
        self.penalty_ops = []
        for cd in self.charts:
            dx = self._diff_matrix_chart(cd, 0)
            dy = self._diff_matrix_chart(cd, 1)
            ax, ay = cd.pot
            mask = cd.deriv_rows.ravel().astype(float)
            cx = dx - 1j * self.k * sp.diags(ax.ravel() * mask)
            cy = dy - 1j * self.k * sp.diags(ay.ravel() * mask)
            self.cov_ops.append((cx.tocsr(), cy.tocsr()))
            self.penalty_ops.append((self._penalty_matrix_chart(cd, 0),
                                     self._penalty_matrix_chart(cd, 1)))

    def _penalty_matrix_chart(self, cd: ChartGridData, direction: int):
        """Gauge-covariant undivided 4th difference (times 1/h).

        The wide centered first-difference stencil annihilates checkerboard
        modes, so the plain Dirichlet form has spurious near-null vectors.
        This operator vanishes like h^4 on covariantly smooth sections but is
        O(1/h) on checkerboards; its square, weighted by PENALTY, pushes the
        spurious modes far above the physical band without touching 4th-order
        accuracy.  Parallel transport along the stencil legs uses midpoint
        link phases.
        """
        n, h = cd.n, cd.h
        rows, cols, vals = [], [], []
        torus = self.model.kind == "flat_torus"
        l1 = self.model.periods[0] if torus else None
        kb = self.k * self.model.flux_density * l1 if torus else 0.0
        ii, jj = np.nonzero(cd.deriv_rows)
        xs, ys = cd.axis[ii], cd.axis[jj]
        # midpoint potential values along each leg, per row
        for s in (-2, -1, 0, 1, 2):
            coef = DIFF4[s + 2] / h
            if s == 0:
                transport = np.ones(len(ii), dtype=complex)
            else:
                steps = np.arange(abs(s))
                sgn = np.sign(s)
                if direction == 0:
                    mx = xs[:, None] + sgn * (steps[None, :] + 0.5) * h
                    my = np.broadcast_to(ys[:, None], mx.shape)
                else:
                    my = ys[:, None] + sgn * (steps[None, :] + 0.5) * h
                    mx = np.broadcast_to(xs[:, None], my.shape)
                amu = self._potential(cd.chart, mx, my)[direction]
                transport = np.exp(-1j * self.k * sgn * h * amu.sum(axis=1))
            for idx, (i, j) in enumerate(zip(ii, jj)):
                if direction == 0:
                    i2, j2 = i + s, j
                else:
                    i2, j2 = i, j + s
                phase = transport[idx]
                if torus:
                    if direction == 0:
                        wrap, i2 = divmod(i2, n)
                        phase = phase * cmath.exp(1j * kb * cd.axis[j] * wrap)
                    else:
                        j2 %= n
                elif not (0 <= i2 < n and 0 <= j2 < n) or not cd.fill[i2, j2]:
                    raise RuntimeError("penalty leg outside filled region")
                rows.append(i * n + j)
                cols.append(i2 * n + j2)
                vals.append(coef * phase)
        nn = n * n
        return sp.csr_matrix((vals, (rows, cols)), shape=(nn, nn))

    # -- derived quantities ----------------------------------------------------

    def quad_weights(self):
        """Per-node quadrature weight chi * h^2 (flat measure dx dy)."""
        out = []
        for cd in self.charts:
            out.append(cd.chi.ravel() * cd.h ** 2)
        return np.concatenate(out)

    def mass_weights(self):
        """Per-node weight chi * s * h^2 (Riemannian area element)."""
        out = []
        for cd in self.charts:
            out.append((cd.chi * cd.area).ravel() * cd.h ** 2)
        return np.concatenate(out)

    def extended(self, dof_values):
        """Owned DOF vector(s) -> per-chart 2-d arrays of filled values."""
        v = self.extension @ dof_values
        n = self.n
        arrays = []
        for ci, cd in enumerate(self.charts):
            block = v[ci * n * n:(ci + 1) * n * n]
            if dof_values.ndim == 1:
                arrays.append(block.reshape(n, n))
            else:
                arrays.append(block.reshape(n, n, -1))
        return arrays

    def chart_index(self, chart: str) -> int:
        for ci, cd in enumerate(self.charts):
            if cd.chart == chart:
                return ci
        raise KeyError(chart)

    def quadrature_nodes(self):
        """(points, weights) of the chi-weighted Riemannian quadrature."""
        pts, wts = [], []
        for cd in self.charts:
            ii, jj = np.nonzero(cd.chi > 0)
            for i, j in zip(ii, jj):
                pts.append(ChartPoint(cd.chart, (cd.axis[i], cd.axis[j])))
                wts.append(cd.chi[i, j] * cd.area[i, j] * cd.h ** 2)
        return pts, np.array(wts)


class GaugeTwist:
    """A smooth real function lambda on X, used to twist the gauge.

    Sections transform by exp(i k lambda); potentials by A + d(lambda).
    Physical outputs must be invariant under this.  Gradients are closed
    form so the twist is an exact gauge transformation on the grid.
    """

    def __init__(self, model, amplitude=0.37, seed=12):
        self.model = model
        self.amplitude = amplitude
        rng = np.random.default_rng(seed)
        self.c = rng.standard_normal(3)

    def values(self, chart, xx, yy):
        xx = np.asarray(xx, dtype=float)
        yy = np.asarray(yy, dtype=float)
        if self.model.kind == "flat_torus":
            l1, l2 = self.model.periods
            t1, t2 = 2 * np.pi * xx / l1, 2 * np.pi * yy / l2
            val = self.c[0] * np.cos(t1) + self.c[1] * np.sin(t2) + self.c[2] * np.cos(t1 + t2)
            return self.amplitude * val
        r2 = xx**2 + yy**2
        p1 = 2 * xx / (1 + r2)
        p2 = 2 * yy / (1 + r2)
        p3 = (r2 - 1) / (1 + r2)
        s = 1.0 if chart == "N" else -1.0
        return self.amplitude * (self.c[0] * p1 + s * self.c[1] * p2 + s * self.c[2] * p3)

    def grad_arrays(self, chart, xx, yy):
        xx = np.asarray(xx, dtype=float)
        yy = np.asarray(yy, dtype=float)
        if self.model.kind == "flat_torus":
            l1, l2 = self.model.periods
            w1, w2 = 2 * np.pi / l1, 2 * np.pi / l2
            t1, t2 = w1 * xx, w2 * yy
            gx = -self.c[0] * w1 * np.sin(t1) - self.c[2] * w1 * np.sin(t1 + t2)
            gy = self.c[1] * w2 * np.cos(t2) - self.c[2] * w2 * np.sin(t1 + t2)
            return self.amplitude * gx, self.amplitude * gy
        r2 = xx**2 + yy**2
        den = (1 + r2) ** 2
        s = 1.0 if chart == "N" else -1.0
        gx = (self.c[0] * 2 * (1 + r2 - 2 * xx**2) / den
              + s * self.c[1] * (-4 * xx * yy) / den + s * self.c[2] * 4 * xx / den)
        gy = (self.c[0] * (-4 * xx * yy) / den
              + s * self.c[1] * 2 * (1 + r2 - 2 * yy**2) / den + s * self.c[2] * 4 * yy / den)
        return self.amplitude * gx, self.amplitude * gy

    def grad(self, p: ChartPoint):
        gx, gy = self.grad_arrays(p.chart, p.coords[0], p.coords[1])
        return np.array([float(gx), float(gy)])
