"""Concrete compact symplectic surface models.

Three models are provided, all normalized so the total symplectic area is
2*pi (the integrality convention used throughout: the prequantum line bundle
carries a connection of curvature -i*omega, so int(omega)/2pi must be an
integer and equals 1 here).

* ``RoundSphere``  -- the round two-sphere of radius 1/sqrt(2), seen through
  two stereographic charts ("N" centered at the south pole, "S" at the north
  pole, transition w = 1/z).
* ``PerturbedSphere`` -- same charts, with the Kahler potential of the round
  metric perturbed by a smooth function built from low-order spherical
  harmonics.  The conformal factor, area form and connection potential all
  stay in closed form.
* ``FlatTorus`` -- a flat torus R^2/(L1 Z x L2 Z) with constant omega.

All charts are isothermal: g = s(x,y) * Id, omega = s dx^dy, J the standard
rotation by +90 degrees.  This is not an accident (dimension 2), and the rest
of the package relies on it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

TOTAL_AREA = 2.0 * math.pi

# J(d/dx) = d/dy in every chart; columns are images of the basis vectors.
_J_STD = np.array([[0.0, -1.0], [1.0, 0.0]])


class ChartError(ValueError):
    """Point handed to a chart it does not belong to."""


@dataclass(frozen=True)
class ChartPoint:
    """A point expressed in a named chart."""

    chart: str
    coords: tuple[float, float]

    @property
    def z(self) -> complex:
        return complex(self.coords[0], self.coords[1])

    @property
    def xy(self) -> np.ndarray:
        return np.array(self.coords, dtype=float)


@dataclass(frozen=True)
class Tangent:
    """Tangent vector in the coordinate frame of ``base.chart``."""

    base: ChartPoint
    components: tuple[float, float]

    @property
    def vec(self) -> np.ndarray:
        return np.array(self.components, dtype=float)


# ---------------------------------------------------------------------------
# Sphere conformal data
#
# Kahler potential on the N chart:  rho(z) = log(1+|z|^2) + chi(z)
# with chi = p10 * u1 + p22 * u2,
#   u1 = (|z|^2-1)/(|z|^2+1)          (the height function, degree-1 harmonic)
#   u2 = 2(z^2 + zbar^2)/(1+|z|^2)^2  (a degree-2 tesseral harmonic)
# Both extend smoothly over the whole sphere, so int i*del*delbar(chi) = 0 and
# the total area stays 2*pi for every parameter value.
# ---------------------------------------------------------------------------


def _u1(z):
    r2 = (z * np.conj(z)).real
    return (r2 - 1.0) / (r2 + 1.0)


def _u1_dz(z):
    r2 = (z * np.conj(z)).real
    return 2.0 * np.conj(z) / (1.0 + r2) ** 2


def _u1_dzdzbar(z):
    r2 = (z * np.conj(z)).real
    return 2.0 * (1.0 - r2) / (1.0 + r2) ** 3


def _u2(z):
    r2 = (z * np.conj(z)).real
    return (2.0 * (z**2 + np.conj(z) ** 2)).real / (1.0 + r2) ** 2


def _u2_dz(z):
    r2 = (z * np.conj(z)).real
    s2 = z**2 + np.conj(z) ** 2
    return 4.0 * z / (1.0 + r2) ** 2 - 4.0 * s2 * np.conj(z) / (1.0 + r2) ** 3


def _u2_dzdzbar(z):
    r2 = (z * np.conj(z)).real
    s2 = (z**2 + np.conj(z) ** 2).real
    return -12.0 * s2 / (1.0 + r2) ** 4


class _SphereBase:
    """Shared chart logic for the two sphere models."""

    kind = "sphere"
    charts = ("N", "S")
    chart_rmax = 1e8  # declared chart domain |z| <= chart_rmax (pole excluded)

    #: (p10, p22) coefficients of chi in the N chart; S chart flips p10.
    perturbation: tuple[float, float] = (0.0, 0.0)

    # -- chart bookkeeping ---------------------------------------------------

    def in_domain(self, p: ChartPoint) -> bool:
        return p.chart in self.charts and abs(p.z) <= self.chart_rmax

    def _check(self, p: ChartPoint):
        if not self.in_domain(p):
            raise ChartError(f"point {p} outside chart domain")

    def preferred_chart(self, p: ChartPoint) -> ChartPoint:
        """Re-express p in the chart where |z| <= 1."""
        if abs(p.z) <= 1.0:
            return p
        return self.to_chart(p, "S" if p.chart == "N" else "N")

    def to_chart(self, p: ChartPoint, chart: str) -> ChartPoint:
        self._check(p)
        if chart == p.chart:
            return p
        w = 1.0 / p.z
        return ChartPoint(chart, (w.real, w.imag))

    def transition_jacobian(self, p: ChartPoint) -> np.ndarray:
        """Real Jacobian of w = 1/z at p (to the other chart)."""
        d = -1.0 / p.z**2
        return np.array([[d.real, -d.imag], [d.imag, d.real]])

    def push_tangent(self, v: Tangent, chart: str) -> Tangent:
        if chart == v.base.chart:
            return v
        jac = self.transition_jacobian(v.base)
        return Tangent(self.to_chart(v.base, chart), tuple(jac @ v.vec))

    def embed3(self, p: ChartPoint) -> np.ndarray:
        """Unit-sphere coordinates; chart N has z=0 at the south pole."""
        z = p.z
        r2 = abs(z) ** 2
        vec = np.array([2 * z.real, 2 * z.imag, r2 - 1.0]) / (1.0 + r2)
        if p.chart == "S":
            vec = np.array([vec[0], -vec[1], -vec[2]])
        return vec

    def from_embed3(self, vec) -> ChartPoint:
        x, y, h = vec
        if h <= 0.0:
            z = complex(x, y) / (1.0 - h)
            return ChartPoint("N", (z.real, z.imag))
        w = complex(x, -y) / (1.0 + h)
        return ChartPoint("S", (w.real, w.imag))

    # -- conformal data ------------------------------------------------------

    def _chi_coeffs(self, chart: str) -> tuple[float, float]:
        p10, p22 = self.perturbation
        return (p10 if chart == "N" else -p10, p22)

    def kahler_potential(self, p: ChartPoint) -> float:
        self._check(p)
        c1, c2 = self._chi_coeffs(p.chart)
        z = p.z
        return math.log(1.0 + abs(z) ** 2) + c1 * _u1(z) + c2 * _u2(z)

    def potential_dz(self, p: ChartPoint) -> complex:
        """d(rho)/dz; the connection 1-form is A = Im(potential_dz * dz)."""
        self._check(p)
        c1, c2 = self._chi_coeffs(p.chart)
        z = p.z
        return np.conj(z) / (1.0 + abs(z) ** 2) + c1 * _u1_dz(z) + c2 * _u2_dz(z)

    def area_density(self, p: ChartPoint) -> float:
        """s(x,y) with omega = s dx^dy; equals 2 * d2(rho)/dz dzbar."""
        self._check(p)
        c1, c2 = self._chi_coeffs(p.chart)
        z = p.z
        d = 1.0 / (1.0 + abs(z) ** 2) ** 2 + c1 * _u1_dzdzbar(z) + c2 * _u2_dzdzbar(z)
        return 2.0 * float(np.real(d))

    # -- distances and sampling ----------------------------------------------

    def geodesic_distance(self, p: ChartPoint, q: ChartPoint) -> float:
        raise NotImplementedError

    def round_distance(self, p: ChartPoint, q: ChartPoint) -> float:
        """Distance in the round metric of the same total area."""
        c = float(np.clip(self.embed3(p) @ self.embed3(q), -1.0, 1.0))
        return math.acos(c) / math.sqrt(2.0)

    def sample_points(self, n: int, seed: int = 0) -> list[ChartPoint]:
        """Deterministic low-discrepancy (Fibonacci) point set."""
        golden = (1.0 + math.sqrt(5.0)) / 2.0
        off = 0.5 + (seed % 997) / 1993.0
        pts = []
        for i in range(n):
            h = -1.0 + 2.0 * (i + off) / n
            phi = 2.0 * math.pi * ((i / golden) % 1.0)
            r = math.sqrt(max(0.0, 1.0 - h * h))
            pts.append(self.from_embed3((r * math.cos(phi), r * math.sin(phi), h)))
        return pts


class RoundSphere(_SphereBase):
    """Round sphere of total area 2*pi (radius 1/sqrt(2))."""

    kind = "round_sphere"
    radius = 1.0 / math.sqrt(2.0)

    def __init__(self):
        self.perturbation = (0.0, 0.0)

    def cache_token(self) -> str:
        return "round_sphere"

    def geodesic_distance(self, p: ChartPoint, q: ChartPoint) -> float:
        return self.round_distance(p, q)


class PerturbedSphere(_SphereBase):
    """Sphere with conformally perturbed metric, same total area.

    The perturbation enters through the Kahler potential, so the symplectic
    class (hence the prequantum condition) is untouched.  The conformal
    factor relative to the round metric is area_density/round density.
    """

    kind = "perturbed_sphere"

    def __init__(self, p10: float = 0.05, p22: float = 0.12):
        self.perturbation = (float(p10), float(p22))
        if self._min_density_factor() <= 0.05:
            raise ValueError("perturbation too large: area density near zero")

    def _min_density_factor(self) -> float:
        worst = np.inf
        for p in self.sample_points(400):
            s = self.area_density(p)
            z = p.z
            s0 = 2.0 / (1.0 + abs(z) ** 2) ** 2
            worst = min(worst, s / s0)
        return worst

    def cache_token(self) -> str:
        return f"perturbed_sphere_{self.perturbation[0]:.6g}_{self.perturbation[1]:.6g}"

    def conformal_bounds(self) -> tuple[float, float]:
        """(min, max) over samples of sqrt(s/s_round): distance distortion."""
        ratios = []
        for p in self.sample_points(800):
            z = p.z
            s0 = 2.0 / (1.0 + abs(z) ** 2) ** 2
            ratios.append(math.sqrt(self.area_density(p) / s0))
        return min(ratios), max(ratios)

    # geodesics: shooting on the geodesic ODE, graph fallback

    def _log_density_grad(self, chart: str, xy) -> np.ndarray:
        h = 1e-5
        vals = []
        for d in (np.array([h, 0.0]), np.array([0.0, h])):
            sp = self.area_density(ChartPoint(chart, tuple(xy + d)))
            sm = self.area_density(ChartPoint(chart, tuple(xy - d)))
            vals.append((math.log(sp) - math.log(sm)) / (2 * h))
        return np.array(vals)

    def _geodesic_rhs(self, chart, state):
        # conformal metric e^{2 lam} delta with lam = log(s)/2
        xy, v = state[:2], state[2:]
        lx, ly = 0.5 * self._log_density_grad(chart, xy)
        ax = -(lx * (v[0] ** 2 - v[1] ** 2) + 2 * ly * v[0] * v[1])
        ay = -(ly * (v[1] ** 2 - v[0] ** 2) + 2 * lx * v[0] * v[1])
        return np.concatenate([v, [ax, ay]])

    def exp_map(self, p: ChartPoint, v: np.ndarray, nsteps: int = 0) -> ChartPoint:
        """Geodesic exponential by RK4 in chart coordinates (chart-hopping)."""
        speed = math.sqrt(float(v @ (self.metric_at(p) @ v)))
        if speed == 0.0:
            return p
        n = nsteps or max(48, int(speed / 0.02))
        h = 1.0 / n
        chart = p.chart
        state = np.concatenate([p.xy, v])
        for _ in range(n):
            k1 = self._geodesic_rhs(chart, state)
            k2 = self._geodesic_rhs(chart, state + 0.5 * h * k1)
            k3 = self._geodesic_rhs(chart, state + 0.5 * h * k2)
            k4 = self._geodesic_rhs(chart, state + h * k3)
            state = state + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
            if state[0] ** 2 + state[1] ** 2 > 1.69:  # hop near |z| = 1.3
                t = Tangent(ChartPoint(chart, tuple(state[:2])), tuple(state[2:]))
                chart = "S" if chart == "N" else "N"
                t = self.push_tangent(t, chart)
                state = np.concatenate([t.base.xy, t.vec])
        return ChartPoint(chart, tuple(state[:2]))

    def geodesic_distance(self, p: ChartPoint, q: ChartPoint) -> float:
        from scipy.optimize import least_squares

        target3 = self.embed3(q)
        if self.embed3(p) @ target3 > 1.0 - 1e-14:
            return 0.0
        cmin, cmax = self.conformal_bounds()
        d0 = self.round_distance(p, q)
        # initial guess: round-sphere shot rescaled by the conformal factor
        v3 = self._round_initial_dir(p, q)
        sp = self.area_density(p)
        guess = v3 * d0 / math.sqrt(sp / (2.0 / (1.0 + abs(p.z) ** 2) ** 2))

        def resid(v):
            return self.embed3(self.exp_map(p, np.array(v))) - target3

        sol = least_squares(resid, guess, xtol=1e-13, ftol=1e-13, max_nfev=80)
        v = np.array(sol.x)
        length = math.sqrt(float(v @ (self.metric_at(p) @ v)))
        ok = np.linalg.norm(sol.fun) < 1e-7 and cmin * d0 * 0.99 <= length <= cmax * d0 * 1.01
        if not ok:
            return self._graph_distance(p, q)
        return length

    def _round_initial_dir(self, p, q) -> np.ndarray:
        a, b = self.embed3(p), self.embed3(q)
        t3 = b - (a @ b) * a
        n = np.linalg.norm(t3)
        if n < 1e-15:
            t3 = np.array([a[2], 0.0, -a[0]])  # antipodal: any direction
            n = np.linalg.norm(t3)
        t3 /= n
        # push to chart coordinates by finite difference of the embedding
        eps = 1e-6
        shifted = self.from_embed3((a + eps * t3) / np.linalg.norm(a + eps * t3))
        shifted = self.to_chart(shifted, p.chart) if shifted.chart != p.chart else shifted
        d = (shifted.xy - p.xy) / eps
        d /= max(np.linalg.norm(d), 1e-300)
        # normalize to unit g-speed
        return d / math.sqrt(float(d @ (self.metric_at(p) @ d)))

    def _graph_distance(self, p: ChartPoint, q: ChartPoint) -> float:
        return graph_distance_oracle(self, p, q)

    # metric_at defined on the base via area_density; declared after mixin
    def metric_at(self, p: ChartPoint) -> np.ndarray:
        return metric_at(self, p)


class FlatTorus:
    """Flat torus with periods (L1, L2) and omega = (2*pi/(L1*L2)) dx^dy."""

    kind = "flat_torus"
    charts = ("T",)

    def __init__(self, periods=(math.sqrt(2.0 * math.pi), math.sqrt(2.0 * math.pi))):
        self.periods = (float(periods[0]), float(periods[1]))
        self.flux_density = TOTAL_AREA / (self.periods[0] * self.periods[1])

    def cache_token(self) -> str:
        return f"flat_torus_{self.periods[0]:.9g}_{self.periods[1]:.9g}"

    def in_domain(self, p: ChartPoint) -> bool:
        return p.chart == "T"

    def _check(self, p: ChartPoint):
        if not self.in_domain(p):
            raise ChartError(f"point {p} outside chart domain")

    def canonical(self, p: ChartPoint) -> ChartPoint:
        x = p.coords[0] % self.periods[0]
        y = p.coords[1] % self.periods[1]
        return ChartPoint("T", (x, y))

    def preferred_chart(self, p: ChartPoint) -> ChartPoint:
        return self.canonical(p)

    def to_chart(self, p: ChartPoint, chart: str) -> ChartPoint:
        self._check(p)
        return p

    def area_density(self, p: ChartPoint) -> float:
        self._check(p)
        return self.flux_density

    def geodesic_distance(self, p: ChartPoint, q: ChartPoint) -> float:
        self._check(p), self._check(q)
        best = np.inf
        dx0 = q.coords[0] - p.coords[0]
        dy0 = q.coords[1] - p.coords[1]
        for mx in (-1, 0, 1):
            for my in (-1, 0, 1):
                d = math.hypot(dx0 + mx * self.periods[0], dy0 + my * self.periods[1])
                best = min(best, d)
        return best * math.sqrt(self.flux_density)

    def sample_points(self, n: int, seed: int = 0) -> list[ChartPoint]:
        """Halton (2,3) points over the fundamental cell."""
        def halton(i, b):
            f, r = 1.0, 0.0
            while i > 0:
                f /= b
                r += f * (i % b)
                i //= b
            return r

        off = (seed % 997) / 997.0
        return [
            ChartPoint("T", (((halton(i + 1, 2) + off) % 1.0) * self.periods[0],
                             halton(i + 1, 3) * self.periods[1]))
            for i in range(n)
        ]


# ---------------------------------------------------------------------------
# Model-generic tensor evaluators
# ---------------------------------------------------------------------------


def omega_at(model, p: ChartPoint) -> np.ndarray:
    """Matrix of omega in chart coordinates (antisymmetric, nondegenerate)."""
    s = model.area_density(p)
    return np.array([[0.0, s], [-s, 0.0]])


def J_at(model, p: ChartPoint) -> np.ndarray:
    model._check(p)
    return _J_STD.copy()


def metric_at(model, p: ChartPoint) -> np.ndarray:
    """g = omega(., J .); SPD for all valid models."""
    return omega_at(model, p) @ J_at(model, p)


def tangent_norm(model, v: Tangent) -> float:
    g = metric_at(model, v.base)
    return math.sqrt(float(v.vec @ (g @ v.vec)))


def orthonormal_frame(model, p: ChartPoint) -> np.ndarray:
    """Columns (e1, e2): Gram-Schmidt of the coordinate frame under g.

    On isothermal charts this gives e2 = J e1, and omega(e1, e2) = +1, which
    downstream modules rely on.
    """
    g = metric_at(model, p)
    e1 = np.array([1.0, 0.0]) / math.sqrt(g[0, 0])
    e2 = np.array([0.0, 1.0]) - (np.array([0.0, 1.0]) @ g @ e1) * e1
    e2 /= math.sqrt(float(e2 @ g @ e2))
    if omega_at(model, p)[0, 1] * (e1[0] * e2[1] - e1[1] * e2[0]) < 0:
        e2 = -e2
    return np.column_stack([e1, e2])


def compatibility_check(model, points: list[ChartPoint], rng=None) -> dict:
    """Max violation of g = omega(., J.), SPD, omega(J.,J.) = omega, J^2 = -1."""
    rng = rng or np.random.default_rng(0)
    worst = {"metric_identity": 0.0, "j_squared": 0.0, "omega_j_invariance": 0.0,
             "spd_min_eig": np.inf}
    for p in points:
        om, jm, g = omega_at(model, p), J_at(model, p), metric_at(model, p)
        worst["j_squared"] = max(worst["j_squared"], float(np.abs(jm @ jm + np.eye(2)).max()))
        worst["metric_identity"] = max(worst["metric_identity"],
                                       float(np.abs(g - om @ jm).max()))
        worst["omega_j_invariance"] = max(worst["omega_j_invariance"],
                                          float(np.abs(jm.T @ om @ jm - om).max()))
        worst["spd_min_eig"] = min(worst["spd_min_eig"],
                                   float(np.linalg.eigvalsh(0.5 * (g + g.T)).min()))
        for _ in range(4):
            u, v = rng.standard_normal(2), rng.standard_normal(2)
            lhs = float(u @ g @ v)
            rhs = float(u @ om @ (jm @ v))
            worst["metric_identity"] = max(worst["metric_identity"], abs(lhs - rhs))
    return worst


# ---------------------------------------------------------------------------
# Hamiltonian mechanics
# ---------------------------------------------------------------------------


class ScalarField:
    """Smooth observable H with chart-coordinate gradient.

    value(p) and grad(p) must be chart-consistent on overlaps; the provided
    factories guarantee this.
    """

    def __init__(self, name, value, grad):
        self.name = name
        self._value = value
        self._grad = grad

    def value(self, p: ChartPoint) -> float:
        return float(self._value(p))

    def grad(self, p: ChartPoint) -> np.ndarray:
        return np.asarray(self._grad(p), dtype=float)


def height_field(model) -> ScalarField:
    """Height (third embedding coordinate scaled by the radius) on spheres."""
    r = 1.0 / math.sqrt(2.0)

    def value(p):
        return r * model.embed3(p)[2]

    def grad(p):
        z, sgn = p.z, (1.0 if p.chart == "N" else -1.0)
        r2 = abs(z) ** 2
        d = 4.0 * r * sgn / (1.0 + r2) ** 2
        return np.array([d * z.real, d * z.imag])

    return ScalarField("height", value, grad)


def coordinate_field(model) -> ScalarField:
    """First embedding coordinate on spheres (a tesseral observable)."""
    r = 1.0 / math.sqrt(2.0)

    def value(p):
        return r * model.embed3(p)[0]

    def grad(p):
        x, y = p.coords
        r2 = x * x + y * y
        den = (1.0 + r2) ** 2
        return np.array([2.0 * r * (1.0 + r2 - 2 * x * x) / den,
                         -4.0 * r * x * y / den])

    return ScalarField("coord_x", value, grad)


def torus_cos_field(model) -> ScalarField:
    l1 = model.periods[0]

    def value(p):
        return math.cos(2.0 * math.pi * p.coords[0] / l1)

    def grad(p):
        return np.array([-2.0 * math.pi / l1 * math.sin(2.0 * math.pi * p.coords[0] / l1), 0.0])

    return ScalarField("cos_x", value, grad)


def constant_field(c: float) -> ScalarField:
    return ScalarField(f"const_{c}", lambda p: c, lambda p: np.zeros(2))


def hamiltonian_vector_field(model, H: ScalarField, p: ChartPoint) -> Tangent:
    """xi_H with omega(xi_H, .) = dH(.)."""
    s = model.area_density(p)
    if s == 0.0:
        raise ValueError("degenerate omega")
    gx, gy = H.grad(p)
    return Tangent(p, (gy / s, -gx / s))


def hamiltonian_flow(model, H: ScalarField, p0: ChartPoint, t: float,
                     steps: int = 200, sign: float = 1.0) -> ChartPoint:
    """Fixed-step RK4 integration of sign * xi_H starting at p0."""
    if steps <= 0:
        raise ValueError("steps must be positive")
    h = t / steps
    if t != 0.0 and abs(h) < 1e-14:
        raise ValueError("step size underflow")
    p = p0

    def rhs(chart, xy):
        v = hamiltonian_vector_field(model, H, ChartPoint(chart, tuple(xy)))
        return sign * v.vec

    for _ in range(steps):
        xy = p.xy
        k1 = rhs(p.chart, xy)
        k2 = rhs(p.chart, xy + 0.5 * h * k1)
        k3 = rhs(p.chart, xy + 0.5 * h * k2)
        k4 = rhs(p.chart, xy + h * k3)
        p = ChartPoint(p.chart, tuple(xy + (h / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)))
        if model.kind != "flat_torus" and abs(p.z) > 1.3:
            p = model.to_chart(p, "S" if p.chart == "N" else "N")
        elif model.kind == "flat_torus":
            p = model.canonical(p)
    return p


# ---------------------------------------------------------------------------
# Graph shortest-path oracle (fallback / test oracle for geodesics)
# ---------------------------------------------------------------------------


def graph_distance_oracle(model, p: ChartPoint, q: ChartPoint, n: int = 161,
                          half_width: float = 1.02) -> float:
    """Dijkstra on a single-chart grid graph with a radius-3 neighborhood.

    Both points must satisfy |z| < half_width in a common chart.  Edge
    weights use midpoint quadrature of the conformal factor; the angular
    resolution of the offset set keeps the overestimate below ~0.5%.
    """
    from scipy.sparse import coo_matrix
    from scipy.sparse.csgraph import dijkstra

    p = model.preferred_chart(p)
    q2 = model.to_chart(q, p.chart) if q.chart != p.chart else q
    if max(abs(p.z), abs(q2.z)) >= half_width:
        raise ValueError("graph oracle needs both points in one chart interior")

    axis = np.linspace(-half_width, half_width, n)
    h = axis[1] - axis[0]
    xx, yy = np.meshgrid(axis, axis, indexing="ij")
    dens = np.zeros_like(xx)
    for i in range(n):
        for j in range(n):
            dens[i, j] = model.area_density(ChartPoint(p.chart, (xx[i, j], yy[i, j])))
    lam = np.sqrt(dens)  # local length factor

    offsets = sorted({(a, b) for a in range(-3, 4) for b in range(-3, 4)
                      if (a, b) != (0, 0) and math.gcd(abs(a), abs(b)) == 1})
    rows, cols, wts = [], [], []
    idx = np.arange(n * n).reshape(n, n)
    for (a, b) in offsets:
        si = slice(max(0, -a), n - max(0, a))
        sj = slice(max(0, -b), n - max(0, b))
        ti = slice(max(0, a), n + min(0, a) or None)
        tj = slice(max(0, b), n + min(0, b) or None)
        mid = 0.5 * (lam[si, sj] + lam[ti, tj])
        rows.append(idx[si, sj].ravel())
        cols.append(idx[ti, tj].ravel())
        wts.append((mid * math.hypot(a * h, b * h)).ravel())
    graph = coo_matrix((np.concatenate(wts), (np.concatenate(rows), np.concatenate(cols))),
                       shape=(n * n, n * n))

    def nearest(pt):
        i = int(round((pt.coords[0] + half_width) / h))
        j = int(round((pt.coords[1] + half_width) / h))
        return idx[i, j], math.hypot(pt.coords[0] - axis[i], pt.coords[1] - axis[j])

    (src, _), (dst, _) = nearest(p), nearest(q2)
    dist = dijkstra(graph.tocsr(), directed=False, indices=[src])[0, dst]
    return float(dist)


def make_model(kind: str, **params):
    if kind == "round_sphere":
        return RoundSphere()
    if kind == "perturbed_sphere":
        return PerturbedSphere(**params)
    if kind == "flat_torus":
        return FlatTorus(**params) if params else FlatTorus()
    raise ValueError(f"unknown model kind: {kind}")
