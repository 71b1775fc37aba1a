import math

import numpy as np
import pytest

from akq import geometry as geo
from akq.geometry import ChartPoint, FlatTorus, PerturbedSphere, RoundSphere, Tangent

MODELS = {
    "round": RoundSphere(),
    "perturbed": PerturbedSphere(),
    "torus": FlatTorus(),
}


def sample(model, n=60, seed=3):
    return model.sample_points(n, seed=seed)


@pytest.mark.parametrize("name,tol", [("round", 1e-12), ("perturbed", 1e-10), ("torus", 0.0)])
def test_compatibility_identities(name, tol):
    model = MODELS[name]
    report = geo.compatibility_check(model, sample(model))
    assert report["j_squared"] <= max(tol, 1e-15)
    assert report["metric_identity"] <= max(tol, 1e-15)
    assert report["omega_j_invariance"] <= max(tol, 1e-15)
    assert report["spd_min_eig"] > 0.0


@pytest.mark.parametrize("name", list(MODELS))
def test_omega_antisymmetric_nondegenerate(name):
    model = MODELS[name]
    rng = np.random.default_rng(1)
    for p in sample(model, 20):
        om = geo.omega_at(model, p)
        assert abs(om[0, 0]) == 0.0 and abs(om[1, 1]) == 0.0
        assert om[0, 1] == -om[1, 0]
        assert om[0, 1] != 0.0
        u = rng.standard_normal(2)
        assert abs(u @ om @ u) < 1e-14  # omega(u,u) = 0


def test_total_area_quadrature():
    # Gauss-Legendre in t = cos(theta), uniform in phi, for both spheres.
    for model in (MODELS["round"], MODELS["perturbed"]):
        tn, tw = np.polynomial.legendre.leggauss(80)
        total = 0.0
        nphi = 64
        for t, w in zip(tn, tw):
            r = math.sqrt((1.0 + t) / (1.0 - t))
            for j in range(nphi):
                phi = 2 * math.pi * j / nphi
                p = ChartPoint("N", (r * math.cos(phi), r * math.sin(phi)))
                # dx dy = dt dphi / (1-t)^2
                total += model.area_density(p) * w * (2 * math.pi / nphi) / (1.0 - t) ** 2
        assert abs(total - geo.TOTAL_AREA) < 1e-8


def test_torus_flat_normalization():
    model = MODELS["torus"]
    p = ChartPoint("T", (0.3, 1.1))
    om = geo.omega_at(model, p)
    cell = model.periods[0] * model.periods[1]
    assert om[0, 1] == pytest.approx(2 * math.pi / cell, rel=1e-15)


def test_perturbed_reduces_to_round():
    flat = PerturbedSphere(0.0, 0.0)
    round_ = MODELS["round"]
    for p in sample(round_, 25):
        assert geo.metric_at(flat, p) == pytest.approx(geo.metric_at(round_, p), abs=1e-14)


def test_chart_transition_roundtrip():
    model = MODELS["perturbed"]
    rng = np.random.default_rng(7)
    for _ in range(20):
        z = rng.uniform(0.4, 1.4) * np.exp(1j * rng.uniform(0, 2 * np.pi))
        p = ChartPoint("N", (z.real, z.imag))
        q = model.to_chart(model.to_chart(p, "S"), "N")
        assert np.allclose(q.xy, p.xy, atol=1e-14)
        # tangent transforms by the jacobian and back
        v = Tangent(p, tuple(rng.standard_normal(2)))
        v2 = model.push_tangent(model.push_tangent(v, "S"), "N")
        assert np.allclose(v2.vec, v.vec, atol=1e-12)
        # metric invariance under the transition
        jac = model.transition_jacobian(p)
        gS = geo.metric_at(model, model.to_chart(p, "S"))
        gN = geo.metric_at(model, p)
        assert np.allclose(jac.T @ gS @ jac, gN, rtol=1e-11, atol=1e-13)


def test_round_sphere_distances():
    model = MODELS["round"]
    r = model.radius
    p = ChartPoint("N", (0.0, 0.0))
    antipode = ChartPoint("S", (0.0, 0.0))
    assert model.geodesic_distance(p, antipode) == pytest.approx(math.pi * r, rel=1e-12)
    # quarter turn
    q = ChartPoint("N", (1.0, 0.0))
    assert model.geodesic_distance(p, q) == pytest.approx(math.pi * r / 2, rel=1e-12)


def test_distance_metric_axioms():
    rng = np.random.default_rng(5)
    for model in (MODELS["round"], MODELS["torus"]):
        pts = sample(model, 12, seed=11)
        for _ in range(30):
            a, b, c = (pts[i] for i in rng.integers(0, len(pts), 3))
            dab = model.geodesic_distance(a, b)
            assert dab == pytest.approx(model.geodesic_distance(b, a), abs=1e-12)
            assert dab <= model.geodesic_distance(a, c) + model.geodesic_distance(c, b) + 1e-12
        assert model.geodesic_distance(pts[0], pts[0]) == 0.0


def test_torus_distance_closed_form():
    model = FlatTorus()
    L = model.periods[0]
    scale = math.sqrt(model.flux_density)
    a = ChartPoint("T", (0.1, 0.2))
    b = ChartPoint("T", (L - 0.1, 0.2))  # wraps around
    assert model.geodesic_distance(a, b) == pytest.approx(0.2 * scale, rel=1e-12)


@pytest.mark.slow
def test_perturbed_geodesic_vs_graph_oracle():
    model = MODELS["perturbed"]
    pairs = [
        (ChartPoint("N", (0.1, -0.2)), ChartPoint("N", (0.55, 0.4))),
        (ChartPoint("N", (-0.5, 0.1)), ChartPoint("N", (0.3, 0.6))),
    ]
    for p, q in pairs:
        d_shoot = model.geodesic_distance(p, q)
        d_graph = geo.graph_distance_oracle(model, p, q)
        assert abs(d_shoot - d_graph) / d_graph < 0.01


def test_hamiltonian_field_constant_and_conservation():
    model = MODELS["round"]
    H = geo.constant_field(2.5)
    p = ChartPoint("N", (0.3, 0.1))
    assert np.allclose(geo.hamiltonian_vector_field(model, H, p).vec, 0.0)

    Hh = geo.height_field(model)
    for p in sample(model, 8, seed=2):
        end = geo.hamiltonian_flow(model, Hh, p, 3.0, steps=400)
        assert abs(Hh.value(end) - Hh.value(p)) < 1e-8
        back = geo.hamiltonian_flow(model, Hh, end, -3.0, steps=400)
        assert model.geodesic_distance(back, p) < 1e-7


def test_hamiltonian_field_defining_identity():
    rng = np.random.default_rng(0)
    for name in ("perturbed", "torus"):
        model = MODELS[name]
        H = geo.height_field(model) if name != "torus" else geo.torus_cos_field(model)
        for p in sample(model, 10, seed=4):
            xi = geo.hamiltonian_vector_field(model, H, p)
            om = geo.omega_at(model, p)
            u = rng.standard_normal(2)
            assert float(xi.vec @ om @ u) == pytest.approx(float(H.grad(p) @ u), abs=1e-12)


def test_height_flow_is_rotation():
    model = MODELS["round"]
    H = geo.height_field(model)
    p = ChartPoint("N", (0.6, 0.2))
    # omega(xi,.) = dH gives clockwise rotation z -> z exp(-2 i r t)
    rate = -2.0 * model.radius
    for t in (0.5, 2.0, 10.0):
        end = geo.hamiltonian_flow(model, H, p, t, steps=max(200, int(200 * t)))
        expect = p.z * np.exp(1j * rate * t)
        assert abs(end.z - expect) < 1e-8


def test_torus_hamiltonian_closed_form():
    model = MODELS["torus"]
    H = geo.torus_cos_field(model)
    p = ChartPoint("T", (0.7, 0.3))
    xi = geo.hamiltonian_vector_field(model, H, p)
    s = model.flux_density
    L = model.periods[0]
    expect = np.array([0.0, (2 * math.pi / L) * math.sin(2 * math.pi * p.coords[0] / L) / s])
    assert np.allclose(xi.vec, expect, atol=1e-14)


def test_flow_time_zero_and_bad_steps():
    model = MODELS["torus"]
    H = geo.torus_cos_field(model)
    p = ChartPoint("T", (0.2, 0.4))
    assert geo.hamiltonian_flow(model, H, p, 0.0, steps=10) == p
    with pytest.raises(ValueError):
        geo.hamiltonian_flow(model, H, p, 1.0, steps=0)


def test_chart_domain_errors():
    model = MODELS["round"]
    with pytest.raises(geo.ChartError):
        geo.omega_at(model, ChartPoint("Q", (0.0, 0.0)))
    with pytest.raises(geo.ChartError):
        model.to_chart(ChartPoint("N", (1e9, 0.0)), "S")
