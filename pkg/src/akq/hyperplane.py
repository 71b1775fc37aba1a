"""Hyperplane transversality toolkit: dihedral angles and the A = A+ + A- split.

For a unit hyperplane normal w (drawn in the orthogonal complement of the
coherent state, so the hyperplane passes through the image point) the pairing

    A(u) = <dF(u), w>   (conjugate-linear slot on dF: the dual-space pairing)

is complex linear in u exactly when the embedding is holomorphic.  Its parts

    A+(u) = (A(u) - i A(Ju))/2,   A-(u) = (A(u) + i A(Ju))/2

satisfy |A+|^2 = k * vartheta + O(1) and |A-|^2 = O(1), where vartheta is the
squared projection of w onto the complex tangent line of the image.

For surfaces the kernel of a transverse A is {0} and "the section is
symplectic at x" reduces to positivity of the orientation determinant; the
algebraic identity det_R(A) = |A+|^2 - |A-|^2 makes the dominance criterion
and the determinant two routes to the same verdict, which the sampler
cross-checks on every trial.

Randomness is counter-based (Philox keyed by seed, point and trial), so
trials are reproducible and order-independent.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numpy.random import Generator, Philox

from . import embedding as emb
from .embedding import inner
from .geometry import ChartPoint
from .spectral import SpectralBand


@dataclass
class Hyperplane:
    k: int
    normal: np.ndarray

    def __post_init__(self):
        n = np.linalg.norm(self.normal)
        if abs(n - 1.0) > 1e-12:
            raise ValueError("hyperplane normal must be a unit vector")


@dataclass
class AngleReport:
    base: ChartPoint
    vartheta: float
    a_plus_sq: float
    a_minus_sq: float
    symplectic_ok: bool
    det_real: float          # orientation determinant of A as a real 2x2 map


def vartheta(V: np.ndarray, w: np.ndarray) -> float:
    """||pi_V(w)||^2 for a complex subspace V given by basis columns."""
    V = np.atleast_2d(np.asarray(V, dtype=complex))
    if V.ndim != 2:
        raise ValueError("V must be a matrix of basis columns")
    if V.shape[0] < V.shape[1]:
        V = V.T
    q, r = np.linalg.qr(V)
    if np.abs(np.diag(r)).min() < 1e-13 * max(np.abs(np.diag(r)).max(), 1e-300):
        raise ValueError("degenerate subspace basis")
    proj = q.conj().T @ w
    return float(np.real(np.vdot(proj, proj)))


def _tangent_data(band: SpectralBand, x: ChartPoint):
    psi, nu_p, frame, D = emb.ambient_tangent(band, x)
    d1, d2 = D[:, 0], D[:, 1]
    del1 = 0.5 * (d1 - emb.AMBIENT_I * d2)  # del F(e_1): spans the (1,0) image
    return psi, D, del1


def a_split(band: SpectralBand, x: ChartPoint, w: np.ndarray) -> AngleReport:
    """Angle and linear/antilinear norms of the normal pairing at x."""
    psi, D, del1 = _tangent_data(band, x)
    nrm = np.linalg.norm(del1)
    if nrm < 1e-14:
        raise ValueError("degenerate jet: (1,0) tangent line vanishes")
    theta = vartheta(del1[:, None] / nrm, w)
    a1 = inner(D[:, 0], w)
    a2 = inner(D[:, 1], w)   # = A(J e_1)
    a_plus = 0.5 * (a1 - 1j * a2)
    a_minus = 0.5 * (a1 + 1j * a2)
    det = (a1.real * a2.imag - a1.imag * a2.real)
    ok = abs(a_plus) > abs(a_minus)
    return AngleReport(base=x, vartheta=theta,
                       a_plus_sq=float(abs(a_plus) ** 2),
                       a_minus_sq=float(abs(a_minus) ** 2),
                       symplectic_ok=bool(ok), det_real=float(det))


def reassembly_residual(band: SpectralBand, x: ChartPoint, w: np.ndarray) -> float:
    """|A - (A+ + A-)| at e_1 (algebraic identity, machine zero)."""
    _, D, _ = _tangent_data(band, x)
    a1 = inner(D[:, 0], w)
    a2 = inner(D[:, 1], w)
    a_plus = 0.5 * (a1 - 1j * a2)
    a_minus = 0.5 * (a1 + 1j * a2)
    return abs(a1 - (a_plus + a_minus))


def random_normal(band: SpectralBand, psi: np.ndarray, rng) -> np.ndarray:
    """Gaussian unit normal orthogonal to the coherent state."""
    dim = band.dim
    w = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
    w = w - psi * (inner(psi, w) / inner(psi, psi))
    n = np.linalg.norm(w)
    if n < 1e-12:
        raise RuntimeError("degenerate random draw")
    return w / n


def conditioned_normal(psi: np.ndarray, vline: np.ndarray, angle_floor: float,
                       rng) -> np.ndarray:
    """Unit normal with vartheta >= angle_floor, exactly Gaussian-conditioned.

    For a Gaussian unit vector in the (dim-1)-dimensional orthocomplement of
    psi, vartheta against a complex line is Beta(1, dim-2) distributed, so
    plain rejection has acceptance (1-floor)^(dim-2): hopeless beyond small
    dimensions.  Instead draw vartheta from the truncated Beta by inverse
    CDF and assemble w = sqrt(t) e^{i phi} v + sqrt(1-t) w_perp.
    """
    dim = len(psi)
    m = dim - 2  # complex dimension of the residual complement
    u = rng.uniform()
    t = 1.0 - (1.0 - angle_floor) * (1.0 - u) ** (1.0 / max(m, 1))
    phi = rng.uniform(0.0, 2.0 * np.pi)
    wp = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
    wp = wp - psi * (inner(psi, wp) / inner(psi, psi))
    wp = wp - vline * inner(vline, wp)
    npp = np.linalg.norm(wp)
    if npp < 1e-12:
        raise RuntimeError("degenerate complement draw")
    wp /= npp
    return math.sqrt(t) * np.exp(1j * phi) * vline + math.sqrt(1.0 - t) * wp


def sample_sections(band: SpectralBand, points, trials_per_point: int,
                    angle_floor: float, seed: int = 7) -> dict:
    """Random hyperplanes through image points, conditioned on vartheta.

    Normals follow the Gaussian law on the orthocomplement of Psi(x)
    conditioned on vartheta >= angle_floor; each trial records the dominance
    verdict, the orientation-determinant cross-check and Lemma-type ratios.
    """
    if angle_floor >= 1.0:
        raise ValueError("angle floor must be < 1")
    rows = []
    n_ok = 0
    cross_failures = 0
    for ip, x in enumerate(points):
        psi, D, del1 = _tangent_data(band, x)
        nrm = np.linalg.norm(del1)
        vline = del1 / nrm
        for it in range(trials_per_point):
            rng = Generator(Philox(key=np.array(
                [seed, ip * 100003 + it], dtype=np.uint64)))
            w = conditioned_normal(psi, vline, angle_floor, rng)
            rep = a_split(band, x, w)
            det_ok = rep.det_real > 0
            if det_ok != rep.symplectic_ok:
                cross_failures += 1
            n_ok += int(rep.symplectic_ok)
            rows.append({"point": ip, "trial": it, "vartheta": rep.vartheta,
                         "a_plus_sq": rep.a_plus_sq, "a_minus_sq": rep.a_minus_sq,
                         "symplectic_ok": rep.symplectic_ok,
                         "det_real": rep.det_real})
    total = len(rows)
    return {
        "rows": rows,
        "fraction_symplectic": n_ok / total,
        "determinant_cross_failures": cross_failures,
        "mean_plus_ratio_error": float(np.mean(
            [abs(r["a_plus_sq"] / (band.k * r["vartheta"]) - 1.0) for r in rows])),
        "max_a_minus_sq": float(max(r["a_minus_sq"] for r in rows)),
    }
