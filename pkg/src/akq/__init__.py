"""akq: a numerical laboratory for almost-Kahler quantization of surfaces.

The package builds the quantizing spaces of a prequantized compact
symplectic surface (sphere, perturbed sphere, flat torus), the coherent
state kernels living on them, and the induced projective embeddings, and it
measures every asymptotic law of the underlying theory as a convergence
rate at desk scale.
"""

__version__ = "0.1.0"

from .geometry import (  # noqa: F401
    ChartPoint,
    FlatTorus,
    PerturbedSphere,
    RoundSphere,
    Tangent,
    make_model,
)
