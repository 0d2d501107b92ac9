"""Finite-volume laboratory for Schroedinger operators with decaying random potentials.

    H = -Laplacian - lam * <x>^(-alpha) * sum_j omega_j u(x - j)

discretized by finite differences, with exact eigenvalue counting by matrix
inertia, Monte Carlo disorder averaging and localization diagnostics.
"""

__version__ = "0.1.0"

from .lattice import (
    DIRICHLET,
    NEUMANN,
    Bernoulli,
    BoundedDensity,
    CubeIndicator,
    DisorderField,
    DisorderSpec,
    GeneralEnvelope,
    HamiltonianMatrix,
    LatticeDomain,
    ModelParams,
    PowerFunction,
    PowerLaw,
    Tabulated,
    Uniform01,
    assemble_hamiltonian,
    build_domain,
    envelope_value,
    sample_disorder,
)
from .spectral import (
    SpectralSummary,
    count_below,
    ground_energy,
    lowest_eigenpairs,
    spectrum_distance,
)
