"""Integrated density of states, spectral bottom and the coupling threshold nu0.

All estimates are for the ergodic model (flat envelope) restricted to a box
with a Dirichlet or Neumann condition on the box faces (no buffer).  The
infinite-volume limit is replaced by a fixed box; comparing the two boundary
conditions brackets the finite-size error, and the Neumann ground energies
give a bottom-of-spectrum estimate that is biased downward.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from .lattice import (
    DIRICHLET,
    NEUMANN,
    CubeIndicator,
    DisorderSpec,
    PowerLaw,
    Uniform01,
    make_hamiltonian,
)
from .spectral import count_below, count_below_many, ground_energy


class IdsError(ValueError):
    pass


@dataclass(frozen=True)
class BoxModel:
    """Everything except the coupling that identifies an ergodic box operator."""

    d: int = 1
    L: float = 32.0
    h: float | None = None
    u: object = field(default_factory=CubeIndicator)
    distribution: object = field(default_factory=Uniform01)
    seed: int = 0

    def hamiltonian(self, lam: float, realization: int, bc: str, envelope=None):
        spec = DisorderSpec(self.distribution, self.seed)
        env = PowerLaw(0.0) if envelope is None else envelope
        return make_hamiltonian(self.d, self.L, lam, env, self.u, spec, realization, self.h, bc, 0.0)

    @property
    def U0(self) -> float:
        return self.u.periodic_sup(self.d)


@dataclass
class IdsEstimate:
    energies: np.ndarray
    mean: np.ndarray
    stderr: np.ndarray
    L: float
    bc: str
    realizations: int
    lam: float
    d: int
    counts: np.ndarray = field(repr=False)

    def is_monotone(self) -> bool:
        return bool(np.all(np.diff(self.mean) >= 0))

    def at(self, E: float) -> tuple:
        i = int(np.argmin(np.abs(self.energies - E)))
        if not math.isclose(self.energies[i], E, rel_tol=1e-12, abs_tol=1e-15):
            raise IdsError(f"energy {E} not on the estimate's grid")
        return float(self.mean[i]), float(self.stderr[i])

    def rows(self):
        for E, m, s in zip(self.energies, self.mean, self.stderr):
            yield {"E": float(E), "mean": float(m), "stderr": float(s), "L": self.L, "bc": self.bc,
                   "realizations": self.realizations}

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=["E", "mean", "stderr", "L", "bc", "realizations"])
            w.writeheader()
            for row in self.rows():
                w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in row.items()})


def ids_counts(model: BoxModel, lam: float, energies, bc: str, realization: int) -> np.ndarray:
    H = model.hamiltonian(lam, realization, bc)
    return count_below_many(H, energies)


def estimate_ids(lam: float, energies, L: float, bc: str = DIRICHLET, realizations: int = 16, seed: int = 0,
                 model: BoxModel | None = None) -> IdsEstimate:
    """Sample mean and standard error of n(H_box, E) / L^d over realizations."""
    energies = np.atleast_1d(np.asarray(energies, dtype=float))
    if not lam > 0:
        raise IdsError("lam must be positive")
    if np.any(energies >= 0):
        raise IdsError("all energies must be negative")
    if realizations < 1:
        raise IdsError("need at least one realization")
    if bc not in (DIRICHLET, NEUMANN):
        raise IdsError(f"unknown boundary condition {bc!r}")
    base = model or BoxModel()
    model = BoxModel(base.d, float(L), base.h, base.u, base.distribution, seed)
    counts = np.stack([ids_counts(model, lam, energies, bc, r) for r in range(realizations)])
    dens = counts / float(L) ** model.d
    mean = dens.mean(axis=0)
    se = dens.std(axis=0, ddof=1) / math.sqrt(realizations) if realizations > 1 else np.full(mean.shape, np.nan)
    return IdsEstimate(energies, mean, se, float(L), bc, realizations, lam, model.d, counts)


@dataclass
class SpectralBottomEstimate:
    lam: float
    E0: float
    L: float
    realizations: int
    ground_energies: np.ndarray = field(repr=False)
    lower_bound: float = -math.inf
    note: str = "minimum of Neumann box ground energies; biased downward at finite L"

    def to_dict(self) -> dict:
        return {"lam": self.lam, "E0": self.E0, "L": self.L, "realizations": self.realizations,
                "lower_bound": self.lower_bound, "note": self.note}


def estimate_E0(lam: float, L: float, realizations: int = 16, seed: int = 0,
                model: BoxModel | None = None) -> SpectralBottomEstimate:
    base = model or BoxModel()
    model = BoxModel(base.d, float(L), base.h, base.u, base.distribution, seed)
    g = np.array([ground_energy(model.hamiltonian(lam, r, NEUMANN)) for r in range(realizations)])
    E0 = float(g.min())
    bound = -lam * model.U0
    # the Neumann Laplacian is >= 0 and V >= -lam*U0
    tol = 1e-10 * max(1.0, abs(bound))
    if E0 < bound - tol:
        raise IdsError(f"ground energy {E0} below the a-priori bound {bound}")
    return SpectralBottomEstimate(lam, E0, float(L), realizations, g, bound)


def _below_somewhere(model: BoxModel, lam: float, E: float, realizations: int) -> bool:
    """E0(lam) < E on the sampled family, decided by inertia (exists a Neumann state below E)."""
    for r in range(realizations):
        if count_below(model.hamiltonian(lam, r, NEUMANN), E) >= 1:
            return True
    return False


def nu0(lam: float, E: float, tol: float = 1e-4, L: float = 32.0, realizations: int = 16, seed: int = 0,
        model: BoxModel | None = None) -> float:
    """inf{nu in ]0,1[ : E0(nu*lam) < E} by bisection.

    The same disorder family is used for every nu, so nu -> E0(nu*lam) is
    exactly non-increasing (the potential scales linearly in nu and is <= 0).
    """
    if not E < 0:
        raise IdsError("E must be negative")
    base = model or BoxModel()
    model = BoxModel(base.d, float(L), base.h, base.u, base.distribution, seed)
    if not _below_somewhere(model, lam, E, realizations):
        raise IdsError(f"E={E} is not above the estimated spectral bottom E0({lam})")
    lo, hi = 0.0, 1.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if _below_somewhere(model, mid * lam, E, realizations):
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def box_side_lower(alpha: float, nu: float, d: int) -> float:
    """Side of the central box on which the envelope stays above nu."""
    if not 0 < nu < 1 or not alpha > 0:
        raise IdsError("need 0 < nu < 1 and alpha > 0")
    return 2.0 / math.sqrt(d) * math.sqrt(nu ** (-2.0 / alpha) - 1.0)


def box_side_upper(alpha: float, E: float, lam: float, U0: float) -> float:
    """Side beyond which the potential is too shallow to bind below E."""
    if not alpha > 0 or not E < 0:
        raise IdsError("need alpha > 0 and E < 0")
    return 2.0 * (lam * U0 / abs(E)) ** (1.0 / alpha)


def counting_bounds(alpha: float, nu: float, delta: float, lam: float, E: float, ids_lower: float,
                    ids_upper: float, U0: float, d: int = 1) -> tuple:
    """(lower, upper) bracket for n(H_alpha, E); a non-positive lower bound is reported as 0."""
    if not delta > 0:
        raise IdsError("delta must be positive")
    lower = box_side_lower(alpha, nu, d) ** d * max(ids_lower - delta, 0.0)
    upper = box_side_upper(alpha, E, lam, U0) ** d * (ids_upper + delta)
    return lower, upper
