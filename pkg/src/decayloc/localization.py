"""Eigenfunction localization: unit-cube masses, centres, decay fits, dynamics.

Masses are taken on the partition of space into unit cubes around the
impurity sites, ``mass(x) = ||chi_x phi||``.  For a grid-normalized vector the
squared masses sum to one.  Decay is measured by a least-squares fit of
``log mass`` against the distance to the centre.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field

import numpy as np

FIT_MIN_POINTS = 5
FIT_INNER_SKIP = 2.0
FIT_EDGE_SKIP = 2
MASS_FLOOR = 1e-10
LOCALIZED_MIN_MASS = 1e-8
TIE_RTOL = 1e-12


class LocalizationError(ValueError):
    pass


def cube_masses(vec, domain):
    """(sites, masses) over every unit cube meeting the grid; sites sorted lexicographically."""
    vec = np.asarray(vec)
    if vec.shape[0] != domain.size:
        raise LocalizationError("vector length does not match the domain")
    sites, inv = np.unique(domain.node_sites(), axis=0, return_inverse=True)
    w = np.bincount(inv.ravel(), weights=np.abs(vec) ** 2, minlength=len(sites))
    return sites, np.sqrt(w)


def _argmax_site(sites, masses) -> int:
    top = masses.max()
    cand = np.flatnonzero(masses >= top * (1 - TIE_RTOL))
    # np.unique(axis=0) sorts lexicographically, so the first candidate wins
    return int(cand[0])


def localization_center(vec, domain) -> tuple:
    sites, masses = cube_masses(vec, domain)
    return tuple(int(c) for c in sites[_argmax_site(sites, masses)])


@dataclass
class MassFit:
    m: float
    C: float
    residual: float
    n_points: int
    n_floor_excluded: int
    fitted: bool

    @property
    def localized(self) -> bool:
        return self.fitted and self.m > LOCALIZED_MIN_MASS


def _edge_mask(sites, skip: int) -> np.ndarray:
    lo, hi = sites.min(axis=0), sites.max(axis=0)
    return np.all((sites >= lo + skip) & (sites <= hi - skip), axis=1)


def decay_mass_fit(sites, masses, center, inner_skip: float = FIT_INNER_SKIP, edge_skip: int = FIT_EDGE_SKIP,
                   floor: float = MASS_FLOOR) -> MassFit:
    """Fit log(mass) ~ log(C) - m * |x - center| on the fit window.

    The window drops cubes closer than ``inner_skip`` to the centre, cubes in the
    ``edge_skip`` outermost layers, and masses below ``floor`` times the peak.
    """
    sites = np.atleast_2d(np.asarray(sites))
    if sites.shape[0] == 1 and np.ndim(masses) == 1 and len(masses) > 1:
        sites = sites.T
    masses = np.asarray(masses, dtype=float)
    r = np.linalg.norm(sites - np.asarray(center), axis=1)
    window = (r >= inner_skip) & _edge_mask(sites, edge_skip)
    usable = window & (masses > floor * masses.max())
    excluded = int(np.sum(window & ~usable))
    n = int(usable.sum())
    if n < FIT_MIN_POINTS:
        return MassFit(math.nan, math.nan, math.nan, n, excluded, False)
    A = np.stack([np.ones(n), -r[usable]], axis=1)
    y = np.log(masses[usable])
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    resid = float(np.sqrt(np.mean((A @ coef - y) ** 2)))
    return MassFit(float(coef[1]), float(math.exp(coef[0])), resid, n, excluded, True)


def sule_violations(sites, masses, center, fit: MassFit, eps: float = 0.5, slack: float = 0.8,
                    floor: float = MASS_FLOOR) -> int:
    """Cubes breaking mass <= C exp(|center|^eps) exp(-slack*m*|x - center|).

    Cubes below the numerical floor carry no resolvable information and are not tested.
    """
    if not fit.fitted:
        return -1
    c = np.asarray(center, dtype=float)
    r = np.linalg.norm(np.asarray(sites) - c, axis=1)
    bound = fit.C * math.exp(np.linalg.norm(c) ** eps) * np.exp(-slack * fit.m * r)
    test = masses > floor * masses.max()
    return int(np.sum(masses[test] > bound[test]))


@dataclass
class LocalizationProfile:
    energy: float
    center: tuple
    sites: np.ndarray = field(repr=False)
    masses: np.ndarray = field(repr=False)
    fit: MassFit
    eps: float
    violations: int

    @property
    def partition_error(self) -> float:
        return abs(float(np.sum(self.masses**2)) - 1.0)

    @property
    def sule_ok(self) -> bool:
        return self.fit.fitted and self.violations == 0

    def row(self) -> dict:
        row = {"E_n": self.energy}
        for k, c in enumerate(self.center):
            row[f"x{k}"] = c
        row.update(m=self.fit.m, C=self.fit.C, residual=self.fit.residual, n_fit=self.fit.n_points,
                   sule="pass" if self.sule_ok else "fail")
        return row


def analyze_eigenvector(vec, energy: float, domain, eps: float = 0.5, slack: float = 0.8) -> LocalizationProfile:
    sites, masses = cube_masses(vec, domain)
    i = _argmax_site(sites, masses)
    center = tuple(int(c) for c in sites[i])
    fit = decay_mass_fit(sites, masses, sites[i])
    viol = sule_violations(sites, masses, sites[i], fit, eps, slack)
    return LocalizationProfile(float(energy), center, sites, masses, fit, eps, viol)


def profiles_to_csv(profiles, path) -> None:
    rows = [p.row() for p in profiles]
    if not rows:
        open(path, "w").close()
        return
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        w.writerows(rows)


def center_radius_prediction(alpha: float, lam: float, u0: float, E: float, prefactor: float = 1.0) -> float:
    """Radius scale of the ball that holds localization centres at energy E.

    Decaying envelope (0 < alpha <= 1) and |E| < 2*lam*u0: the potential can bind at E only
    where lam*u0*<x>^(-alpha) exceeds |E|/2, which gives (2*lam*u0/|E|)^(1/alpha).
    Every other case, the flat envelope included, uses max(1, 1/|E|).
    """
    if not E < 0:
        raise LocalizationError("E must be negative")
    if alpha < 0:
        raise LocalizationError("alpha must be non-negative")
    ratio = 2.0 * lam * u0 / abs(E)
    if ratio > 1.0 and 0 < alpha <= 1:
        return prefactor * ratio ** (1.0 / alpha)
    return prefactor * max(1.0, 1.0 / abs(E))


# ---------------------------------------------------------------------------
# dynamics
# ---------------------------------------------------------------------------


def origin_state(domain) -> np.ndarray:
    """Normalized indicator of the unit cube at the origin."""
    at0 = np.all(domain.node_sites() == 0, axis=1)
    if not at0.any():
        raise LocalizationError("the origin cube is not on the grid")
    v = at0.astype(float)
    return v / np.linalg.norm(v)


@dataclass
class DynamicsReport:
    interval: tuple
    p: float
    times: np.ndarray
    moments: np.ndarray
    sup: float
    sites: np.ndarray = field(repr=False)
    Q: np.ndarray = field(repr=False)
    Q_fit: MassFit | None
    domination_ratio: float
    n_states: int

    @property
    def domination_ok(self) -> bool:
        return self.domination_ratio <= 1.0 + 1e-10

    def to_dict(self) -> dict:
        fit = None
        if self.Q_fit is not None:
            fit = {"m": self.Q_fit.m, "C": self.Q_fit.C, "residual": self.Q_fit.residual,
                   "fitted": self.Q_fit.fitted}
        return {"interval": list(self.interval), "p": self.p, "times": self.times.tolist(),
                "moments": self.moments.tolist(), "sup": self.sup, "Q_fit": fit,
                "domination_ratio": self.domination_ratio, "n_states": self.n_states}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


def _require_complete(summary):
    if not summary.complete:
        raise LocalizationError("eigenbasis for the interval is incomplete; moments would be underestimated")
    if summary.vectors is None:
        raise LocalizationError("eigenvectors are required")


def eigenfunction_correlator(summary, domain):
    """(sites, Q) with Q(x) = sum_n ||chi_x phi_n|| * ||chi_0 phi_n||."""
    _require_complete(summary)
    sites = np.unique(domain.node_sites(), axis=0)
    Q = np.zeros(len(sites))
    if summary.energies.size == 0:
        return sites, Q
    i0 = np.flatnonzero(np.all(sites == 0, axis=1))
    if i0.size == 0:
        raise LocalizationError("the origin cube is not on the grid")
    for j in range(summary.energies.size):
        _, masses = cube_masses(summary.vectors[:, j], domain)
        Q += masses * masses[i0[0]]
    return sites, Q


def _cube_norms(vec, domain):
    return cube_masses(vec, domain)[1]


def dynamics_moment(summary, domain, p: float = 2.0, times=None, fit_correlator: bool = True) -> DynamicsReport:
    """Moments of exp(-itH) P_I psi0 in the eigenbasis of I, plus the dominating correlator."""
    _require_complete(summary)
    times = np.linspace(0.0, 50.0, 26) if times is None else np.asarray(times, dtype=float)
    sites, Q = eigenfunction_correlator(summary, domain)
    interval = tuple(summary.window) if summary.window is not None else (-math.inf, summary.threshold)
    w, V = summary.energies, summary.vectors
    if w.size == 0:
        return DynamicsReport(interval, p, times, np.zeros(times.size), 0.0, sites, Q, None, 0.0, 0)
    weight = (1.0 + np.sum(domain.coordinates() ** 2, axis=1)) ** (p / 2)
    c = V.T @ origin_state(domain)
    moments = np.empty(times.size)
    worst = 0.0
    for k, t in enumerate(times):
        psi = V @ (np.exp(-1j * t * w) * c)
        moments[k] = float(np.sum(weight * np.abs(psi) ** 2))
        kern = _cube_norms(psi, domain)
        pos = Q > 0
        if np.any(kern[~pos] > 0):
            worst = math.inf
        if pos.any():
            worst = max(worst, float(np.max(kern[pos] / Q[pos])))
    qfit = None
    if fit_correlator:
        qfit = decay_mass_fit(sites, Q, np.zeros(domain.dim)) if Q.max() > 0 else None
    return DynamicsReport(interval, p, times, moments, float(moments.max()), sites, Q, qfit, worst, int(w.size))


# ---------------------------------------------------------------------------
# campaign over the envelope exponent
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LocalizeSetup:
    lam: float = 8.0
    L: float = 64.0
    d: int = 1
    u0: float = 1.0
    h: float | None = None
    buffer: float = 8.0
    window_fraction: float = 0.2
    p: float = 2.0
    times: tuple = tuple(np.linspace(0.0, 50.0, 26).tolist())
    eps: float = 0.5
    slack: float = 0.8
    radius_prefactor: float = 1.0
    seed: int = 0

    def hamiltonian(self, alpha: float, realization: int):
        from .lattice import CubeIndicator, DisorderSpec, PowerLaw, Uniform01, make_hamiltonian

        spec = DisorderSpec(Uniform01(), self.seed)
        return make_hamiltonian(self.d, self.L, self.lam, PowerLaw(alpha), CubeIndicator(self.u0), spec,
                                realization, self.h, "dirichlet", self.buffer)


def localize_cell(setup: LocalizeSetup, alpha: float, realization: int) -> dict:
    """Eigenfunctions in the bottom window of the negative spectrum for one realization."""
    from .spectral import ground_energy, lowest_eigenpairs

    H = setup.hamiltonian(alpha, realization)
    g = ground_energy(H)
    if not g < 0:
        return {"alpha": alpha, "realization": realization, "window": None, "states": [], "dynamics": None}
    top = (1.0 - setup.window_fraction) * g
    lo = g - 1e-9 * max(1.0, abs(g))
    summary = lowest_eigenpairs(H, window=(lo, top))
    states = []
    for j, E in enumerate(summary.energies):
        prof = analyze_eigenvector(summary.vectors[:, j], E, H.domain, setup.eps, setup.slack)
        radius = center_radius_prediction(alpha, setup.lam, setup.u0, E, setup.radius_prefactor)
        states.append({"E": float(E), "center": prof.center, "m": prof.fit.m, "C": prof.fit.C,
                       "residual": prof.fit.residual, "fitted": prof.fit.fitted, "violations": prof.violations,
                       "partition_error": prof.partition_error, "center_radius": float(np.linalg.norm(prof.center)),
                       "predicted_radius": radius})
    dyn = dynamics_moment(summary, H.domain, setup.p, np.asarray(setup.times))
    return {"alpha": alpha, "realization": realization, "window": (lo, top), "complete": summary.complete,
            "states": states, "dynamics": {"sup": dyn.sup, "domination_ratio": dyn.domination_ratio,
                                           "n_states": dyn.n_states}}


@dataclass
class LocalizationCampaign:
    setup: LocalizeSetup
    alphas: tuple
    cells: list

    def states(self, alpha):
        return [s for c in self.cells if c["alpha"] == alpha for s in c["states"]]

    def median_mass(self, alpha) -> float:
        m = [s["m"] for s in self.states(alpha) if s["fitted"]]
        return float(np.median(m)) if m else math.nan

    def sule_failures(self, alpha) -> int:
        return sum(1 for s in self.states(alpha) if not (s["fitted"] and s["violations"] == 0))

    def radius_ratio(self, alpha, safety: float = 1.0) -> float:
        r = [s["center_radius"] / (safety * s["predicted_radius"]) for s in self.states(alpha)]
        return float(max(r)) if r else 0.0

    def median_sup_moment(self, alpha) -> float:
        v = [c["dynamics"]["sup"] for c in self.cells if c["alpha"] == alpha and c["dynamics"]]
        return float(np.median(v)) if v else math.nan

    def max_domination_ratio(self) -> float:
        return max((c["dynamics"]["domination_ratio"] for c in self.cells if c["dynamics"]), default=0.0)

    def rows(self):
        for c in self.cells:
            for s in c["states"]:
                yield {"alpha": c["alpha"], "realization": c["realization"], "E_n": s["E"], "m": s["m"],
                       "C": s["C"], "center_radius": s["center_radius"], "predicted_radius": s["predicted_radius"]}


def localization_campaign(alphas, realizations: int, setup: LocalizeSetup | None = None) -> LocalizationCampaign:
    setup = setup or LocalizeSetup()
    cells = [localize_cell(setup, float(a), r) for a in alphas for r in range(realizations)]
    return LocalizationCampaign(setup, tuple(float(a) for a in alphas), cells)
