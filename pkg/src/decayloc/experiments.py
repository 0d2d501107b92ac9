"""Monte Carlo studies: bound-state counts versus alpha, trial-function
certificates for infinitely many bound states, and Wegner-type scans.

Each study is split into a per-cell function (one realization at one
parameter point, pure and cheap to ship to a worker) and an aggregating
driver that loops over cells in a fixed order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from . import ids as ids_mod
from .lattice import (
    DEFAULT_BUFFER,
    DIRICHLET,
    Bernoulli,
    CubeIndicator,
    DisorderSpec,
    GeneralEnvelope,
    ModelError,
    PowerFunction,
    PowerLaw,
    Uniform01,
    assemble_hamiltonian,
    build_domain,
    default_mesh,
    make_hamiltonian,
    ModelParams,
    sample_disorder,
)
from .spectral import count_below, ground_energy


class ExperimentError(ValueError):
    pass


def _even_ceil(x: float) -> float:
    return float(2 * math.ceil(x / 2.0 - 1e-12))


# ---------------------------------------------------------------------------
# counting versus alpha
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CountSetup:
    lam: float
    E: float
    d: int = 1
    u: object = field(default_factory=CubeIndicator)
    distribution: object = field(default_factory=Uniform01)
    h: float | None = None
    buffer: float = DEFAULT_BUFFER
    floor_side: float = 16.0
    max_dim: int = 2_000_000
    seed: int = 0

    @property
    def U0(self) -> float:
        return self.u.periodic_sup(self.d)

    def box_side(self, alpha: float) -> float:
        if alpha <= 0:
            raise ExperimentError("counting box needs alpha > 0")
        return max(_even_ceil(ids_mod.box_side_upper(alpha, self.E, self.lam, self.U0)), self.floor_side)

    def grid_size(self, alpha: float) -> int:
        h = self.h or default_mesh(self.d)
        return int(round((self.box_side(alpha) + 2 * self.buffer) / h)) ** self.d

    def hamiltonian(self, alpha: float, realization: int, lam: float | None = None):
        spec = DisorderSpec(self.distribution, self.seed)
        lam = self.lam if lam is None else lam
        return make_hamiltonian(self.d, self.box_side(alpha), lam, PowerLaw(alpha), self.u, spec, realization,
                                self.h, DIRICHLET, self.buffer)


def count_cell(setup: CountSetup, alpha: float, realization: int) -> int:
    """n(H_alpha, E) for one realization; -1 when the box exceeds the budget."""
    if setup.grid_size(alpha) > setup.max_dim:
        return -1
    return count_below(setup.hamiltonian(alpha, realization), setup.E)


@dataclass
class CountVsAlphaRecord:
    alphas: np.ndarray
    counts: np.ndarray
    lam: float
    E: float
    d: int
    box_sides: np.ndarray
    band: tuple
    skipped: list
    nu0: float | None = None

    @property
    def realizations(self) -> int:
        return self.counts.shape[0]

    def alpha_log_n(self) -> np.ndarray:
        """alpha*log(n) per (realization, alpha); NaN where n < 1 or the alpha was skipped."""
        n = self.counts.astype(float)
        out = np.full(n.shape, np.nan)
        ok = n >= 1
        out[ok] = (self.alphas[None, :] * np.log(np.where(ok, n, 1.0)))[ok]
        return out

    def mean_alpha_log_n(self) -> np.ndarray:
        a = self.alpha_log_n()
        with np.errstate(all="ignore"):
            return np.array([np.nanmean(col) if np.any(np.isfinite(col)) else np.nan for col in a.T])

    def rows(self):
        aln = self.alpha_log_n()
        for i, a in enumerate(self.alphas):
            for r in range(self.realizations):
                yield {"alpha": float(a), "realization": r, "n": int(self.counts[r, i]),
                       "alpha_log_n": float(aln[r, i]), "band_lo": self.band[0], "band_hi": self.band[1]}


def theoretical_band(lam: float, E: float, U0: float, d: int, nu0_value: float | None) -> tuple:
    lo = d * math.log(1.0 / nu0_value) if nu0_value else math.nan
    top = lam * U0 / abs(E)
    return lo, d * math.log(top) if top > 0 else -math.inf


def count_vs_alpha(lam: float, E: float, alphas, realizations: int, seed: int = 0, setup: CountSetup | None = None,
                   nu0_value: float | None = None, E0_value: float | None = None) -> CountVsAlphaRecord:
    if E0_value is not None and not E0_value < E < 0:
        raise ExperimentError(f"E={E} outside ]E0, 0[ with E0={E0_value}")
    if not E < 0:
        raise ExperimentError("E must be negative")
    base = setup or CountSetup(lam, E)
    setup = CountSetup(lam, E, base.d, base.u, base.distribution, base.h, base.buffer, base.floor_side,
                       base.max_dim, seed)
    alphas = np.asarray(alphas, dtype=float)
    counts = np.zeros((realizations, alphas.size), dtype=np.int64)
    skipped = []
    for i, a in enumerate(alphas):
        if setup.grid_size(a) > setup.max_dim:
            skipped.append(float(a))
            counts[:, i] = -1
            continue
        for r in range(realizations):
            counts[r, i] = count_cell(setup, a, r)
    sides = np.array([setup.box_side(a) for a in alphas])
    band = theoretical_band(lam, E, setup.U0, setup.d, nu0_value)
    return CountVsAlphaRecord(alphas, counts, lam, E, setup.d, sides, band, skipped, nu0_value)


def origin_cell_count(setup: CountSetup, alpha: float, realization: int) -> int:
    """Count for the potential truncated to the unit cube at the origin (large-alpha oracle)."""
    H = setup.hamiltonian(alpha, realization)
    dom = H.domain
    keep = np.all(dom.node_sites() == 0, axis=1)
    V = np.where(keep, H.potential, 0.0)
    M = H.matrix - sp.diags(H.potential) + sp.diags(V)
    return count_below(M.tocsr(), setup.E)


# ---------------------------------------------------------------------------
# trial-function certificate
# ---------------------------------------------------------------------------


def as_witnessed(envelope, witness=None, r0: float | None = None) -> GeneralEnvelope:
    if isinstance(envelope, GeneralEnvelope):
        return envelope
    if witness is None or r0 is None:
        raise ExperimentError("a growth witness F and radius r0 are required")
    return GeneralEnvelope(envelope, witness, r0)


def check_growth_function(F, r0: float, rmax: float, samples: int = 200) -> None:
    """Sampled check that F increases strictly and F(r)/r^2 decreases on [r0, rmax]."""
    r = np.linspace(max(r0, 1e-6), rmax, samples)
    f = np.asarray(F(r), dtype=float)
    if not np.all(np.diff(f) > 0):
        raise ExperimentError("growth function F is not strictly increasing on the tested range")
    if not np.all(np.diff(f / r**2) < 0):
        raise ExperimentError("F(r)/r^2 is not decreasing on the tested range")


@dataclass
class TrialFunctionSet:
    L: float
    h: float
    d: int
    ell: float
    ell_grid: float
    blocks: list
    functions: sp.csc_matrix = field(repr=False)
    c0: float
    grad_const: float
    interior_mask: np.ndarray = field(repr=False)
    F_L: float
    kappa: float
    interior_sites: list = field(repr=False)

    @property
    def N(self) -> int:
        return len(self.blocks)

    @property
    def cube_count_bounds_ok(self) -> bool:
        cap = self.F_L ** (self.d / 4)
        return self.kappa * cap <= self.N <= cap


def _ramp(m: int) -> np.ndarray:
    """Per-axis profile on m nodes: 0 at both end nodes, 1 at distance >= side/4 from the faces."""
    i = np.arange(m)
    width = m / 4.0 - 0.5
    return np.clip(np.minimum(i, m - 1 - i) / width, 0.0, 1.0)


def build_trial_functions(domain, F, r0: float, cube_scale: float = 1.0) -> TrialFunctionSet:
    d, h, L = domain.dim, domain.h, domain.side
    F_L = float(F(L))
    ell = cube_scale * F_L ** (-0.25) * L
    m = int(math.floor(ell / h + 1e-9))
    if domain.n_pad:
        raise ExperimentError("trial functions expect a box without buffer")
    n = domain.n_axis
    if m < 4:
        raise ExperimentError(f"cube side {ell:.3g} resolves to fewer than 4 grid nodes")
    K = n // m
    off = (n - K * m) // 2
    axis = domain.axis_coordinates(0)
    starts = [off + b * m for b in range(K)]
    ramp = _ramp(m)
    cols, rows, vals, blocks, interior_sites = [], [], [], [], []
    inner_nodes = []
    flat = np.arange(domain.size).reshape(domain.shape)
    for corner in np.ndindex(*([K] * d)):
        lo_idx = [starts[c] for c in corner]
        lo = np.array([axis[i] - h / 2 for i in lo_idx])
        hi = lo + m * h
        # keep cubes that avoid the open central box of side 2*r0
        if np.all((lo < r0) & (hi > -r0)):
            continue
        prof = ramp
        for _ in range(d - 1):
            prof = np.minimum.outer(prof, ramp)
        prof = np.asarray(prof).reshape([m] * d)
        idx = flat[tuple(slice(i, i + m) for i in lo_idx)]
        v = prof.ravel()
        nz = v > 0
        v = v / np.linalg.norm(v)
        col = len(blocks)
        rows.append(idx.ravel()[nz])
        vals.append(v[nz])
        cols.append(np.full(int(nz.sum()), col))
        inner_nodes.append(idx.ravel()[prof.ravel() >= 1.0])
        blocks.append((tuple(lo.tolist()), tuple(hi.tolist())))
        margin = m * h / 4
        ilo, ihi = lo + margin, hi - margin
        jlo = np.ceil(ilo + 0.5 - 1e-12).astype(int)
        jhi = np.floor(ihi - 0.5 + 1e-12).astype(int)
        grids = np.meshgrid(*[np.arange(a, b + 1) for a, b in zip(jlo, jhi)], indexing="ij")
        interior_sites.append(np.stack([g.ravel() for g in grids], axis=1) if grids[0].size else
                              np.zeros((0, d), dtype=int))
    N = len(blocks)
    if N:
        Phi = sp.csc_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                            shape=(domain.size, N))
    else:
        Phi = sp.csc_matrix((domain.size, 0))
    ell_grid = m * h
    interior = np.zeros(domain.size, dtype=bool)
    c0 = grad = math.nan
    if N:
        for nodes in inner_nodes:
            interior[nodes] = True
        # continuum normalisation: phi_cont = phi_vec * h^(-d/2)
        v0 = Phi[:, 0].toarray().ravel()
        plateau = v0[inner_nodes[0]]
        c0 = float(plateau.mean()) * h ** (-d / 2) * ell_grid ** (d / 2)
        grad = _gradient_sup(v0, domain) * h ** (-d / 2) * ell_grid ** (1 + d / 2)
    kappa = N / F_L ** (d / 4)
    return TrialFunctionSet(L, h, d, ell, ell_grid, blocks, Phi, c0, grad, interior, F_L, kappa, interior_sites)


def _gradient_sup(v, domain) -> float:
    g = v.reshape(domain.shape)
    sup = 0.0
    for k in range(domain.dim):
        diff = np.abs(np.diff(g, axis=k)) / domain.h
        sup = max(sup, float(diff.max()))
    return sup


@dataclass(frozen=True)
class TrialSetup:
    envelope: GeneralEnvelope
    lam: float
    d: int = 1
    u: object = field(default_factory=CubeIndicator)
    distribution: object = field(default_factory=Uniform01)
    h: float | None = None
    cube_scale: float = 1.0
    mu: float | None = None
    seed: int = 0

    @property
    def mesh(self) -> float:
        return self.h or default_mesh(self.d)

    @property
    def threshold(self) -> float:
        return -1e-9 / self.mesh**2

    @property
    def mu_value(self) -> float:
        return 0.5 * self.distribution.mean if self.mu is None else self.mu

    def domain(self, L: float):
        return build_domain(self.d, 0.0, L, self.mesh, DIRICHLET, 0.0)


def trial_cell(setup: TrialSetup, L: float, realization: int, trial: TrialFunctionSet | None = None) -> dict:
    """Rayleigh quotients, certificate and inertia cross-check for one realization."""
    env = setup.envelope
    if not L > 2 * env.r0:
        raise ExperimentError("need L > 2 r0")
    domain = setup.domain(L)
    if trial is None:
        trial = build_trial_functions(domain, env.witness, env.r0, setup.cube_scale)
    field_ = sample_disorder(DisorderSpec(setup.distribution, setup.seed), domain.required_sites(), realization)
    H = assemble_hamiltonian(ModelParams(setup.lam, env), domain, field_, setup.u)
    Phi = trial.functions
    HPhi = H.matrix @ Phi
    G = (Phi.T @ HPhi).toarray() if trial.N else np.zeros((0, 0))
    q = np.diag(G).copy()
    off = G - np.diag(q)
    if off.size and np.abs(off).max() != 0.0:
        raise ExperimentError("trial functions are not H-orthogonal")
    n = count_below(H, setup.threshold)
    X = np.array([field_.lookup(s).mean() if len(s) else math.nan for s in trial.interior_sites])
    Z = np.array([len(s) for s in trial.interior_sites])
    qmax = float(q.max()) if trial.N else math.nan
    certified = bool(trial.N >= 1 and qmax < setup.threshold)
    return {
        "L": float(L),
        "realization": realization,
        "N": trial.N,
        "max_quotient": qmax,
        "certified": certified,
        "count": int(n),
        "sound": (not certified) or n >= trial.N,
        "X_min": float(np.nanmin(X)) if X.size else math.nan,
        "X_all_above_mu": bool(X.size and np.all(X >= setup.mu_value)),
        "Z_min": int(Z.min()) if Z.size else 0,
        "quotients": q,
    }


@dataclass
class CertificateTable:
    Ls: np.ndarray
    cells: list
    trials: dict
    mu: float

    def success_fraction(self, L) -> tuple:
        c = [x["certified"] for x in self.cells if x["L"] == L]
        p = float(np.mean(c))
        return p, math.sqrt(max(p * (1 - p), 0.0) / len(c))

    @property
    def violations(self) -> int:
        return sum(1 for x in self.cells if not x["sound"])

    def summary_rows(self):
        for L in self.Ls:
            t = self.trials[float(L)]
            p, se = self.success_fraction(L)
            cs = [x for x in self.cells if x["L"] == L]
            yield {"L": float(L), "N": t.N, "ell": t.ell_grid, "kappa": t.kappa, "c0": t.c0,
                   "grad_const": t.grad_const, "success": p, "success_se": se,
                   "mean_count": float(np.mean([x["count"] for x in cs])),
                   "violations": sum(1 for x in cs if not x["sound"]),
                   "ld_fraction": float(np.mean([x["X_all_above_mu"] for x in cs]))}


def trial_certificate(envelope, lam: float, Ls, realizations: int, mu: float | None = None, seed: int = 0,
                      setup: TrialSetup | None = None) -> CertificateTable:
    base = setup or TrialSetup(envelope, lam)
    setup = TrialSetup(as_witnessed(envelope), lam, base.d, base.u, base.distribution, base.h, base.cube_scale,
                       mu, seed)
    if not 0 < setup.mu_value < setup.distribution.mean:
        raise ExperimentError("mu must lie in ]0, E[omega]]")
    env = setup.envelope
    Ls = np.asarray(Ls, dtype=float)
    check_growth_function(env.witness, env.r0, float(Ls.max()) * math.sqrt(setup.d) / 2)
    cells, trials = [], {}
    for L in Ls:
        dom = setup.domain(L)
        env.check_witness(dom.coordinates())
        trials[float(L)] = build_trial_functions(dom, env.witness, env.r0, setup.cube_scale)
        for r in range(realizations):
            cells.append(trial_cell(setup, L, r, trials[float(L)]))
    return CertificateTable(Ls, cells, trials, setup.mu_value)


def infinitude_growth(envelope, F, r0: float, lam: float, Ls, realizations: int, seed: int = 0,
                      setup: TrialSetup | None = None) -> list:
    """Mean number of bound states in growing boxes against the certified count N ~ kappa F(L)^(d/4)."""
    env = as_witnessed(envelope, F, r0)
    table = trial_certificate(env, lam, Ls, realizations, None, seed, setup)
    out = []
    for L in table.Ls:
        cs = [x for x in table.cells if x["L"] == L]
        t = table.trials[float(L)]
        mean = float(np.mean([x["count"] for x in cs]))
        bound = t.kappa * t.F_L ** (t.d / 4)
        out.append({"L": float(L), "mean_count": mean, "bound": bound, "N": t.N, "kappa": t.kappa,
                    "verdict": mean >= bound, "counts": [x["count"] for x in cs]})
    return out


# ---------------------------------------------------------------------------
# Wegner scan
# ---------------------------------------------------------------------------


def region_radius(lam: float, u0: float, Eprime: float, alpha: float) -> float:
    """<y> beyond which the potential is shallower than |E'|/2."""
    if alpha <= 0:
        return math.inf
    return (2 * lam * u0 / abs(Eprime)) ** (1.0 / alpha)


def box_is_far(center, L: float, lam: float, u0: float, Eprime: float, alpha: float) -> bool:
    c = np.abs(np.asarray(center, dtype=float))
    gap = np.maximum(c - L / 2, 0.0)
    return bool(math.sqrt(1 + float(np.sum(gap**2))) >= region_radius(lam, u0, Eprime, alpha))


def default_centers(L: float, lam: float, u0: float, Eprime: float, alpha: float, d: int = 1) -> dict:
    """Origin, a far box just satisfying the region condition, and one halfway between."""
    R = region_radius(lam, u0, Eprime, alpha)
    out = {"central": (0.0,) * d}
    if math.isfinite(R):
        far = math.ceil(math.sqrt(max(R * R - 1, 0.0)) + L / 2)
        out["mid"] = (float(math.ceil(far / 2)),) + (0.0,) * (d - 1)
        out["far"] = (float(far),) + (0.0,) * (d - 1)
    return out


@dataclass(frozen=True)
class WegnerSetup:
    lam: float
    alpha: float
    Eprime: float
    E: float
    L: float
    d: int = 1
    u: object = field(default_factory=CubeIndicator)
    distribution: object = field(default_factory=Uniform01)
    h: float | None = None
    buffer: float = DEFAULT_BUFFER
    seed: int = 0

    def __post_init__(self):
        if not self.E <= self.Eprime < 0:
            raise ExperimentError("need E <= E' < 0")
        if isinstance(self.distribution, Bernoulli) or not getattr(self.distribution, "has_density", False):
            raise ExperimentError("the Wegner scan needs a disorder distribution with a bounded density")

    def check_etas(self, etas) -> np.ndarray:
        etas = np.asarray(etas, dtype=float)
        if np.any(etas <= 0) or np.any(etas > abs(self.Eprime) / 4 * (1 + 1e-12)):
            raise ExperimentError(f"every eta must lie in ]0, |E'|/4] = ]0, {abs(self.Eprime) / 4}]")
        return etas

    def hamiltonian(self, center, realization: int):
        spec = DisorderSpec(self.distribution, self.seed)
        return make_hamiltonian(self.d, self.L, self.lam, PowerLaw(self.alpha), self.u, spec, realization, self.h,
                                DIRICHLET, self.buffer, center)


def _site_blocks(H):
    """Per impurity site in the box: node indices and the (positive) single-site weights."""
    dom = H.domain
    inner = np.flatnonzero(dom.inner_mask())
    x = dom.coordinates()[inner]
    sites = np.floor(x + 0.5).astype(np.int64)
    weight = H.params.lam * H.params.envelope(x) * H.site_potential(x - sites)
    uniq, inv = np.unique(sites, axis=0, return_inverse=True)
    inv = inv.ravel()
    blocks = []
    for k in range(len(uniq)):
        sel = (inv == k) & (weight > 0)
        if sel.any():
            blocks.append((uniq[k], inner[sel], weight[sel]))
    return blocks


def _interval_mass(dist, a: float, b: float) -> float:
    return float(dist.cdf(b) - dist.cdf(a))


def conditional_probabilities(H, omega_of, E: float, eta: float, distribution, chunk: int = 512):
    """Exact per-site conditional probability and expected trace for J = [E-eta, E+eta].

    For site k, H(t) = H0 - t * B B^T with t = omega_k.  An eigenvalue of H(t) crosses E'
    exactly when 1/t is an eigenvalue of K = B^T (H0 - E')^{-1} B, and K is obtained from the
    resolvent of the full H by K = G (I + omega_k G)^{-1}, G = B^T (H - E')^{-1} B.  The count
    n(H0, E') follows from the inertia of the bordered matrix [[H - E', B], [B^T, -I/omega_k]].
    """
    blocks = _site_blocks(H)
    n = H.matrix.shape[0]
    per_energy = []
    for Ep in (E + eta, E - eta):
        M = (H.matrix - Ep * sp.identity(n, format="csr")).tocsc()
        base = count_below(H, Ep)
        lu = spla.splu(M)
        gs = []
        for start in range(0, len(blocks), chunk):
            part = blocks[start:start + chunk]
            nodes = np.concatenate([b[1] for b in part])
            rhs = np.zeros((n, nodes.size))
            rhs[nodes, np.arange(nodes.size)] = 1.0
            X = lu.solve(rhs)
            pos = 0
            for _, idx, w in part:
                s = idx.size
                Gi = X[idx, pos:pos + s]
                sw = np.sqrt(w)
                G = sw[:, None] * (0.5 * (Gi + Gi.T)) * sw[None, :]
                gs.append(np.linalg.eigvalsh(G))
                pos += s
        per_energy.append((base, gs))
    (nA, gA), (nB, gB) = per_energy
    probs = np.empty(len(blocks))
    traces = np.empty(len(blocks))
    for k, (site, _, _) in enumerate(blocks):
        om = float(omega_of(site))
        tA, a0 = _crossings(gA[k], om, nA)
        tB, b0 = _crossings(gB[k], om, nB)
        pts = np.unique(np.concatenate([[0.0, 1.0], tA, tB]))
        p = tr = 0.0
        for lo, hi in zip(pts[:-1], pts[1:]):
            mid = 0.5 * (lo + hi)
            diff = (a0 + np.sum(tA <= mid)) - (b0 + np.sum(tB <= mid))
            mass = _interval_mass(distribution, lo, hi)
            tr += diff * mass
            if diff >= 1:
                p += mass
        probs[k] = p
        traces[k] = tr
    return probs, traces


def _crossings(g: np.ndarray, omega: float, base: int):
    """Crossing couplings t in ]0, 1] and the count at t = 0 for one site."""
    if omega > 0:
        denom = 1.0 + omega * g
        kappa = g / denom
        n0 = base - int(np.sum(g < -1.0 / omega))
    else:
        kappa = g
        n0 = base
    pos = kappa[kappa > 0]
    t = 1.0 / pos
    t = np.sort(t[t <= 1.0])
    # the count at t = omega must equal n(H, E')
    if n0 + int(np.sum(t <= omega)) != base and not np.any(np.abs(t - omega) < 1e-8):
        raise ExperimentError("conditional crossing count disagrees with the inertia count")
    return t, n0


def wegner_cell(setup: WegnerSetup, center, realization: int, etas, conditional: bool = True) -> dict:
    etas = setup.check_etas(etas)
    H = setup.hamiltonian(center, realization)
    g = ground_energy(H)
    lo = np.array([count_below(H, setup.E - e) for e in etas])
    hi = np.array([count_below(H, setup.E + e) for e in etas])
    out = {"ground": g, "indicator": (hi - lo >= 1).astype(float), "trace": (hi - lo).astype(float)}
    if conditional:
        dom = H.domain
        field_ = sample_disorder(DisorderSpec(setup.distribution, setup.seed), dom.required_sites(), realization)
        cp, ct = [], []
        for e in etas:
            p, t = conditional_probabilities(H, lambda s: field_.lookup(s[None, :])[0], setup.E, float(e),
                                             setup.distribution)
            cp.append(float(p.mean()) if p.size else 0.0)
            ct.append(float(t.mean()) if t.size else 0.0)
        out["cond_prob"] = np.array(cp)
        out["cond_trace"] = np.array(ct)
    return out


@dataclass
class WegnerScanRecord:
    setup: WegnerSetup
    etas: np.ndarray
    centers: dict
    far: dict
    prob: dict
    prob_se: dict
    trace: dict
    cond_prob: dict
    cond_prob_se: dict
    cond_trace: dict
    ground_min: dict
    realizations: int

    def fit_exponent(self, center_class: str = "central", conditional: bool = True) -> float:
        P = (self.cond_prob if conditional else self.prob)[center_class]
        ok = P > 0
        if ok.sum() < 2:
            return math.nan
        return float(np.polyfit(np.log(self.etas[ok]), np.log(P[ok]), 1)[0])

    def fitted_constant(self, s: float) -> float:
        """Smallest Q with E[tr P(J_eta)] <= Q eta^s L^d on every scanned cell."""
        Ld = self.setup.L**self.setup.d
        q = 0.0
        for c in self.centers:
            tr = np.maximum(self.trace[c], self.cond_trace.get(c, self.trace[c]))
            q = max(q, float(np.max(tr / (self.etas**s * Ld))))
        return q

    def far_empty(self) -> dict:
        """Exact emptiness verdicts for boxes satisfying the region condition."""
        out = {}
        for c, is_far in self.far.items():
            if is_far:
                out[c] = bool(self.ground_min[c] >= self.setup.Eprime / 2 and np.all(self.prob[c] == 0)
                              and np.all(self.trace[c] == 0))
        return out

    def rows(self):
        for c in self.centers:
            for i, e in enumerate(self.etas):
                row = {"eta": float(e), "L": self.setup.L, "center_class": c, "prob": float(self.prob[c][i]),
                       "trace_mean": float(self.trace[c][i])}
                if c in self.cond_prob:
                    row["cond_prob"] = float(self.cond_prob[c][i])
                    row["cond_trace_mean"] = float(self.cond_trace[c][i])
                yield row


def wegner_scan(lam: float, alpha: float, Eprime: float, E: float, etas, L: float, centers: dict | None = None,
                realizations: int = 100, seed: int = 0, setup: WegnerSetup | None = None,
                conditional: bool = True) -> WegnerScanRecord:
    base = setup
    setup = WegnerSetup(lam, alpha, Eprime, E, L, *(
        (base.d, base.u, base.distribution, base.h, base.buffer) if base else ()), seed=seed)
    etas = setup.check_etas(etas)
    u0 = setup.u.u0
    if centers is None:
        centers = default_centers(L, lam, u0, Eprime, alpha, setup.d)
    far = {c: box_is_far(x, L, lam, u0, Eprime, alpha) for c, x in centers.items()}
    prob, prob_se, trace, cprob, cse, ctrace, gmin = {}, {}, {}, {}, {}, {}, {}
    for c, x in centers.items():
        res = [wegner_cell(setup, x, r, etas, conditional) for r in range(realizations)]
        ind = np.array([r["indicator"] for r in res])
        prob[c] = ind.mean(axis=0)
        prob_se[c] = ind.std(axis=0, ddof=1) / math.sqrt(realizations) if realizations > 1 else ind[0] * 0
        trace[c] = np.array([r["trace"] for r in res]).mean(axis=0)
        gmin[c] = float(min(r["ground"] for r in res))
        if conditional:
            cp = np.array([r["cond_prob"] for r in res])
            cprob[c] = cp.mean(axis=0)
            cse[c] = cp.std(axis=0, ddof=1) / math.sqrt(realizations) if realizations > 1 else cp[0] * 0
            ctrace[c] = np.array([r["cond_trace"] for r in res]).mean(axis=0)
    return WegnerScanRecord(setup, etas, dict(centers), far, prob, prob_se, trace, cprob, cse, ctrace, gmin,
                            realizations)


__all__ = [
    "CountSetup", "CountVsAlphaRecord", "count_cell", "count_vs_alpha", "origin_cell_count", "theoretical_band",
    "TrialSetup", "TrialFunctionSet", "CertificateTable", "build_trial_functions", "trial_cell",
    "trial_certificate", "infinitude_growth", "check_growth_function", "as_witnessed",
    "WegnerSetup", "WegnerScanRecord", "wegner_cell", "wegner_scan", "conditional_probabilities",
    "default_centers", "box_is_far", "region_radius", "ExperimentError", "PowerFunction", "ModelError",
]
