"""Discretized random Schroedinger operators on boxes.

A box ``]c - L/2, c + L/2[^d`` is sampled at cell-centred nodes with spacing
``h``; the box can be embedded in a Dirichlet buffer of width ``b`` so that the
operator acts (approximately) on all of R^d while the potential lives in the
box only.  Impurities sit on Z^d; a node at position x belongs to the unit
cube of site ``floor(x + 1/2)`` (half-open cubes, so the cubes tile space).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp

from . import rng

DIRICHLET = "dirichlet"
NEUMANN = "neumann"
_BCS = (DIRICHLET, NEUMANN)


class ModelError(ValueError):
    """Invalid model input (domain, envelope witness, disorder coverage)."""


def _integral_ratio(length: float, h: float, what: str) -> int:
    ratio = length / h
    n = int(round(ratio))
    if abs(ratio - n) > 1e-9 * max(1.0, abs(ratio)):
        raise ModelError(f"{what}/h = {length}/{h} = {ratio!r} is not an integer")
    return n


# ---------------------------------------------------------------------------
# domain
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class LatticeDomain:
    """Box of side ``side`` centred at ``center``, grid spacing ``h``.

    ``buffer`` pads every face by that physical length (potential-free nodes);
    ``bc`` is the boundary condition on the outer faces of the padded grid.
    Nodes are numbered in C order (last axis fastest).
    """

    dim: int
    center: tuple
    side: float
    h: float
    bc: str = DIRICHLET
    buffer: float = 0.0
    n_inner: int = field(init=False, repr=False)
    n_pad: int = field(init=False, repr=False)

    def __post_init__(self):
        if self.dim not in (1, 2, 3):
            raise ModelError(f"dimension must be 1, 2 or 3, got {self.dim}")
        center = tuple(float(c) for c in np.atleast_1d(self.center))
        if len(center) == 1 and self.dim > 1 and center[0] == 0.0:
            center = (0.0,) * self.dim
        if len(center) != self.dim:
            raise ModelError(f"center has {len(center)} coordinates, expected {self.dim}")
        object.__setattr__(self, "center", center)
        if not self.side > 0 or not self.h > 0:
            raise ModelError("side and h must be positive")
        if self.buffer < 0:
            raise ModelError("buffer must be non-negative")
        if self.bc not in _BCS:
            raise ModelError(f"boundary condition must be one of {_BCS}, got {self.bc!r}")
        object.__setattr__(self, "n_inner", _integral_ratio(self.side, self.h, "side"))
        object.__setattr__(self, "n_pad", _integral_ratio(self.buffer, self.h, "buffer"))

    @property
    def n_axis(self) -> int:
        return self.n_inner + 2 * self.n_pad

    @property
    def shape(self) -> tuple:
        return (self.n_axis,) * self.dim

    @property
    def size(self) -> int:
        return self.n_axis**self.dim

    def axis_coordinates(self, k: int) -> np.ndarray:
        start = self.center[k] - self.side / 2 - self.n_pad * self.h
        return start + (np.arange(self.n_axis) + 0.5) * self.h

    def coordinates(self) -> np.ndarray:
        """Node positions, shape (size, dim)."""
        axes = [self.axis_coordinates(k) for k in range(self.dim)]
        mesh = np.meshgrid(*axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    def multi_index(self, index) -> np.ndarray:
        return np.stack(np.unravel_index(np.asarray(index), self.shape), axis=-1)

    def flat_index(self, multi) -> np.ndarray:
        multi = np.atleast_2d(np.asarray(multi, dtype=np.int64))
        return np.ravel_multi_index(tuple(multi.T), self.shape)

    def coordinate_to_index(self, x) -> np.ndarray:
        """Index of the node whose cell contains x (x inside the padded grid)."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        start = np.array(self.center) - self.side / 2 - self.n_pad * self.h
        multi = np.floor((x - start) / self.h).astype(np.int64)
        if np.any(multi < 0) or np.any(multi >= self.n_axis):
            raise ModelError("point outside the computational grid")
        return self.flat_index(multi)

    def inner_mask(self) -> np.ndarray:
        lo, hi = self.n_pad, self.n_pad + self.n_inner
        ok = np.ones(self.shape, dtype=bool)
        for k in range(self.dim):
            idx = [np.newaxis] * self.dim
            idx[k] = slice(None)
            r = np.arange(self.n_axis)
            ok &= ((r >= lo) & (r < hi))[tuple(idx)]
        return ok.ravel()

    def node_sites(self) -> np.ndarray:
        """Impurity site owning each node, shape (size, dim)."""
        return np.floor(self.coordinates() + 0.5).astype(np.int64)

    def required_sites(self) -> np.ndarray:
        """Sites whose unit cube carries at least one node of the inner box."""
        sites = self.node_sites()[self.inner_mask()]
        return np.unique(sites, axis=0)

    def describe(self) -> dict:
        return {
            "dim": self.dim,
            "center": list(self.center),
            "side": self.side,
            "h": self.h,
            "bc": self.bc,
            "buffer": self.buffer,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "LatticeDomain":
        return cls(
            dim=int(data["dim"]),
            center=tuple(data["center"]),
            side=float(data["side"]),
            h=float(data["h"]),
            bc=data.get("bc", DIRICHLET),
            buffer=float(data.get("buffer", 0.0)),
        )


def build_domain(d: int, center, L: float, h: float, bc: str = DIRICHLET, buffer: float = 0.0) -> LatticeDomain:
    if np.isscalar(center):
        center = (float(center),) * int(d)
    return LatticeDomain(int(d), tuple(center), float(L), float(h), bc, float(buffer))


# ---------------------------------------------------------------------------
# envelopes
# ---------------------------------------------------------------------------


def _norm2(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if x.ndim == 0:
        return x * x
    return np.sum(x * x, axis=-1)


@dataclass(frozen=True)
class PowerLaw:
    """gamma(x) = <x>^(-alpha), <x> = sqrt(1 + |x|^2)."""

    alpha: float

    def __post_init__(self):
        if not self.alpha >= 0:
            raise ModelError("alpha must be >= 0")

    def __call__(self, x) -> np.ndarray:
        r2 = _norm2(x)
        if self.alpha == 0:
            return np.ones_like(r2, dtype=float)
        return (1.0 + r2) ** (-0.5 * self.alpha)

    def describe(self) -> dict:
        return {"kind": "power", "alpha": self.alpha}


@dataclass(frozen=True)
class PowerFunction:
    """Radial profile r -> coef * r**exponent (used for growth witnesses F)."""

    coef: float = 1.0
    exponent: float = 0.5

    def __call__(self, r) -> np.ndarray:
        return self.coef * np.asarray(r, dtype=float) ** self.exponent

    def describe(self) -> dict:
        return {"kind": "power", "coef": self.coef, "exponent": self.exponent}


@dataclass(frozen=True)
class GeneralEnvelope:
    """Arbitrary envelope gamma with a growth witness F: gamma(x)|x|^2 >= F(|x|) for |x| > r0."""

    gamma: Callable
    witness: Callable
    r0: float

    def __post_init__(self):
        if not self.r0 > 0:
            raise ModelError("r0 must be positive")

    def __call__(self, x) -> np.ndarray:
        return np.asarray(self.gamma(x), dtype=float)

    def check_witness(self, points) -> None:
        """Raise ModelError naming the first sampled point that violates the witness."""
        points = np.atleast_2d(np.asarray(points, dtype=float))
        r2 = _norm2(points)
        far = r2 > self.r0**2
        if not np.any(far):
            return
        pts = points[far]
        r = np.sqrt(r2[far])
        lhs = self(pts) * r**2
        rhs = np.asarray(self.witness(r), dtype=float)
        bad = np.flatnonzero(~(lhs >= rhs))
        if bad.size:
            i = bad[0]
            raise ModelError(
                f"envelope witness violated at x={pts[i].tolist()}: "
                f"gamma(x)|x|^2 = {lhs[i]:.6g} < F(|x|) = {rhs[i]:.6g}"
            )

    def describe(self) -> dict:
        describe = getattr(self.gamma, "describe", None)
        wdescribe = getattr(self.witness, "describe", None)
        return {
            "kind": "general",
            "gamma": describe() if describe else repr(self.gamma),
            "witness": wdescribe() if wdescribe else repr(self.witness),
            "r0": self.r0,
        }


def envelope_value(spec, x):
    """Envelope at a point (returns float) or at an array of points (returns array)."""
    val = spec(np.asarray(x, dtype=float))
    return float(val) if np.ndim(val) == 0 else val


def envelope_from_dict(data: dict):
    kind = data.get("kind", "power")
    if kind == "power":
        return PowerLaw(float(data["alpha"]))
    if kind == "general":
        gamma = envelope_from_dict(data["gamma"])
        w = data["witness"]
        return GeneralEnvelope(gamma, PowerFunction(float(w["coef"]), float(w["exponent"])), float(data["r0"]))
    raise ModelError(f"unknown envelope kind {kind!r}")


# ---------------------------------------------------------------------------
# single-site potentials
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class CubeIndicator:
    """u = u0 on the centred half-open cube of side delta, zero elsewhere."""

    u0: float = 1.0
    delta: float = 1.0

    def __post_init__(self):
        if not self.u0 > 0:
            raise ModelError("u0 must be positive")
        if not 0 < self.delta <= 1:
            raise ModelError("delta must lie in ]0, 1]")

    def __call__(self, y) -> np.ndarray:
        y = np.atleast_2d(np.asarray(y, dtype=float))
        if self.delta == 1:
            return np.full(y.shape[0], self.u0)
        half = 0.5 * self.delta
        inside = np.all((y >= -half) & (y < half), axis=1)
        return np.where(inside, self.u0, 0.0)

    def integral(self, d: int) -> float:
        return self.u0 * self.delta**d

    def periodic_sup(self, d: int) -> float:
        # supports lie in disjoint unit cubes
        return self.u0

    def describe(self) -> dict:
        return {"kind": "cube", "u0": self.u0, "delta": self.delta}


@dataclass(frozen=True, eq=False)
class Tabulated:
    """Piecewise-constant u on an m^d cell sub-grid of the unit cube [-1/2, 1/2)^d."""

    samples: np.ndarray
    u0: float

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=float)
        object.__setattr__(self, "samples", s)
        if s.ndim < 1 or len(set(s.shape)) != 1:
            raise ModelError("tabulated samples must be an m x ... x m array")
        if np.any(s < 0) or np.any(s > self.u0):
            raise ModelError("tabulated samples must satisfy 0 <= u <= u0")
        if not np.any(s > 0):
            raise ModelError("single-site potential must have positive integral")

    def __call__(self, y) -> np.ndarray:
        y = np.atleast_2d(np.asarray(y, dtype=float))
        m = self.samples.shape[0]
        idx = np.clip(np.floor((y + 0.5) * m).astype(np.int64), 0, m - 1)
        return self.samples[tuple(idx.T)]

    def integral(self, d: int) -> float:
        return float(self.samples.mean())

    def periodic_sup(self, d: int) -> float:
        return float(self.samples.max())

    def describe(self) -> dict:
        return {"kind": "tabulated", "u0": self.u0, "samples": self.samples.tolist()}


def site_potential_from_dict(data: dict):
    kind = data.get("kind", "cube")
    if kind == "cube":
        return CubeIndicator(float(data.get("u0", 1.0)), float(data.get("delta", 1.0)))
    if kind == "tabulated":
        return Tabulated(np.asarray(data["samples"], dtype=float), float(data["u0"]))
    raise ModelError(f"unknown single-site potential kind {kind!r}")


# ---------------------------------------------------------------------------
# disorder
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Uniform01:
    has_density = True

    def transform(self, u: np.ndarray) -> np.ndarray:
        return u

    @property
    def mean(self) -> float:
        return 0.5

    @property
    def density_sup(self) -> float:
        return 1.0

    def cdf(self, t):
        return np.clip(t, 0.0, 1.0)

    def describe(self) -> dict:
        return {"kind": "uniform"}


@dataclass(frozen=True)
class Bernoulli:
    p: float = 0.5
    has_density = False

    def __post_init__(self):
        if not 0 <= self.p <= 1:
            raise ModelError("Bernoulli parameter must lie in [0, 1]")

    def transform(self, u: np.ndarray) -> np.ndarray:
        return (u < self.p).astype(float)

    @property
    def mean(self) -> float:
        return self.p

    @property
    def density_sup(self) -> float:
        return math.inf

    def describe(self) -> dict:
        return {"kind": "bernoulli", "p": self.p}


@dataclass(frozen=True)
class BoundedDensity:
    """Piecewise-constant density on equal bins of [0, 1] (normalized on construction)."""

    table: tuple
    has_density = True

    def __post_init__(self):
        t = np.asarray(self.table, dtype=float)
        if t.ndim != 1 or t.size == 0 or np.any(t < 0) or not np.any(t > 0):
            raise ModelError("density table must be a non-empty non-negative vector")
        t = t / t.mean()
        object.__setattr__(self, "table", tuple(t.tolist()))

    def _edges_cdf(self):
        t = np.asarray(self.table)
        edges = np.linspace(0.0, 1.0, t.size + 1)
        cdf = np.concatenate([[0.0], np.cumsum(t) / t.size])
        cdf[-1] = 1.0
        return edges, cdf

    def transform(self, u: np.ndarray) -> np.ndarray:
        edges, cdf = self._edges_cdf()
        return np.interp(u, cdf, edges)

    def cdf(self, t):
        edges, cdf = self._edges_cdf()
        return np.interp(t, edges, cdf)

    @property
    def mean(self) -> float:
        t = np.asarray(self.table)
        mids = (np.arange(t.size) + 0.5) / t.size
        return float(np.sum(t * mids) / t.size)

    @property
    def density_sup(self) -> float:
        return float(max(self.table))

    def describe(self) -> dict:
        return {"kind": "density", "table": list(self.table)}


def distribution_from_dict(data: dict):
    kind = data.get("kind", "uniform")
    if kind == "uniform":
        return Uniform01()
    if kind == "bernoulli":
        return Bernoulli(float(data.get("p", 0.5)))
    if kind == "density":
        return BoundedDensity(tuple(data["table"]))
    raise ModelError(f"unknown disorder distribution {kind!r}")


@dataclass(frozen=True)
class DisorderSpec:
    distribution: object = field(default_factory=Uniform01)
    seed: int = 0
    realization: int = 0

    def key(self, realization: int | None = None) -> int:
        r = self.realization if realization is None else realization
        return rng.stream_key(self.seed, r, 0)

    def describe(self) -> dict:
        return {"distribution": self.distribution.describe(), "seed": self.seed, "realization": self.realization}


@dataclass(frozen=True, eq=False)
class DisorderField:
    """Couplings omega_j on a finite set of sites, sorted by site code."""

    sites: np.ndarray
    values: np.ndarray
    spec: DisorderSpec
    codes: np.ndarray = field(repr=False)

    def lookup(self, sites) -> np.ndarray:
        codes = rng.site_codes(sites)
        pos = np.searchsorted(self.codes, codes)
        pos = np.minimum(pos, self.codes.size - 1)
        found = self.codes[pos] == codes if self.codes.size else np.zeros(codes.size, bool)
        if not np.all(found):
            missing = np.atleast_2d(np.asarray(sites))[~found]
            raise ModelError(f"disorder field does not cover {len(missing)} site(s), e.g. {missing[0].tolist()}")
        return self.values[pos]

    def replace(self, values) -> "DisorderField":
        """Same sites, new couplings (used by oracles and variance reduction)."""
        values = np.asarray(values, dtype=float)
        if values.shape != self.values.shape:
            raise ModelError("replacement values must match the field's shape")
        return DisorderField(self.sites, values, self.spec, self.codes)


def sample_disorder(spec: DisorderSpec, sites, realization: int | None = None) -> DisorderField:
    sites = np.atleast_2d(np.asarray(sites, dtype=np.int64))
    if realization is not None:
        spec = DisorderSpec(spec.distribution, spec.seed, int(realization))
    codes = rng.site_codes(sites)
    order = np.argsort(codes, kind="stable")
    codes = codes[order]
    if codes.size > 1 and np.any(codes[1:] == codes[:-1]):
        keep = np.concatenate([[True], codes[1:] != codes[:-1]])
        order, codes = order[keep], codes[keep]
    u = rng.uniforms(spec.key(), codes)
    values = spec.distribution.transform(u)
    return DisorderField(sites[order], values, spec, codes)


def disorder_spec_from_dict(data: dict) -> DisorderSpec:
    return DisorderSpec(distribution_from_dict(data.get("distribution", {})), int(data.get("seed", 0)),
                        int(data.get("realization", 0)))


# ---------------------------------------------------------------------------
# assembly
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ModelParams:
    lam: float
    envelope: object = field(default_factory=lambda: PowerLaw(0.0))

    def __post_init__(self):
        if not self.lam >= 0:
            raise ModelError("coupling lam must be non-negative")

    def describe(self) -> dict:
        return {"lam": self.lam, "envelope": self.envelope.describe()}


@dataclass(frozen=True, eq=False)
class HamiltonianMatrix:
    matrix: sp.csr_matrix
    potential: np.ndarray
    domain: LatticeDomain
    params: ModelParams
    site_potential: object
    disorder: dict

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def is_tridiagonal(self) -> bool:
        return self.domain.dim == 1

    def tridiagonal(self):
        """(diagonal, off-diagonal) of a one-dimensional operator."""
        if not self.is_tridiagonal:
            raise ModelError("tridiagonal form only exists in one dimension")
        return self.matrix.diagonal(), self.matrix.diagonal(1)

    def norm_bound(self) -> float:
        """Row-sum bound on the spectral norm."""
        return float(abs(self.matrix).sum(axis=1).max())

    def describe(self) -> dict:
        return {
            "domain": self.domain.describe(),
            "params": self.params.describe(),
            "site_potential": self.site_potential.describe(),
            "disorder": self.disorder,
        }


def laplacian_1d(n: int, h: float, bc: str) -> sp.csr_matrix:
    off = np.full(n - 1, -1.0 / h**2)
    if bc == DIRICHLET:
        diag = np.full(n, 2.0 / h**2)
    else:
        diag = np.full(n, 2.0 / h**2)
        diag[0] = diag[-1] = 1.0 / h**2
        if n == 1:
            diag[0] = 0.0
    return sp.diags([off, diag, off], [-1, 0, 1], format="csr")


def laplacian(domain: LatticeDomain) -> sp.csr_matrix:
    """Nearest-neighbour -Laplacian on the padded grid (Neumann = graph Laplacian)."""
    n = domain.n_axis
    t = laplacian_1d(n, domain.h, domain.bc)
    eye = sp.identity(n, format="csr")
    total = None
    for k in range(domain.dim):
        factors = [eye] * domain.dim
        factors[k] = t
        term = factors[0]
        for f in factors[1:]:
            term = sp.kron(term, f, format="csr")
        total = term if total is None else total + term
    return total.tocsr()


def potential_on_grid(params: ModelParams, domain: LatticeDomain, field: DisorderField, u) -> np.ndarray:
    """V at every node: -lam * gamma(x) * omega_j * u(x - j) in the box, 0 in the buffer."""
    x = domain.coordinates()
    inner = domain.inner_mask()
    V = np.zeros(domain.size)
    if params.lam == 0:
        return V
    xs = x[inner]
    sites = np.floor(xs + 0.5).astype(np.int64)
    omega = field.lookup(sites)
    gamma = params.envelope(xs)
    V[inner] = -params.lam * gamma * omega * u(xs - sites)
    return V


def assemble_hamiltonian(params: ModelParams, domain: LatticeDomain, field: DisorderField, u) -> HamiltonianMatrix:
    env = params.envelope
    if isinstance(env, GeneralEnvelope):
        env.check_witness(domain.coordinates()[domain.inner_mask()])
    V = potential_on_grid(params, domain, field, u)
    H = laplacian(domain) + sp.diags(V, format="csr")
    H = H.tocsr()
    H.sort_indices()
    return HamiltonianMatrix(H, V, domain, params, u, field.spec.describe())


# ---------------------------------------------------------------------------
# containers
# ---------------------------------------------------------------------------

CONTAINER_VERSION = 1


def _save(path, meta: dict, **arrays) -> None:
    meta = dict(meta, container_version=CONTAINER_VERSION)
    with open(path, "wb") as fh:
        np.savez(fh, meta=np.array(json.dumps(meta, sort_keys=True)), **arrays)


def _load(path):
    with np.load(path, allow_pickle=False) as z:
        meta = json.loads(str(z["meta"]))
        arrays = {k: z[k] for k in z.files if k != "meta"}
    if meta.get("container_version") != CONTAINER_VERSION:
        raise ModelError(f"unsupported container version {meta.get('container_version')}")
    return meta, arrays


def save_field(path, field: DisorderField, domain: LatticeDomain | None = None) -> None:
    """npz container: arrays ``sites``, ``values``; JSON ``meta`` with seed, realization, domain."""
    meta = {"type": "disorder_field", "spec": field.spec.describe()}
    if domain is not None:
        meta["domain"] = domain.describe()
    _save(path, meta, sites=field.sites, values=field.values)


def load_field(path) -> DisorderField:
    meta, arrays = _load(path)
    spec = disorder_spec_from_dict(meta["spec"])
    sites = arrays["sites"]
    return DisorderField(sites, arrays["values"], spec, rng.site_codes(sites))


def save_hamiltonian(path, H: HamiltonianMatrix) -> None:
    """npz container with CSR arrays, node potential and a JSON descriptor."""
    m = H.matrix
    _save(path, dict(H.describe(), type="hamiltonian"), data=m.data, indices=m.indices,
          indptr=m.indptr, shape=np.array(m.shape), potential=H.potential)


def load_hamiltonian(path) -> HamiltonianMatrix:
    meta, a = _load(path)
    m = sp.csr_matrix((a["data"], a["indices"], a["indptr"]), shape=tuple(a["shape"]))
    params = ModelParams(meta["params"]["lam"], envelope_from_dict(meta["params"]["envelope"]))
    return HamiltonianMatrix(m, a["potential"], LatticeDomain.from_dict(meta["domain"]), params,
                             site_potential_from_dict(meta["site_potential"]), meta["disorder"])


def rebuild_hamiltonian(descriptor: dict) -> HamiltonianMatrix:
    """Reconstruct a realization from its descriptor (``HamiltonianMatrix.describe()``)."""
    domain = LatticeDomain.from_dict(descriptor["domain"])
    params = ModelParams(descriptor["params"]["lam"], envelope_from_dict(descriptor["params"]["envelope"]))
    u = site_potential_from_dict(descriptor["site_potential"])
    spec = disorder_spec_from_dict(descriptor["disorder"])
    field = sample_disorder(spec, domain.required_sites())
    return assemble_hamiltonian(params, domain, field, u)


DEFAULT_H = {1: 0.25, 2: 0.25, 3: 0.5}
DEFAULT_BUFFER = 8.0


def default_mesh(d: int) -> float:
    return DEFAULT_H[int(d)]


def make_hamiltonian(d: int, L: float, lam: float, envelope=None, u=None, spec: DisorderSpec | None = None,
                     realization: int = 0, h: float | None = None, bc: str = DIRICHLET, buffer: float = 0.0,
                     center=0.0) -> HamiltonianMatrix:
    """One realization on the box of side L, sampling exactly the sites the box needs."""
    envelope = PowerLaw(0.0) if envelope is None else envelope
    u = CubeIndicator() if u is None else u
    spec = DisorderSpec() if spec is None else spec
    h = default_mesh(d) if h is None else h
    domain = build_domain(d, center, L, h, bc, buffer)
    field = sample_disorder(spec, domain.required_sites(), realization)
    return assemble_hamiltonian(ModelParams(lam, envelope), domain, field, u)
