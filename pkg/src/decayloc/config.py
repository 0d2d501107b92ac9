"""Declarative experiment configuration (YAML), validated before any work starts."""

from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from dataclasses import dataclass, field

import yaml

from . import lattice as lat

KINDS = ("ids", "e0", "count-vs-alpha", "trial", "growth", "wegner", "localize", "dynamics")


class ConfigError(ValueError):
    pass


@dataclass
class ModelBlock:
    d: int = 1
    lam: float = 1.0
    envelope: dict = field(default_factory=lambda: {"kind": "power", "alpha": 0.0})
    u: dict = field(default_factory=lambda: {"kind": "cube", "u0": 1.0, "delta": 1.0})
    disorder: dict = field(default_factory=lambda: {"kind": "uniform"})


@dataclass
class NumericsBlock:
    h: float | None = None
    L: float = 32.0
    buffer: float = lat.DEFAULT_BUFFER
    bc: str = lat.DIRICHLET
    floor_side: float = 16.0
    max_dim: int = 2_000_000
    cube_scale: float = 1.0
    window_fraction: float = 0.2
    moment_p: float = 2.0
    times: list = field(default_factory=lambda: [0.5 * k * 4 for k in range(26)])
    sule_eps: float = 0.5
    radius_prefactor: float = 1.0
    ids_L: float = 32.0


@dataclass
class CampaignBlock:
    realizations: int = 4
    seed: int = 0
    energies: list = field(default_factory=lambda: [-0.5])
    alphas: list = field(default_factory=lambda: [0.5])
    Ls: list = field(default_factory=lambda: [32.0])
    etas: list = field(default_factory=lambda: [0.01])
    boundary: list = field(default_factory=lambda: [lat.DIRICHLET, lat.NEUMANN])
    E: float = -0.5
    Eprime: float | None = None
    centers: dict | None = None
    witness: dict = field(default_factory=lambda: {"coef": 1.0, "exponent": 0.5})
    r0: float = 2.0
    mu: float | None = None
    nu0: float | None = None
    nu0_realizations: int = 16
    conditional: bool = True


@dataclass
class OutputBlock:
    directory: str = "run"
    formats: list = field(default_factory=lambda: ["csv", "json"])


@dataclass
class ExperimentConfig:
    kind: str
    model: ModelBlock = field(default_factory=ModelBlock)
    numerics: NumericsBlock = field(default_factory=NumericsBlock)
    campaign: CampaignBlock = field(default_factory=CampaignBlock)
    output: OutputBlock = field(default_factory=OutputBlock)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()

    # model objects -------------------------------------------------------
    @property
    def mesh(self) -> float:
        return self.numerics.h or lat.default_mesh(self.model.d)

    def site_potential(self):
        return lat.site_potential_from_dict(self.model.u)

    def distribution(self):
        return lat.distribution_from_dict(self.model.disorder)

    def alpha(self) -> float:
        env = self.model.envelope
        if env.get("kind", "power") != "power":
            raise ConfigError("this experiment needs a power-law envelope")
        return float(env["alpha"])

    @property
    def Eprime(self) -> float:
        c = self.campaign
        return c.E if c.Eprime is None else c.Eprime


_BLOCKS = {"model": ModelBlock, "numerics": NumericsBlock, "campaign": CampaignBlock, "output": OutputBlock}


def _build_block(cls, data, where: str):
    if data is None:
        return cls()
    if not isinstance(data, dict):
        raise ConfigError(f"{where}: expected a mapping")
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        raise ConfigError(f"{where}: unknown key(s) {unknown}")
    return cls(**data)


def _number(value, where: str, positive=False, integer=False):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(f"{where}: expected a number, got {value!r}")
    if integer and int(value) != value:
        raise ConfigError(f"{where}: expected an integer")
    if not math.isfinite(value) or (positive and not value > 0):
        raise ConfigError(f"{where}: expected a positive finite number, got {value!r}")


def validate(cfg: ExperimentConfig) -> ExperimentConfig:
    if cfg.kind not in KINDS:
        raise ConfigError(f"kind must be one of {KINDS}, got {cfg.kind!r}")
    m, n, c = cfg.model, cfg.numerics, cfg.campaign
    _number(m.d, "model.d", integer=True)
    if m.d not in (1, 2, 3):
        raise ConfigError("model.d must be 1, 2 or 3")
    _number(m.lam, "model.lam")
    if m.lam < 0:
        raise ConfigError("model.lam must be non-negative")
    try:
        lat.envelope_from_dict(m.envelope) if m.envelope.get("kind", "power") == "power" else None
        cfg.site_potential()
        cfg.distribution()
    except (lat.ModelError, KeyError, TypeError) as exc:
        raise ConfigError(f"model: {exc}") from exc
    if n.h is not None:
        _number(n.h, "numerics.h", positive=True)
    for name in ("L", "ids_L"):
        _number(getattr(n, name), f"numerics.{name}", positive=True)
    _number(n.max_dim, "numerics.max_dim", positive=True, integer=True)
    if n.bc not in (lat.DIRICHLET, lat.NEUMANN):
        raise ConfigError(f"numerics.bc must be dirichlet or neumann, got {n.bc!r}")
    if not 0 < n.window_fraction <= 1:
        raise ConfigError("numerics.window_fraction must lie in ]0, 1]")
    _number(c.realizations, "campaign.realizations", positive=True, integer=True)
    _number(c.seed, "campaign.seed", integer=True)
    if c.seed < 0 or c.seed >= 2**64:
        raise ConfigError("campaign.seed must be a 64-bit unsigned integer")
    for b in c.boundary:
        if b not in (lat.DIRICHLET, lat.NEUMANN):
            raise ConfigError(f"campaign.boundary: unknown condition {b!r}")
    kind = cfg.kind
    if kind in ("ids",) and any(e >= 0 for e in c.energies):
        raise ConfigError("campaign.energies must all be negative")
    if kind in ("count-vs-alpha", "wegner") and not c.E < 0:
        raise ConfigError("campaign.E must be negative")
    if kind == "count-vs-alpha" and any(a <= 0 for a in c.alphas):
        raise ConfigError("campaign.alphas must be positive")
    if kind == "wegner":
        Ep = cfg.Eprime
        if not c.E <= Ep < 0:
            raise ConfigError("need campaign.E <= campaign.Eprime < 0")
        bad = [e for e in c.etas if not 0 < e <= abs(Ep) / 4]
        if bad:
            raise ConfigError(f"campaign.etas {bad} violate 0 < eta <= |E'|/4 = {abs(Ep) / 4}")
        if not getattr(cfg.distribution(), "has_density", False):
            raise ConfigError("the Wegner scan needs a disorder distribution with a bounded density")
        cfg.alpha()
    if kind in ("trial", "growth"):
        if any(L <= 2 * c.r0 for L in c.Ls):
            raise ConfigError("every L must exceed 2*r0")
    if kind in ("localize", "dynamics", "count-vs-alpha") and any(a < 0 for a in c.alphas):
        raise ConfigError("campaign.alphas must be non-negative")
    return cfg


def from_dict(data: dict) -> ExperimentConfig:
    if not isinstance(data, dict):
        raise ConfigError("configuration must be a mapping")
    unknown = sorted(set(data) - {"kind", *_BLOCKS})
    if unknown:
        raise ConfigError(f"unknown top-level key(s) {unknown}")
    if "kind" not in data:
        raise ConfigError("missing 'kind'")
    blocks = {k: _build_block(cls, data.get(k), k) for k, cls in _BLOCKS.items()}
    return validate(ExperimentConfig(kind=data["kind"], **blocks))


def load_config(path) -> ExperimentConfig:
    with open(path) as fh:
        try:
            data = yaml.safe_load(fh)
        except yaml.YAMLError as exc:
            raise ConfigError(f"cannot parse {path}: {exc}") from exc
    return from_dict(data)
