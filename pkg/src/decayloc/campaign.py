"""Campaign execution: plan cells, run them (optionally in worker processes),
write a reproducible run directory, verify it, and export plot tables.

Run directory layout::

    manifest.json   resolved config, version, seed table, file and per-cell digests
    cells.csv       one or more rows per cell, ordered by cell index
    aggregate.csv   per-parameter summaries
    aggregate.json  the same plus scalar results (E0, nu0, fitted exponents, ...)
    partial.jsonl   completed cells of an unfinished run (removed when the run completes)
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import __version__
from . import experiments as ex
from . import ids as ids_mod
from . import lattice as lat
from . import localization as loc
from . import rng
from .config import ConfigError, ExperimentConfig, from_dict
from .spectral import count_below, ground_energy

FORMAT_VERSION = 1


class CampaignError(RuntimeError):
    def __init__(self, message: str, cell: dict | None = None):
        super().__init__(message)
        self.cell = cell

    def report(self) -> dict:
        return {"error": type(self).__name__, "message": str(self), "cell": self.cell}


# ---------------------------------------------------------------------------
# planning
# ---------------------------------------------------------------------------


def plan(cfg: ExperimentConfig) -> list:
    """Cells in execution order: dicts of parameter coordinates plus realization."""
    c = cfg.campaign
    R = range(c.realizations)
    k = cfg.kind
    if k == "ids":
        return [{"bc": b, "realization": r} for b in c.boundary for r in R]
    if k == "e0":
        return [{"realization": r} for r in R]
    if k in ("count-vs-alpha", "localize", "dynamics"):
        return [{"alpha": float(a), "realization": r} for a in c.alphas for r in R]
    if k in ("trial", "growth"):
        return [{"L": float(L), "realization": r} for L in c.Ls for r in R]
    if k == "wegner":
        return [{"center_class": name, "realization": r} for name in _centers(cfg) for r in R]
    raise ConfigError(f"unknown kind {k!r}")


def _centers(cfg) -> dict:
    c = cfg.campaign
    if c.centers:
        return {k: tuple(float(x) for x in np.atleast_1d(v)) for k, v in c.centers.items()}
    u0 = cfg.site_potential().u0
    return ex.default_centers(cfg.numerics.L, cfg.model.lam, u0, cfg.Eprime, cfg.alpha(), cfg.model.d)


def _witnessed(cfg):
    w = cfg.campaign.witness
    env = lat.PowerLaw(cfg.alpha())
    return lat.GeneralEnvelope(env, lat.PowerFunction(float(w["coef"]), float(w["exponent"])), cfg.campaign.r0)


def _grid_size(cfg, side: float, buffer: float) -> int:
    return int(round((side + 2 * buffer) / cfg.mesh)) ** cfg.model.d


# ---------------------------------------------------------------------------
# per-cell work
# ---------------------------------------------------------------------------


def _count_setup(cfg):
    n = cfg.numerics
    return ex.CountSetup(cfg.model.lam, cfg.campaign.E, cfg.model.d, cfg.site_potential(), cfg.distribution(),
                         n.h, n.buffer, n.floor_side, n.max_dim, cfg.campaign.seed)


def _box_model(cfg, L):
    return ids_mod.BoxModel(cfg.model.d, float(L), cfg.numerics.h, cfg.site_potential(), cfg.distribution(),
                            cfg.campaign.seed)


def _trial_setup(cfg):
    return ex.TrialSetup(_witnessed(cfg), cfg.model.lam, cfg.model.d, cfg.site_potential(), cfg.distribution(),
                         cfg.numerics.h, cfg.numerics.cube_scale, cfg.campaign.mu, cfg.campaign.seed)


def _wegner_setup(cfg):
    n, c = cfg.numerics, cfg.campaign
    return ex.WegnerSetup(cfg.model.lam, cfg.alpha(), cfg.Eprime, c.E, n.L, cfg.model.d, cfg.site_potential(),
                          cfg.distribution(), n.h, n.buffer, c.seed)


def _localize_setup(cfg):
    n = cfg.numerics
    u = cfg.site_potential()
    if not isinstance(cfg.distribution(), lat.Uniform01) or not isinstance(u, lat.CubeIndicator) or u.delta != 1:
        raise ConfigError("localization campaigns use uniform disorder and the covering cube potential")
    return loc.LocalizeSetup(cfg.model.lam, n.L, cfg.model.d, u.u0, n.h, n.buffer, n.window_fraction, n.moment_p,
                             tuple(n.times), n.sule_eps, 0.8, n.radius_prefactor, cfg.campaign.seed)


def _skip(cell, size, cfg):
    return [dict(cell, status="skipped", notice=f"grid size {size} exceeds max_dim {cfg.numerics.max_dim}")]


def run_cell(cfg: ExperimentConfig, cell: dict) -> list:
    """Result rows for one cell (pure function of config and cell)."""
    k = cfg.kind
    c, n = cfg.campaign, cfg.numerics
    r = cell["realization"]
    if k == "ids":
        size = _grid_size(cfg, n.L, 0.0)
        if size > n.max_dim:
            return _skip(cell, size, cfg)
        model = _box_model(cfg, n.L)
        counts = ids_mod.ids_counts(model, cfg.model.lam, c.energies, cell["bc"], r)
        return [dict(cell, status="ok", E=float(E), n=int(x)) for E, x in zip(c.energies, counts)]
    if k == "e0":
        size = _grid_size(cfg, n.L, 0.0)
        if size > n.max_dim:
            return _skip(cell, size, cfg)
        H = _box_model(cfg, n.L).hamiltonian(cfg.model.lam, r, lat.NEUMANN)
        return [dict(cell, status="ok", ground=ground_energy(H))]
    if k == "count-vs-alpha":
        setup = _count_setup(cfg)
        size = setup.grid_size(cell["alpha"])
        if size > n.max_dim:
            return _skip(cell, size, cfg)
        return [dict(cell, status="ok", box=setup.box_side(cell["alpha"]), n=ex.count_cell(setup, cell["alpha"], r))]
    if k in ("trial", "growth"):
        size = _grid_size(cfg, cell["L"], 0.0)
        if size > n.max_dim:
            return _skip(cell, size, cfg)
        res = ex.trial_cell(_trial_setup(cfg), cell["L"], r)
        return [dict(cell, status="ok", N=res["N"], max_quotient=res["max_quotient"], certified=res["certified"],
                     count=res["count"], sound=res["sound"], X_min=res["X_min"],
                     X_all_above_mu=res["X_all_above_mu"])]
    if k == "wegner":
        size = _grid_size(cfg, n.L, n.buffer)
        if size > n.max_dim:
            return _skip(cell, size, cfg)
        center = _centers(cfg)[cell["center_class"]]
        res = ex.wegner_cell(_wegner_setup(cfg), center, r, c.etas, c.conditional)
        rows = []
        for i, eta in enumerate(c.etas):
            row = dict(cell, status="ok", eta=float(eta), ground=res["ground"], hit=res["indicator"][i],
                       trace=res["trace"][i])
            if c.conditional:
                row.update(cond_prob=res["cond_prob"][i], cond_trace=res["cond_trace"][i])
            rows.append(row)
        return rows
    if k in ("localize", "dynamics"):
        size = _grid_size(cfg, n.L, n.buffer)
        if size > n.max_dim:
            return _skip(cell, size, cfg)
        res = loc.localize_cell(_localize_setup(cfg), cell["alpha"], r)
        dyn = res["dynamics"] or {"sup": 0.0, "domination_ratio": 0.0, "n_states": 0}
        if k == "dynamics":
            return [dict(cell, status="ok", sup_moment=dyn["sup"], domination_ratio=dyn["domination_ratio"],
                         n_states=dyn["n_states"])]
        rows = []
        for j, s in enumerate(res["states"]):
            row = dict(cell, status="ok", state=j, E_n=s["E"])
            for a, x in enumerate(s["center"]):
                row[f"x{a}"] = x
            row.update(m=s["m"], C=s["C"], residual=s["residual"], violations=s["violations"],
                       partition_error=s["partition_error"], center_radius=s["center_radius"],
                       predicted_radius=s["predicted_radius"], sup_moment=dyn["sup"],
                       domination_ratio=dyn["domination_ratio"])
            rows.append(row)
        if not rows:
            rows.append(dict(cell, status="empty"))
        return rows
    raise ConfigError(f"unknown kind {k!r}")


def _cell_job(args):
    cfg_dict, index, cell = args
    cfg = from_dict(cfg_dict)
    try:
        return index, run_cell(cfg, cell), None
    except Exception as exc:  # propagated with cell coordinates
        return index, None, f"{type(exc).__name__}: {exc}"


# ---------------------------------------------------------------------------
# serialization
# ---------------------------------------------------------------------------


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return str(v)


def _columns(rows) -> list:
    cols = ["cell"]
    for row in rows:
        for k in row:
            if k not in cols:
                cols.append(k)
    return cols


def _csv_text(rows, cols) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(cols)
    for row in rows:
        w.writerow(["" if row.get(c) is None else _fmt(row[c]) for c in cols])
    return buf.getvalue()


def _sha(data: bytes) -> str:
    return hashlib.sha256(data).hexdigest()


def _file_sha(path) -> str:
    with open(path, "rb") as fh:
        return _sha(fh.read())


def _parse(value: str):
    if value == "":
        return None
    if value in ("true", "false"):
        return value == "true"
    try:
        return int(value)
    except ValueError:
        pass
    try:
        return float(value)
    except ValueError:
        return value


def read_cells(run_dir) -> list:
    with open(os.path.join(run_dir, "cells.csv"), newline="") as fh:
        return [{k: _parse(v) for k, v in row.items()} for row in csv.DictReader(fh)]


def _jsonable(v):
    if isinstance(v, (np.floating,)):
        return float(v)
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.bool_,)):
        return bool(v)
    if isinstance(v, np.ndarray):
        return [_jsonable(x) for x in v.tolist()]
    if isinstance(v, dict):
        return {str(k): _jsonable(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_jsonable(x) for x in v]
    if isinstance(v, float) and not math.isfinite(v):
        return repr(v)
    return v


# ---------------------------------------------------------------------------
# aggregation
# ---------------------------------------------------------------------------


def _ok(rows):
    return [r for r in rows if r.get("status") == "ok"]


def _mean_se(x):
    x = np.asarray(x, dtype=float)
    if x.size == 0:
        return math.nan, math.nan
    se = float(x.std(ddof=1) / math.sqrt(x.size)) if x.size > 1 else math.nan
    return float(x.mean()), se


def aggregate(cfg: ExperimentConfig, rows: list) -> tuple:
    """(aggregate rows, scalar results)."""
    k, c, n = cfg.kind, cfg.campaign, cfg.numerics
    ok = _ok(rows)
    d = cfg.model.d
    out, scalars = [], {}
    if k == "ids":
        for b in c.boundary:
            for E in c.energies:
                x = [r["n"] / n.L**d for r in ok if r["bc"] == b and r["E"] == float(E)]
                m, se = _mean_se(x)
                out.append({"E": float(E), "mean": m, "stderr": se, "L": n.L, "bc": b, "realizations": len(x)})
    elif k == "e0":
        g = [r["ground"] for r in ok]
        scalars["E0"] = float(min(g)) if g else math.nan
        scalars["lower_bound"] = -cfg.model.lam * cfg.site_potential().periodic_sup(d)
        if c.E is not None and g and scalars["E0"] < c.E < 0:
            scalars["nu0"] = ids_mod.nu0(cfg.model.lam, c.E, 1e-4, n.L, c.realizations, c.seed,
                                         _box_model(cfg, n.L))
        out.append({"E0": scalars["E0"], "L": n.L, "realizations": len(g)})
    elif k == "count-vs-alpha":
        U0 = cfg.site_potential().periodic_sup(d)
        nu = c.nu0
        if nu is None:
            try:
                nu = ids_mod.nu0(cfg.model.lam, c.E, 1e-4, n.ids_L, c.nu0_realizations, c.seed,
                                 _box_model(cfg, n.ids_L))
            except ids_mod.IdsError:
                nu = None
        band = ex.theoretical_band(cfg.model.lam, c.E, U0, d, nu)
        scalars.update(nu0=nu, band_lo=band[0], band_hi=band[1])
        for a in c.alphas:
            ns = [r["n"] for r in ok if r["alpha"] == float(a)]
            vals = [a * math.log(x) for x in ns if x >= 1]
            m, se = _mean_se(vals)
            out.append({"alpha": float(a), "mean_alpha_log_n": m, "stderr": se, "realizations": len(ns),
                        "band_lo": band[0], "band_hi": band[1],
                        "skipped": any(r.get("status") == "skipped" and r["alpha"] == float(a) for r in rows)})
    elif k in ("trial", "growth"):
        F = _witnessed(cfg).witness
        for L in c.Ls:
            cs = [r for r in ok if r["L"] == float(L)]
            if not cs:
                continue
            cert = [bool(r["certified"]) for r in cs]
            p = float(np.mean(cert))
            N = cs[0]["N"]
            kappa = N / float(F(L)) ** (d / 4)
            mean_count = float(np.mean([r["count"] for r in cs]))
            out.append({"L": float(L), "N": N, "kappa": kappa, "success": p,
                        "success_se": math.sqrt(p * (1 - p) / len(cs)), "mean_count": mean_count,
                        "bound": kappa * float(F(L)) ** (d / 4), "growth_verdict": mean_count >= N,
                        "violations": sum(1 for r in cs if not r["sound"])})
    elif k == "wegner":
        centers = _centers(cfg)
        etas = np.asarray(c.etas, dtype=float)
        u0 = cfg.site_potential().u0
        for name, x in centers.items():
            far = ex.box_is_far(x, n.L, cfg.model.lam, u0, cfg.Eprime, cfg.alpha())
            for eta in etas:
                cs = [r for r in ok if r["center_class"] == name and r["eta"] == float(eta)]
                row = {"eta": float(eta), "L": n.L, "center_class": name, "far": far,
                       "prob": float(np.mean([r["hit"] for r in cs])),
                       "trace_mean": float(np.mean([r["trace"] for r in cs])),
                       "ground_min": float(min(r["ground"] for r in cs))}
                if c.conditional:
                    row["cond_prob"] = float(np.mean([r["cond_prob"] for r in cs]))
                    row["cond_trace_mean"] = float(np.mean([r["cond_trace"] for r in cs]))
                out.append(row)
        central = [r for r in out if r["center_class"] == "central"]
        key = "cond_prob" if c.conditional else "prob"
        P = np.array([r[key] for r in central])
        if P.size >= 2 and np.all(P > 0):
            s = float(np.polyfit(np.log(etas), np.log(P), 1)[0])
            scalars["s_hat"] = s
            tkey = "cond_trace_mean" if c.conditional else "trace_mean"
            scalars["Q_hat"] = max(max(r[tkey], r["trace_mean"]) / (r["eta"] ** s * n.L**d) for r in out)
    elif k in ("localize", "dynamics"):
        for a in c.alphas:
            cs = [r for r in ok if r["alpha"] == float(a)]
            if k == "localize":
                ms = [r["m"] for r in cs if r.get("m") is not None and math.isfinite(r["m"])]
                ratio = [r["center_radius"] / r["predicted_radius"] for r in cs]
                out.append({"alpha": float(a), "states": len(cs),
                            "median_mass": float(np.median(ms)) if ms else math.nan,
                            "sule_failures": sum(1 for r in cs if r["violations"] != 0),
                            "max_radius_ratio": float(max(ratio)) if ratio else 0.0})
            else:
                sups = [r["sup_moment"] for r in cs]
                out.append({"alpha": float(a), "median_sup_moment": float(np.median(sups)) if sups else math.nan,
                            "max_domination_ratio": float(max(r["domination_ratio"] for r in cs)) if cs else 0.0})
    return out, scalars


# ---------------------------------------------------------------------------
# run
# ---------------------------------------------------------------------------


def seed_table(cfg: ExperimentConfig, cells: list) -> list:
    """Per-cell disorder stream: keyed by (master seed, realization) so parameter cells share disorder."""
    s = cfg.campaign.seed
    return [{"cell": i, "realization": cell["realization"], "master_seed": s,
             "stream_key": rng.stream_key(s, cell["realization"], 0)} for i, cell in enumerate(cells)]


def _load_partial(path) -> dict:
    done = {}
    if not os.path.exists(path):
        return done
    with open(path) as fh:
        for line in fh:
            line = line.strip()
            if not line:
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError:
                break  # torn final line from a crash
            done[int(rec["cell"])] = rec["rows"]
    return done


@dataclass
class RunResult:
    directory: str
    cells: int
    computed: int
    skipped: int


def run(cfg: ExperimentConfig, directory: str | None = None, threads: int = 1, resume: bool = False,
        progress=None) -> RunResult:
    out_dir = directory or cfg.output.directory
    os.makedirs(out_dir, exist_ok=True)
    cells = plan(cfg)
    partial_path = os.path.join(out_dir, "partial.jsonl")
    if os.path.exists(os.path.join(out_dir, "manifest.json")) and not resume:
        raise CampaignError(f"{out_dir} already holds a completed run")
    done = _load_partial(partial_path) if resume else {}
    if not resume and os.path.exists(partial_path):
        os.remove(partial_path)
    cfg_dict = cfg.to_dict()
    pre_path = os.path.join(out_dir, "manifest.partial.json")
    if resume and os.path.exists(pre_path):
        with open(pre_path) as fh:
            pre = json.load(fh)
        if pre["config_sha256"] != cfg.digest():
            raise CampaignError("resume: configuration differs from the interrupted run")
    elif resume and done:
        raise CampaignError("resume: partial results without a start manifest")
    # written before any cell runs, so an interrupted run can be resumed from it
    with open(pre_path, "w") as fh:
        json.dump(_jsonable({"config": cfg_dict, "config_sha256": cfg.digest(), "version": __version__,
                             "seed_table": seed_table(cfg, cells)}), fh, sort_keys=True, indent=1)
    todo = [(cfg_dict, i, cell) for i, cell in enumerate(cells) if i not in done]
    computed = 0
    with open(partial_path, "a") as part:
        if threads > 1 and len(todo) > 1:
            pool = ProcessPoolExecutor(max_workers=threads)
            results = pool.map(_cell_job, todo, chunksize=max(1, len(todo) // (8 * threads)))
        else:
            pool = None
            results = map(_cell_job, todo)
        try:
            for index, rows, err in results:
                if err is not None:
                    raise CampaignError(err, dict(cells[index], cell=index))
                rows = [_jsonable(dict(r, cell=index)) for r in rows]
                done[index] = rows
                part.write(json.dumps({"cell": index, "rows": rows}) + "\n")
                part.flush()
                computed += 1
                if progress:
                    progress(index, len(cells))
        finally:
            if pool is not None:
                pool.shutdown(cancel_futures=True)
    rows = [r for i in range(len(cells)) for r in done[i]]
    _write_outputs(cfg, cells, rows, out_dir)
    os.remove(partial_path)
    skipped = sum(1 for r in rows if r.get("status") == "skipped")
    return RunResult(out_dir, len(cells), computed, skipped)


def _write_outputs(cfg, cells, rows, out_dir) -> None:
    cols = _columns(rows)
    text = _csv_text(rows, cols)
    with open(os.path.join(out_dir, "cells.csv"), "w", newline="") as fh:
        fh.write(text)
    digests = {}
    lines = text.splitlines()[1:]
    for row, line in zip(rows, lines):
        digests.setdefault(str(row["cell"]), hashlib.sha256())
        digests[str(row["cell"])].update((line + "\n").encode())
    agg_rows, scalars = aggregate(cfg, rows)
    with open(os.path.join(out_dir, "aggregate.csv"), "w", newline="") as fh:
        if agg_rows:
            fh.write(_csv_text([dict(r, cell="") for r in agg_rows], _columns(agg_rows)[1:]))
    with open(os.path.join(out_dir, "aggregate.json"), "w") as fh:
        json.dump(_jsonable({"kind": cfg.kind, "rows": agg_rows, "results": scalars}), fh, sort_keys=True, indent=1)
    files = {name: _file_sha(os.path.join(out_dir, name)) for name in ("cells.csv", "aggregate.csv",
                                                                        "aggregate.json")}
    manifest = {
        "format_version": FORMAT_VERSION,
        "tool": "decayloc",
        "version": __version__,
        "kind": cfg.kind,
        "config": cfg.to_dict(),
        "config_sha256": cfg.digest(),
        "columns": cols,
        "cells": [dict(cell, cell=i) for i, cell in enumerate(cells)],
        "seed_table": seed_table(cfg, cells),
        "cell_sha256": {k: v.hexdigest() for k, v in digests.items()},
        "files_sha256": files,
    }
    with open(os.path.join(out_dir, "manifest.json"), "w") as fh:
        json.dump(_jsonable(manifest), fh, sort_keys=True, indent=1)
    os.remove(os.path.join(out_dir, "manifest.partial.json"))


# ---------------------------------------------------------------------------
# verify
# ---------------------------------------------------------------------------


def load_manifest(run_dir) -> dict:
    path = os.path.join(run_dir, "manifest.json")
    if not os.path.exists(path):
        raise CampaignError(f"no manifest in {run_dir}")
    with open(path) as fh:
        return json.load(fh)


def _cell_lines(run_dir) -> dict:
    with open(os.path.join(run_dir, "cells.csv"), newline="") as fh:
        text = fh.read()
    lines = text.splitlines()[1:]
    out = {}
    for line in lines:
        cell = line.split(",", 1)[0]
        out.setdefault(cell, []).append(line)
    return out


def verify(run_dir, sample_fraction: float = 0.1) -> dict:
    """Integrity, recomputation of a sample of cells, and recorded invariants."""
    man = load_manifest(run_dir)
    cfg = from_dict(man["config"])
    checks = []

    def check(name, ok, detail=None):
        checks.append({"check": name, "pass": bool(ok), "detail": detail})

    # file integrity and tamper localization
    for name, digest in man["files_sha256"].items():
        path = os.path.join(run_dir, name)
        if not os.path.exists(path):
            check(f"file:{name}", False, "missing")
            continue
        check(f"file:{name}", _file_sha(path) == digest)
    lines = _cell_lines(run_dir)
    bad = []
    for cell, digest in man["cell_sha256"].items():
        h = hashlib.sha256()
        for line in lines.get(cell, []):
            h.update((line + "\n").encode())
        if h.hexdigest() != digest:
            bad.append(int(cell))
    extra = sorted(int(c) for c in set(lines) - set(man["cell_sha256"]) if c.lstrip("-").isdigit())
    check("cells:digests", not bad and not extra, {"tampered_cells": sorted(bad), "unexpected_cells": extra})
    rows = read_cells(run_dir)
    # recompute a deterministic sample
    cells = plan(cfg)
    m = len(cells)
    k = max(1, int(math.ceil(sample_fraction * m))) if sample_fraction > 0 else 0
    picks = sorted(np.random.default_rng(rng.stream_key(cfg.campaign.seed, 0xC0FFEE)).choice(m, k, replace=False)
                   .tolist()) if k else []
    mism = []
    cols = man["columns"]
    for i in picks:
        fresh = [_jsonable(dict(r, cell=i)) for r in run_cell(cfg, cells[i])]
        fresh_text = _csv_text(fresh, cols).splitlines()[1:]
        if fresh_text != lines.get(str(i), []):
            mism.append(i)
    check("recompute:sample", not mism, {"sampled": picks, "mismatched": mism})
    for name, ok, detail in _invariants(cfg, rows):
        check(name, ok, detail)
    return {"run": run_dir, "kind": cfg.kind, "pass": all(c["pass"] for c in checks), "checks": checks}


def _invariants(cfg, rows):
    ok = _ok(rows)
    k = cfg.kind
    if k == "ids":
        by = {}
        for r in ok:
            by.setdefault((r["bc"], r["realization"]), []).append((r["E"], r["n"]))
        mono = all(np.all(np.diff([n for _, n in sorted(v)]) >= 0) for v in by.values())
        yield "ids:monotone-in-E", mono, None
        viol = [key[1] for key in by if key[0] == lat.DIRICHLET and (lat.NEUMANN, key[1]) in by and any(
            a[1] > b[1] for a, b in zip(sorted(by[key]), sorted(by[(lat.NEUMANN, key[1])])))]
        yield "ids:dirichlet<=neumann", not viol, {"realizations": viol}
    elif k == "e0":
        bound = -cfg.model.lam * cfg.site_potential().periodic_sup(cfg.model.d)
        yield "e0:lower-bound", all(r["ground"] >= bound - 1e-10 * max(1, abs(bound)) for r in ok), None
    elif k == "count-vs-alpha":
        by = {}
        for r in ok:
            by.setdefault(r["realization"], []).append((r["alpha"], r["n"]))
        bad = [r for r, v in by.items() if np.any(np.diff([n for _, n in sorted(v)]) > 0)]
        yield "count:non-increasing-in-alpha", not bad, {"realizations": bad}
    elif k in ("trial", "growth"):
        # re-run the inertia oracle on every certified cell
        setup = _trial_setup(cfg)
        bad = []
        for r in ok:
            if r["certified"]:
                H = _trial_hamiltonian(setup, r["L"], r["realization"])
                if count_below(H, setup.threshold) < r["N"]:
                    bad.append((r["L"], r["realization"]))
        yield "trial:certified-implies-count", not bad, {"violations": bad}
    elif k == "wegner":
        yield "wegner:probabilities-in-range", all(0 <= r.get("cond_prob", 0) <= 1 and r["trace"] >= 0 for r in ok), None
        centers = _centers(cfg)
        u0 = cfg.site_potential().u0
        bad = []
        for r in ok:
            if ex.box_is_far(centers[r["center_class"]], cfg.numerics.L, cfg.model.lam, u0, cfg.Eprime, cfg.alpha()):
                if r["ground"] < cfg.Eprime / 2 or r["hit"] != 0 or r["trace"] != 0:
                    bad.append((r["center_class"], r["realization"], r["eta"]))
        yield "wegner:far-box-empty", not bad, {"violations": bad}
    elif k == "localize":
        yield "localize:partition", all(r["partition_error"] <= 1e-8 for r in ok), None
        yield "localize:domination", all(r["domination_ratio"] <= 1 + 1e-10 for r in ok), None
    elif k == "dynamics":
        yield "dynamics:domination", all(r["domination_ratio"] <= 1 + 1e-10 for r in ok), None


def _trial_hamiltonian(setup, L, realization):
    dom = setup.domain(L)
    field_ = lat.sample_disorder(lat.DisorderSpec(setup.distribution, setup.seed), dom.required_sites(), realization)
    return lat.assemble_hamiltonian(lat.ModelParams(setup.lam, setup.envelope), dom, field_, setup.u)


# ---------------------------------------------------------------------------
# export
# ---------------------------------------------------------------------------

VIEWS = {
    "alpha-log-n": ("count-vs-alpha",),
    "wegner": ("wegner",),
    "mass-vs-alpha": ("localize",),
    "ids": ("ids",),
    "certificate": ("trial", "growth"),
    "dynamics": ("dynamics", "localize"),
}


def export_plotdata(run_dir, view: str) -> list:
    man = load_manifest(run_dir)
    kind = man["kind"]
    if view not in VIEWS:
        raise CampaignError(f"unknown view {view!r}; choose from {sorted(VIEWS)}")
    if kind not in VIEWS[view]:
        raise CampaignError(f"view {view!r} does not apply to a {kind} run")
    rows = _ok(read_cells(run_dir))
    with open(os.path.join(run_dir, "aggregate.json")) as fh:
        agg = json.load(fh)
    if view == "alpha-log-n":
        res = agg["results"]
        return [{"alpha": r["alpha"], "realization": r["realization"], "n": r["n"],
                 "alpha_log_n": r["alpha"] * math.log(r["n"]) if r["n"] >= 1 else math.nan,
                 "band_lo": res["band_lo"], "band_hi": res["band_hi"]} for r in rows]
    if view == "wegner":
        keep = ("eta", "L", "center_class", "prob", "trace_mean", "cond_prob", "cond_trace_mean")
        return [{k: r[k] for k in keep if k in r} for r in agg["rows"]]
    if view == "mass-vs-alpha":
        return [{"alpha": r["alpha"], "E_n": r["E_n"], "m": r["m"], "C": r["C"],
                 "center_radius": r["center_radius"], "predicted_radius": r["predicted_radius"]} for r in rows]
    if view == "dynamics":
        seen, out = set(), []
        for r in rows:
            key = (r["alpha"], r["realization"])
            if key not in seen:
                seen.add(key)
                out.append({"alpha": r["alpha"], "realization": r["realization"], "sup_moment": r["sup_moment"],
                            "domination_ratio": r["domination_ratio"]})
        return out
    if view == "ids":
        cols = ("E", "mean", "stderr", "L", "bc", "realizations")
        return [{k: r[k] for k in cols} for r in agg["rows"]]
    return agg["rows"]


def write_table(rows: list, path: str | None = None, fmt: str = "csv") -> str:
    if fmt == "json":
        text = json.dumps(_jsonable(rows), indent=1, sort_keys=True)
    else:
        cols = []
        for r in rows:
            for k in r:
                if k not in cols:
                    cols.append(k)
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(cols)
        for r in rows:
            w.writerow(["" if r.get(c) is None else _fmt(r[c]) for c in cols])
        text = buf.getvalue()
    if path:
        with open(path, "w") as fh:
            fh.write(text)
    return text
