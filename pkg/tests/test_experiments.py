import math

import numpy as np
import pytest

from decayloc import lattice as lat
from decayloc.experiments import (
    CountSetup,
    ExperimentError,
    TrialSetup,
    WegnerSetup,
    as_witnessed,
    box_is_far,
    build_trial_functions,
    conditional_probabilities,
    count_cell,
    count_vs_alpha,
    default_centers,
    infinitude_growth,
    origin_cell_count,
    region_radius,
    trial_cell,
    trial_certificate,
    wegner_cell,
    wegner_scan,
)
from decayloc.lattice import Bernoulli, BoundedDensity, DisorderSpec, PowerFunction, PowerLaw, Uniform01
from decayloc.spectral import count_below

SQRT = PowerFunction(1.0, 0.5)


# --- counting versus alpha ---------------------------------------------------

def test_free_operator_counts_vanish():
    rec = count_vs_alpha(0.0, -0.5, [0.5, 1.0], 2, setup=CountSetup(0.0, -0.5, floor_side=16))
    assert np.all(rec.counts == 0)
    assert np.all(np.isnan(rec.alpha_log_n()))


def test_large_alpha_matches_origin_cell():
    setup = CountSetup(4.0, -0.5, buffer=4.0)
    for r in range(5):
        assert count_cell(setup, 10.0, r) == origin_cell_count(setup, 10.0, r)


def test_counts_monotone_in_alpha_and_coupling():
    setup = CountSetup(4.0, -0.5, floor_side=40, buffer=4.0)
    alphas = [0.6, 0.8, 1.0, 1.5]
    for r in range(4):
        # one common box so that only the envelope changes
        H = [lat.make_hamiltonian(1, 40, 4.0, PowerLaw(a), spec=DisorderSpec(seed=0), realization=r, buffer=4.0)
             for a in alphas]
        n = [count_below(h, -0.5) for h in H]
        assert all(x >= y for x, y in zip(n, n[1:]))
        n_weak = count_below(setup.hamiltonian(1.0, r, lam=2.0), -0.5)
        assert n_weak <= count_cell(setup, 1.0, r)


def test_box_budget_skips():
    setup = CountSetup(4.0, -0.5, max_dim=1000)
    rec = count_vs_alpha(4.0, -0.5, [0.3, 2.0], 1, setup=setup)
    assert rec.skipped == [0.3] and rec.counts[0, 0] == -1 and rec.counts[0, 1] >= 0


def test_band_and_energy_check():
    rec = count_vs_alpha(4.0, -0.5, [2.0], 1, nu0_value=0.25, setup=CountSetup(4.0, -0.5, buffer=2.0))
    assert rec.band == pytest.approx((math.log(4.0), math.log(8.0)))
    with pytest.raises(ExperimentError):
        count_vs_alpha(4.0, -0.5, [2.0], 1, E0_value=-0.4)


def test_box_side_covers_binding_region():
    setup = CountSetup(4.0, -0.5, floor_side=16)
    assert setup.box_side(1.0) == 16.0
    assert setup.box_side(0.5) == 128.0
    assert setup.box_side(0.4) >= 2 * 8 ** 2.5


# --- trial certificate -------------------------------------------------------

def test_trial_functions_structure():
    dom = lat.build_domain(1, 0.0, 128, 0.25)
    t = build_trial_functions(dom, SQRT, 2.0, cube_scale=0.5)
    assert t.N >= 2
    Phi = t.functions.toarray()
    assert np.allclose(np.linalg.norm(Phi, axis=0), 1.0, atol=1e-10)
    support = Phi != 0
    assert np.all(support.sum(axis=1) <= 1)
    x = dom.coordinates()[:, 0]
    for n, (lo, hi) in enumerate(t.blocks):
        inside = (x > lo[0]) & (x < hi[0])
        assert not np.any(Phi[~inside, n])
        assert not (lo[0] < 2.0 and hi[0] > -2.0)
        ell = hi[0] - lo[0]
        core = (x >= lo[0] + ell / 4) & (x <= hi[0] - ell / 4)
        vals = Phi[core, n]
        assert np.allclose(vals, vals[0])
        assert vals[0] * 0.25 ** -0.5 == pytest.approx(t.c0 * ell ** -0.5)
    assert np.isfinite(t.grad_const) and t.grad_const > 0


def test_free_operator_certificate_fails():
    setup = TrialSetup(as_witnessed(PowerLaw(1.0), SQRT, 2.0), 1.0, distribution=Bernoulli(0.0), cube_scale=0.5)
    cell = trial_cell(setup, 128, 0)
    assert np.all(cell["quotients"] > 0) and not cell["certified"]


def test_quotient_matches_quadratic_form():
    setup = TrialSetup(as_witnessed(PowerLaw(1.0), SQRT, 2.0), 1.0, cube_scale=0.5, seed=3)
    cell = trial_cell(setup, 64, 1)
    dom = setup.domain(64)
    t = build_trial_functions(dom, SQRT, 2.0, 0.5)
    field = lat.sample_disorder(DisorderSpec(Uniform01(), 3), dom.required_sites(), 1)
    V = lat.potential_on_grid(lat.ModelParams(1.0, PowerLaw(1.0)), dom, field, lat.CubeIndicator())
    h = dom.h
    for n in range(t.N):
        phi = np.concatenate([[0.0], t.functions[:, n].toarray().ravel(), [0.0]])
        grad = np.sum(np.diff(phi) ** 2) / h**2
        pot = np.sum(V * phi[1:-1] ** 2)
        assert cell["quotients"][n] == pytest.approx(grad + pot, rel=1e-10, abs=1e-12)


def test_certificate_soundness_small_campaign():
    table = trial_certificate(as_witnessed(PowerLaw(1.0), SQRT, 2.0), 1.0, [64, 128], 6,
                              setup=TrialSetup(None, 1.0, cube_scale=0.5))
    assert table.violations == 0
    assert any(c["certified"] for c in table.cells)
    for c in table.cells:
        if c["certified"]:
            assert c["count"] >= c["N"]
    rows = list(table.summary_rows())
    assert [r["L"] for r in rows] == [64.0, 128.0]


def test_mu_validated():
    with pytest.raises(ExperimentError):
        trial_certificate(as_witnessed(PowerLaw(1.0), SQRT, 2.0), 1.0, [64], 1, mu=0.7)


def test_witness_refused_for_fast_decay():
    with pytest.raises(lat.ModelError):
        trial_certificate(as_witnessed(PowerLaw(2.5), SQRT, 2.0), 1.0, [64], 1,
                          setup=TrialSetup(None, 1.0, cube_scale=0.5))


def test_growth_counts_increase():
    rows = infinitude_growth(PowerLaw(1.0), SQRT, 2.0, 1.0, [32, 64, 128, 256], 3,
                             setup=TrialSetup(None, 1.0, cube_scale=0.5))
    counts = np.array([r["counts"] for r in rows])
    assert np.all(np.diff(counts, axis=0) >= 0)
    assert counts[-1].mean() > counts[0].mean()


# --- Wegner scan -------------------------------------------------------------

def test_region_and_centers():
    R = region_radius(1.0, 1.0, -0.5, 1.0)
    assert R == pytest.approx(4.0)
    c = default_centers(64, 1.0, 1.0, -0.5, 1.0)
    assert c["far"] == (36.0,)
    assert box_is_far(c["far"], 64, 1.0, 1.0, -0.5, 1.0)
    assert not box_is_far(c["central"], 64, 1.0, 1.0, -0.5, 1.0)
    assert set(default_centers(64, 1.0, 1.0, -0.5, 0.0)) == {"central"}


def test_bernoulli_refused():
    with pytest.raises(ExperimentError, match="density"):
        WegnerSetup(1.0, 1.0, -0.5, -0.5, 32, distribution=Bernoulli(0.5))


def test_eta_bound_enforced():
    s = WegnerSetup(1.0, 1.0, -0.4, -0.5, 32)
    with pytest.raises(ExperimentError):
        s.check_etas([0.05, 0.2])
    assert s.check_etas([0.1]).tolist() == [0.1]


def _brute_conditional(setup, realization, site, eta, grid=4001):
    """Probability over omega_site of an eigenvalue in [E-eta, E+eta], by scanning the coupling."""
    dom = lat.build_domain(setup.d, 0.0, setup.L, 0.25, "dirichlet", setup.buffer)
    field = lat.sample_disorder(DisorderSpec(setup.distribution, setup.seed), dom.required_sites(), realization)
    k = int(np.flatnonzero(np.all(field.sites == site, axis=1))[0])
    t = (np.arange(grid) + 0.5) / grid
    hits = np.empty(grid)
    for i, w in enumerate(t):
        vals = field.values.copy()
        vals[k] = w
        H = lat.assemble_hamiltonian(lat.ModelParams(setup.lam, PowerLaw(setup.alpha)), dom, field.replace(vals),
                                     setup.u)
        ev = np.linalg.eigvalsh(H.matrix.toarray())
        hits[i] = np.sum((ev >= setup.E - eta) & (ev < setup.E + eta))
    dens = _density(setup.distribution, t)
    return float(np.mean((hits >= 1) * dens)), float(np.mean(hits * dens))


def _density(dist, t):
    if isinstance(dist, Uniform01):
        return np.ones_like(t)
    tab = np.asarray(dist.table)
    return tab[np.minimum((t * tab.size).astype(int), tab.size - 1)]


@pytest.mark.parametrize("dist", [Uniform01(), BoundedDensity((0.5, 1.0, 2.0, 0.5))])
def test_conditional_probability_against_coupling_scan(dist):
    setup = WegnerSetup(3.0, 0.0, -1.0, -1.0, 6, distribution=dist, h=0.25, buffer=1.0, seed=4)
    H = setup.hamiltonian((0.0,), 2)
    field = lat.sample_disorder(DisorderSpec(dist, 4), H.domain.required_sites(), 2)
    eta = 0.2
    p, tr = conditional_probabilities(H, lambda s: field.lookup(s[None, :])[0], setup.E, eta, dist)
    sites = np.unique(np.floor(H.domain.coordinates()[H.domain.inner_mask()] + 0.5).astype(int), axis=0)
    for k in (0, 2, 5):
        bp, bt = _brute_conditional(setup, 2, sites[k], eta)
        assert p[k] == pytest.approx(bp, abs=5e-3)
        assert tr[k] == pytest.approx(bt, abs=5e-3)


def test_conditional_estimator_is_unbiased():
    setup = WegnerSetup(1.0, 0.0, -0.3, -0.3, 16, h=0.25, buffer=2.0, seed=1)
    etas = np.array([0.05])
    cells = [wegner_cell(setup, (0.0,), r, etas) for r in range(300)]
    ind = np.mean([c["indicator"][0] for c in cells])
    cond = np.mean([c["cond_prob"][0] for c in cells])
    se = np.std([c["indicator"][0] for c in cells]) / math.sqrt(300)
    assert abs(ind - cond) <= 3 * se
    assert all(0 <= c["cond_prob"][0] <= 1 for c in cells)


def test_far_box_scan_is_empty():
    rec = wegner_scan(1.0, 1.0, -0.5, -0.5, [0.01, 0.1], 32, realizations=5, conditional=False,
                      setup=WegnerSetup(1.0, 1.0, -0.5, -0.5, 32, buffer=4.0))
    assert rec.far_empty() == {"far": True}
    assert np.all((rec.prob["central"] >= 0) & (rec.prob["central"] <= 1))
    assert len(list(rec.rows())) == 2 * len(rec.centers)
