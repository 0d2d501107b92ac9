import json

import numpy as np
import pytest

from decayloc import lattice as lat
from decayloc.lattice import Bernoulli, CubeIndicator, DisorderSpec, ModelParams, build_domain, sample_disorder
from decayloc.localization import (
    LocalizationError,
    LocalizeSetup,
    analyze_eigenvector,
    center_radius_prediction,
    cube_masses,
    decay_mass_fit,
    dynamics_moment,
    eigenfunction_correlator,
    localization_campaign,
    localization_center,
    origin_state,
    profiles_to_csv,
)
from decayloc.spectral import SpectralSummary, lowest_eigenpairs


def single_impurity(site, lam, L=21, h=0.25, buffer=0.0):
    dom = build_domain(1, 0.0, L, h, buffer=buffer)
    field = sample_disorder(DisorderSpec(Bernoulli(0.0)), dom.required_sites())
    vals = np.where(np.all(field.sites == site, axis=1), 1.0, 0.0)
    return lat.assemble_hamiltonian(ModelParams(lam), dom, field.replace(vals), CubeIndicator())


def summary_from(w, V, window=(-10.0, 0.0), complete=True):
    return SpectralSummary(window[1], len(w), float(w[0]) if len(w) else 0.0, np.asarray(w, float), V, "dense",
                           complete, window)


# --- centres -----------------------------------------------------------------

def test_center_of_single_cube_vector():
    dom = build_domain(2, 0.0, 6, 0.5)
    v = np.where(np.all(dom.node_sites() == (1, -2), axis=1), 1.0, 0.0)
    v /= np.linalg.norm(v)
    assert localization_center(v, dom) == (1, -2)


def test_center_tie_break():
    dom = build_domain(1, 0.0, 10, 0.5)
    s = dom.node_sites()[:, 0]
    v = np.where((s == 2) | (s == -2), 1.0, 0.0)
    assert localization_center(v / np.linalg.norm(v), dom) == (-2,)


def test_center_of_deep_impurity():
    H = single_impurity(3, 40.0)
    vec = np.linalg.eigh(H.matrix.toarray())[1][:, 0]
    assert localization_center(vec, H.domain) == (3,)


def test_partition_identity():
    H = lat.make_hamiltonian(2, 8, 6.0, spec=DisorderSpec(seed=1), h=0.5)
    w, V = np.linalg.eigh(H.matrix.toarray())
    for j in range(5):
        _, m = cube_masses(V[:, j], H.domain)
        assert abs(np.sum(m**2) - 1) < 1e-8


# --- decay fit ---------------------------------------------------------------

def test_synthetic_exponential_fit():
    x = np.arange(-20, 21)[:, None]
    fit = decay_mass_fit(x, np.exp(-0.7 * np.abs(x[:, 0])), (0,))
    assert fit.m == pytest.approx(0.7, abs=1e-6) and fit.C == pytest.approx(1.0, rel=1e-6)
    assert fit.localized


def test_flat_profile_not_localized():
    x = np.arange(-20, 21)[:, None]
    fit = decay_mass_fit(x, np.ones(41), (0,))
    assert abs(fit.m) < 1e-10 and not fit.localized


def test_too_few_points_refused():
    x = np.arange(-4, 5)[:, None]
    fit = decay_mass_fit(x, np.exp(-np.abs(x[:, 0])), (0,))
    assert not fit.fitted and fit.n_points < 5


def test_floor_exclusions_counted():
    x = np.arange(-20, 21)[:, None]
    m = np.exp(-0.7 * np.abs(x[:, 0]))
    m[np.abs(x[:, 0]) > 10] = 0.0
    fit = decay_mass_fit(x, m, (0,))
    assert fit.n_floor_excluded == 16 and fit.m == pytest.approx(0.7, abs=1e-6)


def test_impurity_ground_state_mass_matches_dense():
    H = single_impurity(0, 8.0, L=31, buffer=4.0)
    dense = np.linalg.eigh(H.matrix.toarray())[1][:, 0]
    s = lowest_eigenpairs(H, k=1)
    a = analyze_eigenvector(dense, 0.0, H.domain)
    b = analyze_eigenvector(s.vectors[:, 0], s.energies[0], H.domain)
    assert a.fit.localized and b.fit.m == pytest.approx(a.fit.m, rel=0.1)
    # the bound state decays like exp(-sqrt(|E|) |x|) outside the well
    assert a.fit.m == pytest.approx(np.sqrt(-s.energies[0]), rel=0.1)
    assert b.sule_ok


def test_profiles_csv(tmp_path):
    H = single_impurity(0, 8.0, L=31)
    w, V = np.linalg.eigh(H.matrix.toarray())
    profiles_to_csv([analyze_eigenvector(V[:, 0], w[0], H.domain)], tmp_path / "p.csv")
    head = (tmp_path / "p.csv").read_text().splitlines()[0]
    assert head == "E_n,x0,m,C,residual,n_fit,sule"


# --- centre radius -----------------------------------------------------------

def test_center_radius_examples():
    assert center_radius_prediction(1.0, 1.0, 2.0, -4.0) == 1.0
    assert center_radius_prediction(1.0, 1.0, 1.0, -0.5) == pytest.approx(4.0)
    assert center_radius_prediction(0.5, 1.0, 1.0, -0.5) == pytest.approx(16.0)
    assert center_radius_prediction(0.0, 1.0, 1.0, -0.5) == pytest.approx(2.0)
    assert center_radius_prediction(2.0, 1.0, 1.0, -0.5) == pytest.approx(2.0)
    assert center_radius_prediction(1.0, 1.0, 1.0, -0.5, prefactor=3.0) == pytest.approx(12.0)
    with pytest.raises(LocalizationError):
        center_radius_prediction(1.0, 1.0, 1.0, 0.1)


# --- dynamics ----------------------------------------------------------------

def test_empty_interval():
    dom = build_domain(1, 0.0, 8, 0.5)
    s = summary_from([], np.zeros((dom.size, 0)))
    rep = dynamics_moment(s, dom)
    assert np.all(rep.moments == 0) and rep.n_states == 0
    _, Q = eigenfunction_correlator(s, dom)
    assert np.all(Q == 0)


def test_single_pair_is_stationary():
    H = single_impurity(0, 8.0, L=16)
    w, V = np.linalg.eigh(H.matrix.toarray())
    s = summary_from(w[:1], V[:, :1])
    rep = dynamics_moment(s, H.domain)
    assert np.allclose(rep.moments, rep.moments[0], rtol=1e-12)
    sites, Q = eigenfunction_correlator(s, H.domain)
    _, m = cube_masses(V[:, 0], H.domain)
    assert np.allclose(Q, m * m[np.flatnonzero(sites[:, 0] == 0)[0]])
    assert rep.Q_fit.m == pytest.approx(analyze_eigenvector(V[:, 0], w[0], H.domain).fit.m, rel=1e-6)


def test_two_level_oscillation():
    dom = build_domain(1, 0.0, 8, 0.5)
    rng = np.random.default_rng(3)
    V, _ = np.linalg.qr(rng.standard_normal((dom.size, 2)))
    E = np.array([-1.3, -0.4])
    psi0 = origin_state(dom)
    c = V.T @ psi0
    weight = 1.0 + dom.coordinates()[:, 0] ** 2
    A = (V * weight[:, None]).T @ V
    t = np.linspace(0, 20, 41)
    expected = c[0] ** 2 * A[0, 0] + c[1] ** 2 * A[1, 1] + 2 * c[0] * c[1] * A[0, 1] * np.cos((E[1] - E[0]) * t)
    rep = dynamics_moment(summary_from(E, V), dom, p=2.0, times=t)
    assert np.allclose(rep.moments, expected, rtol=1e-12, atol=1e-14)


def test_correlator_dominates_kernel():
    H = lat.make_hamiltonian(1, 32, 8.0, spec=DisorderSpec(seed=2), h=0.25, buffer=4.0)
    s = lowest_eigenpairs(H, window=(-20.0, -0.5))
    rep = dynamics_moment(s, H.domain, times=np.linspace(0, 100, 51))
    assert rep.n_states > 1 and rep.domination_ok
    assert np.all(rep.Q >= 0) and np.all(rep.moments >= 0)
    json.loads(rep.to_json())


def test_incomplete_basis_refused():
    dom = build_domain(1, 0.0, 8, 0.5)
    s = summary_from([-1.0], np.eye(dom.size)[:, :1], complete=False)
    with pytest.raises(LocalizationError, match="incomplete"):
        dynamics_moment(s, dom)


def test_campaign_smoke():
    setup = LocalizeSetup(L=32, buffer=4.0)
    camp = localization_campaign([0.0, 1.0], 2, setup)
    assert len(camp.cells) == 4
    for a in (0.0, 1.0):
        assert camp.median_mass(a) > 0
    assert camp.max_domination_ratio() <= 1 + 1e-10
    for c in camp.cells:
        assert all(s["partition_error"] < 1e-8 for s in c["states"])
