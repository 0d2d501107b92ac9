import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st

from decayloc import lattice as lat
from decayloc.lattice import (
    Bernoulli,
    BoundedDensity,
    CubeIndicator,
    DisorderSpec,
    GeneralEnvelope,
    ModelError,
    ModelParams,
    PowerFunction,
    PowerLaw,
    Tabulated,
    Uniform01,
    assemble_hamiltonian,
    build_domain,
    envelope_value,
    make_hamiltonian,
    sample_disorder,
)


# --- domains -----------------------------------------------------------------

def test_chain_of_four():
    dom = build_domain(1, 0.0, 4, 1.0, lat.DIRICHLET)
    assert dom.shape == (4,)
    assert np.allclose(dom.coordinates().ravel(), [-1.5, -0.5, 0.5, 1.5])


def test_neumann_square():
    dom = build_domain(2, 0.0, 3, 1.0, lat.NEUMANN)
    assert dom.size == 9


def test_non_integral_ratio_rejected():
    with pytest.raises(ModelError, match="integer"):
        build_domain(1, 0.0, 4, 0.3)


@pytest.mark.parametrize("d", [0, 4])
def test_dimension_range(d):
    with pytest.raises(ModelError):
        build_domain(d, 0.0, 4, 1.0)


@given(st.integers(1, 3), st.integers(1, 6), st.sampled_from([0.25, 0.5, 1.0]),
       st.floats(-5, 5, allow_nan=False))
@settings(max_examples=40, deadline=None)
def test_index_coordinate_round_trip(d, L, h, c):
    dom = build_domain(d, c, L, h, buffer=h)
    idx = np.arange(dom.size)
    assert np.array_equal(dom.coordinate_to_index(dom.coordinates()), idx)
    assert np.array_equal(dom.flat_index(dom.multi_index(idx)), idx)


def test_required_sites_cover_box():
    dom = build_domain(2, (0.3, -1.2), 4, 0.25, buffer=1.0)
    sites = dom.required_sites()
    assert len(sites) == 25
    inner = dom.coordinates()[dom.inner_mask()]
    assert inner.shape[0] == 16 * 16


# --- envelopes ---------------------------------------------------------------

def test_envelope_examples():
    assert envelope_value(PowerLaw(3.7), [0.0, 0.0]) == 1.0
    assert envelope_value(PowerLaw(1.0), [1.0, 1.0, 1.0]) == pytest.approx(0.5)
    assert envelope_value(PowerLaw(0.0), [40.0]) == 1.0


def test_envelope_monotone():
    x = np.array([[0.5], [1.0], [3.0], [10.0]])
    alphas = [0.1, 0.5, 1.0, 2.0]
    vals = np.array([envelope_value(PowerLaw(a), x) for a in alphas])
    assert np.all(np.diff(vals, axis=0) < 0)
    assert np.all(np.diff(vals, axis=1) < 0)
    assert np.all((vals > 0) & (vals <= 1))


def test_witness_violation_named():
    env = GeneralEnvelope(PowerLaw(2.0), PowerFunction(1.0, 0.5), r0=1.0)
    with pytest.raises(ModelError, match="witness violated at x="):
        env.check_witness([[3.0]])
    GeneralEnvelope(PowerLaw(1.0), PowerFunction(1.0, 0.5), r0=1.0).check_witness(np.linspace(-50, 50, 101)[:, None])


def test_witness_checked_at_assembly():
    env = GeneralEnvelope(PowerLaw(2.5), PowerFunction(1.0, 0.5), r0=2.0)
    with pytest.raises(ModelError):
        make_hamiltonian(1, 16, 1.0, env)


# --- single-site potentials --------------------------------------------------

def test_cube_indicator():
    u = CubeIndicator(2.0, 0.5)
    y = np.array([[-0.3], [-0.25], [0.2], [0.25]])
    assert u(y).tolist() == [0.0, 2.0, 2.0, 0.0]
    assert u.integral(2) == pytest.approx(0.5)
    assert CubeIndicator(1.5).periodic_sup(3) == 1.5


def test_tabulated_bounds():
    with pytest.raises(ModelError):
        Tabulated(np.array([0.1, 2.0]), 1.0)
    t = Tabulated(np.array([[0.0, 1.0], [0.5, 0.0]]), 1.0)
    assert t(np.array([[-0.4, 0.4]]))[0] == 1.0
    assert t.integral(2) == pytest.approx(0.375)


# --- disorder ----------------------------------------------------------------

def test_degenerate_bernoulli():
    sites = np.arange(-20, 20)[:, None]
    assert np.all(sample_disorder(DisorderSpec(Bernoulli(1.0), 3), sites).values == 1.0)
    assert np.all(sample_disorder(DisorderSpec(Bernoulli(0.0), 3), sites).values == 0.0)


def test_uniform_mean_clt():
    n = 10**6
    sites = np.stack([np.arange(n) % 1000, np.arange(n) // 1000], axis=1)
    vals = sample_disorder(DisorderSpec(Uniform01(), 11), sites).values
    assert vals.min() >= 0 and vals.max() <= 1
    assert abs(vals.mean() - 0.5) < 3 / np.sqrt(12 * n)


def test_sampling_is_pointwise():
    spec = DisorderSpec(Uniform01(), 5)
    big = sample_disorder(spec, np.arange(-30, 30)[:, None], realization=2)
    small = sample_disorder(spec, np.array([[7], [-3]]), realization=2)
    assert np.array_equal(big.lookup([[7], [-3]]), small.lookup([[7], [-3]]))
    other = sample_disorder(spec, np.array([[7], [-3]]), realization=3)
    assert not np.array_equal(other.values, small.values)


def test_bounded_density_distribution():
    dist = BoundedDensity((1.0, 3.0))
    vals = sample_disorder(DisorderSpec(dist, 1), np.arange(200000)[:, None]).values
    assert np.mean(vals > 0.5) == pytest.approx(0.75, abs=0.01)
    assert dist.mean == pytest.approx(0.625)
    assert dist.density_sup == pytest.approx(1.5)


def test_missing_sites_rejected():
    dom = build_domain(1, 0.0, 8, 0.5)
    field = sample_disorder(DisorderSpec(), np.arange(-2, 3)[:, None])
    with pytest.raises(ModelError, match="does not cover"):
        assemble_hamiltonian(ModelParams(1.0), dom, field, CubeIndicator())


# --- assembly ----------------------------------------------------------------

def test_free_chain_spectrum():
    H = make_hamiltonian(1, 4, 1.0, spec=DisorderSpec(Bernoulli(0.0)), h=1.0)
    ev = np.linalg.eigvalsh(H.matrix.toarray())
    k = np.arange(1, 5)
    assert np.allclose(ev, 2 - 2 * np.cos(k * np.pi / 5), atol=1e-14)


def test_free_field_is_laplacian():
    H = make_hamiltonian(2, 4, 3.0, spec=DisorderSpec(Bernoulli(0.0)), h=0.5, bc=lat.NEUMANN)
    assert (H.matrix != lat.laplacian(H.domain)).nnz == 0


def test_full_coupling_diagonal():
    d, h = 2, 0.5
    H = make_hamiltonian(d, 4, 1.0, spec=DisorderSpec(Bernoulli(1.0)), h=h)
    diag = H.matrix.diagonal().reshape(H.domain.shape)
    assert np.allclose(diag[1:-1, 1:-1], 2 * d / h**2 - 1)


def test_matrix_invariants():
    for d, bc in [(1, lat.DIRICHLET), (2, lat.NEUMANN), (3, lat.DIRICHLET)]:
        h = 0.5
        H = make_hamiltonian(d, 4, 2.5, PowerLaw(0.7), spec=DisorderSpec(seed=4), h=h, bc=bc, buffer=1.0)
        M = H.matrix
        assert (M != M.T).nnz == 0
        assert np.all(M.diagonal() >= -2.5 * 1.0 - 1e-12)
        if bc == lat.DIRICHLET:
            assert np.all(M.diagonal() >= 2 * d / h**2 - 2.5)
        off = sp.triu(M, k=1).tocoo()
        assert np.all(off.data == -1 / h**2)
        mi = H.domain.multi_index(off.row)
        mj = H.domain.multi_index(off.col)
        assert np.all(np.abs(mi - mj).sum(axis=1) == 1)
        assert H.potential.max() <= 0 and H.potential.min() >= -2.5


def test_buffer_is_potential_free():
    H = make_hamiltonian(1, 4, 1.0, spec=DisorderSpec(Bernoulli(1.0)), h=0.5, buffer=2.0)
    inner = H.domain.inner_mask()
    assert np.all(H.potential[~inner] == 0) and np.all(H.potential[inner] == -1)


def test_assembly_deterministic():
    a = make_hamiltonian(2, 6, 1.3, PowerLaw(0.4), spec=DisorderSpec(seed=9), realization=1)
    b = make_hamiltonian(2, 6, 1.3, PowerLaw(0.4), spec=DisorderSpec(seed=9), realization=1)
    for name in ("data", "indices", "indptr"):
        assert np.array_equal(getattr(a.matrix, name), getattr(b.matrix, name))


def test_zero_exponent_equals_constant_envelope():
    class One:
        def __call__(self, x):
            return np.ones(np.atleast_2d(x).shape[0])

        def describe(self):
            return {"kind": "one"}

    dom = build_domain(2, 0.0, 6, 0.5)
    field = sample_disorder(DisorderSpec(seed=2), dom.required_sites())
    a = assemble_hamiltonian(ModelParams(1.7, PowerLaw(0.0)), dom, field, CubeIndicator())
    b = assemble_hamiltonian(ModelParams(1.7, One()), dom, field, CubeIndicator())
    assert np.array_equal(a.matrix.toarray(), b.matrix.toarray())


def test_larger_exponent_raises_operator(rng):
    dom = build_domain(2, 0.0, 8, 0.5)
    field = sample_disorder(DisorderSpec(seed=1), dom.required_sites())
    mats = [assemble_hamiltonian(ModelParams(2.0, PowerLaw(a)), dom, field, CubeIndicator()).matrix
            for a in (0.0, 0.3, 1.0)]
    for lo, hi in zip(mats, mats[1:]):
        D = hi - lo
        for _ in range(20):
            v = rng.standard_normal(dom.size)
            assert v @ (D @ v) >= -1e-12


def test_refinement_sanity():
    def ground(h):
        H = make_hamiltonian(1, 4, 1.0, spec=DisorderSpec(Bernoulli(1.0)), h=h, buffer=4.0)
        return np.linalg.eigvalsh(H.matrix.toarray())[0]

    g1, g2 = ground(0.25), ground(0.125)
    assert abs(g1 - g2) <= 0.05 * abs(g2)


# --- containers --------------------------------------------------------------

def test_field_container_round_trip(tmp_path):
    dom = build_domain(2, 0.0, 4, 0.5)
    field = sample_disorder(DisorderSpec(BoundedDensity((1, 2, 3)), 77, 5), dom.required_sites())
    lat.save_field(tmp_path / "f.npz", field, dom)
    back = lat.load_field(tmp_path / "f.npz")
    assert np.array_equal(back.values, field.values)
    assert back.spec.describe() == field.spec.describe()


def test_hamiltonian_container_and_rebuild(tmp_path):
    H = make_hamiltonian(2, 4, 1.5, PowerLaw(0.5), spec=DisorderSpec(seed=3), realization=6, h=0.5, buffer=1.0)
    lat.save_hamiltonian(tmp_path / "h.npz", H)
    back = lat.load_hamiltonian(tmp_path / "h.npz")
    assert (back.matrix != H.matrix).nnz == 0
    again = lat.rebuild_hamiltonian(H.describe())
    assert (again.matrix != H.matrix).nnz == 0
