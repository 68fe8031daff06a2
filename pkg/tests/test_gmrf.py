import numpy as np
import pytest
import scipy.linalg

from othrtrack import gmrf
from othrtrack.errors import NotPositiveDefiniteError


class TestBuildPrecision:
    def test_benchmark_layer_entries(self):
        e = gmrf.build_precision((12, 12), 0.082, -0.0205, mean=110.0)
        Q = e.Q.toarray()
        assert np.all(np.diag(Q) == 0.082)
        off = Q[~np.eye(144, dtype=bool)]
        assert set(np.unique(off)) == {0.0, -0.0205}
        f = gmrf.build_precision((12, 12), 0.0587, -0.0147, mean=220.0)
        assert np.all(np.diag(f.Q.toarray()) == 0.0587)

    def test_scalar_field(self):
        fld = gmrf.build_precision((1, 1), 4.0, -1.0, mean=2.0)
        mean, var = gmrf.dense_marginals(fld.Q, fld.eta)
        assert var[0] == pytest.approx(0.25)
        assert mean[0] == pytest.approx(2.0)

    def test_non_pd_rejected(self):
        with pytest.raises(NotPositiveDefiniteError):
            gmrf.build_precision((4, 4), 0.05, -0.05)

    def test_potential_consistency(self):
        fld = gmrf.build_precision((8, 18), 0.082, -0.0205, mean=110.0)
        assert np.allclose(fld.eta, fld.Q @ fld.mu, rtol=1e-12, atol=1e-12)

    def test_sparsity_pattern_is_lattice(self):
        rows, cols = 5, 7
        fld = gmrf.build_precision((rows, cols), 1.0, -0.2)
        Q = fld.Q.toarray()
        for i in range(rows * cols):
            for j in range(rows * cols):
                ri, ci = divmod(i, cols)
                rj, cj = divmod(j, cols)
                adjacent = abs(ri - rj) + abs(ci - cj) == 1
                if i == j or adjacent:
                    assert Q[i, j] != 0.0
                else:
                    assert Q[i, j] == 0.0


class TestSmoothnessPrecision:
    def test_interior_rows_match_lattice_entries(self):
        fld = gmrf.build_smoothness_precision((8, 18), 0.0205, 0.0205 / 32, mean=110.0)
        Q = fld.Q.toarray()
        interior = 3 * 18 + 5
        assert Q[interior, interior] == pytest.approx(4 * 0.0205 + 0.0205 / 32)
        assert Q[interior, interior + 1] == -0.0205
        # boundary diagonal is degree-proportional
        assert Q[0, 0] == pytest.approx(2 * 0.0205 + 0.0205 / 32)

    def test_longer_correlation_than_pinned(self):
        pinned = gmrf.build_precision((8, 18), 0.082, -0.0205)
        free = gmrf.build_smoothness_precision((8, 18), 0.0205, 0.0205 / 32)
        def corr_at(fld, i, j):
            cov = np.linalg.inv(fld.Q.toarray())
            return cov[i, j] / np.sqrt(cov[i, i] * cov[j, j])
        assert corr_at(free, 0, 5) > 2 * corr_at(pinned, 0, 5)

    def test_invalid_mass(self):
        with pytest.raises(NotPositiveDefiniteError):
            gmrf.build_smoothness_precision((4, 4), 0.02, 0.0)


class TestScaling:
    def test_scale_to_marginal_std(self):
        fld = gmrf.build_precision((8, 18), 0.082, -0.0205, mean=110.0)
        scaled = gmrf.scale_to_marginal_std(fld, 11.0)
        _, var = gmrf.dense_marginals(scaled.Q, scaled.eta)
        assert np.mean(np.sqrt(var)) == pytest.approx(11.0, rel=1e-10)
        # correlation structure untouched
        c0 = np.linalg.inv(fld.Q.toarray())
        c1 = np.linalg.inv(scaled.Q.toarray())
        r0 = c0[3, 4] / np.sqrt(c0[3, 3] * c0[4, 4])
        r1 = c1[3, 4] / np.sqrt(c1[3, 3] * c1[4, 4])
        assert r0 == pytest.approx(r1, rel=1e-12)


class TestSampling:
    def test_deterministic_given_seed(self):
        fld = gmrf.build_precision((6, 6), 0.5, -0.1, mean=50.0)
        a = gmrf.sample(fld, 1234)
        b = gmrf.sample(fld, 1234)
        assert np.array_equal(a, b)
        assert not np.array_equal(a, gmrf.sample(fld, 1235))

    def test_sample_moments(self):
        fld = gmrf.build_precision((4, 4), 1.0, -0.2, mean=7.0)
        n = 20000
        draws = gmrf.sample_many(fld, n, 99)
        _, var = gmrf.dense_marginals(fld.Q, fld.eta)
        std = np.sqrt(var)
        assert np.all(np.abs(draws.mean(axis=0) - 7.0) < 4 * std / np.sqrt(n))
        cov = np.cov(draws.T)
        ref = np.linalg.inv(fld.Q.toarray())
        bound = 5 * np.sqrt((np.outer(var, var) + ref**2) / n)
        assert np.all(np.abs(cov - ref) < bound)


class TestCombine:
    def test_block_structure(self):
        e = gmrf.build_precision((3, 4), 0.9, -0.2, mean=110.0)
        f = gmrf.build_precision((3, 4), 0.7, -0.15, mean=220.0)
        joint = gmrf.combine(e, f)
        assert joint.n == e.n + f.n
        Q = joint.Q.toarray()
        assert np.all(Q[: e.n, e.n :] == 0.0)
        assert np.all(Q[e.n :, : e.n] == 0.0)
        assert np.array_equal(Q[: e.n, : e.n], e.Q.toarray())
        assert joint.node_index("E", 1) == 0
        assert joint.node_index("F", 1) == e.n
        with pytest.raises(ValueError):
            joint.node_index("G", 1)

    def test_marginals_match_per_layer(self):
        e = gmrf.build_precision((3, 4), 0.9, -0.2, mean=110.0)
        f = gmrf.build_precision((3, 4), 0.7, -0.15, mean=220.0)
        joint = gmrf.combine(e, f)
        mean, var = gmrf.dense_marginals(joint.Q, joint.eta)
        me, ve = gmrf.dense_marginals(e.Q, e.eta)
        mf, vf = gmrf.dense_marginals(f.Q, f.eta)
        assert np.allclose(mean, np.concatenate([me, mf]), rtol=1e-12)
        assert np.allclose(var, np.concatenate([ve, vf]), rtol=1e-12)


class TestDenseMarginals:
    def test_diagonal_case(self):
        Q = np.diag([2.0, 4.0, 0.5])
        eta = np.array([2.0, 2.0, 2.0])
        mean, var = gmrf.dense_marginals(Q, eta)
        assert np.allclose(mean, [1.0, 0.5, 4.0])
        assert np.allclose(var, [0.5, 0.25, 2.0])

    def test_two_node_chain_closed_form(self):
        a, b, c = 2.0, -0.5, 1.5
        Q = np.array([[a, b], [b, c]])
        eta = np.array([1.0, -1.0])
        det = a * c - b * b
        cov = np.array([[c, -b], [-b, a]]) / det
        mean, var = gmrf.dense_marginals(Q, eta)
        assert np.allclose(mean, cov @ eta, rtol=1e-14)
        assert np.allclose(var, np.diag(cov), rtol=1e-14)

    def test_factorization_routes_agree(self):
        fld = gmrf.build_precision((8, 18), 0.082, -0.0205, mean=110.0)
        mean, var = gmrf.dense_marginals(fld.Q, fld.eta)
        inv = np.linalg.inv(fld.Q.toarray())
        assert np.allclose(var, np.diag(inv), rtol=1e-10)
        assert np.allclose(mean, inv @ fld.eta, rtol=1e-10)

    def test_singular_rejected(self):
        with pytest.raises(NotPositiveDefiniteError):
            gmrf.dense_marginals(np.zeros((3, 3)), np.zeros(3))
