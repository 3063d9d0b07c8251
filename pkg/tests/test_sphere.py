import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats
from scipy.integrate import quad

from sphereot.exceptions import (ConfigError, DegenerateProjection, NonOrthonormalAxis,
                                 UnsupportedDimension)
from sphereot.sphere import (GOLDEN_RATIO, VmfComponent, VmfMixture, circle_coordinate,
                             circle_point, geodesic_project, icosahedron_means,
                             icosahedron_mixture, mixture_log_density,
                             mixture_log_density_grad, rotate_along_great_circle,
                             sample_mixture, sample_uniform_sphere, sample_vmf,
                             unit_vector, vmf_log_density)

E = np.eye(3)


class TestGeodesicProjection:
    def test_point_in_plane(self):
        out = geodesic_project(np.array([0.6, 0.8, 0.0]), E[:, :2])
        np.testing.assert_allclose(out, [0.6, 0.8], atol=1e-15)

    def test_orthogonal_point_raises(self):
        with pytest.raises(DegenerateProjection):
            geodesic_project(np.array([0.0, 0.0, 1.0]), E[:, :2])

    def test_normalises(self):
        out = geodesic_project(np.array([0.36, 0.48, 0.8]), E[:, :2])
        np.testing.assert_allclose(out, [0.6, 0.8], atol=1e-12)

    def test_batch_unit_norm(self, rng):
        X = sample_uniform_sphere(5, 100, rng)
        U = np.linalg.qr(rng.standard_normal((5, 2)))[0]
        P = geodesic_project(X, U)
        np.testing.assert_allclose(np.linalg.norm(P, axis=1), 1.0, atol=1e-12)

    def test_custom_eps(self):
        x = np.array([1e-8, 0.0, 1.0])
        with pytest.raises(DegenerateProjection):
            geodesic_project(x, E[:, :2], eps=1e-6)
        geodesic_project(x, E[:, :2])


class TestCircleCoordinate:
    @pytest.mark.parametrize("p, t", [((-1.0, 0.0), 0.5), ((0.0, 1.0), 0.25),
                                      ((0.0, -1.0), 0.75), ((1.0, 0.0), 0.0)])
    def test_reference_points(self, p, t):
        assert circle_coordinate(np.array(p)) == pytest.approx(t, abs=1e-15)

    def test_range(self, rng):
        t = circle_coordinate(rng.standard_normal((10000, 2)))
        assert np.all(t >= 0.0) and np.all(t < 1.0)

    @settings(max_examples=200, deadline=None)
    @given(st.floats(0.0, 1.0, exclude_max=True))
    def test_round_trip(self, t):
        back = circle_coordinate(circle_point(t))
        err = abs(back - t)
        assert min(err, 1.0 - err) < 1e-9


class TestSampling:
    def test_uniform_norms(self):
        X = sample_uniform_sphere(3, 5, 7)
        np.testing.assert_allclose(np.linalg.norm(X, axis=1), 1.0, atol=1e-9)

    def test_uniform_mean(self):
        assert np.linalg.norm(sample_uniform_sphere(3, 10000, 1).mean(axis=0)) < 0.05

    def test_uniform_circle_histogram(self):
        t = circle_coordinate(sample_uniform_sphere(2, 10000, 2))
        counts, _ = np.histogram(t, bins=10, range=(0, 1))
        assert stats.chisquare(counts).pvalue > 0.01

    def test_vmf_kappa_zero_is_uniform(self):
        X = sample_vmf(VmfComponent([0, 0, 1], 0.0), 1000, 3)
        assert np.linalg.norm(X.mean(axis=0)) < 0.1

    def test_vmf_concentration(self):
        X = sample_vmf(VmfComponent(E[2], 50.0), 1000, 4)
        assert np.mean(X @ E[2]) >= 0.95

    @pytest.mark.parametrize("kappa", [0.5, 5.0, 50.0])
    def test_vmf_mean_resultant_matches_langevin(self, kappa):
        # E<x, mu> = coth(kappa) - 1/kappa on S^2
        X = sample_vmf(VmfComponent([1, 1, 0], kappa), 20000, 5)
        mu = np.array([1, 1, 0]) / np.sqrt(2)
        expected = 1.0 / np.tanh(kappa) - 1.0 / kappa
        assert np.mean(X @ mu) == pytest.approx(expected, abs=0.01)

    def test_vmf_single(self):
        X = sample_vmf(VmfComponent([1, 2, 3], 7.0), 1, 0)
        assert X.shape == (1, 3)
        assert np.linalg.norm(X) == pytest.approx(1.0, abs=1e-12)

    def test_vmf_high_dimension(self):
        d = 50
        X = sample_vmf(VmfComponent(np.eye(d)[3], 200.0), 500, 6)
        np.testing.assert_allclose(np.linalg.norm(X, axis=1), 1.0, atol=1e-12)
        assert np.mean(X[:, 3]) > 0.8

    def test_kappa_zero_and_uniform_projection_ks(self):
        rng = np.random.default_rng(9)
        A = sample_vmf(VmfComponent([0, 0, 1], 0.0), 5000, rng)
        B = sample_uniform_sphere(3, 5000, rng)
        for v in sample_uniform_sphere(3, 5, rng):
            assert stats.ks_2samp(A @ v, B @ v).pvalue > 0.01

    def test_seed_determinism(self):
        a = sample_vmf(VmfComponent([0, 1, 0], 3.0), 50, 11)
        b = sample_vmf(VmfComponent([0, 1, 0], 3.0), 50, 11)
        assert a.tobytes() == b.tobytes()

    def test_mixture_sample(self):
        X = sample_mixture(icosahedron_mixture(50.0), 600, 1)
        assert X.shape == (600, 3)
        np.testing.assert_allclose(np.linalg.norm(X, axis=1), 1.0, atol=1e-12)


class TestDensities:
    def test_uniform_density(self):
        val = vmf_log_density(VmfComponent(E[0], 0.0), E[1])
        assert val == pytest.approx(-np.log(4 * np.pi), abs=1e-12)
        assert val == pytest.approx(-2.5310, abs=1e-4)

    def test_kappa_one(self):
        c = VmfComponent(E[0], 1.0)
        assert vmf_log_density(c, E[0]) == pytest.approx(-1.6924, abs=1e-4)
        assert vmf_log_density(c, -E[0]) == pytest.approx(-3.6924, abs=1e-4)

    @pytest.mark.parametrize("kappa", [1e-3, 0.5, 2.0, 30.0, 700.0])
    def test_normalised(self, kappa):
        # integrate over the polar angle: 2 pi int_{-1}^{1} p(w) dw = 1
        c = VmfComponent(E[2], kappa)
        lognorm = vmf_log_density(c, E[2]) - kappa
        total, _ = quad(lambda w: np.exp(lognorm + kappa * (w - 1.0) + kappa), -1, 1,
                        points=[1 - 1 / kappa] if kappa > 1 else None)
        assert 2 * np.pi * total == pytest.approx(1.0, rel=1e-6)

    def test_large_kappa_finite(self):
        assert np.isfinite(vmf_log_density(VmfComponent(E[0], 1e5), E[0]))

    def test_dimension_check(self):
        with pytest.raises(UnsupportedDimension):
            vmf_log_density(VmfComponent(np.eye(4)[0], 1.0), np.eye(4)[0])

    def test_mixture_single_and_duplicate(self):
        c = VmfComponent([1, 2, 2], 4.0)
        x = unit_vector([0.3, -0.2, 0.9])
        direct = vmf_log_density(c, x)
        assert mixture_log_density(VmfMixture((c,), [1.0]), x) == pytest.approx(direct, abs=1e-12)
        assert mixture_log_density(VmfMixture.equal([c, c]), x) == pytest.approx(direct, abs=1e-12)

    def test_icosahedron_mode_matches_direct_sum(self):
        mix = icosahedron_mixture(50.0)
        x = mix.components[0].mean
        direct = np.log(sum(w * np.exp(vmf_log_density(c, x))
                            for w, c in zip(mix.weights, mix.components)))
        assert mixture_log_density(mix, x) == pytest.approx(direct, abs=1e-6)

    def test_permutation_invariance(self, rng):
        comps = [VmfComponent(v, k) for v, k in zip(rng.standard_normal((4, 3)), [1, 5, 9, 20])]
        w = np.array([0.1, 0.2, 0.3, 0.4])
        X = sample_uniform_sphere(3, 20, rng)
        perm = [2, 0, 3, 1]
        a = mixture_log_density(VmfMixture(comps, w), X)
        b = mixture_log_density(VmfMixture([comps[i] for i in perm], w[perm]), X)
        np.testing.assert_allclose(a, b, atol=1e-12)

    def test_gradient_matches_finite_differences(self, rng):
        mix = icosahedron_mixture(5.0)
        X = sample_uniform_sphere(3, 4, rng)
        G = mixture_log_density_grad(mix, X)
        h = 1e-6
        for j in range(3):
            e = np.zeros(3)
            e[j] = h
            fd = (mixture_log_density(mix, X + e) - mixture_log_density(mix, X - e)) / (2 * h)
            np.testing.assert_allclose(G[:, j], fd, rtol=1e-6, atol=1e-8)

    def test_mixture_validation(self):
        c = VmfComponent(E[0], 1.0)
        with pytest.raises(ConfigError):
            VmfMixture((c, c), [0.5, 0.6])
        with pytest.raises(ConfigError):
            VmfMixture((c, VmfComponent(np.eye(4)[0], 1.0)), [0.5, 0.5])
        with pytest.raises(ConfigError):
            VmfComponent(E[0], -1.0)


class TestIcosahedron:
    def test_shape_and_norm(self):
        V = icosahedron_means()
        assert V.shape == (12, 3)
        np.testing.assert_allclose(np.linalg.norm(V, axis=1), 1.0, atol=1e-12)

    def test_closed_under_negation(self):
        V = icosahedron_means()
        for v in V:
            assert np.min(np.linalg.norm(V + v, axis=1)) < 1e-12

    def test_inner_products(self):
        V = icosahedron_means()
        G = V @ V.T
        off = G[~np.eye(12, dtype=bool)]
        non_antipodal = off[off > -1 + 1e-9]
        # neighbours sit at inner product 1/sqrt(5), the others at -1/sqrt(5)
        assert np.max(non_antipodal) == pytest.approx(1 / np.sqrt(5), abs=1e-9)
        assert np.min(non_antipodal) == pytest.approx(-1 / np.sqrt(5), abs=1e-9)
        assert np.sum(np.isclose(G, 1 / np.sqrt(5))) == 12 * 5

    def test_golden_ratio(self):
        assert GOLDEN_RATIO**2 == pytest.approx(GOLDEN_RATIO + 1)


class TestRotation:
    def test_identity_and_full_turn(self, rng):
        x = sample_uniform_sphere(4, 10, rng)
        ax = (np.eye(4)[0], np.eye(4)[2])
        np.testing.assert_allclose(rotate_along_great_circle(x, ax, 0.0), x, atol=1e-15)
        np.testing.assert_allclose(rotate_along_great_circle(x, ax, 2 * np.pi), x, atol=1e-9)

    def test_half_turn_in_plane(self):
        x = unit_vector([0.6, 0.8, 0.0])
        np.testing.assert_allclose(rotate_along_great_circle(x, (E[0], E[1]), np.pi), -x,
                                   atol=1e-12)

    def test_additive(self, rng):
        x = sample_uniform_sphere(3, 5, rng)
        ax = (E[0], E[1])
        a = rotate_along_great_circle(rotate_along_great_circle(x, ax, 0.3), ax, 0.9)
        np.testing.assert_allclose(a, rotate_along_great_circle(x, ax, 1.2), atol=1e-9)

    def test_fixes_orthogonal_component(self):
        np.testing.assert_allclose(rotate_along_great_circle(E[2], (E[0], E[1]), 1.0), E[2],
                                   atol=1e-15)

    def test_non_orthonormal(self):
        with pytest.raises(NonOrthonormalAxis):
            rotate_along_great_circle(E[0], (E[0], unit_vector([1, 1, 0])), 1.0)
