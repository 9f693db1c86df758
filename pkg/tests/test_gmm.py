"""EM mixture fitting and feature-vector assembly."""

import numpy as np
import pytest

import deepradiomics as dr
from deepradiomics.cnn import CnnWeights
from deepradiomics.errors import EmptyMask, EmptySamples, InvalidK, LengthMismatch, ShapeMismatch
from deepradiomics.gmm import em_fit, variance_floor


def two_gaussians(n=20000, mu=(0.0, 10.0), sigma=(1.0, 1.0), seed=7):
    rng = np.random.default_rng(seed)
    half = n // 2
    return np.concatenate(
        [rng.normal(mu[0], sigma[0], half), rng.normal(mu[1], sigma[1], n - half)]
    )


class TestCollectSamples:
    def test_full_mask(self):
        vol = dr.Volume3D(data=np.arange(8.0).reshape(2, 2, 2), spacing=(1, 1, 1))
        mask = dr.RoiMask(voxels=np.ones((2, 2, 2), dtype=np.uint8))
        assert sorted(dr.collect_samples(vol, mask)) == list(range(8))

    def test_single_voxel(self):
        vol = dr.Volume3D(data=np.arange(8.0).reshape(2, 2, 2), spacing=(1, 1, 1))
        vox = np.zeros((2, 2, 2), dtype=np.uint8)
        vox[1, 0, 1] = 1
        samples = dr.collect_samples(vol, dr.RoiMask(voxels=vox))
        assert samples.tolist() == [vol.data[1, 0, 1]]

    def test_checkerboard_enumeration(self):
        rng = np.random.default_rng(0)
        data = rng.random((4, 4, 4))
        x, y, z = np.mgrid[:4, :4, :4]
        vox = ((x + y + z) % 2 == 0).astype(np.uint8)
        got = dr.collect_samples(
            dr.Volume3D(data=data, spacing=(1, 1, 1)), dr.RoiMask(voxels=vox)
        )
        expected = []
        for i in range(4):
            for j in range(4):
                for k in range(4):
                    if (i + j + k) % 2 == 0:
                        expected.append(data[i, j, k])
        assert sorted(got) == sorted(expected)

    def test_errors(self):
        vol = dr.Volume3D(data=np.zeros((2, 2, 2)), spacing=(1, 1, 1))
        with pytest.raises(EmptyMask):
            dr.collect_samples(vol, dr.RoiMask(voxels=np.zeros((2, 2, 2), dtype=np.uint8)))
        with pytest.raises(ShapeMismatch):
            dr.collect_samples(vol, dr.RoiMask(voxels=np.ones((3, 2, 2), dtype=np.uint8)))


class TestEmFit:
    def test_point_mass_k1(self):
        fit = em_fit(np.full(50, 7.0), 1)
        c = fit.components[0]
        assert c.mu == 7.0
        assert c.sigma2 == 1e-12  # absolute variance floor
        assert c.omega == 1.0

    def test_k1_closed_form(self):
        x = np.array([1.0, 2.0, 3.0, 6.0])
        fit = em_fit(x, 1)
        c = fit.components[0]
        np.testing.assert_allclose(c.mu, x.mean(), rtol=1e-12)
        np.testing.assert_allclose(c.sigma2, max(x.var(), variance_floor(x)), rtol=1e-9)
        assert c.omega == 1.0
        assert fit.converged

    def test_point_mass_k2_surplus_rule(self):
        fit = em_fit(np.full(10, 3.0), 2)
        assert fit.k == 2
        assert all(c.mu == 3.0 for c in fit.components)
        assert all(c.sigma2 == 1e-12 for c in fit.components)
        weights = [c.omega for c in fit.components]
        np.testing.assert_allclose(sum(weights), 1.0, atol=1e-12)
        assert weights[0] > weights[1]
        assert weights[1] == pytest.approx(1e-6, rel=1e-3)

    def test_two_component_recovery(self):
        fit = em_fit(two_gaussians(), 2)
        mus = [c.mu for c in fit.components]
        ws = [c.omega for c in fit.components]
        assert abs(mus[0] - 0.0) < 0.1
        assert abs(mus[1] - 10.0) < 0.1
        assert abs(ws[0] - 0.5) < 0.05
        assert abs(ws[1] - 0.5) < 0.05

    def test_loglik_monotone_100_seeded_runs(self):
        for seed in range(100):
            rng = np.random.default_rng(seed)
            mu0 = rng.uniform(-5, 0)
            mu1 = mu0 + rng.uniform(1, 10)
            w0 = rng.uniform(0.2, 0.8)
            n0 = int(300 * w0)
            x = np.concatenate(
                [
                    rng.normal(mu0, rng.uniform(0.5, 2.0), n0),
                    rng.normal(mu1, rng.uniform(0.5, 2.0), 300 - n0),
                ]
            )
            fit = em_fit(x, 2)
            assert (np.diff(fit.ll_trace) >= -1e-10).all(), f"seed {seed} not monotone"

    @pytest.mark.parametrize("iters", [1, 2, 3, 5, 10])
    def test_weights_normalised_after_every_m_step(self, iters):
        x = two_gaussians(n=500, seed=3)
        fit = em_fit(x, 2, max_iter=iters)
        total = sum(c.omega for c in fit.components)
        np.testing.assert_allclose(total, 1.0, atol=1e-9)

    def test_sorted_by_ascending_mean(self):
        fit = em_fit(two_gaussians(n=1000, mu=(5.0, -5.0), seed=2), 2)
        mus = [c.mu for c in fit.components]
        assert mus == sorted(mus)

    def test_label_switching_immunity_k2(self):
        x = two_gaussians(n=800, seed=4)
        floor = variance_floor(x)
        init_a = (np.array([1.0, 8.0]), np.array([2.0, 2.0]), np.array([0.5, 0.5]))
        init_b = (np.array([8.0, 1.0]), np.array([2.0, 2.0]), np.array([0.5, 0.5]))
        fa = em_fit(x, 2, init=init_a)
        fb = em_fit(x, 2, init=init_b)
        for ca, cb in zip(fa.components, fb.components):
            assert ca == cb  # bitwise identical after sorting

    def test_label_switching_immunity_k3(self):
        rng = np.random.default_rng(5)
        x = np.concatenate([rng.normal(m, 0.5, 200) for m in (-4.0, 0.0, 4.0)])
        init = (np.array([-4.0, 0.0, 4.0]), np.ones(3), np.full(3, 1 / 3))
        perm = (init[0][::-1].copy(), init[1].copy(), init[2].copy())
        fa, fb = em_fit(x, 3, init=init), em_fit(x, 3, init=perm)
        for ca, cb in zip(fa.components, fb.components):
            assert ca.mu == pytest.approx(cb.mu, abs=1e-9)
            assert ca.sigma2 == pytest.approx(cb.sigma2, abs=1e-9)
            assert ca.omega == pytest.approx(cb.omega, abs=1e-9)

    def test_shift_equivariance(self):
        x = two_gaussians(n=2000, seed=6)
        fa = em_fit(x, 2)
        fb = em_fit(x + 100.0, 2)
        for ca, cb in zip(fa.components, fb.components):
            assert cb.mu - ca.mu == pytest.approx(100.0, abs=1e-6)
            assert cb.sigma2 == pytest.approx(ca.sigma2, abs=1e-6)
            assert cb.omega == pytest.approx(ca.omega, abs=1e-6)

    def test_determinism(self):
        x = two_gaussians(n=1500, seed=8)
        fa, fb = em_fit(x, 2, seed=1), em_fit(x, 2, seed=1)
        assert fa.components == fb.components
        assert fa.log_likelihood == fb.log_likelihood

    def test_errors(self):
        with pytest.raises(EmptySamples):
            em_fit(np.array([]), 2)
        with pytest.raises(InvalidK):
            em_fit(np.ones(5), 0)

    def test_more_components_than_distinct_values(self):
        fit = em_fit(np.array([1.0, 1.0, 2.0]), 3)
        assert fit.k == 3
        assert sum(c.omega for c in fit.components) == pytest.approx(1.0, abs=1e-12)
        assert fit.components[-1].mu == 2.0  # surplus parked at the maximum


def zero_activations():
    w0 = dr.generate_test_weights(0)
    w = CnnWeights(conv1=w0.conv1, bias1=np.zeros(10), conv2=w0.conv2, bias2=np.zeros(10))
    vol = dr.Volume3D(data=np.zeros((64, 64, 64)), spacing=(1, 1, 1))
    mask = dr.RoiMask(voxels=np.ones((64, 64, 64), dtype=np.uint8))
    return dr.forward(vol, mask, w)


@pytest.fixture(scope="module")
def acts():
    x, y, z = np.mgrid[:64, :64, :64]
    inside = ((x - 32) ** 2 + (y - 32) ** 2 + (z - 32) ** 2) <= 20**2
    rng = np.random.default_rng(11)
    vol = dr.Volume3D(data=rng.random((64, 64, 64)) * inside, spacing=(1, 1, 1))
    return dr.forward(vol, dr.RoiMask(voxels=inside.astype(np.uint8)), dr.generate_test_weights(42))


class TestFeatureVector:
    @pytest.mark.parametrize("k,length", [(1, 63), (2, 126), (3, 189)])
    def test_vector_length(self, acts, k, length):
        fv = dr.build_feature_vector(acts, k=k)
        assert len(fv) == length
        assert np.isfinite(fv.values).all()

    def test_all_zero_maps_degenerate(self):
        fv = dr.build_feature_vector(zero_activations(), k=2)
        values = fv.values.reshape(21, 2, 3)
        mus = values[:, :, 0]
        sigmas = values[:, :, 1]
        weights = values[:, :, 2]
        assert np.all(mus == 0.0)
        assert np.all(sigmas == 1e-12)
        np.testing.assert_allclose(weights.sum(axis=1), 1.0, atol=1e-12)
        assert np.all(weights[:, 1] < 2e-6)

    def test_layout_matches_component_order(self, acts):
        fv = dr.build_feature_vector(acts, k=2)
        triples = fv.values.reshape(21, 6)
        # per map: mu1 <= mu2 and weights sum to 1
        assert np.all(triples[:, 0] <= triples[:, 3])
        np.testing.assert_allclose(triples[:, 2] + triples[:, 5], 1.0, atol=1e-9)

    def test_feature_names_shape(self):
        names = dr.feature_names(k=2)
        assert len(names) == 126
        assert names[:3] == ["f000_mu1", "f000_s1", "f000_w1"]
        assert names[3] == "f000_mu2"
        assert names[-1] == "f020_w2"


class TestReduceModalities:
    def test_single_vector_mean_is_identity(self):
        v = dr.FeatureVector(values=np.arange(6.0), patient_id="p")
        out = dr.reduce_modalities([v], mode="mean")
        np.testing.assert_array_equal(out.values, v.values)
        assert out.patient_id == "p"
        assert out.modality_reduction == "mean"

    def test_identical_vectors_mean(self):
        v = dr.FeatureVector(values=np.arange(6.0))
        out = dr.reduce_modalities([v, v], mode="mean")
        np.testing.assert_array_equal(out.values, v.values)

    def test_opposite_vectors_cancel(self):
        v = np.linspace(-3, 3, 12)
        out = dr.reduce_modalities(
            [dr.FeatureVector(values=v), dr.FeatureVector(values=-v)], mode="mean"
        )
        np.testing.assert_allclose(out.values, 0.0, atol=1e-15)

    def test_concat(self):
        a = dr.FeatureVector(values=np.ones(4))
        b = dr.FeatureVector(values=np.zeros(4))
        out = dr.reduce_modalities([a, b], mode="concat")
        assert len(out) == 8
        assert out.modality_reduction == "concat"

    def test_length_mismatch(self):
        with pytest.raises(LengthMismatch):
            dr.reduce_modalities(
                [dr.FeatureVector(values=np.ones(3)), dr.FeatureVector(values=np.ones(4))]
            )
        with pytest.raises(LengthMismatch):
            dr.reduce_modalities([])
