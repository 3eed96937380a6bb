import numpy as np
import pytest

from flowharmony import (
    ConfigError,
    EncodedFrames,
    build_inverse_repository,
    consistency_loss,
    flat_kernel,
    flow_code,
    gaussian_kernel,
    harmonize_global,
    harmonize_local,
    sigma_from_seed,
)

from conftest import canonical_partition, random_instance, trajectory_oracle_partition


def random_encoded(rng, **kw):
    flow, occ = random_instance(rng, **kw)
    enc = flow_code(flow, occ)
    t, h, w = enc.codes.shape
    x = rng.random((t, 3, h, w))
    return x, enc


class TestHarmonizeGlobal:
    def test_all_distinct_codes_identity(self, rng):
        t, h, w = 2, 3, 3
        codes = np.arange(t * h * w, dtype=np.int64).reshape(t, h, w)
        enc = EncodedFrames(codes, n=t * h * w)
        x = rng.random((t, 2, h, w))
        out, repo = harmonize_global(x, enc)
        assert np.array_equal(out, x)
        assert repo.counts.tolist() == [1] * (t * h * w)

    def test_analytic_mean(self):
        enc = EncodedFrames(np.array([[[0, 0], [0, 1]]]), n=2)
        x = np.array([[[[1.0, 2.0], [3.0, 4.0]]]])
        out, repo = harmonize_global(x, enc)
        assert repo.slots[0, 0] == 2.0
        assert out[0, 0].tolist() == [[2.0, 2.0], [2.0, 4.0]]

    def test_idempotent_bitwise(self, rng):
        x, enc = random_encoded(rng)
        once, _ = harmonize_global(x, enc)
        twice, _ = harmonize_global(once, enc)
        assert np.array_equal(once, twice)

    def test_mass_preserved(self, rng):
        x, enc = random_encoded(rng)
        out, _ = harmonize_global(x, enc)
        for c in range(x.shape[1]):
            assert out[:, c].sum() == pytest.approx(x[:, c].sum(), rel=1e-6)

    def test_perturbation_optimality(self, rng):
        x, enc = random_encoded(rng, t=4)
        out, repo = harmonize_global(x, enc)
        base = consistency_loss(x, repo, enc)
        for _ in range(200):
            slots = repo.slots.copy()
            c = rng.integers(enc.n)
            slots[c] += rng.uniform(1e-3, 1.0) * rng.choice([-1.0, 1.0])
            perturbed = type(repo)(slots=slots, counts=repo.counts)
            assert consistency_loss(x, perturbed, enc) > base


class TestInverseRepository:
    def test_single_trajectory(self):
        enc = EncodedFrames(np.zeros((3, 1, 1), dtype=np.int64), n=1)
        inv = build_inverse_repository(enc)
        assert inv.trajectory(0).tolist() == [[0, 0, 0], [1, 0, 0], [2, 0, 0]]

    def test_all_distinct_singletons(self, rng):
        codes = np.arange(12, dtype=np.int64).reshape(3, 2, 2)
        inv = build_inverse_repository(EncodedFrames(codes, n=12))
        assert inv.max_length == 1

    def test_matches_trajectory_oracle(self, rng):
        flow, occ = random_instance(rng)
        enc = flow_code(flow, occ)
        inv = build_inverse_repository(enc)
        t, h, w = enc.codes.shape
        oracle = canonical_partition(trajectory_oracle_partition(flow, occ))
        for c in range(enc.n):
            traj = inv.trajectory(c)
            assert traj.shape[0] > 0
            assert np.all(np.diff(traj[:, 0]) >= 0)  # temporally sorted
            labels = {oracle[(f * h + y) * w + x] for f, y, x in traj}
            assert len(labels) == 1
        assert inv.offsets[-1] == t * h * w


class TestGaussianKernel:
    def test_single_tap(self):
        k = gaussian_kernel(0, 2.0)
        assert k.taps.tolist() == [1.0]
        assert k.ratio == 1.0

    def test_reference_values(self):
        k = gaussian_kernel(2, 1.0)
        np.testing.assert_allclose(k.taps, [0.27406, 0.45186, 0.27406], atol=1e-5)
        assert k.ratio == pytest.approx(1.6487, abs=1e-4)

    def test_invariants(self):
        for length, sigma in [(2, 0.3), (8, 1.2), (4, 0.21)]:
            k = gaussian_kernel(length, sigma)
            assert k.taps.sum() == pytest.approx(1.0, abs=1e-9)
            np.testing.assert_allclose(k.taps, k.taps[::-1], atol=1e-12)
            assert np.all(k.taps > 0)

    def test_sigma_seed_grid(self):
        seeds = [-1.0, -0.8, -0.6, -0.4, -0.2, 0.0]
        sigmas = [sigma_from_seed(s) for s in seeds]
        assert sigmas[0] == pytest.approx(0.21)
        assert sigmas[1] == pytest.approx(0.2251188643)
        assert sigmas[-1] == pytest.approx(1.2)
        ratios = [gaussian_kernel(4, s).ratio for s in sigmas]
        assert ratios[0] == max(ratios)  # smallest sigma, largest ratio
        assert ratios == sorted(ratios, reverse=True)

    def test_rejects_bad_parameters(self):
        with pytest.raises(ConfigError):
            gaussian_kernel(3, 1.0)
        with pytest.raises(ConfigError):
            gaussian_kernel(2, 0.0)


class TestHarmonizeLocal:
    def test_singletons_identity(self, rng):
        codes = np.arange(12, dtype=np.int64).reshape(3, 2, 2)
        enc = EncodedFrames(codes, n=12)
        inv = build_inverse_repository(enc)
        x = rng.random((3, 2, 2, 2))
        out = harmonize_local(x, inv, gaussian_kernel(2, 1.0))
        assert np.array_equal(out, x)

    def test_flat_wide_kernel_equals_global(self, rng):
        x, enc = random_encoded(rng)
        inv = build_inverse_repository(enc)
        kernel = flat_kernel(2 * inv.max_length + 2)
        local = harmonize_local(x, inv, kernel)
        global_, _ = harmonize_global(x, enc)
        np.testing.assert_allclose(local, global_, atol=1e-6)

    def test_impulse_smoothing(self):
        codes = np.zeros((5, 1, 1), dtype=np.int64)
        enc = EncodedFrames(codes, n=1)
        inv = build_inverse_repository(enc)
        x = np.zeros((5, 1, 1, 1))
        x[2] = 10.0
        out = harmonize_local(x, inv, gaussian_kernel(2, 1.0))
        seq = out[:, 0, 0, 0]
        assert seq[2] < 10.0
        assert seq[1] > 0.0 and seq[3] > 0.0
        assert seq.sum() == pytest.approx(10.0, abs=1e-9)
        k = gaussian_kernel(2, 1.0)
        np.testing.assert_allclose(
            seq, [0.0, 10 * k.taps[2], 10 * k.taps[1], 10 * k.taps[2], 0.0]
        )

    def test_local_to_global_limit(self, rng):
        x, enc = random_encoded(rng, t=5)
        inv = build_inverse_repository(enc)
        length = 2 * inv.max_length + 2
        local = harmonize_local(x, inv, gaussian_kernel(length, 1e6))
        global_, _ = harmonize_global(x, enc)
        assert np.max(np.abs(local - global_)) < 1e-5

    def test_trajectory_sum_preserved_interior(self):
        # sequence longer than the kernel with constant edges
        vals = np.array([1.0, 1.0, 3.0, 0.5, 2.0, 2.0, 2.0])
        codes = np.zeros((7, 1, 1), dtype=np.int64)
        inv = build_inverse_repository(EncodedFrames(codes, n=1))
        x = vals.reshape(7, 1, 1, 1)
        out = harmonize_local(x, inv, gaussian_kernel(2, 1.0))
        assert out.sum() == pytest.approx(vals.sum(), rel=1e-6)
