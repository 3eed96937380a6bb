import numpy as np
import pytest

from flowharmony import (
    FlowField,
    OcclusionMask,
    ShapeMismatchError,
    block_matching_flow,
    endpoint_error,
    flow_code,
    harmonize_global,
    horizontal_scan,
    warp_error,
)

from conftest import translating_texture


class TestEndpointError:
    def test_identical_flows(self, rng):
        f = FlowField(rng.uniform(-3, 3, (2, 4, 4, 2)))
        report = endpoint_error(f, f)
        assert report.mean_epe == 0.0
        assert report.frac_gt_1 == report.frac_gt_3 == report.frac_gt_5 == 0.0

    def test_constant_offset_345(self, rng):
        base = rng.uniform(-2, 2, (2, 4, 4, 2))
        f_a = FlowField(base)
        f_b = FlowField(base + np.array([3.0, 4.0]))
        report = endpoint_error(f_a, f_b)
        assert report.mean_epe == pytest.approx(5.0)
        assert report.frac_gt_1 == 1.0
        assert report.frac_gt_3 == 1.0
        assert report.frac_gt_5 == 0.0  # strict inequality at the boundary

    def test_fraction_monotone_and_ordering(self, rng):
        f_a = FlowField(rng.uniform(-4, 4, (3, 6, 6, 2)))
        f_b = FlowField(rng.uniform(-4, 4, (3, 6, 6, 2)))
        r = endpoint_error(f_a, f_b)
        assert r.frac_gt_1 >= r.frac_gt_3 >= r.frac_gt_5 >= 0.0

    def test_mask_excludes_pixels(self, rng):
        base = np.zeros((1, 2, 2, 2))
        other = base.copy()
        other[0, 0, 0] = [6.0, 8.0]
        mask = np.zeros((1, 2, 2), bool)
        mask[0, 0, 0] = True
        report = endpoint_error(FlowField(base), FlowField(other), OcclusionMask(mask))
        assert report.mean_epe == 0.0

    def test_metric_properties(self, rng):
        a = FlowField(rng.uniform(-3, 3, (1, 3, 3, 2)))
        b = FlowField(rng.uniform(-3, 3, (1, 3, 3, 2)))
        c = FlowField(rng.uniform(-3, 3, (1, 3, 3, 2)))
        ab = endpoint_error(a, b).mean_epe
        ba = endpoint_error(b, a).mean_epe
        assert ab == pytest.approx(ba)
        # per-pixel triangle inequality implies it for the mean
        ac = endpoint_error(a, c).mean_epe
        cb = endpoint_error(c, b).mean_epe
        assert ab <= ac + cb + 1e-12

    def test_direction_mismatch(self, rng):
        f = rng.uniform(-1, 1, (1, 2, 2, 2))
        with pytest.raises(ShapeMismatchError):
            endpoint_error(FlowField(f, "forward"), FlowField(f, "backward"))


class TestBlockMatching:
    def test_static_video_zero_flow(self, rng):
        frame = rng.random((1, 8, 8))
        video = np.stack([frame] * 3)
        flow = block_matching_flow(video, search_radius=2, patch=3)
        assert np.all(flow.flows == 0.0)

    def test_recovers_integer_translation(self):
        video, flow_gt = translating_texture(t=3, h=10, w=10, shift=1)
        est = block_matching_flow(video, search_radius=2, patch=3)
        # interior pixels (wraparound seam and borders excluded)
        interior = est.flows[:, 3:-3, 3:-3]
        gt = flow_gt.flows[:, 3:-3, 3:-3]
        assert np.array_equal(interior, gt)

    def test_noise_frames_detect_incoherence(self, rng):
        video = rng.random((2, 1, 12, 12))
        est = block_matching_flow(video, search_radius=2, patch=3)
        zero = FlowField(np.zeros_like(est.flows))
        assert endpoint_error(est, zero).mean_epe > 0.0

    def test_frame_smaller_than_patch(self, rng):
        with pytest.raises(ShapeMismatchError):
            block_matching_flow(rng.random((2, 1, 2, 2)), 1, 3)


class TestWarpError:
    def test_trajectory_constant_video_zero(self):
        video, flow = translating_texture(t=4, h=8, w=8)
        occ = OcclusionMask.none(4, 8, 8)
        enc = flow_code(flow, occ)
        harmonized, _ = harmonize_global(video, enc)
        report = warp_error(harmonized, flow, occ)
        assert report.mean_abs_error == 0.0

    def test_random_video_positive(self, rng):
        video = rng.random((3, 1, 6, 6))
        flow = FlowField(np.zeros((2, 6, 6, 2)))
        occ = OcclusionMask.none(3, 6, 6)
        assert warp_error(video, flow, occ).mean_abs_error > 0.0

    def test_out_of_bounds_excluded(self):
        video = np.zeros((2, 1, 2, 2))
        flows = np.zeros((1, 2, 2, 2))
        flows[0, :, :, 1] = 5.0  # every correspondent leaves the frame
        report = warp_error(video, FlowField(flows), OcclusionMask.none(2, 2, 2))
        assert report.included == 0
        assert report.excluded == 4
        assert report.mean_abs_error == 0.0

    def test_harmonization_never_increases(self, rng):
        video, flow = translating_texture(t=4, h=8, w=8)
        occ = OcclusionMask.none(4, 8, 8)
        enc = flow_code(flow, occ)
        noisy = video + 0.2 * rng.standard_normal(video.shape)
        harmonized, _ = harmonize_global(noisy, enc)
        assert (warp_error(harmonized, flow, occ).mean_abs_error
                <= warp_error(noisy, flow, occ).mean_abs_error + 1e-12)


class TestHorizontalScan:
    def test_static_video_stripe_free(self, rng):
        frame = rng.random((1, 1, 6, 30))
        video = np.repeat(frame, 4, axis=0)
        scan = horizontal_scan(video, column=5, width=5, shift_per_frame=0)
        for i in range(1, 4):
            assert np.array_equal(scan[..., :5], scan[..., 5 * i : 5 * (i + 1)])

    def test_frame_index_bands(self):
        video = np.zeros((3, 1, 4, 10))
        for i in range(3):
            video[i] = i
        scan = horizontal_scan(video, column=2, width=2)
        assert np.unique(scan).tolist() == [0.0, 1.0, 2.0]
        assert np.all(scan[..., 2:4] == 1.0)

    def test_output_width(self, rng):
        video = rng.random((5, 3, 8, 120))
        scan = horizontal_scan(video, column=100, width=20)
        assert scan.shape == (3, 8, 100)

    def test_shift_and_clamp(self, rng):
        video = rng.random((4, 1, 4, 12))
        scan = horizontal_scan(video, column=3, width=4, shift_per_frame=2)
        np.testing.assert_array_equal(scan[..., :4], video[0, :, :, 3:7])
        np.testing.assert_array_equal(scan[..., 4:8], video[1, :, :, 1:5])
        np.testing.assert_array_equal(scan[..., 8:12], video[2, :, :, 0:4])  # clamped
        np.testing.assert_array_equal(scan[..., 12:], video[3, :, :, 0:4])

    def test_out_of_range_column(self, rng):
        with pytest.raises(ShapeMismatchError):
            horizontal_scan(rng.random((2, 1, 4, 10)), column=8, width=5)
