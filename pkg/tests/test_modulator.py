"""Lightness flicker embedding."""
from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from sklearn.base import clone

from conftest import random_srgb
from ipt.imaging import ColorSpace, ImagePlane, ParameterError, ShapeError, lightness
from ipt.modulator import ModulationConfig, TagModulator, modulate_frame, modulate_lightness, modulate_stream


def _mask(rng, h, w):
    return rng.integers(-1, 2, size=(h, w)).astype(np.int8)


class TestLightnessOffsets:
    def test_unclamped_pair(self):
        out = modulate_lightness(np.array([[128.0]]), np.array([[1]]), 4.0, 2)
        assert out[:, 0, 0].tolist() == [132.0, 124.0]

    def test_clamp_before_flip(self):
        out = modulate_lightness(np.array([[254.0]]), np.array([[1]]), 4.0, 2)
        assert out[:, 0, 0].tolist() == [255.0, 250.0]

    def test_negative_phase(self):
        out = modulate_lightness(np.array([[100.0]]), np.array([[1]]), 4.0, 2, phase=-1)
        assert out[:, 0, 0].tolist() == [96.0, 104.0]

    def test_black_cells_get_opposite_sign(self):
        out = modulate_lightness(np.array([[100.0, 100.0, 100.0]]), np.array([[1, -1, 0]]), 4.0, 2)
        assert out[0, 0].tolist() == [104.0, 96.0, 100.0]

    def test_zero_delta_copies(self, rng):
        L = rng.uniform(0, 255, (5, 6))
        out = modulate_lightness(L, _mask(rng, 5, 6), 0.0, 4)
        for plane in out:
            np.testing.assert_array_equal(plane, L)

    @given(
        arrays(np.float32, (6, 7), elements=st.floats(0, 255, width=32)),
        arrays(np.int8, (6, 7), elements=st.sampled_from([-1, 0, 1])),
        st.sampled_from([1.0, 2.0, 4.0, 8.0]),
        st.sampled_from([2, 4, 6]),
    )
    def test_anti_symmetry_where_unclamped(self, L, mask, delta, n):
        L = L.astype(np.float64)
        out = modulate_lightness(L, mask, delta, n)
        free = (L - delta >= 0) & (L + delta <= 255)
        for k in range(0, n, 2):
            a, b = out[k], out[k + 1]
            np.testing.assert_array_equal(((a + b) / 2)[free], L[free])
            np.testing.assert_array_equal((a - b)[free], (2 * delta * mask)[free])

    @given(arrays(np.float32, (4, 4), elements=st.floats(0, 255, width=32)), st.sampled_from([2, 4]))
    def test_window_mean_unchanged_where_unclamped(self, L, n):
        L = L.astype(np.float64)
        mask = np.ones((4, 4), dtype=np.int8)
        out = modulate_lightness(L, mask, 4.0, n)
        free = (L >= 4) & (L <= 251)
        np.testing.assert_array_equal(out.mean(axis=0)[free], L[free])

    def test_output_range(self, rng):
        L = rng.uniform(0, 255, (20, 20))
        out = modulate_lightness(L, _mask(rng, 20, 20), 30.0, 2)
        assert out.min() >= 0 and out.max() <= 255


class TestConfig:
    @pytest.mark.parametrize("fps", [(30, 45), (30, 30), (30, 90), (25, 60)])
    def test_bad_ratio(self, fps):
        with pytest.raises(ParameterError):
            ModulationConfig(np.zeros((2, 2)), input_fps=fps[0], output_fps=fps[1])

    def test_negative_delta(self):
        with pytest.raises(ParameterError):
            ModulationConfig(np.zeros((2, 2)), delta_l=-1)

    def test_mask_values(self):
        with pytest.raises(ShapeError):
            ModulationConfig(np.full((2, 2), 2))

    def test_repeats_and_default_size(self):
        cfg = ModulationConfig(np.zeros((3, 5)), input_fps=30, output_fps=120)
        assert cfg.repeats == 4
        assert (cfg.out_width, cfg.out_height) == (5, 3)


class TestFrames:
    def test_resized_and_counted(self, rng):
        mask = _mask(rng, 12, 16)
        frames = modulate_frame(random_srgb(rng, 6, 8), ModulationConfig(mask, output_fps=120))
        assert len(frames) == 4
        assert all(f.data.shape == (12, 16, 3) and f.color_space is ColorSpace.SRGB8 for f in frames)

    def test_mask_size_mismatch(self, rng):
        cfg = ModulationConfig(_mask(rng, 4, 4), out_width=5, out_height=4)
        with pytest.raises(ShapeError):
            modulate_frame(random_srgb(rng, 4, 4), cfg)

    def test_lightness_offsets_survive_srgb(self, rng):
        # mid-grey content keeps every pixel away from the clamp
        img = ImagePlane(np.full((10, 10, 3), 128, dtype=np.uint8), ColorSpace.SRGB8)
        mask = _mask(rng, 10, 10)
        a, b = modulate_frame(img, ModulationConfig(mask))
        diff = lightness(a) - lightness(b)
        np.testing.assert_allclose(diff, 8.0 * mask, atol=1.5)

    def test_zero_mask_duplicates(self, rng):
        img = random_srgb(rng, 8, 8)
        out = list(modulate_stream([img, img], ModulationConfig(np.zeros((8, 8)))))
        assert len(out) == 4
        for f in out[1:]:
            np.testing.assert_array_equal(f.data, out[0].data)

    def test_stream_length(self, rng):
        frames = [random_srgb(rng, 4, 4) for _ in range(30)]
        out = list(modulate_stream(frames, ModulationConfig(_mask(rng, 4, 4))))
        assert len(out) == 60

    def test_stream_keeps_alternating(self):
        img = ImagePlane(np.full((2, 2, 3), 128, dtype=np.uint8), ColorSpace.SRGB8)
        out = list(modulate_stream([img] * 3, ModulationConfig(np.ones((2, 2)))))
        L = [float(lightness(f)[0, 0]) for f in out]
        signs = np.sign(np.diff(L))
        assert (signs[::2] < 0).all() and (signs[1::2] > 0).all()

    def test_empty_stream(self):
        with pytest.raises(ValueError):
            list(modulate_stream([], ModulationConfig(np.zeros((2, 2)))))


class TestEstimator:
    def test_params_and_clone(self):
        est = TagModulator(delta_l=3.0, output_fps=120.0)
        params = est.get_params()
        assert params["delta_l"] == 3.0 and params["output_fps"] == 120.0
        twin = clone(est)
        assert twin.get_params() == params
        est.set_params(delta_l=5.0)
        assert est.delta_l == 5.0

    def test_fit_transform(self, rng):
        mask = _mask(rng, 6, 6)
        est = TagModulator().fit(mask)
        assert est.n_repeats_ == 2
        out = est.transform([random_srgb(rng, 6, 6)])
        assert len(out) == 2

    def test_accepts_tag_map(self, rng):
        from ipt.tagmap import TagMapConfig, generate_map

        tm = generate_map(TagMapConfig(rows=1, cols=1, map_width=64, map_height=64, tag_side=32))
        est = TagModulator().fit(tm)
        assert est.config_.mask.shape == (64, 64)

    def test_transform_before_fit(self, rng):
        from sklearn.exceptions import NotFittedError

        with pytest.raises(NotFittedError):
            TagModulator().transform([random_srgb(rng, 2, 2)])
