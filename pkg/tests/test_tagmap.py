"""Codebook asset, tag rendering, map layout, mask and world-corner lookup."""
from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ipt.detector import detect_tags
from ipt.tagmap import (
    FamilyFormatError,
    LayoutError,
    TagMapConfig,
    UnknownTagError,
    code_to_grid,
    generate_map,
    grid_to_code,
    load_family,
    lookup_world_corners,
    mask_to_png8,
    parse_family,
    png8_to_mask,
    render_tag,
    rotate_code,
    save_map,
    tag_cells,
)

HEADER = "family=test bits=36 hamming=11\n"


def _all_rotation_distances(codes: np.ndarray, grid: int) -> np.ndarray:
    """Min hamming distance of each code to every other code under any rotation."""
    rots = [codes]
    for k in range(1, 4):
        rots.append(np.array([rotate_code(int(c), grid, k) for c in codes], dtype=np.uint64))
    best = np.full(len(codes), 64)
    for k, rc in enumerate(rots):
        d = np.bitwise_count(codes[:, None] ^ rc[None, :]).astype(int)
        if k == 0:
            np.fill_diagonal(d, 64)
        best = np.minimum(best, d.min(axis=1))
    return best


class TestFamily:
    def test_asset_size(self, family):
        assert len(family) == 587
        assert family.data_bits == 36 and family.grid == 6 and family.border == 1
        assert family.min_hamming == 11

    def test_min_distance_under_rotation(self, family):
        assert _all_rotation_distances(family.codes_array, family.grid).min() >= 11

    def test_matches_opencv_dictionary(self, family):
        import cv2

        d = cv2.aruco.getPredefinedDictionary(cv2.aruco.DICT_APRILTAG_36h11)
        for tag_id in (0, 1, 57, 300, 586):
            ref = cv2.aruco.generateImageMarker(d, tag_id, 8 * 3, borderBits=1)
            np.testing.assert_array_equal(np.rot90(render_tag(family, tag_id, 3).data, 2), ref)

    def test_empty_file(self):
        with pytest.raises(FamilyFormatError):
            parse_family(HEADER)

    def test_long_code(self):
        with pytest.raises(FamilyFormatError):
            parse_family(HEADER + "1fffffffff\n")

    def test_duplicate_code(self):
        with pytest.raises(FamilyFormatError):
            parse_family(HEADER + "d5d628584\nd5d628584\n")

    def test_missing_header(self):
        with pytest.raises(FamilyFormatError):
            parse_family("d5d628584\n")

    def test_load_from_file(self, tmp_path):
        p = tmp_path / "fam.txt"
        p.write_text(HEADER + "d5d628584\nd97f18b49\n")
        fam = load_family(p)
        assert len(fam) == 2 and fam.codes[0] == 0xD5D628584

    @given(st.integers(0, 2**36 - 1))
    def test_grid_round_trip(self, code):
        assert grid_to_code(code_to_grid(code, 6)) == code

    @given(st.integers(0, 2**36 - 1))
    def test_four_rotations_are_identity(self, code):
        assert rotate_code(code, 6, 4) == code
        assert rotate_code(rotate_code(code, 6, 1), 6, 3) == code


class TestRender:
    @pytest.mark.parametrize("tag_id", [0, 13, 586])
    def test_border_black(self, family, tag_id):
        cells = tag_cells(family, tag_id)
        assert cells.shape == (8, 8)
        ring = np.ones((8, 8), bool)
        ring[1:-1, 1:-1] = False
        assert not cells[ring].any()

    def test_scaling(self, family):
        one = render_tag(family, 7, 1).data
        two = render_tag(family, 7, 2).data
        assert two.shape == (16, 16)
        np.testing.assert_array_equal(two[::2, ::2], one)

    def test_out_of_range(self, family):
        with pytest.raises(UnknownTagError):
            render_tag(family, 587, 1)

    def test_placed_ids_decode(self, family, map_config):
        for tag_id in range(map_config.n_tags):
            canvas = np.full((80, 80), 255, dtype=np.uint8)
            canvas[16:64, 16:64] = render_tag(family, tag_id, 6).data
            dets = detect_tags(canvas, family)
            assert [(d.id, d.hamming) for d in dets] == [(tag_id, 0)]


class TestMap:
    def test_default_layout(self, tag_map, map_config):
        assert map_config.n_tags == 81
        assert tag_map.image.data.shape == (2160, 1920)
        assert set(np.unique(tag_map.mask)) == {-1, 0, 1}

    def test_ordering_left_to_right_bottom_to_top(self, map_config):
        x0, y0 = map_config.tag_origin(0)
        x1, _ = map_config.tag_origin(1)
        _, y9 = map_config.tag_origin(9)
        assert x0 < map_config.map_width / 9 and y0 > map_config.map_height * 8 / 9
        assert x1 > x0
        assert y9 < y0

    def test_mask_matches_image_inside_tags(self, tag_map, map_config):
        s = map_config.tag_side
        for tag_id in (0, 40, 80):
            x0, y0 = map_config.tag_origin(tag_id)
            img = tag_map.image.data[y0 : y0 + s, x0 : x0 + s]
            m = tag_map.mask[y0 : y0 + s, x0 : x0 + s]
            np.testing.assert_array_equal(m, np.where(img > 0, 1, -1))

    def test_mask_without_ring_is_tag_area(self):
        cfg = TagMapConfig(quiet_cells=0)
        tm = generate_map(cfg)
        assert np.count_nonzero(tm.mask) == cfg.n_tags * cfg.tag_side**2
        assert (tm.image.data[tm.mask == 0] == 255).all()

    def test_ring_is_white_and_positive(self, tag_map, map_config):
        q = map_config.quiet_cells * map_config.cell
        x0, y0 = map_config.tag_origin(40)
        band = tag_map.mask[y0 - q : y0, x0 : x0 + map_config.tag_side]
        assert (band == 1).all()
        assert (tag_map.image.data[y0 - q : y0, x0 : x0 + map_config.tag_side] == 255).all()

    def test_mask_zero_between_footprints(self, tag_map, map_config):
        slot_w = map_config.map_width / map_config.cols
        x0, _ = map_config.tag_origin(0)
        gap = int(slot_w)  # slot boundary column between tag 0 and tag 1
        assert (tag_map.mask[:, gap] == 0).all()
        assert x0 > 0

    def test_single_tag_centered(self, family):
        cfg = TagMapConfig(rows=1, cols=1, map_width=240, map_height=240, ratio_x=0.01, ratio_y=0.01)
        tm = generate_map(cfg)
        assert cfg.tag_origin(0) == (60, 60)
        np.testing.assert_allclose(lookup_world_corners(0, cfg)[:, :2].sum(axis=0), 0.0, atol=1e-12)
        assert (tm.image.data[60:180, 60:180] == render_tag(family, 0, 15).data).all()

    @pytest.mark.parametrize(
        "kwargs",
        [dict(tag_side=500), dict(tag_side=124), dict(rows=30, cols=30), dict(tag_side=232)],
    )
    def test_layout_errors(self, kwargs):
        with pytest.raises(LayoutError):
            generate_map(TagMapConfig(**kwargs))

    def test_config_json_round_trip(self, tmp_path, map_config):
        map_config.save(tmp_path / "m.json")
        assert TagMapConfig.load(tmp_path / "m.json") == map_config

    def test_config_unknown_key(self):
        with pytest.raises(LayoutError):
            TagMapConfig.from_dict({"rows": 3, "bogus": 1})

    def test_mask_sidecar_round_trip(self, tag_map):
        png = mask_to_png8(tag_map.mask)
        assert set(np.unique(png)) == {0, 128, 255}
        np.testing.assert_array_equal(png8_to_mask(png), tag_map.mask)

    def test_save_map(self, tmp_path):
        cfg = TagMapConfig(rows=2, cols=2, map_width=320, map_height=320, tag_side=96)
        paths = save_map(generate_map(cfg), tmp_path)
        assert sorted(paths) == ["map.json", "map.png", "mask.png"]
        assert TagMapConfig.load(paths["map.json"]) == cfg


class TestWorldCorners:
    def test_screen_ratio(self, map_config):
        assert map_config.ratio_x == pytest.approx(1.130e-3, abs=1e-6)
        assert map_config.ratio_y == pytest.approx(1.144e-3, abs=1e-6)

    def test_center_tag_symmetric(self, map_config):
        c = lookup_world_corners(40, map_config)
        np.testing.assert_allclose(c[:, :2].sum(axis=0), 0.0, atol=1e-12)

    def test_order_and_plane(self, map_config):
        c = lookup_world_corners(12, map_config)
        assert (c[:, 2] == 0).all()
        bl, br, tr, tl = c[:, :2]
        assert br[0] > bl[0] and br[1] == bl[1]
        assert tr[1] > br[1] and tr[0] == br[0]
        assert tl[0] == bl[0]
        # counter-clockwise in the world frame
        x, y = c[:, 0], c[:, 1]
        assert np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y) > 0

    def test_square_when_isotropic(self):
        cfg = TagMapConfig(ratio_x=1e-3, ratio_y=1e-3)
        c = lookup_world_corners(33, cfg)
        sides = np.linalg.norm(np.roll(c, -1, axis=0) - c, axis=1)
        np.testing.assert_allclose(sides, cfg.tag_side * 1e-3, rtol=1e-12)

    def test_linear_in_ratio(self, map_config):
        doubled = TagMapConfig(ratio_x=2 * map_config.ratio_x)
        a = lookup_world_corners(5, map_config)
        b = lookup_world_corners(5, doubled)
        np.testing.assert_allclose(b[:, 0], 2 * a[:, 0], rtol=1e-12)
        np.testing.assert_allclose(b[:, 1], a[:, 1], rtol=1e-12)

    def test_unknown_id(self, map_config):
        with pytest.raises(UnknownTagError):
            lookup_world_corners(81, map_config)
