import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from seedkit.compositor import (
    PlacementError, Placement, SceneSynthesizer, Sprite, SpriteExtractor, SynthConfig,
    decode_colors, encode_color, extract_sprites, generate_dataset, plan_scene,
    prepare_background, render_scene, transform_sprite,
)

from conftest import disk_mask, ellipse_mask, sprite_from_mask, tree_digest


def check_labeled_image(img, plan_footprints=None):
    """Mask/record consistency, color uniqueness and containment."""
    values = decode_colors(img.instance_mask)
    colors = [r.color for r in img.records]
    assert len(set(colors)) == len(colors)
    present = set(np.unique(values).tolist()) - {0}
    assert present == set(colors)
    for r in img.records:
        assert r.color == r.instance_id + 1
        region = values == r.color
        assert int(region.sum()) == r.visible_pixels
        assert 0 < r.visible_pixels <= r.footprint_pixels
        ys, xs = np.nonzero(region)
        x, y, w, h = r.bbox
        assert (xs.min(), ys.min(), xs.max() + 1, ys.max() + 1) == (x, y, x + w, y + h)
    if plan_footprints is not None:
        assert sum(r.visible_pixels for r in img.records) <= sum(plan_footprints)


# extraction ------------------------------------------------------------------

def test_extract_transparent():
    assert extract_sprites(np.zeros((10, 10, 4), np.uint8)) == []


def test_extract_one_blob():
    m = ellipse_mask(6, 4)
    img = np.zeros(m.shape + (4,), np.uint8)
    img[m] = (100, 90, 80, 255)
    (sp,) = extract_sprites(img)
    assert sp.footprint_px == m.sum()


def test_extract_25_seeds():
    img = np.zeros((5 * 40, 5 * 40, 4), np.uint8)
    m = ellipse_mask(10, 6, 25)
    h, w = m.shape
    for i in range(5):
        for j in range(5):
            img[i * 40:i * 40 + h, j * 40:j * 40 + w][m] = (150, 120, 60, 255)
    sprites = extract_sprites(img, class_label="soy")
    assert len(sprites) == 25
    assert all(sp.footprint_px == m.sum() and sp.class_label == "soy" for sp in sprites)


def test_extract_threshold_and_min_area():
    img = np.zeros((10, 20, 4), np.uint8)
    img[2:5, 2:5] = (1, 2, 3, 200)
    img[2:4, 10:12] = (1, 2, 3, 100)  # below default threshold
    img[7, 15] = (1, 2, 3, 255)  # a single speck
    assert len(extract_sprites(img)) == 2
    assert len(extract_sprites(img, min_area=2)) == 1
    assert len(extract_sprites(img, alpha_threshold=50)) == 3


def test_extract_crop_excludes_neighbour():
    img = np.zeros((10, 10, 4), np.uint8)
    img[0:3, 0:6] = (9, 9, 9, 255)
    img[4:8, 1:3] = (9, 9, 9, 255)
    img[3, 4] = 0
    sprites = extract_sprites(img)
    assert sorted(sp.footprint_px for sp in sprites) == [8, 18]


def test_sprite_must_be_tight():
    px = np.zeros((4, 4, 4), np.uint8)
    px[1:3, 1:3, 3] = 255
    with pytest.raises(ValueError):
        Sprite(px)
    with pytest.raises(ValueError):
        Sprite(np.zeros((3, 3, 4), np.uint8))


def test_sprite_extractor_estimator():
    img = np.zeros((20, 20, 4), np.uint8)
    img[2:6, 2:6, 3] = 255
    img[10:15, 10:12, 3] = 255
    est = SpriteExtractor(min_area=5, class_label="wheat")
    assert est.get_params()["min_area"] == 5
    sprites = est.fit_transform([img, img])
    assert len(sprites) == 4 and {sp.class_label for sp in sprites} == {"wheat"}


# transform ---------------------------------------------------------------------

def test_transform_identity(seed_sprites):
    for sp in seed_sprites:
        out = transform_sprite(sp, 1.0, 0.0, 1.0)
        assert out.footprint_px == sp.footprint_px
        assert np.array_equal(out.pixels, sp.pixels)


def test_transform_scale_two():
    sp = sprite_from_mask(disk_mask(15))
    out = transform_sprite(sp, 2.0, 0.0, 1.0)
    assert out.footprint_px == pytest.approx(4 * sp.footprint_px, rel=0.05)


@pytest.mark.parametrize("angle", [0, 30, 45, 90, 137, 270])
def test_transform_rotation_preserves_area(angle):
    sp = sprite_from_mask(ellipse_mask(20, 9))
    out = transform_sprite(sp, 1.0, angle, 1.0)
    assert out.footprint_px == pytest.approx(sp.footprint_px, rel=0.05)


def test_transform_rotation_90_swaps_extent():
    sp = sprite_from_mask(ellipse_mask(20, 9))
    out = transform_sprite(sp, 1.0, 90.0, 1.0)
    assert out.shape == sp.shape[::-1]


def test_transform_brightness_clamps():
    px = np.full((2, 2, 4), 250, np.uint8)
    px[..., 3] = 255
    out = transform_sprite(Sprite(px), 1.0, 0.0, 1.2)
    assert (out.pixels[..., :3] == 255).all()
    out = transform_sprite(Sprite(px), 1.0, 0.0, 0.5)
    assert (out.pixels[..., :3] == 125).all()


def test_transform_bad_scale(seed_sprites):
    with pytest.raises(ValueError):
        transform_sprite(seed_sprites[0], 0.0, 0.0, 1.0)
    with pytest.raises(ValueError):
        transform_sprite(seed_sprites[0], -1.0, 0.0, 1.0)


# config ------------------------------------------------------------------------

def test_config_defaults():
    cfg = SynthConfig()
    assert cfg.canvas_size == (768, 768)
    assert cfg.images_per_class == 275
    assert cfg.count_range == (450, 600)
    assert cfg.count_range_for("penny") == (50, 100)
    assert cfg.count_range_for("soy") == (450, 600)


@pytest.mark.parametrize("kwargs", [
    {"count_range": (5, 2)}, {"scale_range": (0, 1)}, {"canvas_size": (0, 10)},
    {"min_visible_fraction": 1.5}, {"master_seed": -1}, {"images_per_class": -2},
    {"count_range": (-1, 3)}, {"max_place_retries": 0},
])
def test_config_rejects(kwargs):
    with pytest.raises(ValueError):
        SynthConfig(**kwargs)


def test_config_round_trip():
    cfg = SynthConfig(master_seed=9, canvas_size=(416, 416))
    assert SynthConfig.from_dict(json.loads(json.dumps(cfg.to_dict()))) == cfg
    with pytest.raises(ValueError, match="bogus"):
        SynthConfig.from_dict({"bogus": 1})


# planning -----------------------------------------------------------------------

def test_plan_count_range(seed_sprites):
    cfg = SynthConfig(master_seed=1)
    for i in range(5):
        assert 450 <= len(plan_scene(cfg, seed_sprites, i)) <= 600


def test_plan_penny_range():
    cfg = SynthConfig(master_seed=1)
    coin = [sprite_from_mask(disk_mask(15), label="penny")]
    for i in range(5):
        assert 50 <= len(plan_scene(cfg, coin, i)) <= 100


def test_plan_deterministic(seed_sprites):
    cfg = SynthConfig(master_seed=42)
    assert plan_scene(cfg, seed_sprites, 3) == plan_scene(cfg, seed_sprites, 3)
    assert plan_scene(cfg, seed_sprites, 3) != plan_scene(cfg, seed_sprites, 4)
    other = SynthConfig(master_seed=43)
    assert plan_scene(cfg, seed_sprites, 3) != plan_scene(other, seed_sprites, 3)


def test_plan_impossible_fit():
    wide = sprite_from_mask(np.ones((8, 64), bool), source_id="wide.png")
    cfg = SynthConfig(canvas_size=(16, 16), count_range=(1, 1), scale_range=(1, 1),
                      rotation_range=(0, 0), max_place_retries=50)
    with pytest.raises(PlacementError, match="wide.png"):
        plan_scene(cfg, [wide], 0)


def test_plan_fits_canvas(seed_sprites):
    cfg = SynthConfig(canvas_size=(64, 48), count_range=(30, 30), master_seed=5)
    plan = plan_scene(cfg, seed_sprites, 0)
    bg = np.zeros((48, 64, 3), np.uint8)
    render_scene(plan, seed_sprites, bg)  # raises if anything spills


def test_plan_needs_sprites():
    with pytest.raises(ValueError):
        plan_scene(SynthConfig(), [], 0)


# rendering ------------------------------------------------------------------------

def test_render_empty_plan(background):
    img = render_scene([], [], background)
    assert np.array_equal(img.composite, background)
    assert not img.instance_mask.any()
    assert img.records == []


def test_render_single_sprite(background, seed_sprites):
    sp = seed_sprites[0]
    pl = Placement(0, (100.0, 200.0), 1.0, 0.0, 1.0, 0)
    img = render_scene([pl], [sp], background)
    (rec,) = img.records
    assert rec.visible_pixels == rec.footprint_pixels == sp.footprint_px
    h, w = sp.shape
    x0, y0 = 100 - w // 2 - (w % 2), 200 - h // 2 - (h % 2)
    assert (rec.bbox.w, rec.bbox.h) == (w, h)
    assert np.count_nonzero(decode_colors(img.instance_mask) == 1) == sp.footprint_px
    ys, xs = np.nonzero(decode_colors(img.instance_mask))
    assert (xs.min(), ys.min()) == (rec.bbox.x, rec.bbox.y)
    assert abs(rec.bbox.x - x0) <= 1 and abs(rec.bbox.y - y0) <= 1
    check_labeled_image(img)


def test_render_total_occlusion(background, seed_sprites):
    a = Placement(0, (300.0, 300.0), 1.0, 0.0, 1.0, 0)
    b = Placement(0, (300.0, 300.0), 1.0, 0.0, 0.9, 1)
    img = render_scene([a, b], seed_sprites, background)
    (rec,) = img.records
    assert rec.z_order == 1 and rec.instance_id == 0
    assert set(np.unique(decode_colors(img.instance_mask))) == {0, 1}
    check_labeled_image(img)


def test_render_partial_occlusion_min_visible(background, seed_sprites):
    a = Placement(0, (300.0, 300.0), 1.0, 0.0, 1.0, 0)
    b = Placement(0, (310.0, 300.0), 1.0, 0.0, 1.0, 1)
    img = render_scene([a, b], seed_sprites, background)
    assert len(img.records) == 2
    frac = img.records[0].visible_pixels / img.records[0].footprint_pixels
    assert 0 < frac < 1
    strict = render_scene([a, b], seed_sprites, background, min_visible_fraction=frac + 0.01)
    assert [r.z_order for r in strict.records] == [1]
    check_labeled_image(strict)
    # the dropped instance still shows in the composite, only the mask is erased
    assert np.array_equal(strict.composite, img.composite)


def test_render_background_mismatch(seed_sprites):
    pl = Placement(0, (700.0, 700.0), 1.0, 0.0, 1.0, 0)
    with pytest.raises(ValueError, match="background"):
        render_scene([pl], seed_sprites, np.zeros((100, 100, 3), np.uint8))


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2 ** 32), st.integers(0, 1000), st.floats(0, 0.6))
def test_render_invariants(seed, index, min_vis):
    sprites = [sprite_from_mask(ellipse_mask(6, 4)), sprite_from_mask(disk_mask(5), label="soy")]
    cfg = SynthConfig(canvas_size=(96, 80), count_range=(0, 60), master_seed=seed,
                      min_visible_fraction=min_vis)
    plan = plan_scene(cfg, sprites, index)
    img = render_scene(plan, sprites, np.zeros((80, 96, 3), np.uint8), min_vis)
    full = render_scene(plan, sprites, np.zeros((80, 96, 3), np.uint8))
    footprints = [r.footprint_pixels for r in full.records]
    check_labeled_image(img)
    # footprints of fully occluded placements are not in `full.records`,
    # so compare against every placement's own transformed footprint
    from seedkit.compositor import _warp
    all_fp = [int(_warp(sprites[p.sprite_index], p.scale, p.rotation_deg, 1.0)[1].sum()) for p in plan]
    assert sum(r.visible_pixels for r in img.records) <= sum(all_fp)
    assert sum(footprints) <= sum(all_fp)
    for r in img.records:
        assert r.visible_pixels >= min_vis * r.footprint_pixels


def test_encode_decode_colors():
    assert encode_color(1) == (0, 0, 1)
    assert encode_color(256) == (0, 1, 0)
    assert encode_color(0x123456) == (0x12, 0x34, 0x56)
    arr = np.array([[encode_color(7), encode_color(70000)]], np.uint8)
    assert decode_colors(arr).tolist() == [[7, 70000]]
    with pytest.raises(ValueError):
        encode_color(0)


# backgrounds ------------------------------------------------------------------------

def test_prepare_background_cover_and_crop():
    img = np.zeros((200, 400, 3), np.uint8)
    img[:, 200:] = 255
    out = prepare_background(img, (100, 100))
    assert out.shape == (100, 100, 3)
    # scaled by 0.5 to 200x100 then centre-cropped: left half dark, right half bright
    assert out[:, :40].max() == 0 and out[:, 60:].min() == 255


def test_prepare_background_exact_size():
    img = np.random.default_rng(0).integers(0, 255, (50, 60, 3)).astype(np.uint8)
    assert np.array_equal(prepare_background(img, (60, 50)), img)


def test_prepare_background_too_small():
    with pytest.raises(ValueError, match="smaller"):
        prepare_background(np.zeros((100, 100, 3), np.uint8), (768, 768))
    with pytest.raises(ValueError):
        prepare_background(np.zeros((100, 1000, 3), np.uint8), (200, 200))


# estimator ---------------------------------------------------------------------------

def test_scene_synthesizer(seed_sprites, background):
    est = SceneSynthesizer(canvas_size=(256, 256), count_range=(20, 30), random_state=7)
    assert est.get_params()["random_state"] == 7
    est.fit(seed_sprites, [background])
    a, b = est.generate(0), est.generate(0)
    assert np.array_equal(a.instance_mask, b.instance_mask)
    assert 20 <= len(est.plan(0)) <= 30
    check_labeled_image(a)
    est.set_params(random_state=8).fit(seed_sprites, [background])
    assert not np.array_equal(est.generate(0).instance_mask, a.instance_mask)


# dataset -------------------------------------------------------------------------------

def small_config(**kw):
    base = dict(canvas_size=(128, 128), images_per_class=3, count_range=(10, 20),
                class_count_ranges={"penny": (2, 4)}, master_seed=11)
    base.update(kw)
    return SynthConfig(**base)


def test_generate_dataset_layout(synth_inputs, tmp_path):
    sprites, bgs = synth_inputs
    out = tmp_path / "out"
    manifest = generate_dataset(small_config(), sprites, bgs, out)
    assert [c["name"] for c in manifest["categories"]] == ["penny", "soy"]
    assert len(manifest["images"]) == 6
    for sub in ("images", "masks", "labels"):
        assert len(list((out / sub).iterdir())) == 6
    assert (out / "images" / "00005.png").exists()
    on_disk = json.loads((out / "manifest.json").read_text())
    assert on_disk["images"][0]["records"] == manifest["images"][0]["records"]
    from seedkit._io import read_rgb
    for entry in manifest["images"]:
        mask = read_rgb(out / entry["mask_file"])
        values = decode_colors(mask)
        for rec in entry["records"]:
            assert np.count_nonzero(values == rec["color"]) == rec["visible_pixels"]
    coco = json.loads((out / "annotations.json").read_text())
    assert len(coco["annotations"]) == sum(len(e["records"]) for e in manifest["images"])


def test_generate_dataset_empty(synth_inputs, tmp_path):
    sprites, bgs = synth_inputs
    manifest = generate_dataset(small_config(images_per_class=0), sprites, bgs, tmp_path / "o")
    assert manifest["images"] == []
    assert json.loads((tmp_path / "o" / "annotations.json").read_text())["images"] == []
    assert (tmp_path / "o" / "manifest.json").exists()


def test_generate_dataset_deterministic(synth_inputs, tmp_path):
    sprites, bgs = synth_inputs
    generate_dataset(small_config(), sprites, bgs, tmp_path / "a")
    generate_dataset(small_config(), sprites, bgs, tmp_path / "b", jobs=2)
    assert tree_digest(tmp_path / "a") == tree_digest(tmp_path / "b")
    generate_dataset(small_config(master_seed=12), sprites, bgs, tmp_path / "c")
    assert tree_digest(tmp_path / "a") != tree_digest(tmp_path / "c")


def test_generate_dataset_missing_inputs(synth_inputs, tmp_path):
    sprites, bgs = synth_inputs
    with pytest.raises(FileNotFoundError):
        generate_dataset(small_config(), tmp_path / "nope", bgs, tmp_path / "o")
    empty = tmp_path / "empty"
    empty.mkdir()
    with pytest.raises(ValueError):
        generate_dataset(small_config(), sprites, empty, tmp_path / "o")
    assert not (tmp_path / "o").exists()


def test_generate_dataset_failure_keeps_old_output(synth_inputs, tmp_path):
    sprites, bgs = synth_inputs
    out = tmp_path / "out"
    generate_dataset(small_config(), sprites, bgs, out)
    before = tree_digest(out)
    with pytest.raises(PlacementError):
        generate_dataset(small_config(canvas_size=(16, 16), max_place_retries=3), sprites, bgs, out)
    assert tree_digest(out) == before
    assert [p.name for p in tmp_path.iterdir() if p.name.startswith(".")] == []


@pytest.mark.parametrize("scale", [0.8, 1.0, 1.25])
def test_warp_area_unbiased(scale):
    # tight crops touch the raster edge; the half-pixel rim there must survive
    sp = sprite_from_mask(ellipse_mask(27, 13, 80))
    ratios = [transform_sprite(sp, scale, r, 1.0).footprint_px / (sp.footprint_px * scale ** 2)
              for r in np.arange(0, 360, 5.0)]
    assert abs(np.mean(ratios) - 1) < 0.003
    assert np.max(np.abs(np.subtract(ratios, 1))) < 0.025
