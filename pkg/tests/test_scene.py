import json

import numpy as np
import pytest

from _oracles import make_random_scene
from warpsfm.scene import (
    CorrespondenceSet,
    ImageRecord,
    NormalizationError,
    PixelOutOfRange,
    Scene,
    SceneLoadError,
    SceneStructureError,
    image_filename,
    load_scene,
    normalize_depths,
    points_json_text,
    sample_depth,
    sampled_correspondence_depths,
    save_scene,
    validate_scene,
)
from warpsfm.pfm import write_pfm


def _flat_scene(n_images=2, size=(20, 16), depth_value=3.0, n_points=2):
    w, h = size
    images = [
        ImageRecord(
            id=i,
            rgb=np.full((h, w, 3), 100 + i, dtype=np.uint8),
            depth=np.full((h, w), depth_value, dtype=np.float32),
            mask=np.ones((h, w), dtype=bool),
        )
        for i in range(n_images)
    ]
    pixels = np.zeros((n_images, n_points, 2))
    visibility = np.ones((n_images, n_points), dtype=bool)
    for c in range(n_points):
        pixels[:, c] = (3.0 + 2 * c, 4.0 + c)
    return Scene(images=images, correspondences=CorrespondenceSet(pixels, visibility))


# -- serialization round-trip -------------------------------------------------


def test_save_load_roundtrip_bitwise(tmp_path):
    scene = make_random_scene(7, n_images=3, n_points=6, size=(32, 24))
    scene.images[1].mask[5:10, 5:10] = False  # exercise mask writing
    save_scene(scene, tmp_path)
    back = load_scene(tmp_path)
    assert back.n_images == 3
    assert np.array_equal(back.correspondences.pixels, scene.correspondences.pixels)
    assert np.array_equal(back.correspondences.visibility, scene.correspondences.visibility)
    for a, b in zip(scene.images, back.images):
        assert np.array_equal(a.rgb, b.rgb)
        assert np.array_equal(a.depth, b.depth)
        assert np.array_equal(a.mask, b.mask)


def test_reserialize_idempotent(tmp_path):
    scene = make_random_scene(3, size=(24, 18))
    save_scene(scene, tmp_path / "a")
    first = load_scene(tmp_path / "a")
    save_scene(first, tmp_path / "b")
    a = (tmp_path / "a" / "points.json").read_bytes()
    b = (tmp_path / "b" / "points.json").read_bytes()
    assert a == b


def test_points_json_schema():
    scene = _flat_scene()
    scene.correspondences.visibility[1, 1] = False
    doc = json.loads(points_json_text(scene.correspondences, scene.n_images))
    assert doc["version"] == 1
    assert doc["images"] == ["0.png", "1.png"]
    obs = doc["points"][1]["obs"]
    assert obs[0]["visible"] is True and "u" in obs[0] and "v" in obs[0]
    assert obs[1] == {"image": 1, "visible": False}


def test_missing_mask_defaults_to_all_static(tmp_path):
    scene = _flat_scene()
    save_scene(scene, tmp_path)
    assert not (tmp_path / "masks").exists()  # all-True masks are not written
    back = load_scene(tmp_path)
    assert all(rec.mask.all() for rec in back.images)


# -- load error paths ---------------------------------------------------------


def test_load_missing_directory():
    with pytest.raises(SceneLoadError, match="missing-scene"):
        load_scene("/nonexistent/missing-scene")


def test_load_missing_depth_named(tmp_path):
    scene = _flat_scene()
    save_scene(scene, tmp_path)
    (tmp_path / "depths" / "1.pfm").unlink()
    with pytest.raises(SceneLoadError, match="1.pfm"):
        load_scene(tmp_path)


def test_load_dimension_mismatch(tmp_path):
    scene = _flat_scene()
    save_scene(scene, tmp_path)
    write_pfm(tmp_path / "depths" / "0.pfm", np.ones((4, 4), dtype=np.float32))
    with pytest.raises(SceneStructureError, match="0.pfm"):
        load_scene(tmp_path)


def test_load_corrupt_points_json(tmp_path):
    scene = _flat_scene()
    save_scene(scene, tmp_path)
    (tmp_path / "points.json").write_text("{not json")
    with pytest.raises(SceneLoadError, match="points.json"):
        load_scene(tmp_path)


def test_load_rejects_unknown_version(tmp_path):
    scene = _flat_scene()
    save_scene(scene, tmp_path)
    doc = json.loads((tmp_path / "points.json").read_text())
    doc["version"] = 2
    (tmp_path / "points.json").write_text(json.dumps(doc))
    with pytest.raises(SceneLoadError, match="version"):
        load_scene(tmp_path)


def test_load_rejects_bad_image_index(tmp_path):
    scene = _flat_scene()
    save_scene(scene, tmp_path)
    doc = json.loads((tmp_path / "points.json").read_text())
    doc["points"][0]["obs"][0]["image"] = 9
    (tmp_path / "points.json").write_text(json.dumps(doc))
    with pytest.raises(SceneLoadError, match="image index"):
        load_scene(tmp_path)


def test_load_rejects_visible_obs_without_uv(tmp_path):
    scene = _flat_scene()
    save_scene(scene, tmp_path)
    doc = json.loads((tmp_path / "points.json").read_text())
    del doc["points"][0]["obs"][0]["u"]
    (tmp_path / "points.json").write_text(json.dumps(doc))
    with pytest.raises(SceneLoadError, match="u/v"):
        load_scene(tmp_path)


def test_load_noncontiguous_ids(tmp_path):
    scene = _flat_scene()
    save_scene(scene, tmp_path)
    (tmp_path / "images" / "1.png").rename(tmp_path / "images" / "2.png")
    with pytest.raises(SceneLoadError, match="contiguous"):
        load_scene(tmp_path)


# -- depth sampling -----------------------------------------------------------


def test_sample_depth_constant_field():
    scene = _flat_scene(depth_value=3.0)
    assert sample_depth(scene.images[0], (7.3, 5.9)) == pytest.approx(3.0)


def test_sample_depth_grid_node_identity():
    scene = _flat_scene()
    rec = scene.images[0]
    rec.depth[4, 6] = 9.25
    assert sample_depth(rec, (6.0, 4.0)) == pytest.approx(9.25)


def test_sample_depth_midpoint():
    scene = _flat_scene()
    rec = scene.images[0]
    rec.depth[:, :] = 1.0
    rec.depth[:, 7] = 2.0
    assert sample_depth(rec, (6.5, 3.0)) == pytest.approx(1.5)


def test_sample_depth_out_of_bounds():
    scene = _flat_scene(size=(20, 16))
    with pytest.raises(PixelOutOfRange):
        sample_depth(scene.images[0], (19.5, 3.0))


# -- normalization ------------------------------------------------------------


def test_normalize_divides_by_max_correspondence_depth():
    scene = _flat_scene(depth_value=4.0)
    scene.images[0].depth[10, 10] = 2.0  # off-correspondence pixel
    out = normalize_depths(scene)
    assert out.depth_normalizer == pytest.approx(4.0)
    assert out.images[0].depth[10, 10] == pytest.approx(0.5)


def test_normalize_max_sampled_depth_is_one():
    scene = make_random_scene(11)
    out = normalize_depths(scene)
    sampled = sampled_correspondence_depths(out)
    assert np.nanmax(sampled) == pytest.approx(1.0, abs=1e-12)


def test_normalize_idempotent():
    scene = make_random_scene(5)
    once = normalize_depths(scene)
    twice = normalize_depths(once)
    assert twice.depth_normalizer / once.depth_normalizer == pytest.approx(1.0, abs=1e-12)
    assert np.allclose(once.images[0].depth, twice.images[0].depth, rtol=1e-12, atol=0)


def test_normalize_without_correspondences():
    scene = _flat_scene()
    scene.correspondences.visibility[:, :] = False
    with pytest.raises(NormalizationError):
        normalize_depths(scene)


def test_normalizer_accumulates():
    scene = _flat_scene(depth_value=4.0)
    half = normalize_depths(scene)
    # Manually rescale and renormalize: accumulated normalizer should track.
    assert half.depth_normalizer == pytest.approx(4.0)


# -- validation ---------------------------------------------------------------


def test_validate_accepts_good_scene():
    rep = validate_scene(make_random_scene(2))
    assert rep.ok
    assert rep.stats["n_images"] == 3


def test_validate_flags_single_view_point():
    scene = _flat_scene()
    scene.correspondences.visibility[1, 0] = False
    rep = validate_scene(scene)
    assert not rep.ok
    assert any("needs >= 2" in e for e in rep.errors)


def test_validate_flags_out_of_bounds_pixel():
    scene = _flat_scene(size=(20, 16))
    scene.correspondences.pixels[0, 0] = (25.0, 3.0)
    rep = validate_scene(scene)
    assert any("out of bounds" in e for e in rep.errors)


def test_validate_warns_on_masked_correspondence():
    scene = _flat_scene()
    u, v = scene.correspondences.pixels[0, 0]
    scene.images[0].mask[int(v), int(u)] = False
    rep = validate_scene(scene)
    assert rep.ok  # advisory only
    assert any("transient" in w for w in rep.warnings)


def test_validate_flags_negative_depth():
    scene = _flat_scene()
    scene.images[0].depth[0, 0] = -1.0
    rep = validate_scene(scene)
    assert any("negative" in e for e in rep.errors)


# -- misc ---------------------------------------------------------------------


def test_image_filename_zero_padding():
    assert image_filename(0, 2) == "0.png"
    assert image_filename(3, 12) == "03.png"
    assert image_filename(10, 12) == "10.png"


def test_subset_copies():
    scene = _flat_scene(n_points=4)
    sub = scene.correspondences.subset([1, 3])
    sub.pixels[0, 0] = (99.0, 99.0)
    assert scene.correspondences.pixels[0, 1, 0] != 99.0
