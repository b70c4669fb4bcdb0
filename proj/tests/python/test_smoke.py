import json
import math
import os
from pathlib import Path

import numpy as np
import pytest

import sstlf

SCENE = {
    "width": 48,
    "height": 32,
    "grid_rows": 3,
    "grid_cols": 3,
    "disparity_range": [0, 8],
    "classes": ["background", "wall", "post"],
    "probabilities": {"temperature": 0.2, "label_noise": 0.0},
    "layers": [
        {"name": "wall", "label": 1, "disparity": 2, "texture": {"seed": 3, "scale": 4}},
        {
            "name": "post",
            "label": 2,
            "disparity": 6,
            "texture": {"seed": 5, "scale": 3, "color": [0.9, 0.2, 0.2]},
            "mask": {"type": "rect", "rect": [20, 0, 26, 32]},
        },
    ],
}


@pytest.fixture(scope="module")
def scene():
    return sstlf.synth_scene(json.dumps(SCENE))


def test_import_and_lightfield_shape(scene):
    lf = scene["lightfield"]
    assert (lf.cols, lf.rows, lf.width, lf.height, lf.channels) == (3, 3, 48, 32, 3)
    assert lf.view(1, 1).shape == (32, 48, 3)
    assert scene["classes"] == ["background", "wall", "post"]
    assert len(scene["disparity"]) == 9


def test_refocus_matches_numpy_shift_and_average(scene):
    lf = scene["lightfield"]
    image, valid = sstlf.refocus(lf, 2.0)
    # Independent oracle: integer shifts u = x + d (s - 1), v = y + d (t - 1), out-of-bounds dropped.
    acc = np.zeros((32, 48, 3))
    cnt = np.zeros((32, 48, 1))
    for t in range(3):
        for s in range(3):
            view = lf.view(s, t).astype(np.float64)
            dx, dy = 2 * (s - 1), 2 * (t - 1)
            for y in range(32):
                for x in range(48):
                    u, v = x + dx, y + dy
                    if 0 <= u < 48 and 0 <= v < 32:
                        acc[y, x] += view[v, u]
                        cnt[y, x] += 1
    np.testing.assert_allclose(image, acc / cnt, atol=1e-5)
    assert valid.all()


def test_sst_degrades_to_refocus(scene):
    lf = scene["lightfield"]
    reg, _ = sstlf.refocus(lf, 3.5)
    sst, _ = sstlf.sst_render(lf, scene["disparity"], scene["labels"], 3.5, sigma_bypass=True, c1=1.0, c2=1.0)
    assert np.max(np.abs(reg - sst)) < 1e-6


def test_sst_sees_through_the_post(scene):
    lf = scene["lightfield"]
    reg, _ = sstlf.refocus(lf, 2.0)
    sst, _ = sstlf.sst_render(lf, scene["disparity"], scene["labels"], 2.0, c1=0.05, c2=0.05, target_label=1)
    red = np.array([0.9, 0.2, 0.2])
    # Inside the post's footprint the red contribution drops.
    patch = (slice(4, 28), slice(21, 25))
    dist_reg = np.linalg.norm(reg[patch] - red, axis=-1).mean()
    dist_sst = np.linalg.norm(sst[patch] - red, axis=-1).mean()
    assert dist_sst > dist_reg


def test_weight_functions():
    assert sstlf.depth_weight(2.0, 2.0, 0.5, 0.1) == 1.0
    assert sstlf.depth_weight(1.0, 0.0, 1.0, 0.1) == pytest.approx(0.9 * math.exp(-0.5) + 0.1)
    assert sstlf.semantic_weight(3.0, 2.0, 4.0, 1.0, 0.05) == 1.0
    assert sum(sstlf.normalize_weights([0.9, 0.3])) == pytest.approx(1.0)
    assert sstlf.normalize_weights([0.9, 0.3]) == pytest.approx([0.75, 0.25])
    with pytest.raises(sstlf.Error):
        sstlf.normalize_weights([0.0, 0.0])


def test_semantics(scene):
    probs = scene["probabilities"][4]
    assert probs.shape == (32, 48, 3)
    h = sstlf.entropy_map(probs)
    assert (h >= 0).all() and (h <= math.log(3) + 1e-9).all()
    labels = sstlf.map_labels(probs)
    np.testing.assert_array_equal(labels, np.argmax(probs, axis=-1))
    score = sstlf.score_threshold(probs, scene["labels"][4])
    assert 0.0 <= score["score"] <= 1.0
    with pytest.raises(sstlf.Error):
        sstlf.hcsm(probs, 0.0)
    masked = sstlf.hcsm(probs, 1e-12)
    assert (masked == 255).all()
    np.testing.assert_array_equal(sstlf.hcsm(probs, math.log(3) + 1e-6), labels)


def test_refine_recovers_masked_labels(scene):
    gt = scene["labels"][4]
    hcsm = gt.copy()
    hcsm[::3, ::2] = 255
    out = sstlf.refine_labels(hcsm, scene["disparity"][4])
    assert (out == gt).mean() >= 0.99


def test_stereo_on_plane():
    spec = dict(SCENE, layers=SCENE["layers"][:1])
    data = sstlf.synth_scene(json.dumps(spec))
    maps = sstlf.lf_disparity(data["lightfield"])
    assert len(maps) == 9
    assert (np.abs(maps[4] - 2.0) <= 1.0).mean() >= 0.95


def test_pfm_round_trip(tmp_path):
    img = np.random.default_rng(1).random((5, 7)).astype(np.float32)
    sstlf.write_pfm(tmp_path / "a.pfm", img)
    np.testing.assert_array_equal(sstlf.read_pfm(tmp_path / "a.pfm"), img)


def test_run_pipeline(tmp_path):
    spec = tmp_path / "scene.json"
    spec.write_text(json.dumps(SCENE))
    overrides = [f"synth.spec={spec}", "render.target=wall", "render.d_f=2"]
    first = sstlf.run_pipeline(None, tmp_path / "work", overrides)
    assert [s["name"] for s in first] == ["synth", "stereo", "semantics", "refine", "render"]
    assert all(s["status"] == "ran" for s in first)
    assert (tmp_path / "work" / "render" / "render.png").exists()
    second = sstlf.run_pipeline(None, tmp_path / "work", overrides)
    assert all(s["status"] == "skipped" for s in second)


def test_bundled_scene_spec_exists():
    scenes = Path(os.environ.get("SSTLF_SCENES", Path(__file__).parents[2] / "scenes"))
    assert (scenes / "bush.json").exists()
