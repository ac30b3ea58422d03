from pathlib import Path

import numpy as np
import pytest

import astar

CONFIGS = Path(__file__).resolve().parents[2] / "configs"


def test_soft_iou_matches_direct_formula():
    rng = np.random.default_rng(0)
    a, b = rng.random((4, 4)), rng.random((4, 4))
    expected = np.minimum(a, b).sum() / (a + b).sum()
    assert astar.soft_iou(a, b) == pytest.approx(expected, rel=1e-14)
    assert astar.soft_iou(a, a) == 0.5


def test_losses_on_maps():
    maps = np.zeros((2, 2, 2))
    maps[0, 0, 0] = maps[1, 1, 1] = 1.0
    assert astar.segregation_loss(maps) == 0.0
    masks = np.zeros((2, 2, 2), dtype=np.uint8)
    masks[0, 0, 0] = masks[1, 1, 1] = 1
    assert astar.retention_loss(maps, masks) == pytest.approx(1.0)
    with pytest.raises(ValueError):
        astar.segregation_loss(np.zeros((2, 3, 2)))


def test_binarize_bbox():
    m = np.zeros((4, 4))
    m[1, 1], m[2, 3] = 1.0, 0.8
    mask = astar.binarize_bbox(m, 0.5)
    assert mask.dtype == np.uint8
    assert mask.sum() == 6
    assert mask[1:3, 1:4].all()


def test_expand_seeds_is_deterministic():
    assert astar.expand_seeds(0, 1) == [0xE220A8397B1DCDAF]
    assert astar.expand_seeds(7, 5) == astar.expand_seeds(7, 5)


def test_config_sample_and_maps():
    cfg = astar.Config.load(str(CONFIGS / "pathology.ini"))
    assert cfg.concepts == ["cat", "dog"]
    trace = cfg.sample(3)
    assert len(trace["steps"]) == cfg.steps
    assert trace["final_latent"].shape == (cfg.resolution, cfg.resolution, cfg.channels)
    maps = cfg.attention_maps(trace["final_latent"])
    assert maps.shape == (cfg.resolution, cfg.resolution, 2)
    assert maps.min() >= 0.0 and maps.max() <= 1.0
    again = cfg.sample(3)
    np.testing.assert_array_equal(trace["final_latent"], again["final_latent"])


def test_zero_weights_match_unguided():
    cfg = astar.Config.load(str(CONFIGS / "pathology.ini"))
    cfg.lambda_seg = cfg.lambda_ret = 0.0
    a = cfg.sample(11)
    b = astar.Config.load(str(CONFIGS / "pathology.ini")).sample(11, guided=False)
    np.testing.assert_array_equal(a["final_latent"], b["final_latent"])


def test_bad_config_raises():
    with pytest.raises(RuntimeError, match="nonsense"):
        astar.Config.parse("[scene]\nconcepts = a, b\nnonsense = 1\n[run]\nseeds = 2\n")


def test_run_experiment_writes_summary(tmp_path):
    out = astar.run_experiment("compare", str(CONFIGS / "pathology.ini"), out=str(tmp_path / "cmp"),
                               seeds=[1, 2], heatmaps=False)
    summary = Path(out) / "summary.csv"
    assert summary.read_text().startswith("method,scope,metric,value")
    assert sorted(p.name for p in (Path(out) / "guided").glob("*.csv")) == ["trace_seed1.csv", "trace_seed2.csv"]
