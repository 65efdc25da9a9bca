import numpy as np
import pytest

from depthedit.errors import DegenerateInputError
from depthedit.imgio import psnr, to_float, to_uint8
from depthedit.metrics import confidence_aggregates, report, warp_back
from depthedit.oracle import IdentityOracle, MatchResult, SceneOracle, UndistortRequest
from depthedit.oracle.scene import Scene, SceneConfig

from pathlib import Path

from conftest import smooth_texture

DATA = Path(__file__).parent / "data"


def zero_match(h, w, confidence=1.0):
    return MatchResult(flow=np.zeros((h, w, 2)),
                       confidence=np.full((h, w), confidence))


class TestConfidenceAggregates:
    def test_all_ones(self):
        m = zero_match(16, 16)
        region = np.ones((16, 16), dtype=bool)
        assert confidence_aggregates(m, region) == (1.0, 1.0)

    def test_half_and_half(self):
        conf = np.zeros((16, 16))
        conf[:8] = 0.5
        m = MatchResult(flow=np.zeros((16, 16, 2)), confidence=conf)
        region = np.ones((16, 16), dtype=bool)
        mean_conf, area = confidence_aggregates(m, region, threshold=0.25)
        assert mean_conf == pytest.approx(0.25)
        assert area == pytest.approx(0.5)

    def test_outside_region_ignored(self):
        conf = np.zeros((16, 16))
        conf[:, :8] = 1.0
        m = MatchResult(flow=np.zeros((16, 16, 2)), confidence=conf)
        region = np.zeros((16, 16), dtype=bool)
        region[:, :8] = True
        assert confidence_aggregates(m, region) == (1.0, 1.0)

    def test_monotone_under_pointwise_increase(self):
        rng = np.random.default_rng(0)
        conf = rng.random((16, 16))
        region = np.ones((16, 16), dtype=bool)
        m1 = MatchResult(flow=np.zeros((16, 16, 2)), confidence=conf)
        m2 = MatchResult(flow=np.zeros((16, 16, 2)),
                         confidence=np.clip(conf + rng.random((16, 16)) * 0.3, 0, 1))
        a1 = confidence_aggregates(m1, region)
        a2 = confidence_aggregates(m2, region)
        assert a2[0] >= a1[0]
        assert a2[1] >= a1[1]

    def test_empty_region_rejected(self):
        with pytest.raises(DegenerateInputError):
            confidence_aggregates(zero_match(8, 8), np.zeros((8, 8), dtype=bool))


class TestWarpBack:
    def test_zero_flow_identity(self):
        image = smooth_texture(32, 32, seed=1)
        out, valid = warp_back(image, zero_match(32, 32))
        assert valid.all()
        np.testing.assert_allclose(out, image, atol=1e-6)

    def test_integer_shift_exact(self):
        image = smooth_texture(32, 32, seed=2)
        flow = np.zeros((32, 32, 2))
        flow[..., 0] = 3.0  # sample 3 px to the right
        out, valid = warp_back(image, MatchResult(flow=flow, confidence=np.ones((32, 32))))
        np.testing.assert_allclose(out[:, :29], image[:, 3:], atol=1e-6)
        assert not valid[:, 29:].any()
        assert valid[:, :29].all()

    def test_mock_scene_flow_recovers_source(self):
        oracle = SceneOracle(Scene(SceneConfig.load(DATA / "scene256.json")))
        scene = oracle.scene
        src = scene.source()
        tgt = scene.target()
        match = oracle.match_dense(src.image, tgt.image)
        warped, valid = warp_back(tgt.image, match)
        covisible = (match.confidence > 0.5) & valid
        assert covisible.sum() > 2000
        assert psnr(warped, src.image, covisible) >= 30.0


class TestReport:
    def test_identity_edit_perfect_scores(self):
        image = to_float(to_uint8(smooth_texture(64, 64, seed=3)))
        region = np.ones((64, 64), dtype=bool)
        rep = report(image, image, zero_match(64, 64), region, IdentityOracle())
        assert rep.perceptual_similarity == pytest.approx(1.0, abs=1e-6)
        assert rep.lpips_proxy == pytest.approx(0.0, abs=1e-6)
        assert rep.confident_area == 1.0
        assert rep.mean_confidence == 1.0
        assert rep.lpips_source == "warp-back-rmse"

    def test_deterministic(self):
        image = smooth_texture(64, 64, seed=4)
        edited = np.clip(image + 0.05, 0, 1)
        region = np.ones((64, 64), dtype=bool)
        r1 = report(image, edited, zero_match(64, 64), region, IdentityOracle())
        r2 = report(image, edited, zero_match(64, 64), region, IdentityOracle())
        assert r1 == r2

    def test_fields_finite_and_ranged(self):
        image = smooth_texture(64, 64, seed=5)
        edited = smooth_texture(64, 64, seed=6)
        region = np.ones((64, 64), dtype=bool)
        rep = report(image, edited, zero_match(64, 64, confidence=0.5), region, IdentityOracle())
        assert -1.0 <= rep.perceptual_similarity <= 1.0
        assert rep.lpips_proxy >= 0.0
        assert 0.0 <= rep.confident_area <= 1.0
        assert np.isfinite(rep.lpips_proxy)

    def test_json_round_trip(self):
        image = smooth_texture(32, 32, seed=7)
        region = np.ones((32, 32), dtype=bool)
        rep = report(image, image, zero_match(32, 32), region, IdentityOracle())
        obj = rep.to_json()
        assert set(obj) == {"perceptual_similarity", "lpips_proxy", "lpips_source",
                            "mean_confidence", "confident_area", "region_pixels"}
