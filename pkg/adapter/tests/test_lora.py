import numpy as np
import torch

from depthedit.oracle.protocol import UndistortRequest
from depthedit_adapter import AdapterOracle
from depthedit_adapter.lora import LoraLinear

from conftest import box_mask, grid_image


class TestWiring:
    def test_projection_layers_wrapped_at_configured_rank(self, adapter):
        attention = adapter.engine.backend.model.attention
        for name in ("to_q", "to_k", "to_v"):
            layer = getattr(attention, name)
            assert isinstance(layer, LoraLinear), name
            assert layer.rank == 16
            assert layer.down.shape[1] == 16
        assert not isinstance(attention.to_out, LoraLinear)

    def test_inactive_adapter_matches_base(self, adapter):
        attention = adapter.engine.backend.model.attention
        x = torch.randn(2, 5, 16, generator=torch.Generator().manual_seed(0))
        from depthedit_adapter.lora import activate

        activate(adapter.engine.lora_layers, None)
        wrapped = attention.to_q(x)
        base = attention.to_q.base(x)
        assert torch.allclose(wrapped, base)


class TestTuning:
    def test_sessions_hold_independent_adaptations(self):
        oracle = AdapterOracle()
        small_a = grid_image(size=64, seed=1)
        small_b = grid_image(size=64, seed=9)
        h1 = oracle.tune_adaptation(small_a, "session-a")
        h2 = oracle.tune_adaptation(small_b, "session-b")
        assert h1 != h2
        state_a = oracle.engine.adaptations["session-a"]
        state_b = oracle.engine.adaptations["session-b"]
        assert not torch.allclose(state_a.weights["to_q"]["up"],
                                  state_b.weights["to_q"]["up"])

    def test_training_log_and_descent(self):
        oracle = AdapterOracle()
        oracle.tune_adaptation(grid_image(size=64, seed=2), "session-c")
        losses = oracle.engine.adaptations["session-c"].losses
        assert len(losses) == 60
        assert all(np.isfinite(losses))
        assert losses[-1] < losses[0]

    def test_tuning_deterministic(self):
        o1, o2 = AdapterOracle(), AdapterOracle()
        image = grid_image(size=64, seed=3)
        o1.tune_adaptation(image, "s")
        o2.tune_adaptation(image, "s")
        w1 = o1.engine.adaptations["s"].weights
        w2 = o2.engine.adaptations["s"].weights
        for name in ("to_q", "to_k", "to_v"):
            assert torch.equal(w1[name]["up"], w2[name]["up"])
            assert torch.equal(w1[name]["down"], w2[name]["down"])

    def test_adaptation_steers_undistortion(self):
        oracle = AdapterOracle()
        image = grid_image(size=64, seed=4)
        mask = box_mask(size=64, lo=20, hi=50)
        plain = oracle.undistort(UndistortRequest(image=image, max_noise_level=0.5,
                                                  foreground_mask=mask, seed=7,
                                                  session_id=None))
        oracle.tune_adaptation(image, "steer")
        adapted = oracle.undistort(UndistortRequest(image=image, max_noise_level=0.5,
                                                    foreground_mask=mask, seed=7,
                                                    session_id="steer"))
        assert not np.array_equal(plain, adapted)
