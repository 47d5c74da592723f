"""Tests for the aux blocks, the ArcFace loss, joint training and layer selection."""

import math

import numpy as np
import pytest

from src.exceptions import ClassIndexError, ConfigError, ContractError, DimensionError
from src.tensor import Tensor, check_gradients
from src.ucan import (
    ArcFaceConfig,
    AuxBlock,
    LayerScore,
    arcface_logits,
    arcface_loss,
    aux_forward,
    aux_parameter_count,
    build_aux_blocks,
    cosine_scores,
    global_loss,
    layer_scores,
    load_aux_blocks,
    save_aux_blocks,
    score_cosines,
    select_layers,
    total_cosine_similarity,
    train_aux,
)


@pytest.fixture
def config():
    return ArcFaceConfig(num_classes=3, scale=8.0, margin=0.3, d_prime=4)


@pytest.fixture
def block(config, rng):
    return AuxBlock.initialize(1, 5, config, rng)


class TestArcFaceConfig:

    @pytest.mark.parametrize("kwargs", [
        {"num_classes": 1},
        {"num_classes": 3, "d_prime": 1},
        {"num_classes": 3, "margin": -0.1},
        {"num_classes": 3, "margin": math.pi / 2},
        {"num_classes": 3, "scale": 0.0},
    ])
    def test_invalid(self, kwargs):
        with pytest.raises(ConfigError):
            ArcFaceConfig(**kwargs)


class TestAuxBlock:

    def test_embedding_is_unit_length(self, block, rng):
        p = aux_forward(block, Tensor(rng.normal(size=(6, 5, 3, 3)))).numpy()
        assert p.shape == (6, 4)
        np.testing.assert_allclose(np.linalg.norm(p, axis=1), 1.0)

    def test_cosines_bounded(self, block, rng):
        p = aux_forward(block, Tensor(rng.normal(size=(5, 3, 3))))
        cs = cosine_scores(block, p).numpy()
        assert cs.shape == (3,)
        assert np.all(np.abs(cs) <= 1.0 + 1e-12)

    def test_channel_mismatch(self, block):
        with pytest.raises(DimensionError):
            aux_forward(block, Tensor(np.ones((2, 4, 3, 3))))

    def test_parameter_count(self, config):
        blocks = build_aux_blocks([8, 16], config, seed=0)
        # (C_k + 1 + CL) * d' per layer
        assert aux_parameter_count(blocks) == (8 + 1 + 3) * 4 + (16 + 1 + 3) * 4
        assert [b.layer_index for b in blocks] == [1, 2]

    def test_numpy_embed_matches_forward(self, block, rng):
        taps = rng.normal(size=(7, 5, 2, 2))
        np.testing.assert_allclose(block.embed(taps, batch_size=3), aux_forward(block, Tensor(taps)).numpy())

    def test_persistence(self, config, tmp_path, rng):
        blocks = build_aux_blocks([5, 6], config, seed=2)
        restored = load_aux_blocks(save_aux_blocks(blocks, tmp_path / "aux.ucan"))
        assert [b.layer_index for b in restored] == [1, 2]
        assert restored[0].config == config
        taps = rng.normal(size=(2, 6, 2, 2))
        np.testing.assert_allclose(restored[1].embed(taps), blocks[1].embed(taps), atol=1e-5)

    def test_mixed_configs_not_saved(self, config, tmp_path, rng):
        other = ArcFaceConfig(num_classes=3, d_prime=6)
        blocks = [AuxBlock.initialize(1, 5, config, rng), AuxBlock.initialize(2, 5, other, rng)]
        with pytest.raises(ContractError):
            save_aux_blocks(blocks, tmp_path / "aux.ucan")


class TestArcFaceLoss:

    def test_margin_applies_to_true_class_only(self, config):
        cs = Tensor([0.5, 0.2, -0.1])
        logits = arcface_logits(cs, 0, config).numpy()
        assert logits[0] == pytest.approx(8.0 * math.cos(math.acos(0.5) + 0.3))
        assert logits[1] == pytest.approx(8.0 * 0.2)
        assert logits[2] == pytest.approx(8.0 * -0.1)

    def test_zero_margin_is_scaled_softmax(self):
        cfg = ArcFaceConfig(num_classes=3, scale=4.0, margin=0.0)
        cs = np.array([[0.3, 0.1, -0.2]])
        loss = arcface_loss(Tensor(cs), [2], cfg).item()
        z = 4.0 * cs[0]
        assert loss == pytest.approx(-(z[2] - np.log(np.exp(z).sum())))

    @pytest.mark.parametrize("seed", range(5))
    def test_matches_explicit_exponential_form(self, config, seed):
        rng = np.random.default_rng(seed)
        cs = rng.uniform(-0.9, 0.9, size=(4, 3))
        labels = rng.integers(0, 3, size=4)
        expected = []
        for row, y in zip(cs, labels):
            target = math.exp(8.0 * math.cos(math.acos(row[y]) + 0.3))
            others = sum(math.exp(8.0 * row[j]) for j in range(3) if j != y)
            expected.append(-math.log(target / (target + others)))
        loss = arcface_loss(Tensor(cs), labels, config).item()
        assert abs(loss - float(np.mean(expected))) <= 1e-12

    def test_margin_increases_loss(self, config):
        cs = Tensor([[0.6, 0.1, 0.0]])
        plain = arcface_loss(cs, [0], ArcFaceConfig(num_classes=3, scale=8.0, margin=0.0)).item()
        assert arcface_loss(cs, [0], config).item() > plain

    def test_label_out_of_range(self, config):
        with pytest.raises(ClassIndexError):
            arcface_loss(Tensor([0.1, 0.2, 0.3]), 3, config)

    @pytest.mark.parametrize("seed", range(20))
    def test_end_to_end_gradient(self, config, seed):
        """Loss through conv1x1, pooling, normalization and the margin, w.r.t. every block parameter."""
        rng = np.random.default_rng(seed)
        z = rng.normal(size=(3, 5, 2, 2))
        labels = [0, 2, 1]
        template = AuxBlock.initialize(1, 5, config, rng)

        def fn(w_proj, b_proj, w_arc):
            b = AuxBlock(1, w_proj.data, b_proj.data, w_arc.data, config)
            b.w_proj, b.b_proj, b.w_arc = w_proj, b_proj, w_arc
            return arcface_loss(cosine_scores(b, aux_forward(b, Tensor(z))), labels, config)

        state = template.state()
        report = check_gradients(fn, [state["w_proj"], state["b_proj"], state["w_arc"]])
        assert report["max"] < 1e-4

    def test_global_loss_is_mean(self):
        assert global_loss([Tensor(1.0), Tensor(2.0), Tensor(6.0)]).item() == pytest.approx(3.0)


class TestTraining:

    def test_training_leaves_backbone_untouched(self, tiny_model, tiny_splits):
        before = tiny_model.checksum()
        blocks = build_aux_blocks(tiny_model.spec.tap_channels(), ArcFaceConfig(num_classes=4, d_prime=4), seed=1)
        initial = [b.state()["w_proj"] for b in blocks]
        train_aux(tiny_model, blocks, tiny_splits["train"], epochs=1, seed=1, batch_size=8)
        assert tiny_model.checksum() == before
        assert any(not np.array_equal(b.state()["w_proj"], w) for b, w in zip(blocks, initial))

    def test_requires_frozen_backbone(self, tiny_model, tiny_splits):
        from src.model import BackboneModel

        trainable = BackboneModel(tiny_model.spec, tiny_model.state())
        blocks = build_aux_blocks(trainable.spec.tap_channels(), ArcFaceConfig(num_classes=4, d_prime=4))
        with pytest.raises(ContractError):
            train_aux(trainable, blocks, tiny_splits["train"], epochs=1)

    def test_block_layout_must_match_taps(self, tiny_model, tiny_splits):
        blocks = build_aux_blocks([4, 8], ArcFaceConfig(num_classes=4, d_prime=4))
        with pytest.raises(ContractError):
            train_aux(tiny_model, blocks, tiny_splits["train"], epochs=1)

    def test_global_loss_decreases(self, tiny_model, tiny_splits):
        blocks = build_aux_blocks(tiny_model.spec.tap_channels(),
                                  ArcFaceConfig(num_classes=4, scale=16.0, margin=0.3, d_prime=4), seed=9)
        log = train_aux(tiny_model, blocks, tiny_splits["train"], epochs=6, seed=9, lr=0.05, batch_size=8)
        assert log.losses[-1] < log.losses[0]
        assert set(log.records[0].metrics) == {"loss_L1", "loss_L2", "loss_L3"}

    def test_validation_keeps_best_tcs(self, tiny_model, tiny_splits):
        blocks = build_aux_blocks(tiny_model.spec.tap_channels(),
                                  ArcFaceConfig(num_classes=4, scale=16.0, margin=0.3, d_prime=4), seed=4)
        log = train_aux(tiny_model, blocks, tiny_splits["train"], epochs=3, seed=4, val=tiny_splits["val"],
                        batch_size=8)
        tcs = log.metric("tcs")
        assert log.best_epoch == int(np.argmax(tcs)) + 1
        _, final_tcs = layer_scores(tiny_model, blocks, tiny_splits["val"])
        assert final_tcs == pytest.approx(max(tcs))


class TestSelection:

    def test_score_cosines(self):
        cs = np.array([[0.9, 0.1, -0.1], [0.0, 0.8, 0.2]])
        score = score_cosines(2, cs, np.array([0, 1]))
        assert score.cs_plus == pytest.approx(0.85)
        assert score.cs_minus == pytest.approx(0.05)
        assert score.cs_avg == pytest.approx(0.4)

    def test_top_policy_ranks_and_breaks_ties_low(self):
        scores = [LayerScore(1, 0, 0, 0.2), LayerScore(2, 0, 0, 0.5), LayerScore(3, 0, 0, 0.2),
                  LayerScore(4, 0, 0, 0.4)]
        assert select_layers(scores, "top", 2) == [2, 4]
        assert select_layers(scores, "top", 3) == [2, 4, 1]

    def test_offset_policy(self):
        scores = [LayerScore(k, 0, 0, 0.0) for k in (1, 2, 3, 4)]
        assert select_layers(scores, "offset", 3) == [3, 4]
        assert select_layers(scores, "offset", 1) == [1, 2, 3, 4]

    @pytest.mark.parametrize("policy,value", [("top", 0), ("top", 5), ("offset", 5), ("bottom", 1)])
    def test_invalid_selection(self, policy, value):
        scores = [LayerScore(k, 0, 0, 0.0) for k in (1, 2, 3, 4)]
        with pytest.raises(ContractError):
            select_layers(scores, policy, value)

    def test_scores_ignore_class_relabelling(self, rng):
        cs = rng.uniform(-1.0, 1.0, size=(12, 4))
        labels = rng.integers(0, 4, size=12)
        perm = np.array([2, 0, 3, 1])
        relabelled = np.empty_like(cs)
        relabelled[:, perm] = cs
        before = score_cosines(1, cs, labels)
        after = score_cosines(1, relabelled, perm[labels])
        assert after.cs_avg == pytest.approx(before.cs_avg, abs=1e-12)
        assert total_cosine_similarity([after]) == pytest.approx(total_cosine_similarity([before]), abs=1e-12)

    def test_tcs_is_mean(self):
        scores = [LayerScore(1, 0, 0, 0.2), LayerScore(2, 0, 0, 0.4)]
        assert total_cosine_similarity(scores) == pytest.approx(0.3)

    def test_layer_scores_on_validation(self, tiny_model, tiny_blocks, tiny_splits):
        scores, tcs = layer_scores(tiny_model, tiny_blocks, tiny_splits["val"])
        assert [s.k for s in scores] == [1, 2, 3]
        assert all(-1.0 <= s.cs_avg <= 1.0 for s in scores)
        assert tcs == pytest.approx(np.mean([s.cs_avg for s in scores]))
