"""Tests for PGD, C&W (l_inf), the adaptive DKNN attack and AdvBatch persistence."""

import numpy as np
import pytest

from src.attacks import (
    AdvBatch,
    AttackConfig,
    ada_dknn,
    attack_success_rate,
    choose_targets,
    cw_linf,
    pgd,
    read_sidecar,
    run_chunked,
)
from src.attacks.base import loss_gradient
from src.exceptions import CancelledError, ConfigError, ContractError
from src.model import BackboneModel
from src.tensor import Tensor, ops

EPS = 8.0 / 255.0


@pytest.fixture
def victims(tiny_splits):
    test = tiny_splits["test"]
    return test.samples[:5], test.labels[:5]


def assert_within_budget(batch, epsilon):
    assert np.max(np.abs(batch.adversarials - batch.originals)) <= epsilon + 1e-9
    assert batch.adversarials.min() >= 0.0 and batch.adversarials.max() <= 1.0


class LinearModel:
    """Two-class linear classifier; logit(1) - logit(0) = x . direction + offset."""

    frozen = True

    def __init__(self, direction, offset):
        self.weight = np.stack([np.zeros_like(direction), direction], axis=1)
        self.bias = np.array([0.0, offset])

    def forward(self, x):
        return ops.dense(x if isinstance(x, Tensor) else Tensor(x), Tensor(self.weight), Tensor(self.bias))

    def predict(self, x):
        return (np.asarray(x) @ self.weight + self.bias).argmax(axis=1)


@pytest.fixture
def linear():
    direction = np.array([1.0, -1.0, 2.0, -0.5])
    # x = 0.5 everywhere sits 0.1 on the class-0 side
    return LinearModel(direction, -0.5 * direction.sum() - 0.1), direction


class TestAttackConfig:

    @pytest.mark.parametrize("kwargs", [
        {"epsilon": -0.1},
        {"epsilon": float("nan")},
        {"steps": -1},
        {"cw_lr": 0.0},
        {"ada_m": 0},
        {"chunk_size": 0},
        {"workers": 0},
    ])
    def test_invalid(self, kwargs):
        with pytest.raises(ConfigError):
            AttackConfig(**kwargs)

    def test_default_step_size(self):
        assert AttackConfig(epsilon=0.08).alpha == pytest.approx(0.01)
        assert AttackConfig(epsilon=0.08, step_size=0.02).alpha == 0.02


class TestPgd:

    def test_respects_budget_and_box(self, tiny_model, victims):
        x, y = victims
        batch = pgd(tiny_model, x, y, AttackConfig(epsilon=EPS, steps=5, seed=1))
        assert batch.attack == "pgd"
        assert_within_budget(batch, EPS)
        np.testing.assert_array_equal(batch.success, tiny_model.predict(batch.adversarials) != y)

    def test_zero_steps_returns_originals(self, tiny_model, victims):
        x, y = victims
        batch = pgd(tiny_model, x, y, AttackConfig(epsilon=EPS, steps=0))
        np.testing.assert_array_equal(batch.adversarials, x)

    def test_zero_epsilon_returns_originals(self, tiny_model, victims):
        x, y = victims
        batch = pgd(tiny_model, x, y, AttackConfig(epsilon=0.0, steps=5))
        np.testing.assert_array_equal(batch.adversarials, x)

    def test_single_step_is_fgsm(self, tiny_model, victims):
        x, y = victims
        cfg = AttackConfig(epsilon=EPS, steps=1, step_size=EPS, random_start=False)
        _, grad = loss_gradient(tiny_model, x, y)
        expected = np.clip(x + EPS * np.sign(grad), 0.0, 1.0)
        np.testing.assert_allclose(pgd(tiny_model, x, y, cfg).adversarials, expected)

    def test_linear_model_closed_form(self, linear):
        model, direction = linear
        x = np.full((3, 4), 0.5)
        y = np.array([0, 1, 0])
        cfg = AttackConfig(epsilon=0.1, steps=4, step_size=0.05, random_start=False)
        batch = pgd(model, x, y, cfg)
        # CE ascent on a linear model moves along +-sign(direction) until the ball boundary
        toward = np.where(y == 0, 1.0, -1.0)[:, None] * np.sign(direction)
        np.testing.assert_allclose(batch.adversarials, x + 0.1 * toward, atol=1e-12)
        assert batch.success[[0, 2]].all()

    def test_success_grows_with_epsilon(self, linear, rng):
        model, _ = linear
        x = rng.uniform(0.3, 0.7, size=(40, 4))
        y = model.predict(x)
        previous = np.zeros(len(y), dtype=bool)
        for epsilon in (0.0, 0.02, 0.05, 0.1, 0.25):
            success = pgd(model, x, y, AttackConfig(epsilon=epsilon, steps=10, random_start=False)).success
            assert np.all(success >= previous)
            previous = success
        assert previous.all()

    def test_larger_budget_is_at_least_as_potent(self, tiny_model, tiny_splits):
        test = tiny_splits["test"]
        rates = [pgd(tiny_model, test.samples, test.labels, AttackConfig(epsilon=e, steps=10, seed=1)).success_rate
                 for e in (1.0 / 255.0, 64.0 / 255.0)]
        assert rates[1] >= rates[0]

    def test_seeded_random_start(self, tiny_model, victims):
        x, y = victims
        a = pgd(tiny_model, x, y, AttackConfig(epsilon=EPS, steps=2, seed=3))
        b = pgd(tiny_model, x, y, AttackConfig(epsilon=EPS, steps=2, seed=3))
        c = pgd(tiny_model, x, y, AttackConfig(epsilon=EPS, steps=2, seed=4))
        np.testing.assert_array_equal(a.adversarials, b.adversarials)
        assert not np.array_equal(a.adversarials, c.adversarials)

    def test_chunking_and_workers_do_not_change_results(self, tiny_model, victims):
        x, y = victims
        whole = pgd(tiny_model, x, y, AttackConfig(epsilon=EPS, steps=2, seed=5, chunk_size=64))
        split = pgd(tiny_model, x, y, AttackConfig(epsilon=EPS, steps=2, seed=5, chunk_size=2, workers=2))
        np.testing.assert_allclose(whole.adversarials, split.adversarials)

    def test_unfrozen_model_rejected(self, tiny_model, victims):
        x, y = victims
        trainable = BackboneModel(tiny_model.spec, tiny_model.state())
        with pytest.raises(ContractError):
            pgd(trainable, x, y, AttackConfig(steps=1))

    def test_inputs_outside_box_rejected(self, tiny_model, victims):
        x, y = victims
        with pytest.raises(ContractError):
            pgd(tiny_model, x + 2.0, y, AttackConfig(steps=1))

    @pytest.mark.parametrize("workers", [1, 2])
    def test_cancellation(self, tiny_model, victims, workers):
        x, y = victims
        with pytest.raises(CancelledError) as info:
            pgd(tiny_model, x, y, AttackConfig(steps=1, chunk_size=2, workers=workers), cancel_check=lambda: True)
        assert info.value.details["chunks_done"] == 0

    def test_cancellation_after_first_chunk(self, tiny_model, victims):
        x, y = victims
        calls = []

        def cancel_after_one():
            calls.append(1)
            return len(calls) > 1

        with pytest.raises(CancelledError) as info:
            pgd(tiny_model, x, y, AttackConfig(steps=1, chunk_size=2, workers=2), cancel_check=cancel_after_one)
        assert info.value.details["chunks_done"] == 1

    def test_progress_reports_every_chunk(self, tiny_model, victims):
        x, y = victims
        seen = []
        pgd(tiny_model, x, y, AttackConfig(steps=1, chunk_size=2), progress_callback=lambda d, t: seen.append((d, t)))
        assert seen == [(1, 3), (2, 3), (3, 3)]


class TestCw:

    def test_respects_budget(self, tiny_model, victims):
        x, y = victims
        batch = cw_linf(tiny_model, x, y, AttackConfig(epsilon=EPS, steps=5, cw_lr=0.05))
        assert batch.attack == "cw"
        assert_within_budget(batch, EPS)
        assert batch.success_rate == pytest.approx(attack_success_rate(tiny_model, batch))

    def test_two_class_first_step_follows_direction(self, linear):
        model, direction = linear
        x = np.full((2, 4), 0.5)
        cfg = AttackConfig(epsilon=0.1, steps=1, cw_lr=0.05, cw_c=1.0)
        batch = cw_linf(model, x, np.zeros(2, dtype=int), cfg)
        delta = batch.adversarials - x
        np.testing.assert_array_equal(np.sign(delta), np.tile(np.sign(direction), (2, 1)))

    def test_two_class_crosses_boundary(self, linear):
        model, direction = linear
        x = np.full((2, 4), 0.5)
        batch = cw_linf(model, x, np.zeros(2, dtype=int), AttackConfig(epsilon=0.1, steps=100, cw_lr=0.05, cw_c=1.0))
        assert batch.success.all()
        assert np.all((batch.adversarials - x) @ direction > 0.1)
        assert_within_budget(batch, 0.1)

    def test_zero_steps(self, tiny_model, victims):
        x, y = victims
        batch = cw_linf(tiny_model, x, y, AttackConfig(epsilon=EPS, steps=0))
        np.testing.assert_array_equal(batch.adversarials, x)


class TestAdaptive:

    def test_respects_budget_and_caps_neighbours(self, tiny_model, tiny_dknn, victims):
        x, y = victims
        cfg = AttackConfig(epsilon=EPS, ada_steps=3, ada_refresh=2, ada_m=100, seed=2)
        batch = ada_dknn(tiny_model, tiny_dknn, x, y, cfg)
        assert batch.attack == "ada_dknn"
        assert_within_budget(batch, EPS)
        smallest = int(np.bincount(tiny_dknn.store.train_labels).min())
        assert batch.config["ada_m_used"] == smallest
        assert batch.config["detector_source"]["name"] == "ucan"

    def test_targets_avoid_true_class(self, tiny_model, tiny_dknn, victims):
        x, y = victims
        _, features = tiny_dknn.source.extract(tiny_model, x)
        targets = choose_targets(tiny_dknn, features, y, m=2)
        assert len(targets) == 2
        for position, ((mean_ref, mean_sq), f) in enumerate(zip(targets, features)):
            assert mean_ref.shape == f.shape
            assert mean_sq.shape == (x.shape[0],)
            for i, label in enumerate(y):
                matches = []
                for c in range(tiny_dknn.num_classes):
                    rows = tiny_dknn.class_embeddings(position, c)
                    nearest = rows[np.argsort(((rows - f[i]) ** 2).sum(axis=1), kind="stable")[:2]]
                    if np.allclose(nearest.mean(axis=0), mean_ref[i]):
                        matches.append(c)
                assert matches and label not in matches

    def test_zero_steps(self, tiny_model, tiny_dknn, victims):
        x, y = victims
        batch = ada_dknn(tiny_model, tiny_dknn, x, y, AttackConfig(epsilon=EPS, ada_steps=0))
        np.testing.assert_array_equal(batch.adversarials, x)


class TestAdvBatch:

    def test_over_budget_rejected(self):
        x = np.full((1, 4), 0.5)
        with pytest.raises(ContractError):
            AdvBatch("pgd", x, x + 0.1, [0], [True], epsilon=0.05)

    def test_persistence_and_sidecar(self, tiny_model, victims, tmp_path):
        x, y = victims
        batch = pgd(tiny_model, x, y, AttackConfig(epsilon=EPS, steps=2, seed=7))
        path = batch.save(tmp_path / "pgd.ucan")
        restored = AdvBatch.load(path)
        assert restored.attack == "pgd"
        assert restored.epsilon == pytest.approx(EPS)
        np.testing.assert_array_equal(restored.success, batch.success)
        np.testing.assert_allclose(restored.adversarials, batch.adversarials, atol=1e-6)
        assert_within_budget(restored, restored.epsilon)
        sidecar = read_sidecar(path)
        assert sidecar["seed"] == 7
        assert sidecar["success"] == batch.success.astype(int).tolist()


def test_run_chunked_keeps_sample_order():
    x = np.arange(7.0).reshape(7, 1)
    y = np.zeros(7, dtype=int)
    out = run_chunked(lambda xc, yc, start: xc + start, x, y, AttackConfig(chunk_size=3, workers=3))
    np.testing.assert_array_equal(out[:, 0], [0, 1, 2, 6, 7, 8, 12])
