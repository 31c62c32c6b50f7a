import io
import json

import numpy as np
import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from styleswap.data import TensorDataset
from styleswap.errors import ConfigurationError, DataError, TrainingDiverged
from styleswap.losses import LossWeights
from styleswap.pipeline import build_trainer
from styleswap.training import TrainConfig, lr_at, make_batch

from conftest import smooth_images, tiny_run_config


class TestLrSchedule:
    CFG = TrainConfig(total_steps=700_000)

    def test_base_rate(self):
        assert lr_at(0, self.CFG) == 1e-4

    def test_rate_at_decay_start_is_unchanged(self):
        assert lr_at(500_000, self.CFG) == 1e-4

    def test_one_decay(self):
        assert lr_at(540_000, self.CFG) == pytest.approx(8e-5)

    def test_four_decays(self):
        assert lr_at(660_000, self.CFG) == pytest.approx(2e-5)

    def test_floors_at_zero(self):
        assert lr_at(10_000_000, self.CFG) == 0.0

    def test_negative_step_rejected(self):
        with pytest.raises(ConfigurationError):
            lr_at(-1, self.CFG)

    @given(step=st.integers(0, 1_000_000))
    @settings(max_examples=200, deadline=None)
    def test_non_increasing_piecewise_constant(self, step):
        cfg = self.CFG
        here = lr_at(step, cfg)
        ahead = lr_at(step + 1, cfg)
        assert ahead <= here
        if ahead < here:  # drops happen only at the staircase breakpoints
            assert (step + 1 - cfg.decay_start) % cfg.decay_period == 0


class TestMakeBatch:
    def dataset(self, n=4):
        return TensorDataset(smooth_images(n, 64, seed=0))

    def test_exactly_one_self_pair(self):
        cfg = TrainConfig(batch_size=4, self_recon_count=1)
        batch = make_batch(self.dataset(), np.random.default_rng(0), cfg)
        assert sum(batch.self_mask) == 1
        assert batch.self_mask[0] is True
        for i, is_self in enumerate(batch.self_mask):
            if is_self:
                assert batch.source_ids[i] == batch.target_ids[i]
                assert torch.equal(batch.sources[i], batch.targets[i])

    def test_single_image_dataset_degenerates(self):
        cfg = TrainConfig(batch_size=4, self_recon_count=1)
        batch = make_batch(self.dataset(n=1), np.random.default_rng(1), cfg)
        assert all(s == t == 0 for s, t in zip(batch.source_ids, batch.target_ids))

    def test_seeded_batches_are_identical(self):
        cfg = TrainConfig(batch_size=4, self_recon_count=1)
        a_rng = np.random.default_rng(7)
        b_rng = np.random.default_rng(7)
        for _ in range(3):
            batch_a = make_batch(self.dataset(), a_rng, cfg)
            batch_b = make_batch(self.dataset(), b_rng, cfg)
            assert batch_a.source_ids == batch_b.source_ids
            assert batch_a.target_ids == batch_b.target_ids

    def test_empty_dataset_rejected(self):
        with pytest.raises(DataError):
            make_batch(
                type("Empty", (), {"__len__": lambda self: 0})(),
                np.random.default_rng(0),
                TrainConfig(),
            )

    def test_self_count_must_be_below_batch(self):
        with pytest.raises(ConfigurationError):
            TrainConfig(batch_size=4, self_recon_count=4).validate()


@pytest.fixture(scope="module")
def short_run():
    """12 trained steps on a 4-image dataset; shared by the step-contract tests."""
    run = tiny_run_config()
    trainer = build_trainer(run)
    dataset = TensorDataset(smooth_images(4, 64, seed=5))
    stream = io.StringIO()
    before = trainer.suite.checksum()
    reports = trainer.fit(dataset, steps=18, log_stream=stream)
    return trainer, reports, stream.getvalue(), before


class TestTrainStep:
    def test_r1_fires_exactly_on_period(self, short_run):
        _, reports, _, _ = short_run
        for report in reports:
            if report.step % 16 == 0:
                assert "r1" in report.terms, f"r1 missing at step {report.step}"
            else:
                assert "r1" not in report.terms, f"r1 leaked into step {report.step}"

    def test_surrogates_untouched(self, short_run):
        trainer, _, _, before = short_run
        assert trainer.suite.checksum() == before

    def test_reports_are_finite_and_itemized(self, short_run):
        _, reports, _, _ = short_run
        for report in reports:
            assert report.is_finite()
            for key in ("id", "recon", "adv", "shape", "pose", "expression"):
                assert key in report.terms
            assert "d_adv" in report.extras

    def test_log_lines_round_trip(self, short_run):
        trainer, reports, log_text, _ = short_run
        lines = log_text.strip().splitlines()
        assert len(lines) == len(reports)
        for line, report in zip(lines, reports):
            record = json.loads(line)
            assert record["step"] == report.step
            assert record["lr"] == lr_at(report.step, trainer.cfg)
            assert record["total"] == pytest.approx(report.total)

    def test_training_updates_trainable_parameters(self, short_run):
        trainer, _, _, _ = short_run
        fresh = build_trainer(tiny_run_config())
        changed = 0
        for (_, p_new), (_, p_init) in zip(
            sorted(trainer.generator.state_dict().items()),
            sorted(fresh.generator.state_dict().items()),
        ):
            if not torch.equal(p_new, p_init):
                changed += 1
        assert changed > 0

    def test_landmark_term_present_when_weighted(self):
        run = tiny_run_config(weights=LossWeights(landmark=1000.0))
        trainer = build_trainer(run)
        dataset = TensorDataset(smooth_images(4, 64, seed=6))
        report = trainer.train_step(make_batch(dataset, trainer.batch_rng, run.train), 1)
        assert "landmark" in report.terms
        assert report.weighted["landmark"] == pytest.approx(
            1000.0 * report.terms["landmark"]
        )

    def test_non_finite_loss_aborts_with_diagnostic(self):
        run = tiny_run_config()
        trainer = build_trainer(run)
        dataset = TensorDataset(smooth_images(4, 64, seed=7))
        with torch.no_grad():
            trainer.generator.const.fill_(float("nan"))
        with pytest.raises(TrainingDiverged) as err:
            trainer.train_step(make_batch(dataset, trainer.batch_rng, run.train), 1)
        assert "non-finite" in str(err.value)


class TestDeterminism:
    def test_two_seeded_runs_produce_identical_reports(self):
        def run_once():
            trainer = build_trainer(tiny_run_config())
            dataset = TensorDataset(smooth_images(4, 64, seed=5))
            return [r.json_line() for r in trainer.fit(dataset, steps=6)]

        assert run_once() == run_once()

    def test_different_seed_differs(self):
        a = build_trainer(tiny_run_config())
        b = build_trainer(tiny_run_config(seed=12))
        dataset = TensorDataset(smooth_images(4, 64, seed=5))
        ra = a.fit(dataset, steps=2)
        rb = b.fit(dataset, steps=2)
        assert ra[0].total != rb[0].total
