import math

import pytest
import torch
from hypothesis import given, settings
from hypothesis import strategies as st

from styleswap.errors import ArgumentError, NumericError, ShapeError
from styleswap.generator import Discriminator
from styleswap.losses import (
    SPARSE_LANDMARK_SUBSET,
    LossWeights,
    adv_d_loss,
    adv_g_loss,
    id_loss,
    landmark_loss,
    param_losses,
    r1_penalty,
    recon_loss,
    to_zero_based,
    total_loss,
    weighted_terms,
)
from styleswap.surrogates import AttributePack

from oracles import check_gradient, fd_gradient


def pack_from(shape, pose, expression, id_embedding=None, landmarks=None):
    return AttributePack(
        id_embedding=id_embedding if id_embedding is not None else torch.zeros(1, 4),
        shape=shape,
        pose=pose,
        expression=expression,
        landmarks=landmarks if landmarks is not None else torch.zeros(1, 68, 2),
    )


class TestIdLoss:
    def test_identical_embeddings(self):
        e = torch.nn.functional.normalize(torch.randn(3, 8), dim=-1)
        assert float(id_loss(e, e)) == pytest.approx(0.0, abs=1e-6)

    def test_orthogonal(self):
        a = torch.tensor([[1.0, 0.0]])
        b = torch.tensor([[0.0, 1.0]])
        assert float(id_loss(a, b)) == pytest.approx(1.0)

    def test_opposite(self):
        a = torch.tensor([[1.0, 0.0]])
        assert float(id_loss(a, -a)) == pytest.approx(2.0)

    def test_non_finite_rejected(self):
        a = torch.tensor([[float("nan"), 0.0]])
        with pytest.raises(NumericError):
            id_loss(a, a)

    def test_gradient(self):
        torch.manual_seed(0)
        e_src = torch.nn.functional.normalize(torch.randn(2, 6, dtype=torch.float64), dim=-1)
        e0 = torch.nn.functional.normalize(torch.randn(2, 6, dtype=torch.float64), dim=-1)
        check_gradient(lambda e: id_loss(e, e_src), e0)


class TestReconLoss:
    def test_identity_is_zero(self, suite64):
        x = torch.randn(2, 3, 64, 64)
        assert float(recon_loss(x, x, suite64.perceptual_feats)) == 0.0

    def test_half_offset_l1(self):
        x = torch.randn(2, 3, 8, 8)
        assert float(recon_loss(x + 0.5, x, None)) == pytest.approx(0.5, rel=1e-5)

    def test_feature_term_matches_manual_formula(self, suite64):
        a = torch.randn(1, 3, 64, 64)
        b = torch.randn(1, 3, 64, 64)
        total = float(recon_loss(a, b, suite64.perceptual_feats))
        l1 = float((a - b).abs().mean())
        manual = l1 + sum(
            float((fa - fb).pow(2).mean())
            for fa, fb in zip(suite64.perceptual_feats(a), suite64.perceptual_feats(b))
        )
        assert total == pytest.approx(manual, rel=1e-6)

    def test_l1_symmetry(self):
        a = torch.randn(1, 3, 4, 4)
        b = torch.randn(1, 3, 4, 4)
        assert float(recon_loss(a, b, None)) == pytest.approx(float(recon_loss(b, a, None)))

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            recon_loss(torch.zeros(1, 3, 4, 4), torch.zeros(1, 3, 5, 5), None)

    def test_gradient(self, suite8):
        torch.manual_seed(1)
        tgt = torch.randn(1, 3, 8, 8, dtype=torch.float64)
        x0 = torch.randn(1, 3, 8, 8, dtype=torch.float64)
        check_gradient(lambda x: recon_loss(x, tgt, suite8.perceptual_feats), x0)


class TestAdversarial:
    def test_generator_loss_at_zero_logit(self):
        assert float(adv_g_loss(torch.zeros(4))) == pytest.approx(math.log(2.0), rel=1e-6)

    def test_discriminator_loss_at_zero_logits(self):
        val = adv_d_loss(torch.zeros(3), torch.zeros(3))
        assert float(val) == pytest.approx(2.0 * math.log(2.0), rel=1e-6)

    def test_constant_discriminator_has_zero_r1(self):
        class Flat(torch.nn.Module):
            def forward(self, x):
                return x.new_full((x.shape[0],), 1.23) + 0.0 * x.sum(dim=(1, 2, 3))

        val = r1_penalty(Flat(), torch.randn(2, 3, 4, 4))
        assert float(val) == pytest.approx(0.0, abs=1e-12)

    def test_r1_value_matches_finite_difference_gradients(self):
        d = Discriminator(8, base_channels=4, max_channels=16, seed=3).double()
        torch.manual_seed(2)
        x = torch.randn(1, 3, 8, 8, dtype=torch.float64)
        numeric = fd_gradient(lambda img: d(img).sum(), x.clone())
        expected = float(numeric.pow(2).sum())
        got = float(r1_penalty(d, x).detach())
        assert got == pytest.approx(expected, rel=1e-3)

    def test_adv_gradient(self):
        torch.manual_seed(3)
        x0 = torch.randn(5, dtype=torch.float64)
        check_gradient(adv_g_loss, x0)
        check_gradient(lambda l: adv_d_loss(l, x0), x0.clone())

    def test_non_finite_rejected(self):
        with pytest.raises(NumericError):
            adv_g_loss(torch.tensor([float("inf")]))


class TestParamLosses:
    def test_all_identical_gives_zeros(self):
        p = pack_from(torch.randn(1, 5), torch.randn(1, 3), torch.randn(1, 4))
        l_shape, l_pose, l_exp = param_losses(p, p, p)
        assert (float(l_shape), float(l_pose), float(l_exp)) == (0.0, 0.0, 0.0)

    def test_unit_offset_gives_one(self):
        base = torch.zeros(1, 4)
        unit = torch.tensor([[0.5, 0.5, 0.5, 0.5]])  # L2 norm 1
        swap = pack_from(unit, base.clone(), base.clone())
        src = pack_from(base, base, base)
        l_shape, _, _ = param_losses(swap, src, src)
        assert float(l_shape) == pytest.approx(1.0)

    def test_crafted_distances_match_norm_oracle(self):
        # Hand-computed: shape diff (3,4) -> 5; pose diff (1,1,1,1) -> 2;
        # expression diff (2,0) -> 2.
        swap = pack_from(
            torch.tensor([[3.0, 4.0]]),
            torch.tensor([[1.0, 1.0, 1.0, 1.0]]),
            torch.tensor([[2.0, 0.0]]),
        )
        src = pack_from(torch.zeros(1, 2), torch.zeros(1, 4), torch.zeros(1, 2))
        tgt = pack_from(torch.ones(1, 2), torch.zeros(1, 4), torch.zeros(1, 2))
        l_shape, l_pose, l_exp = param_losses(swap, src, tgt)
        assert float(l_shape) == pytest.approx(5.0)
        assert float(l_pose) == pytest.approx(2.0)
        assert float(l_exp) == pytest.approx(2.0)

    def test_directionality_along_interpolation(self):
        # Moving the swap pack from the source toward the target must raise
        # the shape loss and lower the pose/expression losses, monotonically.
        g = torch.Generator().manual_seed(4)
        src = pack_from(
            torch.randn(1, 6, generator=g), torch.randn(1, 3, generator=g),
            torch.randn(1, 5, generator=g),
        )
        tgt = pack_from(
            torch.randn(1, 6, generator=g), torch.randn(1, 3, generator=g),
            torch.randn(1, 5, generator=g),
        )
        shapes, poses, exps = [], [], []
        for t in torch.linspace(0, 1, 100):
            swap = pack_from(
                (1 - t) * src.shape + t * tgt.shape,
                (1 - t) * src.pose + t * tgt.pose,
                (1 - t) * src.expression + t * tgt.expression,
            )
            l_shape, l_pose, l_exp = param_losses(swap, src, tgt)
            shapes.append(float(l_shape))
            poses.append(float(l_pose))
            exps.append(float(l_exp))
        assert all(b >= a for a, b in zip(shapes, shapes[1:]))
        assert all(b <= a for a, b in zip(poses, poses[1:]))
        assert all(b <= a for a, b in zip(exps, exps[1:]))

    def test_dim_mismatch(self):
        a = pack_from(torch.zeros(1, 3), torch.zeros(1, 2), torch.zeros(1, 2))
        b = pack_from(torch.zeros(1, 4), torch.zeros(1, 2), torch.zeros(1, 2))
        with pytest.raises(ShapeError):
            param_losses(a, b, b)

    def test_gradient(self):
        torch.manual_seed(5)
        ref = torch.randn(2, 4, dtype=torch.float64)
        x0 = torch.randn(2, 4, dtype=torch.float64)
        check_gradient(lambda x: (x - ref).flatten(1).norm(dim=1).mean(), x0)


class TestLandmarkLoss:
    def test_identical_is_zero(self):
        q = torch.rand(68, 2)
        assert float(landmark_loss(q, q)) == 0.0

    def test_single_point_offset_oracle(self):
        # One subset point moved by (0.1, 0): per-point |dx|+|dy| sums to 0.1,
        # averaged over the 6 subset points -> 0.1/6.
        q = torch.rand(68, 2)
        q2 = q.clone()
        q2[SPARSE_LANDMARK_SUBSET[0] - 1, 0] += 0.1
        assert float(landmark_loss(q2, q)) == pytest.approx(0.1 / 6, rel=1e-5)

    def test_full_set_uniform_offset(self):
        q = torch.rand(68, 2)
        q2 = q.clone()
        q2[:, 0] += 0.2
        full = tuple(range(1, 69))
        assert float(landmark_loss(q2, q, subset=full)) == pytest.approx(0.2, rel=1e-5)

    def test_index_conversion(self):
        assert to_zero_based(SPARSE_LANDMARK_SUBSET, 68) == (8, 30, 36, 45, 48, 54)

    def test_out_of_range_index(self):
        q = torch.rand(68, 2)
        with pytest.raises(ArgumentError):
            landmark_loss(q, q, subset=(0,))
        with pytest.raises(ArgumentError):
            landmark_loss(q, q, subset=(69,))

    def test_gradient(self):
        torch.manual_seed(6)
        gt = torch.rand(68, 2, dtype=torch.float64)
        q0 = torch.rand(68, 2, dtype=torch.float64)
        check_gradient(lambda q: landmark_loss(q, gt), q0)


class TestTotalLoss:
    UNIT_TERMS = {"id": 1.0, "recon": 1.0, "adv": 1.0, "shape": 1.0, "pose": 1.0,
                  "expression": 1.0}

    def test_all_zero_terms(self):
        terms = {k: 0.0 for k in self.UNIT_TERMS}
        assert total_loss(terms, LossWeights(), step=1).total == 0.0

    def test_unit_terms_with_default_weights(self):
        # 2 + 1 + 0.1 + 5 + 1 + 1 = 10.1 with landmark weight 0 and no r1.
        report = total_loss(self.UNIT_TERMS, LossWeights(), step=1)
        assert report.total == pytest.approx(10.1, rel=1e-9)

    def test_r1_fires_on_period(self):
        terms = {k: 0.0 for k in self.UNIT_TERMS} | {"r1": 1.0}
        at_16 = total_loss(terms, LossWeights(), step=16)
        at_17 = total_loss(terms, LossWeights(), step=17)
        assert at_16.total == pytest.approx(10.0)
        assert at_17.total == 0.0
        assert "r1" in at_16.weighted and "r1" not in at_17.weighted

    def test_report_total_is_weighted_sum(self):
        g = torch.Generator().manual_seed(7)
        terms = {k: float(torch.rand((), generator=g)) for k in self.UNIT_TERMS}
        w = LossWeights()
        report = total_loss(terms, w, step=3)
        manual = sum(w.for_term(k) * v for k, v in terms.items())
        assert report.total == pytest.approx(manual, rel=1e-6)

    def test_unknown_term_rejected(self):
        with pytest.raises(ArgumentError):
            weighted_terms({"sharpness": 1.0}, LossWeights(), 0)

    def test_json_line_round_trips(self):
        import json

        report = total_loss(self.UNIT_TERMS, LossWeights(), step=5, extras={"d_adv": 0.25})
        record = json.loads(report.json_line(lr=1e-4))
        assert record["step"] == 5
        assert record["lr"] == 1e-4
        assert record["d_adv"] == 0.25
        assert record["total"] == pytest.approx(10.1)


@given(
    values=st.lists(st.floats(0, 10), min_size=6, max_size=6),
    step=st.integers(0, 64),
)
@settings(max_examples=50, deadline=None)
def test_every_loss_total_nonnegative_and_consistent(values, step):
    names = ("id", "recon", "adv", "shape", "pose", "expression")
    terms = dict(zip(names, values))
    w = LossWeights()
    report = total_loss(terms, w, step)
    assert report.total >= 0
    assert report.total == pytest.approx(
        sum(w.for_term(k) * v for k, v in terms.items()), rel=1e-6, abs=1e-9
    )
