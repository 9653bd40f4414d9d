import json
import math

import numpy as np
import numpy.testing as npt
import pytest

import oracles
from decloss.config import RunConfig
from decloss.errors import ConfigError, DegeneratePartitionError, DimensionError
from decloss.fourier import EnhanceConfig
from decloss.losses import (
    ContrastConfig,
    LossWeights,
    cosine_similarity_matrix,
    decloss,
    l1_loss,
    loss_terms,
    psnr_mask,
    similarity_bundle,
    spatial_contrastive_loss,
    total_loss,
)
from decloss.tensor import Tensor, backward, finite_diff_check

ORTHO = np.eye(2)
ETA5 = dict(eta=5.0, t_pos=0.5, t_neg=1.5)
ETA = ContrastConfig().eta


class TestCosine:
    def test_identical_rows(self):
        a = np.random.default_rng(0).normal(size=(4, 6))
        npt.assert_allclose(np.diag(cosine_similarity_matrix(a, a).data), 1.0, rtol=1e-15)

    def test_orthogonal(self):
        s = cosine_similarity_matrix(ORTHO, ORTHO).data
        npt.assert_array_equal(s, np.eye(2))

    def test_zero_row(self):
        a = np.array([[0.0, 0.0], [1.0, 2.0]])
        s = cosine_similarity_matrix(a, a).data
        npt.assert_array_equal(s[0], 0.0)
        npt.assert_array_equal(s[:, 0], 0.0)

    def test_bounded(self):
        rng = np.random.default_rng(1)
        s = cosine_similarity_matrix(rng.normal(size=(7, 5)), rng.normal(size=(7, 5))).data
        assert np.all(np.abs(s) <= 1.0 + 1e-15)

    def test_matches_oracle(self):
        rng = np.random.default_rng(2)
        a, b = rng.normal(size=(2, 6, 9))
        npt.assert_allclose(cosine_similarity_matrix(a, b).data, oracles.cosine(a, b), atol=1e-15)

    def test_shape_mismatch(self):
        with pytest.raises(DimensionError):
            cosine_similarity_matrix(np.ones((3, 2)), np.ones((3, 4)))


class TestPsnrMask:
    def test_identical_patches(self):
        m = psnr_mask(np.ones((2, 4)))
        npt.assert_array_equal(m, 100.0)

    def test_one_pixel_half(self):
        a = np.zeros(4)
        b = a.copy()
        b[2] = 0.5
        m = psnr_mask(np.stack([a, b]))
        assert m[0, 1] == pytest.approx(6.0206, abs=1e-4)
        assert m[0, 1] == m[1, 0]

    def test_full_offset(self):
        m = psnr_mask(np.stack([np.zeros(4), np.ones(4)]))
        assert m[0, 1] == pytest.approx(-6.0206, abs=1e-4)

    def test_symmetric_and_clamped_diagonal(self):
        x = np.random.default_rng(3).random((10, 12))
        m = psnr_mask(x)
        npt.assert_array_equal(m, m.T)
        npt.assert_array_equal(np.diag(m), 100.0)
        npt.assert_allclose(m, oracles.mask(x), atol=1e-12)

    def test_max_value(self):
        x = np.stack([np.zeros(4), np.full(4, 0.5)])
        m = psnr_mask(x, ContrastConfig(max_value=255.0, mask_clamp=200.0))
        assert m[0, 1] == pytest.approx(-20 * math.log10(1.0 / 255.0), rel=1e-12)

    def test_near_duplicates_resolved(self):
        base = np.random.default_rng(4).random(48)
        m = psnr_mask(np.stack([base, base + 1e-9]), ContrastConfig(mask_clamp=500.0))
        assert m[0, 1] == pytest.approx(-20 * math.log10(math.sqrt(48) * 1e-9), rel=1e-6)


class TestBundle:
    def test_partition(self):
        sr, hr = oracles.twin_instance(0)
        flat = lambda x: oracles.patches(x, 4)
        b = similarity_bundle(flat(sr), flat(hr), ContrastConfig(patch_size=4))
        assert np.all(b.pos_indicator ^ b.neg_indicator)
        assert np.all(np.diag(b.pos_indicator))
        assert np.all(np.abs(b.s_sr_hr.data) <= 1 + 1e-15)


class TestClosedForm:
    def test_inside_exp(self):
        loss = spatial_contrastive_loss(ORTHO, ORTHO, ContrastConfig(**ETA5)).item()
        assert abs(loss - (-2.0)) < 1e-12

    def test_paper_literal(self):
        cfg = ContrastConfig(temp_mode="paper_literal", **ETA5)
        loss = spatial_contrastive_loss(ORTHO, ORTHO, cfg).item()
        assert abs(loss - (-(1 + math.log(3)))) < 1e-12

    def test_oracle_agrees(self):
        assert oracles.contrastive(ORTHO, ORTHO, 5.0) == pytest.approx(-2.0, abs=1e-15)


class TestOracleEquivalence:
    @pytest.mark.parametrize("seed", range(20))
    def test_inside_exp(self, seed):
        sr, hr = oracles.twin_instance(seed)
        got = decloss(sr, hr, EnhanceConfig(), ContrastConfig(patch_size=4)).item()
        assert abs(got - oracles.decloss(sr, hr, 4, ETA)) < 1e-10

    @pytest.mark.parametrize("seed", range(5))
    @pytest.mark.parametrize("include_self", [True, False])
    @pytest.mark.parametrize("literal", [True, False])
    def test_variants(self, seed, include_self, literal):
        sr, hr = oracles.twin_instance(100 + seed)
        mode = "paper_literal" if literal else "inside_exp"
        cfg = ContrastConfig(patch_size=4, temp_mode=mode, include_self=include_self, t_pos=0.7, t_neg=2.0)
        got = decloss(sr, hr, EnhanceConfig(alpha=1.5, mu=3.0), cfg).item()
        want = oracles.decloss(
            sr, hr, 4, ETA, alpha=1.5, mu=3.0, literal=literal, include_self=include_self, t_pos=0.7, t_neg=2.0
        )
        assert abs(got - want) < 1e-10

    def test_sr_equals_hr(self):
        _, hr = oracles.twin_instance(7)
        cfg = ContrastConfig(patch_size=4)
        b = similarity_bundle(oracles.patches(oracles.enhance(hr), 4), oracles.patches(oracles.enhance(hr), 4), cfg)
        npt.assert_allclose(np.diag(b.s_sr_hr.data), 1.0, rtol=1e-14)
        assert abs(decloss(hr, hr, EnhanceConfig(), cfg).item() - oracles.decloss(hr, hr, 4, ETA)) < 1e-10


class TestInvariances:
    @pytest.mark.parametrize("c", [0.5, 2.0, 10.0])
    def test_scale(self, c):
        sr, hr = oracles.twin_instance(11)
        cfg = ContrastConfig(patch_size=4)
        base = decloss(sr, hr, EnhanceConfig(), cfg).item()
        assert abs(decloss(c * sr, hr, EnhanceConfig(), cfg).item() - base) < 1e-8

    def test_batch_permutation(self):
        sr, hr = oracles.twin_instance(12, batch=4)
        cfg = ContrastConfig(patch_size=4)
        perm = [2, 0, 3, 1]
        a = decloss(sr, hr, EnhanceConfig(), cfg).item()
        b = decloss(sr[perm], hr[perm], EnhanceConfig(), cfg).item()
        assert abs(a - b) < 1e-12

    def test_literal_temperature_degeneracy(self):
        sr, hr = oracles.twin_instance(13)

        def run(t_pos):
            cfg = ContrastConfig(patch_size=4, temp_mode="paper_literal", t_pos=t_pos, t_neg=1.5)
            x = Tensor(sr, requires_grad=True)
            loss = decloss(x, hr, EnhanceConfig(), cfg)
            backward(loss)
            return loss.item(), x.grad

        ref_loss, ref_grad = run(1.0)
        for t in (0.5, 1.0, 1.5, 2.0, 4.0, 8.0):
            loss, grad = run(t)
            # L(t) - L(1) = log t_pos - log 1
            assert abs((loss - ref_loss) - math.log(t)) < 1e-10
            npt.assert_array_equal(grad, ref_grad)

    def test_inside_exp_depends_on_temperature(self):
        sr, hr = oracles.twin_instance(14)
        grads = []
        for t in (0.5, 2.0):
            x = Tensor(sr, requires_grad=True)
            backward(decloss(x, hr, EnhanceConfig(), ContrastConfig(patch_size=4, t_pos=t)))
            grads.append(x.grad)
        assert np.abs(grads[0] - grads[1]).max() > 1e-6


class TestDegenerate:
    def test_no_negatives(self):
        x = np.ones((3, 4))
        with pytest.raises(DegeneratePartitionError) as exc:
            spatial_contrastive_loss(x, x, ContrastConfig(**ETA5))
        assert exc.value.row == 0 and exc.value.missing == "negative"

    def test_no_positives_without_self(self):
        with pytest.raises(DegeneratePartitionError) as exc:
            spatial_contrastive_loss(ORTHO, ORTHO, ContrastConfig(include_self=False, **ETA5))
        assert exc.value.missing == "positive"

    @pytest.mark.parametrize(
        "kw", [{"t_pos": 0.0}, {"t_neg": -1.0}, {"max_value": 0.0}, {"eta": 200.0}, {"temp_mode": "x"}]
    )
    def test_bad_config(self, kw):
        with pytest.raises(ConfigError):
            ContrastConfig(**kw)


class TestGradient:
    @pytest.mark.parametrize("seed", range(5))
    def test_decloss(self, seed):
        rng = np.random.default_rng(seed)
        hr = Tensor(rng.random((2, 3, 8, 8)))
        f = lambda x: decloss(x, hr, EnhanceConfig(), ContrastConfig(patch_size=4))
        assert finite_diff_check(f, rng.random((2, 3, 8, 8))) < 1e-4

    def test_hr_gets_no_gradient(self):
        sr, hr = oracles.twin_instance(3)
        h = Tensor(hr, requires_grad=True)
        x = Tensor(sr, requires_grad=True)
        backward(decloss(x, h, EnhanceConfig(), ContrastConfig(patch_size=4)))
        assert h.grad is None and x.grad is not None


class TestL1:
    def test_equal(self):
        x = np.random.default_rng(0).random((1, 3, 4, 4))
        assert l1_loss(x, x).item() == 0.0

    def test_half_offset(self):
        hr = np.zeros((1, 1, 2, 2))
        assert l1_loss(hr + 0.5, hr).item() == 2.0
        assert l1_loss(hr + 0.5, hr, reduction="mean").item() == 0.5

    def test_gradient_is_sign(self):
        rng = np.random.default_rng(1)
        sr, hr = rng.random((2, 1, 3, 4, 4))
        x = Tensor(sr, requires_grad=True)
        backward(l1_loss(x, hr))
        npt.assert_array_equal(x.grad, np.sign(sr - hr))

    def test_tie_subgradient_zero(self):
        x = Tensor(np.ones((1, 1, 2, 2)), requires_grad=True)
        backward(l1_loss(x, np.ones((1, 1, 2, 2))))
        npt.assert_array_equal(x.grad, 0.0)

    def test_shape_mismatch(self):
        with pytest.raises(DimensionError):
            l1_loss(np.ones((1, 1, 2, 2)), np.ones((1, 1, 2, 3)))


class TestTotal:
    def test_l1_only(self):
        sr, hr = oracles.twin_instance(20)
        got = total_loss(sr, hr, LossWeights(1, 0, 0), ccfg=ContrastConfig(patch_size=4)).item()
        assert got == l1_loss(sr, hr).item()

    def test_decloss_only(self):
        sr, hr = oracles.twin_instance(21)
        cfg = ContrastConfig(patch_size=4)
        got = total_loss(sr, hr, LossWeights(0, 0, 1), ccfg=cfg).item()
        assert got == decloss(sr, hr, EnhanceConfig(), cfg).item()

    def test_weighted_sum(self):
        sr, hr = oracles.twin_instance(22)
        cfg = ContrastConfig(patch_size=4)
        w = LossWeights(1e-2, 0.0, 3e-5)
        want = 1e-2 * l1_loss(sr, hr).item() + 3e-5 * decloss(sr, hr, EnhanceConfig(), cfg).item()
        assert total_loss(sr, hr, w, ccfg=cfg).item() == pytest.approx(want, rel=1e-14)

    def test_perceptual_required(self):
        sr, hr = oracles.twin_instance(23)
        with pytest.raises(ConfigError):
            total_loss(sr, hr, LossWeights.paper(), ccfg=ContrastConfig(patch_size=4))

    def test_paper_weights_with_hook(self):
        sr, hr = oracles.twin_instance(24)
        cfg = ContrastConfig(patch_size=4)
        hook = lambda a, b: l1_loss(a, b, "mean")
        terms = loss_terms(sr, hr, LossWeights.paper(), ccfg=cfg, perceptual_hook=hook)
        assert set(terms) == {"l1", "lp", "ld"}
        want = 1e-2 * terms["l1"].item() + terms["lp"].item() + 3e-5 * terms["ld"].item()
        got = total_loss(sr, hr, LossWeights.paper(), ccfg=cfg, perceptual_hook=hook).item()
        assert got == pytest.approx(want, rel=1e-14)

    def test_paper_weights_echoed(self):
        cfg = RunConfig.parse("weights.w1 = 1e-2\nweights.w2 = 1\nweights.w3 = 3e-5\n")
        echo = json.loads(json.dumps(cfg.to_dict()))
        assert echo["weights"] == {"w1": 0.01, "w2": 1.0, "w3": 3e-05}
        assert "weights.w3 = 3e-05" in cfg.dump()

    def test_bad_weights(self):
        with pytest.raises(ConfigError):
            LossWeights(w1=-1.0)
        with pytest.raises(ConfigError):
            LossWeights(w3=float("nan"))
