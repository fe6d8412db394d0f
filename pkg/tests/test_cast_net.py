import importlib
import math
from dataclasses import replace

import numpy as np
import pytest

from cadence_forge.cast import (CasaModule, CastModel, ExperimentConfig, FusionBlock, ModelConfig, TrainedBundle,
                                cast_loss, desk_config, paper_config, smooth_targets, train)
from cadence_forge.cast.data import augmented_inputs, mix_batch, model_inputs, stack_inputs, without_augmentation
from cadence_forge.cast.inference import (load_ensemble, predict_tta, predict_tta_batch, save_bundle,
                                          shift_axis, tta_view)
from cadence_forge.cast.train import build_model, predict_proba
from cadence_forge.cast.variants import VARIANTS, ablation_variants, apply_variant, variant_names
from cadence_forge.errors import TrainingDiverged, ValidationError
from cadence_forge.nn import Tensor, no_grad, precision

train_module = importlib.import_module("cadence_forge.cast.train")


def tiny_exp(num_classes=4, epochs=2, **model_kw):
    exp = desk_config(num_classes, seed=5)
    return replace(exp, train=replace(exp.train, epochs=epochs, warmup_epochs=0, batch_size=8),
                   model=replace(exp.model, **model_kw))


class TestCasa:
    def test_zero_gate_halves_inputs(self):
        with precision(np.float64):
            casa = CasaModule(np.random.default_rng(0))
            casa.gate_out.weight.data[:] = 0
            casa.gate_out.bias.data[:] = 0
            x = np.random.default_rng(1).normal(size=(2, 3, 8, 8))
            out, alphas = casa(x)
        assert np.all(alphas.data == 0.5)
        assert np.array_equal(out.data, 0.5 * x)

    def test_antenna_permutation_equivariance(self):
        with precision(np.float64):
            casa = CasaModule(np.random.default_rng(0))
            casa.eval()
            x = np.random.default_rng(2).normal(size=(2, 3, 6, 6))
            perm = [2, 0, 1]
            _, a = casa(x)
            _, b = casa(x[:, perm])
        np.testing.assert_allclose(b.data, a.data[:, perm], atol=1e-12)

    def test_parameter_count(self):
        counts = CasaModule(np.random.default_rng(0)).parameter_breakdown()
        assert counts == {"conv": 160, "bn": 32, "mha": 1088, "norm": 32, "gate_mlp": 145, "total": 1457}
        assert CasaModule(np.random.default_rng(0), positional=True).parameter_breakdown()["total"] == 1457 + 48

    def test_rejects_wrong_antenna_count(self):
        with pytest.raises(ValidationError):
            CasaModule(np.random.default_rng(0))(np.zeros((1, 2, 4, 4)))


class TestFusion:
    def _block(self, bias):
        with precision(np.float64):
            block = FusionBlock(np.random.default_rng(0), d=16, heads=4, dropout=0.0)
            block.gate.weight.data[:] = 0
            block.gate.bias.data[:] = bias
            rng = np.random.default_rng(1)
            f_rtm, f_cvd = Tensor(rng.normal(size=(3, 16))), Tensor(rng.normal(size=(3, 16)))
            return block(f_rtm, f_cvd), block, f_rtm

    def test_gate_closed_returns_rtm(self):
        out, block, f_rtm = self._block(-1000.0)
        assert np.all(block.last_gate == 0.0)
        assert np.array_equal(out.data, f_rtm.data)

    def test_gate_open_returns_attended(self):
        out, block, _ = self._block(1000.0)
        assert np.all(block.last_gate == 1.0)
        assert np.array_equal(out.data, block.last_attended)

    def test_shape_mismatch(self):
        block = FusionBlock(np.random.default_rng(0), d=8, heads=2)
        with pytest.raises(ValidationError):
            block(Tensor(np.zeros((2, 8))), Tensor(np.zeros((3, 8))))

    @pytest.mark.parametrize("mode", ["symmetric", "concat"])
    def test_other_modes_shape(self, mode):
        block = FusionBlock(np.random.default_rng(0), d=8, heads=2, mode=mode)
        assert block(Tensor(np.ones((2, 8))), Tensor(np.ones((2, 8)))).shape == (2, 8)


class TestLoss:
    def test_uniform_logits_closed_form(self):
        z = Tensor(np.zeros((4, 126)), dtype=np.float64)
        loss = cast_loss(z, z, z, np.arange(4), eps_ls=0.1, lambda_aux=0.3)
        assert loss.item() == pytest.approx(1.6 * math.log(126), abs=1e-9)
        assert loss.item() == pytest.approx(7.738, abs=0.001)

    def test_main_only_when_aux_missing_or_off(self):
        z = Tensor(np.random.default_rng(0).normal(size=(3, 5)))
        base = cast_loss(z, None, None, [0, 1, 2])
        assert cast_loss(z, z, z, [0, 1, 2], lambda_aux=0.0).item() == pytest.approx(base.item())

    def test_perfect_logits_without_smoothing(self):
        z = Tensor(np.array([[60.0, -60.0, -60.0]]), dtype=np.float64)
        assert cast_loss(z, z, z, [0], eps_ls=0.0).item() < 1e-20

    def test_smooth_targets(self):
        t = smooth_targets([1], 4, 0.1)
        np.testing.assert_allclose(t, [[0.025, 0.925, 0.025, 0.025]])
        np.testing.assert_allclose(t.sum(), 1.0)

    def test_bad_shapes(self):
        with pytest.raises(ValidationError):
            cast_loss(Tensor(np.zeros((2, 4))), Tensor(np.zeros((2, 3))), None, [0, 1])
        with pytest.raises(ValidationError):
            cast_loss(Tensor(np.zeros((2, 4))), None, None, [0, 5])


class TestModel:
    def test_forward_shapes(self):
        model = CastModel(ModelConfig(num_classes=6, d_model=32, fusion_heads=4))
        x = np.random.default_rng(0).normal(size=(2, 3, 32, 32)).astype(np.float32)
        out = model(x, x)
        assert out["logits"].shape == (2, 6)
        assert out["logits_rtm"].shape == out["logits_cvd"].shape == (2, 6)
        assert out["alphas_rtm"].shape == (2, 3)

    @pytest.mark.parametrize("streams", ["rtm", "cvd"])
    def test_single_stream(self, streams):
        model = CastModel(ModelConfig(num_classes=3, d_model=16, fusion_heads=2, streams=streams))
        x = np.zeros((1, 3, 16, 16), dtype=np.float32)
        out = model(x if streams == "rtm" else None, x if streams == "cvd" else None)
        assert out["logits"].shape == (1, 3) and "logits_rtm" not in out

    def test_gradient_reaches_cvd_encoder(self):
        model = CastModel(ModelConfig(num_classes=4, d_model=32, fusion_heads=4, fusion_dropout=0.0))
        x = np.random.default_rng(0).normal(size=(2, 3, 16, 16)).astype(np.float32)
        out = model(x, x)
        cast_loss(out["logits"], None, None, [0, 1]).backward()
        assert np.abs(model.enc_cvd.convs[0].weight.grad).sum() > 0
        assert np.abs(model.casa_cvd.conv.weight.grad).sum() > 0

    def test_end_to_end_gradient_probe(self):
        cfg = ModelConfig(num_classes=8, head_dropout=0.0, fusion_dropout=0.0, seed=3)
        with precision(np.float64):
            model = CastModel(cfg)
            rng = np.random.default_rng(0)
            xr, xc = rng.normal(size=(2, 3, 32, 32)), rng.normal(size=(2, 3, 32, 32))
            y = np.array([1, 6])

            def loss():
                out = model(xr, xc)
                return cast_loss(out["logits"], out["logits_rtm"], out["logits_cvd"], y)

            loss().backward()
            params = model.parameters()
            picks = []
            for _ in range(20):
                p = params[int(rng.integers(len(params)))]
                picks.append((p, tuple(int(rng.integers(s)) for s in p.shape)))
            h = 1e-5
            for p, idx in picks:
                old = p.data[idx]
                p.data[idx] = old + h
                fp = loss().item()
                p.data[idx] = old - h
                fm = loss().item()
                p.data[idx] = old
                num = (fp - fm) / (2 * h)
                ana = p.grad[idx]
                assert abs(ana - num) <= 1e-3 * max(abs(num), abs(ana)) + 1e-9, (idx, ana, num)

    def test_gate_fallback_end_to_end(self):
        with precision(np.float64):
            model = CastModel(ModelConfig(num_classes=5, d_model=32, fusion_heads=4)).eval()
            model.fusion.gate.weight.data[:] = 0
            model.fusion.gate.bias.data[:] = -1000.0
            x = np.random.default_rng(0).normal(size=(2, 3, 16, 16))
            with no_grad():
                out = model(x, x * 0.5)
                rtm_path = model.head_main(out["f_rtm"])
        assert np.array_equal(out["logits"].data, rtm_path.data)

    def test_eval_is_deterministic(self):
        model = CastModel(ModelConfig(num_classes=4, d_model=32, fusion_heads=4)).eval()
        x = np.random.default_rng(0).normal(size=(2, 3, 16, 16)).astype(np.float32)
        with no_grad():
            assert np.array_equal(model(x, x)["logits"].data, model(x, x)["logits"].data)

    def test_same_seed_same_weights(self):
        a = CastModel(ModelConfig(num_classes=4, d_model=32, fusion_heads=4, seed=9)).state_dict()
        b = CastModel(ModelConfig(num_classes=4, d_model=32, fusion_heads=4, seed=9)).state_dict()
        assert all(np.array_equal(a[k], b[k]) for k in a)


class TestData:
    def test_input_shapes(self, small_dataset):
        exp = tiny_exp()
        xr, xc = model_inputs(small_dataset.samples[0], exp)
        assert xr.shape == xc.shape == (3, 32, 32) and xr.dtype == np.float32

    def test_augmentation_keyed_by_seed_epoch_index(self, small_dataset):
        exp = tiny_exp()
        s = small_dataset.samples[0]
        a = augmented_inputs(s, exp, 1, 0, 0)
        assert all(np.array_equal(u, v) for u, v in zip(a, augmented_inputs(s, exp, 1, 0, 0)))
        assert not all(np.array_equal(u, v) for u, v in zip(a, augmented_inputs(s, exp, 1, 1, 0)))

    def test_disabled_augmentation_equals_eval_inputs(self, small_dataset):
        exp = without_augmentation(tiny_exp())
        s = small_dataset.samples[3]
        for u, v in zip(augmented_inputs(s, exp, 1, 0, 3), model_inputs(s, exp)):
            np.testing.assert_array_equal(u, v)

    def test_mix_batch(self):
        exp = tiny_exp()
        rng = np.random.default_rng(0)
        xr = rng.normal(size=(6, 3, 8, 8)).astype(np.float32)
        y = np.eye(4)[[0, 1, 2, 3, 0, 1]]
        seen = set()
        for s in range(30):
            r = np.random.Generator(np.random.Philox(s))
            mr, mc, yy, event = mix_batch(xr, xr.copy(), y, exp.augment, r)
            seen.add(event)
            np.testing.assert_allclose(yy.sum(axis=1), 1.0)
            np.testing.assert_array_equal(mr, mc)
        assert seen == {"none", "mixup", "cutmix"}
        assert mix_batch(xr, xr, y, exp.augment, rng, allowed=False)[3] == "none"


class TestTraining:
    def test_train_smoke_and_determinism(self, small_dataset):
        exp = tiny_exp(epochs=3)
        tr, va = small_dataset.subset("train"), small_dataset.subset("val")
        a = train(exp, tr, va)
        b = train(exp, tr, va)
        assert len(a.log) == 3
        assert {"val_acc_final", "val_acc_ema", "val_acc_swa", "val_acc_majority"} <= set(a.metrics)
        assert all(np.array_equal(a.final[k], b.final[k]) for k in a.final)
        assert [r["train_loss"] for r in a.log] == [r["train_loss"] for r in b.log]
        assert a.log[-1]["mix_events"]["mixup"] == a.log[-1]["mix_events"]["cutmix"] == 0

    def test_divergence_is_reported(self, small_dataset, monkeypatch):
        monkeypatch.setattr(train_module, "cast_loss", lambda *a, **k: Tensor(np.array(np.nan)))
        with pytest.raises(TrainingDiverged):
            train(tiny_exp(), small_dataset.subset("train"), [])

    def test_bad_labels(self, small_dataset):
        with pytest.raises(ValidationError):
            train(tiny_exp(num_classes=2), small_dataset.subset("train"), [])


class TestInference:
    def test_shift_axis(self):
        x = np.arange(5.0)[None]
        np.testing.assert_array_equal(shift_axis(x, 2, 1, -9.0), [[-9, -9, 0, 1, 2]])

    def test_views(self, small_dataset):
        s = small_dataset.samples[0]
        np.testing.assert_array_equal(tta_view(s, "time_reversed").data, s.data[:, ::-1])
        assert tta_view(s, "range_shift").data.shape == s.data.shape
        with pytest.raises(ValidationError):
            tta_view(s, "rotate")

    def test_tta_probabilities_sum_to_one(self, small_dataset):
        exp = tiny_exp()
        model = build_model(exp)
        p = predict_tta_batch([model], small_dataset.samples[:5], exp)
        assert p.shape == (5, 4)
        np.testing.assert_allclose(p.sum(axis=1), 1.0, atol=1e-6)

    def test_identical_views_reduce_to_single(self, small_dataset):
        exp = tiny_exp()
        model = build_model(exp)
        s = small_dataset.samples[2]
        xr, xc, _ = stack_inputs([s], exp)
        single = predict_proba(model, xr, xc)[0]
        np.testing.assert_allclose(predict_tta(model, s, exp, views=("original",) * 5), single, atol=1e-12)

    def test_seven_identical_members_equal_single_model(self, small_dataset, tmp_path):
        exp = tiny_exp()
        state = build_model(exp).state_dict()
        bundle = TrainedBundle(config=exp, final=state, ema=state, swa=state,
                               top_k=[(0.5, i, state) for i in range(5)])
        paths = save_bundle(bundle, tmp_path)
        assert len(paths) == 8
        models, exp2, names = load_ensemble(tmp_path)
        assert len(models) == 7 and "final" not in names
        for k, v in models[0].state_dict().items():
            assert v.tobytes() == state[k].tobytes()
        samples = small_dataset.samples[:4]
        ens = predict_tta_batch(models, samples, exp2)
        one = predict_tta_batch([build_model(exp, state)], samples, exp)
        np.testing.assert_allclose(ens, one, atol=1e-12)

    def test_single_member_ensemble_is_plain_tta(self, small_dataset):
        exp = tiny_exp()
        model = build_model(exp)
        s = small_dataset.samples[1]
        np.testing.assert_array_equal(predict_tta([model], s, exp), predict_tta(model, s, exp))

    def test_missing_member(self, tmp_path):
        with pytest.raises(ValidationError):
            load_ensemble(tmp_path, members=["ema"])


class TestVariants:
    TABLE = ["full", "no_linearize", "hamming", "no_zero_pad", "no_casa", "casa_1head", "concat_fusion",
             "symmetric_fusion", "rtm_only", "cvd_only", "no_aux", "no_physics_aug", "no_swa_ema", "no_mix",
             "swap_backbones", "shared_backbone"]

    def test_registry_covers_table(self):
        assert variant_names() == self.TABLE
        assert len(VARIANTS) == 16

    @pytest.mark.parametrize("name", TABLE)
    def test_variant_is_runnable(self, name, small_dataset):
        exp = apply_variant(name, tiny_exp())
        xr, xc, _ = stack_inputs(small_dataset.samples[:2], exp)
        model = build_model(exp)
        with no_grad():
            assert model(xr, xc)["logits"].shape == (2, 4)

    def test_each_variant_changes_one_thing(self):
        base = tiny_exp()
        changed = {name: cfg for name, (_, cfg) in ablation_variants(base).items()}
        assert changed["full"] == base
        assert all(cfg != base for name, cfg in changed.items() if name != "full")

    def test_unknown_variant(self):
        with pytest.raises(ValidationError):
            apply_variant("no_such_thing", tiny_exp())


def test_config_round_trip():
    exp = paper_config()
    assert ExperimentConfig.from_dict(exp.to_dict()) == exp
    assert paper_config().model.fusion_dropout == 0.1
    with pytest.raises(ValidationError):
        ExperimentConfig.from_dict({"model": {"bogus": 1}})
