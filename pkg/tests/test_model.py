import dataclasses

import numpy as np
import pytest

from snet import model as M
from snet.tensor import Tensor, backward


@pytest.fixture
def micro_config():
    return M.SNetConfig(channels=8, units=3, unit_kind="advanced")


@pytest.fixture
def micro_model(micro_config):
    return M.init_params(micro_config, seed=7)


def zero_unit_weights(net):
    for unit in net.units:
        for p in unit:
            p.weights.data[:] = 0
            p.bias.data[:] = 0


def random_input(rng, config, n=1, h=8, w=8, dtype=np.float32):
    return Tensor(rng.standard_normal((n, config.image_channels, h, w)).astype(dtype))


class TestConfig:
    def test_defaults_are_paper_scale(self):
        cfg = M.SNetConfig()
        assert cfg.channels == 256 and cfg.units == 8
        assert cfg.encoder_kernels == (5, 3) and cfg.decoder_kernels == (3, 5)

    def test_kernel_symmetry_enforced(self):
        with pytest.raises(ValueError, match="mirror"):
            M.SNetConfig(encoder_kernels=(5, 3), decoder_kernels=(5, 3))

    def test_basic_validation(self):
        with pytest.raises(ValueError):
            M.SNetConfig(units=0)
        with pytest.raises(ValueError):
            M.SNetConfig(channels=0)
        with pytest.raises(ValueError):
            M.SNetConfig(unit_kind="fancy")
        with pytest.raises(ValueError):
            M.SNetConfig(loss_mode="both")
        with pytest.raises(ValueError):
            M.SNetConfig(encoder_kernels=(4, 3), decoder_kernels=(3, 4))

    def test_head_indices(self):
        assert M.SNetConfig(units=3).head_indices == (1, 2, 3)
        assert M.SNetConfig(units=3, include_metric0=True).head_indices == (0, 1, 2, 3)

    def test_dict_round_trip_and_unknown_keys(self):
        cfg = M.SNetConfig(channels=32, units=4)
        assert M.SNetConfig.from_dict(cfg.to_dict()) == cfg
        with pytest.raises(ValueError, match="unknown"):
            M.SNetConfig.from_dict({"channels": 32, "depth": 4})


class TestInit:
    def test_same_seed_bit_identical(self, micro_config):
        a = M.init_params(micro_config, seed=3)
        b = M.init_params(micro_config, seed=3)
        for (na, ta), (nb, tb) in zip(a.named_parameters(), b.named_parameters()):
            assert na == nb and np.array_equal(ta.data, tb.data)

    def test_different_seeds_differ(self, micro_config):
        a = M.init_params(micro_config, seed=3)
        b = M.init_params(micro_config, seed=4)
        assert not np.array_equal(a.encoder[0].weights.data, b.encoder[0].weights.data)

    def test_he_std_at_paper_width(self):
        cfg = M.SNetConfig(channels=256, units=1, unit_kind="classic")
        net = M.init_params(cfg, seed=0)
        w = net.units[0][0].weights.data  # 3x3, 256 -> 256
        expected = np.sqrt(2.0 / (256 * 9))
        assert abs(w.std() - expected) / expected < 0.1
        assert not net.encoder[0].bias.data.any()


class TestForward:
    def test_zero_input_zero_biases_gives_zero_features(self, micro_model, micro_config):
        x = Tensor(np.zeros((1, 3, 6, 6), np.float32))
        feats = micro_model.encode(x)
        assert np.array_equal(feats.data, np.zeros((1, micro_config.channels, 6, 6)))

    def test_encode_output_shape_and_determinism(self, micro_model, rng, micro_config):
        x = random_input(rng, micro_config)
        f1 = micro_model.encode(x).data
        f2 = micro_model.encode(x).data
        assert f1.shape == (1, micro_config.channels, 8, 8)
        assert np.array_equal(f1, f2)
        assert np.isfinite(f1).all()

    def test_zero_branch_weights_make_identity_unit(self, rng):
        for kind in M.UNIT_KINDS:
            cfg = M.SNetConfig(channels=4, units=1, unit_kind=kind)
            net = M.init_params(cfg, seed=1)
            zero_unit_weights(net)
            f = Tensor(rng.standard_normal((1, 4, 5, 5)).astype(np.float32))
            assert np.array_equal(net.unit_forward(f, 0).data, f.data)

    def test_decode_zero_features_zero_biases(self, micro_model, micro_config):
        f = Tensor(np.zeros((1, micro_config.channels, 6, 6), np.float32))
        out = micro_model.decode(f)
        assert np.array_equal(out.data, np.zeros((1, 3, 6, 6)))

    def test_decode_distinguishes_features(self, micro_model, micro_config, rng):
        f1 = Tensor(rng.standard_normal((1, micro_config.channels, 6, 6)).astype(np.float32))
        f2 = Tensor(rng.standard_normal((1, micro_config.channels, 6, 6)).astype(np.float32))
        assert not np.array_equal(micro_model.decode(f1).data, micro_model.decode(f2).data)

    def test_single_unit_boundary(self, rng):
        cfg = M.SNetConfig(channels=4, units=1)
        net = M.init_params(cfg, seed=2)
        outs = net.forward_all(random_input(rng, cfg))
        assert len(outs) == 1
        cfg0 = M.SNetConfig(channels=4, units=1, include_metric0=True)
        net0 = M.init_params(cfg0, seed=2)
        assert len(net0.forward_all(random_input(rng, cfg0))) == 2

    def test_zero_units_collapse_heads(self, rng):
        cfg = M.SNetConfig(channels=4, units=3)
        net = M.init_params(cfg, seed=5)
        zero_unit_weights(net)
        outs = net.forward_all(random_input(rng, cfg))
        for other in outs[1:]:
            assert np.array_equal(outs[0].data, other.data)

    def test_truncation_equivalence_bit_exact(self, rng):
        cfg = M.SNetConfig(channels=6, units=4)
        net = M.init_params(cfg, seed=11)
        x = random_input(rng, cfg, h=10, w=7)
        full = net.forward_all(x)
        for k in range(1, 5):
            small = M.truncate(net, k)
            out_k = small.forward_heads(x, [k])[k]
            assert np.array_equal(full[k - 1].data, out_k.data), f"head {k} diverged"

    def test_forward_heads_validates_requests(self, micro_model):
        x = Tensor(np.zeros((1, 3, 6, 6), np.float32))
        with pytest.raises(ValueError, match="head"):
            micro_model.forward_heads(x, [9])
        with pytest.raises(ValueError, match="head"):
            micro_model.forward_heads(x, [0])  # metric0 disabled by default

    def test_channel_mismatch_rejected(self, micro_model):
        with pytest.raises(ValueError, match="channels"):
            micro_model.encode(Tensor(np.zeros((1, 5, 6, 6), np.float32)))


class TestSharing:
    def test_decoder_mutation_moves_every_head(self, rng):
        cfg = M.SNetConfig(channels=4, units=3)
        net = M.init_params(cfg, seed=9)
        x = random_input(rng, cfg)
        before = [o.data.copy() for o in net.forward_all(x)]
        net.decoder[0].weights.data += 0.05
        after = net.forward_all(x)
        for b, a in zip(before, after):
            assert not np.array_equal(b, a.data)

    def test_unit_mutation_moves_only_deeper_heads(self, rng):
        cfg = M.SNetConfig(channels=4, units=3)
        net = M.init_params(cfg, seed=9)
        x = random_input(rng, cfg)
        before = [o.data.copy() for o in net.forward_all(x)]
        net.units[1][0].weights.data += 0.05  # unit 2 of 3
        after = net.forward_all(x)
        assert np.array_equal(before[0], after[0].data)
        assert not np.array_equal(before[1], after[1].data)
        assert not np.array_equal(before[2], after[2].data)


class TestLosses:
    def test_zero_when_outputs_equal_target(self, rng):
        target = Tensor(rng.standard_normal((1, 3, 4, 4)).astype(np.float32))
        outs = [Tensor(target.data.copy()) for _ in range(3)]
        assert M.greedy_loss(outs, target).item() == 0.0

    def test_single_head_reduces_to_mse(self, rng):
        from snet.tensor import mse
        out = Tensor(rng.standard_normal((1, 3, 4, 4)).astype(np.float32))
        target = Tensor(rng.standard_normal((1, 3, 4, 4)).astype(np.float32))
        assert M.greedy_loss([out], target).item() == mse(out, target).item()

    def test_two_heads_average(self):
        target = Tensor(np.zeros((1, 1, 2, 2), np.float32))
        out_a = Tensor(np.full((1, 1, 2, 2), np.sqrt(0.2), np.float32))
        out_b = Tensor(np.full((1, 1, 2, 2), np.sqrt(0.4), np.float32))
        loss = M.greedy_loss([out_a, out_b], target)
        assert loss.item() == pytest.approx(0.3, abs=1e-6)

    def test_columnar_uses_only_last(self, rng):
        from snet.tensor import mse
        target = Tensor(np.zeros((1, 1, 2, 2), np.float32))
        outs = [Tensor(rng.standard_normal((1, 1, 2, 2)).astype(np.float32)) for _ in range(3)]
        assert M.columnar_loss(outs, target).item() == mse(outs[-1], target).item()

    @pytest.mark.parametrize("loss_fn", [M.greedy_loss, M.columnar_loss])
    def test_gradient_reaches_every_parameter(self, rng, loss_fn):
        cfg = M.SNetConfig(channels=4, units=3)
        net = M.init_params(cfg, seed=13)
        x = random_input(rng, cfg)
        target = Tensor(rng.standard_normal(x.shape).astype(np.float32))
        loss = loss_fn(net.forward_all(x), target)
        backward(loss, params=net.parameters())
        for name, p in net.named_parameters():
            assert p.grad is not None and np.abs(p.grad).max() > 0, f"{name} got no gradient"


class TestParamCounts:
    def test_paper_scale_blocks(self):
        adv = M.count_params(M.SNetConfig())
        assert adv.encoder == 5 * 5 * 3 * 256 + 256 + 3 * 3 * 256 * 256 + 256 == 609_536
        assert adv.decoder == 3 * 3 * 256 * 256 + 256 + 5 * 5 * 256 * 3 + 3 == 609_283
        assert adv.per_unit == 2 * (3 * 3 * 256 * 256 + 256) == 1_180_160
        classic = M.count_params(M.SNetConfig(unit_kind="classic"))
        assert classic.per_unit == 3 * 3 * 256 * 256 + 256 == 590_080

    def test_paper_scale_cumulative_totals(self):
        adv = M.count_params(M.SNetConfig())
        assert adv.total == 10_660_099
        expected_m = [2.29, 3.41, 4.54, 5.66, 6.78, 7.91, 9.04, 10.16]
        for got, want in zip(adv.cumulative, expected_m):
            assert abs(M.ParamCounts.in_m(got) - want) <= 0.01

        classic = M.count_params(M.SNetConfig(unit_kind="classic"))
        assert classic.total == 5_939_459
        expected_m = [1.72, 2.29, 2.85, 3.41, 3.97, 4.54, 5.10, 5.66]
        for got, want in zip(classic.cumulative, expected_m):
            assert abs(M.ParamCounts.in_m(got) - want) <= 0.01

    def test_counts_match_instantiated_model(self, micro_config):
        net = M.init_params(micro_config, seed=0)
        counted = M.count_params(micro_config)
        actual = sum(t.data.size for t in net.parameters())
        assert counted.total == actual


class TestCheckpoint:
    def test_round_trip_bit_exact(self, tmp_path, micro_model, micro_config, rng):
        path = tmp_path / "m.snet"
        M.save_checkpoint(path, micro_model)
        loaded, cfg = M.load_checkpoint(path)
        assert cfg == micro_config
        for (na, ta), (nb, tb) in zip(micro_model.named_parameters(),
                                      loaded.named_parameters()):
            assert na == nb and np.array_equal(ta.data, tb.data)
        x = random_input(rng, micro_config)
        for a, b in zip(micro_model.forward_all(x), loaded.forward_all(x)):
            assert np.array_equal(a.data, b.data)

    def test_config_mismatch_rejected(self, tmp_path, micro_model):
        path = tmp_path / "m.snet"
        M.save_checkpoint(path, micro_model)
        other = dataclasses.replace(micro_model.config, units=8)
        with pytest.raises(M.CheckpointConfigError):
            M.load_checkpoint(path, expected_config=other)

    def test_truncated_file_rejected(self, tmp_path, micro_model):
        path = tmp_path / "m.snet"
        M.save_checkpoint(path, micro_model)
        raw = path.read_bytes()
        path.write_bytes(raw[:-1])
        with pytest.raises(M.CheckpointCorruptError, match="truncated"):
            M.load_checkpoint(path)

    def test_trailing_bytes_rejected(self, tmp_path, micro_model):
        path = tmp_path / "m.snet"
        M.save_checkpoint(path, micro_model)
        path.write_bytes(path.read_bytes() + b"x")
        with pytest.raises(M.CheckpointCorruptError, match="trailing"):
            M.load_checkpoint(path)

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "m.snet"
        path.write_bytes(b"JUNKJUNKJUNK")
        with pytest.raises(M.CheckpointCorruptError, match="magic"):
            M.load_checkpoint(path)

    def test_version_mismatch_rejected(self, tmp_path, micro_model):
        path = tmp_path / "m.snet"
        M.save_checkpoint(path, micro_model)
        raw = bytearray(path.read_bytes())
        raw[4] = 99
        path.write_bytes(bytes(raw))
        with pytest.raises(M.CheckpointVersionError):
            M.load_checkpoint(path)

    def test_float64_model_refused(self, tmp_path, micro_config):
        net = M.init_params(micro_config, seed=0, dtype=np.float64)
        with pytest.raises(ValueError, match="float32"):
            M.save_checkpoint(tmp_path / "m.snet", net)
