import numpy as np
import pytest

from eegtile import model
from eegtile.errors import BadMagicError, FormatError, ShapeError, TruncatedPayloadError
from _oracles import central_diff_grad, rel_err


def random_batch(rng, n, h=16, w=16, classes=3):
    x = rng.standard_normal((n, h, w, 1)).astype(np.float32)
    y = rng.integers(0, classes, n)
    return x, y


class TestInit:
    def test_same_seed_bit_identical(self):
        a = model.init_he(42, 10)
        b = model.init_he(42, 10)
        for (na, pa), (nb, pb) in zip(model.named_state(a), model.named_state(b)):
            assert na == nb
            assert np.array_equal(pa, pb)

    def test_different_seed_differs(self):
        a = model.init_he(1, 10)
        b = model.init_he(2, 10)
        assert not np.array_equal(a.conv[0].kernels, b.conv[0].kernels)

    def test_conv1_std_matches_he_formula(self):
        p = model.init_he(0, 10)
        draws = p.conv[0].kernels.ravel()
        assert draws.size == 512
        want = np.sqrt(2.0 / 16.0)
        assert abs(draws.std() - want) / want < 0.05

    def test_biases_zero_batchnorm_identity(self):
        p = model.init_he(3, 4)
        assert not p.conv[0].bias.any() and not p.fc1_b.any() and not p.fc2_b.any()
        for bn in p.bn2d + [p.bn1d]:
            assert np.all(bn.gamma == 1) and np.all(bn.beta == 0)
            assert np.all(bn.running_mean == 0) and np.all(bn.running_var == 1)

    def test_classes_sets_output_width(self):
        p = model.init_he(0, 10)
        assert p.fc2_w.shape == (100, 10) and p.fc2_b.shape == (10,)

    def test_too_few_classes_rejected(self):
        with pytest.raises(ValueError):
            model.init_he(0, 1)


class TestShapes:
    def test_table1_chain_for_125_square_tile(self):
        p = model.init_he(0, 10)
        shapes = model.trace_shapes(p, 125, 125)
        assert shapes == [(63, 63, 32), (32, 32, 64), (16, 16, 128), 128, 100, 10]

    def test_psd_tile_chain(self):
        p = model.init_he(0, 10)
        shapes = model.trace_shapes(p, 125, 63)
        assert shapes[:3] == [(63, 32, 32), (32, 16, 64), (16, 8, 128)]
        assert shapes[3:] == [128, 100, 10]

    def test_logits_width(self):
        p = model.init_he(0, 10)
        x = np.zeros((2, 125, 125, 1), dtype=np.float32)
        assert model.forward(p, x).shape == (2, 10)

    def test_eval_forward_is_pure_and_repeatable(self):
        rng = np.random.default_rng(0)
        p = model.init_he(0, 4)
        x, _ = random_batch(rng, 3)
        a = model.forward(p, x, train=False)
        b = model.forward(p, x, train=False)
        assert np.array_equal(a, b)

    def test_too_small_input_raises(self):
        p = model.init_he(0, 3)
        with pytest.raises(ShapeError):
            model.forward(p, np.zeros((1, 7, 16, 1), dtype=np.float32))

    def test_wrong_depth_raises(self):
        p = model.init_he(0, 3)
        with pytest.raises(ShapeError):
            model.forward(p, np.zeros((1, 16, 16, 2), dtype=np.float32))


class TestCountParams:
    def test_table1_ten_classes(self):
        assert model.count_params(model.init_he(0, 10)) == 179_134

    def test_three_classes(self):
        # fc2 shrinks from 1010 to 303 parameters
        assert model.count_params(model.init_he(0, 3)) == 178_427

    def test_independent_of_seed(self):
        assert model.count_params(model.init_he(7, 10)) == \
            model.count_params(model.init_he(8, 10))

    def test_layer_arithmetic(self):
        by_layer = [544, 64, 32_832, 128, 131_200, 256, 12_900, 200, 1_010]
        assert sum(by_layer) == 179_134


class TestLossBatch:
    def test_initial_loss_near_ln_classes(self):
        losses = []
        for seed in range(5):
            rng = np.random.default_rng(1000 + seed)
            p = model.init_he(seed, 10)
            x = rng.standard_normal((64, 125, 125, 1)).astype(np.float32)
            y = rng.integers(0, 10, 64)
            loss, _ = model.loss_batch(p, x, y)
            losses.append(loss)
        assert abs(np.mean(losses) - np.log(10.0)) < 0.3

    def test_duplicating_batch_leaves_loss_and_grads_unchanged(self):
        rng = np.random.default_rng(1)
        p = model.init_he(0, 3)
        x, y = random_batch(rng, 4)
        l1, g1 = model.loss_batch(model.copy_params(p), x, y)
        x2 = np.concatenate([x, x])
        y2 = np.concatenate([y, y])
        l2, g2 = model.loss_batch(model.copy_params(p), x2, y2)
        assert l1 == pytest.approx(l2, rel=1e-5)
        for name in g1:
            # atol covers gradients that are mathematically zero (e.g. conv
            # bias under train-mode batchnorm) and survive only as noise
            assert np.allclose(g2[name], g1[name], rtol=1e-4, atol=1e-6), name

    def test_batch_order_invariance(self):
        rng = np.random.default_rng(2)
        p = model.init_he(0, 3)
        x, y = random_batch(rng, 6)
        perm = rng.permutation(6)
        l1, g1 = model.loss_batch(model.copy_params(p), x, y)
        l2, g2 = model.loss_batch(model.copy_params(p), x[perm], y[perm])
        assert l1 == pytest.approx(l2, rel=1e-5)
        for name in g1:
            assert np.allclose(g2[name], g1[name], rtol=1e-4, atol=1e-6), name

    def test_empty_batch_rejected(self):
        p = model.init_he(0, 3)
        with pytest.raises(ShapeError):
            model.loss_batch(p, np.zeros((0, 16, 16, 1), dtype=np.float32), [])

    def test_label_out_of_range_rejected(self):
        rng = np.random.default_rng(3)
        p = model.init_he(0, 3)
        x, _ = random_batch(rng, 2)
        with pytest.raises(ShapeError):
            model.loss_batch(p, x, [0, 3])

    def test_full_network_gradient_check(self):
        rng = np.random.default_rng(4)
        p64 = model.copy_params(model.init_he(0, 3), dtype=np.float64)
        x = rng.standard_normal((2, 16, 16, 1))
        y = rng.integers(0, 3, 2)
        _, grads = model.loss_batch(model.copy_params(p64), x, y)

        named = dict(model.named_params(p64))
        for name in ("conv1.kernels", "bn2d2.gamma", "fc1.weights",
                     "fc2.weights", "fc2.bias", "conv3.bias"):
            arr = named[name]
            idx = rng.choice(arr.size, size=min(6, arr.size), replace=False)
            for flat_i in idx:
                def loss_at(v, name=name, flat_i=flat_i):
                    trial = model.copy_params(p64)
                    dict(model.named_params(trial))[name].ravel()[flat_i] = v[0]
                    return model.loss_batch(trial, x, y)[0]

                v0 = np.array([arr.ravel()[flat_i]])
                # batchnorm statistics make the loss strongly curved in
                # single weights; a small step keeps truncation error down
                num = central_diff_grad(loss_at, v0, step=1e-5)[0]
                ana = grads[name].ravel()[flat_i]
                denom = max(abs(num), abs(ana), 1e-4)
                assert abs(num - ana) / denom < 1e-3, f"{name}[{flat_i}]"

    def test_one_sgd_step_decreases_single_example_loss(self):
        # descent property across seeds; at most one non-monotone allowed
        bad = 0
        for seed in range(50):
            rng = np.random.default_rng(seed)
            p = model.init_he(seed, 3)
            x, y = random_batch(rng, 1)
            l0, grads = model.loss_batch(p, x, y)
            for name, arr in model.named_params(p):
                arr -= 0.01 * grads[name].astype(arr.dtype)
            l1, _ = model.loss_batch(p, x, y)
            if not l1 < l0:
                bad += 1
        assert bad <= 1

    def test_return_logits(self):
        rng = np.random.default_rng(5)
        p = model.init_he(0, 3)
        x, y = random_batch(rng, 3)
        loss, grads, logits = model.loss_batch(p, x, y, return_logits=True)
        assert logits.shape == (3, 3)


class TestCheckpoint:
    def test_round_trip_bit_identical(self, tmp_path):
        p = model.init_he(9, 10)
        # make running stats non-trivial
        rng = np.random.default_rng(0)
        x = rng.standard_normal((4, 16, 16, 1)).astype(np.float32)
        model.loss_batch(p, x, rng.integers(0, 10, 4))
        path = tmp_path / "model.ckpt"
        model.save_checkpoint(p, path)
        q = model.load_checkpoint(path)
        assert q.classes == 10
        for (na, a), (nb, b) in zip(model.named_state(p), model.named_state(q)):
            assert na == nb
            assert np.array_equal(a, b), na

    def test_resave_is_byte_identical(self, tmp_path):
        p = model.init_he(1, 4)
        p1, p2 = tmp_path / "a.ckpt", tmp_path / "b.ckpt"
        model.save_checkpoint(p, p1)
        model.save_checkpoint(model.load_checkpoint(p1), p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "x.ckpt"
        path.write_bytes(b"NOTACKPT" + b"\0" * 16)
        with pytest.raises(BadMagicError):
            model.load_checkpoint(path)

    def test_truncated(self, tmp_path):
        p = model.init_he(2, 3)
        path = tmp_path / "t.ckpt"
        model.save_checkpoint(p, path)
        raw = path.read_bytes()
        path.write_bytes(raw[:len(raw) - 257])
        with pytest.raises(TruncatedPayloadError):
            model.load_checkpoint(path)

    def test_missing_array(self, tmp_path):
        p = model.init_he(3, 3)
        path = tmp_path / "m.ckpt"
        model.save_checkpoint(p, path)
        import struct
        raw = bytearray(path.read_bytes())
        # rename the first manifest entry so a required array goes missing
        name_at = len(model.CHECKPOINT_MAGIC) + 4 + 4 + 2
        raw[name_at:name_at + 4] = b"xxxx"
        path.write_bytes(bytes(raw))
        with pytest.raises(FormatError):
            model.load_checkpoint(path)
