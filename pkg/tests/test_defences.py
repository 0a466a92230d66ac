import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from boltzdef.attacks import AttackSpec, CwConfig, run_attack
from boltzdef.classifiers import BaselineConfig, baseline_train, predict
from boltzdef.data import Dataset, Image, downscale_binarize_dataset
from boltzdef.defences import (
    DefenceSpec,
    adversarial_training,
    apply_defence,
    feature_squeeze,
    random_pad,
    spatial_smooth,
)
from boltzdef.digits import make_digits


def _img(values, w, h):
    return Image(np.asarray(values, dtype=np.float64).ravel(), w, h)


class TestFeatureSqueeze:
    def test_one_bit_rounding(self):
        img = _img([0.53, 0.49, 1.0, 0.0], 4, 1)
        out = feature_squeeze(img, 1)
        np.testing.assert_array_equal(out.pixels, [1.0, 0.0, 1.0, 0.0])

    def test_half_rounds_up(self):
        out = feature_squeeze(_img([0.5], 1, 1), 1)
        assert out.pixels[0] == 1.0

    def test_eight_bits_fixes_byte_grid(self):
        pixels = np.arange(0, 256, 7) / 255.0
        out = feature_squeeze(_img(pixels, pixels.size, 1), 8)
        np.testing.assert_array_equal(out.pixels, pixels)

    @settings(max_examples=40, deadline=None)
    @given(bits=st.integers(1, 8), seed=st.integers(0, 10_000))
    def test_idempotent(self, bits, seed):
        img = _img(np.random.default_rng(seed).random(16), 4, 4)
        once = feature_squeeze(img, bits)
        twice = feature_squeeze(once, bits)
        assert np.max(np.abs(twice.pixels - once.pixels)) < 1e-12

    def test_preserves_box_and_dims(self):
        img = _img(np.random.default_rng(1).random(12), 4, 3)
        out = feature_squeeze(img, 3)
        assert (out.width, out.height) == (4, 3)
        assert out.pixels.min() >= 0.0 and out.pixels.max() <= 1.0

    def test_bits_range_checked(self):
        img = _img([0.5], 1, 1)
        for bits in (0, 9):
            with pytest.raises(ValueError, match="bit depth"):
                feature_squeeze(img, bits)


class TestSpatialSmooth:
    def test_window_one_is_identity(self):
        img = _img(np.random.default_rng(2).random(25), 5, 5)
        out = spatial_smooth(img, 1)
        np.testing.assert_array_equal(out.pixels, img.pixels)

    def test_constant_image_unchanged(self):
        img = _img(np.full(25, 0.7), 5, 5)
        out = spatial_smooth(img, 3)
        np.testing.assert_allclose(out.pixels, 0.7)

    def test_salt_pixel_removed(self):
        grid = np.zeros((5, 5))
        grid[2, 2] = 1.0
        out = spatial_smooth(_img(grid, 5, 5), 3)
        assert out.pixels[2 * 5 + 2] == 0.0
        assert not out.pixels.any()

    def test_median_idempotent_on_salt_corpus(self):
        rng = np.random.default_rng(3)
        for _ in range(10):
            grid = np.zeros((7, 7))
            salt = rng.integers(0, 7, size=(3, 2))
            grid[salt[:, 0], salt[:, 1]] = 1.0
            once = spatial_smooth(_img(grid, 7, 7), 3)
            twice = spatial_smooth(once, 3)
            np.testing.assert_array_equal(twice.pixels, once.pixels)

    def test_even_window_rejected(self):
        with pytest.raises(ValueError, match="odd"):
            spatial_smooth(_img(np.zeros(25), 5, 5), 2)

    def test_edge_replication(self):
        # a bright column on the border survives replicate padding
        grid = np.zeros((3, 3))
        grid[:, 0] = 1.0
        out = spatial_smooth(_img(grid, 3, 3), 3)
        np.testing.assert_array_equal(out.grid()[:, 0], 1.0)


class TestApplyDefence:
    def _dataset(self, seed=4, n=6):
        rng = np.random.default_rng(seed)
        return Dataset(rng.random((n, 49)), rng.integers(0, 10, n), 7, 7)

    def test_none_is_passthrough(self):
        ds = self._dataset()
        assert apply_defence(ds, DefenceSpec("none")) is ds

    def test_advtrain_is_passthrough(self):
        ds = self._dataset()
        assert apply_defence(ds, DefenceSpec("adversarial_training")) is ds

    def test_one_bit_squeeze_fixes_binary_data(self):
        ds = self._dataset()
        binary = Dataset((ds.pixels > 0.5).astype(float), ds.labels, 7, 7)
        out = apply_defence(binary, DefenceSpec("feature_squeezing", bits=1))
        np.testing.assert_array_equal(out.pixels, binary.pixels)

    def test_squeeze_and_smooth_commute_exactly(self):
        # an odd-window median is an order statistic and the quantizer is
        # a monotone pixel map, so the two transforms commute exactly;
        # composition order is therefore free (fixed here by convention)
        rng = np.random.default_rng(5)
        squeeze = DefenceSpec("feature_squeezing", bits=2)
        smooth = DefenceSpec("spatial_smoothing", window=3)
        for _ in range(20):
            ds = Dataset(rng.random((1, 49)), [0], 7, 7)
            a = apply_defence(apply_defence(ds, smooth), squeeze)
            b = apply_defence(apply_defence(ds, squeeze), smooth)
            np.testing.assert_array_equal(a.pixels, b.pixels)

    def test_random_pad_translates(self):
        ds = self._dataset()
        out = apply_defence(ds, DefenceSpec("random_pad", max_shift=2),
                            np.random.default_rng(0))
        assert out.pixels.shape == ds.pixels.shape
        assert out.pixels.min() >= 0.0 and out.pixels.max() <= 1.0

    def test_random_pad_requires_rng(self):
        with pytest.raises(ValueError, match="generator"):
            apply_defence(self._dataset(), DefenceSpec("random_pad"))

    def test_spec_validation(self):
        with pytest.raises(ValueError, match="bit depth"):
            DefenceSpec("feature_squeezing", bits=0)
        with pytest.raises(ValueError, match="window"):
            DefenceSpec("spatial_smoothing", window=4)
        with pytest.raises(ValueError, match="mix ratio"):
            DefenceSpec("adversarial_training", mix_ratio=1.5)
        with pytest.raises(ValueError, match="unknown defence"):
            DefenceSpec("distillation")


@pytest.fixture(scope="module")
def binary_digits():
    full = make_digits(700, seed=60)
    b = downscale_binarize_dataset(full, 0.5)
    return b.subset(np.arange(500)), b.subset(np.arange(500, 700))


def _attacked_accuracy(net, ds, spec, n=100):
    correct = 0
    for i in range(n):
        res = run_attack(spec, net, ds.image(i), int(ds.labels[i]))
        correct += predict(net, res.adversarial) == ds.labels[i]
    return correct / n


class TestAdversarialTraining:
    CFG = BaselineConfig(hidden=(64,), epochs=60)
    FGSM = AttackSpec("fgsm", epsilon=0.3)

    def test_mix_zero_is_plain_training(self, binary_digits):
        tr, _ = binary_digits
        small = tr.subset(np.arange(120))
        cfg = BaselineConfig(hidden=(16,), epochs=10)
        defended = adversarial_training(small, self.FGSM, cfg, 0.0,
                                        np.random.default_rng(7))
        plain = baseline_train(cfg, small, np.random.default_rng(7))
        for a, b in zip(defended.weights, plain.weights):
            np.testing.assert_array_equal(a, b)
        for a, b in zip(defended.biases, plain.biases):
            np.testing.assert_array_equal(a, b)

    def test_defended_resists_fgsm_better(self, binary_digits):
        # the online variant is the one that actually helps; the offline
        # union scheme is kept for the paper-style bench pipeline
        tr, te = binary_digits
        plain = baseline_train(self.CFG, tr, np.random.default_rng(5), eval_ds=te)
        defended = adversarial_training(tr, self.FGSM, self.CFG, 0.5,
                                        np.random.default_rng(5), eval_ds=te,
                                        online=True)
        acc_plain = _attacked_accuracy(plain, te, self.FGSM)
        acc_def = _attacked_accuracy(defended, te, self.FGSM)
        assert acc_def > acc_plain
        assert defended.eval_accuracy > 0.8  # clean utility retained

    def test_remains_vulnerable_to_unseen_attack(self, binary_digits):
        tr, te = binary_digits
        defended = adversarial_training(tr, self.FGSM, self.CFG, 0.5,
                                        np.random.default_rng(5), eval_ds=te,
                                        online=True)
        cw = AttackSpec("cw", cw=CwConfig(binary_search_steps=5,
                                          max_iterations=200, initial_c=1.0,
                                          lr=0.02))
        acc_cw = _attacked_accuracy(defended, te, cw, n=60)
        acc_fgsm = _attacked_accuracy(defended, te, self.FGSM, n=60)
        assert acc_cw < acc_fgsm

    def test_offline_default_runs(self, binary_digits):
        tr, te = binary_digits
        small = tr.subset(np.arange(150))
        cfg = BaselineConfig(hidden=(16,), epochs=15)
        net = adversarial_training(small, self.FGSM, cfg, 0.5,
                                   np.random.default_rng(9))
        assert net.train_accuracy is not None

    def test_degenerate_attack_warns(self, binary_digits):
        tr, _ = binary_digits
        small = tr.subset(np.arange(60))
        # long enough to fit the training set perfectly, so epsilon 0
        # (which never flips anything) fails on every single item
        cfg = BaselineConfig(hidden=(32,), epochs=60)
        with pytest.warns(UserWarning, match="degenerate"):
            adversarial_training(small, AttackSpec("fgsm", epsilon=0.0), cfg,
                                 0.5, np.random.default_rng(11), online=False)

    def test_mix_ratio_validated(self, binary_digits):
        tr, _ = binary_digits
        with pytest.raises(ValueError, match="mix ratio"):
            adversarial_training(tr, self.FGSM, self.CFG, -0.1,
                                 np.random.default_rng(0))
