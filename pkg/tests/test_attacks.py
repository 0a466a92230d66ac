import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from boltzdef.attacks import (
    AttackSpec,
    CwConfig,
    carlini_wagner_l2,
    deepfool,
    fgsm,
    run_attack,
)
from boltzdef.classifiers import (
    BaselineConfig,
    BaselineNet,
    baseline_train,
    init_baseline,
    predict,
    softmax,
)
from boltzdef.data import Image, downscale_binarize_dataset
from boltzdef.digits import make_digits


def _affine_net():
    """2-pixel logistic regression whose boundary crosses the box.

    f(x) = logit_1 - logit_0 = -4 x0 - 3 x1 + 2.8; at x=(0.62, 0.55) the
    analytic boundary distance is |f|/||w|| = 1.33/5 = 0.266.
    """
    w = np.array([[2.0, -2.0], [1.5, -1.5]])
    return BaselineNet([w], [np.array([0.0, 2.8])])


AFFINE_X0 = np.array([0.62, 0.55])
AFFINE_DISTANCE = 0.266


@pytest.fixture(scope="module")
def digits_net():
    full = make_digits(700, seed=50)
    b = downscale_binarize_dataset(full, 0.5)
    tr, te = b.subset(np.arange(500)), b.subset(np.arange(500, 700))
    net = baseline_train(BaselineConfig(hidden=(32,), epochs=40), tr,
                         np.random.default_rng(0), eval_ds=te)
    return net, te


class TestFgsm:
    def test_epsilon_zero_is_identity(self):
        net = _affine_net()
        res = fgsm(net, Image(AFFINE_X0, 2, 1), 0, epsilon=0.0)
        np.testing.assert_array_equal(res.adversarial.pixels, AFFINE_X0)
        assert not res.success
        assert res.l2 == res.linf == res.l0 == 0.0
        assert res.queries == 1

    def test_exact_pixel_moves_on_linear_classifier(self):
        net = init_baseline(6, (), 3, np.random.default_rng(2))
        x0 = np.full(6, 0.5)
        label = 1
        p = softmax(net.logits(x0))
        p[label] -= 1.0
        expected_sign = np.sign(p @ net.weights[0].T)
        res = fgsm(net, Image(x0, 6, 1), label, epsilon=0.1)
        np.testing.assert_allclose(res.adversarial.pixels - x0,
                                   0.1 * expected_sign, atol=1e-12)

    def test_linf_never_exceeds_epsilon(self, digits_net):
        net, te = digits_net
        for eps in (0.05, 0.3, 1.0):
            for i in range(25):
                res = fgsm(net, te.image(i), int(te.labels[i]), eps)
                assert res.linf <= eps + 1e-12
                assert res.adversarial.pixels.min() >= 0.0
                assert res.adversarial.pixels.max() <= 1.0

    def test_misclassification_nondecreasing_in_epsilon(self, digits_net):
        net, te = digits_net
        grid = (0.0, 0.05, 0.1, 0.2, 0.3)
        rates = []
        for eps in grid:
            wrong = sum(
                predict(net, fgsm(net, te.image(i), int(te.labels[i]), eps)
                        .adversarial) != te.labels[i]
                for i in range(200)
            )
            rates.append(wrong / 200)
        # allow a single inversion of at most one point of Monte Carlo noise
        inversions = [(a - b) for a, b in zip(rates, rates[1:]) if a > b]
        assert len(inversions) <= 1
        assert all(gap <= 0.01 + 1e-12 for gap in inversions)
        assert rates[-1] > rates[0]

    def test_negative_epsilon_rejected(self):
        with pytest.raises(ValueError, match=">= 0"):
            fgsm(_affine_net(), Image(AFFINE_X0, 2, 1), 0, -0.1)


class TestDeepFool:
    def test_one_step_exact_on_affine_classifier(self):
        net = _affine_net()
        res = deepfool(net, Image(AFFINE_X0, 2, 1), 0, max_iter=1, overshoot=0.0)
        assert res.l2 == pytest.approx(AFFINE_DISTANCE, rel=1e-8)
        assert res.queries == 2

    def test_default_overshoot_crosses_boundary(self):
        net = _affine_net()
        res = deepfool(net, Image(AFFINE_X0, 2, 1), 0)
        assert res.success
        assert res.l2 == pytest.approx(AFFINE_DISTANCE * 1.02, rel=1e-6)

    def test_already_misclassified_short_circuits(self):
        net = _affine_net()
        x = np.array([0.05, 0.05])  # on the class-1 side
        assert predict(net, x) == 1
        res = deepfool(net, Image(x, 2, 1), label=0)
        assert res.success and res.note == "already adversarial"
        assert res.l2 == 0.0 and res.queries == 0

    def test_zero_gradient_reports_failure(self):
        net = BaselineNet([np.zeros((3, 2))], [np.zeros(2)])
        res = deepfool(net, Image(np.full(3, 0.5), 3, 1), 0)
        assert not res.success
        assert "zero gradient" in res.note

    def test_l2_beats_fgsm_smallest_epsilon(self, digits_net):
        net, te = digits_net
        eps_grid = (0.02, 0.05, 0.1, 0.15, 0.2, 0.3, 0.4, 0.5)
        wins = considered = 0
        for i in range(200):
            img, label = te.image(i), int(te.labels[i])
            if predict(net, img) != label:
                continue
            fgsm_l2 = None
            for eps in eps_grid:
                r = fgsm(net, img, label, eps)
                if r.success:
                    fgsm_l2 = r.l2
                    break
            df = deepfool(net, img, label)
            if fgsm_l2 is None or not df.success:
                continue
            considered += 1
            wins += df.l2 <= fgsm_l2
        assert considered >= 100
        assert wins / considered >= 0.8

    def test_max_iter_guard(self):
        with pytest.raises(ValueError, match="max_iter"):
            deepfool(_affine_net(), Image(AFFINE_X0, 2, 1), 0, max_iter=0)


class TestCarliniWagner:
    def test_within_five_percent_of_affine_distance(self):
        net = _affine_net()
        res = carlini_wagner_l2(net, Image(AFFINE_X0, 2, 1), 0)
        assert res.success
        assert abs(res.l2 - AFFINE_DISTANCE) / AFFINE_DISTANCE < 0.05

    def test_desk_budget_still_finds_minimum(self):
        net = _affine_net()
        cfg = CwConfig(binary_search_steps=5, max_iterations=200,
                       initial_c=1.0, lr=0.02)
        res = carlini_wagner_l2(net, Image(AFFINE_X0, 2, 1), 0, cfg)
        assert res.success
        assert abs(res.l2 - AFFINE_DISTANCE) / AFFINE_DISTANCE < 0.05

    def test_already_misclassified_returns_zero(self):
        net = _affine_net()
        x = np.array([0.05, 0.05])
        res = carlini_wagner_l2(net, Image(x, 2, 1), label=0)
        assert res.success and res.l2 == 0.0
        assert res.note == "already adversarial"
        np.testing.assert_array_equal(res.adversarial.pixels, x)

    def test_candidates_stay_strictly_inside_box(self):
        # tanh reparameterization keeps iterates in (0,1) without clipping
        net = _affine_net()
        cfg = CwConfig(binary_search_steps=3, max_iterations=100, initial_c=5.0,
                       lr=0.3)
        res = carlini_wagner_l2(net, Image(np.array([0.95, 0.02]), 2, 1), 0, cfg)
        assert res.adversarial.pixels.min() > 0.0
        assert res.adversarial.pixels.max() < 1.0

    def test_hopeless_problem_reports_failure(self):
        # boundary outside the box: f < 0 everywhere on [0,1]^2
        w = np.array([[2.0, -2.0], [1.5, -1.5]])
        net = BaselineNet([w], [np.zeros(2)])
        cfg = CwConfig(binary_search_steps=3, max_iterations=50)
        res = carlini_wagner_l2(net, Image(np.array([0.6, 0.6]), 2, 1), 0, cfg)
        assert not res.success
        assert "no success" in res.note


class TestContracts:
    @settings(max_examples=25, deadline=None)
    @given(seed=st.integers(0, 10_000), eps=st.floats(0.0, 1.0))
    def test_box_invariant(self, seed, eps):
        rng = np.random.default_rng(seed)
        net = init_baseline(5, (4,), 3, rng)
        img = Image(rng.random(5), 5, 1)
        label = int(rng.integers(0, 3))
        for res in (fgsm(net, img, label, eps),
                    deepfool(net, img, label, max_iter=10)):
            assert res.adversarial.pixels.min() >= 0.0
            assert res.adversarial.pixels.max() <= 1.0
            assert res.l0 >= 0 and res.l2 >= 0 and res.linf >= 0

    def test_success_means_prediction_changed(self, digits_net):
        net, te = digits_net
        cw_cfg = CwConfig(binary_search_steps=3, max_iterations=60, initial_c=1.0,
                          lr=0.05)
        for i in range(30):
            img, label = te.image(i), int(te.labels[i])
            clean_pred = predict(net, img)
            if clean_pred != label:
                continue
            for res in (fgsm(net, img, label, 0.25),
                        deepfool(net, img, label),
                        carlini_wagner_l2(net, img, label, cw_cfg)):
                assert res.success == (predict(net, res.adversarial) != clean_pred)

    def test_determinism(self, digits_net):
        net, te = digits_net
        img, label = te.image(3), int(te.labels[3])
        for spec in (AttackSpec("fgsm", epsilon=0.2),
                     AttackSpec("deepfool"),
                     AttackSpec("cw", cw=CwConfig(binary_search_steps=2,
                                                  max_iterations=40))):
            a = run_attack(spec, net, img, label)
            b = run_attack(spec, net, img, label)
            np.testing.assert_array_equal(a.adversarial.pixels, b.adversarial.pixels)
            assert (a.success, a.l2, a.queries) == (b.success, b.l2, b.queries)

    def test_clean_spec_equals_zero_epsilon(self, digits_net):
        net, te = digits_net
        img, label = te.image(5), int(te.labels[5])
        clean = run_attack(AttackSpec("clean"), net, img, label)
        np.testing.assert_array_equal(clean.adversarial.pixels, img.pixels)

    def test_unknown_kind_rejected(self):
        with pytest.raises(ValueError, match="unknown attack"):
            AttackSpec("pgd")
