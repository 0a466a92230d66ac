import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from boltzdef.rbm import (
    GradientEstimate,
    Moments,
    Rbm,
    all_binary_vectors,
    data_moments,
    init_rbm,
    load_rbm,
    log_partition_function,
    loss_gradient,
    nll_loss,
    partition_function,
    save_rbm,
)
from boltzdef.samplers import exact_model_moments

from conftest import random_rbm
from oracles import (
    all_bits,
    energy_brute,
    finite_difference,
    free_energy_brute,
    nll_brute,
    partition_brute,
    rel_err,
)

# frozen via the brute-force oracles (1x1 model b=[1], c=[0], w=[[1]])
F_ONE = -2.3132616875182226
Z_ONE = 12.107337927389695


def _zero_rbm(v, h):
    return Rbm(np.zeros((v, h)), np.zeros(v), np.zeros(h))


class TestEnergy:
    def test_zero_parameters(self):
        m = _zero_rbm(3, 2)
        for x in all_bits(3):
            for h in all_bits(2):
                assert m.energy(np.array(x, float), np.array(h, float)) == 0.0

    def test_direct_substitution(self):
        m = Rbm([[1.0]], [1.0], [0.0])
        assert m.energy([1.0], [1.0]) == -2.0

    def test_matches_brute_force_on_all_configs(self):
        m = random_rbm(4, 3, seed=0)
        for x in all_bits(4):
            for h in all_bits(3):
                expected = energy_brute(m.w, m.b, m.c, x, h)
                got = m.energy(np.array(x, float), np.array(h, float))
                assert got == pytest.approx(expected, rel=1e-12)

    def test_dimension_errors(self):
        m = _zero_rbm(3, 2)
        with pytest.raises(ValueError, match="dim"):
            m.energy(np.zeros(2), np.zeros(2))
        with pytest.raises(ValueError, match="dim"):
            m.energy(np.zeros(3), np.zeros(3))


class TestFreeEnergy:
    def test_zero_parameters(self):
        m = _zero_rbm(4, 6)
        x = np.array([1.0, 0.0, 1.0, 1.0])
        assert m.free_energy(x) == pytest.approx(-6 * math.log(2), rel=1e-14)

    def test_one_by_one_frozen_value(self):
        m = Rbm([[1.0]], [1.0], [0.0])
        assert m.free_energy([1.0]) == pytest.approx(F_ONE, rel=1e-14)

    def test_identity_against_hidden_enumeration(self):
        m = random_rbm(5, 4, seed=1)
        for x in all_bits(5):
            exact = free_energy_brute(m.w, m.b, m.c, x)
            got = float(m.free_energy(np.array(x, float)))
            assert abs(math.exp(-got) - math.exp(-exact)) / math.exp(-exact) < 1e-10

    def test_overflow_safety(self):
        m = Rbm([[800.0]], [0.0], [-400.0])
        val = m.free_energy([1.0])
        assert np.isfinite(val) and val == pytest.approx(-400.0)

    @settings(max_examples=25, deadline=None)
    @given(seed=st.integers(0, 10_000), v=st.integers(1, 6), h=st.integers(1, 6))
    def test_identity_property(self, seed, v, h):
        m = random_rbm(v, h, seed=seed, scale=1.2)
        xs = all_binary_vectors(v)
        hs = all_binary_vectors(h)
        # independent path: log-sum-exp over the explicit joint energies
        energies = (-(xs @ m.b)[:, None] - (hs @ m.c)[None, :]
                    - xs @ m.w @ hs.T)
        direct = -np.log(np.exp(-energies).sum(axis=1))
        np.testing.assert_allclose(m.free_energy(xs), direct, rtol=1e-10)

    @settings(max_examples=20, deadline=None)
    @given(seed=st.integers(0, 10_000))
    def test_hidden_permutation_invariance(self, seed):
        m = random_rbm(4, 5, seed=seed)
        perm = np.random.default_rng(seed).permutation(5)
        permuted = Rbm(m.w[:, perm], m.b, m.c[perm])
        xs = all_binary_vectors(4)
        np.testing.assert_allclose(permuted.free_energy(xs), m.free_energy(xs),
                                   rtol=1e-12)


class TestConditionals:
    def test_zero_parameters(self):
        m = _zero_rbm(3, 4)
        np.testing.assert_array_equal(m.hidden_conditional(np.zeros(3)), np.full(4, 0.5))
        np.testing.assert_array_equal(m.visible_conditional(np.zeros(4)), np.full(3, 0.5))

    def test_saturation(self):
        up = Rbm(np.zeros((2, 2)), np.zeros(2), np.full(2, 30.0))
        assert (up.hidden_conditional(np.zeros(2)) > 1 - 1e-9).all()
        down = Rbm(np.zeros((2, 2)), np.full(2, -30.0), np.zeros(2))
        assert (down.visible_conditional(np.zeros(2)) < 1e-9).all()

    def test_matches_enumeration(self):
        from oracles import hidden_conditional_brute, visible_conditional_brute
        m = random_rbm(3, 2, seed=4)
        for x in all_bits(3):
            expected = hidden_conditional_brute(m.w, m.b, m.c, x)
            np.testing.assert_allclose(m.hidden_conditional(np.array(x, float)),
                                       expected, atol=1e-10)
        for h in all_bits(2):
            expected = visible_conditional_brute(m.w, m.b, m.c, h)
            np.testing.assert_allclose(m.visible_conditional(np.array(h, float)),
                                       expected, atol=1e-10)

    def test_outputs_are_probabilities(self):
        m = random_rbm(5, 3, seed=8, scale=2.0)
        p = m.hidden_conditional(np.ones(5))
        assert ((p > 0) & (p < 1)).all()


class TestFreeEnergyInputGradient:
    def test_zero_weights(self):
        m = Rbm(np.zeros((3, 2)), np.array([0.3, -1.0, 2.0]), np.zeros(2))
        np.testing.assert_allclose(m.free_energy_input_gradient(np.zeros(3)), -m.b)

    def test_matches_finite_differences(self):
        m = random_rbm(6, 4, seed=5)
        x = np.random.default_rng(6).random(6)
        fd = finite_difference(lambda v: float(m.free_energy(v)), x, eps=1e-5)
        got = m.free_energy_input_gradient(x)
        assert rel_err(got, fd, floor=1e-6).max() < 1e-6

    def test_half_sigmoid_at_origin(self):
        w = np.full((3, 2), 0.7)
        m = Rbm(w, np.array([0.1, 0.2, 0.3]), np.zeros(2))
        expected = -m.b - w.sum(axis=1) / 2.0
        np.testing.assert_allclose(m.free_energy_input_gradient(np.zeros(3)), expected)


class TestPartitionAndLoss:
    def test_zero_parameters_counting(self):
        assert partition_function(_zero_rbm(3, 4)) == pytest.approx(2 ** 7, rel=1e-12)

    def test_one_by_one_frozen_value(self):
        m = Rbm([[1.0]], [1.0], [0.0])
        assert partition_function(m) == pytest.approx(Z_ONE, rel=1e-12)

    def test_cross_check_double_enumeration(self):
        m = random_rbm(5, 3, seed=7)
        assert partition_function(m) == pytest.approx(
            partition_brute(m.w, m.b, m.c), rel=1e-10)

    def test_capacity_guard(self):
        with pytest.raises(ValueError, match="capped"):
            log_partition_function(_zero_rbm(21, 2))

    def test_uniform_model_loss(self):
        m = _zero_rbm(5, 3)
        xs = all_binary_vectors(5)[:4]
        # uniform model: every example has probability 2^-V
        assert nll_loss(m, xs, partition_function(m)) == pytest.approx(
            5 * math.log(2), rel=1e-12)

    def test_perfect_model_limit(self):
        target = np.array([1.0, 0.0, 1.0])
        m = Rbm(np.zeros((3, 1)), np.where(target == 1, 60.0, -60.0), np.zeros(1))
        loss = nll_loss(m, target[None, :], partition_function(m))
        assert 0 <= loss < 1e-9

    def test_matches_enumeration_nll(self):
        m = random_rbm(6, 3, seed=9)
        examples = all_binary_vectors(6)[[3, 17, 42, 63]]
        expected = nll_brute(m.w, m.b, m.c, examples)
        got = nll_loss(m, examples, partition_function(m))
        assert got == pytest.approx(expected, rel=1e-10)

    def test_nonpositive_z_rejected(self):
        with pytest.raises(ValueError, match="positive"):
            nll_loss(_zero_rbm(2, 2), np.zeros((1, 2)), 0.0)


class TestLossGradient:
    def test_stationarity(self):
        m = random_rbm(4, 3, seed=2)
        mom = exact_model_moments(m)
        stats = GradientEstimate.from_moments(mom, mom)
        grad = loss_gradient(m, stats)
        assert not grad.w.any() and not grad.b.any() and not grad.c.any()

    def test_sign_convention(self):
        m = _zero_rbm(2, 2)
        pos = Moments(np.ones(2), np.full(2, 0.5), np.full((2, 2), 0.5), 1)
        neg = Moments(np.zeros(2), np.full(2, 0.5), np.full((2, 2), 0.5), 1)
        grad = loss_gradient(m, GradientEstimate.from_moments(pos, neg))
        np.testing.assert_array_equal(grad.b, np.full(2, -1.0))

    def test_matches_finite_differences_of_nll(self):
        m = random_rbm(6, 3, seed=11)
        rng = np.random.default_rng(12)
        examples = (rng.random((20, 6)) < 0.5).astype(float)
        pos = data_moments(m, examples)
        neg = exact_model_moments(m)
        grad = loss_gradient(m, GradientEstimate.from_moments(pos, neg))

        def loss_at(theta):
            v, h = m.num_visible, m.num_hidden
            w = theta[: v * h].reshape(v, h)
            b = theta[v * h : v * h + v]
            c = theta[v * h + v :]
            mm = Rbm(w, b, c)
            return nll_loss(mm, examples, partition_function(mm))

        theta0 = np.concatenate([m.w.ravel(), m.b, m.c])
        fd = finite_difference(loss_at, theta0, eps=1e-4)
        got = np.concatenate([grad.w.ravel(), grad.b, grad.c])
        assert rel_err(got, fd, floor=1e-6).max() < 1e-5

    def test_shape_mismatch(self):
        m = _zero_rbm(3, 2)
        mom = exact_model_moments(random_rbm(2, 2, seed=0))
        with pytest.raises(ValueError, match="shape"):
            loss_gradient(m, GradientEstimate.from_moments(mom, mom))


class TestSerialization:
    def test_round_trip(self, tmp_path):
        m = random_rbm(5, 4, seed=13)
        path = tmp_path / "model.rbm"
        save_rbm(m, path, metadata={"num_classes": 10, "note": "test"})
        loaded, meta = load_rbm(path)
        np.testing.assert_array_equal(loaded.w, m.w)
        np.testing.assert_array_equal(loaded.b, m.b)
        np.testing.assert_array_equal(loaded.c, m.c)
        assert meta["num_classes"] == 10
        assert meta["shape"] == [5, 4]

    def test_rejects_foreign_file(self, tmp_path):
        path = tmp_path / "junk"
        path.write_bytes(b"XXXX" + bytes(64))
        with pytest.raises(ValueError, match="container"):
            load_rbm(path)

    def test_init_statistics(self):
        m = init_rbm(200, 100, np.random.default_rng(0), weight_std=0.01)
        assert abs(m.w.std() - 0.01) < 0.002
        assert not m.b.any() and not m.c.any()

    def test_rejects_nonfinite(self):
        with pytest.raises(ValueError, match="finite"):
            Rbm(np.array([[np.inf]]), np.zeros(1), np.zeros(1))
