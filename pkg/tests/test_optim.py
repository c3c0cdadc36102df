"""Optimizer update rules, decay conventions, and the cosine schedule."""

import numpy as np
import pytest

from spikegrad import tensor as T
from spikegrad.errors import ConfigError, UsageError
from spikegrad.objectives import l2_penalty
from spikegrad.optim import SGD, AdamW, ScheduleConfig, cosine_lr, make_optimizer


@pytest.fixture(autouse=True)
def _float64():
    T.set_default_dtype(np.float64)
    yield


def make_param(values, decay=True, name="w"):
    t = T.Tensor(np.asarray(values, dtype=float), requires_grad=True)
    return (name, t, decay)


def set_grad(entry, g):
    entry[1].grad = np.asarray(g, dtype=float)


class TestSGD:
    def test_single_step_reference(self):
        p = make_param([1.0])
        opt = SGD([p], lr=0.1, momentum=0.9, weight_decay=0.0)
        set_grad(p, [0.5])
        opt.step()
        np.testing.assert_allclose(opt.buffers["w"], [0.5], atol=1e-15)
        np.testing.assert_allclose(p[1].values, [0.95], atol=1e-15)

    def test_second_step_momentum_recurrence(self):
        p = make_param([1.0])
        opt = SGD([p], lr=0.1, momentum=0.9)
        set_grad(p, [0.5])
        opt.step()
        set_grad(p, [0.5])
        opt.step()
        np.testing.assert_allclose(opt.buffers["w"], [0.95], atol=1e-15)
        np.testing.assert_allclose(p[1].values, [0.855], atol=1e-15)

    def test_pure_decay_step(self):
        p = make_param([1.0])
        opt = SGD([p], lr=0.1, momentum=0.0, weight_decay=0.1)
        set_grad(p, [0.0])
        opt.step()
        np.testing.assert_allclose(p[1].values, [0.99], atol=1e-15)

    def test_no_momentum_no_decay_is_vanilla_descent(self):
        r = np.random.default_rng(0)
        w0 = r.normal(size=(3, 3))
        g = r.normal(size=(3, 3))
        p = make_param(w0)
        opt = SGD([p], lr=0.05, momentum=0.0)
        set_grad(p, g)
        opt.step()
        np.testing.assert_allclose(p[1].values, w0 - 0.05 * g, atol=1e-15)

    def test_decay_skips_non_decay_params(self):
        w = make_param([1.0], name="w")
        b = make_param([1.0], decay=False, name="b")
        opt = SGD([w, b], lr=0.1, momentum=0.0, weight_decay=0.1)
        set_grad(w, [0.0])
        set_grad(b, [0.0])
        opt.step()
        assert w[1].values[0] == pytest.approx(0.99, abs=1e-15)
        assert b[1].values[0] == 1.0

    def test_missing_grad_names_parameter(self):
        p = make_param([1.0], name="stem.weight")
        opt = SGD([p], lr=0.1)
        with pytest.raises(UsageError, match="stem.weight"):
            opt.step()

    def test_loss_term_vs_coupled_decay_equivalence(self):
        """Loss-term lambda and coupled 2*lambda walk the same 5-step path."""
        r = np.random.default_rng(1)
        w0 = r.normal(size=(4, 3))
        x = r.normal(size=(5, 4))
        y = r.normal(size=(5, 3))
        lam = 0.01

        def task_loss(wt):
            pred = T.matmul(T.Tensor(x), wt)
            return T.reduce_mean(T.square(T.sub(pred, y)))

        loss_entry = make_param(w0.copy())
        opt_a = SGD([loss_entry], lr=0.05, momentum=0.0, weight_decay=0.0)
        coupled_entry = make_param(w0.copy())
        opt_b = SGD([coupled_entry], lr=0.05, momentum=0.0, weight_decay=2 * lam)
        for step in range(5):
            opt_a.zero_grad()
            total = T.add(task_loss(loss_entry[1]),
                          T.scale(l2_penalty([loss_entry]), lam))
            T.backward(total)
            opt_a.step()
            opt_b.zero_grad()
            T.backward(task_loss(coupled_entry[1]))
            opt_b.step()
        np.testing.assert_allclose(
            loss_entry[1].values, coupled_entry[1].values, rtol=0, atol=1e-10)

    def test_state_roundtrip_bit_identical(self):
        p = make_param(np.arange(6.0).reshape(2, 3))
        opt = SGD([p], lr=0.1, momentum=0.9)
        set_grad(p, np.ones((2, 3)))
        opt.step()
        saved = opt.state()
        set_grad(p, 2 * np.ones((2, 3)))
        opt.step()
        opt.load_state(saved)
        for name, buf in opt.buffers.items():
            assert np.array_equal(buf, saved[f"buf.{name}"])


class TestAdamW:
    def test_pure_decay_step(self):
        p = make_param([1.0])
        opt = AdamW([p], lr=0.01, weight_decay=0.03)
        set_grad(p, [0.0])
        opt.step()
        np.testing.assert_allclose(p[1].values, [0.9997], atol=1e-15)

    def test_first_step_moves_by_about_lr(self):
        p = make_param([0.0])
        opt = AdamW([p], lr=0.01, weight_decay=0.0)
        set_grad(p, [0.7])
        opt.step()
        # bias correction makes m_hat/sqrt(v_hat) ~ sign(g) on step 1
        assert p[1].values[0] == pytest.approx(-0.01, rel=1e-4)

    def test_decoupled_differs_from_loss_term_under_adam(self):
        r = np.random.default_rng(2)
        w0 = r.normal(size=2)
        x = r.normal(size=(6, 2))
        y = r.normal(size=(6, 1))
        lam = 0.1

        def task_loss(wt):
            pred = T.matmul(T.Tensor(x), T.reshape(wt, (2, 1)))
            return T.reduce_mean(T.square(T.sub(pred, y)))

        dec = make_param(w0.copy())
        opt_a = AdamW([dec], lr=0.05, weight_decay=lam)
        los = make_param(w0.copy())
        opt_b = AdamW([los], lr=0.05, weight_decay=0.0)
        for step in range(10):
            opt_a.zero_grad()
            T.backward(task_loss(dec[1]))
            opt_a.step()
            opt_b.zero_grad()
            T.backward(T.add(task_loss(los[1]),
                             T.scale(l2_penalty([los]), lam)))
            opt_b.step()
        assert np.abs(dec[1].values - los[1].values).max() > 1e-6

    def test_update_magnitude_bound(self):
        r = np.random.default_rng(3)
        p = make_param(r.normal(size=(4, 4)))
        lr, lam = 0.01, 0.05
        opt = AdamW([p], lr=lr, weight_decay=lam)
        for step in range(5):
            before = p[1].values.copy()
            set_grad(p, r.normal(size=(4, 4)))
            opt.step()
            delta = np.abs(p[1].values - before)
            bound = lr * (1.0 / (1.0 - 0.999 ** opt.step_count) ** 0.5 + 1e-8) \
                + lr * lam * np.abs(before)
            assert np.all(delta <= bound + 1e-12)

    def test_step_count_strictly_increases(self):
        p = make_param([1.0])
        opt = AdamW([p], lr=0.01)
        counts = []
        for _ in range(3):
            set_grad(p, [0.1])
            opt.step()
            counts.append(opt.step_count)
        assert counts == [1, 2, 3]

    def test_state_roundtrip_bit_identical(self):
        p = make_param(np.arange(4.0))
        opt = AdamW([p], lr=0.01)
        set_grad(p, np.ones(4))
        opt.step()
        saved = opt.state()
        set_grad(p, -np.ones(4))
        opt.step()
        opt.load_state(saved)
        assert opt.step_count == 1
        assert np.array_equal(opt.m["w"], saved["m.w"])
        assert np.array_equal(opt.v["w"], saved["v.w"])


class TestCosineSchedule:
    def test_endpoints_and_midpoint(self):
        sch = ScheduleConfig(lr_max=0.1, lr_min=0.0, t_max=20)
        assert cosine_lr(sch, 0) == pytest.approx(0.1, abs=1e-15)
        assert cosine_lr(sch, 10) == pytest.approx(0.05, abs=1e-15)
        assert cosine_lr(sch, 20) == pytest.approx(0.0, abs=1e-15)

    def test_monotone_nonincreasing(self):
        sch = ScheduleConfig(lr_max=0.1, lr_min=0.001, t_max=50)
        values = [cosine_lr(sch, t) for t in range(51)]
        assert all(a >= b for a, b in zip(values, values[1:]))

    def test_out_of_range_rejected(self):
        sch = ScheduleConfig(t_max=5)
        with pytest.raises(UsageError):
            cosine_lr(sch, 6)
        with pytest.raises(UsageError):
            cosine_lr(sch, -1)

    def test_bad_config_rejected(self):
        with pytest.raises(ConfigError):
            ScheduleConfig(kind="step")
        with pytest.raises(ConfigError):
            ScheduleConfig(t_max=0)
        with pytest.raises(ConfigError):
            ScheduleConfig(lr_max=0.01, lr_min=0.1)


class TestFactory:
    def test_dispatch(self):
        p = make_param([1.0])
        assert isinstance(make_optimizer("sgd", [p], 0.1), SGD)
        assert isinstance(make_optimizer("adamw", [p], 0.1), AdamW)

    def test_unknown_kind(self):
        with pytest.raises(ConfigError):
            make_optimizer("rmsprop", [make_param([1.0])], 0.1)

    def test_empty_params_rejected(self):
        with pytest.raises(ConfigError):
            SGD([], lr=0.1)
