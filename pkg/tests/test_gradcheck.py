import numpy as np
import pytest

import reference as ref
from latfuse import gradcheck
from latfuse.fusion import agf_backward, agf_forward, fusion_backward, init_params
from latfuse.gradcheck import (
    GradCheckReport,
    TieError,
    check_gradients,
    check_module,
    compare,
    finite_diff,
)


class TestFiniteDiff:
    def test_linear(self, rng):
        x = rng.standard_normal((1, 2, 3, 3))
        np.testing.assert_allclose(finite_diff(lambda t: float(t.sum()), x), 1.0, atol=1e-9)

    def test_quadratic(self, rng):
        x = rng.standard_normal((2, 3, 4))
        g = finite_diff(lambda t: 0.5 * float((t * t).sum()), x, 1e-5)
        np.testing.assert_allclose(g, x, atol=1e-8)

    def test_restores_input(self, rng):
        x = rng.standard_normal(10)
        before = x.copy()
        finite_diff(lambda t: float(np.sin(t).sum()), x)
        assert x.tobytes() == before.tobytes()

    def test_second_order_convergence(self):
        # Residual of central differences on sin is ~h**2/6 * cos; halving h quarters it.
        x = np.linspace(-1.0, 1.0, 9)
        exact = np.cos(x)
        r1 = np.abs(finite_diff(lambda t: float(np.sin(t).sum()), x.copy(), 1e-2) - exact).max()
        r2 = np.abs(finite_diff(lambda t: float(np.sin(t).sum()), x.copy(), 5e-3) - exact).max()
        assert 3 <= r1 / r2 <= 5

    def test_nonfinite_reports_index(self):
        x = np.zeros((2, 2))

        def f(t):
            return float("inf") if t[1, 0] != 0 else 0.0

        with pytest.raises(FloatingPointError, match=r"\(np.int64\(1\), np.int64\(0\)\)|\(1, 0\)"):
            finite_diff(f, x)

    def test_rejects_float32(self):
        with pytest.raises(TypeError):
            finite_diff(lambda t: 0.0, np.zeros(3, np.float32))

    def test_rejects_nonpositive_eps(self):
        with pytest.raises(ValueError):
            finite_diff(lambda t: 0.0, np.zeros(3), 0.0)


class TestCompare:
    def test_zero_vs_zero(self):
        assert compare(np.zeros(3), np.zeros(3)).max_rel == 0

    def test_floor_turns_tiny_values_absolute(self):
        c = compare(np.array([1e-9]), np.array([2e-9]), floor=1e-3)
        assert c.max_rel == pytest.approx(1e-6)
        assert compare(np.array([1e-9]), np.array([2e-9])).max_rel == pytest.approx(0.5)

    def test_worst_index(self):
        a = np.zeros((2, 3))
        n = np.zeros((2, 3))
        n[1, 2] = 1.0
        assert compare(a, n).worst_index == (1, 2)


def test_fused_sum_matches_backward_both_directions():
    b, r = ref.uniform(1, (1, 2, 4, 4), np.float64), ref.uniform(2, (1, 2, 4, 4), np.float64)
    m = init_params("agf", 2, 7, init="uniform", scale=0.5, seed=3, dtype=np.float64)
    grads = agf_backward(m, b, r, np.ones_like(b))
    num = finite_diff(lambda t: float(agf_forward(m, t, r).fused.sum()), b.copy())
    assert compare(grads.base, num, 1e-3).max_rel <= 1e-6


class TestCheckModule:
    def test_small_agf_passes(self):
        report = check_module("agf", (1, 2, 5, 5), seed=1)
        assert report.passed
        assert set(report.checks) == {"base", "refined", "weights", "bias"}

    def test_zero_initialised_dsf_passes(self):
        report = check_module("dsf", (1, 2, 5, 5), seed=1, init="zeros")
        assert report.passed
        # The gate is constant but the gradients through it are not.
        assert report.checks["weights"].max_abs < 1e-6

    def test_corrupted_weight_gradient_is_located(self):
        target = (1, 3, 0, 0)

        def broken(m, base, refined, g):
            grads = fusion_backward(m, base, refined, g)
            w = grads.weights.copy()
            w[target] += 0.01
            return grads._replace(weights=w)

        report = check_module("agf", (1, 2, 5, 5), seed=1, backward=broken)
        assert not report.passed
        assert report.worst == ("weights", target)
        assert "result=fail" in str(report)

    def test_element_cap(self):
        with pytest.raises(ValueError, match="cap"):
            check_module("agf", (1, 4, 40, 40))

    def test_tie_rejitter(self, monkeypatch):
        calls = iter([True, False])
        monkeypatch.setattr(gradcheck, "_has_tie", lambda x, margin: next(calls))
        report = check_module("dsf", (1, 2, 5, 5), seed=1)
        assert report.rejittered and report.passed

    def test_persistent_tie_fails_loudly(self, monkeypatch):
        monkeypatch.setattr(gradcheck, "_has_tie", lambda x, margin: True)
        with pytest.raises(TieError):
            check_module("dsf", (1, 2, 5, 5), seed=1)

    def test_has_tie(self):
        x = np.array([1.0, 1.0, 0.0]).reshape(1, 3, 1, 1)
        assert gradcheck._has_tie(x, 0.0)
        assert not gradcheck._has_tie(x + np.array([0, 1e-3, 0]).reshape(1, 3, 1, 1), 2e-5)


def test_report_pass_iff_below_threshold():
    r = GradCheckReport(threshold=1e-6, eps=1e-5, floor=0.0)
    r.checks["a"] = gradcheck.TensorCheck(1e-6, 0.0, (0,))
    assert r.passed
    r.checks["b"] = gradcheck.TensorCheck(1.1e-6, 0.0, (1,))
    assert not r.passed and r.worst == ("b", (1,))


def test_check_gradients_generic():
    x = np.array([0.3, -1.2, 2.0])
    report = check_gradients(lambda x: float((x ** 3).sum()), {"x": x}, {"x": 3 * x ** 2})
    assert report.passed
