"""Kernel backends: numpy fallback vs compiled extension, shared semantics."""

from __future__ import annotations

import math
import os
import subprocess
import sys

import numpy as np
import pytest

from fedfits._kernels import numpy_backend
from fedfits.core import Rng

fast = pytest.importorskip(
    "fedfits._kernels._fast", reason="compiled extension not built"
)

BACKENDS = [numpy_backend, fast]


def _random_problem(kind: str, seed: int):
    gen = Rng(seed, "test").generator()
    d = int(gen.integers(2, 6))
    c = int(gen.integers(2, 5))
    h = int(gen.integers(2, 5)) if kind == "mlp1" else 0
    n = int(gen.integers(3, 12))
    size = d * c + c if kind == "logreg" else d * h + h + h * c + c
    w = 0.7 * gen.standard_normal(size)
    x = np.ascontiguousarray(gen.standard_normal((n, d)))
    y = gen.integers(0, c, n).astype(np.int64)
    code = numpy_backend.KIND_LOGREG if kind == "logreg" else numpy_backend.KIND_MLP1
    return code, w, d, h, c, x, y


class TestBackendParity:
    @pytest.mark.parametrize("kind", ["logreg", "mlp1"])
    def test_predict_evaluate_gradient_agree(self, kind):
        for seed in range(20):
            code, w, d, h, c, x, y = _random_problem(kind, seed)
            pa = numpy_backend.predict_proba(code, w, d, h, c, x)
            pb = fast.predict_proba(code, w, d, h, c, x)
            assert np.allclose(pa, pb, atol=1e-12, rtol=0)
            la, aa = numpy_backend.evaluate_model(code, w, d, h, c, x, y)
            lb, ab = fast.evaluate_model(code, w, d, h, c, x, y)
            assert la == pytest.approx(lb, abs=1e-12)
            assert aa == ab
            ga = numpy_backend.gradient_model(code, w, d, h, c, x, y)
            gb = fast.gradient_model(code, w, d, h, c, x, y)
            assert np.allclose(ga, gb, atol=1e-12, rtol=0)

    @pytest.mark.parametrize("kind", ["logreg", "mlp1"])
    def test_sgd_agrees_across_backends(self, kind):
        for seed in range(10):
            code, w, d, h, c, x, y = _random_problem(kind, seed)
            n = x.shape[0]
            gen = Rng(seed, "test", round=1).generator()
            perms = np.stack([gen.permutation(n) for _ in range(3)]).astype(np.int64)
            wa = numpy_backend.sgd_epochs(code, w, d, h, c, x, y, 0.1, 4, perms)
            wb = fast.sgd_epochs(code, w, d, h, c, x, y, 0.1, 4, perms)
            assert np.allclose(wa, wb, atol=1e-10, rtol=0)

    def test_kind_codes_agree(self):
        assert numpy_backend.KIND_LOGREG == fast.KIND_LOGREG == 0
        assert numpy_backend.KIND_MLP1 == fast.KIND_MLP1 == 1
        assert {numpy_backend.NAME, fast.NAME} == {"python", "cython"}


@pytest.mark.parametrize("impl", BACKENDS, ids=lambda b: b.NAME)
class TestKernelSemantics:
    def test_softmax_rows_sum_to_one(self, impl):
        for kind in ("logreg", "mlp1"):
            code, w, d, h, c, x, _ = _random_problem(kind, 3)
            p = impl.predict_proba(code, w, d, h, c, x)
            assert p.shape == (x.shape[0], c)
            assert np.all(p >= 0)
            assert np.allclose(p.sum(axis=1), 1.0, atol=1e-12, rtol=0)

    def test_evaluate_matches_scalar_loop(self, impl):
        """Independent per-sample oracle: plain math.exp arithmetic."""
        code, w, d, h, c, x, y = _random_problem("logreg", 11)
        loss, acc = impl.evaluate_model(code, w, d, h, c, x, y)
        wm = w[: d * c].reshape(d, c)
        b = w[d * c :]
        total, correct = 0.0, 0
        for i in range(x.shape[0]):
            logits = [
                sum(x[i, j] * wm[j, k] for j in range(d)) + b[k] for k in range(c)
            ]
            z = sum(math.exp(v) for v in logits)
            total += -(logits[y[i]] - math.log(z))
            best = max(range(c), key=lambda k: (logits[k], -k))
            correct += best == y[i]
        assert loss == pytest.approx(total / x.shape[0], abs=1e-12)
        assert acc == pytest.approx(correct / x.shape[0], abs=0)

    def test_evaluate_is_stable_at_large_logits(self, impl):
        # max-subtraction keeps huge logits finite
        d, c = 2, 2
        w = np.array([500.0, -500.0, 0.0, 0.0, 0.0, 0.0])
        x = np.array([[1.0, 0.0], [0.0, 1.0]])
        y = np.array([0, 1], dtype=np.int64)
        loss, acc = impl.evaluate_model(impl.KIND_LOGREG, w, d, 0, c, x, y)
        assert math.isfinite(loss)
        assert acc == 0.5  # second sample argmax ties at 0 vs 0, class 0 wins

    def test_argmax_tie_prefers_lowest_class(self, impl):
        d, c = 2, 3
        w = np.zeros(d * c + c)
        x = np.array([[1.0, 2.0]])
        for label, want in ((0, 1.0), (1, 0.0), (2, 0.0)):
            _, acc = impl.evaluate_model(
                impl.KIND_LOGREG, w, d, 0, c, x, np.array([label], dtype=np.int64)
            )
            assert acc == want

    def test_relu_gate_in_mlp_gradient(self, impl):
        """Hidden units that are inactive must not receive gradient."""
        d, h, c = 2, 2, 2
        # first hidden unit gets a strongly negative pre-activation
        w = np.zeros(d * h + h + h * c + c)
        w[0] = -50.0  # W1[0,0]
        w[1] = 1.0  # W1[0,1]
        w[6:10] = [1.0, -1.0, 1.0, -1.0]  # nonzero W2 so hidden grads flow
        x = np.array([[1.0, 0.0]])
        y = np.array([0], dtype=np.int64)
        g = impl.gradient_model(impl.KIND_MLP1, w, d, h, c, x, y)
        w1_grad = g[: d * h].reshape(d, h)
        assert w1_grad[0, 0] == 0.0  # dead unit
        assert w1_grad[0, 1] != 0.0

    def test_relu_derivative_zero_at_zero(self, impl):
        """Pre-activation exactly 0 contributes no gradient to layer 1."""
        d, h, c = 2, 2, 2
        w = np.zeros(d * h + h + h * c + c)
        w[6:10] = [1.0, -1.0, 1.0, -1.0]  # W2 nonzero, W1 and b1 zero
        x = np.array([[1.0, 1.0]])
        y = np.array([0], dtype=np.int64)
        g = impl.gradient_model(impl.KIND_MLP1, w, d, h, c, x, y)
        assert np.array_equal(g[: d * h + h], np.zeros(d * h + h))

    def test_sgd_zero_lr_identity(self, impl):
        code, w, d, h, c, x, y = _random_problem("mlp1", 5)
        perms = np.stack([np.arange(x.shape[0])]).astype(np.int64)
        out = impl.sgd_epochs(code, w, d, h, c, x, y, 0.0, 4, perms)
        assert np.array_equal(out, w)

    def test_sgd_does_not_mutate_input(self, impl):
        code, w, d, h, c, x, y = _random_problem("logreg", 6)
        before = w.copy()
        perms = np.stack([np.arange(x.shape[0])]).astype(np.int64)
        impl.sgd_epochs(code, w, d, h, c, x, y, 0.5, 2, perms)
        assert np.array_equal(w, before)

    def test_sgd_single_full_batch_equals_gradient_step(self, impl):
        code, w, d, h, c, x, y = _random_problem("logreg", 7)
        n = x.shape[0]
        perms = np.stack([np.arange(n)]).astype(np.int64)
        out = impl.sgd_epochs(code, w, d, h, c, x, y, 0.3, n, perms)
        g = impl.gradient_model(code, w, d, h, c, x, y)
        assert np.allclose(out, w - 0.3 * g, atol=1e-12, rtol=0)

    @pytest.mark.filterwarnings("ignore:overflow")
    def test_non_finite_update_names_epoch_and_batch(self, impl):
        d, c = 2, 2
        w = np.zeros(d * c + c)
        x = np.array([[4.0, 0.0]])
        y = np.array([0], dtype=np.int64)
        perms = np.zeros((1, 1), dtype=np.int64)
        with pytest.raises(Exception, match=r"non-finite update at epoch 1, batch 1"):
            impl.sgd_epochs(impl.KIND_LOGREG, w, d, 0, c, x, y, 1e308, 1, perms)


class TestBackendSelection:
    def test_active_backend_is_named(self):
        from fedfits import _kernels

        assert _kernels.BACKEND_NAME in ("python", "cython")

    @pytest.mark.parametrize("choice,expected", [("python", "python"), ("cython", "cython")])
    def test_env_var_forces_backend(self, choice, expected):
        code = (
            "from fedfits import _kernels; print(_kernels.BACKEND_NAME, end='')"
        )
        out = subprocess.run(
            [sys.executable, "-c", code],
            capture_output=True,
            text=True,
            env={**os.environ, "FEDFITS_BACKEND": choice},
        )
        assert out.returncode == 0, out.stderr
        assert out.stdout == expected

    def test_env_var_rejects_garbage(self):
        code = "import fedfits._kernels"
        out = subprocess.run(
            [sys.executable, "-c", code],
            capture_output=True,
            text=True,
            env={**os.environ, "FEDFITS_BACKEND": "gpu"},
        )
        assert out.returncode != 0
        assert "FEDFITS_BACKEND" in out.stderr
