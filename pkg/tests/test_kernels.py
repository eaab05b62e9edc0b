import numpy as np
import pytest

from driftcal._kernels import brier_loss_dtemp, get_backends, nll_loss_dtemp, softmax


def random_problem(seed, n=200, k=5):
    rng = np.random.default_rng(seed)
    z = np.ascontiguousarray(rng.normal(size=(n, k)) * 4.0)
    y = np.ascontiguousarray(rng.integers(0, k, n), dtype=np.int64)
    t = np.ascontiguousarray(0.3 + rng.random(n) * 3.0)
    return z, y, t


def test_softmax_rows_normalized():
    z, _, t = random_problem(0)
    p = softmax(z, t)
    assert np.allclose(p.sum(axis=1), 1.0, atol=1e-12)
    assert np.all(p >= 0)


def test_softmax_shift_invariant():
    z, _, _ = random_problem(1)
    shifted = z + 123.456
    assert np.allclose(softmax(z, 2.0), softmax(shifted, 2.0), atol=1e-12)


@pytest.mark.parametrize("kernel_name", ["brier_loss_dtemp", "nll_loss_dtemp"])
def test_backends_agree(kernel_name):
    backends = get_backends()
    z, y, t = random_problem(2)
    results = {name: getattr(mod, kernel_name)(z, y, t) for name, mod in backends.items()}
    ref_loss, ref_grad = next(iter(results.values()))
    for loss, grad in results.values():
        assert loss == pytest.approx(ref_loss, rel=1e-12)
        np.testing.assert_allclose(grad, ref_grad, rtol=1e-10, atol=1e-12)


@pytest.mark.parametrize("kernel", [brier_loss_dtemp, nll_loss_dtemp])
def test_temperature_gradient_matches_finite_differences(kernel):
    z, y, t = random_problem(3, n=60)
    _, dldt = kernel(z, y, t)
    h = 1e-6
    for i in range(0, 60, 7):
        tp, tm = t.copy(), t.copy()
        tp[i] += h
        tm[i] -= h
        fd = (kernel(z, y, tp)[0] - kernel(z, y, tm)[0]) / (2 * h)
        assert dldt[i] == pytest.approx(fd, rel=1e-5, abs=1e-9)


def test_brier_saturated_and_uniform_values():
    # confident and correct: near-zero loss; flat logits: (1-0.5)^2 + 0.5^2
    z = np.array([[30.0, -30.0], [0.0, 0.0]])
    y = np.array([0, 0], dtype=np.int64)
    loss, _ = brier_loss_dtemp(z, y, np.array([1.0, 1.0]))
    assert loss == pytest.approx(0.5, abs=1e-12)


def test_nll_closed_form():
    z = np.array([[0.0, 0.0]])
    y = np.array([0], dtype=np.int64)
    loss, _ = nll_loss_dtemp(z, y, np.array([1.0]))
    assert loss == pytest.approx(np.log(2.0), abs=1e-12)


def test_losses_additive_over_samples():
    z, y, t = random_problem(4, n=40)
    total, _ = brier_loss_dtemp(z, y, t)
    parts = sum(brier_loss_dtemp(z[i : i + 1], y[i : i + 1], t[i : i + 1])[0] for i in range(40))
    assert total == pytest.approx(parts, rel=1e-12)
