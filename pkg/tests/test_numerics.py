import numpy as np
import pytest
from fd import central_diff, rel_err
from scipy.integrate import quad

from glocom.numerics import (
    Adam,
    DenseLayer,
    Encoder,
    Param,
    affine_backward,
    affine_forward,
    clamp_logvar,
    gaussian_reparameterize,
    gaussian_reparameterize_backward,
    kl_diag_gaussian,
    kl_diag_gaussian_backward,
    softmax_backward,
    softmax_forward,
    softplus_backward,
    softplus_forward,
)
from glocom.errors import TrainingError


def test_softmax_symmetry_and_contract():
    y = softmax_forward(np.array([[0.0, 0.0, 0.0]]))
    np.testing.assert_allclose(y, [[1 / 3, 1 / 3, 1 / 3]])
    rng = np.random.default_rng(0)
    X = rng.normal(scale=5, size=(50, 8))
    Y = softmax_forward(X)
    assert np.all(Y >= 0)
    np.testing.assert_allclose(Y.sum(axis=1), 1.0, atol=1e-9)
    # shift invariance
    np.testing.assert_allclose(softmax_forward(X + 3.7), Y, atol=1e-12)


def test_softplus_at_zero():
    assert abs(softplus_forward(np.array([0.0]))[0] - np.log(2.0)) < 1e-15


def test_softplus_extremes_finite():
    y = softplus_forward(np.array([-1000.0, 1000.0]))
    assert y[0] == 0.0
    assert y[1] == 1000.0


def test_primitive_backwards_match_fd_100_seeds():
    # randomized shapes up to 16x16
    for seed in range(100):
        rng = np.random.default_rng(seed)
        n, din, dout = rng.integers(1, 17, size=3)
        X = rng.normal(size=(n, din))
        W = rng.normal(size=(dout, din))
        b = rng.normal(size=dout)
        R = rng.normal(size=(n, dout))

        dX, dW, db = affine_backward(R, X, W)
        assert rel_err(dX, central_diff(lambda: np.sum(R * affine_forward(X, W, b)), X)) < 1e-4
        assert rel_err(dW, central_diff(lambda: np.sum(R * affine_forward(X, W, b)), W)) < 1e-4
        assert rel_err(db, central_diff(lambda: np.sum(R * affine_forward(X, W, b)), b)) < 1e-4

        Z = rng.normal(size=(n, din))
        Rz = rng.normal(size=(n, din))
        ds = softplus_backward(Rz, Z)
        assert rel_err(ds, central_diff(lambda: np.sum(Rz * softplus_forward(Z)), Z)) < 1e-4

        Y = softmax_forward(Z)
        dsm = softmax_backward(Rz, Y)
        assert rel_err(dsm, central_diff(lambda: np.sum(Rz * softmax_forward(Z)), Z)) < 1e-4


def test_reparameterize_identity_and_shapes():
    mu = np.array([[1.0, -2.0]])
    lv = np.array([[0.3, -0.7]])
    zero = np.zeros_like(mu)
    np.testing.assert_array_equal(gaussian_reparameterize(mu, lv, zero), mu)
    with pytest.raises(TrainingError):
        gaussian_reparameterize(mu, lv, np.zeros((2, 2)))


def test_reparameterize_monte_carlo_mean():
    rng = np.random.default_rng(42)
    mu = np.array([0.7])
    lv = np.array([np.log(0.5**2)])
    N = 100_000
    noise = rng.standard_normal((N, 1))
    draws = gaussian_reparameterize(np.tile(mu, (N, 1)), np.tile(lv, (N, 1)), noise)
    assert abs(draws.mean() - 0.7) < 3 * 0.5 / np.sqrt(N)


def test_logvar_clamp_limits():
    lv, mask = clamp_logvar(np.array([-50.0, 0.0, 50.0]))
    np.testing.assert_array_equal(lv, [-10.0, 0.0, 10.0])
    np.testing.assert_array_equal(mask, [0.0, 1.0, 0.0])
    # clamped-to-floor variance keeps sampling near mu
    out = gaussian_reparameterize(np.array([2.0]), lv[:1], np.array([1.0]))
    assert abs(out[0] - 2.0) < 0.01


def test_reparameterize_backward_fd():
    for seed in range(20):
        rng = np.random.default_rng(seed)
        mu = rng.normal(size=(3, 4))
        lv = rng.uniform(-2, 2, size=(3, 4))
        noise = rng.standard_normal((3, 4))
        R = rng.normal(size=(3, 4))
        dmu, dlv = gaussian_reparameterize_backward(R, lv, noise)
        f = lambda: np.sum(R * gaussian_reparameterize(mu, lv, noise))
        assert rel_err(dmu, central_diff(f, mu)) < 1e-4
        assert rel_err(dlv, central_diff(f, lv)) < 1e-4


def test_kl_identity_zero_and_known_value():
    assert kl_diag_gaussian(np.zeros(4), np.zeros(4), 0.0, 1.0) == 0.0
    # q = N(1,1), p = N(0,1), 1-D
    assert abs(kl_diag_gaussian(np.array([1.0]), np.array([0.0]), 0.0, 1.0) - 0.5) < 1e-15


def test_kl_matches_quadrature():
    rng = np.random.default_rng(3)
    for _ in range(20):
        mu_q = float(rng.uniform(-2, 2))
        lv_q = float(rng.uniform(-2, 1))
        mu_p = float(rng.uniform(-2, 2))
        var_p = float(rng.uniform(0.2, 3.0))
        sd_q = np.exp(0.5 * lv_q)

        def integrand(x):
            q = np.exp(-0.5 * ((x - mu_q) / sd_q) ** 2) / (sd_q * np.sqrt(2 * np.pi))
            p = np.exp(-0.5 * (x - mu_p) ** 2 / var_p) / np.sqrt(2 * np.pi * var_p)
            return q * (np.log(q) - np.log(p))

        lo = mu_q - 14 * sd_q
        hi = mu_q + 14 * sd_q
        val, _ = quad(integrand, lo, hi, limit=200)
        closed = kl_diag_gaussian(np.array([mu_q]), np.array([lv_q]), mu_p, var_p)
        assert abs(closed - val) < 1e-6


def test_kl_nonnegative_random():
    rng = np.random.default_rng(11)
    for _ in range(10_000):
        k = int(rng.integers(1, 6))
        mu = rng.normal(scale=3, size=k)
        lv = rng.uniform(-6, 4, size=k)
        var_p = float(rng.uniform(0.01, 5))
        mu_p = float(rng.normal())
        assert kl_diag_gaussian(mu, lv, mu_p, var_p) >= -1e-12


def test_kl_rejects_bad_prior_variance():
    with pytest.raises(TrainingError):
        kl_diag_gaussian(np.zeros(2), np.zeros(2), 0.0, 0.0)


def test_kl_backward_fd():
    for seed in range(20):
        rng = np.random.default_rng(seed)
        mu = rng.normal(size=(2, 5))
        lv = rng.uniform(-2, 2, size=(2, 5))
        mu_p, var_p = float(rng.normal()), float(rng.uniform(0.3, 2))
        w = rng.normal(size=2)
        dmu, dlv = kl_diag_gaussian_backward(w, mu, lv, mu_p, var_p)
        f = lambda: np.sum(w * kl_diag_gaussian(mu, lv, mu_p, var_p))
        assert rel_err(dmu, central_diff(f, mu)) < 1e-4
        assert rel_err(dlv, central_diff(f, lv)) < 1e-4


def test_encoder_backward_fd():
    rng = np.random.default_rng(1)
    enc = Encoder("phi", in_dim=6, hidden=5, out_dim=3, rng=rng)
    X = rng.normal(size=(4, 6))
    R1 = rng.normal(size=(4, 3))
    R2 = rng.normal(size=(4, 3))

    def loss():
        mu, lv, _ = enc.forward(X)
        return np.sum(R1 * mu) + np.sum(R2 * lv)

    mu, lv, cache = enc.forward(X)
    for p in enc.params():
        p.zero_grad()
    dX = enc.backward(R1, R2, cache)
    for p in enc.params():
        assert rel_err(p.grad, central_diff(loss, p.value)) < 1e-4, p.name
    assert rel_err(dX, central_diff(loss, X)) < 1e-4


def test_dense_layer_grad_accumulates():
    rng = np.random.default_rng(0)
    layer = DenseLayer("t", 3, 2, rng)
    X = rng.normal(size=(4, 3))
    g = rng.normal(size=(4, 2))
    layer.backward(g, X)
    first = layer.W.grad.copy()
    layer.backward(g, X)
    np.testing.assert_allclose(layer.W.grad, 2 * first)


def test_adam_zero_gradient_no_move():
    p = Param("x", np.array([[1.0, 2.0]]))
    opt = Adam([p], lr=0.1)
    opt.step()
    np.testing.assert_array_equal(p.value, [[1.0, 2.0]])


def test_adam_minimizes_quadratic():
    p = Param("x", np.array([1.0]))
    opt = Adam([p], lr=0.1)
    for _ in range(200):
        opt.zero_grad()
        p.grad[:] = 2.0 * p.value
        opt.step()
    assert abs(p.value[0]) < 1e-3


def test_adam_first_step_is_lr_sized():
    p = Param("x", np.array([3.0, -4.0]))
    opt = Adam([p], lr=0.05)
    p.grad[:] = np.array([0.2, -7.0])
    opt.step()
    np.testing.assert_allclose(p.value, [3.0 - 0.05, -4.0 + 0.05], atol=1e-6)


def test_adam_bit_reproducible():
    def run():
        rng = np.random.default_rng(9)
        p = Param("x", rng.normal(size=(4, 4)))
        opt = Adam([p], lr=0.01)
        for _ in range(50):
            opt.zero_grad()
            p.grad[:] = np.sin(p.value)
            opt.step()
        return p.value.copy()

    a, b = run(), run()
    np.testing.assert_array_equal(a, b)


def test_adam_rejects_duplicate_names():
    with pytest.raises(TrainingError):
        Adam([Param("x", np.zeros(1)), Param("x", np.zeros(1))])
