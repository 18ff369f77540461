import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from artifact.errors import CorruptedState
from artifact.identifier import (
    LsIdentifierConfig,
    cost_functional_oracle,
    ideal_sigma_star_oracle,
    ls_flow,
    ls_output,
    observer_rhs,
    psidot_saturated,
    theta_dot,
)
from artifact.internal_model import linear_model
from artifact.numerics import rk4_step

A, W = 1.3, 2.0


def eta_star(t):
    return np.array([A * np.sin(W * t), A * W * np.cos(W * t)])


def etad_dot_star(t):
    return np.array([-A * W ** 2 * np.sin(W * t)])


def pack(s1, s2):
    return np.concatenate([s1.ravel(), s2])


def unpack(y, n=2):
    return y[: n * n].reshape(n, n), y[n * n:]


def flow_field(cfg, model, xi2_fn=lambda t: etad_dot_star(t)):
    def f(t, y):
        s1, s2 = unpack(y)
        S = model.regressor_matrix(eta_star(t))
        d1, d2 = ls_flow(cfg, s1, s2, S, xi2_fn(t))
        return pack(d1, d2)

    return f


def integrate(f, y0, dt, n):
    ys = [y0]
    for k in range(n):
        ys.append(rk4_step(f, ys[-1], k * dt, dt))
    return np.array(ys)


# -- ls_flow / ls_output / theta_dot ---------------------------------------

def test_ls_flow_from_zero():
    cfg = LsIdentifierConfig(ntheta=2, lam=1.0)
    d1, d2 = ls_flow(cfg, np.zeros((2, 2)), np.zeros(2), [1.0, 0.0], [2.0])
    assert np.array_equal(d1, [[1, 0], [0, 0]])
    assert np.array_equal(d2, [2, 0])


def test_ls_flow_pure_decay():
    cfg = LsIdentifierConfig(ntheta=2, lam=3.0)
    s1, s2 = np.array([[2.0, 1.0], [1.0, 4.0]]), np.array([1.0, -1.0])
    d1, d2 = ls_flow(cfg, s1, s2, [0.0, 0.0], [5.0])
    assert np.array_equal(d1, -3.0 * s1)
    assert np.array_equal(d2, -3.0 * s2)


def test_ls_flow_substitution():
    cfg = LsIdentifierConfig(ntheta=2, lam=2.0)
    s2 = np.array([0.5, -0.5])
    d1, d2 = ls_flow(cfg, np.eye(2), s2, [1.0, 1.0], [1.0])
    assert np.array_equal(d1, -2 * np.eye(2) + 2 * np.ones((2, 2)))
    assert np.array_equal(d2, -2 * s2 + 2.0)


@pytest.mark.parametrize("s1, s2, theta", [
    (np.eye(2), [2.0, 4.0], [1.0, 2.0]),
    (np.array([[3.0, 1.0], [1.0, 2.0]]), [5.0, 4.0], [1.0, 1.0]),
    (np.eye(2), [0.0, 0.0], [0.0, 0.0]),
])
def test_ls_output_examples(s1, s2, theta):
    cfg = LsIdentifierConfig(ntheta=2, lam=1.0, Gamma=np.eye(2))
    assert np.allclose(ls_output(cfg, s1, s2), theta, rtol=0, atol=1e-14)


def test_ls_output_corrupted():
    cfg = LsIdentifierConfig(ntheta=2, lam=1.0, Gamma=1e-4 * np.eye(2))
    with pytest.raises(CorruptedState):
        ls_output(cfg, -np.eye(2), np.ones(2))


def test_theta_dot_substitution():
    cfg = LsIdentifierConfig(ntheta=2, lam=2.0, Gamma=np.eye(2))
    out = theta_dot(cfg, np.zeros((2, 2)), np.zeros(2), [1.0, 0.0], [1.0], np.zeros(2))
    assert np.allclose(out, [2.0, 0.0], rtol=0, atol=1e-15)


def test_theta_dot_stationary_point():
    cfg = LsIdentifierConfig(ntheta=2, lam=2.0, Gamma=np.eye(2))
    theta = np.array([1.0, -2.0])
    sig = np.array([1.0, 1.0])  # sigma^T theta = -1 = xi2
    s1 = np.array([[2.0, 0.5], [0.5, 1.0]])
    out = theta_dot(cfg, s1, s1 @ theta, sig, [-1.0], theta)
    assert np.allclose(out, 0.0, atol=1e-15)


def test_theta_dot_frozen():
    cfg = LsIdentifierConfig(ntheta=2, lam=0.0)
    out = theta_dot(cfg, np.eye(2), np.ones(2), [3.0, 1.0], [2.0], np.ones(2))
    assert np.array_equal(out, np.zeros(2))


def test_theta_dot_matches_finite_difference_along_flow():
    model = linear_model(d=2)
    cfg = LsIdentifierConfig(ntheta=2, lam=1.5, Gamma=1e-2 * np.eye(2))
    f = flow_field(cfg, model)
    dt = 1e-3
    ys = integrate(f, np.zeros(6), dt, 3000)
    for k in (500, 1500, 2900):
        th = [ls_output(cfg, *unpack(ys[j])) for j in (k - 1, k + 1)]
        fd = (th[1] - th[0]) / (2 * dt)
        s1, s2 = unpack(ys[k])
        t = k * dt
        an = theta_dot(cfg, s1, s2, eta_star(t), etad_dot_star(t), ls_output(cfg, s1, s2))
        assert np.allclose(fd, an, rtol=1e-5, atol=1e-5)


# -- observer and psi-dot --------------------------------------------------

def test_observer_zero_innovation():
    cfg = LsIdentifierConfig(ntheta=2, lam=1.0, m1=4.0, m2=5.0, rho=7.0)
    d1, d2 = observer_rhs(cfg, [1.5], [2.0], [1.5], [0.3])
    assert np.array_equal(d1, [2.0]) and np.array_equal(d2, [0.3])


def test_observer_gains():
    cfg = LsIdentifierConfig(ntheta=2, lam=1.0, m1=1.0, m2=2.0, rho=3.0)
    d1, d2 = observer_rhs(cfg, [1.0], [2.0], [0.0], [0.0])
    assert d1[0] == -1.0
    assert d2[0] == -18.0


def test_psidot_zero_theta():
    m = linear_model(d=2)
    cfg = LsIdentifierConfig(ntheta=2, lam=1.0)
    out = psidot_saturated(m, cfg, [0.4], [1.0, 2.0], np.zeros((2, 2)), np.zeros(2), np.zeros(2),
                           thetadot=np.zeros(2))
    assert np.array_equal(out, [0.0])


def test_psidot_chain_rule():
    m = linear_model(d=2)
    cfg = LsIdentifierConfig(ntheta=2, lam=1.0, psidot_bound=1e6)
    out = psidot_saturated(m, cfg, [0.0], [1.0, 2.0], np.zeros((2, 2)), np.zeros(2), np.array([1.0, 0.0]),
                           thetadot=np.zeros(2))
    assert out[0] == pytest.approx(2.0, rel=1e-10)


def test_psidot_saturates():
    m = linear_model(d=2)
    cfg = LsIdentifierConfig(ntheta=2, lam=1.0, psidot_bound=0.2)  # raw value is 2 = 10 * bound
    out = psidot_saturated(m, cfg, [0.0], [1.0, 2.0], np.zeros((2, 2)), np.zeros(2), np.array([1.0, 0.0]),
                           thetadot=np.zeros(2))
    assert out[0] == pytest.approx(0.2 * np.tanh(10.0), rel=1e-14)


def test_config_validation():
    with pytest.raises(ValueError):
        LsIdentifierConfig(ntheta=2, lam=1.0, Gamma=np.diag([1.0, -1.0]))
    with pytest.raises(ValueError):
        LsIdentifierConfig(ntheta=2, lam=1.0, Gamma=np.array([[1.0, 0.5], [0.0, 1.0]]))
    with pytest.raises(ValueError):
        LsIdentifierConfig(ntheta=2, lam=1.0, rho=0.0)
    assert np.array_equal(LsIdentifierConfig(ntheta=3, lam=1.0).Gamma, 1e-4 * np.eye(3))


# -- offline oracles -------------------------------------------------------

def test_cost_constant_error_closed_form():
    m = linear_model(d=2)
    lam, t, k, dt = 0.7, 3.0, 1.5, 1e-3
    n = int(round(t / dt)) + 1
    ydot = np.full((n, 1), k)
    eta = np.zeros((n, 2))
    val = cost_functional_oracle(ydot, eta, np.zeros(2), lam, np.zeros((2, 2)), dt, m)
    assert val == pytest.approx((1 - np.exp(-lam * t)) * k ** 2, rel=1e-6)


def test_cost_zero_signal():
    m = linear_model(d=2)
    n = 11
    val = cost_functional_oracle(np.zeros((n, 1)), np.ones((n, 2)), np.zeros(2), 1.0, np.eye(2), 0.1, m)
    assert val == 0.0


def test_cost_empty_history_is_regularizer():
    m = linear_model(d=2)
    theta = np.array([1.0, 2.0])
    G = np.diag([0.5, 2.0])
    assert cost_functional_oracle(np.zeros((1, 1)), np.zeros((1, 2)), theta, 1.0, G, 0.1, m) == 8.5


def test_cost_batch_matches_single():
    m = linear_model(d=2)
    times = np.linspace(0, 2, 201)
    ydot = np.array([etad_dot_star(t) for t in times])
    eta = np.array([eta_star(t) for t in times])
    thetas = np.array([[0.0, 0.0], [-4.0, 0.1], [1.0, 1.0]])
    batch = cost_functional_oracle(ydot, eta, thetas, 1.0, 1e-3 * np.eye(2), 0.01, m)
    for th, v in zip(thetas, batch):
        assert v == cost_functional_oracle(ydot, eta, th, 1.0, 1e-3 * np.eye(2), 0.01, m)


def test_sigma_star_constant_closed_form():
    m = linear_model(d=2)
    lam, t, dt = 1.2, 2.0, 1e-3
    a, b = np.array([0.5, -1.0]), 3.0
    n = int(round(t / dt)) + 1
    s1, s2 = ideal_sigma_star_oracle(np.full((n, 1), b), np.tile(a, (n, 1)), lam, dt, m)
    w = 1 - np.exp(-lam * t)
    assert np.allclose(s1, w * np.outer(a, a), rtol=1e-6)
    assert np.allclose(s2, w * a * b, rtol=1e-6)


def test_sigma_star_at_zero():
    m = linear_model(d=2)
    s1, s2 = ideal_sigma_star_oracle(np.ones((1, 1)), np.ones((1, 2)), 1.0, 0.1, m)
    assert np.array_equal(s1, np.zeros((2, 2))) and np.array_equal(s2, np.zeros(2))


def test_sigma_star_quadrature_order():
    m = linear_model(d=2)
    lam, t = 1.0, 2.0

    def at(dt):
        times = np.linspace(0, t, int(round(t / dt)) + 1)
        ydot = np.array([etad_dot_star(s) for s in times])
        eta = np.array([eta_star(s) for s in times])
        return ideal_sigma_star_oracle(ydot, eta, lam, dt, m)[0]

    ref = at(1e-4)
    ratio = np.linalg.norm(at(0.02) - ref) / np.linalg.norm(at(0.01) - ref)
    assert ratio == pytest.approx(4.0, rel=0.05)


# -- flow properties --------------------------------------------------------

@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_flow_keeps_sigma1_psd(seed):
    rng = np.random.default_rng(seed)
    freqs = rng.uniform(0.5, 5.0, size=2)
    cfg = LsIdentifierConfig(ntheta=2, lam=float(rng.uniform(0.2, 5.0)))

    def f(t, y):
        s1, s2 = unpack(y)
        sig = np.array([np.sin(freqs[0] * t), 3 * np.cos(freqs[1] * t)])
        d1, d2 = ls_flow(cfg, s1, s2, sig, [np.sin(t)])
        return pack(d1, d2)

    y = np.zeros(6)
    for k in range(400):
        y = rk4_step(f, y, k * 0.01, 0.01)
        s1 = unpack(y)[0]
        assert np.max(np.abs(s1 - s1.T)) <= 1e-10
        assert np.linalg.eigvalsh(0.5 * (s1 + s1.T))[0] >= -1e-9


def test_flow_tracks_ideal_with_exponential_rate():
    m = linear_model(d=2)
    lam, dt = 1.0, 1e-3
    cfg = LsIdentifierConfig(ntheta=2, lam=lam)
    y0 = pack(np.array([[2.0, 0.3], [0.3, 1.0]]), np.array([1.0, -2.0]))
    n = int(round(3 / lam / dt))
    ys = integrate(flow_field(cfg, m), y0, dt, n)
    times = dt * np.arange(n + 1)
    ydot = np.array([etad_dot_star(t) for t in times])
    eta = np.array([eta_star(t) for t in times])
    e0 = np.linalg.norm(y0)
    for k in (1, 2, 3):
        j = int(round(k / lam / dt))
        s1s, s2s = ideal_sigma_star_oracle(ydot[: j + 1], eta[: j + 1], lam, dt, m)
        err = np.linalg.norm(ys[j] - pack(s1s, s2s))
        assert err / e0 == pytest.approx(np.exp(-k), rel=1e-3)


def test_flow_tracking_error_linear_in_perturbation():
    m = linear_model(d=2)
    cfg = LsIdentifierConfig(ntheta=2, lam=2.0)
    dt, n = 1e-3, 2000

    def err(scale):
        pert = lambda t: etad_dot_star(t) + scale * np.cos(5 * t)
        ys = integrate(flow_field(cfg, m, pert), np.zeros(6), dt, n)
        ref = integrate(flow_field(cfg, m), np.zeros(6), dt, n)
        return np.max(np.linalg.norm(ys - ref, axis=1))

    assert err(0.2) == pytest.approx(2 * err(0.1), rel=1e-9)
