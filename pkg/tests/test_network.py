from __future__ import annotations

import numpy as np
import pytest

from strike_wta.network import (
    ActionDistribution,
    NetworkParams,
    WeightsError,
    backward,
    conv_output_size,
    greedy_action,
    layer_widths,
    load_params,
    log_prob_and_entropy,
    net_forward,
    policy_forward,
    registry,
    sample_action,
    save_params,
    value_forward,
)


def random_obs(rng, m_max, n_max, batch=None):
    shape = (m_max, n_max, 3) if batch is None else (batch, m_max, n_max, 3)
    return rng.uniform(-1, 1, shape)


def zero_params(m_max, n_max):
    p = NetworkParams.initialize(m_max, n_max, 0)
    for head in (p.policy, p.value):
        for k in head:
            head[k] = np.zeros_like(head[k])
    return p


def test_architecture_arithmetic():
    assert conv_output_size(20, 12) == 480
    assert layer_widths(20, 12)["policy"] == (339, 2400, 240)
    assert layer_widths(20, 12)["value"] == (22, 5, 1)
    assert conv_output_size(7, 5) == 4 * 3 * 8  # odd sizes round up


def test_twenty_tensors():
    names = registry(20, 12)
    assert len(names) == 20 and len(set(names)) == 20
    assert set(NetworkParams.initialize(20, 12, 0).tensors()) == set(names)


def test_zero_weights():
    p = zero_params(5, 4)
    obs = random_obs(np.random.default_rng(1), 5, 4)
    assert np.allclose(policy_forward(p, obs).probs, 0.25, atol=1e-12)
    assert value_forward(p, obs) == 0.0


def test_forward_pure_and_batched(rng):
    p = NetworkParams.initialize(6, 4, rng)
    obs = random_obs(rng, 6, 4, batch=5)
    a = policy_forward(p, obs).logits
    b = policy_forward(p, obs).logits
    assert np.array_equal(a, b)
    assert np.allclose(policy_forward(p, obs[2]).logits, a[2], atol=1e-12)
    assert value_forward(p, obs[0]) == value_forward(p, obs[0])


def test_value_finite_on_extreme_inputs(rng):
    p = NetworkParams.initialize(6, 4, rng)
    for k in p.value:
        p.value[k] = p.value[k] * 1e3
    obs = np.sign(random_obs(rng, 6, 4, batch=20))
    assert np.all(np.isfinite(value_forward(p, obs)))


def test_shape_mismatch(rng):
    p = NetworkParams.initialize(6, 4, rng)
    with pytest.raises(ValueError):
        policy_forward(p, random_obs(rng, 5, 4))


def test_softmax_rows_normalized_extreme():
    rng = np.random.default_rng(3)
    logits = rng.uniform(-500, 500, (50, 20, 12))
    logits[0, 0] = [500.0] + [-500.0] * 11
    probs = ActionDistribution(logits).probs
    assert np.max(np.abs(probs.sum(axis=-1) - 1)) < 1e-9
    assert np.all(np.isfinite(probs)) and np.all(probs >= 0)


def test_shift_invariance(rng):
    logits = rng.normal(0, 3, (20, 12))
    shifted = logits + rng.uniform(-300, 300, (20, 1))
    a, b = ActionDistribution(logits), ActionDistribution(shifted)
    assert np.max(np.abs(a.probs - b.probs)) < 1e-9
    assert np.array_equal(greedy_action(a, 20), greedy_action(b, 20))
    g1, g2 = np.random.default_rng(5), np.random.default_rng(5)
    assert np.array_equal(sample_action(a, 20, g1), sample_action(b, 20, g2))


def test_greedy_examples():
    assert greedy_action(ActionDistribution(np.array([[0.0, np.log(2)]])), 1).tolist() == [1]
    assert greedy_action(ActionDistribution(np.zeros((2, 3))), 2).tolist() == [0, 0]


def test_sample_dominant_row():
    logits = np.zeros((1, 4))
    logits[0, 2] = 50.0
    g = np.random.default_rng(0)
    assert all(sample_action(ActionDistribution(logits), 1, g)[0] == 2 for _ in range(1000))


def test_sample_uniform_within_3_sigma():
    n, draws = 12, 100_000
    d = ActionDistribution(np.zeros((draws, 1, n)))
    a = sample_action(d, 1, np.random.default_rng(11))[:, 0]
    counts = np.bincount(a, minlength=n)
    sigma = np.sqrt(draws * (1 / n) * (1 - 1 / n))
    assert np.all(np.abs(counts - draws / n) < 3 * sigma)


def test_sample_reproducible(rng):
    d = ActionDistribution(rng.normal(size=(8, 5)))
    assert np.array_equal(sample_action(d, 6, np.random.default_rng(4)), sample_action(d, 6, np.random.default_rng(4)))
    assert sample_action(d, 6, np.random.default_rng(4)).shape == (6,)


def test_log_prob_uniform():
    lp, ent = log_prob_and_entropy(ActionDistribution(np.zeros((20, 12))), np.zeros(20, int), 20)
    assert lp == pytest.approx(20 * np.log(1 / 12), abs=1e-12)
    assert ent == pytest.approx(20 * np.log(12), abs=1e-12)


def test_log_prob_product_and_deterministic_entropy(rng):
    d = ActionDistribution(rng.normal(size=(6, 4)))
    a = rng.integers(0, 4, 5)
    lp, _ = log_prob_and_entropy(d, a, 5)
    assert np.exp(lp) == pytest.approx(np.prod(d.probs[np.arange(5), a]), abs=1e-9)
    sharp = np.full((3, 4), -1e3)
    sharp[:, 1] = 0.0
    assert log_prob_and_entropy(ActionDistribution(sharp), [1, 1, 1], 3)[1] < 1e-12


def _loss(p, head, x, w_out):
    return float((net_forward(getattr(p, head), x) * w_out).sum())


@pytest.mark.parametrize("head", ["policy", "value"])
def test_gradient_check(head):
    rng = np.random.default_rng(7)
    p = NetworkParams.initialize(4, 3, rng)
    net = getattr(p, head)
    for k in net:  # larger weights so every layer has non-trivial curvature
        net[k] = rng.normal(0, 0.5, net[k].shape)
    x = random_obs(rng, 4, 3, batch=3)
    out, cache = net_forward(net, x, keep=True)
    w_out = rng.normal(size=out.shape)
    grads = backward(net, cache, w_out)
    h = 1e-4
    worst = 0.0
    for k, arr in net.items():
        num = np.zeros_like(arr)
        for idx in np.ndindex(arr.shape):
            old = arr[idx]
            arr[idx] = old + h
            up = _loss(p, head, x, w_out)
            arr[idx] = old - h
            dn = _loss(p, head, x, w_out)
            arr[idx] = old
            num[idx] = (up - dn) / (2 * h)
        # per-tensor norm: entries below ~1e-7 are dominated by finite-difference roundoff
        err = np.linalg.norm(grads[k] - num) / (np.linalg.norm(grads[k]) + np.linalg.norm(num))
        worst = max(worst, float(err))
    assert worst < 1e-4


def test_zero_upstream_gives_zero_grads(rng):
    p = NetworkParams.initialize(4, 3, rng)
    out, cache = net_forward(p.policy, random_obs(rng, 4, 3, batch=2), keep=True)
    grads = backward(p.policy, cache, np.zeros_like(out))
    assert all(not g.any() for g in grads.values())


def test_dead_relu_units_get_no_gradient(rng):
    p = NetworkParams.initialize(4, 3, rng)
    p.policy["conv1.b"][:] = -100.0  # every conv1 unit dead
    out, cache = net_forward(p.policy, random_obs(rng, 4, 3, batch=2), keep=True)
    grads = backward(p.policy, cache, rng.normal(size=out.shape))
    assert not grads["conv1.w"].any() and not grads["conv1.b"].any()


def test_save_load_round_trip(tmp_path, rng):
    p = NetworkParams.initialize(20, 12, rng)
    save_params(p, tmp_path / "w.npz")
    q = load_params(tmp_path / "w.npz", 20, 12)
    for k, v in p.tensors().items():
        assert np.array_equal(v, q.tensors()[k])
    obs = random_obs(rng, 20, 12, batch=100)
    assert np.array_equal(policy_forward(p, obs).logits, policy_forward(q, obs).logits)
    assert np.array_equal(value_forward(p, obs), value_forward(q, obs))


def test_load_wrong_size(tmp_path, rng):
    save_params(NetworkParams.initialize(4, 3, rng), tmp_path / "w.npz")
    with pytest.raises(WeightsError, match="expected"):
        load_params(tmp_path / "w.npz", 5, 3)


def test_load_not_a_manifest(tmp_path):
    np.savez(tmp_path / "x.npz", a=np.zeros(3))
    with pytest.raises(WeightsError):
        load_params(tmp_path / "x.npz")
