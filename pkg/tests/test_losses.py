import numpy as np
import pytest

from resflow.flow import FlowModel
from resflow.losses import (ClassifierHead, LossConfig, bce, loss_and_grads, predict,
                            round_trip_error)
from resflow.trainer import init_model, split_params
from resflow.velocity import VelocityField

from conftest import central_diff


def small_problem(seed=0, shared=False, scheme="euler", L=3, H=4, n=7):
    rng = np.random.default_rng(seed)
    model, head = init_model(L, H, shared=shared, scheme=scheme, rng=rng)
    model = model.with_parameters([p + rng.uniform(-0.3, 0.3, p.shape) for p in model.parameters()])
    head = head.with_parameters(head.w, 0.2)
    return model, head, rng.uniform(-2, 2, (n, 2)), rng.integers(0, 2, n)


def reference_total(model, head, x, y, cfg, ic_points=None):
    """Straight-line numpy evaluation of the objective, independent of the tape."""
    h = model.h

    def v(f, p):
        return np.tanh(p @ f.W1.T + f.b1) @ f.W2.T

    def run(p, order, sign):
        for l in order:
            f = model.fields[0 if model.shared else l]
            p = p + sign * h * v(f, p)
        return p

    out = run(x, range(model.n_steps), 1)
    z = out @ head.w + head.b
    p = np.clip(1 / (1 + np.exp(-z)), 1e-12, 1 - 1e-12)
    ce = -np.mean(y * np.log(p) + (1 - y) * np.log(1 - p))
    wd = sum(np.sum(f.W1**2) + np.sum(f.W2**2) for f in model.fields) + np.sum(head.w**2)
    ic = 0.0
    if ic_points is not None:
        back = run(run(ic_points, range(model.n_steps), 1), range(model.n_steps - 1, -1, -1), -1)
        ic = np.mean(np.sum((back - ic_points) ** 2, axis=1))
    return ce + cfg.weight_decay * wd + cfg.ic_weight * ic


def test_bce_values():
    assert bce(0.5, 0) == pytest.approx(np.log(2))
    assert bce(0.5, 1) == pytest.approx(0.6931471805599453)
    assert bce(0.9, 1) == pytest.approx(-np.log(0.9)) and bce(0.9, 1) == pytest.approx(0.1053605, abs=1e-7)
    assert bce(1.0, 1) <= 1e-11 and bce(0.0, 0) <= 1e-11
    assert np.isfinite(bce(0.0, 1))


def test_zero_fields_have_zero_ic():
    model = FlowModel([VelocityField.zeros(2, 4)], 5)
    head = ClassifierHead([0.5, -1.0], 0.1)
    x = np.random.default_rng(0).normal(size=(9, 2))
    for mode in ("data", "domain"):
        parts, _ = loss_and_grads(model, head, x, np.arange(9) % 2,
                                  LossConfig(ic_mode=mode, ic_weight=7.0), np.random.default_rng(1))
        assert parts["ic"] == 0.0


def test_degenerate_config_is_mean_bce():
    model, head, x, y = small_problem()
    parts, _ = loss_and_grads(model, head, x, y, LossConfig(weight_decay=0.0))
    assert parts["total"] == parts["bce"]
    np.testing.assert_allclose(parts["bce"], np.mean(bce(predict(model, head, x), y)), rtol=1e-12)


@pytest.mark.parametrize("mode", ["none", "data", "domain"])
def test_total_matches_reference(mode):
    model, head, x, y = small_problem(3)
    x, y = x[:1], y[:1]
    cfg = LossConfig(weight_decay=1e-2, ic_mode=mode, ic_weight=0.7, domain_samples_per_batch=5)
    parts, _ = loss_and_grads(model, head, x, y, cfg, np.random.default_rng(11))
    from resflow.data import sample_domain
    ic_pts = {"none": None, "data": x,
              "domain": sample_domain(cfg.domain_box, 5, np.random.default_rng(11))}[mode]
    assert parts["total"] == pytest.approx(reference_total(model, head, x, y, cfg, ic_pts), abs=1e-12)


@pytest.mark.parametrize("scheme", ["euler", "rk4"])
@pytest.mark.parametrize("shared", [True, False])
@pytest.mark.parametrize("mode", ["none", "data", "domain"])
def test_gradients_match_finite_differences(mode, shared, scheme):
    model, head, x, y = small_problem(5, shared, scheme)
    cfg = LossConfig(weight_decay=1e-3, ic_mode=mode, ic_weight=2.0, domain_samples_per_batch=6)
    _, grads = loss_and_grads(model, head, x, y, cfg, np.random.default_rng(2))
    params = model.parameters() + head.parameters()
    for k, p in enumerate(params):
        def f(q):
            ps = list(params)
            ps[k] = q
            m, hd = split_params(model, head, ps)
            return loss_and_grads(m, hd, x, y, cfg, np.random.default_rng(2))[0]["total"]
        fd = central_diff(f, p, 1e-6)
        rel = np.abs(grads[k] - fd) / np.maximum(np.maximum(np.abs(grads[k]), np.abs(fd)), 1e-4)
        assert rel.max() <= 1e-5, k


def test_shared_gradient_is_sum_over_steps():
    shared, head, x, y = small_problem(8, shared=True, L=4)
    f = shared.fields[0]
    unshared = FlowModel([f] * 4, 4, shared=False)
    cfg = LossConfig(ic_mode="data", ic_weight=0.5)
    _, gs = loss_and_grads(shared, head, x, y, cfg)
    _, gu = loss_and_grads(unshared, head, x, y, cfg)
    for i in range(3):
        # weight decay counts the shared matrix once but the unshared copies four times
        expected = sum(gu[3 * l + i] for l in range(4))
        if i != 1:
            p = f.parameters()[i]
            expected = expected - 3 * 2 * cfg.weight_decay * p
        np.testing.assert_allclose(gs[i], expected, atol=1e-12)


def test_ic_weight_monotone_and_nonnegative():
    model, head, x, y = small_problem(4, shared=True)
    ics = []
    for w in (0.0, 0.1, 1.0, 10.0):
        parts, _ = loss_and_grads(model, head, x, y, LossConfig(ic_mode="data", ic_weight=w))
        ics.append(parts["ic"])
    assert ics[0] == 0.0 and all(a <= b for a, b in zip(ics, ics[1:]))
    assert np.all(round_trip_error(model, x) >= 0)


def test_deterministic_given_seed():
    model, head, x, y = small_problem(6, shared=True)
    cfg = LossConfig(ic_mode="domain", ic_weight=1.0)
    a = loss_and_grads(model, head, x, y, cfg, np.random.default_rng(4))
    b = loss_and_grads(model, head, x, y, cfg, np.random.default_rng(4))
    assert a[0] == b[0] and all(np.array_equal(p, q) for p, q in zip(a[1], b[1]))


def test_config_validation():
    with pytest.raises(ValueError):
        LossConfig(ic_mode="both")
    with pytest.raises(ValueError):
        LossConfig(ic_mode="domain", domain_samples_per_batch=0)
    with pytest.raises(ValueError):
        LossConfig(ic_mode="domain", domain_box=(1, 1, 0, 1))
    with pytest.raises(ValueError):
        loss_and_grads(*small_problem()[:2], np.zeros((0, 2)), [], LossConfig())
