import math

import numpy as np
import pytest

from leafnet.errors import ConfigError, NonFiniteError, ShapeError
from leafnet.optim import (
    Optimizer,
    OptimizerConfig,
    OptimizerState,
    adam_step,
    rmsprop_step,
    sgd_momentum_step,
)


def one(w=0.0):
    return {"w": np.array([w], dtype=np.float64)}


def grad(g):
    return {"w": np.array([g], dtype=np.float64)}


def reference(family, w, steps, a=1.0, lr=0.001, mu=0.9, rho=0.9, b1=0.9, b2=0.999, eps=1e-7):
    """Scalar recurrences for f(w) = a*w^2, written with plain floats."""
    v = s = m = q = 0.0
    out = []
    for t in range(1, steps + 1):
        g = 2 * a * w
        if family == "sgd-momentum":
            v = mu * v + g
            w = w - lr * v
        elif family == "rmsprop":
            s = rho * s + (1 - rho) * g * g
            w = w - lr * g / (math.sqrt(s) + eps)
        else:
            m = b1 * m + (1 - b1) * g
            q = b2 * q + (1 - b2) * g * g
            w = w - lr * (m / (1 - b1 ** t)) / (math.sqrt(q / (1 - b2 ** t)) + eps)
        out.append(w)
    return out


def run(family, w, steps, a=1.0, lr=0.001):
    opt = Optimizer(OptimizerConfig(family, learning_rate=lr))
    p = one(w)
    out = []
    for _ in range(steps):
        opt.step(p, grad(2 * a * p["w"][0]))
        out.append(p["w"][0])
    return out, opt


def test_sgd_plain_when_momentum_zero():
    p, st = one(1.0), OptimizerState()
    sgd_momentum_step(p, grad(2.0), st, OptimizerConfig("sgd-momentum", 0.1, momentum=0.0))
    assert p["w"][0] == pytest.approx(0.8)


def test_sgd_two_steps():
    p, st = one(0.0), OptimizerState()
    cfg = OptimizerConfig("sgd-momentum", 0.001, momentum=0.9)
    sgd_momentum_step(p, grad(1.0), st, cfg)
    assert st.buffers["velocity"]["w"][0] == pytest.approx(1.0)
    sgd_momentum_step(p, grad(1.0), st, cfg)
    assert st.buffers["velocity"]["w"][0] == pytest.approx(1.9)
    assert p["w"][0] == pytest.approx(-0.0029, abs=1e-15)


@pytest.mark.parametrize("step", [sgd_momentum_step, rmsprop_step, adam_step])
def test_zero_gradient_from_zero_state_is_noop(step):
    p, st = one(3.0), OptimizerState()
    step(p, grad(0.0), st, OptimizerConfig())
    assert p["w"][0] == 3.0


def test_rmsprop_first_step():
    p, st = one(0.0), OptimizerState()
    rmsprop_step(p, grad(1.0), st, OptimizerConfig("rmsprop", 0.001, rho=0.9))
    assert st.buffers["square_avg"]["w"][0] == pytest.approx(0.1)
    assert p["w"][0] == pytest.approx(-0.0031623, abs=1e-7)


@pytest.mark.parametrize("g", [1e-2, 0.7, -5.0, 300.0])
def test_rmsprop_first_step_magnitude(g):
    p, st = one(0.0), OptimizerState()
    rmsprop_step(p, grad(g), st, OptimizerConfig("rmsprop", 0.001, rho=0.9))
    assert abs(p["w"][0]) == pytest.approx(0.001 / math.sqrt(0.1), rel=1e-4)


def test_adam_first_step_example():
    p, st = one(1.0), OptimizerState()
    adam_step(p, grad(0.5), st, OptimizerConfig("adam"))
    assert st.step == 1
    assert p["w"][0] == pytest.approx(0.999, abs=1e-6)


@pytest.mark.parametrize("g", [1e-3, 1e-1, -1.0, 42.0, -1e3])
def test_adam_first_step_is_lr(g):
    p, st = one(0.0), OptimizerState()
    adam_step(p, grad(g), st, OptimizerConfig("adam", 0.001))
    assert abs(p["w"][0]) == pytest.approx(0.001, abs=1e-6)
    assert math.copysign(1, -p["w"][0]) == math.copysign(1, g)


@pytest.mark.parametrize("family", ["sgd-momentum", "rmsprop", "adam"])
def test_ten_steps_match_reference(family):
    got, _ = run(family, 1.7, 10, a=0.8)
    want = reference(family, 1.7, 10, a=0.8)
    np.testing.assert_allclose(got, want, rtol=0, atol=1e-12)


@pytest.mark.parametrize("family", ["sgd-momentum", "rmsprop", "adam"])
def test_quadratic_monotone_toward_zero(family):
    got, _ = run(family, 5.0, 2000)
    mags = np.abs([5.0] + got)
    assert np.all(np.diff(mags) <= 1e-12)


@pytest.mark.parametrize("family", ["sgd-momentum", "rmsprop", "adam"])
def test_quadratic_reaches_zero_in_2000_steps(family):
    # adaptive methods move about lr per step, so this is out of reach for them
    got, _ = run(family, 5.0, 2000)
    assert abs(got[-1]) < 0.01


@pytest.mark.parametrize("family", ["sgd-momentum", "rmsprop", "adam"])
def test_state_buffers_and_shapes(family):
    rng = np.random.default_rng(0)
    params = {"a": rng.normal(size=(3, 4)), "b": rng.normal(size=5)}
    opt = Optimizer(OptimizerConfig(family))
    for t in range(1, 6):
        opt.step(params, {k: rng.normal(size=v.shape) for k, v in params.items()})
        assert opt.state.step == t
    assert params["a"].shape == (3, 4) and params["b"].shape == (5,)
    for kind in ("square_avg", "v"):
        for buf in opt.state.buffers.get(kind, {}).values():
            assert np.all(buf >= 0)


def test_lr_zero_changes_nothing():
    p = one(2.0)
    Optimizer(OptimizerConfig("adam", 0.0)).step(p, grad(1.0))
    assert p["w"][0] == 2.0


def test_errors():
    with pytest.raises(ShapeError):
        adam_step(one(), {"w": np.zeros(2)}, OptimizerState(), OptimizerConfig())
    with pytest.raises(NonFiniteError):
        adam_step(one(), grad(float("nan")), OptimizerState(), OptimizerConfig())
    with pytest.raises(ConfigError, match="sgd-momentum, rmsprop, adam"):
        OptimizerConfig("nesterov")
    with pytest.raises(ConfigError):
        OptimizerConfig("adam", beta1=1.0)
    with pytest.raises(ConfigError):
        OptimizerConfig("adam", eps=0)
