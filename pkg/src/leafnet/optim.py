"""SGD with momentum, RMSprop and Adam.

Parameters and gradients are dicts of name -> ndarray. A step updates the
parameter arrays in place and advances the optimizer state.
"""

from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, NonFiniteError, ShapeError

FAMILIES = ("sgd-momentum", "rmsprop", "adam")


@dataclass
class OptimizerConfig:
    family: str = "adam"
    learning_rate: float = 0.001
    momentum: float = 0.9
    rho: float = 0.9
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-7

    def __post_init__(self):
        self.family = self.family.replace("_", "-")
        if self.family not in FAMILIES:
            raise ConfigError(
                f"unknown optimizer {self.family!r}; valid names: {', '.join(FAMILIES)}"
            )
        if not self.learning_rate >= 0:
            raise ConfigError("learning_rate must be non-negative")
        for name in ("momentum", "rho", "beta1", "beta2"):
            v = getattr(self, name)
            if not 0 <= v < 1:
                raise ConfigError(f"{name} must lie in [0, 1), got {v}")
        if not self.eps > 0:
            raise ConfigError("eps must be positive")


@dataclass
class OptimizerState:
    step: int = 0
    # buffer name ("velocity", "square_avg", "m", "v") -> param name -> array
    buffers: dict = field(default_factory=dict)

    def buffer(self, kind, name, like):
        slot = self.buffers.setdefault(kind, {})
        if name not in slot:
            slot[name] = np.zeros_like(like)
        elif slot[name].shape != like.shape:
            raise ShapeError(f"{kind} buffer for {name!r} has shape {slot[name].shape}, "
                             f"parameter has {like.shape}")
        return slot[name]


def _check(params, grads):
    if params.keys() != grads.keys():
        raise ShapeError(f"parameter/gradient names differ: {sorted(set(params) ^ set(grads))}")
    for name, g in grads.items():
        if g.shape != params[name].shape:
            raise ShapeError(f"gradient for {name!r} has shape {g.shape}, "
                             f"parameter has {params[name].shape}")
        if not np.all(np.isfinite(g)):
            raise NonFiniteError(f"non-finite gradient for {name!r}")


def sgd_momentum_step(params, grads, state, cfg):
    _check(params, grads)
    for name, w in params.items():
        v = state.buffer("velocity", name, w)
        v *= cfg.momentum
        v += grads[name]
        w -= (cfg.learning_rate * v).astype(w.dtype, copy=False)
    state.step += 1


def rmsprop_step(params, grads, state, cfg):
    _check(params, grads)
    for name, w in params.items():
        g = grads[name]
        s = state.buffer("square_avg", name, w)
        s *= cfg.rho
        s += (1 - cfg.rho) * g * g
        w -= (cfg.learning_rate * g / (np.sqrt(s) + cfg.eps)).astype(w.dtype, copy=False)
    state.step += 1


def adam_step(params, grads, state, cfg):
    _check(params, grads)
    t = state.step + 1
    c1 = 1 - cfg.beta1 ** t
    c2 = 1 - cfg.beta2 ** t
    for name, w in params.items():
        g = grads[name]
        m = state.buffer("m", name, w)
        v = state.buffer("v", name, w)
        m *= cfg.beta1
        m += (1 - cfg.beta1) * g
        v *= cfg.beta2
        v += (1 - cfg.beta2) * g * g
        m_hat = m / c1
        v_hat = v / c2
        w -= (cfg.learning_rate * m_hat / (np.sqrt(v_hat) + cfg.eps)).astype(w.dtype, copy=False)
    state.step = t


_STEPS = {"sgd-momentum": sgd_momentum_step, "rmsprop": rmsprop_step, "adam": adam_step}


class Optimizer:
    """Binds a config to its state and update rule."""

    def __init__(self, cfg=None, state=None):
        self.cfg = cfg or OptimizerConfig()
        self.state = state or OptimizerState()
        self._step = _STEPS[self.cfg.family]

    def step(self, params, grads):
        self._step(params, grads, self.state, self.cfg)
