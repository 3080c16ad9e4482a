"""Forward and backward kernels for the layer types of the leaf CNN.

All kernels are functional: ``*_forward`` returns ``(output, cache)`` and the
matching ``*_backward`` takes ``(cache, upstream)``. Parameter-carrying
backward passes return a dict of gradients keyed like the parameter fields,
plus ``"input"``.

Images are NHWC. Convolution is stride-1 cross-correlation implemented with
im2col + matmul; :func:`conv2d_direct` is the plain loop version kept for
testing.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ShapeError


@dataclass
class ConvParams:
    kernels: np.ndarray  # [kh, kw, in_ch, out_ch]
    bias: np.ndarray  # [out_ch]
    padding: str = "valid"


@dataclass
class DenseParams:
    weights: np.ndarray  # [in_features, out_features]
    bias: np.ndarray


@dataclass
class BatchNormParams:
    gamma: np.ndarray
    beta: np.ndarray
    running_mean: np.ndarray
    running_var: np.ndarray
    epsilon: float = 1e-3
    momentum: float = 0.99

    def __post_init__(self):
        if self.epsilon <= 0:
            raise ValueError("batch-norm epsilon must be positive")
        if not 0 < self.momentum < 1:
            raise ValueError("batch-norm momentum must lie in (0, 1)")


def _pad_amount(padding, kh, kw):
    if padding == "valid":
        return 0, 0
    if padding == "same":
        return (kh - 1) // 2, (kw - 1) // 2
    raise ValueError(f"unknown padding {padding!r}; expected 'valid' or 'same'")


def _pad(x, ph, pw):
    if ph == 0 and pw == 0:
        return x
    return np.pad(x, ((0, 0), (ph, ph), (pw, pw), (0, 0)))


def im2col(x, kh, kw):
    """Unroll every kh x kw window of ``x`` into a row.

    Returns ``[n*oh*ow, kh*kw*c]`` with columns ordered (dy, dx, channel) so
    that a kernel reshaped to ``[kh*kw*c_in, c_out]`` lines up.
    """
    n, h, w, c = x.shape
    oh, ow = h - kh + 1, w - kw + 1
    cols = np.empty((n, oh, ow, kh, kw, c), dtype=x.dtype)
    for dy in range(kh):
        for dx in range(kw):
            cols[:, :, :, dy, dx, :] = x[:, dy:dy + oh, dx:dx + ow, :]
    return cols.reshape(n * oh * ow, kh * kw * c)


def col2im(cols, x_shape, kh, kw):
    """Adjoint of :func:`im2col`: scatter-add rows back onto an image."""
    n, h, w, c = x_shape
    oh, ow = h - kh + 1, w - kw + 1
    cols = cols.reshape(n, oh, ow, kh, kw, c)
    out = np.zeros(x_shape, dtype=cols.dtype)
    for dy in range(kh):
        for dx in range(kw):
            out[:, dy:dy + oh, dx:dx + ow, :] += cols[:, :, :, dy, dx, :]
    return out


def _check_conv(x, params):
    if x.ndim != 4:
        raise ShapeError(f"conv2d expects [n,h,w,c] input, got shape {x.shape}")
    kh, kw, cin, cout = params.kernels.shape
    if x.shape[3] != cin:
        raise ShapeError(f"conv2d channel mismatch: input has {x.shape[3]}, kernels expect {cin}")
    if params.bias.shape != (cout,):
        raise ShapeError(f"conv2d bias shape {params.bias.shape} != ({cout},)")
    ph, pw = _pad_amount(params.padding, kh, kw)
    if x.shape[1] + 2 * ph < kh or x.shape[2] + 2 * pw < kw:
        raise ShapeError(
            f"conv2d input {x.shape[1]}x{x.shape[2]} smaller than the {kh}x{kw} kernel"
        )
    return kh, kw, cin, cout, ph, pw


def conv2d_forward(x, params):
    kh, kw, cin, cout, ph, pw = _check_conv(x, params)
    xp = _pad(x, ph, pw)
    n, h, w, _ = xp.shape
    oh, ow = h - kh + 1, w - kw + 1
    cols = im2col(xp, kh, kw)
    out = cols @ params.kernels.reshape(kh * kw * cin, cout) + params.bias
    cache = {"cols": cols, "padded_shape": xp.shape, "input_shape": x.shape,
             "pad": (ph, pw), "params": params}
    return out.reshape(n, oh, ow, cout), cache


def conv2d_backward(cache, upstream):
    params = cache["params"]
    kh, kw, cin, cout = params.kernels.shape
    n, h, w, _ = cache["padded_shape"]
    expected = (n, h - kh + 1, w - kw + 1, cout)
    if upstream.shape != expected:
        raise ShapeError(f"conv2d upstream shape {upstream.shape} != forward output {expected}")
    g = upstream.reshape(-1, cout)
    dk = (cache["cols"].T @ g).reshape(kh, kw, cin, cout)
    db = g.sum(axis=0)
    dcols = g @ params.kernels.reshape(kh * kw * cin, cout).T
    dx = col2im(dcols, cache["padded_shape"], kh, kw)
    ph, pw = cache["pad"]
    if ph or pw:
        dx = dx[:, ph:h - ph, pw:w - pw, :]
    return {"kernels": dk, "bias": db, "input": np.ascontiguousarray(dx)}


def conv2d_direct(x, kernels, bias, padding="valid"):
    """Reference convolution with explicit loops; slow, for tests only."""
    kh, kw, cin, cout = kernels.shape
    ph, pw = _pad_amount(padding, kh, kw)
    x = _pad(x, ph, pw)
    n, h, w, _ = x.shape
    oh, ow = h - kh + 1, w - kw + 1
    out = np.zeros((n, oh, ow, cout), dtype=x.dtype)
    for b in range(n):
        for y in range(oh):
            for xx in range(ow):
                for o in range(cout):
                    acc = bias[o]
                    for dy in range(kh):
                        for dx in range(kw):
                            for i in range(cin):
                                acc += x[b, y + dy, xx + dx, i] * kernels[dy, dx, i, o]
                    out[b, y, xx, o] = acc
    return out


def maxpool2d_forward(x):
    """2x2 max-pool with stride 2; a trailing odd row/column is dropped."""
    if x.ndim != 4:
        raise ShapeError(f"maxpool2d expects [n,h,w,c] input, got shape {x.shape}")
    n, h, w, c = x.shape
    if h < 2 or w < 2:
        raise ShapeError(f"maxpool2d needs spatial extent >= 2, got {h}x{w}")
    oh, ow = h // 2, w // 2
    win = (x[:, :2 * oh, :2 * ow, :]
           .reshape(n, oh, 2, ow, 2, c)
           .transpose(0, 1, 3, 5, 2, 4)
           .reshape(n, oh, ow, c, 4))
    idx = win.argmax(axis=-1)  # first occurrence on ties, row-major in window
    out = np.take_along_axis(win, idx[..., None], axis=-1)[..., 0]
    return out, {"argmax": idx, "input_shape": x.shape}


def maxpool2d_backward(cache, upstream):
    idx = cache["argmax"]
    n, h, w, c = cache["input_shape"]
    oh, ow = h // 2, w // 2
    if upstream.shape != (n, oh, ow, c):
        raise ShapeError(f"maxpool2d upstream shape {upstream.shape} != {(n, oh, ow, c)}")
    win = np.zeros((n, oh, ow, c, 4), dtype=upstream.dtype)
    np.put_along_axis(win, idx[..., None], upstream[..., None], axis=-1)
    dx = np.zeros((n, h, w, c), dtype=upstream.dtype)
    dx[:, :2 * oh, :2 * ow, :] = (win.reshape(n, oh, ow, c, 2, 2)
                                  .transpose(0, 1, 4, 2, 5, 3)
                                  .reshape(n, 2 * oh, 2 * ow, c))
    return dx


def relu_forward(x):
    return np.maximum(x, 0), {"mask": x > 0}


def relu_backward(cache, upstream):
    if upstream.shape != cache["mask"].shape:
        raise ShapeError(f"relu upstream shape {upstream.shape} != {cache['mask'].shape}")
    return np.where(cache["mask"], upstream, 0).astype(upstream.dtype, copy=False)


def dense_forward(x, params):
    if x.ndim != 2 or x.shape[1] != params.weights.shape[0]:
        raise ShapeError(
            f"dense feature mismatch: input {x.shape}, weights {params.weights.shape}"
        )
    return x @ params.weights + params.bias, {"input": x, "params": params}


def dense_backward(cache, upstream):
    x, params = cache["input"], cache["params"]
    if upstream.shape != (x.shape[0], params.weights.shape[1]):
        raise ShapeError(f"dense upstream shape {upstream.shape} does not match output")
    return {
        "weights": x.T @ upstream,
        "bias": upstream.sum(axis=0),
        "input": upstream @ params.weights.T,
    }


def batchnorm_forward(x, params, mode="train"):
    """Batch normalization over axis 0 of ``[n, features]`` input.

    In train mode the running statistics on ``params`` are replaced by their
    exponential moving average with the (biased) batch statistics.
    """
    if x.ndim != 2 or x.shape[1] != params.gamma.shape[0]:
        raise ShapeError(f"batchnorm feature mismatch: input {x.shape}, gamma {params.gamma.shape}")
    if mode == "train":
        if x.shape[0] < 2:
            raise ShapeError("batchnorm in train mode needs a batch of at least 2")
        mean = x.mean(axis=0)
        var = x.var(axis=0)
        m = params.momentum
        params.running_mean = (m * params.running_mean + (1 - m) * mean).astype(x.dtype)
        params.running_var = (m * params.running_var + (1 - m) * var).astype(x.dtype)
    elif mode == "infer":
        mean, var = params.running_mean, params.running_var
    else:
        raise ValueError(f"unknown batchnorm mode {mode!r}")
    inv_std = 1.0 / np.sqrt(var + params.epsilon)
    xhat = (x - mean) * inv_std
    out = params.gamma * xhat + params.beta
    return out.astype(x.dtype, copy=False), {
        "xhat": xhat, "inv_std": inv_std, "mode": mode, "params": params,
    }


def batchnorm_backward(cache, upstream):
    xhat, inv_std, params = cache["xhat"], cache["inv_std"], cache["params"]
    if upstream.shape != xhat.shape:
        raise ShapeError(f"batchnorm upstream shape {upstream.shape} != {xhat.shape}")
    dgamma = (upstream * xhat).sum(axis=0)
    dbeta = upstream.sum(axis=0)
    dxhat = upstream * params.gamma
    if cache["mode"] == "infer":
        dx = dxhat * inv_std
    else:
        n = upstream.shape[0]
        # gradient through the batch mean and variance
        dx = (inv_std / n) * (n * dxhat - dxhat.sum(axis=0)
                              - xhat * (dxhat * xhat).sum(axis=0))
    return {"gamma": dgamma, "beta": dbeta, "input": dx.astype(upstream.dtype, copy=False)}


def dropout_forward(x, rate, mode="train", rng=None):
    """Inverted dropout. Returns ``(output, mask)``; the mask already holds
    the 1/(1-rate) survivor scale, and is ``None`` when dropout is a no-op."""
    if not 0 <= rate < 1:
        raise ValueError(f"dropout rate must lie in [0, 1), got {rate}")
    if mode == "infer" or rate == 0:
        return x.copy(), None
    if mode != "train":
        raise ValueError(f"unknown dropout mode {mode!r}")
    if rng is None:
        raise ValueError("train-mode dropout needs an explicit rng")
    keep = rng.random(x.shape) >= rate
    mask = keep.astype(x.dtype) / x.dtype.type(1 - rate)
    return x * mask, mask


def dropout_backward(mask, upstream):
    if mask is None:
        return upstream.copy()
    if mask.shape != upstream.shape:
        raise ShapeError(f"dropout upstream shape {upstream.shape} != {mask.shape}")
    return upstream * mask


def flatten_forward(x):
    if x.ndim != 4:
        raise ShapeError(f"flatten expects rank-4 input, got shape {x.shape}")
    return x.reshape(x.shape[0], -1).copy(), {"input_shape": x.shape}


def flatten_backward(cache, upstream):
    return upstream.reshape(cache["input_shape"]).copy()


def he_uniform(rng, shape, fan_in, dtype):
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(dtype)
