"""Dense row-major tensors.

Tensors are plain ``numpy.ndarray`` objects in C order. This module adds the
checked operations the rest of the package relies on: explicit precision
handling, shape-validated binary ops, matmul and reductions. Every function
returns a new array and never writes into its arguments.

Image tensors use the NHWC convention: ``[batch, height, width, channels]``.
"""

import numpy as np

from .errors import ShapeError

PRECISIONS = {"float32": np.float32, "float64": np.float64}

Tensor = np.ndarray


def dtype_for(precision):
    try:
        return PRECISIONS[precision]
    except KeyError:
        raise ValueError(
            f"unknown precision {precision!r}; expected one of {sorted(PRECISIONS)}"
        ) from None


def tensor(data, precision="float32"):
    """Build a C-contiguous tensor of rank >= 1 with positive extents."""
    arr = np.array(data, dtype=dtype_for(precision), order="C", copy=True)
    if arr.ndim == 0:
        arr = arr.reshape(1)
    if any(d < 1 for d in arr.shape):
        raise ShapeError(f"every extent must be >= 1, got shape {arr.shape}")
    return arr


def zeros(shape, precision="float32"):
    return np.zeros(shape, dtype=dtype_for(precision))


def ones(shape, precision="float32"):
    return np.ones(shape, dtype=dtype_for(precision))


def strides_for(shape):
    """Row-major element strides for ``shape``."""
    strides = [1] * len(shape)
    for i in range(len(shape) - 2, -1, -1):
        strides[i] = strides[i + 1] * shape[i + 1]
    return tuple(strides)


def offset(shape, index):
    if len(index) != len(shape):
        raise ShapeError(f"index {tuple(index)} has wrong rank for shape {tuple(shape)}")
    for i, d in zip(index, shape):
        if not 0 <= i < d:
            raise IndexError(f"index {tuple(index)} out of bounds for shape {tuple(shape)}")
    return sum(i * s for i, s in zip(index, strides_for(shape)))


def reshape(a, shape):
    shape = tuple(int(d) for d in shape)
    if int(np.prod(shape)) != a.size:
        raise ShapeError(f"cannot reshape {a.shape} into {shape}")
    return np.array(a, copy=True).reshape(shape)


def matmul(a, b):
    if a.ndim != 2 or b.ndim != 2:
        raise ShapeError(f"matmul needs rank-2 operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul inner extents differ: {a.shape} @ {b.shape}")
    if a.dtype != b.dtype:
        raise ShapeError(f"matmul precision mismatch: {a.dtype} vs {b.dtype}")
    return a @ b


_BINARY = {"add": np.add, "sub": np.subtract, "mul": np.multiply}


def elementwise(op, a, b=None):
    """Apply ``op`` value-wise.

    ``op`` is one of ``"add"``, ``"sub"``, ``"mul"``, ``"scale"`` (``b`` a
    scalar) or ``"map"`` (``b`` a unary callable acting on arrays).
    """
    if op in _BINARY:
        if np.isscalar(b):
            return _BINARY[op](a, b).astype(a.dtype, copy=False)
        if a.shape != b.shape:
            raise ShapeError(f"{op}: shapes differ {a.shape} vs {b.shape}")
        return _BINARY[op](a, b)
    if op == "scale":
        if not np.isscalar(b):
            raise TypeError("scale expects a scalar factor")
        return (a * b).astype(a.dtype, copy=False)
    if op == "map":
        out = np.asarray(b(a.copy()))
        if out.shape != a.shape:
            raise ShapeError(f"map changed shape {a.shape} -> {out.shape}")
        return out
    raise ValueError(f"unknown elementwise op {op!r}")


def reduce(op, a, axis=None):
    """Reduce with ``sum``, ``mean``, ``max`` or ``argmax``.

    ``axis=None`` reduces over everything and returns a Python scalar.
    ``argmax`` breaks ties towards the lowest index.
    """
    if axis is not None and not -a.ndim <= axis < a.ndim:
        raise ShapeError(f"axis {axis} out of range for rank {a.ndim}")
    if op == "sum":
        out = a.sum(axis=axis)
    elif op == "mean":
        out = a.mean(axis=axis)
    elif op == "max":
        out = a.max(axis=axis)
    elif op == "argmax":
        # numpy returns the first occurrence of the maximum
        out = np.argmax(a, axis=axis) if axis is not None else int(np.argmax(a))
    else:
        raise ValueError(f"unknown reduction {op!r}")
    if axis is None:
        return out.item() if isinstance(out, np.generic) else out
    return out
