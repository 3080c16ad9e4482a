"""Binary checkpoint files.

Layout (little-endian)::

    b"LFNT" | u32 version | u32 header length | header (UTF-8 JSON)
    then, for every name in header["tensors"]:
        u32 rank | u32 extent * rank | float32 * prod(extents)

The header carries the model spec, class names, epoch, seed, optimizer
config and step, and any extra metadata. Tensors cover model parameters,
batch-norm running statistics and optimizer buffers.
"""

import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import (
    BadMagicError,
    CheckpointError,
    SpecMismatchError,
    TruncatedCheckpointError,
    VersionMismatchError,
)
from .model import ModelSpec, build_model
from .optim import Optimizer, OptimizerConfig, OptimizerState

MAGIC = b"LFNT"
VERSION = 1
_F32 = np.dtype("<f4")


@dataclass
class Checkpoint:
    spec: ModelSpec
    arrays: dict  # model parameters and buffers, "layer.field" -> array
    class_names: list
    epoch: int = 0
    seed: int = 0
    precision: str = "float32"
    optimizer_config: OptimizerConfig = field(default_factory=OptimizerConfig)
    optimizer_step: int = 0
    optimizer_buffers: dict = field(default_factory=dict)  # kind -> name -> array
    meta: dict = field(default_factory=dict)

    def build_model(self):
        model = build_model(self.spec, seed=self.seed, precision=self.precision)
        model.load_state_arrays(self.arrays)
        return model

    def build_optimizer(self, dtype=np.float32):
        buffers = {kind: {k: np.array(v, dtype=dtype) for k, v in slot.items()}
                   for kind, slot in self.optimizer_buffers.items()}
        return Optimizer(OptimizerConfig(**vars(self.optimizer_config)),
                         OptimizerState(self.optimizer_step, buffers))

    def check_compatible(self, class_names):
        if list(class_names) != list(self.class_names):
            raise SpecMismatchError(
                f"checkpoint classes {self.class_names} do not match {list(class_names)}"
            )


def _tensor_items(ckpt):
    for name, arr in ckpt.arrays.items():
        yield f"model/{name}", arr
    for kind, slot in ckpt.optimizer_buffers.items():
        for name, arr in slot.items():
            yield f"opt/{kind}/{name}", arr


def to_bytes(ckpt):
    items = list(_tensor_items(ckpt))
    header = {
        "spec": ckpt.spec.to_dict(),
        "class_names": list(ckpt.class_names),
        "epoch": ckpt.epoch,
        "seed": ckpt.seed,
        "precision": ckpt.precision,
        "optimizer": {"config": vars(ckpt.optimizer_config), "step": ckpt.optimizer_step},
        "meta": ckpt.meta,
        "tensors": [name for name, _ in items],
    }
    head = json.dumps(header, sort_keys=True).encode("utf-8")
    parts = [MAGIC, struct.pack("<II", VERSION, len(head)), head]
    for _, arr in items:
        arr = np.asarray(arr)
        parts.append(struct.pack(f"<I{arr.ndim}I", arr.ndim, *arr.shape))
        parts.append(np.ascontiguousarray(arr, dtype=_F32).tobytes())
    return b"".join(parts)


class _Reader:
    def __init__(self, buf):
        self.buf = buf
        self.pos = 0

    def take(self, n):
        if self.pos + n > len(self.buf):
            raise TruncatedCheckpointError(
                f"checkpoint truncated: needed {n} bytes at offset {self.pos}, "
                f"file has {len(self.buf)}"
            )
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out

    def u32(self, count=1):
        return struct.unpack(f"<{count}I", self.take(4 * count))


def from_bytes(buf):
    r = _Reader(buf)
    if len(buf) < 4 or buf[:4] != MAGIC:
        raise BadMagicError(f"not a leafnet checkpoint (magic {bytes(buf[:4])!r})")
    r.take(4)
    (version,) = r.u32()
    if version != VERSION:
        raise VersionMismatchError(f"checkpoint version {version}, expected {VERSION}")
    (head_len,) = r.u32()
    try:
        header = json.loads(r.take(head_len).decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"corrupt checkpoint header: {exc}") from exc
    tensors = {}
    for name in header["tensors"]:
        (rank,) = r.u32()
        shape = r.u32(rank) if rank else ()
        count = int(np.prod(shape)) if rank else 1
        data = np.frombuffer(r.take(4 * count), dtype=_F32)
        tensors[name] = data.reshape(shape).astype(np.float32)
    if r.pos != len(buf):
        raise CheckpointError(f"{len(buf) - r.pos} unexpected trailing bytes in checkpoint")

    arrays, buffers = {}, {}
    for name, arr in tensors.items():
        if name.startswith("model/"):
            arrays[name[len("model/"):]] = arr
        else:
            _, kind, pname = name.split("/", 2)
            buffers.setdefault(kind, {})[pname] = arr
    opt = header["optimizer"]
    spec = header["spec"]
    return Checkpoint(
        spec=ModelSpec.from_dict(spec),
        arrays=arrays,
        class_names=header["class_names"],
        epoch=header["epoch"],
        seed=header["seed"],
        precision=header["precision"],
        optimizer_config=OptimizerConfig(**opt["config"]),
        optimizer_step=opt["step"],
        optimizer_buffers=buffers,
        meta=header["meta"],
    )


def save_checkpoint(ckpt, path):
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(to_bytes(ckpt))
    tmp.replace(path)


def load_checkpoint(path):
    return from_bytes(Path(path).read_bytes())
