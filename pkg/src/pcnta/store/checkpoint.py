"""
Binary checkpoints for LayerGraph parameters and an optional state snapshot.
No pickling - fail fast on magic or version mismatch.

Layout (all integers and floats little-endian):
    magic           4 bytes  b"PCTA"
    version         u16
    seed            u64
    input shape     u8 ndim, u32 × ndim
    layer specs     u16 count, then per spec: u16 length + record
    parameters      u16 count, then per tensor: u8 ndim, u32 × ndim, f64 × size
    snapshot flag   u8 (0 | 1)
    snapshot        u16 count, then tensors as above
"""

import hashlib
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from pcnta.core.graph import LayerGraph, StateSnapshot, build_graph
from pcnta.core.layers import Activation, Conv2D, Dense, Flatten, LayerSpec, MaxPool
from pcnta.core.tensor_ops import Tensor
from pcnta.errors import CheckpointError, CheckpointVersionError

MAGIC = b"PCTA"
CHECKPOINT_VERSION = 1

# spec record: kind code, two integer arguments, activation code
_SPEC_RECORD = struct.Struct("<BIIB")
_KIND_CODES = {Conv2D: 1, MaxPool: 2, Flatten: 3, Dense: 4}
_ACTIVATION_CODES = {Activation.LINEAR: 0, Activation.RELU: 1}


@dataclass
class Checkpoint:
    graph: LayerGraph
    snapshot: StateSnapshot | None = None


# ============================================================================
# Encoding
# ============================================================================

def _encode_spec(spec: LayerSpec) -> bytes:
    kind = spec.kind
    if isinstance(kind, Conv2D):
        args = (kind.out_channels, kind.kernel)
    elif isinstance(kind, MaxPool):
        args = (kind.size, 0)
    elif isinstance(kind, Dense):
        args = (kind.out_features, 0)
    else:
        args = (0, 0)
    return _SPEC_RECORD.pack(_KIND_CODES[type(kind)], *args, _ACTIVATION_CODES[spec.activation])


def _encode_tensor(tensor: Tensor) -> bytes:
    header = struct.pack("<B", tensor.ndim) + struct.pack(f"<{tensor.ndim}I", *tensor.shape)
    return header + np.ascontiguousarray(tensor, dtype="<f8").tobytes()


def encode_checkpoint(graph: LayerGraph, snapshot: StateSnapshot | None = None) -> bytes:
    parts = [MAGIC, struct.pack("<HQ", CHECKPOINT_VERSION, graph.seed)]
    parts.append(struct.pack("<B", len(graph.input_shape)) + struct.pack(f"<{len(graph.input_shape)}I", *graph.input_shape))

    parts.append(struct.pack("<H", len(graph.specs)))
    for spec in graph.specs:
        record = _encode_spec(spec)
        parts.append(struct.pack("<H", len(record)) + record)

    tensors = [tensor for pair in graph.params for tensor in pair]
    parts.append(struct.pack("<H", len(tensors)))
    parts.extend(_encode_tensor(t) for t in tensors)

    if snapshot is None:
        parts.append(struct.pack("<B", 0))
    else:
        parts.append(struct.pack("<BH", 1, len(snapshot.values)))
        parts.extend(_encode_tensor(v) for v in snapshot.values)
    return b"".join(parts)


# ============================================================================
# Decoding
# ============================================================================

class _Reader:
    def __init__(self, data: bytes, source: str) -> None:
        self.data = data
        self.offset = 0
        self.source = source

    def take(self, fmt: str) -> tuple:
        size = struct.calcsize(fmt)
        if self.offset + size > len(self.data):
            raise CheckpointError(f"{self.source}: truncated at byte {self.offset}")
        values = struct.unpack_from(fmt, self.data, self.offset)
        self.offset += size
        return values

    def take_bytes(self, size: int) -> bytes:
        if self.offset + size > len(self.data):
            raise CheckpointError(f"{self.source}: truncated at byte {self.offset}")
        chunk = self.data[self.offset:self.offset + size]
        self.offset += size
        return chunk

    def take_tensor(self) -> Tensor:
        (ndim,) = self.take("<B")
        shape = self.take(f"<{ndim}I")
        raw = self.take_bytes(8 * int(np.prod(shape, dtype=np.int64)))
        return np.frombuffer(raw, dtype="<f8").astype(np.float64).reshape(shape)


def _decode_spec(record: bytes, source: str) -> LayerSpec:
    if len(record) != _SPEC_RECORD.size:
        raise CheckpointError(f"{source}: layer record of {len(record)} bytes, expected {_SPEC_RECORD.size}")
    code, a, b, act = _SPEC_RECORD.unpack(record)
    activation = {v: k for k, v in _ACTIVATION_CODES.items()}.get(act)
    if activation is None:
        raise CheckpointError(f"{source}: unknown activation code {act}")
    if code == 1:
        kind = Conv2D(a, b)
    elif code == 2:
        kind = MaxPool(a)
    elif code == 3:
        kind = Flatten()
    elif code == 4:
        kind = Dense(a)
    else:
        raise CheckpointError(f"{source}: unknown layer kind code {code}")
    return LayerSpec(kind, activation)


def decode_checkpoint(data: bytes, source: str = "<bytes>") -> Checkpoint:
    reader = _Reader(data, source)
    if reader.take_bytes(4) != MAGIC:
        raise CheckpointError(f"{source}: bad magic bytes, not a pcnta checkpoint")
    version, seed = reader.take("<HQ")
    if version != CHECKPOINT_VERSION:
        raise CheckpointVersionError(
            f"{source}: checkpoint version {version}, this build reads version {CHECKPOINT_VERSION}"
        )

    (ndim,) = reader.take("<B")
    input_shape = reader.take(f"<{ndim}I")

    (spec_count,) = reader.take("<H")
    specs = []
    for _ in range(spec_count):
        (length,) = reader.take("<H")
        specs.append(_decode_spec(reader.take_bytes(length), source))

    graph = build_graph(specs, seed, tuple(input_shape))
    (tensor_count,) = reader.take("<H")
    expected = [tensor for pair in graph.params for tensor in pair]
    if tensor_count != len(expected):
        raise CheckpointError(f"{source}: {tensor_count} parameter tensors, architecture needs {len(expected)}")
    for target in expected:
        tensor = reader.take_tensor()
        if tensor.shape != target.shape:
            raise CheckpointError(f"{source}: parameter shape {tensor.shape}, architecture needs {target.shape}")
        target[...] = tensor

    snapshot = None
    (has_snapshot,) = reader.take("<B")
    if has_snapshot:
        (count,) = reader.take("<H")
        snapshot = StateSnapshot.of(reader.take_tensor() for _ in range(count))
        if snapshot.shapes != graph.hidden_shapes():
            raise CheckpointError(f"{source}: snapshot shapes {snapshot.shapes} do not match the architecture")
    if reader.offset != len(data):
        raise CheckpointError(f"{source}: {len(data) - reader.offset} trailing bytes")
    return Checkpoint(graph=graph, snapshot=snapshot)


def save_checkpoint(path: Path | str, graph: LayerGraph, snapshot: StateSnapshot | None = None) -> None:
    path = Path(path)
    try:
        path.write_bytes(encode_checkpoint(graph, snapshot))
    except OSError as e:
        raise CheckpointError(f"{path}: {e.strerror or e}") from e


def load_checkpoint(path: Path | str) -> Checkpoint:
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as e:
        raise CheckpointError(f"{path}: {e.strerror or e}") from e
    return decode_checkpoint(data, str(path))


def parameter_digest(graph: LayerGraph) -> str:
    """SHA-256 over the little-endian parameter bytes, for proving identical initialization."""
    digest = hashlib.sha256()
    for weight, bias in graph.params:
        digest.update(np.ascontiguousarray(weight, dtype="<f8").tobytes())
        digest.update(np.ascontiguousarray(bias, dtype="<f8").tobytes())
    return f"sha256:{digest.hexdigest()[:16]}"
