"""Reader/writer for the ATA tensor-archive format.

ATA carries named 4D convolution kernels between the exporter and the
numeric core. The layout is bit-exact (all integers little-endian):

    bytes 0..3      magic b"ATA1"
    bytes 4..11     u64: length J of the JSON index
    bytes 12..12+J  UTF-8 JSON index
    remainder       payload: raw little-endian float64 values, tensors
                    stored contiguously in index order, no padding

Index object::

    {"version": 1,
     "topology": {"layers": [...], "chain": bool} | null,
     "tensors": [{"name": str, "shape": [I, O, H, W],
                  "offset": u64, "nbytes": u64}, ...]}

Offsets are relative to the first byte after the JSON index. Shapes are
stored input-major, ``[in_channels, out_channels, height, width]``;
exporters transpose from framework-native (out, in, h, w) layouts.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from typing import BinaryIO

import numpy as np

from .errors import FormatError, TruncatedArchiveError, ValidationError

MAGIC = b"ATA1"
FORMAT_VERSION = 1
MAX_NAME_BYTES = 256

_ITEM_BYTES = 8  # float64 payload elements


@dataclass(frozen=True)
class TopologyDescriptor:
    """Ordered layer names plus a flag marking a sequential (chain) network
    where layer l's output channels feed layer l+1's input channels."""

    layers: tuple[str, ...]
    chain: bool

    def to_json_dict(self) -> dict:
        return {"layers": list(self.layers), "chain": self.chain}

    @classmethod
    def from_json_dict(cls, obj: dict) -> "TopologyDescriptor":
        layers = obj.get("layers")
        chain = obj.get("chain")
        if not isinstance(layers, list) or not all(isinstance(x, str) for x in layers):
            raise FormatError("topology 'layers' must be a list of strings")
        if not isinstance(chain, bool):
            raise FormatError("topology 'chain' must be a boolean")
        return cls(layers=tuple(layers), chain=chain)


@dataclass(eq=False)
class WeightTensor:
    """One named convolution kernel, shape (in, out, height, width),
    float64, C-contiguous."""

    name: str
    data: np.ndarray

    def __post_init__(self):
        self.data = np.ascontiguousarray(self.data, dtype=np.float64)

    @property
    def shape(self) -> tuple[int, int, int, int]:
        return tuple(int(x) for x in self.data.shape)  # type: ignore[return-value]

    @property
    def in_channels(self) -> int:
        return int(self.data.shape[0])

    @property
    def out_channels(self) -> int:
        return int(self.data.shape[1])

    def validate(self) -> None:
        encoded = self.name.encode("utf-8")
        if not 1 <= len(encoded) <= MAX_NAME_BYTES:
            raise ValidationError(
                f"tensor name must be 1..{MAX_NAME_BYTES} UTF-8 bytes, got {len(encoded)}"
            )
        if self.data.ndim != 4:
            raise ValidationError(
                f"tensor '{self.name}' must be 4D (in, out, h, w), got {self.data.ndim}D"
            )
        if any(extent < 1 for extent in self.data.shape):
            raise ValidationError(
                f"tensor '{self.name}' has a zero extent in shape {self.shape}"
            )
        if not np.isfinite(self.data).all():
            raise ValidationError(f"tensor '{self.name}' contains NaN or infinity")

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, WeightTensor):
            return NotImplemented
        return (
            self.name == other.name
            and self.shape == other.shape
            and self.data.tobytes() == other.data.tobytes()
        )


@dataclass(eq=False)
class TensorArchive:
    """Ordered collection of weight tensors; layer index l downstream is
    the position in ``tensors``, never a name sort."""

    tensors: list[WeightTensor] = field(default_factory=list)
    topology: TopologyDescriptor | None = None
    version: int = FORMAT_VERSION

    def validate(self) -> None:
        if self.version != FORMAT_VERSION:
            raise ValidationError(f"unsupported archive version {self.version}")
        seen: set[str] = set()
        for tensor in self.tensors:
            tensor.validate()
            if tensor.name in seen:
                raise ValidationError(f"duplicate tensor name '{tensor.name}'")
            seen.add(tensor.name)
        if self.topology is not None:
            by_name = {t.name: t for t in self.tensors}
            for name in self.topology.layers:
                if name not in by_name:
                    raise ValidationError(f"topology layer '{name}' not in archive")
            if self.topology.chain:
                for prev, nxt in zip(self.topology.layers, self.topology.layers[1:]):
                    out_prev = by_name[prev].out_channels
                    in_next = by_name[nxt].in_channels
                    if out_prev != in_next:
                        raise ValidationError(
                            f"chain break: '{prev}' has {out_prev} output channels "
                            f"but '{nxt}' expects {in_next} inputs"
                        )

    def layer(self, name: str) -> WeightTensor:
        for tensor in self.tensors:
            if tensor.name == name:
                return tensor
        raise KeyError(name)

    @property
    def names(self) -> list[str]:
        return [t.name for t in self.tensors]

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, TensorArchive):
            return NotImplemented
        return (
            self.version == other.version
            and self.topology == other.topology
            and self.tensors == other.tensors
        )


def write_archive(archive: TensorArchive, destination: BinaryIO) -> int:
    """Serialize ``archive`` to ``destination``, returning the byte count."""
    archive.validate()

    entries = []
    offset = 0
    for tensor in archive.tensors:
        nbytes = tensor.data.size * _ITEM_BYTES
        entries.append(
            {
                "name": tensor.name,
                "shape": list(tensor.shape),
                "offset": offset,
                "nbytes": nbytes,
            }
        )
        offset += nbytes

    index = {
        "version": archive.version,
        "topology": archive.topology.to_json_dict() if archive.topology else None,
        "tensors": entries,
    }
    index_bytes = json.dumps(index, separators=(",", ":"), ensure_ascii=False).encode("utf-8")

    written = destination.write(MAGIC)
    written += destination.write(struct.pack("<Q", len(index_bytes)))
    written += destination.write(index_bytes)
    for tensor in archive.tensors:
        written += destination.write(tensor.data.astype("<f8", copy=False).tobytes(order="C"))
    return written


def read_archive(source: BinaryIO) -> TensorArchive:
    """Parse an ATA byte stream, rejecting malformed headers, short payloads
    and non-finite values."""
    magic = source.read(len(MAGIC))
    if magic != MAGIC:
        raise FormatError(f"bad magic bytes {magic!r}, expected {MAGIC!r}")

    header = source.read(8)
    if len(header) != 8:
        raise FormatError("truncated header: missing index length")
    (index_len,) = struct.unpack("<Q", header)

    index_bytes = source.read(index_len)
    if len(index_bytes) != index_len:
        raise FormatError(
            f"truncated index: declared {index_len} bytes, got {len(index_bytes)}"
        )
    try:
        index = json.loads(index_bytes.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"index is not valid UTF-8 JSON: {exc}") from exc
    if not isinstance(index, dict):
        raise FormatError("index must be a JSON object")
    if index.get("version") != FORMAT_VERSION:
        raise FormatError(f"unsupported format version {index.get('version')!r}")

    entries = index.get("tensors")
    if not isinstance(entries, list):
        raise FormatError("index 'tensors' must be a list")

    topology = None
    topo_obj = index.get("topology")
    if topo_obj is not None:
        if not isinstance(topo_obj, dict):
            raise FormatError("index 'topology' must be an object or null")
        topology = TopologyDescriptor.from_json_dict(topo_obj)

    payload = source.read()
    expected_offset = 0
    tensors: list[WeightTensor] = []
    for pos, entry in enumerate(entries):
        if not isinstance(entry, dict):
            raise FormatError(f"tensor entry {pos} must be an object")
        name = entry.get("name")
        shape = entry.get("shape")
        offset = entry.get("offset")
        nbytes = entry.get("nbytes")
        if not isinstance(name, str):
            raise FormatError(f"tensor entry {pos} has no name")
        if (
            not isinstance(shape, list)
            or len(shape) != 4
            or not all(isinstance(x, int) and not isinstance(x, bool) for x in shape)
        ):
            raise FormatError(f"tensor '{name}' shape must be four integer extents")
        if not isinstance(offset, int) or not isinstance(nbytes, int):
            raise FormatError(f"tensor '{name}' offset/nbytes must be integers")
        if offset != expected_offset:
            raise FormatError(
                f"tensor '{name}' offset {offset} breaks contiguity "
                f"(expected {expected_offset})"
            )
        count = 1
        for extent in shape:
            count *= extent
        if nbytes != count * _ITEM_BYTES:
            raise FormatError(
                f"tensor '{name}' declares {nbytes} bytes but shape {shape} "
                f"needs {count * _ITEM_BYTES}"
            )
        end = offset + nbytes
        if end > len(payload):
            raise TruncatedArchiveError(
                f"payload for tensor '{name}' is truncated: "
                f"missing {end - len(payload)} bytes",
                missing_bytes=end - len(payload),
            )
        values = np.frombuffer(payload[offset:end], dtype="<f8").reshape(shape)
        if not np.isfinite(values).all():
            raise ValidationError(f"tensor '{name}' contains NaN or infinity")
        tensors.append(WeightTensor(name=name, data=values.astype(np.float64)))
        expected_offset = end

    if len(payload) != expected_offset:
        raise FormatError(
            f"payload has {len(payload) - expected_offset} trailing bytes"
        )

    archive = TensorArchive(tensors=tensors, topology=topology)
    archive.validate()
    return archive


def save_archive(archive: TensorArchive, path) -> int:
    with open(path, "wb") as handle:
        return write_archive(archive, handle)


def load_archive(path) -> TensorArchive:
    with open(path, "rb") as handle:
        return read_archive(handle)
