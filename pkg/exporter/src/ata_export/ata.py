"""Minimal ATA v1 writer.

Layout (integers little-endian): magic "ATA1"; u64 length J of the JSON
index; J bytes of UTF-8 JSON; payload of raw little-endian float64
values, tensors contiguous in index order with no padding. Offsets in
the index are relative to the first payload byte. Shapes are stored
input-major: [in_channels, out_channels, height, width].
"""

from __future__ import annotations

import json
import struct

import numpy as np

MAGIC = b"ATA1"


def write_ata(
    path,
    tensors: list[tuple[str, np.ndarray]],
    chain_layers: list[str] | None = None,
) -> int:
    """Write named float64 4D arrays; returns the byte count.

    ``chain_layers`` (when given) is recorded as a chain topology.
    """
    entries = []
    offset = 0
    blobs = []
    for name, array in tensors:
        array = np.ascontiguousarray(array, dtype="<f8")
        if array.ndim != 4:
            raise ValueError(f"tensor '{name}' must be 4D, got {array.ndim}D")
        if not np.isfinite(array).all():
            raise ValueError(f"tensor '{name}' contains NaN or infinity")
        blob = array.tobytes(order="C")
        entries.append(
            {
                "name": name,
                "shape": [int(x) for x in array.shape],
                "offset": offset,
                "nbytes": len(blob),
            }
        )
        blobs.append(blob)
        offset += len(blob)

    topology = None
    if chain_layers is not None:
        topology = {"layers": list(chain_layers), "chain": True}
    index = {"version": 1, "topology": topology, "tensors": entries}
    index_bytes = json.dumps(index, separators=(",", ":"), ensure_ascii=False).encode("utf-8")

    with open(path, "wb") as handle:
        written = handle.write(MAGIC)
        written += handle.write(struct.pack("<Q", len(index_bytes)))
        written += handle.write(index_bytes)
        for blob in blobs:
            written += handle.write(blob)
    return written
