"""Filter-mask generation and chain-topology weight surgery.

Filters are removed uniformly at random within each layer (every filter
in a layer is treated as equally important), one shot, from a Philox
counter-based stream keyed by (seed, layer_index) so plans are identical
however layers are evaluated. Integerization floors the continuous
ratio, never rounding up, and a min_keep floor guarantees survivors.

Surgery is exact slice deletion: layer l keeps its selected output
channels and layer l+1 drops the matching input channels. It requires a
chain topology; any other topology still gets a plan, just no surgery.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .allocator import AllocationResult
from .archive import TensorArchive, TopologyDescriptor, WeightTensor
from .errors import UnsupportedTopologyError, ValidationError
from .metric import AfieReport


@dataclass
class LayerPlan:
    name: str
    filter_count: int
    ratio: float
    removed_count: int
    removed_indices: tuple[int, ...]
    kept_indices: tuple[int, ...]


@dataclass
class PruningPlan:
    """Complete, reproducible pruning decision for one archive."""

    seed: int
    global_ratio: float
    per_layer: list[LayerPlan]
    afie_report: AfieReport

    def to_json_dict(self) -> dict:
        return {
            "seed": self.seed,
            "global_ratio": self.global_ratio,
            "per_layer": [
                {
                    "name": entry.name,
                    "filter_count": entry.filter_count,
                    "ratio": entry.ratio,
                    "removed_count": entry.removed_count,
                    "removed_indices": list(entry.removed_indices),
                    "kept_indices": list(entry.kept_indices),
                }
                for entry in self.per_layer
            ],
            "afie_report": self.afie_report.to_json_dict(),
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json_dict(), indent=2, ensure_ascii=False) + "\n"

    @classmethod
    def from_json_dict(cls, obj: dict) -> "PruningPlan":
        try:
            per_layer = [
                LayerPlan(
                    name=str(entry["name"]),
                    filter_count=int(entry["filter_count"]),
                    ratio=float(entry["ratio"]),
                    removed_count=int(entry["removed_count"]),
                    removed_indices=tuple(int(i) for i in entry["removed_indices"]),
                    kept_indices=tuple(int(i) for i in entry["kept_indices"]),
                )
                for entry in obj["per_layer"]
            ]
            return cls(
                seed=int(obj["seed"]),
                global_ratio=float(obj["global_ratio"]),
                per_layer=per_layer,
                afie_report=AfieReport.from_json_dict(obj["afie_report"]),
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise ValidationError(f"malformed pruning plan: {exc}") from exc

    @classmethod
    def loads(cls, text: str) -> "PruningPlan":
        try:
            obj = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"plan is not valid JSON: {exc}") from exc
        return cls.from_json_dict(obj)


def removed_filter_indices(
    filter_count: int, removed_count: int, seed: int, layer_index: int
) -> list[int]:
    """Sample ``removed_count`` distinct filter indices, sorted ascending.

    Partial Fisher-Yates over the index range, driven by raw Philox
    output keyed per layer: deterministic across platforms and
    independent of evaluation order.
    """
    if removed_count <= 0:
        return []
    if removed_count > filter_count:
        raise ValidationError(
            f"cannot remove {removed_count} of {filter_count} filters"
        )
    key = np.array([seed, layer_index], dtype=np.uint64)
    words = np.random.Philox(key=key).random_raw(removed_count)
    pool = list(range(filter_count))
    for step in range(removed_count):
        span = filter_count - step
        pick = step + ((int(words[step]) * span) >> 64)
        pool[step], pool[pick] = pool[pick], pool[step]
    return sorted(pool[:removed_count])


def make_plan(
    archive: TensorArchive,
    result: AllocationResult,
    seed: int,
    min_keep: int,
    afie_report: AfieReport,
) -> PruningPlan:
    """Turn continuous ratios into concrete per-layer filter masks."""
    if len(result.ratios) != len(archive.tensors):
        raise ValidationError(
            f"allocation covers {len(result.ratios)} layers but archive has "
            f"{len(archive.tensors)}"
        )
    if min_keep < 1:
        raise ValidationError(f"min_keep must be >= 1, got {min_keep}")

    per_layer = []
    for index, (tensor, ratio) in enumerate(zip(archive.tensors, result.ratios)):
        filter_count = tensor.out_channels
        removed_count = max(
            0, min(int(math.floor(ratio * filter_count)), filter_count - min_keep)
        )
        removed = removed_filter_indices(filter_count, removed_count, seed, index)
        removed_set = set(removed)
        kept = [i for i in range(filter_count) if i not in removed_set]
        per_layer.append(
            LayerPlan(
                name=tensor.name,
                filter_count=filter_count,
                ratio=ratio,
                removed_count=removed_count,
                removed_indices=tuple(removed),
                kept_indices=tuple(kept),
            )
        )
    return PruningPlan(
        seed=seed,
        global_ratio=result.global_ratio,
        per_layer=per_layer,
        afie_report=afie_report,
    )


def check_plan_matches(archive: TensorArchive, plan: PruningPlan) -> None:
    if len(plan.per_layer) != len(archive.tensors):
        raise ValidationError(
            f"plan covers {len(plan.per_layer)} layers but archive has "
            f"{len(archive.tensors)}"
        )
    for tensor, entry in zip(archive.tensors, plan.per_layer):
        if entry.name != tensor.name:
            raise ValidationError(
                f"plan layer '{entry.name}' does not match archive tensor "
                f"'{tensor.name}'"
            )
        if entry.filter_count != tensor.out_channels:
            raise ValidationError(
                f"plan says '{entry.name}' has {entry.filter_count} filters, "
                f"archive has {tensor.out_channels}"
            )
        universe = set(range(entry.filter_count))
        removed = set(entry.removed_indices)
        kept = set(entry.kept_indices)
        if removed | kept != universe or removed & kept:
            raise ValidationError(
                f"plan layer '{entry.name}': removed/kept sets do not partition "
                f"0..{entry.filter_count - 1}"
            )


def apply_plan(archive: TensorArchive, plan: PruningPlan) -> TensorArchive:
    """Delete the planned output channels, shrinking each successor's input
    dimension to match; surviving values are copied bit-exactly."""
    archive.validate()
    if archive.topology is None or not archive.topology.chain:
        raise UnsupportedTopologyError(
            "weight surgery requires a chain topology; plan-only mode is "
            "available for other networks"
        )
    if set(archive.topology.layers) != set(archive.names):
        raise UnsupportedTopologyError(
            "chain topology must list every tensor in the archive"
        )
    check_plan_matches(archive, plan)

    kept_by_name = {entry.name: list(entry.kept_indices) for entry in plan.per_layer}
    chain = list(archive.topology.layers)
    predecessor = {name: chain[pos - 1] if pos > 0 else None for pos, name in enumerate(chain)}

    pruned = []
    for tensor in archive.tensors:
        kept_out = kept_by_name[tensor.name]
        prev_name = predecessor[tensor.name]
        if prev_name is None:
            data = tensor.data[:, kept_out, :, :]
        else:
            kept_in = kept_by_name[prev_name]
            data = tensor.data[np.ix_(kept_in, kept_out)]
        pruned.append(WeightTensor(name=tensor.name, data=np.ascontiguousarray(data)))

    result = TensorArchive(
        tensors=pruned,
        topology=TopologyDescriptor(layers=archive.topology.layers, chain=True),
    )
    result.validate()
    return result


def plan_stats(plan: PruningPlan, archive: TensorArchive) -> dict:
    """Parameter and filter accounting before/after the planned surgery.

    Input-dimension shrinkage is counted only when the archive carries a
    chain topology; otherwise only output channels shrink.
    """
    check_plan_matches(archive, plan)
    chained = archive.topology is not None and archive.topology.chain
    kept_by_name = {entry.name: len(entry.kept_indices) for entry in plan.per_layer}
    predecessor: dict[str, str | None] = {name: None for name in archive.names}
    if chained:
        chain = list(archive.topology.layers)
        for pos, name in enumerate(chain):
            predecessor[name] = chain[pos - 1] if pos > 0 else None

    params_before = 0
    params_after = 0
    filters_before = 0
    filters_after = 0
    for tensor in archive.tensors:
        in_ch, out_ch, height, width = tensor.shape
        params_before += in_ch * out_ch * height * width
        filters_before += out_ch
        kept_out = kept_by_name[tensor.name]
        filters_after += kept_out
        prev_name = predecessor.get(tensor.name)
        kept_in = kept_by_name[prev_name] if prev_name is not None else in_ch
        params_after += kept_in * kept_out * height * width

    return {
        "params_before": params_before,
        "params_after": params_after,
        "filters_before": filters_before,
        "filters_after": filters_after,
        "achieved_global_ratio": 1.0 - filters_after / filters_before,
    }
