"""Convert PyTorch checkpoints into ATA archives.

Selects the 4D floating-point parameters (conv kernels) in module order,
transposes them from torch's native (out, in, h, w) storage to ATA's
input-major (in, out, h, w), upcasts to float64, and records a chain
topology when consecutive kernels line up output-to-input.

Kernels are exported as stored: no batch-norm folding. Grouped and
depthwise kernels are exported as-is with a manifest warning, since
their input extent does not span the full incoming channel set.
"""

from __future__ import annotations

import fnmatch
from dataclasses import dataclass, field

import torch

from .ata import write_ata

TRANSPOSITION = (1, 0, 2, 3)  # torch (out, in, h, w) -> ATA (in, out, h, w)


class ExportError(Exception):
    pass


class SourceError(ExportError):
    """Checkpoint could not be loaded or holds no usable mapping."""


class EmptySelectionError(ExportError):
    """No 4D kernel matched the selection."""


@dataclass
class ExportManifest:
    source_path: str
    layer_selection: list[str]
    transposition: tuple[int, int, int, int]
    chain_detected: bool
    warnings: list[str] = field(default_factory=list)

    def to_json_dict(self) -> dict:
        return {
            "source_path": self.source_path,
            "layer_selection": list(self.layer_selection),
            "transposition": list(self.transposition),
            "chain_detected": self.chain_detected,
            "warnings": list(self.warnings),
        }


def _load_state_dict(source_path) -> dict:
    try:
        payload = torch.load(source_path, map_location="cpu")
    except Exception:
        try:
            payload = torch.load(source_path, map_location="cpu", weights_only=False)
        except Exception as exc:
            raise SourceError(f"cannot load checkpoint '{source_path}': {exc}") from exc
    if isinstance(payload, torch.nn.Module):
        return dict(payload.state_dict())
    if isinstance(payload, dict):
        inner = payload.get("state_dict")
        if isinstance(inner, dict):
            payload = inner
        tensors = {
            name: value
            for name, value in payload.items()
            if isinstance(value, torch.Tensor)
        }
        if tensors:
            return tensors
    raise SourceError(
        f"checkpoint '{source_path}' holds no tensor mapping "
        f"(got {type(payload).__name__})"
    )


def _select_kernels(
    state: dict, include_patterns: list[str] | None
) -> list[tuple[str, torch.Tensor]]:
    selected = []
    for name, value in state.items():
        if value.dim() != 4 or not value.is_floating_point():
            continue
        if include_patterns and not any(
            fnmatch.fnmatchcase(name, pattern) for pattern in include_patterns
        ):
            continue
        selected.append((name, value))
    return selected


def export(
    source_path, output_path, include_patterns: list[str] | None = None
) -> ExportManifest:
    """Write the selected kernels of ``source_path`` to ``output_path``."""
    state = _load_state_dict(source_path)
    kernels = _select_kernels(state, include_patterns)
    if not kernels:
        raise EmptySelectionError(
            f"no 4D convolution kernels selected from '{source_path}'"
            + (f" with patterns {include_patterns}" if include_patterns else "")
        )

    warnings = []
    arrays = []
    for name, tensor in kernels:
        out_ch, in_ch, height, width = tensor.shape
        if in_ch == 1 and height * width > 1:
            warnings.append(
                f"'{name}' looks depthwise/grouped (input extent 1); exported "
                f"as-is, spectrum semantics may not apply"
            )
        arrays.append(
            (name, tensor.detach().permute(*TRANSPOSITION).double().numpy())
        )

    chain = all(
        prev.shape[1] == nxt.shape[0]
        for (_, prev), (_, nxt) in zip(arrays, arrays[1:])
    )
    names = [name for name, _ in arrays]
    write_ata(output_path, arrays, chain_layers=names if chain else None)
    return ExportManifest(
        source_path=str(source_path),
        layer_selection=names,
        transposition=TRANSPOSITION,
        chain_detected=chain,
        warnings=warnings,
    )
