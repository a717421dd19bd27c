"""Per-layer importance scoring from singular spectra.

The pipeline per layer: 0-1 normalize the spectrum, softmax it into a
probability vector, take its information entropy (nats) as the layer's
total useful information K, and divide by the layer's filter count to
get AFIE, the average filter information entropy. A flat spectrum means
the layer projects information with equal strength along every
dimension, so it scores maximal entropy; a spectrum dominated by one
value scores near zero.

Spectra with all values equal (including the all-zero spectrum, where
0-1 normalization would divide by zero) normalize to the uniform
distribution and are flagged degenerate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .archive import TensorArchive
from .errors import ValidationError
from .spectral import DEFAULT_TOLERANCE, LayerSpectrum, fold_hw, singular_values


@dataclass
class NormalizedSpectrum:
    layer_index: int
    probs: np.ndarray
    degenerate: bool


@dataclass
class AfieScore:
    layer_index: int
    total_entropy: float
    filter_count: int
    afie: float
    spectrum_size: int


@dataclass
class AfieReport:
    """Scores for every layer in archive order, plus the maximum and its
    (lowest-index on ties) location."""

    scores: list[AfieScore]
    max_afie: float
    argmax_layer: int

    @classmethod
    def from_scores(cls, scores: list[AfieScore]) -> "AfieReport":
        if not scores:
            raise ValidationError("report needs at least one layer")
        best = 0
        for index, score in enumerate(scores):
            if score.afie > scores[best].afie:
                best = index
        return cls(scores=scores, max_afie=scores[best].afie, argmax_layer=best)

    def afie_values(self) -> list[float]:
        return [score.afie for score in self.scores]

    def to_json_dict(self) -> dict:
        return {
            "scores": [
                {
                    "layer_index": s.layer_index,
                    "total_entropy": s.total_entropy,
                    "filter_count": s.filter_count,
                    "afie": s.afie,
                    "spectrum_size": s.spectrum_size,
                }
                for s in self.scores
            ],
            "max_afie": self.max_afie,
            "argmax_layer": self.argmax_layer,
        }

    @classmethod
    def from_json_dict(cls, obj: dict) -> "AfieReport":
        scores = [
            AfieScore(
                layer_index=int(s["layer_index"]),
                total_entropy=float(s["total_entropy"]),
                filter_count=int(s["filter_count"]),
                afie=float(s["afie"]),
                spectrum_size=int(s["spectrum_size"]),
            )
            for s in obj["scores"]
        ]
        return cls(
            scores=scores,
            max_afie=float(obj["max_afie"]),
            argmax_layer=int(obj["argmax_layer"]),
        )


def normalize_spectrum(spectrum: LayerSpectrum) -> NormalizedSpectrum:
    """Map singular values to a probability vector via 0-1 normalization
    followed by softmax; equal-valued spectra become uniform."""
    values = spectrum.singular_values
    size = values.size
    if size == 0:
        raise ValidationError("cannot normalize an empty spectrum")
    if size == 1:
        return NormalizedSpectrum(
            layer_index=spectrum.layer_index, probs=np.array([1.0]), degenerate=True
        )
    s_max = float(values[0])
    s_min = float(values[-1])
    if s_max == s_min:
        probs = np.full(size, 1.0 / size)
        return NormalizedSpectrum(
            layer_index=spectrum.layer_index, probs=probs, degenerate=True
        )
    unit = (values - s_min) / (s_max - s_min)
    weights = np.exp(unit)
    probs = weights / weights.sum()
    return NormalizedSpectrum(
        layer_index=spectrum.layer_index, probs=probs, degenerate=False
    )


def entropy(norm: NormalizedSpectrum) -> float:
    """Information entropy in nats; zero-probability terms contribute 0."""
    probs = norm.probs
    positive = probs[probs > 0.0]
    # + 0.0 folds the -0.0 produced by a single-outcome distribution
    return float(-np.sum(positive * np.log(positive))) + 0.0


def afie_for_layer(spectrum: LayerSpectrum, filter_count: int) -> AfieScore:
    """Total entropy of the normalized spectrum divided by the filter count."""
    if filter_count < 1:
        raise ValidationError(f"filter count must be >= 1, got {filter_count}")
    total = entropy(normalize_spectrum(spectrum))
    return AfieScore(
        layer_index=spectrum.layer_index,
        total_entropy=total,
        filter_count=filter_count,
        afie=total / filter_count,
        spectrum_size=spectrum.count,
    )


def report(archive: TensorArchive, tolerance: float = DEFAULT_TOLERANCE) -> AfieReport:
    """Score every layer of ``archive`` in order; filter count is the
    tensor's output-channel extent."""
    archive.validate()
    scores = []
    for index, tensor in enumerate(archive.tensors):
        spectrum = singular_values(fold_hw(tensor), tolerance, layer_index=index)
        scores.append(afie_for_layer(spectrum, tensor.out_channels))
    return AfieReport.from_scores(scores)


def entropy_upper_bound(spectrum_size: int) -> float:
    """ln(p): the entropy of the uniform distribution over p outcomes."""
    return math.log(spectrum_size) if spectrum_size > 1 else 0.0
