"""Kernel folding and singular-spectrum extraction.

A 4D kernel (in, out, h, w) folds to its (in x out) matrix of spatial
means; the layer spectrum is the singular values of that matrix. The
spectrum is computed with a one-sided (Hestenes) Jacobi iteration: plane
rotations orthogonalize column pairs until every pair is numerically
orthogonal, after which the column norms are the singular values. Pairs
are scheduled round-robin so each round applies n/2 independent
rotations as one vectorized column-block update, which keeps sweeps
cheap even for folded matrices a few thousand per side.

Only the values are kept; left/right singular vectors are discarded.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .archive import WeightTensor
from .errors import ValidationError

DEFAULT_TOLERANCE = 1e-10

_MAX_SWEEPS = 100


@dataclass
class FoldedMatrix:
    """Spatial-mean fold of a kernel: rows = input channels, cols = output
    channels."""

    rows: int
    cols: int
    data: np.ndarray

    def validate(self) -> None:
        if self.data.shape != (self.rows, self.cols):
            raise ValidationError(
                f"folded matrix data shape {self.data.shape} does not match "
                f"({self.rows}, {self.cols})"
            )
        if not np.isfinite(self.data).all():
            raise ValidationError("folded matrix contains NaN or infinity")


@dataclass
class LayerSpectrum:
    """Singular values of one layer's folded matrix, sorted descending."""

    layer_index: int
    singular_values: np.ndarray

    @property
    def count(self) -> int:
        return int(self.singular_values.size)


def fold_hw(tensor: WeightTensor) -> FoldedMatrix:
    """Collapse the spatial extents by the signed arithmetic mean.

    Sign cancellation across the kernel window is accepted; for 1x1
    kernels the fold is an identity reshape.
    """
    tensor.validate()
    folded = tensor.data.mean(axis=(2, 3))
    return FoldedMatrix(rows=tensor.in_channels, cols=tensor.out_channels, data=folded)


def _round_robin_schedule(n: int) -> list[tuple[np.ndarray, np.ndarray]]:
    """Tournament pairing: n-1 rounds, each pairing all columns disjointly.

    Odd n gets a dummy slot (-1) whose pairs are dropped.
    """
    slots = list(range(n))
    if n % 2 == 1:
        slots.append(-1)
    size = len(slots)
    rounds = []
    order = slots[:]
    for _ in range(size - 1):
        first = np.array(order[: size // 2])
        second = np.array(order[size // 2 :][::-1])
        keep = (first >= 0) & (second >= 0)
        rounds.append((first[keep], second[keep]))
        # rotate all but the first slot
        order = [order[0]] + [order[-1]] + order[1:-1]
    return rounds


def _jacobi_orthogonalize(work: np.ndarray, conv_tol: float) -> None:
    """Drive all column pairs of ``work`` to mutual orthogonality in place."""
    n = work.shape[1]
    if n < 2:
        return
    schedule = _round_robin_schedule(n)
    for _ in range(_MAX_SWEEPS):
        worst = 0.0
        for left, right in schedule:
            cols_l = work[:, left]
            cols_r = work[:, right]
            alpha = np.einsum("ij,ij->j", cols_l, cols_l)
            beta = np.einsum("ij,ij->j", cols_r, cols_r)
            gamma = np.einsum("ij,ij->j", cols_l, cols_r)
            scale = np.sqrt(alpha * beta)
            rel = np.divide(
                np.abs(gamma), scale, out=np.zeros_like(gamma), where=scale > 0.0
            )
            if rel.size:
                worst = max(worst, float(rel.max()))
            active = rel > conv_tol
            if not active.any():
                continue
            tau = (beta[active] - alpha[active]) / (2.0 * gamma[active])
            t = np.where(
                tau == 0.0, 1.0, np.sign(tau) / (np.abs(tau) + np.hypot(1.0, tau))
            )
            c = 1.0 / np.sqrt(1.0 + t * t)
            s = c * t
            snap_l = cols_l[:, active]
            snap_r = cols_r[:, active]
            work[:, left[active]] = c * snap_l - s * snap_r
            work[:, right[active]] = s * snap_l + c * snap_r
        if worst <= conv_tol:
            return


def singular_values(
    matrix: FoldedMatrix, tolerance: float = DEFAULT_TOLERANCE, *, layer_index: int = 0
) -> LayerSpectrum:
    """Return the min(rows, cols) singular values of ``matrix``, descending.

    ``tolerance`` is the relative accuracy target on squared values
    against sigma_max^2; the Jacobi convergence threshold is derived from
    it. A zero matrix yields an all-zero spectrum.
    """
    matrix.validate()
    if tolerance <= 0.0:
        raise ValidationError(f"tolerance must be positive, got {tolerance}")

    # Orthogonalize the smaller column set.
    if matrix.rows >= matrix.cols:
        work = matrix.data.astype(np.float64, copy=True)
    else:
        work = matrix.data.T.astype(np.float64, copy=True)

    # normalize magnitude so squared column norms cannot over/underflow
    magnitude = float(np.abs(work).max()) if work.size else 0.0
    if magnitude > 0.0:
        work /= magnitude

    conv_tol = max(min(tolerance / 100.0, 1e-12), 5e-16)
    _jacobi_orthogonalize(work, conv_tol)

    values = magnitude * np.sqrt(np.einsum("ij,ij->j", work, work))
    values[::-1].sort()
    return LayerSpectrum(layer_index=layer_index, singular_values=values)
