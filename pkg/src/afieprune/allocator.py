"""Per-layer pruning-ratio allocation under a global filter budget.

Ratios are inversely proportional to layer importance: layer l receives
lambda_l = lambda_min * afie_max / afie_l, where lambda_min (the ratio
of the most important layer) is fixed by the budget constraint

    sum_l lambda_l * c_l = global_ratio * total_filters.

Substituting the proportional form gives the closed solve

    lambda_min = global_ratio * total_filters
                 / sum_l (afie_max / afie_l) * c_l.

(A closed form sometimes quoted for this problem, the sum of
global_ratio * total_filters * afie_l / (afie_max * c_l) over layers,
does not satisfy the constraint above; this module derives lambda_min
from the constraint directly.)

Layers whose ratio would reach the clamp ceiling are fixed there (the
ceiling reserves a sliver of filters so the network stays connected),
and lambda_min is re-solved for the rest against the residual budget
until no new layer clamps. Zero-AFIE layers would be sent to an infinite
ratio by the proportional form, so they are pre-clamped to the ceiling.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from .errors import InfeasibleBudgetError, ValidationError

DEFAULT_CLAMP_CEILING = 0.99
DEFAULT_MIN_KEEP = 1

_FEASIBILITY_EPS = 1e-9


@dataclass
class AllocationInput:
    """Per-layer AFIE scores and filter counts plus the global budget."""

    afie: list[float]
    filters: list[int]
    global_ratio: float
    clamp_ceiling: float = DEFAULT_CLAMP_CEILING
    min_keep: int = DEFAULT_MIN_KEEP

    def validate(self) -> None:
        if len(self.afie) != len(self.filters):
            raise ValidationError(
                f"afie has {len(self.afie)} layers but filters has {len(self.filters)}"
            )
        if not self.afie:
            raise ValidationError("allocation needs at least one layer")
        for index, value in enumerate(self.afie):
            if not math.isfinite(value) or value < 0.0:
                raise ValidationError(
                    f"layer {index} has invalid AFIE {value}; scores must be >= 0"
                )
        for index, count in enumerate(self.filters):
            if count < 1:
                raise ValidationError(f"layer {index} has filter count {count} < 1")
        if not 0.0 < self.global_ratio < 1.0:
            raise ValidationError(
                f"global ratio must lie in (0, 1), got {self.global_ratio}"
            )
        if not 0.0 < self.clamp_ceiling < 1.0:
            raise ValidationError(
                f"clamp ceiling must lie in (0, 1), got {self.clamp_ceiling}"
            )
        if self.min_keep < 1:
            raise ValidationError(f"min_keep must be >= 1, got {self.min_keep}")


@dataclass
class AllocationResult:
    """Solved ratios plus bookkeeping.

    ``infeasible_tight`` marks the edge case where forced clamps alone
    already exceed the budget, leaving the remaining layers at ratio 0.
    ``iterations`` counts clamp-fixpoint rounds (observably <= N).
    """

    ratios: list[float]
    lambda_min: float
    clamped: frozenset[int]
    achieved_budget: int
    target_budget: int
    global_ratio: float
    infeasible_tight: bool = False
    iterations: int = 0


def solve(allocation: AllocationInput) -> AllocationResult:
    """Allocate per-layer ratios meeting the global budget exactly
    (continuous), clamping at the ceiling where needed."""
    allocation.validate()
    afie = allocation.afie
    filters = allocation.filters
    ceiling = allocation.clamp_ceiling
    count = len(afie)

    total_filters = sum(filters)
    target = allocation.global_ratio * total_filters
    max_target = ceiling * total_filters
    if target > max_target + _FEASIBILITY_EPS:
        raise InfeasibleBudgetError(
            f"global ratio {allocation.global_ratio} is unreachable: even with "
            f"every layer at the ceiling the maximum achievable ratio is {ceiling}",
            max_achievable=ceiling,
        )

    afie_max = max(afie)
    # The proportional form sends zero-AFIE layers to an infinite ratio;
    # the ceiling caps exactly that case, so fix them there up front.
    clamped = {index for index, value in enumerate(afie) if value == 0.0}
    ratios = [0.0] * count
    for index in clamped:
        ratios[index] = ceiling

    lambda_min = 0.0
    infeasible_tight = False
    iterations = 0
    while True:
        iterations += 1
        free = [index for index in range(count) if index not in clamped]
        residual = target - ceiling * sum(filters[index] for index in clamped)
        if not free:
            lambda_min = 0.0
            # forced pre-clamps alone can overshoot the budget
            infeasible_tight = residual < -1e-9
            break
        if residual <= 0.0:
            infeasible_tight = True
            lambda_min = 0.0
            break
        weighted = sum((afie_max / afie[index]) * filters[index] for index in free)
        lambda_min = residual / weighted
        newly_clamped = False
        for index in free:
            ratio = lambda_min * afie_max / afie[index]
            if ratio >= ceiling:
                clamped.add(index)
                ratios[index] = ceiling
                newly_clamped = True
            else:
                ratios[index] = ratio
        if not newly_clamped:
            break
        if iterations > count:
            raise AssertionError("clamp fixpoint did not terminate within N rounds")

    achieved = sum(
        int(math.floor(ratios[index] * filters[index])) for index in range(count)
    )
    return AllocationResult(
        ratios=ratios,
        lambda_min=lambda_min,
        clamped=frozenset(clamped),
        achieved_budget=achieved,
        target_budget=int(math.floor(target + 0.5)),
        global_ratio=allocation.global_ratio,
        infeasible_tight=infeasible_tight,
        iterations=iterations,
    )


def verify(allocation: AllocationInput, result: AllocationResult) -> list[str]:
    """Independent re-check of a solved allocation; returns violations as
    human-readable strings (empty list means valid)."""
    violations: list[str] = []
    count = len(allocation.afie)
    if len(result.ratios) != count:
        return [f"result has {len(result.ratios)} ratios for {count} layers"]

    ceiling = allocation.clamp_ceiling
    for index, ratio in enumerate(result.ratios):
        if ratio < -1e-12 or ratio > ceiling + 1e-12:
            violations.append(
                f"layer {index}: ratio {ratio} outside [0, {ceiling}]"
            )
    for index in result.clamped:
        if abs(result.ratios[index] - ceiling) > 1e-12:
            violations.append(
                f"layer {index}: marked clamped but ratio {result.ratios[index]} "
                f"is not the ceiling {ceiling}"
            )

    if not result.infeasible_tight:
        target = allocation.global_ratio * sum(allocation.filters)
        spent = sum(
            ratio * flt for ratio, flt in zip(result.ratios, allocation.filters)
        )
        if abs(spent - target) > 0.5:
            violations.append(
                f"budget not conserved: allocated {spent:.6f} filters for "
                f"target {target:.6f}"
            )
        afie_max = max(allocation.afie)
        expected = result.lambda_min * afie_max
        for index in range(count):
            if index in result.clamped:
                continue
            product = result.ratios[index] * allocation.afie[index]
            if abs(product - expected) > 1e-10:
                violations.append(
                    f"layer {index}: ratio*afie = {product} deviates from "
                    f"lambda_min*afie_max = {expected}"
                )

    order = sorted(range(count), key=lambda index: allocation.afie[index])
    for prev, nxt in zip(order, order[1:]):
        if allocation.afie[prev] == allocation.afie[nxt]:
            continue
        if result.ratios[prev] < result.ratios[nxt] - 1e-12:
            violations.append(
                f"ordering broken: layer {prev} (afie {allocation.afie[prev]}) got "
                f"ratio {result.ratios[prev]} < layer {nxt} "
                f"(afie {allocation.afie[nxt]}) with {result.ratios[nxt]}"
            )
    return violations
