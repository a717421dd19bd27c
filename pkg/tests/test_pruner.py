"""Mask generation, weight surgery, and plan accounting tests."""

import dataclasses

import numpy as np
import pytest

from afieprune.allocator import AllocationInput, AllocationResult, solve
from afieprune.archive import TensorArchive, TopologyDescriptor, WeightTensor
from afieprune.errors import UnsupportedTopologyError, ValidationError
from afieprune.metric import report
from afieprune.pruner import (
    PruningPlan,
    apply_plan,
    make_plan,
    plan_stats,
    removed_filter_indices,
)


def chain_archive(shapes, seed=0, names=None):
    rng = np.random.default_rng(seed)
    names = names or [f"conv{i}" for i in range(len(shapes))]
    tensors = [
        WeightTensor(name=name, data=rng.normal(size=shape))
        for name, shape in zip(names, shapes)
    ]
    return TensorArchive(
        tensors=tensors,
        topology=TopologyDescriptor(layers=tuple(names), chain=True),
    )


def manual_result(ratios, filters, global_ratio=0.5):
    return AllocationResult(
        ratios=list(ratios),
        lambda_min=min(ratios) if ratios else 0.0,
        clamped=frozenset(),
        achieved_budget=sum(int(r * c) for r, c in zip(ratios, filters)),
        target_budget=int(global_ratio * sum(filters)),
        global_ratio=global_ratio,
    )


def plan_for(archive, ratios, seed=42, min_keep=1, global_ratio=0.5):
    result = manual_result(ratios, [t.out_channels for t in archive.tensors], global_ratio)
    return make_plan(archive, result, seed, min_keep, report(archive))


class TestRemovedIndices:
    def test_empty_when_nothing_removed(self):
        assert removed_filter_indices(10, 0, 42, 0) == []

    def test_sorted_unique_in_range(self):
        for layer in range(20):
            picks = removed_filter_indices(17, 9, 1234, layer)
            assert picks == sorted(picks)
            assert len(set(picks)) == 9
            assert all(0 <= p < 17 for p in picks)

    def test_keyed_per_layer(self):
        a = removed_filter_indices(40, 10, 7, 0)
        b = removed_filter_indices(40, 10, 7, 1)
        assert a != b  # vanishingly unlikely to collide

    def test_deterministic_for_fixed_key(self):
        assert removed_filter_indices(33, 12, 99, 3) == removed_filter_indices(33, 12, 99, 3)

    def test_seed_changes_masks(self):
        assert removed_filter_indices(40, 10, 7, 0) != removed_filter_indices(40, 10, 8, 0)

    def test_full_removal_requires_capacity(self):
        with pytest.raises(ValidationError):
            removed_filter_indices(4, 5, 0, 0)

    def test_uniform_coverage(self):
        # every index should be picked sometimes across seeds
        hits = np.zeros(8, dtype=int)
        for seed in range(200):
            for pick in removed_filter_indices(8, 4, seed, 0):
                hits[pick] += 1
        assert hits.min() > 0
        # crude uniformity: no index dominates
        assert hits.max() < 2.0 * hits.min()


class TestMakePlan:
    def test_zero_ratio_is_noop_plan(self):
        archive = chain_archive([(2, 4, 1, 1), (4, 3, 1, 1)])
        plan = plan_for(archive, [0.0, 0.0])
        for entry in plan.per_layer:
            assert entry.removed_indices == ()
            assert entry.kept_indices == tuple(range(entry.filter_count))

    def test_half_ratio_on_ten_filters(self):
        archive = chain_archive([(2, 10, 1, 1)])
        plan = plan_for(archive, [0.5])
        entry = plan.per_layer[0]
        assert entry.removed_count == 5
        assert len(entry.kept_indices) == 5

    def test_clamp_ratio_interacts_with_min_keep(self):
        archive = chain_archive([(2, 4, 1, 1)])
        plan = plan_for(archive, [0.99])
        entry = plan.per_layer[0]
        # floor(3.96) = 3 removed, one survivor
        assert entry.removed_count == 3
        assert len(entry.kept_indices) == 1

    def test_min_keep_beats_floor(self):
        archive = chain_archive([(2, 10, 1, 1)])
        plan = plan_for(archive, [0.95], min_keep=4)
        assert plan.per_layer[0].removed_count == 6

    def test_layer_count_mismatch_rejected(self):
        archive = chain_archive([(2, 4, 1, 1), (4, 3, 1, 1)])
        result = manual_result([0.5], [4])
        with pytest.raises(ValidationError):
            make_plan(archive, result, 42, 1, report(archive))

    def test_plan_is_pure_function_of_inputs(self):
        archive = chain_archive([(3, 8, 3, 3), (8, 6, 1, 1)], seed=5)
        first = plan_for(archive, [0.4, 0.3], seed=77)
        second = plan_for(archive, [0.4, 0.3], seed=77)
        assert first.dumps() == second.dumps()

    def test_json_roundtrip(self):
        archive = chain_archive([(3, 8, 3, 3), (8, 6, 1, 1)], seed=5)
        plan = plan_for(archive, [0.4, 0.3])
        back = PruningPlan.loads(plan.dumps())
        assert back.dumps() == plan.dumps()


class TestApplyPlan:
    def test_noop_plan_is_identity(self):
        archive = chain_archive([(2, 4, 1, 1), (4, 3, 2, 2)], seed=8)
        pruned = apply_plan(archive, plan_for(archive, [0.0, 0.0]))
        assert pruned == archive

    def test_two_layer_fixture_slices(self):
        data0 = np.arange(12.0).reshape(3, 4, 1, 1)
        data1 = np.arange(12.0, 12.0 + 4 * 5 * 4).reshape(4, 5, 2, 2)
        archive = TensorArchive(
            tensors=[
                WeightTensor(name="conv0", data=data0),
                WeightTensor(name="conv1", data=data1),
            ],
            topology=TopologyDescriptor(layers=("conv0", "conv1"), chain=True),
        )
        result = manual_result([0.25, 0.0], [4, 5])
        plan = make_plan(archive, result, 42, 1, report(archive))
        removed = plan.per_layer[0].removed_indices
        assert len(removed) == 1
        kept0 = [i for i in range(4) if i not in removed]
        pruned = apply_plan(archive, plan)
        assert pruned.tensors[0].shape == (3, 3, 1, 1)
        assert pruned.tensors[1].shape == (3, 5, 2, 2)
        np.testing.assert_array_equal(pruned.tensors[0].data, data0[:, kept0, :, :])
        np.testing.assert_array_equal(pruned.tensors[1].data, data1[kept0, :, :, :])

    def test_explicit_removal_of_filter_two(self):
        data0 = np.arange(12.0).reshape(3, 4, 1, 1)
        data1 = np.arange(100.0, 100.0 + 4 * 2).reshape(4, 2, 1, 1)
        archive = TensorArchive(
            tensors=[
                WeightTensor(name="a", data=data0),
                WeightTensor(name="b", data=data1),
            ],
            topology=TopologyDescriptor(layers=("a", "b"), chain=True),
        )
        base = plan_for(archive, [0.0, 0.0])
        entry = dataclasses.replace(
            base.per_layer[0],
            removed_count=1,
            removed_indices=(2,),
            kept_indices=(0, 1, 3),
        )
        plan = dataclasses.replace(base, per_layer=[entry, base.per_layer[1]])
        pruned = apply_plan(archive, plan)
        np.testing.assert_array_equal(
            pruned.tensors[0].data, data0[:, [0, 1, 3], :, :]
        )
        np.testing.assert_array_equal(pruned.tensors[1].data, data1[[0, 1, 3], :, :, :])

    def test_batch_removal_equals_two_single_removals(self):
        archive = chain_archive([(2, 6, 1, 1), (6, 3, 1, 1)], seed=14)

        def removal_plan(source, removed):
            base = plan_for(source, [0.0, 0.0])
            count = base.per_layer[0].filter_count
            entry = dataclasses.replace(
                base.per_layer[0],
                removed_count=len(removed),
                removed_indices=tuple(sorted(removed)),
                kept_indices=tuple(i for i in range(count) if i not in removed),
            )
            return dataclasses.replace(base, per_layer=[entry, base.per_layer[1]])

        one_pass = apply_plan(archive, removal_plan(archive, {1, 3}))
        step_one = apply_plan(archive, removal_plan(archive, {3}))
        # original index 1 is still index 1 after dropping index 3
        step_two = apply_plan(step_one, removal_plan(step_one, {1}))
        assert one_pass == step_two

    def test_survivors_are_bitwise_identical(self):
        archive = chain_archive([(3, 16, 3, 3), (16, 8, 5, 5)], seed=10)
        plan = plan_for(archive, [0.5, 0.25], seed=3)
        pruned = apply_plan(archive, plan)
        kept0 = list(plan.per_layer[0].kept_indices)
        kept1 = list(plan.per_layer[1].kept_indices)
        src0 = archive.tensors[0].data[:, kept0, :, :]
        src1 = archive.tensors[1].data[np.ix_(kept0, kept1)]
        assert pruned.tensors[0].data.tobytes() == src0.tobytes()
        assert pruned.tensors[1].data.tobytes() == src1.tobytes()

    def test_missing_topology_unsupported(self):
        archive = TensorArchive(
            tensors=[WeightTensor(name="w", data=np.ones((2, 4, 1, 1)))]
        )
        plan = plan_for(
            TensorArchive(
                tensors=archive.tensors,
                topology=TopologyDescriptor(layers=("w",), chain=True),
            ),
            [0.0],
        )
        with pytest.raises(UnsupportedTopologyError):
            apply_plan(archive, plan)

    def test_non_chain_topology_unsupported(self):
        tensors = [WeightTensor(name="w", data=np.ones((2, 4, 1, 1)))]
        archive = TensorArchive(
            tensors=tensors,
            topology=TopologyDescriptor(layers=("w",), chain=False),
        )
        chain = TensorArchive(
            tensors=tensors, topology=TopologyDescriptor(layers=("w",), chain=True)
        )
        with pytest.raises(UnsupportedTopologyError):
            apply_plan(archive, plan_for(chain, [0.0]))

    def test_corrupted_mask_rejected(self):
        archive = chain_archive([(2, 4, 1, 1)])
        plan = plan_for(archive, [0.25])
        entry = dataclasses.replace(
            plan.per_layer[0], kept_indices=plan.per_layer[0].kept_indices + (9,)
        )
        bad = dataclasses.replace(plan, per_layer=[entry])
        with pytest.raises(ValidationError):
            apply_plan(archive, bad)


class TestPlanStats:
    def test_noop_stats(self):
        archive = chain_archive([(2, 4, 1, 1), (4, 3, 2, 2)])
        stats = plan_stats(plan_for(archive, [0.0, 0.0]), archive)
        assert stats["params_before"] == stats["params_after"] == 2 * 4 + 4 * 3 * 4
        assert stats["achieved_global_ratio"] == 0.0

    def test_two_layer_fixture_counts(self):
        archive = chain_archive([(3, 4, 1, 1), (4, 6, 1, 1)])
        result = manual_result([0.25, 0.0], [4, 6])
        plan = make_plan(archive, result, 42, 1, report(archive))
        stats = plan_stats(plan, archive)
        assert stats["params_before"] == 3 * 4 + 4 * 6
        assert stats["params_after"] == 3 * 3 + 3 * 6
        assert stats["filters_before"] == 10
        assert stats["filters_after"] == 9

    def test_uniform_half_ratio_near_half_global(self):
        archive = chain_archive([(4, 10, 1, 1), (10, 10, 1, 1), (10, 10, 1, 1)])
        plan = plan_for(archive, [0.5, 0.5, 0.5])
        stats = plan_stats(plan, archive)
        assert abs(stats["achieved_global_ratio"] - 0.5) <= 1.0 / 10.0

    def test_stats_consistent_with_surgery(self):
        archive = chain_archive([(3, 12, 3, 3), (12, 9, 1, 1)], seed=2)
        plan = plan_for(archive, [0.4, 0.3])
        stats = plan_stats(plan, archive)
        pruned = apply_plan(archive, plan)
        actual_params = sum(t.data.size for t in pruned.tensors)
        actual_filters = sum(t.out_channels for t in pruned.tensors)
        assert stats["params_after"] == actual_params
        assert stats["filters_after"] == actual_filters


class TestBudgetRealization:
    def test_floor_only_undershoots(self):
        rng = np.random.default_rng(31)
        for _ in range(100):
            layer_count = int(rng.integers(1, 6))
            shapes = []
            previous = int(rng.integers(1, 5))
            for _ in range(layer_count):
                width = int(rng.integers(2, 30))
                shapes.append((previous, width, 1, 1))
                previous = width
            archive = chain_archive(shapes, seed=int(rng.integers(0, 1 << 16)))
            filters = [t.out_channels for t in archive.tensors]
            allocation = AllocationInput(
                afie=(10.0 ** rng.uniform(-2, 0, size=layer_count)).tolist(),
                filters=filters,
                global_ratio=float(rng.uniform(0.1, 0.9)),
            )
            result = solve(allocation)
            plan = make_plan(archive, result, 42, 1, report(archive))
            stats = plan_stats(plan, archive)
            total = sum(filters)
            slack = layer_count / total
            assert (
                allocation.global_ratio - slack - 1e-12
                <= stats["achieved_global_ratio"]
                <= allocation.global_ratio + 1e-12
            )
