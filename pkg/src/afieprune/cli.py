"""Command-line front door: inspect AFIE scores, plan allocations, apply
pruning, and verify emitted plans.

Exit codes: 0 success, 1 usage/validation, 2 infeasible budget,
3 unsupported topology, 4 I/O. All commands are deterministic functions
of their input files and flags.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import os
import sys
import tempfile
from pathlib import Path

from . import allocator, metric, pruner
from .archive import TensorArchive, load_archive, write_archive
from .errors import (
    AfiePruneError,
    FormatError,
    InfeasibleBudgetError,
    UnsupportedTopologyError,
    ValidationError,
)
from .metric import AfieReport, AfieScore
from .pruner import PruningPlan

_MAX_SEED = 2**64 - 1


class _UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # Exit-code contract reserves 2 for infeasible budgets, so usage
    # errors must not use argparse's default exit(2).
    def error(self, message):
        raise _UsageError(message)


def _write_atomic(path: str | Path, data: bytes) -> None:
    path = Path(path)
    fd, tmp_name = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".")
    try:
        with os.fdopen(fd, "wb") as handle:
            handle.write(data)
        os.replace(tmp_name, path)
    except BaseException:
        try:
            os.unlink(tmp_name)
        except OSError:
            pass
        raise


def _emit(args, text: str) -> None:
    if args.out:
        _write_atomic(args.out, text.encode("utf-8"))
    else:
        sys.stdout.write(text)


def _report_rows(archive: TensorArchive, report: AfieReport) -> list[dict]:
    rows = []
    for tensor, score in zip(archive.tensors, report.scores):
        rows.append(
            {
                "name": tensor.name,
                "in_channels": tensor.in_channels,
                "out_channels": tensor.out_channels,
                "spectrum_size": score.spectrum_size,
                "total_entropy": score.total_entropy,
                "afie": score.afie,
            }
        )
    return rows


_FLOAT_COLUMNS = ("total_entropy", "afie")
_ROW_COLUMNS = (
    "name",
    "in_channels",
    "out_channels",
    "spectrum_size",
    "total_entropy",
    "afie",
)


def _format_cell(column: str, value) -> str:
    return f"{value:.6f}" if column in _FLOAT_COLUMNS else str(value)


def _render_table(rows: list[dict], columns: tuple[str, ...]) -> str:
    cells = [[_format_cell(col, row[col]) for col in columns] for row in rows]
    widths = [
        max(len(col), *(len(line[pos]) for line in cells)) if cells else len(col)
        for pos, col in enumerate(columns)
    ]
    lines = ["  ".join(col.ljust(widths[pos]) for pos, col in enumerate(columns))]
    for line in cells:
        lines.append("  ".join(line[pos].ljust(widths[pos]) for pos in range(len(columns))))
    return "\n".join(lines) + "\n"


def _render_csv(rows: list[dict], columns: tuple[str, ...]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_format_cell(col, row[col]) for col in columns])
    return buffer.getvalue()


def _load_override(path: str, layer_count: int) -> list[float]:
    try:
        with open(path, "r", encoding="utf-8") as handle:
            values = json.load(handle)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"AFIE override is not valid JSON: {exc}") from exc
    if not isinstance(values, list) or not all(
        isinstance(v, (int, float)) and not isinstance(v, bool) for v in values
    ):
        raise ValidationError("AFIE override must be a JSON list of numbers")
    if len(values) != layer_count:
        raise ValidationError(
            f"AFIE override lists {len(values)} layers, archive has {layer_count}"
        )
    floats = [float(v) for v in values]
    if not all(math.isfinite(v) and v >= 0.0 for v in floats):
        raise ValidationError("AFIE override values must be finite and >= 0")
    return floats


def _override_report(archive: TensorArchive, values: list[float]) -> AfieReport:
    """Synthesize a report from externally supplied AFIE values."""
    scores = []
    for index, (tensor, value) in enumerate(zip(archive.tensors, values)):
        count = tensor.out_channels
        scores.append(
            AfieScore(
                layer_index=index,
                total_entropy=value * count,
                filter_count=count,
                afie=value,
                spectrum_size=min(tensor.in_channels, tensor.out_channels),
            )
        )
    return AfieReport.from_scores(scores)


def _build_report(args, archive: TensorArchive) -> AfieReport:
    if getattr(args, "afie_override", None):
        return _override_report(
            archive, _load_override(args.afie_override, len(archive.tensors))
        )
    return metric.report(archive)


def _plan_pipeline(args, archive: TensorArchive) -> tuple[PruningPlan, allocator.AllocationResult]:
    report = _build_report(args, archive)
    allocation = allocator.AllocationInput(
        afie=report.afie_values(),
        filters=[t.out_channels for t in archive.tensors],
        global_ratio=args.ratio,
        clamp_ceiling=args.clamp,
        min_keep=args.min_keep,
    )
    result = allocator.solve(allocation)
    if result.infeasible_tight:
        sys.stderr.write(
            "warning: forced ceiling allocations already exceed the budget "
            "(infeasible-tight); unclamped layers get ratio 0\n"
        )
    plan = pruner.make_plan(archive, result, args.seed, args.min_keep, report)
    return plan, result


def _ratio_table(plan: PruningPlan) -> str:
    columns = ("name", "filters", "ratio", "removed")
    cells = [
        [entry.name, str(entry.filter_count), f"{entry.ratio:.6f}", str(entry.removed_count)]
        for entry in plan.per_layer
    ]
    widths = [
        max(len(columns[pos]), *(len(line[pos]) for line in cells))
        for pos in range(len(columns))
    ]
    lines = ["  ".join(col.ljust(widths[pos]) for pos, col in enumerate(columns))]
    for line in cells:
        lines.append("  ".join(line[pos].ljust(widths[pos]) for pos in range(len(columns))))
    return "\n".join(lines) + "\n"


def _cmd_inspect(args) -> int:
    archive = load_archive(args.archive)
    report = _build_report(args, archive)
    rows = _report_rows(archive, report)
    if args.format == "json":
        payload = {
            "layers": rows,
            "max_afie": report.max_afie,
            "argmax_layer": report.argmax_layer,
        }
        text = json.dumps(payload, indent=2, ensure_ascii=False) + "\n"
    elif args.format == "csv":
        text = _render_csv(rows, _ROW_COLUMNS)
    else:
        text = _render_table(rows, _ROW_COLUMNS)
    _emit(args, text)
    return 0


def _cmd_plan(args) -> int:
    archive = load_archive(args.archive)
    plan, _ = _plan_pipeline(args, archive)
    if args.out:
        _write_atomic(args.out, plan.dumps().encode("utf-8"))
        sys.stdout.write(_ratio_table(plan))
    else:
        sys.stdout.write(plan.dumps())
    return 0


def _cmd_prune(args) -> int:
    archive = load_archive(args.archive)
    plan, _ = _plan_pipeline(args, archive)
    plan_path = str(args.out) + ".plan.json"
    _write_atomic(plan_path, plan.dumps().encode("utf-8"))
    try:
        pruned = pruner.apply_plan(archive, plan)
    except UnsupportedTopologyError as exc:
        sys.stderr.write(f"error: {exc}\nplan written to {plan_path}\n")
        return 3
    buffer = io.BytesIO()
    write_archive(pruned, buffer)
    _write_atomic(args.out, buffer.getvalue())
    stats = pruner.plan_stats(plan, archive)
    sys.stdout.write(json.dumps(stats, indent=2) + "\n")
    return 0


def _reconstruct_allocation(
    plan: PruningPlan, archive: TensorArchive, clamp: float, min_keep: int
) -> tuple[allocator.AllocationInput, allocator.AllocationResult]:
    afie = plan.afie_report.afie_values()
    filters = [t.out_channels for t in archive.tensors]
    allocation = allocator.AllocationInput(
        afie=afie,
        filters=filters,
        global_ratio=plan.global_ratio,
        clamp_ceiling=clamp,
        min_keep=min_keep,
    )
    ratios = [entry.ratio for entry in plan.per_layer]
    clamped = frozenset(
        index for index, ratio in enumerate(ratios) if abs(ratio - clamp) <= 1e-12
    )
    free = [index for index in range(len(ratios)) if index not in clamped]
    if free:
        afie_max = max(afie)
        best = max(free, key=lambda index: afie[index])
        lambda_min = ratios[best] * afie[best] / afie_max if afie_max > 0 else 0.0
    else:
        lambda_min = 0.0
    target = plan.global_ratio * sum(filters)
    clamped_spend = clamp * sum(filters[index] for index in clamped)
    if free:
        infeasible_tight = (
            bool(clamped)
            and all(ratios[index] == 0.0 for index in free)
            and clamped_spend >= target - 1e-9
        )
    else:
        infeasible_tight = clamped_spend > target + 1e-9
    result = allocator.AllocationResult(
        ratios=ratios,
        lambda_min=lambda_min,
        clamped=clamped,
        achieved_budget=sum(
            int(math.floor(r * c)) for r, c in zip(ratios, filters)
        ),
        target_budget=int(math.floor(target + 0.5)),
        global_ratio=plan.global_ratio,
        infeasible_tight=infeasible_tight,
    )
    return allocation, result


def _cmd_verify(args) -> int:
    archive = load_archive(args.archive)
    if not args.out:
        raise ValidationError("verify needs --out pointing at the plan JSON")
    with open(args.out, "r", encoding="utf-8") as handle:
        plan = PruningPlan.loads(handle.read())

    violations: list[str] = []
    try:
        pruner.check_plan_matches(archive, plan)
    except ValidationError as exc:
        violations.append(str(exc))

    if not violations:
        for index, entry in enumerate(plan.per_layer):
            expected = pruner.removed_filter_indices(
                entry.filter_count, entry.removed_count, plan.seed, index
            )
            if tuple(expected) != entry.removed_indices:
                violations.append(
                    f"layer {index} ('{entry.name}'): removed indices do not match "
                    f"the plan seed {plan.seed}"
                )
            expected_count = max(
                0,
                min(
                    int(math.floor(entry.ratio * entry.filter_count)),
                    entry.filter_count - args.min_keep,
                ),
            )
            if entry.removed_count != expected_count:
                violations.append(
                    f"layer {index} ('{entry.name}'): removed_count "
                    f"{entry.removed_count} does not match ratio {entry.ratio} "
                    f"(expected {expected_count})"
                )
        allocation, result = _reconstruct_allocation(
            plan, archive, args.clamp, args.min_keep
        )
        violations.extend(allocator.verify(allocation, result))

    if violations:
        for violation in violations:
            sys.stdout.write(f"violation: {violation}\n")
        sys.stdout.write(f"{len(violations)} violation(s)\n")
        return 1
    sys.stdout.write("plan verified: no violations\n")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="afieprune",
        description=(
            "Training-free CNN filter-pruning planner: scores layers by the "
            "entropy of their weight spectra and allocates pruning ratios "
            "under a global filter budget."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, needs_ratio: bool) -> None:
        p.add_argument("--archive", required=True, help="ATA archive path")
        p.add_argument(
            "--ratio",
            type=float,
            required=needs_ratio,
            help="global pruning ratio in (0, 1)",
        )
        p.add_argument("--seed", type=int, default=42, help="plan RNG seed (u64)")
        p.add_argument(
            "--clamp", type=float, default=allocator.DEFAULT_CLAMP_CEILING,
            help="per-layer ratio ceiling",
        )
        p.add_argument(
            "--min-keep", type=int, default=allocator.DEFAULT_MIN_KEEP,
            help="minimum surviving filters per layer",
        )
        p.add_argument(
            "--afie-override",
            help="JSON list of per-layer AFIE values replacing the computed ones",
        )
        p.add_argument("--out", help="output path (stdout when omitted)")
        p.add_argument(
            "--format", choices=("json", "csv", "table"), default="table",
            help="rendering for inspect output",
        )

    p_inspect = sub.add_parser("inspect", help="score each layer and render a report")
    common(p_inspect, needs_ratio=False)
    p_inspect.set_defaults(handler=_cmd_inspect)

    p_plan = sub.add_parser("plan", help="allocate ratios and emit a pruning plan")
    common(p_plan, needs_ratio=True)
    p_plan.set_defaults(handler=_cmd_plan)

    p_prune = sub.add_parser(
        "prune", help="plan plus weight surgery (writes OUT and OUT.plan.json)"
    )
    common(p_prune, needs_ratio=True)
    p_prune.set_defaults(handler=_cmd_prune)

    p_verify = sub.add_parser(
        "verify", help="re-check a plan (--out) against its archive"
    )
    common(p_verify, needs_ratio=False)
    p_verify.set_defaults(handler=_cmd_verify)

    return parser


def _validate_common(args) -> None:
    if not 0 <= args.seed <= _MAX_SEED:
        raise ValidationError(f"seed must fit in u64, got {args.seed}")
    if args.command in ("plan", "prune") and not 0.0 < args.ratio < 1.0:
        raise ValidationError(f"--ratio must lie in (0, 1), got {args.ratio}")
    if args.command == "prune" and not args.out:
        raise ValidationError("prune needs --out for the pruned archive")


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        _validate_common(args)
        return args.handler(args)
    except _UsageError as exc:
        sys.stderr.write(f"usage error: {exc}\n")
        return 1
    except InfeasibleBudgetError as exc:
        sys.stderr.write(
            f"error: {exc}\nmaximum achievable global ratio: {exc.max_achievable}\n"
        )
        return 2
    except UnsupportedTopologyError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 3
    except (ValidationError, FormatError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        return 1
    except AfiePruneError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return exc.exit_code
    except OSError as exc:
        sys.stderr.write(f"i/o error: {exc}\n")
        return 4


if __name__ == "__main__":
    raise SystemExit(main())
