"""Result CSV files and comparison tables.

The CSV schema is the exchange format between every subcommand:
``image_id, dataset, method, iou, mask_input_used, seed, both_empty``.
Tables are rendered as aligned plain text (mean ± std per group) so runs can
be compared straight from the terminal or a log file.
"""

from __future__ import annotations

import csv
from pathlib import Path

from .errors import DataError
from .metrics import CrossEvalTable, EvalRecord, cross_eval, summarize

CSV_FIELDS = ("image_id", "dataset", "method", "iou",
              "mask_input_used", "seed", "both_empty")


def write_records(path: str | Path, records: list[EvalRecord]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CSV_FIELDS)
        for r in records:
            writer.writerow([
                r.image_id, r.dataset, r.method, f"{r.iou:.6f}",
                int(r.mask_input_used), r.seed, int(r.both_empty),
            ])
    return path


def read_records(path: str | Path) -> list[EvalRecord]:
    path = Path(path)
    if not path.is_file():
        raise DataError(f"results file '{path}' not found")
    records = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = set(CSV_FIELDS[:6]) - set(reader.fieldnames or ())
        if missing:
            raise DataError(
                f"results file '{path}' lacks columns {sorted(missing)}"
            )
        for row in reader:
            records.append(EvalRecord(
                image_id=row["image_id"],
                dataset=row["dataset"],
                method=row["method"],
                iou=float(row["iou"]),
                mask_input_used=bool(int(row["mask_input_used"])),
                seed=int(row["seed"]),
                both_empty=bool(int(row.get("both_empty", "0") or "0")),
            ))
    return records


def format_cell(mean: float, std: float) -> str:
    return f"{mean:.3f} ± {std:.3f}"


def comparison_table(records: list[EvalRecord]) -> str:
    """Methods as rows, datasets as columns, mean ± std cells."""
    table = cross_eval(records)
    return render_matrix(table)


def render_matrix(table: CrossEvalTable, row_title: str = "method") -> str:
    header = [row_title] + table.datasets
    rows = [header]
    for method in table.methods:
        row = [method]
        for ds in table.datasets:
            cell = table.get(method, ds)
            row.append(format_cell(cell.mean, cell.std) if cell else "-")
        rows.append(row)
    widths = [max(len(r[i]) for r in rows) for i in range(len(header))]
    lines = []
    for i, row in enumerate(rows):
        lines.append("  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip())
        if i == 0:
            lines.append("  ".join("-" * w for w in widths))
    return "\n".join(lines)


def ablation_table(records: list[EvalRecord]) -> str:
    """Per (dataset, method): one column per mask_input arm."""
    arms: dict[bool, list[EvalRecord]] = {False: [], True: []}
    for r in records:
        arms[r.mask_input_used].append(r)
    parts = []
    for used in (False, True):
        if not arms[used]:
            continue
        title = "with mask input" if used else "boxes only"
        summaries = summarize(arms[used])
        lines = [title, "-" * len(title)]
        for (method, dataset), s in summaries.items():
            lines.append(f"{method}  {dataset}  {format_cell(s.mean, s.std)}  (n={s.n})")
        parts.append("\n".join(lines))
    return "\n\n".join(parts)


def summary_lines(records: list[EvalRecord]) -> list[str]:
    out = []
    for (method, dataset), s in summarize(records).items():
        out.append(f"{method} on {dataset}: {format_cell(s.mean, s.std)} over {s.n} images")
    return out
