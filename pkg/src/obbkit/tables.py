"""Aligned text tables for comparing mAP across runs and conditions.

Two layouts cover the result tables this toolkit mirrors:

``rows``
    one row per condition, one column per run (``category | run A | run B``)
``columns``
    one row per run, leading label columns, then one column per condition
    (``Epochs | Subset | rain | no rain``)
"""

from __future__ import annotations

from typing import Mapping, Sequence

from .evaluator import class_sort_key

LAYOUTS = ("rows", "columns")


def format_value(value: float | None, percent: bool = False) -> str:
    if value is None:
        return "-"
    s = f"{100.0 * value:.2f}"
    return s + "%" if percent else s


def render(header: Sequence[str], rows: Sequence[Sequence[str]]) -> str:
    widths = [len(h) for h in header]
    for row in rows:
        for i, cell in enumerate(row):
            widths[i] = max(widths[i], len(cell))

    def line(cells):
        return "| " + " | ".join(c.ljust(w) for c, w in zip(cells, widths)) + " |"

    out = [line(header), "|" + "|".join("-" * (w + 2) for w in widths) + "|"]
    out.extend(line(r) for r in rows)
    return "\n".join(out) + "\n"


def comparison_table(
    grid: Mapping[str, Mapping[str, float | None]],
    layout: str = "rows",
    run_labels: Mapping[str, Mapping[str, str]] | None = None,
    corner: str = "category",
    percent: bool = False,
) -> str:
    """Render ``grid[run][condition] -> mAP`` in one of the two layouts.

    Condition order is first-seen order across runs. ``run_labels`` supplies
    the leading label columns for the ``columns`` layout; without it a single
    ``corner`` column holds the run name.
    """
    if layout not in LAYOUTS:
        raise ValueError(f"layout must be one of {LAYOUTS}, got {layout!r}")
    runs = list(grid)
    conditions: list[str] = []
    for r in runs:
        for c in grid[r]:
            if c not in conditions:
                conditions.append(c)
    if layout == "rows":
        header = [corner] + runs
        rows = [[c] + [format_value(grid[r].get(c), percent) for r in runs] for c in conditions]
        return render(header, rows)
    label_keys: list[str] = []
    if run_labels:
        for r in runs:
            for k in run_labels.get(r, {}):
                if k not in label_keys:
                    label_keys.append(k)
    if not label_keys:
        header = [corner] + conditions
        rows = [[r] + [format_value(grid[r].get(c), percent) for c in conditions] for r in runs]
        return render(header, rows)
    header = label_keys + conditions
    rows = []
    for r in runs:
        labels = run_labels.get(r, {})
        rows.append([str(labels.get(k, "")) for k in label_keys]
                    + [format_value(grid[r].get(c), percent) for c in conditions])
    return render(header, rows)


def report_table(report) -> str:
    """Per-class AP table for a single EvalReport, closed by an mAP row."""
    rows = [[str(c), format_value(report.per_class_ap[c])]
            for c in sorted(report.per_class_ap, key=class_sort_key)]
    rows.append(["mAP", format_value(report.map)])
    head = (
        f"# iou_threshold={report.iou_threshold:g} ap_mode={report.ap_mode} "
        f"images={report.n_images} gt={report.n_gt}\n"
    )
    return head + render(["class", "AP"], rows)
