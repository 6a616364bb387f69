"""``obbkit`` command line.

Subcommands: eval, convert, nms, gen, sweep, bench.

Exit codes: 0 success, 1 usage or config error, 2 input format error,
3 internal invariant violation. Outputs carry the resolved settings and no
timestamps unless ``--stamp`` is given, so identical inputs give
byte-identical files whatever ``--jobs`` is.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import json
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import __version__, corpus, dota_io
from .config import ToolConfig, apply_overrides, load_config
from .errors import (
    ConfigError,
    DotaFormatError,
    DotaIOError,
    EmptyEvaluationError,
    GenerationError,
    ObbkitError,
)
from .evaluator import category_report, evaluate_image, normalize_ap_mode, reduce_images
from .geometry import OrientedBox, boxes_to_array, iou_matrix, rotated_iou
from .nms import rotated_nms
from .synthgen import evaluate_trials, simulate_condition
from .tables import comparison_table, report_table

EXIT_OK, EXIT_USAGE, EXIT_FORMAT, EXIT_INTERNAL = 0, 1, 2, 3


class UsageError(ObbkitError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _dump_json(obj) -> str:
    return json.dumps(obj, indent=2, ensure_ascii=False) + "\n"


def _stamp(args) -> dict:
    if not getattr(args, "stamp", False):
        return {}
    return {"stamp": _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")}


def _emit(text: str, out: str | None) -> None:
    if out:
        dota_io.write_text(out, text)
    else:
        sys.stdout.write(text)


def _warn_diagnostics(diags, where="") -> None:
    for d in diags:
        prefix = f"{where}:" if where else ""
        print(f"warning: {prefix}{d.line}: {d.kind}: {d.message}", file=sys.stderr)


def _resolve(args, **overrides) -> ToolConfig:
    return apply_overrides(load_config(args.config), **overrides)


# ---------------------------------------------------------------------------
# eval


def _eval_chunk(items):
    return [evaluate_image(dets, gts, thr) for dets, gts, thr in items]


def cmd_eval(args) -> int:
    gt_dir, pred_dir = Path(args.gt_dir), Path(args.pred_dir)
    for d in (gt_dir, pred_dir):
        if not d.is_dir():
            raise UsageError(f"not a directory: {d}")
    cfg = _resolve(args, **{"eval.iou_threshold": args.iou_threshold, "eval.ap_mode": args.ap_mode})
    thr = cfg.eval.iou_threshold
    mode = normalize_ap_mode(cfg.eval.ap_mode)
    loaded = corpus.load_eval_dirs(gt_dir, pred_dir)
    for where, d in loaded.diagnostics:
        _warn_diagnostics([d], where)
    if args.strict and loaded.diagnostics:
        print(f"error: {len(loaded.diagnostics)} malformed input lines (--strict)", file=sys.stderr)
        return EXIT_FORMAT
    ids = list(loaded.images)
    items = [(loaded.images[i].dets, loaded.images[i].gts, thr) for i in ids]
    jobs = max(1, args.jobs or 1)
    if jobs == 1 or len(items) < 2:
        per_image = _eval_chunk(items)
    else:
        size = -(-len(items) // jobs)
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            parts = pool.map(_eval_chunk, [items[i:i + size] for i in range(0, len(items), size)])
            per_image = [r for part in parts for r in part]
    settings = {"gt_dir": str(args.gt_dir), "pred_dir": str(args.pred_dir), "iou_threshold": thr, "ap_mode": mode}
    report = reduce_images(ids, per_image, thr, mode, settings)
    doc = report.to_dict(include_curves=True)
    doc["inputs"] = {
        "n_gt_files": loaded.n_gt_files,
        "n_pred_files": loaded.n_pred_files,
        "non_rectangular_quads": loaded.non_rectangular,
        "diagnostics": [{"file": w, **d._asdict()} for w, d in loaded.diagnostics],
    }
    doc.update(_stamp(args))
    text = report_table(report)
    if args.out:
        out = Path(args.out)
        dota_io.write_text(out / "report.json", _dump_json(doc))
        dota_io.write_text(out / "report.txt", text)
    sys.stdout.write(text)
    return EXIT_OK


# ---------------------------------------------------------------------------
# convert


def cmd_convert(args) -> int:
    src = Path(args.input)
    if not src.is_file():
        raise UsageError(f"no such file: {src}")
    lines = []
    if args.to == "obb":
        parse = dota_io.parse_annotation_file if args.kind == "annotation" else dota_io.parse_prediction_file
        res = parse(src)
        for lineno, rec in zip(res.lines, res.records):
            fit = corpus.fit_rectangle(rec.quad)
            if not fit.exact:
                print(f"warning: {src}:{lineno}: non-rectangular quad replaced by its "
                      f"minimum-area rectangle", file=sys.stderr)
            if args.kind == "annotation":
                lines.append(corpus.obb_annotation_line(fit.box, rec.category, rec.difficult))
            else:
                lines.append(corpus.obb_prediction_line(fit.box, rec.category, rec.score))
    else:
        res = corpus.parse_obb_file(src, args.kind)
        line_fn = dota_io.annotation_line if args.kind == "annotation" else dota_io.prediction_line
        lines = [line_fn(r) for r in res.records]
    _warn_diagnostics(res.diagnostics, str(src))
    _emit("".join(line + "\n" for line in lines), args.out)
    return EXIT_OK


# ---------------------------------------------------------------------------
# nms


def cmd_nms(args) -> int:
    src = Path(args.pred_file)
    if not src.is_file():
        raise UsageError(f"no such file: {src}")
    cfg = _resolve(args, **{
        "nms.iou_threshold": args.iou_threshold,
        "nms.score_threshold": args.score_threshold,
        "nms.class_aware": args.class_aware,
    })
    res = dota_io.parse_prediction_file(src)
    _warn_diagnostics(res.diagnostics, str(src))
    dets, _ = corpus.records_to_dets(res.records)
    by_id = {id(d): r for d, r in zip(dets, res.records)}
    kept = rotated_nms(dets, cfg.nms.iou_threshold, cfg.nms.score_threshold, cfg.nms.class_aware)
    _emit(dota_io.write_prediction_file([by_id[id(d)] for d in kept]), args.out)
    return EXIT_OK


# ---------------------------------------------------------------------------
# gen / sweep


def _sweep_config(args) -> ToolConfig:
    if not args.config:
        raise UsageError("--config is required")
    overrides = {"seed": args.seed}
    for flag, key in (("iou_threshold", "eval.iou_threshold"), ("ap_mode", "eval.ap_mode"),
                      ("score_threshold", "nms.score_threshold"), ("class_aware", "nms.class_aware"),
                      ("nms_iou_threshold", "nms.iou_threshold")):
        overrides[key] = getattr(args, flag, None)
    return _resolve(args, **overrides)


def _check_slugs(names, what):
    slugs = [corpus.slug(n) for n in names]
    if len(set(slugs)) != len(slugs):
        raise ConfigError(f"{what} names collide as directory names: {names}")
    return slugs


def _simulate_all(cfg: ToolConfig, jobs: int):
    """Yield (run, run_slug, condition, condition_slug, trials) in config order."""
    scene = cfg.scene_config()
    conds = cfg.condition_specs()
    runs = cfg.run_list()
    cond_slugs = _check_slugs([c.label for c in conds], "condition")
    run_slugs = _check_slugs([r.display_name for r in runs], "run")
    nms, effects = cfg.nms_settings(), cfg.condition_effects()
    for i, run in enumerate(runs):
        model = cfg.detector_model(run, f"runs.{i}.detector" if cfg.runs else "detector")
        for cond, cslug in zip(conds, cond_slugs):
            trials = simulate_condition(scene, cond, model, cfg.trials, cfg.seed, nms, effects, jobs)
            yield run, run_slugs[i], cond, cslug, trials


def _write_trials(out: Path, run_slug: str, cond_slug: str, trials, write_gt: bool) -> None:
    for t in trials:
        if write_gt:
            dota_io.write_text(out / "annotations" / cond_slug / f"{t.image_id}.txt",
                               dota_io.write_annotation_file(corpus.gts_to_records(t.gts)))
        dota_io.write_text(out / "predictions" / run_slug / cond_slug / f"{t.image_id}.txt",
                           dota_io.write_prediction_file(corpus.dets_to_records(t.dets)))


def cmd_gen(args) -> int:
    cfg = _sweep_config(args)
    if not args.out:
        raise UsageError("--out is required for gen")
    out = Path(args.out)
    first_run = None
    n = 0
    for run, rslug, cond, cslug, trials in _simulate_all(cfg, args.jobs or 1):
        first_run = first_run or rslug
        _write_trials(out, rslug, cslug, trials, write_gt=rslug == first_run)
        n += len(trials)
    dota_io.write_text(out / "config.json", _dump_json({**cfg.model_dump(mode="json"), **_stamp(args)}))
    print(f"wrote {n} scenes to {out}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    cfg = _sweep_config(args)
    out = Path(args.out) if args.out else None
    mode = normalize_ap_mode(cfg.eval.ap_mode)
    per_run: dict[str, dict] = {}
    labels: dict[str, dict] = {}
    run_docs = []
    first_run = None
    for run, rslug, cond, cslug, trials in _simulate_all(cfg, args.jobs or 1):
        name = run.display_name
        first_run = first_run or rslug
        if out is not None:
            _write_trials(out, rslug, cslug, trials, write_gt=rslug == first_run)
        report = evaluate_trials(trials, cfg.eval.iou_threshold, mode, {"condition": cond.to_dict()})
        per_run.setdefault(name, {})[cond.label] = report
        labels[name] = dict(run.labels)
    grid = {}
    for name, reports in per_run.items():
        grid[name] = {tag: r.map for tag, r in reports.items()}
        combined = category_report(reports)
        run_docs.append({"name": name, "labels": labels[name],
                         "conditions": {tag: r.to_dict() for tag, r in reports.items()},
                         "combined": {"map": combined.map, "per_class_ap": {str(k): v for k, v in combined.per_class_ap.items()}}})
    t = cfg.table
    table = comparison_table(grid, t.layout, labels, t.corner, t.percent)
    if out is not None:
        doc = {"config": cfg.model_dump(mode="json"), "runs": run_docs, "table": table, **_stamp(args)}
        dota_io.write_text(out / "config.json", _dump_json(cfg.model_dump(mode="json")))
        dota_io.write_text(out / "report.json", _dump_json(doc))
        dota_io.write_text(out / "table.txt", table)
    sys.stdout.write(table)
    return EXIT_OK


# ---------------------------------------------------------------------------
# bench


def run_benchmark(pairs: int = 200_000, seed: int = 0) -> dict:
    """Time rotated IoU on random overlapping pairs; returns evaluations per second."""
    rng = np.random.default_rng(seed)
    n = max(1, pairs)
    a = np.column_stack([rng.uniform(0, 100, n), rng.uniform(0, 100, n), rng.uniform(5, 40, n),
                         rng.uniform(2, 20, n), rng.uniform(0, 180, n)])
    b = a + np.column_stack([rng.normal(0, 5, n), rng.normal(0, 5, n), np.zeros(n), np.zeros(n),
                             rng.uniform(0, 180, n)])
    boxes_a = [OrientedBox(*row) for row in a]
    boxes_b = [OrientedBox(*row) for row in b]
    rotated_iou(boxes_a[0], boxes_b[0])  # compile / load cache outside the timer
    start = time.perf_counter()
    total = 0.0
    for x, y in zip(boxes_a, boxes_b):
        total += rotated_iou(x, y)
    scalar = n / (time.perf_counter() - start)
    side = int(max(2, min(2000, np.sqrt(n))))
    arr_a = boxes_to_array(boxes_a[:side])
    arr_b = boxes_to_array(boxes_b[:side])
    iou_matrix(arr_a[:2], arr_b[:2])
    start = time.perf_counter()
    iou_matrix(arr_a, arr_b)
    matrix = side * side / (time.perf_counter() - start)
    return {"pairs": n, "checksum": total, "scalar_per_sec": scalar, "matrix_per_sec": matrix}


def cmd_bench(args) -> int:
    res = run_benchmark(args.pairs, args.seed or 0)
    print(f"pairs: {res['pairs']}  iou checksum: {res['checksum']!r}")
    print(f"rotated_iou (scalar): {res['scalar_per_sec']:.3e} evals/s")
    print(f"iou_matrix (batch):   {res['matrix_per_sec']:.3e} evals/s")
    if args.min_rate is not None and res["scalar_per_sec"] < args.min_rate:
        print(f"error: scalar rate below --min-rate {args.min_rate:g}", file=sys.stderr)
        return EXIT_INTERNAL
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="obbkit", description=__doc__.split("\n")[0])
    p.add_argument("--version", action="version", version=f"obbkit {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, out_help):
        sp.add_argument("--config", help="YAML/JSON config file")
        sp.add_argument("--out", help=out_help)
        sp.add_argument("--jobs", type=int, default=1, help="worker processes (results do not depend on it)")
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--stamp", action="store_true", help="embed a UTC timestamp in reports")

    def thresholds(sp, score=True):
        sp.add_argument("--iou-threshold", type=float, default=None)
        if score:
            sp.add_argument("--score-threshold", type=float, default=None)
            sp.add_argument("--class-aware", action=argparse.BooleanOptionalAction, default=None)

    e = sub.add_parser("eval", help="evaluate a prediction directory against annotations")
    e.add_argument("gt_dir")
    e.add_argument("pred_dir")
    common(e, "directory for report.json / report.txt")
    thresholds(e, score=False)
    e.add_argument("--ap-mode", choices=["all", "11pt"], default=None)
    e.add_argument("--strict", action="store_true", help="fail (exit 2) on any malformed line")
    e.set_defaults(func=cmd_eval)

    c = sub.add_parser("convert", help="convert between vertex and (cx cy w h theta) forms")
    c.add_argument("input")
    c.add_argument("--to", choices=["obb", "vertices"], required=True)
    c.add_argument("--kind", choices=["annotation", "prediction"], default="annotation")
    c.add_argument("--out", help="output file (default: stdout)")
    c.set_defaults(func=cmd_convert)

    n = sub.add_parser("nms", help="rotated NMS over a prediction file")
    n.add_argument("pred_file")
    common(n, "output file (default: stdout)")
    thresholds(n)
    n.set_defaults(func=cmd_nms)

    for name, func, helptext in (("gen", cmd_gen, "write a synthetic annotation/prediction corpus"),
                                 ("sweep", cmd_sweep, "run a condition sweep and print the comparison table")):
        s = sub.add_parser(name, help=helptext)
        common(s, "output directory")
        s.add_argument("--iou-threshold", type=float, default=None, help="evaluation IoU threshold")
        s.add_argument("--nms-iou-threshold", type=float, default=None)
        s.add_argument("--score-threshold", type=float, default=None)
        s.add_argument("--class-aware", action=argparse.BooleanOptionalAction, default=None)
        s.add_argument("--ap-mode", choices=["all", "11pt"], default=None)
        s.set_defaults(func=func)

    b = sub.add_parser("bench", help="measure rotated IoU throughput")
    b.add_argument("--pairs", type=int, default=200_000)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--min-rate", type=float, default=None, help="exit 3 if the scalar rate is lower")
    b.set_defaults(func=cmd_bench)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # --help, --version and usage errors
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    try:
        return args.func(args)
    except (UsageError, ConfigError, GenerationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DotaFormatError, DotaIOError, EmptyEvaluationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FORMAT
    except (ObbkitError, AssertionError) as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
