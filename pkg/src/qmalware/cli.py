"""Command-line entry point.

Exit status: 0 on success, 1 when the configuration is invalid, 2 on any
other failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys

from qmalware import __version__
from qmalware.errors import ConfigError, QmalwareError
from qmalware.qkernel import evaluate_metrics
from qmalware import experiment as ex

log = logging.getLogger("qmalware")


def _first_point(args) -> dict:
    _, points = ex.resolve(ex.load_config(args.config), args.seed)
    if len(points) > 1:
        log.warning("config defines %d sweep points; using the first", len(points))
    return points[0][1]


def _prepared(args):
    cfg = _first_point(args)
    dataset = ex.load_dataset(cfg["dataset"], cfg["seed"])
    return cfg, dataset, ex.prepare(cfg, dataset)


def _write_json(obj, path) -> None:
    text = json.dumps(obj, indent=2, sort_keys=True) + "\n"
    if path:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def cmd_preprocess(args) -> None:
    _, dataset, data = _prepared(args)
    out = dataset.with_samples(data.pipeline.transform(dataset.samples))
    out.to_csv(args.out)


def cmd_kernel(args) -> None:
    cfg, _, data = _prepared(args)
    ex.train_gram(cfg, data, args.threads or ex.default_threads()).to_csv(args.out)


def cmd_train(args) -> None:
    cfg, _, data = _prepared(args)
    model = ex.fit_model(cfg, data, args.threads or ex.default_threads())
    _write_json(model.to_dict(), args.out)


def cmd_evaluate(args) -> None:
    with open(args.model, encoding="utf-8") as fh:
        model = ex.FittedModel.from_dict(json.load(fh))
    _, dataset, data = _prepared(args)
    # apply the stored pipeline, not the one refit from the config
    X_test = model.pipeline.transform(dataset.subset(_test_index(data, dataset)).samples)
    preds = model.predict(X_test, args.threads or ex.default_threads())
    _write_json(evaluate_metrics(preds, data.y_test), args.out)


def _test_index(data, dataset):
    pos = {sid: i for i, sid in enumerate(dataset.ids)}
    return [pos[sid] for sid in data.test_ids]


def cmd_sweep(args) -> None:
    raw = ex.load_config(args.config)
    report = ex.run_experiment(raw, seed=args.seed, threads=args.threads)
    if args.out:
        ex.emit_report(report, args.format or "json", args.out)
    elif not (raw.get("output") or {}).get("path"):
        sys.stdout.write(ex.render_report(report, args.format or "json"))


def cmd_report(args) -> None:
    report = ex.load_report(args.input)
    if args.out:
        ex.emit_report(report, args.format or "csv", args.out)
    else:
        sys.stdout.write(ex.render_report(report, args.format or "csv"))


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qmalware", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"qmalware {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out_required=False, config=True):
        if config:
            p.add_argument("--config", required=True, help="experiment config (JSON)")
        p.add_argument("--out", required=out_required, help="output path")
        p.add_argument("--format", choices=("csv", "json"))
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--threads", type=int, help=f"worker threads (default ${ex.THREADS_ENV} or 1)")

    p = sub.add_parser("preprocess", help="write the preprocessed dataset as CSV")
    common(p, out_required=True)
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("kernel", help="dump the training Gram matrix as CSV")
    common(p, out_required=True)
    p.set_defaults(func=cmd_kernel)

    p = sub.add_parser("train", help="fit the configured model and save it")
    common(p, out_required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="score a saved model on the config's test split")
    common(p)
    p.add_argument("--model", required=True, help="model file written by 'train'")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("sweep", help="run every sweep point and write a report")
    common(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("report", help="re-render a JSON report")
    common(p, config=False)
    p.add_argument("--input", required=True, help="JSON report written by 'sweep'")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if getattr(args, "threads", None) is not None and args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return 1
    try:
        args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (QmalwareError, OSError, ValueError, KeyError, IndexError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
