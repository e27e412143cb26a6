"""Command-line entry points.

Subcommands: ``gen`` (build and export a dataset container), ``run``
(execute a full experiment config), ``boost``/``bag``/``sensitivity``
(strategy shortcuts overriding the config), and ``report`` (re-export or
overlay persisted reports). Exit codes: 0 success, 1 validation error,
2 data error, 3 I/O error.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace
from pathlib import Path

from . import dataio, harness
from .errors import SnrselError
from .sigsynth import build_dataset


def _cmd_gen(args: argparse.Namespace) -> int:
    config = harness.load_config(args.config)
    if config.dataset_spec is None:
        raise SnrselError("Config has no inline dataset section to generate from")
    dataset = build_dataset(config.dataset_spec)
    iq_path, meta_path = dataio.write_container(dataset, args.out)
    print(f"wrote {iq_path} ({dataset.n_frames} frames) and {meta_path}")
    return 0


def _cmd_run(args: argparse.Namespace) -> int:
    config = harness.load_config(args.config)
    if args.output_dir:
        config = replace(config, output_dir=args.output_dir)
    report = harness.run(config)
    print(f"strategy={report.strategy} mean accuracy over grid: "
          f"{sum(report.acc_mean) / len(report.acc_mean):.4f}")
    print(f"report written to {config.output_dir}")
    return 0


def _strategy_shortcut(args: argparse.Namespace, strategy: str) -> int:
    config = harness.load_config(args.config)
    overrides: dict = {"strategy": strategy}
    if args.target_snr is not None:
        overrides["test_snrs"] = (args.target_snr,)
    if strategy == "boost" and args.threshold is not None:
        overrides["boost_threshold"] = args.threshold
    if strategy == "bagging":
        if args.k is not None:
            overrides["bag_k"] = args.k
        if args.member_fraction is not None:
            overrides["bag_member_fraction"] = args.member_fraction
    if args.output_dir:
        overrides["output_dir"] = args.output_dir
    report = harness.run(replace(config, **overrides))
    for snr, acc in zip(report.test_snrs, report.acc_mean):
        print(f"test {snr:+.0f} dB: accuracy {acc:.4f}")
    print(f"report written to {report.config['output_dir']}")
    return 0


def _cmd_report(args: argparse.Namespace) -> int:
    if args.overlay:
        if len(args.overlay) != 3 or args.test_snr is None:
            raise SnrselError("--overlay needs three report dirs and --test-snr")
        reports = [_load_report(Path(p)) for p in args.overlay]
        text = harness.confusion_overlay(reports, args.test_snr)
        out = Path(args.out or "overlay.csv")
        out.write_text(text, encoding="utf-8")
        print(f"wrote {out}")
        return 0
    report = _load_report(Path(args.report_dir))
    harness.report_export(report, args.out or args.report_dir)
    print(f"re-exported report to {args.out or args.report_dir}")
    return 0


def _load_report(report_dir: Path) -> harness.EvalReport:
    path = report_dir / "report.json"
    if not path.exists():
        raise SnrselError(f"No report.json under {report_dir}")
    d = json.loads(path.read_text(encoding="utf-8"))
    return harness.EvalReport(**d)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="snrsel", description="SNR-aware training-set selection")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a dataset and export its container")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True, help="container basename (writes .iq and .meta.json)")
    p.set_defaults(func=_cmd_gen)

    p = sub.add_parser("run", help="run the experiment described by a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--output-dir", default=None)
    p.set_defaults(func=_cmd_run)

    for name, strat in (("boost", "boost"), ("bag", "bagging"), ("sensitivity", "sensitivity")):
        p = sub.add_parser(name, help=f"run the {strat} strategy from a config file")
        p.add_argument("--config", required=True)
        p.add_argument("--target-snr", type=float, default=None)
        p.add_argument("--output-dir", default=None)
        if name == "boost":
            p.add_argument("--threshold", type=float, default=None)
        if name == "bag":
            p.add_argument("--k", type=int, default=None)
            p.add_argument("--member-fraction", type=float, default=None)
        p.set_defaults(func=lambda a, s=strat: _strategy_shortcut(a, s))

    p = sub.add_parser("report", help="re-export a report or build a confusion overlay")
    p.add_argument("--report-dir", default=None)
    p.add_argument("--overlay", nargs=3, default=None, metavar=("WHOLE", "SINGLE", "BOOST"))
    p.add_argument("--test-snr", type=float, default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_report)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except SnrselError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
