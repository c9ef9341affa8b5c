"""Command-line surface: simulate, train, eval, report, trend.

Exit code 0 on success; on failure a single machine-parsable JSON line goes
to stderr, e.g. {"error": "...", "type": "PipelineError"}.
"""

from __future__ import annotations

import argparse
import json
import sys

from .config import ExperimentConfig, load_config
from .pipeline import STAGES, cmd_eval, cmd_simulate, cmd_train, load_summary


def _add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", required=True, help="YAML experiment config")
    parser.add_argument("--seed", type=int, default=None, help="override the config seed")
    parser.add_argument("--out-dir", default=None, help="override the config out_dir")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="locselect",
        description="Target-speaker DoA estimation on synthetic two-microphone scenes",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="build the corpus and render all dataset splits")
    _add_common(p)

    p = sub.add_parser("train", help="run one training stage")
    _add_common(p)
    p.add_argument("--stage", required=True, choices=STAGES)

    p = sub.add_parser("eval", help="evaluate all variants over the SNR grid")
    _add_common(p)

    p = sub.add_parser("report", help="render plots from an existing report")
    _add_common(p)

    p = sub.add_parser("trend", help="run the full pipeline for several seeds and "
                                     "print the masked-vs-unmasked comparison")
    _add_common(p)
    p.add_argument("--seeds", default="1,2,3", help="comma-separated seed list")
    return parser


def _run_full(config: ExperimentConfig) -> list[dict]:
    cmd_simulate(config)
    cmd_train(config, "mask")
    cmd_train(config, "doa")
    cmd_train(config, "doa-unmasked")
    report_dir = cmd_eval(config)
    return load_summary(report_dir)


def _trend(args) -> None:
    seeds = [int(s) for s in args.seeds.split(",") if s.strip()]
    base = load_config(args.config, seed=None, out_dir=args.out_dir)
    for seed in seeds:
        config = load_config(args.config, seed=seed,
                             out_dir=str(base.out_path() / f"seed_{seed}"))
        cells = _run_full(config)
        print(f"seed {seed}:")
        by = {(c["variant"], c["snr_db"]): c for c in cells if c["snr_db"] is not None}
        for snr in sorted({c["snr_db"] for c in cells if c["snr_db"] is not None}):
            loc = by[("locselect", snr)]
            unm = by[("unmasked", snr)]
            print(f"  snr {snr:+.0f} dB: MAE {loc['mae_frame_deg']:6.2f} vs "
                  f"{unm['mae_frame_deg']:6.2f}  ACC {loc['acc_frame']:.3f} vs "
                  f"{unm['acc_frame']:.3f}")


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "trend":
            _trend(args)
            return 0
        config = load_config(args.config, seed=args.seed, out_dir=args.out_dir)
        if args.command == "simulate":
            cmd_simulate(config)
        elif args.command == "train":
            cmd_train(config, args.stage)
        elif args.command == "eval":
            cmd_eval(config)
        elif args.command == "report":
            from .report import cmd_report

            cmd_report(config)
        return 0
    except Exception as exc:  # one-line machine-parsable failure
        print(json.dumps({"error": str(exc), "type": type(exc).__name__}),
              file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
