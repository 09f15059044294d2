"""Command-line interface: ``emofda <subcommand> [options]``.

Subcommands
-----------
synth     write a synthetic OpenFace-style corpus (``synth`` section of the config)
smooth    smooth raw OpenFace CSVs onto the common grid, write curve CSVs
register  register curves by the reference AU, write registered curve CSVs and warps
fanova    run the per-AU, per-emotion F-tests on curve CSVs, write the report files
report    write plot-ready CSVs from a report.json
run       the whole pipeline from raw CSVs to the report files
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from .io import AU_LABELS, IngestError
from .pipeline import (
    PipelineError,
    emit_plot_data,
    fanova_stage,
    load_config,
    load_report,
    load_sample,
    register_stage,
    run_pipeline,
    smooth_records,
    validate_groups,
    write_curves,
    write_report,
    write_synthetic_corpus,
)


def _u64(text: str) -> int:
    value = int(text, 0)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError(f"seed must be an unsigned 64-bit integer, got {text}")
    return value


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="emofda", description=__doc__.split("\n")[0])
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config file")
    common.add_argument("--input", help="input directory (or report.json for 'report')")
    common.add_argument("--out", help="output directory")
    common.add_argument("--seed", type=_u64, help="random seed, unsigned 64-bit (synth: corpus seed)")
    common.add_argument("--alpha", type=float, help="test level")
    common.add_argument("--permutations", type=int, help="permutations for the max-statistic line")
    common.add_argument("--reference-au", help="registration reference channel")
    common.add_argument("--manifest", help="CSV mapping file names to emotions")
    common.add_argument("--jobs", type=int, help="worker threads")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, text in [
        ("synth", "write a synthetic corpus"),
        ("smooth", "smooth raw CSVs onto the common grid"),
        ("register", "register curves by the reference AU"),
        ("fanova", "functional F-tests per AU and emotion"),
        ("report", "plot data from a report"),
        ("run", "full pipeline"),
    ]:
        p = sub.add_parser(name, parents=[common], help=text)
        if name == "report":
            p.add_argument("--au", help="one AU (all when omitted)")
            p.add_argument("--emotion", help="one emotion (all when omitted)")
    return parser


def _config(args):
    overrides = {
        "alpha": args.alpha,
        "n_permutations": args.permutations,
        "reference_au": args.reference_au,
        "n_jobs": args.jobs,
        "output_dir": args.out,
    }
    if args.command == "synth":
        cfg = load_config(args.config, **overrides)
        if args.seed is not None:
            synth = {**cfg.to_dict()["synth"], "seed": args.seed}
            cfg = load_config(args.config, **overrides, synth=synth)
        return cfg
    return load_config(args.config, seed=args.seed, **overrides)


def _need(args, *names):
    for n in names:
        if getattr(args, n) is None:
            raise SystemExit(f"emofda {args.command}: --{n} is required")


def _write_warps(result, curves, out):
    t = np.linspace(0.0, 1.0, 101)
    with open(Path(out) / "warps.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["video", "t", "h"])
        for c, warp in zip(curves, result.warps):
            for s, h in zip(t, warp(t)):
                w.writerow([c.video_id, repr(float(s)), repr(float(h))])


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    try:
        cfg = _config(args)
        out = Path(args.out or cfg.output_dir)
        if args.command == "synth":
            paths = write_synthetic_corpus(cfg.synth, out)
            print(f"wrote {len(paths)} videos to {out}")
        elif args.command == "report":
            _need(args, "input")
            report = load_report(args.input)
            out.mkdir(parents=True, exist_ok=True)
            pairs = [
                (a["au"], a["emotion"])
                for a in report["analyses"]
                if (args.au is None or a["au"] == args.au)
                and (args.emotion is None or a["emotion"] == args.emotion)
            ]
            if not pairs:
                raise KeyError(f"no analysis for AU {args.au!r} and emotion {args.emotion!r}")
            for au, emo in pairs:
                (out / f"plot_{au}_{emo}.csv").write_text(emit_plot_data(report, au, emo), encoding="utf-8")
            print(f"wrote {len(pairs)} plot files to {out}")
        elif args.command == "run":
            _need(args, "input")
            report = run_pipeline(cfg, args.input, out, args.manifest)
            _print_summary(report)
        else:
            _need(args, "input")
            exclude = [args.manifest] if args.manifest else []
            items = load_sample(args.input, args.manifest, exclude)
            validate_groups(items)
            curves = smooth_records(items, cfg)
            if args.command == "smooth":
                write_curves(curves, out)
                print(f"wrote {len(curves)} smoothed curves to {out}")
            elif args.command == "register":
                curves, result = register_stage(curves, cfg)
                write_curves(curves, out)
                if result is not None:
                    _write_warps(result, curves, out)
                print(f"wrote {len(curves)} registered curves to {out}")
            else:
                report = fanova_stage(curves, cfg)
                write_report(report, out)
                _print_summary(report)
    except (PipelineError, IngestError, ValueError, KeyError, OSError) as exc:
        msg = exc.args[0] if isinstance(exc, KeyError) and exc.args else exc
        print(f"emofda {args.command}: error: {msg}", file=sys.stderr)
        return 1
    return 0


def _print_summary(report):
    for emo in report["emotions"]:
        aus = [a["au"] for a in report["analyses"] if a["emotion"] == emo and a["zones_max"]]
        print(f"{emo}: {' '.join(aus) if aus else '-'}")


if __name__ == "__main__":
    sys.exit(main())
