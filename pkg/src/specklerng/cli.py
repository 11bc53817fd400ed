"""Command-line interface.

Exit codes: 0 success/pass, 1 randomness validation failed, 2 usage or
configuration error, 3 I/O error.
"""

import argparse
import json
import logging
import os
import sys
from pathlib import Path

from . import pipeline
from .config import ConfigError, PipelineConfig, validate
from .errors import InsufficientDataError

EXIT_OK, EXIT_FAIL, EXIT_USAGE, EXIT_IO = 0, 1, 2, 3
THREADS_ENV = "SPECKLE_RNG_THREADS"


def _load_config(args):
    cfg = PipelineConfig.load(args.config) if args.config else PipelineConfig()
    if getattr(args, "seed", None) is not None:
        cfg.puf.seed = args.seed
    if getattr(args, "pattern_seed", None) is not None:
        cfg.dataset.pattern_seed = args.pattern_seed
    if getattr(args, "block_bits", None) is not None:
        cfg.extractor.block_bits = args.block_bits
    if getattr(args, "export_ascii", False):
        cfg.extractor.export_ascii = True
    if getattr(args, "subseq_bits", None) is not None:
        cfg.battery.subseq_bits = args.subseq_bits
    if getattr(args, "alpha", None) is not None:
        cfg.battery.alpha = args.alpha
    threads = args.threads if args.threads is not None else os.environ.get(THREADS_ENV)
    if threads is not None:
        try:
            cfg.threads = int(threads)
        except ValueError:
            raise ConfigError("threads", f"not an integer: {threads!r}") from None
    if args.out:
        cfg.output_dir = args.out
    return validate(cfg)


def _print_json(obj):
    print(json.dumps(obj, indent=2, sort_keys=True))


def cmd_simulate(cfg, args):
    result = pipeline.simulate(cfg)
    _print_json(result)
    return EXIT_OK


def cmd_characterize(cfg, args):
    out = Path(cfg.output_dir) / "characterize"
    result = pipeline.characterize(args.dataset, out, cfg.gabor_params())
    for metric in ("euclidean", "hamming"):
        for kind in pipeline.KINDS:
            s = result[metric][kind]
            print(f"{metric:9s} {kind}: mean={s['mean']:.6g} std={s['std']:.6g} cv={s['cv']:.4g} "
                  f"pairs={s['n_pairs']}")
    print(f"euclidean separated: {str(result['euclidean']['separated']).lower()}")
    return EXIT_OK


def cmd_calibrate(cfg, args):
    report = pipeline.calibrate(args.dataset, Path(cfg.output_dir) / "calibrate", args.h_min)
    _print_json(report.to_dict())
    return EXIT_OK


def cmd_extract(cfg, args):
    entropy = args.entropy
    if not cfg.extractor.block_bits and entropy is None:
        default = Path(cfg.output_dir) / "calibrate" / "entropy.json"
        if not default.is_file():
            raise ConfigError("extractor.block_bits",
                              "no calibration found; run calibrate or pass --block-bits")
        entropy = default
    stream, report = pipeline.extract_dataset(args.dataset, Path(cfg.output_dir) / "extract", cfg,
                                              entropy=entropy)
    print(report.summary())
    print(f"sha256 {stream.sha256()}")
    return EXIT_OK


def cmd_test(cfg, args):
    report = pipeline.check_bitstream(args.bitstream, Path(cfg.output_dir) / "test", cfg)
    for t in report.tests:
        print(f"{'PASS' if t.passed else 'FAIL'}  {t.name:20s} uniformity={t.uniformity:.6f} "
              f"proportion={t.proportion:.4f}")
    print(f"threshold={report.threshold:.4f} subsequences={report.subsequences} "
          f"verdict={'pass' if report.passed else 'fail'}")
    return EXIT_OK if report.passed else EXIT_FAIL


def cmd_pipeline(cfg, args):
    summary, report = pipeline.run_pipeline(cfg)
    t = summary["throughput"]
    print(f"extraction: {t['random_bits']:,} random bits from {t['frames']} frames at "
          f"{t['bits_per_second'] / 1e6:.1f} Mbit/s "
          f"(reference optical-bench rate: {t['reference_bits_per_second'] / 1e9:.2f} Gbit/s)")
    print(f"h_min={summary['entropy']['h_min']:.3f} block_bits={summary['entropy']['block_bits']}")
    print(f"bitstream sha256 {summary['bitstream']['sha256']}")
    print(f"NIST subset verdict: {summary['test']['verdict']}")
    return EXIT_OK if report.passed else EXIT_FAIL


def cmd_bench(cfg, args):
    report, sim = pipeline.bench(cfg, frames=args.frames, repeats=args.repeats,
                                 block_bits=args.block_bits)
    print(report.summary())
    print(f"simulation: {sim['frames_per_second']:.1f} frames/s "
          f"({sim['simulated_raw_bits_per_second'] / 1e6:.1f} Mbit/s raw)")
    if args.json:
        _print_json({"extraction": report.to_dict(), "simulation": sim})
    return EXIT_OK


def build_parser():
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="TOML configuration file")
    common.add_argument("--out", metavar="DIR", help="output directory")
    common.add_argument("--threads", type=int, metavar="N",
                        help=f"worker threads (fallback: ${THREADS_ENV})")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = argparse.ArgumentParser(prog="specklerng", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common], help="render intra/inter datasets")
    p.add_argument("--seed", type=int, metavar="N", help="override puf.seed")
    p.add_argument("--pattern-seed", type=int, metavar="N", help="override dataset.pattern_seed")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("characterize", parents=[common], help="distance histograms")
    p.add_argument("dataset")
    p.set_defaults(func=cmd_characterize)

    p = sub.add_parser("calibrate", parents=[common], help="min-entropy and block length")
    p.add_argument("dataset")
    p.add_argument("--h-min", type=float, help="use this min-entropy instead of measuring")
    p.set_defaults(func=cmd_calibrate)

    p = sub.add_parser("extract", parents=[common], help="SHA-256 extraction to random.bin")
    p.add_argument("dataset")
    p.add_argument("--entropy", metavar="PATH", help="entropy.json from calibrate")
    p.add_argument("--block-bits", type=int, metavar="N")
    p.add_argument("--export-ascii", action="store_true", help="also write ASCII 0/1 stream")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("test", parents=[common], help="NIST SP 800-22 subset")
    p.add_argument("bitstream")
    p.add_argument("--subseq-bits", type=int, metavar="N")
    p.add_argument("--alpha", type=float)
    p.set_defaults(func=cmd_test)

    p = sub.add_parser("pipeline", parents=[common], help="all stages end to end")
    p.add_argument("--seed", type=int, metavar="N", help="override puf.seed")
    p.add_argument("--pattern-seed", type=int, metavar="N", help="override dataset.pattern_seed")
    p.add_argument("--block-bits", type=int, metavar="N")
    p.add_argument("--export-ascii", action="store_true")
    p.set_defaults(func=cmd_pipeline)

    p = sub.add_parser("bench", parents=[common], help="extraction and simulation throughput")
    p.add_argument("--frames", type=int, default=32)
    p.add_argument("--repeats", type=int, default=3)
    p.add_argument("--block-bits", type=int, metavar="N")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _load_config(args)
        return args.func(cfg, args)
    except pipeline.StageError as exc:
        code = _exit_code(exc.cause)
        if code is None:
            raise
        print(f"error: {exc}", file=sys.stderr)
        return code
    except Exception as exc:
        code = _exit_code(exc)
        if code is None:
            raise
        print(f"error: {exc}", file=sys.stderr)
        return code


def _exit_code(exc):
    if isinstance(exc, OSError):
        return EXIT_IO
    if isinstance(exc, (ConfigError, InsufficientDataError, ValueError)):
        return EXIT_USAGE
    return None


if __name__ == "__main__":
    sys.exit(main())
