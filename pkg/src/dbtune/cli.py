"""Command-line entry point: ``dbtune {train,run,sweep,gen-data}``.

Exit codes: 0 success, 1 config/validation error, 2 runtime I/O error.
"""
from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path

from . import estimator as est
from . import harness

EXIT_OK, EXIT_CONFIG, EXIT_IO = 0, 1, 2


def _seed(text):
    v = int(text, 0)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def _sizes(text):
    try:
        return [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dbtune", description="Closed-loop DBMS memory self-tuning simulator")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config_required=False):
        p.add_argument("--config", type=Path, required=config_required, help="scenario JSON file")
        p.add_argument("--seed", type=_seed, help="override workload and network seeds")
        p.add_argument("--out", type=Path, help="output directory (default: config output_dir)")

    p = sub.add_parser("train", help="train the size estimator from a characterization CSV")
    common(p)
    p.add_argument("--data", type=Path, help="training CSV (default: bundled sample set)")
    p.add_argument("--model", type=Path, default=Path("model.json"), help="model output path")
    p.add_argument("--epochs", type=int)
    p.add_argument("--hidden", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--default-users", type=int, default=est.DEFAULT_USERS,
                   help="value for blank users fields (default: %(default)s)")
    p.add_argument("--strict", action="store_true", help="reject constant columns")

    p = sub.add_parser("run", help="run one closed-loop scenario")
    common(p)
    p.add_argument("--model", type=Path)
    p.add_argument("--no-tune", action="store_true")

    p = sub.add_parser("sweep", help="untuned runs over a set of buffer cache sizes")
    common(p)
    p.add_argument("--sizes", type=_sizes, help="comma-separated cache sizes in MB")

    p = sub.add_parser("gen-data", help="generate labelled training data by simulation")
    common(p)
    return parser


def _scenario(args) -> harness.ScenarioConfig:
    cfg = harness.load_config(args.config) if args.config else harness.ScenarioConfig()
    if args.seed is not None:
        cfg = harness.with_seed(cfg, args.seed)
    return cfg


def _dispatch(args) -> None:
    cfg = _scenario(args)
    out = args.out if args.out is not None else Path(cfg.output_dir)

    if args.command == "train":
        overrides = {k: v for k, v in (("epochs", args.epochs), ("n_hidden", args.hidden),
                                       ("learning_rate", args.lr)) if v is not None}
        try:
            net = dataclasses.replace(cfg.net, **overrides)
        except ValueError as exc:
            raise harness.ConfigError(str(exc)) from None
        trace_out = (args.out / args.model.with_suffix(".mse.csv").name) if args.out else None
        _, trace = harness.train_cmd(args.data, net, args.model, trace_out, args.default_users, args.strict)
        print(f"trained {len(trace)} epochs, final mse {trace[-1]:.6g}; model -> {args.model}")

    elif args.command == "run":
        if args.model is not None:
            cfg = cfg.replace(model_path=str(args.model))
        if args.no_tune:
            cfg = cfg.replace(tuning_enabled=False)
        result = harness.run_scenario(cfg, out_dir=out)
        s = result.summary()
        print(f"{s['windows']} windows, mean {s['mean_response_ms']:.4g} ms, "
              f"final-half mean {s['final_half_mean_response_ms']:.4g} ms, changes {s['changes']}; -> {out}")

    elif args.command == "sweep":
        for size, mean, miss in harness.sweep_buffer(cfg, args.sizes, out_dir=out):
            print(f"{size:>5} MB  mean {mean:.4g} ms  miss ratio {miss:.4f}")

    elif args.command == "gen-data":
        rows, warnings = harness.gen_training_data(cfg, out_dir=out)
        print(f"{len(rows)} rows -> {out / 'training.csv'} ({len(warnings)} warnings)")


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        _dispatch(args)
    except OSError as exc:
        where = f" ({exc.filename})" if getattr(exc, "filename", None) else ""
        print(f"dbtune: I/O error{where}: {exc.strerror or exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"dbtune: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
