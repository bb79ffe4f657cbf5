"""Command-line entry point: ``nftwash detect | synth | report``.

Every flag can also be set through an environment variable named
``NFTWASH_<FLAG>`` (upper case, dashes as underscores), e.g.
``NFTWASH_WORKERS=4`` or ``NFTWASH_VELOCITY_HOURS=6``. Explicit flags win
over the environment, which wins over the ``--config`` file.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from decimal import Decimal, InvalidOperation
from pathlib import Path

from .config import HOUR, DetectorConfig
from .pipeline import DataError, UsageError, default_workers, render_report, run_detect
from .synth import SynthConfig, SynthError, generate

ENV_PREFIX = "NFTWASH_"

log = logging.getLogger("nftwash")


def _env(name: str):
    return os.environ.get(ENV_PREFIX + name.upper().replace("-", "_"))


def _decimal(text: str) -> Decimal:
    try:
        return Decimal(text)
    except InvalidOperation:
        raise argparse.ArgumentTypeError(f"not a decimal: {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="nftwash", description=__doc__.splitlines()[0])
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    d = sub.add_parser("detect", help="run the full detection pipeline")
    d.add_argument("--events", help="line-delimited JSON event file")
    d.add_argument("--prices", help="price table (token,date,usd_per_unit)")
    d.add_argument("--config", help="JSON detector config")
    d.add_argument("--out", help="output directory")
    d.add_argument("--workers", type=int)
    d.add_argument("--max-cycle-len", type=int)
    d.add_argument("--velocity-hours", type=_decimal, help="velocity window in hours (default 12)")
    d.add_argument("--max-deviation", type=_decimal, help="max price deviation fraction (default 0.05)")
    d.add_argument("--dump-graphs", action="store_true", help="also write graphs.jsonl")

    s = sub.add_parser("synth", help="generate a labelled synthetic trace")
    s.add_argument("--config", help="JSON synth config")
    s.add_argument("--out", help="output directory")
    s.add_argument("--seed", type=int, help="override the config seed")

    r = sub.add_parser("report", help="re-render reports from stored findings")
    r.add_argument("--out", help="directory written by detect")
    return p


def _pick(args, name: str, convert=str):
    value = getattr(args, name.replace("-", "_"), None)
    if value is not None:
        return value
    env = _env(name)
    if env is None:
        return None
    try:
        return convert(env)
    except (ValueError, InvalidOperation, argparse.ArgumentTypeError):
        raise UsageError(f"bad value for {ENV_PREFIX}{name.upper().replace('-', '_')}: {env!r}") from None


def _detector_config(args) -> DetectorConfig:
    path = _pick(args, "config")
    try:
        cfg = DetectorConfig.load(path) if path else DetectorConfig()
    except FileNotFoundError:
        raise UsageError(f"config file not found: {path}") from None
    except ValueError as exc:
        raise UsageError(f"bad config {path}: {exc}") from None
    hours = _pick(args, "velocity-hours", Decimal)
    window = None if hours is None else int(hours * HOUR)
    try:
        return cfg.with_overrides(
            velocity_window=window,
            max_price_deviation=_pick(args, "max-deviation", Decimal),
            max_cycle_len=_pick(args, "max-cycle-len", int),
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def cmd_detect(args) -> int:
    events = _pick(args, "events")
    out = _pick(args, "out")
    if not events or not out:
        raise UsageError("detect needs --events and --out")
    cfg = _detector_config(args)
    workers = _pick(args, "workers", int) or default_workers()
    manifest = run_detect(events, out, prices_path=_pick(args, "prices"), cfg=cfg,
                          workers=workers, dump_graphs=args.dump_graphs)
    c = manifest.counts
    print(f"{c['events']} events, {c['graphs']} NFTs: {c['cycles']} cycles, "
          f"{c['sequences']} sequences -> {out} ({manifest.wall_seconds:.2f}s)")
    return 0


def cmd_synth(args) -> int:
    out = _pick(args, "out")
    if not out:
        raise UsageError("synth needs --out")
    path = _pick(args, "config")
    try:
        cfg = SynthConfig.load(path) if path else SynthConfig()
        seed = _pick(args, "seed", int)
        if seed is not None:
            cfg = SynthConfig.from_dict({**cfg.to_dict(), "seed": seed})
        trace = generate(cfg)
    except FileNotFoundError:
        raise UsageError(f"config file not found: {path}") from None
    except (SynthError, TypeError, ValueError) as exc:
        raise UsageError(f"synth config {path or '<defaults>'}: {exc}") from None
    ev, lab = trace.write(out)
    print(f"{len(trace.events)} events, {len(trace.labels)} labelled tx -> {ev}, {lab}")
    return 0


def cmd_report(args) -> int:
    out = _pick(args, "out")
    if not out:
        raise UsageError("report needs --out")
    report = render_report(out)
    sys.stdout.write(report.render_text())
    return 0


COMMANDS = {"detect": cmd_detect, "synth": cmd_synth, "report": cmd_report}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return UsageError.exit_code
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return DataError.exit_code
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
