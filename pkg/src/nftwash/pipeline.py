"""End-to-end batch driver: parse, clean, enrich, build, detect, report."""

from __future__ import annotations

import hashlib
import json
import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from decimal import Decimal
from pathlib import Path
from typing import Iterable, Optional, Sequence

from . import __version__
from .config import DetectorConfig
from .cycles import CycleFinding, SearchStats, check_cycle, find_cycles
from .events import NftId, TradeEvent, clean, parse_events, read_events, write_events
from .graph import Edge, GraphSet, NftGraph, build_graphs
from .metrics import MarketReport, build_report
from .prices import PriceTable, enrich_usd, read_price_table
from .sequences import SequenceFinding, check_sequence, find_sequences

log = logging.getLogger(__name__)

CLEANED_EVENTS = "cleaned_events.jsonl"
CLEANING_REPORT = "cleaning_report.csv"
FINDINGS = "findings.jsonl"
MANIFEST = "manifest.json"
REPORT_JSON = "report.json"
REPORT_TXT = "report.txt"
PLOTS_DIR = "plots"


class UsageError(Exception):
    exit_code = 2


class DataError(Exception):
    exit_code = 3


class FindingsValidationError(DataError):
    pass


def file_digest(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _first_undecodable_line(path) -> int:
    with open(path, "rb") as fh:
        for lineno, raw in enumerate(fh, start=1):
            try:
                raw.decode("utf-8")
            except UnicodeDecodeError:
                return lineno
    return 0


def detect_graph(graph: NftGraph, cfg: DetectorConfig) -> tuple[list[CycleFinding], list[SequenceFinding], int]:
    stats = SearchStats()
    cycles = find_cycles(graph, cfg, stats)
    used = {tx for c in cycles for tx in c.tx_ids}
    sequences = find_sequences(graph, cfg, exclude=used)
    return cycles, sequences, stats.truncated


def _detect_chunk(args):
    graphs, cfg = args
    out_c, out_s, trunc = [], [], 0
    for g in graphs:
        c, s, t = detect_graph(g, cfg)
        out_c.extend(c)
        out_s.extend(s)
        trunc += t
    return out_c, out_s, trunc


def _finding_key(f):
    return (f.nft, f.start_ts, f.tx_ids)


def detect_all(
    graphs: GraphSet | Iterable[NftGraph],
    cfg: DetectorConfig = DetectorConfig(),
    workers: int = 1,
    chunk_size: int = 2000,
) -> tuple[list[CycleFinding], list[SequenceFinding], SearchStats]:
    """Run both detectors over every graph, optionally across processes.

    Results are merged in ``(nft, start_ts, tx_ids)`` order, so the output does
    not depend on worker count or completion order.
    """
    glist = list(graphs)
    stats = SearchStats(graphs=len(glist))
    cycles: list[CycleFinding] = []
    sequences: list[SequenceFinding] = []
    chunks = [(glist[i:i + chunk_size], cfg) for i in range(0, len(glist), chunk_size)]
    if workers <= 1 or len(chunks) <= 1:
        results = map(_detect_chunk, chunks)
    else:
        pool = ProcessPoolExecutor(max_workers=workers)
        results = pool.map(_detect_chunk, chunks)
    for c, s, t in results:
        cycles.extend(c)
        sequences.extend(s)
        stats.truncated += t
    if workers > 1 and len(chunks) > 1:
        pool.shutdown()
    cycles.sort(key=_finding_key)
    sequences.sort(key=_finding_key)
    return cycles, sequences, stats


def finding_record(f) -> dict:
    rec = {
        "nft": str(f.nft),
        "type": "cycle" if isinstance(f, CycleFinding) else "sequence",
        "length": f.length,
        "tx_ids": list(f.tx_ids),
        "addresses": list(f.addresses),
        "start_ts": f.start_ts,
        "end_ts": f.end_ts,
    }
    if isinstance(f, SequenceFinding):
        rec["max_deviation"] = str(f.max_deviation_fraction)
    rec["usd_volume"] = str(f.usd_volume)
    return rec


def write_findings(cycles: Sequence[CycleFinding], sequences: Sequence[SequenceFinding], fh) -> None:
    for f in list(cycles) + list(sequences):
        fh.write(json.dumps(finding_record(f), separators=(",", ":")) + "\n")


def load_findings(
    path, events: Iterable[TradeEvent], cfg: DetectorConfig = DetectorConfig()
) -> tuple[list[CycleFinding], list[SequenceFinding]]:
    """Rebuild findings from their records and re-check every invariant.

    Raises :class:`FindingsValidationError` naming the offending line if a
    record references unknown transactions, mixes NFTs, breaks the cycle or
    sequence rules, or carries summary fields that disagree with its edges.
    """
    by_tx = {e.tx_id: e for e in events}
    cycles, sequences = [], []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                nft = NftId.parse(rec["nft"])
                edges = []
                for tx in rec["tx_ids"]:
                    ev = by_tx.get(tx)
                    if ev is None:
                        raise ValueError(f"unknown tx_id {tx}")
                    if ev.nft != nft:
                        raise ValueError(f"tx {tx} belongs to {ev.nft}, not {nft}")
                    edges.append(Edge.from_event(ev))
                if rec["type"] == "cycle":
                    check_cycle(edges)
                    f = CycleFinding(nft, tuple(edges))
                elif rec["type"] == "sequence":
                    check_sequence(edges, cfg)
                    f = SequenceFinding(nft, tuple(edges))
                    if Decimal(rec["max_deviation"]) != f.max_deviation_fraction:
                        raise ValueError("max_deviation does not match edges")
                else:
                    raise ValueError(f"unknown finding type {rec['type']!r}")
                if (rec["length"] != f.length or list(rec["addresses"]) != list(f.addresses)
                        or rec["start_ts"] != f.start_ts or rec["end_ts"] != f.end_ts
                        or Decimal(rec["usd_volume"]) != f.usd_volume):
                    raise ValueError("summary fields do not match edges")
            except (ValueError, KeyError, TypeError) as exc:
                raise FindingsValidationError(f"{path}:{lineno}: invalid finding: {exc}") from None
            (cycles if isinstance(f, CycleFinding) else sequences).append(f)
    return cycles, sequences


@dataclass
class RunManifest:
    inputs: dict
    config: dict
    dataset_digest: str
    tool_version: str = __version__
    workers: int = 1
    timings: dict = field(default_factory=dict)
    wall_seconds: float = 0.0
    counts: dict = field(default_factory=dict)
    truncated_searches: int = 0

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True) + "\n"

    @classmethod
    def load(cls, path) -> "RunManifest":
        with open(path, encoding="utf-8") as fh:
            return cls(**json.load(fh))


class _Timer:
    def __init__(self):
        self.t0 = time.perf_counter()
        self.last = self.t0
        self.stages: dict[str, float] = {}

    def mark(self, name: str) -> None:
        now = time.perf_counter()
        self.stages[name] = round(now - self.last, 6)
        self.last = now

    @property
    def total(self) -> float:
        return round(self.last - self.t0, 6)


def run_detect(
    events_path,
    out_dir,
    prices_path=None,
    cfg: DetectorConfig = DetectorConfig(),
    workers: int = 1,
    dump_graphs: bool = False,
) -> RunManifest:
    """Full pipeline; writes findings, report files and the run manifest."""
    events_path = Path(events_path)
    if not events_path.is_file():
        raise UsageError(f"events file not found: {events_path}")
    if prices_path is not None and not Path(prices_path).is_file():
        raise UsageError(f"price table not found: {prices_path}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    timer = _Timer()
    digest = file_digest(events_path)
    try:
        raw, parse_report = read_events(events_path)
    except UnicodeDecodeError:
        raise DataError(f"{events_path}:{_first_undecodable_line(events_path)}: not UTF-8 text") from None
    timer.mark("parse")

    table: Optional[PriceTable] = None
    if prices_path is not None:
        try:
            table = read_price_table(prices_path)
        except ValueError as exc:
            raise DataError(str(exc)) from None
    cleaned, clean_report = clean(raw, cfg, table)
    timer.mark("clean")

    if table is not None:
        cleaned = enrich_usd(cleaned, table)
    timer.mark("enrich")

    graphs = build_graphs(cleaned, provenance=digest)
    timer.mark("build")

    cycles, sequences, stats = detect_all(graphs, cfg, workers)
    timer.mark("detect")

    with open(out / CLEANED_EVENTS, "w", encoding="utf-8", newline="\n") as fh:
        write_events(cleaned, fh)
    with open(out / CLEANING_REPORT, "w", encoding="utf-8", newline="") as fh:
        parse_report.merge(clean_report).write_csv(fh)
    with open(out / FINDINGS, "w", encoding="utf-8", newline="\n") as fh:
        write_findings(cycles, sequences, fh)
    if dump_graphs:
        with open(out / "graphs.jsonl", "w", encoding="utf-8", newline="\n") as fh:
            graphs.dump(fh)
    timer.mark("write")

    manifest = RunManifest(
        inputs={"events": str(events_path), "prices": None if prices_path is None else str(prices_path)},
        config=cfg.to_dict(),
        dataset_digest=digest,
        workers=workers,
        counts={
            "input_lines": parse_report.total,
            "malformed": len(parse_report.dropped),
            **{f"dropped_{k}": v for k, v in clean_report.counts().items() if k != "malformed"},
            "events": len(cleaned),
            "graphs": len(graphs),
            "cycles": len(cycles),
            "sequences": len(sequences),
        },
        truncated_searches=stats.truncated,
    )
    report = _build_and_write_report(out, cleaned, cycles, sequences, manifest)
    timer.mark("metrics")
    manifest.timings = timer.stages
    manifest.wall_seconds = timer.total
    (out / MANIFEST).write_text(manifest.to_json(), encoding="utf-8")
    log.info("detect: %d events, %d cycles, %d sequences in %.2fs",
             len(cleaned), len(cycles), len(sequences), timer.total)
    return manifest


def _build_and_write_report(out: Path, events, cycles, sequences, manifest: RunManifest) -> MarketReport:
    cfg = DetectorConfig.from_dict(manifest.config)
    report = build_report(events, cycles, sequences, cfg_dict=manifest.config,
                          dataset_digest=manifest.dataset_digest,
                          truncated=manifest.truncated_searches, rounding=cfg.share_rounding)
    (out / REPORT_JSON).write_text(report.to_json(), encoding="utf-8")
    (out / REPORT_TXT).write_text(report.render_text(), encoding="utf-8")
    plots = out / PLOTS_DIR
    plots.mkdir(exist_ok=True)
    for name, text in report.plot_tables().items():
        (plots / name).write_text(text, encoding="utf-8")
    return report


def render_report(findings_dir) -> MarketReport:
    """Re-render report and plot tables from a previous ``run_detect`` output."""
    d = Path(findings_dir)
    for name in (MANIFEST, FINDINGS, CLEANED_EVENTS):
        if not (d / name).is_file():
            raise UsageError(f"{d / name} not found; run detect first")
    manifest = RunManifest.load(d / MANIFEST)
    cfg = DetectorConfig.from_dict(manifest.config)
    with open(d / CLEANED_EVENTS, encoding="utf-8") as fh:
        events, rep = parse_events(fh)
    if rep.dropped:
        raise DataError(f"{d / CLEANED_EVENTS}: {len(rep.dropped)} unreadable events")
    cycles, sequences = load_findings(d / FINDINGS, events, cfg)
    return _build_and_write_report(d, events, cycles, sequences, manifest)


def default_workers() -> int:
    return max(1, min(4, os.cpu_count() or 1))
