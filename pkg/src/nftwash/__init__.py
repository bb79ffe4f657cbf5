"""Wash-trading pattern detection for NFT trade histories."""

__version__ = "0.1.0"

from .config import DetectorConfig
from .cycles import CycleClass, CycleFinding, classify_cycle, find_cycles
from .events import CleaningReport, Kind, NftId, TradeEvent, clean, parse_events, read_events
from .graph import Edge, GraphSet, NftGraph, build_graphs
from .metrics import (
    DatasetTotals,
    FlagSet,
    MarketReport,
    build_report,
    flag_union,
    summarize,
)
from .prices import PriceTable, enrich_usd, load_price_table
from .sequences import SequenceFinding, find_sequences
from .synth import PlantSpec, SynthConfig, generate

__all__ = [
    "CleaningReport", "CycleClass", "CycleFinding", "DatasetTotals", "DetectorConfig",
    "Edge", "FlagSet", "GraphSet", "Kind", "MarketReport", "NftGraph", "NftId",
    "PlantSpec", "PriceTable", "SequenceFinding", "SynthConfig", "TradeEvent",
    "build_graphs", "build_report", "classify_cycle", "clean", "enrich_usd",
    "find_cycles", "find_sequences", "flag_union", "generate", "load_price_table",
    "parse_events", "read_events", "summarize",
]
