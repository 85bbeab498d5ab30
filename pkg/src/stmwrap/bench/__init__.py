"""Benchmark, stress-test and verification harness."""
from .impls import IMPLS, MAP_IMPLS, QUEUE_IMPLS, default_mode, make_structure
from .runner import CSV_COLUMNS, BenchConfig, BenchRecord, append_csv, run_bench, sweep, write_csv
from .stress import StressConfig, StressReport, Txn, find_serial_order, inverse_check, run_stress
from .workload import Op, Workload, split_seed

__all__ = [
    "BenchConfig",
    "BenchRecord",
    "CSV_COLUMNS",
    "IMPLS",
    "MAP_IMPLS",
    "Op",
    "QUEUE_IMPLS",
    "StressConfig",
    "StressReport",
    "Txn",
    "Workload",
    "append_csv",
    "default_mode",
    "find_serial_order",
    "inverse_check",
    "make_structure",
    "run_bench",
    "run_stress",
    "split_seed",
    "sweep",
    "write_csv",
]
