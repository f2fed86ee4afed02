"""Search the error bound of a lossy compressor that yields a target compression ratio."""

from .compressor import CompressorError, CompressorHandle, make_compressor
from .model import ABSOLUTE, MSE, ContractError, Dataset, ErrorControl, FieldSeries, TargetSpec, TuneResult
from .optimizer import GlobalMinimizer, find_min_global_with_cutoff
from .orchestrator import run_all_fields, run_field_series, train_region_parallel

__all__ = [
    "ABSOLUTE",
    "MSE",
    "CompressorError",
    "CompressorHandle",
    "ContractError",
    "Dataset",
    "ErrorControl",
    "FieldSeries",
    "GlobalMinimizer",
    "TargetSpec",
    "TuneResult",
    "find_min_global_with_cutoff",
    "make_compressor",
    "run_all_fields",
    "run_field_series",
    "train_region_parallel",
]
