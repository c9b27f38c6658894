"""Low-rank interaction plus sparse main effects for heterogeneous data frames."""

from ._loris import (
    DataFrame,
    Dictionary,
    Fit,
    LorisError,
    fit,
    impute,
    read_data_csv,
    read_dictionary,
    synth,
    theoretical_lambdas,
    top_svd,
    two_step,
)

__all__ = [
    "DataFrame",
    "Dictionary",
    "Fit",
    "LorisError",
    "fit",
    "impute",
    "read_data_csv",
    "read_dictionary",
    "synth",
    "theoretical_lambdas",
    "top_svd",
    "two_step",
]
