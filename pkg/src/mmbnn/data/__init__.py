"""Benchmark datasets, preprocessing and evaluation splits."""

from .datasets import (ModalityDataset, MultiModalDataset, build_dataset, load_dataset,
                       save_dataset)
from .generators import (branin, branin_low, paciorek, paciorek_low, timeseries_sample,
                         timeseries_table, ts_function, ts_params, ts_summaries)
from .grids import DATASETS, Grids, make_grids
from .hull import SplitLabel, hull_split, in_hull
from .preprocess import PCARecord, PCAReducer, Standardizer, pca_fit, pca_project, pca_reconstruct
from .wind import WIND_COLUMNS, WIND_VARIABLES, read_wind_csv, wind_ingest

__all__ = [
    "DATASETS", "Grids", "ModalityDataset", "MultiModalDataset", "PCARecord", "PCAReducer",
    "SplitLabel", "Standardizer", "WIND_COLUMNS", "WIND_VARIABLES", "branin", "branin_low",
    "build_dataset", "hull_split", "in_hull", "load_dataset", "make_grids", "paciorek",
    "paciorek_low", "pca_fit", "pca_project", "pca_reconstruct", "read_wind_csv", "save_dataset",
    "timeseries_sample", "timeseries_table", "ts_function", "ts_params", "ts_summaries",
    "wind_ingest",
]
