"""Conditional GAN synthesis of mixed-type tables, with optional DP training of the critic."""
from .bundle import ModelBundle, load_bundle, save_bundle
from .schema import ColumnSpec, Dataset, Kind, TableSchema, Task, load_csv, stratified_split, write_csv
from .trainer import TrainConfig, sample, train

__all__ = [
    "ColumnSpec", "Dataset", "Kind", "ModelBundle", "TableSchema", "Task", "TrainConfig",
    "load_bundle", "load_csv", "sample", "save_bundle", "stratified_split", "train", "write_csv",
]
__version__ = "0.1.0"
