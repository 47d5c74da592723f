"""
Data module - datasets and the split protocol

This module provides:
- LabeledDataset: samples, labels and split tags, with artifact persistence
- gen_synthetic / gen_blobs: seeded desk-scale datasets
- load_cifar10_binary: CIFAR-10 binary-record reader
- split_dataset: stratified train/val/calib/test split
"""

from src.data.dataset import SPLIT_NAMES, LabeledDataset, load_splits, save_splits
from src.data.synthetic import gen_blobs, gen_synthetic
from src.data.cifar import load_cifar10_binary
from src.data.splits import DEFAULT_FRACTIONS, allocate, split_dataset, validate_fractions

__all__ = [
    "SPLIT_NAMES",
    "LabeledDataset",
    "load_splits",
    "save_splits",
    "gen_blobs",
    "gen_synthetic",
    "load_cifar10_binary",
    "DEFAULT_FRACTIONS",
    "allocate",
    "split_dataset",
    "validate_fractions",
]
