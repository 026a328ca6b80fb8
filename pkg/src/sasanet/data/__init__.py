from .schema import CATEGORICAL, CONTINUOUS, Feature, FeatureSchema, SchemaError, continuous_schema
from .dataset import (
    DataError,
    Dataset,
    Sample,
    SubsetView,
    load_csv,
    load_split_manifest,
    normalize,
    save_csv,
    save_split_manifest,
    train_test_split,
)
from .synthetic import (
    LinearTaskTruth,
    SubsetExpectationOracle,
    mask_to_size,
    shift_distribution,
    synth_binary_classification,
    synth_linear_regression,
)

__all__ = [
    "CATEGORICAL", "CONTINUOUS", "Feature", "FeatureSchema", "SchemaError", "continuous_schema",
    "DataError", "Dataset", "Sample", "SubsetView", "load_csv", "load_split_manifest",
    "normalize", "save_csv", "save_split_manifest", "train_test_split",
    "LinearTaskTruth", "SubsetExpectationOracle", "mask_to_size", "shift_distribution",
    "synth_binary_classification", "synth_linear_regression",
]
