"""Cohort construction: ingestion, exclusions, AKI labels and first-day features."""
from .exclusions import (
    ExclusionResult,
    apply_exclusions,
    filter_first_day_prescription,
    first_day_drugs,
    has_first_day_prescription,
)
from .features import (
    ColumnSpec,
    FeatureMatrix,
    FeatureSchema,
    SchemaError,
    build_feature_matrix,
    default_schema,
    extract_first_day_features,
    read_feature_matrix,
    write_feature_matrix,
)
from .kdigo import AkiOutcome, creatinine_onset, label_aki, urine_onset
from .records import (
    TABLES,
    URINE,
    DataError,
    InsufficientData,
    KdigoConfig,
    StayRecord,
    encode_demographics,
    load_bundle,
)

__all__ = [
    "AkiOutcome",
    "ColumnSpec",
    "DataError",
    "ExclusionResult",
    "FeatureMatrix",
    "FeatureSchema",
    "InsufficientData",
    "KdigoConfig",
    "SchemaError",
    "StayRecord",
    "TABLES",
    "URINE",
    "apply_exclusions",
    "build_feature_matrix",
    "creatinine_onset",
    "default_schema",
    "encode_demographics",
    "extract_first_day_features",
    "filter_first_day_prescription",
    "first_day_drugs",
    "has_first_day_prescription",
    "label_aki",
    "load_bundle",
    "read_feature_matrix",
    "urine_onset",
    "write_feature_matrix",
]
