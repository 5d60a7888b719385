"""JSON Schemas (draft 2020-12) for every JSON document the package writes.

Each document carries a ``schema`` field naming its version; bump the
suffix whenever a field changes meaning.
"""

from __future__ import annotations

from .model import RECORD_SCHEMA_VERSION
from .verify import SCHEMA_VERSION as CHECK_SCHEMA_VERSION

SYMCHECK_SCHEMA_VERSION = "symloss.symcheck/1"
CENTROID_SCHEMA_VERSION = "symloss.centroid/1"
REGRESS_SCHEMA_VERSION = "symloss.regress/1"
ROBUSTNESS_SCHEMA_VERSION = "symloss.robustness/1"

_number_or_null = {"type": ["number", "null"]}
_matrix = {"type": "array", "items": {"type": "array", "items": {"type": "number"}}}

CHECK_REPORT = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "CheckReport",
    "type": "object",
    "required": ["schema", "check", "loss", "passed", "worst_violation", "tolerance", "probes", "seed", "details", "extra"],
    "properties": {
        "schema": {"const": CHECK_SCHEMA_VERSION},
        "check": {"type": "string"},
        "loss": {"type": ["string", "null"]},
        "passed": {"type": "boolean"},
        "worst_violation": _number_or_null,
        "tolerance": {"type": "number"},
        "probes": {"type": "integer", "minimum": 0},
        "seed": {"type": ["integer", "null"]},
        "details": {"type": "string"},
        "extra": {"type": "object"},
    },
}

SYMCHECK_RESULT = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "SymcheckResult",
    "type": "object",
    "required": ["schema", "loss", "num_classes", "params", "passed", "reports"],
    "properties": {
        "schema": {"const": SYMCHECK_SCHEMA_VERSION},
        "loss": {"type": "string"},
        "num_classes": {"type": "integer", "minimum": 2},
        "params": {"type": "object"},
        "passed": {"type": "boolean"},
        "reports": {"type": "array", "items": CHECK_REPORT},
    },
}

_epoch_entry = {
    "type": "object",
    "required": ["epoch", "lr", "mean_train_loss", "train_accuracy", "test_accuracy", "max_grad_norm"],
    "properties": {
        "epoch": {"type": "integer", "minimum": 0},
        "lr": {"type": "number"},
        "mean_train_loss": {"type": "number"},
        "train_accuracy": {"type": "number", "minimum": 0, "maximum": 1},
        "test_accuracy": {"type": "number", "minimum": 0, "maximum": 1},
        "max_grad_norm": {"type": "number", "minimum": 0},
    },
}

TRAIN_RECORD = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "TrainRecord",
    "type": "object",
    "required": ["schema", "config", "seed", "aborted", "epochs"],
    "properties": {
        "schema": {"const": RECORD_SCHEMA_VERSION},
        "config": {
            "type": "object",
            "required": ["epochs", "batch_size", "lr", "momentum", "weight_decay", "grad_clip", "schedule",
                         "score_norm", "seed", "loss_name", "loss_params"],
        },
        "seed": {"type": "integer"},
        "aborted": {"type": "boolean"},
        "epochs": {"type": "array", "items": _epoch_entry},
        "final_test_accuracy": {"type": ["number", "null"], "minimum": 0, "maximum": 1},
    },
}

CENTROID_RESULT = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "CentroidResult",
    "type": "object",
    "required": ["schema", "num_classes", "num_examples", "bias", "radius", "centroid", "centroid_norm",
                 "weights", "trace_identity_residual", "kernel_alignment", "kkt_residual"],
    "properties": {
        "schema": {"const": CENTROID_SCHEMA_VERSION},
        "num_classes": {"type": "integer", "minimum": 2},
        "num_examples": {"type": "integer", "minimum": 1},
        "bias": {"type": "boolean"},
        "radius": {"type": "number", "exclusiveMinimum": 0},
        "centroid": _matrix,
        "centroid_norm": {"type": "number", "minimum": 0},
        "weights": _matrix,
        "trace_identity_residual": {"type": "number", "minimum": 0},
        "kernel_alignment": {"type": "number"},
        "kkt_residual": {"type": "number", "minimum": 0},
    },
}

REGRESS_RESULT = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "RegressResult",
    "type": "object",
    "required": ["schema", "loss_kind", "delta", "lam", "density", "weights", "stationarity_residual", "symmetry"],
    "properties": {
        "schema": {"const": REGRESS_SCHEMA_VERSION},
        "loss_kind": {"enum": ["unhinged", "clipped"]},
        "delta": _number_or_null,
        "lam": {"type": "number", "exclusiveMinimum": 0},
        "density": {"type": "string"},
        "weights": {"type": "array", "items": {"type": "number"}},
        "stationarity_residual": {"type": "number", "minimum": 0},
        "symmetry": CHECK_REPORT,
    },
}

ROBUSTNESS_RESULT = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "RobustnessResult",
    "type": "object",
    "required": ["schema", "etas", "seeds", "losses"],
    "properties": {
        "schema": {"const": ROBUSTNESS_SCHEMA_VERSION},
        "etas": {"type": "array", "items": {"type": "number"}},
        "seeds": {"type": "array", "items": {"type": "integer"}},
        "losses": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["label", "loss", "params", "accuracy", "mean_accuracy", "drop"],
            },
        },
    },
}

ALL = {
    CHECK_SCHEMA_VERSION: CHECK_REPORT,
    SYMCHECK_SCHEMA_VERSION: SYMCHECK_RESULT,
    RECORD_SCHEMA_VERSION: TRAIN_RECORD,
    CENTROID_SCHEMA_VERSION: CENTROID_RESULT,
    REGRESS_SCHEMA_VERSION: REGRESS_RESULT,
    ROBUSTNESS_SCHEMA_VERSION: ROBUSTNESS_RESULT,
}
