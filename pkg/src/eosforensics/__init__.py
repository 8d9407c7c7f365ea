"""Forensics toolkit for EOSIO-style action traces: enhanced graph
construction, network metrics, bot-community detection, permission
auditing and attack scanning, plus a synthetic-chain generator for
testing against planted ground truth."""

from .errors import (
    BundleError,
    CalibrationError,
    ConvergenceError,
    ForensicsError,
    GenerationError,
    GraphError,
    IngestError,
    MetricError,
    TrainingError,
)
from .model import (
    ActionRecord,
    ObservationWindow,
    Quantity,
    Registry,
    extract_transfers,
    parse_account_snapshot,
    parse_action_trace,
)

__version__ = "1.0.0"

__all__ = [
    "ActionRecord",
    "BundleError",
    "CalibrationError",
    "ConvergenceError",
    "ForensicsError",
    "GenerationError",
    "GraphError",
    "IngestError",
    "MetricError",
    "ObservationWindow",
    "Quantity",
    "Registry",
    "TrainingError",
    "extract_transfers",
    "parse_account_snapshot",
    "parse_action_trace",
    "__version__",
]
