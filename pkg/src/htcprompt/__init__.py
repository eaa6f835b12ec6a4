"""Hierarchical text classification with a black-box chat LLM.

Three prompting strategies (DL, DH, TMH), Levenshtein label resolution,
per-depth and conditional accuracy, token cost accounting and a dataset
contamination probe.
"""

from .contamination import ContaminationRules, ContaminationVerdict, battery, categorize, probe
from .cost import CostReport, PriceTable, aggregate, estimate_cost
from .dataset import APR_SCHEMA, WOS_SCHEMA, CsvSchema, Dataset, LabeledDocument, load_csv, sample_few_shot
from .llm_client import (
    ChatRequest,
    ChatResponse,
    EchoOracle,
    HttpBackend,
    LLMClient,
    MockBackend,
    Perturbing,
    RetryPolicy,
    Scripted,
    mock_backend,
)
from .metrics import MetricsReport, compare_reports, format_metrics_table, score
from .normalize import ResolvedLabel, levenshtein, normalize_text, resolve_label
from .prompts import PromptTemplates, render_contamination, render_dh, render_dl, render_tmh_step
from .strategies import Prediction, RunConfig, classify, read_predictions, reinterpret, run_experiment, write_predictions
from .taxonomy import LabelNode, Taxonomy, build_taxonomy

__version__ = "0.1.0"

__all__ = [
    "APR_SCHEMA",
    "WOS_SCHEMA",
    "ChatRequest",
    "ChatResponse",
    "ContaminationRules",
    "ContaminationVerdict",
    "CostReport",
    "CsvSchema",
    "Dataset",
    "EchoOracle",
    "HttpBackend",
    "LLMClient",
    "LabelNode",
    "LabeledDocument",
    "MetricsReport",
    "MockBackend",
    "Perturbing",
    "Prediction",
    "PriceTable",
    "PromptTemplates",
    "ResolvedLabel",
    "RetryPolicy",
    "RunConfig",
    "Scripted",
    "Taxonomy",
    "aggregate",
    "battery",
    "build_taxonomy",
    "categorize",
    "classify",
    "compare_reports",
    "estimate_cost",
    "format_metrics_table",
    "levenshtein",
    "load_csv",
    "mock_backend",
    "normalize_text",
    "probe",
    "read_predictions",
    "reinterpret",
    "render_contamination",
    "render_dh",
    "render_dl",
    "render_tmh_step",
    "resolve_label",
    "run_experiment",
    "sample_few_shot",
    "score",
    "write_predictions",
]
