"""Experiment and contamination configuration files.

Configs are YAML. Any string may reference environment variables as
``${NAME}`` or ``${NAME:-default}``; a reference to an unset variable without
a default is an error. Relative paths resolve against the config file's
directory. Unknown keys are rejected.
"""

from __future__ import annotations

import hashlib
import json
import os
import re
from decimal import Decimal
from pathlib import Path
from typing import Any, Literal

import yaml
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator

from .contamination import ContaminationRules, ProbeSpec, load_refusal_patterns, DEFAULT_REFUSAL_PATTERNS
from .cost import PriceTable
from .dataset import CsvSchema, Dataset, load_csv
from .errors import ConfigError
from .llm_client import EchoOracle, HttpBackend, LLMClient, MockBackend, Perturbing, RetryPolicy, Scripted

__all__ = [
    "BackendSection",
    "ContaminationConfig",
    "DatasetSection",
    "ExperimentConfig",
    "config_hash",
    "interpolate_env",
    "load_config",
    "load_contamination_config",
]

_ENV_REF = re.compile(r"\$\{([A-Za-z_][A-Za-z0-9_]*)(?::-([^}]*))?\}")


def interpolate_env(value: Any, environ=None) -> Any:
    environ = os.environ if environ is None else environ
    if isinstance(value, str):

        def sub(m):
            name, default = m.group(1), m.group(2)
            if name in environ:
                return environ[name]
            if default is not None:
                return default
            raise ConfigError(f"environment variable {name} is not set")

        return _ENV_REF.sub(sub, value)
    if isinstance(value, dict):
        return {k: interpolate_env(v, environ) for k, v in value.items()}
    if isinstance(value, list):
        return [interpolate_env(v, environ) for v in value]
    return value


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


class DatasetSection(_Section):
    name: str
    path: Path
    test_path: Path | None = None
    text_column: str = "text"
    label_columns: list[str] = Field(min_length=1)
    split_column: str | None = None
    n_test: int | None = Field(default=None, ge=0)
    n_train: int | None = Field(default=None, ge=0)
    split_seed: int = 0

    def schema_(self) -> CsvSchema:
        return CsvSchema(self.text_column, tuple(self.label_columns), self.split_column)

    def load(self) -> Dataset:
        return load_csv(
            self.path,
            self.schema_(),
            self.name,
            test_path=self.test_path,
            n_test=self.n_test,
            n_train=self.n_train,
            seed=self.split_seed,
        )


class PricesSection(_Section):
    input_per_million: Decimal = Field(default=Decimal(0), ge=0)
    output_per_million: Decimal = Field(default=Decimal(0), ge=0)

    def table(self) -> PriceTable:
        return PriceTable(self.input_per_million, self.output_per_million)


class BackendSection(_Section):
    kind: Literal["http", "mock-echo", "mock-scripted", "mock-perturb"] = "http"
    base_url: str | None = None
    api_key: str | None = None
    timeout: float = Field(default=60.0, gt=0)
    max_attempts: int = Field(default=5, ge=1)
    backoff_base: float = Field(default=0.5, ge=0)
    backoff_cap: float = Field(default=30.0, ge=0)
    max_in_flight: int = Field(default=8, ge=1)
    script: Path | None = None
    fallback: str = ""
    strict: bool = False
    corruption: Literal["typo", "case", "punct"] = "typo"
    perturb_seed: int = 0

    @property
    def is_mock(self) -> bool:
        return self.kind != "http"

    def rule(self, dataset: Dataset | None = None):
        if self.kind == "mock-scripted":
            replies = {}
            if self.script is not None:
                replies = yaml.safe_load(self.script.read_text(encoding="utf-8")) or {}
                if not isinstance(replies, dict):
                    raise ConfigError(f"{self.script}: mock script must map prompts to replies")
            return Scripted(replies, fallback=self.fallback, strict=self.strict)
        if dataset is None:
            raise ConfigError(f"backend {self.kind} needs a dataset for its gold answers")
        echo = EchoOracle.from_dataset(dataset)
        if self.kind == "mock-perturb":
            return Perturbing(echo, self.corruption, self.perturb_seed)
        return echo

    def client(self, dataset: Dataset | None = None, audit_path=None) -> LLMClient:
        if self.is_mock:
            backend = MockBackend(self.rule(dataset))
        else:
            backend = HttpBackend(base_url=self.base_url, api_key=self.api_key, timeout=self.timeout)
        retry = RetryPolicy(self.max_attempts, self.backoff_base, self.backoff_cap)
        return LLMClient(backend, retry=retry, max_in_flight=self.max_in_flight, audit_path=audit_path)


class ExperimentConfig(_Section):
    dataset: DatasetSection
    strategies: list[Literal["DL", "DH", "TMH"]] = ["DL", "DH", "TMH"]
    k_shot: list[int] = [0, 1, 3, 5, 10, 20]
    seed: int = 0
    model: str = "gpt-4o-mini-2024-07-18"
    temperature: float = Field(default=1.0, ge=0, le=2)
    top_p: float = Field(default=1.0, gt=0, le=1)
    max_completion_tokens: int | None = Field(default=None, ge=1)
    prices: PricesSection = PricesSection()
    concurrency: int = Field(default=4, ge=1)
    limit: int | None = Field(default=None, ge=1)
    backend: BackendSection = BackendSection()
    output_dir: Path = Path("runs")
    templates_dir: Path | None = None

    @field_validator("k_shot")
    @classmethod
    def _k_non_negative(cls, v):
        if any(k < 0 for k in v):
            raise ValueError("k_shot values must be non-negative")
        return v


class ReferenceSection(DatasetSection):
    pass


class ContaminationConfig(_Section):
    model: str = "gpt-4o-mini-2024-07-18"
    backend: BackendSection = BackendSection()
    probes: list[ProbeSpec] = []
    references: dict[str, ReferenceSection] = {}
    min_match_chars: int = Field(default=40, ge=1)
    min_attribute_hits: int = Field(default=2, ge=1)
    attribute_names: list[str] = []
    refusal_patterns_file: Path | None = None
    output: Path = Path("contamination.json")
    templates_dir: Path | None = None

    def rules(self) -> ContaminationRules:
        patterns = DEFAULT_REFUSAL_PATTERNS
        if self.refusal_patterns_file is not None:
            patterns = load_refusal_patterns(self.refusal_patterns_file)
        return ContaminationRules(
            min_match_chars=self.min_match_chars,
            min_attribute_hits=self.min_attribute_hits,
            refusal_patterns=tuple(patterns),
            attribute_names=tuple(self.attribute_names),
        )


def _resolve_paths(model: BaseModel, base: Path) -> None:
    for name in type(model).model_fields:
        value = getattr(model, name)
        if isinstance(value, Path) and not value.is_absolute():
            object.__setattr__(model, name, base / value)
        elif isinstance(value, BaseModel):
            _resolve_paths(value, base)
        elif isinstance(value, dict):
            for item in value.values():
                if isinstance(item, BaseModel):
                    _resolve_paths(item, base)


def _read_yaml(path) -> tuple[dict, Path]:
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return interpolate_env(raw), path.resolve().parent


def _validate(cls, raw: dict, source) -> Any:
    try:
        return cls.model_validate(raw)
    except ValidationError as exc:
        raise ConfigError(f"{source}: {exc}") from exc


def load_config(path, overrides: dict | None = None) -> ExperimentConfig:
    raw, base = _read_yaml(path)
    for dotted, value in (overrides or {}).items():
        target = raw
        *parents, leaf = dotted.split(".")
        for p in parents:
            target = target.setdefault(p, {})
        target[leaf] = value
    cfg = _validate(ExperimentConfig, raw, path)
    _resolve_paths(cfg, base)
    return cfg


def load_contamination_config(path) -> ContaminationConfig:
    raw, base = _read_yaml(path)
    cfg = _validate(ContaminationConfig, raw, path)
    _resolve_paths(cfg, base)
    return cfg


def config_hash(cfg: BaseModel) -> str:
    """SHA-256 over the config minus secrets and output location."""
    doc = cfg.model_dump(mode="json", exclude={"output_dir": True, "output": True, "backend": {"api_key"}})
    return hashlib.sha256(json.dumps(doc, sort_keys=True).encode("utf-8")).hexdigest()
