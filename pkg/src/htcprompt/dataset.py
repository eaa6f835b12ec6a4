"""Labeled corpora: CSV ingestion, holdout splits and seeded few-shot sampling.

Files are UTF-8 CSV with a header row. The schema names one text column and
one label column per depth, shallowest first. Example schemas::

    WOS: text_column="text", label_columns=["domain", "keyword"]
    APR: text_column="text", label_columns=["cat1", "cat2", "cat3"]

Document ids are ``"{dataset name}:{row}"`` where ``row`` is the 1-based data
row index in the source file (header excluded). When train and test come from
separate files the split name is added: ``"{name}-test:{row}"``.
"""

from __future__ import annotations

import csv
import random
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

from .errors import (
    DatasetIOError,
    EmptyLabelCell,
    EmptyTextCell,
    KTooLarge,
    MissingColumn,
    NTooLarge,
)
from .taxonomy import LabelPath, Taxonomy, build_taxonomy

__all__ = [
    "APR_SCHEMA",
    "WOS_SCHEMA",
    "CsvSchema",
    "Dataset",
    "LabeledDocument",
    "load_csv",
    "read_documents",
    "sample_few_shot",
    "split_holdout",
]


@dataclass(frozen=True)
class CsvSchema:
    text_column: str
    label_columns: tuple[str, ...]
    split_column: str | None = None
    train_value: str = "train"
    test_value: str = "test"

    def __post_init__(self):
        object.__setattr__(self, "label_columns", tuple(self.label_columns))
        if not self.label_columns:
            raise ValueError("schema needs at least one label column")

    @property
    def columns(self) -> tuple[str, ...]:
        return (self.text_column, *self.label_columns)


WOS_SCHEMA = CsvSchema("text", ("domain", "keyword"))
APR_SCHEMA = CsvSchema("text", ("cat1", "cat2", "cat3"))


@dataclass(frozen=True)
class LabeledDocument:
    doc_id: str
    text: str
    labels: tuple[str, ...]  # gold label names, root first

    def gold_path(self, taxonomy: Taxonomy) -> LabelPath:
        return taxonomy.path_for_names(self.labels)


@dataclass(frozen=True)
class Dataset:
    name: str
    train: tuple[LabeledDocument, ...]
    test: tuple[LabeledDocument, ...]
    taxonomy: Taxonomy
    columns: tuple[str, ...] = field(default=())

    def __post_init__(self):
        overlap = {d.doc_id for d in self.train} & {d.doc_id for d in self.test}
        if overlap:
            raise ValueError(f"train/test overlap on {len(overlap)} doc ids")

    @classmethod
    def from_documents(cls, name, train, test, columns=()) -> "Dataset":
        train, test = tuple(train), tuple(test)
        taxonomy = build_taxonomy(d.labels for d in (*train, *test))
        return cls(name, train, test, taxonomy, tuple(columns))

    @property
    def documents(self) -> tuple[LabeledDocument, ...]:
        return self.train + self.test

    def golds(self) -> dict[str, tuple[str, ...]]:
        return {d.doc_id: d.labels for d in self.documents}


def read_documents(path, schema: CsvSchema, prefix: str) -> list[LabeledDocument]:
    """Read one CSV file into documents, rejecting rows with empty cells.

    All offending rows are collected before raising so the error lists every
    bad row number at once.
    """
    return [doc for doc, _ in _parse(path, schema, prefix)]


def _parse(path, schema: CsvSchema, prefix: str):
    parsed, empty_labels, empty_text = [], [], []
    for index, row in _read_rows(path, schema):
        text = (row.get(schema.text_column) or "").strip()
        labels = tuple((row.get(c) or "").strip() for c in schema.label_columns)
        if not all(labels):
            empty_labels.append(index)
            continue
        if not text:
            empty_text.append(index)
            continue
        parsed.append((LabeledDocument(f"{prefix}:{index}", text, labels), row))
    if empty_labels:
        raise EmptyLabelCell(empty_labels, schema.label_columns)
    if empty_text:
        raise EmptyTextCell("empty text cell in row(s) " + ", ".join(map(str, empty_text)))
    return parsed


def _read_rows(path, schema: CsvSchema):
    path = Path(path)
    try:
        with path.open(newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            header = reader.fieldnames or []
            needed = list(schema.columns)
            if schema.split_column:
                needed.append(schema.split_column)
            missing = [c for c in needed if c not in header]
            if missing:
                raise MissingColumn(f"{path}: missing column(s) {missing}; header is {header}")
            return [(i, row) for i, row in enumerate(reader, 1)]
    except (OSError, UnicodeDecodeError) as exc:
        raise DatasetIOError(f"cannot read {path}: {exc}") from exc


def split_holdout(docs: Sequence, n_test: int, seed: int):
    """Seeded partition into ``(train, test)``; each part keeps source order."""
    if not 0 <= n_test < len(docs):
        raise NTooLarge(f"n_test={n_test} must be below the number of documents ({len(docs)})")
    order = list(range(len(docs)))
    random.Random(seed).shuffle(order)
    test_idx = set(order[:n_test])
    train = [d for i, d in enumerate(docs) if i not in test_idx]
    test = [d for i, d in enumerate(docs) if i in test_idx]
    return train, test


def load_csv(
    path,
    schema: CsvSchema,
    name: str | None = None,
    *,
    test_path=None,
    n_test: int | None = None,
    n_train: int | None = None,
    seed: int = 0,
) -> Dataset:
    """Load a dataset from CSV.

    The train/test partition comes from, in order of precedence: the schema's
    split column, a separate ``test_path`` file, or a seeded holdout of
    ``n_test`` rows. Without any of these every row is a test document and the
    train split is empty (zero-shot only). ``n_train`` optionally subsamples
    the train split with the same seed.
    """
    name = name or Path(path).stem
    if schema.split_column:
        parsed = [(d, (row[schema.split_column] or "").strip()) for d, row in _parse(path, schema, name)]
        train = [d for d, split in parsed if split == schema.train_value]
        test = [d for d, split in parsed if split == schema.test_value]
    elif test_path is not None:
        train = read_documents(path, schema, name)
        test = read_documents(test_path, schema, f"{name}-test")
    elif n_test is not None:
        train, test = split_holdout(read_documents(path, schema, name), n_test, seed)
    else:
        train, test = [], read_documents(path, schema, name)
    if n_train is not None and n_train < len(train):
        keep = set(random.Random(seed + 1).sample(range(len(train)), n_train))
        train = [d for i, d in enumerate(train) if i in keep]
    return Dataset.from_documents(name, train, test, schema.columns)


def sample_few_shot(d: Dataset, k: int, seed: int) -> list[LabeledDocument]:
    """Draw ``k`` train documents uniformly without replacement.

    The draw is a prefix of one seeded permutation of the train split, so for
    a fixed seed the k=1 sample is contained in the k=3 sample and so on.
    """
    if k < 0:
        raise ValueError("k must be non-negative")
    if k > len(d.train):
        raise KTooLarge(f"k={k} exceeds the {len(d.train)} available train documents")
    order = list(range(len(d.train)))
    random.Random(seed).shuffle(order)
    return [d.train[i] for i in order[:k]]
