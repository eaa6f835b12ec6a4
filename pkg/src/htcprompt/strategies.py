"""Classification strategies and the experiment driver.

DL
    One request listing every leaf. The completion is snapped to the nearest
    leaf name and the rest of the path comes from that leaf's ancestors.
DH
    One request listing every root-to-leaf path as ``A > B > C``. The
    completion is parsed level by level. Unless that yields a complete path
    whose segments all match after normalization, the whole completion is
    snapped to the nearest full path string instead.
TMH
    One request per depth. Step d offers only the children of the label
    chosen at step d-1, and each completion is snapped onto that candidate list.

Few-shot examples are drawn once per run and shared by every test document.

Predictions JSONL: the first line is a header
``{"schema": "htcprompt.predictions/1", ...run metadata...}``; each following
line is one document record (see :meth:`Prediction.to_dict`).
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .cost import CostReport, PriceTable, aggregate
from .dataset import Dataset, LabeledDocument, sample_few_shot
from .errors import AuthError, EmptyString, LLMError, SchemaMismatch
from .llm_client import ChatResponse, LLMClient, RequestTag, Sampling
from .metrics import MetricsReport, score
from .normalize import resolve_label
from .prompts import DEFAULT_TEMPLATES, PromptTemplates, render_dh, render_dl, render_tmh_step
from .taxonomy import Taxonomy

__all__ = [
    "PREDICTIONS_SCHEMA",
    "STRATEGIES",
    "ExperimentResult",
    "Prediction",
    "Resolution",
    "RunConfig",
    "Usage",
    "classify",
    "classify_dh",
    "classify_dl",
    "classify_tmh",
    "read_predictions",
    "reinterpret",
    "run_experiment",
    "write_predictions",
]

STRATEGIES = ("DL", "DH", "TMH")
FEW_SHOT_GRID = (0, 1, 3, 5, 10, 20)
PREDICTIONS_SCHEMA = "htcprompt.predictions/1"


@dataclass(frozen=True)
class RunConfig:
    strategy: str
    k_shot: int = 0
    seed: int = 0
    model: str = "gpt-4o-mini-2024-07-18"
    temperature: float = 1.0
    top_p: float = 1.0
    max_completion_tokens: int | None = None
    prices: PriceTable = field(default_factory=PriceTable)
    concurrency: int = 1

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}; expected one of {STRATEGIES}")
        if self.k_shot < 0:
            raise ValueError("k_shot must be non-negative")
        if self.concurrency < 1:
            raise ValueError("concurrency must be at least 1")

    @property
    def sampling(self) -> Sampling:
        return Sampling(self.temperature, self.top_p, self.max_completion_tokens)


@dataclass(frozen=True)
class Usage:
    prompt_tokens: int = 0
    completion_tokens: int = 0
    provenance: str = "estimated"  # "api-reported", "estimated" or "mixed"

    def add(self, response: ChatResponse, first: bool) -> "Usage":
        origin = "estimated" if response.usage_estimated else "api-reported"
        provenance = origin if first or origin == self.provenance else "mixed"
        return Usage(
            self.prompt_tokens + response.prompt_tokens,
            self.completion_tokens + response.completion_tokens,
            provenance,
        )


@dataclass(frozen=True)
class Resolution:
    """One snap of completion text onto a candidate.

    ``depth`` is the label depth, or ``"full"`` for DH whole-path fallback.
    """

    depth: int | str
    label: str
    distance: int
    exact: bool

    def to_dict(self) -> dict:
        return {"depth": self.depth, "label": self.label, "distance": self.distance, "exact": self.exact}


@dataclass(frozen=True)
class Prediction:
    doc_id: str
    strategy: str
    predicted: tuple[str, ...]
    gold: tuple[str, ...] = ()
    raw_outputs: tuple[tuple[int | str, str], ...] = ()
    resolution: tuple[Resolution, ...] = ()
    usage: Usage | None = None
    steps: int = 0
    error: str | None = None

    @property
    def failed(self) -> bool:
        return self.error is not None

    def to_dict(self) -> dict:
        return {
            "doc_id": self.doc_id,
            "strategy": self.strategy,
            "gold": list(self.gold),
            "predicted": list(self.predicted),
            "resolution": [r.to_dict() for r in self.resolution],
            "raw_outputs": [{"depth": d, "text": t} for d, t in self.raw_outputs],
            "usage": None
            if self.usage is None
            else {
                "prompt_tokens": self.usage.prompt_tokens,
                "completion_tokens": self.usage.completion_tokens,
                "provenance": self.usage.provenance,
            },
            "steps": self.steps,
            "error": self.error,
        }

    @classmethod
    def from_dict(cls, doc: dict) -> "Prediction":
        usage = doc.get("usage")
        return cls(
            doc_id=doc["doc_id"],
            strategy=doc["strategy"],
            predicted=tuple(doc["predicted"]),
            gold=tuple(doc.get("gold", ())),
            raw_outputs=tuple((r["depth"], r["text"]) for r in doc.get("raw_outputs", ())),
            resolution=tuple(Resolution(**r) for r in doc.get("resolution", ())),
            usage=None if usage is None else Usage(**usage),
            steps=doc.get("steps", 0),
            error=doc.get("error"),
        )


# --------------------------------------------------------------------------
# interpretation of completions (shared by live runs and re-scoring)
# --------------------------------------------------------------------------
def _leaf_by_name(t: Taxonomy) -> dict[str, str]:
    """First leaf (in taxonomy order) carrying each display name."""
    index: dict[str, str] = {}
    for leaf in t.leaves():
        index.setdefault(leaf.name, leaf.id)
    return index


def interpret_dl(text: str, t: Taxonomy) -> tuple[tuple[str, ...], tuple[Resolution, ...]]:
    by_name = _leaf_by_name(t)
    resolved = resolve_label(text, list(by_name))
    leaf = by_name[resolved.label]
    path = t.ancestor_path(leaf)
    return path, (Resolution(len(path), resolved.label, resolved.distance, resolved.exact),)


def interpret_dh(text: str, t: Taxonomy) -> tuple[tuple[str, ...], tuple[Resolution, ...]]:
    try:
        parsed = t.parse_path(text)
    except EmptyString:
        parsed = None
    if (
        parsed is not None
        and not parsed.unresolved
        and parsed.path
        and t.node(parsed.path[-1]).is_leaf
        and all(seg.resolved.exact for seg in parsed.segments)
    ):
        resolutions = tuple(
            Resolution(depth, seg.resolved.label, seg.resolved.distance, seg.resolved.exact)
            for depth, seg in enumerate(parsed.segments, 1)
        )
        return parsed.path, resolutions
    by_string = {t.format_path(p): p for p in t.leaf_paths()}
    resolved = resolve_label(text, list(by_string))
    return by_string[resolved.label], (Resolution("full", resolved.label, resolved.distance, resolved.exact),)


def tmh_candidates(t: Taxonomy, parent: str | None):
    return t.root_nodes() if parent is None else t.children(parent)


def interpret_tmh_step(text: str, t: Taxonomy, parent: str | None, depth: int) -> tuple[str, Resolution]:
    candidates = tmh_candidates(t, parent)
    resolved = resolve_label(text, [c.name for c in candidates])
    node = next(c for c in candidates if c.name == resolved.label)
    return node.id, Resolution(depth, resolved.label, resolved.distance, resolved.exact)


def reinterpret(pred: Prediction, t: Taxonomy) -> Prediction:
    """Recompute predicted labels and resolutions from stored raw completions."""
    if pred.failed and not pred.raw_outputs:
        return pred
    if pred.strategy in ("DL", "DH"):
        if not pred.raw_outputs:
            return pred
        interpret = interpret_dl if pred.strategy == "DL" else interpret_dh
        path, resolutions = interpret(pred.raw_outputs[0][1], t)
    else:
        path, resolutions = [], []
        parent = None
        for depth, text in pred.raw_outputs:
            if parent is not None and t.node(parent).is_leaf:
                break
            node, res = interpret_tmh_step(text, t, parent, int(depth))
            path.append(node)
            resolutions.append(res)
            parent = node
    return Prediction(
        doc_id=pred.doc_id,
        strategy=pred.strategy,
        predicted=tuple(t.names(path)),
        gold=pred.gold,
        raw_outputs=pred.raw_outputs,
        resolution=tuple(resolutions),
        usage=pred.usage,
        steps=pred.steps,
        error=pred.error,
    )


# --------------------------------------------------------------------------
# strategies
# --------------------------------------------------------------------------
def _failed(doc, strategy, exc, **partial) -> Prediction:
    return Prediction(doc_id=doc.doc_id, strategy=strategy, predicted=(), gold=doc.labels, error=f"{type(exc).__name__}: {exc}", **partial)


def classify_dl(
    doc: LabeledDocument,
    t: Taxonomy,
    few_shot: Sequence[LabeledDocument],
    client: LLMClient,
    config: RunConfig,
    templates: PromptTemplates = DEFAULT_TEMPLATES,
) -> Prediction:
    prompt = render_dl(t, few_shot, doc.text, templates)
    return _single_call(doc, t, prompt.text, "DL", interpret_dl, client, config)


def classify_dh(
    doc: LabeledDocument,
    t: Taxonomy,
    few_shot: Sequence[LabeledDocument],
    client: LLMClient,
    config: RunConfig,
    templates: PromptTemplates = DEFAULT_TEMPLATES,
) -> Prediction:
    prompt = render_dh(t, few_shot, doc.text, templates)
    return _single_call(doc, t, prompt.text, "DH", interpret_dh, client, config)


def _single_call(doc, t, prompt_text, strategy, interpret, client, config) -> Prediction:
    request = config.sampling.request(config.model, prompt_text, RequestTag(doc.doc_id, strategy))
    try:
        response = client.complete(request)
    except AuthError:
        raise
    except LLMError as exc:
        return _failed(doc, strategy, exc, steps=1)
    path, resolutions = interpret(response.text, t)
    return Prediction(
        doc_id=doc.doc_id,
        strategy=strategy,
        predicted=tuple(t.names(path)),
        gold=doc.labels,
        raw_outputs=(("full", response.text),),
        resolution=resolutions,
        usage=Usage().add(response, first=True),
        steps=1,
    )


def classify_tmh(
    doc: LabeledDocument,
    t: Taxonomy,
    few_shot: Sequence[LabeledDocument],
    client: LLMClient,
    config: RunConfig,
    templates: PromptTemplates = DEFAULT_TEMPLATES,
) -> Prediction:
    """Walk the taxonomy top-down, one request per depth.

    Stops at a leaf or at the taxonomy's maximum depth. A failed request
    keeps the labels chosen so far and marks the document failed.
    """
    path: list[str] = []
    raw: list[tuple[int, str]] = []
    resolutions: list[Resolution] = []
    usage = Usage()
    parent = None
    for depth in range(1, t.max_depth + 1):
        if parent is not None and t.node(parent).is_leaf:
            break
        prompt = render_tmh_step(t, parent, few_shot, doc.text, depth, templates)
        request = config.sampling.request(config.model, prompt.text, RequestTag(doc.doc_id, "TMH", depth))
        try:
            response = client.complete(request)
        except AuthError:
            raise
        except LLMError as exc:
            return Prediction(
                doc_id=doc.doc_id,
                strategy="TMH",
                predicted=tuple(t.names(path)),
                gold=doc.labels,
                raw_outputs=tuple(raw),
                resolution=tuple(resolutions),
                usage=usage if raw else None,
                steps=depth,
                error=f"{type(exc).__name__}: {exc}",
            )
        usage = usage.add(response, first=not raw)
        raw.append((depth, response.text))
        node, res = interpret_tmh_step(response.text, t, parent, depth)
        path.append(node)
        resolutions.append(res)
        parent = node
    return Prediction(
        doc_id=doc.doc_id,
        strategy="TMH",
        predicted=tuple(t.names(path)),
        gold=doc.labels,
        raw_outputs=tuple(raw),
        resolution=tuple(resolutions),
        usage=usage,
        steps=len(raw),
    )


CLASSIFIERS = {"DL": classify_dl, "DH": classify_dh, "TMH": classify_tmh}


def classify(doc, t, few_shot, client, config, templates=DEFAULT_TEMPLATES) -> Prediction:
    return CLASSIFIERS[config.strategy](doc, t, few_shot, client, config, templates)


# --------------------------------------------------------------------------
# experiment driver
# --------------------------------------------------------------------------
@dataclass(frozen=True)
class ExperimentResult:
    predictions: tuple[Prediction, ...]
    metrics: MetricsReport
    cost: CostReport
    few_shot_ids: tuple[str, ...]

    @property
    def n_failed(self) -> int:
        return sum(p.failed for p in self.predictions)


def run_experiment(
    dataset: Dataset,
    config: RunConfig,
    client: LLMClient,
    templates: PromptTemplates = DEFAULT_TEMPLATES,
    documents: Iterable[LabeledDocument] | None = None,
) -> ExperimentResult:
    """Classify every test document and score the run.

    Documents run concurrently up to ``config.concurrency``; results come
    back in dataset order. An AuthError aborts the run; any other client
    error marks just that document as failed.
    """
    t = dataset.taxonomy
    few_shot = sample_few_shot(dataset, config.k_shot, config.seed)
    docs = list(dataset.test if documents is None else documents)
    classifier = CLASSIFIERS[config.strategy]

    def work(doc):
        return classifier(doc, t, few_shot, client, config, templates)

    if config.concurrency == 1:
        predictions = [work(doc) for doc in docs]
    else:
        pool = ThreadPoolExecutor(max_workers=config.concurrency, thread_name_prefix="htc")
        try:
            futures = [pool.submit(work, doc) for doc in docs]
            predictions = [f.result() for f in futures]
        except BaseException:
            pool.shutdown(wait=True, cancel_futures=True)
            raise
        pool.shutdown(wait=True)

    metrics = score(predictions, dataset.golds(), t)
    cost = aggregate(predictions, config.prices)
    return ExperimentResult(tuple(predictions), metrics, cost, tuple(d.doc_id for d in few_shot))


# --------------------------------------------------------------------------
# predictions JSONL
# --------------------------------------------------------------------------
def write_predictions(path, predictions: Sequence[Prediction], header: dict | None = None) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    head = {"schema": PREDICTIONS_SCHEMA, **(header or {})}
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        fh.write(json.dumps(head, sort_keys=True, ensure_ascii=False) + "\n")
        for p in predictions:
            fh.write(json.dumps(p.to_dict(), sort_keys=True, ensure_ascii=False) + "\n")


def read_predictions(path) -> tuple[dict, list[Prediction]]:
    """Read a predictions file; errors name the offending line number."""
    path = Path(path)
    with path.open(encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise SchemaMismatch(f"{path}: empty predictions file")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise SchemaMismatch(f"{path}:1: header is not valid JSON ({exc.msg})") from exc
    if not isinstance(header, dict) or header.get("schema") != PREDICTIONS_SCHEMA:
        raise SchemaMismatch(f"{path}:1: expected schema {PREDICTIONS_SCHEMA!r}")
    preds = []
    for lineno, line in enumerate(lines[1:], 2):
        if not line.strip():
            continue
        try:
            preds.append(Prediction.from_dict(json.loads(line)))
        except json.JSONDecodeError as exc:
            raise SchemaMismatch(f"{path}:{lineno}: invalid JSON ({exc.msg})") from exc
        except (KeyError, TypeError, ValueError) as exc:
            raise SchemaMismatch(f"{path}:{lineno}: malformed prediction record ({exc})") from exc
    return header, preds
