"""Dataset-contamination probe: ask the model to regenerate a dataset and
categorize what comes back.

Verdicts, highest precedence first:

``contaminated``
    the normalized response contains a run of at least ``min_match_chars``
    characters copied from the normalized text of some reference instance
``suspicious``
    the response names at least ``min_attribute_hits`` of the dataset's
    column names (whole-word, case-sensitive) without copying instance text
``safety_filtered``
    the response is empty or matches a refusal pattern (case-insensitive
    substring)
``clean``
    none of the above

Refusal patterns can be loaded from a plain-text file, one pattern per line;
blank lines and lines starting with ``#`` are ignored.
"""

from __future__ import annotations

import json
import re
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

from .dataset import Dataset
from .errors import AuthError, LLMError
from .llm_client import CONTAMINATION_SAMPLING, LLMClient, Sampling
from .normalize import normalize_text
from .prompts import DEFAULT_TEMPLATES, PromptTemplates, render_contamination

__all__ = [
    "DEFAULT_REFUSAL_PATTERNS",
    "VERDICTS",
    "ContaminationRules",
    "ContaminationVerdict",
    "ProbeSpec",
    "battery",
    "categorize",
    "load_refusal_patterns",
    "probe",
    "write_report",
]

VERDICTS = ("contaminated", "suspicious", "safety_filtered", "clean")
REPORT_SCHEMA = "htcprompt.contamination/1"

DEFAULT_REFUSAL_PATTERNS = (
    "i'm sorry",
    "i am sorry",
    "i cannot",
    "i can't",
    "i can not",
    "i'm unable",
    "i am unable",
    "i'm not able",
    "i am not able",
    "cannot provide",
    "can't provide",
    "cannot assist",
    "can't assist",
    "cannot help with",
    "can't help with",
    "not able to provide",
    "unable to provide",
    "as an ai",
)


def load_refusal_patterns(path) -> tuple[str, ...]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    return tuple(line.strip() for line in lines if line.strip() and not line.lstrip().startswith("#"))


@dataclass(frozen=True)
class ContaminationRules:
    min_match_chars: int = 40
    min_attribute_hits: int = 2
    refusal_patterns: tuple[str, ...] = DEFAULT_REFUSAL_PATTERNS
    attribute_names: tuple[str, ...] = ()  # used when no reference dataset is supplied


@dataclass(frozen=True)
class ProbeSpec:
    dataset_name: str
    format: str
    split: str | None = None
    reference: str | None = None  # key into the references mapping


@dataclass(frozen=True)
class ContaminationVerdict:
    dataset_name: str
    split: str | None
    format: str
    verdict: str | None
    evidence: str | None
    raw_response: str
    prompt: str = ""
    error: str | None = None

    def to_dict(self) -> dict:
        return asdict(self)


def _longest_copied_run(response_norm: str, instance_norm: str, k: int) -> str | None:
    if len(instance_norm) < k or len(response_norm) < k:
        return None
    windows = {response_norm[i : i + k] for i in range(len(response_norm) - k + 1)}
    best = None
    i = 0
    while i + k <= len(instance_norm):
        if instance_norm[i : i + k] in windows:
            j = i + k
            while j < len(instance_norm) and instance_norm[i : j + 1] in response_norm:
                j += 1
            run = instance_norm[i:j]
            if best is None or len(run) > len(best):
                best = run
            i = j
        else:
            i += 1
    return best


def categorize(
    response: str,
    reference: Dataset | None = None,
    rules: ContaminationRules = ContaminationRules(),
) -> tuple[str, str | None]:
    """Return ``(verdict, evidence)`` for one response; a pure function."""
    response_norm = normalize_text(response)
    if reference is not None:
        for doc in reference.documents:
            run = _longest_copied_run(response_norm, normalize_text(doc.text), rules.min_match_chars)
            if run is not None:
                return "contaminated", run
    attributes = reference.columns if reference is not None and reference.columns else rules.attribute_names
    hits = [a for a in dict.fromkeys(attributes) if re.search(rf"(?<!\w){re.escape(a)}(?!\w)", response)]
    if len(hits) >= rules.min_attribute_hits:
        return "suspicious", ",".join(hits)
    if not response.strip():
        return "safety_filtered", "empty-response"
    lowered = response.lower()
    for pattern in rules.refusal_patterns:
        if pattern.lower() in lowered:
            return "safety_filtered", pattern
    return "clean", None


def probe(
    dataset_name: str,
    split: str | None,
    format: str,
    client: LLMClient,
    reference: Dataset | None = None,
    *,
    model: str = "gpt-4o-mini-2024-07-18",
    rules: ContaminationRules = ContaminationRules(),
    sampling: Sampling = CONTAMINATION_SAMPLING,
    templates: PromptTemplates = DEFAULT_TEMPLATES,
) -> ContaminationVerdict:
    prompt = render_contamination(dataset_name, split, format, templates)
    response = client.complete(sampling.request(model, prompt))
    verdict, evidence = categorize(response.text, reference, rules)
    return ContaminationVerdict(dataset_name, split, format, verdict, evidence, response.text, prompt)


def battery(
    specs: Sequence[ProbeSpec],
    client: LLMClient,
    references: Mapping[str, Dataset] | None = None,
    *,
    model: str = "gpt-4o-mini-2024-07-18",
    rules: ContaminationRules = ContaminationRules(),
    templates: PromptTemplates = DEFAULT_TEMPLATES,
) -> list[ContaminationVerdict]:
    """Run the probes one after another; a failed probe is recorded, not raised.

    Authentication failures still abort the battery.
    """
    references = references or {}
    results = []
    for spec in specs:
        key = spec.reference if spec.reference is not None else spec.dataset_name
        reference = references.get(key)
        try:
            results.append(
                probe(
                    spec.dataset_name,
                    spec.split,
                    spec.format,
                    client,
                    reference,
                    model=model,
                    rules=rules,
                    templates=templates,
                )
            )
        except AuthError:
            raise
        except LLMError as exc:
            prompt = render_contamination(spec.dataset_name, spec.split, spec.format, templates)
            results.append(
                ContaminationVerdict(
                    spec.dataset_name,
                    spec.split,
                    spec.format,
                    verdict=None,
                    evidence=None,
                    raw_response="",
                    prompt=prompt,
                    error=f"{type(exc).__name__}: {exc}",
                )
            )
    return results


def write_report(verdicts: Sequence[ContaminationVerdict], path, **metadata) -> dict:
    doc = {
        "schema": REPORT_SCHEMA,
        **metadata,
        "probes": [v.to_dict() for v in verdicts],
        "summary": {v: sum(r.verdict == v for r in verdicts) for v in VERDICTS} | {"failed": sum(r.error is not None for r in verdicts)},
    }
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=2, sort_keys=True, ensure_ascii=False) + "\n", encoding="utf-8")
    return doc
