"""Token usage aggregation and currency estimates.

Token counts are integers and money is :class:`decimal.Decimal`; binary
floats only appear in the per-document averages.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from decimal import Decimal
from typing import Mapping, Sequence

from .errors import MissingUsage, NegativePrice

__all__ = ["CostReport", "PriceTable", "aggregate", "estimate_cost", "format_cost_table"]

MILLION = Decimal(1_000_000)


def _decimal(value) -> Decimal:
    if isinstance(value, Decimal):
        return value
    if isinstance(value, float):
        value = repr(value)
    return Decimal(value)


@dataclass(frozen=True)
class PriceTable:
    """Currency per million input (prompt) and output (completion) tokens."""

    input_per_million: Decimal = Decimal(0)
    output_per_million: Decimal = Decimal(0)

    def __post_init__(self):
        object.__setattr__(self, "input_per_million", _decimal(self.input_per_million))
        object.__setattr__(self, "output_per_million", _decimal(self.output_per_million))
        if self.input_per_million < 0 or self.output_per_million < 0:
            raise NegativePrice(f"prices must be non-negative: {self}")

    def to_dict(self) -> dict:
        return {"input_per_million": str(self.input_per_million), "output_per_million": str(self.output_per_million)}


@dataclass(frozen=True)
class CostReport:
    n_documents: int
    n_requests: int
    total_prompt_tokens: int
    total_completion_tokens: int
    avg_prompt_tokens: float | None
    avg_completion_tokens: float | None
    usage_provenance: str  # "api-reported", "estimated" or "mixed"
    estimated_cost: Decimal | None = None

    def to_dict(self) -> dict:
        return {
            "n_documents": self.n_documents,
            "n_requests": self.n_requests,
            "total_prompt_tokens": self.total_prompt_tokens,
            "total_completion_tokens": self.total_completion_tokens,
            "avg_prompt_tokens": self.avg_prompt_tokens,
            "avg_completion_tokens": self.avg_completion_tokens,
            "usage_provenance": self.usage_provenance,
            "estimated_cost": None if self.estimated_cost is None else str(self.estimated_cost),
        }

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, **kwargs)

    @classmethod
    def from_dict(cls, doc: Mapping) -> "CostReport":
        cost = doc.get("estimated_cost")
        return cls(
            n_documents=doc["n_documents"],
            n_requests=doc["n_requests"],
            total_prompt_tokens=doc["total_prompt_tokens"],
            total_completion_tokens=doc["total_completion_tokens"],
            avg_prompt_tokens=doc["avg_prompt_tokens"],
            avg_completion_tokens=doc["avg_completion_tokens"],
            usage_provenance=doc["usage_provenance"],
            estimated_cost=None if cost is None else Decimal(cost),
        )


def aggregate(preds: Sequence, price: PriceTable | None = None) -> CostReport:
    """Sum and average usage over the scored (non-failed) predictions.

    A prediction's usage already sums every request made for it, so a TMH
    document contributes all of its per-depth steps as one figure.
    """
    scored = [p for p in preds if not p.failed]
    provenances = set()
    total_prompt = total_completion = requests = 0
    for p in scored:
        if p.usage is None:
            raise MissingUsage(f"prediction {p.doc_id!r} carries no token usage")
        total_prompt += p.usage.prompt_tokens
        total_completion += p.usage.completion_tokens
        provenances.add(p.usage.provenance)
        requests += p.steps
    if not provenances:
        provenance = "estimated"
    elif len(provenances) == 1:
        provenance = provenances.pop()
    else:
        provenance = "mixed"
    n = len(scored)
    report = CostReport(
        n_documents=n,
        n_requests=requests,
        total_prompt_tokens=total_prompt,
        total_completion_tokens=total_completion,
        avg_prompt_tokens=total_prompt / n if n else None,
        avg_completion_tokens=total_completion / n if n else None,
        usage_provenance=provenance,
    )
    if price is not None:
        report = replace(report, estimated_cost=estimate_cost(report, price))
    return report


def estimate_cost(report: CostReport, price: PriceTable) -> Decimal:
    if price.input_per_million < 0 or price.output_per_million < 0:
        raise NegativePrice("prices must be non-negative")
    return (
        report.total_prompt_tokens * price.input_per_million / MILLION
        + report.total_completion_tokens * price.output_per_million / MILLION
    )


def format_cost_table(cells: Mapping[tuple[str, int], CostReport], dataset: str = "") -> str:
    """Strategy x k grid of average prompt tokens, then completion tokens."""
    if not cells:
        return ""
    strategies = list(dict.fromkeys(s for s, _ in cells))
    ks = sorted({k for _, k in cells})

    def fmt(v):
        return "-" if v is None else f"{v:.2f}"

    header = ["dataset", "prompt", *map(str, ks)]
    rows = []
    for section, attr in (("prompt tokens", "avg_prompt_tokens"), ("completion tokens", "avg_completion_tokens")):
        rows.append([section])
        for i, s in enumerate(strategies):
            row = [dataset if i == 0 else "", s]
            row += [fmt(getattr(cells[(s, k)], attr)) if (s, k) in cells else "-" for k in ks]
            rows.append(row)
    widths = [max(len(r[i]) for r in [header, *rows] if len(r) > 1) for i in range(len(header))]
    out = []
    for r in [header, *rows]:
        if len(r) == 1:
            out.append(f"-- {r[0]} --")
            continue
        out.append("  ".join(c.ljust(w) if i < 2 else c.rjust(w) for i, (c, w) in enumerate(zip(r, widths))).rstrip())
    return "\n".join(out)
