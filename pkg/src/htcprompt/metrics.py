"""Per-depth and parent-conditional accuracy.

A document is *correct through depth d* when its predicted labels equal the
gold labels at every depth 1..d after :func:`normalize_text` on both sides.
``ACC_d`` is that count over the number of scored documents, and the
conditional ``P(p_{d+1} | p_d)`` is ``correct_through[d+1] / correct_through[d]``,
so ``ACC_{d+1} = ACC_d * P(p_{d+1} | p_d)`` holds exactly in count arithmetic.

Reports also carry the *label-local* view: whether the depth-d label alone is
right, and the share of documents right at both d and d+1 among those right
at d. The two views agree whenever a correct child implies a correct parent
(always true for DL, which traces ancestors from the leaf); they differ when
a prediction gets a repeated leaf name right under the wrong parent.

Failed documents are excluded from every denominator and counted in
``n_failed``; ``accuracy_with_failures`` scores them as wrong instead.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from fractions import Fraction
from typing import Mapping, Sequence

from .errors import AlignmentMismatch, ReportDepthMismatch
from .normalize import normalize_text

__all__ = [
    "Conditional",
    "DepthScore",
    "MetricsReport",
    "ReportDiff",
    "compare_reports",
    "format_metrics_table",
    "score",
]


def _ratio(num: int, den: int) -> float | None:
    return num / den if den else None


@dataclass(frozen=True)
class DepthScore:
    depth: int
    correct: int
    accuracy: float | None
    correct_alone: int
    accuracy_alone: float | None
    accuracy_with_failures: float | None


@dataclass(frozen=True)
class Conditional:
    parent_depth: int
    numerator: int
    denominator: int
    value: float | None
    local_numerator: int
    local_denominator: int
    local_value: float | None

    @property
    def child_depth(self) -> int:
        return self.parent_depth + 1


@dataclass(frozen=True)
class MetricsReport:
    max_depth: int
    n_scored: int
    n_failed: int
    depths: tuple[DepthScore, ...]
    conditionals: tuple[Conditional, ...]

    def acc(self, depth: int) -> float | None:
        return self.depths[depth - 1].accuracy

    def acc_fraction(self, depth: int) -> Fraction | None:
        if not self.n_scored:
            return None
        return Fraction(self.depths[depth - 1].correct, self.n_scored)

    def conditional(self, parent_depth: int) -> float | None:
        return self.conditionals[parent_depth - 1].value

    def conditional_fraction(self, parent_depth: int) -> Fraction | None:
        c = self.conditionals[parent_depth - 1]
        return Fraction(c.numerator, c.denominator) if c.denominator else None

    def column_names(self) -> list[str]:
        names = ["ACC_1"]
        for d in range(1, self.max_depth):
            names += [f"P(p{d + 1}|p{d})", f"ACC_{d + 1}"]
        return names

    def columns(self, convention: str = "prefix") -> list[tuple[str, float | None]]:
        """Table-style columns: ACC_1, P(p2|p1), ACC_2, ...

        ``convention="local"`` reports label-local accuracy and the pairwise
        conditional instead of the path-prefix quantities.
        """
        if convention not in ("prefix", "local"):
            raise ValueError(f"unknown convention {convention!r}")
        local = convention == "local"

        def acc(d):
            s = self.depths[d - 1]
            return s.accuracy_alone if local else s.accuracy

        values = [acc(1)]
        for c in self.conditionals:
            values += [c.local_value if local else c.value, acc(c.child_depth)]
        return list(zip(self.column_names(), values))

    def to_dict(self) -> dict:
        return {
            "max_depth": self.max_depth,
            "n_scored": self.n_scored,
            "n_failed": self.n_failed,
            "depths": [asdict(d) for d in self.depths],
            "conditionals": [asdict(c) for c in self.conditionals],
        }

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, **kwargs)

    @classmethod
    def from_dict(cls, doc: Mapping) -> "MetricsReport":
        return cls(
            max_depth=doc["max_depth"],
            n_scored=doc["n_scored"],
            n_failed=doc["n_failed"],
            depths=tuple(DepthScore(**d) for d in doc["depths"]),
            conditionals=tuple(Conditional(**c) for c in doc["conditionals"]),
        )


def _matches(predicted: Sequence[str], gold: Sequence[str], depth_count: int) -> list[bool]:
    out = []
    for i in range(depth_count):
        if i < len(predicted) and i < len(gold):
            out.append(normalize_text(predicted[i]) == normalize_text(gold[i]))
        else:
            out.append(False)
    return out


def score(
    preds: Sequence,
    golds: Mapping[str, Sequence[str]],
    taxonomy=None,
    *,
    max_depth: int | None = None,
) -> MetricsReport:
    """Score prediction records against gold label names keyed by doc id.

    ``preds`` are objects with ``doc_id``, ``predicted`` (label names, root
    first) and ``failed``. The depth count comes from ``max_depth``, else the
    taxonomy, else the deepest gold path among the predictions.
    """
    if max_depth is None and taxonomy is not None:
        max_depth = taxonomy.max_depth
    seen = set()
    for p in preds:
        if p.doc_id in seen:
            raise AlignmentMismatch(f"duplicate prediction for {p.doc_id!r}")
        seen.add(p.doc_id)
        if p.doc_id not in golds:
            raise AlignmentMismatch(f"no gold labels for {p.doc_id!r}")
        own_gold = getattr(p, "gold", None)
        if own_gold and [normalize_text(g) for g in own_gold] != [normalize_text(g) for g in golds[p.doc_id]]:
            raise AlignmentMismatch(f"gold labels stored with {p.doc_id!r} disagree with the dataset")
    if max_depth is None:
        max_depth = max((len(golds[p.doc_id]) for p in preds), default=0)

    scored = [p for p in preds if not p.failed]
    n_failed = len(preds) - len(scored)
    through = [0] * max_depth
    alone = [0] * max_depth
    pair = [0] * max_depth  # right at d and d+1
    for p in scored:
        hits = _matches(p.predicted, golds[p.doc_id], max_depth)
        for i, hit in enumerate(hits):
            alone[i] += hit
            if i + 1 < max_depth:
                pair[i] += hit and hits[i + 1]
        for i in range(max_depth):
            if not hits[i]:
                break
            through[i] += 1

    n = len(scored)
    depths = tuple(
        DepthScore(
            depth=d + 1,
            correct=through[d],
            accuracy=_ratio(through[d], n),
            correct_alone=alone[d],
            accuracy_alone=_ratio(alone[d], n),
            accuracy_with_failures=_ratio(through[d], n + n_failed),
        )
        for d in range(max_depth)
    )
    conditionals = tuple(
        Conditional(
            parent_depth=d + 1,
            numerator=through[d + 1],
            denominator=through[d],
            value=_ratio(through[d + 1], through[d]),
            local_numerator=pair[d],
            local_denominator=alone[d],
            local_value=_ratio(pair[d], alone[d]),
        )
        for d in range(max_depth - 1)
    )
    return MetricsReport(max_depth, n, n_failed, depths, conditionals)


@dataclass(frozen=True)
class ReportDiff:
    columns: tuple[str, ...]
    a: tuple[float | None, ...]
    b: tuple[float | None, ...]
    delta: tuple[float | None, ...]

    def as_rows(self) -> list[tuple[str, float | None, float | None, float | None]]:
        return list(zip(self.columns, self.a, self.b, self.delta))


def compare_reports(a: MetricsReport, b: MetricsReport, convention: str = "prefix") -> ReportDiff:
    """Column-wise ``b - a``; a delta is None where either side is undefined."""
    if a.max_depth != b.max_depth:
        raise ReportDepthMismatch(f"cannot compare depth {a.max_depth} with depth {b.max_depth}")
    ca, cb = a.columns(convention), b.columns(convention)
    deltas = tuple(None if x is None or y is None else y - x for (_, x), (_, y) in zip(ca, cb))
    return ReportDiff(
        columns=tuple(name for name, _ in ca),
        a=tuple(v for _, v in ca),
        b=tuple(v for _, v in cb),
        delta=deltas,
    )


def _fmt(value: float | None) -> str:
    return "-" if value is None else f"{value:.3f}"


def format_metrics_table(rows: Sequence[tuple[str, int | str, MetricsReport]], convention: str = "prefix") -> str:
    """Aligned text table: Method, #(Few Shot), then the metric columns."""
    if not rows:
        return ""
    header = ["Method", "#(Few Shot)", *rows[0][2].column_names(), "n", "failed"]
    body = [
        [str(method), str(k), *(_fmt(v) for _, v in report.columns(convention)), str(report.n_scored), str(report.n_failed)]
        for method, k, report in rows
    ]
    widths = [max(len(r[i]) for r in [header, *body]) for i in range(len(header))]
    lines = ["  ".join(cell.ljust(w) if i < 2 else cell.rjust(w) for i, (cell, w) in enumerate(zip(r, widths))) for r in [header, *body]]
    lines.insert(1, "-" * len(lines[0]))
    return "\n".join(line.rstrip() for line in lines)
