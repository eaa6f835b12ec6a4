"""Text normalization and edit-distance resolution onto a candidate label set.

``normalize_text`` is applied to both sides of every comparison: when an LLM
completion is snapped onto a candidate, and when predictions are scored
against gold labels.

Normalization rules, in order:

1. Unicode NFC, then simple lowercase.
2. The word-joining symbols ``- _ / \\`` become a space, so
   ``"machine-learning"`` and ``"machine learning"`` coincide.
3. The symbols ``. , ; : ! ? ' " ` ( ) [ ] { } &`` are deleted, so
   ``"Alzheimer's"`` becomes ``"alzheimers"``.
4. Runs of whitespace collapse to one space; the result is trimmed.
"""

from __future__ import annotations

import re
import unicodedata
from dataclasses import dataclass
from typing import Sequence

from .errors import EmptyCandidateSet

__all__ = [
    "JOINING_SYMBOLS",
    "REMOVED_SYMBOLS",
    "ResolvedLabel",
    "levenshtein",
    "normalize_text",
    "resolve_label",
]

JOINING_SYMBOLS = "-_/\\"
REMOVED_SYMBOLS = ".,;:!?'\"`()[]{}&"

_JOIN_TABLE = str.maketrans({c: " " for c in JOINING_SYMBOLS})
_REMOVE_TABLE = str.maketrans({c: None for c in REMOVED_SYMBOLS})
_WS = re.compile(r"\s+")


def normalize_text(s: str) -> str:
    s = unicodedata.normalize("NFC", s).lower()
    s = s.translate(_JOIN_TABLE).translate(_REMOVE_TABLE)
    return _WS.sub(" ", s).strip()


def levenshtein(a: str, b: str) -> int:
    """Unit-cost edit distance (insert, delete, substitute).

    Two-row dynamic programme, O(len(a) * len(b)) time and O(min) memory.
    """
    if a == b:
        return 0
    if len(a) < len(b):
        a, b = b, a
    if not b:
        return len(a)
    previous = list(range(len(b) + 1))
    for i, ca in enumerate(a, 1):
        current = [i]
        for j, cb in enumerate(b, 1):
            current.append(
                min(
                    previous[j] + 1,  # delete ca
                    current[j - 1] + 1,  # insert cb
                    previous[j - 1] + (ca != cb),
                )
            )
        previous = current
    return previous[-1]


@dataclass(frozen=True)
class ResolvedLabel:
    """A completion snapped onto one member of a candidate list.

    ``label`` is the candidate verbatim; ``distance`` is measured between the
    normalized completion and the normalized candidate, so ``exact`` holds
    whenever the two agree after normalization.
    """

    label: str
    distance: int
    exact: bool

    def to_dict(self) -> dict:
        return {"label": self.label, "distance": self.distance, "exact": self.exact}


def resolve_label(output: str, candidates: Sequence[str]) -> ResolvedLabel:
    """Return the candidate nearest to ``output`` by normalized edit distance.

    Ties go to the lexicographically smallest normalized candidate, then the
    smallest raw string, then the earliest position, which makes the result
    independent of candidate order for any duplicate-free list.
    """
    if not candidates:
        raise EmptyCandidateSet("cannot resolve against an empty candidate set")
    target = normalize_text(output)
    best_key = None
    best = None
    for index, candidate in enumerate(candidates):
        norm = normalize_text(candidate)
        if norm == target:
            dist = 0
        else:
            dist = levenshtein(target, norm)
        key = (dist, norm, candidate, index)
        if best_key is None or key < best_key:
            best_key = key
            best = candidate
    dist = best_key[0]
    return ResolvedLabel(label=best, distance=dist, exact=dist == 0)
