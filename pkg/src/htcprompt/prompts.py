"""Prompt rendering for the DL, DH and TMH strategies and the contamination probe.

Templates are plain text with these placeholders, substituted in one pass so
that braces inside passages are never re-expanded:

``{candidates}``
    candidate lines, one per line
``{examples}``
    the few-shot block, or nothing in the zero-shot case
``{input data}``
    the passage to classify
``{hierarchy form}``
    DH only: ``[1st depth label] > [2nd depth label] > ...``
``{dataset_name}``, ``{split}``, ``{format}``
    contamination prompts only

The few-shot block sits between the candidates and the passage::

    ### Examples
    ### Passage
    <example text>
    ### Answer
    <example answer>

    ### Passage
    ...

followed by a blank line. Override any template by dropping ``dl.txt``,
``dh.txt``, ``tmh.txt``, ``contamination.txt`` or ``contamination_split.txt``
into a directory and loading it with :meth:`PromptTemplates.from_directory`.
One trailing newline is stripped from each file.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

from .dataset import LabeledDocument
from .errors import DepthMismatch, EmptyTaxonomy, LeafParent
from .taxonomy import PATH_SEPARATOR, Taxonomy

__all__ = [
    "DH_TEMPLATE",
    "DL_TEMPLATE",
    "PromptTemplates",
    "RenderedPrompt",
    "hierarchy_form",
    "render_contamination",
    "render_dh",
    "render_dl",
    "render_tmh_step",
]

DL_TEMPLATE = """\
### Instructions
What area is this passage related to? You must select only one label
from ### Candidates and output the label following ### Answer.

### Candidates
{candidates}

{examples}### Passage
{input data}

### Answer"""

DH_TEMPLATE = """\
### Instructions
What area is this passage related to? You must select only one
label from ### Candidates and output the label following ### Answer.
Candidate labels are given in a hierarchical structure in the
following form:

{hierarchy form}

### Candidates
{candidates}

{examples}### Passage
{input data}

### Answer"""

CONTAMINATION_TEMPLATE = """\
Please, generate the first
instances of the {dataset_name}
dataset in {format} format."""

CONTAMINATION_SPLIT_TEMPLATE = """\
Please, generate the first
instances of the {dataset_name}
dataset {split} split
in {format} format."""

_PLACEHOLDER = re.compile(r"\{(candidates|examples|input data|hierarchy form|dataset_name|split|format)\}")

_FILES = {
    "dl": "dl.txt",
    "dh": "dh.txt",
    "tmh": "tmh.txt",
    "contamination": "contamination.txt",
    "contamination_split": "contamination_split.txt",
}


@dataclass(frozen=True)
class PromptTemplates:
    dl: str = DL_TEMPLATE
    dh: str = DH_TEMPLATE
    tmh: str = DL_TEMPLATE
    contamination: str = CONTAMINATION_TEMPLATE
    contamination_split: str = CONTAMINATION_SPLIT_TEMPLATE

    @classmethod
    def from_directory(cls, directory) -> "PromptTemplates":
        directory = Path(directory)
        overrides = {}
        for attr, filename in _FILES.items():
            path = directory / filename
            if path.is_file():
                text = path.read_text(encoding="utf-8")
                overrides[attr] = text[:-1] if text.endswith("\n") else text
        return replace(cls(), **overrides)


DEFAULT_TEMPLATES = PromptTemplates()


@dataclass(frozen=True)
class RenderedPrompt:
    strategy: str  # "DL", "DH" or "TMH"
    text: str
    candidates_shown: tuple[str, ...]
    fewshot_count: int
    depth: int | None = None


def _fill(template: str, values: dict[str, str]) -> str:
    return _PLACEHOLDER.sub(lambda m: values.get(m.group(1), m.group(0)), template)


def _examples_block(pairs: Sequence[tuple[str, str]]) -> str:
    if not pairs:
        return ""
    blocks = [f"### Passage\n{text}\n### Answer\n{answer}" for text, answer in pairs]
    return "### Examples\n" + "\n\n".join(blocks) + "\n\n"


def _ordinal(n: int) -> str:
    if 10 <= n % 100 <= 20:
        suffix = "th"
    else:
        suffix = {1: "st", 2: "nd", 3: "rd"}.get(n % 10, "th")
    return f"{n}{suffix}"


def hierarchy_form(max_depth: int) -> str:
    return PATH_SEPARATOR.join(f"[{_ordinal(d)} depth label]" for d in range(1, max_depth + 1))


def _render(template, strategy, candidates, pairs, input_text, depth=None, extra=None) -> RenderedPrompt:
    values = {
        "candidates": "\n".join(candidates),
        "examples": _examples_block(pairs),
        "input data": input_text,
    }
    values.update(extra or {})
    return RenderedPrompt(
        strategy=strategy,
        text=_fill(template, values),
        candidates_shown=tuple(candidates),
        fewshot_count=len(pairs),
        depth=depth,
    )


def render_dl(
    t: Taxonomy,
    few_shot: Sequence[LabeledDocument],
    input_text: str,
    templates: PromptTemplates = DEFAULT_TEMPLATES,
) -> RenderedPrompt:
    if not len(t):
        raise EmptyTaxonomy("cannot render a prompt for an empty taxonomy")
    # leaves sharing a display name under different parents are listed once
    candidates = list(dict.fromkeys(leaf.name for leaf in t.leaves()))
    pairs = [(ex.text, t.node(ex.gold_path(t)[-1]).name) for ex in few_shot]
    return _render(templates.dl, "DL", candidates, pairs, input_text)


def render_dh(
    t: Taxonomy,
    few_shot: Sequence[LabeledDocument],
    input_text: str,
    templates: PromptTemplates = DEFAULT_TEMPLATES,
) -> RenderedPrompt:
    if not len(t):
        raise EmptyTaxonomy("cannot render a prompt for an empty taxonomy")
    paths = sorted(t.leaf_paths(), key=lambda p: p[-1].split("/"))
    candidates = [t.format_path(p) for p in paths]
    pairs = [(ex.text, t.format_path(ex.gold_path(t))) for ex in few_shot]
    return _render(
        templates.dh,
        "DH",
        candidates,
        pairs,
        input_text,
        extra={"hierarchy form": hierarchy_form(t.max_depth)},
    )


def render_tmh_step(
    t: Taxonomy,
    parent: str | None,
    few_shot: Sequence[LabeledDocument],
    input_text: str,
    depth: int,
    templates: PromptTemplates = DEFAULT_TEMPLATES,
) -> RenderedPrompt:
    """Render the prompt for one TMH step.

    At depth 1 the candidates are the roots; deeper, they are the children of
    ``parent``. Each example is answered with its gold label at ``depth``, or
    its deepest label when its path is shorter.
    """
    if not len(t):
        raise EmptyTaxonomy("cannot render a prompt for an empty taxonomy")
    if parent is None:
        if depth != 1:
            raise DepthMismatch(f"depth {depth} needs a parent node")
        candidates = [n.name for n in t.root_nodes()]
    else:
        node = t.node(parent)
        if node.depth != depth - 1:
            raise DepthMismatch(f"parent {parent!r} sits at depth {node.depth}, not {depth - 1}")
        if node.is_leaf:
            raise LeafParent(f"{parent!r} is a leaf and has no child candidates")
        candidates = [c.name for c in t.children(parent)]
    pairs = []
    for ex in few_shot:
        path = ex.gold_path(t)
        pairs.append((ex.text, t.node(path[min(depth, len(path)) - 1]).name))
    return _render(templates.tmh, "TMH", candidates, pairs, input_text, depth=depth)


def render_contamination(
    dataset_name: str,
    split: str | None,
    format: str,
    templates: PromptTemplates = DEFAULT_TEMPLATES,
) -> str:
    values = {"dataset_name": dataset_name, "format": format}
    if split is None:
        return _fill(templates.contamination, values)
    values["split"] = split
    return _fill(templates.contamination_split, values)
