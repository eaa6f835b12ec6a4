from pathlib import Path

import pytest

from htcprompt.dataset import Dataset, LabeledDocument
from htcprompt.errors import DepthMismatch, EmptyTaxonomy, LeafParent
from htcprompt.prompts import (
    PromptTemplates,
    hierarchy_form,
    render_contamination,
    render_dh,
    render_dl,
    render_tmh_step,
)
from htcprompt.taxonomy import Taxonomy

GOLDEN = Path(__file__).parent / "golden"
PASSAGE = "Firewalls and intrusion detection for campus networks."

FIGURE_PATHS = [
    ("Psychology", "Addiction"),
    ("Computer Science", "Algorithm design"),
    ("Computer Science", "network security"),
    ("Medical Sciences", "Atopic Dermatitis"),
    ("Medical Sciences", "Alzheimer's Disease"),
    ("Mechanical Engineering", "computer-aided design"),
]


def golden(name: str) -> str:
    text = (GOLDEN / name).read_text(encoding="utf-8")
    assert text.endswith("\n")
    return text[:-1]


@pytest.fixture
def dataset():
    docs = [LabeledDocument(f"wos:{i}", f"passage {i}", p) for i, p in enumerate(FIGURE_PATHS, 1)]
    train = [LabeledDocument("wos:train", "Memory decline in elderly patients.", ("Medical Sciences", "Alzheimer's Disease"))]
    return Dataset.from_documents("wos", train, docs)


def test_dl_zero_shot_golden(dataset):
    p = render_dl(dataset.taxonomy, [], PASSAGE)
    assert p.text == golden("dl_zero_shot.txt")
    assert p.fewshot_count == 0 and p.strategy == "DL"
    assert len(p.candidates_shown) == 6


def test_dh_zero_shot_golden(dataset):
    p = render_dh(dataset.taxonomy, [], PASSAGE)
    assert p.text == golden("dh_zero_shot.txt")
    assert all(" > " in c for c in p.candidates_shown)


def test_dl_one_shot_golden(dataset):
    p = render_dl(dataset.taxonomy, dataset.train, PASSAGE)
    assert p.text == golden("dl_one_shot.txt")
    assert p.fewshot_count == 1


def test_tmh_step_golden(dataset):
    p = render_tmh_step(dataset.taxonomy, "computer science", [], PASSAGE, depth=2)
    assert p.text == golden("tmh_depth2.txt")
    assert p.depth == 2


def test_contamination_goldens():
    assert render_contamination("Web of Science", None, "CSV") == golden("contamination_plain.txt")
    assert render_contamination("Web of Science", "test", "CSV") == golden("contamination_split.txt")


@pytest.mark.parametrize("k", [0, 1, 3])
def test_top_level_sections_appear_once(dataset, k):
    few = list(dataset.test[:k])
    for render in (render_dl, render_dh):
        text = render(dataset.taxonomy, few, PASSAGE).text
        assert text.count("### Instructions") == 1
        assert text.count("### Candidates\n") == 1
        assert text.count("### Examples") == (1 if k else 0)
        # one passage/answer pair per example plus the target
        assert text.count("### Passage\n") == k + 1
        assert text.endswith(f"### Passage\n{PASSAGE}\n\n### Answer")


def test_tmh_root_step_lists_roots(dataset):
    p = render_tmh_step(dataset.taxonomy, None, [], PASSAGE, depth=1)
    assert p.candidates_shown == ("Computer Science", "Mechanical Engineering", "Medical Sciences", "Psychology")


def test_tmh_examples_use_label_at_depth(dataset):
    p1 = render_tmh_step(dataset.taxonomy, None, dataset.train, PASSAGE, depth=1)
    p2 = render_tmh_step(dataset.taxonomy, "medical sciences", dataset.train, PASSAGE, depth=2)
    assert "### Answer\nMedical Sciences\n" in p1.text
    assert "### Answer\nAlzheimer's Disease\n" in p2.text


def test_tmh_errors(dataset):
    t = dataset.taxonomy
    with pytest.raises(DepthMismatch):
        render_tmh_step(t, None, [], PASSAGE, depth=2)
    with pytest.raises(DepthMismatch):
        render_tmh_step(t, "psychology", [], PASSAGE, depth=3)
    with pytest.raises(LeafParent):
        render_tmh_step(t, "psychology/addiction", [], PASSAGE, depth=3)


def test_empty_taxonomy():
    with pytest.raises(EmptyTaxonomy):
        render_dl(Taxonomy({}, []), [], PASSAGE)


def test_braces_in_passage_are_not_expanded(dataset):
    text = render_dl(dataset.taxonomy, [], "weird {candidates} {input data}").text
    assert "weird {candidates} {input data}" in text


def test_dl_lists_repeated_leaf_names_once():
    d = Dataset.from_documents("x", [], [LabeledDocument("a", "t", ("A", "Same")), LabeledDocument("b", "t", ("B", "Same"))])
    assert render_dl(d.taxonomy, [], "t").candidates_shown == ("Same",)


def test_hierarchy_form():
    assert hierarchy_form(3) == "[1st depth label] > [2nd depth label] > [3rd depth label]"
    assert hierarchy_form(12).endswith("[11th depth label] > [12th depth label]")


def test_templates_from_directory(tmp_path, dataset):
    (tmp_path / "dl.txt").write_text("Pick one of:\n{candidates}\nText: {input data}\n", encoding="utf-8")
    templates = PromptTemplates.from_directory(tmp_path)
    text = render_dl(dataset.taxonomy, [], "hi", templates).text
    assert text.startswith("Pick one of:\nAddiction\n")
    assert text.endswith("Text: hi")
    # untouched templates keep their defaults
    assert templates.dh == PromptTemplates().dh
