import pytest
from hypothesis import given, strategies as st

from htcprompt.errors import ConflictingParent, EmptyPath, EmptyString, InvalidLabel, SchemaMismatch, UnknownNode
from htcprompt.taxonomy import LabelNode, Taxonomy, build_taxonomy

from synth import shaped_paths

WOS_PATHS = [
    ("Computer Science", "Machine Learning"),
    ("Computer Science", "Algorithm design"),
    ("Medical Sciences", "Alzheimer's Disease"),
    ("Medical Sciences", "Atopic Dermatitis"),
    ("Psychology", "Attention"),
    ("Medical Sciences", "Machine Learning"),  # same leaf name, different parent
]


@pytest.fixture
def wos():
    return build_taxonomy(WOS_PATHS)


def test_structure(wos):
    assert wos.max_depth == 2
    assert wos.counts_by_depth() == {1: 3, 2: 6}
    assert [n.name for n in wos.root_nodes()] == ["Computer Science", "Medical Sciences", "Psychology"]
    assert [c.name for c in wos.children("computer science")] == ["Algorithm design", "Machine Learning"]
    assert wos.node("medical sciences/machine learning").parent == "medical sciences"


def test_repeated_leaf_names_are_distinct_nodes(wos):
    ml = [leaf for leaf in wos.leaves() if leaf.name == "Machine Learning"]
    assert len(ml) == 2
    assert {leaf.parent for leaf in ml} == {"computer science", "medical sciences"}


def test_ancestor_path_and_format(wos):
    path = wos.ancestor_path("medical sciences/atopic dermatitis")
    assert path == ("medical sciences", "medical sciences/atopic dermatitis")
    assert wos.format_path(path) == "Medical Sciences > Atopic Dermatitis"
    assert wos.is_path(path)
    assert not wos.is_path(path[1:])
    assert not wos.is_path(())


def test_leaf_paths_cover_every_leaf(wos):
    paths = wos.leaf_paths()
    assert len(paths) == len(wos.leaves()) == 6
    assert all(wos.is_path(p) and wos.node(p[-1]).is_leaf for p in paths)


def test_path_for_names_normalizes(wos):
    assert wos.path_for_names(["computer-science", "MACHINE LEARNING"]) == (
        "computer science",
        "computer science/machine learning",
    )
    with pytest.raises(UnknownNode):
        wos.path_for_names(["Psychology", "Machine Learning"])


def test_unknown_node(wos):
    with pytest.raises(UnknownNode):
        wos.node("nope")
    with pytest.raises(KeyError):
        wos.children("nope")


def test_first_spelling_wins():
    t = build_taxonomy([("Bio", "Cells"), ("bio", "cells!"), ("BIO", "Genes")])
    assert [n.name for n in t.root_nodes()] == ["Bio"]
    assert [c.name for c in t.children("bio")] == ["Cells", "Genes"]


def test_build_errors():
    with pytest.raises(EmptyPath):
        build_taxonomy([()])
    with pytest.raises(InvalidLabel):
        build_taxonomy([("A", "  ")])
    with pytest.raises(InvalidLabel):
        build_taxonomy([("A", "B > C")])


def test_validation_rejects_inconsistent_nodes():
    a = LabelNode("a", "A", 1, None, ("a/b",))
    b = LabelNode("a/b", "B", 2, "x", ())
    with pytest.raises((ConflictingParent, UnknownNode)):
        Taxonomy({"a": a, "a/b": b}, ["a"])
    with pytest.raises(UnknownNode):
        Taxonomy({"a": a}, ["a"])


class TestParsePath:
    def test_exact(self, wos):
        p = wos.parse_path("Computer Science > Machine Learning")
        assert p.path == ("computer science", "computer science/machine learning")
        assert p.all_verbatim and not p.unresolved
        assert p.flags == (True, True)

    def test_loose_spacing_and_typos(self, wos):
        p = wos.parse_path("medical sciences>Machne Learning")
        assert p.path[-1] == "medical sciences/machine learning"
        assert [m.resolved.distance for m in p.segments] == [0, 1]
        assert not p.all_verbatim

    def test_leftover_segments(self, wos):
        p = wos.parse_path("Psychology > Attention > Extra")
        assert p.path == ("psychology", "psychology/attention")
        assert p.unresolved == ("Extra",)

    def test_partial(self, wos):
        p = wos.parse_path("Psychology")
        assert p.path == ("psychology",)

    def test_empty(self, wos):
        with pytest.raises(EmptyString):
            wos.parse_path("   > ")


def test_json_round_trip(wos):
    again = Taxonomy.from_json(wos.to_json())
    assert again == wos
    assert again.to_dict() == wos.to_dict()


def test_json_format_checked(wos):
    doc = wos.to_dict()
    doc["format"] = "other/9"
    with pytest.raises(SchemaMismatch):
        Taxonomy.from_dict(doc)


def test_shaped_synthetic_taxonomy():
    t = build_taxonomy(shaped_paths((4, 12, 30)))
    assert t.counts_by_depth() == {1: 4, 2: 12, 3: 30}
    assert all(leaf.depth == 3 for leaf in t.leaves())


labels = st.text(alphabet="abcXYZ -", min_size=1, max_size=5).filter(lambda s: s.strip(" -"))


@given(st.lists(st.lists(labels, min_size=1, max_size=3), min_size=1, max_size=8))
def test_build_is_union_of_paths(paths):
    t = build_taxonomy(paths)
    for p in paths:
        ids = t.path_for_names(p)
        assert t.is_path(ids)
    # every leaf is the end of some input path
    ends = {t.path_for_names(p)[-1] for p in paths}
    assert {leaf.id for leaf in t.leaves()} <= ends
    assert Taxonomy.from_json(t.to_json()) == t
