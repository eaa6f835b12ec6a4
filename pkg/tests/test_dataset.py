import csv

import pytest

from htcprompt.dataset import APR_SCHEMA, WOS_SCHEMA, CsvSchema, load_csv, sample_few_shot, split_holdout
from htcprompt.errors import DatasetIOError, EmptyLabelCell, EmptyTextCell, KTooLarge, MissingColumn, NTooLarge


def write_csv(path, header, rows):
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        w.writerows(rows)
    return path


@pytest.fixture
def wos_csv(tmp_path):
    rows = [(f"text {i}", ["CS", "Medical", "Psychology"][i % 3], f"kw{i % 4}") for i in range(12)]
    return write_csv(tmp_path / "wos.csv", ["text", "domain", "keyword"], rows)


def test_load_all_as_test(wos_csv):
    d = load_csv(wos_csv, WOS_SCHEMA)
    assert d.name == "wos"
    assert len(d.test) == 12 and not d.train
    assert d.test[0].doc_id == "wos:1"
    assert d.test[0].labels == ("CS", "kw0")
    assert d.taxonomy.max_depth == 2
    assert d.columns == ("text", "domain", "keyword")


def test_holdout_split_is_seeded_and_disjoint(wos_csv):
    a = load_csv(wos_csv, WOS_SCHEMA, n_test=4, seed=7)
    b = load_csv(wos_csv, WOS_SCHEMA, n_test=4, seed=7)
    assert [x.doc_id for x in a.test] == [x.doc_id for x in b.test]
    assert len(a.test) == 4 and len(a.train) == 8
    assert not {x.doc_id for x in a.train} & {x.doc_id for x in a.test}


def test_split_column(tmp_path):
    path = write_csv(
        tmp_path / "s.csv",
        ["text", "domain", "keyword", "split"],
        [("a", "X", "x1", "train"), ("b", "X", "x2", "test"), ("c", "Y", "y1", "dev")],
    )
    d = load_csv(path, CsvSchema("text", ("domain", "keyword"), split_column="split"))
    assert [x.text for x in d.train] == ["a"]
    assert [x.text for x in d.test] == ["b"]
    # rows outside both splits contribute no labels
    assert "y" not in d.taxonomy


def test_separate_test_file(tmp_path, wos_csv):
    test = write_csv(tmp_path / "t.csv", ["text", "domain", "keyword"], [("q", "CS", "kw0")])
    d = load_csv(wos_csv, WOS_SCHEMA, test_path=test)
    assert len(d.train) == 12
    assert d.test[0].doc_id == "wos-test:1"


def test_n_train_subsample(wos_csv):
    d = load_csv(wos_csv, WOS_SCHEMA, n_test=2, n_train=5, seed=1)
    assert len(d.train) == 5


def test_missing_column(wos_csv):
    with pytest.raises(MissingColumn):
        load_csv(wos_csv, APR_SCHEMA)


def test_empty_label_cells_are_all_reported(tmp_path):
    path = write_csv(tmp_path / "e.csv", ["text", "domain", "keyword"], [("a", "X", ""), ("b", "X", "y"), ("c", "", "z")])
    with pytest.raises(EmptyLabelCell) as info:
        load_csv(path, WOS_SCHEMA)
    assert info.value.rows == [1, 3]


def test_empty_text(tmp_path):
    path = write_csv(tmp_path / "e.csv", ["text", "domain", "keyword"], [(" ", "X", "y")])
    with pytest.raises(EmptyTextCell):
        load_csv(path, WOS_SCHEMA)


def test_unreadable(tmp_path):
    with pytest.raises(DatasetIOError):
        load_csv(tmp_path / "missing.csv", WOS_SCHEMA)


def test_holdout_bounds():
    with pytest.raises(NTooLarge):
        split_holdout([1, 2], 2, 0)


class TestFewShot:
    def test_nested_and_seeded(self, wos_csv):
        d = load_csv(wos_csv, WOS_SCHEMA, n_test=2, seed=0)
        samples = {k: [x.doc_id for x in sample_few_shot(d, k, seed=3)] for k in (0, 1, 3, 5, 10)}
        assert samples[0] == []
        for small, big in [(1, 3), (3, 5), (5, 10)]:
            assert samples[big][:small] == samples[small]
        assert samples[10] == [x.doc_id for x in sample_few_shot(d, 10, seed=3)]
        assert len(set(samples[10])) == 10
        assert all(doc_id not in {x.doc_id for x in d.test} for doc_id in samples[10])

    def test_k_too_large(self, wos_csv):
        d = load_csv(wos_csv, WOS_SCHEMA, n_test=2)
        with pytest.raises(KTooLarge):
            sample_few_shot(d, 11, 0)
