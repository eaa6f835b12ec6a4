"""Synthetic taxonomies and datasets shared by the test suite."""

from __future__ import annotations

import random
import string

from htcprompt.dataset import Dataset, LabeledDocument
from htcprompt.normalize import levenshtein, normalize_text


def spaced_names(n: int, seed: int = 0, min_distance: int = 3, length: int = 8) -> list[str]:
    """``n`` capitalized names whose normalized forms are pairwise >= ``min_distance`` apart."""
    rng = random.Random(seed)
    names: list[str] = []
    while len(names) < n:
        cand = "".join(rng.choice(string.ascii_lowercase) for _ in range(length)).capitalize()
        norm = normalize_text(cand)
        if all(levenshtein(norm, normalize_text(x)) >= min_distance for x in names):
            names.append(cand)
    return names


def shaped_paths(shape=(4, 12, 30), seed: int = 0) -> list[tuple[str, ...]]:
    """Root-to-leaf name paths with the given node count per depth.

    Nodes at each depth are spread as evenly as possible over their parents.
    Every name is distinct and at least 3 edits from every other.
    """
    names = iter(spaced_names(sum(shape), seed))
    level = [(next(names),) for _ in range(shape[0])]
    for count in shape[1:]:
        nxt = []
        for i in range(count):
            parent = level[i % len(level)]
            nxt.append(parent + (next(names),))
        level = sorted(nxt)
    return level


def make_dataset(
    paths,
    n_test: int = 50,
    n_train: int = 40,
    seed: int = 0,
    name: str = "synth",
) -> Dataset:
    rng = random.Random(seed)
    counter = iter(range(n_train + n_test))

    def doc(split, i):
        j = next(counter)
        # the first len(paths) documents cover every leaf once
        path = paths[j] if j < len(paths) else rng.choice(paths)
        text = f"A {split} passage number {i} discussing {' and '.join(p.lower() for p in path)}."
        return LabeledDocument(f"{name}-{split}:{i}", text, tuple(path))

    train = [doc("train", i) for i in range(n_train)]
    test = [doc("test", i) for i in range(n_test)]
    return Dataset.from_documents(name, train, test, ("text",) + tuple(f"level{d}" for d in range(1, len(paths[0]) + 1)))


def synthetic_dataset(shape=(4, 12, 30), n_test: int = 50, n_train: int = 40, seed: int = 0) -> Dataset:
    return make_dataset(shaped_paths(shape, seed), n_test, n_train, seed)
