import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra import numpy as hnp

from conftest import random_hierarchy
from labelgrain import _kernels
from labelgrain.hierarchy import LabelHierarchy, builtin_hierarchy, grid_hierarchy, identity_hierarchy
from labelgrain.metrics import (
    AcrReport,
    ConfusionMatrix,
    DegenerateConfusion,
    MetricError,
    StructureError,
    acr,
    build_confusion,
    coarse_accuracy,
    delta_a,
    fine_accuracy,
)
from oracles import acr_by_enumeration, acr_exact, acr_float, tally

WORKED = [[10, 2, 1, 1], [2, 10, 0, 2], [1, 1, 10, 4], [0, 2, 4, 10]]


# --- confusion ----------------------------------------------------------------------

def test_confusion_small():
    c = build_confusion([0, 0, 1], [0, 1, 1], 2)
    assert c.counts.tolist() == [[1, 1], [0, 1]]


def test_confusion_perfect_is_diagonal(rng):
    y = rng.integers(0, 6, 200)
    c = build_confusion(y, y, 6)
    assert np.array_equal(c.counts, np.diag(np.bincount(y, minlength=6)))


def test_confusion_matches_tally(rng):
    t, p = rng.integers(0, 10, 1000), rng.integers(0, 10, 1000)
    assert build_confusion(t, p, 10).counts.tolist() == tally(t, p, 10)


@pytest.mark.parametrize("backend", ["numpy", "numba"])
def test_confusion_backends(rng, backend):
    if backend == "numba" and not _kernels.HAVE_NUMBA:
        pytest.skip("numba not installed")
    t, p = rng.integers(0, 7, 500), rng.integers(0, 7, 500)
    fn = getattr(_kernels, f"tally_confusion_{backend}")
    assert fn(t, p, 7).tolist() == tally(t, p, 7)


def test_confusion_errors():
    with pytest.raises(MetricError, match="out of range"):
        build_confusion([0, 3], [0, 1], 3)
    with pytest.raises(MetricError, match="length"):
        build_confusion([0, 1], [0], 2)
    with pytest.raises(MetricError):
        build_confusion([0.5], [0], 2)


def test_confusion_read_only_and_csv():
    c = build_confusion([0, 1, 1], [1, 1, 0], 2)
    with pytest.raises(ValueError):
        c.counts[0, 0] = 5
    assert ConfusionMatrix.from_csv(c.to_csv(["a", "b"]), header=True) == c
    assert c.total == 3 and c.k == 2


# --- ACR ----------------------------------------------------------------------------

def test_acr_worked_example():
    h = grid_hierarchy(2, 2)
    r = acr(ConfusionMatrix(WORKED), h)
    assert r.intra_avg == 3.0
    assert r.inter_avg == 1.0
    assert r.acr == 1 / 3
    assert (r.n_intra_pairs, r.n_inter_pairs) == (4, 8)
    assert acr_exact(WORKED, h) == pytest.approx(1 / 3, abs=0)


def test_acr_uniform_off_diagonal_is_one():
    counts = np.full((4, 4), 5)
    np.fill_diagonal(counts, 40)
    assert acr(ConfusionMatrix(counts), grid_hierarchy(2, 2)).acr == 1.0


def test_acr_diagonal_only_is_degenerate():
    with pytest.raises(DegenerateConfusion) as info:
        acr(ConfusionMatrix(np.diag([3, 4, 5, 6])), grid_hierarchy(2, 2))
    assert info.value.reason == "zero intra-class confusion"


def test_acr_structure_errors():
    c = ConfusionMatrix(np.ones((3, 3), dtype=int))
    with pytest.raises(StructureError):
        acr(c, identity_hierarchy(["a", "b", "c"]))
    with pytest.raises(StructureError):
        acr(c, grid_hierarchy(1, 3))
    with pytest.raises(MetricError):
        acr(c, grid_hierarchy(2, 2))


def test_acr_report_round_trip():
    r = acr(ConfusionMatrix(WORKED), grid_hierarchy(2, 2))
    assert AcrReport.from_dict(r.to_dict()) == r


def test_acr_matches_enumerator_random(rng):
    for _ in range(50):
        k = int(rng.integers(4, 21))
        h = random_hierarchy(rng, k, int(rng.integers(2, min(5, k - 1) + 1)))
        counts = rng.integers(0, 30, (k, k))
        if acr_by_enumeration(counts, h)[0] == 0:
            continue
        r = acr(ConfusionMatrix(counts), h)
        assert r.acr == acr_float(counts, h)
        assert math.isclose(r.acr, float(acr_exact(counts, h)), rel_tol=1e-15)


@pytest.mark.parametrize("backend", ["numpy", "numba"])
def test_pair_sums_backends(rng, backend):
    if backend == "numba" and not _kernels.HAVE_NUMBA:
        pytest.skip("numba not installed")
    h = random_hierarchy(rng, 9, 3)
    counts = rng.integers(0, 20, (9, 9))
    intra, _, inter, _ = acr_by_enumeration(counts, h)
    fn = getattr(_kernels, f"pair_sums_{backend}")
    assert tuple(int(v) for v in fn(counts, h.mapping)) == (intra, inter)


@st.composite
def confusion_cases(draw):
    k = draw(st.integers(4, 10))
    sizes_c = draw(st.integers(2, min(4, k - 1)))
    seed = draw(st.integers(0, 2**32 - 1))
    h = random_hierarchy(np.random.default_rng(seed), k, sizes_c)
    counts = draw(hnp.arrays(np.int64, (k, k), elements=st.integers(0, 50)))
    # guarantee some intra-group confusion so the ratio is defined
    i = h.members(max(range(h.n_coarse), key=lambda c: len(h.members(c))))
    counts[i[0], i[1]] += 1
    return counts, h


@settings(max_examples=60)
@given(confusion_cases(), st.integers(1, 9))
def test_acr_scale_invariant(case, factor):
    counts, h = case
    assert math.isclose(acr(ConfusionMatrix(counts), h).acr, acr(ConfusionMatrix(counts * factor), h).acr,
                        rel_tol=1e-12)


@settings(max_examples=60)
@given(confusion_cases(), st.integers(0, 2**32 - 1))
def test_acr_relabel_invariant(case, seed):
    counts, h = case
    perm = np.random.default_rng(seed).permutation(h.n_fine)
    # fine class perm[i] of the new problem is fine class i of the old one
    new_counts = np.zeros_like(counts)
    new_counts[np.ix_(perm, perm)] = counts
    new_map = np.zeros(h.n_fine, dtype=int)
    new_map[perm] = h.mapping
    h2 = LabelHierarchy(h.fine_names, h.coarse_names, tuple(new_map.tolist()))
    assert math.isclose(acr(ConfusionMatrix(counts), h).acr, acr(ConfusionMatrix(new_counts), h2).acr,
                        rel_tol=1e-12)


@settings(max_examples=60)
@given(confusion_cases())
def test_acr_ignores_diagonal(case):
    counts, h = case
    bumped = counts + np.diag(np.arange(h.n_fine) * 7)
    assert acr(ConfusionMatrix(counts), h) == acr(ConfusionMatrix(bumped), h)


# --- accuracies ---------------------------------------------------------------------

def test_coarse_accuracy_examples():
    h = builtin_hierarchy("cifar10")
    ids = lambda names: [h.fine_id(n) for n in names]  # noqa: E731
    same = ids(["dog", "cat", "ship"])
    assert coarse_accuracy(same, same, h) == 1.0
    assert coarse_accuracy(ids(["dog"] * 5), ids(["cat"] * 5), h) == 1.0
    true = ids(["dog", "truck", "ship", "frog"])
    pred = ids(["cat", "deer", "ship", "plane"])
    assert coarse_accuracy(true, pred, h) == 0.5


def test_fine_accuracy_examples():
    assert fine_accuracy([1, 2, 3], [1, 2, 3]) == 1.0
    assert fine_accuracy([0, 1], [1, 0]) == 0.0
    assert fine_accuracy([0, 1, 2, 3], [0, 1, 0, 0]) == 0.5
    with pytest.raises(MetricError):
        fine_accuracy([], [])


@settings(max_examples=100)
@given(st.integers(0, 2**32 - 1))
def test_coarse_dominates_fine(seed):
    r = np.random.default_rng(seed)
    k = int(r.integers(2, 15))
    h = random_hierarchy(r, k, int(r.integers(1, k + 1)))
    n = int(r.integers(1, 60))
    t, p = r.integers(0, k, n), r.integers(0, k, n)
    assert coarse_accuracy(t, p, h) >= fine_accuracy(t, p)


def test_coarse_equals_fine_under_identity(rng):
    h = identity_hierarchy([f"x{i}" for i in range(6)])
    t, p = rng.integers(0, 6, 100), rng.integers(0, 6, 100)
    assert coarse_accuracy(t, p, h) == fine_accuracy(t, p)


def test_delta_a_table_values():
    assert delta_a(0.9920, 0.9842) == pytest.approx(0.0078, abs=1e-12)
    assert delta_a(0.9315, 0.8965) == pytest.approx(0.0350, abs=1e-12)
    assert delta_a(0.7, 0.7) == 0
    with pytest.raises(MetricError):
        delta_a(1.2, 0.5)
