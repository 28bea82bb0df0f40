import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import make_matrix
from portsel.portfolio import AlgorithmId, DataError, single_best, single_best_index, vbs
from portsel.selectors import (
    ARGMAX,
    NN_SBS,
    NN_WS,
    SelectionContext,
    choose,
    concat_features,
    export_features,
    filter_candidates,
    select_argmax,
    select_sbs,
    select_ws,
)
from portsel.text_encoder import CONCATENATED, import_embeddings


def ctx_of(par10=(50.0, 10.0, 40.0), wins=(10, 30, 99)):
    algs = tuple(AlgorithmId(f"M{j + 1}", "s") for j in range(len(par10)))
    return SelectionContext(algs, np.array(par10), np.array(wins))


class TestArgmax:
    def test_examples(self):
        assert select_argmax([0.1, 0.7, 0.2]) == 1
        assert select_argmax([0.5, 0.5]) == 0

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.floats(0, 1), min_size=1, max_size=12), st.randoms(use_true_random=False))
    def test_permutation_equivariant(self, probs, rnd):
        probs = np.array(probs)
        # distinct values so ties cannot shift the answer
        probs = probs + np.arange(len(probs)) * 1e-6
        perm = list(range(len(probs)))
        rnd.shuffle(perm)
        assert perm[select_argmax(probs[perm])] == select_argmax(probs)

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.integers(0, 1000), min_size=1, max_size=12))
    def test_monotone_transform_invariant(self, grid):
        # grid values keep the transform strictly monotone in floating point
        probs = np.array(grid) / 1000.0
        assert select_argmax(probs) == select_argmax(np.exp(3 * probs) + 7)


class TestFilter:
    def test_examples(self):
        assert filter_candidates([0.8, 0.3, 0.6]) == [0, 2]
        assert filter_candidates([0.1, 0.2]) == [0, 1]
        assert filter_candidates([0.5, 0.49]) == [0]

    def test_bad_threshold(self):
        with pytest.raises(ValueError):
            filter_candidates([0.5], threshold=1.0)


class TestSbsWs:
    def test_sbs_examples(self):
        ctx = ctx_of()
        assert select_sbs([0, 2], ctx) == 2
        assert select_sbs([0], ctx) == 0

    def test_ws_examples(self):
        ctx = ctx_of()
        assert select_ws([0, 1], ctx) == 1
        assert select_ws([0, 1, 2], ctx_of(wins=(0, 0, 0))) == 0

    def test_invalid_candidates(self):
        with pytest.raises(ValueError):
            select_sbs([], ctx_of())
        with pytest.raises(IndexError):
            select_ws([3], ctx_of())

    def test_full_portfolio_equals_single_best(self):
        rng = np.random.default_rng(0)
        m = make_matrix(rng.uniform(1, 100, size=(15, 4)))
        train = m.instances[:10]
        ctx = SelectionContext.from_training(m, train)
        picked = select_sbs(filter_candidates(np.full(4, 0.1)), ctx)
        assert m.algorithms[picked] == single_best(m, train)

    def test_context_counts_vbs_wins(self):
        m = make_matrix([[1.0, 2.0], [5.0, 3.0], [1.0, 9.0]])
        ctx = SelectionContext.from_training(m, m.instances)
        assert ctx.wins.tolist() == [2, 1]
        assert ctx.par10.tolist() == [7 / 3, 14 / 3]

    def test_context_round_trip(self, tmp_path):
        ctx = ctx_of(par10=(1 / 3, 2.0, 1e-9))
        ctx.save(tmp_path / "c.csv")
        assert SelectionContext.load(tmp_path / "c.csv") == ctx

    def test_context_malformed(self, tmp_path):
        p = tmp_path / "c.csv"
        p.write_text("algorithm,par10\nM1-s,1\n")
        with pytest.raises(DataError):
            SelectionContext.load(p)


@settings(max_examples=100, deadline=None)
@given(
    st.lists(st.floats(0, 1), min_size=3, max_size=3),
    st.lists(st.floats(0, 1000), min_size=3, max_size=3),
    st.lists(st.integers(0, 50), min_size=3, max_size=3),
)
def test_filter_respected(probs, par10, wins):
    ctx = ctx_of(tuple(par10), tuple(wins))
    cands = filter_candidates(probs)
    for kind in (NN_SBS, NN_WS):
        assert choose(kind, probs, ctx) in cands


def test_choose_dispatch():
    ctx = ctx_of()
    assert choose(ARGMAX, [0.1, 0.9, 0.2]) == 1
    assert choose(NN_SBS, [0.9, 0.1, 0.9], ctx) == 2
    assert choose(NN_WS, [0.9, 0.9, 0.1], ctx) == 1
    with pytest.raises(ValueError):
        choose(NN_SBS, [0.5, 0.5, 0.5])


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 10_000))
def test_oracle_argmax_reaches_vbs(seed):
    rng = np.random.default_rng(seed)
    rt = rng.uniform(0, 5000, size=(8, 4))
    m = make_matrix(rt)
    picks, score = vbs(m, m.instances)
    pen = m.penalized()
    chosen = []
    for r, best in enumerate(picks):
        onehot = np.zeros(4)
        onehot[m.algorithms.index(best)] = 1.0
        chosen.append(pen[r, select_argmax(onehot)])
    assert np.mean(chosen) == score


class TestConcat:
    def test_length_and_structure(self):
        fv = concat_features(np.zeros(4), np.linspace(0, 1, 12))
        assert len(fv) == 16
        assert fv.source == CONCATENATED
        assert not fv.values[:4].any()
        np.testing.assert_array_equal(fv.values[4:], np.linspace(0, 1, 12))

    def test_rejects_out_of_range_probs(self):
        with pytest.raises(ValueError):
            concat_features(np.zeros(2), [1.5])


class TestExport:
    def test_round_trip(self, tmp_path):
        feats = {"a": np.array([1 / 3, -2.5, 1e-300]), "b": np.array([0.0, 1.0, 2.0])}
        export_features(feats, tmp_path / "f.csv")
        lines = (tmp_path / "f.csv").read_text().splitlines()
        assert len(lines) == 3 and lines[0] == "instance,f0,f1,f2"
        back = import_embeddings(tmp_path / "f.csv")
        for k, v in feats.items():
            assert np.array_equal(back[k].values, v)

    def test_empty(self, tmp_path):
        export_features({}, tmp_path / "f.csv")
        assert (tmp_path / "f.csv").read_text() == "instance\n"

    def test_ragged(self, tmp_path):
        with pytest.raises(DataError):
            export_features({"a": [1.0], "b": [1.0, 2.0]}, tmp_path / "f.csv")


def test_single_best_index_consistent():
    m = make_matrix([[3.0, 1.0, 2.0]])
    assert m.algorithms[single_best_index(m, m.instances)] == single_best(m, m.instances)
