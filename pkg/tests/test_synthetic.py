import numpy as np
import pytest

from portsel.portfolio import competitiveness_labels, ingest_runtimes, single_best, vbs, vbs_choices
from portsel.synthetic import gen_synthetic, portfolio
from portsel.text_encoder import read_text_dir


def test_portfolio_names():
    algs = portfolio(12)
    assert [str(a) for a in algs[:5]] == ["M1-chuffed", "M1-kissat", "M1-cplex", "M1-ortools", "M2-chuffed"]
    assert str(algs[-1]) == "M3-ortools"
    assert len(set(portfolio(20))) == 20


def test_same_seed_same_bytes(tmp_path):
    a = gen_synthetic(7, 30, 6, 3).write(tmp_path / "a")
    b = gen_synthetic(7, 30, 6, 3).write(tmp_path / "b")
    assert (a / "runtimes.csv").read_bytes() == (b / "runtimes.csv").read_bytes()
    for f in sorted((a / "instances").iterdir()):
        assert f.read_bytes() == (b / "instances" / f.name).read_bytes()


def test_written_dataset_reloads(tmp_path):
    ds = gen_synthetic(1, 25, 4, 2)
    out = ds.write(tmp_path)
    m = ingest_runtimes(out / "runtimes.csv")
    assert np.array_equal(m.runtimes, ds.matrix.runtimes)
    assert read_text_dir(out / "instances") == ds.texts


def test_single_pattern_single_best_is_vbs():
    ds = gen_synthetic(3, 40, 5, 1)
    m = ds.matrix
    picks, score = vbs(m, m.instances)
    assert set(picks) == {single_best(m, m.instances)}


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_planted_best_is_fastest_and_competitive(seed):
    ds = gen_synthetic(seed, 80, 12, 4, noise=0.1)
    m = ds.matrix
    labels = competitiveness_labels(m).labels
    best = vbs_choices(m, m.instances)
    for r, iid in enumerate(m.instances):
        planted = ds.planted_best(iid)
        assert best[r] == planted
        assert labels[r, planted] == 1.0


def test_pattern_token_in_text():
    ds = gen_synthetic(0, 10, 4, 4)
    for iid, text in ds.texts.items():
        assert f"layout_{ds.patterns[iid]}" in text


def test_pattern_weights_skew():
    ds = gen_synthetic(0, 400, 12, 4, pattern_weights=(0.7, 0.1, 0.1, 0.1))
    share = np.mean([p == 0 for p in ds.patterns.values()])
    assert 0.6 < share < 0.8


def test_invalid():
    with pytest.raises(ValueError):
        gen_synthetic(0, 10, 3, 4)
    with pytest.raises(ValueError):
        gen_synthetic(0, 10, 4, 2, pattern_weights=(1.0,))
