import math

import pytest

from stf.corpus import CORPUS, DATA_DIR, corpus_models
from stf.corpus.generators import (GeneratorError, attacker_rule, gen_nialm, gen_pingpong,
                                   gen_prices, nialm_level, price_profile, synth)
from stf.ml.dataset import load_dataset

# (name, seed, rows) used to produce the shipped CSVs
SHIPPED = [("pingpong", 7, 1000), ("nialm", 3, 600), ("prices", 5, 480)]


@pytest.mark.parametrize("name, seed, n", SHIPPED)
def test_shipped_data_regenerates(name, seed, n):
    assert synth(name, seed, n) == (DATA_DIR / f"{name}.csv").read_text()


def test_attacker_rule():
    assert attacker_rule(200, 0) and attacker_rule(255, 5)
    assert not attacker_rule(199, 0) and not attacker_rule(220, 6)


def test_attacker_base_rate():
    rows = gen_pingpong(11, 20000)
    base = (56 / 256) * (6 / 24)
    expected = base * 0.98 + (1 - base) * 0.02
    rate = sum(r[2] for r in rows) / len(rows)
    # three binomial standard deviations
    assert abs(rate - expected) < 3 * math.sqrt(expected * (1 - expected) / len(rows))
    flips = sum(r[2] != attacker_rule(r[0], r[1]) for r in rows) / len(rows)
    assert abs(flips - 0.02) < 0.004


def test_nialm_levels():
    assert nialm_level(0) == 1500.0           # both on
    assert nialm_level(25) == 100.0           # both off
    assert nialm_level(45) == 1100.0          # app1 only
    assert nialm_level(20) == 500.0           # app2 only
    rows = gen_nialm(2, 1400)
    resid = [r[1] - nialm_level(r[0]) for r in rows]
    mean = sum(resid) / len(resid)
    sd = math.sqrt(sum((x - mean) ** 2 for x in resid) / len(resid))
    assert abs(mean) < 2.0 and 18.0 < sd < 22.0


def test_noise_free_prices_follow_profile():
    rows = gen_prices(0, 300, noise=0.0, ar=0.0)
    assert rows[6] == (6, 60.0)
    assert all(abs(p - round(price_profile(t), 4)) < 1e-9 for t, p in rows[1:])


def test_generators_deterministic():
    assert gen_pingpong(4, 500) == gen_pingpong(4, 500)
    assert gen_pingpong(4, 500) != gen_pingpong(5, 500)
    assert synth("prices", 1, 300) == synth("prices", 1, 300)


@pytest.mark.parametrize("fn, n", [(gen_pingpong, 19), (gen_nialm, 199), (gen_prices, 199)])
def test_size_limits(fn, n):
    with pytest.raises(GeneratorError):
        fn(0, n)


def test_unknown_generator():
    with pytest.raises(GeneratorError, match="unknown"):
        synth("weather")


def test_csv_loads_with_types(tmp_path):
    p = tmp_path / "n.csv"
    p.write_text(synth("nialm", 0, 200))
    ds = load_dataset(p)
    assert ds.names == ["t", "aggregate", "app1_on", "app2_on"]
    assert len(ds) == 200


def test_corpus_models_listed():
    pairs = corpus_models()
    assert len(pairs) == len(CORPUS)
    for model, scenario in pairs:
        assert model.is_file() and scenario.is_file()
