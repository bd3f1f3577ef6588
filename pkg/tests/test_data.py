import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hheml.data import (FEATURES, EcgRecord, balance, load_csv, synth_generate,
                        train_test_split, write_csv)
from hheml.errors import BalanceError, DataError, ParseError


def row(values, label):
    return ",".join(str(v) for v in values) + f",{label}\n"


def test_load_well_formed(tmp_path):
    path = tmp_path / "ok.csv"
    path.write_text("# header line\n" + row([0.5] * FEATURES, "N") + row([0.1] * FEATURES, "V")
                    + row([1.0] * FEATURES, "A"))
    recs = load_csv(path)
    assert len(recs) == 3 and [r.label for r in recs] == ["N", "V", "A"]
    assert recs.clipped == 0


def test_short_row_names_line(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text(row([0.5] * FEATURES, "N") + row([0.5] * (FEATURES - 1), "N"))
    with pytest.raises(ParseError) as info:
        load_csv(path)
    assert info.value.line == 2 and "line 2" in str(info.value)


@pytest.mark.parametrize("bad", ["nan", "abc"])
def test_bad_values(tmp_path, bad):
    path = tmp_path / "bad.csv"
    path.write_text(row([bad] + [0.5] * (FEATURES - 1), "N"))
    with pytest.raises(ParseError):
        load_csv(path)


def test_unknown_label(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text(row([0.5] * FEATURES, "Q"))
    with pytest.raises(ParseError):
        load_csv(path)


def test_clipping_is_counted(tmp_path):
    path = tmp_path / "clip.csv"
    path.write_text(row([-0.2, 1.5, 2.0] + [0.5] * (FEATURES - 3), "L"))
    recs = load_csv(path)
    assert recs.clipped == 3
    assert recs[0].features[:3].tolist() == [0.0, 1.0, 1.0]


def test_empty_file(tmp_path):
    path = tmp_path / "empty.csv"
    path.write_text("")
    assert load_csv(path) == []


@settings(max_examples=10)
@given(st.lists(st.lists(st.floats(0, 1), min_size=FEATURES, max_size=FEATURES), min_size=1, max_size=4),
       st.sampled_from("NLRAV"))
def test_csv_round_trip(tmp_path_factory, rows, label):
    path = tmp_path_factory.mktemp("rt") / "rt.csv"
    recs = [EcgRecord(np.array(r), label) for r in rows]
    write_csv(recs, path)
    back = load_csv(path)
    assert [r.key() for r in back] == [r.key() for r in recs]


def test_balance():
    rng = np.random.default_rng(0)
    recs = [EcgRecord(rng.random(FEATURES), "N") for _ in range(10)]
    recs += [EcgRecord(rng.random(FEATURES), lab) for lab in "LRAV"]
    out = balance(recs, seed=3)
    assert len(out) == 8 and sum(r.target for r in out) == 4
    assert {r.key() for r in out} <= {r.key() for r in recs}
    assert [r.key() for r in out] == [r.key() for r in balance(recs, seed=3)]
    assert [r.key() for r in out] != [r.key() for r in balance(recs, seed=4)]


def test_balance_already_balanced_keeps_multiset():
    recs = synth_generate(40, 1)
    even = balance(recs, 0)
    again = balance(even, 5)
    assert sorted(r.key() for r in again) == sorted(r.key() for r in even)


def test_balance_missing_class():
    with pytest.raises(BalanceError):
        balance([EcgRecord(np.zeros(FEATURES), "N")], 0)


def test_synthetic_generator():
    a, b = synth_generate(50, 7), synth_generate(50, 7)
    assert [r.key() for r in a] == [r.key() for r in b]
    assert [r.key() for r in a] != [r.key() for r in synth_generate(50, 8)]
    m = a.matrix()
    assert m.shape == (50, FEATURES) and m.min() >= 0 and m.max() <= 1
    assert set(r.label for r in synth_generate(400, 1)) == set("NLRAV")
    with pytest.raises(DataError):
        synth_generate(0, 1)


def test_split():
    recs = synth_generate(100, 2)
    train, test = train_test_split(recs, 0.25, seed=1)
    assert len(train) == 75 and len(test) == 25
    assert {r.key() for r in train}.isdisjoint({r.key() for r in test})
