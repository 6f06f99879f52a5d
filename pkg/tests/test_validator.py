import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stf.model import DaAction, State, StateMachine, Transition
from stf.parser import parse_file
from stf.validator import RULES, DataProvider, reachability, report_json, validate

from conftest import FIXTURES, load, parse_ok
from oracles import enumerate_da_paths

RULE_DIR = FIXTURES / "rules"

# rule -> (line, column, first line of the flagged source text)
EXPECTED_SPANS = {
    "E001": (8, 1, "thing A {"),
    "E002": (3, 5, "port p {"),
    "E003": (11, 13, "transition -> X event p.other"),
    "E004": (4, 5, "data_analytics {"),
    "E005": (5, 17, "da_predict"),
    "E006": (8, 9, "model logistic_regression {"),
    "E007": (28, 5, "connector a.p <-> b.p"),
    "E008": (5, 9, "state Orphan {"),
    "E009": (6, 17, 'n = "text"'),
    "E010": (4, 5, "data_analytics {"),
    "E011": (4, 5, "data_analytics {"),
    "E012": (19, 45, "da_predict"),
    "W101": (18, 17, "da_predict"),
    "W102": (3, 5, "port p {"),
    "W103": (15, 17, "da_train"),
    "H201": (5, 5, "data_analytics {"),
    "H202": (8, 9, "model linear_regression {"),
    "H203": (4, 5, "data_analytics {"),
}


def check(path):
    m, diags = parse_file(path)
    assert not diags
    return validate(m, DataProvider(path.parent))


def test_catalog_is_complete():
    assert set(EXPECTED_SPANS) == set(RULES)


@pytest.mark.parametrize("rule", sorted(EXPECTED_SPANS))
def test_rule_fixture(rule):
    path = RULE_DIR / f"{rule}.stf"
    diags = check(path)
    assert [d.rule_id for d in diags] == [rule]
    d = diags[0]
    assert d.severity == RULES[rule][0]
    line, col, text = EXPECTED_SPANS[rule]
    src = path.read_text()
    assert (d.span.line, d.span.column) == (line, col)
    assert src[d.span.start:d.span.end].split("\n")[0] == text
    assert d.render().startswith(f"{path}:{line}:{col}: {d.severity}[{rule}]: ")


def test_clean_fixture():
    assert check(RULE_DIR / "clean.stf") == []


def test_clean_corpus_has_no_errors(corpus_case):
    model, _ = corpus_case
    diags = validate(load(model), DataProvider(model.parent))
    assert [d.render() for d in diags if d.is_error] == []


def test_pim_and_psm_validate_clean(corpus_dir):
    for name in ("prices_pim.stf", "prices_psm.stf"):
        diags = validate(load(corpus_dir / name), DataProvider(corpus_dir))
        assert not [d for d in diags if d.is_error]


def test_validate_is_pure():
    m, _ = parse_file(FIXTURES / "variants.stf")
    a = report_json(validate(m, DataProvider(FIXTURES)))
    b = report_json(validate(m, DataProvider(FIXTURES)))
    assert a == b


def test_diagnostics_sorted_by_position():
    m, _ = parse_file(FIXTURES / "variants.stf")
    diags = validate(m)
    keys = [d.sort_key() for d in diags]
    assert keys == sorted(keys)


def test_report_records():
    diags = check(RULE_DIR / "E005.stf")
    rec, = json.loads(report_json(diags))
    assert rec["rule"] == "E005" and rec["severity"] == "error"
    assert rec["span"]["line"] == 5 and rec["span"]["column"] == 17
    assert "message" in rec


def test_e011_silent_without_file(tmp_path):
    src = (RULE_DIR / "E011.stf").read_text()
    (tmp_path / "m.stf").write_text(src)
    assert [d.rule_id for d in check(tmp_path / "m.stf")] == []


def test_e011_malformed_file(tmp_path):
    (tmp_path / "m.stf").write_text((RULE_DIR / "E011.stf").read_text())
    (tmp_path / "wrong.json").write_text('{"format_version": 1, "algorithm": "mystery"}')
    diags = check(tmp_path / "m.stf")
    assert [d.rule_id for d in diags] == ["E011"]
    assert "mystery" in diags[0].message


def test_pretrained_skips_w101():
    # E012 fixture has a pretrained model: predicting without training is fine
    diags = check(RULE_DIR / "E012.stf")
    assert "W101" not in {d.rule_id for d in diags}


THING = """
thing A {{
    property x : Float
    property y : {label}
    property n : Int = 0
    message m(k : Int)
    port p {{
        receives m
        sends m
    }}
    data_analytics {{
        dataset "d.csv"
        features x
        labels y
        {mode}
    }}
    statechart S init X {{
        state X {{
            on_entry {{
                da_preprocess
                da_train
                {body}
            }}
        }}
    }}
}}
"""


def rules_of(label="Float", mode="model linear_regression { ridge = 0.1 }", body=""):
    m = parse_ok(THING.format(label=label, mode=mode, body=body))
    return [d.rule_id for d in validate(m)]


def test_e006_variants():
    assert rules_of() == []
    assert rules_of(label="Bool") == ["E006"]
    assert rules_of(label="String", mode="model knn { k = 3 }") == []
    assert rules_of(label="Bool", mode="automl { metric rmse folds 5 }") == ["E006"]
    assert rules_of(mode="automl { metric rmse folds 1 }") == ["E006"]
    assert rules_of(mode="model knn { k = 0 }") == ["E006"]
    assert rules_of(mode="model forest { depth = 3 }") == ["E006"]


def test_e009_variants():
    assert rules_of(body="p!m(1, 2)") == ["E009"]
    assert rules_of(body="p!m(1.5)") == ["E009"]
    assert rules_of(body="n = n + 1") == []
    assert rules_of(body="x = n") == []           # Int widens to Float
    assert rules_of(body="n = x") == ["E009"]
    assert rules_of(body="if n { print 1 }") == ["E009"]
    assert rules_of(body="print undefined_name") == ["E009"]


def test_e008_unknown_initial():
    m = parse_ok("thing A { statechart S init Nowhere { state X { } } }")
    assert [d.rule_id for d in validate(m)] == ["E008"]


def test_e007_param_type_mismatch():
    src = (RULE_DIR / "E007.stf").read_text().replace("sends m q", "sends m")
    assert [d.rule_id for d in validate(parse_ok(src))] == []
    src = src.replace("thing B {\n    message m()", "thing B {\n    message m(v : Int)")
    assert [d.rule_id for d in validate(parse_ok(src))] == ["E007"]


# -- reachability ----------------------------------------------------------------------

def machine(n, edges, entry=None):
    """Build a statechart over states S0..S(n-1)."""
    entry = entry or {}
    states = []
    for i in range(n):
        trs = tuple(Transition(f"S{i}", f"S{j}", None, None,
                               tuple(DaAction(a) for a in acts))
                    for s, j, acts in edges if s == i)
        states.append(State(f"S{i}", tuple(DaAction(a) for a in entry.get(i, ())), (), trs))
    return StateMachine("M", "S0", tuple(states))


def test_linear_chain_all_reachable():
    r = reachability(machine(3, [(0, 1, ()), (1, 2, ())]))
    assert all(r.reachable.values())


def test_isolated_state_unreachable():
    r = reachability(machine(4, [(0, 1, ()), (1, 2, ())]))
    assert r.reachable == {"S0": True, "S1": True, "S2": True, "S3": False}


def test_diamond_untrained_branch():
    # S0 -> S1 (train) -> S3 (predict); S0 -> S2 -> S3
    sm = machine(4, [(0, 1, ()), (0, 2, ()), (1, 3, ()), (2, 3, ())],
                 entry={1: ["da_preprocess", "da_train"], 3: ["da_predict"]})
    assert len(reachability(sm).untrained_predicts) == 1
    sm = machine(4, [(0, 1, ()), (0, 2, ()), (1, 3, ()), (2, 3, ())],
                 entry={1: ["da_train"], 2: ["da_train"], 3: ["da_predict"]})
    assert reachability(sm).untrained_predicts == []


ACTIONS = st.sampled_from(["da_preprocess", "da_train", "da_predict"])


@st.composite
def small_machines(draw):
    n = draw(st.integers(1, 6))
    edges = draw(st.lists(st.tuples(st.integers(0, n - 1), st.integers(0, n - 1),
                                    st.lists(ACTIONS, max_size=2)), max_size=10))
    entry = {i: draw(st.lists(ACTIONS, max_size=2)) for i in range(n)}
    return n, edges, entry


@settings(max_examples=400, deadline=None)
@given(small_machines())
def test_path_facts_match_enumeration(case):
    n, edges, entry = case
    r = reachability(machine(n, edges, entry))
    states = {i: entry.get(i, []) for i in range(n)}
    reach, untrained, unprepared = enumerate_da_paths(states, 0, edges, max_len=4 * n + 4)
    assert {k for k, v in r.reachable.items() if v} == {f"S{i}" for i in reach}
    assert bool(r.untrained_predicts) == untrained
    assert bool(r.unprepared_trains) == unprepared
