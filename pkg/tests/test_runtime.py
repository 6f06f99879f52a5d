import json

import pytest

from stf.runtime import (InstantiationError, ScenarioError, instantiate, load_scenario,
                         parse_scenario)
from stf.runtime.trace import read_trace, records

from conftest import load, parse_ok

PINGPONG = """
thing Pong {
    property n : Int = 0
    message ping(k : Int)
    message pong(k : Int)
    port p {
        receives ping
        sends pong
    }
    statechart S init Idle {
        state Idle {
            transition -> Idle event p.ping guard k > 100 {
                print "big"
            }
            transition -> Idle event p.ping {
                n = n + 1
                p!pong(k)
            }
            transition -> Idle event p.ping {
                print "never"
            }
        }
    }
}

thing Ping {
    property got : Int = 0
    message ping(k : Int)
    message pong(k : Int)
    port p {
        receives pong
        sends ping
    }
    statechart S init Wait {
        state Wait {
            transition -> Wait event p.pong {
                got = got + 1
            }
        }
    }
}

configuration C {
    instance a : Ping
    instance b : Pong
    connector a.p <-> b.p
}
"""


def sim_of(text, **kw):
    return instantiate(parse_ok(text), **kw)


def events(trace, kind=None, instance=None):
    return [e for e in trace if (kind is None or e.kind == kind)
            and (instance is None or e.instance == instance)]


def test_instances_start_in_initial_states():
    sim = sim_of(PINGPONG)
    sim.start()
    assert [i.name for i in sim.instances] == ["a", "b"]
    assert [i.program.state_names[i.state] for i in sim.instances] == ["Wait", "Idle"]
    assert [(e.tick, e.kind) for e in sim.trace] == [(0, "state_enter"), (0, "state_enter")]


def test_empty_scenario_quiesces_at_tick_zero():
    sim = sim_of(PINGPONG)
    trace = sim.run()
    assert {e.kind for e in trace} == {"state_enter"}
    assert sim.tick == 0


def test_reply_arrives_next_tick():
    trace = sim_of(PINGPONG).run(parse_scenario("3 b p ping 7"))
    send = events(trace, "send", "b")[0]
    recv = events(trace, "receive", "a")[0]
    assert send.tick == 3 and send.data == {"port": "p", "message": "pong", "args": [7]}
    assert recv.tick == 4 and recv.data["args"] == [7]


def test_first_matching_transition_fires():
    trace = sim_of(PINGPONG).run(parse_scenario("1 b p ping 500\n2 b p ping 1"))
    prints = [e.data["text"] for e in events(trace, "print")]
    assert prints == ["big"]
    assert len(events(trace, "send", "b")) == 1


def test_external_self_loop_runs_exit_and_entry():
    trace = sim_of(PINGPONG).run(parse_scenario("1 b p ping 1"))
    kinds = [e.kind for e in trace if e.tick == 1]
    assert kinds == ["receive", "state_exit", "assign", "send", "state_enter"]


def test_guard_false_discards():
    src = PINGPONG.replace("guard k > 100", "guard false").replace(
        """            transition -> Idle event p.ping {
                n = n + 1
                p!pong(k)
            }
            transition -> Idle event p.ping {
                print "never"
            }
""", "")
    sim = sim_of(src)
    trace = sim.run(parse_scenario("1 b p ping 1"))
    notes = events(trace, "note", "b")
    assert len(notes) == 1 and notes[0].data["message"].startswith("discarded p.ping")
    assert sim.by_name["b"].state == 0
    assert not events(trace, "state_exit")


def test_message_conservation():
    src = PINGPONG.replace("    connector a.p <-> b.p\n", "")
    trace = sim_of(src).run(parse_scenario("1 b p ping 1\n2 b p ping 2"))
    sends = events(trace, "send")
    dropped = [e for e in events(trace, "note") if e.data["message"].startswith("dropped")]
    assert len(sends) == 2 and len(dropped) == 2 and not events(trace, "receive", "a")
    trace = sim_of(PINGPONG).run(parse_scenario("1 b p ping 1\n2 b p ping 2"))
    assert len(events(trace, "send")) == len(events(trace, "receive", "a")) == 2


def test_one_message_per_tick_fifo():
    trace = sim_of(PINGPONG).run(parse_scenario("1 b p ping 1\n1 b p ping 2\n1 b p ping 3"))
    got = [(e.tick, e.data["args"][0]) for e in events(trace, "receive", "b")]
    assert got == [(1, 1), (2, 2), (3, 3)]


def test_ticks_non_decreasing_and_sorted_keys():
    trace = sim_of(PINGPONG).run(parse_scenario("1 b p ping 1\n5 b p ping 2"))
    ticks = [e.tick for e in trace]
    assert ticks == sorted(ticks)
    for line in trace.to_jsonl().splitlines():
        keys = list(json.loads(line))
        assert keys == sorted(keys)


def test_trace_file_roundtrip(tmp_path):
    trace = sim_of(PINGPONG).run(parse_scenario("1 b p ping 1"))
    trace.write(tmp_path / "t.jsonl")
    assert read_trace(tmp_path / "t.jsonl") == records(trace)


def test_determinism():
    a = sim_of(PINGPONG).run(parse_scenario("1 b p ping 1\n3 b p ping 200")).to_jsonl()
    b = sim_of(PINGPONG).run(parse_scenario("1 b p ping 1\n3 b p ping 200")).to_jsonl()
    assert a == b


def test_max_ticks_stops_run():
    src = PINGPONG.replace("""            transition -> Wait event p.pong {""",
                           """            transition -> Wait {
                got = got + 1
            }
            transition -> Wait event p.pong {""")
    sim = sim_of(src)
    sim.run(max_ticks=25)
    assert sim.tick == 25
    # ticks 0..max_ticks inclusive are stepped
    assert sim.by_name["a"].props["got"] == 26


def test_division_by_zero_halts_instance():
    src = PINGPONG.replace("n = n + 1", "n = n / (k - k)")
    sim = sim_of(src)
    trace = sim.run(parse_scenario("1 b p ping 1\n2 b p ping 2"))
    err = events(trace, "error", "b")
    assert len(err) == 1 and err[0].data["source"] == "runtime"
    assert "division by zero" in err[0].data["message"]
    assert sim.by_name["b"].halted
    assert len(events(trace, "receive", "b")) == 1


def test_property_types_preserved():
    src = PINGPONG.replace("property got : Int = 0", "property got : Float = 0.0").replace(
        "got = got + 1", "got = 1")
    sim = sim_of(src)
    sim.run(parse_scenario("1 b p ping 1"))
    assert isinstance(sim.by_name["a"].props["got"], float)


@pytest.mark.parametrize("script, fragment", [
    ("1 z p ping 1", "unknown instance"),
    ("1 b q ping 1", "no port"),
    ("1 b p pong 1", "does not receive"),
    ("1 b p ping 1,2", "takes 1 argument"),
    ("1 b p ping x", "argument 'k'"),
])
def test_bad_injections(script, fragment):
    with pytest.raises(ScenarioError, match=fragment):
        sim_of(PINGPONG).run(parse_scenario(script))


@pytest.mark.parametrize("text", ["x b p ping", "1 b p", "max_ticks many"])
def test_bad_scenario_syntax(text):
    with pytest.raises(ScenarioError):
        parse_scenario(text)


def test_scenario_comments_and_order():
    s = parse_scenario("# c\nmax_ticks 9\n5 b p ping 1\n2 b p ping 2  # late comment\n")
    assert s.max_ticks == 9
    assert [(i.tick, i.args) for i in s.injections] == [(2, ("2",)), (5, ("1",))]


def test_unknown_thing_rejected():
    src = PINGPONG.replace("instance b : Pong", "instance b : Nobody")
    with pytest.raises(InstantiationError):
        sim_of(src)


# -- DA bindings -----------------------------------------------------------------------

DA_THING = """
thing Model {{
    property x : Float = 3.0
    property y : {ytype}
    message go()
    port p {{
        receives go
    }}
    data_analytics {{
        dataset "d.csv"
        features x
        labels y
        {mode}
        {extra}
    }}
    statechart S init A {{
        state A {{
            on_entry {{
                {entry}
            }}
            transition -> A event p.go {{
                {actions}
            }}
        }}
    }}
}}

configuration C {{
    instance m : Model
}}
"""

LINEAR_DOC = {
    "format_version": 1, "algorithm": "linear_regression", "task": "regression",
    "schema": {"features": [{"name": "x", "type": "numeric"}],
               "labels": [{"name": "y", "type": "numeric"}]},
    "scaler": {"kind": "none", "columns": []}, "encoder": {},
    "parameters": {"weights": [2.0], "intercept": 1.0}, "trained_on": 0,
}


def da_sim(tmp_path, ytype="Float", mode="model linear_regression { ridge = 0.0 }", extra="",
           entry="", actions="", csv=None, **kw):
    if csv is not None:
        (tmp_path / "d.csv").write_text(csv)
    src = DA_THING.format(ytype=ytype, mode=mode, extra=extra, entry=entry, actions=actions)
    return instantiate(parse_ok(src), data_root=tmp_path, **kw)


LINE_CSV = "x,y\n" + "".join(f"{i},{2 * i + 1}\n" for i in range(20))


def test_pretrained_ready_without_training(tmp_path):
    (tmp_path / "m.json").write_text(json.dumps(LINEAR_DOC))
    sim = da_sim(tmp_path, extra='pretrained "m.json"', actions="da_predict")
    assert sim.by_name["m"].da.ready
    trace = sim.run(parse_scenario("1 m p go"))
    assert not events(trace, "da_train")
    pred, = events(trace, "da_predict")
    assert pred.data["inputs"] == {"x": 3.0}
    assert abs(sim.by_name["m"].props["y"] - 7.0) < 1e-9


def test_int_label_rounds(tmp_path):
    doc = dict(LINEAR_DOC, parameters={"weights": [2.0], "intercept": 0.6})
    (tmp_path / "m.json").write_text(json.dumps(doc))
    sim = da_sim(tmp_path, ytype="Int", extra='pretrained "m.json"', actions="da_predict")
    sim.run(parse_scenario("1 m p go"))
    assert sim.by_name["m"].props["y"] == 7


def test_missing_dataset_is_instantiation_error(tmp_path):
    with pytest.raises(InstantiationError, match="dataset file not found"):
        da_sim(tmp_path)


def test_train_before_preprocess_is_error(tmp_path):
    trace = da_sim(tmp_path, csv=LINE_CSV, entry="da_train").run()
    err, = events(trace, "error")
    assert err.data["source"] == "da_train" and "no prepared data" in err.data["message"]


def test_predict_before_training_is_error(tmp_path):
    sim = da_sim(tmp_path, csv=LINE_CSV, actions="da_predict\nprint y")
    trace = sim.run(parse_scenario("1 m p go"))
    err, = events(trace, "error")
    assert "model not ready" in err.data["message"]
    # DA errors do not halt the instance
    assert events(trace, "print") and not sim.by_name["m"].halted


def test_expert_training_report(tmp_path):
    sim = da_sim(tmp_path, csv=LINE_CSV, entry="da_preprocess\nda_train", actions="da_predict")
    trace = sim.run(parse_scenario("1 m p go"))
    rep = events(trace, "da_train")[0].data["report"]
    assert rep["mode"] == "expert" and rep["algorithm"] == "linear_regression"
    assert rep["rows"] == 20 and rep["train_metrics"]["rmse"] < 1e-9
    assert abs(sim.by_name["m"].props["y"] - 7.0) < 1e-9


def test_automl_training_picks_linear(tmp_path):
    sim = da_sim(tmp_path, csv=LINE_CSV, mode="automl { metric rmse folds 5 }",
                 entry="da_preprocess\nda_train")
    rep = events(sim.run(), "da_train")[0].data["report"]
    assert rep["mode"] == "automl" and rep["algorithm"] == "linear_regression"
    assert rep["metric"] == "rmse" and rep["folds"] == 5


def test_da_save_appends_row(tmp_path):
    src = """
thing Guard {
    property ip : Int = 5
    property hour : Int = 13
    property attacker : Bool = false
    statechart S init A {
        state A {
            on_entry {
                da_save
            }
        }
    }
    data_analytics_placeholder
}
"""
    csv = "ip,hour,attacker\n1,2,true\n"
    (tmp_path / "g.csv").write_text(csv)
    block = """data_analytics {
        dataset "g.csv"
        features ip hour
        labels attacker
        model knn { k = 1 }
    }"""
    # the DA block must precede the statechart
    text = src.replace("    data_analytics_placeholder\n", "").replace(
        "    statechart", "    " + block + "\n    statechart")
    text += "configuration C {\n    instance g : Guard\n}\n"
    m = parse_ok(text)
    sim = instantiate(m, data_root=tmp_path)
    saved, = events(sim.run(), "da_save")
    assert saved.data == {"row": {"ip": 5, "hour": 13, "attacker": False}, "rows": 2}
    assert (tmp_path / "g.csv").read_text() == csv
    sim = instantiate(m, data_root=tmp_path, persist_saves=True)
    sim.run()
    assert (tmp_path / "g.csv").read_text() == csv + "5,13,false\n"


def test_seed_changes_only_seeded_parts(corpus_dir):
    m = load(corpus_dir / "pingpong.stf")
    sc = load_scenario(corpus_dir / "pingpong.scenario")
    a = instantiate(m, data_root=corpus_dir, seed=1).run(sc).to_jsonl()
    b = instantiate(m, data_root=corpus_dir, seed=1).run(sc).to_jsonl()
    assert a == b


def test_pingpong_benign_and_attacker(corpus_dir):
    m = load(corpus_dir / "pingpong.stf")
    sim = instantiate(m, data_root=corpus_dir)
    trace = sim.run(load_scenario(corpus_dir / "pingpong.scenario"))
    pings = [e.data["args"] for e in events(trace, "receive", "server")]
    pongs = events(trace, "send", "server")
    assert pings == [[10, 14], [210, 3], [120, 20], [37, 9]]
    # the (210, 3) ping matches the attacker rule and is ignored with a note
    assert len(pongs) == 3
    assert any("ignored" in e.data.get("text", "") for e in events(trace, "print", "server"))
