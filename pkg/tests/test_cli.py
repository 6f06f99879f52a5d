import json
import shutil

import pytest

from stf import __version__
from stf.cli import main

from conftest import FIXTURES


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def test_version(capsys):
    code, out, _ = run(capsys, "version")
    assert code == 0 and out.strip() == f"stf {__version__}"


def test_check_clean_corpus(capsys, corpus_case):
    model, _ = corpus_case
    code, out, _ = run(capsys, "check", model)
    assert code == 0
    assert " 0 error(s)" in out


def test_check_reports_error(capsys):
    path = FIXTURES / "rules" / "E005.stf"
    code, out, _ = run(capsys, "check", path)
    assert code == 1
    assert any(line.startswith(f"{path}:5:17: error[E005]") for line in out.splitlines())


def test_check_parse_error(capsys, tmp_path):
    (tmp_path / "bad.stf").write_text("thing A { staet X }")
    code, out, _ = run(capsys, "check", tmp_path / "bad.stf")
    assert code == 1 and "error[" in out


def test_missing_file_is_usage_error(capsys, tmp_path):
    code, out, _ = run(capsys, "check", tmp_path / "nope.stf")
    assert code == 2 and "not found" in out


def test_bad_arguments(capsys):
    assert main(["frobnicate"]) == 2
    assert main(["run"]) == 2
    capsys.readouterr()


def test_report_format_split(capsys):
    path = FIXTURES / "rules" / "E005.stf"
    code, out, err = run(capsys, "check", "--format", "report", path)
    rep = json.loads(out)
    assert code == 1 and rep["exit_code"] == 1
    assert [d["rule"] for d in rep["diagnostics"]] == ["E005"]
    assert "error[E005]" in err


def test_generate_and_run_bundle(capsys, corpus_dir, tmp_path):
    model = corpus_dir / "pingpong.stf"
    bundle = tmp_path / "out" / "pp.json"
    code, _, _ = run(capsys, "generate", model, "-o", bundle)
    assert code == 0 and bundle.is_file()
    first = bundle.read_bytes()
    run(capsys, "generate", model, "-o", bundle)
    assert bundle.read_bytes() == first

    sc = corpus_dir / "pingpong.scenario"
    code, from_bundle, _ = run(capsys, "run", bundle, "--scenario", sc, "--seed", 7,
                               "--trace-out", tmp_path / "a.jsonl")
    assert code == 0
    code, _, _ = run(capsys, "run", model, "--scenario", sc, "--seed", 7,
                     "--trace-out", tmp_path / "b.jsonl")
    assert code == 0
    assert (tmp_path / "a.jsonl").read_bytes() == (tmp_path / "b.jsonl").read_bytes()


def test_bundle_survives_move(capsys, corpus_dir, tmp_path):
    bundle = tmp_path / "pp.json"
    run(capsys, "generate", corpus_dir / "pingpong.stf", "-o", bundle)
    moved = tmp_path / "elsewhere"
    shutil.copytree(corpus_dir, moved / "corpus")
    shutil.copy(bundle, moved / "pp.json")
    # the recorded data root is relative to the bundle, so relocate both together
    rel = json.loads(bundle.read_text())["data_root"]
    assert not rel.startswith("/")
    code, _, _ = run(capsys, "run", moved / "pp.json", "--data-root", moved / "corpus")
    assert code == 0


def test_run_is_deterministic(capsys, corpus_dir):
    args = ("run", corpus_dir / "pingpong.stf", "--scenario", corpus_dir / "pingpong.scenario")
    a = run(capsys, *args)
    b = run(capsys, *args)
    assert a == b and a[0] == 0
    assert "automl" in a[1]


def test_generate_pim_without_backend(capsys, corpus_dir, tmp_path):
    code, out, _ = run(capsys, "generate", corpus_dir / "prices_pim.stf", "-o", tmp_path / "b.json")
    assert code == 1 and "--default-backend" in out
    code, _, _ = run(capsys, "generate", corpus_dir / "prices_pim.stf", "-o",
                     tmp_path / "b.json", "--default-backend", "builtin")
    assert code == 0


def test_pim_psm_merge(capsys, corpus_dir, tmp_path):
    run(capsys, "generate", corpus_dir / "prices_pim.stf", corpus_dir / "prices_psm.stf",
        "-o", tmp_path / "merged.json")
    run(capsys, "generate", corpus_dir / "prices_psm.stf", "-o", tmp_path / "psm.json")
    assert (tmp_path / "merged.json").read_bytes() == (tmp_path / "psm.json").read_bytes()


def test_generate_pack(capsys, corpus_dir, tmp_path):
    code, out, _ = run(capsys, "generate", corpus_dir / "nialm.stf", "--target", "pack:reference",
                       "-o", tmp_path / "gen")
    assert code == 0 and (tmp_path / "gen" / "MANIFEST.json").is_file()
    code, _, _ = run(capsys, "generate", corpus_dir / "nialm.stf", "--target", "zip")
    assert code == 2


STRICT = """
thing A {
    property x : Float = 1.0
    property y : Float
    data_analytics {
        dataset "d.csv"
        features x
        labels y
        model linear_regression { ridge = 0.0 }
    }
    statechart S init X {
        state X {
            on_entry {
                da_predict
            }
        }
    }
}
configuration C {
    instance a : A
}
"""


def test_strict_exit_on_runtime_error(capsys, tmp_path):
    (tmp_path / "d.csv").write_text("x,y\n1,2\n2,3\n3,4\n")
    (tmp_path / "m.stf").write_text(STRICT)
    code, _, _ = run(capsys, "run", tmp_path / "m.stf")
    assert code == 0
    code, out, _ = run(capsys, "run", tmp_path / "m.stf", "--strict")
    assert code == 3 and "model not ready" in out


def test_bad_scenario_is_usage_error(capsys, corpus_dir, tmp_path):
    (tmp_path / "s.scenario").write_text("1 nobody p ping 1\n")
    code, out, _ = run(capsys, "run", corpus_dir / "pingpong.stf", "--scenario",
                       tmp_path / "s.scenario")
    assert code == 2 and "scenario" in out


def test_synth(capsys, tmp_path):
    code, _, _ = run(capsys, "synth", "pingpong", "--seed", 1, "-n", 50, "-o", tmp_path / "p.csv")
    lines = (tmp_path / "p.csv").read_text().splitlines()
    assert code == 0 and lines[0] == "ip_block,hour,attacker" and len(lines) == 51
    code, out, _ = run(capsys, "synth", "pingpong", "--seed", 1, "-n", 50)
    assert out == (tmp_path / "p.csv").read_text()
    assert run(capsys, "synth", "weather")[0] == 2


@pytest.mark.parametrize("n", [0, -3])
def test_synth_bad_size(capsys, n):
    assert run(capsys, "synth", "nialm", "-n", n)[0] == 2
