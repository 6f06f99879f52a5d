import sys
import shutil
from pathlib import Path

import pytest

from stf.corpus import DATA_DIR, corpus_models
from stf.model import FileResolver, merge_imports
from stf.parser import parse, parse_file

FIXTURES = Path(__file__).parent / "fixtures"


def load(path):
    """Parse and merge a model file; fails the test on parse errors."""
    path = Path(path)
    m, diags = parse_file(path)
    assert not diags, [d.render() for d in diags]
    return merge_imports(m, FileResolver(), origin=str(path.resolve()))


def parse_ok(text, filename="<test>"):
    m, diags = parse(text, filename)
    assert not diags, [d.render() for d in diags]
    return m


@pytest.fixture
def corpus_dir(tmp_path):
    """A private copy of the shipped corpus data."""
    dst = tmp_path / "corpus"
    shutil.copytree(DATA_DIR, dst)
    return dst


@pytest.fixture(params=[m.name for m, _ in corpus_models()])
def corpus_case(request):
    for m, s in corpus_models():
        if m.name == request.param:
            return m, s


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    if mod is None or not mod.RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(mod.RESULTS, key=lambda s: int(s.split()[0][1:])):
        terminalreporter.write_line(line)
