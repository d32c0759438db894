import pytest

from adjforge import corpus, suite

CHECKS = suite.checks()


@pytest.mark.parametrize("check", CHECKS, ids=[c.name for c in CHECKS])
def test_corpus_check(check):
    (result,) = [r for r in suite.run(filter=check.name) if r.name == check.name]
    assert result.passed, result.line()
    assert result.anchor


def test_every_fixture_names_an_anchor():
    for name in corpus.names():
        assert suite.document(name).meta.get("anchor"), name


def test_run_is_deterministic_for_a_seed():
    a = [(r.name, r.passed, r.detail) for r in suite.run(criterion=2, seed=17)]
    b = [(r.name, r.passed, r.detail) for r in suite.run(criterion=2, seed=17)]
    assert a == b


def test_corpus_runtime_budget():
    results = suite.run()
    assert sum(r.seconds for r in results) < 60
    assert all(r.seconds < 2 for r in results)
