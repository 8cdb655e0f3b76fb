import pytest
from hypothesis import given, strategies as st

from sentisim.errors import DataError
from sentisim.scenarios import DEFAULT_TOPICS, Polarity, Scenario, assign_framings, frame, load_scenarios, topic_seed


def _write(tmp_path, body):
    p = tmp_path / "sc.yaml"
    p.write_text(body, encoding="utf-8")
    return p


def test_bundled_topics(scenarios):
    assert tuple(s.topic for s in scenarios) == DEFAULT_TOPICS


def test_identical_framings_rejected(tmp_path):
    p = _write(tmp_path, "scenarios:\n  - {topic: x, positive_text: same, negative_text: same}\n")
    with pytest.raises(DataError, match="framings identical"):
        load_scenarios(p)


def test_single_and_duplicate(tmp_path):
    one = "scenarios:\n  - {topic: x, positive_text: up, negative_text: down}\n"
    assert len(load_scenarios(_write(tmp_path, one))) == 1
    with pytest.raises(DataError, match="duplicate topic"):
        load_scenarios(_write(tmp_path, one + "  - {topic: x, positive_text: a, negative_text: b}\n"))
    with pytest.raises(DataError, match="empty framing text"):
        load_scenarios(_write(tmp_path, "scenarios:\n  - {topic: y, positive_text: a}\n"))


def test_frame_selects_text(scenarios):
    inflation = next(s for s in scenarios if s.topic == "inflation")
    assert frame(inflation, Polarity.POSITIVE).text == inflation.positive_text
    assert frame(inflation, Polarity.NEGATIVE).text == inflation.negative_text
    for s in scenarios:
        assert frame(s, Polarity.POSITIVE).text != frame(s, Polarity.NEGATIVE).text
        assert frame(s, "Negative").scenario_topic == s.topic


def test_assign_examples():
    ids = [f"r{i}" for i in range(10)]
    assert assign_framings(ids, 1).counts() == (5, 5)
    assert assign_framings(ids + ["r10"], 1).counts() == (6, 5)
    assert assign_framings(ids, 42).polarities == assign_framings(ids, 42).polarities
    with pytest.raises(DataError):
        assign_framings(["a", "a"], 0)


@given(st.integers(1, 200), st.integers(0, 2**32))
def test_balance_and_bijection(n, seed):
    ids = [f"a{i}" for i in range(n)]
    a = assign_framings(ids, seed)
    pos, neg = a.counts()
    assert abs(pos - neg) <= 1 and pos >= neg
    assert list(a.polarities) == ids


def test_marginal_uniformity():
    hits = sum(assign_framings(["x", "y"], seed)["x"] is Polarity.POSITIVE for seed in range(2000))
    assert abs(hits / 2000 - 0.5) <= 0.05


def test_topic_seeds_are_independent():
    assert topic_seed(1, "inflation") != topic_seed(1, "wage_policies")
    assert topic_seed(1, "inflation") == topic_seed(1, "inflation")
    with pytest.raises(DataError):
        Scenario("t", "", "x")
