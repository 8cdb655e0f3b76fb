import io
import textwrap

import pytest
from hypothesis import given, strategies as st

from sentisim.errors import DataError, SchemaError
from sentisim.profiles import (
    ITEM_SCALE, ConstructDefinition, LikertScale, RespondentProfile, construct_mean, dump_respondents,
    load_respondents, load_schema, parse_respondents, reverse_score, write_respondents,
)

MINIMAL = """\
demographics:
  - {id: region, kind: text}
constructs:
  - id: c1
    name: Construct one
    items: [q1, q2]
scales:
  item: {n_points: 7}
  sentiment: {n_points: 5}
"""


def _write(tmp_path, text, name="schema.yaml"):
    p = tmp_path / name
    p.write_text(textwrap.dedent(text), encoding="utf-8")
    return p


def test_minimal_schema(tmp_path):
    s = load_schema(_write(tmp_path, MINIMAL))
    assert [d.id for d in s.demographics] == ["region"]
    assert s.item_ids == ["q1", "q2"]
    assert s.item_scale.n_points == 7 and s.sentiment_scale.n_points == 5


def test_duplicate_item_reports_position(tmp_path):
    bad = MINIMAL.replace("items: [q1, q2]", "items: [q9, q9]")
    with pytest.raises(SchemaError, match=r"schema\.yaml:\d+: duplicate item id 'q9'"):
        load_schema(_write(tmp_path, bad))


def test_item_shared_across_constructs(tmp_path):
    bad = MINIMAL.replace("scales:", "  - id: c2\n    items: [q2, q3]\nscales:")
    with pytest.raises(SchemaError, match="duplicate item id 'q2'"):
        load_schema(_write(tmp_path, bad))


def test_scale_too_small(tmp_path):
    with pytest.raises(SchemaError, match="n_points 1"):
        load_schema(_write(tmp_path, MINIMAL.replace("item: {n_points: 7}", "item: {n_points: 1}")))


def test_unparseable_schema(tmp_path):
    with pytest.raises(SchemaError, match="parse error"):
        load_schema(_write(tmp_path, "constructs: [\n"))


def test_demo_schema_has_six_constructs(schema):
    assert len(schema.constructs) == 6
    assert len(schema.demographics) == 8


def test_likert_scale_invariants():
    with pytest.raises(SchemaError):
        LikertScale(("only",))
    with pytest.raises(SchemaError):
        LikertScale(("a", "a"))
    assert ITEM_SCALE.label(1) == "Strongly Disagree" and ITEM_SCALE.index("Strongly Agree") == 7


def test_construct_invariants():
    with pytest.raises(SchemaError):
        ConstructDefinition("c", "c", ())
    with pytest.raises(SchemaError):
        ConstructDefinition("c", "c", ("a",), reverse_scored={"b"})


def _rows(schema, profiles):
    return dump_respondents(profiles, schema)


def test_three_row_fixture(schema, profiles):
    text = _rows(schema, profiles[:3])
    loaded = parse_respondents(io.StringIO(text), schema)
    assert len(loaded) == 3
    assert [p.respondent_id for p in loaded] == [p.respondent_id for p in profiles[:3]]


def test_out_of_range_names_row_and_item(schema, profiles):
    text = _rows(schema, profiles[:2])
    lines = text.splitlines()
    header = lines[0].split(",")
    cells = lines[2].split(",")
    cells[header.index("ext2")] = "8"
    lines[2] = ",".join(cells)
    with pytest.raises(DataError, match=r"row 3.*ext2|ext2.*row 3"):
        parse_respondents(io.StringIO("\n".join(lines)), schema)


def test_non_numeric_item(schema, profiles):
    lines = _rows(schema, profiles[:1]).splitlines()
    header = lines[0].split(",")
    cells = lines[1].split(",")
    cells[header.index("opn1")] = "four"
    with pytest.raises(DataError, match="opn1"):
        parse_respondents(io.StringIO("\n".join([lines[0], ",".join(cells)])), schema)


def test_missing_column(schema, profiles):
    lines = _rows(schema, profiles[:1]).splitlines()
    header = lines[0].split(",")
    drop = header.index("civ3")
    strip = lambda line: ",".join(c for i, c in enumerate(line.split(",")) if i != drop)  # noqa: E731
    with pytest.raises(DataError, match="civ3"):
        parse_respondents(io.StringIO("\n".join(strip(x) for x in lines)), schema)


def test_round_trip_is_field_identical(tmp_path, schema, profiles):
    path = tmp_path / "pop.csv"
    write_respondents(path, profiles, schema)
    loaded = load_respondents(path, schema)
    assert loaded == profiles
    assert all(p.survey_weight > 0 for p in loaded)
    assert len(loaded) == 100


def test_survey_weight_must_be_positive():
    with pytest.raises(DataError):
        RespondentProfile("r", {}, {}, survey_weight=0.0)


def test_construct_mean_examples():
    c = ConstructDefinition("c", "c", ("q1", "q2"))
    rev = ConstructDefinition("c", "c", ("q1", "q2"), reverse_scored={"q2"})
    assert construct_mean(RespondentProfile("r", {}, {"q1": 4, "q2": 4}), c).mean == 4.0
    assert construct_mean(RespondentProfile("r", {}, {"q1": 2, "q2": 6}), rev).mean == 2.0
    assert construct_mean(RespondentProfile("r", {}, {"q1": 1, "q2": 7}), c).mean == 4.0
    with pytest.raises(DataError):
        construct_mean(RespondentProfile("r", {}, {"q1": 1}), c)


@given(st.integers(2, 11).flatmap(lambda n: st.tuples(st.just(n), st.integers(1, n))))
def test_reverse_is_involution(case):
    n, v = case
    assert reverse_score(reverse_score(v, n), n) == v


@given(st.lists(st.integers(1, 7), min_size=2, max_size=6), st.randoms(use_true_random=False), st.data())
def test_construct_mean_permutation_and_monotone(values, rnd, data):
    ids = [f"q{i}" for i in range(len(values))]
    c = ConstructDefinition("c", "c", tuple(ids))
    base = construct_mean(RespondentProfile("r", {}, dict(zip(ids, values))), c).mean
    shuffled = list(ids)
    rnd.shuffle(shuffled)
    permuted = ConstructDefinition("c", "c", tuple(shuffled))
    assert construct_mean(RespondentProfile("r", {}, dict(zip(ids, values))), permuted).mean == pytest.approx(base)
    k = data.draw(st.integers(0, len(values) - 1))
    bumped = list(values)
    bumped[k] = min(7, bumped[k] + 1)
    assert construct_mean(RespondentProfile("r", {}, dict(zip(ids, bumped))), c).mean >= base
