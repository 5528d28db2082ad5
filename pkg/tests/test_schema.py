import pytest
from hypothesis import given, strategies as st

from sealkit.errors import SchemaError
from sealkit.schema import (
    Field,
    FieldTree,
    InsertOutcome,
    ToolPool,
    append_value_examples,
    canonical_key,
    extract_value_examples,
    tool_from_json,
    tool_to_json,
    validate_tool,
)

from conftest import make_tool, tool_json


@pytest.mark.parametrize(
    "description, expected",
    [
        ("The city to query (e.g., Beijing, London, New York)", ["Beijing", "London", "New York"]),
        ("Date (e.g., 2023-09-10, ...)", ["2023-09-10"]),
        ("Date (E.g., 2023-09-10, 2024-01-01…)", ["2023-09-10", "2024-01-01"]),
        ("Quoted (e.g., \"red wine\", 'blue cheese').", ["red wine", "blue cheese"]),
        ("No clause here", []),
        ("Clause (e.g., x) then more text", []),
        ("", []),
    ],
)
def test_extract_value_examples(description, expected):
    assert extract_value_examples(description) == expected


def test_append_then_extract_round_trip():
    desc = append_value_examples("The name of the restaurant", ["Golden Dragon", "Cafe (Paris), Left Bank"])
    assert extract_value_examples(desc) == ["Golden Dragon", "Cafe Paris Left Bank"]
    assert append_value_examples("unchanged", []) == "unchanged"


def test_validate_tool_reports_every_violation():
    raw = {
        "api_name": "",
        "field": "NoSlash",
        "parameters": {"a": {"type": "string", "description": "x"}},
        "required": ["a", "b", "a"],
        "responses": {},
    }
    codes = validate_tool(raw).codes
    for code in ("MISSING_KEY", "EMPTY_NAME", "BAD_FIELD_PATH", "UNKNOWN_PARAM_TYPE",
                 "REQUIRED_PARAM_MISSING", "DUPLICATE_REQUIRED", "EMPTY_RESPONSES"):
        assert code in codes
    assert validate_tool([]).codes == ["NOT_AN_OBJECT"]


def test_empty_responses_allowed_by_flag():
    raw = tool_json("noop", responses={})
    assert "EMPTY_RESPONSES" in validate_tool(raw).codes
    assert validate_tool(raw, allow_empty_responses=True).ok


def test_tool_from_json_rejects_invalid():
    with pytest.raises(SchemaError):
        tool_from_json({"api_name": "x"})


def test_tool_json_round_trip_keeps_extra_keys_last():
    raw = tool_json("getWeather", {"city": "City (e.g., Oslo, Lima)"}, ["city"])
    raw["version"] = 2
    tool = tool_from_json(raw)
    assert tool.parameters["city"].example_values == ["Oslo", "Lima"]
    out = tool_to_json(tool)
    assert out == raw and list(out)[-1] == "version"
    assert "field" not in tool_to_json(tool, include_field=False)


@pytest.mark.parametrize("a, b", [("getWeather", "get_weather"), ("GetWeather", "get-weather "), ("API2", "api_2")])
def test_canonical_key_collisions(a, b):
    assert canonical_key(a) == canonical_key(b)


def test_pool_dedup_and_lookup():
    pool = ToolPool()
    assert pool.insert(make_tool("getWeather")) is InsertOutcome.ADDED
    assert pool.insert(make_tool("get_weather")) is InsertOutcome.DUPLICATE
    assert len(pool) == 1 and "GET_WEATHER" in pool
    assert pool.get("get_weather").name == "getWeather"
    assert pool.lookup("get_weather") is None
    assert pool.lookup("getWeather") is pool[0]


def test_field_tree_rejects_duplicates():
    with pytest.raises(SchemaError):
        FieldTree([Field("A", ["x"]), Field("A", ["y"])])
    with pytest.raises(SchemaError):
        FieldTree([Field("A", ["x", "x"])])
    tree = FieldTree([Field("A", ["x", "y"]), Field("B", [])])
    assert FieldTree.from_json(tree.to_json()) == tree
    assert list(tree.paths()) == [("A", "x"), ("A", "y")] and tree.subfield_count == 2


names = st.from_regex(r"[a-z][A-Za-z0-9_]{0,12}", fullmatch=True)
kinds = st.sampled_from(["str", "int", "float", "bool"])
texts = st.text(st.characters(blacklist_categories=("Cs",)), max_size=40)


@st.composite
def raw_tools(draw):
    params = draw(st.dictionaries(names, st.tuples(kinds, texts), max_size=5))
    required = draw(st.lists(st.sampled_from(sorted(params)), unique=True)) if params else []
    responses = draw(st.dictionaries(names, st.tuples(kinds, texts), min_size=1, max_size=3))
    return tool_json(draw(names), params, required, responses, field="F/S", description=draw(texts))


@given(raw_tools())
def test_valid_tools_round_trip(raw):
    assert validate_tool(raw).ok
    assert tool_to_json(tool_from_json(raw)) == raw


@given(names, names)
def test_pool_never_holds_two_tools_with_one_key(a, b):
    pool = ToolPool([make_tool(a), make_tool(b)])
    assert len({canonical_key(t) for t in pool}) == len(pool)
    assert len(pool) == (1 if canonical_key(a) == canonical_key(b) else 2)
