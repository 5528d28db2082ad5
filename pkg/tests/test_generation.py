import json
import random
import re

import pytest

from sealkit.backend import ScriptedBackend
from sealkit.calling import CallSequence, Literal, Ref, ToolCall, build_template
from sealkit.errors import BackfillIncompleteError, EmptyTreeError, PreconditionError, QCRejected
from sealkit.generation import (
    RunManifest,
    backfill_examples,
    coerce_example,
    combine_tools,
    fill_template,
    generate_field_tree,
    generate_multi_instances,
    generate_single_instance,
    generate_single_instances,
    generate_tools,
    qc_instance,
    rule_values,
    sensitive_category,
)
from sealkit.instances import Instance
from sealkit.schema import Field, FieldTree, ParamType, ToolPool

from conftest import golden_tools, make_tool, tool_json


def test_field_tree_dedupes_case_insensitively():
    b = ScriptedBackend(['field_list = ["Art", "Sport", "art"]', '["Painting", "painting"]', "garbage", "still garbage"])
    m = RunManifest("fields")
    tree = generate_field_tree(b, ["Science", "Healthcare"], manifest=m)
    assert [f.name for f in tree.fields] == ["Art", "Sport"]
    assert tree.fields[0].subfields == ["Painting"] and tree.fields[1].subfields == []
    assert m.batches[0].deduped == 1 and m.batches[1].deduped == 1
    assert b.calls == 4  # Sport's reply was retried once


def test_field_tree_empty():
    with pytest.raises(EmptyTreeError):
        generate_field_tree(ScriptedBackend(["no list", "no list either"]))


def test_generate_tools_stall_and_dedup():
    t1, t2 = tool_json("getA", {"x": "X"}), tool_json("getB")
    replies = [json.dumps([t1]), json.dumps([t1, t2]), json.dumps([dict(t1, api_name="get_a")]), "not json", "no json"]
    tree = FieldTree([Field("F", ["S"])])
    pool, m = generate_tools(ScriptedBackend(replies), ToolPool(), tree, stall_limit=2)
    assert pool.names() == ["getA", "getB"]
    assert all(t.field_path == "F/S" for t in pool)
    assert m.stalls["F/S"] == {"rounds": 4, "stalls": 2, "abandoned": True}
    assert [b.accepted for b in m.batches] == [1, 1, 0, 0]
    assert m.cumulative_accepted() == [1, 2, 2, 2]
    assert m.totals()["deduped"] == 2


def test_generate_tools_round_cap_and_rejections():
    bad = {"api_name": "bad", "parameters": {}}
    replies = [json.dumps([tool_json(f"t{i}"), bad]) for i in range(5)]
    pool, m = generate_tools(ScriptedBackend(replies), ToolPool(), FieldTree([Field("F", ["S"])]), max_rounds=3)
    assert len(pool) == 3 and m.stalls["F/S"]["abandoned"] is False
    assert m.totals()["rejected"] == 3 and m.qc_reasons["MISSING_KEY"] == 9


def test_generate_tools_needs_subfields():
    with pytest.raises(PreconditionError):
        generate_tools(ScriptedBackend(["x"]), ToolPool(), FieldTree([Field("F", [])]))


def test_sensitive_rules():
    assert sensitive_category("contact_email") == "email"
    assert sensitive_category("phoneNumber") == "phone"
    assert sensitive_category("telephone") == "phone"
    assert sensitive_category("emailed_count") is None
    assert sensitive_category("city") is None
    emails = rule_values("email", "seed", 5)
    assert emails == rule_values("email", "seed", 5)
    assert all(re.fullmatch(r"[a-z]+\d*@example\.(com|org|net)", e) for e in emails)
    assert all(re.fullmatch(r"\+1-\d{3}-\d{3}-\d{4}", p) for p in rule_values("phone", 1))


def test_backfill_batches_by_category():
    pool = ToolPool([
        make_tool("bookHotel", {"city": "City to stay in", "email": "Guest email"}, ["city", "email"]),
        make_tool("getWeather", {"city": "City to query"}, ["city"]),
        make_tool("getNews", {"topic": "Topic (e.g., sports)"}, ["topic"]),
    ])
    b = ScriptedBackend(['values = ["Oslo", "Lima"]'])
    backfill_examples(b, pool)
    assert b.calls == 1
    assert pool.lookup("getWeather").parameters["city"].example_values == ["Oslo", "Lima"]
    assert pool.lookup("bookHotel").parameters["city"].description.endswith("(e.g., Oslo, Lima)")
    assert "@example." in pool.lookup("bookHotel").parameters["email"].example_values[0]
    assert pool.lookup("getNews").parameters["topic"].example_values == ["sports"]


def test_backfill_incomplete():
    pool = ToolPool([make_tool("getWeather", {"city": "City"}, ["city"])])
    with pytest.raises(BackfillIncompleteError) as info:
        backfill_examples(ScriptedBackend(["nope"] * 4), pool, max_passes=2)
    assert info.value.missing == [("getWeather", "city")]


@pytest.mark.parametrize(
    "value, kind, expected",
    [("42", ParamType.INTEGER, 42), ("4.5", ParamType.FLOAT, 4.5), ("True", ParamType.BOOLEAN, True),
     ("abc", ParamType.INTEGER, "abc"), ("7", ParamType.STRING, "7")],
)
def test_coerce_example(value, kind, expected):
    out = coerce_example(value, kind)
    assert out == expected and type(out) is type(expected)


def _single(query, values, tool=None):
    tool = tool or make_tool("getWeather", {"city": "City", "days": ("int", "Days")}, ["city", "days"])
    return generate_single_instance(ScriptedBackend([f"Task description =\n\n[{query}]"]), tool, values)


def test_single_instance_accepted():
    inst = _single("What's the weather in Oslo for the next 3 days?", {"city": "Oslo", "days": 3})
    assert inst.category == "single" and not inst.nested
    assert inst.calling.calls[0].parameters == {"city": Literal("Oslo"), "days": Literal(3)}


@pytest.mark.parametrize(
    "query, reason",
    [("What's the weather in Paris for 3 days?", "VALUE_NOT_MENTIONED"),
     ("Call getWeather for Oslo, 3 days.", "API_NAME_LEAK"),
     ("   ", "EMPTY_QUERY")],
)
def test_single_instance_rejected(query, reason):
    with pytest.raises(QCRejected) as info:
        _single(query, {"city": "Oslo", "days": 3})
    assert reason in info.value.reasons


def test_single_instance_needs_all_required():
    with pytest.raises(PreconditionError):
        _single("x", {"city": "Oslo"})


def test_qc_number_renderings():
    pool = ToolPool([make_tool("setTemp", {"t": ("float", "T")}, ["t"])])
    seq = CallSequence((ToolCall("setTemp", {"t": Literal(21.0)}, (0,)),))
    assert qc_instance(Instance.create("i", "Set it to 21 degrees", seq), pool).ok
    assert not qc_instance(Instance.create("i", "Set it to 22 degrees", seq), pool).ok
    wrong_flag = Instance("i", "Set it to 21", seq, "multiple", True)
    assert set(qc_instance(wrong_flag, pool).codes) == {"CATEGORY_MISMATCH", "NESTED_FLAG_MISMATCH"}


def test_generate_single_instances_skips_tools_without_examples():
    pool = ToolPool([make_tool("a", {"x": "X"}, ["x"]), make_tool("b", {"y": "Y (e.g., blue)"}, ["y"])])
    m = RunManifest("single")
    out = generate_single_instances(ScriptedBackend(["Task description =\n\n[Paint it blue.]"]), pool, manifest=m)
    assert [i.id for i in out] == ["single-00001"]
    assert m.qc_reasons["NO_EXAMPLE_VALUES"] == 1


@pytest.fixture
def pool():
    return ToolPool(make_tool(**_golden_kwargs(t)) for t in golden_tools())


def _golden_kwargs(raw):
    return {
        "name": raw["api_name"],
        "description": raw["api_description"],
        "field": raw["field"],
        "params": {k: (v["type"], v["description"]) for k, v in raw["parameters"].items()},
        "required": raw["required"],
        "responses": {k: (v["type"], v["description"]) for k, v in raw["responses"].items()},
    }


def test_combine_tools(pool):
    reply = "selected_apis = ['callTaxi', 'cancelTaxi', 'callTaxi']\ntask_description = ['Book then cancel.']"
    selected, sketch, names = combine_tools(ScriptedBackend([reply]), pool, candidate_count=6, rng_seed=1)
    assert selected == ["callTaxi", "cancelTaxi"] and sketch == "Book then cancel."
    assert sorted(names) == sorted(pool.names())
    for bad, reason in [("selected_apis = ['nope', 'callTaxi']", "UNKNOWN_SELECTION"),
                        ("selected_apis = ['callTaxi']", "TOO_FEW_SELECTED")]:
        with pytest.raises(QCRejected) as info:
            combine_tools(ScriptedBackend([bad]), pool, candidate_count=6)
        assert info.value.reasons == [reason]
    with pytest.raises(PreconditionError):
        combine_tools(ScriptedBackend(["x"]), pool, candidate_count=7)


def test_combine_candidates_are_seeded(pool):
    reply = "selected_apis = ['callTaxi', 'cancelTaxi']"
    a = combine_tools(ScriptedBackend([reply]), pool, 4, random.Random(5))[2]
    b = combine_tools(ScriptedBackend([reply]), pool, 4, random.Random(5))[2]
    assert a == b


def _fill_reply(calling, query):
    return f"improved_api_calling = {json.dumps(calling)}\n\ntask_description = [\"{query}\"]"


def test_fill_template_nested(pool):
    tools = [pool.lookup("callTaxi"), pool.lookup("cancelTaxi")]
    calling = [
        {"api": "callTaxi", "parameters": {"pickup_location": "Pudong Airport", "destination": "The Bund"},
         "responses": ["API_call_0", "API_call_1", "API_call_2"]},
        {"api": "cancelTaxi", "parameters": {"booking_id": "API_call_0", "phone_number": "+1-555-010-0199"},
         "responses": ["API_call_3"]},
    ]
    query = "Get me a taxi from Pudong Airport to The Bund, then cancel it; my number is +1-555-010-0199."
    inst = fill_template(ScriptedBackend([_fill_reply(calling, query)]), tools, build_template(tools), pool=pool)
    assert inst.nested and inst.category == "multiple"
    assert inst.calling.calls[1].parameters["booking_id"] == Ref(0)


def test_fill_template_rejections(pool):
    tools = [pool.lookup("callTaxi"), pool.lookup("cancelTaxi")]
    tpl = build_template(tools)
    swapped = [
        {"api": "cancelTaxi", "parameters": {"booking_id": "TX1", "phone_number": "1"}, "responses": ["API_call_0"]},
        {"api": "callTaxi", "parameters": {"pickup_location": "a", "destination": "b"}, "responses": ["API_call_1", "API_call_2", "API_call_3"]},
    ]
    with pytest.raises(QCRejected) as info:
        fill_template(ScriptedBackend([_fill_reply(swapped, "TX1 1 a b")]), tools, tpl, pool=pool)
    assert "TEMPLATE_MISMATCH" in info.value.reasons

    blank = json.dumps([
        {"api": "callTaxi", "parameters": {"pickup_location": "a", "destination": "___"}, "responses": ["API_call_0", "API_call_1", "API_call_2"]},
        {"api": "cancelTaxi", "parameters": {"booking_id": "TX1", "phone_number": "1"}, "responses": ["API_call_3"]},
    ])
    with pytest.raises(QCRejected) as info:
        fill_template(ScriptedBackend([f"improved_api_calling = {blank}\ntask_description = ['a TX1 1']"]), tools, tpl, pool=pool)
    assert "UNFILLED_BLANK" in info.value.reasons

    with pytest.raises(QCRejected) as info:
        fill_template(ScriptedBackend(["no json", "still none"]), tools, tpl, pool=pool)
    assert info.value.reasons == ["PARSE_FAILED"]


def test_multi_instances_retry_until_count(pool):
    good = _fill_reply(
        [{"api": "callTaxi", "parameters": {"pickup_location": "Xintiandi", "destination": "The Bund"},
          "responses": ["API_call_0", "API_call_1", "API_call_2"]},
         {"api": "cancelTaxi", "parameters": {"booking_id": "API_call_0", "phone_number": "+1-555-010-0199"},
          "responses": ["API_call_3"]}],
        "Taxi from Xintiandi to The Bund, then cancel; phone +1-555-010-0199.",
    )
    combine = "selected_apis = ['callTaxi', 'cancelTaxi']"
    replies = ["selected_apis = ['callTaxi']", combine, good]
    m = RunManifest("multi")
    out = generate_multi_instances(ScriptedBackend(replies), pool, 1, candidate_count=6, manifest=m)
    assert [i.id for i in out] == ["multi-00001"]
    assert m.qc_reasons == {"TOO_FEW_SELECTED": 1}
    assert [b.accepted for b in m.batches] == [0, 1]
