import json
import random

import pytest
from hypothesis import given
from hypothesis import strategies as st

from archersim.matchmaker import (
    UNDEFINED,
    Ad,
    AdError,
    AdKind,
    AttrRef,
    Binary,
    ExpressionSyntaxError,
    Literal,
    Unary,
    UnknownOperator,
    evaluate,
    load_ad,
    parse_expression,
    rank_score,
    select_best,
    symmetric_match,
    to_text,
)
from oracles import UNDEF, oracle_eval, oracle_match, oracle_rank, random_attrs, random_expr, random_requirement, render, typed_attrs


def same(a, b):
    if b is UNDEF:
        return a is UNDEFINED
    return type(a) is type(b) and a == b


# -- parser -------------------------------------------------------------------

def test_parse_true():
    assert parse_expression("true") == Literal(True)


def test_parse_conjunction():
    e = parse_expression('other.Memory >= 1024 && other.Arch == "x86"')
    assert e == Binary("&&", Binary(">=", AttrRef("other", "Memory"), Literal(1024)),
                       Binary("==", AttrRef("other", "Arch"), Literal("x86")))


@pytest.mark.parametrize("text,pos", [("1 +", 3), ("(1", 2), ("", 0), ("1 2", 2), ("other.", 6)])
def test_syntax_error_positions(text, pos):
    with pytest.raises(ExpressionSyntaxError) as exc:
        parse_expression(text)
    assert exc.value.position == pos
    assert f"position {pos}" in str(exc.value)


@pytest.mark.parametrize("text", ["a = 1", "a % 2", "x ^ y", "a & b"])
def test_unknown_operator(text):
    with pytest.raises(UnknownOperator):
        parse_expression(text)


def test_precedence_and_associativity():
    assert evaluate("1 + 2 * 3") == 7
    assert evaluate("10 - 4 - 3") == 3
    assert evaluate("2 * 3 + 1 > 6 && true") is True
    assert evaluate("!false || false") is True


def test_round_trip_random_trees():
    rng = random.Random(3)
    for _ in range(3000):
        e = parse_expression(render(random_expr(rng), full=rng.random() < 0.5))
        assert parse_expression(to_text(e)) == e


_leaf = st.one_of(
    st.integers(0, 10 ** 6).map(Literal),
    st.floats(0, 1e6, allow_nan=False).map(Literal),
    st.booleans().map(Literal),
    st.text(st.characters(blacklist_categories=("Cs",)), max_size=6).map(Literal),
    st.tuples(st.sampled_from(["my", "other", None]), st.from_regex(r"[A-Za-z_][A-Za-z0-9_]{0,5}", fullmatch=True))
    .filter(lambda t: t[1].lower() not in ("true", "false", "undefined", "my", "other"))
    .map(lambda t: AttrRef(*t)),
)
_trees = st.recursive(_leaf, lambda kids: st.one_of(
    st.tuples(st.sampled_from(["!", "-"]), kids).map(lambda t: Unary(*t)),
    st.tuples(st.sampled_from(["||", "&&", "==", "!=", "<", "<=", ">", ">=", "+", "-", "*", "/"]), kids, kids)
    .map(lambda t: Binary(*t)),
), max_leaves=12)


@given(_trees)
def test_printer_round_trip(tree):
    text = to_text(tree)
    assert parse_expression(text) == tree
    assert parse_expression(to_text(parse_expression(text))) == parse_expression(text)


# -- evaluation ---------------------------------------------------------------

def test_basic_evaluations():
    other = Ad({"Memory": 2048})
    assert evaluate("other.Memory >= 1024", None, other) is True
    assert evaluate("other.Missing == 1", None, other) is UNDEFINED
    assert evaluate("7 / -2") == -3
    assert evaluate("-7 / 2") == -3
    assert evaluate("1 / 0") is UNDEFINED
    assert evaluate("1.0 / 0") is UNDEFINED
    assert evaluate('"a" < "b"') is True
    assert evaluate('"X86" == "x86"') is False
    assert evaluate("undefined || true") is UNDEFINED
    assert evaluate("false && undefined") is False
    assert evaluate("true || undefined") is True


def test_attribute_names_case_insensitive():
    ad = Ad({"MEMORY": 4})
    assert evaluate("my.memory + other.Memory", ad, ad) == 8


def test_bare_names_resolve_my_then_other():
    my = Ad({"X": 1})
    other = Ad({"X": 2, "Y": 3})
    assert evaluate("X", my, other) == 1
    assert evaluate("Y", my, other) == 3


def test_expression_attributes_evaluate_in_owning_ad():
    job = Ad({"Requirements": "expr:true", "Need": "expr:my.Base * 2", "Base": 10}, AdKind.JOB)
    res = Ad({"Base": 1, "Check": "expr:other.Need"})
    assert evaluate("other.Check", job, res) == 20


def test_self_reference_is_undefined_not_recursion_error():
    ad = Ad({"A": "expr:my.A + 1"})
    assert evaluate("my.A", ad, ad) is UNDEFINED


def test_oracle_equivalence_ten_thousand_cases():
    rng = random.Random(2024)
    cases = 0
    for _ in range(12000):
        tree = random_expr(rng)
        my, other = random_attrs(rng), random_attrs(rng)
        text = render(tree, full=rng.random() < 0.3)
        got = evaluate(parse_expression(text), Ad(my), Ad(other))
        want = oracle_eval(tree, my, other)
        assert same(got, want), (text, my, other, got, want)
        cases += 1
    assert cases >= 10 ** 4


# -- matching -----------------------------------------------------------------

def test_both_true_matches():
    assert symmetric_match(Ad({"Requirements": True}, AdKind.JOB), Ad({}))


def test_memory_shortfall():
    job = Ad({"Requirements": "expr:other.Memory >= 1024"}, AdKind.JOB)
    assert not symmetric_match(job, Ad({"Memory": 512}))
    assert symmetric_match(job, Ad({"Memory": 1024}))


def test_undefined_requirement_is_no_match():
    job = Ad({"Requirements": "expr:other.Missing > 1"}, AdKind.JOB)
    assert not symmetric_match(job, Ad({}))


def test_job_ad_requires_requirements():
    with pytest.raises(AdError):
        Ad({"Rank": 1}, AdKind.JOB)
    assert Ad({}).get("requirements") == Literal(True)


def test_duplicate_names_rejected():
    with pytest.raises(AdError):
        Ad([("Memory", 1), ("memory", 2)])


def test_20_by_20_against_double_evaluation_oracle():
    rng = random.Random(77)
    jobs, resources = [], []
    for _ in range(20):
        req = random_requirement(rng) if rng.random() < 0.8 else random_expr(rng, 3)
        attrs = typed_attrs(rng)
        jobs.append((req, attrs, Ad({**attrs, "Requirements": "expr:" + render(req)}, AdKind.JOB)))
        req = random_requirement(rng) if rng.random() < 0.8 else random_expr(rng, 3)
        attrs = typed_attrs(rng)
        resources.append((req, attrs, Ad({**attrs, "Requirements": "expr:" + render(req)})))
    hits = 0
    for jr, ja, jad in jobs:
        for rr, ra, rad in resources:
            want = oracle_match(jr, ja, rr, ra)
            assert symmetric_match(jad, rad) == want
            hits += want
    assert 0 < hits < 400


def test_rank_defaults_and_values():
    job = Ad({"Requirements": True}, AdKind.JOB)
    assert rank_score(job, Ad({"Speed": 2.5})) == 0.0
    ranked = job.with_attrs(Rank="expr:other.Speed")
    assert rank_score(ranked, Ad({"Speed": 2.5})) == 2.5
    assert rank_score(ranked, Ad({"Speed": "fast"})) == 0.0


def _sort_oracle(rank_tree, job_attrs, cands):
    feasible = [(nid, attrs) for nid, attrs, req in cands if oracle_match(("lit", True), job_attrs, req, attrs)]
    feasible.sort(key=lambda c: (-oracle_rank(rank_tree, job_attrs, c[1]), c[0]))
    return feasible[0][0] if feasible else None


def test_select_best_matches_sort_oracle_and_rank_scaling():
    rng = random.Random(5)
    for trial in range(300):
        rank_tree = ("bin", "+", ("attr", "other", "Speed"), ("attr", "other", "Memory")) if trial % 2 else \
            ("attr", "other", "Speed")
        job_attrs = {}
        cands = []
        for _ in range(10):
            nid = rng.randrange(1000)
            attrs = {"Speed": rng.choice([1, 2, 3, 1.5]), "Memory": rng.choice([0, 1, 2])}
            req = ("lit", rng.random() < 0.8)
            cands.append((nid, attrs, req))
        if len({c[0] for c in cands}) < 10:
            continue
        ads = [(nid, Ad({**attrs, "Requirements": req[1]})) for nid, attrs, req in cands]
        job = Ad({"Requirements": True, "Rank": "expr:" + render(rank_tree)}, AdKind.JOB)
        best = select_best(job, ads)
        want = _sort_oracle(rank_tree, job_attrs, cands)
        assert (best[0] if best else None) == want
        scaled = job.with_attrs(Rank="expr:(" + render(rank_tree) + ") * 7")
        again = select_best(scaled, ads)
        assert (again[0] if again else None) == want


def test_ad_json_round_trip(tmp_path):
    ad = Ad({"Requirements": "expr:other.Memory >= 1024 && my.Owner == \"u\"", "Owner": "u", "Rank": 3}, AdKind.JOB)
    path = tmp_path / "job.ad"
    path.write_text(json.dumps(ad.to_json()))
    back = load_ad(path, "job")
    assert dict(back) == dict(ad)
