import math

import httpx
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bridgmt.errors import ProtocolError, TransportError, UsageError
from bridgmt.metrics import (
    HttpTreeProvider,
    LabeledTree,
    chain_tree,
    cosine_similarity,
    euclidean_distance,
    levenshtein,
    parse_tree,
    tree_edit_distance,
    tree_from_brackets,
)

from oracles import levenshtein_full, ted_bruteforce, valid_mappings

text = st.text(alphabet="abcé ", max_size=12)


# --- oracle self-checks ---------------------------------------------------------


def test_oracle_levenshtein_textbook_values():
    assert levenshtein_full("kitten", "sitting") == 3
    assert levenshtein_full("flaw", "lawn") == 2
    assert levenshtein_full("", "abc") == 3


def test_oracle_mapping_counts_for_tiny_trees():
    leaf, pair = (), ((),)
    # single nodes: empty mapping or map them together
    assert len(valid_mappings(leaf, leaf)) == 2
    # a(b) vs x: the leaf may map to either node or neither
    assert len(valid_mappings(pair, leaf)) == 3


def test_oracle_ted_classic_example():
    t1 = tree_from_brackets("(f (d a (c b)) e)")
    t2 = tree_from_brackets("(f (c (d a b)) e)")
    assert ted_bruteforce(t1, t2) == 2


# --- Levenshtein -----------------------------------------------------------------


@pytest.mark.parametrize(
    "a,b,d",
    [("kitten", "sitting", 3), ("", "", 0), ("abc", "", 3), ("café", "cafe", 1), ("한국어", "한국", 1)],
)
def test_levenshtein_examples(a, b, d):
    assert levenshtein(a, b) == d


@given(text, text)
def test_levenshtein_matches_full_table(a, b):
    assert levenshtein(a, b) == levenshtein_full(a, b)


@given(text, text, text)
def test_levenshtein_is_a_metric(a, b, c):
    assert levenshtein(a, b) == levenshtein(b, a)
    assert levenshtein(a, c) <= levenshtein(a, b) + levenshtein(b, c)
    assert abs(len(a) - len(b)) <= levenshtein(a, b) <= max(len(a), len(b))
    assert (levenshtein(a, b) == 0) == (a == b)


# --- trees -----------------------------------------------------------------------


def tree_strategy(labels="ab", max_leaves=4):
    return st.recursive(
        st.sampled_from(labels).map(LabeledTree),
        lambda kids: st.tuples(st.sampled_from(labels), st.lists(kids, min_size=1, max_size=3)).map(
            lambda t: LabeledTree(t[0], tuple(t[1]))
        ),
        max_leaves=max_leaves,
    )


def test_brackets_round_trip():
    t = tree_from_brackets("(S (NP the dog) (VP barks))")
    assert t.to_brackets() == "(S (NP the dog) (VP barks))"
    assert len(t) == 6


@pytest.mark.parametrize("bad", ["", "(S a", "(S a))", "()"])
def test_brackets_reject_malformed(bad):
    with pytest.raises(UsageError):
        tree_from_brackets(bad)


def test_ted_small_cases():
    a = tree_from_brackets
    assert tree_edit_distance(a("(a b c)"), a("(a b)")) == 1
    assert tree_edit_distance(a("a"), a("b")) == 1
    assert tree_edit_distance(a("(a b c)"), a("(a b c)")) == 0
    assert tree_edit_distance(a("(a (b c))"), a("(a b c)")) == 2


def test_ted_custom_costs():
    t1, t2 = tree_from_brackets("(a b)"), tree_from_brackets("a")
    assert tree_edit_distance(t1, t2, delete_cost=lambda lab: 2.5) == 2.5
    assert tree_edit_distance(t2, t1, insert_cost=lambda lab: 4.0) == 4.0
    assert tree_edit_distance(LabeledTree("x"), LabeledTree("y"), relabel_cost=lambda p, q: 0.25) == 0.25


@settings(max_examples=60, deadline=None)
@given(tree_strategy(), tree_strategy())
def test_ted_matches_bruteforce(t1, t2):
    assert tree_edit_distance(t1, t2) == ted_bruteforce(t1, t2)


@settings(max_examples=60, deadline=None)
@given(tree_strategy(), tree_strategy(), tree_strategy())
def test_ted_is_a_metric(t1, t2, t3):
    d12 = tree_edit_distance(t1, t2)
    assert d12 == tree_edit_distance(t2, t1)
    assert tree_edit_distance(t1, t3) <= d12 + tree_edit_distance(t2, t3)
    assert abs(len(t1) - len(t2)) <= d12 <= len(t1) + len(t2)


def test_chain_tree_shape():
    assert chain_tree("a b").to_brackets() == "(ROOT (a b))"
    assert len(chain_tree("one two three")) == 4


def test_parse_tree_rejects_empty():
    with pytest.raises(UsageError):
        parse_tree("   ")


def test_http_tree_provider_parses_and_memoizes():
    calls = []

    def handler(request: httpx.Request) -> httpx.Response:
        calls.append(request)
        return httpx.Response(200, json={"tree": "(ROOT (S hi))"})

    provider = HttpTreeProvider("http://parser/parse", client=httpx.Client(transport=httpx.MockTransport(handler)))
    assert provider("hi").to_brackets() == "(ROOT (S hi))"
    provider("hi")
    assert len(calls) == 1


@pytest.mark.parametrize(
    "response,error",
    [(httpx.Response(500), TransportError), (httpx.Response(200, json={"nope": 1}), ProtocolError)],
)
def test_http_tree_provider_errors(response, error):
    client = httpx.Client(transport=httpx.MockTransport(lambda r: response))
    with pytest.raises(error):
        HttpTreeProvider("http://parser/parse", client=client)("x")


# --- vectors ---------------------------------------------------------------------

vec = st.lists(st.floats(-100, 100, allow_nan=False), min_size=3, max_size=3)


def test_cosine_examples():
    assert cosine_similarity([1, 0], [1, 0]) == 1.0
    assert cosine_similarity([1, 0], [0, 2]) == 0.0
    assert cosine_similarity([1, 0], [-3, 0]) == -1.0


def test_cosine_errors():
    with pytest.raises(UsageError):
        cosine_similarity([1, 0], [1, 0, 0])
    with pytest.raises(UsageError):
        cosine_similarity([0, 0], [1, 0])


@given(vec, vec)
def test_cosine_bounded_and_symmetric(u, v):
    if math.fsum(x * x for x in u) < 1e-9 or math.fsum(x * x for x in v) < 1e-9:
        return
    s = cosine_similarity(u, v)
    assert -1.0 <= s <= 1.0
    assert s == pytest.approx(cosine_similarity(v, u))


@given(vec, vec)
def test_euclidean_properties(u, v):
    assert euclidean_distance(u, u) == 0.0
    assert euclidean_distance(u, v) == pytest.approx(euclidean_distance(v, u))
    assert euclidean_distance(u, v) >= 0
