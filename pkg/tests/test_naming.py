import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from foggyedge.naming import (FeName, MalformedName, parse_name, region_prefix_match,
                              serialize_name)

component = st.text(
    alphabet=st.characters(blacklist_categories=("Cs", "Cc", "Zs", "Zl", "Zp", "Co", "Cn", "Cf"),
                           blacklist_characters="/|?,"),
    min_size=1, max_size=8,
).filter(lambda s: s.isprintable() and not any(c.isspace() for c in s))

names = st.builds(FeName, component, component, component, component,
                  st.lists(component, max_size=4).map(tuple))

ITAEWON = FeName("Korea", "Seoul", "Itaewon", "traffic_status", ("param1", "param2"))


def test_parse_tolerates_spaces_around_separators():
    n = parse_name("FE:/Korea/Seoul/Itaewon | traffic_status? param1, param2")
    assert n == ITAEWON


def test_minimal_name_has_no_params():
    assert parse_name("FE:/A/B/C|s") == FeName("A", "B", "C", "s")


@pytest.mark.parametrize("raw", [
    "FE:/Korea/Seoul|svc",
    "FE:/A/B/C/D|s",
    "/A/B/C|s",
    "fe:/A/B/C|s",
    "FE:/A//C|s",
    "FE:/A/B/C|",
    "FE:/A/B/C|s?",
    "FE:/A/B/C|s?a,,b",
    "FE:/A/B/C|s|t",
    "FE:/A/B/C|s?a?b",
    "FE:/A/B C/D|s",
    " FE:/A/B/C|s",
    "",
])
def test_malformed(raw):
    with pytest.raises(MalformedName):
        parse_name(raw)


def test_serialize_examples():
    assert serialize_name(ITAEWON) == "FE:/Korea/Seoul/Itaewon|traffic_status?param1,param2"
    assert serialize_name(FeName("A", "B", "C", "s")) == "FE:/A/B/C|s"


def test_param_order_matters():
    assert parse_name("FE:/A/B/C|s?x,y") != parse_name("FE:/A/B/C|s?y,x")


@settings(max_examples=1000)
@given(names)
def test_round_trip(n):
    s = serialize_name(n)
    assert parse_name(s) == n
    assert serialize_name(parse_name(s)) == s


@given(names, st.text(" \t", max_size=2), st.text(" \t", max_size=2))
def test_whitespace_variants_canonicalize(n, a, b):
    raw = f"FE:/{n.country}/{n.city}/{n.district}{a}|{b}{n.microservice}"
    if n.params:
        raw += f"{a}?{b}" + f"{a},{b}".join(n.params)
    assert parse_name(raw) == n


@pytest.mark.parametrize("prefix,expected", [
    (["Korea", "Seoul"], 2),
    (["Korea", "Busan"], 1),
    ([], 0),
    (["Korea", "Seoul", "Itaewon"], 3),
    (["Japan", "Seoul"], 0),
])
def test_region_prefix_match(prefix, expected):
    assert region_prefix_match(ITAEWON, prefix) == expected


@given(names, st.lists(component, max_size=3))
def test_prefix_extension(n, prefix):
    # once a component mismatches, extending the prefix changes nothing;
    # otherwise the match grows by at most the one added component
    for k in range(len(prefix)):
        short, long_ = region_prefix_match(n, prefix[:k]), region_prefix_match(n, prefix[:k + 1])
        assert long_ in (short, short + 1)
        if short < k:
            assert long_ == short


def test_prefix_longer_than_region_rejected():
    with pytest.raises(ValueError):
        region_prefix_match(ITAEWON, ["a", "b", "c", "d"])
