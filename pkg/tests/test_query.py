"""Template language: parse, admit, compile, bind."""
import pytest

from scalestore import keys
from scalestore.errors import (MissingParameter, QuerySyntaxError,
                               TypeMismatch, UnboundParameter, UnknownField,
                               UnknownTable, ValidationError)
from scalestore.query import (Catalog, Rejection, bind, check_admissible,
                              compile_template, parse_template)
from scalestore.schema import parse_schema

from conftest import FIXTURES, _read


# ---------------------------------------------------------------------------
# parsing

def test_parse_symmetric_birthday_query(social_schema):
    t = parse_template(
        "SELECT p.* FROM friendships f JOIN profiles p ON f.f2 = p.id "
        "WHERE f.f1 = <user_id> OR f.f2 = <user_id> ORDER BY p.birthday",
        social_schema, name="bday")
    assert t.base_table == "friendships"
    assert t.symmetric
    assert t.params[0].fields == ("f1", "f2")
    assert t.order_by == ("p", "birthday")
    assert len(t.joins) == 1
    assert t.joins[0].table == "profiles"


def test_parse_reversed_on_clause_normalized(social_schema):
    t = parse_template(
        "SELECT p.name FROM friendships f JOIN profiles p ON p.id = f.f2 "
        "WHERE f.f1 = <u>", social_schema)
    j = t.joins[0]
    assert (j.left_alias, j.left_field, j.right_field) == ("f", "f2", "id")


def test_parse_default_order_by_is_final_pk(social_schema):
    t = parse_template("SELECT f.f2 FROM friendships f WHERE f.f1 = <u>",
                       social_schema)
    assert t.order_by == ("f", "f1")


def test_parse_limit(social_schema):
    t = parse_template(
        "SELECT f.f2 FROM friendships f WHERE f.f1 = <u> LIMIT 20",
        social_schema)
    assert t.limit == 20
    with pytest.raises(ValidationError):
        parse_template("SELECT f.f2 FROM friendships f WHERE f.f1 = <u> LIMIT 0",
                       social_schema)


def test_parse_errors(social_schema):
    with pytest.raises(UnknownTable):
        parse_template("SELECT x.a FROM nosuch x WHERE x.a = <u>", social_schema)
    with pytest.raises(UnknownField):
        parse_template("SELECT f.zz FROM friendships f WHERE f.f1 = <u>",
                       social_schema)
    with pytest.raises(UnboundParameter):
        parse_template("SELECT f.f2 FROM friendships f", social_schema)
    with pytest.raises(QuerySyntaxError):
        parse_template("SELECT f.f2 FROM friendships f WHERE f.f1 = 42",
                       social_schema)
    with pytest.raises(QuerySyntaxError):
        parse_template("SELECT FROM friendships", social_schema)


def test_parse_rejects_non_chain_join(social_schema):
    # second join must extend from the first joined alias, not the base
    with pytest.raises(ValidationError):
        parse_template(
            "SELECT p.name FROM friendships a "
            "JOIN friendships b ON a.f2 = b.f1 "
            "JOIN profiles p ON a.f1 = p.id WHERE a.f1 = <u>",
            social_schema)


# ---------------------------------------------------------------------------
# admissibility

def test_fanout_friend_and_birthday_is_k(social_schema, social_templates):
    rep = check_admissible(social_templates["friend_index"], social_schema)
    assert rep.product == 4
    rep = check_admissible(social_templates["birthday_index"], social_schema)
    assert rep.product == 4
    assert rep.per_source["profiles"] == 4


def test_fanout_friends_of_friends_is_k_squared(social_schema, social_templates):
    rep = check_admissible(social_templates["friends_of_friends_index"],
                           social_schema)
    assert rep.product == 16


def test_fanout_pk_anchor_gives_one(social_schema):
    t = parse_template("SELECT p.name FROM profiles p WHERE p.id = <u>",
                       social_schema)
    assert check_admissible(t, social_schema).product == 1


def test_unbounded_followers_rejected():
    schema = parse_schema(_read(FIXTURES, "followers", "schema.json"))
    t = parse_template(_read(FIXTURES, "followers", "followers_index.qt"),
                       schema, name="followers_index")
    with pytest.raises(Rejection) as exc:
        check_admissible(t, schema)
    assert "followed_by" in str(exc.value)


def test_join_without_relationship_rejected(social_schema):
    t = parse_template(
        "SELECT p.name FROM friendships f JOIN profiles p ON f.f1 = p.name "
        "WHERE f.f1 = <u>", social_schema)
    with pytest.raises(Rejection):
        check_admissible(t, social_schema)


def test_budget_overflow_rejected(social_schema, social_templates):
    with pytest.raises(Rejection):
        check_admissible(social_templates["friends_of_friends_index"],
                         social_schema, budget=10)


def test_fanout_matches_brute_force_on_toy_graph(social_schema, social_templates):
    """The static product bounds the worst observed per-anchor result-set
    growth on an adversarial K=4 graph (independent recount, no compile)."""
    users = ["u%d" % i for i in range(12)]
    edges = set()
    # ring with chords, max degree 4 per direction
    for i, u in enumerate(users):
        for d in (1, 2):
            v = users[(i + d) % len(users)]
            edges.add((u, v))
            edges.add((v, u))
    deg = {}
    for a, _ in edges:
        deg[a] = deg.get(a, 0) + 1
    assert max(deg.values()) <= 4
    # friends-of-friends per anchor by brute force
    worst = 0
    for u in users:
        hops = [(b, c) for (a, b) in edges if a == u
                for (bb, c) in edges if bb == b]
        worst = max(worst, len(hops))
    rep = check_admissible(social_templates["friends_of_friends_index"],
                           social_schema)
    assert worst <= rep.product


# ---------------------------------------------------------------------------
# compilation

def test_compile_friend_index_key_shape(social_schema, social_templates):
    final, inters, rules = compile_template(
        social_templates["friend_index"], social_schema)
    assert final.name == "friend_index"
    assert not inters
    roles = [(kf.role, kf.field) for kf in final.key_fields]
    assert roles[0] == ("param", "user_id")
    assert roles[-1] == ("pk", "f2")
    assert [r.table for r in rules] == ["friendships"]


def test_compile_fof_materializes_intermediate(social_schema, social_templates):
    final, inters, rules = compile_template(
        social_templates["friends_of_friends_index"], social_schema)
    assert len(inters) == 1
    assert inters[0].name == "friends_of_friends_index__l1"
    kinds = [(r.kind, r.index, r.table) for r in rules]
    assert ("base", "friends_of_friends_index__l1", "friendships") in kinds
    assert ("cascade", "friends_of_friends_index",
            "friends_of_friends_index__l1") in kinds


def test_compile_pk_lookup_uses_base_table(social_schema):
    t = parse_template("SELECT p.name FROM profiles p WHERE p.id = <u>",
                       social_schema, name="profile_by_id")
    final, inters, rules = compile_template(t, social_schema)
    assert final.name == "profiles"
    assert not inters and not rules


def test_catalog_matches_golden_maintenance_table(social_catalog):
    golden = _read(FIXTURES, "social", "maintenance_table.golden")
    assert social_catalog.maintenance_table_text() == golden


def test_catalog_dedups_intermediate_into_friend_index(social_catalog):
    # the first hop of friends-of-friends is structurally friend_index
    assert "friends_of_friends_index__l1" not in social_catalog.indices
    rules = [(r.index, r.table, r.field) for r in social_catalog.rules]
    assert ("friends_of_friends_index", "friend_index", "*") in rules


def test_catalog_rules_for_source(social_catalog):
    hit = social_catalog.rules_for_source("profiles", {"birthday"})
    assert [(r.index, r.field) for r in hit] == [("birthday_index", "birthday")]
    # a name-only change does not trigger the birthday rule
    assert social_catalog.rules_for_source("profiles", {"name"}) == []
    # row insert/delete counts as changing every field
    hit = social_catalog.rules_for_source("profiles", {"id", "birthday", "name"})
    assert len(hit) == 1


def test_compile_is_deterministic(social_schema, social_templates):
    a = compile_template(social_templates["birthday_index"], social_schema)
    b = compile_template(social_templates["birthday_index"], social_schema)
    assert a == b


# ---------------------------------------------------------------------------
# binding

def test_bind_produces_prefix_range(social_schema, social_templates):
    t = social_templates["friend_index"]
    rq = bind(t, {"user_id": "u07"}, social_schema)
    inside = keys.encode_tuple(("u07", "u01", "u07", "u01"))
    outside = keys.encode_tuple(("u08", "u01", "u08", "u01"))
    assert rq.low <= inside < rq.high
    assert not (rq.low <= outside < rq.high)


def test_bind_missing_and_extra_params(social_schema, social_templates):
    t = social_templates["friend_index"]
    with pytest.raises(MissingParameter):
        bind(t, {}, social_schema)
    with pytest.raises(MissingParameter):
        bind(t, {"user_id": "u0", "bogus": 1}, social_schema)


def test_bind_type_mismatch(social_schema, social_templates):
    with pytest.raises(TypeMismatch):
        bind(social_templates["friend_index"], {"user_id": 99}, social_schema)


def test_bind_limit_override(social_schema, social_templates):
    rq = bind(social_templates["friend_index"], {"user_id": "u0"},
              social_schema, limit=5)
    assert rq.limit == 5
