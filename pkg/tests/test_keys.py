"""Order-preserving key encoding: round trip, ordering, injectivity, and
compiled/pure equivalence."""
import datetime

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from scalestore import keyenc_py, keys
from scalestore.errors import TypeMismatch

INT64 = st.integers(min_value=-(1 << 63), max_value=(1 << 63) - 1)
DATES = st.dates(min_value=datetime.date(1900, 1, 1),
                 max_value=datetime.date(2200, 1, 1))
FIELD = st.one_of(INT64, st.text(max_size=8), DATES)
TUPLES = st.lists(FIELD, min_size=1, max_size=4).map(tuple)


def kinds_of(t):
    out = []
    for v in t:
        if isinstance(v, datetime.date):
            out.append("date")
        elif isinstance(v, int):
            out.append("int")
        else:
            out.append("str")
    return tuple(out)


def test_simple_round_trip():
    t = (42, "alice", datetime.date(1990, 5, 17))
    assert keys.decode_tuple(keys.encode_tuple(t)) == t


def test_empty_tuple():
    assert keys.encode_tuple(()) == b""
    assert keys.decode_tuple(b"") == ()


def test_embedded_nul_strings_order():
    a = keys.encode_tuple(("a\x00", "x"))
    b = keys.encode_tuple(("a", "\x00x"))
    assert a != b
    assert keys.decode_tuple(a) == ("a\x00", "x")
    assert keys.decode_tuple(b) == ("a", "\x00x")
    # the classic escape-ambiguity pair must stay distinct and ordered
    assert (a < b) == (("a\x00", "x") < ("a", "\x00x"))


def test_int_extremes():
    lo, hi = -(1 << 63), (1 << 63) - 1
    assert keys.encode_tuple((lo,)) < keys.encode_tuple((0,)) < keys.encode_tuple((hi,))
    with pytest.raises(TypeMismatch):
        keys.encode_tuple((hi + 1,))


def test_bool_rejected():
    with pytest.raises(TypeMismatch):
        keys.encode_tuple((True,))


def test_kind_mismatch_rejected():
    with pytest.raises(TypeMismatch):
        keys.encode_tuple(("x",), ("int",))
    with pytest.raises(TypeMismatch):
        keys.encode_tuple((1, 2), ("int",))


def test_date_as_days_since_epoch():
    direct = keys.encode_tuple((7305,), ("date",))
    via_date = keys.encode_tuple((datetime.date(1970, 1, 1)
                                  + datetime.timedelta(days=7305),))
    assert direct == via_date


def test_truncated_input_rejected():
    enc = keys.encode_tuple((12345,))
    with pytest.raises(TypeMismatch):
        keys.decode_tuple(enc[:-1])
    with pytest.raises(TypeMismatch):
        keys.decode_tuple(b"\xfe")


def test_prefix_range_covers_exactly_prefix():
    lo, hi = keys.prefix_range(keys.encode_tuple(("bob",)))
    inside = keys.encode_tuple(("bob", 3))
    outside = keys.encode_tuple(("boc",))
    assert lo <= inside < hi
    assert not (lo <= outside < hi)


@settings(max_examples=300)
@given(TUPLES)
def test_round_trip_property(t):
    enc = keys.encode_tuple(t, kinds_of(t))
    assert keys.decode_tuple(enc) == t


@settings(max_examples=300)
@given(TUPLES, TUPLES)
def test_order_preserved_property(a, b):
    """Byte order equals tuple order whenever the tuples are comparable."""
    ea = keys.encode_tuple(a, kinds_of(a))
    eb = keys.encode_tuple(b, kinds_of(b))
    if kinds_of(a) == kinds_of(b):
        assert (ea < eb) == (a < b)
        assert (ea == eb) == (a == b)
    elif a != b:
        # injectivity across kind signatures too
        assert ea != eb


@settings(max_examples=300)
@given(TUPLES)
def test_compiled_matches_pure(t):
    k = kinds_of(t)
    assert keys.encode_tuple(t, k) == keyenc_py.encode_tuple(t, k)


def test_compiled_extension_selected_by_default():
    # SCALESTORE_PURE forces the fallback; the default build should have
    # picked up the compiled kernel
    import os
    if not os.environ.get("SCALESTORE_PURE"):
        assert keys.COMPILED
