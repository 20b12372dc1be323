"""Pure-Python order-preserving composite key encoding.

Typed tuples of (signed int, str, date) encode to byte strings such that
lexicographic byte order equals tuple order.  Each field is prefixed with a
kind tag; tags are constant per field position within one index, and being
< 0xFF they also disambiguate the string escape sequence, which makes the
encoding injective.

Layout per field:
  int  -> 0x01 + 8-byte big-endian offset-binary (sign bit flipped)
  str  -> 0x02 + UTF-8 bytes with 0x00 escaped as 0x00 0xFF, then 0x00
  date -> 0x03 + days-since-epoch encoded like int

A compiled Cython twin lives in _keyenc.pyx; scalestore.keys picks one at
import time.
"""
import datetime

from .errors import TypeMismatch

TAG_INT = 0x01
TAG_STR = 0x02
TAG_DATE = 0x03

_EPOCH = datetime.date(1970, 1, 1)
_INT_MIN = -(1 << 63)
_INT_MAX = (1 << 63) - 1


def _encode_int64(out, v):
    if not (_INT_MIN <= v <= _INT_MAX):
        raise TypeMismatch("integer out of 64-bit range: %r" % v)
    out += ((v + (1 << 63)).to_bytes(8, "big"))
    return out


def encode_tuple(values, kinds=None):
    """Encode a typed tuple to its order-preserving byte string.

    kinds, when given, is a sequence of "int" | "str" | "date" checked
    against the values; otherwise kinds are inferred from Python types.
    """
    if kinds is not None and len(kinds) != len(values):
        raise TypeMismatch("expected %d fields, got %d" % (len(kinds), len(values)))
    out = bytearray()
    for i, v in enumerate(values):
        kind = kinds[i] if kinds is not None else None
        if isinstance(v, bool):
            raise TypeMismatch("bool is not an orderable key type")
        if isinstance(v, int) and kind in (None, "int"):
            out.append(TAG_INT)
            _encode_int64(out, v)
        elif isinstance(v, str) and kind in (None, "str"):
            out.append(TAG_STR)
            for b in v.encode("utf-8"):
                if b == 0x00:
                    out += b"\x00\xff"
                else:
                    out.append(b)
            out.append(0x00)
        elif isinstance(v, datetime.date) and kind in (None, "date"):
            out.append(TAG_DATE)
            _encode_int64(out, (v - _EPOCH).days)
        elif isinstance(v, int) and kind == "date":
            # days-since-epoch supplied directly
            out.append(TAG_DATE)
            _encode_int64(out, v)
        else:
            raise TypeMismatch(
                "field %d: value %r does not match kind %r" % (i, v, kind))
    return bytes(out)


def decode_tuple(data):
    """Inverse of encode_tuple; kinds are recovered from the tag bytes."""
    values = []
    i = 0
    n = len(data)
    while i < n:
        tag = data[i]
        i += 1
        if tag == TAG_INT or tag == TAG_DATE:
            if i + 8 > n:
                raise TypeMismatch("truncated integer field")
            v = int.from_bytes(data[i:i + 8], "big") - (1 << 63)
            i += 8
            if tag == TAG_DATE:
                values.append(_EPOCH + datetime.timedelta(days=v))
            else:
                values.append(v)
        elif tag == TAG_STR:
            raw = bytearray()
            while True:
                if i >= n:
                    raise TypeMismatch("unterminated string field")
                b = data[i]
                i += 1
                if b == 0x00:
                    if i < n and data[i] == 0xFF:
                        raw.append(0x00)
                        i += 1
                    else:
                        break
                else:
                    raw.append(b)
            values.append(raw.decode("utf-8"))
        else:
            raise TypeMismatch("bad tag byte 0x%02x" % tag)
    return tuple(values)
