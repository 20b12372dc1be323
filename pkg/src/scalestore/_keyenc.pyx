# cython: language_level=3, boundscheck=False, wraparound=False
"""Compiled order-preserving key encoding (hot kernel).

Byte-for-byte identical output to scalestore.keyenc_py; see that module for
the layout.  Selected automatically by scalestore.keys when built.
"""
import datetime

from cpython.bytearray cimport PyByteArray_AS_STRING, PyByteArray_Resize

from .errors import TypeMismatch

cdef int TAG_INT = 0x01
cdef int TAG_STR = 0x02
cdef int TAG_DATE = 0x03

_EPOCH = datetime.date(1970, 1, 1)

cdef object _INT_MIN = -(1 << 63)
cdef object _INT_MAX = (1 << 63) - 1
cdef object _OFFSET = 1 << 63


cdef inline void _put_u64(bytearray out, unsigned long long u):
    cdef int i
    for i in range(7, -1, -1):
        out.append(<unsigned char>((u >> (i * 8)) & 0xFF))


def encode_tuple(values, kinds=None):
    """Encode a typed tuple to its order-preserving byte string."""
    if kinds is not None and len(kinds) != len(values):
        raise TypeMismatch("expected %d fields, got %d" % (len(kinds), len(values)))
    cdef bytearray out = bytearray()
    cdef bytes raw
    cdef unsigned char b
    cdef Py_ssize_t i
    cdef object kind, v
    for i in range(len(values)):
        v = values[i]
        kind = kinds[i] if kinds is not None else None
        if isinstance(v, bool):
            raise TypeMismatch("bool is not an orderable key type")
        if isinstance(v, int) and (kind is None or kind == "int"):
            if v < _INT_MIN or v > _INT_MAX:
                raise TypeMismatch("integer out of 64-bit range: %r" % v)
            out.append(TAG_INT)
            _put_u64(out, <unsigned long long>(<object>(v + _OFFSET)))
        elif isinstance(v, str) and (kind is None or kind == "str"):
            out.append(TAG_STR)
            raw = (<str>v).encode("utf-8")
            for b in raw:
                if b == 0x00:
                    out.append(0x00)
                    out.append(0xFF)
                else:
                    out.append(b)
            out.append(0x00)
        elif isinstance(v, datetime.date) and (kind is None or kind == "date"):
            out.append(TAG_DATE)
            _put_u64(out, <unsigned long long>(<object>((v - _EPOCH).days + _OFFSET)))
        elif isinstance(v, int) and kind == "date":
            out.append(TAG_DATE)
            _put_u64(out, <unsigned long long>(<object>(v + _OFFSET)))
        else:
            raise TypeMismatch(
                "field %d: value %r does not match kind %r" % (i, v, kind))
    return bytes(out)


def decode_tuple(data):
    """Inverse of encode_tuple; kinds are recovered from the tag bytes."""
    cdef const unsigned char[:] buf = data
    cdef Py_ssize_t i = 0, n = len(data)
    cdef unsigned long long u
    cdef int j
    cdef unsigned char tag, b
    values = []
    while i < n:
        tag = buf[i]
        i += 1
        if tag == TAG_INT or tag == TAG_DATE:
            if i + 8 > n:
                raise TypeMismatch("truncated integer field")
            u = 0
            for j in range(8):
                u = (u << 8) | buf[i + j]
            i += 8
            v = <object>u - _OFFSET
            if tag == TAG_DATE:
                values.append(_EPOCH + datetime.timedelta(days=v))
            else:
                values.append(v)
        elif tag == TAG_STR:
            raw = bytearray()
            while True:
                if i >= n:
                    raise TypeMismatch("unterminated string field")
                b = buf[i]
                i += 1
                if b == 0x00:
                    if i < n and buf[i] == 0xFF:
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
