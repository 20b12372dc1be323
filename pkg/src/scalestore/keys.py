"""Key encoding front-end: picks the compiled core when available.

Set SCALESTORE_PURE=1 to force the pure-Python implementation (used by the
benchmark and as an escape hatch on platforms without a compiler).
"""
import os

from . import keyenc_py

if os.environ.get("SCALESTORE_PURE"):
    _impl = keyenc_py
    COMPILED = False
else:
    try:
        from . import _keyenc as _impl  # type: ignore[no-redef]
        COMPILED = True
    except ImportError:
        _impl = keyenc_py
        COMPILED = False

encode_tuple = _impl.encode_tuple
decode_tuple = _impl.decode_tuple

KEY_MIN = b""          # sorts before every encoded tuple
KEY_MAX = b"\xff"      # sorts after every encoded tuple (tags are < 0xff)


def prefix_range(prefix: bytes):
    """[low, high) byte range covering every key starting with prefix."""
    return prefix, prefix_successor(prefix)


def prefix_successor(prefix: bytes) -> bytes:
    """Smallest byte string greater than every string with this prefix."""
    b = bytearray(prefix)
    while b and b[-1] == 0xFF:
        b.pop()
    if not b:
        return KEY_MAX
    b[-1] += 1
    return bytes(b)
