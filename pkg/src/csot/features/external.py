"""Binary container for externally computed feature tensors.

Layout (little-endian)::

    b"CSOT"  u16 version  u32 H  u32 W  u32 D  float32[D][H][W]

The payload is stored channel plane by channel plane, each plane row-major.
"""
import struct
from pathlib import Path

import numpy as np

MAGIC = b"CSOT"
VERSION = 1
_HEADER = struct.Struct("<4sHIII")
MAX_ELEMENTS = 1 << 28


class ExternalFormatError(ValueError):
    pass


class BadMagicError(ExternalFormatError):
    pass


class UnsupportedVersionError(ExternalFormatError):
    pass


class DimensionOverflowError(ExternalFormatError):
    pass


class TruncatedPayloadError(ExternalFormatError):
    pass


def store_external(path, fmap):
    fmap = np.asarray(fmap)
    if fmap.ndim == 2:
        fmap = fmap[:, :, None]
    h, w, d = fmap.shape
    payload = np.ascontiguousarray(fmap.transpose(2, 0, 1), dtype="<f4")
    tmp = Path(str(path) + ".tmp")
    tmp.write_bytes(_HEADER.pack(MAGIC, VERSION, h, w, d) + payload.tobytes())
    tmp.replace(path)


def decode_external(raw):
    if len(raw) < _HEADER.size:
        raise TruncatedPayloadError(f"header needs {_HEADER.size} bytes, got {len(raw)}")
    magic, version, h, w, d = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise BadMagicError(f"bad magic {magic!r}")
    if version != VERSION:
        raise UnsupportedVersionError(f"unsupported version {version}")
    if min(h, w, d) == 0 or h * w * d > MAX_ELEMENTS:
        raise DimensionOverflowError(f"invalid dimensions {h}x{w}x{d}")
    expected = _HEADER.size + 4 * h * w * d
    if len(raw) < expected:
        raise TruncatedPayloadError(f"payload has {len(raw)} bytes, expected {expected}")
    data = np.frombuffer(raw, dtype="<f4", count=h * w * d, offset=_HEADER.size)
    return data.reshape(d, h, w).transpose(1, 2, 0).copy()


def load_external(path):
    """Load a stored tensor as an ``(H, W, D)`` float32 array, bit for bit."""
    return decode_external(Path(path).read_bytes())
