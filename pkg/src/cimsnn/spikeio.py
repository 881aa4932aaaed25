"""Spike tensor files, weight containers, DVS event ingestion and synthetic spike generation.

SPKT layout (little-endian)::

    b"SPKT" | u32 version=1 | u32 T | u32 C | u32 H | u32 W | packed bits

Bits are the row-major flattening of the ``(T, C, H, W)`` tensor, packed
LSB-first within each byte; the payload is ``ceil(T*C*H*W / 8)`` bytes.

SPKW weight container::

    b"SPKW" | u32 version=1 | u32 n_tensors |
    per tensor: u32 ndim | u32 dims[ndim] | u32 weight_bits | int8 values (row-major)
"""

from __future__ import annotations

import csv
import struct

import numpy as np

from .errors import MalformedEvent, OutOfBounds, ParseError, ShapeMismatch, ValidationError
from .config import signed_range

SPKT_MAGIC = b"SPKT"
SPKW_MAGIC = b"SPKW"
VERSION = 1


def pack_spikes(spikes) -> bytes:
    x = np.asarray(spikes)
    if x.ndim != 4:
        raise ShapeMismatch(f"spike tensors are (T, C, H, W), got {x.shape}")
    if x.size and (x.min() < 0 or x.max() > 1):
        raise ValidationError("spike tensors hold only 0/1")
    header = SPKT_MAGIC + struct.pack("<5I", VERSION, *x.shape)
    return header + np.packbits(x.astype(np.uint8).reshape(-1), bitorder="little").tobytes()


def unpack_spikes(data: bytes) -> np.ndarray:
    if len(data) < 24 or data[:4] != SPKT_MAGIC:
        raise ParseError("not an SPKT file (bad magic or short header)")
    version, T, C, H, W = struct.unpack("<5I", data[4:24])
    if version != VERSION:
        raise ParseError(f"unsupported SPKT version {version}")
    n = T * C * H * W
    payload = data[24:]
    if len(payload) != (n + 7) // 8:
        raise ParseError(f"payload is {len(payload)} bytes, expected {(n + 7) // 8}")
    bits = np.unpackbits(np.frombuffer(payload, dtype=np.uint8), count=n, bitorder="little")
    return bits.reshape(T, C, H, W)


def write_spikes(path, spikes) -> None:
    with open(path, "wb") as fh:
        fh.write(pack_spikes(spikes))


def read_spikes(path) -> np.ndarray:
    with open(path, "rb") as fh:
        return unpack_spikes(fh.read())


def pack_weights(tensors, weight_bits: int) -> bytes:
    lo, hi = signed_range(weight_bits)
    out = [SPKW_MAGIC, struct.pack("<2I", VERSION, len(tensors))]
    for w in tensors:
        w = np.asarray(w)
        if w.size and (w.min() < lo or w.max() > hi):
            raise ValidationError(f"weights outside [{lo}, {hi}]")
        out.append(struct.pack(f"<I{w.ndim}II", w.ndim, *w.shape, weight_bits))
        out.append(w.astype(np.int8).tobytes())
    return b"".join(out)


def unpack_weights(data: bytes):
    """Returns ``(tensors, weight_bits)``; every tensor must share one width."""
    if len(data) < 12 or data[:4] != SPKW_MAGIC:
        raise ParseError("not an SPKW file (bad magic or short header)")
    version, count = struct.unpack_from("<2I", data, 4)
    if version != VERSION:
        raise ParseError(f"unsupported SPKW version {version}")
    off, tensors, widths = 12, [], set()
    try:
        for _ in range(count):
            (ndim,) = struct.unpack_from("<I", data, off)
            dims = struct.unpack_from(f"<{ndim}I", data, off + 4)
            (bits,) = struct.unpack_from("<I", data, off + 4 + 4 * ndim)
            off += 8 + 4 * ndim
            size = int(np.prod(dims)) if ndim else 1
            if off + size > len(data):
                raise ParseError("truncated weight payload")
            tensors.append(np.frombuffer(data, dtype=np.int8, count=size, offset=off).astype(np.int64).reshape(dims))
            widths.add(bits)
            off += size
    except struct.error:
        raise ParseError("truncated weight header") from None
    if off != len(data):
        raise ParseError(f"{len(data) - off} trailing bytes after {count} tensors")
    if len(widths) > 1:
        raise ParseError(f"mixed weight widths {sorted(widths)}")
    return tensors, (widths.pop() if widths else None)


def write_weights(path, tensors, weight_bits: int) -> None:
    with open(path, "wb") as fh:
        fh.write(pack_weights(tensors, weight_bits))


def read_weights(path):
    with open(path, "rb") as fh:
        return unpack_weights(fh.read())


def gen_spikes(dims, sparsity: float, seed: int) -> np.ndarray:
    """I.i.d. Bernoulli(1 - sparsity) bits of shape ``dims``."""
    if not 0.0 <= sparsity <= 1.0:
        raise ValidationError("sparsity must lie in [0, 1]")
    rng = np.random.default_rng(seed)
    return (rng.random(tuple(dims)) >= sparsity).astype(np.uint8)


EVENT_HEADER = ["t_us", "x", "y", "polarity"]


def ingest_events(path, height: int, width: int, timesteps: int, window_us: float,
                  min_count: int = 1) -> np.ndarray:
    """Bin a ``t_us,x,y,polarity`` CSV into a ``(T, 2, H, W)`` spike tensor.

    Bin ``t`` covers ``[t * window_us, (t + 1) * window_us)`` from time zero;
    events past the last bin are dropped. A pixel spikes when at least
    ``min_count`` events land in its bin (1 gives OR binning).
    """
    if window_us <= 0 or timesteps < 1 or min_count < 1:
        raise ValidationError("window_us > 0, timesteps >= 1 and min_count >= 1 required")
    counts = np.zeros((timesteps, 2, height, width), dtype=np.int64)
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            return counts.astype(np.uint8)
        if [h.strip() for h in header] != EVENT_HEADER:
            raise MalformedEvent(f"header must be {','.join(EVENT_HEADER)}", line=1)
        last_t = None
        for line, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 4:
                raise MalformedEvent(f"expected 4 fields, got {len(row)}", line=line)
            try:
                t = float(row[0])
                x, y, pol = (int(v) for v in row[1:])
            except ValueError:
                raise MalformedEvent(f"non-numeric field in {row}", line=line) from None
            if t < 0 or not np.isfinite(t):
                raise MalformedEvent(f"bad timestamp {row[0]}", line=line)
            if last_t is not None and t < last_t:
                raise MalformedEvent(f"timestamp {t} decreases (previous {last_t})", line=line)
            last_t = t
            if pol not in (0, 1):
                raise MalformedEvent(f"polarity must be 0 or 1, got {pol}", line=line)
            if not (0 <= x < width and 0 <= y < height):
                raise OutOfBounds(f"pixel ({x}, {y}) outside {width}x{height}", line=line)
            b = int(t // window_us)
            if b < timesteps:
                counts[b, pol, y, x] += 1
    return (counts >= min_count).astype(np.uint8)


def write_events(path, events) -> None:
    """Write ``(t_us, x, y, polarity)`` tuples with the standard header."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(EVENT_HEADER)
        w.writerows(events)
