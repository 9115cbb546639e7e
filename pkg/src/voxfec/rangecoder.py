"""Bit-exact entropy coding of quantized symbols under per-dimension
discretized Gaussian models.

The coder is a 64-bit binary arithmetic coder with underflow counting and
16-bit probability precision, operating on pure Python integers so that
identical inputs give identical bytes everywhere. Symbols outside the
coder alphabet escape to a 16-bit raw value. Every frame is coded
independently and closes with an 8-bit guard value; decoding anything else
at the guard position raises DecodeFailure, which is the signal that routes
the receiver onto the concealment path.
"""

from __future__ import annotations

from bisect import bisect_right
from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from .hyperprior import GaussianParams
from .transform import QuantizedLatent

PRECISION = 16
TOTAL = 1 << PRECISION
HALF_WIDTH = 255  # alphabet is [-HALF_WIDTH, HALF_WIDTH] plus one escape slot
GUARD_BITS = 8
GUARD_VALUE = 0xA5

_STATE_BITS = 64
_MASK = (1 << _STATE_BITS) - 1
_TOP = 1 << (_STATE_BITS - 1)
_SECOND = _TOP >> 1


class DecodeFailure(Exception):
    """Payload could not be decoded (corrupt or truncated stream)."""


@dataclass(frozen=True)
class Bitstream:
    """Byte buffer with an exact bit count."""

    data: bytes
    bit_length: int

    def __post_init__(self):
        if self.bit_length < 0 or self.bit_length > 8 * len(self.data):
            raise ValueError("bit_length exceeds buffer size")


@dataclass(frozen=True)
class CdfTable:
    """Per-dimension cumulative counts over the coder alphabet.

    Rows are deduplicated: `cum[rows[i]]` is the cumulative table for
    dimension i. Each row starts at 0, ends at TOTAL, gives every symbol at
    least one count, and reserves exactly one count for the escape slot.
    """

    cum: np.ndarray  # (n_rows, n_symbols + 1) uint32
    rows: np.ndarray  # (d,) int32
    half_width: int = HALF_WIDTH

    @property
    def n_dims(self) -> int:
        return int(self.rows.size)

    @property
    def escape_symbol(self) -> int:
        return 2 * self.half_width + 1

    def row(self, dim: int) -> np.ndarray:
        return self.cum[self.rows[dim]]

    def row_lists(self) -> list[list[int]]:
        # plain-int rows for the coder loops; built once per table
        try:
            return self._lists  # type: ignore[attr-defined]
        except AttributeError:
            lists = [r.tolist() for r in self.cum]
            object.__setattr__(self, "_lists", lists)
            return lists


def _largest_remainder(probs: np.ndarray, budget: int) -> np.ndarray:
    """Integer allocation of `budget` proportional to rows of `probs`."""
    scaled = probs * budget
    base = np.floor(scaled).astype(np.int64)
    rem = scaled - base
    deficit = budget - base.sum(axis=1)
    order = np.argsort(-rem, axis=1, kind="stable")
    for u in range(base.shape[0]):
        base[u, order[u, : deficit[u]]] += 1
    return base


def build_cdf(theta: GaussianParams, step: float, half_width: int = HALF_WIDTH) -> CdfTable:
    """Discretize per-dimension Gaussians onto the coder alphabet.

    Symbol i gets the Gaussian mass of ((i-0.5)*step, (i+0.5)*step] with the
    two tails folded into -L and L, then counts are floored at one per
    symbol and the remainder of the 16-bit budget is assigned by largest
    remainder. The escape slot always holds exactly one count.
    """
    if step <= 0:
        raise ValueError(f"non-positive step {step}")
    mu = np.atleast_1d(theta.mu).tolist()
    sigma = np.atleast_1d(theta.sigma).tolist()
    seen: dict[tuple[float, float], int] = {}
    inverse = np.empty(len(mu), dtype=np.int32)
    uniq_pairs: list[tuple[float, float]] = []
    for i, pair in enumerate(zip(mu, sigma)):
        j = seen.get(pair)
        if j is None:
            j = len(uniq_pairs)
            seen[pair] = j
            uniq_pairs.append(pair)
        inverse[i] = j
    uniq = np.asarray(uniq_pairs)
    n_sym = 2 * half_width + 1
    bounds = (np.arange(-half_width, half_width) + 0.5) * step
    z = (bounds[None, :] - uniq[:, :1]) / uniq[:, 1:2]
    cdf = ndtr(z)
    probs = np.empty((uniq.shape[0], n_sym))
    probs[:, 0] = cdf[:, 0]
    probs[:, 1:-1] = np.diff(cdf, axis=1)
    probs[:, -1] = 1.0 - cdf[:, -1]
    np.clip(probs, 0.0, None, out=probs)
    probs /= probs.sum(axis=1, keepdims=True)
    counts = 1 + _largest_remainder(probs, TOTAL - 1 - n_sym)
    full = np.concatenate(
        [counts, np.ones((counts.shape[0], 1), dtype=np.int64)], axis=1
    )
    cum = np.zeros((full.shape[0], n_sym + 2), dtype=np.uint32)
    cum[:, 1:] = np.cumsum(full, axis=1)
    return CdfTable(cum, inverse, half_width)


class _BitWriter:
    __slots__ = ("_buf", "_acc", "_nacc")

    def __init__(self):
        self._buf = bytearray()
        self._acc = 0
        self._nacc = 0

    def write(self, bit: int) -> None:
        self._acc = (self._acc << 1) | bit
        self._nacc += 1
        if self._nacc == 8:
            self._buf.append(self._acc)
            self._acc = 0
            self._nacc = 0

    def getvalue(self) -> Bitstream:
        bit_length = 8 * len(self._buf) + self._nacc
        if self._nacc:
            tail = bytes([self._acc << (8 - self._nacc)])
        else:
            tail = b""
        return Bitstream(bytes(self._buf) + tail, bit_length)


class _BitReader:
    __slots__ = ("_data", "_bit_length", "_pos")

    def __init__(self, bits: Bitstream):
        self._data = bits.data
        self._bit_length = bits.bit_length
        self._pos = 0

    def read(self) -> int:
        # Reads past bit_length return 0 without touching the buffer.
        p = self._pos
        self._pos = p + 1
        if p >= self._bit_length:
            return 0
        return (self._data[p >> 3] >> (7 - (p & 7))) & 1

    def read_word(self, nbits: int) -> int:
        """Bulk read from position 0, used to preload the decoder state.

        The writer zero-pads the final partial byte and reads past the end
        zero-fill, so padding with zero bytes matches bit-by-bit reads.
        """
        nbytes = (nbits + 7) >> 3
        word = int.from_bytes(self._data[:nbytes].ljust(nbytes, b"\0"), "big")
        self._pos += nbits
        return word >> (8 * nbytes - nbits)


class RangeEncoder:
    """Single-stream encoder; one instance per frame payload."""

    def __init__(self):
        self._low = 0
        self._high = _MASK
        self._underflow = 0
        self._writer = _BitWriter()

    def encode(self, cum_low: int, freq: int, total: int) -> None:
        low = self._low
        high = self._high
        rng = high - low + 1
        high = low + (rng * (cum_low + freq)) // total - 1
        low = low + (rng * cum_low) // total
        while ((low ^ high) & _TOP) == 0:
            self._emit(low >> (_STATE_BITS - 1))
            low = (low << 1) & _MASK
            high = ((high << 1) & _MASK) | 1
        while (low & ~high & _SECOND) != 0:
            self._underflow += 1
            low = (low << 1) & (_MASK >> 1)
            high = ((high << 1) & (_MASK >> 1)) | _TOP | 1
        self._low = low
        self._high = high

    def encode_raw(self, value: int, nbits: int) -> None:
        self.encode(value, 1, 1 << nbits)

    def _emit(self, bit: int) -> None:
        w = self._writer
        w.write(bit)
        inv = bit ^ 1
        for _ in range(self._underflow):
            w.write(inv)
        self._underflow = 0

    def finish(self) -> Bitstream:
        # One final 1 bit pins the decoder's zero-padded code inside the
        # final interval.
        self._writer.write(1)
        return self._writer.getvalue()


class RangeDecoder:
    """Single-stream decoder; one instance per frame payload."""

    def __init__(self, bits: Bitstream):
        self._reader = _BitReader(bits)
        self._low = 0
        self._high = _MASK
        self._code = self._reader.read_word(_STATE_BITS)

    def decode(self, cum_row: list[int]) -> int:
        total = cum_row[-1]
        rng = self._high - self._low + 1
        value = ((self._code - self._low + 1) * total - 1) // rng
        s = bisect_right(cum_row, value) - 1
        self._update(cum_row[s], cum_row[s + 1] - cum_row[s], total)
        return s

    def decode_raw(self, nbits: int) -> int:
        total = 1 << nbits
        rng = self._high - self._low + 1
        value = ((self._code - self._low + 1) * total - 1) // rng
        if value >= total:
            value = total - 1
        self._update(value, 1, total)
        return value

    def _update(self, cum_low: int, freq: int, total: int) -> None:
        low = self._low
        high = self._high
        code = self._code
        rng = high - low + 1
        high = low + (rng * (cum_low + freq)) // total - 1
        low = low + (rng * cum_low) // total
        read = self._reader.read
        while ((low ^ high) & _TOP) == 0:
            code = ((code << 1) & _MASK) | read()
            low = (low << 1) & _MASK
            high = ((high << 1) & _MASK) | 1
        while (low & ~high & _SECOND) != 0:
            code = (code & _TOP) | ((code << 1) & (_MASK >> 1)) | read()
            low = (low << 1) & (_MASK >> 1)
            high = ((high << 1) & (_MASK >> 1)) | _TOP | 1
        self._low = low
        self._high = high
        self._code = code


def encode_frame(yq: QuantizedLatent, tables: CdfTable) -> Bitstream:
    """Range-code one frame of quantizer indices against the tables."""
    indices = yq.indices
    if indices.size != tables.n_dims:
        raise ValueError(f"frame has {indices.size} dims, tables {tables.n_dims}")
    half = tables.half_width
    esc = tables.escape_symbol
    enc = RangeEncoder()
    encode = enc.encode
    lists = tables.row_lists()
    rowmap = tables.rows.tolist()
    for i, idx in enumerate(indices.tolist()):
        row = lists[rowmap[i]]
        if -half <= idx <= half:
            s = idx + half
            encode(row[s], row[s + 1] - row[s], TOTAL)
        else:
            if not -32768 <= idx <= 32767:
                raise ValueError(f"symbol {idx} outside the 16-bit escape range")
            encode(row[esc], row[esc + 1] - row[esc], TOTAL)
            enc.encode_raw(idx & 0xFFFF, 16)
    enc.encode_raw(GUARD_VALUE, GUARD_BITS)
    return enc.finish()


def decode_frame(bits: Bitstream, tables: CdfTable, d_y: int) -> QuantizedLatent:
    """Exact inverse of encode_frame; raises DecodeFailure on a bad stream."""
    if d_y != tables.n_dims:
        raise ValueError(f"expected {d_y} dims, tables have {tables.n_dims}")
    half = tables.half_width
    esc = tables.escape_symbol
    dec = RangeDecoder(bits)
    decode = dec.decode
    lists = tables.row_lists()
    rowmap = tables.rows.tolist()
    out = [0] * d_y
    for i in range(d_y):
        s = decode(lists[rowmap[i]])
        if s == esc:
            v = dec.decode_raw(16)
            out[i] = v - 65536 if v >= 32768 else v
        else:
            out[i] = s - half
    if dec.decode_raw(GUARD_BITS) != GUARD_VALUE:
        raise DecodeFailure("corrupt or truncated frame payload")
    return QuantizedLatent(np.array(out, dtype=np.int64), 0)


def measure_rate(bits: Bitstream) -> int:
    """Exact coded size of a payload in bits."""
    return bits.bit_length


class TableCache:
    """Byte-bounded FIFO memo for CdfTables.

    Tables are pure functions of (model, side info, rate index), so sender
    and receiver instances may share one cache; callers must include a
    model identifier in the key. Useful when side info has low entropy
    (few distinct summaries); a miss costs one build_cdf.
    """

    def __init__(self, max_bytes: int = 64 << 20):
        self._max_bytes = max_bytes
        self._bytes = 0
        self._store: dict[tuple, CdfTable] = {}

    def get(self, key: tuple) -> CdfTable | None:
        return self._store.get(key)

    def put(self, key: tuple, table: CdfTable) -> None:
        # ~30 bytes per count: the uint32 row plus its boxed-int mirror
        size = table.cum.shape[0] * table.cum.shape[1] * 30
        while self._store and self._bytes + size > self._max_bytes:
            oldest = next(iter(self._store))
            old = self._store.pop(oldest)
            self._bytes -= old.cum.shape[0] * old.cum.shape[1] * 30
        self._bytes += size
        self._store[key] = table


DEFAULT_TABLE_CACHE = TableCache()


def model_bits(yq: QuantizedLatent, tables: CdfTable) -> float:
    """Cross-entropy of a frame under the tables, in bits.

    Escaped symbols cost the escape slot's information plus 16 raw bits;
    the per-frame guard and flush are not included.
    """
    half = tables.half_width
    esc = tables.escape_symbol
    total = 0.0
    for i, idx in enumerate(yq.indices):
        row = tables.cum[tables.rows[i]]
        if -half <= idx <= half:
            s = int(idx) + half
            freq = int(row[s + 1]) - int(row[s])
            total += -np.log2(freq / TOTAL)
        else:
            freq = int(row[esc + 1]) - int(row[esc])
            total += -np.log2(freq / TOTAL) + 16.0
    return total
