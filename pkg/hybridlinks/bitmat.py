"""Packed binary vectors and matrices over GF(2).

Bits are stored row-major in little-endian ``uint64`` words: bit ``j`` of a
row lives in word ``j // 64`` at bit position ``j % 64``. Unused bits of the
last word are always zero, so equality is a plain comparison of the words.

Both containers are immutable once built. Heavy lifting in the other modules
happens on unpacked ``uint8`` arrays (``to_bits``); the packed form is the
storage, equality and file format.
"""
import struct
import logging
from pathlib import Path
from typing import Iterable, Sequence, Tuple, Union

import numpy as np

from .errors import DimensionError, FrameFormatError

WORD_BITS = 64
MAGIC = b"NUH1"
_HEADER = struct.Struct("<II")


def _word_count(nbits: int) -> int:
    return (nbits + WORD_BITS - 1) // WORD_BITS


def _as_bit_array(bits, ndim: int) -> np.ndarray:
    arr = np.asarray(bits)
    if arr.ndim != ndim:
        raise DimensionError(f"Expected a {ndim}-D bit array, got shape {arr.shape}")
    if arr.size and arr.dtype != np.bool_:
        if not np.isin(arr, (0, 1)).all():
            raise ValueError("Bit arrays may only contain 0 and 1")
    return arr.astype(np.uint8, copy=False)


def pack_rows(bits: np.ndarray) -> np.ndarray:
    """Pack a (rows, cols) 0/1 array into LSB-first uint64 words."""
    rows, cols = bits.shape
    n_words = _word_count(cols)
    if n_words == 0:
        return np.zeros((rows, 0), dtype=np.uint64)
    padded = np.zeros((rows, n_words * WORD_BITS), dtype=np.uint8)
    padded[:, :cols] = bits
    packed = np.packbits(padded, axis=1, bitorder="little")
    return np.ascontiguousarray(packed).view("<u8").astype(np.uint64)


def unpack_rows(words: np.ndarray, cols: int) -> np.ndarray:
    """Inverse of :func:`pack_rows`."""
    rows = words.shape[0]
    if cols == 0 or words.shape[1] == 0:
        return np.zeros((rows, cols), dtype=np.uint8)
    raw = np.ascontiguousarray(words.astype("<u8")).view(np.uint8)
    return np.unpackbits(raw, axis=1, bitorder="little")[:, :cols]


def _frozen(words: np.ndarray) -> np.ndarray:
    words = np.array(words, dtype=np.uint64, copy=True)
    words.flags.writeable = False
    return words


class BitVector:
    """Immutable packed bit string."""

    __slots__ = ("_length", "_words")

    def __init__(self, length: int, words: np.ndarray):
        if length < 0:
            raise ValueError(f"Length must be non-negative, got {length}")
        words = np.asarray(words, dtype=np.uint64).reshape(-1)
        if words.shape[0] != _word_count(length):
            raise DimensionError(f"{words.shape[0]} words cannot hold exactly {length} bits")
        tail = length % WORD_BITS
        if tail and int(words[-1]) >> tail:
            raise ValueError("Padding bits beyond the vector length must be zero")
        self._length = length
        self._words = _frozen(words)

    @classmethod
    def from_bits(cls, bits: Union[Iterable[int], np.ndarray]) -> "BitVector":
        arr = _as_bit_array(np.fromiter(bits, dtype=np.uint8) if not isinstance(bits, np.ndarray) else bits, 1)
        return cls(arr.shape[0], pack_rows(arr[None, :])[0])

    @classmethod
    def zeros(cls, length: int) -> "BitVector":
        return cls(length, np.zeros(_word_count(length), dtype=np.uint64))

    @classmethod
    def from_int(cls, value: int, length: int) -> "BitVector":
        """Big-endian: the most significant bit becomes bit 0."""
        if value < 0 or value >> length:
            raise ValueError(f"{value} does not fit in {length} bits")
        if length == 0:
            return cls.zeros(0)
        n_bytes = (length + 7) // 8
        raw = np.frombuffer(value.to_bytes(n_bytes, "big"), dtype=np.uint8)
        return cls.from_bits(np.unpackbits(raw)[8 * n_bytes - length:])

    @property
    def length(self) -> int:
        return self._length

    @property
    def words(self) -> np.ndarray:
        return self._words

    def __len__(self) -> int:
        return self._length

    def to_bits(self) -> np.ndarray:
        return unpack_rows(self._words[None, :], self._length)[0]

    def to_int(self) -> int:
        """Big-endian integer value (bit 0 is the most significant)."""
        if self._length == 0:
            return 0
        packed = np.packbits(self.to_bits())
        return int.from_bytes(packed.tobytes(), "big") >> (8 * packed.shape[0] - self._length)

    def __getitem__(self, index: int) -> int:
        if not -self._length <= index < self._length:
            raise IndexError(f"Bit index {index} out of range for length {self._length}")
        index %= self._length
        return int(self._words[index // WORD_BITS] >> np.uint64(index % WORD_BITS)) & 1

    def concat(self, other: "BitVector") -> "BitVector":
        return BitVector.from_bits(np.concatenate([self.to_bits(), other.to_bits()]))

    def __xor__(self, other: "BitVector") -> "BitVector":
        return xor(self, other)

    def __eq__(self, other) -> bool:
        if not isinstance(other, BitVector):
            return NotImplemented
        return self._length == other._length and np.array_equal(self._words, other._words)

    def __hash__(self) -> int:
        return hash((self._length, self._words.tobytes()))

    def __repr__(self) -> str:
        if self._length <= 64:
            return f"BitVector({''.join(map(str, self.to_bits()))})"
        return f"BitVector(length={self._length})"


class BitMatrix:
    """Immutable packed binary matrix, row-major."""

    __slots__ = ("_rows", "_cols", "_words")

    def __init__(self, rows: int, cols: int, words: np.ndarray):
        if rows < 0 or cols < 0:
            raise ValueError(f"Matrix shape must be non-negative, got {rows}x{cols}")
        words = np.asarray(words, dtype=np.uint64)
        if words.shape != (rows, _word_count(cols)):
            raise DimensionError(f"Word array of shape {words.shape} does not match a {rows}x{cols} matrix")
        tail = cols % WORD_BITS
        if tail and rows and (words[:, -1] >> np.uint64(tail)).any():
            raise ValueError("Padding bits beyond the column count must be zero")
        self._rows = rows
        self._cols = cols
        self._words = _frozen(words)

    @classmethod
    def from_bits(cls, bits: Union[Sequence[Sequence[int]], np.ndarray], cols: int = None) -> "BitMatrix":
        arr = np.asarray(bits)
        if arr.size == 0 and arr.ndim < 2:
            arr = np.zeros((0, cols or 0), dtype=np.uint8)
        arr = _as_bit_array(arr, 2)
        return cls(arr.shape[0], arr.shape[1], pack_rows(arr))

    @classmethod
    def zeros(cls, rows: int, cols: int) -> "BitMatrix":
        return cls(rows, cols, np.zeros((rows, _word_count(cols)), dtype=np.uint64))

    @classmethod
    def identity(cls, n: int) -> "BitMatrix":
        return cls.from_bits(np.eye(n, dtype=np.uint8))

    @classmethod
    def from_rows(cls, rows: Sequence[BitVector], cols: int = 0) -> "BitMatrix":
        if not rows:
            return cls.zeros(0, cols)
        lengths = {len(row) for row in rows}
        if len(lengths) != 1:
            raise DimensionError(f"Rows have different lengths: {sorted(lengths)}")
        return cls(len(rows), lengths.pop(), np.stack([row.words for row in rows]))

    @property
    def rows(self) -> int:
        return self._rows

    @property
    def cols(self) -> int:
        return self._cols

    @property
    def shape(self) -> Tuple[int, int]:
        return self._rows, self._cols

    @property
    def words(self) -> np.ndarray:
        return self._words

    def to_bits(self) -> np.ndarray:
        return unpack_rows(self._words, self._cols)

    def row(self, i: int) -> BitVector:
        if not 0 <= i < self._rows:
            raise IndexError(f"Row {i} out of range for {self._rows} rows")
        return BitVector(self._cols, self._words[i])

    def column(self, j: int) -> BitVector:
        if not 0 <= j < self._cols:
            raise IndexError(f"Column {j} out of range for {self._cols} columns")
        return BitVector.from_bits(self.to_bits()[:, j])

    def transpose(self) -> "BitMatrix":
        return BitMatrix.from_bits(self.to_bits().T.copy())

    def __xor__(self, other: "BitMatrix") -> "BitMatrix":
        return xor(self, other)

    def __matmul__(self, other: "BitMatrix") -> "BitMatrix":
        return matmul_gf2(self, other)

    def __eq__(self, other) -> bool:
        if not isinstance(other, BitMatrix):
            return NotImplemented
        return self.shape == other.shape and np.array_equal(self._words, other._words)

    def __hash__(self) -> int:
        return hash((self._rows, self._cols, self._words.tobytes()))

    def __repr__(self) -> str:
        return f"BitMatrix({self._rows}x{self._cols})"

    def to_bytes(self) -> bytes:
        """Serialize as magic, u32 rows, u32 cols (little-endian), packed row-major bits."""
        payload = np.packbits(self.to_bits().reshape(-1)).tobytes()
        return MAGIC + _HEADER.pack(self._rows, self._cols) + payload

    @classmethod
    def from_bytes(cls, data: bytes) -> "BitMatrix":
        header_len = len(MAGIC) + _HEADER.size
        if len(data) < header_len or data[:len(MAGIC)] != MAGIC:
            raise FrameFormatError("Not a bit-matrix file (bad magic or truncated header)")
        rows, cols = _HEADER.unpack_from(data, len(MAGIC))
        nbits = rows * cols
        expected = (nbits + 7) // 8
        payload = data[header_len:]
        if len(payload) != expected:
            raise FrameFormatError(f"Bit-matrix payload has {len(payload)} bytes, expected {expected} for {rows}x{cols}")
        bits = np.unpackbits(np.frombuffer(payload, dtype=np.uint8))
        if bits[nbits:].any():
            raise FrameFormatError("Non-zero padding bits in bit-matrix payload")
        return cls.from_bits(bits[:nbits].reshape(rows, cols))

    def save(self, path: Union[str, Path]) -> None:
        Path(path).write_bytes(self.to_bytes())
        logging.debug(f"Wrote {self._rows}x{self._cols} bit matrix to {path}")

    @classmethod
    def load(cls, path: Union[str, Path]) -> "BitMatrix":
        return cls.from_bytes(Path(path).read_bytes())


def xor(a, b):
    """Elementwise XOR of two vectors or two matrices of equal shape."""
    if isinstance(a, BitVector) and isinstance(b, BitVector):
        if a.length != b.length:
            raise DimensionError(f"Cannot XOR vectors of length {a.length} and {b.length}")
        return BitVector(a.length, a.words ^ b.words)
    if isinstance(a, BitMatrix) and isinstance(b, BitMatrix):
        if a.shape != b.shape:
            raise DimensionError(f"Cannot XOR matrices of shape {a.shape} and {b.shape}")
        return BitMatrix(a.rows, a.cols, a.words ^ b.words)
    raise TypeError(f"xor expects two BitVectors or two BitMatrices, got {type(a).__name__} and {type(b).__name__}")


def matmul_gf2(a: BitMatrix, b: BitMatrix) -> BitMatrix:
    """Matrix product over GF(2).

    Row ``i`` of the result is the XOR of the packed rows of ``b`` selected by
    the set bits of row ``i`` of ``a``.
    """
    if a.cols != b.rows:
        raise DimensionError(f"Cannot multiply {a.rows}x{a.cols} by {b.rows}x{b.cols}")
    out = np.zeros((a.rows, b.words.shape[1]), dtype=np.uint64)
    selectors = a.to_bits().astype(bool)
    for k in range(a.cols):
        mask = selectors[:, k]
        if mask.any():
            out[mask] ^= b.words[k]
    return BitMatrix(a.rows, b.cols, out)


def submatrix_rows(m: BitMatrix, idx: Sequence[int]) -> BitMatrix:
    """Rows of ``m`` in the given order."""
    idx = [int(i) for i in idx]
    bad = [i for i in idx if not 0 <= i < m.rows]
    if bad:
        raise IndexError(f"Row indices {bad} out of range for {m.rows} rows")
    if not idx:
        return BitMatrix.zeros(0, m.cols)
    return BitMatrix(len(idx), m.cols, m.words[idx])
