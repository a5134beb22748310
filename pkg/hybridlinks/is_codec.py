"""Random-binning channel code applied column by column.

Each column of the compressed matrix is an ell-bit message. Its first ``k_s``
bits (big-endian) pick one of ``2**k_s`` bins and the remaining ``k_w`` bits
pick a codeword inside the bin. Codeword ``(bin, offset)`` is stored at flat
index ``bin << k_w | offset``, which is simply the big-endian value of the
message column. Codewords are kept as ell-bit integers, link 0 being the most
significant bit.
"""
import json
import math
import logging
from dataclasses import asdict, dataclass, replace
from typing import List, Optional, Tuple

import numpy as np

from .bitmat import BitMatrix, BitVector
from .errors import AmbiguousCodewordError, DeskScaleError, DimensionError, NotACodewordError
from .source_codec import CompressedMatrix

MAX_ELL = 24
SAMPLING_MODES = ("iid", "permutation")


@dataclass(frozen=True)
class CodeParams:
    ell: int
    w: int
    k_s: int
    t: float = 1.0
    rng_seed: int = 0
    sampling: str = "permutation"
    check_security: bool = True

    def __post_init__(self):
        if self.ell < 2:
            raise ValueError(f"Need at least two links, got ell={self.ell}")
        if not 0 <= self.k_s <= self.ell:
            raise ValueError(f"k_s must lie in [0, {self.ell}], got {self.k_s}")
        if not 0 <= self.w < self.ell:
            raise ValueError(f"w must lie in [0, {self.ell - 1}], got {self.w}")
        if self.t < 1:
            raise ValueError(f"Security exponent t must be >= 1, got {self.t}")
        if self.sampling not in SAMPLING_MODES:
            raise ValueError(f"Unknown codebook sampling '{self.sampling}', expected one of {SAMPLING_MODES}")
        if self.check_security and self.k_s > self.ell - self.w - self.l_eps:
            raise ValueError(f"k_s={self.k_s} exceeds ell - w - l_eps = {self.ell - self.w - self.l_eps}")

    @property
    def k_w(self) -> int:
        return self.ell - self.k_s

    @property
    def l_eps(self) -> int:
        return math.ceil(self.t * math.log2(self.ell))

    def to_dict(self) -> dict:
        return asdict(self)


def codes_to_bits(codes: np.ndarray, ell: int) -> np.ndarray:
    """Big-endian bits of each integer along a new last axis."""
    shifts = np.arange(ell - 1, -1, -1, dtype=np.int64)
    return ((np.asarray(codes, dtype=np.int64)[..., None] >> shifts) & 1).astype(np.uint8)


def bits_to_codes(bits: np.ndarray) -> np.ndarray:
    """Big-endian integer value of the last axis."""
    ell = bits.shape[-1]
    weights = 1 << np.arange(ell - 1, -1, -1, dtype=np.int64)
    return np.asarray(bits, dtype=np.int64) @ weights


class Codebook:
    """2**k_s bins of 2**k_w codewords with a sorted reverse index."""

    def __init__(self, params: CodeParams, codes: np.ndarray):
        codes = np.asarray(codes, dtype=np.int64).reshape(-1)
        if codes.shape[0] != 2**params.ell:
            raise DimensionError(f"Codebook needs {2**params.ell} codewords, got {codes.shape[0]}")
        if codes.size and (codes.min() < 0 or codes.max() >= 2**params.ell):
            raise ValueError(f"Codewords must be {params.ell}-bit values")
        self.params = params
        self._codes = codes.copy()
        self._codes.flags.writeable = False
        self._order = np.argsort(self._codes, kind="stable")
        self._sorted = self._codes[self._order]

    @classmethod
    def from_table(cls, params: CodeParams, table) -> "Codebook":
        """Build from explicit codeword bits of shape (2**k_s, 2**k_w, ell)."""
        table = np.asarray(table, dtype=np.uint8)
        expected = (2**params.k_s, 2**params.k_w, params.ell)
        if table.shape != expected:
            raise DimensionError(f"Codebook table has shape {table.shape}, expected {expected}")
        return cls(params, bits_to_codes(table).reshape(-1))

    @property
    def ell(self) -> int:
        return self.params.ell

    @property
    def k_s(self) -> int:
        return self.params.k_s

    @property
    def k_w(self) -> int:
        return self.params.k_w

    @property
    def codes(self) -> np.ndarray:
        return self._codes

    @property
    def bins(self) -> np.ndarray:
        """Codeword bits indexed as [bin, offset, link]."""
        return codes_to_bits(self._codes, self.ell).reshape(2**self.k_s, 2**self.k_w, self.ell)

    def codeword(self, bin_index: int, offset: int) -> BitVector:
        return BitVector.from_int(int(self._codes[(bin_index << self.k_w) | offset]), self.ell)

    def lookup(self, codes: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Vectorized reverse lookup: (first matching flat index, number of matches)."""
        codes = np.asarray(codes, dtype=np.int64)
        left = np.searchsorted(self._sorted, codes, side="left")
        right = np.searchsorted(self._sorted, codes, side="right")
        flat = self._order[np.minimum(left, self._sorted.shape[0] - 1)]
        return flat, right - left

    def reverse(self, codeword: BitVector) -> List[Tuple[int, int]]:
        """All (bin, offset) pairs holding ``codeword``."""
        value = codeword.to_int()
        left = np.searchsorted(self._sorted, value, side="left")
        right = np.searchsorted(self._sorted, value, side="right")
        mask = (1 << self.k_w) - 1
        return sorted((int(f) >> self.k_w, int(f) & mask) for f in self._order[left:right])

    def duplicate_count(self) -> int:
        """Number of codewords that share their value with another codeword."""
        _, counts = np.unique(self._codes, return_counts=True)
        return int(counts[counts > 1].sum())

    def to_json(self) -> str:
        return json.dumps(self.params.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "Codebook":
        return generate_codebook(CodeParams(**json.loads(text)))


def generate_codebook(params: CodeParams) -> Codebook:
    """Draw the codebook deterministically from ``params.rng_seed``.

    ``iid`` draws every codeword uniformly and independently; ``permutation``
    draws a uniformly random bijection, so each codeword is still uniform
    over {0,1}^ell but no two coincide.
    """
    if params.ell > MAX_ELL:
        raise DeskScaleError(f"Codebook with ell={params.ell} exceeds the limit ell <= {MAX_ELL}")
    rng = np.random.default_rng(params.rng_seed)
    size = 2**params.ell
    if params.sampling == "iid":
        codes = rng.integers(0, size, size=size, dtype=np.int64)
    else:
        codes = rng.permutation(size).astype(np.int64)
    codebook = Codebook(params, codes)
    logging.debug(f"Generated {params.sampling} codebook: ell={params.ell}, {2**params.k_s} bins x "
                  f"{2**params.k_w} codewords, seed {params.rng_seed}")
    return codebook


def encode_column(m: BitVector, cb: Codebook) -> BitVector:
    if len(m) != cb.ell:
        raise DimensionError(f"Column has {len(m)} bits, codebook expects {cb.ell}")
    return BitVector.from_int(int(cb.codes[m.to_int()]), cb.ell)


def decode_column(x: BitVector, cb: Codebook) -> BitVector:
    if len(x) != cb.ell:
        raise DimensionError(f"Column has {len(x)} bits, codebook expects {cb.ell}")
    matches = cb.reverse(x)
    if not matches:
        raise NotACodewordError(f"{x} is not a codeword")
    if len(matches) > 1:
        raise AmbiguousCodewordError(f"{x} appears {len(matches)} times in the codebook: {matches}")
    bin_index, offset = matches[0]
    return BitVector.from_int((bin_index << cb.k_w) | offset, cb.ell)


def encode_columns(m_bits: np.ndarray, cb: Codebook) -> np.ndarray:
    """Encode every column of an (ell, N) bit array."""
    if m_bits.shape[0] != cb.ell:
        raise DimensionError(f"Message has {m_bits.shape[0]} rows, codebook expects {cb.ell}")
    return codes_to_bits(cb.codes[bits_to_codes(m_bits.T)], cb.ell).T


def decode_columns(x_bits: np.ndarray, cb: Codebook) -> Tuple[np.ndarray, np.ndarray]:
    """Decode every column of an (ell, N) bit array.

    Returns the message bits and the number of codebook matches per column;
    columns whose count is not 1 carry an unspecified message.
    """
    if x_bits.shape[0] != cb.ell:
        raise DimensionError(f"Codeword array has {x_bits.shape[0]} rows, codebook expects {cb.ell}")
    flat, counts = cb.lookup(bits_to_codes(x_bits.T))
    return codes_to_bits(flat, cb.ell).T, counts


def encode_matrix(m: CompressedMatrix, cb: Codebook) -> BitMatrix:
    return BitMatrix.from_bits(encode_columns(m.bits.to_bits(), cb))


def decode_matrix(x: BitMatrix, cb: Codebook) -> BitMatrix:
    """Inverse of :func:`encode_matrix`; raises on the first undecodable column."""
    m_bits, counts = decode_columns(x.to_bits(), cb)
    bad = np.flatnonzero(counts != 1)
    if bad.size:
        column = int(bad[0])
        if counts[column] == 0:
            raise NotACodewordError(f"Column {column} is not a codeword")
        raise AmbiguousCodewordError(f"Column {column} matches {int(counts[column])} codewords")
    return BitMatrix.from_bits(m_bits)


def expected_ambiguity_rate(ell: int) -> float:
    """Chance that a codeword of an iid rate-one codebook is shared with another one."""
    return 1.0 - (1.0 - 2.0**-ell) ** (2**ell - 1)


def ambiguity_rate(params: CodeParams, codebooks: int, seed: int = 0) -> float:
    """Average share of ambiguous columns over freshly drawn codebooks."""
    rates = []
    for child in np.random.SeedSequence(seed).spawn(codebooks):
        cb = generate_codebook(replace(params, rng_seed=int(child.generate_state(1)[0])))
        _, inverse, counts = np.unique(cb.codes, return_inverse=True, return_counts=True)
        rates.append(float((counts[inverse] > 1).mean()))
    rate = float(np.mean(rates))
    logging.info(f"Ambiguity over {codebooks} {params.sampling} codebooks at ell={params.ell}: {rate:.5f}")
    return rate


@dataclass(frozen=True)
class BinConcentration:
    expected_size: float
    epsilon: float
    fraction_within: float
    target_epsilon: float
    fraction_within_target: float
    mean_size: float
    patterns: int

    def to_dict(self) -> dict:
        return asdict(self)


def bin_concentration(cb: Codebook, w: int, patterns: int, seed: int = 0,
                      epsilon: Optional[float] = None) -> BinConcentration:
    """Sizes of bins filtered by ``w`` observed coordinates of a random codeword.

    The share of (pattern, bin) sizes inside ``(1 +- epsilon) * 2**(k_w - w)``
    is reported for ``epsilon`` (default: two Poisson standard deviations) and
    for the target ``ell**-t``.
    """
    if not 0 <= w <= cb.ell:
        raise ValueError(f"Observed coordinate count must lie in [0, {cb.ell}], got {w}")
    rng = np.random.default_rng(seed)
    expected = 2.0 ** (cb.k_w - w)
    if epsilon is None:
        epsilon = 2.0 / math.sqrt(expected)
    target = cb.ell ** -cb.params.t
    sizes = np.zeros((patterns, 2**cb.k_s), dtype=np.int64)
    for k in range(patterns):
        coords = rng.choice(cb.ell, size=w, replace=False)
        mask = int(sum(1 << (cb.ell - 1 - int(i)) for i in coords))
        observed = int(cb.codes[rng.integers(0, cb.codes.shape[0])]) & mask
        match = (cb.codes & mask) == observed
        sizes[k] = match.reshape(2**cb.k_s, 2**cb.k_w).sum(axis=1)

    def share(eps: float) -> float:
        return float(((sizes >= (1 - eps) * expected) & (sizes <= (1 + eps) * expected)).mean())

    report = BinConcentration(expected, epsilon, share(epsilon), target, share(target), float(sizes.mean()), patterns)
    logging.info(f"Bin concentration over {patterns} patterns: {report.fraction_within:.3f} within "
                 f"+-{epsilon:.3f}, {report.fraction_within_target:.3f} within +-{target:.3f}")
    return report
