"""Seeded polar source coder applied row by row.

A source row ``v`` is transformed to ``a = v G_n``; the compressed row keeps
``a[high_set]`` and ``a[mixed_set] XOR seed`` (mixed positions in increasing
order consume seed bits 0..seed_len-1). Decoding pins those positions and runs
successive cancellation for the dropped low-entropy positions.
"""
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Tuple, Union

import numpy as np

from .bitmat import BitMatrix, BitVector
from .errors import DeskScaleError, DimensionError
from .polar import (IndexProfile, PolarParams, exact_source_law, polar_transform_bits,
                    shard_size, successive_cancellation)

# Exhaustive output-law limits
OUTPUT_LAW_MAX_N = 10
OUTPUT_LAW_MAX_ROWS = 2


@dataclass(frozen=True)
class SeedMatrix:
    """Uniform seed shared with the receiver, one row per source row."""
    bits: BitMatrix

    @property
    def rows(self) -> int:
        return self.bits.rows

    @property
    def cols(self) -> int:
        return self.bits.cols

    @classmethod
    def random(cls, rows: int, cols: int, rng: np.random.Generator) -> "SeedMatrix":
        return cls(BitMatrix.from_bits(rng.integers(0, 2, size=(rows, cols), dtype=np.uint8)))

    @classmethod
    def zeros(cls, rows: int, cols: int) -> "SeedMatrix":
        return cls(BitMatrix.zeros(rows, cols))


@dataclass(frozen=True)
class CompressedMatrix:
    """Compressed source matrix (ell x compressed_len) tagged with its profile."""
    bits: BitMatrix
    profile_id: str

    @property
    def rows(self) -> int:
        return self.bits.rows

    @property
    def cols(self) -> int:
        return self.bits.cols

    def save(self, path: Union[str, Path]) -> None:
        """Write the bit-matrix file plus a ``.json`` sidecar naming the profile."""
        path = Path(path)
        self.bits.save(path)
        sidecar = {"profile_id": self.profile_id, "rows": self.rows, "cols": self.cols}
        path.with_suffix(".json").write_text(json.dumps(sidecar, indent=2, sort_keys=True))

    @classmethod
    def load(cls, path: Union[str, Path]) -> "CompressedMatrix":
        path = Path(path)
        sidecar = json.loads(path.with_suffix(".json").read_text())
        bits = BitMatrix.load(path)
        if (bits.rows, bits.cols) != (sidecar["rows"], sidecar["cols"]):
            raise DimensionError(f"Sidecar shape {sidecar['rows']}x{sidecar['cols']} does not match {bits.shape}")
        return cls(bits, sidecar["profile_id"])


def encode_rows(v_bits: np.ndarray, seed_bits: np.ndarray, profile: IndexProfile) -> np.ndarray:
    """Vectorized row encoder on unpacked arrays (B, n) and (B, seed_len)."""
    if v_bits.shape[-1] != profile.n:
        raise DimensionError(f"Source rows have {v_bits.shape[-1]} bits, profile expects {profile.n}")
    if seed_bits.shape[-1] != profile.seed_len or seed_bits.shape[:-1] != v_bits.shape[:-1]:
        raise DimensionError(f"Seed shape {seed_bits.shape} does not match {v_bits.shape[:-1]} rows "
                             f"of {profile.seed_len} seed bits")
    a = polar_transform_bits(v_bits)
    high = a[..., list(profile.high_set)]
    mixed = a[..., list(profile.mixed_set)] ^ seed_bits.astype(np.uint8)
    return np.concatenate([high, mixed], axis=-1)


def decode_rows(m_bits: np.ndarray, seed_bits: np.ndarray, profile: IndexProfile,
                p: Optional[float] = None) -> np.ndarray:
    """Vectorized row decoder; always returns a candidate source row."""
    if m_bits.shape[-1] != profile.compressed_len:
        raise DimensionError(f"Compressed rows have {m_bits.shape[-1]} bits, profile expects {profile.compressed_len}")
    if seed_bits.shape[-1] != profile.seed_len or seed_bits.shape[0] != m_bits.shape[0]:
        raise DimensionError(f"Seed shape {seed_bits.shape} does not match {m_bits.shape[0]} rows "
                             f"of {profile.seed_len} seed bits")
    p = profile.p if p is None else p
    batch, n = m_bits.shape[0], profile.n
    n_high = len(profile.high_set)

    known = np.zeros((batch, n), dtype=np.uint8)
    known[:, list(profile.high_set)] = m_bits[:, :n_high]
    known[:, list(profile.mixed_set)] = m_bits[:, n_high:] ^ seed_bits.astype(np.uint8)
    mask = np.zeros(n, dtype=bool)
    mask[list(profile.high_set)] = True
    mask[list(profile.mixed_set)] = True

    # Every source position has the same prior, so bit reversal leaves the LLRs unchanged
    llr = np.full((batch, n), PolarParams(n, p, profile.beta).prior_llr)
    a_hat = successive_cancellation(llr, known, mask)
    return polar_transform_bits(a_hat)


def source_encode_row(v: BitVector, seed: BitVector, profile: IndexProfile) -> BitVector:
    if len(v) != profile.n or len(seed) != profile.seed_len:
        raise DimensionError(f"Expected {profile.n} source bits and {profile.seed_len} seed bits, "
                             f"got {len(v)} and {len(seed)}")
    return BitVector.from_bits(encode_rows(v.to_bits()[None, :], seed.to_bits()[None, :], profile)[0])


def source_decode_row(m: BitVector, seed: BitVector, profile: IndexProfile, p: Optional[float] = None) -> BitVector:
    if len(m) != profile.compressed_len or len(seed) != profile.seed_len:
        raise DimensionError(f"Expected {profile.compressed_len} message bits and {profile.seed_len} seed bits, "
                             f"got {len(m)} and {len(seed)}")
    return BitVector.from_bits(decode_rows(m.to_bits()[None, :], seed.to_bits()[None, :], profile, p)[0])


def _check_matrix_shapes(rows: int, seeds: SeedMatrix, profile: IndexProfile) -> None:
    if seeds.rows != rows or seeds.cols != profile.seed_len:
        raise DimensionError(f"Seed matrix is {seeds.rows}x{seeds.cols}, expected {rows}x{profile.seed_len}")


def source_encode_matrix(v: BitMatrix, seeds: SeedMatrix, profile: IndexProfile) -> CompressedMatrix:
    """Encode each row of the ell x n source matrix independently."""
    if v.cols != profile.n:
        raise DimensionError(f"Source matrix has {v.cols} columns, profile expects {profile.n}")
    _check_matrix_shapes(v.rows, seeds, profile)
    m_bits = encode_rows(v.to_bits(), seeds.bits.to_bits(), profile)
    return CompressedMatrix(BitMatrix.from_bits(m_bits.reshape(v.rows, profile.compressed_len)), profile.profile_id)


def source_decode_matrix(m: CompressedMatrix, seeds: SeedMatrix, profile: IndexProfile,
                         p: Optional[float] = None) -> BitMatrix:
    if m.profile_id != profile.profile_id:
        logging.warning(f"Compressed matrix was built with profile {m.profile_id}, decoding with {profile.profile_id}")
    _check_matrix_shapes(m.rows, seeds, profile)
    v_bits = decode_rows(m.bits.to_bits(), seeds.bits.to_bits(), profile, p)
    return BitMatrix.from_bits(v_bits.reshape(m.rows, profile.n))


def sc_error_bound(profile: IndexProfile) -> float:
    """Union bound on the row error of successive cancellation.

    A wrong first decision at position j has probability at most H_j / 2.
    """
    return 0.5 * float(sum(profile.entropies[j] for j in profile.low_set))


def row_failure_rate(profile: IndexProfile, trials: int, seed: int = 0, threads: int = 1) -> Tuple[int, float]:
    """Sample random rows, encode and decode them, and count mismatches."""
    size = shard_size(profile.n)
    n_shards = -(-trials // size)
    seeds = np.random.SeedSequence(seed).spawn(n_shards)

    def run(index: int) -> int:
        count = min(size, trials - index * size)
        rng = np.random.default_rng(seeds[index])
        v = (rng.random((count, profile.n)) < profile.p).astype(np.uint8)
        pad = rng.integers(0, 2, size=(count, profile.seed_len), dtype=np.uint8)
        v_hat = decode_rows(encode_rows(v, pad, profile), pad, profile)
        return int((v_hat != v).any(axis=1).sum())

    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        failures = sum(pool.map(run, range(n_shards)))
    rate = failures / trials
    logging.info(f"Row decoding complete: {failures} failures over {trials} rows (rate {rate:.5f})")
    return failures, rate


def output_distribution(profile: IndexProfile, ell: int) -> np.ndarray:
    """Exact law of the ell x compressed_len output over (source, seed).

    Entry ``k`` is the probability of the matrix whose row-major bits, read
    big-endian, equal ``k``.
    """
    if profile.n > OUTPUT_LAW_MAX_N or ell > OUTPUT_LAW_MAX_ROWS:
        raise DeskScaleError(f"Exact output law limited to n <= {OUTPUT_LAW_MAX_N} and "
                             f"ell <= {OUTPUT_LAW_MAX_ROWS}, got n={profile.n}, ell={ell}")
    a, probs = exact_source_law(PolarParams(profile.n, profile.p, profile.beta))
    width = profile.compressed_len
    weights = 1 << np.arange(width - 1, -1, -1, dtype=np.int64)
    high = a[:, list(profile.high_set)]
    mixed = a[:, list(profile.mixed_set)]
    n_seeds = 2**profile.seed_len
    row_law = np.zeros(2**width)
    for s in range(n_seeds):
        pad = ((s >> np.arange(profile.seed_len - 1, -1, -1)) & 1).astype(np.uint8)
        codes = np.concatenate([high, mixed ^ pad], axis=1).astype(np.int64) @ weights
        row_law += np.bincount(codes, weights=probs, minlength=2**width) / n_seeds
    law = np.ones(1)
    for _ in range(ell):
        law = np.outer(law, row_law).ravel()
    return law
