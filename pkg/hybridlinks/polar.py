"""Polarization transform and entropy profiling of Bernoulli sources.

For a block ``v`` of ``n = 2**m`` i.i.d. Bernoulli(p) bits the transform
``a = v G_n`` with ``G_n = P_n F^{(x)m}`` (``F = [[1,0],[1,1]]``, ``P_n`` the
bit-reversal permutation) polarizes the conditional entropies
``H(a_j | a_0 .. a_{j-1})`` towards 0 or 1. The profile records those
entropies and splits the positions into three sets:

* ``high_set``  entropy > 1 - delta (sent as is)
* ``low_set``   entropy < delta (dropped, recovered by the decoder)
* ``mixed_set`` everything else, ties included (sent one-time padded)

Entropies come from exact enumeration for small ``n`` and from genie-aided
successive cancellation sampling otherwise.
"""
import json
import math
import hashlib
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Optional, Sequence, Tuple, Union

import numpy as np
from scipy.special import entr, expit

from .bitmat import BitMatrix, BitVector
from .errors import DeskScaleError, DimensionError

EXACT_MAX_N = 20
MATERIALIZE_MAX_N = 4096
MIN_SAMPLES = 10**4
LLR_CLIP = 1000.0
# Elements (samples x n) processed per Monte-Carlo shard
SHARD_ELEMENTS = 2**20
_LN2 = math.log(2.0)


def _check_power_of_two(n: int) -> int:
    if n < 1 or n & (n - 1):
        raise DimensionError(f"Blocklength must be a power of two, got {n}")
    return n.bit_length() - 1


@dataclass(frozen=True)
class PolarParams:
    """Source and threshold parameters of the polar source code."""
    n: int
    p: float
    beta: float = 0.25
    delta_override: Optional[float] = None

    def __post_init__(self):
        _check_power_of_two(self.n)
        if not 0.0 <= self.p <= 1.0:
            raise ValueError(f"Source bias p must lie in [0, 1], got {self.p}")
        if not 0.0 <= self.beta < 0.5:
            raise ValueError(f"beta must lie in [0, 0.5), got {self.beta}")
        if self.delta_override is not None and not 0.0 < self.delta_override < 1.0:
            raise ValueError(f"delta override must lie in (0, 1), got {self.delta_override}")

    @property
    def m(self) -> int:
        return self.n.bit_length() - 1

    @property
    def delta(self) -> float:
        if self.delta_override is not None:
            return self.delta_override
        return 2.0 ** (-(self.n ** self.beta))

    @property
    def prior_llr(self) -> float:
        """log(P(bit=0) / P(bit=1)) of one source bit, clipped for p in {0, 1}."""
        if self.p == 0.0:
            return LLR_CLIP
        if self.p == 1.0:
            return -LLR_CLIP
        return float(np.clip(math.log((1.0 - self.p) / self.p), -LLR_CLIP, LLR_CLIP))


@lru_cache(maxsize=32)
def bit_reversal_permutation(n: int) -> np.ndarray:
    m = _check_power_of_two(n)
    idx = np.arange(n)
    rev = np.zeros(n, dtype=np.int64)
    for bit in range(m):
        rev |= ((idx >> bit) & 1) << (m - 1 - bit)
    rev.flags.writeable = False
    return rev


def kron_transform_bits(bits: np.ndarray) -> np.ndarray:
    """Multiply the last axis by F^(x)m with in-place butterflies (no bit reversal)."""
    n = bits.shape[-1]
    _check_power_of_two(n)
    x = np.array(bits, dtype=np.uint8, copy=True)
    lead = x.shape[:-1]
    half = 1
    while half < n:
        view = x.reshape(lead + (n // (2 * half), 2, half))
        view[..., 0, :] ^= view[..., 1, :]
        half *= 2
    return x


def polar_transform_bits(bits: np.ndarray) -> np.ndarray:
    """Batched ``v G_n`` over the last axis of a 0/1 array."""
    n = bits.shape[-1]
    return kron_transform_bits(np.asarray(bits)[..., bit_reversal_permutation(n)])


def polar_transform(v: BitVector, n: int) -> BitVector:
    """Return ``v G_n``. The transform is its own inverse."""
    _check_power_of_two(n)
    if len(v) != n:
        raise DimensionError(f"Vector has {len(v)} bits, blocklength is {n}")
    return BitVector.from_bits(polar_transform_bits(v.to_bits()))


def generator_matrix(n: int) -> BitMatrix:
    """Explicit ``G_n = P_n F^(x)m`` for n <= 4096."""
    m = _check_power_of_two(n)
    if n > MATERIALIZE_MAX_N:
        raise DeskScaleError(f"Refusing to materialize G_n for n={n} (limit {MATERIALIZE_MAX_N})")
    kernel = np.array([[1, 0], [1, 1]], dtype=np.uint8)
    power = np.ones((1, 1), dtype=np.uint8)
    for _ in range(m):
        power = np.kron(power, kernel)
    return BitMatrix.from_bits(power[bit_reversal_permutation(n), :])


def classify(entropies: Sequence[float], delta: float) -> Tuple[Tuple[int, ...], Tuple[int, ...], Tuple[int, ...]]:
    """Split positions into (high, low, mixed) sets with strict thresholds.

    A position meeting both strict tests (possible only when delta > 1/2)
    goes to the mixed set.
    """
    h = np.asarray(entropies, dtype=np.float64)
    high = h > 1.0 - delta
    low = h < delta
    both = high & low
    high &= ~both
    low &= ~both
    mixed = ~(high | low)
    return (tuple(int(i) for i in np.flatnonzero(high)),
            tuple(int(i) for i in np.flatnonzero(low)),
            tuple(int(i) for i in np.flatnonzero(mixed)))


@dataclass(frozen=True)
class IndexProfile:
    """Per-position conditional entropies and the resulting index sets (0-based)."""
    n: int
    p: float
    beta: float
    delta: float
    entropies: Tuple[float, ...]
    high_set: Tuple[int, ...]
    low_set: Tuple[int, ...]
    mixed_set: Tuple[int, ...]
    method: str = "exact"
    samples: Optional[int] = None
    _digest: str = field(default="", repr=False, compare=False)

    def __post_init__(self):
        if len(self.entropies) != self.n:
            raise DimensionError(f"Profile has {len(self.entropies)} entropies for n={self.n}")
        union = sorted(self.high_set + self.low_set + self.mixed_set)
        if union != list(range(self.n)):
            raise ValueError("Index sets must partition the positions 0..n-1")
        if any(not 0.0 <= h <= 1.0 for h in self.entropies):
            raise ValueError("Every conditional entropy must lie in [0, 1]")
        digest = hashlib.sha256(json.dumps(self._payload(), sort_keys=True).encode()).hexdigest()[:16]
        object.__setattr__(self, "_digest", digest)

    @property
    def seed_len(self) -> int:
        return len(self.mixed_set)

    @property
    def compressed_len(self) -> int:
        return len(self.high_set) + self.seed_len

    @property
    def profile_id(self) -> str:
        return self._digest

    def _payload(self) -> dict:
        return {
            "n": self.n,
            "p": self.p,
            "beta": self.beta,
            "delta": self.delta,
            "entropies": list(self.entropies),
            "h_set": list(self.high_set),
            "u_set": list(self.low_set),
            "j_set": list(self.mixed_set),
            "method": self.method,
            "samples": self.samples,
        }

    def to_dict(self) -> dict:
        data = self._payload()
        data.update({"d_j": self.seed_len, "n_tilde": self.compressed_len, "profile_id": self.profile_id})
        return data

    @classmethod
    def from_dict(cls, data: dict) -> "IndexProfile":
        return cls(
            n=int(data["n"]),
            p=float(data["p"]),
            beta=float(data["beta"]),
            delta=float(data["delta"]),
            entropies=tuple(float(h) for h in data["entropies"]),
            high_set=tuple(int(i) for i in data["h_set"]),
            low_set=tuple(int(i) for i in data["u_set"]),
            mixed_set=tuple(int(i) for i in data["j_set"]),
            method=data.get("method", "exact"),
            samples=data.get("samples"),
        )

    def with_delta(self, delta: float) -> "IndexProfile":
        """Reclassify the same entropies under another threshold."""
        high, low, mixed = classify(self.entropies, delta)
        return IndexProfile(self.n, self.p, self.beta, delta, self.entropies, high, low, mixed,
                            self.method, self.samples)

    def save(self, path: Union[str, Path]) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True))

    @classmethod
    def load(cls, path: Union[str, Path]) -> "IndexProfile":
        return cls.from_dict(json.loads(Path(path).read_text()))


def boxplus(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Exact LLR of the XOR of two independent bits."""
    return (np.sign(a) * np.sign(b) * np.minimum(np.abs(a), np.abs(b))
            + np.log1p(np.exp(-np.abs(a + b)))
            - np.log1p(np.exp(-np.abs(a - b))))


def binary_entropy_from_llr(llr: np.ndarray) -> np.ndarray:
    """Entropy in bits of a bit whose posterior LLR is ``llr``."""
    p_one = expit(-llr)
    return (entr(p_one) + entr(1.0 - p_one)) / _LN2


def successive_cancellation(llr: np.ndarray, known_values: np.ndarray, known_mask: np.ndarray) -> np.ndarray:
    """Decode ``u`` from channel LLRs of ``x = u F^(x)m``, batched over rows.

    ``llr`` has shape (B, n). Positions with ``known_mask`` set take their
    value from ``known_values`` (B, n); the rest are decided in index order
    from the exact posterior, ties resolving to 0.
    """
    batch, n = llr.shape
    _check_power_of_two(n)
    known_mask = np.asarray(known_mask, dtype=bool)
    u_hat = np.zeros((batch, n), dtype=np.uint8)

    def node(node_llr: np.ndarray, offset: int) -> np.ndarray:
        size = node_llr.shape[1]
        segment = slice(offset, offset + size)
        if known_mask[segment].all():
            u_hat[:, segment] = known_values[:, segment]
            return kron_transform_bits(known_values[:, segment])
        if size == 1:
            bit = (node_llr[:, 0] < 0).astype(np.uint8)
            u_hat[:, offset] = bit
            return bit[:, None]
        half = size // 2
        a, b = node_llr[:, :half], node_llr[:, half:]
        left = node(boxplus(a, b), offset)
        right = node(b + (1.0 - 2.0 * left) * a, offset + half)
        return np.concatenate([left ^ right, right], axis=1)

    node(np.asarray(llr, dtype=np.float64), 0)
    return u_hat


def genie_leaf_llrs(u: np.ndarray, prior_llr: float) -> np.ndarray:
    """Leaf LLRs of successive cancellation when every earlier bit is known.

    ``u`` holds the true transformed bits (B, n); the result gives, for each
    position, log P(u_j=0 | u_<j) - log P(u_j=1 | u_<j) under the i.i.d. prior.
    """
    batch, n = u.shape
    m = _check_power_of_two(n)
    # partial[level] has shape (B, 2**level, n >> level)
    partial = [None] * (m + 1)
    partial[m] = u.reshape(batch, n, 1).astype(np.uint8)
    for level in range(m - 1, -1, -1):
        child = partial[level + 1]
        left, right = child[:, 0::2, :], child[:, 1::2, :]
        partial[level] = np.concatenate([left ^ right, right], axis=2)
    llr = np.full((batch, 1, n), prior_llr, dtype=np.float64)
    for level in range(m):
        size = n >> level
        a, b = llr[..., :size // 2], llr[..., size // 2:]
        left_sums = partial[level + 1][:, 0::2, :]
        left = boxplus(a, b)
        right = b + (1.0 - 2.0 * left_sums) * a
        llr = np.stack([left, right], axis=2).reshape(batch, 2 ** (level + 1), size // 2)
    return llr.reshape(batch, n)


def shard_size(n: int) -> int:
    """Samples per Monte-Carlo shard; depends on n only."""
    return max(1, SHARD_ELEMENTS // n)


def _sample_shards(params: PolarParams, samples: int, seed: int, threads: int, work):
    size = shard_size(params.n)
    n_shards = -(-samples // size)
    seeds = np.random.SeedSequence(seed).spawn(n_shards)

    def run(index: int):
        count = min(size, samples - index * size)
        rng = np.random.default_rng(seeds[index])
        v = (rng.random((count, params.n)) < params.p).astype(np.uint8)
        return work(polar_transform_bits(v))

    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        results = list(pool.map(run, range(n_shards)))
    logging.debug(f"Processed {samples} samples in {n_shards} shards of up to {size}")
    return results


def exact_source_law(params: PolarParams) -> Tuple[np.ndarray, np.ndarray]:
    n = params.n
    words = np.arange(2**n, dtype=np.int64)
    v = ((words[:, None] >> np.arange(n)) & 1).astype(np.uint8)
    weight = v.sum(axis=1)
    probs = np.power(params.p, weight) * np.power(1.0 - params.p, n - weight)
    return polar_transform_bits(v), probs


def _exact_entropies(params: PolarParams) -> np.ndarray:
    a, probs = exact_source_law(params)
    codes = np.zeros(a.shape[0], dtype=np.int64)
    entropies = np.zeros(params.n)
    previous = 0.0
    for j in range(params.n):
        codes = (codes << 1) | a[:, j]
        joint = np.bincount(codes, weights=probs, minlength=2 ** (j + 1))
        total = entr(joint).sum() / _LN2
        entropies[j] = total - previous
        previous = total
    return np.clip(entropies, 0.0, 1.0)


def _resolve_method(params: PolarParams, method: str) -> str:
    if method == "auto":
        return "exact" if params.n <= 16 else "monte-carlo"
    if method not in ("exact", "monte-carlo"):
        raise ValueError(f"Unknown entropy estimator '{method}'")
    return method


def entropy_profile(params: PolarParams, method: str = "auto", samples: int = MIN_SAMPLES,
                    seed: int = 0, threads: int = 1) -> IndexProfile:
    """Compute the conditional entropy profile and classify the positions."""
    method = _resolve_method(params, method)
    if method == "exact":
        if params.n > EXACT_MAX_N:
            raise DeskScaleError(f"Exact profile needs n <= {EXACT_MAX_N}, got n={params.n}")
        entropies = _exact_entropies(params)
        samples_used = None
    else:
        if samples < MIN_SAMPLES:
            raise ValueError(f"Monte-Carlo profile needs at least {MIN_SAMPLES} samples, got {samples}")
        prior = params.prior_llr
        sums = _sample_shards(params, samples, seed, threads,
                              lambda a: binary_entropy_from_llr(genie_leaf_llrs(a, prior)).sum(axis=0))
        entropies = np.clip(np.sum(sums, axis=0) / samples, 0.0, 1.0)
        samples_used = samples

    delta = params.delta
    high, low, mixed = classify(entropies, delta)
    profile = IndexProfile(params.n, params.p, params.beta, delta, tuple(float(h) for h in entropies),
                           high, low, mixed, method, samples_used)
    logging.info(f"Profile n={params.n} p={params.p} ({method}): {len(high)} high, {len(low)} low, "
                 f"{len(mixed)} mixed, compressed length {profile.compressed_len}")
    return profile


def bit_marginals(params: PolarParams, method: str = "auto", samples: int = MIN_SAMPLES,
                  seed: int = 0, threads: int = 1) -> np.ndarray:
    """P(a_j = 1) for every position of the transformed block."""
    method = _resolve_method(params, method)
    if method == "exact":
        if params.n > EXACT_MAX_N:
            raise DeskScaleError(f"Exact marginals need n <= {EXACT_MAX_N}, got n={params.n}")
        a, probs = exact_source_law(params)
        return probs @ a
    sums = _sample_shards(params, samples, seed, threads, lambda a: a.sum(axis=0, dtype=np.int64))
    return np.sum(sums, axis=0) / samples
