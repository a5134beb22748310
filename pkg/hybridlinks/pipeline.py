"""End-to-end runs: source code, binning code, partial encryption and back."""
import math
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, fields
from typing import Optional, Tuple

import numpy as np

from .analysis import reliability_bound
from .bitmat import BitMatrix
from .crypt import CryptoParams, KeyPair, LinkFrame, frame_decrypt, frame_encrypt, keygen
from .errors import CodewordError, DecryptionError
from .is_codec import Codebook, generate_codebook
from .params import SystemParams
from .polar import IndexProfile, entropy_profile
from .source_codec import (CompressedMatrix, SeedMatrix, decode_rows, encode_rows, sc_error_bound,
                           source_decode_matrix, source_encode_matrix)

RELIABILITY_BLOCK_TRIALS = 1024


@dataclass(frozen=True)
class PipelineResult:
    success: bool
    failure: Optional[str]
    n: int
    ell: int
    n_tilde: int
    seed_len: int
    gamma: int
    frame_bits: int
    frame: Optional[LinkFrame] = None
    recovered: Optional[BitMatrix] = None

    def to_dict(self) -> dict:
        return {f.name: getattr(self, f.name) for f in fields(self) if f.name not in ("frame", "recovered")}


def run_pipeline(v: BitMatrix, profile: IndexProfile, codebook: Codebook, crypto: CryptoParams,
                 keypair: KeyPair, seeds: SeedMatrix, rng: Optional[np.random.Generator] = None,
                 threads: int = 1) -> PipelineResult:
    """Send the ell x n source matrix ``v`` through every stage and compare.

    Channel, decryption and source failures are reported in ``failure``
    rather than raised.
    """
    compressed = source_encode_matrix(v, seeds, profile)
    frame = frame_encrypt(compressed, seeds, codebook, crypto, keypair.public_key, rng=rng, threads=threads)
    sizes = dict(n=profile.n, ell=v.rows, n_tilde=profile.compressed_len, seed_len=profile.seed_len,
                 gamma=crypto.gamma, frame_bits=frame.total_bits)
    try:
        received, received_seeds = frame_decrypt(frame, codebook, crypto, keypair.secret_key,
                                                 profile.profile_id, threads=threads)
    except DecryptionError as e:
        logging.debug(f"Decryption failed: {e}")
        return PipelineResult(False, "decryption", frame=frame, **sizes)
    except CodewordError as e:
        logging.debug(f"Channel decoding failed: {e}")
        return PipelineResult(False, "channel", frame=frame, **sizes)
    recovered = source_decode_matrix(received, received_seeds, profile)
    success = recovered == v
    return PipelineResult(success, None if success else "source", frame=frame, recovered=recovered, **sizes)


@dataclass(frozen=True)
class ReliabilityReport:
    trials: int
    failures: int
    channel_failures: int
    decryption_failures: int
    source_failures: int
    failure_rate: float
    std_error: float
    column_error: float
    reliability_bound: float
    sc_union_bound: float
    n: int
    ell: int
    n_tilde: int
    seed_len: int

    def to_dict(self) -> dict:
        return asdict(self)


def simulate_reliability(params: SystemParams, trials: int, seed: int = 0, threads: int = 1,
                         profile: Optional[IndexProfile] = None, codebook: Optional[Codebook] = None,
                         keypair: Optional[KeyPair] = None) -> ReliabilityReport:
    """Monte-Carlo failure rate of the whole pipeline.

    Trials run in blocks with their own generators spawned from ``seed``;
    source decoding of a block is batched over all its rows.
    """
    if trials < 1:
        raise ValueError(f"Reliability simulation needs at least one trial, got {trials}")
    profile = profile or entropy_profile(params.polar_params())
    codebook = codebook if codebook is not None else generate_codebook(params.code_params())
    crypto = params.crypto_params(profile.seed_len)
    keypair = keypair or keygen(params.c, params.r, params.scheme, seed=seed)
    ell, n = params.ell, profile.n

    n_blocks = -(-trials // RELIABILITY_BLOCK_TRIALS)
    children = np.random.SeedSequence(seed).spawn(n_blocks)

    def run(index: int) -> Tuple[int, int, int]:
        size = min(RELIABILITY_BLOCK_TRIALS, trials - index * RELIABILITY_BLOCK_TRIALS)
        rng = np.random.default_rng(children[index])
        # Source matrices and seeds for the whole block, compressed in one batch
        v = (rng.random((size, ell, n)) < params.p).astype(np.uint8)
        pads = rng.integers(0, 2, size=(size, ell, profile.seed_len), dtype=np.uint8)
        m = encode_rows(v.reshape(size * ell, n), pads.reshape(size * ell, profile.seed_len), profile)
        m = m.reshape(size, ell, profile.compressed_len)
        # Frames go one at a time; a failed frame skips source decoding
        channel = decryption = 0
        delivered = np.zeros(size, dtype=bool)
        m_hat = np.zeros_like(m)
        pads_hat = np.zeros_like(pads)
        for k in range(size):
            compressed = CompressedMatrix(BitMatrix.from_bits(m[k]), profile.profile_id)
            seeds = SeedMatrix(BitMatrix.from_bits(pads[k]))
            frame = frame_encrypt(compressed, seeds, codebook, crypto, keypair.public_key, rng=rng)
            try:
                received, received_seeds = frame_decrypt(frame, codebook, crypto, keypair.secret_key,
                                                         profile.profile_id)
            except DecryptionError:
                decryption += 1
                continue
            except CodewordError:
                channel += 1
                continue
            m_hat[k] = received.bits.to_bits()
            pads_hat[k] = received_seeds.bits.to_bits()
            delivered[k] = True
        # Source-decode every delivered row together
        rows = int(delivered.sum()) * ell
        v_hat = decode_rows(m_hat[delivered].reshape(rows, profile.compressed_len),
                            pads_hat[delivered].reshape(rows, profile.seed_len), profile)
        wrong = (v_hat.reshape(rows // ell, ell, n) != v[delivered]).any(axis=(1, 2))
        return channel, decryption, int(wrong.sum())

    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        results = list(pool.map(run, range(n_blocks)))
    channel = sum(r[0] for r in results)
    decryption = sum(r[1] for r in results)
    source = sum(r[2] for r in results)
    failures = channel + decryption + source
    rate = failures / trials
    column_error = codebook.duplicate_count() / codebook.codes.shape[0]
    report = ReliabilityReport(
        trials=trials,
        failures=failures,
        channel_failures=channel,
        decryption_failures=decryption,
        source_failures=source,
        failure_rate=rate,
        std_error=math.sqrt(rate * (1.0 - rate) / trials),
        column_error=column_error,
        reliability_bound=reliability_bound(profile.compressed_len, ell, profile.delta, column_error),
        sc_union_bound=min(1.0, ell * sc_error_bound(profile)),
        n=n,
        ell=ell,
        n_tilde=profile.compressed_len,
        seed_len=profile.seed_len,
    )
    logging.info(f"Reliability complete: {failures} failures over {trials} trials ({channel} channel, "
                 f"{decryption} decryption, {source} source), rate {rate:.5f}")
    return report
