"""Partial encryption of the coded links.

A block scheme maps ``c`` plaintext bits to ``c + r`` ciphertext bits. The
frame encryptor runs it on the first ``c`` links of every codeword column and
on the seed, split into ``gamma`` blocks of ``c`` bits, and packs the result
into one payload per link:

* link 0:        c-bit share of every column, then the ``r`` extra bits of
                 every column in column order, then the seed ciphertexts
* links 1..c-1:  their encrypted share of every column
* links c..ell-1: the codeword rows in plaintext

Schemes plug in through ``registry``. ``toy-hmac`` is a keyed stream cipher
with a random nonce (and a MAC tag when ``r`` allows). It satisfies the
probabilistic-encryption contract but is not post-quantum secure.
"""
import math
import struct
import hashlib
import logging
import secrets
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np
from cryptography.hazmat.primitives import constant_time, hashes, hmac
from cryptography.hazmat.primitives.kdf.hkdf import HKDF

from .bitmat import BitMatrix, BitVector
from .errors import DecryptionError, DimensionError, FrameFormatError
from .is_codec import Codebook, decode_matrix, encode_columns
from .source_codec import CompressedMatrix, SeedMatrix

FRAME_MAGIC = b"NUH2"
_FRAME_HEADER = struct.Struct("<7I")


class SchemeRegistry:
    """Name -> block scheme class."""

    def __init__(self):
        self._schemes: Dict[str, type] = {}

    def register(self, name: str):
        def decorator(cls):
            cls.name = name
            self._schemes[name] = cls
            return cls
        return decorator

    def get(self, name: str):
        try:
            return self._schemes[name]()
        except KeyError:
            raise ValueError(f"Unknown block scheme '{name}', registered: {sorted(self._schemes)}") from None

    def names(self) -> List[str]:
        return sorted(self._schemes)


registry = SchemeRegistry()


@dataclass(frozen=True)
class PublicKey:
    scheme: str
    c: int
    r: int
    key: bytes


@dataclass(frozen=True)
class SecretKey:
    scheme: str
    c: int
    r: int
    key: bytes


@dataclass(frozen=True)
class KeyPair:
    public_key: PublicKey
    secret_key: SecretKey
    scheme_name: str

    @property
    def key_id(self) -> str:
        return hashlib.sha256(self.public_key.key + struct.pack("<II", self.public_key.c, self.public_key.r)).hexdigest()[:12]


def _random_bits(count: int, rng: Optional[np.random.Generator]) -> np.ndarray:
    if rng is not None:
        return rng.integers(0, 2, size=count, dtype=np.uint8)
    raw = np.frombuffer(secrets.token_bytes((count + 7) // 8), dtype=np.uint8)
    return np.unpackbits(raw)[:count]


def _random_bytes(count: int, rng: Optional[np.random.Generator]) -> bytes:
    if rng is not None:
        return rng.integers(0, 256, size=count, dtype=np.uint8).tobytes()
    return secrets.token_bytes(count)


def _to_bytes(bits: np.ndarray) -> bytes:
    return np.packbits(bits).tobytes()


def _first_bits(data: bytes, count: int) -> np.ndarray:
    return np.unpackbits(np.frombuffer(data, dtype=np.uint8))[:count]


@registry.register("toy-hmac")
class ToyHmacScheme:
    """HKDF keystream keyed by a shared 32-byte key; both keys are that key.

    The ``r`` extra bits hold a nonce, and when ``r >= 16`` the upper half of
    them holds a truncated HMAC-SHA256 tag over nonce and body.
    """
    KEY_BYTES = 32
    TAG_MIN_R = 16

    def split(self, r: int) -> Tuple[int, int]:
        tag_bits = r // 2 if r >= self.TAG_MIN_R else 0
        return r - tag_bits, tag_bits

    def authenticates(self, r: int) -> bool:
        return self.split(r)[1] > 0

    def keygen(self, c: int, r: int, rng: Optional[np.random.Generator]) -> Tuple[bytes, bytes]:
        key = _random_bytes(self.KEY_BYTES, rng)
        return key, key

    def _keystream(self, key: bytes, c: int, r: int, nonce: np.ndarray) -> np.ndarray:
        info = b"hybridlinks-keystream" + struct.pack("<II", c, r) + _to_bytes(nonce)
        stream = HKDF(algorithm=hashes.SHA256(), length=max(1, (c + 7) // 8), salt=None, info=info).derive(key)
        return _first_bits(stream, c)

    def _tag(self, key: bytes, c: int, r: int, nonce: np.ndarray, body: np.ndarray, tag_bits: int) -> np.ndarray:
        mac = hmac.HMAC(key, hashes.SHA256())
        mac.update(b"hybridlinks-tag" + struct.pack("<II", c, r) + _to_bytes(nonce) + _to_bytes(body))
        digest = mac.finalize()
        while len(digest) * 8 < tag_bits:
            mac = hmac.HMAC(key, hashes.SHA256())
            mac.update(digest)
            digest += mac.finalize()
        return _first_bits(digest, tag_bits)

    def encrypt(self, block: np.ndarray, pk: PublicKey, rng: Optional[np.random.Generator]) -> np.ndarray:
        nonce_bits, tag_bits = self.split(pk.r)
        nonce = _random_bits(nonce_bits, rng)
        body = block ^ self._keystream(pk.key, pk.c, pk.r, nonce)
        tag = self._tag(pk.key, pk.c, pk.r, nonce, body, tag_bits) if tag_bits else np.zeros(0, dtype=np.uint8)
        return np.concatenate([body, nonce, tag])

    def decrypt(self, cipher: np.ndarray, sk: SecretKey) -> np.ndarray:
        nonce_bits, tag_bits = self.split(sk.r)
        body = cipher[:sk.c]
        nonce = cipher[sk.c:sk.c + nonce_bits]
        if tag_bits:
            tag = cipher[sk.c + nonce_bits:]
            expected = self._tag(sk.key, sk.c, sk.r, nonce, body, tag_bits)
            if not constant_time.bytes_eq(_to_bytes(tag), _to_bytes(expected)):
                raise DecryptionError("Block authentication failed (wrong key or tampered ciphertext)")
        else:
            logging.debug(f"Decrypting without authentication (r={sk.r} < {self.TAG_MIN_R})")
        return body ^ self._keystream(sk.key, sk.c, sk.r, nonce)


@registry.register("identity")
class IdentityScheme:
    """Transparent scheme for tests: plaintext followed by r zero bits."""

    def authenticates(self, r: int) -> bool:
        return False

    def keygen(self, c: int, r: int, rng: Optional[np.random.Generator]) -> Tuple[bytes, bytes]:
        return b"", b""

    def encrypt(self, block: np.ndarray, pk: PublicKey, rng: Optional[np.random.Generator]) -> np.ndarray:
        return np.concatenate([block, np.zeros(pk.r, dtype=np.uint8)])

    def decrypt(self, cipher: np.ndarray, sk: SecretKey) -> np.ndarray:
        return cipher[:sk.c].copy()


def keygen(c: int, r: int = 0, scheme: str = "toy-hmac", seed: Optional[int] = None) -> KeyPair:
    """Fresh keypair; ``seed`` makes it reproducible (tests only)."""
    if c < 1 or r < 0:
        raise ValueError(f"Block width must be >= 1 and expansion >= 0, got c={c}, r={r}")
    impl = registry.get(scheme)
    rng = np.random.default_rng(seed) if seed is not None else None
    public, secret = impl.keygen(c, r, rng)
    return KeyPair(PublicKey(scheme, c, r, public), SecretKey(scheme, c, r, secret), scheme)


def block_encrypt(block: BitVector, pk: PublicKey, rng: Optional[np.random.Generator] = None) -> BitVector:
    """Encrypt exactly ``c`` bits into ``c + r`` bits."""
    if len(block) != pk.c:
        raise DimensionError(f"Block has {len(block)} bits, key expects {pk.c}")
    out = registry.get(pk.scheme).encrypt(block.to_bits(), pk, rng)
    if out.shape[0] != pk.c + pk.r:
        raise RuntimeError(f"Scheme '{pk.scheme}' produced {out.shape[0]} bits instead of {pk.c + pk.r}")
    return BitVector.from_bits(out)


def block_decrypt(cipher: BitVector, sk: SecretKey) -> BitVector:
    if len(cipher) != sk.c + sk.r:
        raise DimensionError(f"Ciphertext has {len(cipher)} bits, key expects {sk.c + sk.r}")
    return BitVector.from_bits(registry.get(sk.scheme).decrypt(cipher.to_bits(), sk))


@dataclass(frozen=True)
class CryptoParams:
    c: int
    r: int
    ell: int
    seed_len: int
    scheme: str = "toy-hmac"
    key_id: Optional[str] = None

    def __post_init__(self):
        if not 1 <= self.c < self.ell:
            raise ValueError(f"Encrypted link count must satisfy 1 <= c < ell={self.ell}, got c={self.c}")
        if self.r < 0:
            raise ValueError(f"Randomness expansion r must be >= 0, got {self.r}")
        if self.seed_len < 0:
            raise ValueError(f"Seed length must be >= 0, got {self.seed_len}")

    @property
    def gamma(self) -> int:
        return math.ceil(self.ell * self.seed_len / self.c)

    @property
    def pad(self) -> int:
        return self.gamma * self.c - self.ell * self.seed_len

    @property
    def encrypted_links(self) -> Tuple[int, ...]:
        return tuple(range(self.c))


@dataclass(frozen=True)
class FrameLayout:
    ell: int
    n_tilde: int
    c: int
    r: int
    seed_len: int
    gamma: int
    pad: int

    def link_bits(self, link: int) -> int:
        if link == 0:
            return self.n_tilde + self.n_tilde * self.r + self.gamma * (self.c + self.r)
        return self.n_tilde

    @property
    def total_bits(self) -> int:
        return sum(self.link_bits(i) for i in range(self.ell))


def frame_layout(ell: int, n_tilde: int, c: int, r: int, seed_len: int) -> FrameLayout:
    params = CryptoParams(c=c, r=r, ell=ell, seed_len=seed_len)
    return FrameLayout(ell, n_tilde, c, r, seed_len, params.gamma, params.pad)


@dataclass(frozen=True)
class LinkFrame:
    """What travels on each link: one bit string per link."""
    ell: int
    n_tilde: int
    c: int
    r: int
    seed_len: int
    gamma: int
    pad: int
    payloads: Tuple[BitVector, ...]

    def __post_init__(self):
        layout = self.layout
        if (layout.gamma, layout.pad) != (self.gamma, self.pad):
            raise FrameFormatError(f"Header gamma={self.gamma}, pad={self.pad} inconsistent with "
                                   f"ell={self.ell}, seed_len={self.seed_len}, c={self.c}")
        if len(self.payloads) != self.ell:
            raise FrameFormatError(f"Frame has {len(self.payloads)} payloads for {self.ell} links")
        for i, payload in enumerate(self.payloads):
            if len(payload) != layout.link_bits(i):
                raise FrameFormatError(f"Link {i} carries {len(payload)} bits, expected {layout.link_bits(i)}")

    @property
    def layout(self) -> FrameLayout:
        try:
            return frame_layout(self.ell, self.n_tilde, self.c, self.r, self.seed_len)
        except ValueError as e:
            raise FrameFormatError(f"Invalid frame header: {e}") from e

    @property
    def total_bits(self) -> int:
        return sum(len(p) for p in self.payloads)

    def to_bytes(self) -> bytes:
        header = _FRAME_HEADER.pack(self.ell, self.n_tilde, self.c, self.r, self.seed_len, self.gamma, self.pad)
        bits = np.concatenate([p.to_bits() for p in self.payloads])
        return FRAME_MAGIC + header + np.packbits(bits).tobytes()

    @classmethod
    def from_bytes(cls, data: bytes) -> "LinkFrame":
        header_len = len(FRAME_MAGIC) + _FRAME_HEADER.size
        if len(data) < header_len or data[:len(FRAME_MAGIC)] != FRAME_MAGIC:
            raise FrameFormatError("Not a link frame (bad magic or truncated header)")
        ell, n_tilde, c, r, seed_len, gamma, pad = _FRAME_HEADER.unpack_from(data, len(FRAME_MAGIC))
        try:
            layout = frame_layout(ell, n_tilde, c, r, seed_len)
        except ValueError as e:
            raise FrameFormatError(f"Invalid frame header: {e}") from e
        total = layout.total_bits
        body = data[header_len:]
        if len(body) != (total + 7) // 8:
            raise FrameFormatError(f"Frame body has {len(body)} bytes, expected {(total + 7) // 8}")
        bits = np.unpackbits(np.frombuffer(body, dtype=np.uint8))
        if bits[total:].any():
            raise FrameFormatError("Non-zero padding bits after the frame payload")
        payloads, start = [], 0
        for i in range(ell):
            size = layout.link_bits(i)
            payloads.append(BitVector.from_bits(bits[start:start + size]))
            start += size
        return cls(ell, n_tilde, c, r, seed_len, gamma, pad, tuple(payloads))

    def save(self, path: Union[str, Path]) -> None:
        Path(path).write_bytes(self.to_bytes())
        logging.debug(f"Wrote frame of {self.total_bits} bits to {path}")

    @classmethod
    def load(cls, path: Union[str, Path]) -> "LinkFrame":
        return cls.from_bytes(Path(path).read_bytes())


def _map_blocks(func, blocks: list, rng: Optional[np.random.Generator], threads: int) -> list:
    # A shared Generator is not thread-safe, so seeded runs stay sequential
    if rng is not None or threads <= 1 or len(blocks) < 2:
        return [func(b) for b in blocks]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(func, blocks))


def _check_keys(params: CryptoParams, key) -> None:
    if (key.scheme, key.c, key.r) != (params.scheme, params.c, params.r):
        raise ValueError(f"Key ({key.scheme}, c={key.c}, r={key.r}) does not match "
                         f"parameters ({params.scheme}, c={params.c}, r={params.r})")


def frame_encrypt(m: CompressedMatrix, seeds: SeedMatrix, cb: Codebook, params: CryptoParams, pk: PublicKey,
                  rng: Optional[np.random.Generator] = None, threads: int = 1) -> LinkFrame:
    """Channel-encode ``m`` and encrypt the first ``c`` links plus the seed."""
    if not m.rows == cb.ell == params.ell:
        raise DimensionError(f"Message rows {m.rows}, codebook ell {cb.ell} and crypto ell {params.ell} differ")
    if (seeds.rows, seeds.cols) != (params.ell, params.seed_len):
        raise DimensionError(f"Seed matrix is {seeds.rows}x{seeds.cols}, expected {params.ell}x{params.seed_len}")
    _check_keys(params, pk)
    c, n_tilde = params.c, m.cols

    # Channel-encode, then cut the first c links and the padded seed into c-bit blocks
    links = encode_columns(m.bits.to_bits(), cb)
    seed_flat = np.concatenate([seeds.bits.to_bits().reshape(-1), np.zeros(params.pad, dtype=np.uint8)])
    blocks = [BitVector.from_bits(links[:c, j]) for j in range(n_tilde)]
    blocks += [BitVector.from_bits(block) for block in seed_flat.reshape(params.gamma, c)]

    # Ciphertext bits beyond c become overflow, carried on link 0 after its own bits
    ciphertexts = _map_blocks(lambda b: block_encrypt(b, pk, rng).to_bits(), blocks, rng, threads)
    overflow = []
    for j in range(n_tilde):
        links[:c, j] = ciphertexts[j][:c]
        overflow.append(ciphertexts[j][c:])
    overflow.extend(ciphertexts[n_tilde:])

    first = np.concatenate([links[0]] + overflow) if overflow else links[0]
    payloads = (BitVector.from_bits(first),) + tuple(BitVector.from_bits(links[i]) for i in range(1, params.ell))
    frame = LinkFrame(params.ell, n_tilde, c, params.r, params.seed_len, params.gamma, params.pad, payloads)
    logging.debug(f"Encrypted {n_tilde} columns and {params.gamma} seed blocks into {frame.total_bits} bits")
    return frame


def frame_decrypt(frame: LinkFrame, cb: Codebook, params: CryptoParams, sk: SecretKey,
                  profile_id: str = "", threads: int = 1) -> Tuple[CompressedMatrix, SeedMatrix]:
    """Undo :func:`frame_encrypt`; decryption and codeword errors propagate."""
    if (frame.ell, frame.c, frame.r, frame.seed_len) != (params.ell, params.c, params.r, params.seed_len):
        raise DimensionError(f"Frame (ell={frame.ell}, c={frame.c}, r={frame.r}, seed_len={frame.seed_len}) "
                             f"does not match the crypto parameters")
    _check_keys(params, sk)
    c, r, n_tilde = params.c, params.r, frame.n_tilde

    # Link 0 holds its n_tilde column bits, then the column overflow, then the seed ciphertexts
    links = np.stack([p.to_bits()[:n_tilde] for p in frame.payloads])
    extra = frame.payloads[0].to_bits()[n_tilde:]
    overflow = extra[:n_tilde * r].reshape(n_tilde, r)
    seed_cts = extra[n_tilde * r:].reshape(params.gamma, c + r)

    ciphertexts = [BitVector.from_bits(np.concatenate([links[:c, j], overflow[j]])) for j in range(n_tilde)]
    ciphertexts += [BitVector.from_bits(ct) for ct in seed_cts]
    plaintexts = _map_blocks(lambda ct: block_decrypt(ct, sk).to_bits(), ciphertexts, None, threads)
    for j in range(n_tilde):
        links[:c, j] = plaintexts[j]

    # Decode the columns, then drop the seed padding
    m = decode_matrix(BitMatrix.from_bits(links), cb)
    if params.gamma:
        seed_flat = np.concatenate(plaintexts[n_tilde:])[:params.ell * params.seed_len]
    else:
        seed_flat = np.zeros(0, dtype=np.uint8)
    seeds = SeedMatrix(BitMatrix.from_bits(seed_flat.reshape(params.ell, params.seed_len)))
    return CompressedMatrix(m, profile_id), seeds
