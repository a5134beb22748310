import numpy as np
import pytest

from hybridlinks.bitmat import BitMatrix, BitVector
from hybridlinks.crypt import (CryptoParams, LinkFrame, block_decrypt, block_encrypt, frame_decrypt,
                               frame_encrypt, frame_layout, keygen, registry)
from hybridlinks.errors import DecryptionError, DimensionError, FrameFormatError
from hybridlinks.is_codec import encode_columns
from hybridlinks.source_codec import CompressedMatrix, SeedMatrix


class TestKeygen:
    def test_seeded_keygen_is_reproducible(self):
        assert keygen(4, 32, seed=1) == keygen(4, 32, seed=1)
        assert keygen(4, 32, seed=1).key_id != keygen(4, 32, seed=2).key_id

    def test_unseeded_keys_differ(self):
        assert keygen(4, 32).public_key.key != keygen(4, 32).public_key.key

    def test_unknown_scheme(self):
        with pytest.raises(ValueError, match="Unknown block scheme"):
            keygen(4, 32, scheme="rot13")

    def test_invalid_sizes(self):
        with pytest.raises(ValueError):
            keygen(0, 8)
        with pytest.raises(ValueError):
            keygen(4, -1)

    def test_registry_lists_builtin_schemes(self):
        assert {"toy-hmac", "identity"} <= set(registry.names())


class TestBlockCipher:
    @pytest.mark.parametrize("r", [0, 8, 32])
    def test_every_block_round_trips(self, r):
        keys = keygen(4, r, seed=3)
        for value in range(16):
            block = BitVector.from_int(value, 4)
            cipher = block_encrypt(block, keys.public_key)
            assert len(cipher) == 4 + r
            assert block_decrypt(cipher, keys.secret_key) == block

    def test_encryption_is_probabilistic(self):
        keys = keygen(4, 64, seed=3)
        block = BitVector.from_int(0b1010, 4)
        ciphertexts = {block_encrypt(block, keys.public_key) for _ in range(100)}
        assert len(ciphertexts) >= 99, f"Only {len(ciphertexts)} distinct ciphertexts out of 100"

    def test_seeded_encryption_is_reproducible(self):
        keys = keygen(4, 32, seed=3)
        block = BitVector.from_int(0b0110, 4)
        first = block_encrypt(block, keys.public_key, np.random.default_rng(8))
        second = block_encrypt(block, keys.public_key, np.random.default_rng(8))
        assert first == second

    def test_wrong_length(self):
        keys = keygen(4, 32, seed=3)
        with pytest.raises(DimensionError):
            block_encrypt(BitVector.zeros(5), keys.public_key)
        with pytest.raises(DimensionError):
            block_decrypt(BitVector.zeros(35), keys.secret_key)

    def test_wrong_key_fails_authentication(self):
        keys, other = keygen(4, 64, seed=3), keygen(4, 64, seed=4)
        for value in range(16):
            cipher = block_encrypt(BitVector.from_int(value, 4), keys.public_key)
            with pytest.raises(DecryptionError):
                block_decrypt(cipher, other.secret_key)

    def test_tampering_is_detected(self):
        keys = keygen(8, 32, seed=3)
        cipher = block_encrypt(BitVector.from_int(0x5A, 8), keys.public_key).to_bits()
        cipher[2] ^= 1
        with pytest.raises(DecryptionError):
            block_decrypt(BitVector.from_bits(cipher), keys.secret_key)

    def test_wrong_key_without_tag_garbles(self):
        keys, other = keygen(4, 8, seed=3), keygen(4, 8, seed=4)
        rng = np.random.default_rng(5)
        wrong = 0
        for _ in range(100):
            block = BitVector.from_bits(rng.integers(0, 2, size=4, dtype=np.uint8))
            if block_decrypt(block_encrypt(block, keys.public_key, rng), other.secret_key) != block:
                wrong += 1
        assert wrong >= 80

    def test_identity_scheme(self):
        keys = keygen(3, 5, scheme="identity")
        cipher = block_encrypt(BitVector.from_bits([1, 0, 1]), keys.public_key)
        assert cipher.to_bits().tolist() == [1, 0, 1, 0, 0, 0, 0, 0]
        assert block_decrypt(cipher, keys.secret_key).to_bits().tolist() == [1, 0, 1]

    def test_registered_scheme_is_used(self):
        @registry.register("test-complement")
        class ComplementScheme:
            def keygen(self, c, r, rng):
                return b"", b""

            def encrypt(self, block, pk, rng):
                return np.concatenate([1 - block, np.ones(pk.r, dtype=np.uint8)])

            def decrypt(self, cipher, sk):
                return 1 - cipher[:sk.c]

        keys = keygen(2, 1, scheme="test-complement")
        cipher = block_encrypt(BitVector.from_bits([1, 0]), keys.public_key)
        assert cipher.to_bits().tolist() == [0, 1, 1]
        assert block_decrypt(cipher, keys.secret_key).to_bits().tolist() == [1, 0]


class TestCryptoParams:
    def test_seed_blocks(self):
        params = CryptoParams(c=2, r=3, ell=8, seed_len=4)
        assert params.gamma == 16
        assert params.pad == 0
        assert params.encrypted_links == (0, 1)

    def test_seed_padding(self):
        params = CryptoParams(c=5, r=0, ell=8, seed_len=3)
        assert params.gamma == 5
        assert params.pad == 1

    def test_all_links_encrypted_is_rejected(self):
        with pytest.raises(ValueError):
            CryptoParams(c=8, r=0, ell=8, seed_len=1)

    def test_frame_size(self):
        layout = frame_layout(ell=8, n_tilde=10, c=2, r=3, seed_len=4)
        assert layout.gamma == 16
        assert layout.link_bits(0) == 10 + 10 * 3 + 16 * 5
        assert layout.link_bits(5) == 10
        assert layout.total_bits == 10 * 6 + 10 * (2 + 3) + 16 * (2 + 3)


def _random_message(rng, ell, n_tilde, seed_len):
    m = CompressedMatrix(BitMatrix.from_bits(rng.integers(0, 2, size=(ell, n_tilde), dtype=np.uint8)), "test")
    return m, SeedMatrix.random(ell, seed_len, rng)


class TestFrame:
    def test_round_trip(self, codebook8, keypair_c2, rng):
        params = CryptoParams(c=2, r=32, ell=8, seed_len=3)
        m, seeds = _random_message(rng, 8, 10, 3)
        frame = frame_encrypt(m, seeds, codebook8, params, keypair_c2.public_key)
        assert frame.total_bits == frame_layout(8, 10, 2, 32, 3).total_bits
        received, received_seeds = frame_decrypt(frame, codebook8, params, keypair_c2.secret_key, "test")
        assert received == m
        assert received_seeds == seeds

    def test_threads_give_a_valid_frame(self, codebook8, keypair_c2, rng):
        params = CryptoParams(c=2, r=32, ell=8, seed_len=2)
        m, seeds = _random_message(rng, 8, 12, 2)
        frame = frame_encrypt(m, seeds, codebook8, params, keypair_c2.public_key, threads=4)
        received, received_seeds = frame_decrypt(frame, codebook8, params, keypair_c2.secret_key, "test", threads=4)
        assert received == m and received_seeds == seeds

    def test_plaintext_links_carry_codewords(self, codebook8, keypair_c2, rng):
        params = CryptoParams(c=2, r=32, ell=8, seed_len=1)
        m, seeds = _random_message(rng, 8, 6, 1)
        frame = frame_encrypt(m, seeds, codebook8, params, keypair_c2.public_key)
        x = encode_columns(m.bits.to_bits(), codebook8)
        for link in range(2, 8):
            np.testing.assert_array_equal(frame.payloads[link].to_bits(), x[link])

    def test_identity_scheme_is_transparent(self, codebook8, rng):
        keys = keygen(1, 0, scheme="identity")
        params = CryptoParams(c=1, r=0, ell=8, seed_len=2, scheme="identity")
        m, seeds = _random_message(rng, 8, 5, 2)
        frame = frame_encrypt(m, seeds, codebook8, params, keys.public_key)
        x = encode_columns(m.bits.to_bits(), codebook8)
        expected_first = np.concatenate([x[0], seeds.bits.to_bits().reshape(-1)])
        np.testing.assert_array_equal(frame.payloads[0].to_bits(), expected_first)
        for link in range(1, 8):
            np.testing.assert_array_equal(frame.payloads[link].to_bits(), x[link])

    def test_empty_seed(self, codebook8, keypair_c2, rng):
        params = CryptoParams(c=2, r=32, ell=8, seed_len=0)
        m, seeds = _random_message(rng, 8, 4, 0)
        frame = frame_encrypt(m, seeds, codebook8, params, keypair_c2.public_key)
        assert frame.gamma == 0
        received, received_seeds = frame_decrypt(frame, codebook8, params, keypair_c2.secret_key)
        assert received.bits == m.bits
        assert received_seeds.bits.shape == (8, 0)

    def test_tampered_frame_is_rejected(self, codebook8, keypair_c2, rng):
        params = CryptoParams(c=2, r=32, ell=8, seed_len=1)
        m, seeds = _random_message(rng, 8, 4, 1)
        frame = frame_encrypt(m, seeds, codebook8, params, keypair_c2.public_key)
        first = frame.payloads[0].to_bits()
        first[0] ^= 1
        tampered = LinkFrame(frame.ell, frame.n_tilde, frame.c, frame.r, frame.seed_len, frame.gamma, frame.pad,
                             (BitVector.from_bits(first),) + frame.payloads[1:])
        with pytest.raises(DecryptionError):
            frame_decrypt(tampered, codebook8, params, keypair_c2.secret_key)

    def test_key_must_match_parameters(self, codebook8, rng):
        params = CryptoParams(c=2, r=32, ell=8, seed_len=1)
        m, seeds = _random_message(rng, 8, 4, 1)
        with pytest.raises(ValueError):
            frame_encrypt(m, seeds, codebook8, params, keygen(3, 32, seed=1).public_key)

    def test_seed_shape_is_checked(self, codebook8, keypair_c2, rng):
        params = CryptoParams(c=2, r=32, ell=8, seed_len=2)
        m, _ = _random_message(rng, 8, 4, 2)
        with pytest.raises(DimensionError):
            frame_encrypt(m, SeedMatrix.zeros(8, 3), codebook8, params, keypair_c2.public_key)


class TestFrameFormat:
    @pytest.fixture
    def frame(self, codebook8, keypair_c2, rng):
        params = CryptoParams(c=2, r=32, ell=8, seed_len=3)
        m, seeds = _random_message(rng, 8, 7, 3)
        return frame_encrypt(m, seeds, codebook8, params, keypair_c2.public_key)

    def test_bytes_round_trip(self, frame):
        data = frame.to_bytes()
        assert data[:4] == b"NUH2"
        assert LinkFrame.from_bytes(data) == frame

    def test_save_and_load(self, tmp_path, frame):
        path = tmp_path / "frame.nuh2"
        frame.save(path)
        assert LinkFrame.load(path) == frame

    def test_truncated_frame(self, frame):
        with pytest.raises(FrameFormatError):
            LinkFrame.from_bytes(frame.to_bytes()[:-1])
        with pytest.raises(FrameFormatError):
            LinkFrame.from_bytes(frame.to_bytes()[:10])

    def test_bad_magic(self, frame):
        with pytest.raises(FrameFormatError):
            LinkFrame.from_bytes(b"NUH1" + frame.to_bytes()[4:])

    def test_inconsistent_header(self, frame):
        with pytest.raises(FrameFormatError):
            LinkFrame(frame.ell, frame.n_tilde, frame.c, frame.r, frame.seed_len, frame.gamma + 1, frame.pad,
                      frame.payloads)

    def test_wrong_payload_length(self, frame):
        with pytest.raises(FrameFormatError):
            LinkFrame(frame.ell, frame.n_tilde, frame.c, frame.r, frame.seed_len, frame.gamma, frame.pad,
                      frame.payloads[:-1] + (BitVector.zeros(3),))
