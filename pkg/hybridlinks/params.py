import math
from dataclasses import dataclass, asdict
from typing import Optional

from .polar import PolarParams
from .is_codec import CodeParams
from .crypt import CryptoParams


@dataclass(frozen=True)
class SystemParams:
    """Every parameter of one multipath deployment.

    n, p, beta and delta_override describe the source code; ell, w, k_s and t
    the random-binning channel code; c, r, d and scheme the encryption layer.
    """
    n: int = 16
    p: float = 0.11
    beta: float = 0.25
    delta_override: Optional[float] = None
    ell: int = 16
    w: int = 8
    k_s: int = 4
    t: float = 1.0
    c: int = 4
    r: int = 32
    d: float = 2.0
    codebook_seed: int = 0
    codebook_sampling: str = "permutation"
    scheme: str = "toy-hmac"

    @property
    def k_w(self) -> int:
        return self.ell - self.k_s

    @property
    def l_eps(self) -> int:
        return math.ceil(self.t * math.log2(self.ell))

    @property
    def delta(self) -> float:
        return self.polar_params().delta

    def polar_params(self) -> PolarParams:
        return PolarParams(n=self.n, p=self.p, beta=self.beta, delta_override=self.delta_override)

    def code_params(self, check_security: bool = True) -> CodeParams:
        return CodeParams(
            ell=self.ell,
            w=self.w,
            k_s=self.k_s,
            t=self.t,
            rng_seed=self.codebook_seed,
            sampling=self.codebook_sampling,
            check_security=check_security,
        )

    def crypto_params(self, seed_len: int) -> CryptoParams:
        return CryptoParams(c=self.c, r=self.r, ell=self.ell, seed_len=seed_len, scheme=self.scheme)

    def to_dict(self) -> dict:
        return asdict(self)
