import os
import json
from dataclasses import dataclass, field
from typing import List, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from hybridlinks.errors import ConfigError
from hybridlinks.params import SystemParams
from hybridlinks.polar import MIN_SAMPLES


def _check_power_of_two(value: int) -> int:
    if value < 1 or value & (value - 1):
        raise ValueError(f"blocklength must be a power of two, got {value}")
    return value


class ExperimentConfig(BaseModel):
    """System parameters plus the options of every command."""
    model_config = ConfigDict(extra="forbid", frozen=True)

    # Source code
    n: int = 16
    p: float = Field(0.11, ge=0.0, le=1.0)
    beta: float = Field(0.25, ge=0.0, lt=0.5)
    delta_override: Optional[float] = Field(None, gt=0.0, lt=1.0)
    method: str = "auto"
    samples: int = Field(MIN_SAMPLES, ge=MIN_SAMPLES)
    estimator_seed: int = Field(0, ge=0)

    # Binning code
    ell: int = Field(16, ge=2)
    w: int = Field(8, ge=0)
    k_s: int = Field(4, ge=0)
    t: float = Field(1.0, ge=1.0)
    codebook_seed: int = Field(0, ge=0)
    codebook_sampling: str = "permutation"
    check_security: bool = True

    # Encryption
    c: int = Field(4, ge=1)
    r: int = Field(32, ge=0)
    d: float = Field(2.0, gt=0.0)
    scheme: str = "toy-hmac"

    # Command options
    trials: int = Field(1000, ge=1)
    n_list: List[int] = Field(default_factory=lambda: [256, 512, 1024, 2048, 4096, 8192, 16384])
    rate_n: List[int] = Field(default_factory=lambda: [8, 16])
    rate_ell: List[int] = Field(default_factory=lambda: [8, 16])
    rate_c: List[int] = Field(default_factory=lambda: [1, 2, 4])
    rate_r: List[int] = Field(default_factory=lambda: [0, 4, 8])
    rate_dj: List[int] = Field(default_factory=lambda: [0, 2, 4])
    i_star: int = Field(0, ge=0)
    m1: int = 0
    m2: int = 1
    reveal_ks_minus_one: bool = True
    game_column: int = Field(0, ge=0)
    ks_set: Optional[List[int]] = None
    wset: Optional[List[int]] = None
    input: Optional[str] = None
    frame: Optional[str] = None
    replay: bool = False
    seed: int = Field(0, ge=0, lt=2**64)
    threads: int = Field(default_factory=lambda: int(os.environ.get("HYBRIDLINKS_THREADS", "1")), ge=1)
    strict: bool = False

    @field_validator("n")
    @classmethod
    def check_n(cls, value: int) -> int:
        return _check_power_of_two(value)

    @field_validator("n_list", "rate_n")
    @classmethod
    def check_blocklengths(cls, values: List[int]) -> List[int]:
        return [_check_power_of_two(value) for value in values]

    @field_validator("method")
    @classmethod
    def check_method(cls, value: str) -> str:
        if value not in ("auto", "exact", "monte-carlo"):
            raise ValueError(f"Unknown entropy estimator '{value}'")
        return value

    @model_validator(mode="after")
    def check_consistency(self) -> "ExperimentConfig":
        if self.w >= self.ell:
            raise ValueError(f"w={self.w} must be smaller than ell={self.ell}")
        if self.k_s > self.ell:
            raise ValueError(f"k_s={self.k_s} exceeds ell={self.ell}")
        if self.c > self.ell:
            raise ValueError(f"c={self.c} exceeds ell={self.ell}")
        return self

    @classmethod
    def from_file(cls, filename: str) -> "ExperimentConfig":
        """Load an experiment configuration from a JSON file."""
        if not os.path.exists(filename):
            raise FileNotFoundError(f"Configuration file '{filename}' not found")
        try:
            with open(filename, "r") as f:
                data = json.load(f)
        except json.JSONDecodeError as e:
            raise ConfigError(f"Configuration file '{filename}' is not valid JSON: {e}") from e
        if not isinstance(data, dict):
            raise ConfigError(f"Configuration file '{filename}' must hold a JSON object")
        return cls.model_validate(data)

    def with_overrides(self, **overrides) -> "ExperimentConfig":
        """Apply command-line values that were actually given."""
        updates = {key: value for key, value in overrides.items() if value is not None}
        if not updates:
            return self
        return type(self).model_validate({**self.model_dump(), **updates})

    def system_params(self) -> SystemParams:
        return SystemParams(
            n=self.n,
            p=self.p,
            beta=self.beta,
            delta_override=self.delta_override,
            ell=self.ell,
            w=self.w,
            k_s=self.k_s,
            t=self.t,
            c=self.c,
            r=self.r,
            d=self.d,
            codebook_seed=self.codebook_seed,
            codebook_sampling=self.codebook_sampling,
            scheme=self.scheme,
        )


@dataclass
class DatabaseConfig:
    """Configuration for the SQLite report store."""
    db_path: str = field(default_factory=lambda: os.environ.get("HYBRIDLINKS_DB", "hybridlinks_reports.db"))
