"""Divergences, the information rate and the seed-length study."""
import csv
import math
import logging
from dataclasses import asdict, dataclass
from fractions import Fraction
from pathlib import Path
from typing import Iterable, List, Sequence, Tuple, Union

import numpy as np
from scipy.optimize import brentq
from scipy.special import entr, rel_entr

from .crypt import frame_layout
from .errors import DimensionError
from .polar import MIN_SAMPLES, IndexProfile, PolarParams, entropy_profile

PROBABILITY_TOLERANCE = 1e-9
# Growth exponents bracketing the number of unpolarized positions
SEED_EXPONENT_LOW = 0.7214
SEED_EXPONENT_HIGH = 0.7331
_LN2 = math.log(2.0)

Number = Union[int, float, Fraction]


def _distribution(p, name: str) -> np.ndarray:
    p = np.asarray(p, dtype=np.float64).reshape(-1)
    if (p < 0).any():
        raise ValueError(f"{name} has negative entries")
    if abs(p.sum() - 1.0) > PROBABILITY_TOLERANCE:
        raise ValueError(f"{name} sums to {p.sum():.12f}, not 1")
    return p


def _pair(p, q) -> Tuple[np.ndarray, np.ndarray]:
    p, q = _distribution(p, "p"), _distribution(q, "q")
    if p.shape != q.shape:
        raise DimensionError(f"Distributions have different supports: {p.shape[0]} vs {q.shape[0]} points")
    return p, q


def variational_distance(p, q) -> float:
    """Non-normalized distance ``sum |p - q|`` (between 0 and 2)."""
    p, q = _pair(p, q)
    return float(np.abs(p - q).sum())


def kl_divergence(p, q) -> float:
    """D(p || q) in bits; infinite when q misses mass of p."""
    p, q = _pair(p, q)
    return float(rel_entr(p, q).sum() / _LN2)


def kl_to_uniform(p) -> float:
    """``k - H(p)`` for a law over k-bit words."""
    p = _distribution(p, "p")
    k = p.shape[0].bit_length() - 1
    if 2**k != p.shape[0]:
        raise DimensionError(f"Law over {p.shape[0]} points is not a law over k-bit words")
    return float(k - entr(p).sum() / _LN2)


def pinsker_gap(p, q) -> Tuple[float, float]:
    """``(V(p, q)**2 / 2, D(p || q))``; the first never exceeds the second."""
    lhs = 0.5 * variational_distance(p, q) ** 2
    rhs = kl_divergence(p, q)
    if math.isinf(rhs):
        logging.warning("Divergence is infinite: q is zero where p is positive")
    else:
        logging.debug(f"Pinsker margin {rhs - lhs:.3e}")
    return lhs, rhs


def binary_entropy(p: float) -> float:
    return float((entr(p) + entr(1.0 - p)) / _LN2)


def bias_for_entropy(h: float) -> float:
    """The bias p in [0, 1/2] with binary entropy ``h``."""
    if not 0.0 <= h <= 1.0:
        raise ValueError(f"Binary entropy must lie in [0, 1], got {h}")
    if h == 0.0:
        return 0.0
    if h == 1.0:
        return 0.5
    return float(brentq(lambda p: binary_entropy(p) - h, 1e-15, 0.5, xtol=1e-15))


@dataclass(frozen=True)
class RateReport:
    rate: Fraction
    measured_rate: Fraction
    hv_frac: Fraction
    dj_frac: Fraction
    r_over_ell: Fraction
    r_over_c: Fraction
    n: int
    ell: int
    c: int
    r: int
    high_count: int
    seed_len: int
    total_bits: int
    pad: int

    @property
    def exact(self) -> bool:
        return self.rate == self.measured_rate

    def to_dict(self) -> dict:
        data = {}
        for key, value in asdict(self).items():
            data[key] = float(value) if isinstance(value, Fraction) else value
        data["rate_exact"] = str(self.rate)
        data["measured_rate_exact"] = str(self.measured_rate)
        data["exact"] = self.exact
        return data


def rate_formula(hv_frac: Number, dj_frac: Number, ell: int, c: int, r: int) -> Fraction:
    """``1 / (hv (1 + r/ell) + dj (2 + r/ell + r/c))`` in exact arithmetic."""
    if not 1 <= c < ell:
        raise ValueError(f"Encrypted link count must satisfy 1 <= c < ell={ell}, got c={c}")
    hv, dj = Fraction(hv_frac), Fraction(dj_frac)
    r_ell, r_c = Fraction(r, ell), Fraction(r, c)
    denominator = hv * (1 + r_ell) + dj * (2 + r_ell + r_c)
    if denominator == 0:
        raise ValueError("Rate is undefined for an empty compressed message")
    return 1 / denominator


def rate_from_counts(n: int, high_count: int, seed_len: int, ell: int, c: int, r: int) -> RateReport:
    """Rate from the formula and from counting the bits of the frame layout.

    The two agree exactly whenever ``c`` divides ``ell * seed_len``; the
    padding of the last seed block is counted by the measured rate only.
    """
    if not 0 <= seed_len <= n or not 0 <= high_count <= n - seed_len:
        raise ValueError(f"Inconsistent counts: {high_count} high and {seed_len} mixed positions for n={n}")
    rate = rate_formula(Fraction(high_count, n), Fraction(seed_len, n), ell, c, r)
    layout = frame_layout(ell, high_count + seed_len, c, r, seed_len)
    measured = Fraction(ell * n, layout.total_bits)
    report = RateReport(rate, measured, Fraction(high_count, n), Fraction(seed_len, n), Fraction(r, ell),
                        Fraction(r, c), n, ell, c, r, high_count, seed_len, layout.total_bits, layout.pad)
    if not report.exact and layout.pad == 0:
        logging.warning(f"Rate formula {rate} differs from frame count {measured}")
    return report


def information_rate(profile: IndexProfile, ell: int, c: int, r: int) -> RateReport:
    return rate_from_counts(profile.n, len(profile.high_set), profile.seed_len, ell, c, r)


@dataclass(frozen=True)
class SeedStudyPoint:
    n: int
    d_j: int
    n_tilde: int
    seed_fraction: float
    bound_low: float
    bound_high: float
    method: str

    def to_dict(self) -> dict:
        return asdict(self)


def seed_study(n_list: Sequence[int], p: float, beta: float, method: str = "auto",
               samples: int = MIN_SAMPLES, seed: int = 0, threads: int = 1) -> List[SeedStudyPoint]:
    """Seed length and compressed length for each blocklength in ``n_list``."""
    points = []
    for n in n_list:
        profile = entropy_profile(PolarParams(n, p, beta), method=method, samples=samples, seed=seed, threads=threads)
        fraction = profile.seed_len / profile.compressed_len if profile.compressed_len else 0.0
        point = SeedStudyPoint(n, profile.seed_len, profile.compressed_len, fraction,
                               n**SEED_EXPONENT_LOW, n**SEED_EXPONENT_HIGH, profile.method)
        logging.info(f"Seed study n={n}: d_j={point.d_j}, n_tilde={point.n_tilde}, "
                     f"fraction {fraction:.4f}, bracket [{point.bound_low:.1f}, {point.bound_high:.1f}]")
        points.append(point)
    return points


def reliability_bound(n_tilde: int, ell: int, delta: float, column_error: float) -> float:
    """``n_tilde P_col + sqrt(2 n_tilde ell delta) + ell delta``, capped at 1."""
    value = n_tilde * column_error + math.sqrt(2.0 * n_tilde * ell * delta) + ell * delta
    return min(1.0, value)


def write_csv(rows: Iterable[dict], path: Union[str, Path]) -> int:
    """Write report rows with the keys of the first row as header; returns the row count."""
    rows = list(rows)
    path = Path(path)
    with path.open("w", newline="") as f:
        if not rows:
            return 0
        writer = csv.DictWriter(f, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        writer.writerows(rows)
    logging.info(f"Wrote {len(rows)} rows to {path}")
    return len(rows)
