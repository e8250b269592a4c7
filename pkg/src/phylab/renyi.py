"""Matrix-based Renyi alpha-entropy of sample sets.

Entropies are computed from the eigenvalues of a unit-trace Gram matrix
built with a Gaussian kernel, and are reported in bits.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import pdist, squareform

from .core import DimensionMismatchError, PhylabError

log = logging.getLogger(__name__)

DEFAULT_ALPHA = 1.01
SIGMA_FLOOR = 1e-6


@dataclass(frozen=True)
class KernelSpec:
    """Gaussian kernel with an explicit ``sigma`` or a bandwidth rule.

    Rules: ``"silverman"`` (per-coordinate Silverman factor) and
    ``"silverman-total"`` (Silverman factor applied to the root of the total
    variance, which keeps the kernel width on the scale of inter-sample
    distances in high dimension).
    """

    kind: str = "gaussian"
    sigma: float | None = None
    rule: str = "silverman-total"

    def __post_init__(self):
        if self.kind != "gaussian":
            raise PhylabError(f"unsupported kernel {self.kind!r}")
        if self.sigma is not None and not self.sigma > 0:
            raise PhylabError("explicit sigma must be positive")
        if self.rule not in BANDWIDTH_RULES:
            raise PhylabError(f"unknown bandwidth rule {self.rule!r}")

    def bandwidth(self, samples: np.ndarray) -> float:
        if self.sigma is not None:
            return float(self.sigma)
        return BANDWIDTH_RULES[self.rule](samples)


def _as_samples(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    return x[:, None] if x.ndim == 1 else x


def _silverman_factor(B: int, d: int) -> float:
    return (4.0 / (d + 2)) ** (1.0 / (d + 4)) * B ** (-1.0 / (d + 4))


def silverman_sigma(samples) -> float:
    """Mean per-coordinate std times the Silverman factor, floored at 1e-6."""
    x = _as_samples(samples)
    B, d = x.shape
    if B < 2:
        raise PhylabError("bandwidth rule needs at least two samples")
    std = float(np.mean(np.std(x, axis=0, ddof=1)))
    return max(std * _silverman_factor(B, d), SIGMA_FLOOR)


def silverman_total_sigma(samples) -> float:
    """Root total variance times the Silverman factor, floored at 1e-6."""
    x = _as_samples(samples)
    B, d = x.shape
    if B < 2:
        raise PhylabError("bandwidth rule needs at least two samples")
    total = math.sqrt(float(np.sum(np.var(x, axis=0, ddof=1))))
    return max(total * _silverman_factor(B, d), SIGMA_FLOOR)


BANDWIDTH_RULES = {"silverman": silverman_sigma, "silverman-total": silverman_total_sigma}


def gram_matrix(samples, kernel: KernelSpec | None = None, sigma: float | None = None) -> np.ndarray:
    """Gaussian Gram matrix ``exp(-||x_i - x_j||^2 / (2 sigma^2))``."""
    x = _as_samples(samples)
    if x.shape[0] < 1:
        raise PhylabError("need at least one sample")
    if sigma is None:
        sigma = (kernel or KernelSpec()).bandwidth(x) if x.shape[0] > 1 else 1.0
    d2 = squareform(pdist(x, "sqeuclidean")) if x.shape[0] > 1 else np.zeros((1, 1))
    return np.exp(-d2 / (2.0 * sigma * sigma))


@dataclass(frozen=True, eq=False)
class NormalizedGram:
    """Symmetric PSD B x B matrix with unit trace."""

    a: np.ndarray

    @property
    def b_count(self) -> int:
        return self.a.shape[0]


def normalize_gram(k: np.ndarray) -> NormalizedGram:
    """``A[i,j] = K[i,j] / (B sqrt(K[i,i] K[j,j]))``."""
    k = np.asarray(k, dtype=np.float64)
    if k.ndim != 2 or k.shape[0] != k.shape[1]:
        raise DimensionMismatchError("Gram matrix must be square")
    d = np.diag(k)
    if np.any(d <= 0):
        raise PhylabError("Gram matrix needs a positive diagonal")
    s = np.sqrt(d)
    return NormalizedGram(k / np.outer(s, s) / k.shape[0])


def constant_gram(B: int) -> NormalizedGram:
    """Gram of a constant variable: every entry 1/B."""
    return normalize_gram(np.ones((B, B)))


def sample_gram(samples, kernel: KernelSpec | None = None) -> NormalizedGram:
    return normalize_gram(gram_matrix(samples, kernel))


def _spectrum(a: np.ndarray) -> np.ndarray:
    lam = np.linalg.eigvalsh(a)
    if lam[0] < -1e-6:
        log.warning("Gram matrix has eigenvalue %.3g < -1e-6; check the kernel", lam[0])
    lam = np.clip(lam, 0.0, None)
    total = lam.sum()
    if abs(total - 1.0) > 1e-9:
        lam = lam / total
    return lam


def entropy_from_spectrum(lam: np.ndarray, alpha: float) -> float:
    lam = lam[lam > 0]
    return float(np.log2(np.sum(lam**alpha)) / (1.0 - alpha))


def renyi_entropy(a: NormalizedGram | np.ndarray, alpha: float = DEFAULT_ALPHA) -> float:
    if alpha <= 0 or alpha == 1:
        raise PhylabError("alpha must be positive and != 1 (use 1.01 to approximate Shannon)")
    a = a.a if isinstance(a, NormalizedGram) else np.asarray(a)
    return entropy_from_spectrum(_spectrum(a), alpha)


def hadamard_normalized(a: NormalizedGram, b: NormalizedGram) -> NormalizedGram:
    if a.b_count != b.b_count:
        raise DimensionMismatchError(f"Gram sizes differ: {a.b_count} vs {b.b_count}")
    h = a.a * b.a
    return NormalizedGram(h / np.trace(h))


def joint_entropy(a: NormalizedGram, b: NormalizedGram, alpha: float = DEFAULT_ALPHA) -> float:
    return renyi_entropy(hadamard_normalized(a, b), alpha)


def mutual_information(a: NormalizedGram, b: NormalizedGram, alpha: float = DEFAULT_ALPHA) -> float:
    """``S(A) + S(B) - S(A, B)``; not guaranteed non-negative, see :func:`check_mi`."""
    return renyi_entropy(a, alpha) + renyi_entropy(b, alpha) - joint_entropy(a, b, alpha)


def check_mi(value: float, where: str = "") -> float:
    if value < -1e-6:
        log.warning("negative mutual information %.3g bits %s", value, where)
    return value


def conditional_entropy(z_samples, v_samples, alpha: float = DEFAULT_ALPHA,
                        kernel: KernelSpec | None = None) -> float:
    """``S(z | v) = S(z, v) - S(v)`` with one Gram matrix per variable."""
    z, v = _as_samples(z_samples), _as_samples(v_samples)
    if z.shape[0] != v.shape[0]:
        raise DimensionMismatchError(f"sample counts differ: {z.shape[0]} vs {v.shape[0]}")
    if z.shape[0] < 2:
        raise PhylabError("need at least two samples")
    az, av = sample_gram(z, kernel), sample_gram(v, kernel)
    return joint_entropy(az, av, alpha) - renyi_entropy(av, alpha)
