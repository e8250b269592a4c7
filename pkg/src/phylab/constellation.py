"""Optimum constellation search under an average power constraint.

The search minimises the high-SNR symbol error probability

    Pe ~ exp(-min_{i!=j} ||z_i - z_j||^2 / (8 N0))

by projected gradient descent.  The descent direction for point ``m`` is

    g_m = -sum_{i!=m} exp(-d_mi^2 / 8N0) (1/d_mi^2 + 1/4N0) u_mi

with ``u_mi`` the unit vector from ``z_i`` to ``z_m``.  This is the exact
gradient of the pairwise union-bound surrogate
``F(Z) = sum_{i<j} exp(-d_ij^2 / 8N0) / d_ij`` (see :func:`pairwise_surrogate`).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linear_sum_assignment

from .core import (
    Constellation,
    DimensionMismatchError,
    DivergenceError,
    InsufficientPointsError,
    PhylabError,
    Rng,
    SingularGeometryError,
    as_rng,
    min_distance,
    pairwise_distances,
    project_power,
)

log = logging.getLogger(__name__)

#: step size used for the published constellations
DEFAULT_ETA = 2e-4


@dataclass(frozen=True)
class NoiseLevel:
    """One-sided noise parameter N0; per-dimension variance is 2 N0 / N."""

    n0: float

    def __post_init__(self):
        if not self.n0 >= 0:
            raise PhylabError(f"n0 must be non-negative, got {self.n0}")

    def variance(self, N: int) -> float:
        return 2.0 * self.n0 / N


def default_n0(p_av: float) -> float:
    """Optimisation noise level when none is given: p_av / 20 (p_av / n0 about 13 dB)."""
    return p_av / 20.0


def _check_noise(noise: NoiseLevel) -> float:
    if noise.n0 <= 0:
        raise PhylabError("n0 must be positive for the asymptotic error model")
    return noise.n0


def pe_asymptotic(c: Constellation, noise: NoiseLevel) -> float:
    n0 = _check_noise(noise)
    d = min_distance(c)
    return math.exp(-(d * d) / (8.0 * n0))


def pairwise_surrogate(points: np.ndarray, noise: NoiseLevel) -> float:
    """Smooth union-bound objective whose gradient is :func:`pe_gradient`."""
    n0 = _check_noise(noise)
    points = np.asarray(points, dtype=np.float64)
    M = points.shape[0]
    if M < 2:
        raise InsufficientPointsError("need at least two points")
    d = pairwise_distances(points)[np.triu_indices(M, k=1)]
    if np.any(d == 0):
        raise SingularGeometryError("coincident points")
    return float(np.sum(np.exp(-(d**2) / (8.0 * n0)) / d))


def _gradient(points: np.ndarray, n0: float) -> np.ndarray:
    diff = points[:, None, :] - points[None, :, :]
    d2 = np.sum(diff**2, axis=-1)
    np.fill_diagonal(d2, np.inf)
    if np.any(d2 == 0):
        raise SingularGeometryError("coincident points: unit vector undefined")
    d = np.sqrt(d2)
    w = np.exp(-d2 / (8.0 * n0)) * (1.0 / d2 + 1.0 / (4.0 * n0)) / d
    return -np.einsum("mi,min->mn", w, diff)


def pe_gradient(c: Constellation, noise: NoiseLevel) -> np.ndarray:
    """M x N matrix whose row m is g_m (see module docstring)."""
    n0 = _check_noise(noise)
    if c.M < 2:
        raise InsufficientPointsError("need at least two points")
    return _gradient(c.points, n0)


def init_constellation(M: int, N: int, p_av: float, rng: Rng | int | None = None) -> Constellation:
    if M < 2 or N < 1:
        raise PhylabError(f"need M >= 2 and N >= 1, got M={M}, N={N}")
    rng = as_rng(rng)
    return project_power(Constellation(rng.standard_normal((M, N)), p_av), p_av)


@dataclass
class GradSearchTrace:
    steps: list[int] = field(default_factory=list)
    pe: list[float] = field(default_factory=list)
    min_dist: list[float] = field(default_factory=list)
    surrogate: list[float] = field(default_factory=list)
    snapshots: dict[int, np.ndarray] = field(default_factory=dict)

    def rows(self):
        return zip(self.steps, self.pe, self.min_dist)


def _rejitter(points: np.ndarray, p_av: float, rng: Rng) -> np.ndarray:
    tol = 1e-9 * math.sqrt(p_av)
    d = pairwise_distances(points)
    np.fill_diagonal(d, np.inf)
    bad = np.argwhere(d < tol)
    if len(bad) == 0:
        return points
    points = points.copy()
    moved = set()
    for i, j in bad:
        m = max(i, j)
        if m in moved or min(i, j) in moved:
            continue
        u = rng.standard_normal(points.shape[1])
        points[m] += 1e-6 * math.sqrt(p_av) * u / np.linalg.norm(u)
        moved.add(m)
        log.info("re-jittered coincident point %d", m)
    return points


def gradient_search(
    init: Constellation,
    noise: NoiseLevel,
    eta: float = DEFAULT_ETA,
    steps: int = 1000,
    *,
    snapshot_every: int = 0,
    rng: Rng | int | None = None,
) -> tuple[Constellation, GradSearchTrace]:
    """Projected gradient descent on the constellation.

    Each iteration takes ``Z' = Z - eta * G(Z)`` and rescales ``Z'`` back onto
    the power sphere ``(1/M) sum ||z_m||^2 = p_av``.  Step 0 of the trace is
    the initial constellation.
    """
    if eta <= 0 or steps < 1:
        raise PhylabError("need eta > 0 and steps >= 1")
    n0 = _check_noise(noise)
    jitter_rng = as_rng(rng).stream("jitter")
    c = project_power(init)
    p_av = c.p_av
    Z = c.points.copy()
    trace = GradSearchTrace()

    def record(s, Z):
        cs = Constellation(Z, p_av)
        trace.steps.append(s)
        trace.pe.append(pe_asymptotic(cs, noise))
        trace.min_dist.append(min_distance(cs))
        trace.surrogate.append(pairwise_surrogate(Z, noise))
        if snapshot_every and s % snapshot_every == 0:
            trace.snapshots[s] = Z.copy()

    Z = _rejitter(Z, p_av, jitter_rng)
    record(0, Z)
    for s in range(1, steps + 1):
        with np.errstate(over="ignore", invalid="ignore"):
            Z = Z - eta * _gradient(Z, n0)
        if not np.all(np.isfinite(Z)):
            raise DivergenceError(f"non-finite constellation at step {s} (eta={eta}, n0={n0})")
        Z = Z * math.sqrt(Z.shape[0] * p_av / np.sum(Z**2))
        Z = _rejitter(Z, p_av, jitter_rng)
        record(s, Z)
    return Constellation(Z, p_av), trace


def optimize_constellation(
    M: int,
    N: int,
    p_av: float | None = None,
    n0: float | None = None,
    eta: float = DEFAULT_ETA,
    steps: int = 1000,
    restarts: int = 1,
    rng: Rng | int | None = None,
) -> tuple[Constellation, list[tuple[Constellation, GradSearchTrace]]]:
    """Run ``restarts`` independent searches and keep the lowest asymptotic Pe.

    Returns the best constellation and every (result, trace) pair in restart order.
    """
    p_av = 1.0 / M if p_av is None else p_av
    noise = NoiseLevel(default_n0(p_av) if n0 is None else n0)
    rng = as_rng(rng)
    runs = []
    for r in range(restarts):
        sub = rng.stream(f"restart-{r}")
        init = init_constellation(M, N, p_av, sub.stream("init"))
        runs.append(gradient_search(init, noise, eta, steps, rng=sub))
    best = max(runs, key=lambda run: min_distance(run[0]))[0]
    return best, runs


# --------------------------------------------------------------------------
# Comparing constellations up to rotation and relabelling
# --------------------------------------------------------------------------


def distance_spectrum(c: Constellation) -> np.ndarray:
    """Sorted pairwise distances (rotation and permutation invariant)."""
    d = pairwise_distances(c.points)
    return np.sort(d[np.triu_indices(c.M, k=1)])


@dataclass
class AlignmentReport:
    spectrum_a: np.ndarray
    spectrum_b: np.ndarray
    spectrum_gap: float
    residual: float
    rotation: np.ndarray
    permutation: np.ndarray

    def to_dict(self) -> dict:
        return {
            "spectrum_a": self.spectrum_a.tolist(),
            "spectrum_b": self.spectrum_b.tolist(),
            "spectrum_gap": self.spectrum_gap,
            "residual": self.residual,
            "rotation": self.rotation.tolist(),
            "permutation": self.permutation.tolist(),
        }


def _procrustes(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    # orthogonal Q minimising ||A Q - B||_F
    U, _, Vt = np.linalg.svd(A.T @ B)
    return U @ Vt


def _align_from(A, B, Q, max_iter=100):
    perm = None
    for _ in range(max_iter):
        AQ = A @ Q
        cost = np.sum((AQ[:, None, :] - B[None, :, :]) ** 2, axis=-1)
        _, new_perm = linear_sum_assignment(cost)
        if perm is not None and np.array_equal(new_perm, perm):
            break
        perm = new_perm
        Q = _procrustes(A, B[perm])
    resid = float(np.sum((A @ Q - B[perm]) ** 2))
    return resid, Q, perm


def compare_constellations(
    a: Constellation, b: Constellation, starts: int = 8, rng: Rng | int | None = None
) -> AlignmentReport:
    """Distance-spectrum gap and best orthogonal + relabelling residual.

    The residual is ``min_{Q, pi} sum_m ||a_m Q - b_pi(m)||^2`` found by
    alternating optimal assignment and orthogonal Procrustes from ``starts``
    initial rotations (the first is the identity).
    """
    if a.M != b.M or a.N != b.N:
        raise DimensionMismatchError(f"shapes differ: {a.points.shape} vs {b.points.shape}")
    rng = as_rng(rng).stream("align")
    sa, sb = distance_spectrum(a), distance_spectrum(b)
    gap = float(np.max(np.abs(sa - sb))) if sa.size else 0.0
    best = None
    for k in range(starts):
        if k == 0:
            Q0 = np.eye(a.N)
        else:
            Q0, R = np.linalg.qr(rng.standard_normal((a.N, a.N)))
            Q0 = Q0 * np.sign(np.diag(R))
        cand = _align_from(a.points, b.points, Q0)
        if best is None or cand[0] < best[0]:
            best = cand
    resid, Q, perm = best
    return AlignmentReport(sa, sb, gap, resid, Q, np.asarray(perm))


def rotation_matrix_2d(theta: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]])
