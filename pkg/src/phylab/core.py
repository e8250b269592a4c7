"""Shared domain types, labelled random streams and JSON schemas."""

from __future__ import annotations

import json
import math
import zlib
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any

import numpy as np


class PhylabError(ValueError):
    """Base class for contract violations raised by this package."""


class DegenerateConstellationError(PhylabError):
    pass


class InsufficientPointsError(PhylabError):
    pass


class SingularGeometryError(PhylabError):
    pass


class DimensionMismatchError(PhylabError):
    pass


class DivergenceError(PhylabError):
    pass


# --------------------------------------------------------------------------
# Randomness
# --------------------------------------------------------------------------


def _label_key(label: str) -> int:
    # crc32 is stable across platforms and Python hash seeds
    return zlib.crc32(label.encode("utf-8"))


class Rng:
    """Deterministic generator that can be split into labelled streams.

    ``Rng(7).stream("noise")`` always yields the same draws, independent of
    anything drawn from ``Rng(7)`` itself or from other labels.
    """

    def __init__(self, seed: int, _path: tuple[int, ...] = ()):
        self.seed = int(seed)
        self._path = tuple(_path)
        ss = np.random.SeedSequence(self.seed, spawn_key=self._path)
        self.generator = np.random.Generator(np.random.PCG64(ss))

    def stream(self, label: str) -> "Rng":
        return Rng(self.seed, self._path + (_label_key(label),))

    def normal(self, *args, **kwargs):
        return self.generator.normal(*args, **kwargs)

    def standard_normal(self, *args, **kwargs):
        return self.generator.standard_normal(*args, **kwargs)

    def uniform(self, *args, **kwargs):
        return self.generator.uniform(*args, **kwargs)

    def integers(self, *args, **kwargs):
        return self.generator.integers(*args, **kwargs)

    def permutation(self, *args, **kwargs):
        return self.generator.permutation(*args, **kwargs)

    def __repr__(self) -> str:
        return f"Rng(seed={self.seed}, path={self._path})"


def as_rng(rng: Rng | int | None) -> Rng:
    if isinstance(rng, Rng):
        return rng
    return Rng(0 if rng is None else rng)


# --------------------------------------------------------------------------
# Symbols and constellations
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class SymbolSet:
    M: int

    def __post_init__(self):
        if self.M < 2 or self.M & (self.M - 1):
            raise PhylabError(f"M must be a power of two >= 2, got {self.M}")

    @property
    def k(self) -> int:
        return int(math.log2(self.M))

    def one_hot(self, s) -> np.ndarray:
        """One-hot rows for symbol index ``s`` (scalar or array, 0-based)."""
        s = np.asarray(s)
        out = np.zeros(s.shape + (self.M,))
        np.put_along_axis(out, s[..., None], 1.0, axis=-1)
        return out

    def all_one_hot(self) -> np.ndarray:
        return np.eye(self.M)


@dataclass(frozen=True, eq=False)
class Constellation:
    """M signal points in R^N (rows of ``points``) with a power budget."""

    points: np.ndarray
    p_av: float

    def __post_init__(self):
        pts = np.array(self.points, dtype=np.float64, copy=True)
        if pts.ndim != 2:
            raise DimensionMismatchError(f"points must be M x N, got shape {pts.shape}")
        if not np.all(np.isfinite(pts)):
            raise PhylabError("constellation points must be finite")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "p_av", float(self.p_av))

    @property
    def M(self) -> int:
        return self.points.shape[0]

    @property
    def N(self) -> int:
        return self.points.shape[1]

    def with_points(self, points: np.ndarray) -> "Constellation":
        return Constellation(points, self.p_av)

    def to_dict(self) -> dict:
        return {"M": self.M, "N": self.N, "p_av": self.p_av, "points": self.points.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "Constellation":
        pts = np.asarray(d["points"], dtype=np.float64).reshape(int(d["M"]), int(d["N"]))
        return cls(pts, d["p_av"])

    def save(self, path) -> None:
        write_json(path, self.to_dict())

    @classmethod
    def load(cls, path) -> "Constellation":
        return cls.from_dict(json.loads(Path(path).read_text()))

    def __eq__(self, other):
        if not isinstance(other, Constellation):
            return NotImplemented
        return self.p_av == other.p_av and np.array_equal(self.points, other.points)


def average_power(c: Constellation) -> float:
    """Mean squared norm of the points, E||z||^2 under uniform symbols."""
    return float(np.sum(c.points**2) / c.M)


def project_power(c: Constellation, p_av: float | None = None) -> Constellation:
    """Rescale all points by one positive factor so the average power is ``p_av``."""
    p_av = c.p_av if p_av is None else float(p_av)
    if p_av <= 0:
        raise PhylabError("p_av must be positive")
    energy = float(np.sum(c.points**2))
    if energy == 0.0:
        raise DegenerateConstellationError("cannot rescale an all-zero constellation")
    scale = math.sqrt(c.M * p_av / energy)
    return Constellation(c.points * scale, p_av)


def pairwise_distances(points: np.ndarray) -> np.ndarray:
    diff = points[:, None, :] - points[None, :, :]
    return np.sqrt(np.sum(diff**2, axis=-1))


def min_distance(c: Constellation) -> float:
    if c.M < 2:
        raise InsufficientPointsError("need at least two points")
    d = pairwise_distances(c.points)
    iu = np.triu_indices(c.M, k=1)
    return float(d[iu].min())


# --------------------------------------------------------------------------
# Configuration
# --------------------------------------------------------------------------


@dataclass
class ExperimentConfig:
    """Seed, SNR and the per-experiment parameter records.

    ``params`` maps an experiment kind (``"constellation"``, ``"ae"``, ...) to
    a flat dict of its numeric and string settings.
    """

    seed: int = 0
    snr_db: float = 7.0
    params: dict[str, dict[str, Any]] = field(default_factory=dict)

    def __post_init__(self):
        for kind, rec in self.params.items():
            for key, val in rec.items():
                if isinstance(val, float) and not math.isfinite(val):
                    raise PhylabError(f"non-finite config value {kind}.{key}={val}")
        if not math.isfinite(self.snr_db):
            raise PhylabError("snr_db must be finite")

    def get(self, kind: str, key: str, default=None):
        return self.params.get(kind, {}).get(key, default)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        return cls(seed=int(d.get("seed", 0)), snr_db=float(d.get("snr_db", 7.0)),
                   params={k: dict(v) for k, v in d.get("params", {}).items()})

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))


def write_json(path, obj) -> None:
    """Write JSON atomically (temp file + rename)."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    tmp.replace(path)
