"""AWGN link, multipath frequency responses and pilot-based LS estimation.

Complex quantities that leave this module are flattened into real vectors
as ``[real parts..., imaginary parts...]``.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .constellation import NoiseLevel
from .core import DimensionMismatchError, PhylabError, Rng, as_rng, write_json

DATASET_MAGIC = b"PLCD1"
DEFAULT_L_TAPS = 4
DEFAULT_DECAY = 2.0


# --------------------------------------------------------------------------
# AWGN
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class AwgnChannel:
    noise: NoiseLevel
    N: int

    @property
    def variance(self) -> float:
        return self.noise.variance(self.N)


def snr_to_n0(snr_db: float, p_av: float) -> NoiseLevel:
    """SNR is symbol energy over total noise energy per symbol (2 N0)."""
    if p_av <= 0:
        raise PhylabError("p_av must be positive")
    return NoiseLevel(p_av / (2.0 * 10.0 ** (snr_db / 10.0)))


def n0_to_snr(noise: NoiseLevel, p_av: float) -> float:
    return 10.0 * math.log10(p_av / (2.0 * noise.n0))


def awgn_corrupt(x: np.ndarray, ch: AwgnChannel, rng: Rng | int | None = None) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] != ch.N:
        raise DimensionMismatchError(f"signal width {x.shape[-1]} != channel dimension {ch.N}")
    if ch.noise.n0 == 0:
        return x.copy()
    return x + math.sqrt(ch.variance) * as_rng(rng).standard_normal(x.shape)


# --------------------------------------------------------------------------
# Frequency-selective channel and pilots
# --------------------------------------------------------------------------


@dataclass
class FreqResponse:
    h: np.ndarray  # complex, length n_sub

    def __post_init__(self):
        self.h = np.asarray(self.h, dtype=np.complex128)

    @property
    def n_sub(self) -> int:
        return self.h.shape[-1]

    def to_real(self) -> np.ndarray:
        return np.concatenate([self.h.real, self.h.imag], axis=-1)

    @classmethod
    def from_real(cls, r: np.ndarray) -> "FreqResponse":
        r = np.asarray(r, dtype=np.float64)
        n = r.shape[-1] // 2
        return cls(r[..., :n] + 1j * r[..., n:])


def tap_profile(l_taps: int, decay: float = DEFAULT_DECAY) -> np.ndarray:
    """Exponential power-delay profile normalised to unit total power."""
    if l_taps < 1:
        raise PhylabError("need at least one tap")
    p = np.exp(-np.arange(l_taps) / decay)
    return p / p.sum()


def sample_taps(l_taps: int, decay: float, rng: Rng, size: int | None = None) -> np.ndarray:
    p = tap_profile(l_taps, decay)
    shape = (l_taps,) if size is None else (size, l_taps)
    g = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / math.sqrt(2.0)
    return g * np.sqrt(p)


def sample_multipath(
    l_taps: int = DEFAULT_L_TAPS,
    decay: float = DEFAULT_DECAY,
    rng: Rng | int | None = None,
    n_sub: int = 64,
    return_taps: bool = False,
):
    """Random complex-Gaussian taps transformed to ``n_sub`` subcarriers."""
    taps = sample_taps(l_taps, decay, as_rng(rng))
    fr = FreqResponse(np.fft.fft(taps, n=n_sub))
    return (fr, taps) if return_taps else fr


@dataclass
class PilotPlan:
    n_sub: int = 64
    n_p: int = 16
    symbols: np.ndarray | None = None

    def __post_init__(self):
        if self.n_p < 1 or self.n_sub % self.n_p:
            raise PhylabError(f"{self.n_p} pilots do not divide {self.n_sub} subcarriers evenly")
        if self.symbols is None:
            self.symbols = np.ones(self.n_p, dtype=np.complex128)
        self.symbols = np.asarray(self.symbols, dtype=np.complex128)
        if self.symbols.shape != (self.n_p,):
            raise DimensionMismatchError("one pilot symbol per pilot index is required")

    @property
    def spacing(self) -> int:
        return self.n_sub // self.n_p

    @property
    def indices(self) -> np.ndarray:
        return np.arange(0, self.n_sub, self.spacing)

    @classmethod
    def qpsk(cls, n_sub: int = 64, n_p: int | None = None, rng: Rng | int | None = None) -> "PilotPlan":
        """Comb plan (default ``n_sub / 4`` pilots) with random unit-modulus QPSK pilots."""
        n_p = n_sub // 4 if n_p is None else n_p
        k = as_rng(rng).integers(0, 4, size=n_p)
        return cls(n_sub, n_p, np.exp(1j * (np.pi / 4 + np.pi / 2 * k)))


def ls_estimate(h_true, plan: PilotPlan, snr_db: float, rng: Rng | int | None = None) -> np.ndarray:
    """LS estimates ``y_p / x_p`` at the pilots; works on one response or a batch."""
    h = h_true.h if isinstance(h_true, FreqResponse) else np.asarray(h_true, dtype=np.complex128)
    if h.shape[-1] != plan.n_sub:
        raise DimensionMismatchError(f"response has {h.shape[-1]} subcarriers, plan expects {plan.n_sub}")
    x = plan.symbols
    if np.any(x == 0):
        raise PhylabError("pilot symbols must be nonzero")
    y = h[..., plan.indices] * x
    if math.isfinite(snr_db):
        var = 10.0 ** (-snr_db / 10.0)
        rng = as_rng(rng)
        shape = y.shape
        w = (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) * math.sqrt(var / 2.0)
        y = y + w
    return y / x


def interp_linear(pilot_vals, plan: PilotPlan) -> FreqResponse:
    """Piecewise-linear interpolation across all subcarriers.

    Subcarriers past the last pilot continue the last segment's slope.
    """
    vals = np.asarray(pilot_vals, dtype=np.complex128)
    if plan.n_p < 2:
        raise PhylabError("linear interpolation needs at least two pilots")
    if vals.shape[-1] != plan.n_p:
        raise DimensionMismatchError(f"got {vals.shape[-1]} pilot values, plan has {plan.n_p}")
    n = np.arange(plan.n_sub)
    seg = np.minimum(n // plan.spacing, plan.n_p - 2)
    t = (n - plan.indices[seg]) / plan.spacing
    left, right = vals[..., seg], vals[..., seg + 1]
    return FreqResponse((1.0 - t) * left + t * right)


# --------------------------------------------------------------------------
# Datasets
# --------------------------------------------------------------------------


@dataclass
class ChannelDataset:
    """Pairs ``(v, z)``: interpolated LS estimate and true response, both 2*n_sub reals."""

    v: np.ndarray
    z: np.ndarray
    config: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return self.v.shape[0]

    def subset(self, start: int, stop: int) -> "ChannelDataset":
        cfg = dict(self.config, B=stop - start)
        return ChannelDataset(self.v[start:stop], self.z[start:stop], cfg)

    def save(self, path) -> None:
        """Binary file plus a ``<path>.json`` sidecar holding the full config."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        c = self.config
        header = DATASET_MAGIC + struct.pack(
            "<qqdqq", len(self), int(c["n_sub"]), float(c["snr_db"]), int(c["l_taps"]), int(c["seed"])
        )
        tmp = path.with_name(path.name + ".tmp")
        with open(tmp, "wb") as fh:
            fh.write(header)
            fh.write(np.ascontiguousarray(self.v, dtype="<f8").tobytes())
            fh.write(np.ascontiguousarray(self.z, dtype="<f8").tobytes())
        tmp.replace(path)
        write_json(sidecar_path(path), self.config)

    @classmethod
    def load(cls, path) -> "ChannelDataset":
        path = Path(path)
        raw = path.read_bytes()
        if not raw.startswith(DATASET_MAGIC):
            raise PhylabError(f"{path}: not a channel dataset (bad magic)")
        off = len(DATASET_MAGIC)
        b, n_sub, snr_db, l_taps, seed = struct.unpack_from("<qqdqq", raw, off)
        off += struct.calcsize("<qqdqq")
        width = 2 * n_sub
        body = np.frombuffer(raw, dtype="<f8", offset=off)
        if body.size != 2 * b * width:
            raise PhylabError(f"{path}: truncated dataset body")
        v = body[: b * width].reshape(b, width).astype(np.float64)
        z = body[b * width:].reshape(b, width).astype(np.float64)
        side = sidecar_path(path)
        config = json.loads(side.read_text()) if side.exists() else {}
        config.update(B=b, n_sub=n_sub, snr_db=snr_db, l_taps=l_taps, seed=seed)
        return cls(v, z, config)


def sidecar_path(path) -> Path:
    path = Path(path)
    return path.with_name(path.name + ".json")


def gen_channel_dataset(
    b: int,
    n_sub: int = 64,
    l_taps: int = DEFAULT_L_TAPS,
    snr_db: float = 20.0,
    rng: Rng | int | None = None,
    decay: float = DEFAULT_DECAY,
    n_p: int | None = None,
) -> ChannelDataset:
    """``b`` i.i.d. pairs (v = interpolated LS estimate, z = true response)."""
    if b < 1:
        raise PhylabError("dataset size must be at least 1")
    rng = as_rng(rng)
    plan = PilotPlan.qpsk(n_sub, n_p, rng.stream("pilots"))
    taps = sample_taps(l_taps, decay, rng.stream("taps"), size=b)
    H = np.fft.fft(taps, n=n_sub, axis=1)
    est = interp_linear(ls_estimate(H, plan, snr_db, rng.stream("pilot-noise")), plan)
    config = {"B": b, "n_sub": n_sub, "l_taps": l_taps, "snr_db": float(snr_db), "decay": decay,
              "n_p": plan.n_p, "seed": rng.seed, "stream": list(rng._path)}
    return ChannelDataset(est.to_real(), FreqResponse(H).to_real(), config)
