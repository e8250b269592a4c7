"""End-to-end autoencoder over the AWGN channel.

Encoder: one-hot(M) -> dense M (relu) -> dense N (linear) -> batch power
normalisation.  Decoder: dense M (relu) -> dense M (softmax).  With biases
this stack has ``(2M + 1)(M + N) + 2M`` trainable parameters.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .channel import AwgnChannel, ChannelDataset, awgn_corrupt, snr_to_n0
from .constellation import NoiseLevel
from .core import Constellation, DivergenceError, PhylabError, Rng, SymbolSet, as_rng, write_json
from .nn import (
    DenseLayer,
    Network,
    PowerNormLayer,
    adam_step,
    backward,
    backward_from,
    count_params,
    forward,
    grad_norm,
    loss_value,
    sgd_step,
)

log = logging.getLogger(__name__)

DEFAULT_EPOCHS = 20_000
DEFAULT_SNR_DB = 7.0
DEFAULT_LR = 1e-2
DEFAULT_LR_FINAL = 1e-4


def ae_param_count(M: int, N: int) -> int:
    """Closed-form parameter count of the M-M-N-M-M autoencoder."""
    return (2 * M + 1) * (M + N) + 2 * M


@dataclass
class AutoencoderPair:
    encoder: Network
    decoder: Network
    p_av: float
    snr_db: float = DEFAULT_SNR_DB

    @property
    def M(self) -> int:
        return self.encoder.n_in

    @property
    def N(self) -> int:
        return self.decoder.n_in

    @property
    def n0(self) -> float:
        return snr_to_n0(self.snr_db, self.p_av).n0

    def encode(self, s_onehot: np.ndarray) -> np.ndarray:
        return forward(self.encoder, s_onehot)[0]

    def decode(self, v: np.ndarray) -> np.ndarray:
        return forward(self.decoder, v)[0]

    def n_params(self) -> int:
        return count_params(self.encoder) + count_params(self.decoder)

    def to_dict(self) -> dict:
        enc, dec = self.encoder.to_dict(), self.decoder.to_dict()
        return {
            "layers": enc["layers"] + dec["layers"],
            "meta": {"M": self.M, "N": self.N, "p_av": self.p_av, "snr_db": self.snr_db,
                     "encoder_layers": len(enc["layers"]), "power_norm_after_encoder": True},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "AutoencoderPair":
        meta = d["meta"]
        k = meta["encoder_layers"]
        enc = Network.from_dict({"layers": d["layers"][:k]})
        enc.layers.append(PowerNormLayer(meta["p_av"]))
        dec = Network.from_dict({"layers": d["layers"][k:]})
        return cls(enc, dec, meta["p_av"], meta.get("snr_db", DEFAULT_SNR_DB))

    def save(self, path) -> None:
        write_json(path, self.to_dict())

    @classmethod
    def load(cls, path) -> "AutoencoderPair":
        return cls.from_dict(json.loads(Path(path).read_text()))


def build_autoencoder(M: int, N: int, p_av: float | None = None, rng: Rng | int | None = None,
                      snr_db: float = DEFAULT_SNR_DB) -> AutoencoderPair:
    """Freshly initialised pair.

    Initial weights that leave two symbols with identical encoder outputs
    (all-dead relu units) are redrawn from the same stream.
    """
    SymbolSet(M)
    p_av = 1.0 / M if p_av is None else p_av
    rng = as_rng(rng)
    for _ in range(100):
        first = DenseLayer.init(M, M, "relu", rng)
        hidden = np.maximum(first.W.T + first.b, 0.0)
        if len(np.unique(hidden.round(12), axis=0)) == M:
            break
    enc = Network([first, DenseLayer.init(M, N, "linear", rng), PowerNormLayer(p_av)])
    dec = Network([DenseLayer.init(N, M, "relu", rng), DenseLayer.init(M, M, "softmax", rng)])
    return AutoencoderPair(enc, dec, p_av, snr_db)


def train_autoencoder(
    M: int,
    N: int,
    snr_db: float = DEFAULT_SNR_DB,
    epochs: int = DEFAULT_EPOCHS,
    rng: Rng | int | None = None,
    p_av: float | None = None,
    lr: float = DEFAULT_LR,
    optimizer: str = "adam",
    log_every: int = 100,
    lr_final: float | None = DEFAULT_LR_FINAL,
) -> tuple[AutoencoderPair, list[tuple[int, float, float]]]:
    """Train encoder and decoder jointly on cross-entropy.

    Every epoch is one batch holding each of the M one-hot symbols once.
    With ``lr_final`` the step size decays geometrically from ``lr`` to
    ``lr_final`` over the run.  Returns the trained pair and a log of
    ``(epoch, loss, grad_norm)`` rows.
    """
    if epochs < 1:
        raise PhylabError("epochs must be >= 1")
    rng = as_rng(rng)
    pair = build_autoencoder(M, N, p_av, rng.stream("init"), snr_db)
    ch = AwgnChannel(snr_to_n0(snr_db, pair.p_av), N)
    noise_rng = rng.stream("channel")
    S = np.eye(M)
    enc_state = dec_state = None
    history = []
    for epoch in range(1, epochs + 1):
        z = pair.encode(S)
        v = awgn_corrupt(z, ch, noise_rng)
        dec_grads, loss, dv = backward(pair.decoder, v, S, "cross_entropy", return_input_grad=True)
        if not math.isfinite(loss):
            raise DivergenceError(f"autoencoder loss became {loss} at epoch {epoch}")
        enc_grads, _ = backward_from(pair.encoder, S, dv)
        step = lr if lr_final is None else lr * (lr_final / lr) ** ((epoch - 1) / max(epochs - 1, 1))
        if optimizer == "adam":
            _, enc_state = adam_step(pair.encoder, enc_grads, step, enc_state)
            _, dec_state = adam_step(pair.decoder, dec_grads, step, dec_state)
        else:
            sgd_step(pair.encoder, enc_grads, step)
            sgd_step(pair.decoder, dec_grads, step)
        if epoch % log_every == 0 or epoch == epochs:
            history.append((epoch, loss, grad_norm(enc_grads + dec_grads)))
    return pair, history


def extract_constellation(pair: AutoencoderPair) -> Constellation:
    """Encoder outputs for all M symbols, as one power-normalised batch."""
    return Constellation(pair.encode(np.eye(pair.M)), pair.p_av)


# --------------------------------------------------------------------------
# Symbol error rate
# --------------------------------------------------------------------------


def _ci95(pe: float, n: int) -> float:
    return 1.96 * math.sqrt(max(pe * (1.0 - pe), 0.0) / n)


def _mc(c: Constellation, noise: NoiseLevel, trials: int, rng: Rng, decide, chunk=100_000):
    if trials < 1:
        raise PhylabError("trials must be >= 1")
    ch = AwgnChannel(noise, c.N)
    errors = 0
    for k, start in enumerate(range(0, trials, chunk)):
        n = min(chunk, trials - start)
        sub = rng.stream(f"shard-{k}")
        s = sub.integers(0, c.M, size=n)
        y = awgn_corrupt(c.points[s], ch, sub.stream("noise"))
        errors += int(np.count_nonzero(decide(y) != s))
    pe = errors / trials
    return pe, _ci95(pe, trials)


def min_distance_decide(points: np.ndarray):
    sq = np.sum(points**2, axis=1)

    def decide(y):
        return np.argmin(sq[None, :] - 2.0 * y @ points.T, axis=1)

    return decide


def evaluate_ser(c: Constellation, snr_db: float | None = None, trials: int = 100_000,
                 rng: Rng | int | None = None, noise: NoiseLevel | None = None) -> tuple[float, float]:
    """Monte-Carlo SER under minimum-distance decisions: ``(pe_hat, ci95 half-width)``.

    The noise level is ``noise`` if given, else derived from ``snr_db`` and ``c.p_av``.
    """
    noise = snr_to_n0(snr_db, c.p_av) if noise is None else noise
    return _mc(c, noise, trials, as_rng(rng), min_distance_decide(c.points))


def decode_with_network(pair: AutoencoderPair, c: Constellation | None = None, snr_db: float | None = None,
                        trials: int = 100_000, rng: Rng | int | None = None,
                        noise: NoiseLevel | None = None) -> tuple[float, float]:
    """Same Monte-Carlo as :func:`evaluate_ser` but decisions by decoder argmax."""
    c = extract_constellation(pair) if c is None else c
    snr_db = pair.snr_db if snr_db is None else snr_db
    noise = snr_to_n0(snr_db, c.p_av) if noise is None else noise
    return _mc(c, noise, trials, as_rng(rng), lambda y: np.argmax(pair.decode(y), axis=1))


def q_function(x):
    from scipy.special import erfc

    return 0.5 * erfc(np.asarray(x) / math.sqrt(2.0))


# --------------------------------------------------------------------------
# Empirical vs held-out risk
# --------------------------------------------------------------------------


@dataclass
class RiskReport:
    empirical_risk: float
    heldout_risk: float

    @property
    def gap(self) -> float:
        return self.heldout_risk - self.empirical_risk

    def to_dict(self) -> dict:
        return {"empirical_risk": self.empirical_risk, "heldout_risk": self.heldout_risk, "gap": self.gap}


def _as_xy(data):
    if isinstance(data, ChannelDataset):
        return data.v, data.z
    x, y = data
    return np.asarray(x), np.asarray(y)


def risk_gap(model, train_set, heldout_set, loss_kind: str = "mse") -> RiskReport:
    """Loss averaged over the training set and over a held-out set.

    ``model`` is a :class:`Network` (e.g. the channel estimator) or an
    :class:`AutoencoderPair`, in which case its decoder is scored on
    ``(received signals, symbol labels)``.  Sets are ``(x, y)`` tuples or
    :class:`ChannelDataset`.
    """
    predict = model.decode if isinstance(model, AutoencoderPair) else (lambda x: forward(model, x)[0])
    xt, yt = _as_xy(train_set)
    xh, yh = _as_xy(heldout_set)
    if len(xt) == 0 or len(xh) == 0:
        raise PhylabError("risk sets must be non-empty")
    return RiskReport(loss_value(predict(xt), yt, loss_kind), loss_value(predict(xh), yh, loss_kind))


def received_samples(pair: AutoencoderPair, B: int, rng: Rng | int | None = None,
                     snr_db: float | None = None) -> tuple[np.ndarray, np.ndarray]:
    """B uniform symbols sent through encoder and channel: ``(v, labels)``."""
    rng = as_rng(rng)
    snr_db = pair.snr_db if snr_db is None else snr_db
    c = extract_constellation(pair)
    s = rng.integers(0, pair.M, size=B)
    ch = AwgnChannel(snr_to_n0(snr_db, pair.p_av), pair.N)
    return awgn_corrupt(c.points[s], ch, rng.stream("noise")), s

