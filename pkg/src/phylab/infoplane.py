"""Layer-wise information planes for a symmetric dense channel estimator.

Hidden layers are paired by mirror position: the i-th layer counted from
the input (``T_i``) with the i-th layer counted from the output (``T'_i``).
The bottleneck is its own mirror.  At every checkpoint four mutual
informations are measured on a fixed evaluation batch:
``I(T_i;V)``, ``I(T_i;V')``, ``I(T'_i;V')`` and ``I(T'_i;V)``, with ``V`` the
network input and ``V'`` its output.
"""

from __future__ import annotations

import csv
import io
import logging
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .channel import ChannelDataset
from .core import DimensionMismatchError, PhylabError, Rng, as_rng
from .nn import Network, adam_step, backward, build_network, forward, mse_loss, sgd_step
from .renyi import DEFAULT_ALPHA, KernelSpec, check_mi, mutual_information, sample_gram

log = logging.getLogger(__name__)

ROLES = ("V", "t", "u", "t'", "V'")


@dataclass(frozen=True)
class LayerTag:
    role: str
    index: int
    width: int

    def __post_init__(self):
        if self.role not in ROLES:
            raise PhylabError(f"unknown layer role {self.role!r}")


@dataclass
class InfoRecord:
    iteration: int
    layer: int
    i_t_v: float
    i_t_vout: float
    i_tm_vout: float
    i_tm_v: float
    mse: float


def estimator_widths(n_sub: int = 64, bottleneck: int = 8) -> list[int]:
    """``2n - n - ... - bottleneck - ... - n - 2n`` halving widths."""
    w = 2 * n_sub
    if w <= bottleneck or w % bottleneck or (w // bottleneck) & (w // bottleneck - 1):
        raise PhylabError(f"cannot halve {w} down to a width-{bottleneck} bottleneck")
    down = [w]
    while down[-1] > bottleneck:
        down.append(down[-1] // 2)
    return down + down[-2::-1]


def build_estimator(n_sub: int = 64, rng: Rng | int | None = None, bottleneck: int = 8) -> Network:
    """Linear symmetric estimator with capture on every layer after the input."""
    return build_network(estimator_widths(n_sub, bottleneck), "linear", as_rng(rng), capture=True)


def layer_tags(net: Network) -> list[LayerTag]:
    dense = net.dense
    tags = [LayerTag("V", 0, net.n_in)]
    hidden = len(dense) - 1
    S = hidden // 2 + 1  # bottleneck position, 1-based
    for i, l in enumerate(dense[:-1], start=1):
        if i < S:
            tags.append(LayerTag("t", i, l.n_out))
        elif i == S:
            tags.append(LayerTag("u", S, l.n_out))
        else:
            tags.append(LayerTag("t'", hidden + 1 - i, l.n_out))
    tags.append(LayerTag("V'", 0, net.n_out))
    return tags


def mirrored_pairs(net: Network) -> list[tuple[int, int]]:
    """(encoder-side, decoder-side) indices into the hidden activations.

    The bottleneck appears last, paired with itself.
    """
    hidden = len(net.dense) - 1
    if hidden < 1 or hidden % 2 == 0:
        raise PhylabError("symmetric estimator needs an odd number of hidden layers")
    widths = [l.n_out for l in net.dense[:-1]]
    pairs = []
    for i in range(hidden // 2 + 1):
        j = hidden - 1 - i
        if widths[i] != widths[j]:
            raise DimensionMismatchError(f"mirrored layers {i + 1} and {j + 1} differ in width")
        pairs.append((i, j))
    return pairs


def measure_planes(net: Network, v_eval: np.ndarray, alpha: float = DEFAULT_ALPHA,
                   kernel: KernelSpec | None = None, iteration: int = 0,
                   z_eval: np.ndarray | None = None) -> list[InfoRecord]:
    """Mutual informations for every mirrored pair on one evaluation batch."""
    out, captured = forward(net, v_eval)
    hidden = captured[:-1]
    g_v = sample_gram(v_eval, kernel)
    g_out = sample_gram(out, kernel)
    grams = [sample_gram(h, kernel) for h in hidden]
    mse = mse_loss(out, z_eval) if z_eval is not None else float("nan")
    records = []
    for k, (i, j) in enumerate(mirrored_pairs(net), start=1):
        t, tm = grams[i], grams[j]
        vals = [mutual_information(t, g_v, alpha), mutual_information(t, g_out, alpha),
                mutual_information(tm, g_out, alpha), mutual_information(tm, g_v, alpha)]
        for val in vals:
            check_mi(val, f"(iteration {iteration}, pair {k})")
        records.append(InfoRecord(iteration, k, *vals, mse))
    return records


def train_with_capture(
    net: Network,
    dataset: ChannelDataset,
    batch_size: int = 100,
    lr: float = 0.001,
    iters: int = 500,
    checkpoint_every: int = 10,
    alpha: float = DEFAULT_ALPHA,
    rng: Rng | int | None = None,
    optimizer: str = "adam",
    heldout: ChannelDataset | None = None,
    eval_size: int = 100,
    kernel: KernelSpec | None = None,
) -> tuple[Network, list[InfoRecord]]:
    """MSE training from v to z with information-plane checkpoints.

    The evaluation batch is the first ``eval_size`` samples of ``heldout``;
    without ``heldout`` the last ``eval_size`` samples of ``dataset`` are held
    out of training and used instead.
    """
    if dataset.v.shape[1] != net.n_in or dataset.z.shape[1] != net.n_out:
        raise DimensionMismatchError(
            f"dataset widths {dataset.v.shape[1]}/{dataset.z.shape[1]} do not match network "
            f"{net.n_in}/{net.n_out}")
    if optimizer not in ("adam", "sgd"):
        raise PhylabError(f"unknown optimizer {optimizer!r}")
    if heldout is None:
        if len(dataset) <= eval_size:
            raise PhylabError("dataset too small to hold out an evaluation batch")
        heldout = dataset.subset(len(dataset) - eval_size, len(dataset))
        dataset = dataset.subset(0, len(dataset) - eval_size)
    v_eval, z_eval = heldout.v[:eval_size], heldout.z[:eval_size]
    order_rng = as_rng(rng).stream("batches")

    n = len(dataset)
    perm, pos = order_rng.permutation(n), 0
    state = None
    records: list[InfoRecord] = []
    for it in range(1, iters + 1):
        if pos + batch_size > n:
            perm, pos = order_rng.permutation(n), 0
        idx = perm[pos:pos + batch_size]
        pos += batch_size
        grads, loss = backward(net, dataset.v[idx], dataset.z[idx], "mse")
        if not np.isfinite(loss):
            raise PhylabError(f"training diverged at iteration {it}")
        if optimizer == "adam":
            net, state = adam_step(net, grads, lr, state)
        else:
            sgd_step(net, grads, lr)
        if it % checkpoint_every == 0:
            records.extend(measure_planes(net, v_eval, alpha, kernel, it, z_eval))
    return net, records


# --------------------------------------------------------------------------
# Plane tables
# --------------------------------------------------------------------------

PLANE_COLUMNS = {
    "ip1": ("iter", "layer", "I_T_V", "I_T_Vout"),
    "ip2": ("iter", "layer", "I_T_V", "I_Tm_Vout"),
    "ip3": ("iter", "layer", "I_T_V", "I_Tm_V"),
    "loss": ("iter", "mse"),
}


def emit_planes(records: list[InfoRecord]) -> dict[str, list[tuple]]:
    """Rows of the three information planes and the loss curve."""
    if not records:
        raise PhylabError("no records to emit")
    ip1 = [(r.iteration, r.layer, r.i_t_v, r.i_t_vout) for r in records]
    ip2 = [(r.iteration, r.layer, r.i_t_v, r.i_tm_vout) for r in records]
    ip3 = [(r.iteration, r.layer, r.i_t_v, r.i_tm_v) for r in records]
    loss = []
    for r in records:
        if not loss or loss[-1][0] != r.iteration:
            loss.append((r.iteration, r.mse))
    return {"ip1": ip1, "ip2": ip2, "ip3": ip3, "loss": loss}


def table_to_csv(name: str, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(PLANE_COLUMNS[name])
    for row in rows:
        w.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in row])
    return buf.getvalue()


def write_planes(records: list[InfoRecord], out_dir) -> list[Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for name, rows in emit_planes(records).items():
        p = out_dir / f"{name}.csv"
        p.write_text(table_to_csv(name, rows), encoding="utf-8")
        paths.append(p)
    return paths


def records_as_dicts(records):
    return [asdict(r) for r in records]
