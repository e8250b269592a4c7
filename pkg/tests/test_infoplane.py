import csv
import io

import numpy as np
import pytest

from phylab.channel import gen_channel_dataset
from phylab.core import DimensionMismatchError, PhylabError, Rng
from phylab.infoplane import (
    InfoRecord,
    LayerTag,
    build_estimator,
    emit_planes,
    estimator_widths,
    layer_tags,
    measure_planes,
    mirrored_pairs,
    table_to_csv,
    train_with_capture,
    write_planes,
)
from phylab.nn import DenseLayer, Network, build_network, count_params, forward
from phylab.renyi import mutual_information, renyi_entropy, sample_gram


@pytest.fixture(scope="module")
def small_run():
    ds = gen_channel_dataset(600, 64, snr_db=20.0, rng=Rng(0))
    net = build_estimator(64, Rng(1))
    return train_with_capture(net, ds, iters=50, checkpoint_every=10, rng=Rng(2))


def test_estimator_topology():
    net = build_estimator(64, 0)
    assert estimator_widths(64) == [128, 64, 32, 16, 8, 16, 32, 64, 128]
    assert len(net.dense) == 8
    assert net.n_in == 128 and net.n_out == 128
    assert all(l.activation == "linear" for l in net.dense)


def test_estimator_capture_and_params():
    net = build_estimator(64, 0)
    out, cap = forward(net, np.zeros((3, 128)))
    assert len(cap) == 8
    assert [c.shape[1] for c in cap] == [64, 32, 16, 8, 16, 32, 64, 128]
    widths = [128, 64, 32, 16, 8, 16, 32, 64, 128]
    by_hand = (128 * 64 + 64) + (64 * 32 + 32) + (32 * 16 + 16) + (16 * 8 + 8) \
        + (8 * 16 + 16) + (16 * 32 + 32) + (32 * 64 + 64) + (64 * 128 + 128)
    assert count_params(net) == sum(a * b + b for a, b in zip(widths[:-1], widths[1:])) == by_hand == 22_120


def test_estimator_invalid_topology():
    with pytest.raises(PhylabError):
        estimator_widths(12)
    with pytest.raises(PhylabError):
        estimator_widths(4)


def test_mirrored_pairs_and_tags():
    net = build_estimator(64, 0)
    assert mirrored_pairs(net) == [(0, 6), (1, 5), (2, 4), (3, 3)]
    tags = layer_tags(net)
    assert [t.role for t in tags] == ["V", "t", "t", "t", "u", "t'", "t'", "t'", "V'"]
    assert [t.index for t in tags[1:-1]] == [1, 2, 3, 4, 3, 2, 1]
    with pytest.raises(PhylabError):
        LayerTag("x", 0, 1)


def test_mirrored_pairs_rejects_asymmetric():
    with pytest.raises(PhylabError):
        mirrored_pairs(build_network([4, 3, 2, 4], "linear", rng=0))
    with pytest.raises(DimensionMismatchError):
        mirrored_pairs(build_network([4, 3, 2, 5, 4], "linear", rng=0))


def test_record_count(small_run):
    _, records = small_run
    assert len(records) == (50 // 10) * 4
    assert sorted({r.iteration for r in records}) == [10, 20, 30, 40, 50]


def test_records_are_nonnegative_and_bounded(small_run):
    _, records = small_run
    for r in records:
        for v in (r.i_t_v, r.i_t_vout, r.i_tm_vout, r.i_tm_v):
            assert -1e-6 <= v <= np.log2(100) + 1e-9


def test_training_reduces_mse(small_run):
    _, records = small_run
    mse = {r.iteration: r.mse for r in records}
    assert mse[50] < mse[10]


def test_width_mismatch():
    ds = gen_channel_dataset(200, 32, rng=0)
    with pytest.raises(DimensionMismatchError):
        train_with_capture(build_estimator(64, 0), ds, iters=1)


def test_unknown_optimizer_and_tiny_dataset():
    ds = gen_channel_dataset(100, 64, rng=0)
    with pytest.raises(PhylabError):
        train_with_capture(build_estimator(64, 0), ds, iters=1, optimizer="rmsprop")
    with pytest.raises(PhylabError):
        train_with_capture(build_estimator(64, 0), ds, iters=1)


def test_training_is_deterministic():
    ds = gen_channel_dataset(300, 64, rng=Rng(5))
    a = train_with_capture(build_estimator(64, Rng(1)), ds, iters=20, rng=Rng(3))[1]
    b = train_with_capture(build_estimator(64, Rng(1)), ds, iters=20, rng=Rng(3))[1]
    assert a == b


def test_identity_network_information():
    # every layer of a copying network equals V, so all four measures equal I(V;V)
    layers = [DenseLayer(np.eye(4), np.zeros(4), capture=True) for _ in range(4)]
    v = np.random.default_rng(0).normal(size=(40, 4))
    recs = measure_planes(Network(layers), v)
    g = sample_gram(v)
    i_vv = mutual_information(g, g)
    assert 0 < i_vv <= renyi_entropy(g) + 1e-9
    assert len(recs) == 2
    for r in recs:
        for val in (r.i_t_v, r.i_t_vout, r.i_tm_vout, r.i_tm_v):
            assert val == pytest.approx(i_vv, abs=1e-9)


def fake_records(n_ckpt=5, n_pairs=3):
    rng = np.random.default_rng(0)
    return [InfoRecord(10 * (c + 1), k + 1, *rng.uniform(0, 5, 4), float(rng.uniform()))
            for c in range(n_ckpt) for k in range(n_pairs)]


def test_emit_planes_row_counts():
    planes = emit_planes(fake_records())
    assert [len(planes[k]) for k in ("ip1", "ip2", "ip3")] == [15, 15, 15]
    assert len(planes["loss"]) == 5
    with pytest.raises(PhylabError):
        emit_planes([])


def test_plane_columns_and_csv(tmp_path, small_run):
    _, records = small_run
    paths = write_planes(records, tmp_path)
    assert sorted(p.name for p in paths) == ["ip1.csv", "ip2.csv", "ip3.csv", "loss.csv"]
    text = (tmp_path / "ip2.csv").read_text()
    assert text.endswith("\n") and "\r" not in text
    rows = list(csv.DictReader(io.StringIO(text)))
    assert list(rows[0]) == ["iter", "layer", "I_T_V", "I_Tm_Vout"]
    assert all(float(r["I_Tm_Vout"]) >= -1e-6 for r in rows)
    assert table_to_csv("loss", [(10, 0.5)]) == "iter,mse\n10,0.5\n"
