"""Reproduction suites, run manifests and output validation.

Each suite writes CSV/JSON artifacts plus ``manifest.json`` into one output
directory.  All randomness derives from a single seed through labelled
streams, so a rerun with the same manifest produces byte-identical CSVs.

Stream labels: ``fig3/opt-M{M}``, ``fig3/ae-M{M}-snr{snr}-run{r}``,
``fig4/snr{snr}``, ``fig5/dataset``, ``fig5/init``, ``fig5/train``.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import math
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import autoencoder as ae
from .channel import ChannelDataset, gen_channel_dataset
from .constellation import (
    NoiseLevel,
    compare_constellations,
    default_n0,
    optimize_constellation,
    pe_asymptotic,
)
from .core import Constellation, ExperimentConfig, PhylabError, Rng, average_power, min_distance, write_json
from .infoplane import build_estimator, emit_planes, table_to_csv, train_with_capture
from .renyi import DEFAULT_ALPHA, conditional_entropy

log = logging.getLogger(__name__)

SUITES = ("fig3", "fig4", "fig5", "params")

DEFAULTS = {
    "fig3": {"M_list": [8, 16], "N": 2, "steps": 1000, "eta": 2e-4, "restarts": 20,
             "epochs": 20_000, "snr_list": [4.0, 7.0, 10.0], "ae_runs": 2,
             "gap_tol": 0.05, "pe_ratio_tol": 1.15, "gap_gate_M": [8]},
    "fig4": {"B_list": list(range(100, 1001, 100)), "snr_list": [0.0, 10.0, 20.0], "n_sub": 64,
             "l_taps": 4, "alpha": DEFAULT_ALPHA, "violation_tol": 0.05},
    "fig5": {"iters": 500, "checkpoint_every": 10, "alpha": DEFAULT_ALPHA, "batch": 100, "lr": 0.001,
             "optimizer": "adam", "B": 10_000, "snr_db": 20.0, "n_sub": 64, "l_taps": 4},
    "params": {"M_list": [4, 8, 16], "N_list": [2, 3]},
}


class MissingFilesError(PhylabError):
    pass


def resolve_config(suite: str, config: ExperimentConfig | None = None, overrides: dict | None = None) -> dict:
    if suite not in SUITES:
        raise PhylabError(f"unknown suite {suite!r}; choose from {', '.join(SUITES)}")
    cfg = dict(DEFAULTS[suite])
    if config is not None:
        cfg.update(config.params.get(suite, {}))
    cfg.update({k: v for k, v in (overrides or {}).items() if v is not None})
    return cfg


# --------------------------------------------------------------------------
# Manifest
# --------------------------------------------------------------------------


@dataclass
class RunManifest:
    command: list[str]
    suite: str
    config: dict
    seed: int
    input_hash: str
    outputs: list[str] = field(default_factory=list)
    duration_s: float = 0.0

    def write(self, out_dir) -> Path:
        path = Path(out_dir) / "manifest.json"
        write_json(path, asdict(self))
        return path

    @classmethod
    def load(cls, out_dir) -> "RunManifest":
        return cls(**json.loads((Path(out_dir) / "manifest.json").read_text()))


def content_hash(config: dict, seed: int, input_files=()) -> str:
    h = hashlib.sha256()
    h.update(json.dumps({"config": config, "seed": seed}, sort_keys=True).encode())
    for p in input_files:
        h.update(Path(p).read_bytes())
    return h.hexdigest()


def _fmt(x):
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return x


def write_csv(path, header, rows) -> Path:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([_fmt(x) for x in row])
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(buf.getvalue(), encoding="utf-8")
    return path


def read_csv(path) -> list[dict]:
    path = Path(path)
    if not path.exists():
        raise MissingFilesError(f"missing file {path}")
    text = path.read_text(encoding="utf-8")
    if not text.endswith("\n"):
        raise PhylabError(f"{path.name}: truncated (no trailing newline)")
    rows = list(csv.DictReader(io.StringIO(text)))
    for i, row in enumerate(rows):
        if None in row.values() or None in row:
            raise PhylabError(f"{path.name}: malformed row {i + 2}")
    return rows


def _map(fn, items, jobs: int):
    if jobs > 1 and len(items) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(pool.map(fn, items))
    return [fn(it) for it in items]


# --------------------------------------------------------------------------
# fig3: optimum vs learned constellations
# --------------------------------------------------------------------------


def _train_ae_job(args):
    M, N, snr, epochs, seed, label = args
    pair, history = ae.train_autoencoder(M, N, snr, epochs, Rng(seed).stream(label))
    return ae.extract_constellation(pair), history


def fig3_compare(learned: Constellation, optimum: Constellation, n0: float, seed: int = 0) -> dict:
    noise = NoiseLevel(n0)
    rep = compare_constellations(learned, optimum, rng=seed)
    return {"spectrum_gap": rep.spectrum_gap,
            "gap_rel": rep.spectrum_gap / math.sqrt(optimum.p_av),
            "pe_ratio": pe_asymptotic(learned, noise) / pe_asymptotic(optimum, noise),
            "residual": rep.residual,
            "min_dist": min_distance(learned)}


def run_fig3(cfg: dict, seed: int, out_dir: Path, jobs: int = 1) -> list[Path]:
    rng = Rng(seed)
    N = int(cfg["N"])
    outputs = []
    summary = []
    report = {}
    for M in cfg["M_list"]:
        M = int(M)
        p_av = 1.0 / M
        n0 = default_n0(p_av)
        best, runs = optimize_constellation(M, N, p_av, n0, cfg["eta"], int(cfg["steps"]),
                                            int(cfg["restarts"]), rng.stream(f"fig3/opt-M{M}"))
        best_idx = max(range(len(runs)), key=lambda i: min_distance(runs[i][0]))
        trace = runs[best_idx][1]
        outputs.append(write_csv(out_dir / f"fig3_trace_M{M}.csv", ("step", "pe", "min_dist"), trace.rows()))
        best.save(out_dir / f"fig3_opt_M{M}.json")
        outputs.append(out_dir / f"fig3_opt_M{M}.json")

        jobs_args = [(M, N, float(snr), int(cfg["epochs"]), seed, f"fig3/ae-M{M}-snr{snr:g}-run{r}")
                     for snr in cfg["snr_list"] for r in range(int(cfg["ae_runs"]))]
        learned = _map(_train_ae_job, jobs_args, jobs)
        rows = []
        for (_, _, snr, _, _, label), (c, _) in zip(jobs_args, learned):
            cmp = fig3_compare(c, best, n0, seed)
            rows.append((M, N, snr, label, cmp["gap_rel"], cmp["pe_ratio"], cmp["residual"],
                         cmp["min_dist"], min_distance(best)))
        pick = min(range(len(rows)), key=lambda i: (rows[i][4], rows[i][5]))
        learned[pick][0].save(out_dir / f"fig3_ae_M{M}.json")
        outputs.append(out_dir / f"fig3_ae_M{M}.json")
        summary.extend(rows)
        gap_rel, pe_ratio = rows[pick][4], min(r[5] for r in rows)
        gates = {"pe_ratio": pe_ratio <= cfg["pe_ratio_tol"]}
        if M in cfg["gap_gate_M"]:
            gates["spectrum_gap"] = gap_rel <= cfg["gap_tol"]
        report[str(M)] = {"n0": n0, "p_av": p_av, "best_match": rows[pick][3], "gap_rel": gap_rel,
                          "pe_ratio_best_match": rows[pick][5], "pe_ratio_min": pe_ratio,
                          "opt_min_dist": min_distance(best), "gates": gates}
    outputs.append(write_csv(out_dir / "fig3_summary.csv",
                             ("M", "N", "snr_db", "run", "gap_rel", "pe_ratio", "residual",
                              "ae_min_dist", "opt_min_dist"), summary))
    write_json(out_dir / "fig3_report.json", report)
    outputs.append(out_dir / "fig3_report.json")
    return outputs


# --------------------------------------------------------------------------
# fig4: conditional entropy against training-set size
# --------------------------------------------------------------------------


def _fig4_curve(args):
    snr, B_list, n_sub, l_taps, alpha, seed = args
    ds = gen_channel_dataset(max(B_list), n_sub, l_taps, snr, Rng(seed).stream(f"fig4/snr{snr:g}"))
    return [(B, snr, n_sub, conditional_entropy(ds.z[:B], ds.v[:B], alpha)) for B in B_list]


def run_fig4(cfg: dict, seed: int, out_dir: Path, jobs: int = 1, dataset: ChannelDataset | None = None):
    B_list = [int(b) for b in cfg["B_list"]]
    if dataset is not None:
        if max(B_list) > len(dataset):
            raise PhylabError(f"dataset has {len(dataset)} samples, B-list needs {max(B_list)}")
        rows = [(B, dataset.config.get("snr_db", float("nan")), dataset.config.get("n_sub", 0),
                 conditional_entropy(dataset.z[:B], dataset.v[:B], cfg["alpha"])) for B in B_list]
    else:
        args = [(float(s), B_list, int(cfg["n_sub"]), int(cfg["l_taps"]), cfg["alpha"], seed)
                for s in cfg["snr_list"]]
        rows = [r for curve in _map(_fig4_curve, args, jobs) for r in curve]
    return [write_csv(out_dir / "fig4.csv", ("B", "snr_db", "n_sub", "S_cond_bits"), rows)]


def fig4_gates(rows: list[dict], tol: float = 0.05) -> dict:
    curves: dict[float, list[tuple[int, float]]] = {}
    for r in rows:
        curves.setdefault(float(r["snr_db"]), []).append((int(r["B"]), float(r["S_cond_bits"])))
    out = {}
    for snr, pts in curves.items():
        vals = [v for _, v in sorted(pts)]
        worst = max((b - a for a, b in zip(vals, vals[1:])), default=0.0)
        out[f"monotone_snr{snr:g}"] = (worst <= tol, worst)
    if 0.0 in curves and 20.0 in curves:
        last = lambda s: sorted(curves[s])[-1][1]
        out["ordering_20dB_below_0dB"] = (last(20.0) < last(0.0), last(20.0) - last(0.0))
    return out


# --------------------------------------------------------------------------
# fig5: information planes
# --------------------------------------------------------------------------


def run_fig5(cfg: dict, seed: int, out_dir: Path, dataset: ChannelDataset | None = None) -> list[Path]:
    rng = Rng(seed)
    if dataset is None:
        dataset = gen_channel_dataset(int(cfg["B"]), int(cfg["n_sub"]), int(cfg["l_taps"]),
                                      float(cfg["snr_db"]), rng.stream("fig5/dataset"))
    net = build_estimator(dataset.config.get("n_sub", cfg["n_sub"]), rng.stream("fig5/init"))
    _, records = train_with_capture(net, dataset, int(cfg["batch"]), float(cfg["lr"]), int(cfg["iters"]),
                                    int(cfg["checkpoint_every"]), float(cfg["alpha"]),
                                    rng.stream("fig5/train"), cfg["optimizer"])
    out = []
    for name, rows in emit_planes(records).items():
        p = out_dir / f"{name}.csv"
        p.parent.mkdir(parents=True, exist_ok=True)
        p.write_text(table_to_csv(name, rows), encoding="utf-8")
        out.append(p)
    return out


def fig5_gates(out_dir) -> dict:
    ip1, ip2 = read_csv(Path(out_dir) / "ip1.csv"), read_csv(Path(out_dir) / "ip2.csv")
    ip3, loss = read_csv(Path(out_dir) / "ip3.csv"), read_csv(Path(out_dir) / "loss.csv")
    last = max(int(r["iter"]) for r in ip1)
    fin1 = [r for r in ip1 if int(r["iter"]) == last]
    fin2 = [r for r in ip2 if int(r["iter"]) == last]
    gap_a = max(abs(float(r["I_T_Vout"]) - float(r["I_T_V"])) for r in fin1)
    excess_b = max(float(r["I_Tm_Vout"]) - float(r["I_T_V"]) for r in fin2)
    mse = {int(r["iter"]): float(r["mse"]) for r in loss}
    out = {
        "mi_nonnegative": (min(min(float(v) for k, v in r.items() if k.startswith("I_"))
                               for r in ip1 + ip2 + ip3) >= -1e-6, None),
        "a_final_IoutT_close_to_IVT": (gap_a <= 0.2, gap_a),
        "b_ITmVout_below_ITV": (excess_b <= 0.1, excess_b),
    }
    if 200 in mse and 500 in mse:
        rel = abs(mse[200] - mse[500]) / mse[500]
        out["c_mse200_within_10pct_of_mse500"] = (rel <= 0.10, rel)
    return out


# --------------------------------------------------------------------------
# params
# --------------------------------------------------------------------------


def run_params(cfg: dict, out_dir: Path) -> list[Path]:
    rows = []
    for M in cfg["M_list"]:
        for N in cfg["N_list"]:
            measured = ae.build_autoencoder(int(M), int(N), rng=0).n_params()
            formula = ae.ae_param_count(int(M), int(N))
            rows.append((M, N, formula, measured, formula == measured))
    return [write_csv(out_dir / "params.csv", ("M", "N", "formula", "measured", "equal"), rows)]


# --------------------------------------------------------------------------
# Entry points
# --------------------------------------------------------------------------


def run_suite(name: str, config: ExperimentConfig | None = None, out_dir=".", overrides: dict | None = None,
              jobs: int = 1, dataset_path=None, command: list[str] | None = None) -> RunManifest:
    """Run one reproduction suite and write its manifest after success."""
    config = config or ExperimentConfig()
    cfg = resolve_config(name, config, overrides)
    seed = int(config.seed)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    dataset = ChannelDataset.load(dataset_path) if dataset_path else None
    t0 = time.perf_counter()
    if name == "fig3":
        outputs = run_fig3(cfg, seed, out_dir, jobs)
    elif name == "fig4":
        outputs = run_fig4(cfg, seed, out_dir, jobs, dataset)
    elif name == "fig5":
        outputs = run_fig5(cfg, seed, out_dir, dataset)
    else:
        outputs = run_params(cfg, out_dir)
    manifest = RunManifest(
        command=list(command if command is not None else sys.argv),
        suite=name, config=cfg, seed=seed,
        input_hash=content_hash(cfg, seed, [dataset_path] if dataset_path else []),
        outputs=[Path(p).name for p in outputs],
        duration_s=time.perf_counter() - t0,
    )
    manifest.write(out_dir)
    return manifest


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str = ""


def validate_outputs(out_dir) -> list[CheckResult]:
    """Check machine-checkable invariants and reproduction gates of a suite run."""
    out_dir = Path(out_dir)
    if not out_dir.is_dir() or not (out_dir / "manifest.json").exists():
        raise MissingFilesError(f"{out_dir}: no manifest.json (not a suite output directory)")
    man = RunManifest.load(out_dir)
    missing = [f for f in man.outputs if not (out_dir / f).exists()]
    if missing:
        raise MissingFilesError(f"{out_dir}: missing outputs {', '.join(missing)}")
    results: list[CheckResult] = []

    def check(name, fn):
        try:
            ok, detail = fn()
            results.append(CheckResult(name, bool(ok), "" if detail is None else str(detail)))
        except (PhylabError, ValueError, KeyError) as exc:
            results.append(CheckResult(name, False, str(exc)))

    for f in man.outputs:
        if f.endswith(".csv"):
            check(f"readable:{f}", lambda f=f: (len(read_csv(out_dir / f)) > 0, None))

    cfg = man.config
    if man.suite == "fig3":
        for f in man.outputs:
            if f.startswith(("fig3_opt_", "fig3_ae_")):
                def power(f=f):
                    c = Constellation.load(out_dir / f)
                    err = abs(average_power(c) - c.p_av)
                    return err <= 1e-9, err
                check(f"power_constraint:{f}", power)
        report = json.loads((out_dir / "fig3_report.json").read_text())
        for M, rec in report.items():
            for gate, ok in rec["gates"].items():
                results.append(CheckResult(f"gate:M{M}:{gate}", bool(ok),
                                           f"gap_rel={rec['gap_rel']:.4f} pe_ratio={rec['pe_ratio_min']:.4f}"))
    elif man.suite == "fig4":
        def rows_ok():
            rows = read_csv(out_dir / "fig4.csv")
            want = len(cfg["B_list"]) * len(cfg["snr_list"])
            return len(rows) == want, f"{len(rows)} rows, expected {want}"
        check("fig4_row_count", rows_ok)
        try:
            for name, (ok, val) in fig4_gates(read_csv(out_dir / "fig4.csv"), cfg["violation_tol"]).items():
                results.append(CheckResult(f"gate:{name}", bool(ok), f"{val:.4f}"))
        except PhylabError as exc:
            results.append(CheckResult("gate:fig4", False, str(exc)))
    elif man.suite == "fig5":
        try:
            for name, (ok, val) in fig5_gates(out_dir).items():
                results.append(CheckResult(f"gate:{name}" if name != "mi_nonnegative" else name, bool(ok),
                                           "" if val is None else f"{val:.4f}"))
        except PhylabError as exc:
            results.append(CheckResult("gate:fig5", False, str(exc)))
    elif man.suite == "params":
        check("params_equal", lambda: (all(r["equal"] == "true" for r in read_csv(out_dir / "params.csv")),
                                       None))
    return results
