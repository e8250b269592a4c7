import csv
import io
import json

import pytest

from phylab.cli import main, parse_number_list
from phylab.core import ExperimentConfig, write_json
from phylab.suites import MissingFilesError, RunManifest, content_hash, run_suite, validate_outputs


def rows(path):
    return list(csv.DictReader(io.StringIO(path.read_text())))


def csv_bytes(d):
    return {p.name: p.read_bytes() for p in sorted(d.glob("*.csv"))}


SMALL_FIG3 = {"M_list": [4], "steps": 100, "restarts": 2, "epochs": 200, "snr_list": [7.0], "ae_runs": 1,
              "gap_gate_M": [4]}


def test_parse_number_list():
    assert parse_number_list("100:1000:100", int) == list(range(100, 1001, 100))
    assert parse_number_list("0,10,20") == [0.0, 10.0, 20.0]
    assert parse_number_list("100..1000", int) == list(range(100, 1001, 100))
    assert parse_number_list("0:1:0.25") == [0.0, 0.25, 0.5, 0.75, 1.0]
    for bad in ("5:1:1", "1:2", "1:5:0", "a,b"):
        with pytest.raises(Exception):
            parse_number_list(bad)


def test_suite_fig4_thirty_rows(tmp_path):
    assert main(["suite", "fig4", "--B-list", "100:1000:100", "--snr-list", "0,10,20",
                 "--out-dir", str(tmp_path)]) == 0
    table = rows(tmp_path / "fig4.csv")
    assert len(table) == 30
    assert list(table[0]) == ["B", "snr_db", "n_sub", "S_cond_bits"]
    assert {r["n_sub"] for r in table} == {"64"}
    man = json.loads((tmp_path / "manifest.json").read_text())
    assert man["outputs"] == ["fig4.csv"] and man["seed"] == 0 and man["suite"] == "fig4"
    assert man["command"][:3] == ["phylab", "suite", "fig4"]


def test_suite_params_table(tmp_path, capsys):
    assert main(["suite", "params", "--out-dir", str(tmp_path)]) == 0
    table = rows(tmp_path / "params.csv")
    assert {(r["M"], r["N"]) for r in table} == {(m, n) for m in ("4", "8", "16") for n in ("2", "3")}
    assert all(r["equal"] == "true" and r["formula"] == r["measured"] for r in table)
    assert main(["validate", str(tmp_path)]) == 0
    assert "FAIL" not in capsys.readouterr().out


@pytest.mark.parametrize("suite,over", [
    ("fig4", {"B_list": [50, 100], "snr_list": [0.0, 20.0]}),
    ("fig5", {"iters": 30, "B": 400}),
    ("params", {}),
    ("fig3", SMALL_FIG3),
])
def test_rerun_is_byte_identical(tmp_path, suite, over):
    cfg = ExperimentConfig(seed=4)
    run_suite(suite, cfg, tmp_path / "a", over, command=["x"])
    run_suite(suite, cfg, tmp_path / "b", over, command=["x"])
    a, b = csv_bytes(tmp_path / "a"), csv_bytes(tmp_path / "b")
    assert a and a == b
    ma, mb = RunManifest.load(tmp_path / "a"), RunManifest.load(tmp_path / "b")
    assert ma.input_hash == mb.input_hash and ma.outputs == mb.outputs


def test_jobs_do_not_change_results(tmp_path):
    over = {"B_list": [50, 100], "snr_list": [0.0, 10.0]}
    run_suite("fig4", ExperimentConfig(seed=1), tmp_path / "serial", over, jobs=1)
    run_suite("fig4", ExperimentConfig(seed=1), tmp_path / "par", over, jobs=2)
    assert csv_bytes(tmp_path / "serial") == csv_bytes(tmp_path / "par")


def test_seed_changes_results(tmp_path):
    over = {"B_list": [50], "snr_list": [10.0]}
    run_suite("fig4", ExperimentConfig(seed=1), tmp_path / "a", over)
    run_suite("fig4", ExperimentConfig(seed=2), tmp_path / "b", over)
    assert csv_bytes(tmp_path / "a") != csv_bytes(tmp_path / "b")


def test_config_file_feeds_suite(tmp_path):
    write_json(tmp_path / "cfg.json", {"seed": 9, "params": {"fig3": SMALL_FIG3}})
    assert main(["suite", "fig3", "--config", str(tmp_path / "cfg.json"), "--out-dir", str(tmp_path / "o")]) in (0, 1)
    man = RunManifest.load(tmp_path / "o")
    assert man.seed == 9 and man.config["M_list"] == [4] and man.config["eta"] == 2e-4
    summary = rows(tmp_path / "o" / "fig3_summary.csv")
    assert len(summary) == 1 and summary[0]["M"] == "4"


def test_fig3_invariants_hold_and_gates_are_reported(tmp_path):
    run_suite("fig3", ExperimentConfig(seed=0), tmp_path, SMALL_FIG3)
    results = validate_outputs(tmp_path)
    invariants = [r for r in results if not r.name.startswith("gate:")]
    gates = [r for r in results if r.name.startswith("gate:")]
    assert invariants and all(r.passed for r in invariants)
    assert {g.name for g in gates} == {"gate:M4:pe_ratio", "gate:M4:spectrum_gap"}
    assert sum(r.name.startswith("power_constraint:") for r in invariants) == 2


def test_fig5_outputs_validate(tmp_path):
    run_suite("fig5", ExperimentConfig(seed=0), tmp_path, {"iters": 20, "B": 300})
    names = {r.name: r for r in validate_outputs(tmp_path)}
    assert names["mi_nonnegative"].passed
    assert "gate:a_final_IoutT_close_to_IVT" in names and "gate:b_ITmVout_below_ITV" in names


def test_validate_reports_truncated_csv(tmp_path, capsys):
    run_suite("fig4", ExperimentConfig(), tmp_path, {"B_list": [50, 100], "snr_list": [0.0]})
    text = (tmp_path / "fig4.csv").read_text()
    (tmp_path / "fig4.csv").write_text(text[: len(text) // 2])
    failed = [r for r in validate_outputs(tmp_path) if not r.passed]
    assert any("fig4.csv" in r.name + r.detail for r in failed)
    assert main(["validate", str(tmp_path)]) == 1
    assert "fig4.csv" in capsys.readouterr().out


def test_validate_missing_files(tmp_path):
    with pytest.raises(MissingFilesError):
        validate_outputs(tmp_path)
    assert main(["validate", str(tmp_path)]) == 2
    run_suite("params", ExperimentConfig(), tmp_path / "p")
    (tmp_path / "p" / "params.csv").unlink()
    with pytest.raises(MissingFilesError, match="params.csv"):
        validate_outputs(tmp_path / "p")


def test_unknown_suite_and_missing_dataset(tmp_path):
    with pytest.raises(SystemExit) as exc:
        main(["suite", "fig9"])
    assert exc.value.code == 2
    assert main(["suite", "fig5", "--dataset", str(tmp_path / "nope.bin"), "--out-dir", str(tmp_path)]) == 2
    assert not (tmp_path / "manifest.json").exists()


def test_content_hash_stable():
    h = content_hash({"b": 1, "a": [1, 2]}, 3)
    assert h == content_hash({"a": [1, 2], "b": 1}, 3)
    assert h != content_hash({"a": [1, 2], "b": 1}, 4)
    assert len(h) == 64


def test_out_dir_env_fallback(tmp_path, monkeypatch):
    monkeypatch.setenv("PHYLAB_OUT_DIR", str(tmp_path / "env"))
    assert main(["suite", "params"]) == 0
    assert (tmp_path / "env" / "params.csv").exists()
    assert main(["suite", "params", "--out-dir", str(tmp_path / "flag")]) == 0
    assert (tmp_path / "flag" / "params.csv").exists()


def test_verbs_end_to_end(tmp_path):
    o = str(tmp_path)
    assert main(["constellation", "optimize", "--M", "4", "--N", "2", "--steps", "50", "--restarts", "2",
                 "--seed", "1", "--out", "opt.json", "--out-dir", o]) == 0
    trace = rows(tmp_path / "opt.trace.csv")
    assert list(trace[0]) == ["step", "pe", "min_dist"] and len(trace) == 51
    opt = json.loads((tmp_path / "opt.json").read_text())
    assert opt["M"] == 4 and opt["N"] == 2 and opt["p_av"] == 0.25
    assert json.loads((tmp_path / "opt.manifest.json").read_text())["seed"] == 1

    assert main(["ae", "train", "--M", "4", "--N", "2", "--epochs", "100", "--out-model", "m.json",
                 "--out-const", "c.json", "--out-dir", o]) == 0
    log = rows(tmp_path / "m.log.csv")
    assert list(log[0]) == ["iter", "loss", "grad_norm"] and log[-1]["iter"] == "100"
    model = json.loads((tmp_path / "m.json").read_text())
    assert [l["act"] for l in model["layers"]] == ["relu", "linear", "relu", "softmax"]

    assert main(["constellation", "compare", str(tmp_path / "opt.json"), str(tmp_path / "c.json"),
                 "--out", "cmp.json", "--out-dir", o]) == 0
    assert "spectrum_gap" in json.loads((tmp_path / "cmp.json").read_text())

    assert main(["ae", "ser", "--const", str(tmp_path / "c.json"), "--snr-list", "0:8:4", "--trials", "2000",
                 "--out", "ser.csv", "--out-dir", o]) == 0
    ser = rows(tmp_path / "ser.csv")
    assert list(ser[0]) == ["snr_db", "pe", "ci95", "trials"] and len(ser) == 3
    assert main(["ae", "ser", "--const", str(tmp_path / "c.json"), "--model", str(tmp_path / "m.json"),
                 "--snr-list", "4", "--trials", "2000", "--out", "ser_nn.csv", "--out-dir", o]) == 0

    assert main(["ae", "riskgap", "--model", str(tmp_path / "m.json"), "--train-B", "100", "--heldout-B", "100",
                 "--out", "rg.json", "--out-dir", o]) == 0
    rg = json.loads((tmp_path / "rg.json").read_text())
    assert rg["gap"] == pytest.approx(rg["heldout_risk"] - rg["empirical_risk"])

    assert main(["ofdm", "gen-dataset", "--B", "400", "--snr", "10", "--seed", "2", "--out", "ds.bin",
                 "--out-dir", o]) == 0
    assert (tmp_path / "ds.bin.json").exists()
    assert main(["entropy", "conditional", "--dataset", str(tmp_path / "ds.bin"), "--B-list", "100..300",
                 "--dump-gram", "gram.csv", "--out", "ent.csv", "--out-dir", o]) == 0
    ent = rows(tmp_path / "ent.csv")
    assert [r["B"] for r in ent] == ["100", "200", "300"] and ent[0]["snr_db"] == "10.0"
    assert len((tmp_path / "gram.csv").read_text().splitlines()) == 300

    ip = tmp_path / "ip"
    assert main(["infoplane", "run", "--dataset", str(tmp_path / "ds.bin"), "--iters", "20",
                 "--checkpoint-every", "10", "--out-dir", str(ip)]) == 0
    assert sorted(p.name for p in ip.iterdir()) == ["ip1.csv", "ip2.csv", "ip3.csv", "loss.csv", "manifest.json"]
    man = json.loads((ip / "manifest.json").read_text())
    assert man["config"]["lr"] == 0.001 and man["config"]["batch"] == 100
    assert len(rows(ip / "ip1.csv")) == 2 * 4


def test_entropy_conditional_rejects_oversized_b_list(tmp_path):
    assert main(["ofdm", "gen-dataset", "--B", "50", "--out", str(tmp_path / "d.bin")]) == 0
    assert main(["entropy", "conditional", "--dataset", str(tmp_path / "d.bin"), "--B-list", "100",
                 "--out", str(tmp_path / "e.csv")]) == 2
