import json
import subprocess
import sys

import numpy as np
import pytest

from sparseland import __version__, net_to_json
from sparseland.cli import main


@pytest.fixture
def workdir(tmp_path, monkeypatch):
    # manifests default into the working directory
    monkeypatch.chdir(tmp_path)
    return tmp_path


def run_cli(argv, capsys):
    code = main(argv)
    return code, capsys.readouterr()


# ---------------------------------------------------------------------------
# verify
# ---------------------------------------------------------------------------

def test_verify_minimum(workdir, capsys):
    code, cap = run_cli(["verify", "sd-minimum"], capsys)
    assert code == 0
    assert "strict_probe_pass: True" in cap.out
    manifest = json.loads((workdir / "verify.manifest.json").read_text())
    assert manifest["command"] == "verify"
    assert manifest["exit_code"] == 0
    assert manifest["config"]["instance"] == "sd-minimum"


def test_verify_valley_json_payload(workdir, capsys):
    code, cap = run_cli(["verify", "ss-valley", "--probes", "500", "--json"], capsys)
    assert code == 0
    payload = json.loads(cap.out)
    assert payload["verified"] is True
    assert payload["valley_loss"] == 4.0
    assert payload["probe"]["falsifications"] == 0


def test_verify_valley_bad_constraints_fails(workdir, capsys):
    # y3 = 6 < 4 * y4: builds, probes, but cannot verify
    code, cap = run_cli(["verify", "ss-valley", "--y", "1,2,6,2"], capsys)
    assert code == 1
    assert "constraints ok: False" in cap.out


def test_verify_conv_valley(workdir, capsys):
    code, cap = run_cli(["verify", "cnn-same-valley", "--json"], capsys)
    assert code == 0
    payload = json.loads(cap.out)
    assert [e["a"] for e in payload["scales"]] == [0.5, 1.0, 2.0]
    assert all(e["witness_loss"] == 0.0 for e in payload["scales"])


def test_verify_unknown_instance_usage_error(workdir):
    with pytest.raises(SystemExit) as ei:
        main(["verify", "sharp-minimum"])
    assert ei.value.code == 2


# ---------------------------------------------------------------------------
# train
# ---------------------------------------------------------------------------

def test_train_reports_gap_for_linear(workdir, capsys):
    code, cap = run_cli(["train", "--dims", "4,8,2", "--n", "40", "--lr", "0.005",
                         "--epochs", "4000", "--seed", "3"], capsys)
    assert code == 0
    assert "L - L* = " in cap.out
    manifest = json.loads((workdir / "train.manifest.json").read_text())
    assert manifest["seed"] == 3


def test_train_writes_csv_trace(workdir, capsys):
    out = workdir / "trace.csv"
    code, cap = run_cli(["train", "--dims", "3,6,1", "--n", "20", "--epochs", "50",
                         "--rank-every", "25", "--out", str(out)], capsys)
    assert code == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "epoch,loss,rank_layer_1,rank_layer_2"
    assert len(lines) >= 3
    # manifest hash covers the written artifact byte for byte
    manifest = json.loads((workdir / "trace.csv.manifest.json").read_text())
    import hashlib
    assert manifest["outputs"]["primary"]["sha256"] == \
        hashlib.sha256(out.read_text().encode()).hexdigest()
    assert manifest["outputs"]["primary"]["path"] == str(out)


def test_train_needs_spec_or_dims(workdir, capsys):
    with pytest.raises(SystemExit) as ei:
        main(["train"])
    assert ei.value.code == 2


def test_train_malformed_spec_diagnostics(workdir, capsys):
    bad = workdir / "net.json"
    bad.write_text('{"layers": [\n!oops\n]}')
    with pytest.raises(SystemExit) as ei:
        main(["train", "--spec", str(bad)])
    assert ei.value.code == 2
    err = capsys.readouterr().err
    assert "malformed JSON" in err and "line 2" in err


def test_train_missing_spec_file(workdir, capsys):
    with pytest.raises(SystemExit) as ei:
        main(["train", "--spec", str(workdir / "absent.json")])
    assert ei.value.code == 2
    assert "cannot read" in capsys.readouterr().err


def test_train_spec_keeps_weights(workdir, capsys):
    from sparseland import random_effective_net
    net, _ = random_effective_net((3, 5, 1), sparsity=0.2, seed=4)
    spec = workdir / "net.json"
    spec.write_text(json.dumps(net_to_json(net)))
    code, cap = run_cli(["train", "--spec", str(spec), "--epochs", "0",
                         "--n", "10", "--json"], capsys)
    assert code == 0
    payload = json.loads(cap.out)
    # epoch-0 loss of the kept weights, no reinit: realized sparsity intact
    assert payload["epochs"] == 0
    got = payload["realized_sparsity"]
    want = sum(int(l.mask.size - np.count_nonzero(l.mask)) for l in net.layers) \
        / sum(l.mask.size for l in net.layers)
    assert got == pytest.approx(want, abs=0)


def test_train_divergence_exit_code(workdir, capsys):
    code, cap = run_cli(["train", "--dims", "3,6,2", "--n", "20", "--lr", "50",
                         "--epochs", "200"], capsys)
    assert code == 1
    assert "diverged" in cap.out


# ---------------------------------------------------------------------------
# other commands
# ---------------------------------------------------------------------------

def test_conv_rank_worked_example(workdir, capsys):
    code, cap = run_cli(["conv-rank", "--mode", "SAME", "--d", "4",
                         "--kernel", "0,3"], capsys)
    assert code == 0
    assert "expected 3, numeric 3" in cap.out


def test_conv_rank_bad_mode(workdir, capsys):
    with pytest.raises(SystemExit) as ei:
        main(["conv-rank", "--mode", "wrap", "--d", "4", "--kernel", "1"])
    assert ei.value.code == 2


def test_conv_rank_bad_kernel_value(workdir):
    with pytest.raises(SystemExit) as ei:
        main(["conv-rank", "--mode", "SAME", "--d", "4", "--kernel", "a,b"])
    assert ei.value.code == 2


@pytest.mark.parametrize("cond", ["1", "3"])
def test_path_command(workdir, capsys, cond):
    out = workdir / "path.csv"
    code, cap = run_cli(["path", "--cond", cond, "--out", str(out), "--json"], capsys)
    assert code == 0
    payload = json.loads(cap.out)
    assert payload["ok"] is True
    assert payload["monotone_violation"] <= 1e-10
    lines = out.read_text().splitlines()
    assert lines[0] == "t,loss"
    assert lines[-1].startswith("1.0,")


def test_prune_flags_ineffective_net(workdir, capsys):
    spec = {
        "layers": [
            {"weights": [[1.0, 0.0], [0.0, 2.0]], "mask": [[1, 0], [0, 1]]},
            {"weights": [[3.0, 0.0]], "mask": [[1, 0]]},
        ],
        "activation": {"kind": "relu"},
    }
    p = workdir / "net.json"
    p.write_text(json.dumps(spec))
    code, cap = run_cli(["prune", "--spec", str(p), "--json"], capsys)
    assert code == 1
    payload = json.loads(cap.out)
    assert payload["is_effective"] is False
    assert payload["isolated_inputs"] == [1]
    assert payload["removed_edges"] == [[0, 1, 1]]


def test_rank_command(workdir, capsys):
    code, cap = run_cli(["rank", "--dims", "6,8,2", "--sparsity", "0.2", "--n", "6",
                         "--seed", "17", "--json"], capsys)
    payload = json.loads(cap.out)
    assert code in (0, 1)
    assert len(payload["ranks"]) == 1
    assert payload["ranks"][0] <= 6


# ---------------------------------------------------------------------------
# seeding and replay
# ---------------------------------------------------------------------------

def test_seed_env_override(workdir, capsys, monkeypatch):
    monkeypatch.setenv("SEED", "99")
    code, cap = run_cli(["path", "--cond", "1", "--seed", "5"], capsys)
    assert code == 0
    manifest = json.loads((workdir / "path.manifest.json").read_text())
    assert manifest["seed"] == 99
    assert manifest["config"]["seed"] == 99


def test_seed_env_invalid(workdir, capsys, monkeypatch):
    monkeypatch.setenv("SEED", "ninetynine")
    code, cap = run_cli(["path", "--cond", "1"], capsys)
    assert code == 2
    assert "SEED must be an integer" in cap.err


def test_replay_reproduces_bitwise(workdir, capsys):
    out = workdir / "trace.csv"
    code, _ = run_cli(["train", "--dims", "3,6,2", "--n", "20", "--epochs", "40",
                       "--seed", "8", "--out", str(out)], capsys)
    assert code == 0
    manifest_path = workdir / "trace.csv.manifest.json"
    copy = workdir / "replayed.csv"
    code, cap = run_cli(["replay", str(manifest_path), "--out", str(copy)], capsys)
    assert code == 0
    assert "outputs identical" in cap.out
    assert copy.read_text() == out.read_text()


def test_replay_detects_mismatch(workdir, capsys):
    run_cli(["path", "--cond", "1", "--seed", "2"], capsys)
    mpath = workdir / "path.manifest.json"
    manifest = json.loads(mpath.read_text())
    manifest["payload_sha256"] = "0" * 64
    mpath.write_text(json.dumps(manifest))
    code, cap = run_cli(["replay", str(mpath)], capsys)
    assert code == 1
    assert "OUTPUT MISMATCH" in cap.out


def test_replay_bad_manifest(workdir, capsys):
    p = workdir / "m.json"
    p.write_text("{}")
    with pytest.raises(SystemExit) as ei:
        main(["replay", str(p)])
    assert ei.value.code == 2


def test_trials_smoke(workdir, capsys):
    code, cap = run_cli(["trials", "--n", "4", "--epochs", "300", "--json"], capsys)
    assert code == 0
    payload = json.loads(cap.out)
    assert set(payload) == {"trials", "clusters", "counts", "fractions"}
    assert len(payload["trials"]) == 4


# ---------------------------------------------------------------------------
# console script
# ---------------------------------------------------------------------------

def test_console_script_version():
    proc = subprocess.run([sys.executable, "-m", "sparseland.cli", "--version"],
                          capture_output=True, text=True)
    assert proc.returncode == 0
    assert __version__ in proc.stdout


def test_installed_entry_point():
    proc = subprocess.run(["sparseland", "--version"], capture_output=True, text=True)
    assert proc.returncode == 0
    assert proc.stdout.startswith("sparseland ")
