import json

import pytest

from senscov.cli import main
from senscov.datasets import write_digit_dataset


@pytest.fixture(scope="module")
def workspace(tmp_path_factory):
    """Dataset, trained model, and one campaign produced through the CLI."""
    root = tmp_path_factory.mktemp("cli")
    data_dir = root / "data"
    paths = write_digit_dataset(data_dir, 300, 80, seed=2)
    model_path = root / "model.thm"
    rc = main([
        "train", "--arch", "mlp:784-16-10",
        "--images", paths["train"][0], "--labels", paths["train"][1],
        "--epochs", "3", "--lr", "0.2", "--seed", "1", "--out", str(model_path),
    ])
    assert rc == 0
    campaign = root / "campaign.json"
    rc = main([
        "fuzz", "--model", str(model_path),
        "--images", paths["test"][0], "--labels", paths["test"][1],
        "--perturb", "gaussian:sigma=0.05", "--seed", "5",
        "--batch", "60", "--max-iterations", "2", "--out", str(campaign),
    ])
    assert rc == 0
    return {"root": root, "data": paths, "model": model_path, "campaign": campaign}


def test_train_writes_model_and_manifest(workspace):
    assert workspace["model"].exists()
    manifest = json.loads((workspace["root"] / "model.thm.manifest.json").read_text())
    assert manifest["command"] == "train"
    assert manifest["seed"] == 1
    assert "version" in manifest and "git_describe" in manifest


def test_fuzz_outputs(workspace):
    campaign = json.loads(workspace["campaign"].read_text())
    assert campaign["kind"] == "senscov"
    assert campaign["total_inputs"] > 0
    assert (workspace["root"] / "campaign.faults.bin").exists()
    assert (workspace["root"] / "campaign.timing.json").exists()
    assert (workspace["root"] / "campaign.manifest.json").exists()


def test_fuzz_deterministic_outputs(workspace, tmp_path):
    outs = []
    for name in ("a", "b"):
        out = tmp_path / f"{name}.json"
        rc = main([
            "fuzz", "--model", str(workspace["model"]),
            "--images", workspace["data"]["test"][0],
            "--labels", workspace["data"]["test"][1],
            "--perturb", "gaussian:sigma=0.03", "--seed", "7",
            "--batch", "40", "--max-iterations", "1", "--out", str(out),
        ])
        assert rc == 0
        outs.append((out.read_bytes(),
                     (tmp_path / f"{name}.faults.bin").read_bytes()))
    assert outs[0] == outs[1]


def test_report_iterations_csv(workspace, capsys):
    rc = main(["report", "--campaign", str(workspace["campaign"]), "--format", "csv"])
    assert rc == 0
    lines = capsys.readouterr().out.strip().splitlines()
    campaign = json.loads(workspace["campaign"].read_text())
    assert lines[0].startswith("iteration,coverage")
    assert len(lines) == 1 + len(campaign["iterations"])


def test_report_faults_json(workspace, capsys):
    rc = main(["report", "--campaign", str(workspace["campaign"]),
               "--format", "json", "--table", "faults"])
    assert rc == 0
    rows = json.loads(capsys.readouterr().out)
    campaign = json.loads(workspace["campaign"].read_text())
    assert len(rows) == campaign["fault_count"]


def test_baseline_cli(workspace, tmp_path):
    out = tmp_path / "nc.json"
    rc = main([
        "baseline", "--model", str(workspace["model"]),
        "--images", workspace["data"]["test"][0],
        "--labels", workspace["data"]["test"][1],
        "--metric", "nc", "--perturb", "gaussian", "--budget", "80",
        "--seed", "3", "--out", str(out),
    ])
    assert rc == 0
    payload = json.loads(out.read_text())
    assert payload["kind"] == "baseline"


def test_retrain_cli(workspace, tmp_path):
    out = tmp_path / "retrain.json"
    rc = main([
        "retrain", "--model", str(workspace["model"]),
        "--campaign", str(workspace["campaign"]),
        "--train-images", workspace["data"]["train"][0],
        "--train-labels", workspace["data"]["train"][1],
        "--images", workspace["data"]["test"][0],
        "--labels", workspace["data"]["test"][1],
        "--epochs", "1", "--lr", "0.05", "--seed", "2", "--out", str(out),
    ])
    assert rc == 0
    payload = json.loads(out.read_text())
    assert payload["kind"] == "retrain_experiment"
    assert payload["num_faults"] > 0


def test_missing_required_flag_is_usage_error(capsys):
    rc = main(["fuzz", "--perturb", "gaussian", "--out", "x.json"])
    assert rc == 1
    assert "usage" in capsys.readouterr().err


def test_unknown_flag_is_usage_error(capsys):
    rc = main(["train", "--bogus", "1"])
    assert rc == 1


def test_runtime_failure_exits_2(tmp_path, capsys):
    rc = main(["fuzz", "--model", str(tmp_path / "missing.thm"),
               "--csv", str(tmp_path / "missing.csv"),
               "--perturb", "gaussian", "--out", str(tmp_path / "c.json")])
    assert rc == 2


def test_bad_magnitude_is_runtime_error(workspace, tmp_path, capsys):
    rc = main(["fuzz", "--model", str(workspace["model"]),
               "--images", workspace["data"]["test"][0],
               "--labels", workspace["data"]["test"][1],
               "--perturb", "gaussian:sigma=9", "--out", str(tmp_path / "c.json")])
    assert rc == 2


def test_version_flag(capsys):
    assert main(["--version"]) == 0
    assert capsys.readouterr().out.strip()


def test_dataset_cli(tmp_path):
    rc = main(["dataset", "--out", str(tmp_path / "d"), "--train", "20",
               "--test", "10", "--seed", "3"])
    assert rc == 0
    assert (tmp_path / "d" / "train-images.idx").exists()
    assert (tmp_path / "d" / "test-labels.idx").exists()


def test_dataset_directory_flag(workspace, tmp_path):
    data_dir = workspace["data"]["test"][0].rsplit("/", 1)[0]
    out = tmp_path / "c.json"
    rc = main(["fuzz", "--model", str(workspace["model"]),
               "--dataset", data_dir, "--perturb", "gaussian:sigma=0.03",
               "--seed", "7", "--batch", "20", "--max-iterations", "1",
               "--out", str(out)])
    assert rc == 0
    assert json.loads(out.read_text())["total_inputs"] == 20
