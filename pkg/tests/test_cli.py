import json
from pathlib import Path

import pytest

from mmhcl.cli import apply_overrides, load_config, main
from mmhcl.errors import ConfigError

SMALL = {
    "seed": 3,
    "synthetic": {"n_classes": 6, "n_train": 10, "n_test": 3, "catalog_groups": 3, "catalog_rank": 4},
    "train": {"epochs": 2, "batch_size": 32, "n_modules": 2, "top_k": 3},
    "eval": {"k_values": [1, 3], "n_dump": 5},
}


def write_config(tmp_path, cfg, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(cfg))
    return p


def only_run(out: Path, prefix: str) -> Path:
    runs = sorted(d for d in out.iterdir() if d.name.startswith(prefix))
    assert len(runs) == 1
    return runs[0]


def test_overrides_parse_json_values():
    cfg = apply_overrides({"train": {"lr": 1}}, ["train.lr=0.01", "train.use_csmf=false", "data.catalog=x.csv"])
    assert cfg["train"] == {"lr": 0.01, "use_csmf": False}
    assert cfg["data"]["catalog"] == "x.csv"
    with pytest.raises(ConfigError):
        apply_overrides({}, ["novalue"])


def test_config_errors(tmp_path):
    with pytest.raises(ConfigError, match="unknown config section"):
        load_config(write_config(tmp_path, {"bogus": {}}))
    with pytest.raises(ConfigError, match="unknown training option"):
        load_config(write_config(tmp_path, {"train": {"momentum": 0.9}}))
    with pytest.raises(ConfigError, match="not found"):
        load_config(tmp_path / "missing.json")


def test_bad_config_exit_code(tmp_path, capsys):
    cfg = write_config(tmp_path, {"train": {"n_modules": 1}})
    assert main(["train", "--config", str(cfg), "--out", str(tmp_path / "runs")]) == 1
    err = json.loads(capsys.readouterr().err.strip())
    assert err["error"] == "config" and "n_modules" in err["message"]


def test_missing_checkpoint_exit_code(tmp_path):
    cfg = write_config(tmp_path, SMALL)
    assert main(["eval", "--config", str(cfg), "--out", str(tmp_path / "runs")]) == 1


def test_end_to_end(tmp_path):
    out = tmp_path / "runs"
    cfg_path = write_config(tmp_path, SMALL)
    assert main(["gen-data", "--config", str(cfg_path), "--out", str(out)]) == 0
    gen = only_run(out, "gen-data")
    manifest = json.loads((gen / "manifest.json").read_text())
    assert manifest["status"] == "complete"
    assert set(manifest["outputs"]) == {"features_A.csv", "features_B.csv", "catalog.csv", "partition.json"}

    data = {
        "features_a": str(gen / "features_A.csv"),
        "features_b": str(gen / "features_B.csv"),
        "partition": str(gen / "partition.json"),
        "catalog": str(gen / "catalog.csv"),
    }
    before = {p: Path(p).read_bytes() for p in data.values()}
    cfg2 = write_config(tmp_path, {**SMALL, "data": data}, "cfg2.json")
    assert main(["train", "--config", str(cfg2), "--out", str(out)]) == 0
    tr = only_run(out, "train")
    assert (tr / "model.ckpt").is_file() and (tr / "train_log.csv").is_file()

    sets = ["--set", f"data.checkpoint={tr / 'model.ckpt'}"]
    assert main(["eval", "--config", str(cfg2), "--out", str(out), "--check", *sets]) == 0
    ev = only_run(out, "eval")
    metrics = json.loads((ev / "metrics.json").read_text())
    assert [m["name"] for m in metrics] == ["CSCF", "avg-fusion", "conf-max"]
    assert json.loads((ev / "check.json").read_text())["passed"] is True

    failing = ["--set", "eval.min_accuracy={\"mix\": 101}"]
    assert main(["eval", "--config", str(cfg2), "--out", str(out), "--check", *sets, *failing]) == 3

    assert main(["sweep-k", "--config", str(cfg2), "--out", str(out), *sets]) == 0
    assert (only_run(out, "sweep-k") / "sweep_k.csv").read_text().startswith("k,")
    assert main(["dump-uncertainty", "--config", str(cfg2), "--out", str(out), *sets]) == 0
    rows = (only_run(out, "dump-uncertainty") / "uncertainty.csv").read_text().splitlines()
    assert len(rows) == 1 + SMALL["eval"]["n_dump"]
    assert main(["ablate", "--config", str(cfg2), "--out", str(out), *sets]) == 0
    assert "B+O+D+C" in (only_run(out, "ablate") / "ablation.txt").read_text()
    # inputs are never modified
    assert all(Path(p).read_bytes() == b for p, b in before.items())


def test_reruns_are_identical_and_never_overwrite(tmp_path):
    out = tmp_path / "runs"
    cfg = write_config(tmp_path, SMALL)
    assert main(["train", "--config", str(cfg), "--out", str(out)]) == 0
    assert main(["train", "--config", str(cfg), "--out", str(out)]) == 0
    first, second = sorted(out.iterdir())
    assert second.name == first.name + "-1"
    assert (first / "model.ckpt").read_bytes() == (second / "model.ckpt").read_bytes()
    m1, m2 = (json.loads((d / "manifest.json").read_text()) for d in (first, second))
    for m in (m1, m2):
        m.pop("started"), m.pop("finished")
    assert m1 == m2


def test_runtime_error_exit_code(tmp_path):
    bad = tmp_path / "bad.ckpt"
    bad.write_bytes(b"garbage")
    cfg = write_config(tmp_path, {**SMALL, "data": {"checkpoint": str(bad)}})
    assert main(["eval", "--config", str(cfg), "--out", str(tmp_path / "runs")]) == 2
    run = next((tmp_path / "runs").iterdir())
    assert json.loads((run / "manifest.json").read_text())["status"] == "incomplete"
