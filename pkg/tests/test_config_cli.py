import json

import numpy as np
import pytest
import yaml

from hwl4f import cli, experiment
from hwl4f.config import ConfigError, ExperimentConfig, config_from_dict, load_config
from hwl4f.dataset import encode_idx

SMOKE = {
    "device": "calibrated",
    "hyper": {"K": 2, "epochs": 2},
    "algo": {"algorithm": "pepita"},
    "data": {"source": "synthetic", "train_n": 50, "test_n": 20, "seeds": [0, 1],
             "synthetic_count": 200},
}


def write_cfg(tmp_path, doc, name="cfg.yaml"):
    path = tmp_path / name
    path.write_text(yaml.safe_dump(doc))
    return path


def run_cli(capsys, *argv):
    code = cli.main([str(a) for a in argv])
    return code, capsys.readouterr()


# --- config ------------------------------------------------------------------


def test_defaults_load():
    cfg = config_from_dict({})
    assert cfg.hyper.learning_rate == 0.001 and cfg.hyper.K == 8 and cfg.hyper.epochs == 30
    assert cfg.device.camera.noise_sigma > 0


@pytest.mark.parametrize("doc", [
    {"bogus": 1},
    {"hyper": {"learnig_rate": 0.1}},
    {"device": {"preset": "calibrated", "camera": {"nosie_sigma": 0.1}}},
    {"device": "nonexistent"},
    {"backend": "gpu"},
    {"algo": {"algorithm": "ff"}},
])
def test_invalid_configs_rejected(doc):
    with pytest.raises(ConfigError):
        config_from_dict(doc)


def test_device_override():
    cfg = config_from_dict({"device": {"preset": "calibrated", "camera": {"noise_sigma": 0.0}}})
    assert cfg.device.camera.noise_sigma == 0.0
    assert cfg.device.slm1.bit_depth == 8


def test_hash_ignores_key_order_and_output_dir():
    a = config_from_dict(dict(SMOKE))
    b = config_from_dict(dict(reversed(list(SMOKE.items()))))
    assert a.config_hash() == b.config_hash()
    assert a.replace(output_dir="elsewhere").config_hash() == a.config_hash()
    c = config_from_dict({**SMOKE, "hyper": {"K": 2, "epochs": 3}})
    assert c.config_hash() != a.config_hash()


def test_relative_data_paths(tmp_path):
    doc = {"data": {"source": "idx", "images": "d/i", "labels": "d/l"}}
    cfg = load_config(write_cfg(tmp_path, doc))
    assert cfg.data.images == str((tmp_path / "d" / "i").resolve())


# --- CLI verbs ---------------------------------------------------------------


def test_cli_throughput(capsys):
    code, out = run_cli(capsys, "throughput", "--kernels", "1", "--exposure-ms", "0")
    assert code == 0
    assert json.loads(out.out)["images_per_second"] == 40.0
    code, out = run_cli(capsys, "throughput")
    assert json.loads(out.out)["images_per_second"] == pytest.approx(1000 / 360)
    code, out = run_cli(capsys, "throughput", "--overhead-ms", "5")
    assert json.loads(out.out)["images_per_second"] == pytest.approx(1000 / 400)


def test_cli_throughput_zero_latency(capsys):
    code, out = run_cli(capsys, "throughput", "--setup-ms", "0", "--exposure-ms", "0")
    assert code == 2 and "config error" in out.err


def test_cli_flops_table(capsys, tmp_path):
    code, out = run_cli(capsys, "flops", "--out", tmp_path)
    assert code == 0
    lines = out.out.strip().splitlines()
    assert lines[0].split(",") == experiment.FLOPS_CSV_HEADER
    rows = [dict(zip(experiment.FLOPS_CSV_HEADER, l.split(","))) for l in lines[1:]]
    pep = [r for r in rows if r["algorithm"] == "pepita"]
    ratios = [float(r["bp_pepita_ratio"]) for r in pep]
    assert [int(r["n"]) for r in pep] == [16, 32, 64, 128, 256]
    assert all(b > a for a, b in zip(ratios, ratios[1:]))
    flops_ = [int(r["update_flops"]) for r in pep]
    assert all(b / a == pytest.approx(4, rel=0.05) for a, b in zip(flops_[2:], flops_[3:]))
    assert (tmp_path / "flops.csv").read_text() == out.out


def test_cli_flops_zero_kernels(capsys):
    code, out = run_cli(capsys, "flops", "--n", "32", "--K", "0")
    rows = [l.split(",") for l in out.out.strip().splitlines()[1:]]
    assert len({r[4] for r in rows}) == 1


def test_cli_flops_bad_n(capsys):
    code, out = run_cli(capsys, "flops", "--n", "15")
    assert code == 2 and out.err


def test_cli_unknown_config_key(capsys, tmp_path):
    path = write_cfg(tmp_path, {"hyper": {"lr": 1}})
    code, out = run_cli(capsys, "train", "--config", path, "--out", tmp_path / "o")
    assert code == 2 and "lr" in out.err


def test_cli_missing_data(capsys, tmp_path):
    path = write_cfg(tmp_path, {"data": {"source": "idx", "images": "nope", "labels": "nope"}})
    code, out = run_cli(capsys, "train", "--config", path, "--out", tmp_path / "o")
    assert code == 3


def test_cli_bad_idx(capsys, tmp_path):
    (tmp_path / "i").write_bytes(b"\x00\x00\x08\x02" + bytes(12))
    (tmp_path / "l").write_bytes(encode_idx(np.zeros(1, np.uint8)))
    path = write_cfg(tmp_path, {"data": {"source": "idx", "images": "i", "labels": "l"}})
    code, _ = run_cli(capsys, "train", "--config", path, "--out", tmp_path / "o")
    assert code == 3


def test_train_is_byte_identical_on_rerun(capsys, tmp_path):
    path = write_cfg(tmp_path, SMOKE)
    for out in ("a", "b"):
        code, _ = run_cli(capsys, "train", "--config", path, "--out", tmp_path / out)
        assert code == 0
    for seed in (0, 1):
        name = f"pepita_seed{seed}.csv"
        a = (tmp_path / "a" / name).read_bytes()
        assert a == (tmp_path / "b" / name).read_bytes()
        assert a.decode().splitlines()[0] == ",".join(experiment.EPOCH_CSV_HEADER)
        assert len(a.decode().splitlines()) == 3
    summary = json.loads((tmp_path / "a" / "summary_pepita.json").read_text())
    assert len(summary["accuracies"]) == 2 and "std" in summary


def test_parallel_seeds_match_serial(tmp_path):
    cfg = config_from_dict(SMOKE)
    serial = experiment.run_seeds(cfg, workers=1)
    parallel = experiment.run_seeds(cfg, workers=2)
    for a, b in zip(serial, parallel):
        assert a["epochs"] == b["epochs"]
        assert a["final_test_accuracy"] == b["final_test_accuracy"]


def test_epochs_zero_is_evaluation_only(tmp_path):
    cfg = config_from_dict({**SMOKE, "hyper": {"K": 2, "epochs": 0}})
    rec = experiment.run_seed(cfg, 0)
    assert rec["epochs"] == [] and 0 <= rec["final_test_accuracy"] <= 1
    assert rec["ledger"]["update_flops"] == 0


def test_compare_uses_identical_splits(capsys, tmp_path):
    path = write_cfg(tmp_path, {**SMOKE, "hyper": {"K": 2, "epochs": 1}})
    code, out = run_cli(capsys, "compare", "--config", path, "--out", tmp_path / "c")
    assert code == 0
    report = json.loads((tmp_path / "c" / "compare.json").read_text())
    assert report["same_splits"] is True
    assert report["accuracy_gap"] == pytest.approx(report["bp"]["mean"] - report["pepita"]["mean"])


def test_eval_checkpoint(capsys, tmp_path):
    path = write_cfg(tmp_path, {**SMOKE, "hyper": {"K": 2, "epochs": 1}})
    run_cli(capsys, "train", "--config", path, "--out", tmp_path / "t", "--seed", "0")
    rec = json.loads((tmp_path / "t" / "pepita_seed0.json").read_text())
    code, out = run_cli(capsys, "eval", "--config", path,
                        "--checkpoint", tmp_path / "t" / "pepita_seed0.ckpt")
    assert code == 0
    assert json.loads(out.out)["test_accuracy"] == rec["final_test_accuracy"]


def test_ssim_study_cli(capsys, tmp_path):
    path = write_cfg(tmp_path, SMOKE)
    code, out = run_cli(capsys, "ssim-study", "--config", path, "--count", "10",
                        "--out", tmp_path)
    assert code == 0
    assert 0.5 < json.loads(out.out)["mean_ssim"] < 1
    report = json.loads((tmp_path / "ssim_edge_detect.json").read_text())
    assert len(report["per_image"]) == 10


def test_ssim_sweep_monotone(capsys, tmp_path):
    path = write_cfg(tmp_path, SMOKE)
    argv = ["ssim-study", "--config", path, "--count", "20"]
    for s in (0.0, 0.05, 0.1, 0.2, 0.4):
        argv += ["--sigma", s]
    code, out = run_cli(capsys, *argv)
    means = [row["mean_ssim"] for row in json.loads(out.out)["sweep"]]
    assert len(means) == 5
    assert all(b <= a for a, b in zip(means, means[1:]))


def test_transparent_ssim():
    cfg = ExperimentConfig().replace(device=config_from_dict({"device": "transparent"}).device)
    assert experiment.cmd_ssim_study(cfg, count=10)["mean_ssim"] > 0.99
