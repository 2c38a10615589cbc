"""Experiment runs behind the CLI verbs.

Every run is a pure function of (config, seed): a seed owns its RngStream
tree, so results are byte-identical on rerun and seeds can run in parallel.
Stream layout per seed: 0 parameter init, 1 projection F, 2 device noise
during training, 3 shuffling, 4 device noise during evaluation.
"""

from __future__ import annotations

import csv
import io
import json
import logging
import os
import tempfile
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np

from . import analysis, flops
from .config import ExperimentConfig
from .dataset import DatasetSplit, load_mnist, subsample, synthetic_corpus
from .model import (DeviceBackend, OracleBackend, SoftwareBackend, init_params,
                    save_checkpoint, software_fft_convolve)
from .optics import (RngStream, edge_detect_kernel, gaussian_kernel,
                     optical_convolve_spectra, transfer_function, with_noise)
from .trainers import evaluate, new_train_state, train_epoch

log = logging.getLogger(__name__)

EPOCH_CSV_HEADER = ["epoch", "algorithm", "seed", "train_loss", "train_acc",
                    "update_flops", "passes"]
FLOPS_CSV_HEADER = ["algorithm", "n", "K", "C", "update_flops", "fft_flops",
                    "pointwise_flops", "forward_flops", "passes",
                    "peak_activation_memory", "bp_pepita_ratio", "caveat"]
BP_CAVEAT = "excludes dL/dz_hw from downstream layers"


def fmt(x) -> str:
    """Locale-free, round-trippable number formatting for CSV cells."""
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def write_atomic(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=path.name + ".")
    with os.fdopen(fd, "w", newline="") as fh:
        fh.write(text)
    os.replace(tmp, path)


def csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for row in rows:
        w.writerow([fmt(v) for v in row])
    return buf.getvalue()


# ---------------------------------------------------------------------------
# Data and backends
# ---------------------------------------------------------------------------


def load_pool(cfg: ExperimentConfig) -> tuple[np.ndarray, np.ndarray]:
    d = cfg.data
    if d.source == "synthetic":
        return synthetic_corpus(d.synthetic_count, seed=12345)
    return load_mnist(d.images, d.labels)


def make_split(cfg: ExperimentConfig, seed: int, pool=None) -> DatasetSplit:
    images, labels = pool if pool is not None else load_pool(cfg)
    return subsample(images, labels, cfg.data.train_n, cfg.data.test_n, seed,
                     classes=cfg.hyper.classes)


def make_backend(cfg: ExperimentConfig, rng: RngStream | None = None):
    if cfg.backend == "device":
        return DeviceBackend(cfg.device, rng)
    if cfg.backend == "oracle":
        return OracleBackend()
    return SoftwareBackend()


# ---------------------------------------------------------------------------
# Training runs
# ---------------------------------------------------------------------------


def run_seed(cfg: ExperimentConfig, seed: int, split: DatasetSplit | None = None) -> dict:
    """Train one seed; returns the JSON-able ResultRecord."""
    started = time.perf_counter()
    split = split if split is not None else make_split(cfg, seed)
    root = RngStream(seed)
    params = init_params(split.train_x.shape[-1], cfg.hyper, root.spawn(0))
    state = new_train_state(params, cfg.algo, root.spawn(1))
    train_backend = make_backend(cfg, root.spawn(2))
    shuffle_rng = root.spawn(3)
    epochs = []
    for _ in range(cfg.hyper.epochs):
        m = train_epoch(state, split.train_x, split.train_y, cfg.algo, train_backend,
                        cfg.hyper, shuffle_rng)
        epochs.append(asdict(m))
        log.info("%s seed=%d epoch=%d loss=%.4f acc=%.3f", cfg.algo.algorithm, seed,
                 m.epoch, m.train_loss, m.train_acc)
    test_acc = evaluate(state.params, split.test_x, split.test_y,
                        make_backend(cfg, root.spawn(4)))
    return {
        "config_hash": cfg.config_hash(),
        "algorithm": cfg.algo.algorithm,
        "backend": cfg.backend,
        "seed": seed,
        "split_digest": split.digest(),
        "epochs": epochs,
        "final_test_accuracy": test_acc,
        "ledger": state.ledger.as_dict(),
        "projection_checksum": state.projection.checksum() if state.projection else None,
        "wall_clock_s": time.perf_counter() - started,
        "_params": state.params,
    }


def epoch_rows(record: dict):
    for m in record["epochs"]:
        yield [m["epoch"], record["algorithm"], record["seed"], m["train_loss"],
               m["train_acc"], m["update_flops"], m["passes"]]


def _run_seed_job(args):
    cfg, seed = args
    return run_seed(cfg, seed)


def run_seeds(cfg: ExperimentConfig, seeds=None, workers: int = 1) -> list[dict]:
    seeds = list(seeds if seeds is not None else cfg.data.seeds)
    if workers > 1 and len(seeds) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_run_seed_job, [(cfg, s) for s in seeds]))
    data = load_pool(cfg)
    return [run_seed(cfg, s, make_split(cfg, s, data)) for s in seeds]


def write_records(cfg: ExperimentConfig, records: list[dict], out: Path) -> dict:
    """Per-seed CSV + JSON (+ checkpoint) and the aggregate summary."""
    algo = cfg.algo.algorithm
    for rec in records:
        stem = f"{algo}_seed{rec['seed']}"
        write_atomic(out / f"{stem}.csv", csv_text(EPOCH_CSV_HEADER, epoch_rows(rec)))
        body = {k: v for k, v in rec.items() if not k.startswith("_")}
        write_atomic(out / f"{stem}.json", json.dumps(body, indent=2, sort_keys=True))
        save_checkpoint(out / f"{stem}.ckpt", rec["_params"], seed=rec["seed"],
                        epoch=len(rec["epochs"]))
    summary = analysis.aggregate_runs([r["final_test_accuracy"] for r in records])
    doc = {"algorithm": algo, "config_hash": cfg.config_hash(),
           "seeds": [r["seed"] for r in records], **summary.as_dict()}
    write_atomic(out / f"summary_{algo}.json", json.dumps(doc, indent=2, sort_keys=True))
    return doc


def cmd_train(cfg: ExperimentConfig, out: Path, seeds=None, workers: int = 1) -> dict:
    out.mkdir(parents=True, exist_ok=True)
    write_atomic(out / "config.json", json.dumps(cfg.to_dict(), indent=2, sort_keys=True))
    records = run_seeds(cfg, seeds, workers)
    return write_records(cfg, records, out)


def cmd_compare(cfg: ExperimentConfig, out: Path, seeds=None, workers: int = 1) -> dict:
    """BP and PEPITA on identical seeds, splits, initial weights and device."""
    report = {"config_hash": cfg.config_hash(), "backend": cfg.backend}
    digests = {}
    for algorithm in ("bp", "pepita"):
        sub = cfg.replace(algo=replace(cfg.algo, algorithm=algorithm))
        records = run_seeds(sub, seeds, workers)
        digests[algorithm] = [r["split_digest"] for r in records]
        report[algorithm] = write_records(sub, records, out)
    report["same_splits"] = digests["bp"] == digests["pepita"]
    report["accuracy_gap"] = report["bp"]["mean"] - report["pepita"]["mean"]
    write_atomic(out / "compare.json", json.dumps(report, indent=2, sort_keys=True))
    return report


def cmd_eval(cfg: ExperimentConfig, params, seed: int) -> dict:
    split = make_split(cfg, seed)
    backend = make_backend(cfg, RngStream(seed).spawn(4))
    acc = evaluate(params, split.test_x, split.test_y, backend)
    return {"seed": seed, "backend": cfg.backend, "test_accuracy": acc,
            "split_digest": split.digest()}


# ---------------------------------------------------------------------------
# SSIM, FLOPs, throughput
# ---------------------------------------------------------------------------


def named_kernel(name: str, n: int, seed: int = 0) -> np.ndarray:
    if name == "edge_detect":
        return edge_detect_kernel(n)
    if name == "gaussian":
        return gaussian_kernel(n, sigma=1.0)
    if name == "random":
        return RngStream(seed).uniform(-1.0 / n, 1.0 / n, (n, n))
    raise ValueError(f"unknown kernel preset {name!r}")


def cmd_ssim_study(cfg: ExperimentConfig, kernel: str = "edge_detect", count: int = 100,
                   seed: int | None = None, sigmas=None) -> dict:
    """Software vs simulated-device convolution on test images.

    With ``sigmas`` the study is repeated per camera noise level (a sweep).
    """
    seed = cfg.data.seeds[0] if seed is None else seed
    split = make_split(cfg, seed)
    images = split.test_x[:count]
    k = named_kernel(kernel, images.shape[-1], seed)
    report = {"kernel": kernel, "images": len(images), "seed": seed,
              "config_hash": cfg.config_hash()}
    if sigmas:
        sweep = []
        for s in sigmas:
            scores = analysis.device_ssim_scores(images, k, with_noise(cfg.device, s), seed)
            sweep.append({"noise_sigma": float(s), "mean_ssim": float(scores.mean())})
        report["sweep"] = sweep
        return report
    scores = analysis.device_ssim_scores(images, k, cfg.device, seed)
    report.update(noise_sigma=cfg.device.camera.noise_sigma,
                  per_image=[float(s) for s in scores], mean_ssim=float(scores.mean()))
    return report


def example_pair(cfg: ExperimentConfig, kernel: str = "edge_detect", seed: int = 0):
    """(input, software output, device output) for one test digit."""
    split = make_split(cfg, seed)
    img = split.test_x[0]
    k = named_kernel(kernel, img.shape[-1], seed)
    dev = optical_convolve_spectra(img, transfer_function(k), cfg.device, RngStream(seed))
    return img, software_fft_convolve(img, k), dev


def flops_table(ns, K: int = 8, C: int = 10) -> list[list]:
    rows = []
    for n in ns:
        per = {a: flops.count_flops(a, n, K, C) for a in ("bp", "pepita", "mempepita")}
        ratio = per["bp"].update_flops / per["pepita"].update_flops
        for a, led in per.items():
            rows.append([a, n, K, C, led.update_flops, led.fft_flops, led.pointwise_flops,
                         led.forward_flops, led.passes, led.peak_activation_memory, ratio,
                         BP_CAVEAT if a == "bp" else ""])
    return rows


def cmd_flops(ns, K: int = 8, C: int = 10) -> str:
    return csv_text(FLOPS_CSV_HEADER, flops_table(ns, K, C))


def cmd_throughput(model: analysis.LatencyModel) -> dict:
    ips = analysis.throughput(model)
    return {**asdict(model), "images_per_second": ips, "ms_per_image": 1000.0 / ips}

