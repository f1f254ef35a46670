"""Cross-validated graph classification over architecture and classifier grids."""
from __future__ import annotations

import csv
import io
import itertools
import json
import logging
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import cache
from .classifier import fit_kernel_regression, fit_svm_multiclass_path, one_hot, predict
from .data import LabeledDataset, featurize, make_folds, parse_dataset
from .kernel import ArchConfig, GramMatrix, gram_matrix, normalize_gram

log = logging.getLogger(__name__)

PROTOCOL = {
    "per-fold": "10-fold CV; classifier hyperparameter chosen per fold by that fold's "
                "validation accuracy; mean/std (population) of validation accuracies",
    "global": "k-fold CV; one classifier hyperparameter chosen by mean validation accuracy "
              "across folds; mean/std (population) of validation accuracies",
}


def c_grid(count: int = 120, lo: float = 1e-2, hi: float = 1e4) -> list[float]:
    """``count`` log-evenly spaced values from ``lo`` to ``hi`` inclusive."""
    if count < 2 or not 0 < lo < hi:
        raise ValueError("need count >= 2 and 0 < lo < hi")
    values = np.geomspace(lo, hi, count)
    values[0], values[-1] = lo, hi
    return values.tolist()


def parse_grid(text: str) -> list[float]:
    """``COUNT:LO:HI`` (log grid) or a comma-separated list."""
    if text.count(":") == 2:
        count, lo, hi = text.split(":")
        return c_grid(int(count), float(lo), float(hi))
    return [float(x) for x in text.split(",") if x.strip()]


@dataclass
class ExperimentConfig:
    dataset: str
    feature_mode: str = "tags"
    blocks: list = field(default_factory=lambda: [2])
    mlp_layers: list = field(default_factory=lambda: [1])
    scalings: list = field(default_factory=lambda: ["sum"])
    jk: list = field(default_factory=lambda: [False])
    c_sigma: float = 2.0
    classifier: str = "svm"
    c_values: list = field(default_factory=c_grid)
    # ridge values are multiples of the mean training-kernel diagonal
    ridge_values: list = field(default_factory=lambda: [0.0] + np.geomspace(1e-6, 1.0, 7).tolist())
    folds: int = 10
    seed: int = 0
    normalize_gram: bool = False
    cache_dir: str | None = None
    output: str | None = None
    output_format: str = "json"
    workers: int = 1
    selection: str = "per-fold"

    def __post_init__(self):
        for name in ("blocks", "mlp_layers", "scalings", "jk", "c_values", "ridge_values"):
            if not list(getattr(self, name)):
                raise ValueError(f"grid {name!r} is empty")
        if self.folds < 2:
            raise ValueError("folds must be >= 2")
        if self.classifier not in ("svm", "regression", "both"):
            raise ValueError(f"unknown classifier {self.classifier!r}")
        if self.selection not in PROTOCOL:
            raise ValueError(f"unknown selection {self.selection!r}")

    def archs(self) -> list[ArchConfig]:
        return [ArchConfig(l, r, s, j, self.c_sigma) for l, r, s, j in
                itertools.product(self.blocks, self.mlp_layers, self.scalings, self.jk)]


@dataclass
class ConfigResult:
    arch: str
    classifier: str
    mean: float = float("nan")
    std: float = float("nan")
    fold_accuracies: list = field(default_factory=list)
    best_hyper: list = field(default_factory=list)
    wall_time: float = 0.0
    status: str = "ok"

    @classmethod
    def from_folds(cls, arch, classifier, accs, hypers, wall):
        accs = [float(a) for a in accs]
        return cls(arch, classifier, float(np.mean(accs)), float(np.std(accs)), accs,
                   [float(h) for h in hypers], wall)


@dataclass
class CvResult:
    dataset: str = ""
    protocol: str = ""
    configs: list = field(default_factory=list)

    def best(self) -> ConfigResult | None:
        ok = [c for c in self.configs if c.status == "ok"]
        return max(ok, key=lambda c: c.mean) if ok else None


def fold_accuracy_table(gram: np.ndarray, labels: np.ndarray, num_classes: int,
                        folds, kind: str, hypers) -> np.ndarray:
    """Validation accuracy for every (fold, hyperparameter)."""
    if not np.all(np.isfinite(gram)):
        raise ValueError("Gram matrix has non-finite entries")
    n = len(labels)
    acc = np.zeros((len(folds), len(hypers)))
    for f, val in enumerate(folds):
        train = np.setdiff1d(np.arange(n), val)
        k_tr = gram[np.ix_(train, train)]
        k_va = gram[np.ix_(val, train)]
        if kind == "svm":
            models = fit_svm_multiclass_path(k_tr, labels[train], hypers, num_classes)
        else:
            scale = float(np.mean(np.diag(k_tr)))
            y_tr = one_hot(labels[train], num_classes)
            models = [fit_kernel_regression(k_tr, y_tr, value * scale) for value in hypers]
        for h, model in enumerate(models):
            acc[f, h] = np.mean(predict(model, k_va) == labels[val])
    return acc


def select(acc: np.ndarray, hypers, selection: str):
    """Per-fold accuracies and chosen hyperparameters; ties go to the first grid value."""
    hypers = np.asarray(hypers, dtype=np.float64)
    if selection == "per-fold":
        best = np.argmax(acc, axis=1)
        return acc[np.arange(len(acc)), best], hypers[best]
    j = int(np.argmax(acc.mean(axis=0)))
    return acc[:, j], np.full(len(acc), hypers[j])


def load_or_compute_gram(ds: LabeledDataset, arch: ArchConfig, cache_dir=None,
                         workers: int = 1) -> GramMatrix:
    if cache_dir is not None:
        path = cache.cache_path(cache_dir, ds.content_hash(), arch)
        if path.exists():
            try:
                gm = cache.load_gram(path, arch, ds.name)
                if gm.values.shape == (len(ds), len(ds)):
                    return gm
            except cache.CacheMismatch as exc:
                log.warning("ignoring cache %s: %s", path, exc)
    gm = gram_matrix(ds, arch, workers)
    if cache_dir is not None:
        cache.save_gram(path, gm)
    return gm


def run_experiment(cfg: ExperimentConfig, dataset: LabeledDataset | None = None,
                   grams: dict | None = None) -> CvResult:
    """Grid over architectures x classifiers with k-fold CV.

    ``dataset`` overrides loading from ``cfg.dataset``; ``grams`` maps
    ``ArchConfig -> matrix`` to bypass kernel computation (used for toy kernels).
    """
    if dataset is None:
        dataset = featurize(parse_dataset(cfg.dataset), cfg.feature_mode)
    folds = make_folds(dataset, cfg.folds, cfg.seed)
    kinds = ["svm", "regression"] if cfg.classifier == "both" else [cfg.classifier]
    result = CvResult(dataset.name, PROTOCOL[cfg.selection])
    for arch in cfg.archs():
        t0 = time.perf_counter()
        try:
            if grams is not None and arch in grams:
                values = np.asarray(grams[arch], dtype=np.float64)
            else:
                gm = load_or_compute_gram(dataset, arch, cfg.cache_dir, cfg.workers)
                if cfg.normalize_gram:
                    gm = normalize_gram(gm)
                values = gm.values
        except Exception as exc:  # noqa: BLE001 - a failed config must not stop the grid
            log.warning("config %s failed: %s", arch.label(), exc)
            for kind in kinds:
                result.configs.append(ConfigResult(arch.label(), kind, status=f"failed: {exc}"))
            continue
        t_gram = time.perf_counter() - t0
        for kind in kinds:
            t1 = time.perf_counter()
            hypers = cfg.c_values if kind == "svm" else cfg.ridge_values
            try:
                acc = fold_accuracy_table(values, dataset.labels, dataset.num_classes,
                                          folds, kind, hypers)
            except Exception as exc:  # noqa: BLE001
                log.warning("config %s/%s failed: %s", arch.label(), kind, exc)
                result.configs.append(ConfigResult(arch.label(), kind, status=f"failed: {exc}"))
                continue
            accs, chosen = select(acc, hypers, cfg.selection)
            wall = t_gram + time.perf_counter() - t1
            entry = ConfigResult.from_folds(arch.label(), kind, accs, chosen, wall)
            log.info("%s %s: %.4f +- %.4f", entry.arch, kind, entry.mean, entry.std)
            result.configs.append(entry)
    if cfg.output:
        Path(cfg.output).write_text(report(result, cfg.output_format))
    return result


# -- reports -----------------------------------------------------------------

_CSV_FIELDS = ["arch", "classifier", "mean", "std", "fold_accuracies", "best_hyper",
               "wall_time", "status"]


def report(result: CvResult, fmt: str = "json") -> str:
    if fmt == "json":
        return json.dumps({"dataset": result.dataset, "protocol": result.protocol,
                           "configs": [asdict(c) for c in result.configs]}, indent=2)
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(_CSV_FIELDS)
        for c in result.configs:
            w.writerow([c.arch, c.classifier, repr(c.mean), repr(c.std),
                        ";".join(map(repr, c.fold_accuracies)),
                        ";".join(map(repr, c.best_hyper)), repr(c.wall_time), c.status])
        return buf.getvalue()
    if fmt == "table":
        lines = [f"# {result.dataset}: {result.protocol}" if result.dataset else
                 f"# {result.protocol}",
                 f"{'arch':<24} {'classifier':<10} {'accuracy':>17}  status"]
        ordered = sorted(result.configs, key=lambda c: (-c.mean if c.mean == c.mean else np.inf))
        for c in ordered:
            acc = f"{100 * c.mean:6.2f} ± {100 * c.std:5.2f}" if c.status == "ok" else "-"
            lines.append(f"{c.arch:<24} {c.classifier:<10} {acc:>17}  {c.status}")
        return "\n".join(lines) + "\n"
    raise ValueError(f"unknown format {fmt!r}")


def parse_report(text: str, fmt: str) -> CvResult:
    """Read back a json or csv report."""
    if fmt == "json":
        d = json.loads(text)
        return CvResult(d["dataset"], d["protocol"], [ConfigResult(**c) for c in d["configs"]])
    if fmt == "csv":
        rows = list(csv.DictReader(io.StringIO(text)))
        configs = []
        for r in rows:
            floats = lambda s: [float(x) for x in s.split(";") if x]
            configs.append(ConfigResult(r["arch"], r["classifier"], float(r["mean"]),
                                        float(r["std"]), floats(r["fold_accuracies"]),
                                        floats(r["best_hyper"]), float(r["wall_time"]),
                                        r["status"]))
        return CvResult(configs=configs)
    raise ValueError(f"cannot parse format {fmt!r}")
