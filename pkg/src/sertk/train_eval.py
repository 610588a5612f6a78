"""Splitting, the minibatch training loop, evaluation and report files."""

from __future__ import annotations

import csv
import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from sertk.audio_io import EMOTIONS, GENDERS, Manifest
from sertk.errors import EmptyTestSet, InsufficientClassSamples, NonFiniteLoss
from sertk.features import FeatureMatrix, apply_zscore, fit_zscore
from sertk.nn.layers import softmax_cross_entropy
from sertk.nn.model import CNNLSTM, ModelConfig, save_checkpoint
from sertk.nn.optim import RMSprop

log = logging.getLogger(__name__)

N_CLASSES = len(EMOTIONS)


# ---------------------------------------------------------------------------
# splitting

@dataclass
class SplitPlan:
    train_indices: list[int]
    test_indices: list[int]
    ratio: float
    seed: int
    stratified: bool


def split(manifest, ratio: float = 0.8, seed: int = 0, stratified: bool = True,
          genders: Optional[Sequence[str]] = None) -> SplitPlan:
    """Seeded train/test partition.

    ``manifest`` is a :class:`Manifest`, a :class:`FeatureMatrix` or a plain
    label sequence. When stratified, each stratum (emotion, or emotion and
    gender if ``genders`` is given) is shuffled on its own and its first
    ``ceil(ratio * n)`` members go to training.
    """
    if isinstance(manifest, (Manifest, FeatureMatrix)):
        labels = np.asarray(manifest.labels)
    else:
        labels = np.asarray(manifest, dtype=np.int64)
    classes, counts = np.unique(labels, return_counts=True)
    if len(labels) == 0 or counts.min() < 2:
        raise InsufficientClassSamples(
            f"every class needs >= 2 samples: {dict(zip(classes.tolist(), counts.tolist()))}")

    rng = np.random.default_rng(seed)
    if stratified:
        keys = [(int(lab), genders[i] if genders is not None else "")
                for i, lab in enumerate(labels)]
        strata: dict = {}
        for i, k in enumerate(keys):
            strata.setdefault(k, []).append(i)
        groups = [np.asarray(strata[k]) for k in sorted(strata)]
    else:
        groups = [np.arange(len(labels))]

    train, test = [], []
    for members in groups:
        perm = members[rng.permutation(len(members))]
        n_train = int(np.ceil(ratio * len(members) - 1e-9))
        train.extend(perm[:n_train].tolist())
        test.extend(perm[n_train:].tolist())
    if not test or not train:
        raise InsufficientClassSamples(f"ratio {ratio} leaves an empty "
                                       f"{'test' if not test else 'training'} set")
    return SplitPlan(sorted(train), sorted(test), ratio, seed, stratified)


# ---------------------------------------------------------------------------
# training

@dataclass
class TrainConfig:
    epochs: int = 370
    batch: int = 16
    lr: float = 1e-5
    decay: float = 1e-6
    rho: float = 0.9
    epsilon: float = 1e-8
    seed: int = 0

    @classmethod
    def from_run_config(cls, cfg: dict) -> "TrainConfig":
        t = cfg["train"]
        return cls(epochs=t["epochs"], batch=t["batch"], lr=float(t["lr"]),
                   decay=float(t["decay"]), rho=float(t["rho"]),
                   epsilon=float(t["epsilon"]), seed=t["seed"])


@dataclass
class Dataset:
    """Model-ready arrays: ``seq`` [N, T, C], ``glob`` [N, G], ``labels`` [N]."""

    seq: np.ndarray
    glob: np.ndarray
    labels: np.ndarray

    def __len__(self):
        return len(self.labels)

    @classmethod
    def from_matrix(cls, fm: FeatureMatrix, t_max: int = 70) -> "Dataset":
        seq, glob = fm.split_sequence(t_max)
        return cls(seq, glob, fm.labels.copy())


@dataclass
class TrainRun:
    loss_history: list[tuple[float, float]] = field(default_factory=list)
    config: Optional[TrainConfig] = None
    seed: int = 0
    wall_time: float = 0.0
    best_epoch: int = -1
    best_test_loss: float = float("inf")
    best_params: Optional[dict] = None


def dataset_loss(model: CNNLSTM, data: Dataset, batch: int = 64) -> float:
    total = 0.0
    for s in range(0, len(data), batch):
        logits = model.forward(data.seq[s:s + batch], data.glob[s:s + batch])
        loss, _ = softmax_cross_entropy(logits, data.labels[s:s + batch])
        total += loss * len(logits)
    return total / len(data)


def train(model: CNNLSTM, train_set: Dataset, test_set: Dataset,
          config: TrainConfig = TrainConfig(), progress=None) -> TrainRun:
    """Minibatch RMSprop over ``config.epochs`` epochs.

    Each epoch reshuffles with the run's generator and keeps the final partial
    batch. The mean training loss (dropout active) and the full test loss
    (eval mode) are recorded per epoch; the parameters with the lowest test
    loss are kept in ``best_params``.
    """
    started = time.perf_counter()
    rng = np.random.default_rng(config.seed)
    opt = RMSprop(config.lr, config.decay, config.rho, config.epsilon)
    run = TrainRun(config=config, seed=config.seed)
    n = len(train_set)
    params = model.params()
    for epoch in range(config.epochs):
        order = rng.permutation(n)
        total = 0.0
        for b, s in enumerate(range(0, n, config.batch)):
            idx = order[s:s + config.batch]
            loss = model.loss_and_grads(train_set.seq[idx], train_set.glob[idx],
                                        train_set.labels[idx], rng=rng, train=True)
            if not np.isfinite(loss):
                raise NonFiniteLoss(f"epoch {epoch} batch {b}: loss {loss} on samples "
                                    f"{idx.tolist()} (lr_t={opt.current_lr():.3g})")
            opt.step(params, model.grads())
            total += loss * len(idx)
        test_loss = dataset_loss(model, test_set)
        if not np.isfinite(test_loss):
            raise NonFiniteLoss(f"epoch {epoch}: test loss {test_loss}")
        run.loss_history.append((total / n, test_loss))
        if test_loss < run.best_test_loss:
            run.best_test_loss = test_loss
            run.best_epoch = epoch
            run.best_params = {k: v.copy() for k, v in params.items()}
        if progress is not None:
            progress(epoch, total / n, test_loss)
    run.wall_time = time.perf_counter() - started
    return run


# ---------------------------------------------------------------------------
# evaluation

class ConfusionMatrix:
    """Counts indexed ``[true, predicted]``."""

    def __init__(self, counts):
        self.counts = np.asarray(counts, dtype=np.int64)

    @classmethod
    def from_predictions(cls, y_true, y_pred, n_classes: int = N_CLASSES) -> "ConfusionMatrix":
        counts = np.zeros((n_classes, n_classes), dtype=np.int64)
        np.add.at(counts, (np.asarray(y_true, dtype=np.int64), np.asarray(y_pred, dtype=np.int64)), 1)
        return cls(counts)

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def per_class_accuracy(self) -> np.ndarray:
        """Recall per true class; NaN where a class has no samples."""
        rows = self.counts.sum(axis=1).astype(np.float64)
        diag = np.diag(self.counts).astype(np.float64)
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(rows > 0, diag / np.where(rows > 0, rows, 1), np.nan)

    def overall_accuracy(self) -> float:
        return float(np.trace(self.counts) / self.total) if self.total else float("nan")

    def __add__(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
        return ConfusionMatrix(self.counts + other.counts)


@dataclass
class Evaluation:
    confusion: ConfusionMatrix
    predictions: np.ndarray
    probabilities: np.ndarray

    @property
    def per_class(self) -> np.ndarray:
        return self.confusion.per_class_accuracy()

    @property
    def overall(self) -> float:
        return self.confusion.overall_accuracy()


def evaluate(model: CNNLSTM, test_set: Dataset) -> Evaluation:
    if len(test_set) == 0:
        raise EmptyTestSet("cannot evaluate on an empty test set")
    probs = model.predict_proba(test_set.seq, test_set.glob)
    # argmax returns the first maximum: exact ties go to the lowest class code
    pred = np.argmax(probs, axis=1)
    cm = ConfusionMatrix.from_predictions(test_set.labels, pred, model.config.n_classes)
    return Evaluation(cm, pred, probs)


# ---------------------------------------------------------------------------
# reporting

def _fmt(v: float) -> str:
    return "nan" if np.isnan(v) else f"{v:.6f}"


def write_loss_csv(run: TrainRun, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("epoch", "train_loss", "test_loss"))
        for e, (tr, te) in enumerate(run.loss_history):
            w.writerow((e + 1, repr(float(tr)), repr(float(te))))


def write_confusion_csv(cm: ConfusionMatrix, path, names: Sequence[str] = EMOTIONS) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["true\\pred", *names])
        for name, row in zip(names, cm.counts):
            w.writerow([name, *row.tolist()])


def write_accuracy(cm: ConfusionMatrix, csv_path, txt_path=None,
                   names: Sequence[str] = EMOTIONS) -> None:
    acc = cm.per_class_accuracy()
    with open(csv_path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("class", "accuracy"))
        for name, a in zip(names, acc):
            w.writerow((name, _fmt(a)))
        w.writerow(("overall", _fmt(cm.overall_accuracy())))
    if txt_path is not None:
        cells = ["n/a" if np.isnan(a) else f"{100 * a:.2f}%" for a in acc]
        width = max(len(s) for s in list(names) + cells) + 2
        head = "Classification".ljust(16) + "".join(n.rjust(width) for n in names)
        body = "Recall (1 run)".ljust(16) + "".join(c.rjust(width) for c in cells)
        overall = cm.overall_accuracy()
        tail = "overall accuracy: " + ("n/a" if np.isnan(overall) else f"{100 * overall:.2f}%")
        Path(txt_path).write_text(f"{head}\n{body}\n{tail} over {cm.total} samples\n",
                                  encoding="utf-8")


def report(run_dir, run: Optional[TrainRun], cm: ConfusionMatrix) -> None:
    """Write loss.csv, confusion.csv, accuracy.csv and accuracy.txt into ``run_dir``."""
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    if run is not None:
        write_loss_csv(run, run_dir / "loss.csv")
    write_confusion_csv(cm, run_dir / "confusion.csv")
    write_accuracy(cm, run_dir / "accuracy.csv", run_dir / "accuracy.txt")


# ---------------------------------------------------------------------------
# end-to-end run over feature matrices

def _prepare(fm: FeatureMatrix, means, stds, t_max) -> Dataset:
    norm = FeatureMatrix(apply_zscore(fm.rows, means, stds), fm.labels, fm.column_names, fm.genders)
    return Dataset.from_matrix(norm, t_max)


def train_group(out_dir, train_fm: FeatureMatrix, test_fm: FeatureMatrix,
                model_cfg: ModelConfig, train_cfg: TrainConfig, run_config: dict,
                group: str = "pooled", t_max: int = 70, progress=None):
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    means, stds = fit_zscore(train_fm.rows)
    tr = _prepare(train_fm, means, stds, t_max)
    te = _prepare(test_fm, means, stds, t_max)
    model = CNNLSTM(model_cfg)
    run = train(model, tr, te, train_cfg, progress)
    meta = dict(run_config, group=group)
    extra = {"norm_mean": means, "norm_std": stds}
    save_checkpoint(out_dir / "model.ckpt", model, meta, extra)
    if run.best_params is not None:
        best = CNNLSTM(model_cfg)
        best.load_params(run.best_params)
        save_checkpoint(out_dir / "best.ckpt", best, meta, extra)
    ev = evaluate(model, te)
    report(out_dir, run, ev.confusion)
    return run, ev


def _group_rows(fm: FeatureMatrix, gender: str):
    return [i for i, g in enumerate(fm.genders) if g == gender]


def run_training(run_dir, train_fm: FeatureMatrix, test_fm: FeatureMatrix,
                 run_config: dict, model_cfg: ModelConfig, progress=None) -> dict:
    """Train pooled or per-gender models and write the run directory.

    Per-gender runs put complete artifacts under ``male/`` and ``female/``;
    the top level then holds the summed confusion matrix and the
    sample-weighted mean of the two loss curves.
    """
    run_dir = Path(run_dir)
    run_dir.mkdir(parents=True, exist_ok=True)
    train_cfg = TrainConfig.from_run_config(run_config)
    started = time.perf_counter()
    groups = []
    if run_config["data"]["per_gender"]:
        for g in GENDERS:
            tr_idx, te_idx = _group_rows(train_fm, g), _group_rows(test_fm, g)
            if tr_idx and te_idx:
                groups.append((g, train_fm.subset(tr_idx), test_fm.subset(te_idx)))
            elif tr_idx or te_idx:
                log.warning("gender %s has %d train / %d test rows; skipped",
                            g, len(tr_idx), len(te_idx))
        if not groups:
            raise EmptyTestSet("no gender has both training and test rows")
    else:
        groups.append(("pooled", train_fm, test_fm))

    results = {}
    for name, tr, te in groups:
        sub = run_dir / name if len(groups) > 1 or name != "pooled" else run_dir
        results[name] = (train_group(sub, tr, te, model_cfg, train_cfg, run_config, name,
                                     progress=progress), len(te))

    if list(results) != ["pooled"]:
        cm = sum((r[0][1].confusion for r in results.values()),
                 ConfusionMatrix(np.zeros((N_CLASSES, N_CLASSES), dtype=np.int64)))
        combined = TrainRun(config=train_cfg, seed=train_cfg.seed)
        n_tr = {k: len(_group_rows(train_fm, k)) for k in results}
        for e in range(train_cfg.epochs):
            tr_loss = sum(results[k][0][0].loss_history[e][0] * n_tr[k] for k in results)
            te_loss = sum(results[k][0][0].loss_history[e][1] * results[k][1] for k in results)
            combined.loss_history.append((tr_loss / sum(n_tr.values()),
                                          te_loss / sum(r[1] for r in results.values())))
        report(run_dir, combined, cm)
    else:
        cm = results["pooled"][0][1].confusion

    summary = {
        "config": run_config,
        "seed": train_cfg.seed,
        "groups": {k: {"train": int(len(_group_rows(train_fm, k)) if k != "pooled" else len(train_fm)),
                       "test": int(r[1]),
                       "best_epoch": int(r[0][0].best_epoch + 1),
                       "overall_accuracy": r[0][1].overall}
                   for k, r in results.items()},
        "overall_accuracy": cm.overall_accuracy(),
        "wall_time": time.perf_counter() - started,
    }
    (run_dir / "run.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n",
                                      encoding="utf-8")
    return summary
