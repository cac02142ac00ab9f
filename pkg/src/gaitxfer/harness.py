"""Subject-disjoint evaluation: splits, metrics, aggregation, sensor sweep.

Splitting happens at the person level so no subject's frames appear on
both sides. Each split draws an equal number of subjects per class into
training (half the smaller class, rounded down) and leaves the rest for
test. Metrics are frame-level, combined support-weighted, and averaged
over splits as mean plus population standard deviation. The sensor sweep
reruns the feature-reduction and classification path once per sensor.
"""

from __future__ import annotations

import json
import logging
from collections.abc import Mapping
from dataclasses import dataclass, field

import numpy as np

from .autoenc import encode_batch
from .classify import build_mlp, predict, train_linear_svm, train_mlp
from .reduce import fit_pca, pca_transform
from .sigprep import slice_sensor

logger = logging.getLogger(__name__)

CLASSIFIER_KINDS = ("mlp", "svm")
METRIC_NAMES = ("accuracy", "precision", "recall", "f1")


@dataclass(frozen=True)
class SubjectSplit:
    split_id: int
    train_subjects: frozenset
    test_subjects: frozenset
    seed: int

    def __post_init__(self):
        object.__setattr__(self, "train_subjects", frozenset(self.train_subjects))
        object.__setattr__(self, "test_subjects", frozenset(self.test_subjects))
        overlap = self.train_subjects & self.test_subjects
        if overlap:
            raise ValueError(f"subjects on both sides of split {self.split_id}: {sorted(overlap)}")
        if not self.train_subjects or not self.test_subjects:
            raise ValueError(f"split {self.split_id} has an empty side")


@dataclass
class MetricsReport:
    config: dict
    n_splits: int
    per_split: list
    aggregate: dict
    splits: list = field(default_factory=list)


def _subject_label_map(dataset):
    """Subject-to-class mapping from frames, recordings, or a ready mapping."""
    if isinstance(dataset, Mapping):
        return dict(dataset)
    mapping = {}
    for item in dataset:
        subject = item.subject_id
        label = item.label if hasattr(item, "label") else item.class_label
        seen = mapping.get(subject)
        if seen is not None and seen != label:
            raise ValueError(f"subject {subject!r} carries conflicting labels {seen} and {label}")
        mapping[subject] = label
    return mapping


def make_subject_splits(dataset, n_splits=3, seed=42):
    """Deterministic class-balanced subject splits.

    Each class contributes m = floor(smallest-class-count / 2) subjects
    to training; everyone else goes to test. Split k draws from its own
    sub-seed, so the list is reproducible element-wise.
    """
    mapping = _subject_label_map(dataset)
    if not mapping:
        raise ValueError("no subjects to split")
    by_class = {}
    for subject, label in mapping.items():
        by_class.setdefault(label, []).append(subject)
    for label, members in sorted(by_class.items()):
        if len(members) < 2:
            raise ValueError(
                f"class {label} has {len(members)} subject(s); need at least 2 per class"
            )
    m = min(len(members) for members in by_class.values()) // 2
    splits = []
    for split_id in range(n_splits):
        rng = np.random.default_rng([seed, split_id])
        train, test = set(), set()
        for label in sorted(by_class):
            members = sorted(by_class[label])
            order = rng.permutation(len(members))
            train.update(members[i] for i in order[:m])
            test.update(members[i] for i in order[m:])
        splits.append(
            SubjectSplit(
                split_id=split_id,
                train_subjects=frozenset(train),
                test_subjects=frozenset(test),
                seed=seed,
            )
        )
    return splits


def compute_metrics(predictions, labels, n_classes=None):
    """Accuracy, support-weighted precision/recall/F1, confusion matrix.

    The confusion matrix is indexed [true, predicted]. Per-class scores
    use the direct count formulas with 0 substituted for empty
    denominators, then combine weighted by true-class support.
    """
    predictions = np.asarray(predictions, dtype=np.int64)
    labels = np.asarray(labels, dtype=np.int64)
    if predictions.size == 0:
        raise ValueError("no predictions to score")
    if predictions.shape != labels.shape or predictions.ndim != 1:
        raise ValueError(
            f"predictions and labels must be equal-length 1-d sequences, "
            f"got {predictions.shape} and {labels.shape}"
        )
    if predictions.min() < 0 or labels.min() < 0:
        raise ValueError("class indices must be non-negative")
    highest = int(max(predictions.max(), labels.max()))
    k = highest + 1 if n_classes is None else n_classes
    if highest >= k:
        raise ValueError(f"class index {highest} out of range for {k} classes")
    confusion = np.zeros((k, k), dtype=np.int64)
    np.add.at(confusion, (labels, predictions), 1)

    support = confusion.sum(axis=1).astype(np.float64)
    tp = np.diag(confusion).astype(np.float64)
    predicted = confusion.sum(axis=0).astype(np.float64)
    with np.errstate(invalid="ignore", divide="ignore"):
        precision_c = np.where(predicted > 0, tp / predicted, 0.0)
        recall_c = np.where(support > 0, tp / support, 0.0)
        denom = precision_c + recall_c
        f1_c = np.where(denom > 0, 2.0 * precision_c * recall_c / denom, 0.0)
    total = support.sum()
    return {
        "accuracy": float(tp.sum() / total),
        "precision": float((precision_c * support).sum() / total),
        "recall": float((recall_c * support).sum() / total),
        "f1": float((f1_c * support).sum() / total),
        "confusion": confusion.tolist(),
        "support": int(total),
    }


def aggregate_splits(per_split):
    """Mean and population std per metric, plus a percent-scale label."""
    if not per_split:
        raise ValueError("no split results to aggregate")
    aggregate = {}
    for name in METRIC_NAMES:
        values = np.array([split[name] for split in per_split], dtype=np.float64)
        mean = float(values.mean())
        # population spread across the splits; exact 0 when every split agrees
        std = 0.0 if np.all(values == values[0]) else float(values.std())
        aggregate[name] = {
            "mean": mean,
            "std": std,
            "formatted": f"{100.0 * mean:.2f}±{100.0 * std:.2f}",
        }
    return aggregate


def _split_seed(seed, split_id):
    return int(np.random.default_rng([seed, split_id, 0xC1]).integers(2**31))


def _standardize(train_x, test_x):
    # train-split statistics only; constant columns are centered, not scaled
    mean = train_x.mean(axis=0)
    std = train_x.std(axis=0)
    scale = np.where(std < 1e-8, 1.0, std)
    return (train_x - mean) / scale, (test_x - mean) / scale


def _fit_and_score(train_x, train_y, test_x, test_y, classifier, seed, options, n_classes):
    if classifier == "mlp":
        model = build_mlp(train_x.shape[1], n_classes, seed=seed)
        train_mlp(model, train_x, train_y, seed=seed, **options)
    elif classifier == "svm":
        if n_classes != 2:
            raise ValueError(f"the linear SVM is binary; got {n_classes} classes")
        model = train_linear_svm(train_x, train_y, seed=seed, **options)
    else:
        raise ValueError(f"unknown classifier {classifier!r}; expected one of {CLASSIFIER_KINDS}")
    return compute_metrics(predict(model, test_x), test_y, n_classes=n_classes)


def evaluate_features(vectors, labels, subjects, splits, *, classifier="mlp", pca_k=None,
                      pca_scope="train", seed=42, config=None, classifier_options=None):
    """Train and score one classifier per subject split; returns a report.

    When pca_k is given, vectors are projected per split by a PCA fitted
    on that split's training rows only (pca_scope "train", the
    leakage-safe default) or once on every row (pca_scope "all", kept
    for comparability with evaluations that pooled frames before
    splitting). Without PCA, classifier inputs are standardized per
    feature with the training split's mean and spread; with PCA, the
    component scores keep their variance weighting.
    """
    vectors = np.asarray(vectors)
    labels = np.asarray(labels, dtype=np.int64)
    subjects = np.asarray(subjects)
    if vectors.ndim != 2:
        raise ValueError(f"vectors must be n x d, got shape {vectors.shape}")
    if not (len(vectors) == len(labels) == len(subjects)):
        raise ValueError("vectors, labels, and subjects disagree in length")
    if not splits:
        raise ValueError("no splits supplied")
    if pca_scope not in ("train", "all"):
        raise ValueError(f"pca_scope must be 'train' or 'all', got {pca_scope!r}")
    options = dict(classifier_options or {})
    n_classes = int(labels.max()) + 1

    shared_pca = None
    if pca_k is not None and pca_scope == "all":
        shared_pca = fit_pca(vectors, pca_k)

    per_split = []
    for split in splits:
        train_mask = np.isin(subjects, sorted(split.train_subjects))
        test_mask = np.isin(subjects, sorted(split.test_subjects))
        leaked = set(subjects[train_mask]) & set(subjects[test_mask])
        if leaked:
            raise AssertionError(f"subject leakage across split {split.split_id}: {sorted(leaked)}")
        if not train_mask.any() or not test_mask.any():
            raise ValueError(f"split {split.split_id} selects no frames on one side")
        train_x, test_x = vectors[train_mask], vectors[test_mask]
        if pca_k is not None:
            pca = shared_pca if shared_pca is not None else fit_pca(train_x, pca_k)
            train_x = pca_transform(pca, train_x)
            test_x = pca_transform(pca, test_x)
        else:
            # principal-component scores keep their variance weighting;
            # direct feature vectors are standardized on train statistics
            train_x, test_x = _standardize(train_x, test_x)
        metrics = _fit_and_score(
            train_x,
            labels[train_mask],
            test_x,
            labels[test_mask],
            classifier,
            _split_seed(seed, split.split_id),
            options,
            n_classes,
        )
        per_split.append(metrics)
        logger.info(
            "split %d: accuracy %.4f f1 %.4f (train %d / test %d frames)",
            split.split_id,
            metrics["accuracy"],
            metrics["f1"],
            int(train_mask.sum()),
            int(test_mask.sum()),
        )

    report_config = dict(config or {})
    report_config.setdefault("classifier", classifier)
    if pca_k is not None:
        report_config.setdefault("pca_k", pca_k)
        report_config.setdefault("pca_scope", pca_scope)
    report_config.setdefault("seed", seed)
    return MetricsReport(
        config=report_config,
        n_splits=len(splits),
        per_split=per_split,
        aggregate=aggregate_splits(per_split),
        splits=list(splits),
    )


def majority_vote(predictions, subjects):
    """Per-subject label by frame-vote; ties resolve to the lower label."""
    predictions = np.asarray(predictions, dtype=np.int64)
    subjects = np.asarray(subjects)
    votes = {}
    for subject in np.unique(subjects):
        counts = np.bincount(predictions[subjects == subject])
        votes[subject] = int(counts.argmax())
    return votes


def subject_level_metrics(predictions, labels, subjects, n_classes=None):
    """Optional coarser report: one majority-voted decision per subject."""
    labels = np.asarray(labels, dtype=np.int64)
    subjects = np.asarray(subjects)
    votes = majority_vote(predictions, subjects)
    ordered = sorted(votes)
    true = []
    for subject in ordered:
        subject_labels = np.unique(labels[subjects == subject])
        if len(subject_labels) != 1:
            raise ValueError(f"subject {subject!r} carries multiple labels")
        true.append(int(subject_labels[0]))
    return compute_metrics([votes[s] for s in ordered], true, n_classes=n_classes)


def _batch_latents(frames, encoder, sensors):
    """Per-sensor latent maps for every stacked frame: {sensor: (B, C, T)}."""
    latents = {}
    for sensor in sensors:
        sliced = [slice_sensor(frame, sensor) for frame in frames]
        latents[sensor] = encode_batch(encoder, sliced)
    return latents


def per_sensor_sweep(frames, encoder, splits, *, sensors=None, classifier="mlp",
                     pca_k=1600, pca_scope="train", seed=42, classifier_options=None):
    """F1 per individual sensor plus the all-sensors row.

    Every row reruns the same reduction and classification path on that
    sensor's latents alone (PCA refit per sensor), so rows are directly
    comparable. Returns (rows, reports) where rows carry the plot-ready
    numbers and reports the full per-row MetricsReport.
    """
    if not frames:
        raise ValueError("no frames to sweep")
    if sensors is None:
        sensors = frames[0].sensors
    labels = np.array([frame.label for frame in frames], dtype=np.int64)
    subjects = np.array([frame.subject_id for frame in frames])
    latents = _batch_latents(frames, encoder, sensors)

    rows = []
    reports = {}
    n = len(frames)
    for sensor in sensors:
        vectors = latents[sensor].reshape(n, -1)
        report = evaluate_features(
            vectors,
            labels,
            subjects,
            splits,
            classifier=classifier,
            pca_k=pca_k,
            pca_scope=pca_scope,
            seed=seed,
            config={"sensors": [sensor], "feature_kind": "unconstrained_pca"},
            classifier_options=classifier_options,
        )
        reports[sensor] = report
        f1 = report.aggregate["f1"]
        rows.append(
            {"sensor": sensor, "f1_mean": f1["mean"], "f1_std": f1["std"],
             "formatted": f1["formatted"]}
        )

    stacked = np.concatenate([latents[s].reshape(n, -1) for s in sensors], axis=1)
    report = evaluate_features(
        stacked,
        labels,
        subjects,
        splits,
        classifier=classifier,
        pca_k=pca_k,
        pca_scope=pca_scope,
        seed=seed,
        config={"sensors": list(sensors), "feature_kind": "unconstrained_pca"},
        classifier_options=classifier_options,
    )
    reports["all"] = report
    f1 = report.aggregate["f1"]
    rows.append(
        {"sensor": "all", "f1_mean": f1["mean"], "f1_std": f1["std"], "formatted": f1["formatted"]}
    )
    return rows, reports


def sweep_rows_to_csv(rows):
    """Plot-ready delimited form of the sweep table."""
    lines = ["sensor,f1_mean,f1_std"]
    for row in rows:
        lines.append(f"{row['sensor']},{row['f1_mean']!r},{row['f1_std']!r}")
    return "\n".join(lines) + "\n"


def report_to_json(report):
    """Canonical machine-readable form; identical inputs give identical bytes."""
    payload = {
        "config": report.config,
        "n_splits": report.n_splits,
        "per_split": report.per_split,
        "aggregate": report.aggregate,
        "splits": [
            {
                "split_id": split.split_id,
                "train_subjects": sorted(split.train_subjects),
                "test_subjects": sorted(split.test_subjects),
                "seed": split.seed,
            }
            for split in report.splits
        ],
    }
    return json.dumps(payload, sort_keys=True, indent=2) + "\n"


def report_from_json(text):
    payload = json.loads(text)
    return MetricsReport(
        config=payload["config"],
        n_splits=payload["n_splits"],
        per_split=payload["per_split"],
        aggregate=payload["aggregate"],
        splits=[
            SubjectSplit(
                split_id=item["split_id"],
                train_subjects=frozenset(item["train_subjects"]),
                test_subjects=frozenset(item["test_subjects"]),
                seed=item["seed"],
            )
            for item in payload.get("splits", [])
        ],
    )


def format_table(report, title=None):
    """Human-readable mean-and-spread table over the four headline metrics."""
    label = title or " / ".join(
        str(report.config.get(key)) for key in ("feature_kind", "classifier")
        if report.config.get(key)
    ) or "evaluation"
    header = f"{'':24s}" + "".join(f"{name.capitalize():>16s}" for name in METRIC_NAMES)
    row = f"{label:24s}" + "".join(
        f"{report.aggregate[name]['formatted']:>16s}" for name in METRIC_NAMES
    )
    note = f"(averaged over {report.n_splits} subject splits)"
    return "\n".join([header, row, note]) + "\n"
