"""File-artifact pipeline stages behind the command-line interface.

Each stage reads the artifacts earlier stages wrote under the output
directory and writes its own, so runs can resume and stages can be
tested in isolation. Every artifact embeds the configuration
fingerprint and seed; the report stage refuses to combine artifacts
whose fingerprints disagree.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import logging
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import autoenc
from .classify import (
    build_mlp,
    mlp_to_archive,
    predict,
    svm_to_archive,
    train_linear_svm,
    train_mlp,
)
from .dataio import (
    ModelArchive,
    benchmark_source_spec,
    benchmark_target_spec,
    dataset_fingerprint,
    load_dataset,
    load_model,
    read_manifest,
    save_dataset,
    save_model,
    sweep_probe_spec,
    synth_generate,
)
from .harness import (
    compute_metrics,
    evaluate_features,
    format_table,
    make_subject_splits,
    per_sensor_sweep,
    report_from_json,
    report_to_json,
    sweep_rows_to_csv,
)
from .reduce import FEATURE_KINDS, fit_pca, pca_transform
from .reduce import to_archive as pca_to_archive
from .sigprep import (
    CANONICAL_SENSOR_ORDER,
    Frame,
    extract_frames,
    normalize,
    slice_sensor,
    stack_sensors,
)
from .statfeat import stat_features

logger = logging.getLogger(__name__)

SYNTH_KINDS = ("benchmark", "probe")
# excluded from the run-identity fingerprint: file locations plus the axes a
# report legitimately compares across (variant, classifier, sensor subset)
_IDENTITY_EXCLUDED = (
    "out_dir",
    "source_manifest",
    "target_manifest",
    "variant",
    "classifier",
    "sensors",
    "classifier_options",
)


class PipelineError(RuntimeError):
    """A stage cannot run; the message says what to do about it."""


@dataclass(frozen=True)
class PipelineConfig:
    out_dir: str = "gxfer_out"
    source_manifest: str = None  # defaults to <out_dir>/source/manifest.csv
    target_manifest: str = None  # defaults to <out_dir>/target/manifest.csv
    variant: str = "unconstrained_pca"
    classifier: str = "mlp"
    pca_k: int = 1600
    pca_scope: str = "train"
    n_splits: int = 3
    sensors: tuple = CANONICAL_SENSOR_ORDER
    seed: int = 42
    synth_kind: str = "benchmark"
    probe_sensor: str = "left_ankle"
    classifier_options: dict = field(default_factory=dict)
    autoencoder: autoenc.AutoencoderConfig = field(default_factory=autoenc.AutoencoderConfig)

    def __post_init__(self):
        if self.variant not in FEATURE_KINDS:
            raise ValueError(f"variant must be one of {FEATURE_KINDS}, got {self.variant!r}")
        if self.classifier not in ("mlp", "svm"):
            raise ValueError(f"classifier must be 'mlp' or 'svm', got {self.classifier!r}")
        if self.pca_scope not in ("train", "all"):
            raise ValueError(f"pca_scope must be 'train' or 'all', got {self.pca_scope!r}")
        if self.synth_kind not in SYNTH_KINDS:
            raise ValueError(f"synth_kind must be one of {SYNTH_KINDS}, got {self.synth_kind!r}")
        if self.pca_k < 1:
            raise ValueError(f"pca_k must be positive, got {self.pca_k}")
        if self.n_splits < 1:
            raise ValueError(f"n_splits must be positive, got {self.n_splits}")
        object.__setattr__(self, "sensors", tuple(self.sensors))
        object.__setattr__(self, "classifier_options", dict(self.classifier_options))

    @property
    def source_manifest_path(self):
        if self.source_manifest is not None:
            return Path(self.source_manifest)
        return Path(self.out_dir) / "source" / "manifest.csv"

    @property
    def target_manifest_path(self):
        if self.target_manifest is not None:
            return Path(self.target_manifest)
        return Path(self.out_dir) / "target" / "manifest.csv"


def config_to_dict(cfg):
    out = dataclasses.asdict(cfg)
    out["sensors"] = list(cfg.sensors)
    return out


def config_from_dict(data):
    data = dict(data)
    ae = data.pop("autoencoder", None)
    if ae is not None:
        data["autoencoder"] = (
            ae if isinstance(ae, autoenc.AutoencoderConfig) else autoenc.AutoencoderConfig(**ae)
        )
    unknown = set(data) - {f.name for f in dataclasses.fields(PipelineConfig)}
    if unknown:
        raise ValueError(f"unknown config keys: {sorted(unknown)}")
    return PipelineConfig(**data)


def load_config(path):
    path = Path(path)
    if not path.exists():
        raise PipelineError(f"config file {path} does not exist")
    try:
        return config_from_dict(json.loads(path.read_text()))
    except (ValueError, TypeError) as exc:
        raise PipelineError(f"bad config file {path}: {exc}") from exc


def apply_seed(cfg, seed):
    """Override the master seed everywhere it is recorded."""
    return dataclasses.replace(
        cfg, seed=seed, autoencoder=dataclasses.replace(cfg.autoencoder, seed=seed)
    )


def config_fingerprint(cfg):
    """Run-identity hash: seed, split count, PCA policy, autoencoder recipe.

    Artifacts sharing this hash came from the same data-and-splits
    universe and may appear in one combined report; variant, classifier,
    and sensor choice are the axes such a report compares, so they stay
    out of the hash (each artifact still records them in its config).
    """
    payload = config_to_dict(cfg)
    for name in _IDENTITY_EXCLUDED:
        payload.pop(name, None)
    canonical = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()


def _write_text(path, text):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)
    return path


# ---------------------------------------------------------------------------
# frame and feature archives


def frames_to_archive(frames, *, role, fingerprint, class_names, cfg):
    sensors = frames[0].sensors
    for frame in frames:
        if frame.sensors != sensors:
            raise ValueError("all frames in one archive must share a sensor tuple")
    subjects = sorted({frame.subject_id for frame in frames})
    index = {s: i for i, s in enumerate(subjects)}
    return ModelArchive(
        kind="frames",
        config={
            "role": role,
            "sensors": list(sensors),
            "subjects": subjects,
            "class_names": list(class_names),
        },
        tensors={
            "data": np.stack([frame.data for frame in frames]),
            "labels": np.array([frame.label for frame in frames], dtype=np.int64),
            "subject_idx": np.array([index[frame.subject_id] for frame in frames], dtype=np.int64),
            "recording_index": np.array(
                [frame.recording_index for frame in frames], dtype=np.int64
            ),
            "window_index": np.array([frame.window_index for frame in frames], dtype=np.int64),
        },
        provenance={
            "seed": cfg.seed,
            "config_fingerprint": config_fingerprint(cfg),
            "dataset_fingerprint": fingerprint,
        },
    )


def frames_from_archive(archive):
    if archive.kind != "frames":
        raise ValueError(f"expected a frames archive, got kind {archive.kind!r}")
    subjects = archive.config["subjects"]
    sensors = tuple(archive.config["sensors"])
    data = archive.tensors["data"]
    labels = archive.tensors["labels"]
    subject_idx = archive.tensors["subject_idx"]
    rec_idx = archive.tensors["recording_index"]
    win_idx = archive.tensors["window_index"]
    frames = [
        Frame(
            data=data[i],
            subject_id=subjects[subject_idx[i]],
            recording_index=int(rec_idx[i]),
            window_index=int(win_idx[i]),
            sensors=sensors,
            label=int(labels[i]),
        )
        for i in range(len(data))
    ]
    return frames, archive


def _load_artifact(path, hint):
    path = Path(path)
    if not path.exists():
        raise PipelineError(f"missing artifact {path}; run `gaitxfer {hint}` first")
    return load_model(path)


# ---------------------------------------------------------------------------
# stages


def stage_synth(cfg):
    """Generate the bundled source and target datasets under the output dir."""
    out = Path(cfg.out_dir)
    source_spec = benchmark_source_spec(cfg.seed)
    if cfg.synth_kind == "benchmark":
        target_spec = benchmark_target_spec(cfg.seed)
    else:
        target_spec = sweep_probe_spec(cfg.seed, informative=cfg.probe_sensor)
    results = {}
    for role, spec in (("source", source_spec), ("target", target_spec)):
        recordings, activities = synth_generate(spec)
        manifest_path = save_dataset(recordings, out / role, role=role, activities=activities)
        results[role] = {
            "manifest": str(manifest_path),
            "recordings": len(recordings),
            "fingerprint": dataset_fingerprint(recordings),
        }
        logger.info("wrote %d %s recordings under %s", len(recordings), role, out / role)
    return results


def _load_recordings(cfg, role):
    path = cfg.source_manifest_path if role == "source" else cfg.target_manifest_path
    if not path.exists():
        raise PipelineError(f"missing manifest {path}; run `gaitxfer synth` first")
    manifest = read_manifest(path, role=role)
    return load_dataset(manifest, base_dir=path.parent)


def _class_map(recordings):
    names = sorted({rec.class_label for rec in recordings})
    return names, {name: i for i, name in enumerate(names)}


def _source_frames(recordings, class_index):
    frames = []
    for i, rec in enumerate(recordings):
        frames.extend(
            extract_frames(normalize(rec), label=class_index[rec.class_label], recording_index=i)
        )
    return frames


def _target_frames(recordings, class_index, order):
    """Stack per-sensor recordings of each subject into multi-sensor frames."""
    grouped = defaultdict(list)
    for rec in recordings:
        grouped[(rec.subject_id, rec.sensor_placement)].append(rec)
    subjects = sorted({rec.subject_id for rec in recordings})
    counts = {len(grouped.get((s, p), ())) for s in subjects for p in order}
    if len(counts) != 1:
        raise PipelineError(
            "target dataset is not a full subject-by-sensor grid; cannot stack sensors"
        )
    per_pair = counts.pop()
    if per_pair == 0:
        raise PipelineError(f"target dataset lacks recordings for placements {list(order)}")
    stacked = []
    rec_counter = 0
    for subject in subjects:
        for r in range(per_pair):
            frames_by_sensor = {}
            for placement in order:
                rec = grouped[(subject, placement)][r]
                windows = extract_frames(
                    normalize(rec),
                    label=class_index[rec.class_label],
                    recording_index=rec_counter,
                )
                frames_by_sensor[placement] = windows
            n_windows = {len(v) for v in frames_by_sensor.values()}
            if len(n_windows) != 1:
                raise PipelineError(
                    f"sensor recordings of subject {subject!r} disagree in window count"
                )
            for w in range(n_windows.pop()):
                stacked.append(
                    stack_sensors({p: frames_by_sensor[p][w] for p in order}, order=order)
                )
            rec_counter += 1
    return stacked


def stage_preprocess(cfg):
    """Normalize, frame, and persist both datasets as frame archives."""
    out = Path(cfg.out_dir)
    results = {}

    source_recs = _load_recordings(cfg, "source")
    names, index = _class_map(source_recs)
    source_frames = _source_frames(source_recs, index)
    archive = frames_to_archive(
        source_frames,
        role="source",
        fingerprint=dataset_fingerprint(source_recs),
        class_names=names,
        cfg=cfg,
    )
    path = out / "frames_source.gxar"
    save_model(archive, path)
    results["source"] = {"path": str(path), "frames": len(source_frames)}

    target_recs = _load_recordings(cfg, "target")
    names, index = _class_map(target_recs)
    placements = {rec.sensor_placement for rec in target_recs}
    order = tuple(p for p in CANONICAL_SENSOR_ORDER if p in placements) or tuple(sorted(placements))
    target_frames = _target_frames(target_recs, index, order)
    archive = frames_to_archive(
        target_frames,
        role="target",
        fingerprint=dataset_fingerprint(target_recs),
        class_names=names,
        cfg=cfg,
    )
    path = out / "frames_target.gxar"
    save_model(archive, path)
    results["target"] = {"path": str(path), "frames": len(target_frames)}
    return results


def stage_train_ae(cfg):
    """Train the source autoencoder and persist it with its loss history."""
    out = Path(cfg.out_dir)
    frames, archive = frames_from_archive(
        _load_artifact(out / "frames_source.gxar", "preprocess")
    )
    model = autoenc.build_autoencoder(cfg.autoencoder)
    autoenc.train_autoencoder(
        model, frames, fingerprint=archive.provenance.get("dataset_fingerprint")
    )
    ae_archive = autoenc.to_archive(model)
    ae_archive.provenance["config_fingerprint"] = config_fingerprint(cfg)
    path = out / "autoencoder.gxar"
    save_model(ae_archive, path)
    summary = autoenc.parameter_summary(model)
    return {
        "path": str(path),
        "epochs": len(model.loss_history),
        "final_loss": model.loss_history[-1] if model.loss_history else None,
        "param_count": summary["total"],
        "param_delta_percent": summary["delta_percent"],
    }


def _load_encoder(cfg):
    archive = _load_artifact(Path(cfg.out_dir) / "autoencoder.gxar", "train-ae")
    return autoenc.from_archive(archive), archive


def _check_sensors(cfg, frame_sensors):
    missing = [s for s in cfg.sensors if s not in frame_sensors]
    if missing:
        raise PipelineError(
            f"configured sensors {missing} are absent from the target frames "
            f"(available: {list(frame_sensors)})"
        )
    return tuple(cfg.sensors)


def extract_vectors(frames, variant, sensors, encoder=None):
    """Feature matrix of the requested kind, one row per stacked frame."""
    n = len(frames)
    if variant in ("unconstrained_pca", "constrained_gap"):
        if encoder is None:
            raise ValueError(f"variant {variant!r} needs the trained encoder")
        parts = []
        for sensor in sensors:
            latents = autoenc.encode_batch(encoder, [slice_sensor(f, sensor) for f in frames])
            if variant == "constrained_gap":
                parts.append(latents.mean(axis=2))
            else:
                parts.append(latents.reshape(n, -1))
        return np.concatenate(parts, axis=1)
    if variant == "raw_pca":
        return np.concatenate(
            [
                np.stack([slice_sensor(f, sensor).data.reshape(-1) for f in frames])
                for sensor in sensors
            ],
            axis=1,
        )
    if variant == "statfeat":
        return np.concatenate(
            [
                np.stack([stat_features(slice_sensor(f, sensor)) for f in frames])
                for sensor in sensors
            ],
            axis=1,
        )
    raise ValueError(f"unknown variant {variant!r}")


def variant_needs_pca(variant):
    return variant in ("unconstrained_pca", "raw_pca")


def stage_extract(cfg):
    """Produce the configured feature vectors from the target frames."""
    out = Path(cfg.out_dir)
    frames, frames_archive = frames_from_archive(
        _load_artifact(out / "frames_target.gxar", "preprocess")
    )
    sensors = _check_sensors(cfg, frames[0].sensors)
    encoder = None
    provenance = {
        "seed": cfg.seed,
        "config_fingerprint": config_fingerprint(cfg),
        "dataset_fingerprint": frames_archive.provenance.get("dataset_fingerprint"),
    }
    if variant_needs_encoder(cfg.variant):
        encoder, ae_archive = _load_encoder(cfg)
        provenance["autoencoder_fingerprint"] = ae_archive.provenance.get("dataset_fingerprint")
    vectors = extract_vectors(frames, cfg.variant, sensors, encoder)
    subjects = frames_archive.config["subjects"]
    archive = ModelArchive(
        kind="features",
        config={
            "feature_kind": cfg.variant,
            "sensors": list(sensors),
            "subjects": subjects,
            "class_names": frames_archive.config["class_names"],
            "needs_pca": variant_needs_pca(cfg.variant),
            "feature_dim": int(vectors.shape[1]),
        },
        tensors={
            "vectors": vectors,
            "labels": frames_archive.tensors["labels"],
            "subject_idx": frames_archive.tensors["subject_idx"],
        },
        provenance=provenance,
    )
    path = out / f"features_{cfg.variant}.gxar"
    save_model(archive, path)
    return {"path": str(path), "shape": list(vectors.shape)}


def variant_needs_encoder(variant):
    return variant in ("unconstrained_pca", "constrained_gap")


def _load_features(cfg):
    path = Path(cfg.out_dir) / f"features_{cfg.variant}.gxar"
    archive = _load_artifact(path, f"extract --variant {cfg.variant}")
    vectors = archive.tensors["vectors"]
    labels = archive.tensors["labels"]
    subjects = np.array(
        [archive.config["subjects"][i] for i in archive.tensors["subject_idx"]]
    )
    return vectors, labels, subjects, archive


def stage_fit_pca(cfg):
    """Fit and persist a PCA basis over every feature vector (inspection aid)."""
    if not variant_needs_pca(cfg.variant):
        raise PipelineError(
            f"variant {cfg.variant!r} is not PCA-reduced; nothing to fit"
        )
    vectors, _, _, features_archive = _load_features(cfg)
    model = fit_pca(vectors, cfg.pca_k)
    archive = pca_to_archive(model)
    archive.provenance.update(
        {
            "seed": cfg.seed,
            "config_fingerprint": config_fingerprint(cfg),
            "dataset_fingerprint": features_archive.provenance.get("dataset_fingerprint"),
        }
    )
    out = Path(cfg.out_dir) / f"pca_{cfg.variant}.gxar"
    save_model(archive, out)
    retained = float(np.sum(model.explained_ratio))
    return {"path": str(out), "components": model.k, "variance_retained": retained}


def _subject_label_mapping(labels, subjects):
    return {subject: int(label) for subject, label in zip(subjects, labels)}


def stage_train_clf(cfg):
    """Train one classifier on split 0's training subjects and persist it."""
    vectors, labels, subjects, features_archive = _load_features(cfg)
    splits = make_subject_splits(
        _subject_label_mapping(labels, subjects), n_splits=cfg.n_splits, seed=cfg.seed
    )
    split = splits[0]
    mask = np.isin(subjects, sorted(split.train_subjects))
    train_x, train_y = vectors[mask], labels[mask]
    out = Path(cfg.out_dir)
    saved = {}
    if variant_needs_pca(cfg.variant):
        pca = fit_pca(train_x, cfg.pca_k)
        pca_archive = pca_to_archive(pca)
        pca_archive.provenance["config_fingerprint"] = config_fingerprint(cfg)
        pca_path = out / f"classifier_pca_{cfg.variant}.gxar"
        save_model(pca_archive, pca_path)
        saved["pca"] = str(pca_path)
        train_x = pca_transform(pca, train_x)
    fingerprint = features_archive.provenance.get("dataset_fingerprint")
    if cfg.classifier == "mlp":
        model = build_mlp(train_x.shape[1], int(labels.max()) + 1, seed=cfg.seed)
        train_mlp(
            model, train_x, train_y, seed=cfg.seed,
            fingerprint=fingerprint, **cfg.classifier_options,
        )
        archive = mlp_to_archive(model)
    else:
        model = train_linear_svm(
            train_x, train_y, seed=cfg.seed,
            fingerprint=fingerprint, **cfg.classifier_options,
        )
        archive = svm_to_archive(model)
    archive.provenance["config_fingerprint"] = config_fingerprint(cfg)
    path = out / f"classifier_{cfg.variant}_{cfg.classifier}.gxar"
    save_model(archive, path)
    saved["classifier"] = str(path)
    train_metrics = compute_metrics(predict(model, train_x), train_y)
    return {**saved, "train_accuracy": train_metrics["accuracy"]}


def stage_evaluate(cfg):
    """Subject-split evaluation of the configured variant and classifier."""
    vectors, labels, subjects, features_archive = _load_features(cfg)
    splits = make_subject_splits(
        _subject_label_mapping(labels, subjects), n_splits=cfg.n_splits, seed=cfg.seed
    )
    report = evaluate_features(
        vectors,
        labels,
        subjects,
        splits,
        classifier=cfg.classifier,
        pca_k=cfg.pca_k if variant_needs_pca(cfg.variant) else None,
        pca_scope=cfg.pca_scope,
        seed=cfg.seed,
        classifier_options=cfg.classifier_options,
        config={
            "feature_kind": cfg.variant,
            "sensors": features_archive.config["sensors"],
            "class_names": features_archive.config["class_names"],
            "config_fingerprint": config_fingerprint(cfg),
            "dataset_fingerprint": features_archive.provenance.get("dataset_fingerprint"),
        },
    )
    out = Path(cfg.out_dir)
    stem = f"{cfg.variant}_{cfg.classifier}"
    json_path = _write_text(out / f"report_{stem}.json", report_to_json(report))
    table_path = _write_text(out / f"report_{stem}.txt", format_table(report))
    csv_path = _write_text(out / f"metrics_{stem}.csv", _metrics_csv([report]))
    return {
        "report": str(json_path),
        "table": str(table_path),
        "csv": str(csv_path),
        "aggregate": {name: report.aggregate[name]["formatted"] for name in report.aggregate},
    }


def _metrics_csv(reports):
    lines = [
        "feature_kind,classifier,accuracy_mean,accuracy_std,precision_mean,precision_std,"
        "recall_mean,recall_std,f1_mean,f1_std"
    ]
    for report in reports:
        cells = [
            str(report.config.get("feature_kind", "")),
            str(report.config.get("classifier", "")),
        ]
        for name in ("accuracy", "precision", "recall", "f1"):
            cells.append(repr(report.aggregate[name]["mean"]))
            cells.append(repr(report.aggregate[name]["std"]))
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


def stage_sweep(cfg):
    """Per-sensor F1 table plus its plot-ready delimited file."""
    out = Path(cfg.out_dir)
    frames, frames_archive = frames_from_archive(
        _load_artifact(out / "frames_target.gxar", "preprocess")
    )
    encoder, _ = _load_encoder(cfg)
    sensors = _check_sensors(cfg, frames[0].sensors)
    splits = make_subject_splits(frames, n_splits=cfg.n_splits, seed=cfg.seed)
    rows, reports = per_sensor_sweep(
        frames,
        encoder,
        splits,
        sensors=sensors,
        classifier=cfg.classifier,
        pca_k=cfg.pca_k,
        pca_scope=cfg.pca_scope,
        seed=cfg.seed,
        classifier_options=cfg.classifier_options,
    )
    csv_path = _write_text(out / "sweep.csv", sweep_rows_to_csv(rows))
    payload = {
        "config_fingerprint": config_fingerprint(cfg),
        "dataset_fingerprint": frames_archive.provenance.get("dataset_fingerprint"),
        "seed": cfg.seed,
        "classifier": cfg.classifier,
        "rows": rows,
        "reports": {name: json.loads(report_to_json(report)) for name, report in reports.items()},
    }
    json_path = _write_text(
        out / "sweep.json", json.dumps(payload, sort_keys=True, indent=2) + "\n"
    )
    return {"csv": str(csv_path), "json": str(json_path), "rows": rows}


def stage_report(cfg):
    """Combine evaluation artifacts into tables, delimited data, and figures."""
    from .figures import plot_loss_curve, plot_metrics_comparison, plot_sensor_sweep

    out = Path(cfg.out_dir)
    report_dir = out / "report"
    report_paths = sorted(out.glob("report_*.json"))
    if not report_paths:
        raise PipelineError(f"no evaluation reports under {out}; run `gaitxfer evaluate` first")

    reports = {}
    fingerprints = {}
    for path in report_paths:
        report = report_from_json(path.read_text())
        name = path.stem.replace("report_", "", 1)
        reports[name] = report
        fingerprints[path.name] = report.config.get("config_fingerprint")

    sweep_path = out / "sweep.json"
    sweep_payload = None
    if sweep_path.exists():
        sweep_payload = json.loads(sweep_path.read_text())
        fingerprints[sweep_path.name] = sweep_payload.get("config_fingerprint")

    distinct = {fp for fp in fingerprints.values() if fp is not None}
    if len(distinct) > 1:
        detail = ", ".join(f"{name}: {fp[:12]}" for name, fp in sorted(fingerprints.items()))
        raise PipelineError(
            f"refusing to combine artifacts with mismatched config fingerprints ({detail})"
        )

    tables = [format_table(report, title=name) for name, report in sorted(reports.items())]
    summary_txt = _write_text(report_dir / "summary.txt", "\n".join(tables))
    metrics_csv = _write_text(
        report_dir / "metrics.csv", _metrics_csv([reports[k] for k in sorted(reports)])
    )
    summary_payload = {
        "config_fingerprint": next(iter(distinct)) if distinct else None,
        "seed": cfg.seed,
        "reports": {name: json.loads(report_to_json(r)) for name, r in sorted(reports.items())},
    }

    artifacts = {
        "summary": str(summary_txt),
        "metrics_csv": str(metrics_csv),
    }
    figures = {}
    figures["comparison"] = str(
        plot_metrics_comparison(reports, report_dir / "variant_comparison.png")
    )
    if sweep_payload is not None:
        figures["sweep"] = str(
            plot_sensor_sweep(sweep_payload["rows"], report_dir / "sensor_sweep.png")
        )
        summary_payload["sweep_rows"] = sweep_payload["rows"]
    ae_path = out / "autoencoder.gxar"
    if ae_path.exists():
        ae_archive = load_model(ae_path)
        history = ae_archive.tensors.get("loss_history")
        if history is not None and len(history):
            figures["loss_curve"] = str(plot_loss_curve(history, report_dir / "loss_curve.png"))
    summary_payload["figures"] = figures
    summary_json = _write_text(
        report_dir / "summary.json", json.dumps(summary_payload, sort_keys=True, indent=2) + "\n"
    )
    artifacts["summary_json"] = str(summary_json)
    artifacts.update(figures)
    return artifacts


STAGES = {
    "synth": stage_synth,
    "preprocess": stage_preprocess,
    "train-ae": stage_train_ae,
    "extract": stage_extract,
    "fit-pca": stage_fit_pca,
    "train-clf": stage_train_clf,
    "evaluate": stage_evaluate,
    "sweep-sensors": stage_sweep,
    "report": stage_report,
}


def run_stage(name, cfg):
    try:
        stage = STAGES[name]
    except KeyError:
        raise PipelineError(
            f"unknown subcommand {name!r}; expected one of {sorted(STAGES)}"
        ) from None
    return stage(cfg)
