"""Pipeline stage tests on a miniature synthetic dataset.

One module-scoped run of the full stage chain backs most assertions;
cross-checks replay single frames through the per-frame feature
functions to validate the batched extraction.
"""

import dataclasses
import json
from pathlib import Path

import numpy as np
import pytest

from gaitxfer.autoenc import AutoencoderConfig, build_autoencoder, encode
from gaitxfer.cli import main
from gaitxfer.dataio import (
    benchmark_source_spec,
    benchmark_target_spec,
    load_model,
    save_dataset,
    synth_generate,
)
from gaitxfer.pipeline import (
    PipelineConfig,
    PipelineError,
    apply_seed,
    config_fingerprint,
    config_from_dict,
    config_to_dict,
    extract_vectors,
    frames_from_archive,
    frames_to_archive,
    load_config,
    run_stage,
    stage_evaluate,
    stage_extract,
    stage_preprocess,
    stage_report,
    stage_train_ae,
    _target_frames,
)
from gaitxfer.reduce import gap_features, vectorize_latents
from gaitxfer.sigprep import CANONICAL_SENSOR_ORDER, Frame
from gaitxfer.statfeat import stat_features


@pytest.fixture(scope="module")
def tiny_run(tmp_path_factory):
    """Datasets, config, and a full stage chain in one output directory."""
    root = tmp_path_factory.mktemp("pipeline")
    source_spec = dataclasses.replace(benchmark_source_spec(5), n_subjects=4, duration_s=10.0)
    target_spec = dataclasses.replace(benchmark_target_spec(5), n_subjects=3, duration_s=16.0)
    for role, spec in (("source", source_spec), ("target", target_spec)):
        recordings, activities = synth_generate(spec)
        save_dataset(recordings, root / role, role=role, activities=activities)
    cfg = PipelineConfig(
        out_dir=str(root / "run"),
        source_manifest=str(root / "source" / "manifest.csv"),
        target_manifest=str(root / "target" / "manifest.csv"),
        variant="constrained_gap",
        classifier="svm",
        n_splits=2,
        pca_k=5,
        seed=5,
        autoencoder=AutoencoderConfig(epochs=2, seed=5),
    )
    stage_preprocess(cfg)
    stage_train_ae(cfg)
    stage_extract(cfg)
    stage_evaluate(cfg)
    return root, cfg


class TestConfig:
    def test_invalid_enums_rejected(self):
        with pytest.raises(ValueError, match="variant"):
            PipelineConfig(variant="wavelets")
        with pytest.raises(ValueError, match="classifier"):
            PipelineConfig(classifier="forest")
        with pytest.raises(ValueError, match="pca_scope"):
            PipelineConfig(pca_scope="test")
        with pytest.raises(ValueError, match="synth_kind"):
            PipelineConfig(synth_kind="real")
        with pytest.raises(ValueError, match="pca_k"):
            PipelineConfig(pca_k=0)
        with pytest.raises(ValueError, match="n_splits"):
            PipelineConfig(n_splits=0)

    def test_default_manifest_paths_follow_out_dir(self):
        cfg = PipelineConfig(out_dir="/x/y")
        assert cfg.source_manifest_path == Path("/x/y/source/manifest.csv")
        assert cfg.target_manifest_path == Path("/x/y/target/manifest.csv")
        explicit = PipelineConfig(out_dir="/x/y", target_manifest="/data/m.csv")
        assert explicit.target_manifest_path == Path("/data/m.csv")

    def test_dict_roundtrip(self):
        cfg = PipelineConfig(variant="raw_pca", pca_k=7, sensors=("sternum", "lumbar"))
        assert config_from_dict(config_to_dict(cfg)) == cfg

    def test_unknown_keys_rejected(self):
        with pytest.raises(ValueError, match="unknown config"):
            config_from_dict({"variant": "raw_pca", "learning": "deep"})

    def test_load_config_errors(self, tmp_path):
        with pytest.raises(PipelineError, match="does not exist"):
            load_config(tmp_path / "nope.json")
        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        with pytest.raises(PipelineError, match="bad config"):
            load_config(bad)

    def test_apply_seed_reaches_autoencoder(self):
        cfg = apply_seed(PipelineConfig(), 99)
        assert cfg.seed == 99
        assert cfg.autoencoder.seed == 99


class TestFingerprint:
    def test_comparison_axes_do_not_change_identity(self):
        base = PipelineConfig()
        assert config_fingerprint(base) == config_fingerprint(
            dataclasses.replace(base, variant="raw_pca")
        )
        assert config_fingerprint(base) == config_fingerprint(
            dataclasses.replace(base, classifier="svm")
        )
        assert config_fingerprint(base) == config_fingerprint(
            dataclasses.replace(base, sensors=("sternum",), out_dir="/elsewhere")
        )

    def test_run_identity_fields_change_it(self):
        base = PipelineConfig()
        assert config_fingerprint(base) != config_fingerprint(apply_seed(base, 1))
        assert config_fingerprint(base) != config_fingerprint(
            dataclasses.replace(base, n_splits=5)
        )
        assert config_fingerprint(base) != config_fingerprint(
            dataclasses.replace(base, pca_k=32)
        )
        assert config_fingerprint(base) != config_fingerprint(
            dataclasses.replace(base, autoencoder=AutoencoderConfig(epochs=1))
        )


class TestFrameArchive:
    def make_frames(self):
        rng = np.random.default_rng(0)
        return [
            Frame(rng.standard_normal((3, 50)), f"s{i % 2}", i % 3, i, ("wrist_single",), i % 2)
            for i in range(5)
        ]

    def test_roundtrip(self):
        frames = self.make_frames()
        cfg = PipelineConfig()
        archive = frames_to_archive(
            frames, role="source", fingerprint="fp", class_names=["a", "b"], cfg=cfg
        )
        restored, meta = frames_from_archive(archive)
        assert len(restored) == len(frames)
        for old, new in zip(frames, restored):
            assert np.array_equal(old.data, new.data)
            assert old.subject_id == new.subject_id
            assert old.window_index == new.window_index
            assert old.recording_index == new.recording_index
            assert old.label == new.label
            assert old.sensors == new.sensors
        assert meta.config["class_names"] == ["a", "b"]
        assert meta.provenance["dataset_fingerprint"] == "fp"
        assert meta.provenance["config_fingerprint"] == config_fingerprint(cfg)

    def test_mixed_sensor_tuples_rejected(self):
        frames = self.make_frames()
        other = Frame(np.zeros((3, 50)), "sx", 0, 9, ("sternum",), 0)
        with pytest.raises(ValueError, match="sensor tuple"):
            frames_to_archive(
                frames + [other], role="source", fingerprint="fp",
                class_names=["a"], cfg=PipelineConfig(),
            )

    def test_wrong_kind_rejected(self):
        archive = frames_to_archive(
            self.make_frames(), role="source", fingerprint="fp",
            class_names=["a"], cfg=PipelineConfig(),
        )
        with pytest.raises(ValueError, match="frames"):
            frames_from_archive(dataclasses.replace(archive, kind="pca"))


@pytest.fixture(scope="module")
def probe_setup():
    cfg = AutoencoderConfig(
        dense_blocks_per_side=1, layers_per_block=1, initial_filters=8,
        growth_filters=4, bottleneck_size=2,
    )
    encoder = build_autoencoder(cfg, seed=0)
    rng = np.random.default_rng(1)
    frames = [
        Frame(
            rng.standard_normal((18, 250)), f"s{i}", 0, i,
            tuple(CANONICAL_SENSOR_ORDER), i % 2,
        )
        for i in range(3)
    ]
    return encoder, frames


class TestExtractVectors:
    def test_gap_matches_per_frame_route(self, probe_setup):
        encoder, frames = probe_setup
        sensors = CANONICAL_SENSOR_ORDER
        vectors = extract_vectors(frames, "constrained_gap", sensors, encoder)
        assert vectors.shape == (3, 32 * 6)
        from gaitxfer.sigprep import slice_sensor

        for i, frame in enumerate(frames):
            latents = {s: encode(encoder, slice_sensor(frame, s)) for s in sensors}
            assert np.allclose(vectors[i], gap_features(latents, order=sensors), atol=1e-5)

    def test_unconstrained_matches_per_frame_route(self, probe_setup):
        encoder, frames = probe_setup
        sensors = ("sternum", "left_wrist")
        vectors = extract_vectors(frames, "unconstrained_pca", sensors, encoder)
        assert vectors.shape == (3, 2 * 32 * 250)
        from gaitxfer.sigprep import slice_sensor

        latents = {s: encode(encoder, slice_sensor(frames[0], s)) for s in sensors}
        assert np.allclose(
            vectors[0], vectorize_latents(latents, order=sensors), atol=1e-5
        )

    def test_raw_is_the_frame_rows(self, probe_setup):
        _, frames = probe_setup
        vectors = extract_vectors(frames, "raw_pca", CANONICAL_SENSOR_ORDER)
        assert vectors.shape == (3, 4500)
        assert np.array_equal(vectors[1], frames[1].data.reshape(-1))

    def test_statfeat_concatenates_per_sensor_blocks(self, probe_setup):
        _, frames = probe_setup
        sensors = ("lumbar", "right_ankle")
        vectors = extract_vectors(frames, "statfeat", sensors)
        assert vectors.shape == (3, 38)
        from gaitxfer.sigprep import slice_sensor

        first = stat_features(slice_sensor(frames[2], "lumbar"))
        assert np.array_equal(vectors[2][:19], first)

    def test_latent_variants_need_encoder(self, probe_setup):
        _, frames = probe_setup
        with pytest.raises(ValueError, match="encoder"):
            extract_vectors(frames, "constrained_gap", CANONICAL_SENSOR_ORDER, None)

    def test_unknown_variant_rejected(self, probe_setup):
        encoder, frames = probe_setup
        with pytest.raises(ValueError, match="variant"):
            extract_vectors(frames, "fourier", CANONICAL_SENSOR_ORDER, encoder)


class TestStages:
    def test_preprocess_wrote_frame_archives(self, tiny_run):
        root, cfg = tiny_run
        out = Path(cfg.out_dir)
        source, meta = frames_from_archive(load_model(out / "frames_source.gxar"))
        assert meta.config["role"] == "source"
        assert all(frame.sensors == ("wrist_single",) for frame in source)
        assert all(frame.data.shape == (3, 250) for frame in source)
        assert len(source) == 4 * 4  # 4 subjects, 10 s at 100 Hz -> 4 windows

        target, meta = frames_from_archive(load_model(out / "frames_target.gxar"))
        assert meta.config["role"] == "target"
        assert meta.config["class_names"] == ["healthy", "pd"]
        assert all(frame.sensors == CANONICAL_SENSOR_ORDER for frame in target)
        assert all(frame.data.shape == (18, 250) for frame in target)
        assert len(target) == 6 * 6  # 6 subjects, 16 s at 100 Hz -> 6 windows
        labels = {frame.subject_id: frame.label for frame in target}
        assert all(labels[s] == 0 for s in labels if s.startswith("t_healthy"))
        assert all(labels[s] == 1 for s in labels if s.startswith("t_pd"))

    def test_incomplete_sensor_grid_rejected(self, tiny_run):
        root, cfg = tiny_run
        from gaitxfer.dataio import load_dataset, read_manifest

        manifest = read_manifest(cfg.target_manifest_path, role="target")
        recordings = load_dataset(manifest, base_dir=cfg.target_manifest_path.parent)
        broken = recordings[:-1]  # drop one sensor of the last subject
        with pytest.raises(PipelineError, match="grid"):
            _target_frames(broken, {"healthy": 0, "pd": 1}, CANONICAL_SENSOR_ORDER)

    def test_train_ae_recorded_history_and_calibration(self, tiny_run):
        root, cfg = tiny_run
        archive = load_model(Path(cfg.out_dir) / "autoencoder.gxar")
        assert archive.kind == "autoencoder"
        assert len(archive.tensors["loss_history"]) == 2
        assert archive.provenance["config_fingerprint"] == config_fingerprint(cfg)
        assert archive.provenance["dataset_fingerprint"]

    def test_extract_produced_gap_vectors(self, tiny_run):
        root, cfg = tiny_run
        archive = load_model(Path(cfg.out_dir) / "features_constrained_gap.gxar")
        assert archive.config["feature_kind"] == "constrained_gap"
        assert archive.config["needs_pca"] is False
        assert archive.tensors["vectors"].shape == (36, 192)
        assert archive.provenance["autoencoder_fingerprint"]

    def test_evaluate_report_contents(self, tiny_run):
        root, cfg = tiny_run
        out = Path(cfg.out_dir)
        payload = json.loads((out / "report_constrained_gap_svm.json").read_text())
        assert payload["n_splits"] == 2
        assert len(payload["per_split"]) == 2
        assert payload["config"]["feature_kind"] == "constrained_gap"
        assert payload["config"]["config_fingerprint"] == config_fingerprint(cfg)
        for metrics in payload["per_split"]:
            assert np.sum(metrics["confusion"]) > 0
            for name in ("accuracy", "precision", "recall", "f1"):
                assert 0.0 <= metrics[name] <= 1.0
        table = (out / "report_constrained_gap_svm.txt").read_text()
        assert "Accuracy" in table
        csv = (out / "metrics_constrained_gap_svm.csv").read_text()
        assert csv.startswith("feature_kind,classifier,accuracy_mean")
        assert "constrained_gap,svm," in csv

    def test_missing_artifact_diagnostics(self, tiny_run, tmp_path):
        _, cfg = tiny_run
        empty = dataclasses.replace(cfg, out_dir=str(tmp_path / "empty"))
        with pytest.raises(PipelineError, match="run `gaitxfer preprocess` first"):
            stage_train_ae(empty)
        with pytest.raises(PipelineError, match="run `gaitxfer extract"):
            stage_evaluate(empty)
        with pytest.raises(PipelineError, match="run `gaitxfer evaluate` first"):
            stage_report(empty)
        missing_data = dataclasses.replace(
            empty, source_manifest=str(tmp_path / "nowhere.csv")
        )
        with pytest.raises(PipelineError, match="run `gaitxfer synth` first"):
            stage_preprocess(missing_data)

    def test_evaluate_is_byte_deterministic(self, tiny_run):
        root, cfg = tiny_run
        out = Path(cfg.out_dir)
        report_path = out / "report_constrained_gap_svm.json"
        first = report_path.read_bytes()
        stage_evaluate(cfg)
        assert report_path.read_bytes() == first

    def test_extract_is_byte_deterministic(self, tiny_run):
        root, cfg = tiny_run
        path = Path(cfg.out_dir) / "features_constrained_gap.gxar"
        first = path.read_bytes()
        stage_extract(cfg)
        assert path.read_bytes() == first

    def test_report_combines_and_renders(self, tiny_run):
        root, cfg = tiny_run
        artifacts = stage_report(cfg)
        report_dir = Path(cfg.out_dir) / "report"
        assert (report_dir / "summary.txt").exists()
        assert (report_dir / "metrics.csv").exists()
        assert (report_dir / "variant_comparison.png").stat().st_size > 0
        assert (report_dir / "loss_curve.png").stat().st_size > 0
        payload = json.loads((report_dir / "summary.json").read_text())
        assert payload["config_fingerprint"] == config_fingerprint(cfg)
        assert "constrained_gap_svm" in payload["reports"]
        assert "summary" in artifacts

    def test_report_refuses_mismatched_fingerprints(self, tiny_run, tmp_path):
        root, cfg = tiny_run
        out = Path(cfg.out_dir)
        mixed = tmp_path / "mixed"
        mixed.mkdir()
        original = (out / "report_constrained_gap_svm.json").read_text()
        (mixed / "report_constrained_gap_svm.json").write_text(original)
        foreign = json.loads(original)
        foreign["config"]["config_fingerprint"] = "f" * 64
        (mixed / "report_raw_pca_svm.json").write_text(json.dumps(foreign))
        with pytest.raises(PipelineError, match="mismatched config fingerprints"):
            stage_report(dataclasses.replace(cfg, out_dir=str(mixed)))

    def test_unknown_stage_rejected(self, tiny_run):
        _, cfg = tiny_run
        with pytest.raises(PipelineError, match="unknown subcommand"):
            run_stage("deploy", cfg)


class TestCli:
    def test_show_config_prints_fingerprint(self, capsys):
        assert main(["show-config", "--variant", "raw_pca", "--pca-k", "9"]) == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload["variant"] == "raw_pca"
        assert payload["pca_k"] == 9
        assert len(payload["config_fingerprint"]) == 64

    def test_sensor_flag_parsing(self, capsys):
        assert main(["show-config", "--sensors", "sternum, lumbar"]) == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload["sensors"] == ["sternum", "lumbar"]

    def test_missing_artifact_exits_nonzero(self, tmp_path, capsys):
        assert main(["train-ae", "--out", str(tmp_path / "void")]) == 1
        assert "run `gaitxfer preprocess` first" in capsys.readouterr().err

    def test_bad_flag_value_exits_with_usage(self, capsys):
        with pytest.raises(SystemExit) as info:
            main(["evaluate", "--variant", "magic"])
        assert info.value.code == 2
        assert "invalid choice" in capsys.readouterr().err

    def test_config_file_plus_override(self, tmp_path, capsys):
        cfg_path = tmp_path / "cfg.json"
        cfg_path.write_text(json.dumps({"variant": "statfeat", "n_splits": 4}))
        assert main(["show-config", "--config", str(cfg_path), "--classifier", "svm"]) == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload["variant"] == "statfeat"
        assert payload["n_splits"] == 4
        assert payload["classifier"] == "svm"

    def test_seed_flag_reseeds_autoencoder(self, capsys):
        assert main(["show-config", "--seed", "123"]) == 0
        payload = json.loads(capsys.readouterr().out)
        assert payload["seed"] == 123
        assert payload["autoencoder"]["seed"] == 123

    def test_full_stage_chain_through_cli(self, tiny_run, capsys):
        root, cfg = tiny_run
        cfg_path = root / "cli-config.json"
        cfg_path.write_text(json.dumps(config_to_dict(cfg)))
        assert main(["extract", "--config", str(cfg_path), "--variant", "statfeat"]) == 0
        out = json.loads(capsys.readouterr().out)
        assert out["shape"] == [36, 114]
        assert main(["evaluate", "--config", str(cfg_path), "--variant", "statfeat"]) == 0
        payload = json.loads(capsys.readouterr().out)
        assert set(payload["aggregate"]) == {"accuracy", "precision", "recall", "f1"}
