"""Dataset ingestion, deterministic synthetic data, and model archives.

Three concerns live here: reading recording datasets described by a
manifest CSV, generating seeded synthetic stand-ins for the private
corpora, and persisting models in a checksummed binary archive format.
"""

from __future__ import annotations

import csv
import hashlib
import json
import os
import struct
import tempfile
import zlib
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from pathlib import Path
from types import MappingProxyType

import numpy as np

from .sigprep import CANONICAL_SENSOR_ORDER, PLACEMENTS, Recording

MANIFEST_HEADER = ("path", "subject_id", "class_label", "activity", "placement", "rate_hz")

ARCHIVE_MAGIC = b"GXAR"
ARCHIVE_VERSION = 1
# the first four kinds are trained models; frames/features hold stage artifacts
ARCHIVE_KINDS = ("autoencoder", "pca", "mlp", "svm", "frames", "features")

_DTYPE_CODES = {"f4": np.dtype("<f4"), "f8": np.dtype("<f8"), "i8": np.dtype("<i8")}


class DatasetError(ValueError):
    """Manifest or recording-file problem, annotated with its source."""


class ArchiveError(ValueError):
    """Model archive malformed, tampered with, or from an unknown schema."""


# ---------------------------------------------------------------------------
# manifests and recording files


@dataclass(frozen=True)
class ManifestEntry:
    path: str
    subject_id: str
    class_label: str
    activity: str
    placement: str
    rate_hz: float

    def __post_init__(self):
        if not self.subject_id:
            raise DatasetError("manifest entry has an empty subject_id")
        if self.placement not in PLACEMENTS:
            raise DatasetError(
                f"manifest entry for {self.subject_id!r} has unknown placement "
                f"{self.placement!r}"
            )
        if not self.rate_hz > 0:
            raise DatasetError(
                f"manifest entry for {self.subject_id!r} has non-positive rate "
                f"{self.rate_hz}"
            )


@dataclass(frozen=True)
class DatasetManifest:
    entries: tuple
    role: str = "target"
    activity_filter: frozenset = None

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple(self.entries))
        if self.role not in ("source", "target"):
            raise DatasetError(f"dataset role must be source or target, got {self.role!r}")
        if self.activity_filter is not None:
            object.__setattr__(self, "activity_filter", frozenset(self.activity_filter))

    def filtered_entries(self):
        if self.activity_filter is None:
            return self.entries
        return tuple(e for e in self.entries if e.activity in self.activity_filter)


def read_manifest(path, role="target", activity_filter=None):
    """Parse a manifest CSV with the canonical header row."""
    path = Path(path)
    if not path.exists():
        raise DatasetError(f"manifest not found: {path}")
    entries = []
    with open(path, newline="") as handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise DatasetError(f"{path}: empty manifest") from None
        if tuple(h.strip() for h in header) != MANIFEST_HEADER:
            raise DatasetError(
                f"{path}: header must be {','.join(MANIFEST_HEADER)}, got {','.join(header)}"
            )
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != len(MANIFEST_HEADER):
                raise DatasetError(
                    f"{path}:{lineno}: expected {len(MANIFEST_HEADER)} fields, got {len(row)}"
                )
            try:
                rate = float(row[5])
            except ValueError:
                raise DatasetError(f"{path}:{lineno}: rate_hz {row[5]!r} is not numeric") from None
            try:
                entries.append(
                    ManifestEntry(
                        path=row[0].strip(),
                        subject_id=row[1].strip(),
                        class_label=row[2].strip(),
                        activity=row[3].strip(),
                        placement=row[4].strip(),
                        rate_hz=rate,
                    )
                )
            except DatasetError as exc:
                raise DatasetError(f"{path}:{lineno}: {exc}") from None
    return DatasetManifest(entries=entries, role=role, activity_filter=activity_filter)


def write_manifest(manifest, path):
    path = Path(path)
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(MANIFEST_HEADER)
        for e in manifest.entries:
            writer.writerow(
                [e.path, e.subject_id, e.class_label, e.activity, e.placement, _fmt(e.rate_hz)]
            )


def _fmt(x):
    # compact numeric text: 100.0 -> "100", 0.25 unchanged
    return format(x, "g")


def load_recording_file(path):
    """Read one x,y,z-per-line file into a T x 3 array."""
    path = Path(path)
    if not path.exists():
        raise DatasetError(f"recording file not found: {path}")
    rows = []
    with open(path) as handle:
        for lineno, line in enumerate(handle, start=1):
            line = line.strip()
            if not line:
                continue
            parts = line.split(",")
            if len(parts) != 3:
                raise DatasetError(f"{path}:{lineno}: expected 3 values, got {len(parts)}")
            try:
                triple = [float(p) for p in parts]
            except ValueError:
                raise DatasetError(f"{path}:{lineno}: non-numeric value in {line!r}") from None
            if not all(np.isfinite(triple)):
                raise DatasetError(f"{path}:{lineno}: non-finite value in {line!r}")
            rows.append(triple)
    if not rows:
        raise DatasetError(f"{path}: no samples")
    return np.array(rows, dtype=np.float64)


def write_recording_file(samples, path):
    samples = np.asarray(samples, dtype=np.float64)
    with open(path, "w") as handle:
        for row in samples.tolist():  # python floats: repr round-trips exactly
            handle.write(f"{row[0]!r},{row[1]!r},{row[2]!r}\n")


def load_dataset(manifest, base_dir=None):
    """Materialize every (filtered) manifest entry as a Recording.

    Relative entry paths resolve against base_dir. Any unreadable or
    malformed file aborts the load with file and line context.
    """
    base = Path(base_dir) if base_dir is not None else Path(".")
    recordings = []
    for entry in manifest.filtered_entries():
        file_path = Path(entry.path)
        if not file_path.is_absolute():
            file_path = base / file_path
        samples = load_recording_file(file_path)
        recordings.append(
            Recording(
                subject_id=entry.subject_id,
                class_label=entry.class_label,
                sensor_placement=entry.placement,
                sampling_rate_hz=entry.rate_hz,
                samples=samples,
            )
        )
    return recordings


def save_dataset(recordings, out_dir, role="target", activities=None):
    """Write recordings plus a manifest.csv under out_dir; returns manifest path.

    activities optionally maps (subject_id, recording position) metadata;
    synthetic recordings carry their activity in class_label-adjacent
    metadata, so the common case passes a parallel list of names.
    """
    out_dir = Path(out_dir)
    data_dir = out_dir / "data"
    data_dir.mkdir(parents=True, exist_ok=True)
    entries = []
    counters = {}
    for i, rec in enumerate(recordings):
        key = (rec.subject_id, rec.sensor_placement)
        counters[key] = counters.get(key, -1) + 1
        name = f"{rec.subject_id}_{rec.sensor_placement}_{counters[key]:02d}.csv"
        write_recording_file(rec.samples, data_dir / name)
        activity = activities[i] if activities is not None else "unspecified"
        entries.append(
            ManifestEntry(
                path=f"data/{name}",
                subject_id=rec.subject_id,
                class_label=rec.class_label,
                activity=activity,
                placement=rec.sensor_placement,
                rate_hz=rec.sampling_rate_hz,
            )
        )
    manifest = DatasetManifest(entries=entries, role=role)
    manifest_path = out_dir / "manifest.csv"
    write_manifest(manifest, manifest_path)
    return manifest_path


def dataset_fingerprint(recordings):
    """Order-independent content hash of a recording collection.

    Depends only on metadata and sample values, never on paths or
    platform, so synthetic datasets fingerprint identically everywhere.
    """
    digests = []
    for rec in recordings:
        h = hashlib.sha256()
        h.update(
            "|".join(
                [rec.subject_id, rec.class_label, rec.sensor_placement, _fmt(rec.sampling_rate_hz)]
            ).encode()
        )
        h.update(np.ascontiguousarray(rec.samples, dtype="<f8").tobytes())
        digests.append(h.digest())
    top = hashlib.sha256()
    for d in sorted(digests):
        top.update(d)
    return top.hexdigest()


# ---------------------------------------------------------------------------
# synthetic data generation


@dataclass(frozen=True)
class ClassSignalParams:
    """Class-conditional knobs of the synthetic gait signal."""

    stride_hz: tuple = (1.8, 2.3)  # per-subject fundamental drawn uniformly
    harmonic_amps: tuple = (1.0, 0.5, 0.25)  # fundamental + 2 harmonics
    tremor_amp: float = 0.0  # 4-6 Hz band amplitude
    stride_jitter: float = 0.02  # relative stride-period wobble
    noise_level: float = 0.25
    impact_amp: float = 0.0  # per-step transient burst amplitude
    impact_width_s: float = 0.05  # burst envelope width (crisp vs dragging)
    impact_hz: tuple = (9.0, 14.0)  # per-subject burst carrier band

    def __post_init__(self):
        if len(self.harmonic_amps) != 3:
            raise ValueError("harmonic_amps must list fundamental plus two harmonics")
        if self.stride_hz[0] > self.stride_hz[1] or self.stride_hz[0] <= 0:
            raise ValueError(f"invalid stride frequency range {self.stride_hz}")
        if self.impact_hz[0] > self.impact_hz[1] or self.impact_hz[0] <= 0:
            raise ValueError(f"invalid impact frequency range {self.impact_hz}")
        for name in ("tremor_amp", "stride_jitter", "noise_level", "impact_amp",
                     "impact_width_s"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")


@dataclass(frozen=True)
class SynthSpec:
    """Fully seeded description of one synthetic dataset."""

    role: str
    classes: tuple
    n_subjects: int  # per class
    recordings_per_subject: int
    duration_s: float
    sampling_rate_hz: float
    sensors: tuple
    class_params: dict
    master_seed: int = 42
    activities: tuple = ("walking",)
    sensor_gains: dict = None  # placement -> gain on the class-informative signal

    def __post_init__(self):
        if self.role not in ("source", "target"):
            raise ValueError(f"role must be source or target, got {self.role!r}")
        if self.n_subjects < 1 or self.recordings_per_subject < 1:
            raise ValueError("subject and recording counts must be positive")
        if self.duration_s <= 0 or self.sampling_rate_hz <= 0:
            raise ValueError("duration and sampling rate must be positive")
        object.__setattr__(self, "classes", tuple(self.classes))
        object.__setattr__(self, "sensors", tuple(self.sensors))
        object.__setattr__(self, "activities", tuple(self.activities))
        for sensor in self.sensors:
            if sensor not in PLACEMENTS:
                raise ValueError(f"unknown sensor placement {sensor!r}")
        missing = [c for c in self.classes if c not in self.class_params]
        if missing:
            raise ValueError(f"class_params missing entries for {missing}")
        object.__setattr__(self, "class_params", MappingProxyType(dict(self.class_params)))
        gains = dict(self.sensor_gains) if self.sensor_gains else {}
        unknown = [s for s in gains if s not in self.sensors]
        if unknown:
            raise ValueError(f"sensor_gains name sensors outside the spec: {unknown}")
        object.__setattr__(self, "sensor_gains", MappingProxyType(gains))

    @property
    def samples_per_recording(self):
        return int(round(self.duration_s * self.sampling_rate_hz))


def _stream(spec, *indices):
    # independent deterministic stream per (role, class, subject, recording, sensor)
    return np.random.default_rng([spec.master_seed, zlib.crc32(spec.role.encode()), *indices])


def _smooth_noise(rng, n, window):
    raw = rng.normal(size=n + window)
    kernel = np.ones(window) / window
    return np.convolve(raw, kernel, mode="same")[:n]


def _synth_recording(spec, class_idx, subject_idx, rec_idx, sensor_idx):
    label = spec.classes[class_idx]
    params = spec.class_params[label]
    sensor = spec.sensors[sensor_idx]
    gain = spec.sensor_gains.get(sensor, 1.0)
    n = spec.samples_per_recording
    rate = spec.sampling_rate_hz
    t = np.arange(n) / rate

    subject_rng = _stream(spec, class_idx, subject_idx)
    f0 = subject_rng.uniform(*params.stride_hz)
    axis_gains = subject_rng.uniform(0.8, 1.2, size=(3, 3))  # axis x harmonic
    phases = subject_rng.uniform(0.0, 2.0 * np.pi, size=(3, 3))
    tremor_hz = subject_rng.uniform(4.7, 5.3)
    tremor_axis = subject_rng.uniform(0.85, 1.15, size=3)
    impact_carrier = subject_rng.uniform(*params.impact_hz)
    impact_axis = subject_rng.uniform(0.85, 1.15, size=3)
    impact_phases = subject_rng.uniform(0.0, 2.0 * np.pi, size=3)

    rec_rng = _stream(spec, class_idx, subject_idx, rec_idx, sensor_idx)
    wobble = _smooth_noise(rec_rng, n, max(2, int(rate / 2)))
    # instantaneous frequency f0*(1 + jitter*wobble), integrated to a phase
    phase = 2.0 * np.pi * np.cumsum(f0 * (1.0 + params.stride_jitter * wobble)) / rate
    tremor_phase = rec_rng.uniform(0.0, 2.0 * np.pi, size=3)

    # footfall transients: two per stride cycle, at phase multiples of pi
    footfalls = np.flatnonzero(np.diff(np.floor(phase / np.pi)) > 0) + 1
    bursts = np.zeros((3, n))
    if params.impact_amp > 0.0 and footfalls.size:
        burst_scale = rec_rng.uniform(0.7, 1.3, size=footfalls.size)
        half = max(1, int(round(3.0 * params.impact_width_s * rate)))
        offsets = np.arange(-half, half + 1) / rate
        envelope = np.exp(-0.5 * (offsets / params.impact_width_s) ** 2)
        for axis in range(3):
            carrier = np.cos(2.0 * np.pi * impact_carrier * offsets + impact_phases[axis])
            kernel = params.impact_amp * impact_axis[axis] * envelope * carrier
            for center, scale in zip(footfalls, burst_scale):
                lo = max(0, center - half)
                hi = min(n, center + half + 1)
                bursts[axis, lo:hi] += scale * kernel[lo - center + half : hi - center + half]

    channels = []
    for axis in range(3):
        sig = np.zeros(n)
        for k in range(3):
            sig += (
                params.harmonic_amps[k]
                * axis_gains[axis, k]
                * np.sin((k + 1) * phase + phases[axis, k])
            )
        sig += params.tremor_amp * tremor_axis[axis] * np.sin(
            2.0 * np.pi * tremor_hz * t + tremor_phase[axis]
        )
        sig += bursts[axis]
        channels.append(gain * sig)
    samples = np.stack(channels, axis=1)
    samples += rec_rng.normal(scale=params.noise_level, size=(n, 3))
    return Recording(
        subject_id=f"{spec.role[0]}_{label}_{subject_idx:02d}",
        class_label=label,
        sensor_placement=sensor,
        sampling_rate_hz=rate,
        samples=samples,
    )


def synth_generate(spec):
    """Generate the recordings a SynthSpec describes, with activity names.

    Returns (recordings, activities), parallel lists. Output is a pure
    function of the spec: every random stream is derived from the master
    seed and the recording's position in the grid.
    """
    recordings = []
    activities = []
    for class_idx in range(len(spec.classes)):
        for subject_idx in range(spec.n_subjects):
            for rec_idx in range(spec.recordings_per_subject):
                activity = spec.activities[rec_idx % len(spec.activities)]
                for sensor_idx in range(len(spec.sensors)):
                    recordings.append(
                        _synth_recording(spec, class_idx, subject_idx, rec_idx, sensor_idx)
                    )
                    activities.append(activity)
    return recordings, activities


_HEALTHY = ClassSignalParams(
    stride_hz=(1.8, 2.3),
    harmonic_amps=(1.0, 0.5, 0.25),
    tremor_amp=0.0,
    stride_jitter=0.03,
    noise_level=0.16,
    impact_amp=1.5,
    impact_width_s=0.035,
    impact_hz=(12.0, 13.5),
)
_PARKINSONIAN = ClassSignalParams(
    stride_hz=(1.35, 1.85),
    harmonic_amps=(0.55, 0.18, 0.05),
    tremor_amp=0.85,
    stride_jitter=0.12,
    noise_level=0.16,
    impact_amp=0.28,
    impact_width_s=0.09,
    impact_hz=(5.8, 7.2),
)
_ADL = ClassSignalParams(
    stride_hz=(1.4, 2.6),
    harmonic_amps=(1.0, 0.5, 0.25),
    tremor_amp=0.0,
    stride_jitter=0.05,
    noise_level=0.30,
    impact_amp=1.0,
    impact_width_s=0.04,
    impact_hz=(5.0, 16.0),
)


def benchmark_source_spec(master_seed=42):
    """Bundled single-sensor activity dataset for autoencoder pretraining."""
    return SynthSpec(
        role="source",
        classes=("adl",),
        n_subjects=40,
        recordings_per_subject=1,
        duration_s=30.0,
        sampling_rate_hz=100.0,
        sensors=("wrist_single",),
        class_params={"adl": _ADL},
        master_seed=master_seed,
        activities=("walking", "laundry", "driving"),
    )


def benchmark_target_spec(master_seed=42):
    """Bundled six-sensor two-class gait dataset for the transfer task.

    Sampled at the same rate as the pretraining corpus so that the
    frozen filters see the two domains on one frequency axis.
    """
    return SynthSpec(
        role="target",
        classes=("healthy", "pd"),
        n_subjects=10,
        recordings_per_subject=1,
        duration_s=90.0,
        sampling_rate_hz=100.0,
        sensors=CANONICAL_SENSOR_ORDER,
        class_params={"healthy": _HEALTHY, "pd": _PARKINSONIAN},
        master_seed=master_seed,
        activities=("gait",),
    )


def sweep_probe_spec(master_seed=7, informative="left_ankle"):
    """Target-style dataset whose class signal lives in exactly one sensor."""
    gains = {s: 0.0 for s in CANONICAL_SENSOR_ORDER}
    gains[informative] = 1.0
    spec = benchmark_target_spec(master_seed)
    return replace(spec, sensor_gains=gains)


# ---------------------------------------------------------------------------
# model archives


@dataclass
class ModelArchive:
    kind: str
    config: dict
    tensors: dict  # name -> ndarray, insertion-ordered
    provenance: dict = field(default_factory=dict)
    version: int = ARCHIVE_VERSION

    def __post_init__(self):
        if self.kind not in ARCHIVE_KINDS:
            raise ArchiveError(f"unknown archive kind {self.kind!r}; expected {ARCHIVE_KINDS}")


def _creation_timestamp():
    # reproducible builds: honor SOURCE_DATE_EPOCH, else a fixed placeholder
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    if epoch is None:
        return "unset"
    return datetime.fromtimestamp(int(epoch), tz=timezone.utc).isoformat()


def _dtype_code(arr):
    for code, dtype in _DTYPE_CODES.items():
        if arr.dtype == dtype:
            return code
    raise ArchiveError(f"unsupported tensor dtype {arr.dtype}; use one of {list(_DTYPE_CODES)}")


def save_model(archive, path):
    """Serialize an archive atomically (temp file + rename)."""
    path = Path(path)
    provenance = dict(archive.provenance)
    provenance.setdefault("created_at", _creation_timestamp())
    meta = json.dumps(
        {"config": archive.config, "provenance": provenance},
        sort_keys=True,
        separators=(",", ":"),
    ).encode()
    kind = archive.kind.encode()

    blob = bytearray()
    blob += ARCHIVE_MAGIC
    blob += struct.pack("<H", archive.version)
    blob += struct.pack("<H", len(kind)) + kind
    blob += struct.pack("<I", len(meta)) + meta
    blob += struct.pack("<I", len(archive.tensors))
    for name, arr in archive.tensors.items():
        arr = np.ascontiguousarray(arr)
        code = _dtype_code(arr)
        raw = arr.astype(_DTYPE_CODES[code], copy=False).tobytes()
        name_b = name.encode()
        blob += struct.pack("<H", len(name_b)) + name_b
        blob += code.encode()
        blob += struct.pack("<B", arr.ndim)
        for dim in arr.shape:
            blob += struct.pack("<I", dim)
        blob += struct.pack("<Q", len(raw))
        blob += raw
        blob += hashlib.sha256(raw).digest()

    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_name = tempfile.mkstemp(dir=path.parent, prefix=path.name, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as handle:
            handle.write(bytes(blob))
        os.replace(tmp_name, path)
    except BaseException:
        if os.path.exists(tmp_name):
            os.unlink(tmp_name)
        raise
    return path


class _Cursor:
    def __init__(self, data, context):
        self.data = data
        self.pos = 0
        self.context = context

    def take(self, n, what):
        if self.pos + n > len(self.data):
            raise ArchiveError(f"{self.context}: truncated archive while reading {what}")
        out = self.data[self.pos : self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt, what):
        (value,) = struct.unpack(fmt, self.take(struct.calcsize(fmt), what))
        return value


def load_model(path):
    """Read an archive back, verifying schema version and checksums."""
    path = Path(path)
    if not path.exists():
        raise ArchiveError(f"archive not found: {path}")
    cur = _Cursor(path.read_bytes(), str(path))
    if cur.take(4, "magic") != ARCHIVE_MAGIC:
        raise ArchiveError(f"{path}: not a model archive (bad magic bytes)")
    version = cur.unpack("<H", "version")
    if version != ARCHIVE_VERSION:
        raise ArchiveError(
            f"{path}: archive schema version {version} is not supported "
            f"(this build reads version {ARCHIVE_VERSION})"
        )
    kind = cur.take(cur.unpack("<H", "kind length"), "kind").decode()
    meta = json.loads(cur.take(cur.unpack("<I", "metadata length"), "metadata").decode())
    n_tensors = cur.unpack("<I", "tensor count")
    tensors = {}
    for i in range(n_tensors):
        name = cur.take(cur.unpack("<H", "tensor name length"), "tensor name").decode()
        code = cur.take(2, "dtype code").decode()
        if code not in _DTYPE_CODES:
            raise ArchiveError(f"{path}: tensor {name!r} has unknown dtype code {code!r}")
        ndim = cur.unpack("<B", "rank")
        shape = tuple(cur.unpack("<I", "dimension") for _ in range(ndim))
        nbytes = cur.unpack("<Q", "byte length")
        dtype = _DTYPE_CODES[code]
        expected = int(np.prod(shape, dtype=np.int64)) * dtype.itemsize
        if nbytes != expected:
            raise ArchiveError(
                f"{path}: tensor {name!r} shape {shape} implies {expected} bytes, "
                f"header says {nbytes}"
            )
        raw = cur.take(nbytes, f"tensor {name!r} data")
        digest = cur.take(32, f"tensor {name!r} checksum")
        if hashlib.sha256(raw).digest() != digest:
            raise ArchiveError(f"{path}: checksum failure on tensor {name!r}")
        tensors[name] = np.frombuffer(raw, dtype=dtype).reshape(shape).copy()
    if cur.pos != len(cur.data):
        raise ArchiveError(f"{path}: {len(cur.data) - cur.pos} trailing bytes after last tensor")
    return ModelArchive(
        kind=kind,
        config=meta["config"],
        tensors=tensors,
        provenance=meta["provenance"],
        version=version,
    )
