"""Signal preparation: normalization, framing, and sensor stacking.

Raw tri-axial recordings are normalized per channel, cut into
non-overlapping 250-step frames, and optionally stacked across sensors
in a fixed canonical order. Everything here is a pure function over
immutable values; the returned arrays are marked read-only.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

logger = logging.getLogger(__name__)

FRAME_LEN = 250

CANONICAL_SENSOR_ORDER = (
    "sternum",
    "lumbar",
    "left_ankle",
    "right_ankle",
    "left_wrist",
    "right_wrist",
)

PLACEMENTS = frozenset(CANONICAL_SENSOR_ORDER) | {"wrist_single"}

_STD_FLOOR = 1e-8  # below this a channel is treated as constant


def _frozen_array(values, ndim):
    arr = np.array(values, dtype=np.float64)
    if arr.ndim != ndim:
        raise ValueError(f"expected a {ndim}-d array, got shape {arr.shape}")
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True)
class Recording:
    """One continuous tri-axial capture from a single body-worn sensor.

    samples is a T x 3 matrix of (x, y, z) acceleration; the sampling
    rate is carried as metadata only and never used for resampling.
    """

    subject_id: str
    class_label: str
    sensor_placement: str
    sampling_rate_hz: float
    samples: np.ndarray

    def __post_init__(self):
        if self.sensor_placement not in PLACEMENTS:
            raise ValueError(
                f"unknown sensor placement {self.sensor_placement!r}; "
                f"expected one of {sorted(PLACEMENTS)}"
            )
        if not self.sampling_rate_hz > 0:
            raise ValueError(f"sampling_rate_hz must be positive, got {self.sampling_rate_hz}")
        arr = _frozen_array(self.samples, ndim=2)
        if arr.shape[0] < 1 or arr.shape[1] != 3:
            raise ValueError(f"samples must be T x 3 with T >= 1, got shape {arr.shape}")
        object.__setattr__(self, "samples", arr)

    @property
    def duration(self):
        """Number of time steps."""
        return self.samples.shape[0]


@dataclass(frozen=True)
class Frame:
    """A fixed-length window of one or more stacked sensor streams.

    data is channels x time with channels divisible by 3 (one x,y,z
    triple per sensor, ordered as in ``sensors``). Provenance pins the
    frame to exactly one subject, recording, and window position.
    """

    data: np.ndarray
    subject_id: str
    recording_index: int
    window_index: int
    sensors: tuple = field(default=("wrist_single",))
    label: int = 0

    def __post_init__(self):
        arr = _frozen_array(self.data, ndim=2)
        channels, time = arr.shape
        if time < 1:
            raise ValueError("frame must contain at least one time step")
        if channels % 3 != 0 or channels == 0:
            raise ValueError(f"channel count must be a positive multiple of 3, got {channels}")
        sensors = tuple(self.sensors)
        if len(sensors) != channels // 3:
            raise ValueError(
                f"{channels} channels imply {channels // 3} sensors, got {len(sensors)}"
            )
        if len(set(sensors)) != len(sensors):
            raise ValueError(f"duplicate sensor placement in {sensors}")
        if self.label < 0:
            raise ValueError(f"label must be a non-negative class index, got {self.label}")
        object.__setattr__(self, "data", arr)
        object.__setattr__(self, "sensors", sensors)

    @property
    def time_steps(self):
        return self.data.shape[1]

    @property
    def channel_count(self):
        return self.data.shape[0]


def normalize(recording):
    """Zero-center each channel and scale it to unit standard deviation.

    Uses the population (biased) standard deviation over the whole
    recording so that re-normalizing is a no-op. Channels whose std is
    below 1e-8 are centered only.
    """
    samples = recording.samples
    mean = samples.mean(axis=0)
    std = samples.std(axis=0)
    divisor = np.where(std < _STD_FLOOR, 1.0, std)
    return Recording(
        subject_id=recording.subject_id,
        class_label=recording.class_label,
        sensor_placement=recording.sensor_placement,
        sampling_rate_hz=recording.sampling_rate_hz,
        samples=(samples - mean) / divisor,
    )


def extract_frames(recording, frame_len=FRAME_LEN, *, label=0, recording_index=0):
    """Cut a recording into consecutive non-overlapping frames.

    Window i covers samples [frame_len*i, frame_len*(i+1)); the trailing
    remainder is discarded. A recording shorter than one frame yields an
    empty list. ``label`` is the class index the caller resolved for
    recording.class_label.
    """
    if frame_len < 1:
        raise ValueError(f"frame_len must be positive, got {frame_len}")
    total = recording.duration
    count = total // frame_len
    if count == 0:
        logger.warning(
            "recording %s/%s has %d samples, shorter than one %d-step frame; skipped",
            recording.subject_id,
            recording.sensor_placement,
            total,
            frame_len,
        )
        return []
    frames = []
    for i in range(count):
        window = recording.samples[i * frame_len : (i + 1) * frame_len]
        frames.append(
            Frame(
                data=window.T,
                subject_id=recording.subject_id,
                recording_index=recording_index,
                window_index=i,
                sensors=(recording.sensor_placement,),
                label=label,
            )
        )
    return frames


def stack_sensors(frames_by_sensor, order=CANONICAL_SENSOR_ORDER):
    """Concatenate per-sensor frames channel-wise in canonical order.

    All frames must come from the same subject and window and agree on
    label and time extent. A single-sensor order is an identity
    passthrough of that frame's data.
    """
    order = tuple(order)
    if len(set(order)) != len(order):
        raise ValueError(f"duplicate placement in stacking order {order}")
    missing = [p for p in order if p not in frames_by_sensor]
    if missing:
        raise ValueError(f"missing sensor frames for placements {missing}")
    parts = [frames_by_sensor[p] for p in order]
    first = parts[0]
    for frame, placement in zip(parts, order):
        if frame.sensors != (placement,):
            raise ValueError(
                f"frame registered under {placement!r} carries sensors {frame.sensors}"
            )
        if frame.subject_id != first.subject_id:
            raise ValueError(
                f"cannot stack across subjects {first.subject_id!r} and {frame.subject_id!r}"
            )
        if frame.window_index != first.window_index:
            raise ValueError(
                f"window index mismatch: {first.window_index} vs {frame.window_index}"
            )
        if frame.recording_index != first.recording_index:
            raise ValueError(
                f"recording index mismatch: {first.recording_index} vs {frame.recording_index}"
            )
        if frame.label != first.label:
            raise ValueError(f"label mismatch: {first.label} vs {frame.label}")
        if frame.time_steps != first.time_steps:
            raise ValueError(
                f"time extent mismatch: {first.time_steps} vs {frame.time_steps}"
            )
    return Frame(
        data=np.concatenate([f.data for f in parts], axis=0),
        subject_id=first.subject_id,
        recording_index=first.recording_index,
        window_index=first.window_index,
        sensors=order,
        label=first.label,
    )


def slice_sensor(frame, placement):
    """Recover one sensor's 3-channel frame from a stacked frame."""
    try:
        position = frame.sensors.index(placement)
    except ValueError:
        raise ValueError(
            f"placement {placement!r} not in frame sensors {frame.sensors}"
        ) from None
    return Frame(
        data=frame.data[3 * position : 3 * position + 3],
        subject_id=frame.subject_id,
        recording_index=frame.recording_index,
        window_index=frame.window_index,
        sensors=(placement,),
        label=frame.label,
    )
