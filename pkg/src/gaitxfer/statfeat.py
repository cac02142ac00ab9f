"""Hand-engineered per-frame statistics used as the classical baseline.

Each single-sensor frame is summarized by a 19-value vector in a frozen
order: per-axis mean, population variance, and RMS; the three pairwise
Pearson correlations; the per-axis max-minus-min ranges dx, dy, dz; and
the four Euclidean combinations of those ranges. Multi-sensor frames
concatenate one 19-vector per sensor.
"""

from __future__ import annotations

import csv
import logging

import numpy as np

from .sigprep import slice_sensor

logger = logging.getLogger(__name__)

STAT_FEATURE_NAMES = (
    "mean_x",
    "mean_y",
    "mean_z",
    "var_x",
    "var_y",
    "var_z",
    "rms_x",
    "rms_y",
    "rms_z",
    "rho_xy",
    "rho_yz",
    "rho_xz",
    "dx",
    "dy",
    "dz",
    "dxy",
    "dyz",
    "dxz",
    "dxyz",
)

# column order of the per-group summary table
TABLE_STATISTICS = (
    "rms_x",
    "rms_y",
    "rms_z",
    "rho_xy",
    "rho_yz",
    "rho_xz",
    "dx",
    "dy",
    "dz",
)

_RHO_FLOOR = 1e-12


def _pearson(a, b):
    # population covariance over population stds; 0 when either axis is constant
    sa = a.std()
    sb = b.std()
    if sa < _RHO_FLOOR or sb < _RHO_FLOOR:
        return 0.0
    cov = ((a - a.mean()) * (b - b.mean())).mean()
    return float(cov / (sa * sb))


def _single_sensor_features(data):
    x, y, z = data[0], data[1], data[2]
    means = data.mean(axis=1)
    variances = data.var(axis=1)
    rms = np.sqrt((data * data).mean(axis=1))
    dx, dy, dz = (data.max(axis=1) - data.min(axis=1)).tolist()
    return np.array(
        [
            means[0],
            means[1],
            means[2],
            variances[0],
            variances[1],
            variances[2],
            rms[0],
            rms[1],
            rms[2],
            _pearson(x, y),
            _pearson(y, z),
            _pearson(x, z),
            dx,
            dy,
            dz,
            np.hypot(dx, dy),
            np.hypot(dy, dz),
            np.hypot(dx, dz),
            float(np.sqrt(dx * dx + dy * dy + dz * dz)),
        ],
        dtype=np.float64,
    )


def stat_features(frame):
    """19-value statistics vector for one frame, per-sensor concatenated.

    A 3-channel frame yields exactly 19 values in STAT_FEATURE_NAMES
    order; an S-sensor stacked frame yields 19*S values, one block per
    sensor in the frame's own sensor order.
    """
    blocks = [
        _single_sensor_features(frame.data[3 * i : 3 * i + 3])
        for i in range(frame.channel_count // 3)
    ]
    return np.concatenate(blocks)


def _group_key(frame, sensor_index):
    return frame.sensors[sensor_index], frame.label


def joint_statistics_table(frames, class_names=None, per_trial=False):
    """Mean and std of the summary statistics per (placement, class).

    Stacked frames are split into their single-sensor parts first. With
    per_trial=True the statistics are computed once per recording over
    its frames concatenated in window order, instead of once per frame.
    Returns a list of row dicts with placement, class_label, count, and
    <stat>_mean / <stat>_std for every TABLE_STATISTICS entry. Expected
    (placement, class) groups with no data are omitted with a warning.
    """
    singles = []
    for frame in frames:
        if len(frame.sensors) == 1:
            singles.append(frame)
        else:
            singles.extend(slice_sensor(frame, p) for p in frame.sensors)

    stat_index = {name: STAT_FEATURE_NAMES.index(name) for name in TABLE_STATISTICS}
    groups = {}
    if per_trial:
        trials = {}
        for frame in singles:
            key = (frame.sensors[0], frame.label, frame.subject_id, frame.recording_index)
            trials.setdefault(key, []).append(frame)
        for (placement, label, _, _), members in trials.items():
            members.sort(key=lambda f: f.window_index)
            joined = np.concatenate([f.data for f in members], axis=1)
            vec = _single_sensor_features(joined)
            groups.setdefault((placement, label), []).append(vec)
    else:
        for frame in singles:
            vec = _single_sensor_features(frame.data)
            groups.setdefault((frame.sensors[0], frame.label), []).append(vec)

    placements = sorted({p for p, _ in groups})
    labels = sorted({lab for _, lab in groups})
    if class_names is not None:
        labels = sorted(set(labels) | set(range(len(class_names))))

    def display(label):
        if class_names is not None and 0 <= label < len(class_names):
            return class_names[label]
        return str(label)

    rows = []
    for placement in placements:
        for label in labels:
            members = groups.get((placement, label))
            if not members:
                logger.warning(
                    "no frames for placement %r class %r; row omitted",
                    placement,
                    display(label),
                )
                continue
            stacked = np.stack(members)
            row = {
                "placement": placement,
                "class_label": display(label),
                "count": len(members),
            }
            for name in TABLE_STATISTICS:
                column = stacked[:, stat_index[name]]
                row[f"{name}_mean"] = float(column.mean())
                row[f"{name}_std"] = float(column.std())
            rows.append(row)
    return rows


def write_statistics_csv(rows, path, delimiter=","):
    """Write joint_statistics_table rows as delimited text."""
    header = ["placement", "class_label", "count"]
    for name in TABLE_STATISTICS:
        header.extend([f"{name}_mean", f"{name}_std"])
    with open(path, "w", newline="") as handle:
        writer = csv.DictWriter(handle, fieldnames=header, delimiter=delimiter)
        writer.writeheader()
        for row in rows:
            writer.writerow(row)
