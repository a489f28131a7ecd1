"""Camera-trajectory quantization into canonical motions, speed statistics,
and deterministic condition-text rendering.

A canonical motion set discretizes per-frame camera movement: translations of
step length delta along unit directions, rotations of turn angle alpha about
camera axes, and their composites. Each consecutive (optionally downsampled)
pose pair is labeled with the nearest canonical transform under the weighted
rigid-distance metric, brute-force over the whole set.

Trajectories are assumed to be expressed in units where real movement exceeds
0.1 * delta per segment; ``normalize_trajectory_scale`` rescales the median
moving-segment displacement to delta so labels are scale-free. Segments below
the absolute threshold count as stationary and are excluded from the median;
a trajectory with no moving segment is left unscaled.

Directional statistics follow the displacement recipe: translations are the
N-1 position differences, direction angles the N-2 angles between consecutive
displacements (zero-norm displacement contributes angle 0 by convention), and
rotation angles the N-1 angles between consecutive viewing axes.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from importlib import resources

import numpy as np

from .errors import (
    EmptyMotionSet,
    EmptyStats,
    InputParseError,
    TooFewPoses,
    UnknownMotionName,
    ValidationError,
)
from .se3 import (
    DEFAULT_WEIGHTS,
    Pose4,
    Se3DistanceWeights,
    batch_se3_distances,
    compose,
    identity_pose,
    pose_from_parts,
    relative_transform,
    rotation_pose,
    validate_pose,
)

# Fraction of delta below which a segment displacement counts as stationary.
STATIONARY_FRACTION = 0.1

# Direction-angle threshold (radians) above which a segment counts as jittery,
# and the jitter-score fraction above which callers typically reject a clip.
DEFAULT_JITTER_ANGLE = math.pi / 4
DEFAULT_JITTER_CUTOFF = 0.2

# Minimum run length for a consistent-motion segment, in label steps.
DEFAULT_MIN_SEGMENT = 33


@dataclass(frozen=True)
class CanonicalMotion:
    """One canonical per-frame transform with its control-input label."""

    name: str
    keyboard_label: str
    transform: Pose4
    is_rotational: bool


@dataclass(frozen=True)
class CanonicalMotionSet:
    """Validated set of canonical motions plus the scales that generated it."""

    motions: tuple[CanonicalMotion, ...]
    step_length: float
    turn_angle: float

    def __post_init__(self) -> None:
        if not self.motions:
            raise EmptyMotionSet("motion set must not be empty")
        names = [m.name for m in self.motions]
        if len(set(names)) != len(names):
            raise ValidationError("motion names must be unique")
        if len(self.motions) < 9:
            raise ValidationError(
                f"motion set needs at least 9 entries, got {len(self.motions)}"
            )
        if self.step_length <= 0 or self.turn_angle <= 0:
            raise ValidationError("step_length and turn_angle must be positive")
        stationary = [m for m in self.motions if m.name == "stationary"]
        if not stationary or not np.array_equal(
            stationary[0].transform.matrix, np.eye(4)
        ):
            raise ValidationError("set must contain 'stationary' with identity transform")

    def __len__(self) -> int:
        return len(self.motions)

    def names(self) -> list[str]:
        return [m.name for m in self.motions]

    def by_name(self, name: str) -> CanonicalMotion:
        for m in self.motions:
            if m.name == name:
                return m
        raise UnknownMotionName(f"no motion named {name!r}")

    def stacked_matrices(self) -> np.ndarray:
        return np.stack([m.transform.matrix for m in self.motions])


# Unit directions in the camera frame (x right, y down, z forward).
_DIRECTIONS = {
    "forward": np.array([0.0, 0.0, 1.0]),
    "backward": np.array([0.0, 0.0, -1.0]),
    "left": np.array([-1.0, 0.0, 0.0]),
    "right": np.array([1.0, 0.0, 0.0]),
    "forward-left": np.array([-1.0, 0.0, 1.0]) / math.sqrt(2.0),
    "forward-right": np.array([1.0, 0.0, 1.0]) / math.sqrt(2.0),
}


def _yaw(angle: float) -> Pose4:
    # Positive yaw turns the viewing axis toward +x (rightward).
    return rotation_pose("y", angle)


def _pitch(angle: float) -> Pose4:
    # Positive pitch lifts the viewing axis toward -y (upward, y points down).
    return rotation_pose("x", angle)


def default_motion_set(step_length: float = 1.0, turn_angle: float = 0.05) -> CanonicalMotionSet:
    """The 17-motion vocabulary: stationary, 4 + 2 translations, 4 rotations,
    and forward/diagonal translations composed with yaw turns.

    Composite translations keep norm ``step_length`` (diagonals use the unit
    diagonal direction), so trajectories generated from any motion re-quantize
    to it exactly after median-speed normalization.
    """
    if step_length <= 0 or turn_angle <= 0:
        raise ValidationError("step_length and turn_angle must be positive")
    d, a = step_length, turn_angle

    def trans(name: str) -> Pose4:
        return pose_from_parts(np.eye(3), d * _DIRECTIONS[name])

    def mixed(direction: str, yaw_sign: float) -> Pose4:
        return pose_from_parts(_yaw(yaw_sign * a).rotation, d * _DIRECTIONS[direction])

    entries = [
        ("stationary", "No Keys + No Mouse Movement", identity_pose(), False),
        ("move-forward", "W", trans("forward"), False),
        ("move-backward", "S", trans("backward"), False),
        ("move-left", "A", trans("left"), False),
        ("move-right", "D", trans("right"), False),
        ("turn-left", "Mouse Left", _yaw(-a), True),
        ("turn-right", "Mouse Right", _yaw(a), True),
        ("tilt-up", "Mouse Up", _pitch(a), True),
        ("tilt-down", "Mouse Down", _pitch(-a), True),
        ("move-forward-left", "W+A", trans("forward-left"), False),
        ("move-forward-right", "W+D", trans("forward-right"), False),
        ("move-forward+turn-left", "W + Mouse Left", mixed("forward", -1.0), True),
        ("move-forward+turn-right", "W + Mouse Right", mixed("forward", 1.0), True),
        ("move-forward-left+turn-left", "W+A + Mouse Left", mixed("forward-left", -1.0), True),
        ("move-forward-left+turn-right", "W+A + Mouse Right", mixed("forward-left", 1.0), True),
        ("move-forward-right+turn-left", "W+D + Mouse Left", mixed("forward-right", -1.0), True),
        ("move-forward-right+turn-right", "W+D + Mouse Right", mixed("forward-right", 1.0), True),
    ]
    motions = tuple(
        CanonicalMotion(name=n, keyboard_label=k, transform=t, is_rotational=r)
        for n, k, t, r in entries
    )
    return CanonicalMotionSet(motions=motions, step_length=d, turn_angle=a)


_KEYBOARD_LABELS = {m.name: m.keyboard_label for m in default_motion_set().motions}


def keyboard_mapping(motion_name: str) -> str:
    """Control-input label ('W+A + Mouse Right' style) for a canonical motion name."""
    try:
        return _KEYBOARD_LABELS[motion_name]
    except KeyError:
        raise UnknownMotionName(f"no keyboard label for motion {motion_name!r}") from None


# -- labeling -------------------------------------------------------------------


@dataclass(frozen=True)
class MotionLabel:
    motion_name: str
    segment_index: int
    distance_to_canonical: float


def _positions(poses: list[Pose4]) -> np.ndarray:
    return np.stack([p.translation for p in poses])


def normalize_trajectory_scale(
    poses: list[Pose4], step_length: float
) -> tuple[list[Pose4], float]:
    """Rescale positions so the median moving-segment displacement norm equals
    ``step_length``; returns (rescaled poses, applied scale).

    Segments with norm below STATIONARY_FRACTION * step_length are excluded
    from the median; if none remain the trajectory is returned unscaled.
    Rotations are untouched.
    """
    if len(poses) < 2:
        raise TooFewPoses(f"need >= 2 poses, got {len(poses)}")
    pos = _positions(poses)
    norms = np.linalg.norm(np.diff(pos, axis=0), axis=1)
    moving = norms[norms >= STATIONARY_FRACTION * step_length]
    if moving.size == 0:
        return list(poses), 1.0
    scale = step_length / float(np.median(moving))
    out = []
    for p in poses:
        m = np.array(p.matrix)
        m[:3, 3] *= scale
        out.append(Pose4(m))
    return out, scale


def quantize_trajectory(
    poses: list[Pose4],
    motion_set: CanonicalMotionSet,
    stride: int = 1,
    weights: Se3DistanceWeights = DEFAULT_WEIGHTS,
) -> list[MotionLabel]:
    """Label every consecutive (downsampled) pose pair with its nearest motion.

    The relative transform of each pair is compared against every canonical
    transform under the weighted rigid distance; ties break toward the earlier
    set entry. Expects the trajectory already speed-normalized.
    """
    if stride < 1:
        raise ValidationError(f"stride must be >= 1, got {stride}")
    if len(motion_set) == 0:
        raise EmptyMotionSet("motion set must not be empty")
    sampled = poses[::stride]
    if len(sampled) < 2:
        raise TooFewPoses(
            f"need >= 2 poses after stride {stride}, got {len(sampled)}"
        )
    rels = np.stack(
        [
            relative_transform(sampled[i], sampled[i + 1]).matrix
            for i in range(len(sampled) - 1)
        ]
    )
    dists = batch_se3_distances(rels, motion_set.stacked_matrices(), weights)
    best = np.argmin(dists, axis=1)
    names = motion_set.names()
    return [
        MotionLabel(
            motion_name=names[int(k)],
            segment_index=i,
            distance_to_canonical=float(dists[i, k]),
        )
        for i, k in enumerate(best)
    ]


# -- speed statistics -------------------------------------------------------------


@dataclass(frozen=True)
class SpeedStats:
    """Displacement vectors and the two angle sequences derived from a trajectory.

    translations: (N-1, 3) position differences.
    direction_angles: (N-2,) angles between consecutive displacements, radians.
    rotation_angles: (N-1,) angles between consecutive viewing axes, radians.
    """

    translations: np.ndarray
    direction_angles: np.ndarray
    rotation_angles: np.ndarray

    def mean_speed(self) -> float:
        return float(np.linalg.norm(self.translations, axis=1).mean())

    def mean_rotation(self) -> float:
        return float(self.rotation_angles.mean())


def _angle_between(v1: np.ndarray, v2: np.ndarray) -> float:
    n1 = float(np.linalg.norm(v1))
    n2 = float(np.linalg.norm(v2))
    if n1 == 0.0 or n2 == 0.0:
        return 0.0
    cos = float(np.dot(v1, v2)) / (n1 * n2)
    return math.acos(min(1.0, max(-1.0, cos)))


def speed_stats(poses: list[Pose4]) -> SpeedStats:
    """Displacements, direction angles, and viewing-axis rotation angles.

    Needs >= 2 poses; with exactly 2 the direction-angle list is empty.
    """
    n = len(poses)
    if n < 2:
        raise TooFewPoses(f"need >= 2 poses, got {n}")
    pos = _positions(poses)
    translations = np.diff(pos, axis=0)
    direction_angles = np.array(
        [_angle_between(translations[i], translations[i + 1]) for i in range(n - 2)]
    )
    axes = np.stack([p.viewing_axis for p in poses])
    rotation_angles = np.array(
        [_angle_between(axes[i], axes[i + 1]) for i in range(n - 1)]
    )
    return SpeedStats(
        translations=translations,
        direction_angles=direction_angles,
        rotation_angles=rotation_angles,
    )


def jitter_score(stats: SpeedStats, angle_threshold: float = DEFAULT_JITTER_ANGLE) -> float:
    """Fraction of direction angles strictly exceeding the threshold."""
    if stats.direction_angles.size == 0:
        raise EmptyStats("jitter needs at least one direction angle (>= 3 poses)")
    return float(np.count_nonzero(stats.direction_angles > angle_threshold)) / float(
        stats.direction_angles.size
    )


def segment_consistent_motion(
    labels: list[MotionLabel], min_segments: int = DEFAULT_MIN_SEGMENT
) -> list[tuple[int, int, str]]:
    """Maximal runs of one motion name lasting >= min_segments label steps.

    Returns (start_index, end_index, motion_name) with inclusive ends.
    """
    if min_segments < 1:
        raise ValidationError(f"min_segments must be >= 1, got {min_segments}")
    out: list[tuple[int, int, str]] = []
    i = 0
    while i < len(labels):
        j = i
        while j + 1 < len(labels) and labels[j + 1].motion_name == labels[i].motion_name:
            j += 1
        if j - i + 1 >= min_segments:
            out.append((i, j, labels[i].motion_name))
        i = j + 1
    return out


# -- condition text ---------------------------------------------------------------


@dataclass(frozen=True)
class SpeedBuckets:
    """Two ascending cut points per quantity, inducing slow/moderate/fast buckets."""

    translation: tuple[float, float]
    rotation: tuple[float, float]

    def __post_init__(self) -> None:
        for lo, hi in (self.translation, self.rotation):
            if not (0 <= lo < hi):
                raise ValidationError("bucket cut points must be ascending and non-negative")

    @classmethod
    def for_motion_set(cls, motion_set: CanonicalMotionSet) -> "SpeedBuckets":
        d, a = motion_set.step_length, motion_set.turn_angle
        return cls(translation=(0.5 * d, 1.5 * d), rotation=(0.5 * a, 1.5 * a))


_BUCKET_NAMES = ("slow", "moderate", "fast")


def _bucket(value: float, cuts: tuple[float, float]) -> str:
    if value <= cuts[0]:
        return _BUCKET_NAMES[0]
    if value <= cuts[1]:
        return _BUCKET_NAMES[1]
    return _BUCKET_NAMES[2]


@dataclass(frozen=True)
class ConditionText:
    prefix: str
    motion_clause: str
    speed_clause: str

    @property
    def text(self) -> str:
        return " ".join(part for part in (self.prefix, self.motion_clause, self.speed_clause) if part)


def default_vocabulary() -> dict:
    with resources.files("yumekit.data").joinpath("motion_vocab.json").open(
        "r", encoding="utf-8"
    ) as fh:
        return json.load(fh)


def render_condition_text(
    labels: list[MotionLabel],
    stats: SpeedStats,
    vocab: dict | None = None,
    speed_buckets: SpeedBuckets | None = None,
) -> ConditionText:
    """Deterministic caption: fixed prefix, collapsed motion phrases, speed clause.

    Consecutive identical labels collapse to one phrase; the speed clause
    buckets the trajectory-mean translation speed and rotation angle.
    """
    if not labels:
        raise EmptyStats("need at least one motion label")
    vocab = vocab if vocab is not None else default_vocabulary()
    if speed_buckets is None:
        speed_buckets = SpeedBuckets(translation=(0.5, 1.5), rotation=(0.025, 0.075))
    phrases = vocab["phrases"]
    collapsed: list[str] = []
    for lab in labels:
        if not collapsed or collapsed[-1] != lab.motion_name:
            collapsed.append(lab.motion_name)
    try:
        motion_clause = " ".join(phrases[name] for name in collapsed)
    except KeyError as exc:
        raise UnknownMotionName(f"vocabulary has no phrase for {exc.args[0]!r}") from None
    speed_clause = vocab["speed_template"].format(
        translation=_bucket(stats.mean_speed(), speed_buckets.translation),
        rotation=_bucket(stats.mean_rotation(), speed_buckets.rotation),
    )
    return ConditionText(
        prefix=vocab["prefix"], motion_clause=motion_clause, speed_clause=speed_clause
    )


# -- full annotation pipeline ------------------------------------------------------


@dataclass(frozen=True)
class TrajectoryAnnotation:
    labels: list[MotionLabel]
    segments: list[tuple[int, int, str]]
    stats: SpeedStats
    condition: ConditionText
    jitter: float
    scale: float = 1.0

    def to_dict(self) -> dict:
        return {
            "labels": [
                {
                    "motion": l.motion_name,
                    "segment_index": l.segment_index,
                    "distance_to_canonical": l.distance_to_canonical,
                }
                for l in self.labels
            ],
            "segments": [
                {"start": s, "end": e, "motion": name} for s, e, name in self.segments
            ],
            "speed_stats": {
                "translations": self.stats.translations.tolist(),
                "direction_angles": self.stats.direction_angles.tolist(),
                "rotation_angles": self.stats.rotation_angles.tolist(),
                "mean_speed": self.stats.mean_speed(),
                "mean_rotation": self.stats.mean_rotation(),
            },
            "condition_text": self.condition.text,
            "condition_parts": {
                "prefix": self.condition.prefix,
                "motion_clause": self.condition.motion_clause,
                "speed_clause": self.condition.speed_clause,
            },
            "jitter_score": self.jitter,
            "applied_scale": self.scale,
        }


def annotate_trajectory(
    poses: list[Pose4],
    motion_set: CanonicalMotionSet | None = None,
    *,
    stride: int = 1,
    weights: Se3DistanceWeights = DEFAULT_WEIGHTS,
    jitter_angle: float = DEFAULT_JITTER_ANGLE,
    min_segment: int = DEFAULT_MIN_SEGMENT,
    vocab: dict | None = None,
) -> TrajectoryAnnotation:
    """Downsample, speed-normalize, quantize, and caption one trajectory."""
    motion_set = motion_set if motion_set is not None else default_motion_set()
    if stride < 1:
        raise ValidationError(f"stride must be >= 1, got {stride}")
    sampled = poses[::stride]
    if len(sampled) < 2:
        raise TooFewPoses(f"need >= 2 poses after stride {stride}, got {len(sampled)}")
    normalized, scale = normalize_trajectory_scale(sampled, motion_set.step_length)
    labels = quantize_trajectory(normalized, motion_set, stride=1, weights=weights)
    stats = speed_stats(normalized)
    segments = segment_consistent_motion(labels, min_segments=min_segment)
    jitter = (
        jitter_score(stats, angle_threshold=jitter_angle)
        if stats.direction_angles.size
        else 0.0
    )
    condition = render_condition_text(
        labels, stats, vocab=vocab, speed_buckets=SpeedBuckets.for_motion_set(motion_set)
    )
    return TrajectoryAnnotation(
        labels=labels,
        segments=segments,
        stats=stats,
        condition=condition,
        jitter=jitter,
        scale=scale,
    )


# -- synthetic trajectories and file I/O --------------------------------------------


def synthesize_trajectory(
    motion: CanonicalMotion,
    n_poses: int,
    rng: np.random.Generator | None = None,
    rotation_noise: float = 0.0,
    translation_noise: float = 0.0,
) -> list[Pose4]:
    """Apply one canonical transform repeatedly from the identity pose.

    Optional per-step noise: a rotation of angle <= rotation_noise about a
    random axis composed into the step, plus a translation perturbation of
    norm <= translation_noise.
    """
    if n_poses < 2:
        raise TooFewPoses(f"need >= 2 poses, got {n_poses}")
    poses = [identity_pose()]
    for _ in range(n_poses - 1):
        step = motion.transform
        if rng is not None and (rotation_noise > 0.0 or translation_noise > 0.0):
            axis = rng.standard_normal(3)
            axis /= np.linalg.norm(axis)
            angle = rng.uniform(0.0, rotation_noise)
            shift = rng.standard_normal(3)
            shift *= rng.uniform(0.0, translation_noise) / np.linalg.norm(shift)
            noise = pose_from_parts(rotation_pose(axis, angle).rotation, shift)
            step = compose(step, noise)
        poses.append(compose(poses[-1], step))
    return poses


def load_trajectory(path: str) -> tuple[float | None, list[Pose4]]:
    """Read a trajectory file: JSON {"fps", "poses": [[16 row-major]...]} or a
    16-column CSV of row-major pose matrices. Returns (fps or None, poses)."""
    if str(path).endswith(".json"):
        try:
            with open(path, encoding="utf-8") as fh:
                obj = json.load(fh)
        except json.JSONDecodeError as exc:
            raise InputParseError(f"invalid JSON in {path}: {exc}") from exc
        except OSError as exc:
            raise InputParseError(f"cannot read {path}: {exc}") from exc
        if not isinstance(obj, dict) or "poses" not in obj:
            raise InputParseError("trajectory JSON needs a 'poses' list")
        rows = obj["poses"]
        fps = obj.get("fps")
        fps = float(fps) if fps is not None else None
    else:
        rows = []
        fps = None
        try:
            with open(path, newline="", encoding="utf-8") as fh:
                for line_no, row in enumerate(csv.reader(fh), start=1):
                    if not row:
                        continue
                    if len(row) != 16:
                        raise InputParseError(
                            f"{path}:{line_no}: expected 16 columns, got {len(row)}"
                        )
                    try:
                        rows.append([float(v) for v in row])
                    except ValueError as exc:
                        raise InputParseError(f"{path}:{line_no}: {exc}") from None
        except OSError as exc:
            raise InputParseError(f"cannot read {path}: {exc}") from exc
    if not isinstance(rows, list):
        raise InputParseError("trajectory 'poses' must be a list")
    if not rows:
        raise TooFewPoses("trajectory contains no poses")
    poses = []
    for idx, row in enumerate(rows):
        arr = np.asarray(row, dtype=float)
        if arr.shape not in ((16,), (4, 4)):
            raise InputParseError(f"pose {idx} must have 16 entries, got shape {arr.shape}")
        poses.append(validate_pose(arr))
    return fps, poses


def motion_set_from_dict(obj: dict) -> CanonicalMotionSet:
    """Build a motion set from config: default scales, or a full custom list."""
    if not isinstance(obj, dict):
        raise InputParseError("motion set config must be a JSON object")
    if "motions" in obj:
        motions = []
        for entry in obj["motions"]:
            try:
                motions.append(
                    CanonicalMotion(
                        name=entry["name"],
                        keyboard_label=entry.get("keyboard_label", ""),
                        transform=validate_pose(entry["matrix"]),
                        is_rotational=bool(entry.get("is_rotational", False)),
                    )
                )
            except (TypeError, KeyError):
                raise InputParseError("each motion needs 'name' and 'matrix'") from None
        return CanonicalMotionSet(
            motions=tuple(motions),
            step_length=float(obj.get("step_length", 1.0)),
            turn_angle=float(obj.get("turn_angle", 0.05)),
        )
    return default_motion_set(
        step_length=float(obj.get("step_length", 1.0)),
        turn_angle=float(obj.get("turn_angle", 0.05)),
    )
