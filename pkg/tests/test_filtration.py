"""Tests for the frame-by-frame filtration pipeline."""

import json
import math
from pathlib import Path

import numpy as np
import pytest

from avatar.talking.clip import VideoClip, validate_clip
from avatar.talking.container import read_clip
from avatar.talking.filtration import (
    REPORT_SUFFIX,
    DegenerateGeometryError,
    center_crop,
    filter_corpus,
    filter_video,
    frame_verdicts,
    frontal_angle,
    inter_frame_displacement,
    passing_runs,
    silence_mask,
)
from avatar.talking.models.reports import FilterPolicy, FilterReport
from avatar.talking.models.shape import ShapeConfig
from avatar.talking.synthetic.corpus import read_corpus_index
from avatar.talking.synthetic.render import (
    MAX_POSE_RAD,
    MotionParams,
    project_landmarks,
    render_avatar_frame,
    sample_appearance,
)
from avatar.talking.synthetic.speech import synth_speech_features


def _still_clip(cfg: ShapeConfig, n_frames: int, energy: float = 0.5) -> VideoClip:
    """A frontal, motionless face speaking at constant energy."""
    frame, landmarks = render_avatar_frame(sample_appearance(0), MotionParams(), cfg)
    speech = np.zeros((n_frames, cfg.d_s))
    speech[:, 0] = energy
    return VideoClip(
        frames=np.repeat(frame[None], n_frames, axis=0),
        landmarks=np.repeat(landmarks[None], n_frames, axis=0),
        poses=np.zeros((n_frames, 3)),
        speech_features=speech,
        fps=25.0,
        identity_id="still",
    )


def _rotate(landmarks: np.ndarray, degrees: float) -> np.ndarray:
    """Rotate landmarks in the image plane about the nose tip."""
    r = math.radians(degrees)
    rotation = np.array([[math.cos(r), -math.sin(r)], [math.sin(r), math.cos(r)]])
    tip = landmarks[30]
    return (landmarks - tip) @ rotation.T + tip


def test_frontal_angle_of_symmetric_face() -> None:
    """Tests that a mirror-symmetric face gives 180 degrees."""
    points = np.zeros((68, 2))
    points[36] = (-1.0, -1.0)
    points[45] = (1.0, -1.0)
    assert frontal_angle(points) == pytest.approx(180.0)

    moved = points * 3.5 + np.array([10.0, -4.0])
    assert frontal_angle(moved) == pytest.approx(180.0)


def test_frontal_angle_of_rolled_face() -> None:
    """Tests that rolling by r degrees changes the angle by 2r."""
    points = np.zeros((68, 2))
    points[36] = (-1.0, -1.0)
    points[45] = (1.0, -1.0)
    assert frontal_angle(_rotate(points, 20.0)) == pytest.approx(140.0)
    assert frontal_angle(_rotate(points, -10.0)) == pytest.approx(200.0)


def test_frontal_angle_degenerate() -> None:
    """Tests that an eye corner on the nose tip is refused."""
    points = np.zeros((68, 2))
    points[45] = (1.0, -1.0)
    with pytest.raises(DegenerateGeometryError, match="undefined"):
        frontal_angle(points)


def test_inter_frame_displacement() -> None:
    """Tests the maximum per-landmark displacement."""
    a = np.zeros((68, 2))
    b = a.copy()
    b[5] = (3.0, 4.0)
    assert inter_frame_displacement(a, b) == pytest.approx(5.0)
    assert inter_frame_displacement(a, a) == 0.0
    with pytest.raises(ValueError, match="Landmark shapes differ"):
        inter_frame_displacement(a, a[:10])


def test_silence_mask_is_strict() -> None:
    """Tests that energy exactly at the threshold is not silent."""
    features = np.array([[0.0, 0.0], [0.03, 0.04], [0.0, 0.049]])
    np.testing.assert_array_equal(silence_mask(features, 0.05), [True, False, True])


@pytest.mark.parametrize(
    ("flags", "min_length", "expected"),
    [
        ([1, 1, 0, 1, 1, 1], 2, [(0, 2), (3, 6)]),
        ([1, 1, 0, 1, 1, 1], 3, [(3, 6)]),
        ([0, 0, 0], 1, []),
        ([1, 1, 1], 0, [(0, 3)]),
        ([], 1, []),
    ],
)
def test_passing_runs(
    flags: list[int], min_length: int, expected: list[tuple[int, int]]
) -> None:
    """Tests the maximal runs of passing frames."""
    assert passing_runs(flags, min_length) == expected


def test_two_second_clip_gives_no_segment(shape_cfg: ShapeConfig) -> None:
    """Tests that a clip shorter than the minimum segment is dropped entirely."""
    report, segments = filter_video(_still_clip(shape_cfg, 50), FilterPolicy())
    assert all(v.passed for v in report.per_frame)
    assert report.segments == []
    assert segments == []
    assert report.retained_frames == 0


def test_four_second_clip_gives_one_segment(shape_cfg: ShapeConfig) -> None:
    """Tests that a four-second passing clip is kept whole."""
    clip = _still_clip(shape_cfg, 100)
    report, segments = filter_video(clip, FilterPolicy())

    assert report.segments == [(0, 100)]
    assert report.retained_frames == 100
    assert len(segments) == 1
    assert segments[0].n_frames == 100
    assert validate_clip(segments[0], shape_cfg).ok
    shift = segments[0].landmarks - clip.landmarks
    np.testing.assert_allclose(
        shift, np.broadcast_to(shift[0, 0], shift.shape), atol=1e-4
    )
    np.testing.assert_allclose(shift[0, 0], np.round(shift[0, 0]), atol=1e-4)


def test_silence_and_mask_split_segments(shape_cfg: ShapeConfig) -> None:
    """Tests that silent and masked frames break a segment."""
    base = _still_clip(shape_cfg, 200)
    speech = base.speech_features.copy()
    speech[90:95] = 0.0
    masked = np.zeros(200, dtype=bool)
    masked[150:160] = True
    clip = VideoClip(**{**dict(base), "speech_features": speech, "masked": masked})

    report, segments = filter_video(clip, FilterPolicy(min_segment_s=1.0))
    assert report.segments == [(0, 90), (95, 150), (160, 200)]
    assert [s.n_frames for s in segments] == [90, 55, 40]
    assert not report.per_frame[92].speaking_ok
    assert not report.per_frame[155].speaking_ok


def test_jump_fails_stability(shape_cfg: ShapeConfig) -> None:
    """Tests that a sudden landmark jump fails the frame and the one after it."""
    base = _still_clip(shape_cfg, 10)
    landmarks = base.landmarks.copy()
    landmarks[4] += np.array([2.0, 0.0], dtype=np.float32)
    clip = VideoClip(**{**dict(base), "landmarks": landmarks})

    verdicts = frame_verdicts(clip, FilterPolicy())
    stable = [v.stable_ok for v in verdicts]
    assert stable == [True] * 4 + [False, False] + [True] * 4
    assert verdicts[4].displacement_px == pytest.approx(2.0)


def test_vae_mode_loosens_thresholds(shape_cfg: ShapeConfig) -> None:
    """Tests that a roll rejected for stage two is accepted for VAE data."""
    base = _still_clip(shape_cfg, 5)
    rolled = np.stack([_rotate(lm, 15.0) for lm in base.landmarks])
    clip = VideoClip(**{**dict(base), "landmarks": rolled})

    strict = frame_verdicts(clip, FilterPolicy())
    loose = frame_verdicts(clip, FilterPolicy.for_vae())
    assert strict[0].angle_deg == pytest.approx(150.0, abs=1e-3)
    assert not any(v.frontal_ok for v in strict)
    assert all(v.frontal_ok for v in loose)


def test_vae_policy_values() -> None:
    """Tests the effective thresholds of the loosened policy."""
    policy = FilterPolicy.for_vae(silence_energy_threshold=0.06)
    assert policy.vae_mode
    assert policy.angle_tolerance() == pytest.approx(37.5)
    assert policy.displacement_threshold(64) == pytest.approx(0.04 * 64 * 1.5)
    assert policy.silence_threshold() == pytest.approx(0.04)
    assert FilterPolicy().min_segment_frames(25.0) == 75


def test_center_crop_moves_face_to_centre(shape_cfg: ShapeConfig) -> None:
    """Tests that a shifted face is moved back to the frame centre."""
    base = _still_clip(shape_cfg, 3)
    landmarks = base.landmarks + np.array([3.0, -2.0], dtype=np.float32)
    clip = VideoClip(**{**dict(base), "landmarks": landmarks})

    centred = center_crop(clip)
    centroid = centred.landmarks[0].mean(axis=0)
    assert abs(centroid[0] - 16.0) <= 0.5
    assert abs(centroid[1] - 16.0) <= 0.5
    assert centred.frames.shape == clip.frames.shape


def test_filter_corpus(corpus_dir: Path, tmp_path: Path) -> None:
    """Tests that a filtered corpus lists valid segments and writes reports."""
    policy = FilterPolicy(min_segment_s=0.4)
    out = tmp_path / "filtered"
    index = filter_corpus(corpus_dir, out, policy)

    assert read_corpus_index(out) == index
    source = read_corpus_index(corpus_dir)
    for name in source.clips:
        report_path = out / f"{name}{REPORT_SUFFIX}"
        report = FilterReport.model_validate(json.loads(report_path.read_text()))
        assert len(report.per_frame) == 30
        assert report.policy == policy
    for name in index.clips:
        segment = read_clip(out / name)
        assert segment.n_frames >= policy.min_segment_frames(segment.fps)


def test_filter_corpus_in_process_pool(corpus_dir: Path, tmp_path: Path) -> None:
    """Tests that parallel filtration gives the same index as serial filtration."""
    policy = FilterPolicy(min_segment_s=0.4)
    serial = filter_corpus(corpus_dir, tmp_path / "serial", policy)
    parallel = filter_corpus(corpus_dir, tmp_path / "parallel", policy, workers=2)
    assert serial == parallel


def test_frontal_angle_with_one_ray_turned() -> None:
    """Tests that turning one eye-corner ray by 30 degrees moves the angle by 30."""
    points = np.zeros((68, 2))
    points[36] = (-1.0, -1.0)
    points[45] = (1.0, -1.0)
    for index in (36, 45):
        turned = points.copy()
        turned[index] = _rotate(points, -30.0)[index]
        assert frontal_angle(turned) == pytest.approx(210.0)
        turned[index] = _rotate(points, 30.0)[index]
        assert frontal_angle(turned) == pytest.approx(150.0)


@pytest.mark.parametrize("roll", [-0.5, -0.2, 0.1, 0.4])
def test_frontal_angle_of_rendered_roll(roll: float) -> None:
    """Tests that a rendered face rolled by r radians scores 180 - 2r degrees."""
    landmarks = project_landmarks(MotionParams(pose=(0.0, 0.0, roll)), ShapeConfig())
    expected = 180.0 - 2.0 * math.degrees(roll)
    assert frontal_angle(landmarks) == pytest.approx(expected, abs=1e-9)


@pytest.mark.parametrize(
    ("yaw", "expected"), [(0.3, 187.65), (0.6, 197.14), (-0.6, 162.86)]
)
def test_frontal_angle_of_rendered_yaw(yaw: float, expected: float) -> None:
    """Tests the angle of rendered faces turned sideways."""
    landmarks = project_landmarks(MotionParams(pose=(0.0, yaw, 0.0)), ShapeConfig())
    assert frontal_angle(landmarks) == pytest.approx(expected, abs=0.1)


def test_default_tolerance_admits_every_rendered_yaw() -> None:
    """Tests which rendered yaws the default and a 15 degree tolerance reject.

    Rendered poses stop at 0.6 rad, which scores about 197 degrees, so only a
    tighter tolerance rejects any rendered yaw.
    """
    cfg = ShapeConfig()
    default = FilterPolicy().angle_tolerance()
    tight = FilterPolicy(frontal_angle_tolerance_deg=15.0).angle_tolerance()
    for yaw in np.linspace(-MAX_POSE_RAD, MAX_POSE_RAD, 13):
        motion = MotionParams(pose=(0.0, float(yaw), 0.0))
        angle = frontal_angle(project_landmarks(motion, cfg))
        assert abs(angle - 180.0) <= default
        assert (abs(angle - 180.0) <= tight) == (abs(yaw) < 0.55)


def test_one_failing_frame_drops_both_runs(shape_cfg: ShapeConfig) -> None:
    """Tests that a single silent frame splits 100 frames into two short runs."""
    base = _still_clip(shape_cfg, 100)
    speech = base.speech_features.copy()
    speech[50] = 0.0
    clip = VideoClip(**{**dict(base), "speech_features": speech})

    verdicts = frame_verdicts(clip, FilterPolicy())
    runs = passing_runs([v.passed for v in verdicts], 1)
    assert runs == [(0, 50), (51, 100)]
    report, segments = filter_video(clip, FilterPolicy())
    assert report.segments == []
    assert segments == []


def test_scripted_silence_is_detected(shape_cfg: ShapeConfig) -> None:
    """Tests that frames with a zero script are exactly the silent frames."""
    script = np.full(40, 0.5)
    script[10:21] = 0.0
    features, _ = synth_speech_features(script, shape_cfg, seed=0)
    silent = silence_mask(features, FilterPolicy().silence_energy_threshold)
    np.testing.assert_array_equal(np.flatnonzero(silent), np.arange(10, 21))


def _suite_clip(cfg: ShapeConfig, name: str) -> VideoClip:
    """One clip of the filtration suite, named by what it contains."""
    if name == "frontal_smooth_speaking_2s":
        return _still_clip(cfg, 50)
    if name == "frontal_smooth_silent_4s":
        return _still_clip(cfg, 100, energy=0.0)

    n_frames = 150 if name == "frontal_smooth_speaking_3s_and_just_under" else 100
    base = _still_clip(cfg, n_frames)
    landmarks = base.landmarks.copy()
    speech = base.speech_features.copy()
    if name == "profile_smooth_speaking_4s":
        # Nose tip under the right eye corner, as on a face turned far sideways.
        landmarks[:, 30, 0] = landmarks[:, 45, 0]
    elif name == "frontal_jittery_speaking_4s":
        landmarks[1::2] += np.array([3.0, 0.0], dtype=np.float32)
    elif name == "frontal_smooth_speaking_3s_and_just_under":
        speech[75] = 0.0
    return VideoClip(
        **{**dict(base), "landmarks": landmarks, "speech_features": speech}
    )


@pytest.mark.parametrize(
    ("name", "expected"),
    [
        ("frontal_smooth_speaking_4s", [(0, 100)]),
        ("frontal_smooth_speaking_2s", []),
        ("profile_smooth_speaking_4s", []),
        ("frontal_jittery_speaking_4s", []),
        ("frontal_smooth_silent_4s", []),
        ("frontal_smooth_speaking_3s_and_just_under", [(0, 75)]),
    ],
)
def test_filtration_suite(
    shape_cfg: ShapeConfig, name: str, expected: list[tuple[int, int]]
) -> None:
    """Tests the retained segments of clips that each fail one check or pass all."""
    clip = _suite_clip(shape_cfg, name)
    report, segments = filter_video(clip, FilterPolicy())

    assert report.segments == expected
    assert [s.n_frames for s in segments] == [end - start for start, end in expected]
    verdicts = report.per_frame
    if name.startswith("profile"):
        assert not any(v.frontal_ok for v in verdicts)
        assert all(v.stable_ok and v.speaking_ok for v in verdicts)
    elif "jittery" in name:
        assert all(v.frontal_ok for v in verdicts)
        assert not any(v.stable_ok for v in verdicts[1:])
    elif "silent" in name:
        assert not any(v.speaking_ok for v in verdicts)
    else:
        assert all(v.frontal_ok and v.stable_ok for v in verdicts)
