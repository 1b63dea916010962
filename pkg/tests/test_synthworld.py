import json

import numpy as np
import pytest

from stta import geometry as geo
from stta import synthworld as sw
from stta.errors import FormatError, STTAError, UnknownLabelError


def _euler_x(seq, joint):
    """Rotation angle about x of a local joint rotation (all templates used here are x-only)."""
    rot = geo.aa_to_matrix(seq.theta[:, sw.J[joint]])
    return np.arctan2(rot[:, 2, 1], rot[:, 1, 1])


@pytest.mark.parametrize("seed", range(5))
def test_idle_is_slow(seed):
    seq = sw.generate_motion("idle", 300, seed)
    rot = geo.aa_to_matrix(seq.theta)
    rel = np.swapaxes(rot[:-1], -1, -2) @ rot[1:]
    speed = np.linalg.norm(geo.matrix_to_aa(rel), axis=-1)
    assert speed.max() < 0.05


def test_walking_knees_out_of_phase():
    seq = sw.generate_motion("walking", 300, 2)
    left, right = _euler_x(seq, "left_knee"), _euler_x(seq, "right_knee")
    lc, rc = left - left.mean(), right - right.mean()
    corr = lc @ rc / np.sqrt((lc @ lc) * (rc @ rc))
    assert corr < -0.99


def test_motion_deterministic_and_bounded():
    a, b = sw.generate_motion("squatting", 120, 9), sw.generate_motion("squatting", 120, 9)
    np.testing.assert_array_equal(a.theta, b.theta)
    np.testing.assert_array_equal(a.trans, b.trans)
    assert np.all(np.linalg.norm(a.theta, axis=-1) <= np.pi + 1e-12)
    assert np.all(np.abs(a.beta) <= 1.5)
    with pytest.raises(STTAError):
        sw.generate_motion("idle", 30, 0)
    with pytest.raises(UnknownLabelError):
        sw.generate_motion("dancing", 60, 0)


def test_observation_properties():
    spec = sw.DomainSpec("q", sw.TARGET_DOMAIN.class_mixture, nuisance_mean=0.0,
                         nuisance_scale=0.0, obs_noise_sigma=0.0)
    pose = geo.Pose(np.zeros((24, 3)), np.zeros(10), np.array([0.0, 0.0, 9.0]))
    a, b = sw.synth_observation(pose, spec, 1), sw.synth_observation(pose, spec, 2)
    np.testing.assert_array_equal(a, b)
    assert a.shape == (64,)
    shifted = sw.synth_observation(pose, sw.DomainSpec("r", spec.class_mixture, nuisance_mean=3.0,
                                                       nuisance_scale=1.0, obs_noise_sigma=0.0), 1)
    np.testing.assert_array_equal(shifted[:48], a[:48])
    assert np.all(shifted[48:] != a[48:])


def test_observation_separates_distinct_poses():
    rng = np.random.default_rng(0)
    six = geo.aa_to_6d(rng.normal(0, 0.5, size=(2000, 24, 3)))
    beta, trans = np.zeros((2000, 10)), np.tile([0.0, 0.0, 9.0], (2000, 1))
    feats = sw.pose_features(six, beta, trans)
    gaps = np.linalg.norm(feats[0::2] - feats[1::2], axis=-1)
    assert gaps.min() > 1e-6


def test_detector_clean_passthrough():
    gt = np.random.default_rng(0).uniform(0, 224, size=(60, 24, 2))
    det, vis = sw.simulate_detector(gt, "none", sw.DetectorModel(0.0, 0.0), np.random.default_rng(1))
    np.testing.assert_array_equal(det, gt)
    assert vis.all()


def test_detector_noise_monte_carlo():
    gt = np.zeros((5000, 20, 2))
    det, vis = sw.simulate_detector(gt, "none", sw.DetectorModel(3.0, 0.0), np.random.default_rng(2))
    err = np.linalg.norm(det - gt, axis=-1)
    assert err.size == 10**5
    assert 3.60 <= err.mean() <= 3.92


def test_detector_truncation_and_sentinel():
    gt = np.zeros((120, 24, 2))
    det, vis = sw.simulate_detector(gt, "lower_body_truncation", sw.DetectorModel(3.0, 0.0),
                                    np.random.default_rng(3))
    assert np.all((~vis).sum(axis=1) == 10)
    assert np.all(~vis[:, list(sw.LOWER_BODY)])
    assert np.all(np.isnan(det[~vis])) and np.all(np.isfinite(det[vis]))


def test_detector_random_block_is_contiguous():
    gt = np.zeros((300, 24, 2))
    _, vis = sw.simulate_detector(gt, "random_block", sw.DetectorModel(0.0, 0.0), np.random.default_rng(4))
    frames = np.flatnonzero((~vis).any(axis=1))
    assert len(frames) >= 100 and np.all(np.diff(frames) == 1)
    joints = np.flatnonzero((~vis).any(axis=0))
    assert tuple(joints) in {tuple(sorted(g)) for g in sw.BLOCK_GROUPS}
    with pytest.raises(ValueError):
        sw.simulate_detector(gt, "fog", sw.DetectorModel(), np.random.default_rng(0))
    with pytest.raises(ValueError):
        sw.DetectorModel(drop_prob=1.5)


def test_exemplars(space):
    for c in range(sw.NUM_CLASSES):
        ex = sw.exemplar_lookup(c)
        assert ex.shape == (60, 24, 6)
        np.testing.assert_array_equal(ex, sw.exemplar_lookup(sw.CLASS_NAMES[c]))
        assert float(space.similarity(c, ex)) >= 0.99
    with pytest.raises(UnknownLabelError):
        sw.exemplar_lookup(99)


def test_ground_truth_segments_clear_fill_gate(space):
    from stta.adapt import segment_video, segment_exemplars, replace_global_rotation
    for vid in range(6):
        video = sw.generate_video(sw.TARGET_DOMAIN, vid, 600, 11)
        six = video.theta6d
        for seg in segment_video(video.labels):
            primed = replace_global_rotation(six[seg.frames], segment_exemplars([seg.label])[0])
            assert float(space.similarity(seg.label, primed)) > 0.75


def test_domain_spec_validation_and_defaults():
    with pytest.raises(ValueError):
        sw.DomainSpec("x", (0.5, 0.5, 0.5, 0, 0, 0))
    assert sw.SOURCE_DOMAIN.amplitude_damping == 0.6
    src = np.asarray(sw.SOURCE_DOMAIN.class_mixture)
    assert set(np.flatnonzero(src)) == {sw.CLASS_NAMES.index(c) for c in ("idle", "sitting", "bend-down")}
    assert np.all(np.asarray(sw.TARGET_DOMAIN.class_mixture) > 0)
    rt = sw.DomainSpec.from_dict(json.loads(json.dumps(sw.TARGET_DOMAIN.to_dict())))
    assert rt == sw.TARGET_DOMAIN


def test_video_consistency_and_round_trip(tmp_path):
    v = sw.generate_video(sw.TARGET_DOMAIN, 3, 240, 5, "random_block")
    assert len(v) == 240 and v.obs.shape == (240, 64)
    np.testing.assert_allclose(v.gt_j2d, geo.project(v.gt_j3d), atol=1e-9)
    assert np.all(np.isfinite(v.det_j2d[v.visibility])) and np.all(np.isnan(v.det_j2d[~v.visibility]))
    back = sw.SyntheticVideo.from_bytes(v.to_bytes(), v.video_id, v.meta)
    assert back.to_bytes() == v.to_bytes()
    np.testing.assert_array_equal(back.labels, v.labels)
    path = sw.video_path(tmp_path, 3)
    v.save(path)
    loaded = sw.SyntheticVideo.load(path)
    assert loaded.video_id == 3 and loaded.meta["pattern"] == "random_block"
    with pytest.raises(FormatError):
        sw.SyntheticVideo.from_bytes(v.to_bytes()[:-3])
    with pytest.raises(STTAError):
        sw.generate_video(sw.TARGET_DOMAIN, 0, 100, 0)


def test_dataset_files_and_determinism(tmp_path):
    a = sw.generate_dataset(sw.SOURCE_DOMAIN, 10, 600, 4, tmp_path / "a")
    b = sw.generate_dataset(sw.SOURCE_DOMAIN, 10, 600, 4, tmp_path / "b")
    assert len(a) == 10
    for pa, pb in zip(a, b):
        assert pa.read_bytes() == pb.read_bytes()
        assert pa.with_suffix(".json").read_bytes() == pb.with_suffix(".json").read_bytes()
    videos = sw.load_dataset(tmp_path / "a")
    assert all(len(v) // sw.SEGMENT_LEN == 10 for v in videos)
    assert not any(np.any(v.labels == sw.CLASS_NAMES.index("walking")) for v in videos)
    with pytest.raises(STTAError):
        sw.load_dataset(tmp_path / "empty")


def test_corrupt_labels():
    labels = np.repeat(np.arange(10) % 6, 60)
    rng = np.random.default_rng(0)
    out = sw.corrupt_labels(labels, 0.3, rng)
    changed = [w for w in range(10) if np.any(out[w * 60:(w + 1) * 60] != labels[w * 60:(w + 1) * 60])]
    assert len(changed) == 3
    for w in changed:
        seg = out[w * 60:(w + 1) * 60]
        assert np.all(seg == seg[0]) and seg[0] != labels[w * 60]
    np.testing.assert_array_equal(sw.corrupt_labels(labels, 0.0, rng), labels)


def test_benchmark_patterns():
    pats = sw.benchmark_patterns(12)
    assert [pats.count(p) for p in ("lower_body_truncation", "random_block", "none")] == [4, 4, 4]
