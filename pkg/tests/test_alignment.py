import numpy as np
import pytest

from motionseg import alignment
from motionseg.alignment import (HomographyError, InsufficientFeaturesError,
                                 align_block, align_frame, detect_and_match,
                                 estimate_homography, warp)
from motionseg.datasets import SyntheticConfig, generate_synthetic_scene, make_sliding_blocks
from motionseg.labelspace import Label


def textured(h=120, w=160, seed=0):
    rng = np.random.default_rng(seed)
    import cv2
    noise = rng.normal(size=(h, w, 3)).astype(np.float32)
    img = cv2.GaussianBlur(noise, (0, 0), 1.2)
    img -= img.min()
    img /= img.max()
    return img


def grid_points(dx=0.0, dy=0.0):
    xs, ys = np.meshgrid(np.arange(10, 100, 10), np.arange(10, 100, 10))
    src = np.stack([xs.ravel(), ys.ravel()], axis=1).astype(np.float64)
    dst = src + np.array([dx, dy])
    return src, dst


def test_estimate_translation_homography():
    src, dst = grid_points(dx=7.5, dy=-3.25)
    h_mat = estimate_homography(src, dst)
    assert h_mat[2, 2] == 1.0
    assert abs(h_mat[0, 2] - 7.5) < 1e-3
    assert abs(h_mat[1, 2] + 3.25) < 1e-3
    assert np.allclose(h_mat[:2, :2], np.eye(2), atol=1e-3)


def test_estimate_identity_homography():
    src, dst = grid_points()
    h_mat = estimate_homography(src, dst)
    assert np.allclose(h_mat, np.eye(3), atol=1e-6)


def test_estimate_composition_with_known_affine():
    src, dst = grid_points(dx=5.0)
    affine = np.array([[1.1, 0.02, 3.0], [-0.01, 0.95, -2.0], [0.0, 0.0, 1.0]])
    dst_h = np.concatenate([dst, np.ones((len(dst), 1))], axis=1)
    dst2 = (affine @ dst_h.T).T[:, :2]
    h_mat = estimate_homography(src, dst2)
    base = np.eye(3)
    base[0, 2] = 5.0
    expected = affine @ base
    expected /= expected[2, 2]
    assert np.allclose(h_mat, expected, atol=1e-3)


def test_estimate_needs_four_points():
    src, dst = grid_points(dx=1.0)
    with pytest.raises(InsufficientFeaturesError):
        estimate_homography(src[:3], dst[:3])


def test_detect_and_match_self():
    frame = textured()
    src, dst = detect_and_match(frame, frame)
    displacement = np.linalg.norm(src - dst, axis=1)
    assert np.median(displacement) < 0.5


def test_detect_and_match_known_shift():
    frame = textured(seed=3)
    shifted = np.zeros_like(frame)
    shifted[:, :-10] = frame[:, 10:]  # content moves 10 px left
    src, dst = detect_and_match(frame, shifted)
    med = np.median(src - dst, axis=0)
    assert abs(med[0] - 10) <= 1.0
    assert abs(med[1]) <= 1.0


def test_detect_and_match_blank_frames():
    blank = np.full((64, 64, 3), 0.5, dtype=np.float32)
    with pytest.raises(InsufficientFeaturesError):
        detect_and_match(blank, blank)


def test_warp_identity():
    frame = textured(64, 64)
    warped, validity, _ = warp(frame, None, np.eye(3))
    assert np.allclose(warped, frame, atol=1e-6)
    assert validity.all()


def test_warp_translation_invalid_region_and_mask():
    frame = textured(120, 320, seed=1)
    mask = np.zeros((120, 320), dtype=np.uint8)
    h_mat = np.eye(3)
    h_mat[0, 2] = -70.0
    warped, validity, warped_mask = warp(frame, mask, h_mat)
    # rightmost ~70 columns lose their source content
    assert not validity[:, 255:].any()
    assert validity[:, :245].all()
    assert np.all(warped_mask[:, 255:] == int(Label.IGNORE))
    assert np.all(warped_mask[:, :245] == int(Label.STATIC))


def test_warp_round_trip():
    # smooth content keeps the bilinear interpolation error within budget
    ys, xs = np.mgrid[0:96, 0:96]
    frame = (0.5 + 0.4 * np.sin(2 * np.pi * xs / 32) * np.cos(2 * np.pi * ys / 32))
    frame = frame.astype(np.float32)
    h_mat = np.eye(3)
    h_mat[0, 2], h_mat[1, 2] = 8.6, -5.3
    warped, v1, _ = warp(frame, None, h_mat)
    back, v2, _ = warp(warped, None, np.linalg.inv(h_mat))
    # erode the joint-validity region: pixels at its frontier blend with
    # out-of-bounds content during bilinear resampling
    from scipy.ndimage import binary_erosion
    both = binary_erosion(v1 & v2, iterations=2)
    diff = np.abs(back - frame)[both]
    assert diff.max() <= 2.0 / 255.0


def test_warp_rejects_singular_matrix():
    with pytest.raises(HomographyError):
        warp(textured(32, 32), None, np.zeros((3, 3)))


def pan_scene(dx=3, frames=7, seed=0):
    return generate_synthetic_scene(
        SyntheticConfig(h=96, w=96, n_frames=frames, object_count=0,
                        camera_motion="pan", pan_dx=dx, seed=seed))


def test_align_frame_recovers_known_pan():
    scene = pan_scene()
    warped, validity, h_mat = align_frame(scene.frames[2], scene.frames[3])
    truth = scene.meta["consecutive_homographies"][2]
    assert abs(h_mat[0, 2] - truth[0, 2]) < 0.5
    assert abs(h_mat[1, 2] - truth[1, 2]) < 0.5


def test_align_block_center_fixpoint_and_energy():
    scene = pan_scene(dx=4, frames=5, seed=2)
    block = make_sliding_blocks(scene, 5)[0]
    aligned = align_block(block)
    center = block.n // 2
    assert np.array_equal(aligned.frames[center], block.frames[center])
    assert aligned.validity[center].all()
    assert np.allclose(aligned.homographies[center], np.eye(3))

    def energy(frames, validity):
        total = 0.0
        for i in range(len(frames)):
            if i == center:
                continue
            valid = validity[i]
            total += float((((frames[i] - frames[center]) ** 2).sum(axis=-1))[valid].sum())
        return total

    before = energy(block.frames, np.ones_like(aligned.validity))
    after = energy(aligned.frames, aligned.validity)
    assert after < 0.10 * before


def test_align_block_static_scene_near_identity():
    scene = generate_synthetic_scene(SyntheticConfig(h=96, w=96, n_frames=5, seed=4))
    block = make_sliding_blocks(scene, 5)[0]
    aligned = align_block(block)
    for h_mat in aligned.homographies:
        assert abs(h_mat[0, 2]) < 1.0 and abs(h_mat[1, 2]) < 1.0


def test_align_block_blank_frame_passthrough(caplog):
    scene = pan_scene(dx=2, frames=5, seed=5)
    frames = scene.frames.copy()
    frames[0] = 0.5  # featureless
    from motionseg.datasets import FrameBlock
    block = FrameBlock(frames=frames[:5], target_gt=scene.gt[2], target_index=2, n=5)
    with caplog.at_level("WARNING"):
        aligned = align_block(block)
    assert np.array_equal(aligned.frames[0], frames[0])
    assert aligned.validity[0].all()
    assert np.allclose(aligned.homographies[0], np.eye(3))
    assert any("passed through" in r.message for r in caplog.records)
    # the other frames were still aligned
    assert not np.allclose(aligned.homographies[1], np.eye(3))
