"""Feature-based block alignment: ORB matching, robust homography
estimation, and warping with validity masks for the warp artifacts.

Every frame of a block is aligned onto the block's center frame. Pixels
with no source preimage after warping are marked invalid and mapped to the
ignore label in any warped GT, so they drop out of losses and metrics.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass

import cv2
import numpy as np

from .datasets import FrameBlock
from .labelspace import Label

log = logging.getLogger(__name__)

RANSAC_REPROJECTION_PX = 3.0
RANSAC_MAX_ITERS = 2000


class InsufficientFeaturesError(RuntimeError):
    pass


class HomographyError(RuntimeError):
    pass


@dataclass
class AlignedBlock:
    frames: np.ndarray  # (n, h, w, 3), center frame untouched
    validity: np.ndarray  # (n, h, w) bool, in-bounds pixels
    target_index: int
    homographies: list  # 3x3 per frame (identity for the center/fallbacks)


def _to_gray_u8(frame: np.ndarray) -> np.ndarray:
    frame = np.asarray(frame)
    if frame.dtype != np.uint8:
        frame = (np.clip(frame, 0.0, 1.0) * 255.0).round().astype(np.uint8)
    if frame.ndim == 3:
        frame = cv2.cvtColor(frame, cv2.COLOR_RGB2GRAY)
    return frame


def detect_and_match(source: np.ndarray, target: np.ndarray,
                     max_keypoints: int = 5000, keep_fraction: float = 0.10):
    """ORB keypoints matched by Hamming distance; the best keep_fraction of
    the matches is returned as (src_pts, dst_pts), sorted by distance."""
    if source.shape[:2] != target.shape[:2]:
        raise ValueError("source and target frames must have the same size")
    src_gray = _to_gray_u8(source)
    dst_gray = _to_gray_u8(target)
    # ORB's default edge threshold and patch size (31) blank out a 31-px
    # border, which leaves next to nothing on small frames; shrink both so
    # low-resolution inputs still produce keypoints
    patch = int(np.clip(min(source.shape[:2]) // 6, 7, 31))
    orb = cv2.ORB_create(nfeatures=max_keypoints, edgeThreshold=patch,
                         patchSize=patch)
    kp_src, des_src = orb.detectAndCompute(src_gray, None)
    kp_dst, des_dst = orb.detectAndCompute(dst_gray, None)
    if des_src is None or des_dst is None:
        raise InsufficientFeaturesError("no detectable features")
    matcher = cv2.BFMatcher(cv2.NORM_HAMMING, crossCheck=True)
    matches = sorted(matcher.match(des_src, des_dst), key=lambda m: m.distance)
    keep = max(4, int(len(matches) * keep_fraction))
    matches = matches[:keep]
    if len(matches) < 4:
        raise InsufficientFeaturesError(f"only {len(matches)} correspondences")
    src_pts = np.float64([kp_src[m.queryIdx].pt for m in matches])
    dst_pts = np.float64([kp_dst[m.trainIdx].pt for m in matches])
    return src_pts, dst_pts


def estimate_homography(src_pts: np.ndarray, dst_pts: np.ndarray) -> np.ndarray:
    """RANSAC homography mapping src points onto dst points, h22 = 1."""
    src_pts = np.asarray(src_pts, dtype=np.float64)
    dst_pts = np.asarray(dst_pts, dtype=np.float64)
    if len(src_pts) < 4:
        raise InsufficientFeaturesError(f"need >= 4 correspondences, got {len(src_pts)}")
    h_mat, _inliers = cv2.findHomography(
        src_pts.reshape(-1, 1, 2), dst_pts.reshape(-1, 1, 2),
        cv2.RANSAC, RANSAC_REPROJECTION_PX, maxIters=RANSAC_MAX_ITERS,
    )
    if h_mat is None or abs(h_mat[2, 2]) < 1e-12 or abs(np.linalg.det(h_mat)) < 1e-12:
        raise HomographyError("degenerate correspondence configuration")
    return h_mat / h_mat[2, 2]


def warp(frame: np.ndarray, mask: np.ndarray | None, h_mat: np.ndarray):
    """Warp a frame (bilinear) and optionally its label mask (nearest).

    Returns (warped_frame, validity, warped_mask). Out-of-bounds pixels are
    invalid; in the warped mask they become IGNORE.
    """
    h_mat = np.asarray(h_mat, dtype=np.float64)
    if abs(np.linalg.det(h_mat)) < 1e-12:
        raise HomographyError("non-invertible homography")
    h, w = frame.shape[:2]
    warped = cv2.warpPerspective(frame, h_mat, (w, h), flags=cv2.INTER_LINEAR)
    validity = cv2.warpPerspective(
        np.ones((h, w), dtype=np.uint8), h_mat, (w, h), flags=cv2.INTER_NEAREST
    ).astype(bool)
    warped_mask = None
    if mask is not None:
        if mask.shape[:2] != (h, w):
            raise ValueError("mask dimensions do not match the frame")
        warped_mask = cv2.warpPerspective(
            mask.astype(np.uint8), h_mat, (w, h),
            flags=cv2.INTER_NEAREST, borderValue=int(Label.IGNORE),
        )
        warped_mask[~validity] = int(Label.IGNORE)
    return warped, validity, warped_mask


def align_frame(source: np.ndarray, target: np.ndarray):
    """Estimate and apply the source->target homography."""
    src_pts, dst_pts = detect_and_match(source, target)
    h_mat = estimate_homography(src_pts, dst_pts)
    warped, validity, _ = warp(source, None, h_mat)
    return warped, validity, h_mat


def align_block(block: FrameBlock) -> AlignedBlock:
    """Align every non-center frame of a block onto the center frame.

    Frames where matching or estimation fails are passed through unwarped
    with an all-valid mask; the event is logged rather than raised so
    low-texture frames do not kill a run.
    """
    n = block.n
    center = n // 2
    target = block.frames[center]
    frames = np.array(block.frames, copy=True)
    h, w = target.shape[:2]
    validity = np.ones((n, h, w), dtype=bool)
    homographies = [np.eye(3) for _ in range(n)]
    for i in range(n):
        if i == center:
            continue
        try:
            frames[i], validity[i], homographies[i] = align_frame(block.frames[i], target)
        except (InsufficientFeaturesError, HomographyError) as exc:
            log.warning("align_block: frame %d passed through unwarped (%s)",
                        block.target_index - center + i, exc)
    return AlignedBlock(frames=frames, validity=validity,
                        target_index=block.target_index, homographies=homographies)
