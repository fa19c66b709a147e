"""Flip/rescale augmentation with exact adjoints.

Rescaling is separable Catmull-Rom bicubic (a = -0.5) with clamp-to-edge
sampling, realized as explicit row/column weight matrices. The forward map
is then a pair of matrix products and its adjoint is the exact transpose,
which is what routes gradients from every augmented copy back to the base
adversarial image.
"""

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .numerics import DimensionMismatchError

PAPER_SCALES = (0.5, 0.75, 1.0, 1.25, 1.5, 2.0)

FLIP_POLICIES = ("always", "variant", "off")


def validate_image(img: np.ndarray) -> np.ndarray:
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 2:
        raise ValueError("image must be 2-D")
    if img.shape[0] < 8 or img.shape[1] < 8:
        raise ValueError("image dimensions must be at least 8")
    if np.any(img < 0.0) or np.any(img > 1.0) or not np.all(np.isfinite(img)):
        raise ValueError("pixels must lie in [0, 1]")
    return img


def hflip(img: np.ndarray) -> np.ndarray:
    """Reverse column order; an involution and its own adjoint."""
    return np.ascontiguousarray(np.asarray(img)[:, ::-1])


def catmull_rom(t: float) -> float:
    """Catmull-Rom cubic kernel (bicubic with a = -0.5)."""
    a = -0.5
    t = abs(t)
    if t <= 1.0:
        return (a + 2.0) * t**3 - (a + 3.0) * t**2 + 1.0
    if t < 2.0:
        return a * t**3 - 5.0 * a * t**2 + 8.0 * a * t - 4.0 * a
    return 0.0


def round_half_up(x: float) -> int:
    return int(np.floor(x + 0.5))


def output_length(n_in: int, factor: float) -> int:
    return max(1, round_half_up(n_in * factor))


@lru_cache(maxsize=256)
def resample_matrix(n_in: int, n_out: int, factor: float) -> np.ndarray:
    """(n_out, n_in) weight matrix of 1-D Catmull-Rom resampling with pixel
    centers aligned and sample indices clamped to the edge."""
    w = np.zeros((n_out, n_in))
    for o in range(n_out):
        src = (o + 0.5) / factor - 0.5
        base = int(np.floor(src))
        t = src - base
        for k in range(-1, 3):
            idx = min(max(base + k, 0), n_in - 1)
            w[o, idx] += catmull_rom(t - k)
    w.setflags(write=False)
    return w


def rescale_bicubic(img: np.ndarray, factor: float) -> np.ndarray:
    """Separable bicubic resample, output clamped to [0, 1]."""
    out, _ = rescale_with_clamp_mask(img, factor)
    return out


def rescale_with_clamp_mask(img: np.ndarray, factor: float):
    """Resample and also report where the [0, 1] clamp was active, so the
    backward pass can zero those gradients."""
    img = np.asarray(img, dtype=np.float64)
    if factor <= 0:
        raise ValueError("scale factor must be positive")
    h, w = img.shape
    rv = resample_matrix(h, output_length(h, factor), factor)
    rh = resample_matrix(w, output_length(w, factor), factor)
    raw = rv @ img @ rh.T
    mask = (raw < 0.0) | (raw > 1.0)
    return np.clip(raw, 0.0, 1.0), mask


def rescale_adjoint(grad_out: np.ndarray, factor: float, in_dims) -> np.ndarray:
    """Exact transpose of the linear resampling map for the given input
    dimensions (the clamp is the caller's concern; see provenance masks)."""
    grad_out = np.asarray(grad_out, dtype=np.float64)
    h_in, w_in = in_dims
    rv = resample_matrix(h_in, output_length(h_in, factor), factor)
    rh = resample_matrix(w_in, output_length(w_in, factor), factor)
    if grad_out.shape != (rv.shape[0], rh.shape[0]):
        raise DimensionMismatchError(
            f"grad shape {grad_out.shape} does not match output dims "
            f"{(rv.shape[0], rh.shape[0])} for factor {factor}"
        )
    return rv.T @ grad_out @ rh


@dataclass(frozen=True)
class AugmentRecord:
    flipped: bool
    factor: float
    clamp_mask: np.ndarray  # True where the forward [0,1] clamp was active


@dataclass(frozen=True)
class AugmentedSet:
    images: list
    provenance: list


def build_augmented_set(img: np.ndarray, scales, flip: str = "variant") -> AugmentedSet:
    """One scaled copy per factor, plus a scaled flipped copy per factor when
    flip='variant'; flip='always' flips inside every branch instead."""
    img = validate_image(img)
    factors = list(scales)
    if not factors or any(f <= 0 for f in factors):
        raise ValueError("scale set must be non-empty with positive factors")
    if len(set(factors)) != len(factors):
        raise ValueError("scale set contains duplicates")
    if flip not in FLIP_POLICIES:
        raise ValueError(f"flip policy must be one of {FLIP_POLICIES}")
    flipped_img = hflip(img)
    images = []
    provenance = []
    for f in factors:
        if flip in ("off", "variant"):
            out, mask = rescale_with_clamp_mask(img, f)
            images.append(out)
            provenance.append(AugmentRecord(flipped=False, factor=f, clamp_mask=mask))
        if flip in ("always", "variant"):
            out, mask = rescale_with_clamp_mask(flipped_img, f)
            images.append(out)
            provenance.append(AugmentRecord(flipped=True, factor=f, clamp_mask=mask))
    return AugmentedSet(images=images, provenance=provenance)


def accumulate_pixel_grads(set_grads, provenance, in_dims) -> np.ndarray:
    """Sum of per-augmentation adjoint chains back to the base image, in the
    fixed set order (deterministic reduction)."""
    if len(set_grads) != len(provenance):
        raise ValueError("one gradient required per augmented image")
    total = np.zeros(in_dims)
    for g, rec in zip(set_grads, provenance):
        g = np.asarray(g, dtype=np.float64)
        if g.shape != rec.clamp_mask.shape:
            raise DimensionMismatchError("gradient shape does not match provenance")
        g = np.where(rec.clamp_mask, 0.0, g)
        back = rescale_adjoint(g, rec.factor, in_dims)
        if rec.flipped:
            back = hflip(back)
        total += back
    return total
