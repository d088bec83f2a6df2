"""Frame preprocessing: crop expansion, grayscale, bilinear resize, sampling."""

from __future__ import annotations

import math

import numpy as np

from ..core import Tensor

LUMA = (0.299, 0.587, 0.114)
CROP_FACTOR = 1.2
FACE_SIZE = (110, 110)
N_FRAMES = 100


def _round_half_up(v: float) -> int:
    return math.floor(v + 0.5)


def expand_crop(box, factor: float, frame_dims):
    """Scale ``(x, y, w, h)`` about its centre, then clip to the frame.

    ``frame_dims`` is ``(H, W)``. Coordinates are rounded half-up to pixels.
    """
    x, y, w, h = box
    if w <= 0 or h <= 0:
        raise ValueError(f"degenerate box {box}")
    if factor < 1:
        raise ValueError("expansion factor must be >= 1")
    fh, fw = frame_dims
    cx, cy = x + w / 2, y + h / 2
    x0 = max(0, _round_half_up(cx - w * factor / 2))
    y0 = max(0, _round_half_up(cy - h * factor / 2))
    x1 = min(fw, _round_half_up(cx + w * factor / 2))
    y1 = min(fh, _round_half_up(cy + h * factor / 2))
    return (x0, y0, x1 - x0, y1 - y0)


def _axis_weights(n_in: int, n_out: int):
    # half-pixel centres (corner-aligned = false)
    src = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
    src = np.clip(src, 0, n_in - 1)
    lo = np.floor(src).astype(np.int64)
    hi = np.minimum(lo + 1, n_in - 1)
    frac = src - lo
    return lo, hi, frac


def resize_bilinear(image, target):
    """Bilinear resize of ``[..., H, W]`` to ``target = (H', W')``."""
    arr = image.data if isinstance(image, Tensor) else np.asarray(image)
    th, tw = target
    if th <= 0 or tw <= 0:
        raise ValueError(f"target dims must be positive, got {target}")
    if arr.shape[-2] < 1 or arr.shape[-1] < 1:
        raise ValueError("empty image")
    if arr.shape[-2:] == (th, tw):
        out = arr.copy()
    else:
        ylo, yhi, fy = _axis_weights(arr.shape[-2], th)
        xlo, xhi, fx = _axis_weights(arr.shape[-1], tw)
        fy = fy.astype(arr.dtype)[:, None]
        fx = fx.astype(arr.dtype)
        rows = arr[..., ylo, :] * (1 - fy) + arr[..., yhi, :] * fy
        out = rows[..., xlo] * (1 - fx) + rows[..., xhi] * fx
        # interpolation cannot leave the input range; guard rounding drift
        out = np.clip(out, arr.min(), arr.max())
    return Tensor(out) if isinstance(image, Tensor) else out


def to_grayscale(image):
    """Luma of a ``[..., 3, H, W]`` image."""
    arr = image.data if isinstance(image, Tensor) else np.asarray(image)
    if arr.shape[-3] != 3:
        raise ValueError(f"expected 3 colour channels, got shape {arr.shape}")
    r, g, b = arr[..., 0, :, :], arr[..., 1, :, :], arr[..., 2, :, :]
    out = r * LUMA[0] + g * LUMA[1] + b * LUMA[2]
    return Tensor(out) if isinstance(image, Tensor) else out


def sample_indices(n: int, t: int) -> np.ndarray:
    if n < 1:
        raise ValueError("cannot sample from an empty clip")
    if t < 1:
        raise ValueError("sample count must be positive")
    return (np.arange(t) * n) // t


def uniform_sample(clip, t: int):
    """Pick frames ``floor(i*N/T)`` for ``i in 0..T-1`` along axis 0."""
    arr = clip.data if isinstance(clip, Tensor) else np.asarray(clip)
    out = arr[sample_indices(arr.shape[0], t)]
    return Tensor(out) if isinstance(clip, Tensor) else out


def encode_answer(answer: int) -> Tensor:
    if answer not in (1, 2, 3, 4):
        raise ValueError(f"answer must be 1..4, got {answer}")
    v = np.zeros(4)
    v[answer - 1] = 1.0
    return Tensor(v)


def encode_time(seconds: float) -> Tensor:
    return Tensor(np.array([float(seconds)]))


def one_hot_answers(answers, dtype=np.float32) -> np.ndarray:
    """``[..., 20]`` answers in 1..4 to ``[..., 20, 4]`` one-hot codes."""
    answers = np.asarray(answers)
    if answers.size and (answers.min() < 1 or answers.max() > 4):
        raise ValueError("answers must lie in 1..4")
    return np.eye(4, dtype=dtype)[answers - 1]


def preprocess_frames(frames, crop_box=None, factor=CROP_FACTOR, size=FACE_SIZE, n_frames=N_FRAMES) -> np.ndarray:
    """Raw frames ``[N, 3, H, W]`` or ``[N, H, W]`` to a ``[T, H', W']`` clip.

    Steps: uniform temporal sampling, grayscale, crop to the expanded face
    box (when given), bilinear resize.
    """
    frames = np.asarray(frames, dtype=np.float32)
    frames = uniform_sample(frames, n_frames)
    if frames.ndim == 4:
        frames = to_grayscale(frames)
    if crop_box is not None:
        x, y, w, h = expand_crop(crop_box, factor, frames.shape[-2:])
        frames = frames[:, y : y + h, x : x + w]
    return resize_bilinear(frames, size).astype(np.float32)
