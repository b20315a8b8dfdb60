"""64-bit DCT perceptual hash.

Resize to 32x32 grayscale (box filter), 2-D orthonormal DCT, keep the
top-left 8x8 coefficient block, threshold at the median of the 63 non-DC
coefficients; bits emitted row-major, first coefficient most significant.
"""

from __future__ import annotations

import numpy as np
from PIL import Image
from scipy.fft import dct


def _to_gray_u8(image: np.ndarray) -> np.ndarray:
    arr = np.asarray(image)
    if arr.dtype != np.uint8:
        arr = np.clip(np.round(arr * 255.0), 0, 255).astype(np.uint8)
    if arr.ndim == 3:
        arr = np.round(0.299 * arr[..., 0] + 0.587 * arr[..., 1] + 0.114 * arr[..., 2])
    return arr.astype(np.uint8)


def phash64(image: np.ndarray) -> int:
    gray = _to_gray_u8(image)
    small = np.asarray(
        Image.fromarray(gray.astype(np.float32), mode="F").resize((32, 32), Image.BOX)
    )
    coeffs = dct(dct(small.astype(np.float64), axis=0, norm="ortho"), axis=1, norm="ortho")
    block = coeffs[:8, :8].ravel()
    median = np.median(block[1:])
    bits = block > median
    value = 0
    for b in bits:
        value = (value << 1) | int(b)
    return value


def hamming(a: int, b: int) -> int:
    return (a ^ b).bit_count()
