"""Fréchet distance between Gaussian fits of handcrafted image features."""

from __future__ import annotations

import numpy as np
from scipy import linalg

from ..synthcorpus.features import featurize

MIN_SET_SIZE = 16
_EPS = 1e-6


def image_set_features(images_with_masks: list[tuple[np.ndarray, dict]]) -> np.ndarray:
    """Stack the fixed 24-dim features for a set of (image, masks) pairs."""
    return np.stack([featurize(img, masks) for img, masks in images_with_masks])


def feature_distance(features_a: np.ndarray, features_b: np.ndarray) -> float:
    """Fréchet distance between Gaussians fitted to the two feature sets.

    Zero for identical sets; covariance is ridge-regularized against
    singular fits.
    """
    fa = np.asarray(features_a, dtype=np.float64)
    fb = np.asarray(features_b, dtype=np.float64)
    if fa.shape[0] < MIN_SET_SIZE or fb.shape[0] < MIN_SET_SIZE:
        raise ValueError(f"each set needs at least {MIN_SET_SIZE} samples")
    mu_a, mu_b = fa.mean(axis=0), fb.mean(axis=0)
    cov_a = np.cov(fa, rowvar=False) + _EPS * np.eye(fa.shape[1])
    cov_b = np.cov(fb, rowvar=False) + _EPS * np.eye(fb.shape[1])
    covmean = linalg.sqrtm(cov_a @ cov_b)
    if np.iscomplexobj(covmean):
        covmean = covmean.real
    d2 = float(((mu_a - mu_b) ** 2).sum() + np.trace(cov_a + cov_b - 2.0 * covmean))
    return max(d2, 0.0)
