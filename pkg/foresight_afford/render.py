# MIT License
#
# Copyright (c) 2026 The foresight-afford authors
#
# Distributed under the MIT license; see the LICENSE file for the full text.

"""
Portable pixmap pictures of observations and affordance maps.

Heatmaps run from blue (low) to red (high); invalid cells are dark grey.
"""

from pathlib import Path
from typing import Optional, Union

import numpy as np
from PIL import Image, UnidentifiedImageError

from .affordance import AffordanceMap
from .perception import HEIGHT_SCALE, Observation
from .workspace import GridCoord

MASKED = (40, 40, 40)
MARK = (255, 255, 255)
IMAGE_SIZE = 512


def scale_for(grid: int) -> int:
    """Integer upsampling factor; 8 for a 64-cell grid."""
    return max(1, IMAGE_SIZE // grid)


def colormap(values: np.ndarray) -> np.ndarray:
    """Map values in [0, 1] to RGB bytes, blue through green to red."""
    v = np.clip(np.asarray(values, dtype=np.float64), 0.0, 1.0)
    rgb = np.stack([v, 1.0 - np.abs(2.0 * v - 1.0), 1.0 - v], axis=-1)
    return np.round(rgb * 255.0).astype(np.uint8)


def upsample(image: np.ndarray, factor: int) -> np.ndarray:
    return image.repeat(factor, axis=0).repeat(factor, axis=1)


def heatmap(amap: AffordanceMap, factor: Optional[int] = None, mark: Optional[GridCoord] = None) -> np.ndarray:
    """Scores normalised over the valid cells; a uniform map renders mid-scale."""
    valid = amap.valid
    lo, hi = float(amap.scores[valid].min()), float(amap.scores[valid].max())
    if hi > lo:
        norm = (amap.scores - lo) / (hi - lo)
    else:
        norm = np.full(amap.scores.shape, 0.5)
    image = colormap(norm)
    image[~valid] = MASKED
    factor = scale_for(max(amap.scores.shape)) if factor is None else factor
    image = upsample(image, factor)
    if mark is not None:
        r0, c0 = mark[0] * factor, mark[1] * factor
        image[r0, c0:c0 + factor] = MARK
        image[r0 + factor - 1, c0:c0 + factor] = MARK
        image[r0:r0 + factor, c0] = MARK
        image[r0:r0 + factor, c0 + factor - 1] = MARK
    return image


def observation_image(obs: Observation, factor: Optional[int] = None) -> np.ndarray:
    """Occupied cells shaded by height, empty cells black."""
    shade = np.clip(0.5 + 0.5 * obs.height_map * HEIGHT_SCALE, 0.0, 1.0) * obs.occupancy
    gray = np.round(shade * 255.0).astype(np.uint8)
    image = np.repeat(gray[:, :, None], 3, axis=2)
    return upsample(image, scale_for(max(obs.m, obs.n)) if factor is None else factor)


def write_ppm(path: Union[str, Path], image: np.ndarray) -> None:
    if image.ndim != 3 or image.shape[2] != 3 or image.dtype != np.uint8:
        raise ValueError("expected an H x W x 3 uint8 image")
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(np.ascontiguousarray(image)).save(path, format="PPM")


def read_ppm(path: Union[str, Path]) -> np.ndarray:
    try:
        with Image.open(path) as picture:
            if picture.format != "PPM" or picture.mode != "RGB":
                raise ValueError("{} is not an RGB pixmap".format(path))
            return np.asarray(picture, dtype=np.uint8).copy()
    except UnidentifiedImageError as err:
        raise ValueError("{} is not an image: {}".format(path, err)) from err


def warmth(image: np.ndarray) -> np.ndarray:
    """Red minus blue per pixel; increases with the mapped value."""
    return image[..., 0].astype(np.int64) - image[..., 2].astype(np.int64)

