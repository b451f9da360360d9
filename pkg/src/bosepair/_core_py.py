"""Pure-numpy fallback for the compiled pair sums in ``_core.pyx``."""

import numpy as np

_CHUNK = 512


def _min_image(diff, box):
    return diff - box * np.floor(diff / box + 0.5)


def pair_distance_matrix_apply(b, coords, box):
    b = np.asarray(b, dtype=np.float64)
    coords = np.asarray(coords, dtype=np.float64)
    npts = coords.shape[0]
    out = np.empty(npts)
    for start in range(0, npts, _CHUNK):
        block = coords[start:start + _CHUNK]
        diff = _min_image(block[:, None, :] - coords[None, :, :], box)
        out[start:start + _CHUNK] = np.sqrt(np.sum(diff**2, axis=-1)) @ b
    return out


def pair_distance_sum(a, b, coords, box):
    a = np.asarray(a, dtype=np.float64)
    return float(a @ pair_distance_matrix_apply(b, coords, box))
