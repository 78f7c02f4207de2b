"""Parallel-beam CT system matrix and a ten-ellipse head phantom.

The image is an ``n_img x n_img`` pixel grid covering the square
``[-n_img/2, n_img/2]^2`` with unit pixels, flattened in C order (row index
iy from the bottom, column index ix from the left). Each matrix row holds the
exact intersection lengths of one ray with every pixel, computed by
parametric grid traversal. Detector offsets are unit-spaced and centered, so
they pass through pixel centers at axis-aligned angles.
"""

from __future__ import annotations

import numpy as np

from .errors import InvalidGeometry

# Ten-ellipse head phantom (modified variant with non-negative tissue
# contrasts): half-axes, center, rotation in degrees, additive intensity,
# on the unit square [-1, 1]^2.
PHANTOM_ELLIPSES = [
    (0.69, 0.92, 0.0, 0.0, 0.0, 1.0),
    (0.6624, 0.874, 0.0, -0.0184, 0.0, -0.8),
    (0.11, 0.31, 0.22, 0.0, -18.0, -0.2),
    (0.16, 0.41, -0.22, 0.0, 18.0, -0.2),
    (0.21, 0.25, 0.0, 0.35, 0.0, 0.1),
    (0.046, 0.046, 0.0, 0.1, 0.0, 0.1),
    (0.046, 0.046, 0.0, -0.1, 0.0, 0.1),
    (0.046, 0.023, -0.08, -0.605, 0.0, 0.1),
    (0.023, 0.023, 0.0, -0.606, 0.0, 0.1),
    (0.023, 0.046, 0.06, -0.605, 0.0, 0.1),
]


def phantom_image(n_img: int) -> np.ndarray:
    """Evaluate the phantom at pixel centers; values lie in [0, 1]."""
    if n_img < 8:
        raise InvalidGeometry("phantom grid must be at least 8x8")
    centers = (np.arange(n_img) + 0.5) * 2.0 / n_img - 1.0
    xx, yy = np.meshgrid(centers, centers)  # yy varies along axis 0
    img = np.zeros((n_img, n_img))
    for a, b, x0, y0, phi_deg, intensity in PHANTOM_ELLIPSES:
        phi = np.deg2rad(phi_deg)
        c, s = np.cos(phi), np.sin(phi)
        xr = (xx - x0) * c + (yy - y0) * s
        yr = -(xx - x0) * s + (yy - y0) * c
        img[(xr / a) ** 2 + (yr / b) ** 2 <= 1.0] += intensity
    # The table sums are nonnegative; round-off can leave -1e-17 residue.
    return np.maximum(img, 0.0)


def _ray_row(n_img: int, theta: float, offset: float) -> np.ndarray:
    """Intersection lengths of one ray with every pixel of the grid."""
    half = n_img / 2.0
    d = np.array([np.cos(theta), np.sin(theta)])
    origin = offset * np.array([-np.sin(theta), np.cos(theta)])

    # Entry/exit parameters against the bounding square (slab method).
    t_lo, t_hi = -np.inf, np.inf
    for axis in range(2):
        if abs(d[axis]) < 1e-15:
            if abs(origin[axis]) >= half:
                return np.zeros(n_img * n_img)
        else:
            t1 = (-half - origin[axis]) / d[axis]
            t2 = (half - origin[axis]) / d[axis]
            t_lo = max(t_lo, min(t1, t2))
            t_hi = min(t_hi, max(t1, t2))
    if not t_lo < t_hi:
        return np.zeros(n_img * n_img)

    # All grid-line crossings inside [t_lo, t_hi].
    ts = [np.array([t_lo, t_hi])]
    for axis in range(2):
        if abs(d[axis]) >= 1e-15:
            planes = -half + np.arange(1, n_img)
            t = (planes - origin[axis]) / d[axis]
            ts.append(t[(t > t_lo) & (t < t_hi)])
    t_all = np.unique(np.concatenate(ts))

    lengths = np.diff(t_all)
    mids = origin[None, :] + 0.5 * (t_all[:-1] + t_all[1:])[:, None] * d[None, :]
    ix = np.floor(mids[:, 0] + half).astype(np.intp)
    iy = np.floor(mids[:, 1] + half).astype(np.intp)
    keep = (lengths > 1e-12) & (ix >= 0) & (ix < n_img) & (iy >= 0) & (iy < n_img)

    row = np.zeros(n_img * n_img)
    np.add.at(row, iy[keep] * n_img + ix[keep], lengths[keep])
    return row


def parallel_beam_matrix(n_img: int, angle_step_deg: float, n_rays: int) -> tuple[np.ndarray, np.ndarray]:
    """Dense ray matrix for angles 0:step:180; returns (matrix, kept_row_indices).

    Rows that miss the grid entirely are removed; ``kept_row_indices`` maps
    surviving rows back to the (angle, ray) enumeration order.
    """
    if n_img < 8 or n_rays < 1 or not 0 < angle_step_deg <= 180:
        raise InvalidGeometry(
            f"bad geometry: n_img={n_img}, angle_step_deg={angle_step_deg}, n_rays={n_rays}"
        )
    angles = np.deg2rad(np.arange(0.0, 180.0, angle_step_deg))
    offsets = np.arange(n_rays) - (n_rays - 1) / 2.0
    rows = []
    kept = []
    idx = 0
    for theta in angles:
        for rho in offsets:
            row = _ray_row(n_img, theta, rho)
            if row.any():
                rows.append(row)
                kept.append(idx)
            idx += 1
    if not rows:
        raise InvalidGeometry("every ray missed the image grid")
    return np.vstack(rows), np.asarray(kept, dtype=np.intp)
