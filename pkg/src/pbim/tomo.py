"""Desk-scale parallel-beam test problems: Shepp-Logan phantom, exact
ray-pixel intersection matrix and relative Gaussian noise.

Geometry conventions: the image is ``n x n`` unit pixels covering
``[-n/2, n/2]^2``, stored row-major with row 0 at the top. A ray at angle
``phi`` with detector offset ``s`` is the line ``{z : <z, (cos phi, sin phi)> = s}``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .sparse import SparseMatrix, csr_from_arrays, matvec, remove_zero_rows

# Modified Shepp-Logan table (Toft): intensity, semi-axis a, semi-axis b,
# center x, center y, rotation in degrees; coordinates on [-1, 1]^2.
SHEPP_LOGAN_ELLIPSES = (
    (1.0, 0.69, 0.92, 0.0, 0.0, 0.0),
    (-0.8, 0.6624, 0.8740, 0.0, -0.0184, 0.0),
    (-0.2, 0.1100, 0.3100, 0.22, 0.0, -18.0),
    (-0.2, 0.1600, 0.4100, -0.22, 0.0, 18.0),
    (0.1, 0.2100, 0.2500, 0.0, 0.35, 0.0),
    (0.1, 0.0460, 0.0460, 0.0, 0.1, 0.0),
    (0.1, 0.0460, 0.0460, 0.0, -0.1, 0.0),
    (0.1, 0.0460, 0.0230, -0.08, -0.605, 0.0),
    (0.1, 0.0230, 0.0230, 0.0, -0.606, 0.0),
    (0.1, 0.0230, 0.0460, 0.06, -0.605, 0.0),
)

_SNAP = 1e-12


@dataclass(frozen=True)
class ParallelGeometry:
    image_size: int
    n_views: int
    n_rays: int
    detector_spacing: float = 1.0

    def __post_init__(self):
        if self.image_size < 1 or self.n_views < 1 or self.n_rays < 1:
            raise ValueError("geometry sizes must be positive")
        if self.detector_spacing <= 0:
            raise ValueError("detector spacing must be positive")

    @property
    def angles(self) -> np.ndarray:
        """View angles in degrees, uniform over [0, 180)."""
        return 180.0 * np.arange(self.n_views) / self.n_views

    @property
    def offsets(self) -> np.ndarray:
        """Detector offsets, centered on the image."""
        return (np.arange(self.n_rays) - (self.n_rays - 1) / 2.0) * self.detector_spacing


@dataclass(frozen=True, eq=False)
class Phantom:
    image: np.ndarray
    ellipses: tuple

    @property
    def n_pix(self) -> int:
        return int(round(math.sqrt(self.image.size)))


def ellipse_sum(x, y, ellipses=SHEPP_LOGAN_ELLIPSES):
    """Summed intensity of the ellipses containing each point ``(x, y)``."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    out = np.zeros(np.broadcast(x, y).shape)
    for val, a, b, x0, y0, deg in ellipses:
        c, s = math.cos(math.radians(deg)), math.sin(math.radians(deg))
        dx, dy = x - x0, y - y0
        u = c * dx + s * dy
        v = -s * dx + c * dy
        out += val * ((u / a) ** 2 + (v / b) ** 2 <= 1.0)
    return out


def pixel_centers(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Normalized ``[-1, 1]`` center coordinates ``(x, y)`` in row-major order."""
    c = -1.0 + (np.arange(n) + 0.5) * 2.0 / n
    xx, yy = np.meshgrid(c, -c)
    return xx.ravel(), yy.ravel()


def shepp_logan(n_pix: int) -> Phantom:
    """Rasterize the phantom by pixel-center membership, clamped to [0, 1]."""
    if n_pix < 8:
        raise ValueError("phantom needs n_pix >= 8")
    x, y = pixel_centers(n_pix)
    img = np.clip(ellipse_sum(x, y), 0.0, 1.0)
    return Phantom(img, SHEPP_LOGAN_ELLIPSES)


def _snap(v: float) -> float:
    return 0.0 if abs(v) < _SNAP else v


def ray_pixel_intersections(n: int, phi_deg: float, s: float) -> tuple[np.ndarray, np.ndarray]:
    """Pixels crossed by one ray and the chord length inside each (Siddon).

    A ray running exactly along a pixel edge is charged to the pixel on the
    positive-x (vertical edge) or lower (horizontal edge) side; rays along
    the outer boundary miss the image.
    """
    phi = math.radians(phi_deg)
    ex, ey = _snap(math.cos(phi)), _snap(math.sin(phi))
    dx, dy = -ey, ex
    px, py = s * ex, s * ey
    half = n / 2.0

    t_lo, t_hi = -math.inf, math.inf
    for p0, d in ((px, dx), (py, dy)):
        if d == 0.0:
            if not -half < p0 < half:
                return np.zeros(0, dtype=np.int64), np.zeros(0)
            continue
        a, b = (-half - p0) / d, (half - p0) / d
        t_lo, t_hi = max(t_lo, min(a, b)), min(t_hi, max(a, b))
    if not t_hi > t_lo:
        return np.zeros(0, dtype=np.int64), np.zeros(0)

    ts = [np.array([t_lo, t_hi])]
    lines = np.arange(-half, half + 1.0)
    for p0, d in ((px, dx), (py, dy)):
        if d != 0.0:
            tl = (lines - p0) / d
            ts.append(tl[(tl > t_lo) & (tl < t_hi)])
    t = np.unique(np.concatenate(ts))
    seg = np.diff(t)
    mid = 0.5 * (t[1:] + t[:-1])
    col = np.floor(px + mid * dx + half).astype(np.int64)
    row = np.floor(half - (py + mid * dy)).astype(np.int64)
    keep = (seg > 1e-12) & (col >= 0) & (col < n) & (row >= 0) & (row < n)
    return row[keep] * n + col[keep], seg[keep]


def build_projection_matrix(geom: ParallelGeometry) -> SparseMatrix:
    """One row per (view, ray) in that order; entries are chord lengths.
    Rays missing the grid give empty rows."""
    n = geom.image_size
    rows, cols, vals = [], [], []
    r = 0
    for phi in geom.angles:
        for s in geom.offsets:
            pix, length = ray_pixel_intersections(n, float(phi), float(s))
            rows.append(np.full(pix.size, r, dtype=np.int64))
            cols.append(pix)
            vals.append(length)
            r += 1
    return csr_from_arrays(np.concatenate(rows), np.concatenate(cols), np.concatenate(vals), r, n * n)


def square_support(n: int, phi_deg: float) -> float:
    """Largest ``|s|`` for which a ray at ``phi`` still meets the image square."""
    phi = math.radians(phi_deg)
    return n / 2.0 * (abs(_snap(math.cos(phi))) + abs(_snap(math.sin(phi))))


def make_sinogram(A: SparseMatrix, phantom) -> np.ndarray:
    """Exact data ``A x*``."""
    img = phantom.image if isinstance(phantom, Phantom) else phantom
    return matvec(A, img)


def add_noise(b, level: float, seed) -> tuple[np.ndarray, np.ndarray]:
    """Gaussian perturbation scaled so that ``||db|| / ||b|| = level``."""
    if level < 0:
        raise ValueError("noise level must be nonnegative")
    b = np.asarray(b, dtype=np.float64)
    if level == 0:
        return b.copy(), np.zeros_like(b)
    e = np.random.default_rng(seed).standard_normal(b.size)
    db = level * np.linalg.norm(b) * e / np.linalg.norm(e)
    return b + db, db


@dataclass(frozen=True, eq=False)
class TomoProblem:
    A: SparseMatrix
    b: np.ndarray
    x_exact: np.ndarray
    kept_rows: np.ndarray
    geometry: ParallelGeometry


def make_tomo_problem(size: int, views: int, rays: int, spacing: float = 1.0) -> TomoProblem:
    """Phantom, projection matrix with empty rows removed, and exact data."""
    geom = ParallelGeometry(size, views, rays, spacing)
    A = build_projection_matrix(geom)
    phantom = shepp_logan(size)
    b = make_sinogram(A, phantom)
    A, b, kept = remove_zero_rows(A, b)
    return TomoProblem(A, b, phantom.image.copy(), kept, geom)
