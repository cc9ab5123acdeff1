"""Image grid, fan-beam acquisition geometry and the sparse projector.

Coordinate convention (shared by every module in the package):

* the image domain is centred at the origin, ``[-W/2, W/2] x [-H/2, H/2]``;
* pixel ``(ix, iy)`` has ``ix`` counting along +x and ``iy`` along +y, so
  pixel ``(0, 0)`` sits in the lower-left corner;
* image vectors are flattened row by row from the bottom:
  ``j = iy * n_x + ix``. ``x.reshape(n_y, n_x)`` therefore has its first row
  at the bottom of the domain;
* detector cells are numbered along the detector direction vector.

All lengths are in meters.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import aslinearoperator

from .exceptions import DimensionMismatch, GeometryUncovered

#: intersection lengths below this (meters) are treated as grazing noise
MIN_SEGMENT = 1e-12


@dataclass(frozen=True)
class ImageGrid:
    """Square-pixel discretisation of a rectangular domain centred at the origin."""

    extent_x: float = 1.0
    extent_y: float = 1.0
    n_x: int = 64
    n_y: int = 64
    ndim: int = field(default=2, init=False, repr=False)

    def __post_init__(self):
        if self.n_x < 1 or self.n_y < 1:
            raise ValueError(f"pixel counts must be >= 1, got {self.n_x}x{self.n_y}")
        if not (self.extent_x > 0 and self.extent_y > 0):
            raise ValueError("grid extents must be positive")

    @property
    def dx(self) -> float:
        return self.extent_x / self.n_x

    @property
    def dy(self) -> float:
        return self.extent_y / self.n_y

    @property
    def n(self) -> int:
        return self.n_x * self.n_y

    @property
    def shape(self) -> tuple[int, int]:
        """Array shape ``(n_y, n_x)`` of an image reshaped from a flat vector."""
        return (self.n_y, self.n_x)

    @property
    def origin(self) -> np.ndarray:
        """Lower-left corner of the domain."""
        return np.array([-self.extent_x / 2, -self.extent_y / 2])

    @property
    def bounds(self) -> tuple[float, float, float, float]:
        """``(xmin, xmax, ymin, ymax)``."""
        return (-self.extent_x / 2, self.extent_x / 2, -self.extent_y / 2, self.extent_y / 2)

    def index(self, ix, iy):
        return np.asarray(iy) * self.n_x + np.asarray(ix)

    def unravel(self, j):
        j = np.asarray(j)
        return j % self.n_x, j // self.n_x

    def center(self, ix, iy) -> np.ndarray:
        ox, oy = self.origin
        return np.stack([ox + (np.asarray(ix) + 0.5) * self.dx,
                         oy + (np.asarray(iy) + 0.5) * self.dy], axis=-1)

    def centers(self) -> np.ndarray:
        """Pixel centres as an ``(n, 2)`` array in flat-index order."""
        ix, iy = self.unravel(np.arange(self.n))
        return self.center(ix, iy)

    def contains(self, points, margin=0.0) -> np.ndarray:
        pts = np.atleast_2d(points)
        xmin, xmax, ymin, ymax = self.bounds
        return ((pts[:, 0] >= xmin + margin) & (pts[:, 0] <= xmax - margin)
                & (pts[:, 1] >= ymin + margin) & (pts[:, 1] <= ymax - margin))

    def to_dict(self) -> dict:
        return {"extent_x": self.extent_x, "extent_y": self.extent_y,
                "n_x": self.n_x, "n_y": self.n_y}


@dataclass(frozen=True)
class FanBeamGeometry:
    """Point source and a straight detector line of equally spaced cells.

    Parameters
    ----------
    source : (2,) array_like
        Source position ``r0``.
    detector_center : (2,) array_like
        Midpoint of the detector line.
    detector_direction : (2,) array_like
        Direction along which detector cells are numbered; normalised here.
    detector_length : float
        Physical length of the detector line.
    n_detectors : int
        Number of detector cells ``m``; one ray per cell, through its centre.
    """

    source: tuple[float, float]
    detector_center: tuple[float, float]
    detector_direction: tuple[float, float]
    detector_length: float
    n_detectors: int
    ndim: int = field(default=2, init=False, repr=False)

    def __post_init__(self):
        u = np.asarray(self.detector_direction, dtype=float)
        norm = np.linalg.norm(u)
        if u.shape != (2,) or norm == 0:
            raise ValueError("detector_direction must be a non-zero 2-vector")
        object.__setattr__(self, "source", tuple(float(v) for v in self.source))
        object.__setattr__(self, "detector_center", tuple(float(v) for v in self.detector_center))
        object.__setattr__(self, "detector_direction", tuple(float(v) for v in u / norm))
        if self.n_detectors < 1:
            raise ValueError("need at least one detector cell")
        if not self.detector_length > 0:
            raise ValueError("detector_length must be positive")
        # source must not lie on the detector line
        r = np.asarray(self.source) - np.asarray(self.detector_center)
        u = np.asarray(self.detector_direction)
        if abs(r[0] * u[1] - r[1] * u[0]) <= 1e-12:
            raise ValueError("source lies on the detector line")

    @classmethod
    def facing(cls, source_distance=1.5, detector_distance=1.5, detector_length=3.2,
               n_detectors=256, angle=0.0):
        """Source and detector on opposite sides of the origin.

        With ``angle = 0`` the source sits on the -x axis and the detector
        line is vertical on the +x side, cells numbered upwards. ``angle``
        rotates the whole setup counter-clockwise about the origin, so
        ``pi/2`` puts the source below the image.
        """
        c, s = np.cos(angle), np.sin(angle)
        axis = np.array([c, s])
        along = np.array([-s, c])
        return cls(tuple(-source_distance * axis), tuple(detector_distance * axis), tuple(along),
                   detector_length, n_detectors)

    @property
    def m(self) -> int:
        return self.n_detectors

    def detector_positions(self) -> np.ndarray:
        """Cell-centre positions, ``(m, 2)``."""
        k = np.arange(self.n_detectors)
        offs = ((k + 0.5) / self.n_detectors - 0.5) * self.detector_length
        return np.asarray(self.detector_center) + offs[:, None] * np.asarray(self.detector_direction)

    def validate(self, grid: ImageGrid):
        src = np.asarray(self.source)
        xmin, xmax, ymin, ymax = grid.bounds
        if xmin <= src[0] <= xmax and ymin <= src[1] <= ymax:
            raise ValueError(f"source {tuple(src)} lies inside the image domain")

    def to_dict(self) -> dict:
        return {"source": list(self.source), "detector_center": list(self.detector_center),
                "detector_direction": list(self.detector_direction),
                "detector_length": self.detector_length, "n_detectors": self.n_detectors}


def _ray_segments(origin, direction, grid):
    """Siddon traversal of the half-line ``origin + t*direction, t >= 0``.

    Returns flat pixel indices and intersection lengths (meters).
    """
    xmin, xmax, ymin, ymax = grid.bounds
    t_lo, t_hi = 0.0, np.inf
    for o, d, lo, hi in ((origin[0], direction[0], xmin, xmax),
                         (origin[1], direction[1], ymin, ymax)):
        if d == 0.0:
            if not lo <= o <= hi:
                return np.empty(0, dtype=np.int64), np.empty(0)
            continue
        t0, t1 = (lo - o) / d, (hi - o) / d
        if t0 > t1:
            t0, t1 = t1, t0
        t_lo, t_hi = max(t_lo, t0), min(t_hi, t1)
    if not t_hi > t_lo:
        return np.empty(0, dtype=np.int64), np.empty(0)

    ts = [np.array([t_lo, t_hi])]
    if direction[0] != 0.0:
        planes = xmin + grid.dx * np.arange(grid.n_x + 1)
        tx = (planes - origin[0]) / direction[0]
        ts.append(tx[(tx > t_lo) & (tx < t_hi)])
    if direction[1] != 0.0:
        planes = ymin + grid.dy * np.arange(grid.n_y + 1)
        ty = (planes - origin[1]) / direction[1]
        ts.append(ty[(ty > t_lo) & (ty < t_hi)])
    t = np.unique(np.concatenate(ts))

    length = np.hypot(direction[0], direction[1])
    seg = np.diff(t) * length
    mid = 0.5 * (t[1:] + t[:-1])
    ix = np.floor((origin[0] + mid * direction[0] - xmin) / grid.dx).astype(np.int64)
    iy = np.floor((origin[1] + mid * direction[1] - ymin) / grid.dy).astype(np.int64)
    np.clip(ix, 0, grid.n_x - 1, out=ix)
    np.clip(iy, 0, grid.n_y - 1, out=iy)
    keep = seg >= MIN_SEGMENT
    return grid.index(ix[keep], iy[keep]), seg[keep]


class SparseProjector:
    """Sparse system matrix ``A`` of exact ray/pixel intersection lengths.

    The underlying CSR matrix is made read-only, so instances can be shared
    between workers.
    """

    def __init__(self, matrix, grid: ImageGrid | None = None, geometry: FanBeamGeometry | None = None):
        A = sp.csr_matrix(matrix, dtype=float)
        A.sum_duplicates()
        A.eliminate_zeros()
        for arr in (A.data, A.indices, A.indptr):
            arr.flags.writeable = False
        self._A = A
        self.grid = grid
        self.geometry = geometry

    @property
    def matrix(self) -> sp.csr_matrix:
        return self._A

    @property
    def shape(self) -> tuple[int, int]:
        return self._A.shape

    @property
    def m(self) -> int:
        return self._A.shape[0]

    @property
    def n(self) -> int:
        return self._A.shape[1]

    @property
    def nnz(self) -> int:
        return self._A.nnz

    def apply(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.n,):
            raise DimensionMismatch(f"expected image vector of length {self.n}, got shape {x.shape}")
        return self._A @ x

    def apply_adjoint(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        if u.shape != (self.m,):
            raise DimensionMismatch(f"expected measurement vector of length {self.m}, got shape {u.shape}")
        return self._A.T @ u

    __matmul__ = apply

    def toarray(self) -> np.ndarray:
        return self._A.toarray()

    def uncovered_pixels(self) -> np.ndarray:
        return np.flatnonzero(np.diff(self._A.tocsc().indptr) == 0)

    def write_triplets(self, path):
        """Debug dump, one ``row col weight`` line per stored entry."""
        coo = self._A.tocoo()
        with open(path, "w") as fh:
            for i, j, w in zip(coo.row, coo.col, coo.data):
                fh.write(f"{i} {j} {w:.17g}\n")

    def __repr__(self):
        return f"SparseProjector(m={self.m}, n={self.n}, nnz={self.nnz})"


def build_fan_projector(grid: ImageGrid, geom: FanBeamGeometry, check_coverage=True) -> SparseProjector:
    """Assemble ``A`` with one ray from the source through each detector-cell centre.

    Raises
    ------
    GeometryUncovered
        If ``check_coverage`` and some pixel is crossed by no ray. The
        exception carries the offending ``(ix, iy)`` pixel indices.
    """
    geom.validate(grid)
    src = np.asarray(geom.source)
    rows, cols, vals = [], [], []
    for i, cell in enumerate(geom.detector_positions()):
        idx, w = _ray_segments(src, cell - src, grid)
        rows.append(np.full(idx.size, i, dtype=np.int64))
        cols.append(idx)
        vals.append(w)
    A = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(geom.n_detectors, grid.n))
    proj = SparseProjector(A, grid, geom)
    if check_coverage:
        missing = proj.uncovered_pixels()
        if missing.size:
            ix, iy = grid.unravel(missing)
            raise GeometryUncovered(zip(ix.tolist(), iy.tolist()))
    return proj


class NormEstimate(NamedTuple):
    value: float
    n_iter: int
    converged: bool


def power_iteration(op, tol=1e-6, max_iter=500, seed=0) -> NormEstimate:
    """Largest singular value of ``op`` by power iteration on ``op^T op``.

    ``op`` may be anything :func:`scipy.sparse.linalg.aslinearoperator`
    accepts (arrays, sparse matrices, ``LinearOperator``) or a
    :class:`SparseProjector`.
    """
    if isinstance(op, SparseProjector):
        op = op.matrix
    L = aslinearoperator(op)
    v = np.random.default_rng(seed).standard_normal(L.shape[1])
    v /= np.linalg.norm(v)
    est = 0.0
    for it in range(1, max_iter + 1):
        w = L.matvec(v)
        new = float(np.linalg.norm(w))
        if new == 0.0:
            return NormEstimate(0.0, it, True)
        v = L.rmatvec(w)
        nv = np.linalg.norm(v)
        if nv == 0.0:
            return NormEstimate(new, it, True)
        v /= nv
        if abs(new - est) <= tol * new:
            return NormEstimate(new, it, True)
        est = new
    return NormEstimate(est, max_iter, False)


def operator_norm(op, tol=1e-6, max_iter=500, seed=0) -> float:
    """Estimate ``||op||_2``; see :func:`power_iteration` for the convergence flag."""
    return power_iteration(op, tol=tol, max_iter=max_iter, seed=seed).value
