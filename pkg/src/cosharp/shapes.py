"""Parametric shapes, roto-translated rasters, the shape dictionary and phantoms.

A shape ``u`` is a function on the plane, compactly supported around the
origin. A pose ``(theta, s)`` places it in the image as the function
``r -> u(R(theta) r + s)``; pixel ``j`` of the raster is this function
evaluated at the pixel centre. Under that convention the shape is centred
at ``-R(theta)^T s``, so a copy centred at ``c`` has ``s = -R(theta) c``.
:func:`build_dictionary` takes a lattice of centres and converts each one
to its shift.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .exceptions import EmptyDictionary, EmptyRaster, PlacementInfeasible
from .geometry import ImageGrid

# relative slack on boundary membership; absorbs rounding in R(theta)
_BOUNDARY_RTOL = 1e-9


class ShapeSpec:
    """Base class of the supported shape families."""

    kind: str = ""

    @property
    def radius(self) -> float:
        """Radius of a disc around the origin containing the support."""
        raise NotImplementedError

    def evaluate(self, q: np.ndarray) -> np.ndarray:
        """Intensity at local coordinates ``q`` of shape ``(N, 2)``."""
        raise NotImplementedError

    def to_dict(self) -> dict:
        d = {"kind": self.kind}
        d.update({k: (list(v) if isinstance(v, tuple) else v) for k, v in self.__dict__.items()})
        return d

    @staticmethod
    def from_dict(d: dict) -> "ShapeSpec":
        d = dict(d)
        kind = d.pop("kind")
        try:
            cls = _SHAPES[kind]
        except KeyError:
            raise ValueError(f"unknown shape kind {kind!r}; choose from {sorted(_SHAPES)}") from None
        return cls(**d)


def _ellipse_form(q, a, b):
    return (q[:, 0] / a) ** 2 + (q[:, 1] / b) ** 2


@dataclass(frozen=True)
class Disc(ShapeSpec):
    r: float
    intensity: float = 1.0
    kind = "disc"

    def __post_init__(self):
        if not (self.r > 0 and self.intensity > 0):
            raise ValueError("disc radius and intensity must be positive")

    @property
    def radius(self):
        return self.r

    def evaluate(self, q):
        inside = (q[:, 0] ** 2 + q[:, 1] ** 2) <= self.r ** 2 * (1 + _BOUNDARY_RTOL)
        return np.where(inside, self.intensity, 0.0)


@dataclass(frozen=True)
class Ellipse(ShapeSpec):
    """Ellipse with semi-axis ``a`` along local x and ``b`` along local y."""

    a: float
    b: float
    intensity: float = 1.0
    kind = "ellipse"

    def __post_init__(self):
        if not (self.a > 0 and self.b > 0 and self.intensity > 0):
            raise ValueError("ellipse axes and intensity must be positive")

    @property
    def radius(self):
        return max(self.a, self.b)

    def evaluate(self, q):
        return np.where(_ellipse_form(q, self.a, self.b) <= 1 + _BOUNDARY_RTOL, self.intensity, 0.0)


@dataclass(frozen=True)
class RadialDisc(ShapeSpec):
    """Concentric annuli; ``intensities[k]`` fills ``radii[k-1] < |q| <= radii[k]``."""

    radii: tuple[float, ...]
    intensities: tuple[float, ...]
    kind = "radial_disc"

    def __post_init__(self):
        object.__setattr__(self, "radii", tuple(float(r) for r in self.radii))
        object.__setattr__(self, "intensities", tuple(float(v) for v in self.intensities))
        if len(self.radii) == 0 or len(self.radii) != len(self.intensities):
            raise ValueError("radii and intensities must be non-empty and of equal length")
        if self.radii[0] <= 0 or any(b <= a for a, b in zip(self.radii, self.radii[1:])):
            raise ValueError("radii must be positive and strictly increasing")
        if min(self.intensities) <= 0:
            raise ValueError("intensities must be positive")

    @property
    def radius(self):
        return self.radii[-1]

    def evaluate(self, q):
        r2 = (q[:, 0] ** 2 + q[:, 1] ** 2) / (1 + _BOUNDARY_RTOL)
        edges = np.asarray(self.radii) ** 2
        ring = np.searchsorted(edges, r2, side="left")
        vals = np.append(np.asarray(self.intensities), 0.0)
        return vals[ring]


@dataclass(frozen=True)
class EllipticalShell(ShapeSpec):
    """Region inside the outer ellipse and strictly outside the inner one."""

    outer_a: float
    outer_b: float
    inner_a: float
    inner_b: float
    intensity: float = 1.0
    kind = "ellipsoidal_shell"

    def __post_init__(self):
        if min(self.outer_a, self.outer_b, self.inner_a, self.inner_b, self.intensity) <= 0:
            raise ValueError("shell axes and intensity must be positive")
        if not (self.inner_a < self.outer_a and self.inner_b < self.outer_b):
            raise ValueError("inner axes must be strictly smaller than outer axes")

    @property
    def radius(self):
        return max(self.outer_a, self.outer_b)

    def evaluate(self, q):
        inside = _ellipse_form(q, self.outer_a, self.outer_b) <= 1 + _BOUNDARY_RTOL
        hole = _ellipse_form(q, self.inner_a, self.inner_b) < 1 - _BOUNDARY_RTOL
        return np.where(inside & ~hole, self.intensity, 0.0)


_SHAPES = {cls.kind: cls for cls in (Disc, Ellipse, RadialDisc, EllipticalShell)}


def rotation_matrix(theta: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    # exact zeros at multiples of pi/2 keep symmetric rasters bit-identical
    c = 0.0 if abs(c) < 1e-15 else c
    s = 0.0 if abs(s) < 1e-15 else s
    return np.array([[c, -s], [s, c]])


@dataclass(frozen=True)
class Pose:
    """Rotation angle (radians, reduced to ``[0, 2pi)``) and shift (meters)."""

    angle: float = 0.0
    shift: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        a = float(self.angle) % (2 * math.pi)
        object.__setattr__(self, "angle", 0.0 if a == 2 * math.pi else a)
        object.__setattr__(self, "shift", tuple(float(v) for v in self.shift))

    @classmethod
    def centered_at(cls, center, angle=0.0) -> "Pose":
        """Pose whose raster is centred at ``center``."""
        R = rotation_matrix(float(angle) % (2 * math.pi))
        return cls(angle, tuple(-R @ np.asarray(center, dtype=float)))

    @property
    def rotation(self) -> np.ndarray:
        return rotation_matrix(self.angle)

    @property
    def center(self) -> np.ndarray:
        return -self.rotation.T @ np.asarray(self.shift)


def _raster_support(shape: ShapeSpec, pose: Pose, grid: ImageGrid):
    c = pose.center
    rad = shape.radius
    xmin, _, ymin, _ = grid.bounds
    ix0 = max(0, int(math.floor((c[0] - rad - xmin) / grid.dx)) - 1)
    ix1 = min(grid.n_x - 1, int(math.ceil((c[0] + rad - xmin) / grid.dx)) + 1)
    iy0 = max(0, int(math.floor((c[1] - rad - ymin) / grid.dy)) - 1)
    iy1 = min(grid.n_y - 1, int(math.ceil((c[1] + rad - ymin) / grid.dy)) + 1)
    if ix0 > ix1 or iy0 > iy1:
        return np.empty(0, dtype=np.int64), np.empty(0)
    IY, IX = np.mgrid[iy0:iy1 + 1, ix0:ix1 + 1]
    ix, iy = IX.ravel(), IY.ravel()
    pts = grid.center(ix, iy)
    q = pts @ pose.rotation.T + np.asarray(pose.shift)
    vals = shape.evaluate(q)
    nz = vals != 0
    return grid.index(ix[nz], iy[nz]).astype(np.int64), vals[nz]


def rasterize(shape: ShapeSpec, pose: Pose, grid: ImageGrid) -> sp.csc_matrix:
    """Raster of ``u(R(theta) r + s)`` sampled at pixel centres, as an ``(n, 1)`` column.

    Raises
    ------
    EmptyRaster
        If no pixel centre falls inside the placed shape.
    """
    idx, vals = _raster_support(shape, pose, grid)
    if idx.size == 0:
        raise EmptyRaster(f"{shape!r} at {pose!r} covers no pixel centre")
    return sp.csc_matrix((vals, (idx, np.zeros_like(idx))), shape=(grid.n, 1))


def default_lattice(shape: ShapeSpec, grid: ImageGrid, stride: int = 1) -> np.ndarray:
    """Pixel centres (every ``stride``-th) where the shape's bounding disc fits in the domain."""
    ix, iy = np.meshgrid(np.arange(0, grid.n_x, stride), np.arange(0, grid.n_y, stride))
    pts = grid.center(ix.ravel(), iy.ravel())
    return pts[grid.contains(pts, margin=shape.radius - 1e-12)]


def disc_radius_for_pixels(target: int, grid: ImageGrid) -> float:
    """Disc radius whose pixel-centred raster covers the pixel count nearest ``target``.

    The returned radius lies midway between two consecutive distinct
    pixel-centre distances, so the raster count is insensitive to rounding.
    """
    if target < 1:
        raise ValueError("target pixel count must be >= 1")
    span = int(math.ceil(math.sqrt(target))) + 2
    k = np.arange(-span, span + 1)
    kx, ky = np.meshgrid(k * grid.dx, k * grid.dy)
    d2 = np.sort((kx ** 2 + ky ** 2).ravel())
    levels, counts = np.unique(d2, return_counts=True)
    cum = np.cumsum(counts)
    best = int(np.argmin(np.abs(cum - target)))
    upper = levels[best + 1] if best + 1 < levels.size else levels[best] * 1.1 + 1e-12
    return 0.5 * (math.sqrt(levels[best]) + math.sqrt(upper))


@dataclass(frozen=True, eq=False)
class Dictionary:
    """Sparse ``n x p`` matrix whose columns are rasterised shape copies.

    Attributes
    ----------
    matrix : scipy.sparse.csc_matrix
        The dictionary ``Psi``.
    shapes : tuple of ShapeSpec
        Shape classes, indexed by ``shape_index``.
    shape_index : ndarray of int, shape (p,)
        Shape class of each column.
    poses : tuple of Pose
        Pose of each column (the first pose, when several rasterise alike).
    """

    matrix: sp.csc_matrix
    shapes: tuple
    shape_index: np.ndarray
    poses: tuple
    grid: ImageGrid | None = None
    _supports: list = field(default=None, repr=False)

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    @property
    def p(self) -> int:
        return self.matrix.shape[1]

    @property
    def n_shapes(self) -> int:
        return len(self.shapes)

    def poses_per_shape(self) -> np.ndarray:
        return np.bincount(self.shape_index, minlength=self.n_shapes)

    def column(self, k: int) -> np.ndarray:
        return self.matrix[:, [k]].toarray().ravel()

    def support(self, k: int) -> np.ndarray:
        M = self.matrix
        return M.indices[M.indptr[k]:M.indptr[k + 1]]

    def apply(self, z) -> np.ndarray:
        return self.matrix @ np.asarray(z, dtype=float)

    def apply_adjoint(self, x) -> np.ndarray:
        return self.matrix.T @ np.asarray(x, dtype=float)

    def subset(self, columns) -> "Dictionary":
        """Dictionary restricted to ``columns`` (in the given order)."""
        cols = np.asarray(columns, dtype=np.int64)
        return Dictionary(self.matrix[:, cols].tocsc(), self.shapes, self.shape_index[cols],
                          tuple(self.poses[k] for k in cols), self.grid)

    def __len__(self):
        return self.p


def build_dictionary(shapes: Sequence[ShapeSpec], centers, rotations: Sequence[float],
                     grid: ImageGrid) -> Dictionary:
    """Enumerate every shape x rotation x centre placement on ``grid``.

    Column order is shape-major, then rotation, then centre in the order
    given. ``centers`` is either one ``(N, 2)`` array shared by all shapes
    or a list with one array per shape. Each centre ``c`` is turned into the
    pose ``(theta, -R(theta) c)``. Placements that cover no pixel are
    skipped, and a column whose raster equals an earlier one exactly is
    dropped (the earlier pose is kept).

    Raises
    ------
    EmptyDictionary
        If no column survives.
    """
    shapes = list(shapes)
    if not shapes:
        raise ValueError("need at least one shape")
    rotations = [float(t) for t in rotations]
    if not rotations:
        raise ValueError("need at least one rotation angle")
    if isinstance(centers, np.ndarray) and centers.ndim == 2:
        per_shape = [centers] * len(shapes)
    else:
        per_shape = [np.asarray(c, dtype=float).reshape(-1, 2) for c in centers]
        if len(per_shape) != len(shapes):
            raise ValueError("need one centre lattice per shape")
    if not any(len(c) for c in per_shape):
        raise ValueError("translation lattice is empty")

    seen = set()
    cols_idx, cols_val, owner, poses = [], [], [], []
    for si, shape in enumerate(shapes):
        for theta in rotations:
            for c in per_shape[si]:
                pose = Pose.centered_at(c, theta)
                idx, vals = _raster_support(shape, pose, grid)
                if idx.size == 0:
                    continue
                order = np.argsort(idx, kind="stable")
                idx, vals = idx[order], vals[order]
                key = (idx.tobytes(), vals.tobytes())
                if key in seen:
                    continue
                seen.add(key)
                cols_idx.append(idx)
                cols_val.append(vals)
                owner.append(si)
                poses.append(pose)
    if not cols_idx:
        raise EmptyDictionary("no placement produced a non-empty raster")
    indptr = np.concatenate([[0], np.cumsum([c.size for c in cols_idx])])
    M = sp.csc_matrix((np.concatenate(cols_val), np.concatenate(cols_idx), indptr),
                      shape=(grid.n, len(cols_idx)))
    return Dictionary(M, tuple(shapes), np.asarray(owner, dtype=np.int64), tuple(poses), grid)


@dataclass(frozen=True, eq=False)
class Phantom:
    x: np.ndarray
    z: np.ndarray
    columns: tuple

    @property
    def K(self) -> int:
        return len(self.columns)


def random_phantom(dictionary: Dictionary, K: int | None = None, rng_seed=None,
                   counts=None, max_restarts: int = 50) -> Phantom:
    """Pick ``K`` dictionary columns with pairwise disjoint supports.

    Each attempt scans the columns in a fresh random order and greedily keeps
    every column that does not touch an already kept one, stopping at ``K``.
    Attempts are repeated up to ``max_restarts`` times. ``counts`` optionally
    fixes how many copies of each shape class to draw (then ``K`` defaults to
    their sum).

    Raises
    ------
    PlacementInfeasible
        If no attempt collects ``K`` disjoint columns.
    """
    if counts is not None:
        counts = np.asarray(counts, dtype=np.int64)
        if counts.shape != (dictionary.n_shapes,) or (counts < 0).any():
            raise ValueError("counts needs one non-negative entry per shape class")
        if K is None:
            K = int(counts.sum())
        elif K != counts.sum():
            raise ValueError("K disagrees with sum(counts)")
    if K is None or K < 1:
        raise ValueError("K must be >= 1")
    rng = np.random.default_rng(rng_seed)
    M = dictionary.matrix
    owner = dictionary.shape_index
    for _ in range(max_restarts):
        taken = np.zeros(dictionary.n, dtype=bool)
        need = None if counts is None else counts.copy()
        chosen = []
        for k in rng.permutation(dictionary.p):
            if need is not None and need[owner[k]] == 0:
                continue
            supp = M.indices[M.indptr[k]:M.indptr[k + 1]]
            if taken[supp].any():
                continue
            taken[supp] = True
            chosen.append(int(k))
            if need is not None:
                need[owner[k]] -= 1
            if len(chosen) == K:
                z = np.zeros(dictionary.p)
                z[chosen] = 1.0
                return Phantom(dictionary.apply(z), z, tuple(chosen))
    raise PlacementInfeasible(f"could not place {K} disjoint shapes in {max_restarts} attempts")
