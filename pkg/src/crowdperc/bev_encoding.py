"""BEV grid geometry: grid specs, voxel/pillar assignment, world <-> heatmap mapping.

Cells are half-open: a point belongs to cell ``floor((p - min) / size)`` and the
upper range bound itself is outside the grid.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, Tuple

import numpy as np

DIVISION_TOL = 1e-6
DEFAULT_MAX_POINTS_PER_CELL = 32


class OutOfRange(ValueError):
    pass


@dataclass(frozen=True)
class GridSpec:
    x_range: Tuple[float, float]
    y_range: Tuple[float, float]
    z_range: Tuple[float, float]
    voxel_size: Tuple[float, float, float]
    dims: Tuple[int, int, int] = field(init=False)

    def __post_init__(self):
        ranges = []
        for name in ("x_range", "y_range", "z_range"):
            lo, hi = (float(v) for v in getattr(self, name))
            if not hi > lo:
                raise ValueError(f"{name} must have max > min, got {(lo, hi)}")
            object.__setattr__(self, name, (lo, hi))
            ranges.append((lo, hi))
        size = tuple(float(v) for v in self.voxel_size)
        if len(size) != 3 or min(size) <= 0:
            raise ValueError(f"voxel_size must be three positive numbers, got {self.voxel_size}")
        object.__setattr__(self, "voxel_size", size)
        dims = []
        for (lo, hi), d, axis in zip(ranges, size, "xyz"):
            exact = (hi - lo) / d
            n = int(round(exact))
            if n < 1 or abs(exact - n) > DIVISION_TOL:
                raise ValueError(f"{axis} extent {hi - lo} is not a whole number of {d} m cells ({exact})")
            dims.append(n)
        object.__setattr__(self, "dims", tuple(dims))

    @property
    def nx(self):
        return self.dims[0]

    @property
    def ny(self):
        return self.dims[1]

    @property
    def nz(self):
        return self.dims[2]

    @property
    def mins(self) -> np.ndarray:
        return np.array([self.x_range[0], self.y_range[0], self.z_range[0]])

    @property
    def maxs(self) -> np.ndarray:
        return np.array([self.x_range[1], self.y_range[1], self.z_range[1]])

    def level_shape(self, stride: float) -> Tuple[int, int]:
        """(H, W) = (rows along y, columns along x) of a BEV map at ``stride``."""
        return (int(math.ceil(self.ny / stride - DIVISION_TOL)),
                int(math.ceil(self.nx / stride - DIVISION_TOL)))

    def contains_bev(self, x, y) -> bool:
        return self.x_range[0] <= x < self.x_range[1] and self.y_range[0] <= y < self.y_range[1]

    def to_dict(self) -> dict:
        return {"x_range": list(self.x_range), "y_range": list(self.y_range),
                "z_range": list(self.z_range), "voxel_size": list(self.voxel_size)}

    @classmethod
    def from_dict(cls, d) -> "GridSpec":
        return cls(tuple(d["x_range"]), tuple(d["y_range"]), tuple(d["z_range"]), tuple(d["voxel_size"]))


def default_grid() -> GridSpec:
    """Detection range x [0, 30.72], y [-20.48, 20.48], z [-4, 1] with 0.12 x 0.16 x 0.2 m voxels."""
    return GridSpec((0.0, 30.72), (-20.48, 20.48), (-4.0, 1.0), (0.12, 0.16, 0.2))


@dataclass
class VoxelMap:
    """Sparse cell -> point-index assignment.

    ``cells`` maps (ix, iy, iz) (or (ix, iy) for pillars) to indices into the
    input cloud, in original point order.
    """

    cells: Dict[tuple, np.ndarray]
    num_points: int
    dropped_out_of_range: int
    dropped_over_cap: int

    def __len__(self):
        return len(self.cells)

    @property
    def num_assigned(self) -> int:
        return sum(len(v) for v in self.cells.values())


def _points_xyz(pc) -> np.ndarray:
    pts = pc.points if hasattr(pc, "points") else pc
    arr = np.asarray(pts, dtype=np.float64)
    if arr.size == 0:
        return np.empty((0, 3))
    return arr.reshape(len(arr), -1)[:, :3]


def _cell_indices(xyz: np.ndarray, g: GridSpec):
    mins, maxs = g.mins, g.maxs
    inside = np.all((xyz >= mins) & (xyz < maxs), axis=1)
    idx = np.floor((xyz[inside] - mins) / np.array(g.voxel_size)).astype(np.int64)
    # values just below max can round up to n; they are inside by the comparison above
    idx = np.minimum(idx, np.array(g.dims) - 1)
    return inside, idx


def _group(keys: np.ndarray, point_ids: np.ndarray, cap, total, dropped):
    cells = {}
    over = 0
    if len(keys):
        order = np.lexsort(keys.T[::-1])
        sk = keys[order]
        boundaries = np.flatnonzero(np.any(np.diff(sk, axis=0) != 0, axis=1)) + 1
        starts = np.concatenate([[0], boundaries])
        ends = np.concatenate([boundaries, [len(sk)]])
        for s, e in zip(starts, ends):
            members = point_ids[order[s:e]]
            if cap is not None and len(members) > cap:
                over += len(members) - cap
                members = members[:cap]
            cells[tuple(int(v) for v in sk[s])] = members
    return VoxelMap(cells, total, dropped, over)


def voxelize(pc, g: GridSpec, max_points_per_cell=DEFAULT_MAX_POINTS_PER_CELL) -> VoxelMap:
    """Assign every in-range point to one (ix, iy, iz) cell.

    ``max_points_per_cell=None`` disables the cap; otherwise the first points in
    cloud order are kept.
    """
    xyz = _points_xyz(pc)
    inside, idx = _cell_indices(xyz, g)
    point_ids = np.flatnonzero(inside)
    # lexsort is stable, so members stay in original point order
    return _group(idx, point_ids, max_points_per_cell, len(xyz), int((~inside).sum()))


def pillarize(pc, g: GridSpec, max_points_per_cell=DEFAULT_MAX_POINTS_PER_CELL) -> VoxelMap:
    """Like :func:`voxelize` with each cell spanning the full z range."""
    xyz = _points_xyz(pc)
    inside, idx = _cell_indices(xyz, g)
    point_ids = np.flatnonzero(inside)
    return _group(idx[:, :2], point_ids, max_points_per_cell, len(xyz), int((~inside).sum()))


def _strides(stride):
    if np.ndim(stride) == 0:
        return float(stride), float(stride)
    sx, sy = stride
    return float(sx), float(sy)


def world_to_heatmap(xy, g: GridSpec, stride=1.0) -> np.ndarray:
    """Continuous map coordinates (u, v) for BEV world points.

    ``u`` runs along x and ``v`` along y; the grid min corner maps to (0, 0) and
    cell ``(i, j)`` spans [i, i+1) x [j, j+1). Raises :class:`OutOfRange` for
    points outside the half-open grid.
    """
    xy = np.asarray(xy, dtype=np.float64)
    pts = xy.reshape(-1, 2)
    lo = np.array([g.x_range[0], g.y_range[0]])
    hi = np.array([g.x_range[1], g.y_range[1]])
    bad = ~np.all((pts >= lo) & (pts < hi), axis=1)
    if bad.any():
        raise OutOfRange(f"point {pts[np.flatnonzero(bad)[0]].tolist()} outside grid BEV range")
    sx, sy = _strides(stride)
    scale = np.array([g.voxel_size[0] * sx, g.voxel_size[1] * sy])
    return ((pts - lo) / scale).reshape(xy.shape)


def heatmap_to_world(uv, g: GridSpec, stride=1.0) -> np.ndarray:
    """Inverse of :func:`world_to_heatmap` (no range check)."""
    uv = np.asarray(uv, dtype=np.float64)
    sx, sy = _strides(stride)
    lo = np.array([g.x_range[0], g.y_range[0]])
    scale = np.array([g.voxel_size[0] * sx, g.voxel_size[1] * sy])
    return (uv.reshape(-1, 2) * scale + lo).reshape(uv.shape)
