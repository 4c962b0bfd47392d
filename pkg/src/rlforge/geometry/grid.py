"""Axis-aligned world raster specification."""
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class GridSpec:
    """Geometry of an axis-aligned raster on the ground plane.

    ``origin`` is the lower-left corner of cell ``[0, 0]``; row index grows
    with world ``y`` and column index with world ``x``.
    """

    origin: tuple
    cell_size: float
    shape: tuple  # (ny, nx)

    def __post_init__(self):
        if not self.cell_size > 0:
            raise ValueError("cell_size must be positive")
        ny, nx = self.shape
        if ny < 1 or nx < 1:
            raise ValueError(f"degenerate grid shape {self.shape}")

    @classmethod
    def from_bounds(cls, x_min, x_max, y_min, y_max, cell_size) -> "GridSpec":
        nx = int(round((x_max - x_min) / cell_size))
        ny = int(round((y_max - y_min) / cell_size))
        return cls((float(x_min), float(y_min)), float(cell_size), (ny, nx))

    @property
    def bounds(self):
        """``(x_min, x_max, y_min, y_max)`` of the outer cell edges."""
        x0, y0 = self.origin
        ny, nx = self.shape
        return x0, x0 + nx * self.cell_size, y0, y0 + ny * self.cell_size

    def x_centers(self) -> np.ndarray:
        return self.origin[0] + (np.arange(self.shape[1]) + 0.5) * self.cell_size

    def y_centers(self) -> np.ndarray:
        return self.origin[1] + (np.arange(self.shape[0]) + 0.5) * self.cell_size

    def cell_centers(self):
        """Meshgrids ``(X, Y)`` of cell centers, shape ``self.shape``."""
        return np.meshgrid(self.x_centers(), self.y_centers())

    def world_to_cell(self, xy) -> np.ndarray:
        """Integer ``(row, col)`` of the cells containing the points."""
        xy = np.asarray(xy, dtype=float).reshape(-1, 2)
        col = np.floor((xy[:, 0] - self.origin[0]) / self.cell_size).astype(int)
        row = np.floor((xy[:, 1] - self.origin[1]) / self.cell_size).astype(int)
        return np.column_stack([row, col])

    def to_dict(self) -> dict:
        return {"origin": list(self.origin), "cell_size": self.cell_size, "shape": list(self.shape)}
