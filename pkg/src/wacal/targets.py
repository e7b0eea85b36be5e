"""Point layouts of planar calibration targets (geometry only).

All points lie on the target plane ``z = 0`` and carry dense integer ids.
AprilGrid ids follow ``4 * (row * cols + col) + corner`` with corners
ordered bottom-left, bottom-right, top-right, top-left.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = ["TargetLayout", "TARGET_KINDS", "make_target"]

TARGET_KINDS = ("Checkerboard", "AprilGrid", "CircleGridSym", "CircleGridAsym")
_ALIASES = {k.lower(): k for k in TARGET_KINDS}


@dataclass(frozen=True, eq=False)
class TargetLayout:
    kind: str
    rows: int
    cols: int
    spacing: float
    tag_ratio: float | None = None
    points: np.ndarray = field(default=None, repr=False)

    @property
    def ids(self) -> np.ndarray:
        return np.arange(len(self.points))

    def __len__(self) -> int:
        return len(self.points)

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.points.min(axis=0) + self.points.max(axis=0))

    def to_dict(self) -> dict:
        out = {"kind": self.kind, "rows": self.rows, "cols": self.cols, "spacing_m": self.spacing}
        if self.tag_ratio is not None:
            out["tag_ratio"] = self.tag_ratio
        return out

    @classmethod
    def from_dict(cls, d) -> "TargetLayout":
        return make_target(d["kind"], int(d["rows"]), int(d["cols"]), float(d["spacing_m"]),
                           d.get("tag_ratio"))

    def points_list(self) -> list[list[float]]:
        """``[[id, x, y, z], ...]`` for export."""
        return [[int(i), *map(float, p)] for i, p in enumerate(self.points)]


def make_target(kind: str, rows: int, cols: int, spacing: float,
                tag_ratio: float | None = None) -> TargetLayout:
    """Build a target layout.

    Checkerboard ``rows x cols`` squares gives the ``(rows-1)(cols-1)``
    interior corners; AprilGrid ``rows x cols`` tags gives four corners per
    tag, tag side ``spacing`` and gap ``spacing * tag_ratio``; circle grids
    give one center per circle (asymmetric: odd rows shifted by half a
    spacing, row pitch half a spacing).
    """
    try:
        kind = _ALIASES[str(kind).lower()]
    except KeyError:
        raise ValueError(f"unknown target kind {kind!r}") from None
    if rows < 2 or cols < 2:
        raise ValueError("targets need at least 2 rows and 2 columns")
    if not spacing > 0:
        raise ValueError("spacing must be positive")
    s = float(spacing)
    if kind == "Checkerboard":
        r, c = np.mgrid[0:rows - 1, 0:cols - 1]
        xy = np.column_stack([c.ravel() * s, r.ravel() * s])
    elif kind == "AprilGrid":
        if tag_ratio is None or not 0 < tag_ratio < 1:
            raise ValueError("AprilGrid needs 0 < tag_ratio < 1")
        pitch = s * (1 + tag_ratio)
        r, c = np.mgrid[0:rows, 0:cols]
        origin = np.column_stack([c.ravel() * pitch, r.ravel() * pitch])
        offsets = np.array([[0, 0], [s, 0], [s, s], [0, s]], dtype=float)
        xy = (origin[:, None, :] + offsets[None]).reshape(-1, 2)
    elif kind == "CircleGridSym":
        r, c = np.mgrid[0:rows, 0:cols]
        xy = np.column_stack([c.ravel() * s, r.ravel() * s])
    else:
        r, c = np.mgrid[0:rows, 0:cols]
        r, c = r.ravel(), c.ravel()
        xy = np.column_stack([c * s + (r % 2) * s / 2, r * s / 2])
    pts = np.column_stack([xy, np.zeros(len(xy))])
    pts.setflags(write=False)
    return TargetLayout(kind, int(rows), int(cols), s,
                        float(tag_ratio) if kind == "AprilGrid" else None, pts)
