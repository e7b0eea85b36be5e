"""Per-frame corner observations and their JSON Lines file format.

One frame per line: ``{"frame": int, "corners": [[id, u, v], ...]}``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

__all__ = ["Frame", "ObservationSet"]


@dataclass(eq=False)
class Frame:
    frame_id: int
    ids: np.ndarray
    pixels: np.ndarray

    def __post_init__(self):
        self.frame_id = int(self.frame_id)
        self.ids = np.asarray(self.ids, dtype=np.int64).reshape(-1)
        self.pixels = np.asarray(self.pixels, dtype=float).reshape(-1, 2)
        if len(self.ids) != len(self.pixels):
            raise ValueError(f"frame {self.frame_id}: {len(self.ids)} ids but {len(self.pixels)} pixels")

    def __len__(self):
        return len(self.ids)

    def subset(self, keep: np.ndarray) -> "Frame":
        return Frame(self.frame_id, self.ids[keep], self.pixels[keep])


@dataclass(eq=False)
class ObservationSet:
    frames: list[Frame] = field(default_factory=list)

    def __len__(self):
        return len(self.frames)

    def __iter__(self):
        return iter(self.frames)

    def __eq__(self, other):
        if not isinstance(other, ObservationSet) or len(self) != len(other):
            return NotImplemented if not isinstance(other, ObservationSet) else False
        return all(
            a.frame_id == b.frame_id and np.array_equal(a.ids, b.ids) and np.array_equal(a.pixels, b.pixels)
            for a, b in zip(self.frames, other.frames)
        )

    @property
    def n_corners(self) -> int:
        return sum(len(f) for f in self.frames)

    def frame_ids(self) -> list[int]:
        return [f.frame_id for f in self.frames]

    def with_min_corners(self, n: int = 4) -> "ObservationSet":
        return ObservationSet([f for f in self.frames if len(f) >= n])

    def check_ids(self, n_points: int) -> None:
        for f in self.frames:
            if len(f) and (f.ids.min() < 0 or f.ids.max() >= n_points):
                raise ValueError(f"frame {f.frame_id} references a point id outside the target")

    def to_jsonl(self) -> str:
        lines = []
        for f in self.frames:
            corners = [[int(i), float(u), float(v)] for i, (u, v) in zip(f.ids, f.pixels)]
            lines.append(json.dumps({"frame": f.frame_id, "corners": corners}))
        return "\n".join(lines) + ("\n" if lines else "")

    @classmethod
    def from_jsonl(cls, text: str) -> "ObservationSet":
        frames = []
        for lineno, line in enumerate(text.splitlines(), start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                corners = rec["corners"]
                ids = [int(c[0]) for c in corners]
                pix = [[float(c[1]), float(c[2])] for c in corners]
                frames.append(Frame(int(rec["frame"]), ids, np.array(pix).reshape(-1, 2)))
            except (ValueError, KeyError, TypeError, IndexError) as exc:
                raise ValueError(f"malformed observation record on line {lineno}: {exc}") from exc
        return cls(frames)
