from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable, List, Sequence

import numpy as np


class DiagramError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class PersistenceDiagram:
    """Multiset of (birth, death) pairs in one homology dimension.

    ``pairs`` is a k x 2 float array sorted lexicographically; infinite bars
    carry ``death = inf``.
    """

    dimension: int
    pairs: np.ndarray

    def __post_init__(self):
        if int(self.dimension) < 0:
            raise DiagramError("dimension must be >= 0")
        p = np.array(self.pairs, dtype=float).reshape(-1, 2)
        if np.any(np.isnan(p)):
            raise DiagramError("diagram contains NaN")
        if np.any(p[:, 0] > p[:, 1]):
            raise DiagramError("every pair must satisfy birth <= death")
        if np.any(~np.isfinite(p[:, 0])):
            raise DiagramError("births must be finite")
        if len(p):
            p = p[np.lexsort((p[:, 1], p[:, 0]))]
        p.setflags(write=False)
        object.__setattr__(self, "pairs", p)

    def __len__(self):
        return len(self.pairs)

    @property
    def finite(self) -> np.ndarray:
        return self.pairs[np.isfinite(self.pairs[:, 1])]

    @property
    def essential(self) -> np.ndarray:
        """Births of the infinite bars, sorted."""
        return np.sort(self.pairs[~np.isfinite(self.pairs[:, 1]), 0])

    def __eq__(self, other):
        if not isinstance(other, PersistenceDiagram):
            return NotImplemented
        return self.dimension == other.dimension and np.array_equal(self.pairs, other.pairs)

    def __repr__(self):
        return f"PersistenceDiagram(dim={self.dimension}, n={len(self)})"


def diagrams_to_json(diagrams: Iterable[PersistenceDiagram]) -> str:
    rows = []
    for dgm in diagrams:
        for b, d in dgm.pairs:
            rows.append({"dim": dgm.dimension, "birth": float(b), "death": "inf" if np.isinf(d) else float(d)})
    return json.dumps(rows)


def diagrams_from_json(text: str, dimensions: Sequence[int] = ()) -> List[PersistenceDiagram]:
    rows = json.loads(text)
    dims = sorted(set(dimensions) | {int(r["dim"]) for r in rows})
    out = []
    for dim in dims:
        pairs = [
            (float(r["birth"]), np.inf if r["death"] == "inf" else float(r["death"]))
            for r in rows
            if int(r["dim"]) == dim
        ]
        out.append(PersistenceDiagram(dim, np.array(pairs, dtype=float).reshape(-1, 2)))
    return out
