"""Triangle meshes: container, closedness audit, OBJ export with label sidecar."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass
from pathlib import Path

import numpy as np


@dataclass
class TriMesh:
    vertices: np.ndarray  # (V, 3) float64
    faces: np.ndarray     # (F, 3) int64, indices into vertices

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        self.faces = np.asarray(self.faces, dtype=np.int64).reshape(-1, 3)
        if len(self.faces) and self.faces.max() >= len(self.vertices):
            raise ValueError("face index out of range")

    @property
    def is_empty(self) -> bool:
        return len(self.faces) == 0

    def edge_counts(self) -> Counter:
        """Multiplicity of every undirected edge over all faces."""
        edges = Counter()
        for a, b, c in self.faces:
            for u, v in ((a, b), (b, c), (c, a)):
                edges[(min(u, v), max(u, v))] += 1
        return edges

    def is_closed(self) -> bool:
        """True when every edge is shared by exactly two triangles."""
        if self.is_empty:
            return False
        return all(n == 2 for n in self.edge_counts().values())

    def triangle_arrays(self):
        """(v0, e1, e2) arrays for ray-intersection kernels."""
        v0 = self.vertices[self.faces[:, 0]]
        e1 = self.vertices[self.faces[:, 1]] - v0
        e2 = self.vertices[self.faces[:, 2]] - v0
        return (np.ascontiguousarray(v0), np.ascontiguousarray(e1),
                np.ascontiguousarray(e2))


def save_obj(mesh: TriMesh, path, labels: np.ndarray | None = None) -> None:
    """Write a Wavefront OBJ; optional per-vertex integer labels go to a
    sidecar file (same path + '.labels', one integer per vertex line)."""
    path = Path(path)
    with open(path, "w") as fh:
        for v in mesh.vertices:
            fh.write(f"v {v[0]:.9g} {v[1]:.9g} {v[2]:.9g}\n")
        for f in mesh.faces:
            fh.write(f"f {f[0] + 1} {f[1] + 1} {f[2] + 1}\n")
    if labels is not None:
        labels = np.asarray(labels).reshape(-1)
        if len(labels) != len(mesh.vertices):
            raise ValueError("one label per vertex required")
        with open(path.with_suffix(path.suffix + ".labels"), "w") as fh:
            for val in labels:
                fh.write(f"{int(val)}\n")


def load_obj(path) -> TriMesh:
    vertices = []
    faces = []
    with open(path) as fh:
        for line in fh:
            parts = line.split()
            if not parts:
                continue
            if parts[0] == "v":
                vertices.append([float(x) for x in parts[1:4]])
            elif parts[0] == "f":
                idx = [int(tok.split("/")[0]) - 1 for tok in parts[1:4]]
                faces.append(idx)
    return TriMesh(vertices=np.array(vertices, dtype=np.float64).reshape(-1, 3),
                   faces=np.array(faces, dtype=np.int64).reshape(-1, 3))
