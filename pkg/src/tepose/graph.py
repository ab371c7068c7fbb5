"""Skeleton graphs and the multi-scale k-hop adjacency family.

A :class:`SkeletonGraph` is an undirected joint graph. From its hop
distances we build, for each scale ``k``, the binary matrix whose
``(m, n)`` entry is 1 when joints ``m`` and ``n`` are exactly ``k`` hops
apart or ``m == n``, then symmetrically normalize it. The temporal
variant tiles a scale-``k`` matrix into a ``tau x tau`` block matrix before
normalizing, which couples joints across neighbouring frames.
"""
from __future__ import annotations

import json
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

# Sentinel for joint pairs with no connecting path. Never equal to a finite k.
UNREACHABLE = -1


@dataclass(frozen=True)
class SkeletonGraph:
    num_joints: int
    edges: tuple[tuple[int, int], ...] = field(default_factory=tuple)

    def __post_init__(self):
        if self.num_joints < 1:
            raise ValueError("a skeleton graph needs at least one joint")
        seen = set()
        norm = []
        for a, b in self.edges:
            a, b = int(a), int(b)
            if not (0 <= a < self.num_joints and 0 <= b < self.num_joints):
                raise ValueError(f"edge ({a}, {b}) out of range for {self.num_joints} joints")
            if a == b:
                raise ValueError(f"self-loop edge on joint {a}")
            key = (min(a, b), max(a, b))
            if key in seen:
                raise ValueError(f"duplicate edge {key}")
            seen.add(key)
            norm.append((a, b))
        object.__setattr__(self, "edges", tuple(norm))

    def neighbors(self) -> list[list[int]]:
        nbrs: list[list[int]] = [[] for _ in range(self.num_joints)]
        for a, b in self.edges:
            nbrs[a].append(b)
            nbrs[b].append(a)
        return nbrs

    def to_json(self) -> str:
        return json.dumps({"num_joints": self.num_joints, "edges": [list(e) for e in self.edges]})

    @classmethod
    def from_json(cls, text: str) -> "SkeletonGraph":
        doc = json.loads(text)
        return cls(int(doc["num_joints"]), tuple(tuple(e) for e in doc["edges"]))

    @classmethod
    def load(cls, path) -> "SkeletonGraph":
        return cls.from_json(Path(path).read_text())


# Default 14-joint tree: pelvis root, a neck joint standing in for spine and
# head, two 3-joint arms hanging off the neck and two 3-joint legs off the pelvis.
DEFAULT_JOINT_NAMES = (
    "pelvis", "neck",
    "l_shoulder", "l_elbow", "l_wrist",
    "r_shoulder", "r_elbow", "r_wrist",
    "l_hip", "l_knee", "l_ankle",
    "r_hip", "r_knee", "r_ankle",
)
DEFAULT_PARENTS = (-1, 0, 1, 2, 3, 1, 5, 6, 0, 8, 9, 0, 11, 12)


def default_skeleton() -> SkeletonGraph:
    """The 14-joint desk-scale skeleton (pelvis root)."""
    edges = tuple((j, p) for j, p in enumerate(DEFAULT_PARENTS) if p >= 0)
    return SkeletonGraph(len(DEFAULT_PARENTS), edges)


def hop_distance(graph: SkeletonGraph) -> np.ndarray:
    """All-pairs shortest hop counts by breadth-first search.

    Unreachable pairs hold :data:`UNREACHABLE`.
    """
    n = graph.num_joints
    nbrs = graph.neighbors()
    dist = np.full((n, n), UNREACHABLE, dtype=np.int64)
    for src in range(n):
        dist[src, src] = 0
        queue = deque([src])
        while queue:
            u = queue.popleft()
            for v in nbrs[u]:
                if dist[src, v] == UNREACHABLE:
                    dist[src, v] = dist[src, u] + 1
                    queue.append(v)
    return dist


def k_adjacency(dist: np.ndarray, k: int) -> np.ndarray:
    """Binary matrix linking pairs exactly ``k`` hops apart, plus self-loops."""
    if k < 0:
        raise ValueError("scale k must be non-negative")
    dist = np.asarray(dist)
    adj = (dist == k).astype(np.float64)
    np.fill_diagonal(adj, 1.0)
    return adj


def normalize_adjacency(adj: np.ndarray) -> np.ndarray:
    """Symmetric normalization ``D^-1/2 A D^-1/2`` with ``D`` the row-sum degree."""
    adj = np.asarray(adj, dtype=np.float64)
    deg = adj.sum(axis=1)
    if np.any(deg <= 0):
        raise ValueError("adjacency has a row with zero degree")
    inv_sqrt = 1.0 / np.sqrt(deg)
    return inv_sqrt[:, None] * adj * inv_sqrt[None, :]


def tile_adjacency(adj_k: np.ndarray, tau: int) -> np.ndarray:
    """Tile ``adj_k`` into a ``tau x tau`` block matrix and normalize it.

    The degree is taken from the tiled matrix itself, not from the
    per-block normalized matrices.
    """
    if tau < 1:
        raise ValueError("window tau must be >= 1")
    return normalize_adjacency(np.tile(np.asarray(adj_k, dtype=np.float64), (tau, tau)))


@dataclass(frozen=True)
class AdjacencySet:
    scales: tuple[np.ndarray, ...]
    normalized: tuple[np.ndarray, ...]

    @property
    def num_scales(self) -> int:
        return len(self.scales)

    def stacked(self) -> np.ndarray:
        """Normalized matrices as one ``(K+1, N, N)`` array."""
        return np.stack(self.normalized)

    def tiled(self, tau: int) -> np.ndarray:
        """Normalized tiled matrices as one ``(K+1, tau*N, tau*N)`` array."""
        return np.stack([tile_adjacency(a, tau) for a in self.scales])


def build_adjacency_set(graph: SkeletonGraph, max_scale: int) -> AdjacencySet:
    """Scales ``k = 0 .. max_scale`` for ``graph``."""
    dist = hop_distance(graph)
    scales = tuple(k_adjacency(dist, k) for k in range(max_scale + 1))
    return AdjacencySet(scales, tuple(normalize_adjacency(a) for a in scales))
