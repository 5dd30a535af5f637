"""Directed graphs and treated-degree computation for interference experiments."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Network:
    """Directed graph on n units; adjacency[i, j] = 1 means an edge i -> j."""

    adjacency: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.adjacency)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError(f"adjacency must be square, got shape {a.shape}")
        if not np.isin(a, (0, 1)).all():
            raise ValueError("adjacency entries must be 0 or 1")
        if np.diagonal(a).any():
            raise ValueError("self-loops are not allowed")
        object.__setattr__(self, "adjacency", a.astype(np.int64))

    @property
    def n(self) -> int:
        return self.adjacency.shape[0]

    @property
    def in_degrees(self) -> np.ndarray:
        return self.adjacency.sum(axis=0)

    @property
    def out_degrees(self) -> np.ndarray:
        return self.adjacency.sum(axis=1)

    def to_edge_list(self) -> str:
        """Serialize as one ``i j`` line per edge, 0-indexed."""
        src, dst = np.nonzero(self.adjacency)
        return "\n".join(f"{i} {j}" for i, j in zip(src, dst))

    @classmethod
    def from_edge_list(cls, text: str, n: int) -> "Network":
        a = np.zeros((n, n), dtype=np.int64)
        for line in text.splitlines():
            line = line.strip()
            if not line:
                continue
            i, j = (int(tok) for tok in line.split())
            a[i, j] = 1
        return cls(a)


def gen_k_regular_directed(n: int, k: int, seed: int) -> Network:
    """Random directed graph where every unit has in-degree exactly k.

    Each unit independently selects k distinct in-neighbors uniformly at
    random; out-degrees are left irregular.
    """
    if not 0 < k < n:
        raise ValueError(f"need 0 < k < n, got k={k}, n={n}")
    rng = np.random.default_rng(seed)
    a = np.zeros((n, n), dtype=np.int64)
    for i in range(n):
        others = np.concatenate([np.arange(i), np.arange(i + 1, n)])
        sources = rng.choice(others, size=k, replace=False)
        a[sources, i] = 1
    return Network(a)


def gen_erdos_renyi_directed(n: int, p_edge: float, seed: int) -> Network:
    """Directed Erdos-Renyi graph: each ordered pair gets an edge independently."""
    if not 0 <= p_edge <= 1:
        raise ValueError(f"edge probability must be in [0, 1], got {p_edge}")
    rng = np.random.default_rng(seed)
    a = (rng.random((n, n)) < p_edge).astype(np.int64)
    np.fill_diagonal(a, 0)
    return Network(a)


def treated_degree(network: Network, allocation) -> np.ndarray:
    """Number of treated in-neighbors of every unit: A^T z."""
    z = np.asarray(allocation)
    if z.shape[0] != network.n:
        raise ValueError(f"allocation length {z.shape[0]} != network size {network.n}")
    return network.adjacency.T @ z
