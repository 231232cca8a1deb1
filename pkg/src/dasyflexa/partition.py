"""Block partition of the decision vector and the agent dependency graph.

Agents and blocks are indexed from 0 inside the package. Configuration
files and the CLI use 1-based ids; conversion happens in :mod:`dasyflexa.config`.
"""

from dataclasses import dataclass, field

import numpy as np

from ._validation import check_positive_int
from .exceptions import InvalidArgument


@dataclass(frozen=True)
class BlockPartition:
    """Sizes and offsets of the blocks ``x_1, ..., x_N``."""

    block_sizes: tuple
    block_offsets: tuple = field(init=False)
    total_dim: int = field(init=False)

    def __post_init__(self):
        sizes = tuple(int(s) for s in self.block_sizes)
        offsets = tuple(int(o) for o in np.concatenate(([0], np.cumsum(sizes)[:-1])))
        object.__setattr__(self, "block_sizes", sizes)
        object.__setattr__(self, "block_offsets", offsets)
        object.__setattr__(self, "total_dim", int(sum(sizes)))

    @property
    def n_blocks(self):
        return len(self.block_sizes)

    def block_slice(self, i):
        start = self.block_offsets[i]
        return slice(start, start + self.block_sizes[i])

    def block(self, x, i):
        """View of block ``i`` of the full vector ``x``."""
        return x[self.block_slice(i)]

    def split(self, x):
        return [x[self.block_slice(i)] for i in range(self.n_blocks)]


def make_partition(block_sizes):
    """Build a :class:`BlockPartition` from a list of positive block sizes.

    Examples
    --------
    >>> p = make_partition([2, 3, 1])
    >>> p.total_dim, p.block_offsets
    (6, (0, 2, 5))
    """
    sizes = list(block_sizes)
    if not sizes:
        raise InvalidArgument("a partition needs at least one block")
    for s in sizes:
        check_positive_int(s, "block size")
    return BlockPartition(tuple(sizes))


@dataclass(frozen=True)
class DependencyGraph:
    """Neighbor sets ``N_i`` (blocks touched by ``f_i``) and their transpose.

    ``reverse_sets[i]`` lists the agents ``j`` whose local function depends on
    block ``i``; those are the agents that send ``i`` a partial gradient.
    Both are stored as ascending tuples.
    """

    neighbor_sets: tuple
    reverse_sets: tuple

    @property
    def n_agents(self):
        return len(self.neighbor_sets)

    def rho(self):
        """Largest neighbor-set size."""
        return max(len(s) for s in self.neighbor_sets)

    def edges(self):
        return [(i, j) for i, nbrs in enumerate(self.neighbor_sets) for j in nbrs]


def make_dependency_graph(n_agents, edges):
    """Build a dependency graph from ``(i, j)`` pairs meaning ``j in N_i``.

    Self-loops are added for every agent.
    """
    n_agents = check_positive_int(n_agents, "n_agents")
    nbrs = [{i} for i in range(n_agents)]
    for i, j in edges:
        for idx in (i, j):
            if not 0 <= idx < n_agents:
                raise InvalidArgument(
                    f"agent index {idx} out of range for {n_agents} agents")
        nbrs[i].add(j)
    rev = [set() for _ in range(n_agents)]
    for i, s in enumerate(nbrs):
        for j in s:
            rev[j].add(i)
    return DependencyGraph(
        neighbor_sets=tuple(tuple(sorted(s)) for s in nbrs),
        reverse_sets=tuple(tuple(sorted(s)) for s in rev),
    )


def neighborhood_indices(i, partition, graph):
    """Positions in the full vector of the stacked neighborhood ``x_{N_i}``."""
    return np.concatenate([
        np.arange(partition.block_offsets[j],
                  partition.block_offsets[j] + partition.block_sizes[j])
        for j in graph.neighbor_sets[i]
    ])


def gather_neighborhood(x, i, partition, graph):
    """Stack the blocks indexed by ``N_i`` in ascending agent order."""
    x = np.asarray(x, dtype=float)
    if x.shape != (partition.total_dim,):
        raise InvalidArgument(
            f"x must have length {partition.total_dim}, got shape {x.shape}")
    return np.concatenate([partition.block(x, j) for j in graph.neighbor_sets[i]])


def scatter_neighborhood(x, x_nbhd, i, partition, graph):
    """Write a stacked neighborhood back into a copy of ``x``."""
    out = np.array(x, dtype=float, copy=True)
    idx = neighborhood_indices(i, partition, graph)
    if x_nbhd.shape != idx.shape:
        raise InvalidArgument(
            f"neighborhood of agent {i} has length {idx.size}, got {x_nbhd.shape}")
    out[idx] = x_nbhd
    return out
