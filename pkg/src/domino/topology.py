"""Tree-shaped oscillator networks: construction, validation, leaf partition.

Nodes are indexed 1..N throughout; conversion to 0-based happens only at
array boundaries inside other modules.
"""

from __future__ import annotations

import heapq
import json
from dataclasses import dataclass, field

import numpy as np


class InvalidSequenceError(ValueError):
    """A Pruefer sequence entry lies outside [1, n]."""


class InvalidSizeError(ValueError):
    """Requested tree size is too small for a Pruefer decode."""


class InvalidNetworkError(ValueError):
    """Edge list / frequency data do not describe a valid network."""


def validate_tree(edges, n):
    """True iff `edges` form a connected acyclic graph on n nodes.

    Never raises: malformed input (out-of-range indices, self-edges,
    duplicates, wrong edge count) simply returns False.
    """
    if n < 1:
        return False
    edges = list(edges)
    if len(edges) != n - 1:
        return False
    seen = set()
    adj = [[] for _ in range(n + 1)]
    for e in edges:
        if len(e) != 2:
            return False
        a, b = int(e[0]), int(e[1])
        if not (1 <= a <= n and 1 <= b <= n) or a == b:
            return False
        key = (min(a, b), max(a, b))
        if key in seen:
            return False
        seen.add(key)
        adj[a].append(b)
        adj[b].append(a)
    # n-1 distinct edges + connectivity => acyclic
    stack, visited = [1], {1}
    while stack:
        for nb in adj[stack.pop()]:
            if nb not in visited:
                visited.add(nb)
                stack.append(nb)
    return len(visited) == n


def decode_pruefer(seq, n):
    """Decode a Pruefer sequence of length n-2 into the n-1 edges of a tree.

    At each stage the smallest-index leaf (degree one, not appearing later
    in the remaining sequence) is joined to the head of the sequence; the
    final edge joins the last two remaining nodes.
    """
    if n < 2:
        raise InvalidSizeError(f"need n >= 2 to decode a tree, got n={n}")
    seq = [int(s) for s in seq]
    if len(seq) != n - 2:
        raise InvalidSequenceError(
            f"sequence length {len(seq)} does not match n-2 = {n - 2}")
    for s in seq:
        if not 1 <= s <= n:
            raise InvalidSequenceError(f"sequence entry {s} outside [1, {n}]")

    degree = np.ones(n + 1, dtype=np.int64)
    for s in seq:
        degree[s] += 1

    edges = []
    # pointer scan keeps the decode O(n): `ptr` only moves forward, and a
    # node freed below the pointer is used immediately via `leaf`
    ptr = 1
    while degree[ptr] != 1:
        ptr += 1
    leaf = ptr
    for s in seq:
        edges.append((leaf, s))
        degree[s] -= 1
        if degree[s] == 1 and s < ptr:
            leaf = s
        else:
            ptr += 1
            while degree[ptr] != 1:
                ptr += 1
            leaf = ptr
    # node n is never consumed by the scan, so it is always one endpoint
    # of the closing edge
    edges.append((leaf, n))
    return edges


def encode_pruefer(edges, n):
    """Encode a tree back into its Pruefer sequence (inverse of decode)."""
    if not validate_tree(edges, n):
        raise InvalidNetworkError("edges do not form a tree")
    if n == 2:
        return []
    adj = [set() for _ in range(n + 1)]
    for a, b in edges:
        adj[a].add(b)
        adj[b].add(a)
    leaves = [j for j in range(1, n + 1) if len(adj[j]) == 1]
    heapq.heapify(leaves)
    seq = []
    for _ in range(n - 2):
        leaf = heapq.heappop(leaves)
        parent = adj[leaf].pop()
        adj[parent].discard(leaf)
        seq.append(parent)
        if len(adj[parent]) == 1:
            heapq.heappush(leaves, parent)
    return seq


@dataclass(frozen=True)
class OscillatorNetwork:
    """Static description of a coupled-oscillator tree.

    n_nodes:     number of oscillators N
    edges:       N-1 unordered pairs of 1-based node indices
    frequencies: per-node frequency in units of the base frequency
    coupling:    common coupling strength for every edge (same units)

    An edge-free network (`edges=()`, coupling irrelevant and forced to 0)
    models a collection of independent oscillators; every node then counts
    as a leaf and is individually actuated.
    """

    n_nodes: int
    edges: tuple = ()
    frequencies: np.ndarray = field(default=None)
    coupling: float = 0.0

    def __post_init__(self):
        n = int(self.n_nodes)
        if n < 1:
            raise InvalidNetworkError(f"n_nodes must be >= 1, got {n}")
        edges = tuple((int(a), int(b)) for a, b in self.edges)
        object.__setattr__(self, "n_nodes", n)
        object.__setattr__(self, "edges", edges)
        if edges:
            if not validate_tree(edges, n):
                raise InvalidNetworkError(
                    f"{len(edges)} edges on {n} nodes do not form a tree")
        elif n > 1 and self.coupling != 0.0:
            raise InvalidNetworkError(
                "independent (edge-free) network requires coupling = 0")
        freqs = self.frequencies
        if freqs is None:
            freqs = np.ones(n)
        freqs = np.asarray(freqs, dtype=float)
        if freqs.shape != (n,):
            raise InvalidNetworkError(
                f"frequencies shape {freqs.shape} != ({n},)")
        if not np.all(freqs > 0):
            raise InvalidNetworkError("frequencies must be strictly positive")
        freqs.setflags(write=False)
        object.__setattr__(self, "frequencies", freqs)
        if self.coupling < 0:
            raise InvalidNetworkError("coupling must be >= 0")
        object.__setattr__(self, "coupling", float(self.coupling))

    def with_frequencies(self, freqs):
        return OscillatorNetwork(self.n_nodes, self.edges, freqs, self.coupling)

    def degree(self):
        """Node degrees as an array of length N (index 0 = node 1)."""
        deg = np.zeros(self.n_nodes, dtype=np.int64)
        for a, b in self.edges:
            deg[a - 1] += 1
            deg[b - 1] += 1
        return deg

    def adjacency(self):
        """Dense symmetric 0/1 adjacency matrix, 0-based."""
        a = np.zeros((self.n_nodes, self.n_nodes))
        for i, j in self.edges:
            a[i - 1, j - 1] = 1.0
            a[j - 1, i - 1] = 1.0
        return a


@dataclass(frozen=True)
class LeafPartition:
    leaves: tuple
    internal: tuple


def partition_leaves(net: OscillatorNetwork) -> LeafPartition:
    """Split nodes into leaves (degree <= 1) and internal nodes (degree >= 2)."""
    deg = net.degree()
    leaves = tuple(int(j + 1) for j in np.flatnonzero(deg <= 1))
    internal = tuple(int(j + 1) for j in np.flatnonzero(deg >= 2))
    return LeafPartition(leaves=leaves, internal=internal)


def sample_frequencies(rng, base, spread, n):
    """Draw n frequencies from Normal(base, spread^2), redrawing any <= 0.

    spread=0 returns `base` exactly for every node. Redraws keep the
    positivity invariant unconditional; for spread << base they almost
    never trigger.
    """
    if spread < 0:
        raise ValueError("spread must be >= 0")
    freqs = rng.normal(base, spread, size=n)
    bad = freqs <= 0
    while np.any(bad):
        freqs[bad] = rng.normal(base, spread, size=int(bad.sum()))
        bad = freqs <= 0
    return freqs


def star(n, center=1):
    """Star tree: every other node attached to `center`."""
    return tuple((center, j) for j in range(1, n + 1) if j != center)


def path(n):
    """Path tree 1-2-...-n."""
    return tuple((j, j + 1) for j in range(1, n))


def load_network(path_or_file):
    """Read a network description from JSON.

    Keys: n_nodes, edges ([[j, j'], ...]), coupling, frequencies (optional;
    absent means the caller samples them per episode).
    """
    if hasattr(path_or_file, "read"):
        data = json.load(path_or_file)
    else:
        with open(path_or_file) as f:
            data = json.load(f)
    freqs = data.get("frequencies")
    return OscillatorNetwork(
        n_nodes=data["n_nodes"],
        edges=tuple(tuple(e) for e in data.get("edges", [])),
        frequencies=None if freqs is None else np.asarray(freqs, dtype=float),
        coupling=float(data.get("coupling", 0.0)),
    )


def save_network(net, path_or_file):
    data = {
        "n_nodes": net.n_nodes,
        "edges": [list(e) for e in net.edges],
        "frequencies": [float(f) for f in net.frequencies],
        "coupling": net.coupling,
    }
    if hasattr(path_or_file, "write"):
        json.dump(data, path_or_file, indent=2)
    else:
        with open(path_or_file, "w") as f:
            json.dump(data, f, indent=2)
