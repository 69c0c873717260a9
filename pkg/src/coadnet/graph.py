"""Networks of coupled so(3) systems and their extended graph Laplacians.

Nodes are numbered ``0..N-1``. Every node carries an inertia tensor and
every undirected edge carries one symmetric interaction tensor, used for
both orientations. The degree normalisation ``1/sqrt(d_i d_j)`` is built
into the stored neighbour weights.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from .lie import matvec3

K = 3  # algebra dimension


class GraphError(ValueError):
    """Base class for invalid network descriptions."""


class DisconnectedGraph(GraphError):
    pass


class SelfLoop(GraphError):
    pass


class DuplicateEdge(GraphError):
    pass


class InvalidTensor(GraphError):
    pass


def as_tensor(value) -> np.ndarray:
    """Interpret a scalar, a length-3 diagonal, or a 3x3 array as a tensor.

    >>> as_tensor(2.0)[0, 0]
    2.0
    >>> as_tensor([1, 2, 3]).diagonal().tolist()
    [1.0, 2.0, 3.0]
    """
    arr = np.asarray(value, dtype=float)
    if arr.ndim == 0:
        return float(arr) * np.eye(K)
    if arr.shape == (K,):
        return np.diag(arr)
    if arr.shape == (K, K):
        return arr.copy()
    raise InvalidTensor(f"cannot interpret array of shape {arr.shape} as a 3x3 tensor")


def _check_spd(t: np.ndarray, what: str) -> None:
    if not np.all(np.isfinite(t)):
        raise InvalidTensor(f"{what} has non-finite entries")
    scale = max(1.0, float(np.max(np.abs(t))))
    if np.max(np.abs(t - t.T)) > 1e-14 * scale:
        raise InvalidTensor(f"{what} is not symmetric")
    if np.linalg.eigvalsh(t).min() <= 0.0:
        raise InvalidTensor(f"{what} is not positive definite")


@dataclass(frozen=True)
class Network:
    """Undirected connected graph with per-node and per-edge tensors.

    Attributes
    ----------
    n : int
        Number of nodes.
    edges : ndarray, shape (E, 2)
        Edge list with ``i < j``.
    inertia : ndarray, shape (N, 3, 3)
        Inertia tensors.
    coupling : ndarray, shape (E, 3, 3)
        Interaction tensor per edge.
    """

    n: int
    edges: np.ndarray
    inertia: np.ndarray
    coupling: np.ndarray
    degrees: np.ndarray = field(init=False)
    inertia_inv: np.ndarray = field(init=False)
    nbr: np.ndarray = field(init=False)
    nbr_weight: np.ndarray = field(init=False)
    nbr_coupling: np.ndarray = field(init=False)
    nbr_diag: np.ndarray | None = field(init=False)

    def __post_init__(self):
        n = self.n
        edges = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        deg = np.zeros(n, dtype=np.int64)
        np.add.at(deg, edges[:, 0], 1)
        np.add.at(deg, edges[:, 1], 1)
        dmax = max(1, int(deg.max()) if n else 1)

        # Padded neighbour tables: slot k of node i holds its k-th neighbour.
        # Padding slots point at the node itself with zero weight, so they
        # contribute exact zeros.
        nbr = np.tile(np.arange(n)[:, None], (1, dmax))
        w = np.zeros((n, dmax))
        jt = np.zeros((n, dmax, K, K))
        fill = np.zeros(n, dtype=np.int64)
        sq = np.sqrt(deg.astype(float))
        for e, (i, j) in enumerate(edges):
            for a, b in ((i, j), (j, i)):
                k = fill[a]
                nbr[a, k] = b
                w[a, k] = 1.0 / (sq[a] * sq[b])
                jt[a, k] = self.coupling[e]
                fill[a] += 1

        off = ~np.eye(K, dtype=bool)
        diag_only = not (np.any(self.inertia[:, off]) or np.any(self.coupling[:, off]))
        # weight times the tensor diagonal, used when all tensors are diagonal
        wdiag = w[:, :, None] * np.diagonal(jt, axis1=2, axis2=3) if diag_only else None
        if wdiag is not None:
            wdiag.setflags(write=False)
        object.__setattr__(self, "nbr_diag", wdiag)

        for name, val in (
            ("edges", edges),
            ("degrees", deg),
            ("inertia_inv", np.linalg.inv(self.inertia)),
            ("nbr", nbr),
            ("nbr_weight", w),
            ("nbr_coupling", jt),
        ):
            val.setflags(write=False)
            object.__setattr__(self, name, val)

    @property
    def adjacency(self) -> sp.csr_matrix:
        """Symmetric 0/1 adjacency matrix in CSR format."""
        e = self.edges
        rows = np.concatenate([e[:, 0], e[:, 1]])
        cols = np.concatenate([e[:, 1], e[:, 0]])
        data = np.ones(rows.size)
        return sp.csr_matrix((data, (rows, cols)), shape=(self.n, self.n))

    @property
    def sqrt_degrees(self) -> np.ndarray:
        return np.sqrt(self.degrees.astype(float))

    @property
    def uniform_inertia(self) -> bool:
        return bool(np.all(self.inertia == self.inertia[0]))

    @property
    def uniform_coupling(self) -> bool:
        return self.coupling.shape[0] == 0 or bool(np.all(self.coupling == self.coupling[0]))

    @property
    def diagonal_tensors(self) -> bool:
        """True when every inertia and interaction tensor is diagonal."""
        off = ~np.eye(K, dtype=bool)
        return not (np.any(self.inertia[:, off]) or np.any(self.coupling[:, off]))

    def couple(self, x: np.ndarray) -> np.ndarray:
        """Apply the normalised coupling ``(K x)_i = sum_j J_ij x_j / sqrt(d_i d_j)``.

        ``x`` has shape ``(..., N, 3)``. The neighbour sum runs in a fixed
        slot order so the result does not depend on the batch shape.
        """
        out = np.zeros_like(x)
        if self.nbr_diag is not None:
            for k in range(self.nbr.shape[1]):
                out += self.nbr_diag[:, k] * x[..., self.nbr[:, k], :]
            return out
        for k in range(self.nbr.shape[1]):
            xs = x[..., self.nbr[:, k], :]
            out += self.nbr_weight[:, k, None] * matvec3(self.nbr_coupling[:, k], xs)
        return out

    def apply_inertia_inv(self, x: np.ndarray) -> np.ndarray:
        if self.nbr_diag is not None:
            return np.diagonal(self.inertia_inv, axis1=1, axis2=2) * x
        return matvec3(self.inertia_inv, x)

    def apply_inertia(self, x: np.ndarray) -> np.ndarray:
        if self.nbr_diag is not None:
            return np.diagonal(self.inertia, axis1=1, axis2=2) * x
        return matvec3(self.inertia, x)


def build_from_edges(n, edges, inertia=1.0, coupling=1.0, node_inertia=None, edge_coupling=None):
    """Build a network from an explicit edge list.

    Parameters
    ----------
    n : int
        Number of nodes.
    edges : iterable of (int, int)
        Undirected edges.
    inertia, coupling : tensor-like
        Defaults for every node and edge (scalar, diagonal or 3x3).
    node_inertia : dict, optional
        Per-node inertia overrides ``{i: tensor}``.
    edge_coupling : dict, optional
        Per-edge overrides ``{(i, j): tensor}``; orientation is ignored.

    Raises
    ------
    SelfLoop, DuplicateEdge, DisconnectedGraph, InvalidTensor
    """
    n = int(n)
    if n < 1:
        raise GraphError("network needs at least one node")
    canon = []
    seen = set()
    for i, j in edges:
        i, j = int(i), int(j)
        if not (0 <= i < n and 0 <= j < n):
            raise GraphError(f"edge ({i}, {j}) references a node outside 0..{n - 1}")
        if i == j:
            raise SelfLoop(f"self loop at node {i}")
        key = (min(i, j), max(i, j))
        if key in seen:
            raise DuplicateEdge(f"duplicate edge {key}")
        seen.add(key)
        canon.append(key)
    edge_arr = np.array(canon, dtype=np.int64).reshape(-1, 2)

    if n > 1:
        adj = sp.coo_matrix((np.ones(len(canon)), (edge_arr[:, 0], edge_arr[:, 1])), shape=(n, n))
        ncomp, _ = connected_components(adj, directed=False)
        if ncomp != 1:
            raise DisconnectedGraph(f"graph has {ncomp} connected components")

    base_i = as_tensor(inertia)
    inert = np.repeat(base_i[None], n, axis=0)
    for i, t in (node_inertia or {}).items():
        inert[int(i)] = as_tensor(t)
    base_j = as_tensor(coupling)
    coup = np.repeat(base_j[None], len(canon), axis=0)
    if edge_coupling:
        index = {e: k for k, e in enumerate(canon)}
        for (i, j), t in edge_coupling.items():
            key = (min(int(i), int(j)), max(int(i), int(j)))
            if key not in index:
                raise GraphError(f"coupling override for missing edge {key}")
            coup[index[key]] = as_tensor(t)
    for i in range(n):
        _check_spd(inert[i], f"inertia tensor of node {i}")
    for k, e in enumerate(canon):
        _check_spd(coup[k], f"interaction tensor of edge {e}")
    return Network(n=n, edges=edge_arr, inertia=inert, coupling=coup)


def build_lattice_2d(width, height, periodic=True, inertia=1.0, coupling=1.0):
    """Rectangular lattice, node ``(x, y)`` has index ``y * width + x``.

    Periodic lattices need both sides at least 3; narrower wraps would
    produce self loops or doubled edges.
    """
    width, height = int(width), int(height)
    if width < 1 or height < 1:
        raise GraphError("lattice sides must be at least 1")
    if periodic and (width < 3 or height < 3):
        raise GraphError("periodic lattice sides must be at least 3 to avoid multi-edges")
    edges = []
    for y in range(height):
        for x in range(width):
            i = y * width + x
            if x + 1 < width:
                edges.append((i, i + 1))
            elif periodic:
                edges.append((y * width, i))
            if y + 1 < height:
                edges.append((i, i + width))
            elif periodic:
                edges.append((x, i))
    return build_from_edges(width * height, edges, inertia, coupling)


def coupling_matrix(net: Network) -> np.ndarray:
    """Dense ``3N x 3N`` matrix ``D^{-1/2} A D^{-1/2}`` with tensor blocks."""
    n = net.n
    m = np.zeros((n, K, n, K))
    sq = net.sqrt_degrees
    for e, (i, j) in enumerate(net.edges):
        blk = net.coupling[e] / (sq[i] * sq[j])
        m[i, :, j, :] = blk
        m[j, :, i, :] = blk.T
    return m.reshape(K * n, K * n)


def _block_diag(tensors: np.ndarray) -> np.ndarray:
    n = tensors.shape[0]
    m = np.zeros((n, K, n, K))
    idx = np.arange(n)
    m[idx, :, idx, :] = tensors
    return m.reshape(K * n, K * n)


def momentum_laplacian(net: Network) -> np.ndarray:
    """Extended Laplacian ``Ibar^{-1} - D^{-1/2} A D^{-1/2}`` (dense, symmetric)."""
    return _block_diag(net.inertia_inv) - coupling_matrix(net)


def position_laplacian(net: Network, lambda1: float) -> np.ndarray:
    """Extended Laplacian ``-lambda1^2 Ibar - D^{-1/2} A D^{-1/2}``."""
    return -float(lambda1) ** 2 * _block_diag(net.inertia) - coupling_matrix(net)


def ferro_projector(net: Network) -> np.ndarray:
    """Orthogonal projector onto ``V = {mu_i = sqrt(d_i) mu}``."""
    s = net.sqrt_degrees
    s = s / np.linalg.norm(s)
    return np.kron(np.outer(s, s), np.eye(K))


def network_from_dict(cfg: dict) -> Network:
    """Build a network from a config mapping.

    Two shapes are accepted::

        {"lattice": {"width": 10, "height": 10, "periodic": true},
         "inertia": [1, 2, 3], "coupling": 1.0}

        {"nodes": 3, "edges": [[0, 1], [1, 2]],
         "inertia": 1.0, "coupling": 1.0,
         "node_inertia": {"0": [1, 2, 3]},
         "edge_coupling": [{"edge": [0, 1], "tensor": 2.0}]}

    A ``"file"`` key loads the second shape from a JSON or YAML file, with
    the remaining keys acting as overrides.
    """
    cfg = dict(cfg)
    if "file" in cfg:
        loaded = load_graph_file(cfg.pop("file"))
        loaded.update(cfg)
        cfg = loaded
    inertia = cfg.get("inertia", 1.0)
    coupling = cfg.get("coupling", 1.0)
    if "lattice" in cfg:
        lat = cfg["lattice"]
        return build_lattice_2d(
            lat["width"], lat["height"], bool(lat.get("periodic", True)), inertia, coupling
        )
    if "nodes" not in cfg:
        raise GraphError("network config needs either 'lattice' or 'nodes'")
    node_inertia = {int(k): v for k, v in (cfg.get("node_inertia") or {}).items()}
    edge_coupling = {}
    for item in cfg.get("edge_coupling") or []:
        edge_coupling[tuple(item["edge"])] = item["tensor"]
    return build_from_edges(cfg["nodes"], cfg.get("edges", []), inertia, coupling, node_inertia, edge_coupling)


def load_graph_file(path) -> dict:
    """Read a graph description (JSON, or YAML by extension)."""
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    if path.suffix.lower() in (".yaml", ".yml"):
        import yaml

        data = yaml.safe_load(text)
    else:
        data = json.loads(text)
    if not isinstance(data, dict):
        raise GraphError(f"{path}: expected a mapping at top level")
    return data
