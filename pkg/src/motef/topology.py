"""Communication graphs, gossip mixing matrices and their spectral gaps.

Every builder returns a :class:`Topology` whose mixing matrix is symmetric
and doubly stochastic. The default weighting is Metropolis-Hastings,

    w_ij = 1 / (1 + max(deg_i, deg_j))   for every edge (i, j),
    w_ii = 1 - sum_{j != i} w_ij,

which satisfies both properties for any undirected graph. ``weights="lazy"``
additionally replaces W by (W + I) / 2, which makes W positive semidefinite.

Supported families: ``complete``, ``ring``, ``star``, ``grid`` (4-neighbour
lattice, no wraparound), ``erdos_renyi`` and ``random_regular``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import networkx as nx
import numpy as np

from .errors import ConstructionError, ValidationError

__all__ = [
    "Topology",
    "MixingReport",
    "build_topology",
    "metropolis_weights",
    "spectral_gap",
    "validate_mixing",
    "KINDS",
]

KINDS = ("complete", "ring", "star", "grid", "erdos_renyi", "random_regular")

MAX_RETRIES = 100
EIGH_MAX_N = 2048
_SYM_TOL = 1e-10


@dataclass(frozen=True, eq=False)
class Topology:
    """An undirected communication graph together with its mixing matrix.

    Attributes:
        n: Number of clients.
        kind: Graph family tag.
        adjacency: Symmetric boolean n x n matrix, False on the diagonal.
        W: Dense n x n mixing matrix.
        rho: Spectral gap ``1 - |lambda_2(W)|``.
        self_weight_scheme: ``"metropolis"`` or ``"lazy"``.
    """

    n: int
    kind: str
    adjacency: np.ndarray
    W: np.ndarray
    rho: float
    self_weight_scheme: str = "metropolis"

    def __post_init__(self) -> None:
        self.adjacency.setflags(write=False)
        self.W.setflags(write=False)

    @cached_property
    def W_minus_I(self) -> np.ndarray:
        D = self.W - np.eye(self.n)
        D.setflags(write=False)
        return D

    @property
    def degrees(self) -> np.ndarray:
        return self.adjacency.sum(axis=1)

    @property
    def sigma_max_sq(self) -> float:
        """Squared largest singular value of W - I (at most 4)."""
        return _sigma_max_sq(self.W)

    def neighbors(self, i: int) -> list[int]:
        return np.flatnonzero(self.adjacency[i]).tolist()

    def to_csv(self, path: str | Path) -> None:
        """Write W row-major with 17 significant digits."""
        lines = [",".join(f"{w:.17g}" for w in row) for row in self.W]
        Path(path).write_text("\n".join(lines) + "\n")


@dataclass(frozen=True)
class MixingReport:
    symmetry_defect: float
    row_sum_defect: float
    col_sum_defect: float
    rho: float
    sigma_max_sq: float

    @property
    def passed(self) -> bool:
        return (
            self.symmetry_defect < _SYM_TOL
            and self.row_sum_defect < _SYM_TOL
            and self.col_sum_defect < _SYM_TOL
            and self.rho > 0
        )


def metropolis_weights(adjacency: np.ndarray) -> np.ndarray:
    """Metropolis-Hastings mixing matrix of an undirected graph."""
    A = np.asarray(adjacency, dtype=bool)
    n = A.shape[0]
    deg = A.sum(axis=1)
    W = np.zeros((n, n))
    i, j = np.nonzero(A)
    W[i, j] = 1.0 / (1.0 + np.maximum(deg[i], deg[j]))
    # symmetrize exactly; the formula is symmetric but keep W == W.T bitwise
    W = np.triu(W, 1)
    W = W + W.T
    W[np.diag_indices(n)] = 1.0 - W.sum(axis=1)
    return W


def _sigma_max_sq(W: np.ndarray) -> float:
    D = W - np.eye(W.shape[0])
    return float(np.linalg.norm(D, 2) ** 2)


def spectral_gap(W: np.ndarray, tol: float = 1e-10) -> float:
    """Return ``1 - |lambda_2(W)|`` for a symmetric mixing matrix.

    Uses a dense symmetric eigensolve up to n = 2048 and power iteration on
    the deflated matrix ``W - 11^T/n`` above that. Returns 0 when the second
    eigenvalue has modulus one (disconnected or periodic W).

    Raises:
        ValidationError: if W is not square or not symmetric within ``1e-10``.
    """
    W = np.asarray(W, dtype=float)
    if W.ndim != 2 or W.shape[0] != W.shape[1]:
        raise ValidationError(f"mixing matrix must be square, got shape {W.shape}")
    if np.max(np.abs(W - W.T), initial=0.0) > _SYM_TOL:
        raise ValidationError("mixing matrix is not symmetric")
    n = W.shape[0]
    if n == 1:
        return 1.0
    if n <= EIGH_MAX_N:
        ev = np.sort(np.abs(np.linalg.eigvalsh(W)))[::-1]
        lam2 = ev[1]
    else:
        lam2 = _deflated_power_iteration(W, tol)
    return float(max(0.0, 1.0 - lam2))


def _deflated_power_iteration(W: np.ndarray, tol: float, max_iter: int = 100_000) -> float:
    n = W.shape[0]
    rng = np.random.default_rng(0)
    v = rng.standard_normal(n)
    v -= v.mean()
    v /= np.linalg.norm(v)
    est = 0.0
    for _ in range(max_iter):
        w = W @ v
        w -= w.mean()
        nrm = np.linalg.norm(w)
        if nrm == 0.0:
            return 0.0
        v = w / nrm
        if abs(nrm - est) <= tol * max(nrm, 1e-300):
            return nrm
        est = nrm
    return est


def validate_mixing(W: np.ndarray) -> MixingReport:
    """Check symmetry, double stochasticity and the spectral gap of W."""
    W = np.asarray(W, dtype=float)
    n = W.shape[0]
    sym = float(np.max(np.abs(W - W.T), initial=0.0))
    row = float(np.max(np.abs(W.sum(axis=1) - 1.0), initial=0.0))
    col = float(np.max(np.abs(W.sum(axis=0) - 1.0), initial=0.0))
    if n == 1:
        rho = 1.0
    elif sym <= _SYM_TOL:
        rho = spectral_gap(W)
    else:
        ev = np.sort(np.abs(np.linalg.eigvals(W)))[::-1]
        rho = float(max(0.0, 1.0 - ev[1]))
    return MixingReport(sym, row, col, rho, _sigma_max_sq(W))


def _derived_seed(seed: int, attempt: int) -> int:
    ss = np.random.SeedSequence([seed & 0xFFFFFFFFFFFFFFFF, attempt])
    return int(ss.generate_state(1, dtype=np.uint32)[0])


def _graph(kind: str, n: int, params: dict, seed: int) -> nx.Graph:
    if kind == "complete":
        return nx.complete_graph(n)
    if kind == "ring":
        return nx.cycle_graph(n) if n >= 3 else nx.path_graph(n)
    if kind == "star":
        return nx.star_graph(n - 1)
    if kind == "grid":
        rows, cols = _grid_shape(n, params)
        return nx.convert_node_labels_to_integers(nx.grid_2d_graph(rows, cols), ordering="sorted")
    if kind == "erdos_renyi":
        p = params.get("p")
        if p is None or not 0 < p <= 1:
            raise ValidationError(f"erdos_renyi needs p in (0, 1], got {p}")
        return _connected(lambda s: nx.erdos_renyi_graph(n, p, seed=s), n, seed)
    if kind == "random_regular":
        r = params.get("degree")
        if r is None or r < 0 or r >= n or (r * n) % 2:
            raise ValidationError(f"random_regular needs degree r < n with r*n even, got r={r}, n={n}")
        return _connected(lambda s: nx.random_regular_graph(int(r), n, seed=s), n, seed)
    raise ValidationError(f"unknown topology kind {kind!r}; expected one of {KINDS}")


def _grid_shape(n: int, params: dict) -> tuple[int, int]:
    rows, cols = params.get("rows"), params.get("cols")
    if rows is None and cols is None:
        side = math.isqrt(n)
        if side * side != n:
            raise ValidationError(f"grid with n={n} needs rows and cols (n is not a perfect square)")
        return side, side
    if rows is None or cols is None or rows * cols != n:
        raise ValidationError(f"grid rows*cols must equal n={n}, got rows={rows}, cols={cols}")
    return int(rows), int(cols)


def _connected(make, n: int, seed: int) -> nx.Graph:
    for attempt in range(MAX_RETRIES):
        G = make(_derived_seed(seed, attempt))
        if n == 1 or nx.is_connected(G):
            return G
    raise ConstructionError(f"no connected graph after {MAX_RETRIES} attempts")


def build_topology(
    kind: str,
    n: int,
    params: dict | None = None,
    seed: int = 0,
    weights: str = "metropolis",
) -> Topology:
    """Build a graph of the given family and its mixing matrix.

    Args:
        kind: One of :data:`KINDS`.
        n: Number of clients, at least 1.
        params: Family parameters: ``p`` for ``erdos_renyi``, ``degree`` for
            ``random_regular``, optional ``rows``/``cols`` for ``grid``.
        seed: Seed for the random families. Disconnected draws are resampled
            with derived seeds, up to 100 times.
        weights: ``"metropolis"`` or ``"lazy"``.

    Raises:
        ValidationError: invalid ``n``, ``params`` or ``weights``.
        ConstructionError: a random family stayed disconnected.
    """
    params = dict(params or {})
    if not isinstance(n, (int, np.integer)) or n < 1:
        raise ValidationError(f"n must be a positive integer, got {n!r}")
    if weights not in ("metropolis", "lazy"):
        raise ValidationError(f"unknown weighting {weights!r}")
    G = _graph(kind, int(n), params, seed)
    A = nx.to_numpy_array(G, nodelist=range(n), dtype=float) > 0
    np.fill_diagonal(A, False)
    if n > 1 and not nx.is_connected(G):
        raise ConstructionError(f"{kind} graph with n={n} is disconnected")
    W = metropolis_weights(A)
    if weights == "lazy":
        W = 0.5 * (W + np.eye(n))
    return Topology(n=int(n), kind=kind, adjacency=A, W=W, rho=spectral_gap(W), self_weight_scheme=weights)
