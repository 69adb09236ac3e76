"""Local objectives and their gradient oracles.

Two problem families share the :class:`OracleSuite` interface:

* :class:`SyntheticLS`, heterogeneous least squares
  ``f_i(x) = 1/2 ||(i/sqrt(n)) x - b_i||^2`` with ``b_i ~ N(0, zeta^2/i^2 I)``
  and additive Gaussian gradient noise;
* :class:`LogRegNC`, logistic regression on per-client data shards plus the
  non-convex penalty ``reg_lambda * sum_j x_j^2 / (1 + x_j^2)``.

Stochastic gradients are drawn in two steps, ``sample`` then
``stoch_grad_matrix``, so the same sample can be evaluated at two points
(needed by the STORM-type estimator). Matrices are d x n with one column per
client.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, TextIO

import numpy as np

from .errors import ParseError, ValidationError

__all__ = [
    "OracleSuite",
    "SyntheticLS",
    "LogRegNC",
    "LibSVMDataset",
    "synth_new",
    "synth_xstar",
    "logreg_oracles",
    "parse_libsvm",
    "load_libsvm",
    "shard",
    "LABEL_MAP",
    "accuracy",
]


class OracleSuite:
    """Gradient oracles for ``f = (1/n) sum_i f_i``.

    Subclasses implement ``exact_grad_matrix``, ``sample``,
    ``stoch_grad_matrix``, ``local_loss`` and ``loss``.
    """

    n: int
    d: int
    f_star: float | None = None
    x_star: np.ndarray | None = None
    smoothness: float | None = None
    # the same sample can be evaluated at two points
    paired_samples: bool = True

    def exact_grad_matrix(self, X: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def sample(self, batch: int, rng: np.random.Generator):
        raise NotImplementedError

    def stoch_grad_matrix(self, X: np.ndarray, sample) -> np.ndarray:
        raise NotImplementedError

    def local_loss(self, i: int, x: np.ndarray) -> float:
        raise NotImplementedError

    def loss(self, x: np.ndarray) -> float:
        raise NotImplementedError

    def suboptimality(self, x: np.ndarray) -> float | None:
        """``f(x) - f*``, or None when the optimum is unknown."""
        if self.f_star is None:
            return None
        return self.loss(x) - self.f_star

    def exact_grad(self, i: int, x: np.ndarray) -> np.ndarray:
        X = np.zeros((self.d, self.n))
        X[:, i] = x
        return self.exact_grad_matrix(X)[:, i]

    def stoch_grad(self, i: int, x: np.ndarray, batch: int, rng: np.random.Generator) -> np.ndarray:
        X = np.zeros((self.d, self.n))
        X[:, i] = x
        return self.stoch_grad_matrix(X, self.sample(batch, rng))[:, i]

    def global_grad(self, x: np.ndarray) -> np.ndarray:
        """Gradient of f at a single point."""
        X = np.repeat(np.asarray(x, dtype=float)[:, None], self.n, axis=1)
        return self.exact_grad_matrix(X).mean(axis=1)


# ---------------------------------------------------------------------------
# synthetic least squares


@dataclass(eq=False)
class SyntheticLS(OracleSuite):
    """Heterogeneous quadratic with ``A_i = (i / sqrt(n)) I``.

    ``sigma`` bounds the total noise, ``E||g - grad f_i||^2 = sigma^2 / batch``;
    each coordinate of the noise has variance ``sigma^2 / (d * batch)``.
    """

    n: int
    d: int
    zeta: float
    sigma: float
    b_vectors: np.ndarray  # d x n
    seed: int = 0
    f_star: float | None = None
    x_star: np.ndarray | None = None
    scales: np.ndarray = field(init=False, repr=False)

    def __post_init__(self) -> None:
        i = np.arange(1, self.n + 1, dtype=float)
        self.scales = i / math.sqrt(self.n)
        self._curv = self.scales**2
        self._shift = self.b_vectors * self.scales
        self.smoothness = float(self._curv.max())

    def exact_grad_matrix(self, X: np.ndarray) -> np.ndarray:
        return X * self._curv - self._shift

    def sample(self, batch: int, rng: np.random.Generator) -> np.ndarray:
        std = self.sigma / math.sqrt(self.d * batch)
        return std * rng.standard_normal((self.d, self.n))

    def stoch_grad_matrix(self, X: np.ndarray, sample: np.ndarray) -> np.ndarray:
        return self.exact_grad_matrix(X) + sample

    def local_loss(self, i: int, x: np.ndarray) -> float:
        r = self.scales[i] * np.asarray(x) - self.b_vectors[:, i]
        return 0.5 * float(r @ r)

    def loss(self, x: np.ndarray) -> float:
        R = self.scales * np.asarray(x, dtype=float)[:, None] - self.b_vectors
        return 0.5 * float(np.sum(R * R)) / self.n

    def suboptimality(self, x: np.ndarray) -> float | None:
        # f is quadratic with Hessian mean(curv) I, so f(x) - f* is exact without cancellation
        if self.x_star is None:
            return None
        e = np.asarray(x, dtype=float) - self.x_star
        return 0.5 * float(np.mean(self._curv)) * float(e @ e)


def synth_new(n: int, d: int, zeta: float, sigma: float, seed: int = 0) -> SyntheticLS:
    """Draw a synthetic least-squares instance and attach its optimum."""
    if n < 1 or d < 1:
        raise ValidationError(f"n and d must be positive, got n={n}, d={d}")
    if zeta < 0 or sigma < 0:
        raise ValidationError("zeta and sigma must be non-negative")
    rng = np.random.default_rng(np.random.SeedSequence([seed & 0xFFFFFFFFFFFFFFFF, 0x5EED]))
    i = np.arange(1, n + 1, dtype=float)
    B = rng.standard_normal((d, n)) * (zeta / i)
    inst = SyntheticLS(n=n, d=d, zeta=zeta, sigma=sigma, b_vectors=B, seed=seed)
    inst.x_star, inst.f_star = synth_xstar(inst)
    return inst


def synth_xstar(inst: SyntheticLS) -> tuple[np.ndarray, float]:
    """Closed-form minimizer ``(sum_i A_i^2)^-1 sum_i A_i b_i`` and ``f(x*)``."""
    x = (inst.b_vectors @ inst.scales) / float(np.sum(inst.scales**2))
    return x, inst.loss(x)


# ---------------------------------------------------------------------------
# LibSVM data

LABEL_MAP = {1.0: 1.0, -1.0: -1.0, 0.0: -1.0, 2.0: -1.0}
"""Binary label mapping: ``+1``/``1`` -> +1, ``-1``/``0``/``2`` -> -1."""


@dataclass(frozen=True, eq=False)
class LibSVMDataset:
    """Sparse rows in CSR form with labels in {-1, +1}. Indices are 0-based."""

    labels: np.ndarray
    indptr: np.ndarray
    indices: np.ndarray
    values: np.ndarray
    d: int

    @property
    def m(self) -> int:
        return len(self.labels)

    def rows(self, start: int, stop: int) -> "LibSVMDataset":
        return self.take(np.arange(start, stop))

    def take(self, order: np.ndarray) -> "LibSVMDataset":
        order = np.asarray(order, dtype=int)
        lo, hi = self.indptr[order], self.indptr[order + 1]
        counts = hi - lo
        indptr = np.concatenate([[0], np.cumsum(counts)])
        pos = np.concatenate([np.arange(a, b) for a, b in zip(lo, hi)]) if len(order) else np.zeros(0, int)
        return LibSVMDataset(self.labels[order], indptr, self.indices[pos], self.values[pos], self.d)

    def dense(self, d: int | None = None) -> np.ndarray:
        """Feature matrix of shape (m, d), zero-padded to ``d`` columns."""
        d = self.d if d is None else d
        if d < self.d:
            raise ValidationError(f"cannot densify to d={d} < {self.d}")
        A = np.zeros((self.m, d))
        row = np.repeat(np.arange(self.m), np.diff(self.indptr))
        A[row, self.indices] = self.values
        return A


def parse_libsvm(stream: TextIO | str | Iterable[str]) -> LibSVMDataset:
    """Parse LibSVM text: ``<label> <idx>:<val> ...`` per line.

    Text after ``#`` is ignored and blank lines are skipped. Indices are
    1-based and must increase strictly within a line. Labels go through
    :data:`LABEL_MAP`; any other label is rejected.

    Raises:
        ParseError: malformed token, unsupported label, non-increasing index,
            or no data rows. Carries the 1-based line number.
    """
    if isinstance(stream, str):
        stream = io.StringIO(stream)
    labels: list[float] = []
    indptr = [0]
    indices: list[int] = []
    values: list[float] = []
    d = 0
    for lineno, raw in enumerate(stream, start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        tokens = line.split()
        try:
            y = float(tokens[0])
        except ValueError:
            raise ParseError(f"bad label {tokens[0]!r}", lineno) from None
        if y not in LABEL_MAP:
            raise ParseError(f"unsupported label {tokens[0]!r}; only binary files are accepted", lineno)
        last = 0
        for tok in tokens[1:]:
            idx_s, sep, val_s = tok.partition(":")
            if not sep:
                raise ParseError(f"malformed token {tok!r}", lineno)
            try:
                idx = int(idx_s)
                val = float(val_s)
            except ValueError:
                raise ParseError(f"malformed token {tok!r}", lineno) from None
            if idx < 1:
                raise ParseError(f"index must be >= 1, got {idx}", lineno)
            if idx <= last:
                raise ParseError(f"indices must increase strictly ({idx} after {last})", lineno)
            last = idx
            indices.append(idx - 1)
            values.append(val)
        d = max(d, last)
        labels.append(LABEL_MAP[y])
        indptr.append(len(indices))
    if not labels:
        raise ParseError("no data rows")
    return LibSVMDataset(
        labels=np.array(labels),
        indptr=np.array(indptr, dtype=int),
        indices=np.array(indices, dtype=int),
        values=np.array(values, dtype=float),
        d=d,
    )


def load_libsvm(path: str | Path) -> LibSVMDataset:
    with open(path, encoding="utf-8") as fh:
        return parse_libsvm(fh)


def shard(dataset: LibSVMDataset, n: int, shuffle: bool = False, seed: int = 0) -> list[LibSVMDataset]:
    """Split rows into n contiguous shards of size ``m // n``; the last takes the rest."""
    m = dataset.m
    if n < 1 or m < n:
        raise ValidationError(f"cannot split {m} rows into {n} shards")
    data = dataset
    if shuffle:
        data = dataset.take(np.random.default_rng(seed).permutation(m))
    size = m // n
    bounds = [i * size for i in range(n)] + [m]
    return [data.rows(bounds[i], bounds[i + 1]) for i in range(n)]


# ---------------------------------------------------------------------------
# logistic regression with non-convex regularization


def _log1pexp(z: np.ndarray) -> np.ndarray:
    return np.logaddexp(0.0, z)


def _expit(z: np.ndarray) -> np.ndarray:
    return np.exp(-np.logaddexp(0.0, -z))


@dataclass(eq=False)
class LogRegNC(OracleSuite):
    """``f_i(x) = mean_j log(1 + exp(-y_ij a_ij^T x)) + reg * sum_k x_k^2/(1+x_k^2)``."""

    features: list[np.ndarray]  # per client, m_i x d
    targets: list[np.ndarray]  # per client, labels in {-1, +1}
    reg_lambda: float
    batch: int = 1

    def __post_init__(self) -> None:
        if not self.features:
            raise ValidationError("no shards")
        self.n = len(self.features)
        self.d = self.features[0].shape[1]
        self._m = np.array([A.shape[0] for A in self.features])
        if np.any(self._m == 0):
            raise ValidationError("empty shard")
        self.f_star = None
        self.x_star = None
        # data term: max_i ||A_i||_2^2 / (4 m_i); penalty curvature is at most 2 * reg
        self.smoothness = max(np.linalg.norm(A, 2) ** 2 / (4 * A.shape[0]) for A in self.features) + 2 * self.reg_lambda

    def _reg_grad(self, X: np.ndarray) -> np.ndarray:
        return self.reg_lambda * 2 * X / (1 + X * X) ** 2

    def _reg(self, x: np.ndarray) -> float:
        return self.reg_lambda * float(np.sum(x * x / (1 + x * x)))

    @staticmethod
    def _data_grad(A: np.ndarray, y: np.ndarray, x: np.ndarray) -> np.ndarray:
        z = y * (A @ x)
        return -(A.T @ (y * _expit(-z))) / len(y)

    def exact_grad_matrix(self, X: np.ndarray) -> np.ndarray:
        G = np.empty_like(X, dtype=float)
        for i, (A, y) in enumerate(zip(self.features, self.targets)):
            G[:, i] = self._data_grad(A, y, X[:, i])
        return G + self._reg_grad(X)

    def sample(self, batch: int, rng: np.random.Generator) -> np.ndarray:
        """Row indices, shape (n, batch), drawn uniformly with replacement per shard."""
        u = rng.random((self.n, batch))
        return np.minimum((u * self._m[:, None]).astype(int), self._m[:, None] - 1)

    def stoch_grad_matrix(self, X: np.ndarray, sample: np.ndarray) -> np.ndarray:
        G = np.empty_like(X, dtype=float)
        for i, (A, y) in enumerate(zip(self.features, self.targets)):
            rows = sample[i]
            G[:, i] = self._data_grad(A[rows], y[rows], X[:, i])
        return G + self._reg_grad(X)

    def local_loss(self, i: int, x: np.ndarray) -> float:
        A, y = self.features[i], self.targets[i]
        return float(np.mean(_log1pexp(-y * (A @ x)))) + self._reg(x)

    def loss(self, x: np.ndarray) -> float:
        x = np.asarray(x, dtype=float)
        return float(np.mean([self.local_loss(i, x) for i in range(self.n)]))


def logreg_oracles(
    shards: list[LibSVMDataset], reg_lambda: float, batch: int = 1, d: int | None = None
) -> LogRegNC:
    """Build the logistic-regression oracle from LibSVM shards.

    ``d`` pads every shard to a common width (defaults to the widest shard).
    """
    if not shards:
        raise ValidationError("no shards")
    if reg_lambda < 0:
        raise ValidationError(f"reg_lambda must be >= 0, got {reg_lambda}")
    if any(s.m == 0 for s in shards):
        raise ValidationError("empty shard")
    width = max(s.d for s in shards) if d is None else d
    return LogRegNC(
        features=[s.dense(width) for s in shards],
        targets=[s.labels.copy() for s in shards],
        reg_lambda=reg_lambda,
        batch=batch,
    )


def accuracy(x: np.ndarray, data: LibSVMDataset, d: int | None = None) -> float:
    """Fraction of rows whose label matches ``sign(a^T x)`` (zero counts as +1)."""
    A = data.dense(d if d is not None else max(data.d, len(x)))
    pred = np.where(A[:, : len(x)] @ x >= 0, 1.0, -1.0)
    return float(np.mean(pred == data.labels))
