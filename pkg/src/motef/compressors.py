"""Contractive compression operators with exact bit accounting.

A compressor C is contractive with parameter alpha in (0, 1] when
E||C(x) - x||^2 <= (1 - alpha)||x||^2. Families:

========  ===============================================  ===================
family    operator                                         bits per message
========  ===============================================  ===================
top_k     keep the k largest magnitudes (lowest index      k * (32 + ceil(log2 d))
          wins ties)
rand_k    keep k indices drawn uniformly without           k * (32 + ceil(log2 d))
          replacement, no rescaling
gsgd_b    (||x|| / (s w)) sign(x) round(s|x| / ||x||),     32 + d * b
          s = 2^(b-1), w = 1 + min(d/s^2, sqrt(d)/s),
          round half away from zero
identity  x                                                32 * d
========  ===============================================  ===================

Values and norms are charged as 32-bit floats and indices as ceil(log2 d)
bits. A zero input compresses to zero at the usual bit cost.

gsgd_b is deterministic. Its scaling is contractive in mean over Gaussian
inputs whenever some coordinates survive rounding; for very coarse levels in
high dimension (e.g. b=2 with d >~ 100, b=3 with d >~ 1000) almost all
coordinates round to zero and the ratio approaches 1, above ``1 - alpha``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import SpecError, ValidationError

__all__ = [
    "CompressorSpec",
    "CompressedMessage",
    "ContractionReport",
    "parse_compressor",
    "alpha_of",
    "message_bits",
    "compress",
    "compress_columns",
    "verify_contractive",
]

FAMILIES = ("top_k", "rand_k", "gsgd_b", "identity")
_RANDOMIZED = ("rand_k",)


@dataclass(frozen=True)
class CompressorSpec:
    family: str
    d: int
    k: int | None = None
    b: int | None = None

    def __post_init__(self) -> None:
        if self.family not in FAMILIES:
            raise SpecError(f"unknown compressor family {self.family!r}")
        if self.d < 1:
            raise SpecError(f"dimension must be positive, got {self.d}")
        if self.family in ("top_k", "rand_k"):
            if self.k is None or not 1 <= self.k <= self.d:
                raise SpecError(f"{self.family} needs 1 <= k <= d={self.d}, got k={self.k}")
        if self.family == "gsgd_b" and (self.b is None or self.b < 2):
            raise SpecError(f"gsgd_b needs b >= 2, got b={self.b}")

    @property
    def randomized(self) -> bool:
        return self.family in _RANDOMIZED

    def __str__(self) -> str:
        return {
            "top_k": f"topk:{self.k}",
            "rand_k": f"randk:{self.k}",
            "gsgd_b": f"gsgd:{self.b}",
            "identity": "identity",
        }[self.family]


@dataclass(frozen=True)
class CompressedMessage:
    payload: np.ndarray
    bits: int


def parse_compressor(text: str, d: int) -> CompressorSpec:
    """Parse ``topk:K``, ``randk:K``, ``gsgd:B`` or ``identity`` (any case)."""
    s = text.strip().lower()
    if s == "identity":
        return CompressorSpec("identity", d)
    name, sep, arg = s.partition(":")
    families = {"topk": "top_k", "randk": "rand_k", "gsgd": "gsgd_b"}
    if not sep or name not in families:
        raise SpecError(f"cannot parse compressor {text!r}")
    try:
        value = int(arg)
    except ValueError:
        raise SpecError(f"cannot parse compressor parameter in {text!r}") from None
    family = families[name]
    if family == "gsgd_b":
        return CompressorSpec(family, d, b=value)
    return CompressorSpec(family, d, k=value)


def _gsgd_omega(spec: CompressorSpec) -> float:
    s = 2 ** (spec.b - 1)
    return 1.0 + min(spec.d / s**2, math.sqrt(spec.d) / s)


def alpha_of(spec: CompressorSpec) -> float:
    """Contraction parameter; for rand_k it holds in expectation only."""
    if spec.family in ("top_k", "rand_k"):
        return spec.k / spec.d
    if spec.family == "gsgd_b":
        return 1.0 / _gsgd_omega(spec)
    return 1.0


def message_bits(spec: CompressorSpec) -> int:
    if spec.family in ("top_k", "rand_k"):
        return spec.k * (32 + math.ceil(math.log2(spec.d)))
    if spec.family == "gsgd_b":
        return 32 + spec.d * spec.b
    return 32 * spec.d


def compress_columns(
    spec: CompressorSpec, X: np.ndarray, rng: np.random.Generator | None = None
) -> tuple[np.ndarray, int]:
    """Apply the compressor to every column of a d x n matrix.

    Returns the compressed matrix and the bit cost of a single column. rand_k
    needs ``rng``; one draw of shape (d, n) is taken from it.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] != spec.d:
        raise ValidationError(f"expected {spec.d} rows, got shape {X.shape}")
    bits = message_bits(spec)
    fam = spec.family
    if fam == "identity":
        return X.copy(), bits
    if fam == "top_k":
        if spec.k == spec.d:
            return X.copy(), bits
        # stable sort on -|x|: equal magnitudes keep ascending index order
        order = np.argsort(-np.abs(X), axis=0, kind="stable")[: spec.k]
        return _keep(X, order), bits
    if fam == "rand_k":
        if rng is None:
            raise ValidationError("rand_k requires a random generator")
        keys = rng.random(X.shape)
        if spec.k == spec.d:
            return X.copy(), bits
        order = np.argpartition(keys, spec.k - 1, axis=0)[: spec.k]
        return _keep(X, order), bits
    s = 2 ** (spec.b - 1)
    omega = _gsgd_omega(spec)
    norms = np.linalg.norm(X, axis=0)
    safe = np.where(norms > 0, norms, 1.0)
    levels = np.floor(s * np.abs(X) / safe + 0.5)
    Y = (norms / (s * omega)) * np.sign(X) * levels
    return Y, bits


def _keep(X: np.ndarray, rows: np.ndarray) -> np.ndarray:
    mask = np.zeros(X.shape, dtype=bool)
    np.put_along_axis(mask, rows, True, axis=0)
    return np.where(mask, X, 0.0)


def compress(spec: CompressorSpec, x: np.ndarray, rng: np.random.Generator | None = None) -> CompressedMessage:
    """Compress one vector of length ``spec.d``."""
    x = np.asarray(x, dtype=float)
    if x.ndim != 1 or x.shape[0] != spec.d:
        raise ValidationError(f"expected a vector of length {spec.d}, got shape {x.shape}")
    Y, bits = compress_columns(spec, x[:, None], rng)
    return CompressedMessage(Y[:, 0], bits)


@dataclass(frozen=True)
class ContractionReport:
    """Outcome of :func:`verify_contractive`.

    ``max_ratio`` is the per-sample maximum for deterministic compressors and
    the maximum over x of the inner-resampled mean for randomized ones.
    ``mean_ratio`` and ``stderr`` summarize the ratio over all draws.
    """

    max_ratio: float
    mean_ratio: float
    stderr: float
    bound: float
    randomized: bool

    @property
    def holds(self) -> bool:
        if self.randomized:
            return self.mean_ratio <= self.bound + 3.0 * self.stderr
        return self.max_ratio <= self.bound + 1e-12


def verify_contractive(
    spec: CompressorSpec,
    trials: int,
    rng: np.random.Generator,
    d: int | None = None,
    inner: int = 1000,
    chunk: int = 4096,
) -> ContractionReport:
    """Monte Carlo check of ``E||C(x) - x||^2 <= (1 - alpha)||x||^2``.

    Samples ``trials`` standard normal vectors. Randomized compressors are
    resampled ``inner`` times per vector.
    """
    if trials < 1:
        raise ValidationError("trials must be at least 1")
    if d is not None and d != spec.d:
        spec = replace(spec, d=d)
    reps = inner if spec.randomized else 1
    chunks = []
    done = 0
    while done < trials:
        m = min(chunk, trials - done)
        X = rng.standard_normal((spec.d, m))
        sq = np.sum(X * X, axis=0)
        acc = np.zeros(m)
        for _ in range(reps):
            Y, _ = compress_columns(spec, X, rng)
            acc += np.sum((Y - X) ** 2, axis=0) / sq
        chunks.append(acc / reps)
        done += m
    per_x = np.concatenate(chunks)
    stderr = float(per_x.std(ddof=1) / math.sqrt(trials)) if trials > 1 else 0.0
    return ContractionReport(
        max_ratio=float(per_x.max()),
        mean_ratio=float(per_x.mean()),
        stderr=stderr,
        bound=1.0 - alpha_of(spec),
        randomized=spec.randomized,
    )
