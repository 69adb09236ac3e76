"""Round-synchronous decentralized optimizers over a mixing matrix.

All iterates are d x n matrices with one column per client, and gossip is a
right-multiplication by W. One MoTEF round reads the round-t state and
produces round t+1:

    X+ = X + gamma H (W - I) - eta V
    H+ = H + C(X+ - H)
    M+ = (1 - lambda) M + lambda g(X+)                     (momentum)
       | g(X+, xi) + (1 - lambda)(M - g(X, xi))           (STORM, motef_vr)
    V+ = V + gamma G (W - I) + M+ - M
    G+ = G + C(V+ - G)

H and G are the public copies every client keeps of its neighbours' X and
V; only the compressed differences travel. With lambda = 1 the momentum
update collapses to a fresh gradient and the method coincides with BEER.

Baselines:

* ``choco``: x_half = x - eta g; xhat += C(x_half - xhat);
  x+ = x_half + gamma xhat (W - I). One compressed message per round.
* ``dsgd``: x+ = x W - eta g, uncompressed.
* ``d2``: x+ = (2x - x_prev - eta (g - g_prev)) W, first step
  x1 = (x0 - eta g0) W, uncompressed. Its theory assumes W is PSD; that is
  not enforced.

Uncompressed methods are charged ``32 d`` bits per node per round.

Randomness comes from :class:`Streams`: every (purpose, round) pair owns an
independent generator derived from the run seed, so results do not depend on
evaluation order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable

import numpy as np

from .compressors import CompressorSpec, compress_columns
from .errors import CapabilityError, ValidationError
from .problems import OracleSuite
from .topology import Topology

__all__ = [
    "HyperParams",
    "AlgState",
    "MetricsRecord",
    "Streams",
    "init_state",
    "motef_step",
    "motef_vr_step",
    "beer_step",
    "choco_step",
    "dsgd_step",
    "d2_step",
    "STEPS",
    "evaluate",
    "run",
]

_PURPOSES = {"init": 0, "grad": 1, "comp_h": 2, "comp_g": 3, "grad_base": 4, "comp_x": 5}


class Streams:
    """Deterministic random streams keyed by (purpose, round)."""

    def __init__(self, seed: int = 0):
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF

    def generator(self, purpose: str, t: int) -> np.random.Generator:
        ss = np.random.SeedSequence([self.seed, _PURPOSES[purpose], int(t)])
        return np.random.Generator(np.random.PCG64(ss))


def _streams(rng) -> Streams:
    if isinstance(rng, Streams):
        return rng
    if rng is None:
        return Streams(0)
    return Streams(int(rng))


@dataclass(frozen=True)
class HyperParams:
    gamma: float
    eta: float
    lambda_momentum: float = 1.0
    batch: int = 1
    init_batch: int = 1
    iters: int = 0

    def __post_init__(self) -> None:
        if not 0 <= self.gamma <= 1:
            raise ValidationError(f"gamma must lie in [0, 1], got {self.gamma}")
        if self.eta < 0:
            raise ValidationError(f"eta must be non-negative, got {self.eta}")
        if not 0 < self.lambda_momentum <= 1:
            raise ValidationError(f"lambda_momentum must lie in (0, 1], got {self.lambda_momentum}")
        if self.batch < 1 or self.init_batch < 1:
            raise ValidationError("batch sizes must be at least 1")
        if self.iters < 0:
            raise ValidationError("iters must be non-negative")


@dataclass(frozen=True, eq=False)
class AlgState:
    """Round-t iterates. ``X_prev``/``grad_prev`` are only used by D2."""

    X: np.ndarray
    H: np.ndarray
    G: np.ndarray
    V: np.ndarray
    M: np.ndarray
    t: int = 0
    bits_sent_per_node: int = 0
    X_prev: np.ndarray | None = None
    grad_prev: np.ndarray | None = None

    @property
    def x_bar(self) -> np.ndarray:
        return self.X.mean(axis=1)

    @property
    def v_bar(self) -> np.ndarray:
        return self.V.mean(axis=1)


@dataclass(frozen=True)
class MetricsRecord:
    t: int
    bits_cum: int
    grad_norm_sq: float
    consensus: float
    loss: float
    subopt: float | None = None
    test_acc: float | None = None


def init_state(problem: OracleSuite, topo: Topology, hp: HyperParams, x0=None, rng=None) -> AlgState:
    """X0 = H0 = x0 1^T and M0 = V0 = G0 = a stochastic gradient at X0.

    The initial gradient averages ``hp.init_batch`` samples per client.
    """
    if topo.n != problem.n:
        raise ValidationError(f"topology has {topo.n} nodes but problem has {problem.n} clients")
    x0 = np.zeros(problem.d) if x0 is None else np.asarray(x0, dtype=float)
    if x0.shape != (problem.d,):
        raise ValidationError(f"x0 must have shape ({problem.d},), got {x0.shape}")
    streams = _streams(rng)
    X = np.repeat(x0[:, None], problem.n, axis=1)
    g = problem.stoch_grad_matrix(X, problem.sample(hp.init_batch, streams.generator("init", 0)))
    return AlgState(X=X, H=X.copy(), G=g.copy(), V=g.copy(), M=g)


def _comp_rng(compressor, streams, purpose, t):
    # deterministic compressors never touch their stream, so skip building it
    return streams.generator(purpose, t) if compressor.randomized else None


def _tracking_step(state, problem, topo, compressor, hp, streams, momentum) -> AlgState:
    W_I = topo.W_minus_I
    X, H, G, V, M = state.X, state.H, state.G, state.V, state.M
    t1 = state.t + 1
    X_new = X + hp.gamma * (H @ W_I) - hp.eta * V
    Qh, bits_h = compress_columns(compressor, X_new - H, _comp_rng(compressor, streams, "comp_h", t1))
    H_new = H + Qh
    M_new = momentum(X, X_new, M)
    V_new = V + hp.gamma * (G @ W_I) + M_new - M
    Qg, bits_g = compress_columns(compressor, V_new - G, _comp_rng(compressor, streams, "comp_g", t1))
    G_new = G + Qg
    return AlgState(X_new, H_new, G_new, V_new, M_new, t1, state.bits_sent_per_node + bits_h + bits_g)


def motef_step(state, problem, topo, compressor, hp, rng=None) -> AlgState:
    """One round of momentum tracking with error feedback."""
    streams = _streams(rng)
    lam = hp.lambda_momentum

    def momentum(X, X_new, M):
        xi = problem.sample(hp.batch, streams.generator("grad", state.t + 1))
        g = problem.stoch_grad_matrix(X_new, xi)
        if lam == 1.0:
            return g
        return (1 - lam) * M + lam * g

    return _tracking_step(state, problem, topo, compressor, hp, streams, momentum)


def motef_vr_step(state, problem, topo, compressor, hp, rng=None) -> AlgState:
    """MoTEF round with the STORM estimator; one sample is reused at X and X+."""
    if not getattr(problem, "paired_samples", False):
        raise CapabilityError("motef_vr needs an oracle that evaluates one sample at two points")
    streams = _streams(rng)
    lam = hp.lambda_momentum

    def momentum(X, X_new, M):
        xi = problem.sample(hp.batch, streams.generator("grad", state.t + 1))
        g_new = problem.stoch_grad_matrix(X_new, xi)
        if lam == 1.0:
            return g_new
        return g_new + (1 - lam) * (M - problem.stoch_grad_matrix(X, xi))

    return _tracking_step(state, problem, topo, compressor, hp, streams, momentum)


def beer_step(state, problem, topo, compressor, hp, rng=None) -> AlgState:
    """BEER is the lambda = 1 case of :func:`motef_step`."""
    return motef_step(state, problem, topo, compressor, replace(hp, lambda_momentum=1.0), rng)


def _base_grad(state, problem, hp, streams):
    return problem.stoch_grad_matrix(state.X, problem.sample(hp.batch, streams.generator("grad_base", state.t)))


def choco_step(state, problem, topo, compressor, hp, rng=None) -> AlgState:
    """Choco-SGD round; H holds the public copies x-hat."""
    streams = _streams(rng)
    g = _base_grad(state, problem, hp, streams)
    X_half = state.X - hp.eta * g
    Q, bits = compress_columns(compressor, X_half - state.H, _comp_rng(compressor, streams, "comp_x", state.t + 1))
    H_new = state.H + Q
    X_new = X_half + hp.gamma * (H_new @ topo.W - H_new)
    return replace(state, X=X_new, H=H_new, t=state.t + 1, bits_sent_per_node=state.bits_sent_per_node + bits)


def dsgd_step(state, problem, topo, compressor, hp, rng=None) -> AlgState:
    """Uncompressed decentralized SGD, x+ = x W - eta g."""
    streams = _streams(rng)
    g = _base_grad(state, problem, hp, streams)
    X_new = state.X @ topo.W - hp.eta * g
    return replace(state, X=X_new, t=state.t + 1, bits_sent_per_node=state.bits_sent_per_node + 32 * problem.d)


def d2_step(state, problem, topo, compressor, hp, rng=None) -> AlgState:
    """Uncompressed D2; the first round uses x1 = (x0 - eta g0) W."""
    streams = _streams(rng)
    g = _base_grad(state, problem, hp, streams)
    if state.X_prev is None:
        X_new = (state.X - hp.eta * g) @ topo.W
    else:
        X_new = (2 * state.X - state.X_prev - hp.eta * (g - state.grad_prev)) @ topo.W
    return replace(
        state,
        X=X_new,
        X_prev=state.X,
        grad_prev=g,
        t=state.t + 1,
        bits_sent_per_node=state.bits_sent_per_node + 32 * problem.d,
    )


STEPS: dict[str, Callable[..., AlgState]] = {
    "motef": motef_step,
    "motef_vr": motef_vr_step,
    "beer": beer_step,
    "choco": choco_step,
    "dsgd": dsgd_step,
    "d2": d2_step,
}


def evaluate(state: AlgState, problem: OracleSuite, test_metric: Callable[[np.ndarray], float] | None = None) -> MetricsRecord:
    """Metrics at the averaged iterate x-bar, using exact gradients."""
    x_bar = state.x_bar
    grad = problem.global_grad(x_bar)
    dev = state.X - x_bar[:, None]
    loss = problem.loss(x_bar)
    return MetricsRecord(
        t=state.t,
        bits_cum=state.bits_sent_per_node,
        grad_norm_sq=float(grad @ grad),
        consensus=float(np.sum(dev * dev)) / problem.n,
        loss=loss,
        subopt=problem.suboptimality(x_bar),
        test_acc=None if test_metric is None else test_metric(x_bar),
    )


def run(
    problem: OracleSuite,
    topo: Topology,
    compressor: CompressorSpec,
    hp: HyperParams,
    algorithm: str = "motef",
    eval_every: int = 1,
    rng=None,
    x0=None,
    test_metric: Callable[[np.ndarray], float] | None = None,
    stop: Callable[[MetricsRecord], bool] | None = None,
) -> list[MetricsRecord]:
    """Run ``hp.iters`` rounds and record metrics every ``eval_every`` rounds.

    A record is always taken at t = 0 and at the final round. ``stop`` may end
    the run early after any record; runs that produce non-finite iterates
    stop at the first record showing it.
    """
    if algorithm not in STEPS:
        raise ValidationError(f"unknown algorithm {algorithm!r}; expected one of {sorted(STEPS)}")
    if eval_every < 1:
        raise ValidationError("eval_every must be at least 1")
    step = STEPS[algorithm]
    streams = _streams(rng)
    state = init_state(problem, topo, hp, x0, streams)
    records = [evaluate(state, problem, test_metric)]
    if stop is not None and stop(records[-1]):
        return records
    for t in range(1, hp.iters + 1):
        state = step(state, problem, topo, compressor, hp, streams)
        if t % eval_every == 0 or t == hp.iters:
            rec = evaluate(state, problem, test_metric)
            records.append(rec)
            if not math.isfinite(rec.grad_norm_sq) or (stop is not None and stop(rec)):
                break
    return records
