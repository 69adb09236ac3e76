"""Lyapunov error terms for a live state and checks of the descent constants.

Error terms of a state (X, H, G, V, M), with ``1`` the all-ones vector:

=========  ==================================
G_hat      ||grad F(X) 1 - M 1||^2
G_tilde    ||grad F(X) - M||_F^2
omega1     ||H - X||_F^2
omega2     ||G - V||_F^2
omega3     ||X - x_bar 1^T||_F^2
omega4     ||V - v_bar 1^T||_F^2
omega5     ||v_bar||^2
=========  ==================================

The potential is ``phi = (f(x_bar) - f*) + w . (G_hat, G_tilde, omega1..4)``
with weights

    w = (c1/(n^2 L), c2 tau/(n L), c3 L/(rho^3 n tau), c4 tau/(rho n L),
         c5 L/(rho^3 n tau), c6 tau/(rho n L)).

Descent-constant systems
------------------------
One round of the analysis gives ``Omega+ <= A Omega + b1 omega5 + b2 lambda^2
sigma^2`` for the six-vector Omega above. The potential descends when

    (I - A^T) c >= q,    q = (eta/n^2, 0, 0, 0, eta L^2/n, 0),
    b1^T c <= eta/2 - eta^2 L / 2,

with ``(1 - mu eta) I`` in place of ``I`` under the PL condition. Every row is
homogeneous in L once the stepsizes are expressed through L, so the systems
are built at ``L = 1`` (and mean-squared smoothness ``l = 1`` for ``vr``), with
the worst-case ``C = sigma_max^2(W - I) = 4``.

Several rows are tight by construction: for ``nonconvex`` and ``vr`` the
G_hat row holds with equality because ``c_lambda * c1 = c_eta``. The diagonal
gaps of ``I - A`` are therefore formed analytically, and each row's slack is
divided by the magnitude of its two sides; a point passes when every
normalized slack is at least ``-tol`` (default ``1e-12``).
"""

from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .algorithms import AlgState
from .errors import ValidationError
from .problems import OracleSuite

__all__ = [
    "LyapunovBreakdown",
    "ConstantSystem",
    "VerificationResult",
    "ConsensusReport",
    "FAMILIES",
    "NONCONVEX_WEIGHTS",
    "lyapunov_components",
    "lyapunov_weights",
    "build_constant_system",
    "theoretical_stepsizes",
    "verify_descent_constants",
    "default_grid",
    "consensus_report",
]

C_WORST = 4.0
NONCONVEX_WEIGHTS = (1 / 500, 13 / 200000, 1 / 20, 1 / 400000, 9 / 100, 1 / 200000)

FAMILIES = {
    # (c_gamma, c_lambda, c_eta), weight constants
    "nonconvex": ((1 / 200, 1 / 200, 1e-5), NONCONVEX_WEIGHTS),
    "pl": ((1 / 200000, 1 / 200000, 1e-8), (1 / 250, 13 / 200000, 1 / 20, 1 / 400000, 2.0, 1 / 200000)),
    "vr": ((1 / 200, 1 / 200, 1e-5), (0.0020, 0.000065, 0.005, 0.0000025, 0.01, 0.000005)),
}

TERMS = ("G_hat", "G_tilde", "omega1", "omega2", "omega3", "omega4")


# ---------------------------------------------------------------------------
# error terms


@dataclass(frozen=True)
class LyapunovBreakdown:
    F: float | None
    G_hat: float
    G_tilde: float
    omega1: float
    omega2: float
    omega3: float
    omega4: float
    omega5: float
    weights: tuple[float, ...]
    phi: float

    @property
    def terms(self) -> np.ndarray:
        return np.array([getattr(self, name) for name in TERMS])


def lyapunov_weights(n: int, rho: float, tau: float, L: float, constants=NONCONVEX_WEIGHTS) -> np.ndarray:
    c1, c2, c3, c4, c5, c6 = constants
    return np.array(
        [
            c1 / (n**2 * L),
            c2 * tau / (n * L),
            c3 * L / (rho**3 * n * tau),
            c4 * tau / (rho * n * L),
            c5 * L / (rho**3 * n * tau),
            c6 * tau / (rho * n * L),
        ]
    )


def _sq(A: np.ndarray) -> float:
    return float(np.sum(A * A))


def lyapunov_components(
    state: AlgState,
    problem: OracleSuite,
    rho: float,
    f_star: float | None = None,
    tau: float = 1.0,
    L: float | None = None,
) -> LyapunovBreakdown:
    """Evaluate every error term of ``state`` by direct matrix arithmetic.

    ``f_star`` defaults to ``problem.f_star``; without it ``F`` is None and
    ``phi`` carries only the weighted error terms. ``L`` defaults to
    ``problem.smoothness``.
    """
    if f_star is None:
        f_star = problem.f_star
    if L is None:
        L = problem.smoothness
    if L is None or L <= 0:
        raise ValidationError("a positive smoothness constant L is required")
    X, H, G, V, M = state.X, state.H, state.G, state.V, state.M
    D = problem.exact_grad_matrix(X) - M
    x_bar = X.mean(axis=1)
    v_bar = V.mean(axis=1)
    s = D.sum(axis=1)
    values = dict(
        G_hat=float(s @ s),
        G_tilde=_sq(D),
        omega1=_sq(H - X),
        omega2=_sq(G - V),
        omega3=_sq(X - x_bar[:, None]),
        omega4=_sq(V - v_bar[:, None]),
    )
    F = None if f_star is None else problem.loss(x_bar) - f_star
    w = lyapunov_weights(problem.n, rho, tau, L)
    phi = float(w @ np.array([values[k] for k in TERMS])) + (F or 0.0)
    return LyapunovBreakdown(F=F, omega5=float(v_bar @ v_bar), weights=tuple(w), phi=phi, **values)


# ---------------------------------------------------------------------------
# constant systems


@dataclass(frozen=True, eq=False)
class ConstantSystem:
    """One instance of a descent-constant system at ``L = 1``.

    ``A = I - diag(gap) + off``; the gap is kept separately so tight rows can
    be evaluated without cancellation.
    """

    family: str
    alpha: float
    rho: float
    n: int
    tau: float
    mu_over_L: float | None
    gamma: float
    lam: float
    eta: float
    gap: np.ndarray
    off: np.ndarray
    b1: np.ndarray
    b2: np.ndarray
    q: np.ndarray
    c: np.ndarray
    contraction: float = field(default=1.0)

    @property
    def A(self) -> np.ndarray:
        return np.diag(1.0 - self.gap) + self.off

    @property
    def side_condition(self) -> float:
        """``eta/2 - eta^2/2 - b1^T c``; non-negative when the system holds."""
        return self.eta / 2 - self.eta**2 / 2 - float(self.b1 @ self.c)

    def row_slack(self) -> np.ndarray:
        """Normalized slack of ``(contraction I - A^T) c >= q``, row by row."""
        gap = self.gap - (1.0 - self.contraction)
        lhs = gap * self.c
        rhs = self.off.T @ self.c + self.q
        scale = np.abs(lhs) + np.abs(rhs)
        return (lhs - rhs) / np.where(scale > 0, scale, 1.0)

    def side_slack(self) -> float:
        return self.side_condition / (self.eta / 2)

    def margin(self) -> tuple[float, int]:
        """Smallest normalized slack and its row (6 is the side condition)."""
        slacks = np.append(self.row_slack(), self.side_slack())
        k = int(np.argmin(slacks))
        return float(slacks[k]), k


def _check_unit(name: str, value: float) -> None:
    if not 0 < value <= 1:
        raise ValidationError(f"{name} must lie in (0, 1], got {value}")


def theoretical_stepsizes(
    family: str,
    alpha: float,
    rho: float,
    n: int,
    tau: float = 1.0,
    L: float = 1.0,
    c_gamma: float | None = None,
    c_lambda: float | None = None,
    c_eta: float | None = None,
) -> tuple[float, float, float]:
    """Return ``(gamma, lambda, eta)`` for a family; ``eta`` scales as 1/L."""
    if family not in FAMILIES:
        raise ValidationError(f"unknown family {family!r}; expected one of {sorted(FAMILIES)}")
    (cg, cl, ce), _ = FAMILIES[family]
    cg = cg if c_gamma is None else c_gamma
    cl = cl if c_lambda is None else c_lambda
    ce = ce if c_eta is None else c_eta
    gamma = cg * alpha * rho
    if family == "vr":
        lam = cl * alpha**2 * rho**6 * tau**2 / n
    else:
        lam = cl * alpha * rho**3 * tau
    eta = ce * alpha * rho**3 * tau / L
    return gamma, lam, eta


def build_constant_system(
    family: str,
    alpha: float,
    rho: float,
    n: int,
    tau: float = 1.0,
    mu_over_L: float | None = None,
    c_gamma: float | None = None,
    c_lambda: float | None = None,
    c_eta: float | None = None,
    weights: tuple[float, ...] | None = None,
) -> ConstantSystem:
    """Fill A, b1, b2, q and c for one point of the parameter space.

    Optional ``c_*`` and ``weights`` overrides replace the family's published
    constants (used for sensitivity checks).
    """
    for name, v in (("alpha", alpha), ("rho", rho), ("tau", tau)):
        _check_unit(name, v)
    if n < 1:
        raise ValidationError(f"n must be at least 1, got {n}")
    if family == "pl":
        if mu_over_L is None:
            raise ValidationError("family 'pl' needs mu_over_L")
        _check_unit("mu_over_L", mu_over_L)
    g, lam, eta = theoretical_stepsizes(family, alpha, rho, n, tau, 1.0, c_gamma, c_lambda, c_eta)
    a, r, C = alpha, rho, C_WORST
    w = FAMILIES[family][1] if weights is None else tuple(weights)
    off = np.zeros((6, 6))
    if family == "vr":
        d1, d2, d3, d4, d5, d6 = w
        c = np.array([d1 / (a * r**3 * n * tau), d2 / n, d3 / (r**3 * n * tau), d4 / (r * n), d5 / (r**3 * n * tau), d6 / (r * n)])
        off[0, [2, 4, 5]] = [3 * C * g**2, 3 * C * g**2, 3 * eta**2]
        off[1, [2, 4, 5]] = [3 * C * g**2, 3 * C * g**2, 3 * eta**2]
        off[2, [4, 5]] = [6 * C * g**2 / a, 6 * eta**2 / a]
        off[3, [1, 2, 4, 5]] = [6 * lam**2 / a, 36 * C * g**2 / a, 36 * C * g**2 / a, 6 * C * g**2 / a + 36 * eta**2 / a]
        off[4, [2, 5]] = [6 * g * C / r, 6 * eta**2 / (g * r)]
        off[5, [1, 2, 3, 4]] = [3 * lam**2 / (g * r), 18 * C * g / r, 6 * C * g / r, 18 * C * g / r]
        gap = np.array([lam, lam, a / 2 - 6 * C * g**2 / a, a / 2 - 6 * C * g**2 / a, g * r / 2, g * r / 2 - 18 * eta**2 / (g * r)])
        b1 = np.array([3 * n * eta**2, 3 * n * eta**2, 6 * n * eta**2 / a, 36 * n * eta**2 / a, 0.0, 18 * n * eta**2 / (g * r)])
        b2 = np.array([2 * n, 2 * n, 0.0, 12 * n / a, 0.0, 6 * n / (g * r)])
    else:
        c = lyapunov_weights(n, r, tau, 1.0, w)
        off[0, [2, 4, 5]] = [3 * n * g**2 * C / lam, 3 * n * g**2 * C / lam, 3 * n * eta**2 / lam]
        off[1, [2, 4, 5]] = [3 * g**2 * C / lam, 3 * g**2 * C / lam, 3 * eta**2 / lam]
        off[2, [4, 5]] = [6 * g**2 * C / a, 6 * eta**2 / a]
        off[3, [1, 2, 4, 5]] = [
            6 * lam**2 / a,
            36 * lam**2 * g**2 * C / a,
            36 * lam**2 * g**2 * C / a,
            6 * g**2 * C / a + 36 * lam**2 * eta**2 / a,
        ]
        off[4, [2, 5]] = [6 * g * C / r, 6 * eta**2 / (g * r)]
        off[5, [1, 2, 3, 4]] = [12 * lam**2 / (g * r), 36 * g * lam**2 * C / r, 6 * g * C / r, 36 * g * lam**2 * C / r]
        gap = np.array(
            [lam, lam, a / 2 - 6 * g**2 * C / a, a / 2 - 6 * g**2 * C / a, g * r / 2, g * r / 2 - 36 * eta**2 * lam**2 / (g * r)]
        )
        b1 = np.array(
            [3 * n**2 * eta**2 / lam, 3 * n * eta**2 / lam, 6 * eta**2 * n / a, 36 * eta**2 * lam**2 * n / a, 0.0, 36 * eta**2 * g * n / r]
        )
        b2 = np.array([n, 2 * n, 0.0, 6 * n / a, 0.0, 6 * n / (g * r)])
    q = np.array([eta / n**2, 0.0, 0.0, 0.0, eta / n, 0.0])
    contraction = 1.0 - mu_over_L * eta if family == "pl" else 1.0
    return ConstantSystem(
        family=family,
        alpha=alpha,
        rho=rho,
        n=int(n),
        tau=tau,
        mu_over_L=mu_over_L,
        gamma=g,
        lam=lam,
        eta=eta,
        gap=gap,
        off=off,
        b1=b1,
        b2=b2,
        q=q,
        c=c,
        contraction=contraction,
    )


@dataclass(frozen=True)
class VerificationResult:
    family: str
    passed: bool
    worst_margin: float
    worst_point: dict
    worst_row: int
    points: list[dict]

    def summary(self) -> str:
        pt = " ".join(f"{k}={v:.6g}" for k, v in self.worst_point.items())
        status = "PASS" if self.passed else "FAIL"
        return f"{self.family}: {status} worst_margin={self.worst_margin:.6g} row={self.worst_row} at {pt} ({len(self.points)} points)"

    def to_csv(self, path: str | Path) -> None:
        keys = list(self.points[0])
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=keys, lineterminator="\n")
            w.writeheader()
            for p in self.points:
                w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in p.items()})


def default_grid(family: str, points: int = 5) -> dict[str, list]:
    grid = {
        "alpha": np.logspace(-2, 0, points).tolist(),
        "rho": np.logspace(-3, 0, points).tolist(),
        "n": [1, 4, 64, 1024],
        "tau": np.logspace(-2, 0, points).tolist(),
    }
    if family == "pl":
        grid["mu_over_L"] = np.logspace(-3, 0, points).tolist()
    return grid


def verify_descent_constants(
    family: str,
    grid: dict[str, list] | None = None,
    tol: float = 1e-12,
    **overrides,
) -> VerificationResult:
    """Check a constant system at every point of a grid.

    ``grid`` maps ``alpha``, ``rho``, ``n``, ``tau`` (and ``mu_over_L`` for
    ``pl``) to value lists; missing axes use :func:`default_grid`. Extra
    keyword arguments are forwarded to :func:`build_constant_system`.
    """
    if family not in FAMILIES:
        raise ValidationError(f"unknown family {family!r}; expected one of {sorted(FAMILIES)}")
    axes = default_grid(family)
    axes.update(grid or {})
    if family != "pl":
        axes.pop("mu_over_L", None)
    if any(len(v) == 0 for v in axes.values()):
        raise ValidationError("grid axes must be non-empty")
    names = list(axes)
    points = []
    worst = (np.inf, None, -1)
    for combo in itertools.product(*axes.values()):
        kw = dict(zip(names, combo))
        system = build_constant_system(family, **kw, **overrides)
        margin, row = system.margin()
        kw = {k: (int(v) if k == "n" else float(v)) for k, v in kw.items()}
        points.append({**kw, "margin": margin, "row": row})
        if margin < worst[0]:
            worst = (margin, kw, row)
    return VerificationResult(
        family=family,
        passed=worst[0] >= -tol,
        worst_margin=float(worst[0]),
        worst_point=worst[1],
        worst_row=worst[2],
        points=points,
    )


# ---------------------------------------------------------------------------
# consensus


@dataclass(frozen=True)
class ConsensusReport:
    omega3_per_node: float
    mean_local_grad_sq: float
    avg_grad_sq: float
    bound: float

    @property
    def holds(self) -> bool:
        return self.mean_local_grad_sq <= self.bound + 1e-9


def consensus_report(state: AlgState, problem: OracleSuite, L: float | None = None) -> ConsensusReport:
    """Compare ``(1/n) sum_i ||grad f(x_i)||^2`` with ``2 L^2 omega3/n + 2 ||grad f(x_bar)||^2``."""
    L = problem.smoothness if L is None else L
    X = state.X
    n = problem.n
    x_bar = X.mean(axis=1)
    omega3 = _sq(X - x_bar[:, None]) / n
    local = np.mean([_sq(problem.global_grad(X[:, i])) for i in range(n)])
    avg = _sq(problem.global_grad(x_bar))
    return ConsensusReport(
        omega3_per_node=omega3,
        mean_local_grad_sq=float(local),
        avg_grad_sq=avg,
        bound=2 * L**2 * omega3 + 2 * avg,
    )
