"""Gradient descent on the IRS phases with backtracking line search.

The objective is the error-probability lower bound ``K(theta) = Phi(r / sqrt(V_minus))``.
Gradients are central finite differences; each stencil point is warm-started
from the fixed point at the current iterate.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .channel import SystemConfig, _effective_S_from_root, _theta
from .deteq import FixedPoint, second_order_stats, solve_fixed_point
from .errors import DomainError
from .fbl import bound_variances, normal_cdf

__all__ = ["OptimizerOptions", "IterationRecord", "OptimizerTrace", "objective_K",
           "gradient_K", "optimize", "OBJECTIVE_TOL"]

# Tight enough that FD noise stays far below the stencil truncation error.
OBJECTIVE_TOL = 1e-14
STALL_FACTOR = 1e-12


@dataclass(frozen=True)
class OptimizerOptions:
    """Line-search and stopping parameters.

    ``armijo="verbatim"`` steps along the unit gradient direction and accepts
    when the decrease is at least ``lam * kappa * |grad|``. ``"conventional"``
    steps along the raw gradient and uses ``lam * kappa * |grad|**2``.
    """

    c: float = 0.5
    kappa: float = 0.1
    lambda0: float = 1.0
    h: float = 1e-5
    ftol: float = 1e-8
    gtol: float = 1e-6
    max_iter: int = 500
    armijo: str = "verbatim"
    threads: int = 1

    def __post_init__(self):
        if not 0 < self.c < 1:
            raise DomainError(f"c must lie in (0, 1), got {self.c}")
        if not 0 < self.kappa < 1:
            raise DomainError(f"kappa must lie in (0, 1), got {self.kappa}")
        if not self.lambda0 > 0:
            raise DomainError(f"lambda0 must be > 0, got {self.lambda0}")
        if not self.h > 0:
            raise DomainError(f"h must be > 0, got {self.h}")
        if self.max_iter < 1:
            raise DomainError("max_iter must be >= 1")
        if self.armijo not in ("verbatim", "conventional"):
            raise DomainError(f"armijo must be 'verbatim' or 'conventional', got {self.armijo!r}")


class _Objective:
    """Evaluates ``K`` for one configuration, caching matrix square roots."""

    def __init__(self, config: SystemConfig, r: float, tol: float = OBJECTIVE_TOL):
        self.config = config
        self.r = float(r)
        self.tol = tol
        self.R = config.normalized_R()
        self.D = config.normalized_D()
        self.T_root = config.sqrt_of("T_irs")

    def evaluate(self, theta, init: FixedPoint | None = None) -> tuple[float, FixedPoint]:
        th = _theta(theta)
        if th.size != self.config.L:
            raise DomainError(f"theta must have length {self.config.L}, got {th.size}")
        S = _effective_S_from_root(self.T_root, self.config.R_irs, th)
        fp = solve_fixed_point(self.R, self.D, S, 1.0, self.config.M, tol=self.tol, init=init)
        stats = second_order_stats(fp, self.R, self.D, S)
        vm, _ = bound_variances(stats, self.config.dims)
        return float(normal_cdf(self.r / np.sqrt(vm))), fp

    def gradient(self, theta, h: float, init: FixedPoint | None, threads: int = 1):
        th = _theta(theta)
        L = th.size

        def diff(l):
            e = np.zeros(L)
            e[l] = h
            up, _ = self.evaluate(th + e, init)
            down, _ = self.evaluate(th - e, init)
            return (up - down) / (2.0 * h)

        if threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                return np.array(list(pool.map(diff, range(L))))
        return np.array([diff(l) for l in range(L)])


def objective_K(theta, config: SystemConfig, r: float, *, tol: float = OBJECTIVE_TOL) -> float:
    """Lower bound ``Phi(r / sqrt(V_minus))`` at phases ``theta``."""
    return _Objective(config, r, tol).evaluate(theta)[0]


def gradient_K(theta, config: SystemConfig, r: float, h: float = 1e-5, *,
               threads: int = 1, tol: float = OBJECTIVE_TOL) -> np.ndarray:
    """Central-difference gradient of :func:`objective_K` (``2 L`` evaluations)."""
    obj = _Objective(config, r, tol)
    _, fp = obj.evaluate(theta)
    return obj.gradient(theta, h, fp, threads)


@dataclass(frozen=True)
class IterationRecord:
    iteration: int
    theta: np.ndarray
    K: float
    grad_norm: float
    step: float


@dataclass(frozen=True, eq=False)
class OptimizerTrace:
    records: list = field(default_factory=list)
    theta: np.ndarray | None = None
    reason: str = ""

    @property
    def K_values(self) -> np.ndarray:
        return np.array([rec.K for rec in self.records])

    @property
    def final_K(self) -> float:
        return self.records[-1].K

    @property
    def wrapped_theta(self) -> np.ndarray:
        return np.mod(self.theta, 2.0 * np.pi)


def optimize(theta0, config: SystemConfig, r: float,
             opts: OptimizerOptions | None = None) -> OptimizerTrace:
    """Minimize ``K`` from ``theta0``.

    Record ``0`` holds the starting point. Each later record is an accepted
    step, so ``K`` is non-increasing along ``records``. The returned
    ``theta`` is unwrapped; use :attr:`OptimizerTrace.wrapped_theta` for
    angles in ``[0, 2 pi)``.

    Termination reasons: ``gradient-tolerance``, ``function-tolerance``,
    ``max-iterations`` and ``stall`` (no step above ``1e-12 lambda0``
    passed the decrease test).
    """
    opts = opts or OptimizerOptions()
    obj = _Objective(config, r)
    theta = _theta(theta0).copy()
    K, fp = obj.evaluate(theta)
    records = [IterationRecord(0, theta.copy(), K, float("nan"), 0.0)]
    reason = "max-iterations"
    for it in range(1, opts.max_iter + 1):
        grad = obj.gradient(theta, opts.h, fp, opts.threads)
        gnorm = float(np.linalg.norm(grad))
        if it == 1:
            records[0] = IterationRecord(0, theta.copy(), K, gnorm, 0.0)
        if gnorm < opts.gtol:
            reason = "gradient-tolerance"
            break
        if opts.armijo == "verbatim":
            direction, threshold = grad / gnorm, opts.kappa * gnorm
        else:
            direction, threshold = grad, opts.kappa * gnorm ** 2
        lam = opts.lambda0
        while True:
            trial = theta - lam * direction
            K_new, fp_new = obj.evaluate(trial, fp)
            if K - K_new >= lam * threshold:
                break
            lam *= opts.c
            if lam < STALL_FACTOR * opts.lambda0:
                break
        if lam < STALL_FACTOR * opts.lambda0:
            reason = "stall"
            break
        decrease = K - K_new
        theta, K, fp = trial, K_new, fp_new
        records.append(IterationRecord(it, theta.copy(), K, gnorm, lam))
        if decrease < opts.ftol:
            reason = "function-tolerance"
            break
    return OptimizerTrace(records, theta, reason)
