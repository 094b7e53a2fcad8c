"""Gaussian-approximation variances and error-probability bounds.

The mutual information density normalized as ``sqrt(M n) (I - Cbar)`` is
asymptotically Gaussian with variance ``V_n``. Its two extreme forms
``V_minus`` (codewords with ``C C^H = n I``) and ``V_plus`` give the lower
and upper bounds on the optimal average error probability at second-order
rate ``r``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from .channel import Dims, SystemConfig, _effective_S_from_root, _theta
from .deteq import (FixedPoint, SecondOrderStats, second_moment_trace,
                    second_order_stats, solve_fixed_point)
from .errors import DomainError, StabilityError

__all__ = [
    "CodewordGram", "OaepBounds", "Analysis", "variance_vn", "bound_variances",
    "oaep_bounds", "rate_from_r", "r_from_rate", "analyze", "normal_cdf",
]


def normal_cdf(x):
    """Standard normal CDF, accurate in both tails."""
    return ndtr(x)


@dataclass(frozen=True)
class CodewordGram:
    """``Tr(A_n^2)`` for ``A_n = I_M - C C^H / n``."""

    trace_An2: float
    label: str = "explicit"

    def __post_init__(self):
        if self.trace_An2 < 0:
            raise ValueError(f"Tr(A^2) must be >= 0, got {self.trace_An2}")

    @classmethod
    def from_matrix(cls, C, label: str = "explicit") -> "CodewordGram":
        C = np.asarray(C)
        M, n = C.shape
        A = np.eye(M) - C @ C.conj().T / n
        return cls(float(np.real(np.sum(A * A.T))), label)

    @classmethod
    def all_ones(cls, M: int) -> "CodewordGram":
        return cls(float(M * (M - 1)), "all-ones")

    @classmethod
    def equal_gram(cls) -> "CodewordGram":
        return cls(0.0, "equal-gram")

    @classmethod
    def gaussian(cls, M: int, n: int) -> "CodewordGram":
        """Expected value ``M^2 / n`` for an i.i.d. CN(0, 1) codeword."""
        return cls(M * M / n, "gaussian-normalized")


def _bracket(stats: SecondOrderStats) -> float:
    row2 = stats.Pi_inv[1]
    return float(row2 @ stats.q_RD / stats.delta_S ** 2 + stats.gamma_S / stats.delta_S)


def _v_minus(stats: SecondOrderStats, dims: Dims) -> float:
    if not stats.Xi > 0:
        raise StabilityError("Xi", stats.Xi)
    return float(-dims.tau * np.log(stats.Xi) + dims.alpha
                 - stats.z ** 2 * second_moment_trace(stats) / dims.beta)


def bound_variances(stats: SecondOrderStats, dims: Dims) -> tuple[float, float]:
    """``(V_minus, V_plus)``.

    Raises
    ------
    StabilityError
        If a variance is not positive or ``V_plus < V_minus``.
    """
    vm = _v_minus(stats, dims)
    br = _bracket(stats)
    if br < 0:
        raise StabilityError("V_plus - V_minus", stats.omega_bar ** 4 * br)
    vp = vm + stats.omega_bar ** 4 * br
    if not vm > 0:
        raise StabilityError("V_minus", vm)
    return vm, vp


def variance_vn(stats: SecondOrderStats, cw: CodewordGram, dims: Dims) -> float:
    """Variance of the normalized density for a codeword with Gram ``cw``."""
    vm = _v_minus(stats, dims)
    br = _bracket(stats)
    vn = vm + dims.tau * stats.omega_bar ** 4 * cw.trace_An2 / dims.M * br
    if not vn > 0:
        raise StabilityError("V_n", vn)
    return vn


@dataclass(frozen=True)
class OaepBounds:
    r: float
    V_minus: float
    V_plus: float
    lower: float
    upper: float
    mean_capacity: float = float("nan")
    rate: float = float("nan")


def oaep_bounds(r: float, V_minus: float, V_plus: float, *,
                mean_capacity: float = float("nan"), dims: Dims | None = None) -> OaepBounds:
    if not (V_minus > 0 and V_plus > 0):
        raise ValueError("variances must be positive")
    lower = float(normal_cdf(r / np.sqrt(V_minus))) if r <= 0 else 0.5
    upper = float(normal_cdf(r / np.sqrt(V_plus)))
    rate = rate_from_r(mean_capacity, r, dims) if dims is not None else float("nan")
    return OaepBounds(r, V_minus, V_plus, lower, upper, mean_capacity, rate)


def rate_from_r(mean_capacity: float, r: float, dims: Dims) -> float:
    """``R = Cbar + r / sqrt(M n)`` in nats per antenna per channel use."""
    return float(mean_capacity + r / np.sqrt(dims.M * dims.n))


def r_from_rate(mean_capacity: float, rate: float, dims: Dims) -> float:
    return float(np.sqrt(dims.M * dims.n) * (rate - mean_capacity))


@dataclass(frozen=True, eq=False)
class Analysis:
    """Everything derived from one configuration and phase vector."""

    fixed_point: FixedPoint
    stats: SecondOrderStats
    dims: Dims
    V_minus: float
    V_plus: float

    @property
    def mean_capacity(self) -> float:
        return self.stats.mean_capacity

    def V_n(self, cw: CodewordGram) -> float:
        return variance_vn(self.stats, cw, self.dims)

    def bounds(self, r: float) -> OaepBounds:
        return oaep_bounds(r, self.V_minus, self.V_plus,
                           mean_capacity=self.mean_capacity, dims=self.dims)


def analyze(config: SystemConfig, theta, *, tol: float = 1e-10, init=None) -> Analysis:
    """Run fixed point, second-order statistics and bound variances."""
    th = _theta(theta)
    if th.size != config.L:
        raise DomainError(f"theta must have length {config.L}, got {th.size}")
    S = _effective_S_from_root(config.sqrt_of("T_irs"), config.R_irs, th)
    R, D = config.normalized_R(), config.normalized_D()
    fp = solve_fixed_point(R, D, S, 1.0, config.M, tol=tol, init=init)
    stats = second_order_stats(fp, R, D, S)
    vm, vp = bound_variances(stats, config.dims)
    return Analysis(fp, stats, config.dims, vm, vp)
