"""Deterministic equivalents of the resolvent ``Q(z) = (z I + H H^H)^{-1}``.

The scalars ``delta, omega, xi`` solve

    delta = Tr(R G) / L
    omega = delta Tr(S F) / M
    xi    = Tr(D G) / M

with ``omega_bar = 1 / (1 + omega + xi)``,
``G = (z I + omega_bar D + (M omega omega_bar / (L delta)) R)^{-1}`` and
``F = (I + omega_bar delta S)^{-1}``. Matrices are taken at unit noise
power: the caller scales ``R`` and ``D`` by the link SNRs.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import Dims
from .errors import ConvergenceError, DomainError, StabilityError

__all__ = [
    "FixedPoint", "SecondOrderStats", "solve_fixed_point", "mean_capacity",
    "trace_approximation", "second_order_stats", "resolvent_moment_pair",
    "second_moment_trace", "COND_LIMIT",
]

COND_LIMIT = 1e12


def _tr(A, B) -> float:
    """Real part of ``Tr(A B)`` without forming the product."""
    return float(np.real(np.sum(A * B.T)))


def _logdet_pd(A) -> float:
    c = np.linalg.cholesky(A)
    return 2.0 * float(np.sum(np.log(np.real(np.diagonal(c)))))


@dataclass(frozen=True, eq=False)
class FixedPoint:
    z: float
    delta: float
    omega: float
    xi: float
    omega_bar: float
    G: np.ndarray
    F: np.ndarray
    M: int
    iterations: int
    residual: float

    @property
    def N(self) -> int:
        return self.G.shape[0]

    @property
    def L(self) -> int:
        return self.F.shape[0]


class _Operators:
    """Pre-factored inputs for repeated evaluations of the fixed-point map."""

    def __init__(self, R, D, S, M):
        self.R = np.asarray(R, dtype=complex)
        self.D = np.asarray(D, dtype=complex)
        S = np.asarray(S, dtype=complex)
        self.M = M
        self.N = self.R.shape[0]
        self.L = S.shape[0]
        if self.R.shape != (self.N, self.N) or self.D.shape != (self.N, self.N):
            raise DomainError(f"R and D must be square of equal size, got {self.R.shape}, {self.D.shape}")
        if S.shape != (self.L, self.L):
            raise DomainError(f"S must be square, got {S.shape}")
        s, V = np.linalg.eigh((S + S.conj().T) / 2)
        self.s = np.clip(s, 0.0, None)
        self.V = V
        self.trR = float(np.trace(self.R).real)
        self.trD = float(np.trace(self.D).real)

    def step(self, delta, omega, xi, z):
        """One application of the map; returns new scalars and ``G``."""
        ob = 1.0 / (1.0 + omega + xi)
        f = 1.0 / (1.0 + ob * delta * self.s)
        tr_sf = float(np.sum(self.s * f))
        # M omega omega_bar / (L delta) = omega_bar Tr(S F) / L, finite at delta = 0
        coef = ob * tr_sf / self.L
        Ginv = z * np.eye(self.N) + ob * self.D + coef * self.R
        G = np.linalg.inv(Ginv)
        G = (G + G.conj().T) / 2
        return (_tr(self.R, G) / self.L, delta * tr_sf / self.M, _tr(self.D, G) / self.M), G

    def F(self, delta, ob):
        f = 1.0 / (1.0 + ob * delta * self.s)
        return (self.V * f) @ self.V.conj().T


_TINY = np.finfo(float).tiny


def _rel_residual(new, old) -> float:
    # subnormal values carry too few bits for a relative test
    res = 0.0
    for a, b in zip(new, old):
        scale = max(abs(a), abs(b), _TINY)
        res = max(res, abs(a - b) / scale)
    return res


def solve_fixed_point(R, D, S, z: float, M: int, *, tol: float = 1e-10,
                      max_iter: int = 10_000, init=None) -> FixedPoint:
    """Solve the coupled system for ``(delta, omega, xi)`` at ``z > 0``.

    Damped Picard iteration started from the large-``z`` asymptotics
    ``delta = Tr R / (L z)``, ``omega = 0``, ``xi = Tr D / (M z)`` unless a
    warm start ``init`` (a :class:`FixedPoint` or a 3-tuple) is given. The
    damping factor drops to 0.5 the first time the residual increases.

    Raises
    ------
    DomainError
        If ``z <= 0`` or shapes disagree.
    ConvergenceError
        If the relative residual is still above ``tol`` after ``max_iter``.
    """
    if not z > 0:
        raise DomainError(f"z must be > 0, got {z}")
    return _solve(_Operators(R, D, S, M), z, tol, max_iter, init)


def _solve(ops: _Operators, z, tol, max_iter, init) -> FixedPoint:
    if init is None:
        x = (ops.trR / (ops.L * z), 0.0, ops.trD / (ops.M * z))
    elif isinstance(init, FixedPoint):
        x = (init.delta, init.omega, init.xi)
    else:
        x = tuple(float(v) for v in init)
    damping = 1.0
    prev = np.inf
    res = np.inf
    for it in range(1, max_iter + 1):
        mapped, G = ops.step(*x, z)
        res = _rel_residual(mapped, x)
        if res <= tol:
            x = mapped
            break
        if res > prev:
            damping = 0.5
        prev = res
        x = tuple(a + damping * (b - a) for a, b in zip(x, mapped))
    else:
        raise ConvergenceError("fixed-point iteration did not converge", res, max_iter)
    delta, omega, xi = x
    ob = 1.0 / (1.0 + omega + xi)
    _, G = ops.step(delta, omega, xi, z)
    return FixedPoint(z=z, delta=delta, omega=omega, xi=xi, omega_bar=ob, G=G,
                      F=ops.F(delta, ob), M=ops.M, iterations=it, residual=res)


def mean_capacity(fp: FixedPoint) -> float:
    """Deterministic equivalent of ``E C(z)`` in nats per transmit antenna."""
    M, N = fp.M, fp.N
    val = (N * np.log(1.0 / fp.z) - _logdet_pd(fp.G) - _logdet_pd(fp.F)
           + M * np.log(1.0 + fp.xi + fp.omega)
           - 2.0 * M * fp.omega * fp.omega_bar - M * fp.xi * fp.omega_bar)
    return float(val / M)


def trace_approximation(fp: FixedPoint, M_test) -> float:
    """``Tr(M_test G) / L``, the deterministic equivalent of ``E Tr(M_test Q) / L``."""
    return _tr(np.asarray(M_test), fp.G) / fp.L


@dataclass(frozen=True, eq=False)
class SecondOrderStats:
    """Second-order quantities entering the variance formulas.

    ``gamma_S`` and ``gamma_SI`` carry a factor ``delta**2`` (see
    :func:`second_order_stats`); ``s_sq`` and ``s_lin`` are the same
    quantities divided by ``delta**2`` and stay finite when ``delta = 0``.
    """

    gamma_R: float
    gamma_RI: float
    gamma_S: float
    gamma_SI: float
    gamma_D: float
    gamma_RD: float
    gamma_DI: float
    gamma_I: float
    s_sq: float
    s_lin: float
    delta_S: float
    Pi: np.ndarray
    p_I: np.ndarray
    q_I: np.ndarray
    q_RD: np.ndarray
    Xi: float
    mean_capacity: float
    omega_bar: float
    z: float
    M: int
    N: int
    L: int

    @property
    def Pi_inv(self) -> np.ndarray:
        return np.linalg.inv(self.Pi)


def second_order_stats(fp: FixedPoint, R, D, S) -> SecondOrderStats:
    """Trace quantities, ``Pi``, ``p_I``, ``q_I``, ``q_RD`` and ``Xi``.

    The S-side traces are

        gamma_S  = delta^2 Tr(S^2 F^2) / M
        gamma_SI = delta^2 Tr(S F^2) / M

    so that ``delta_S = 1 - gamma_S omega_bar^2`` is invariant under the
    rescaling ``(R, S) -> (c R, S / c)`` which leaves the channel unchanged.
    Every ratio ``gamma_S / delta^2`` is evaluated directly from ``F``.

    Raises
    ------
    StabilityError
        If ``delta_S <= 0``, ``det(Pi) <= 0`` or ``cond(Pi) > 1e12``.
    """
    R = np.asarray(R)
    D = np.asarray(D)
    S = np.asarray(S)
    M, N, L = fp.M, fp.N, fp.L
    G, F = fp.G, fp.F
    ob, delta = fp.omega_bar, fp.delta

    RG = R @ G
    DG = D @ G
    SF = S @ F
    gR = _tr(RG, RG) / L
    gRI = _tr(RG, G) / L
    gD = _tr(DG, DG) / M
    gRD = _tr(RG, DG) / L
    gDI = _tr(DG, G) / M
    gI = _tr(G, G) / L
    s_sq = _tr(SF, SF) / M
    s_lin = _tr(SF, F) / M
    gS = delta ** 2 * s_sq
    gSI = delta ** 2 * s_lin

    ob2 = ob ** 2
    dS = 1.0 - gS * ob2
    if not dS > 0:
        raise StabilityError("delta_S", dS)
    k = M * s_lin * gR / L
    Pi = np.array([
        [1.0 - M * ob2 * s_sq * gR / L, -ob2 * (k + gRD) / dS],
        [-s_sq * ob2 * (k + gRD),
         1.0 - ob2 * (k + gRD) * s_lin / dS - ob2 * (s_lin * gRD + gD) / dS],
    ])
    q_I = np.array([gRI, s_lin * gRI + gDI])
    p_I = np.array([M * ob2 * s_sq * gRI / L, M * ob2 * (s_lin * gRI + gDI) / (L * dS)])
    q_RD = np.array([k + gRD, M * s_lin ** 2 * gR / L + 2.0 * s_lin * gRD + gD])

    det = float(np.linalg.det(Pi))
    if not det > 0:
        raise StabilityError("det(Pi)", det)
    cond = float(np.linalg.cond(Pi))
    if not cond <= COND_LIMIT:
        raise StabilityError("cond(Pi)", cond)
    Xi = det * dS
    return SecondOrderStats(
        gamma_R=gR, gamma_RI=gRI, gamma_S=gS, gamma_SI=gSI, gamma_D=gD,
        gamma_RD=gRD, gamma_DI=gDI, gamma_I=gI, s_sq=s_sq, s_lin=s_lin,
        delta_S=dS, Pi=Pi, p_I=p_I, q_I=q_I, q_RD=q_RD, Xi=Xi,
        mean_capacity=mean_capacity(fp), omega_bar=ob, z=fp.z, M=M, N=N, L=L)


def resolvent_moment_pair(stats: SecondOrderStats, fp: FixedPoint, R, D, M_test):
    """Deterministic equivalents of ``E(M)`` and ``P(M)`` for a test matrix.

    ``E(M) = E Tr(R Q M Q) / L`` and
    ``P(M) = gamma_SI E Tr(M Q R Q) / (L delta^2) + E Tr(M Q D Q) / M``
    solve the 2x2 linear system with matrix ``Pi``.
    """
    G = fp.G
    MG = np.asarray(M_test) @ G
    g_rm = _tr(np.asarray(R) @ G, MG) / fp.L
    g_dm = _tr(np.asarray(D) @ G, MG) / fp.L
    rhs = np.array([g_rm, stats.s_lin * g_rm + fp.L * g_dm / fp.M])
    E, P = np.linalg.solve(stats.Pi, rhs)
    return float(E), float(P)


def second_moment_trace(stats: SecondOrderStats) -> float:
    """Deterministic equivalent of ``E Tr(Q^2) / L``."""
    return float(stats.gamma_I + stats.p_I @ np.linalg.solve(stats.Pi, stats.q_I))


def dims_of(fp: FixedPoint, n: int) -> Dims:
    return Dims(fp.M, fp.N, fp.L, n)
