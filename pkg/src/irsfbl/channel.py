"""Channel model for the IRS-aided MIMO link.

The received block is ``Y = H C + sigma W`` with

    H = sqrt(g_c) R^{1/2} X T_irs^{1/2} Phi R_irs^{1/2} Y + sqrt(g_d) D^{1/2} U

where ``X`` (N x L) has i.i.d. CN(0, 1/L) entries, ``Y`` (L x M) and
``U`` (N x M) have i.i.d. CN(0, 1/M) entries and ``Phi = diag(exp(j theta))``.
The link gains ``g_c = P rho_bs_irs rho_irs_u`` and ``g_d = P rho_bs_u``
absorb transmit power and path loss, so codewords keep unit average energy.
"""

from __future__ import annotations

import csv
import hashlib
import warnings
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy import integrate

from .errors import DomainError, NotPSDError, QuadratureError

__all__ = [
    "CorrelationSpec", "PathLoss", "Dims", "SystemConfig", "PhaseShifts",
    "ChannelRealization", "build_ula_correlation", "path_loss_gain",
    "effective_S", "hermitian_sqrt", "channel_factors", "sample_channel",
    "load_correlation_csv", "dbm_to_watts", "watts_to_dbm",
]

# Eigenvalues in [-PSD_TOL * ||A||, 0] are treated as quadrature noise.
PSD_TOL = 1e-10


def dbm_to_watts(dbm):
    return 10.0 ** ((np.asarray(dbm, dtype=float) - 30.0) / 10.0)


def watts_to_dbm(watts):
    return 10.0 * np.log10(np.asarray(watts, dtype=float)) + 30.0


@dataclass(frozen=True)
class CorrelationSpec:
    """Uniform linear array with a Gaussian power-angle profile.

    Parameters
    ----------
    antenna_spacing : float
        Element spacing in wavelengths.
    mean_angle : float
        Mean angle of arrival/departure in degrees.
    angle_spread : float
        Standard deviation of the angle profile in degrees.
    count : int
        Number of array elements.
    """

    antenna_spacing: float
    mean_angle: float
    angle_spread: float
    count: int

    def __post_init__(self):
        if self.count < 1:
            raise DomainError(f"element count must be >= 1, got {self.count}")
        if not self.angle_spread > 0:
            raise DomainError(f"angle spread must be > 0, got {self.angle_spread}")
        if self.antenna_spacing < 0:
            raise DomainError(f"antenna spacing must be >= 0, got {self.antenna_spacing}")


@dataclass(frozen=True)
class PathLoss:
    """Distance-based path loss ``C / d**alpha``."""

    reference_gain: float
    distance: float
    exponent: float

    def __post_init__(self):
        if not self.distance > 0:
            raise DomainError(f"distance must be > 0, got {self.distance}")
        if not self.reference_gain > 0:
            raise DomainError(f"reference gain must be > 0, got {self.reference_gain}")


def path_loss_gain(pl: PathLoss) -> float:
    return pl.reference_gain / pl.distance ** pl.exponent


def _ula_lag(spec: CorrelationSpec, lag: int, tol: float) -> complex:
    d, eta, spread = spec.antenna_spacing, spec.mean_angle, spec.angle_spread
    norm = 1.0 / np.sqrt(2.0 * np.pi * spread ** 2)
    k = 2.0 * np.pi * d * lag

    def density(phi):
        return norm * np.exp(-((phi - eta) ** 2) / (2.0 * spread ** 2))

    def re(phi):
        return density(phi) * np.cos(k * np.sin(np.pi * phi / 180.0))

    def im(phi):
        return density(phi) * np.sin(k * np.sin(np.pi * phi / 180.0))

    # breakpoints at the profile mean help the adaptive rule find the peak
    points = [p for p in (eta - 3 * spread, eta, eta + 3 * spread) if -180.0 < p < 180.0]
    parts = []
    for f in (re, im):
        if f is im and lag == 0:
            parts.append(0.0)
            continue
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", integrate.IntegrationWarning)
            val, err = integrate.quad(f, -180.0, 180.0, points=points or None,
                                      epsabs=tol, epsrel=0.0, limit=1000)
        if not np.isfinite(val) or err > tol:
            raise QuadratureError(
                f"ULA correlation lag {lag}: error estimate {err:.3e} exceeds {tol:.1e}")
        parts.append(val)
    return complex(parts[0], parts[1])


def _clip_psd(A: np.ndarray) -> np.ndarray:
    w, V = np.linalg.eigh(A)
    scale = max(np.max(np.abs(w)), np.finfo(float).tiny)
    if w.min() < -PSD_TOL * scale:
        raise NotPSDError(f"smallest eigenvalue {w.min():.3e} is not quadrature noise")
    if w.min() >= 0:
        return A
    w = np.clip(w, 0.0, None)
    return (V * w) @ V.conj().T


def build_ula_correlation(spec: CorrelationSpec, tol: float = 1e-10) -> np.ndarray:
    """Correlation matrix of a uniform linear array.

    Entry ``(m, n)`` is the integral over ``phi`` in [-180, 180] degrees of
    the Gaussian angle density times ``exp(j 2 pi d (m - n) sin(phi))``.
    The matrix is Hermitian Toeplitz, so one integral per lag is enough.

    Raises
    ------
    QuadratureError
        If the adaptive quadrature cannot meet ``tol`` for some lag.
    """
    G = spec.count
    lags = np.array([_ula_lag(spec, k, tol) for k in range(G)])
    idx = np.arange(G)
    diff = idx[:, None] - idx[None, :]
    C = np.where(diff >= 0, lags[np.abs(diff)], np.conj(lags[np.abs(diff)]))
    return _clip_psd(C)


def hermitian_sqrt(A: np.ndarray) -> np.ndarray:
    """Principal square root of a Hermitian PSD matrix.

    Negative eigenvalues down to ``-1e-10 * ||A||`` are clipped to zero,
    anything below raises :class:`NotPSDError`.
    """
    A = np.asarray(A)
    if not np.allclose(A, A.conj().T, rtol=1e-10, atol=1e-12 * max(1.0, np.abs(A).max())):
        raise NotPSDError("matrix is not Hermitian")
    w, V = np.linalg.eigh((A + A.conj().T) / 2)
    scale = np.max(np.abs(w)) if w.size else 0.0
    if scale > 0 and w.min() < -PSD_TOL * scale:
        raise NotPSDError(f"smallest eigenvalue {w.min():.3e} below tolerance")
    w = np.clip(w, 0.0, None)
    return (V * np.sqrt(w)) @ V.conj().T


def load_correlation_csv(path) -> np.ndarray:
    """Read a complex matrix stored one row per line as ``re,im`` pairs."""
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        for line in csv.reader(fh):
            if not line or line[0].lstrip().startswith("#"):
                continue
            vals = [float(v) for v in line]
            if len(vals) % 2:
                raise ValueError(f"{path}: odd number of values in a row")
            rows.append(np.array(vals[0::2]) + 1j * np.array(vals[1::2]))
    A = np.array(rows)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"{path}: matrix is not square, shape {A.shape}")
    return A


class Dims(NamedTuple):
    M: int
    N: int
    L: int
    n: int

    @property
    def alpha(self) -> float:
        return self.N / self.M

    @property
    def beta(self) -> float:
        return self.M / self.L

    @property
    def tau(self) -> float:
        return self.n / self.M


def _check_corr(name: str, A, size: int) -> np.ndarray:
    A = np.asarray(A, dtype=complex)
    if A.shape != (size, size):
        raise DomainError(f"{name} must be {size}x{size}, got {A.shape}")
    if not np.all(np.isfinite(A)):
        raise DomainError(f"{name} has non-finite entries")
    hermitian_sqrt(A)  # raises NotPSDError
    return A


@dataclass(frozen=True, eq=False)
class SystemConfig:
    """Full scenario description.

    ``cascade_gain`` and ``direct_gain`` are the products of path loss
    factors (without transmit power). All powers are linear watts.
    """

    M: int
    N: int
    L: int
    n: int
    R: np.ndarray
    D: np.ndarray
    T_irs: np.ndarray
    R_irs: np.ndarray
    noise_power: float = 1.0
    transmit_power: float = 1.0
    cascade_gain: float = 1.0
    direct_gain: float = 1.0
    _sqrt: dict = field(default_factory=dict, init=False, repr=False)

    def __post_init__(self):
        for name in ("M", "N", "L", "n"):
            v = getattr(self, name)
            if int(v) != v or v < 1:
                raise DomainError(f"{name} must be a positive integer, got {v}")
        if not self.noise_power > 0:
            raise DomainError(f"noise power must be > 0, got {self.noise_power}")
        if self.transmit_power < 0 or self.cascade_gain < 0 or self.direct_gain < 0:
            raise DomainError("powers and gains must be non-negative")
        object.__setattr__(self, "R", _check_corr("R", self.R, self.N))
        object.__setattr__(self, "D", _check_corr("D", self.D, self.N))
        object.__setattr__(self, "T_irs", _check_corr("T_irs", self.T_irs, self.L))
        object.__setattr__(self, "R_irs", _check_corr("R_irs", self.R_irs, self.L))
        for name in ("R", "D", "T_irs", "R_irs"):
            if np.trace(getattr(self, name)).real <= 0:
                warnings.warn(f"{name} has zero trace; the corresponding link is absent",
                              stacklevel=3)

    @classmethod
    def from_path_losses(cls, M, N, L, n, R, D, T_irs, R_irs, *, noise_power,
                         transmit_power, bs_irs: PathLoss, irs_u: PathLoss,
                         bs_u: PathLoss) -> "SystemConfig":
        return cls(M, N, L, n, R, D, T_irs, R_irs, noise_power=noise_power,
                   transmit_power=transmit_power,
                   cascade_gain=path_loss_gain(bs_irs) * path_loss_gain(irs_u),
                   direct_gain=path_loss_gain(bs_u))

    @property
    def dims(self) -> Dims:
        return Dims(self.M, self.N, self.L, self.n)

    @property
    def cascade_snr(self) -> float:
        return self.transmit_power * self.cascade_gain / self.noise_power

    @property
    def direct_snr(self) -> float:
        return self.transmit_power * self.direct_gain / self.noise_power

    def normalized_R(self) -> np.ndarray:
        """Receive correlation of the cascaded link scaled to unit noise power."""
        return self.cascade_snr * self.R

    def normalized_D(self) -> np.ndarray:
        return self.direct_snr * self.D

    def sqrt_of(self, name: str) -> np.ndarray:
        if name not in self._sqrt:
            self._sqrt[name] = hermitian_sqrt(getattr(self, name))
        return self._sqrt[name]

    def fingerprint(self) -> str:
        """Stable SHA-256 digest of every field, used in exported files."""
        h = hashlib.sha256()
        h.update(np.array([self.M, self.N, self.L, self.n], dtype=np.int64).tobytes())
        h.update(np.array([self.noise_power, self.transmit_power, self.cascade_gain,
                           self.direct_gain], dtype=np.float64).tobytes())
        for name in ("R", "D", "T_irs", "R_irs"):
            h.update(np.ascontiguousarray(getattr(self, name), dtype=np.complex128).tobytes())
        return h.hexdigest()[:16]


@dataclass(frozen=True, eq=False)
class PhaseShifts:
    theta: np.ndarray

    def __post_init__(self):
        th = np.asarray(self.theta, dtype=float).ravel()
        if not np.all(np.isfinite(th)):
            raise DomainError("phase shifts must be finite")
        object.__setattr__(self, "theta", th)

    @property
    def phi(self) -> np.ndarray:
        return np.exp(1j * self.theta)

    def wrapped(self) -> "PhaseShifts":
        return PhaseShifts(np.mod(self.theta, 2.0 * np.pi))


def _theta(theta) -> np.ndarray:
    if isinstance(theta, PhaseShifts):
        return theta.theta
    return np.asarray(theta, dtype=float).ravel()


def effective_S(T_irs, R_irs, theta) -> np.ndarray:
    """``T^{1/2} Phi R_irs Phi^H T^{1/2}`` for the phase vector ``theta``."""
    T_irs = np.asarray(T_irs)
    R_irs = np.asarray(R_irs)
    th = _theta(theta)
    L = th.size
    if T_irs.shape != (L, L) or R_irs.shape != (L, L):
        raise DomainError(f"IRS correlations must be {L}x{L}, got {T_irs.shape} and {R_irs.shape}")
    Th = hermitian_sqrt(T_irs)
    return _effective_S_from_root(Th, R_irs, th)


def _effective_S_from_root(Th, R_irs, th) -> np.ndarray:
    phi = np.exp(1j * th)
    S = Th @ (phi[:, None] * R_irs * phi.conj()[None, :]) @ Th
    return (S + S.conj().T) / 2


@dataclass(frozen=True, eq=False)
class ChannelRealization:
    H: np.ndarray
    seed: int


def channel_factors(config: SystemConfig, theta, normalized: bool = True):
    """Deterministic factors ``(A, B, Dh)`` with ``H = A X B Y + Dh U``.

    With ``normalized`` the gains are divided by the noise power so that the
    channel is expressed at unit noise variance.
    """
    th = _theta(theta)
    if th.size != config.L:
        raise DomainError(f"theta must have length {config.L}, got {th.size}")
    if normalized:
        gc, gd = config.cascade_snr, config.direct_snr
    else:
        gc = config.transmit_power * config.cascade_gain
        gd = config.transmit_power * config.direct_gain
    phi = np.exp(1j * th)
    A = np.sqrt(gc) * config.sqrt_of("R")
    B = config.sqrt_of("T_irs") @ (phi[:, None] * config.sqrt_of("R_irs"))
    Dh = np.sqrt(gd) * config.sqrt_of("D")
    return A, B, Dh


def complex_normal(rng: np.random.Generator, shape, variance: float) -> np.ndarray:
    s = np.sqrt(variance / 2.0)
    return s * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def draw_channels(rng: np.random.Generator, factors, dims: Dims, count: int | None = None):
    """Draw one channel (``count=None``) or a stack of ``count`` channels."""
    A, B, Dh = factors
    M, N, L = dims.M, dims.N, dims.L
    lead = () if count is None else (count,)
    X = complex_normal(rng, lead + (N, L), 1.0 / L)
    Y = complex_normal(rng, lead + (L, M), 1.0 / M)
    U = complex_normal(rng, lead + (N, M), 1.0 / M)
    return A @ X @ B @ Y + Dh @ U


def sample_channel(config: SystemConfig, theta, seed: int,
                   normalized: bool = False) -> ChannelRealization:
    """Draw one channel matrix; identical seeds give identical matrices."""
    rng = np.random.default_rng(seed)
    H = draw_channels(rng, channel_factors(config, theta, normalized), config.dims)
    return ChannelRealization(H, seed)
