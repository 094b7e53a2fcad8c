"""Monte Carlo oracle for the mutual information density (MID).

For a channel ``H`` and noise block ``W`` the density is ``C + D`` with

    C = log det(I + H H^H / s2) / M
    D = Tr[(H H^H + s2 I)^{-1} (H C + s W)(H C + s W)^H - W W^H] / (M n)

Draws are generated in fixed-size blocks; block ``k`` uses the RNG stream
``SeedSequence(seed, spawn_key=(k,))`` so results do not depend on how many
worker threads consume the blocks.
"""

from __future__ import annotations

import csv
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .channel import SystemConfig, channel_factors, complex_normal, draw_channels
from .errors import DomainError
from .fbl import CodewordGram, analyze, normal_cdf

__all__ = [
    "CodewordSpec", "MidSampleBatch", "CltReport", "ResolventEstimate",
    "mid_values", "sample_mid", "ks_distance", "clt_report", "clt_validate",
    "resolvent_trace_oracle", "BLOCK",
]

BLOCK = 500
KINDS = ("all-ones", "gaussian-normalized", "equal-gram", "explicit")


@dataclass(frozen=True, eq=False)
class CodewordSpec:
    """Codeword family satisfying ``Tr(C C^H) = M n``.

    ``equal-gram`` uses ``sqrt(n)`` times the first ``M`` rows of the
    unitary DFT matrix, hence ``C C^H = n I`` (requires ``n >= M``).
    ``gaussian-normalized`` codewords are redrawn for every sample.
    """

    kind: str
    M: int
    n: int
    matrix: np.ndarray | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise DomainError(f"unknown codeword kind {self.kind!r}; expected one of {KINDS}")
        if self.kind == "equal-gram" and self.n < self.M:
            raise DomainError("equal-gram codewords need n >= M")
        if self.kind == "explicit":
            C = np.asarray(self.matrix, dtype=complex)
            if C.shape != (self.M, self.n):
                raise DomainError(f"codeword must be {self.M}x{self.n}, got {C.shape}")
            energy = np.sum(np.abs(C) ** 2) / (self.M * self.n)
            if not np.isclose(energy, 1.0, rtol=1e-12):
                raise DomainError(f"codeword violates the sphere constraint: energy {energy}")
            object.__setattr__(self, "matrix", C)

    def fixed_matrix(self) -> np.ndarray | None:
        if self.kind == "all-ones":
            return np.ones((self.M, self.n), dtype=complex)
        if self.kind == "equal-gram":
            F = np.fft.fft(np.eye(self.n)) / np.sqrt(self.n)
            return np.sqrt(self.n) * F[: self.M]
        if self.kind == "explicit":
            return self.matrix
        return None

    def draw(self, rng: np.random.Generator, count: int) -> np.ndarray:
        C = complex_normal(rng, (count, self.M, self.n), 1.0)
        energy = np.sum(np.abs(C) ** 2, axis=(1, 2)) / (self.M * self.n)
        return C / np.sqrt(energy)[:, None, None]

    def gram(self) -> CodewordGram:
        if self.kind == "gaussian-normalized":
            return CodewordGram.gaussian(self.M, self.n)
        return CodewordGram.from_matrix(self.fixed_matrix(), self.kind)


def mid_values(H, C, W, noise_power: float = 1.0):
    """Capacity term and density correction for stacked draws.

    ``H`` is ``(..., N, M)``, ``C`` is ``(M, n)`` or ``(..., M, n)`` and ``W``
    is ``(..., N, n)``. Returns ``(capacity, correction)`` arrays.
    """
    H = np.asarray(H)
    N, M = H.shape[-2:]
    n = W.shape[-1]
    K = H @ np.swapaxes(H.conj(), -1, -2) + noise_power * np.eye(N)
    chol = np.linalg.cholesky(K)
    logdet = 2.0 * np.sum(np.log(np.real(np.diagonal(chol, axis1=-2, axis2=-1))), axis=-1)
    cap = (logdet - N * np.log(noise_power)) / M
    Yr = H @ C + np.sqrt(noise_power) * W
    Z = np.linalg.solve(chol, Yr)
    corr = (np.sum(np.abs(Z) ** 2, axis=(-2, -1)) - np.sum(np.abs(W) ** 2, axis=(-2, -1))) / (M * n)
    return cap, corr


@dataclass(frozen=True, eq=False)
class MidSampleBatch:
    samples: np.ndarray
    capacity: np.ndarray
    seed: int
    count: int
    config_hash: str

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            fh.write(f"# config_hash={self.config_hash} seed={self.seed} count={self.count}\n")
            fh.write("mid\n")
            for v in self.samples:
                fh.write(f"{float(v)!r}\n")

    @staticmethod
    def read_csv(path) -> np.ndarray:
        with open(path, encoding="utf-8") as fh:
            rows = [r for r in csv.reader(fh) if r and not r[0].startswith("#")]
        return np.array([float(r[0]) for r in rows[1:]])


def _block_rng(seed: int, k: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(k,)))


def _blocks(count: int):
    return [(k, min(BLOCK, count - k * BLOCK)) for k in range((count + BLOCK - 1) // BLOCK)]


def _run_blocks(fn, count: int, threads: int):
    jobs = _blocks(count)
    if threads <= 1 or len(jobs) == 1:
        return [fn(*job) for job in jobs]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda job: fn(*job), jobs))


def sample_mid(config: SystemConfig, theta, codeword: CodewordSpec, count: int,
               seed: int, threads: int = 1) -> MidSampleBatch:
    """Draw ``count`` independent MID values (fresh ``H`` and ``W`` each)."""
    if count < 1:
        raise DomainError("count must be >= 1")
    if (codeword.M, codeword.n) != (config.M, config.n):
        raise DomainError(f"codeword is {codeword.M}x{codeword.n}, config needs {config.M}x{config.n}")
    factors = channel_factors(config, theta, normalized=True)
    dims = config.dims
    C_fixed = codeword.fixed_matrix()

    def block(k, size):
        rng = _block_rng(seed, k)
        H = draw_channels(rng, factors, dims, size)
        W = complex_normal(rng, (size, config.N, config.n), 1.0)
        C = C_fixed if C_fixed is not None else codeword.draw(rng, size)
        return mid_values(H, C, W)

    parts = _run_blocks(block, count, threads)
    cap = np.concatenate([p[0] for p in parts])
    corr = np.concatenate([p[1] for p in parts])
    return MidSampleBatch(cap + corr, cap, seed, count, config.fingerprint())


def ks_distance(samples) -> float:
    """Sup distance between the empirical CDF of ``samples`` and ``N(0, 1)``."""
    x = np.sort(np.asarray(samples, dtype=float))
    n = x.size
    cdf = normal_cdf(x)
    i = np.arange(1, n + 1)
    return float(max(np.max(i / n - cdf), np.max(cdf - (i - 1) / n)))


@dataclass(frozen=True, eq=False)
class CltReport:
    mean: float
    variance: float
    ks: float
    ks_critical: float
    bin_edges: np.ndarray
    density: np.ndarray
    count: int
    mean_capacity: float = float("nan")
    V_n: float = float("nan")
    warnings: tuple = ()

    @property
    def bin_centers(self) -> np.ndarray:
        return (self.bin_edges[:-1] + self.bin_edges[1:]) / 2


def clt_report(normalized, bins: int = 60, **extra) -> CltReport:
    """Moments, KS distance and histogram of already-normalized samples.

    ``mean`` and ``variance`` refer to the samples as given; callers pass
    the extra fields (``mean_capacity``, ``V_n``) through ``extra``.
    """
    z = np.asarray(normalized, dtype=float)
    count = z.size
    notes = []
    if count < 30:
        msg = f"only {count} samples; KS distance and histogram are not meaningful"
        warnings.warn(msg, stacklevel=2)
        notes.append(msg)
    lo, hi = min(z.min(), -4.0), max(z.max(), 4.0)
    density, edges = np.histogram(z, bins=bins, range=(lo, hi), density=True)
    var = float(np.var(z, ddof=1)) if count > 1 else 0.0
    return CltReport(float(np.mean(z)), var, ks_distance(z), 1.36 / np.sqrt(count),
                     edges, density, count, warnings=tuple(notes), **extra)


def clt_validate(config: SystemConfig, theta, codeword: CodewordSpec, count: int,
                 seed: int, threads: int = 1, bins: int = 60) -> CltReport:
    """Normalize MID draws by the analytic mean and ``V_n`` and test Gaussianity.

    The reported ``variance`` is that of ``sqrt(M n) (I - Cbar)``, directly
    comparable with ``V_n``; ``ks`` is computed on ``(I - Cbar) sqrt(M n / V_n)``.
    """
    an = analyze(config, theta)
    vn = an.V_n(codeword.gram())
    batch = sample_mid(config, theta, codeword, count, seed, threads)
    scaled = np.sqrt(config.M * config.n) * (batch.samples - an.mean_capacity)
    rep = clt_report(scaled / np.sqrt(vn), bins=bins, mean_capacity=an.mean_capacity, V_n=vn)
    var = float(np.var(scaled, ddof=1)) if count > 1 else 0.0
    return CltReport(float(np.mean(scaled)), var, rep.ks, rep.ks_critical, rep.bin_edges,
                     rep.density, count, an.mean_capacity, vn, rep.warnings)


@dataclass(frozen=True)
class ResolventEstimate:
    mean: float
    stderr: float
    count: int


def resolvent_trace_oracle(config: SystemConfig, theta, M_test, count: int, seed: int,
                           second=None, scale: float | None = None,
                           threads: int = 1) -> ResolventEstimate:
    """Monte Carlo estimate of ``E Tr(M_test Q)`` (or ``E Tr(M_test Q second Q)``).

    ``Q = (I + H H^H)^{-1}`` at unit noise power; the trace is multiplied by
    ``scale`` which defaults to ``1 / L``.
    """
    factors = channel_factors(config, theta, normalized=True)
    dims = config.dims
    scale = 1.0 / config.L if scale is None else scale
    Mt = np.asarray(M_test, dtype=complex)
    B2 = None if second is None else np.asarray(second, dtype=complex)

    def block(k, size):
        rng = _block_rng(seed, k)
        H = draw_channels(rng, factors, dims, size)
        K = H @ np.swapaxes(H.conj(), -1, -2) + np.eye(config.N)
        Q = np.linalg.inv(K)
        if B2 is None:
            vals = np.einsum("ij,bji->b", Mt, Q)
        else:
            vals = np.einsum("bij,bji->b", Mt @ Q, B2 @ Q)
        return scale * np.real(vals)

    vals = np.concatenate(_run_blocks(block, count, threads))
    se = float(np.std(vals, ddof=1) / np.sqrt(count)) if count > 1 else float("inf")
    return ResolventEstimate(float(np.mean(vals)), se, count)
