import numpy as np
import pytest

from irsfbl.channel import (CorrelationSpec, PathLoss, SystemConfig, build_ula_correlation,
                            dbm_to_watts)

REF_GAINS = dict(
    bs_irs=PathLoss(10 ** -2.305, 40.0, 2.2),
    irs_u=PathLoss(0.05, 50.0, 2.2),
    bs_u=PathLoss(10 ** -2.595, 50.0, 3.67),
)


def ula(eta, spread, count, spacing=0.5):
    return build_ula_correlation(CorrelationSpec(spacing, eta, spread, count))


def correlated_config(scale=1, power_dbm=15.0):
    """Correlated urban-micro setup; ``scale`` multiplies every dimension."""
    M, L, n = 16 * scale, 32 * scale, 36 * scale
    return SystemConfig.from_path_losses(
        M, M, L, n, ula(10, 10, M), ula(5, 5, M), ula(0, 5, L), ula(15, 15, L),
        noise_power=dbm_to_watts(-80), transmit_power=dbm_to_watts(power_dbm), **REF_GAINS)


def identity_rx_config(M=8, L=32, n=36, power_dbm=10.0):
    return SystemConfig.from_path_losses(
        M, M, L, n, np.eye(M), np.eye(M), ula(0, 5, L), ula(15, 15, L),
        noise_power=dbm_to_watts(-80), transmit_power=dbm_to_watts(power_dbm), **REF_GAINS)


def small_config(M=4, L=8, n=16, cascade=5.0, direct=0.5):
    return SystemConfig(M=M, N=M, L=L, n=n, R=ula(10, 10, M), D=ula(5, 5, M),
                        T_irs=ula(0, 5, L), R_irs=ula(15, 15, L),
                        cascade_gain=cascade, direct_gain=direct)


@pytest.fixture(scope="session")
def correlated():
    return correlated_config()


@pytest.fixture(scope="session")
def small():
    return small_config()


@pytest.fixture(scope="session")
def rx_identity():
    return identity_rx_config()


def random_psd(rng, k, scale=1.0, rank=None):
    rank = k if rank is None else rank
    X = (rng.standard_normal((k, rank)) + 1j * rng.standard_normal((k, rank))) / np.sqrt(2 * rank)
    return scale * X @ X.conj().T


_VERDICTS = {}


@pytest.fixture
def verdict():
    """Print and remember one PASS/FAIL line per acceptance criterion."""
    def record(criterion, ok, detail):
        line = f"{'PASS' if ok else 'FAIL'} criterion {criterion}: {detail}"
        print(line)
        _VERDICTS[criterion] = line
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.section("acceptance criteria")
        for key in sorted(_VERDICTS):
            terminalreporter.write_line(_VERDICTS[key])
