import mpmath
import numpy as np
import pytest

from irsfbl.channel import (CorrelationSpec, PathLoss, PhaseShifts, SystemConfig,
                            build_ula_correlation, channel_factors, dbm_to_watts,
                            draw_channels, effective_S, hermitian_sqrt,
                            load_correlation_csv, path_loss_gain, sample_channel,
                            watts_to_dbm)
from irsfbl.errors import DomainError, NotPSDError

from conftest import small_config, ula


def ula_entry_mpmath(d, eta, spread, lag):
    """Independent high-precision evaluation of one correlation entry."""
    mpmath.mp.dps = 30
    norm = 1 / mpmath.sqrt(2 * mpmath.pi * spread ** 2)

    def f(phi, part):
        ang = 2 * mpmath.pi * d * lag * mpmath.sin(mpmath.pi * phi / 180)
        g = norm * mpmath.exp(-((phi - eta) ** 2) / (2 * spread ** 2))
        return g * (mpmath.cos(ang) if part == 0 else mpmath.sin(ang))

    pts = [-180, eta - 6 * spread, eta, eta + 6 * spread, 180]
    pts = sorted(p for p in set(pts) if -180 <= p <= 180)
    re = mpmath.quad(lambda p: f(p, 0), pts)
    im = mpmath.quad(lambda p: f(p, 1), pts)
    return complex(float(re), float(im))


@pytest.mark.parametrize("spec", [
    CorrelationSpec(0.5, 10, 10, 6),
    CorrelationSpec(0.5, 0, 5, 5),
    CorrelationSpec(0.5, 15, 15, 5),
    CorrelationSpec(1.0, -40, 30, 4),
])
def test_ula_matches_high_precision_quadrature(spec):
    C = build_ula_correlation(spec)
    for m in range(spec.count):
        for k in range(spec.count):
            ref = ula_entry_mpmath(spec.antenna_spacing, spec.mean_angle, spec.angle_spread, m - k)
            assert abs(C[m, k] - ref) < 1e-8


def test_ula_structure():
    C = ula(10, 10, 16)
    assert np.allclose(C, C.conj().T, atol=1e-12)
    assert np.allclose(np.diag(C).imag, 0.0)
    assert np.linalg.eigvalsh(C).min() >= 0.0
    # Toeplitz
    for k in range(1, 16):
        assert np.allclose(np.diag(C, k), C[0, k])


def test_ula_zero_spacing_is_all_ones():
    C = build_ula_correlation(CorrelationSpec(0.0, 10, 10, 4))
    # the truncated Gaussian mass is 1 to double precision for this spread
    assert np.allclose(C, np.ones((4, 4)), atol=1e-12)


def test_ula_diagonal_is_profile_mass():
    C = ula(0, 5, 8)
    assert np.allclose(np.diag(C), 1.0, atol=1e-12)


@pytest.mark.parametrize("bad", [
    dict(antenna_spacing=0.5, mean_angle=0, angle_spread=0, count=4),
    dict(antenna_spacing=0.5, mean_angle=0, angle_spread=5, count=0),
    dict(antenna_spacing=-1, mean_angle=0, angle_spread=5, count=4),
])
def test_correlation_spec_validation(bad):
    with pytest.raises(DomainError):
        CorrelationSpec(**bad)


def test_path_loss_direct_evaluation():
    assert path_loss_gain(PathLoss(10 ** -2.305, 40, 2.2)) == pytest.approx(
        10 ** -2.305 * 40 ** -2.2, rel=1e-14)
    assert path_loss_gain(PathLoss(10 ** -2.595, 50, 3.67)) == pytest.approx(
        10 ** (-2.595 - 3.67 * np.log10(50)), rel=1e-12)
    with pytest.raises(DomainError):
        PathLoss(1.0, 0.0, 2.0)


def test_dbm_round_trip():
    vals = np.array([-80.0, -30.0, 0.0, 15.0, 30.0, 47.3])
    assert np.allclose(watts_to_dbm(dbm_to_watts(vals)), vals, rtol=1e-12, atol=0)
    assert dbm_to_watts(30.0) == 1.0
    assert dbm_to_watts(-80.0) == pytest.approx(1e-11, rel=1e-12)


def test_hermitian_sqrt():
    rng = np.random.default_rng(0)
    X = rng.standard_normal((5, 5)) + 1j * rng.standard_normal((5, 5))
    A = X @ X.conj().T
    root = hermitian_sqrt(A)
    assert np.allclose(root @ root, A)
    assert np.allclose(root, root.conj().T)
    with pytest.raises(NotPSDError):
        hermitian_sqrt(np.diag([1.0, -0.5]))
    with pytest.raises(NotPSDError):
        hermitian_sqrt(np.array([[1.0, 2.0], [0.0, 1.0]]))
    # tiny negative eigenvalues are clipped
    root = hermitian_sqrt(np.diag([1.0, -1e-13]))
    assert np.allclose(root, np.diag([1.0, 0.0]))


def test_effective_S_global_phase_invariance():
    rng = np.random.default_rng(1)
    T, Ri = ula(0, 5, 8), ula(15, 15, 8)
    th = rng.uniform(0, 2 * np.pi, 8)
    assert np.allclose(effective_S(T, Ri, th), effective_S(T, Ri, th + 1.234), atol=1e-13)


def test_effective_S_identity_irs_correlation():
    T = ula(0, 5, 8)
    th = np.random.default_rng(2).uniform(0, 2 * np.pi, 8)
    assert np.allclose(effective_S(T, np.eye(8), th), T, atol=1e-12)


def test_effective_S_properties():
    T, Ri = ula(0, 5, 8), ula(15, 15, 8)
    th = np.random.default_rng(3).uniform(0, 2 * np.pi, 8)
    S = effective_S(T, Ri, th)
    assert np.allclose(S, S.conj().T)
    assert np.linalg.eigvalsh(S).min() > -1e-12
    # Tr S = Tr(T Phi R Phi^H) = sum_l T_ll R_ll when both have unit diagonal
    assert np.trace(S).real == pytest.approx(np.trace(T @ np.diag(np.exp(1j * th)) @ Ri
                                                      @ np.diag(np.exp(-1j * th))).real)
    with pytest.raises(DomainError):
        effective_S(T, Ri, th[:4])


def test_phase_shifts_wrap():
    ps = PhaseShifts([-0.5, 7.0, 2 * np.pi])
    w = ps.wrapped().theta
    assert np.all((w >= 0) & (w < 2 * np.pi))
    assert np.allclose(np.exp(1j * w), ps.phi)
    with pytest.raises(DomainError):
        PhaseShifts([np.nan])


def test_channel_second_moment():
    """E[H H^H] = (Tr S / L) R_eff + D_eff."""
    cfg = small_config()
    th = np.random.default_rng(4).uniform(0, 2 * np.pi, cfg.L)
    S = effective_S(cfg.T_irs, cfg.R_irs, th)
    expected = np.trace(S).real / cfg.L * cfg.normalized_R() + cfg.normalized_D()
    rng = np.random.default_rng(5)
    H = draw_channels(rng, channel_factors(cfg, th), cfg.dims, 40_000)
    emp = np.mean(H @ np.swapaxes(H.conj(), -1, -2), axis=0)
    assert np.linalg.norm(emp - expected) / np.linalg.norm(expected) < 0.02


def test_sample_channel_reproducible_and_shaped():
    cfg = small_config()
    a = sample_channel(cfg, np.zeros(cfg.L), 9)
    b = sample_channel(cfg, np.zeros(cfg.L), 9)
    c = sample_channel(cfg, np.zeros(cfg.L), 10)
    assert a.H.shape == (cfg.N, cfg.M)
    assert np.array_equal(a.H, b.H)
    assert not np.array_equal(a.H, c.H)


def test_config_validation():
    with pytest.raises(DomainError):
        SystemConfig(M=2, N=2, L=2, n=1, R=np.eye(3), D=np.eye(2), T_irs=np.eye(2), R_irs=np.eye(2))
    with pytest.raises(DomainError):
        SystemConfig(M=0, N=2, L=2, n=1, R=np.eye(2), D=np.eye(2), T_irs=np.eye(2), R_irs=np.eye(2))
    with pytest.raises(NotPSDError):
        SystemConfig(M=2, N=2, L=2, n=1, R=np.diag([1.0, -1.0]), D=np.eye(2),
                     T_irs=np.eye(2), R_irs=np.eye(2))
    with pytest.warns(UserWarning, match="zero trace"):
        SystemConfig(M=2, N=2, L=2, n=1, R=np.zeros((2, 2)), D=np.eye(2),
                     T_irs=np.eye(2), R_irs=np.eye(2))


def test_config_normalization_and_fingerprint(correlated):
    snr_c = dbm_to_watts(15) * 10 ** -2.305 * 40 ** -2.2 * 0.05 * 50 ** -2.2 / dbm_to_watts(-80)
    assert correlated.cascade_snr == pytest.approx(snr_c, rel=1e-12)
    assert np.allclose(correlated.normalized_R(), snr_c * correlated.R)
    fp = correlated.fingerprint()
    assert len(fp) == 16 and fp == correlated.fingerprint()
    assert small_config().fingerprint() != fp


def test_load_correlation_csv(tmp_path):
    A = ula(10, 10, 3)
    lines = ["# 3x3 test matrix"]
    for row in A:
        lines.append(",".join(f"{float(v.real)!r},{float(v.imag)!r}" for v in row))
    p = tmp_path / "c.csv"
    p.write_text("\n".join(lines) + "\n")
    assert np.array_equal(load_correlation_csv(p), A)
    bad = tmp_path / "bad.csv"
    bad.write_text("1,0,2\n")
    with pytest.raises(ValueError):
        load_correlation_csv(bad)
