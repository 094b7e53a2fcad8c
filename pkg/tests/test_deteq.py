import numpy as np
import pytest
from scipy import integrate, optimize

from irsfbl.channel import effective_S
from irsfbl.deteq import (mean_capacity, resolvent_moment_pair, second_moment_trace,
                          second_order_stats, solve_fixed_point, trace_approximation)
from irsfbl.errors import ConvergenceError, DomainError
from irsfbl.fbl import analyze, bound_variances
from irsfbl.montecarlo import resolvent_trace_oracle

from conftest import random_psd, small_config


def mp_capacity(alpha, snr):
    """(1/M) log det(I_N + snr U U^H) for U with CN(0, 1/M) entries, via Marchenko-Pastur."""
    c = alpha
    a, b = (1 - np.sqrt(c)) ** 2, (1 + np.sqrt(c)) ** 2

    def dens(x):
        return np.sqrt(max((b - x) * (x - a), 0.0)) / (2 * np.pi * c * x)

    val, _ = integrate.quad(lambda x: np.log1p(snr * x) * dens(x), a, b,
                            epsabs=1e-14, epsrel=1e-13, limit=200)
    return alpha * val


def verdu_shamai(snr, beta=1.0):
    F = (np.sqrt(snr * (1 + np.sqrt(beta)) ** 2 + 1) - np.sqrt(snr * (1 - np.sqrt(beta)) ** 2 + 1)) ** 2
    return beta * np.log(1 + snr - F / 4) + np.log(1 + snr * beta - F / 4) - F / (4 * snr)


def rayleigh_fixed_point(M, N, snr):
    Z = np.zeros((N, N))
    return solve_fixed_point(Z, snr * np.eye(N), np.zeros((4, 4)), 1.0, M, tol=1e-14)


def test_rayleigh_golden_ratio():
    fp = rayleigh_fixed_point(16, 16, 1.0)
    assert fp.xi == pytest.approx((np.sqrt(5) - 1) / 2, abs=1e-12)
    assert fp.omega == 0.0 and fp.delta == 0.0
    assert mean_capacity(fp) == pytest.approx(verdu_shamai(1.0), abs=1e-10)
    assert mean_capacity(fp) == pytest.approx(0.58045, abs=1e-5)


@pytest.mark.parametrize("M,N", [(16, 8), (16, 16), (8, 16)])
@pytest.mark.parametrize("snr", [0.5, 1.0, 4.0])
def test_rayleigh_matches_marchenko_pastur(M, N, snr):
    fp = rayleigh_fixed_point(M, N, snr)
    assert mean_capacity(fp) == pytest.approx(mp_capacity(N / M, snr), rel=1e-8)


def printed_system(R, D, S, z, M):
    """Residual of the fixed-point equations in their textbook form."""
    N, L = R.shape[0], S.shape[0]

    def resid(x):
        delta, omega, xi = x
        ob = 1 / (1 + omega + xi)
        G = np.linalg.inv(z * np.eye(N) + ob * D + (M * omega * ob / (L * delta)) * R)
        F = np.linalg.inv(np.eye(L) + ob * delta * S)
        return [np.trace(R @ G).real / L - delta,
                delta * np.trace(S @ F).real / M - omega,
                np.trace(D @ G).real / M - xi]
    return resid


@pytest.mark.parametrize("seed", range(4))
def test_fixed_point_matches_root_finder(seed):
    rng = np.random.default_rng(seed)
    N, L, M = 5, 7, 4
    R, D, S = random_psd(rng, N, 3.0), random_psd(rng, N, 0.7), random_psd(rng, L, 1.5)
    z = rng.uniform(0.3, 2.0)
    fp = solve_fixed_point(R, D, S, z, M, tol=1e-14)
    sol = optimize.root(printed_system(R, D, S, z, M), [1.0, 1.0, 1.0], method="hybr",
                        options={"xtol": 1e-15})
    assert sol.success
    assert np.allclose([fp.delta, fp.omega, fp.xi], sol.x, rtol=1e-12, atol=0)


def test_fixed_point_equations_hold(correlated):
    an = analyze(correlated, np.zeros(correlated.L), tol=1e-14)
    fp = an.fixed_point
    S = effective_S(correlated.T_irs, correlated.R_irs, np.zeros(correlated.L))
    res = printed_system(correlated.normalized_R(), correlated.normalized_D(), S, 1.0,
                         correlated.M)([fp.delta, fp.omega, fp.xi])
    assert np.max(np.abs(res) / np.array([fp.delta, fp.omega, fp.xi])) < 1e-12


def test_large_z_asymptotics():
    cfg = small_config()
    th = np.zeros(cfg.L)
    R, D = cfg.normalized_R(), cfg.normalized_D()
    S = effective_S(cfg.T_irs, cfg.R_irs, th)
    z = 1e5
    fp = solve_fixed_point(R, D, S, z, cfg.M)
    assert fp.delta == pytest.approx(np.trace(R).real / (cfg.L * z), rel=1e-3)
    assert fp.xi == pytest.approx(np.trace(D).real / (cfg.M * z), rel=1e-3)
    first_order = (np.trace(R).real * np.trace(S).real / cfg.L + np.trace(D).real) / (cfg.M * z)
    assert mean_capacity(fp) == pytest.approx(first_order, rel=1e-3)


def test_monotone_in_z():
    cfg = small_config()
    R, D = cfg.normalized_R(), cfg.normalized_D()
    S = effective_S(cfg.T_irs, cfg.R_irs, np.zeros(cfg.L))
    zs = np.geomspace(0.05, 50, 12)
    fps = [solve_fixed_point(R, D, S, z, cfg.M) for z in zs]
    caps = [mean_capacity(f) for f in fps]
    assert np.all(np.diff(caps) < 0)
    assert np.all(np.diff([f.delta for f in fps]) < 0)
    assert np.all(np.diff([f.xi for f in fps]) < 0)


def test_cascade_absent_two_ways():
    """S = 0 and R = 0 both remove the cascaded link."""
    cfg = small_config()
    D = cfg.normalized_D()
    S = effective_S(cfg.T_irs, cfg.R_irs, np.zeros(cfg.L))
    a = solve_fixed_point(cfg.normalized_R(), D, np.zeros_like(S), 1.0, cfg.M)
    b = solve_fixed_point(np.zeros_like(D), D, S, 1.0, cfg.M)
    assert a.omega == 0.0 and b.omega == 0.0
    assert a.xi == pytest.approx(b.xi, rel=1e-12)
    assert mean_capacity(a) == pytest.approx(mean_capacity(b), rel=1e-12)
    sa = second_order_stats(a, cfg.normalized_R(), D, np.zeros_like(S))
    sb = second_order_stats(b, np.zeros_like(D), D, S)
    assert bound_variances(sa, cfg.dims) == pytest.approx(bound_variances(sb, cfg.dims), rel=1e-10)


def test_scale_invariance_between_hops(correlated):
    """(R, S) -> (c R, S / c) leaves the channel law and every output unchanged."""
    R, D = correlated.normalized_R(), correlated.normalized_D()
    S = effective_S(correlated.T_irs, correlated.R_irs, np.zeros(correlated.L))
    out = []
    for c in (1.0, 7.5, 0.02):
        fp = solve_fixed_point(c * R, D, S / c, 1.0, correlated.M, tol=1e-14)
        st = second_order_stats(fp, c * R, D, S / c)
        out.append((st.mean_capacity, fp.xi, st.delta_S, st.Xi,
                    *bound_variances(st, correlated.dims)))
    for o in out[1:]:
        assert np.allclose(o, out[0], rtol=1e-9, atol=0)


def test_warm_start_agrees():
    cfg = small_config()
    R, D = cfg.normalized_R(), cfg.normalized_D()
    S = effective_S(cfg.T_irs, cfg.R_irs, np.zeros(cfg.L))
    cold = solve_fixed_point(R, D, S, 1.0, cfg.M, tol=1e-13)
    warm = solve_fixed_point(R, D, S, 1.0, cfg.M, tol=1e-13, init=cold)
    tup = solve_fixed_point(R, D, S, 1.0, cfg.M, tol=1e-13,
                            init=(cold.delta, cold.omega, cold.xi))
    assert warm.iterations <= 2 and tup.iterations <= 2
    assert warm.xi == pytest.approx(cold.xi, rel=1e-12)


def test_domain_and_convergence_errors():
    cfg = small_config()
    R, D = cfg.normalized_R(), cfg.normalized_D()
    S = effective_S(cfg.T_irs, cfg.R_irs, np.zeros(cfg.L))
    with pytest.raises(DomainError):
        solve_fixed_point(R, D, S, 0.0, cfg.M)
    with pytest.raises(DomainError):
        solve_fixed_point(R, D[:2, :2], S, 1.0, cfg.M)
    with pytest.raises(ConvergenceError) as info:
        solve_fixed_point(R, D, S, 1.0, cfg.M, max_iter=2)
    assert info.value.iterations == 2 and info.value.residual > 0


def test_moment_pair_identity(correlated):
    """Second row of Pi^-1 q_RD equals P(D) + (M s_lin / L) P(R)."""
    an = analyze(correlated, np.zeros(correlated.L), tol=1e-14)
    fp, st = an.fixed_point, an.stats
    R, D = correlated.normalized_R(), correlated.normalized_D()
    _, p_d = resolvent_moment_pair(st, fp, R, D, D)
    _, p_r = resolvent_moment_pair(st, fp, R, D, R)
    lhs = np.linalg.solve(st.Pi, st.q_RD)[1]
    assert lhs == pytest.approx(p_d + correlated.M * st.s_lin / correlated.L * p_r, rel=1e-10)


def test_delta_S_is_not_printed_prefactor(correlated):
    an = analyze(correlated, np.zeros(correlated.L))
    assert 0 < an.stats.delta_S <= 1
    assert an.stats.gamma_S == pytest.approx(an.fixed_point.delta ** 2 * an.stats.s_sq)


def test_trace_approximations_against_monte_carlo(correlated):
    th = np.zeros(correlated.L)
    an = analyze(correlated, th)
    fp, st = an.fixed_point, an.stats
    R, D = correlated.normalized_R(), correlated.normalized_D()
    L = correlated.L

    # E Tr Q / L
    est = resolvent_trace_oracle(correlated, th, np.eye(correlated.N), 3000, 21)
    assert abs(est.mean - trace_approximation(fp, np.eye(correlated.N))) < 4 * est.stderr + 1e-4

    # E Tr Q^2 / L
    est = resolvent_trace_oracle(correlated, th, np.eye(correlated.N), 3000, 22,
                                 second=np.eye(correlated.N))
    assert abs(est.mean - second_moment_trace(st)) < 4 * est.stderr + 2e-4

    # E Tr R Q D Q / L
    e_d, _ = resolvent_moment_pair(st, fp, R, D, D)
    est = resolvent_trace_oracle(correlated, th, R, 3000, 23, second=D)
    assert abs(est.mean - e_d) < 4 * est.stderr + 1e-3 * abs(e_d)


def test_trace_oracle_trivial_cases(correlated):
    th = np.zeros(correlated.L)
    zero = resolvent_trace_oracle(correlated, th, np.zeros((16, 16)), 50, 1)
    assert zero.mean == 0.0
