import numpy as np
import pytest
from conftest import grid
from oracles import physical_jacobian, reynolds_stress

from stripstab.errors import AdjointDegenerateError, PreconditionError
from stripstab.hopf import (
    Classification, Gauge, adjoint_eigen, classify, critical_mode, cubic_fields, cubic_forcing,
    derivative_c1, jacobian_mode, mean_flow_forcing, mean_flow_solve, pairing,
    second_harmonic_solve,
)
from stripstab.orrsomm import OrrSommerfeldPencil, d_pencil_d_nu, eigen_spectrum, wall_values


def derivs(f, d):
    return (f, d.D1 @ f, d.D2 @ f, d.D3 @ f)


def rel(a, b):
    return np.abs(a - b).max() / np.abs(b).max()


@pytest.fixture(scope="module")
def crit(pois, neutral_8e5):
    return critical_mode(pois, neutral_8e5, grid(128))


@pytest.fixture(scope="module")
def fields(pois, neutral_8e5):
    return cubic_fields(pois, neutral_8e5, grid(128))


def test_adjoint_identities(crit):
    pencil, lam, psi1 = crit
    adj, res, cond = adjoint_eigen(pencil, lam, psi1)
    assert res < 1e-10 and cond < 1e6
    assert abs(pairing(adj, pencil.M @ psi1) - 1) < 1e-10
    assert abs(pairing(adj, pencil.A @ psi1) - lam) < 1e-9 * max(1, abs(lam))
    others = sorted((p for p in eigen_spectrum(pencil) if abs(p.lam - lam) > 1e-6),
                    key=lambda p: abs(p.lam - lam))[:5]
    for p in others:
        assert abs(pairing(adj, pencil.M @ p.psi)) < 1e-8


def test_adjoint_defective_pencil_rejected():
    # a 2x2 Jordan block: left and right eigenvectors are M-orthogonal
    A = np.array([[1.0, 1.0], [0.0, 1.0]], dtype=complex)
    M = np.eye(2, dtype=complex)
    P = OrrSommerfeldPencil(1.0, 1.0, A, M, grid(16))
    with pytest.raises(AdjointDegenerateError):
        adjoint_eigen(P, 1.0 + 1e-9, np.array([1.0, 0.0], dtype=complex))


def test_c1_values(hopf_8e5, neutral_8e5):
    h = hopf_8e5
    assert h.c1.real < 0
    assert abs(h.c1 - h.c1_fd) / abs(h.c1) < 1e-3
    # the adjoint c1 is d lambda / d nu; the neutral point carries its own FD estimate
    assert abs(h.c1 - neutral_8e5.dlam_dnu) / abs(h.c1) < 1e-3
    assert abs(h.c1_alpha - neutral_8e5.dlam_dalpha) / abs(h.c1_alpha) < 1e-3


def _c1_after_rescale(pencil, lam, psi1, s):
    adj, _, _ = adjoint_eigen(pencil, lam, s * psi1)
    return derivative_c1(pencil, lam, s * psi1, adj)


def _c1_roundoff_floor(pencil, psi1, adj):
    # componentwise bound on the rounding of <adj, dA/dnu psi1>, relative to its value
    dA = d_pencil_d_nu(pencil)
    num = pairing(adj, dA @ psi1)
    return np.finfo(float).eps * (np.abs(adj) @ (np.abs(dA) @ np.abs(psi1))) / abs(num)


def test_c1_normalization_invariance(crit):
    pencil, lam, psi1 = crit
    adj, _, _ = adjoint_eigen(pencil, lam, psi1)
    c1, c1a = derivative_c1(pencil, lam, psi1, adj)
    floor = _c1_roundoff_floor(pencil, psi1, adj)
    rng = np.random.default_rng(5)
    for _ in range(4):
        s = rng.uniform(0.1, 10) * np.exp(1j * rng.uniform(0, 2 * np.pi))
        d1, d2 = _c1_after_rescale(pencil, lam, psi1, s)
        assert abs(d1 - c1) < floor * abs(c1)
        assert abs(d2 - c1a) < 1e-8 * abs(c1a)


@pytest.mark.xfail(strict=True, reason="fourth-derivative block rounds at ~1e-11 relative")
def test_c1_unit_phase_to_1e12(crit):
    pencil, lam, psi1 = crit
    adj, _, _ = adjoint_eigen(pencil, lam, psi1)
    c1, _ = derivative_c1(pencil, lam, psi1, adj)
    rng = np.random.default_rng(0)
    errs = [abs(_c1_after_rescale(pencil, lam, psi1, np.exp(1j * t))[0] - c1)
            for t in rng.uniform(0, 2 * np.pi, 6)]
    assert max(errs) < 1e-12 * abs(c1)


def test_jacobian_against_physical_space():
    d = grid(48)
    y = d.nodes
    p = np.sin(np.pi * y) * y + 0.3j * y**2
    q = y**2 * (1 - y) ** 2 * (1 + 1j * y)
    for k1, k2 in [(2.1, 2.1), (2.1, -2.1), (2.1, 0.0), (-2.1, 4.2)]:
        ref = physical_jacobian([(derivs(p, d), k1)], [(derivs(q, d), k2)], k1 + k2, 2.1)
        assert rel(jacobian_mode(p, k1, q, k2, d), ref) < 1e-12


def test_second_harmonic(pois, neutral_8e5, fields):
    d = grid(128)
    a = neutral_8e5.alpha_plus
    psi1 = fields.psi1
    # forcing = e^{2i alpha x} part of J(Psi1, Psi1), Psi1 = psi1 e + c.c.
    modes = [(derivs(psi1, d), a), (derivs(np.conj(psi1), d), -a)]
    ref = physical_jacobian(modes, modes, 2 * a, a)
    assert rel(jacobian_mode(psi1, a, psi1, a, d), ref) < 1e-12
    assert fields.psi2_residual < 1e-9
    assert np.abs(wall_values(fields.psi2, d)).max() < 1e-8 * np.abs(fields.psi2).max()


def test_second_harmonic_resolution(pois, neutral_8e5):
    f128 = cubic_fields(pois, neutral_8e5, grid(128))
    f192 = cubic_fields(pois, neutral_8e5, grid(192))
    y = np.linspace(0, 1, 401)
    a = grid(128).interpolate(f128.psi2, y)
    b = grid(192).interpolate(f192.psi2, y)
    assert np.sqrt(np.mean(np.abs(a - b) ** 2)) / np.sqrt(np.mean(np.abs(b) ** 2)) < 1e-6
    p0a = grid(128).interpolate(f128.phi0, y)
    p0b = grid(192).interpolate(f192.phi0, y)
    assert np.abs(p0a - p0b).max() < 1e-6 * np.abs(p0b).max()
    assert abs(f192.c3 - f128.c3) / abs(f128.c3) < 1e-2


def test_mean_flow_forcing_real(fields, neutral_8e5):
    d = grid(128)
    F0 = mean_flow_forcing(fields.psi1, neutral_8e5.alpha_plus, d)
    assert np.abs(F0.imag).max() < 1e-12 * np.abs(F0).max()


def test_mean_flow_symmetry(fields):
    d = grid(128)
    phi0 = fields.phi0
    y = np.linspace(0, 1, 201)
    u0 = d.interpolate(d.D1 @ phi0, y)
    assert np.abs(u0 - u0[::-1]).max() < 1e-8 * np.abs(u0).max()
    c = d.interpolate(phi0, [0.5])[0]
    p = d.interpolate(phi0, y) - c
    assert np.abs(p + p[::-1]).max() < 1e-8 * np.abs(phi0).max()


def test_mean_flow_balances_reynolds_stress(pois, neutral_8e5, fields):
    # fixed pressure gradient: nu u0' equals the x-averaged u v up to a constant
    d = grid(128)
    psi1 = fields.psi1
    u0 = d.D1 @ fields.phi0
    uv = reynolds_stress(psi1, d.D1 @ psi1, neutral_8e5.alpha_plus)
    gap = neutral_8e5.nu * (d.D1 @ u0) - uv
    assert np.ptp(gap) < 1e-8 * np.abs(uv).max()
    assert max(abs(u0[0]), abs(u0[-1])) < 1e-8 * np.abs(u0).max()
    assert abs(fields.phi0[0]) < 1e-10 * np.abs(fields.phi0).max()


def test_gauges_differ_by_poiseuille_flow(pois, neutral_8e5, fields):
    d = grid(128)
    flux = mean_flow_solve(pois, neutral_8e5, fields.psi1, d, Gauge.FLUX)
    assert np.abs(wall_values(flux + 0j, d)).max() < 1e-8 * np.abs(flux).max()
    diff = d.D1 @ (flux - fields.phi0)
    shape = d.nodes * (1 - d.nodes)
    k = diff[len(diff) // 2] / shape[len(diff) // 2]
    assert np.abs(diff - k * shape).max() < 1e-7 * np.abs(diff).max()
    # the flux gauge carries no net flux correction
    assert abs(flux[-1] - flux[0]) < 1e-10 * np.abs(flux).max()


def test_cubic_forcing_against_physical_space(neutral_8e5, fields):
    d = grid(128)
    a = neutral_8e5.alpha_plus
    f = fields
    modes = [(derivs(f.psi1, d), a), (derivs(np.conj(f.psi1), d), -a),
             (derivs(f.psi2, d), 2 * a), (derivs(np.conj(f.psi2), d), -2 * a),
             (derivs(f.phi0 + 0j, d), 0.0)]
    # only (a, 0), (0, a), (-a, 2a) and (2a, -a) products land on e^{i a x}
    ref = physical_jacobian(modes, modes, a, a)
    n3 = cubic_forcing(f.psi1, f.psi2, f.phi0, a, d)
    inner = slice(2, d.size - 2)
    assert rel(n3[inner], ref[inner]) < 1e-10


def test_c3_phase_invariance(pois, neutral_8e5, fields):
    d = grid(128)
    for theta in (0.7, 2.9):
        g = cubic_fields(pois, neutral_8e5, d, psi1=np.exp(1j * theta) * fields.psi1)
        assert abs(g.c3 - fields.c3) < 1e-10 * abs(fields.c3)


def test_c3_amplitude_covariance(pois, neutral_8e5, fields):
    # psi1 -> s psi1 is A -> A / s in the normal form, so c3 -> s^2 c3
    d = grid(128)
    for s in (0.5, 3.0):
        g = cubic_fields(pois, neutral_8e5, d, psi1=s * fields.psi1)
        assert abs(g.c3 - s**2 * fields.c3) < 1e-10 * abs(s**2 * fields.c3)


def test_hopf_result(hopf_8e5):
    h = hopf_8e5
    assert h.classification is not Classification.DEGENERATE
    assert h.c3_error_bar < 1e-2 * abs(h.c3)
    assert abs(h.c3_fine - h.c3) == pytest.approx(h.c3_error_bar)
    d = h.as_dict()
    for key in ("omega_plus", "c1", "c3", "c3_error_bar", "classification"):
        assert key in d
    assert d["c1"] == [h.c1.real, h.c1.imag]
    t = h.alpha_scaled()
    assert t["c3"] == pytest.approx(h.alpha_plus * h.c3)
    assert t["omega_plus"] == pytest.approx(h.alpha_plus * h.omega_plus)


def test_flux_gauge_runs(pois, neutral_8e5):
    g = cubic_fields(pois, neutral_8e5, grid(128), Gauge.FLUX)
    assert np.isfinite(g.c3)


def test_classify():
    assert classify(-1, -2, 0.1) is Classification.SUPERCRITICAL
    assert classify(-1, 0.5, 0.1) is Classification.SUBCRITICAL
    assert classify(-1, 0.05, 0.2) is Classification.DEGENERATE
    with pytest.raises(PreconditionError):
        classify(0.1, -2, 0.1)


def test_second_harmonic_solve_signature(pois, neutral_8e5, fields):
    psi2, res = second_harmonic_solve(pois, neutral_8e5, fields.psi1, grid(128),
                                      omega=fields.lam.imag)
    np.testing.assert_array_equal(psi2, fields.psi2)
    assert res == fields.psi2_residual
