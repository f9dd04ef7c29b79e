"""Normal-form coefficients at a neutral point.

Writing the disturbance stream function as a sum of Fourier modes
``psi_k(y, t) exp(i k x)``, the vorticity equation reads, mode by mode,

    M_k dpsi_k/dt = A_k psi_k - i N_k,    N = J(psi, psi),
    J(p, q) = p_y d_x(Lap q) - p_x d_y(Lap q),

with (A_k, M_k) the Orr-Sommerfeld pencil at wavenumber k.  Expanding
psi = A e psi1 + A^2 e^2 psi2 + |A|^2 phi0 + c.c. + ...  with e = exp(i alpha x)
and dA/dt = i omega A + c3 A |A|^2 gives

    (A_{2a} - 2 i omega M_{2a}) psi2 = i J(psi1, psi1)          second harmonic
    nu u0'' = -2 alpha Im(conj(psi1) psi1''),  u0 = phi0'          mean flow
    c3 = -i <psi_adj, N3> / <psi_adj, M psi1>                      solvability

where N3 collects the e-component of J between psi1 and phi0 and between
conj(psi1) and psi2.  The pairing <p, q> = sum(conj(p) q) is the plain
Euclidean one, for which psi_adj is the left eigenvector of (A, M).
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .errors import (AdjointDegenerateError, InconsistencyError, PreconditionError,
                     ResonanceError)
from .neutral import NeutralPoint
from .orrsomm import (BOUNDARY_ROWS, OrrSommerfeldPencil, assemble, backward_error,
                      d_pencil_d_alpha, d_pencil_d_nu, inverse_iteration, rcond,
                      resolvent_backward_error, scaled_pencil, solve_resolvent)
from .profiles import ShearProfile
from .specgrid import SpectralDiscretization, build_discretization

ADJOINT_TOL = 1e-10
NORMALIZATION_COND_MAX = 1e12
FD_STEPS = (1e-3, 5e-4)
FD_INCONSISTENT = 1e-2
RESONANCE_COND = 1e12


class Classification(str, enum.Enum):
    SUPERCRITICAL = "supercritical"
    SUBCRITICAL = "subcritical"
    DEGENERATE = "degenerate"


class Gauge(str, enum.Enum):
    PRESSURE = "pressure"
    FLUX = "flux"


def pairing(p, q) -> complex:
    return complex(np.vdot(p, q))


def normalize_continuous(psi, disc: SpectralDiscretization, refine: int = 64):
    """Scale so the interpolant has max modulus 1, real positive at its maximum.

    The maximum is located on the grid and refined on a fine local sample of
    the polynomial interpolant, so the gauge does not depend on N.
    """
    k = int(np.argmax(np.abs(psi)))
    y = disc.nodes
    lo, hi = y[max(k - 1, 0)], y[min(k + 1, len(y) - 1)]
    yy = np.linspace(lo, hi, 2 * refine + 1)
    vals = disc.interpolate(psi, yy)
    j = int(np.argmax(np.abs(vals)))
    for _ in range(3):
        h = (hi - lo) / (2 * refine)
        lo, hi = max(yy[j] - h, 0.0), min(yy[j] + h, 1.0)
        yy = np.linspace(lo, hi, 2 * refine + 1)
        vals = disc.interpolate(psi, yy)
        j = int(np.argmax(np.abs(vals)))
    return psi / vals[j]


def adjoint_eigen(pencil: OrrSommerfeldPencil, lam: complex, psi1=None, maxiter: int = 6):
    """Left eigenvector: (A^H - conj(lam) M^H) psi_adj = 0.

    With ``psi1`` given, psi_adj is scaled so that <psi_adj, M psi1> = 1.
    Returns (psi_adj, residual, normalization condition number).
    """
    r, As, Ms = scaled_pencil(pencil)
    K = (As - lam * Ms).conj().T
    with np.errstate(all="ignore"):
        lu = sla.lu_factor(K, check_finite=False)
    rng = np.random.default_rng(12345)
    y = rng.standard_normal(K.shape[0]) + 1j * rng.standard_normal(K.shape[0])
    for _ in range(maxiter):
        y = sla.lu_solve(lu, Ms.conj().T @ y, check_finite=False)
        y /= np.linalg.norm(y)
    adj = r * y
    res = float(np.linalg.norm(K @ y) / ((np.linalg.norm(As) + abs(lam) * np.linalg.norm(Ms))))
    if psi1 is None:
        return adj, res, math.nan
    Mpsi = pencil.M @ psi1
    s = pairing(adj, Mpsi)
    cond = np.linalg.norm(adj) * np.linalg.norm(Mpsi) / abs(s) if s != 0 else math.inf
    if not cond < NORMALIZATION_COND_MAX:
        raise AdjointDegenerateError(
            f"<psi_adj, M psi1> vanishes to working precision (condition {cond:.2e}); "
            "eigenvalue not simple")
    if res > ADJOINT_TOL:
        raise AdjointDegenerateError(f"adjoint residual {res:.2e} above {ADJOINT_TOL}")
    return adj / np.conj(s), res, float(cond)


def critical_mode(profile, neutral: NeutralPoint, disc: SpectralDiscretization):
    """Pencil and normalized critical eigenpair at the neutral point on ``disc``."""
    pencil = assemble(profile, neutral.alpha_plus, neutral.nu, disc)
    start = neutral.pair.psi
    if len(start) != disc.size:
        old = build_discretization(len(start) - 1)
        start = old.interpolate(start, disc.nodes)
    lam, psi, _ = inverse_iteration(pencil, neutral.pair.lam, start)
    return pencil, lam, normalize_continuous(psi, disc)


def derivative_c1(pencil, lam, psi1, psi_adj):
    """(d lambda/d nu, d lambda/d alpha) from the adjoint pairing."""
    den = pairing(psi_adj, pencil.M @ psi1)
    c_nu = pairing(psi_adj, d_pencil_d_nu(pencil) @ psi1) / den
    dA, dM = d_pencil_d_alpha(pencil)
    c_al = pairing(psi_adj, (dA - lam * dM) @ psi1) / den
    return complex(c_nu), complex(c_al)


def _lam_at(profile, alpha, nu, disc, lam0, psi0):
    pencil = assemble(profile, alpha, nu, disc)
    lam, _, _ = inverse_iteration(pencil, lam0, psi0)
    return lam


def finite_difference_c1(profile, neutral: NeutralPoint, disc, lam, psi1):
    """Richardson-extrapolated centred difference of lambda in nu.

    Returns (c1_fd, d_coarse, d_fine).
    """
    nu, a = neutral.nu, neutral.alpha_plus
    ds = []
    for rel in FD_STEPS:
        h = rel * nu
        lp = _lam_at(profile, a, nu + h, disc, lam, psi1)
        lm = _lam_at(profile, a, nu - h, disc, lam, psi1)
        ds.append((lp - lm) / (2.0 * h))
    d1, d2 = ds
    r = FD_STEPS[0] / FD_STEPS[1]
    return complex((r**2 * d2 - d1) / (r**2 - 1.0)), complex(d1), complex(d2)


def compute_c1(profile: ShearProfile, neutral: NeutralPoint, disc: SpectralDiscretization):
    """(c1, c1_fd): adjoint formula with the exact nu-derivative, and its FD check."""
    pencil, lam, psi1 = critical_mode(profile, neutral, disc)
    adj, _, _ = adjoint_eigen(pencil, lam, psi1)
    c1, _ = derivative_c1(pencil, lam, psi1, adj)
    c1_fd, _, _ = finite_difference_c1(profile, neutral, disc, lam, psi1)
    if abs(c1 - c1_fd) > FD_INCONSISTENT * abs(c1):
        raise InconsistencyError(
            f"adjoint c1 = {c1:.6g} and finite-difference c1 = {c1_fd:.6g} disagree")
    return c1, c1_fd


def jacobian_mode(p, k1, q, k2, disc: SpectralDiscretization):
    """Grid values of J(p e^{i k1 x}, q e^{i k2 x}) / e^{i (k1 + k2) x}."""
    dp = disc.D1 @ p
    q1, q2, q3 = disc.D1 @ q, disc.D2 @ q, disc.D3 @ q
    return dp * (1j * k2) * (q2 - k2**2 * q) - 1j * k1 * p * (q3 - k2**2 * q1)


def second_harmonic_solve(profile, neutral: NeutralPoint, psi1, disc, omega=None):
    """psi2 solving (A_{2a} - 2 i omega M_{2a}) psi2 = i J(psi1, psi1)."""
    a = neutral.alpha_plus
    omega = neutral.omega_plus if omega is None else omega
    pencil = assemble(profile, 2.0 * a, neutral.nu, disc)
    lam2 = 2j * omega
    rc = rcond(pencil, lam2)
    if not rc > 1.0 / RESONANCE_COND:
        raise ResonanceError(f"second harmonic near resonance (rcond {rc:.2e})")
    rhs = 1j * jacobian_mode(psi1, a, psi1, a, disc)
    psi2 = solve_resolvent(pencil, lam2, rhs)
    return psi2, resolvent_backward_error(pencil, lam2, psi2, rhs)


def mean_flow_forcing(psi1, alpha, disc):
    """Zero-wavenumber vorticity forcing J(psi1 e, conj) + J(conj, psi1 e)."""
    c = np.conj(psi1)
    return jacobian_mode(psi1, alpha, c, -alpha, disc) + jacobian_mode(c, -alpha, psi1, alpha, disc)


def mean_flow_solve(profile, neutral: NeutralPoint, psi1, disc: SpectralDiscretization,
                    gauge: Gauge | str = Gauge.PRESSURE):
    """Steady mean-flow correction phi0 (stream function, phi0(0) = 0).

    Pressure gauge: nu u0'' = -2 alpha Im(conj(psi1) psi1''), u0(0) = u0(1) = 0,
    which is the x-averaged momentum balance at fixed pressure gradient.
    Flux gauge: nu phi0'''' = F0 with phi0 = phi0' = 0 at both walls, which
    additionally pins the flux.
    """
    gauge = Gauge(gauge)
    a, nu = neutral.alpha_plus, neutral.nu
    n = disc.size
    if gauge is Gauge.FLUX:
        f0 = mean_flow_forcing(psi1, a, disc)
        pencil = assemble(profile, 0.0, nu, disc)
        # at alpha = 0 the pencil's A is i nu D4 with wall rows
        return np.real(solve_resolvent(pencil, 0.0, 1j * f0.real))
    s = -2.0 * a * np.imag(np.conj(psi1) * (disc.D2 @ psi1))
    L = nu * disc.D2.copy()
    rhs = s.copy()
    L[0], L[-1] = 0.0, 0.0
    L[0, 0] = L[-1, -1] = 1.0
    rhs[0] = rhs[-1] = 0.0
    u0 = np.linalg.solve(L, rhs)
    D = disc.D1.copy()
    D[0] = 0.0
    D[0, 0] = 1.0
    g = u0.copy()
    g[0] = 0.0
    return np.linalg.solve(D, g)


def cubic_forcing(psi1, psi2, phi0, alpha, disc):
    """e-component of the cubic interactions (boundary entries zeroed)."""
    c = np.conj(psi1)
    n3 = (jacobian_mode(psi1, alpha, phi0, 0.0, disc) + jacobian_mode(phi0, 0.0, psi1, alpha, disc)
          + jacobian_mode(c, -alpha, psi2, 2.0 * alpha, disc)
          + jacobian_mode(psi2, 2.0 * alpha, c, -alpha, disc))
    n3[list(BOUNDARY_ROWS)] = 0.0
    return n3


def compute_c3(profile, neutral, psi1, psi_adj, psi2, phi0, disc, pencil=None) -> complex:
    a = neutral.alpha_plus
    if pencil is None:
        pencil = assemble(profile, a, neutral.nu, disc)
    n3 = cubic_forcing(psi1, psi2, phi0, a, disc)
    return complex(-1j * pairing(psi_adj, n3) / pairing(psi_adj, pencil.M @ psi1))


@dataclass(frozen=True, eq=False)
class CubicFields:
    pencil: OrrSommerfeldPencil
    lam: complex
    psi1: np.ndarray
    psi_adj: np.ndarray
    psi2: np.ndarray
    phi0: np.ndarray
    c3: complex
    adjoint_residual: float
    adjoint_condition: float
    psi2_residual: float


def cubic_fields(profile, neutral, disc, gauge=Gauge.PRESSURE, psi1=None) -> CubicFields:
    """All auxiliary fields and c3 on one grid; ``psi1`` overrides the normalized mode."""
    pencil, lam, mode = critical_mode(profile, neutral, disc)
    psi1 = mode if psi1 is None else np.asarray(psi1, dtype=complex)
    adj, res, cond = adjoint_eigen(pencil, lam, psi1)
    psi2, r2 = second_harmonic_solve(profile, neutral, psi1, disc, omega=lam.imag)
    phi0 = mean_flow_solve(profile, neutral, psi1, disc, gauge)
    c3 = compute_c3(profile, neutral, psi1, adj, psi2, phi0, disc, pencil)
    return CubicFields(pencil, lam, psi1, adj, psi2, phi0, c3, res, cond, r2)


def classify(c1: complex, c3: complex, error_bar: float) -> Classification:
    if not c1.real < 0:
        raise PreconditionError(f"Re(c1) = {c1.real:.3e} is not negative")
    if c3.real < -error_bar:
        return Classification.SUPERCRITICAL
    if c3.real > error_bar:
        return Classification.SUBCRITICAL
    return Classification.DEGENERATE


@dataclass(frozen=True, eq=False)
class HopfCoefficients:
    neutral: NeutralPoint
    psi1: np.ndarray
    psi_adj: np.ndarray
    c1: complex
    c1_fd: complex
    c1_alpha: complex
    psi2: np.ndarray
    phi0: np.ndarray
    c3: complex
    c3_fine: complex
    c3_error_bar: float
    classification: Classification
    gauge: Gauge
    disc: SpectralDiscretization
    profile: ShearProfile

    @property
    def omega_plus(self) -> float:
        return self.neutral.omega_plus

    @property
    def alpha_plus(self) -> float:
        return self.neutral.alpha_plus

    def alpha_scaled(self):
        """omega, c1, c3 multiplied by alpha_plus."""
        a = self.alpha_plus
        return {"omega_plus": a * self.omega_plus, "c1": a * self.c1, "c3": a * self.c3}

    def as_dict(self):
        def cx(z):
            return [float(z.real), float(z.imag)]

        th = self.alpha_scaled()
        return {
            "nu": self.neutral.nu,
            "alpha_plus": self.alpha_plus,
            "omega_plus": self.omega_plus,
            "c1": cx(self.c1),
            "c1_fd": cx(self.c1_fd),
            "c1_alpha": cx(self.c1_alpha),
            "c3": cx(self.c3),
            "c3_fine": cx(self.c3_fine),
            "c3_error_bar": self.c3_error_bar,
            "classification": self.classification.value,
            "gauge": self.gauge.value,
            "N": self.disc.N,
            "normalization": "max |psi1| = 1, real positive at the maximum of the interpolant",
            "alpha_scaled": {"omega_plus": th["omega_plus"], "c1": cx(th["c1"]),
                                   "c3": cx(th["c3"]), "factor": "alpha_plus"},
        }


def hopf_coefficients(profile: ShearProfile, neutral: NeutralPoint, disc: SpectralDiscretization,
                      gauge: Gauge | str = Gauge.PRESSURE) -> HopfCoefficients:
    """c1 (adjoint and FD), c3 with a resolution error bar, and the classification."""
    gauge = Gauge(gauge)
    fields = cubic_fields(profile, neutral, disc, gauge)
    c1, c1_al = derivative_c1(fields.pencil, fields.lam, fields.psi1, fields.psi_adj)
    c1_fd, _, _ = finite_difference_c1(profile, neutral, disc, fields.lam, fields.psi1)
    if abs(c1 - c1_fd) > FD_INCONSISTENT * abs(c1):
        raise InconsistencyError(
            f"adjoint c1 = {c1:.6g} and finite-difference c1 = {c1_fd:.6g} disagree")
    if not c1.real < 0:
        raise PreconditionError(
            f"Re(c1) = {c1.real:.3e} >= 0: not an upper-branch neutral point of the expected type")
    fine = build_discretization(int(math.ceil(1.5 * disc.N)))
    c3_fine = cubic_fields(profile, neutral, fine, gauge).c3
    bar = abs(fields.c3 - c3_fine)
    return HopfCoefficients(neutral, fields.psi1, fields.psi_adj, c1, c1_fd, c1_al,
                            fields.psi2, fields.phi0, fields.c3, c3_fine, float(bar),
                            classify(c1, fields.c3, bar), gauge, disc, profile)
