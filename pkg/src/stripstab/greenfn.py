"""Green function of the constant-coefficient Orr-Sommerfeld approximation.

Dividing the alpha-scaled operator by alpha and moving the profile terms to
the right gives

    -eps psi'''' - ct psi'' + alpha^2 c psi = E(psi),
    E(psi) = -U psi'' + alpha^2 U psi + U'' psi + eps alpha^4 psi + f,

with ct = c - 2 eps alpha^2.  This is an exact rewriting only for
eps = nu / (i alpha); that is the value carried by :class:`GreenApprox`
(note it is minus the pencil's ``epsilon`` accessor).

The left-hand side has slow roots +-mu_s = O(1) and fast roots +-mu_f ~
sqrt(ct / eps).  Its Green function is built from the symmetrised interior
part (source pair at x and 1 - x, with parity +1 or -1) plus a boundary-layer
part restoring psi = psi' = 0 at the walls.  The Green function of a single
source is the average of the two parities.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import (
    BoundarySolveError, DegenerateRootsError, NoContractionError, PreconditionError,
    ResolventAtEigenvalueError,
)
from .orrsomm import BOUNDARY_ROWS, assemble, resolvent_backward_error, solve_resolvent
from .profiles import ShearProfile
from .specgrid import SpectralDiscretization, l2_norm

COALESCENCE_TOL = 1e-8
ITER_RTOL = 1e-12
ITER_CAP = 200
STALL_RATIO = 0.9
STALL_STEPS = 3
GL_ORDER = 16
SMOOTH_MODES = 8


def _branch(z):
    """Square root with Re >= 0, ties (purely imaginary) broken by Im >= 0."""
    r = np.sqrt(complex(z))
    if r.real < 0 or (r.real == 0 and r.imag < 0):
        r = -r
    return r


def characteristic_roots(alpha: float, c: complex, nu: float):
    """Slow and fast roots (mu_s, mu_f) of -eps mu^4 - ct mu^2 + alpha^2 c = 0."""
    if alpha == 0:
        raise PreconditionError("characteristic roots need alpha != 0")
    eps = nu / (1j * alpha)
    ct = c - 2.0 * eps * alpha**2
    disc = np.sqrt(complex(ct * ct + 4.0 * eps * alpha**2 * c))
    m1 = (-ct + disc) / (2.0 * eps)
    m2 = (-ct - disc) / (2.0 * eps)
    big = m1 if abs(m1) >= abs(m2) else m2
    if big == 0:
        raise DegenerateRootsError("both characteristic roots vanish")
    # small root from the product, which avoids cancellation
    small = -(alpha**2) * c / (eps * big)
    mu_f, mu_s = _branch(big), _branch(small)
    if abs(mu_f - mu_s) < COALESCENCE_TOL * abs(mu_f):
        raise DegenerateRootsError(f"slow and fast roots coalesce (mu = {mu_f})")
    return mu_s, mu_f


@dataclass(frozen=True)
class GreenApprox:
    alpha: float
    nu: float
    c: complex
    epsilon: complex
    c_tilde: complex
    mu_s: complex
    mu_f: complex
    a: complex
    b: complex

    @property
    def lam(self) -> complex:
        return -1j * self.alpha * self.c

    def vieta_errors(self):
        e, ct = self.epsilon, self.c_tilde
        s2, f2 = self.mu_s**2, self.mu_f**2
        return (abs((s2 + f2) - (-ct / e)) / abs(ct / e),
                abs(s2 * f2 - (-(self.alpha**2) * self.c / e)) / abs(self.alpha**2 * self.c / e))

    def jump_errors(self):
        e = self.epsilon
        scale = abs(1.0 / (2.0 * e))
        return (abs(self.mu_f * self.a + self.mu_s * self.b) / (abs(self.mu_f * self.a) + abs(self.mu_s * self.b)),
                abs(self.mu_f**3 * self.a + self.mu_s**3 * self.b - 1.0 / (2.0 * e)) / scale)

    def boundary_coefficients(self, x, parity: int = 1):
        """(a'(x), b'(x)) cancelling G_int and its y-derivative at y = 0."""
        x = np.asarray(x, dtype=float)
        g0 = interior_green(self, x, 0.0, parity=parity)
        g1 = interior_green(self, x, 0.0, deriv=1, parity=parity)
        mf, ms, p = self.mu_f, self.mu_s, parity
        ef, es = np.exp(-mf), np.exp(-ms)
        m11, m12 = 1.0 + p * ef, 1.0 + p * es
        m21, m22 = -mf + p * mf * ef, -ms + p * ms * es
        det = m11 * m22 - m12 * m21
        if abs(det) < 1e-300 or abs(det) < 1e-14 * (abs(m11 * m22) + abs(m12 * m21)):
            raise BoundarySolveError(f"boundary system singular (det = {det})")
        ap = (-g0 * m22 + g1 * m12) / det
        bp = (-g1 * m11 + g0 * m21) / det
        return ap, bp


def green_approx(alpha: float, c: complex, nu: float) -> GreenApprox:
    mu_s, mu_f = characteristic_roots(alpha, c, nu)
    eps = nu / (1j * alpha)
    ct = c - 2.0 * eps * alpha**2
    d = mu_f**2 - mu_s**2
    a = 1.0 / (2.0 * eps * mu_f * d)
    b = -1.0 / (2.0 * eps * mu_s * d)
    ga = GreenApprox(float(alpha), float(nu), complex(c), eps, ct, mu_s, mu_f, a, b)
    if max(ga.vieta_errors()) > 1e-10 or max(ga.jump_errors()) > 1e-10:
        raise DegenerateRootsError("root or jump identities lost to rounding")
    return ga


def green_from_lambda(alpha: float, lam: complex, nu: float) -> GreenApprox:
    """GreenApprox at spectral parameter lam = -i alpha c."""
    return green_approx(alpha, 1j * lam / alpha, nu)


def _abs_kernel(mu, y, s, deriv, side):
    """d^k/dy^k exp(-mu |y - s|); at y == s the one-sided value for ``side``."""
    d = y - s
    sgn = np.where(d > 0, 1.0, np.where(d < 0, -1.0, float(side)))
    return (-mu * sgn) ** deriv * np.exp(-mu * np.abs(d))


def interior_green(ga: GreenApprox, x, y, deriv: int = 0, parity: int = 1, side: int = 1):
    """y-derivative of the symmetrised interior Green function.

    ``parity`` +1 is the even construction (source pair x and 1 - x of equal
    sign); -1 flips the mirror source.  ``side`` picks the one-sided limit when
    y sits exactly on a kink.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    out = 0.0
    for coef, mu in ((ga.a, ga.mu_f), (ga.b, ga.mu_s)):
        out = out + coef * (_abs_kernel(mu, y, x, deriv, side)
                            + parity * _abs_kernel(mu, y, 1.0 - x, deriv, side))
    return out


def _wall_modes(mu, y, deriv, parity):
    return (-mu) ** deriv * np.exp(-mu * y) + parity * mu**deriv * np.exp(-mu * (1.0 - y))


def boundary_green(ga: GreenApprox, x, y, deriv: int = 0, parity: int = 1):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    ap, bp = ga.boundary_coefficients(x, parity)
    return ap * _wall_modes(ga.mu_f, y, deriv, parity) + bp * _wall_modes(ga.mu_s, y, deriv, parity)


def total_green(ga: GreenApprox, x, y, deriv: int = 0, parity: int = 1, side: int = 1):
    return interior_green(ga, x, y, deriv, parity, side) + boundary_green(ga, x, y, deriv, parity)


def point_green(ga: GreenApprox, x, y, deriv: int = 0, side: int = 1):
    """Green function of a single source at x: the mean of both parities."""
    return 0.5 * (total_green(ga, x, y, deriv, 1, side) + total_green(ga, x, y, deriv, -1, side))


def _panels(lo, hi, mu_abs):
    """Panel breakpoints on [lo, hi], graded toward both ends on the scale 1/|mu|."""
    length = hi - lo
    if length <= 0:
        return np.array([lo, hi])
    half = 0.5 * length
    near = []
    h = 4.0 / mu_abs
    d = h
    while d < min(40.0 / mu_abs, half):
        near.append(d)
        d += h
    d = max(near[-1] if near else 0.0, 40.0 / mu_abs)
    while d < half:
        near.append(d)
        d *= 2.0
    near = [v for v in near if v < half]
    left = [lo] + [lo + v for v in near]
    right = [hi - v for v in reversed(near)] + [hi]
    return np.unique(np.array(left + [lo + half] + right))


def _quadrature_rule(breaks, mu_abs):
    gx, gw = np.polynomial.legendre.leggauss(GL_ORDER)
    xs, ws = [], []
    for lo, hi in zip(breaks[:-1], breaks[1:]):
        edges = _panels(lo, hi, mu_abs)
        a, b = edges[:-1], edges[1:]
        mid, rad = 0.5 * (a + b), 0.5 * (b - a)
        xs.append((mid[:, None] + rad[:, None] * gx[None, :]).ravel())
        ws.append((rad[:, None] * gw[None, :]).ravel())
    return np.concatenate(xs), np.concatenate(ws)


def convolution_matrix(ga: GreenApprox, disc: SpectralDiscretization) -> np.ndarray:
    """Matrix K with (K g)(y_i) = int_0^1 G0(x, y_i) g(x) dx for the grid interpolant of g.

    The source integral is split at the kinks x = y_i and x = 1 - y_i and
    graded toward them and toward the walls, where the fast exponentials live.
    """
    n = disc.size
    K = np.zeros((n, n), dtype=complex)
    mu_abs = max(abs(ga.mu_f), 1.0)
    for i, yi in enumerate(disc.nodes):
        breaks = np.unique(np.clip([0.0, yi, 1.0 - yi, 1.0], 0.0, 1.0))
        xq, wq = _quadrature_rule(breaks, mu_abs)
        g = point_green(ga, xq, yi)
        K[i] = (wq * g) @ disc.interpolation_matrix(xq)
    return K


def kernel_integral(ga: GreenApprox, x: float, part: str = "interior", parity: int = 1) -> float:
    """int_0^1 |G| + |d_y G| + |d_y^2 G| dy for the interior, boundary or total kernel."""
    funcs = {"interior": interior_green, "boundary": boundary_green, "total": total_green}
    if part not in funcs:
        raise ValueError(f"unknown kernel part {part!r}")
    g = funcs[part]
    breaks = np.unique(np.clip([0.0, x, 1.0 - x, 1.0], 0.0, 1.0))
    yq, wq = _quadrature_rule(breaks, max(abs(ga.mu_f), 1.0))
    total = 0.0
    for k in range(3):
        total += float(np.sum(wq * np.abs(g(ga, x, yq, k, parity))))
    return total


def _remainder_operator(profile, alpha, eps, disc):
    """Grid operator of E(psi) - f."""
    u, _, d2u = profile.on_grid(disc.nodes)
    return (-(u[:, None] * disc.D2) + np.diag(alpha**2 * u + d2u + eps * alpha**4)).astype(complex)


@dataclass(frozen=True, eq=False)
class IterationResult:
    psi: np.ndarray
    iterations: int
    ratios: tuple
    residual: float
    raw_residual: float


def resolvent_via_iteration(profile: ShearProfile, alpha: float, c: complex, nu: float,
                            f, disc: SpectralDiscretization, K=None) -> IterationResult:
    """Solve the alpha-scaled Orr-Sommerfeld resolvent problem (A - lam M) psi = f
    with lam = -i alpha c by summing psi = sum_j psi_j, psi_1 = G0 * (f/alpha),
    psi_{n+1} = G0 * (E(psi_n) - f).
    """
    f = np.asarray(f, dtype=complex)
    ga = green_approx(alpha, c, nu)
    if K is None:
        K = convolution_matrix(ga, disc)
    R = _remainder_operator(profile, alpha, ga.epsilon, disc)
    term = K @ (f / alpha)
    total = term.copy()
    first = l2_norm(term, disc)
    ratios = []
    if first == 0.0:
        return IterationResult(total, 1, (), 0.0, 0.0)
    prev = first
    stall = 0
    n = 1
    while n < ITER_CAP:
        term = K @ (R @ term)
        n += 1
        nrm = l2_norm(term, disc)
        total += term
        ratio = nrm / prev
        ratios.append(ratio)
        if nrm < ITER_RTOL * first:
            break
        stall = stall + 1 if ratio >= STALL_RATIO else 0
        if stall >= STALL_STEPS:
            raise NoContractionError(
                f"Green-function iteration does not contract at |lambda| = {abs(ga.lam):.3g} "
                f"(ratios {ratios[-STALL_STEPS:]})")
        prev = nrm
    pencil = assemble(profile, alpha, nu, disc)
    return IterationResult(total, n, tuple(ratios),
                           resolvent_backward_error(pencil, ga.lam, total, f),
                           pencil_residual(pencil, ga.lam, total, f))


def pencil_residual(pencil, lam, psi, f):
    """Relative interior residual ||(A - lam M) psi - f|| / ||f|| on the collocation grid."""
    r = (pencil.A - lam * pencil.M) @ psi - f
    interior = slice(2, pencil.disc.size - 2)
    fn = np.linalg.norm(f[interior])
    return float(np.linalg.norm(r[interior]) / fn) if fn > 0 else float(np.linalg.norm(r[interior]))


@dataclass(frozen=True)
class BoundReport:
    alpha: float
    nu: float
    magnitudes: tuple
    quotients: tuple
    h2_quotients: tuple
    slope: float
    constant: float
    slope_h2: float
    constant_h2: float
    skipped: tuple = ()
    norms: tuple = ()
    slope_norm: float = math.nan
    constant_norm: float = math.nan


def random_forcing(disc: SpectralDiscretization, rng, smooth_modes: int | None = None):
    """Unit-L2 complex forcing; white noise on the grid unless ``smooth_modes`` is set."""
    if smooth_modes is None:
        f = rng.standard_normal(disc.size) + 1j * rng.standard_normal(disc.size)
    else:
        k = np.arange(1, smooth_modes + 1)
        coef = (rng.standard_normal(smooth_modes) + 1j * rng.standard_normal(smooth_modes)) / k
        f = np.sin(np.pi * np.outer(disc.nodes, k)) @ coef + coef[0]
    return f / l2_norm(f, disc)


def resolvent_norm(pencil, lam: complex) -> float:
    """Discrete L2 operator norm of f -> psi (interior forcing, quadrature-weighted)."""
    disc = pencil.disc
    n = disc.size
    inner = np.setdiff1d(np.arange(n), np.array(BOUNDARY_ROWS) % n)
    cols = np.zeros((n, inner.size), dtype=complex)
    cols[inner, np.arange(inner.size)] = 1.0
    R = np.column_stack([solve_resolvent(pencil, lam, c) for c in cols.T])
    w = np.sqrt(disc.weights)
    return float(np.linalg.norm(w[:, None] * R / w[inner][None, :], 2))


def verify_resolvent_bound(profile: ShearProfile, alpha: float, nu: float, lambda_samples,
                           disc: SpectralDiscretization, n_forcings: int = 4,
                           seed: int = 0) -> BoundReport:
    """Fit log(quotient) against log|lambda| for resolvent solves at the samples.

    ``slope``/``constant`` refer to ||psi||_L2 / ||f||_L2 (worst over the random
    forcings); ``slope_h2``/``constant_h2`` to (||psi|| + ||psi'|| + ||psi''||) / ||f||;
    ``slope_norm``/``constant_norm`` to the discrete operator norm, which bounds
    the quotient for every forcing.
    Forcings alternate between grid white noise and smooth sine series; the
    smooth ones are damped least and usually set the worst case.
    """
    rng = np.random.default_rng(seed)
    forcings = [random_forcing(disc, rng, None if k % 2 else SMOOTH_MODES)
                for k in range(max(n_forcings, 2))]
    pencil = assemble(profile, alpha, nu, disc)
    mags, q, q2, qn, skipped = [], [], [], [], []
    for lam in lambda_samples:
        lam = complex(lam)
        try:
            best, best2 = 0.0, 0.0
            for f in forcings:
                psi = solve_resolvent(pencil, lam, f)
                n0 = l2_norm(psi, disc)
                best = max(best, n0)
                best2 = max(best2, n0 + l2_norm(disc.D1 @ psi, disc) + l2_norm(disc.D2 @ psi, disc))
        except ResolventAtEigenvalueError as exc:
            warnings.warn(f"skipping lambda = {lam}: {exc}", RuntimeWarning, stacklevel=2)
            skipped.append(lam)
            continue
        mags.append(abs(lam))
        qn.append(resolvent_norm(pencil, lam))
        q.append(best)
        q2.append(best2)
    if len(mags) < 2:
        raise PreconditionError("need at least two usable lambda samples")
    x = np.log(mags)
    s, i = np.polyfit(x, np.log(q), 1)
    s2, i2 = np.polyfit(x, np.log(q2), 1)
    sn, i_n = np.polyfit(x, np.log(qn), 1)
    return BoundReport(float(alpha), float(nu), tuple(mags), tuple(q), tuple(q2),
                       float(s), float(math.exp(i)), float(s2), float(math.exp(i2)), tuple(skipped),
                       tuple(qn), float(sn), float(math.exp(i_n)))
