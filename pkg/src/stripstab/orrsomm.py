"""Orr-Sommerfeld pencil in lambda form, spectra and resolvents.

The perturbation stream function is ``exp(i alpha x + lambda t) psi(y)``
with ``lambda = -i alpha c``; ``Re(lambda) > 0`` means growth.  The pencil is

    A psi = lambda M psi,
    A = alpha U (D2 - alpha^2) - alpha U'' + i nu (D2 - alpha^2)^2,
    M = i (D2 - alpha^2),

which is the classical operator multiplied by alpha and stays regular at
alpha = 0.  Wall conditions psi = psi' = 0 replace rows 0, 1, N-1 and N.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, replace

import numpy as np
import scipy.linalg as sla

from .errors import ContinuationError, NumericalError, ResolventAtEigenvalueError, ShapeError
from .profiles import ShearProfile
from .specgrid import SpectralDiscretization, build_discretization

BOUNDARY_ROWS = (0, 1, -2, -1)
SPURIOUS_MOVE_TOL = 1e-6
SPURIOUS_TAIL_FRACTION = 0.01
# |lambda| beyond this is treated as an artefact of the boundary rows
LAMBDA_CAP = 1e7
RCOND_MIN = 1e-16
STEP_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class OrrSommerfeldPencil:
    alpha: float
    nu: float
    A: np.ndarray
    M: np.ndarray
    disc: SpectralDiscretization
    profile: ShearProfile | None = None

    @property
    def epsilon(self) -> complex:
        """-nu / (i alpha); undefined at alpha = 0."""
        if self.alpha == 0:
            raise ZeroDivisionError("epsilon is undefined at alpha = 0")
        return -self.nu / (1j * self.alpha)

    def interior(self):
        return slice(2, self.disc.size - 2)

    def bc_rows(self):
        return boundary_rows(self.disc)


@dataclass(frozen=True, eq=False)
class EigenPair:
    alpha: float
    nu: float
    lam: complex
    psi: np.ndarray
    residual: float
    gap: float = math.inf
    cond: float = math.nan

    @property
    def c(self) -> complex:
        if self.alpha == 0:
            return complex("nan")
        return 1j * self.lam / self.alpha

    @property
    def growth_rate(self) -> float:
        return self.lam.real


def boundary_rows(disc: SpectralDiscretization) -> np.ndarray:
    n = disc.size
    rows = np.zeros((4, n))
    rows[0, 0] = 1.0
    rows[1] = disc.D1[0]
    rows[2] = disc.D1[-1]
    rows[3, -1] = 1.0
    # bring the derivative rows to unit scale
    rows[1] /= np.abs(rows[1]).max()
    rows[2] /= np.abs(rows[2]).max()
    return rows


def _operators(profile, alpha, nu, disc):
    u, _, d2u = profile.on_grid(disc.nodes)
    n = disc.size
    I = np.eye(n)
    L = disc.D2 - alpha**2 * I
    L2 = disc.D4 - 2.0 * alpha**2 * disc.D2 + alpha**4 * I
    A = alpha * (u[:, None] * L) - alpha * np.diag(d2u) + 1j * nu * L2
    M = 1j * L
    return A.astype(complex), M.astype(complex), L2


def _apply_bc(A, M, disc):
    rows = boundary_rows(disc)
    for r, idx in zip(rows, BOUNDARY_ROWS):
        A[idx] = r
        M[idx] = 0.0
    return A, M


def assemble(profile: ShearProfile, alpha: float, nu: float,
             disc: SpectralDiscretization) -> OrrSommerfeldPencil:
    if not nu > 0:
        raise ValueError(f"nu must be positive, got {nu}")
    alpha = float(alpha)
    A, M, _ = _operators(profile, alpha, nu, disc)
    A, M = _apply_bc(A, M, disc)
    return OrrSommerfeldPencil(alpha, float(nu), A, M, disc, profile)


def d_pencil_d_nu(pencil: OrrSommerfeldPencil) -> np.ndarray:
    """Exact nu-derivative of A (boundary rows do not depend on nu)."""
    disc = pencil.disc
    a = pencil.alpha
    dA = 1j * (disc.D4 - 2.0 * a**2 * disc.D2 + a**4 * np.eye(disc.size))
    dA = dA.astype(complex)
    dA[list(BOUNDARY_ROWS)] = 0.0
    return dA


def d_pencil_d_alpha(pencil: OrrSommerfeldPencil):
    """Exact alpha-derivatives (dA, dM) of the pencil."""
    disc = pencil.disc
    a = pencil.alpha
    u, _, d2u = pencil.profile.on_grid(disc.nodes)
    I = np.eye(disc.size)
    L = disc.D2 - a**2 * I
    dA = u[:, None] * L + a * np.diag(u) * (-2.0 * a) - np.diag(d2u) \
        + 1j * pencil.nu * (-4.0 * a * disc.D2 + 4.0 * a**3 * I)
    dM = 1j * (-2.0 * a) * I
    dA = dA.astype(complex)
    dM = dM.astype(complex)
    dA[list(BOUNDARY_ROWS)] = 0.0
    dM[list(BOUNDARY_ROWS)] = 0.0
    return dA, dM


def scaled_pencil(pencil: OrrSommerfeldPencil):
    """Row-equilibrated copy (r, r*A, r*M); same eigenvalues, far better rounding."""
    cache = pencil.__dict__.setdefault("_scaled", {})
    if "v" not in cache:
        r = 1.0 / np.abs(pencil.A).max(axis=1)
        cache["v"] = (r, pencil.A * r[:, None], pencil.M * r[:, None])
    return cache["v"]


def backward_error(pencil: OrrSommerfeldPencil, lam, psi) -> float:
    """Normwise backward error of (lam, psi) for the row-equilibrated pencil."""
    _, A, M = scaled_pencil(pencil)
    r = A @ psi - lam * (M @ psi)
    scale = (_fro(A) + abs(lam) * _fro(M)) * np.linalg.norm(psi)
    return float(np.linalg.norm(r) / scale)


def _fro(X):
    return float(np.linalg.norm(X))


def normalize_mode(psi: np.ndarray) -> np.ndarray:
    """Scale so max |psi| = 1, real and positive at the max-modulus node."""
    k = int(np.argmax(np.abs(psi)))
    return psi / psi[k]


def wall_values(psi, disc):
    """(psi(0), psi'(0), psi(1), psi'(1))."""
    d = disc.D1 @ psi
    return np.array([psi[0], d[0], psi[-1], d[-1]])


def tail_fraction(psi, disc, fraction=1.0 / 3.0):
    """Share of Chebyshev-coefficient energy in the top ``fraction`` of modes."""
    a = disc.cheb_coefficients(psi)
    e = np.abs(a) ** 2
    cut = int(math.ceil(len(e) * (1.0 - fraction)))
    total = e.sum()
    return float(e[cut:].sum() / total) if total > 0 else 0.0


def raw_eigensystem(pencil: OrrSommerfeldPencil, left: bool = False):
    """Finite eigenvalues and right (optionally left) eigenvectors from dense QZ.

    Left eigenvectors refer to the row-equilibrated pencil.
    """
    _, A, M = scaled_pencil(pencil)
    try:
        out = sla.eig(A, M, left=left, right=True, homogeneous_eigvals=True)
    except (np.linalg.LinAlgError, ValueError) as exc:
        cond = np.linalg.cond(A)
        raise NumericalError(f"QZ failed at alpha={pencil.alpha}, nu={pencil.nu}: {exc} "
                             f"(cond = {cond:.3e})") from exc
    (a, b), vl, vr = (out[0], out[1], out[2]) if left else (out[0], None, out[1])
    with np.errstate(divide="ignore", invalid="ignore"):
        lam = a / b
    ok = np.isfinite(lam) & (np.abs(lam) < LAMBDA_CAP)
    if left:
        return lam[ok], vr[:, ok], vl[:, ok]
    return lam[ok], vr[:, ok]


def eigenvalue_condition(pencil: OrrSommerfeldPencil, lam, right, left) -> float:
    """Relative condition number of a simple eigenvalue of the equilibrated pencil."""
    _, A, M = scaled_pencil(pencil)
    denom = abs(np.vdot(left, M @ right))
    if denom == 0:
        return math.inf
    scale = (_fro(A) + abs(lam) * _fro(M)) / max(abs(lam), 1.0)
    return float(np.linalg.norm(left) * np.linalg.norm(right) * scale / denom)


def _gaps(lams):
    if len(lams) < 2:
        return np.full(len(lams), math.inf)
    d = np.abs(lams[:, None] - lams[None, :])
    np.fill_diagonal(d, np.inf)
    return d.min(axis=1)


def _refined_size(N):
    return int(math.ceil(1.5 * N))


def eigen_spectrum(pencil: OrrSommerfeldPencil, filtered: bool = True,
                   refine: bool = True) -> list[EigenPair]:
    """Eigenpairs sorted by decreasing Re(lambda), spurious modes removed.

    A pair is retained when its eigenvalue moves by less than 1e-6 (relative to
    max(1, |lambda|)) between N and ceil(3N/2) and less than 1% of its
    Chebyshev energy sits in the top third of coefficients.  Retained pairs are
    polished by a few Rayleigh-quotient steps unless ``refine`` is off.
    """
    lam, vecs, lvecs = raw_eigensystem(pencil, left=True)
    gaps = _gaps(lam)
    keep = np.ones(len(lam), dtype=bool)
    if filtered:
        if pencil.profile is None:
            raise NumericalError("spurious-mode filter needs the pencil's profile")
        fine = assemble(pencil.profile, pencil.alpha, pencil.nu,
                        build_discretization(_refined_size(pencil.disc.N)))
        lam_fine, _ = raw_eigensystem(fine)
        for i, l in enumerate(lam):
            moved = np.min(np.abs(lam_fine - l)) if len(lam_fine) else math.inf
            keep[i] = moved < SPURIOUS_MOVE_TOL * max(1.0, abs(l))
    pairs = []
    for i in np.flatnonzero(keep):
        psi = normalize_mode(vecs[:, i])
        if filtered and tail_fraction(psi, pencil.disc) >= SPURIOUS_TAIL_FRACTION:
            continue
        l = complex(lam[i])
        kappa = eigenvalue_condition(pencil, l, vecs[:, i], lvecs[:, i])
        if refine:
            try:
                l, psi, _ = inverse_iteration(pencil, l, psi, maxiter=8)
                psi = normalize_mode(psi)
            except ContinuationError:
                pass
        pairs.append(EigenPair(pencil.alpha, pencil.nu, l, psi,
                               backward_error(pencil, l, psi), float(gaps[i]), kappa))
    pairs.sort(key=lambda p: (-p.lam.real, -p.lam.imag))
    return pairs


def _lu(mat):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", sla.LinAlgWarning)
        return sla.lu_factor(mat, check_finite=False)


def inverse_iteration(pencil: OrrSommerfeldPencil, lam0: complex, psi0=None,
                      maxiter: int = 50, tol: float = 1e-10, rayleigh: bool = True):
    """Shifted inverse (Rayleigh-quotient) iteration on the pencil.

    Returns (lam, psi, iterations).  Raises ContinuationError when the
    backward error has not dropped below ``tol`` within ``maxiter`` steps.
    """
    _, A, M = scaled_pencil(pencil)
    n = A.shape[0]
    if psi0 is None:
        psi0 = np.ones(n, dtype=complex)
    x = np.asarray(psi0, dtype=complex)
    x = x / np.linalg.norm(x)
    lam = complex(lam0)
    last_step = math.inf
    res = math.inf
    for it in range(1, maxiter + 1):
        lu = _lu(A - lam * M)
        y = sla.lu_solve(lu, M @ x, check_finite=False)
        nrm = np.linalg.norm(y)
        if not np.isfinite(nrm) or nrm == 0:
            raise ContinuationError("inverse iteration broke down")
        x = y / nrm
        if rayleigh:
            Mx = M @ x
            lam_new = complex(np.vdot(Mx, A @ x) / np.vdot(Mx, Mx))
        else:
            lam_new = lam
        res = backward_error(pencil, lam_new, x)
        step = abs(lam_new - lam)
        lam = lam_new
        # stagnation of the step at the rounding floor also counts as converged
        settled = step <= STEP_TOL * max(1.0, abs(lam)) or (it >= 3 and step >= 0.5 * last_step)
        if res < tol and (settled or not rayleigh):
            return lam, x, it
        last_step = step
    raise ContinuationError(
        f"inverse iteration did not converge in {maxiter} steps "
        f"(alpha={pencil.alpha}, nu={pencil.nu}, last residual {res:.2e})"
    )


def leading_eigen(profile: ShearProfile, alpha: float, nu: float,
                  disc: SpectralDiscretization, guess: EigenPair | None = None) -> EigenPair:
    """Eigenpair with the largest Re(lambda).

    Without ``guess`` this is the top of the filtered dense spectrum; with
    ``guess`` it is Rayleigh-quotient iteration started from the guess, which
    is how parameter continuation follows a branch.
    """
    pencil = assemble(profile, alpha, nu, disc)
    if guess is None:
        pairs = eigen_spectrum(pencil)
        if not pairs:
            raise NumericalError(f"no resolved eigenvalues at alpha={alpha}, nu={nu}")
        top = pairs[0]
        lam, psi, _ = inverse_iteration(pencil, top.lam, top.psi)
        psi = normalize_mode(psi)
        return EigenPair(alpha, nu, lam, psi, backward_error(pencil, lam, psi), top.gap, top.cond)
    start = guess.psi if len(guess.psi) == disc.size else None
    lam, psi, _ = inverse_iteration(pencil, guess.lam, start)
    psi = normalize_mode(psi)
    return EigenPair(alpha, nu, lam, psi, backward_error(pencil, lam, psi), guess.gap, guess.cond)


def continuation_step(profile, alpha, nu, disc, guess: EigenPair):
    """leading_eigen with a guess, also returning the iteration count."""
    pencil = assemble(profile, alpha, nu, disc)
    start = guess.psi if len(guess.psi) == disc.size else None
    lam, psi, its = inverse_iteration(pencil, guess.lam, start)
    psi = normalize_mode(psi)
    return EigenPair(alpha, nu, lam, psi, backward_error(pencil, lam, psi),
                     guess.gap, guess.cond), its


def solve_resolvent(pencil: OrrSommerfeldPencil, lam: complex, f) -> np.ndarray:
    """Solve (A - lam M) psi = f with homogeneous wall conditions.

    The boundary entries of ``f`` are ignored (replaced by zero).
    """
    f = np.asarray(f, dtype=complex)
    n = pencil.disc.size
    if f.shape != (n,):
        raise ShapeError(f"forcing must have shape ({n},), got {f.shape}")
    rhs = f.copy()
    rhs[list(BOUNDARY_ROWS)] = 0.0
    r, A, M = scaled_pencil(pencil)
    K = A - lam * M
    lu = _lu(K)
    rcond = _rcond(lu, K)
    if not rcond > RCOND_MIN:
        raise ResolventAtEigenvalueError(
            f"pencil singular to working precision at lambda={lam} (rcond {rcond:.2e})")
    return sla.lu_solve(lu, r * rhs, check_finite=False)


def _rcond(lu, K):
    gecon, = sla.get_lapack_funcs(("gecon",), (K,))
    anorm = np.abs(K).sum(axis=0).max()
    rcond, info = gecon(lu[0], anorm, norm="1")
    return float(rcond) if info == 0 else 0.0


def resolvent_backward_error(pencil: OrrSommerfeldPencil, lam: complex, psi, f) -> float:
    """Normwise backward error of psi as a solution of (A - lam M) psi = f (interior rows of f)."""
    f = np.asarray(f, dtype=complex).copy()
    f[list(BOUNDARY_ROWS)] = 0.0
    r, A, M = scaled_pencil(pencil)
    res = A @ psi - lam * (M @ psi) - r * f
    scale = (_fro(A) + abs(lam) * _fro(M)) * np.linalg.norm(psi) + np.linalg.norm(r * f)
    return float(np.linalg.norm(res) / scale) if scale > 0 else 0.0


def rcond(pencil: OrrSommerfeldPencil, lam: complex) -> float:
    """Reciprocal 1-norm condition number of the row-equilibrated A - lam M."""
    _, A, M = scaled_pencil(pencil)
    K = A - lam * M
    return _rcond(_lu(K), K)


def with_profile_values(pair: EigenPair, **changes) -> EigenPair:
    return replace(pair, **changes)
