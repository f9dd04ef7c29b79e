"""Marginal curves, the critical point and the spectral audit.

The leading eigenvalue is followed in (alpha, nu) by Rayleigh-quotient
continuation from a dense solve; a step that fails to converge, or lands on a
mode whose eigenvector barely overlaps the previous one, is halved.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, fields

import numpy as np
import scipy.linalg as sla
from scipy.optimize import brentq, minimize_scalar

from .errors import (AmbiguityError, BracketError, ContinuationError, FitDomainError,
                     NumericalError, PreconditionError)
from .orrsomm import (EigenPair, assemble, continuation_step, eigen_spectrum,
                      leading_eigen, scaled_pencil)
from .profiles import ShearProfile
from .specgrid import SpectralDiscretization

MAX_HALVINGS = 8
OVERLAP_MIN = 0.9
ROOT_TOL = 1e-9
D_ALPHA = 1e-4
D_NU_REL = 1e-3
SCAN_POINTS = 9
CRITICAL_TOL = 1e-6
GAP_FACTOR = 1e3
ANGLE_TOL = 1e-6


def _overlap(a, b):
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0 or nb == 0:
        return 0.0
    return float(abs(np.vdot(a, b)) / (na * nb))


class Branch(list):
    """List of EigenPair along a path; ``jumps`` holds indices where the mode changed."""

    def __init__(self, pairs=(), jumps=()):
        super().__init__(pairs)
        self.jumps = list(jumps)


def _step(profile, disc, pair: EigenPair, alpha, nu, depth=0):
    """Continue ``pair`` to (alpha, nu), halving the step on trouble.

    Returns (pair, jumped).
    """
    try:
        new, _ = continuation_step(profile, alpha, nu, disc, pair)
        ok = _overlap(new.psi, pair.psi) >= OVERLAP_MIN
    except ContinuationError:
        new, ok = None, False
    if ok:
        return new, False
    if depth >= MAX_HALVINGS:
        if new is not None:
            return new, True
        raise ContinuationError(
            f"branch lost between (alpha={pair.alpha:.6g}, nu={pair.nu:.6g}) and "
            f"(alpha={alpha:.6g}, nu={nu:.6g}) after {MAX_HALVINGS} halvings", last_good=pair)
    mid, j1 = _step(profile, disc, pair, 0.5 * (pair.alpha + alpha), 0.5 * (pair.nu + nu), depth + 1)
    end, j2 = _step(profile, disc, mid, alpha, nu, depth + 1)
    return end, j1 or j2


def _check_alpha_path(alphas):
    a = np.asarray(alphas, dtype=float)
    if np.any(a == 0) or (np.any(a > 0) and np.any(a < 0)):
        raise PreconditionError("continuation path must not cross alpha = 0")


def track_eigenvalue(profile: ShearProfile, path, disc: SpectralDiscretization,
                     start: EigenPair | None = None) -> Branch:
    """Follow the leading eigenvalue along a list of (alpha, nu) points."""
    path = [(float(a), float(n)) for a, n in path]
    if not path:
        return Branch()
    _check_alpha_path([a for a, _ in path])
    if any(n <= 0 for _, n in path):
        raise PreconditionError("viscosity must be positive along the path")
    a0, n0 = path[0]
    if start is None:
        pair = leading_eigen(profile, a0, n0, disc)
    else:
        pair, _ = _step(profile, disc, start, a0, n0)
    out = Branch([pair])
    for k, (a, n) in enumerate(path[1:], start=1):
        try:
            pair, jumped = _step(profile, disc, pair, a, n)
        except ContinuationError as exc:
            raise ContinuationError(str(exc), last_good=out[-1]) from exc
        if jumped:
            out.jumps.append(k)
        out.append(pair)
    return out


class _Follower:
    """Cache of eigenpairs on one branch at fixed nu; new points start from the nearest."""

    def __init__(self, profile, disc, pair: EigenPair):
        self.profile, self.disc = profile, disc
        self.pairs = {(pair.alpha, pair.nu): pair}

    def at(self, alpha, nu):
        key = (float(alpha), float(nu))
        if key in self.pairs:
            return self.pairs[key]
        near = min(self.pairs.values(),
                   key=lambda p: abs(p.alpha - alpha) + abs(math.log(p.nu / nu)))
        pair, _ = _step(self.profile, self.disc, near, alpha, nu)
        self.pairs[key] = pair
        return pair

    def growth(self, alpha, nu):
        return self.at(alpha, nu).lam.real


@dataclass(frozen=True, eq=False)
class NeutralPoint:
    nu: float
    alpha_plus: float
    omega_plus: float
    d_re_lambda_d_nu: float
    d_re_lambda_d_alpha: float
    dlam_dnu: complex
    dlam_dalpha: complex
    pair: EigenPair
    branch: str = "upper"

    def as_dict(self):
        return {"nu": self.nu, "alpha_plus": self.alpha_plus, "omega_plus": self.omega_plus,
                "d_re_lambda_d_nu": self.d_re_lambda_d_nu,
                "d_re_lambda_d_alpha": self.d_re_lambda_d_alpha,
                "dlam_dnu": [self.dlam_dnu.real, self.dlam_dnu.imag],
                "dlam_dalpha": [self.dlam_dalpha.real, self.dlam_dalpha.imag],
                "branch": self.branch}


def _neutral_from_pair(fol: _Follower, pair: EigenPair, branch: str) -> NeutralPoint:
    a, n = pair.alpha, pair.nu
    da = D_ALPHA * (1.0 if a > 0 else -1.0)
    dn = D_NU_REL * n
    dl_da = (fol.at(a + da, n).lam - fol.at(a - da, n).lam) / (2.0 * da)
    dl_dn = (fol.at(a, n + dn).lam - fol.at(a, n - dn).lam) / (2.0 * dn)
    return NeutralPoint(n, a, pair.lam.imag, dl_dn.real, dl_da.real, complex(dl_dn),
                        complex(dl_da), pair, branch)


def _crossing(fol: _Follower, nu, a_unstable, a_stable, branch):
    g_u = fol.growth(a_unstable, nu)
    g_s = fol.growth(a_stable, nu)
    if not (g_u > 0 > g_s):
        raise BracketError(
            f"invalid bracket at nu={nu:.6g}: Re(lambda)={g_u:.3e} at alpha={a_unstable:.6g}, "
            f"{g_s:.3e} at alpha={a_stable:.6g} (need > 0 then < 0)")
    grid = np.linspace(a_unstable, a_stable, SCAN_POINTS)
    vals = [fol.growth(a, nu) for a in grid]
    signs = np.sign(vals)
    flips = np.flatnonzero(signs[:-1] != signs[1:])
    if len(flips) != 1:
        crossings = [0.5 * (grid[i] + grid[i + 1]) for i in flips]
        raise AmbiguityError(f"{len(flips)} sign changes of Re(lambda) in bracket at nu={nu:.6g}",
                             crossings)
    i = flips[0]
    lo, hi = sorted((grid[i], grid[i + 1]))
    root = brentq(lambda a: fol.growth(a, nu), lo, hi, xtol=1e-13, rtol=4 * np.finfo(float).eps,
                  maxiter=200)
    pair = fol.at(root, nu)
    if abs(pair.lam.real) >= ROOT_TOL:
        # one secant polish from the two nearest cached points
        pts = sorted(((abs(k[0] - root), p) for k, p in fol.pairs.items() if k[1] == nu),
                     key=lambda t: t[0])[:2]
        (_, p1), (_, p2) = pts
        if p1.lam.real != p2.lam.real:
            root = p1.alpha - p1.lam.real * (p1.alpha - p2.alpha) / (p1.lam.real - p2.lam.real)
            pair = fol.at(root, nu)
    if abs(pair.lam.real) >= ROOT_TOL:
        raise NumericalError(f"neutral root not polished: |Re(lambda)| = {abs(pair.lam.real):.2e}")
    return _neutral_from_pair(fol, pair, branch)


def find_alpha_plus(profile: ShearProfile, nu: float, bracket, disc: SpectralDiscretization,
                    guess: EigenPair | NeutralPoint | None = None, branch: str = "upper") -> NeutralPoint:
    """Root of alpha -> Re(lambda) in ``bracket = (alpha_unstable, alpha_stable)``.

    The bracket need not be ordered; its first entry must be unstable and its
    second stable.  Derivatives are centred differences with steps 1e-4 in
    alpha and 1e-3 nu in nu.
    """
    a_u, a_s = (float(bracket[0]), float(bracket[1]))
    _check_alpha_path([a_u, a_s])
    if isinstance(guess, NeutralPoint):
        guess = guess.pair
    if guess is None:
        start = leading_eigen(profile, a_u, nu, disc)
    else:
        start, _ = _step(profile, disc, guess, a_u, nu)
    fol = _Follower(profile, disc, start)
    return _crossing(fol, nu, a_u, a_s, branch)


def seeded_alpha_plus(profile, point: NeutralPoint, disc, width: float = 0.02) -> NeutralPoint:
    """Re-locate a neutral point from itself (bracket of +-width around it)."""
    s = 1.0 if point.alpha_plus > 0 else -1.0
    d = s * width if point.branch == "upper" else -s * width
    return find_alpha_plus(profile, point.nu, (point.alpha_plus - d, point.alpha_plus + d), disc,
                           guess=point, branch=point.branch)


def _max_growth(fol: _Follower, nu, lo, hi):
    res = minimize_scalar(lambda a: -fol.growth(a, nu), bounds=(lo, hi), method="bounded",
                          options={"xatol": 1e-7})
    return float(res.x), -float(res.fun)


def _coarse_peak(profile, nu, disc, alpha_range, points):
    """Dense leading eigenvalue on a coarse alpha grid; returns (pair at best alpha, grid, growths)."""
    grid = np.linspace(alpha_range[0], alpha_range[1], points)
    pairs = [leading_eigen(profile, a, nu, disc) for a in grid]
    g = np.array([p.lam.real for p in pairs])
    return pairs[int(np.argmax(g))], grid, g


@dataclass(frozen=True, eq=False)
class CriticalPoint:
    nu: float
    alpha: float
    omega: float
    pair: EigenPair

    @property
    def reynolds_channel(self):
        return 1.0 / (2.0 * self.nu)

    @property
    def alpha_channel(self):
        return 0.5 * self.alpha


def find_critical_point(profile: ShearProfile, disc: SpectralDiscretization,
                        nu_bracket=(5e-5, 1.2e-4), alpha_range=(1.5, 2.6),
                        start_alpha: float | None = None) -> CriticalPoint:
    """Largest nu with an unstable mode: max_alpha Re(lambda)(alpha, nu) = 0."""
    lo, hi = map(float, nu_bracket)
    a0 = 0.5 * sum(alpha_range) if start_alpha is None else float(start_alpha)
    fol = _Follower(profile, disc, leading_eigen(profile, a0, lo, disc))
    best = {}

    def g(nu):
        a, val = _max_growth(fol, nu, *alpha_range)
        best[nu] = a
        return val

    if not g(lo) > 0:
        raise BracketError(f"no instability at nu={lo:.3e}")
    if not g(hi) < 0:
        raise BracketError(f"still unstable at nu={hi:.3e}")
    nu_c = brentq(g, lo, hi, xtol=1e-14, rtol=1e-12)
    g(nu_c)
    pair = fol.at(best[nu_c], nu_c)
    return CriticalPoint(nu_c, best[nu_c], pair.lam.imag, pair)


class NeutralCurve(list):
    def __init__(self, points=(), failures=(), branch="upper"):
        super().__init__(points)
        self.failures = list(failures)
        self.branch = branch


def _expand(fol, nu, a_start, direction, step=0.05, limit=6.0):
    """Walk from an unstable alpha until Re(lambda) < 0; returns (last unstable, first stable)."""
    a_prev = a_start
    a = a_start
    while abs(a - a_start) < limit:
        a = a + direction * step
        if a <= 0:
            raise BracketError("no stable alpha found before alpha = 0")
        if fol.growth(a, nu) < 0:
            return a_prev, a
        a_prev = a
    raise BracketError(f"no stable alpha within {limit} of {a_start:.4g}")


def trace_neutral_curve(profile: ShearProfile, nu_range, points: int, branch: str,
                        disc: SpectralDiscretization, alpha_range=(0.5, 4.0)) -> NeutralCurve:
    """Neutral points on log-spaced nu, each bracketed from the most unstable alpha."""
    if branch not in ("upper", "lower"):
        raise ValueError("branch must be 'upper' or 'lower'")
    nu_min, nu_max = map(float, nu_range)
    if nu_min <= 0 or nu_max < nu_min:
        raise PreconditionError("need 0 < nu_min <= nu_max")
    nus = np.geomspace(nu_min, nu_max, points)
    curve = NeutralCurve(branch=branch)
    fol = None
    peak = None
    for nu in nus:
        try:
            if fol is None:
                pair, _, g = _coarse_peak(profile, nu, disc, alpha_range, 15)
                fol = _Follower(profile, disc, pair)
                peak = pair.alpha
            width = 0.3
            a_m, g_m = _max_growth(fol, nu, max(alpha_range[0], peak - width),
                                   min(alpha_range[1], peak + width))
            if g_m <= 0:
                continue
            peak = a_m
            direction = 1.0 if branch == "upper" else -1.0
            a_u, a_s = _expand(fol, nu, a_m, direction)
            curve.append(_crossing(fol, nu, a_u, a_s, branch))
        except (BracketError, ContinuationError, NumericalError) as exc:
            curve.failures.append((float(nu), str(exc)))
    return curve


@dataclass(frozen=True)
class ScalingFit:
    exponent: float
    constant: float
    r_squared: float
    points: int


def fit_scaling(curve, branch: str | None = None) -> ScalingFit:
    """Least-squares fit log(alpha) = log(C) + p log(nu)."""
    nu = np.array([p.nu for p in curve], dtype=float)
    al = np.abs(np.array([p.alpha_plus for p in curve], dtype=float))
    if branch is not None and any(getattr(p, "branch", branch) != branch for p in curve):
        raise FitDomainError("curve mixes branches")
    if len(nu) < 6:
        raise FitDomainError(f"need at least 6 points, got {len(nu)}")
    if np.log10(nu.max() / nu.min()) < 1.0 - 1e-9:
        raise FitDomainError("nu samples must span at least one decade")
    x, y = np.log(nu), np.log(al)
    p, c = np.polyfit(x, y, 1)
    resid = y - (p * x + c)
    ss = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 - float(np.sum(resid**2)) / ss if ss > 0 else 1.0
    return ScalingFit(float(p), float(math.exp(c)), r2, len(nu))


def simplicity_test(A, M, lam, residual, rng=None, gap=None):
    """(simple, gap, angle) for eigenvalue lam of the pencil (A, M).

    Simple means the gap to the nearest other eigenvalue exceeds 1e3 times the
    residual and inverse iteration from two random starts lands on the same
    direction (sine of the angle below 1e-6).
    """
    rng = np.random.default_rng(0) if rng is None else rng
    r = 1.0 / np.abs(A).max(axis=1)
    As, Ms = A * r[:, None], M * r[:, None]
    if gap is None:
        a, b = sla.eig(As, Ms, right=False, homogeneous_eigvals=True)
        with np.errstate(divide="ignore", invalid="ignore"):
            ev = a / b
        ev = ev[np.isfinite(ev)]
        d = np.sort(np.abs(ev - lam))
        gap = float(d[1]) if len(d) > 1 else math.inf
    n = As.shape[0]
    lu = sla.lu_factor(As - lam * Ms, check_finite=False)
    vecs = []
    for _ in range(2):
        x = rng.standard_normal(n) + 1j * rng.standard_normal(n)
        for _ in range(4):
            x = sla.lu_solve(lu, Ms @ x, check_finite=False)
            x /= np.linalg.norm(x)
        vecs.append(x)
    u, v = vecs
    sine = float(np.linalg.norm(u - np.vdot(v, u) * v))
    simple = bool(gap > GAP_FACTOR * residual and sine < ANGLE_TOL)
    return simple, gap, sine


@dataclass
class HAuditReport:
    nu: float
    neutral_found: bool
    unstable_count_below: int
    simple: bool
    stable_above: bool
    transversality: int
    spectral_gap_sigma: float
    critical_count: int = 0
    alpha_plus: float | None = None
    omega_plus: float | None = None
    d_re_lambda_d_nu: float | None = None
    alphas_below: list = field(default_factory=list)
    counts_below: list = field(default_factory=list)
    simple_below: list = field(default_factory=list)
    alphas_above: list = field(default_factory=list)
    max_growth_above: list = field(default_factory=list)
    max_growth_scanned: float | None = None
    notes: list = field(default_factory=list)
    point: NeutralPoint | None = field(default=None, repr=False, compare=False)

    @property
    def passed(self):
        return (self.neutral_found and self.unstable_count_below == 1
                and all(c == 1 for c in self.counts_below) and self.simple
                and self.stable_above and self.critical_count == 1
                and self.transversality < 0 and self.spectral_gap_sigma > 0)

    def as_dict(self):
        d = {f.name: getattr(self, f.name) for f in fields(self) if f.name != "point"}
        d["passed"] = self.passed
        return d


@dataclass(frozen=True, eq=False)
class NeutralSearch:
    point: NeutralPoint | None
    alpha_lower: float | None
    alpha_peak: float
    max_growth: float


def locate_neutral(profile: ShearProfile, nu: float, disc: SpectralDiscretization,
                   alpha_range=(0.25, 4.0), scan_points: int = 16) -> NeutralSearch:
    """Upper (and, when reachable, lower) neutral wavenumber at nu without a bracket.

    A coarse dense scan picks the most unstable alpha, which is refined by
    continuation; brackets are then grown outward from the peak.
    """
    pair, grid, g = _coarse_peak(profile, nu, disc, alpha_range, scan_points)
    fol = _Follower(profile, disc, pair)
    step = grid[1] - grid[0]
    a_m, g_m = _max_growth(fol, nu, max(alpha_range[0], pair.alpha - step),
                           min(alpha_range[1], pair.alpha + step))
    g_max = max(float(g.max()), g_m)
    if g_max <= 0:
        return NeutralSearch(None, None, a_m, g_max)
    a_u, a_s = _expand(fol, nu, a_m, 1.0)
    point = _crossing(fol, nu, a_u, a_s, "upper")
    lower = None
    try:
        lu, ls = _expand(fol, nu, a_m, -1.0)
        lower = _crossing(fol, nu, lu, ls, "lower").alpha_plus
    except (BracketError, NumericalError, ContinuationError):
        pass
    return NeutralSearch(point, lower, a_m, g_max)


CONVENTION_NOTE = ("instability convention Re(lambda) > 0; the hypothesis' statements about "
                   "imaginary parts are audited as Re(lambda) < 0 above alpha_plus and "
                   "d Re(lambda)/d nu < 0 at the neutral point")
EVIDENCE_NOTE = "finite alpha sampling: the audit is numerical evidence, not a proof"


def _spectrum(profile, alpha, nu, disc):
    pencil = assemble(profile, alpha, nu, disc)
    return pencil, eigen_spectrum(pencil)


def audit_H(profile: ShearProfile, nu: float, disc: SpectralDiscretization,
            alpha_range=(0.25, 4.0), scan_points: int = 16, n_below: int = 5,
            n_above: int = 5, window_below: float = 0.1, window_above: float = 0.5,
            seed: int = 0) -> HAuditReport:
    """Check the spectral hypothesis at one viscosity by dense solves."""
    rng = np.random.default_rng(seed)
    notes = [CONVENTION_NOTE, EVIDENCE_NOTE]
    loc = locate_neutral(profile, nu, disc, alpha_range, scan_points)
    if loc.point is None:
        notes.append(f"no unstable eigenvalue at any sampled alpha in {tuple(alpha_range)}")
        return HAuditReport(nu, False, 0, False, True, 0, float("nan"),
                            max_growth_scanned=loc.max_growth, notes=notes)
    point = loc.point
    ap = point.alpha_plus
    lo_edge = ap - window_below
    if loc.alpha_lower is not None and loc.alpha_lower > lo_edge:
        notes.append(f"unstable band starts at alpha={loc.alpha_lower:.6g}; sampling window below "
                     f"alpha_plus narrowed from {window_below} to {ap - loc.alpha_lower:.4g}")
        lo_edge = loc.alpha_lower
    g_max = loc.max_growth

    fr = (np.arange(1, n_below + 1) - 0.5) / n_below
    below = [float(ap - (ap - lo_edge) * f) for f in fr]
    counts, simples = [], []
    for a in below:
        pencil, pairs = _spectrum(profile, a, nu, disc)
        unstable = [p for p in pairs if p.lam.real > 0]
        counts.append(len(unstable))
        if len(unstable) == 1:
            p = unstable[0]
            simples.append(simplicity_test(pencil.A, pencil.M, p.lam, p.residual, rng)[0])
        else:
            simples.append(False)

    above = [float(ap + window_above * k / n_above) for k in range(1, n_above + 1)] + [2 * ap, 4 * ap]
    growth_above = []
    for a in above:
        _, pairs = _spectrum(profile, a, nu, disc)
        growth_above.append(max(p.lam.real for p in pairs))

    pencil, pairs = _spectrum(profile, ap, nu, disc)
    critical = [p for p in pairs if abs(p.lam.real) < CRITICAL_TOL]
    others = [p.lam.real for p in pairs if abs(p.lam.real) >= CRITICAL_TOL]
    simple_c = False
    if len(critical) == 1:
        simple_c = simplicity_test(pencil.A, pencil.M, critical[0].lam, critical[0].residual, rng)[0]
    sigma = -max(others) if others else math.inf

    return HAuditReport(
        nu=float(nu), neutral_found=True, unstable_count_below=max(counts),
        simple=bool(simple_c and all(simples)), stable_above=bool(max(growth_above) < 0),
        transversality=int(np.sign(point.d_re_lambda_d_nu)), spectral_gap_sigma=float(sigma),
        critical_count=len(critical), alpha_plus=ap, omega_plus=point.omega_plus,
        d_re_lambda_d_nu=point.d_re_lambda_d_nu, alphas_below=below, counts_below=counts,
        simple_below=simples, alphas_above=above, max_growth_above=growth_above,
        max_growth_scanned=g_max, notes=notes, point=point)


def duplicated_pencil(A, M):
    """Block-diagonal pencil diag(A, A), diag(M, M); every eigenvalue is double."""
    Z = np.zeros_like(A)
    return np.block([[A, Z], [Z, A]]), np.block([[M, Z], [Z, M]])
