"""Stuart-Landau amplitude equation and the bifurcated roll.

dA/dt = i omega A + c1 mu A + c3 A |A|^2, with mu = nu - nu_0 the offset from
the neutral viscosity.  Terms of order |A|(mu^2 + |A|^4) are dropped.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateError, PreconditionError, ReconstructionError, StabilityError

DT_SAFETY = 0.01


@dataclass(frozen=True)
class NormalForm:
    """Bare normal-form coefficients (for use without a full HopfCoefficients)."""
    omega_plus: float
    c1: complex
    c3: complex


@dataclass(frozen=True)
class AmplitudeState:
    t: float
    A: complex


def _rhs(omega, c1, c3, mu):
    lin = 1j * omega + c1 * mu

    def f(a):
        return a * (lin + c3 * (a.real * a.real + a.imag * a.imag))

    return f


def max_stable_dt(coeffs, mu, A0) -> float:
    scale = max(abs(coeffs.omega_plus), abs(coeffs.c1 * mu), abs(coeffs.c3) * abs(A0) ** 2)
    return math.inf if scale == 0 else DT_SAFETY / scale


def integrate(coeffs, mu: float, A0: complex, T: float, dt: float,
              stride: int = 1) -> list[AmplitudeState]:
    """Classical RK4 trajectory of the amplitude equation, every ``stride`` steps."""
    if not dt > 0 or not T >= 0:
        raise PreconditionError("need dt > 0 and T >= 0")
    limit = max_stable_dt(coeffs, mu, A0)
    if not dt < limit:
        raise StabilityError(f"dt = {dt:g} violates dt < {limit:.3g}")
    f = _rhs(coeffs.omega_plus, complex(coeffs.c1), complex(coeffs.c3), mu)
    steps = int(round(T / dt))
    a = complex(A0)
    out = [AmplitudeState(0.0, a)]
    h = dt
    for k in range(1, steps + 1):
        k1 = f(a)
        k2 = f(a + 0.5 * h * k1)
        k3 = f(a + 0.5 * h * k2)
        k4 = f(a + h * k3)
        a = a + h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if not math.isfinite(abs(a)):
            raise StabilityError(f"amplitude blew up at t = {k * h:g}")
        if k % stride == 0 or k == steps:
            out.append(AmplitudeState(k * h, a))
    return out


def radial_solution(coeffs, mu, r0, t):
    """Exact |A(t)| from dr/dt = Re(c1) mu r + Re(c3) r^3."""
    a, b = coeffs.c1.real * mu, coeffs.c3.real
    t = np.asarray(t, dtype=float)
    if r0 == 0:
        return np.zeros_like(t)
    z0 = 1.0 / r0**2
    if a == 0:
        z = z0 - 2.0 * b * t
    else:
        z = (z0 + b / a) * np.exp(-2.0 * a * t) - b / a
    with np.errstate(invalid="ignore", divide="ignore"):
        return 1.0 / np.sqrt(z)


@dataclass(frozen=True)
class LimitCycle:
    radius: float
    frequency: float
    stable: bool


def limit_cycle(coeffs, mu: float) -> LimitCycle | None:
    """Periodic orbit |A| = radius, or None when the radicand is not positive."""
    c1, c3 = complex(coeffs.c1), complex(coeffs.c3)
    if not c1.real < 0:
        raise PreconditionError(f"Re(c1) = {c1.real:.3e} is not negative")
    if c3.real == 0:
        raise DegenerateError("Re(c3) = 0: cubic truncation cannot fix the amplitude")
    rad = -c1.real * mu / c3.real
    if not rad > 0:
        return None
    r = math.sqrt(rad)
    return LimitCycle(r, coeffs.omega_plus + c1.imag * mu + c3.imag * rad, bool(c3.real < 0))


@dataclass(frozen=True, eq=False)
class RollField:
    x: np.ndarray
    y: np.ndarray
    t: np.ndarray
    u: np.ndarray
    v: np.ndarray
    base: np.ndarray
    mu: float
    radius: float
    alpha: float
    omega: float
    metadata: dict = field(default_factory=dict)

    def divergence(self, dpsi_dy_matrix):
        """max |u_x + v_y|: FFT in x over one period, collocation in y."""
        nx = len(self.x) - 1
        k = np.fft.fftfreq(nx, d=(self.x[1] - self.x[0])) * 2.0 * np.pi
        ux = np.fft.ifft(1j * k * np.fft.fft(self.u[..., :nx], axis=-1), axis=-1).real
        vy = np.einsum("ij,tjx->tix", dpsi_dy_matrix, self.v[..., :nx])
        return float(np.abs(ux + vy).max())


def roll_velocity(hopf, mu, t, x, y=None, radius=None):
    """(u, v) of the leading roll at times t, points x and collocation nodes y.

    u = U(y) + 2 r Re[e^{i(omega t + alpha x)} psi'(y)],
    v = 2 r Re[-i alpha e^{i(omega t + alpha x)} psi(y)].
    Returns arrays of shape (len(t), len(y), len(x)).
    """
    disc = hopf.disc
    if radius is None:
        lc = limit_cycle(hopf, mu)
        if lc is None:
            raise ReconstructionError(f"no limit cycle at mu = {mu:g}")
        radius = lc.radius
    psi = hopf.psi1
    dpsi = disc.D1 @ psi
    if y is not None:
        P = disc.interpolation_matrix(y)
        psi, dpsi = P @ psi, P @ dpsi
        nodes = np.asarray(y, dtype=float)
    else:
        nodes = disc.nodes
    a, w = hopf.alpha_plus, hopf.omega_plus
    t = np.atleast_1d(np.asarray(t, dtype=float))
    x = np.atleast_1d(np.asarray(x, dtype=float))
    ph = np.exp(1j * (w * t[:, None] + a * x[None, :]))
    base = hopf.profile.on_grid(nodes)[0]
    u = base[None, :, None] + 2.0 * radius * np.real(ph[:, None, :] * dpsi[None, :, None])
    v = 2.0 * radius * np.real(-1j * a * ph[:, None, :] * psi[None, :, None])
    return u, v, base


OMITTED = ("O(|mu|) correction to the roll and O(|A|(|mu| + |A|)) centre-manifold terms "
           "are not reconstructed; only the leading roll is exported")


def reconstruct_roll(hopf, mu: float, nx: int, nt: int) -> RollField:
    """Leading-order roll on one spatial period (endpoint included) and nt times
    over one temporal period."""
    lc = limit_cycle(hopf, mu)
    if lc is None:
        raise ReconstructionError(f"no limit cycle at mu = {mu:g} (radicand not positive)")
    if nx < 4 or nt < 1:
        raise PreconditionError("need nx >= 4 and nt >= 1")
    a, w = hopf.alpha_plus, hopf.omega_plus
    x = np.linspace(0.0, 2.0 * np.pi / abs(a), nx)
    period = 2.0 * np.pi / abs(w) if w != 0 else 1.0
    t = np.arange(nt) * period / nt
    u, v, base = roll_velocity(hopf, mu, t, x, radius=lc.radius)
    meta = {
        "mu": mu, "radius": lc.radius, "cycle_frequency": lc.frequency,
        "cycle_stable": lc.stable, "alpha_plus": a, "omega_plus": w,
        "phase_speed": -w / a, "c1": [hopf.c1.real, hopf.c1.imag],
        "c3": [hopf.c3.real, hopf.c3.imag], "omitted": OMITTED,
    }
    return RollField(x, hopf.disc.nodes.copy(), t, u, v, base, mu, lc.radius, a, w, meta)
