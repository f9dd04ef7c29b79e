"""Shear profiles U(y) = (U_s(y), 0) on the strip 0 < y < 1."""
from __future__ import annotations

import csv
import enum
import math
import warnings
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import ConfigurationError, DomainError, ProfileError

WALL_TOL = 1e-12
SLOPE_TOL = 1e-8
SYMMETRY_TOL = 1e-10
CONCAVITY_TOL = 1e-10
CHECK_POINTS = 256


class ProfileKind(str, enum.Enum):
    POISEUILLE = "builtin-poiseuille"
    TANH_SYMMETRIC = "builtin-tanh-symmetric"
    COUETTE = "builtin-couette"
    TABULATED = "tabulated"


class Concavity(str, enum.Enum):
    CONCAVE = "concave"
    CONVEX = "convex"
    NEITHER = "neither"


class AdmissibilityWarning(UserWarning):
    """Profile lies outside the symmetric wall-bounded class the theory assumes."""


@dataclass(frozen=True)
class ShearProfile:
    name: str
    evaluator: Callable[[np.ndarray], tuple[np.ndarray, np.ndarray, np.ndarray]]
    kind: ProfileKind
    params: tuple = ()

    def __call__(self, y):
        return eval_profile(self, y)

    def on_grid(self, y):
        """Vectorized (U, U', U'') on an array of points in [0, 1]."""
        y = np.asarray(y, dtype=float)
        _check_domain(y)
        u, du, d2u = self.evaluator(y)
        return (np.broadcast_to(u, y.shape).astype(float),
                np.broadcast_to(du, y.shape).astype(float),
                np.broadcast_to(d2u, y.shape).astype(float))

    def describe(self):
        return {"name": self.name, "kind": self.kind.value, "params": list(self.params)}


@dataclass(frozen=True)
class AdmissibilityReport:
    symmetric: bool
    wall_conditions: bool
    concavity: Concavity
    messages: tuple[str, ...] = ()

    @property
    def admissible(self):
        return self.symmetric and self.wall_conditions


def _check_domain(y):
    if np.any(~np.isfinite(y)) or np.any(y < 0.0) or np.any(y > 1.0):
        raise DomainError("profile evaluated outside [0, 1]")


def eval_profile(profile: ShearProfile, y: float) -> tuple[float, float, float]:
    """Return (U_s, U_s', U_s'') at a single point y in [0, 1]."""
    u, du, d2u = profile.on_grid(np.array([y], dtype=float))
    return float(u[0]), float(du[0]), float(d2u[0])


def poiseuille() -> ShearProfile:
    def ev(y):
        return 4.0 * y * (1.0 - y), 4.0 - 8.0 * y, np.full_like(y, -8.0)

    return ShearProfile("poiseuille", ev, ProfileKind.POISEUILLE)


def couette() -> ShearProfile:
    def ev(y):
        return y.copy(), np.ones_like(y), np.zeros_like(y)

    return ShearProfile("couette", ev, ProfileKind.COUETTE)


def tanh_symmetric(beta: float = 10.0) -> ShearProfile:
    """U_s = tanh(beta y) tanh(beta (1 - y)) / tanh(beta/2)^2, unit centreline speed."""
    scale = math.tanh(beta / 2.0) ** 2

    def ev(y):
        p = np.tanh(beta * y)
        q = np.tanh(beta * (1.0 - y))
        dp = beta * (1.0 - p**2)
        dq = -beta * (1.0 - q**2)
        d2p = -2.0 * beta * p * dp
        d2q = 2.0 * beta * q * dq
        return (p * q / scale, (dp * q + p * dq) / scale,
                (d2p * q + 2.0 * dp * dq + p * d2q) / scale)

    return ShearProfile(f"tanh-symmetric(beta={beta:g})", ev, ProfileKind.TANH_SYMMETRIC, (beta,))


def tabulated(y, u, name="tabulated") -> ShearProfile:
    """Not-a-knot cubic spline through samples (y, U); C2 on [0, 1]."""
    y = np.asarray(y, dtype=float)
    u = np.asarray(u, dtype=float)
    if y.ndim != 1 or y.shape != u.shape or y.size < 4:
        raise ProfileError("tabulated profile needs matching 1-D arrays with at least 4 samples")
    order = np.argsort(y)
    y, u = y[order], u[order]
    if np.any(np.diff(y) <= 0):
        raise ProfileError("tabulated y values must be distinct")
    if abs(y[0]) > 1e-12 or abs(y[-1] - 1.0) > 1e-12:
        raise ProfileError("tabulated profile must cover [0, 1] including both walls")
    spline = CubicSpline(y, u, bc_type="not-a-knot")
    d1 = spline.derivative(1)
    d2 = spline.derivative(2)

    def ev(yy):
        return spline(yy), d1(yy), d2(yy)

    return ShearProfile(name, ev, ProfileKind.TABULATED, (len(y),))


def load_tabulated(path) -> ShearProfile:
    """Read a CSV with columns y, U (header required)."""
    path = Path(path)
    if not path.is_file():
        raise ConfigurationError(f"profile file not found: {path}")
    ys, us = [], []
    with path.open(newline="") as fh:
        reader = csv.DictReader(row for row in fh if not row.startswith("#"))
        if reader.fieldnames is None or not {"y", "U"} <= set(reader.fieldnames):
            raise ConfigurationError(f"{path}: expected CSV columns 'y' and 'U'")
        for row in reader:
            ys.append(float(row["y"]))
            us.append(float(row["U"]))
    return tabulated(ys, us, name=path.stem)


def make_profile(kind: str, **options) -> ShearProfile:
    kind = kind.lower()
    if kind in ("poiseuille", ProfileKind.POISEUILLE.value):
        return poiseuille()
    if kind in ("couette", ProfileKind.COUETTE.value):
        return couette()
    if kind in ("tanh", "tanh-symmetric", ProfileKind.TANH_SYMMETRIC.value):
        return tanh_symmetric(float(options.get("beta", 10.0)))
    if kind == ProfileKind.TABULATED.value:
        if "path" not in options:
            raise ConfigurationError("tabulated profile requires 'path'")
        return load_tabulated(options["path"])
    raise ConfigurationError(f"unknown profile kind {kind!r}")


def check_admissibility(profile: ShearProfile, warn: bool = True) -> AdmissibilityReport:
    """Symmetry, wall conditions and concavity class of a profile.

    Only U_s(0) = 0 is a hard requirement; everything else is reported and,
    when ``warn`` is set, surfaced as an :class:`AdmissibilityWarning`.
    """
    y = np.linspace(0.0, 1.0, CHECK_POINTS)
    try:
        u, du, d2u = profile.on_grid(y)
        ur, _, _ = profile.on_grid(1.0 - y)
    except Exception as exc:  # noqa: BLE001 - any evaluator failure is a profile failure
        raise ProfileError(f"profile {profile.name!r} could not be evaluated: {exc}") from exc
    if not (np.all(np.isfinite(u)) and np.all(np.isfinite(du)) and np.all(np.isfinite(d2u))):
        raise ProfileError(f"profile {profile.name!r} produced non-finite values")
    if abs(u[0]) > WALL_TOL:
        raise ProfileError(f"profile {profile.name!r} violates U_s(0) = 0 (U_s(0) = {u[0]:.3e})")

    messages = []
    wall = abs(u[-1]) <= WALL_TOL and abs(du[0]) > SLOPE_TOL
    if abs(u[-1]) > WALL_TOL:
        messages.append(f"U_s(1) = {u[-1]:.3e} is not zero")
    if abs(du[0]) <= SLOPE_TOL:
        messages.append("U_s'(0) vanishes")
    symmetric = bool(np.max(np.abs(u - ur)) < SYMMETRY_TOL)
    if not symmetric:
        messages.append("profile is not symmetric about y = 1/2")

    if np.all(d2u <= -CONCAVITY_TOL):
        concavity = Concavity.CONCAVE
    elif np.all(d2u >= CONCAVITY_TOL):
        concavity = Concavity.CONVEX
    else:
        concavity = Concavity.NEITHER

    if warn and messages:
        warnings.warn(
            f"profile {profile.name!r} is outside the assumed class: " + "; ".join(messages),
            AdmissibilityWarning,
            stacklevel=2,
        )
    return AdmissibilityReport(symmetric, bool(wall), concavity, tuple(messages))
