"""Chebyshev collocation on [0, 1].

Nodes are Chebyshev-Gauss-Lobatto points mapped affinely from [-1, 1] and
sorted ascending, so ``nodes[0] == 0`` and ``nodes[-1] == 1``.  The
differentiation matrices follow Weideman & Reddy (trigonometric identities
for the node differences plus the flipping trick), built directly for each
order rather than as matrix powers.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.fft import dct
from scipy.linalg import toeplitz

from .errors import ConfigurationError, ShapeError

MIN_N = 16


def _cheb_diff_matrices(N, M):
    """Differentiation matrices of orders 1..M on x_k = cos(k pi / N), k = 0..N."""
    n = N + 1
    n1 = n // 2
    n2 = (n + 1) // 2
    k = np.arange(n)[:, None]
    th = k * np.pi / N
    x = np.sin(np.pi * np.arange(N, -N - 1, -2) / (2.0 * N))

    T = np.tile(th / 2.0, (1, n))
    DX = 2.0 * np.sin(T.T + T) * np.sin(T.T - T)
    DX[n1:, :] = -np.flipud(np.fliplr(DX[:n2, :]))
    np.fill_diagonal(DX, 1.0)

    C = toeplitz((-1.0) ** np.arange(n))
    C[0, :] *= 2.0
    C[-1, :] *= 2.0
    C[:, 0] /= 2.0
    C[:, -1] /= 2.0

    Z = 1.0 / DX
    np.fill_diagonal(Z, 0.0)

    D = np.eye(n)
    out = []
    for ell in range(1, M + 1):
        D = ell * Z * (C * np.diag(D)[:, None] - D)
        np.fill_diagonal(D, -D.sum(axis=1))
        out.append(D.copy())
    return x, out


def _clenshaw_curtis(N):
    """Clenshaw-Curtis weights on [-1, 1] at x_k = cos(k pi / N)."""
    theta = np.pi * np.arange(N + 1) / N
    w = np.zeros(N + 1)
    v = np.ones(N - 1)
    interior = slice(1, N)
    if N % 2 == 0:
        w[0] = w[N] = 1.0 / (N**2 - 1)
        for k in range(1, N // 2):
            v -= 2.0 * np.cos(2 * k * theta[interior]) / (4 * k**2 - 1)
        v -= np.cos(N * theta[interior]) / (N**2 - 1)
    else:
        w[0] = w[N] = 1.0 / N**2
        for k in range(1, (N - 1) // 2 + 1):
            v -= 2.0 * np.cos(2 * k * theta[interior]) / (4 * k**2 - 1)
    w[interior] = 2.0 * v / N
    return w


@dataclass(frozen=True, eq=False)
class SpectralDiscretization:
    N: int
    nodes: np.ndarray
    D1: np.ndarray
    D2: np.ndarray
    D3: np.ndarray
    D4: np.ndarray
    weights: np.ndarray
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def size(self):
        return self.N + 1

    def derivative(self, order):
        if order == 0:
            return np.eye(self.size)
        return (self.D1, self.D2, self.D3, self.D4)[order - 1]

    def cheb_coefficients(self, f):
        """Chebyshev coefficients a_k of the interpolant, f(y) = sum a_k T_k(1 - 2y)."""
        f = np.asarray(f)
        # nodes ascending in y are x_k = cos(k pi/N) in the reference variable
        a = dct(f, type=1, axis=0) / self.N
        a[0] /= 2.0
        a[-1] /= 2.0
        return a

    def interpolate(self, f, y):
        """Barycentric interpolation of grid values f to points y."""
        return self.interpolation_matrix(y) @ np.asarray(f)

    def interpolation_matrix(self, y):
        y = np.atleast_1d(np.asarray(y, dtype=float))
        w = self._cache.get("bary")
        if w is None:
            w = (-1.0) ** np.arange(self.size)
            w[0] *= 0.5
            w[-1] *= 0.5
            self._cache["bary"] = w
        diff = y[:, None] - self.nodes[None, :]
        exact = diff == 0.0
        with np.errstate(divide="ignore", invalid="ignore"):
            P = w / diff
            P /= P.sum(axis=1, keepdims=True)
        rows = exact.any(axis=1)
        P[rows] = exact[rows].astype(float)
        return P


def build_discretization(N: int) -> SpectralDiscretization:
    """Collocation grid with N + 1 nodes on [0, 1]."""
    if int(N) != N or N < MIN_N:
        raise ConfigurationError(f"N must be an integer >= {MIN_N}, got {N!r}")
    N = int(N)
    x, (d1, d2, d3, d4) = _cheb_diff_matrices(N, 4)
    # y = (1 - x)/2, so d/dy = -2 d/dx; ordering of nodes is kept (x descending -> y ascending)
    nodes = 0.5 * (1.0 - x)
    nodes[0], nodes[-1] = 0.0, 1.0
    w = 0.5 * _clenshaw_curtis(N)
    return SpectralDiscretization(
        N=N,
        nodes=nodes,
        D1=-2.0 * d1,
        D2=4.0 * d2,
        D3=-8.0 * d3,
        D4=16.0 * d4,
        weights=w,
    )


def inner_product(f, g, disc: SpectralDiscretization) -> complex:
    """Clenshaw-Curtis approximation of the L2(0,1) pairing, conjugate-linear in f."""
    f = np.asarray(f)
    g = np.asarray(g)
    if f.shape != (disc.size,) or g.shape != (disc.size,):
        raise ShapeError(
            f"grid functions must have shape ({disc.size},), got {f.shape} and {g.shape}"
        )
    return complex(np.sum(disc.weights * np.conj(f) * g))


def l2_norm(f, disc: SpectralDiscretization) -> float:
    return float(np.sqrt(max(inner_product(f, f, disc).real, 0.0)))
