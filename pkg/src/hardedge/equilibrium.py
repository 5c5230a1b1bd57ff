"""Equilibrium ensembles and hard-edge correlation kernels.

The N-particle dynamics equilibrate on the inverse points of a beta=2
Laguerre ensemble; at the hard edge (coordinates of size 1/N) the embedded
points form a determinantal process whose kernel is an inverse-coordinate
transform of the Bessel kernel.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import eigh_tridiagonal
from scipy.special import jv

from .core import OrderedConfig
from .errors import ConvergenceFailure, DomainError, ParameterError

__all__ = [
    "KernelGrid",
    "sample_laguerre",
    "sample_inverse_laguerre",
    "laguerre_samples",
    "inverse_laguerre_samples",
    "bessel_j",
    "bessel_kernel",
    "inverse_bessel_kernel",
]

# Below this relative separation the divided difference in the kernel
# cancels catastrophically; switch to the analytic diagonal form.
_DIAGONAL_SWITCH = 1e-6


@dataclass(frozen=True)
class KernelGrid:
    """Symmetric kernel evaluations K(x_i, x_j) on an increasing grid."""

    points: np.ndarray
    values: np.ndarray

    def __init__(self, points, values):
        pts = np.asarray(points, dtype=float)
        vals = np.asarray(values, dtype=float)
        if pts.ndim != 1 or np.any(np.diff(pts) <= 0) or np.any(pts <= 0):
            raise DomainError("grid points must be positive and increasing")
        if vals.shape != (pts.size, pts.size):
            raise DomainError("values must be a square matrix over the grid")
        if not np.allclose(vals, vals.T, atol=1e-10):
            raise DomainError("kernel matrix must be symmetric")
        if np.any(np.diag(vals) < 0):
            raise DomainError("kernel diagonal must be nonnegative")
        pts.setflags(write=False)
        vals.setflags(write=False)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "values", vals)

    @classmethod
    def evaluate(cls, kernel, points) -> "KernelGrid":
        pts = np.asarray(points, dtype=float)
        vals = np.array([[kernel(a, b) for b in pts] for a in pts])
        vals = (vals + vals.T) / 2.0
        return cls(pts, vals)


# ---------------------------------------------------------------------------
# Laguerre / inverse Laguerre sampling
# ---------------------------------------------------------------------------

def laguerre_samples(N: int, eta: float, n: int, rng) -> np.ndarray:
    """n draws of the beta=2 Laguerre ensemble with weight y^eta e^-y.

    Tridiagonal bidiagonal-square construction: valid for all real
    eta > -1, eigensolved per replica.  Rows are sorted decreasing.
    """
    if eta <= -1:
        raise ParameterError(f"need eta > -1, got {eta}")
    if N < 1:
        raise DomainError("need N >= 1")
    # chi_k draws enter through their squares: chi^2_k = Gamma(k/2, scale 2)
    diag_sq = rng.gamma(eta + N - np.arange(N), scale=2.0, size=(n, N))
    if N == 1:
        return diag_sq / 2.0
    sub_sq = rng.gamma(np.arange(N - 1, 0, -1, dtype=float), scale=2.0, size=(n, N - 1))
    main = diag_sq.copy()
    main[:, 1:] += sub_sq
    off = np.sqrt(diag_sq[:, :-1] * sub_sq)
    out = np.empty((n, N))
    for r in range(n):
        lam = eigh_tridiagonal(main[r], off[r], eigvals_only=True)
        out[r] = lam[::-1]
    return out / 2.0


def sample_laguerre(N: int, eta: float, rng) -> OrderedConfig:
    """One draw of the beta=2 Laguerre ensemble, sorted decreasing."""
    return OrderedConfig(laguerre_samples(N, eta, 1, rng)[0])


def inverse_laguerre_samples(N: int, eta: float, n: int, rng) -> np.ndarray:
    """n draws of the inverse Laguerre ensemble (coordinate-wise 1/y, resorted)."""
    y = laguerre_samples(N, eta, n, rng)
    return 1.0 / y[:, ::-1]


def sample_inverse_laguerre(N: int, eta: float, rng) -> OrderedConfig:
    """One draw of the equilibrium ensemble of the N-particle dynamics."""
    return OrderedConfig(inverse_laguerre_samples(N, eta, 1, rng)[0])


# ---------------------------------------------------------------------------
# Bessel and inverse Bessel kernels
# ---------------------------------------------------------------------------

def bessel_j(nu: float, x) -> float | np.ndarray:
    """Bessel function of the first kind J_nu(x) for x >= 0, nu > -1.

    Backed by the library implementation; raises if it fails to produce a
    finite value in the supported range.
    """
    xarr = np.asarray(x, dtype=float)
    if np.any(xarr < 0):
        raise DomainError("bessel_j needs x >= 0")
    val = jv(nu, xarr)
    if not np.all(np.isfinite(val)):
        raise ConvergenceFailure(f"J_{nu} evaluation failed for some x")
    return float(val) if np.isscalar(x) else val


def _bessel_kernel_diagonal(eta: float, x: float) -> float:
    z = np.sqrt(x)
    j0 = bessel_j(eta, z)
    j1 = bessel_j(eta + 1.0, z)
    if z == 0.0:
        # finite only for eta >= 0; the eta-in-(-1,0) kernel diverges at 0
        return 0.25 * (j0**2 + j1**2) if eta >= 0 else np.inf
    return 0.25 * (j0**2 + j1**2 - (2.0 * eta / z) * j0 * j1)


def bessel_kernel(eta: float, x: float, y: float) -> float:
    """Hard-edge Bessel kernel in squared variables.

    Off the diagonal this is the divided difference
    [sqrt(x) J_{eta+1}(sqrt(x)) J_eta(sqrt(y)) - (x <-> y)] / (2(x-y));
    within relative separation 1e-6 the analytic diagonal limit is used.
    """
    if x <= 0 or y <= 0:
        raise DomainError("bessel_kernel needs x, y > 0")
    if abs(x - y) < _DIAGONAL_SWITCH * max(x, y):
        return _bessel_kernel_diagonal(eta, 0.5 * (x + y))
    sx, sy = np.sqrt(x), np.sqrt(y)
    num = sx * bessel_j(eta + 1.0, sx) * bessel_j(eta, sy) - sy * bessel_j(
        eta + 1.0, sy
    ) * bessel_j(eta, sx)
    return float(num / (2.0 * (x - y)))


def inverse_bessel_kernel(eta: float, x: float, y: float) -> float:
    """Correlation kernel of the inverse points process: (8/xy) J(8/x, 8/y).

    The first correlation function (the density of points) is the diagonal
    value.
    """
    if x <= 0 or y <= 0:
        raise DomainError("inverse_bessel_kernel needs x, y > 0")
    return float(8.0 / (x * y) * bessel_kernel(eta, 8.0 / x, 8.0 / y))
