"""Interlacing corner kernels, the fundamental spline and boundary sampling.

The one-level corner kernel is sampled exactly by conjugating the spectrum
with a Haar unitary and taking the top-left principal submatrix; iterating
corners gives the multi-level kernel.  Its density is a determinant of
shifted fundamental splines with a binomial prefactor; the one-level,
one-point case collapses to the spline itself.  Boundary states are sampled
through the scalar-plus-rank-one Gaussian matrix construction.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from math import comb

import numpy as np

from .core import OmegaPlusPoint, OrderedConfig
from .errors import DegenerateKnots, DomainError, EigensolveFailure, NumericalInstability, OrderTooHigh

__all__ = [
    "KnotVector",
    "spline_m",
    "spline_m_tableau",
    "spline_m_derivative",
    "spline_m_tail_mass",
    "sample_corner",
    "sample_chain",
    "corner_samples",
    "chain_samples",
    "lambda_kn_density",
    "sample_boundary_corner",
    "boundary_corner_samples",
    "haar_unitary",
    "interlaces",
]

# Determinant entries beyond this condition estimate are meaningless in
# double precision.
DENSITY_COND_LIMIT = 1e12
# Stability envelope of the determinant density formula.
DENSITY_MAX_N = 30
DENSITY_MAX_K = 6
# LAPACK batched kernels fall off a performance cliff beyond ~10k stacked
# matrices on some builds; chunking keeps throughput flat.
_LA_CHUNK = 8192


@dataclass(frozen=True)
class KnotVector:
    """Decreasing knot list of length >= 2; ties up to multiplicity N-2."""

    knots: np.ndarray

    def __init__(self, knots):
        arr = np.array(knots, dtype=float)
        arr.setflags(write=False)
        if arr.ndim != 1 or arr.size < 2:
            raise DomainError("need at least two knots")
        if np.any(np.diff(arr) > 0):
            raise DomainError("knots must be decreasing")
        object.__setattr__(self, "knots", arr)

    @property
    def n(self) -> int:
        return self.knots.size


def _as_knots(knots) -> np.ndarray:
    if isinstance(knots, KnotVector):
        return knots.knots
    return KnotVector(knots).knots


def _check_multiplicity(sorted_knots: np.ndarray):
    n = sorted_knots.size
    _, counts = np.unique(sorted_knots, return_counts=True)
    if counts.max() > max(n - 2, 1):
        raise DegenerateKnots(
            f"knot multiplicity {counts.max()} exceeds N-2={n - 2}"
        )


def _divdiff_truncated_power(nodes_asc: np.ndarray, y, power: int):
    """Confluent Newton divided difference of t -> (t-y)_+^power.

    ``y`` may be a scalar or 1-d array; ties in the nodes are resolved with
    derivative values, which stay continuous as long as every multiplicity
    is at most ``power`` (enforced upstream).
    """
    y = np.asarray(y, dtype=float)
    m = nodes_asc.size

    def f_deriv(t, j):
        # j-th derivative of (t-y)_+^power
        coef = 1.0
        for k in range(j):
            coef *= power - k
        expo = power - j
        diff = t - y
        if expo == 0:
            return coef * (diff > 0).astype(float)
        return coef * np.where(diff > 0, diff, 0.0) ** expo

    table = [f_deriv(nodes_asc[i], 0) for i in range(m)]
    fact = 1.0
    for j in range(1, m):
        fact *= j
        new = []
        for i in range(m - j):
            dt = nodes_asc[i + j] - nodes_asc[i]
            if dt == 0.0:
                new.append(f_deriv(nodes_asc[i], j) / fact)
            else:
                new.append((table[i + 1] - table[i]) / dt)
        table = new
    return table[0]


def _cox_de_boor(nodes_asc: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Single normalised B-spline basis over all nodes, by the positive
    recurrence (0/0 := 0); numerically stable where the Newton tableau of
    truncated powers cancels catastrophically."""
    t = nodes_asc
    p = t.size - 2
    vals = [((y >= t[i]) & (y < t[i + 1])).astype(float) for i in range(p + 1)]
    for k in range(1, p + 1):
        nxt = []
        for i in range(p + 1 - k):
            acc = np.zeros_like(y)
            dl = t[i + k] - t[i]
            if dl > 0:
                acc += (y - t[i]) / dl * vals[i]
            dr = t[i + k + 1] - t[i + 1]
            if dr > 0:
                acc += (t[i + k + 1] - y) / dr * vals[i + 1]
            nxt.append(acc)
        vals = nxt
    return vals[0]


def spline_m(y, knots) -> float | np.ndarray:
    """Fundamental spline density with the given decreasing knots.

    The normalised divided difference of the truncated power
    t -> (t-y)_+^(N-2) over the knot multiset, evaluated through the
    equivalent positive B-spline recurrence (the raw rational sum and the
    Newton tableau both cancel catastrophically for clustered knots).
    Nonnegative, supported on [min knot, max knot], integrates to one.
    """
    x = _as_knots(knots)
    n = x.size
    if x[0] == x[-1]:
        raise DegenerateKnots("all knots coincide")
    nodes = np.sort(x)
    _check_multiplicity(nodes)
    scalar = np.isscalar(y) or np.ndim(y) == 0
    yarr = np.atleast_1d(np.asarray(y, dtype=float))
    out = np.zeros_like(yarr)
    inside = (yarr >= nodes[0]) & (yarr <= nodes[-1])
    if np.any(inside):
        basis = _cox_de_boor(nodes, yarr[inside])
        out[inside] = basis * (n - 1) / (nodes[-1] - nodes[0])
    return float(out[0]) if scalar else out


def spline_m_tableau(y, knots) -> float | np.ndarray:
    """Newton-tableau evaluation of the same spline (cross-check route).

    Divided differences of the truncated power over the knot multiset;
    exact at ties but loses absolute accuracy ~1e-8 on clustered knots.
    """
    x = _as_knots(knots)
    n = x.size
    if x[0] == x[-1]:
        raise DegenerateKnots("all knots coincide")
    nodes = np.sort(x)
    _check_multiplicity(nodes)
    scalar = np.isscalar(y) or np.ndim(y) == 0
    yarr = np.atleast_1d(np.asarray(y, dtype=float))
    out = np.zeros_like(yarr)
    inside = (yarr >= nodes[0]) & (yarr <= nodes[-1])
    if np.any(inside):
        out[inside] = (n - 1) * _divdiff_truncated_power(nodes, yarr[inside], n - 2)
    return float(out[0]) if scalar else out


def spline_m_tail_mass(y, knots) -> float | np.ndarray:
    """Exact upper-tail mass of the spline: integral of M over [y, infinity).

    Divided difference of (t-y)_+^(N-1); the complementary CDF used by the
    goodness-of-fit checks.
    """
    x = _as_knots(knots)
    n = x.size
    if x[0] == x[-1]:
        raise DegenerateKnots("all knots coincide")
    nodes = np.sort(x)
    _check_multiplicity(nodes)
    scalar = np.isscalar(y) or np.ndim(y) == 0
    yarr = np.atleast_1d(np.asarray(y, dtype=float))
    out = np.clip(_divdiff_truncated_power(nodes, yarr, n - 1), 0.0, 1.0)
    return float(out[0]) if scalar else out


def spline_m_derivative(y, knots, order: int):
    """order-th y-derivative of the spline via the knot-dropping recursion.

    Each application trades one knot for a difference of two lower
    splines; valid for order <= N-2.
    """
    x = _as_knots(knots)
    n = x.size
    if order < 0:
        raise OrderTooHigh("derivative order must be nonnegative")
    if order > n - 2:
        raise OrderTooHigh(f"order {order} exceeds N-2={n - 2}")
    if order == 0:
        return spline_m(y, x)
    if x[0] == x[-1]:
        raise DegenerateKnots("all knots coincide")
    lead = (n - 1) / (x[0] - x[-1])
    lower = spline_m_derivative(y, x[1:], order - 1)
    upper = spline_m_derivative(y, x[:-1], order - 1)
    return lead * (lower - upper)


# ---------------------------------------------------------------------------
# exact corner sampling
# ---------------------------------------------------------------------------

def _phase_fix(q, r):
    d = np.diagonal(r, axis1=-2, axis2=-1).copy()
    d /= np.abs(d)
    return q * d[..., None, :]


def haar_unitary(m: int, rng, size: int | None = None) -> np.ndarray:
    """Haar unitary matrices via QR of a complex Ginibre with phase fix."""
    shape = (m, m) if size is None else (size, m, m)
    z = rng.complex_normal(shape)
    if size is None or size <= _LA_CHUNK:
        return _phase_fix(*np.linalg.qr(z))
    out = np.empty_like(z)
    for lo in range(0, size, _LA_CHUNK):
        block = z[lo : lo + _LA_CHUNK]
        out[lo : lo + _LA_CHUNK] = _phase_fix(*np.linalg.qr(block))
    return out


def _eigvalsh_desc(mats: np.ndarray) -> np.ndarray:
    try:
        if mats.ndim == 2 or mats.shape[0] <= _LA_CHUNK:
            w = np.linalg.eigvalsh(mats)
        else:
            w = np.concatenate(
                [
                    np.linalg.eigvalsh(mats[lo : lo + _LA_CHUNK])
                    for lo in range(0, mats.shape[0], _LA_CHUNK)
                ]
            )
    except np.linalg.LinAlgError as exc:  # pragma: no cover - rare
        raise EigensolveFailure(str(exc)) from exc
    return w[..., ::-1]


def _corner_of_spectrum(values_block: np.ndarray, ginibre_block: np.ndarray) -> np.ndarray:
    """Eigenvalues of the top-left corner after Haar conjugation of diag(values)."""
    u = _phase_fix(*np.linalg.qr(ginibre_block))
    mat = (u * values_block[:, None, :]) @ np.conjugate(np.swapaxes(u, -1, -2))
    return np.clip(_eigvalsh_desc(mat[:, :-1, :-1]), 0.0, None)


def corner_samples(config: OrderedConfig, n: int, rng) -> np.ndarray:
    """n independent one-level corner samples, shape (n, N-1)."""
    x = config.values
    if x.size < 2:
        raise DomainError("corner sampling needs N >= 2")
    z = rng.complex_normal((n, x.size, x.size))
    vals = np.broadcast_to(x, (n, x.size))
    out = np.empty((n, x.size - 1))
    for lo in range(0, n, _LA_CHUNK):
        out[lo : lo + _LA_CHUNK] = _corner_of_spectrum(
            vals[lo : lo + _LA_CHUNK], z[lo : lo + _LA_CHUNK]
        )
    return out


def sample_corner(config: OrderedConfig, rng) -> OrderedConfig:
    """Exact draw from the one-level corner kernel; output interlaces input."""
    return OrderedConfig(corner_samples(config, 1, rng)[0])


def corner_of_each(values: np.ndarray, rng) -> np.ndarray:
    """One corner draw for each row of spectra: (n, N) -> (n, N-1)."""
    vals = np.asarray(values, dtype=float)
    n, m = vals.shape
    z = rng.complex_normal((n, m, m))
    out = np.empty((n, m - 1))
    for lo in range(0, n, _LA_CHUNK):
        out[lo : lo + _LA_CHUNK] = _corner_of_spectrum(
            vals[lo : lo + _LA_CHUNK], z[lo : lo + _LA_CHUNK]
        )
    return out


def chain_samples(config: OrderedConfig, K: int, n: int, rng) -> np.ndarray:
    """n independent draws of the K-level chain (iterated corners)."""
    if not 1 <= K < config.n:
        raise DomainError(f"need 1 <= K < N, got K={K}, N={config.n}")
    current = np.broadcast_to(config.values, (n, config.n)).copy()
    for m in range(config.n, K, -1):
        z = rng.complex_normal((n, m, m))
        nxt = np.empty((n, m - 1))
        for lo in range(0, n, _LA_CHUNK):
            nxt[lo : lo + _LA_CHUNK] = _corner_of_spectrum(
                current[lo : lo + _LA_CHUNK], z[lo : lo + _LA_CHUNK]
            )
        current = nxt
    return current


def sample_chain(config: OrderedConfig, K: int, rng) -> OrderedConfig:
    """Exact draw from the N-to-K chain kernel."""
    return OrderedConfig(chain_samples(config, K, 1, rng)[0])


def interlaces(y, x, tol: float = 1e-10) -> bool:
    """x_1 >= y_1 >= x_2 >= ... >= y_{N-1} >= x_N up to tol."""
    y = np.asarray(y, dtype=float)
    x = np.asarray(x, dtype=float)
    if y.size != x.size - 1:
        return False
    scale = max(abs(x[0]), 1.0)
    return bool(np.all(x[:-1] >= y - tol * scale) and np.all(y >= x[1:] - tol * scale))


# ---------------------------------------------------------------------------
# determinantal density
# ---------------------------------------------------------------------------

def _vandermonde(y: np.ndarray) -> float:
    diff = y[:, None] - y[None, :]
    return float(np.prod(diff[np.triu_indices(y.size, 1)]))


def lambda_kn_density(y, x, K: int, mc_fallback_n: int = 200_000, rng=None) -> float:
    """Density of the N-to-K chain kernel at the ordered point y.

    Uses the binomial-prefactor determinant of shifted splines divided by
    the wide-gap coordinate differences, times the Vandermonde of y.  Only
    stable for N <= 30, K <= 6; larger requests fall back to Monte Carlo
    histogramming (with a warning) when an rng is supplied.
    """
    xv = x.values if isinstance(x, OrderedConfig) else np.asarray(x, dtype=float)
    yv = y.values if isinstance(y, OrderedConfig) else np.asarray(y, dtype=float)
    n = xv.size
    if not 1 <= K <= n - 1 or yv.size != K:
        raise DomainError(f"need 1 <= K <= N-1 and len(y)=K; got K={K}, N={n}")
    if np.any(np.diff(xv) >= 0):
        raise DomainError("density evaluation needs strictly decreasing x")
    if n > DENSITY_MAX_N or K > DENSITY_MAX_K:
        if rng is None:
            raise NumericalInstability(
                f"N={n}, K={K} outside the stability envelope "
                f"(N<={DENSITY_MAX_N}, K<={DENSITY_MAX_K}); pass an rng for MC fallback"
            )
        warnings.warn(
            "density request outside the determinant stability envelope; "
            "falling back to Monte Carlo histogramming",
            RuntimeWarning,
            stacklevel=2,
        )
        return _density_mc(yv, OrderedConfig(xv), K, mc_fallback_n, rng)

    if K == 1:
        return float(spline_m(yv[0], xv))

    entries = np.empty((K, K))
    for i in range(1, K + 1):
        knots = xv[K - i : n - i + 1]
        for j in range(1, K + 1):
            entries[i - 1, j - 1] = spline_m(yv[K - j], knots)
    # a zero row or column means y is outside the kernel's support
    if np.any(~entries.any(axis=0)) or np.any(~entries.any(axis=1)):
        return 0.0
    cond = np.linalg.cond(entries)
    if not np.isfinite(cond) or cond > DENSITY_COND_LIMIT:
        raise NumericalInstability(f"spline determinant condition {cond:.2e} exceeds 1e12")

    prefactor = 1.0
    for l in range(1, K):
        prefactor *= comb(n - K + l, l)
    denom = 1.0
    for i in range(1, n + 1):
        for j in range(i + n - K + 1, n + 1):
            denom *= xv[i - 1] - xv[j - 1]
    det = float(np.linalg.det(entries))
    return prefactor * det / denom * _vandermonde(yv)


def lambda_k2_cell_masses(x, breaks, order: int = 8):
    """Integrals of the N-to-2 chain density over a break-grid partition.

    Returns a (B, B) matrix with entry [b, a] the mass of
    {y1 in cell b, y2 in cell a, y1 >= y2}; entries below the diagonal are
    zero and diagonal cells integrate the triangle through a Duffy map.
    Exact (up to roundoff) once ``breaks`` refines the knots of x, because
    the density is a polynomial inside every cell.
    """
    xv = x.values if isinstance(x, OrderedConfig) else np.asarray(x, dtype=float)
    cfg = OrderedConfig(xv)
    breaks = np.asarray(sorted(set(float(b) for b in breaks)))
    if breaks.size < 2:
        raise DomainError("need at least two break points")
    nodes, weights = np.polynomial.legendre.leggauss(order)
    nodes01 = (nodes + 1.0) / 2.0
    weights01 = weights / 2.0
    ncell = breaks.size - 1
    masses = np.zeros((ncell, ncell))

    def dens(y1, y2):
        return lambda_kn_density(np.array([y1, y2]), cfg, 2)

    for b in range(ncell):
        lo1, hi1 = breaks[b], breaks[b + 1]
        h1 = hi1 - lo1
        y1n = lo1 + nodes01 * h1
        for a in range(b + 1):
            lo2, hi2 = breaks[a], breaks[a + 1]
            h2 = hi2 - lo2
            if a < b:
                y2n = lo2 + nodes01 * h2
                vals = np.array([[dens(y1, y2) for y2 in y2n] for y1 in y1n])
                masses[b, a] = h1 * h2 * weights01 @ vals @ weights01
            else:
                # triangle y1 >= y2 inside the square cell
                acc = 0.0
                for s, ws in zip(nodes01, weights01):
                    y1 = lo1 + s * h1
                    for t, wt in zip(nodes01, weights01):
                        y2 = lo1 + s * t * h1
                        acc += ws * wt * s * dens(y1, y2)
                masses[b, a] = acc * h1 * h1
    return masses, breaks


def _density_mc(yv, config, K, n_samples, rng):
    samples = chain_samples(config, K, n_samples, rng)
    widths = 3.5 * samples.std(axis=0) * n_samples ** (-1.0 / (K + 4)) + 1e-30
    inside = np.all(np.abs(samples - yv[None, :]) <= widths[None, :] / 2, axis=1)
    volume = float(np.prod(widths))
    return float(inside.mean() / volume)


# ---------------------------------------------------------------------------
# boundary kernel sampling
# ---------------------------------------------------------------------------

def boundary_corner_samples(
    omega: OmegaPlusPoint, K: int, n: int, rng, truncation_eps: float = 1e-12
) -> np.ndarray:
    """n draws of the K-level boundary corner law, shape (n, K).

    Builds the K x K compression of the scalar-plus-rank-one Gaussian
    matrix over the point's support.  Finite-support points are sampled
    exactly; an infinite tail would be cut once its mass drops below
    ``truncation_eps`` and absorbed into the scalar term.
    """
    if K < 1:
        raise DomainError("need K >= 1")
    if not truncation_eps > 0:
        raise DomainError("truncation_eps must be positive")
    xs = omega.xs[omega.xs > 0]
    # drop the smallest atoms while the discarded mass stays below the cut
    if xs.size:
        tail = np.cumsum(xs[::-1])[::-1]
        keep = tail >= truncation_eps
        if not np.all(keep):
            xs = xs[keep]
    scalar = omega.gamma - float(xs.sum())
    out = np.full((n, K), scalar, dtype=float)
    if xs.size == 0:
        return np.clip(out, 0.0, None)
    xi = rng.complex_normal((n, xs.size, K))
    if K == 1:
        vals = scalar + np.einsum("nj,j->n", np.abs(xi[:, :, 0]) ** 2, xs)
        return np.clip(vals[:, None], 0.0, None)
    for lo in range(0, n, _LA_CHUNK):
        block = xi[lo : lo + _LA_CHUNK]
        mats = np.einsum("njk,j,njl->nkl", block, xs, np.conjugate(block))
        mats += scalar * np.eye(K)[None, :, :]
        out[lo : lo + _LA_CHUNK] = _eigvalsh_desc(mats)
    return np.clip(out, 0.0, None)


def sample_boundary_corner(
    omega: OmegaPlusPoint, K: int, truncation_eps: float, rng
) -> OrderedConfig:
    """Exact draw of the boundary corner law at level K."""
    return OrderedConfig(boundary_corner_samples(omega, K, 1, rng, truncation_eps)[0])
