"""Time integrators for the eigenvalue SDE and its relatives.

The N-particle equation is

    dx_i = x_i dw_i + [-(eta/2) x_i + c] dt + sum_{j != i} x_i x_j/(x_i - x_j) dt

with c = 1/2 (plain normalisation) or 1/(2N) (hard-edge rescaling).  Steps
are explicit Euler-Maruyama with adaptive halving: a proposal that crosses
an ordering gap or the positivity boundary is rejected, the interval is
halved and re-integrated with fresh variates (the law, not the path, is
preserved).  The log-coordinate integrator removes the positivity failure
mode and is the default near the hard edge.  A matrix-valued integrator, a
1d integrator and the action of the infinitesimal generator complete the
set of finite-N diagnostics.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .core import OrderedConfig, SdeParams, Trajectory
from .errors import DomainError, EigensolveFailure, StepFailure

__all__ = [
    "HermitianState",
    "StepReport",
    "SmoothFunction",
    "step_eigen_sde",
    "step_log_sde",
    "simulate",
    "step_matrix_sde",
    "eigenvalues",
    "step_1d",
    "generator_apply",
    "evolve_ensemble",
    "evolve_matrix_ensemble",
    "evolve_1d_ensemble",
    "eigen_drift",
    "log_drift",
]

# Halving below this fraction of dt_max aborts the step.
_MIN_DT_FRACTION = 1e-12


@dataclass(frozen=True)
class HermitianState:
    """N x N complex Hermitian matrix state."""

    entries: np.ndarray

    def __init__(self, entries):
        arr = np.array(entries, dtype=complex)
        if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
            raise DomainError("state must be a square matrix")
        if not np.allclose(arr, arr.conj().T, atol=1e-12):
            raise DomainError("state must be Hermitian to 1e-12")
        arr = (arr + arr.conj().T) / 2.0
        arr.setflags(write=False)
        object.__setattr__(self, "entries", arr)

    @property
    def n(self) -> int:
        return self.entries.shape[0]


@dataclass(frozen=True)
class StepReport:
    """Outcome of one adaptive step."""

    accepted_dt: float
    substeps: int
    projections: int


@dataclass(frozen=True)
class SmoothFunction:
    """Scalar observable with gradient and Hessian callbacks."""

    value: Callable[[np.ndarray], float]
    gradient: Callable[[np.ndarray], np.ndarray]
    hessian: Callable[[np.ndarray], np.ndarray]


# ---------------------------------------------------------------------------
# drift fields
# ---------------------------------------------------------------------------

def _pairwise(x: np.ndarray):
    """Differences x_i - x_j and products x_i x_j with unit diagonal."""
    diff = x[..., :, None] - x[..., None, :]
    n = x.shape[-1]
    idx = np.arange(n)
    diff[..., idx, idx] = 1.0
    return diff, idx


def _interaction_eigen(x: np.ndarray) -> np.ndarray:
    """sum_j x_i x_j / (x_i - x_j) along the last axis."""
    diff, idx = _pairwise(x)
    terms = (x[..., :, None] * x[..., None, :]) / diff
    terms[..., idx, idx] = 0.0
    return terms.sum(axis=-1)


def _interaction_log(x: np.ndarray) -> np.ndarray:
    """sum_j x_j / (x_i - x_j) along the last axis."""
    diff, idx = _pairwise(x)
    terms = np.broadcast_to(x[..., None, :], diff.shape) / diff
    terms = terms.copy()
    terms[..., idx, idx] = 0.0
    return terms.sum(axis=-1)


def _constant_drift(n: int, params: SdeParams) -> float:
    return 1.0 / (2.0 * n) if params.rescaled else 0.5


def eigen_drift(x: np.ndarray, params: SdeParams) -> np.ndarray:
    """Full drift of the eigenvalue SDE at x (batched over leading axes)."""
    n = x.shape[-1]
    return -(params.eta / 2.0) * x + _constant_drift(n, params) + _interaction_eigen(x)


def log_drift(x: np.ndarray, params: SdeParams) -> np.ndarray:
    """Drift of the log-coordinate SDE, expressed through x = exp(y)."""
    n = x.shape[-1]
    return (
        -(1.0 + params.eta) / 2.0
        + _constant_drift(n, params) / x
        + _interaction_log(x)
    )


# ---------------------------------------------------------------------------
# batched Euler stepping with per-replica halving
# ---------------------------------------------------------------------------

def _propose(kind: str, x: np.ndarray, dt: float, dw: np.ndarray, params: SdeParams):
    if kind == "eigen":
        return x + x * dw + eigen_drift(x, params) * dt
    if kind == "log":
        return x * np.exp(dw + log_drift(x, params) * dt)
    raise ValueError(f"unknown integrator {kind!r}")


def _accept(kind: str, new: np.ndarray, old: np.ndarray, params: SdeParams) -> np.ndarray:
    ok = np.all(np.isfinite(new), axis=-1)
    # log steps keep positivity by construction; eigen steps must clear the floor
    ok &= new[..., -1] > (params.positivity_floor if kind == "eigen" else 0.0)
    if new.shape[-1] > 1:
        new_gaps = new[..., :-1] - new[..., 1:]
        old_gaps = old[..., :-1] - old[..., 1:]
        ok &= np.all(new_gaps > params.gap_safety * old_gaps, axis=-1)
    return ok


def _advance_batch(x, dt, depth, rng, params, kind):
    """Advance all rows by dt.  Returns (new_x, failed_mask, rejections)."""
    dw = rng.standard_normal(x.shape) * np.sqrt(dt)
    prop = _propose(kind, x, dt, dw, params)
    ok = _accept(kind, prop, x, params)
    new = np.where(ok[:, None], prop, x)
    failed = np.zeros(x.shape[0], dtype=bool)
    rejections = int((~ok).sum())
    bad = np.nonzero(~ok)[0]
    if bad.size:
        if depth <= 0:
            failed[bad] = True
        else:
            sub, f1, r1 = _advance_batch(x[bad], dt / 2.0, depth - 1, rng, params, kind)
            rejections += r1
            alive = ~f1
            if alive.any():
                s2, f2, r2 = _advance_batch(sub[alive], dt / 2.0, depth - 1, rng, params, kind)
                sub[alive] = s2
                rejections += r2
                f1 = f1.copy()
                f1[np.nonzero(alive)[0][f2]] = True
            new[bad] = sub
            failed[bad] = f1
    return new, failed, rejections


def _halving_depth(dt: float, params: SdeParams) -> int:
    floor = _MIN_DT_FRACTION * params.dt_max
    return max(0, int(np.ceil(np.log2(max(dt / floor, 1.0)))))


def evolve_ensemble(
    states: np.ndarray,
    params: SdeParams,
    horizon: float,
    dt: float,
    rng,
    integrator: str = "log",
):
    """Evolve an (n, N) ensemble to the horizon on a dt grid.

    Replicas whose halving bottoms out are frozen and flagged; the returned
    mask marks them.  Noise consumption is a deterministic function of the
    rng stream, so identical sources give identical ensembles.
    """
    x = np.array(states, dtype=float)
    if x.ndim == 1:
        x = x[None, :]
    failed = np.zeros(x.shape[0], dtype=bool)
    t = 0.0
    while t < horizon - 1e-15:
        step = min(dt, horizon - t)
        depth = _halving_depth(step, params)
        new, fail_now, _ = _advance_batch(x, step, depth, rng, params, integrator)
        keep = ~failed
        x[keep] = new[keep]
        failed |= fail_now
        t += step
    return x, failed


# ---------------------------------------------------------------------------
# public single-path steppers
# ---------------------------------------------------------------------------

def _advance_single(x, dt, params, rng, kind, floor):
    dw = rng.standard_normal(x.shape) * np.sqrt(dt)
    prop = _propose(kind, x[None, :], dt, dw[None, :], params)[0]
    if _accept(kind, prop[None, :], x[None, :], params)[0]:
        return prop, StepReport(accepted_dt=dt, substeps=1, projections=0)
    if dt / 2.0 < floor:
        raise StepFailure(f"halving bottomed out at dt={dt:.3e}")
    left, r1 = _advance_single(x, dt / 2.0, params, rng, kind, floor)
    right, r2 = _advance_single(left, dt / 2.0, params, rng, kind, floor)
    return right, StepReport(
        accepted_dt=min(r1.accepted_dt, r2.accepted_dt),
        substeps=r1.substeps + r2.substeps,
        projections=r1.projections + r2.projections + 1,
    )


def _step_single(state: OrderedConfig, params: SdeParams, dt: float, rng, kind: str):
    state.require_interior()
    if not 0 < dt <= params.dt_max:
        raise DomainError(f"need 0 < dt <= dt_max={params.dt_max}")
    floor = _MIN_DT_FRACTION * params.dt_max
    new, report = _advance_single(state.values.copy(), dt, params, rng, kind, floor)
    return OrderedConfig(new), report


def step_eigen_sde(state: OrderedConfig, params: SdeParams, dt: float, rng):
    """One adaptive Euler-Maruyama step in the particle coordinates."""
    return _step_single(state, params, dt, rng, "eigen")


def step_log_sde(state: OrderedConfig, params: SdeParams, dt: float, rng):
    """One adaptive Euler-Maruyama step in log coordinates (positivity built in)."""
    return _step_single(state, params, dt, rng, "log")


def simulate(
    initial: OrderedConfig,
    params: SdeParams,
    horizon: float,
    save_times: Sequence[float],
    rng,
    integrator: str = "log",
) -> Trajectory:
    """Integrate one path and record the state at the requested times."""
    save = [float(t) for t in save_times]
    if any(t < 0 or t > horizon for t in save) or np.any(np.diff(save) <= 0):
        raise DomainError("save_times must be increasing within [0, horizon]")
    stepper = step_eigen_sde if integrator == "eigen" else step_log_sde
    if integrator not in ("eigen", "log"):
        raise DomainError(f"unknown integrator {integrator!r}")
    times = [0.0]
    states = [initial]
    current = initial
    t = 0.0
    for target in save:
        if target <= 0.0:
            continue
        while t < target - 1e-15:
            dt = min(params.dt_max, target - t)
            try:
                current, _ = stepper(current, params, dt, rng)
            except StepFailure as exc:
                raise StepFailure(f"step failed at t={t:.6g}", time=t) from exc
            t += dt
        times.append(target)
        states.append(current)
    return Trajectory(
        times=tuple(times),
        states=tuple(states),
        seed=getattr(rng, "master_seed", -1),
        stream=getattr(rng, "stream", -1),
        params=params,
    )


# ---------------------------------------------------------------------------
# matrix-valued dynamics
# ---------------------------------------------------------------------------

def _project_psd_batch(mats: np.ndarray) -> tuple[np.ndarray, int]:
    """Clip negative eigenvalues to zero where needed; count repairs."""
    w = np.linalg.eigvalsh(mats)
    bad = w[..., 0] < 0.0
    if not bad.any():
        return mats, 0
    idx = np.nonzero(bad)[0]
    wb, vb = np.linalg.eigh(mats[idx])
    wb = np.clip(wb, 0.0, None)
    repaired = np.einsum("nij,nj,nkj->nik", vb, wb, np.conjugate(vb))
    out = mats.copy()
    out[idx] = repaired
    return out, int(idx.size)


def matrix_step_batch(h: np.ndarray, params: SdeParams, dt: float, rng) -> np.ndarray:
    """Euler step of the Hermitian matrix SDE for a stacked batch."""
    n = h.shape[-1]
    dg = rng.complex_normal(h.shape) * np.sqrt(2.0 * dt)
    tr = np.trace(h, axis1=-2, axis2=-1).real
    eye = np.eye(n)
    drift = -(params.eta + n) / 2.0 * h + 0.5 * (1.0 + tr)[..., None, None] * eye
    new = h + 0.5 * (dg @ h + h @ np.conjugate(np.swapaxes(dg, -1, -2))) + drift * dt
    new = (new + np.conjugate(np.swapaxes(new, -1, -2))) / 2.0
    if new.ndim == 2:
        projected, _ = _project_psd_batch(new[None])
        return projected[0]
    projected, _ = _project_psd_batch(new)
    return projected


def step_matrix_sde(H: HermitianState, params: SdeParams, dt: float, rng) -> HermitianState:
    """One Euler step of the matrix SDE; re-Hermitised and clipped to PSD."""
    return HermitianState(matrix_step_batch(H.entries, params, dt, rng))


def evolve_matrix_ensemble(h0: np.ndarray, params: SdeParams, horizon: float, dt: float, rng):
    """Evolve a stacked batch of Hermitian states to the horizon."""
    h = np.array(h0, dtype=complex)
    t = 0.0
    while t < horizon - 1e-15:
        step = min(dt, horizon - t)
        h = matrix_step_batch(h, params, step, rng)
        t += step
    return h


def eigenvalues(H: HermitianState | np.ndarray) -> OrderedConfig:
    """Decreasing eigenvalues of a Hermitian state, clipped at zero to 1e-10."""
    mat = H.entries if isinstance(H, HermitianState) else np.asarray(H)
    try:
        w = np.linalg.eigvalsh(mat)
    except np.linalg.LinAlgError as exc:
        raise EigensolveFailure(str(exc)) from exc
    w = w[::-1]
    w[(w < 0.0) & (w > -1e-10)] = 0.0
    return OrderedConfig(w)


# ---------------------------------------------------------------------------
# one-dimensional diffusion
# ---------------------------------------------------------------------------

def step_1d(x: float, N: int, eta: float, dt: float, rng) -> float:
    """Euler step of the 1d diffusion dz = z dw + [(1 - eta/2 - N) z + 1/2] dt."""
    if x < 0:
        raise DomainError("1d state must be nonnegative")
    dw = float(np.asarray(rng.standard_normal(1))[0]) * np.sqrt(dt)
    new = x + x * dw + ((1.0 - eta / 2.0 - N) * x + 0.5) * dt
    return max(new, 0.0)


def evolve_1d_ensemble(x0: np.ndarray, N: int, eta: float, horizon: float, dt: float, rng):
    """Batched Euler evolution of the 1d diffusion, reflected at zero."""
    x = np.array(x0, dtype=float)
    t = 0.0
    while t < horizon - 1e-15:
        step = min(dt, horizon - t)
        dw = rng.standard_normal(x.shape) * np.sqrt(step)
        x = x + x * dw + ((1.0 - eta / 2.0 - N) * x + 0.5) * step
        np.clip(x, 0.0, None, out=x)
        t += step
    return x


# ---------------------------------------------------------------------------
# infinitesimal generator
# ---------------------------------------------------------------------------

def generator_apply(f: SmoothFunction, config: OrderedConfig, eta: float) -> float:
    """Apply the generator of the (plain) N-particle dynamics to f at config.

    L f = sum_i x_i^2/2 f_ii + sum_i [ -(eta/2) x_i + 1/2 + interaction_i ] f_i.
    """
    from .core import singular_drift

    config.require_interior()
    x = config.values
    grad = np.asarray(f.gradient(x), dtype=float)
    hess = np.asarray(f.hessian(x), dtype=float)
    hess_diag = np.diag(hess) if hess.ndim == 2 else hess
    drift = np.array([
        -(eta / 2.0) * x[i] + 0.5 + singular_drift(i, config) for i in range(x.size)
    ])
    return float(np.sum(x**2 / 2.0 * hess_diag) + np.sum(drift * grad))
