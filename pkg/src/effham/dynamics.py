"""Exact time evolution, fidelities, spectra comparison, and scaling fits.

Evolution goes through a full eigendecomposition, so trajectories are exact
for arbitrary horizons and norm is conserved to machine precision.  The
comparison helpers quantify how well an effective Hamiltonian reproduces
the exact spectra (per conserved block) and dynamics (fidelity in the
rotated frame), and fit empirical convergence orders from epsilon sweeps.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import AnalysisError, SpaceMismatchError
from .hilbert import OperatorMatrix

NORM_TOL = 1e-10


@dataclass(frozen=True)
class Trajectory:
    """Sampled pure-state evolution plus named expectation-value series."""

    times: np.ndarray
    states: np.ndarray  # shape (len(times), dim)
    observables: dict[str, np.ndarray] = field(default_factory=dict)

    def norm_drift(self) -> float:
        return float(np.max(np.abs(1.0 - np.linalg.norm(self.states, axis=1))))


def evolve(h: OperatorMatrix, psi0: np.ndarray, times, observables=None) -> Trajectory:
    """Evolve ``psi0`` under the Hermitian ``h`` at the requested times.

    ``observables`` maps names to operators whose expectation values are
    recorded along the trajectory.
    """
    if not h.is_hermitian(1e-10):
        raise ValueError("evolution requires a Hermitian generator")
    psi = np.asarray(psi0, dtype=complex)
    if abs(np.linalg.norm(psi) - 1.0) > NORM_TOL:
        raise ValueError("initial state must be normalized")
    t = np.asarray(list(times), dtype=float)
    w, v = np.linalg.eigh(h.matrix)
    coeff = v.conj().T @ psi
    phases = np.exp(-1j * np.outer(t, w))
    states = phases * coeff
    states = states @ v.T  # (T, dim) in the original basis
    drift = float(np.max(np.abs(1.0 - np.linalg.norm(states, axis=1))))
    if drift > NORM_TOL:
        raise AnalysisError(f"norm drift {drift:.3e} beyond tolerance")
    obs = {}
    for name, op in (observables or {}).items():
        if op.space != h.space:
            raise SpaceMismatchError(f"observable {name} on a different space")
        obs[name] = np.real(np.einsum("ti,ij,tj->t", states.conj(), op.matrix, states))
    return Trajectory(times=t, states=states, observables=obs)


def effective_evolution(h_eff: OperatorMatrix, psi0: np.ndarray, times,
                        rotation: OperatorMatrix | None = None,
                        observables=None) -> Trajectory:
    """Evolution under an effective Hamiltonian, by default in the rotated frame.

    With a rotation U (the one that produced ``h_eff`` from the exact
    interaction), the returned states are ``U^dag exp(-i h_eff t) U psi0``,
    which is directly comparable with the exact evolution.  Without a
    rotation the bare comparison is returned; the frame corrections it
    omits are first order in the rotation amplitude and time independent.
    """
    psi = np.asarray(psi0, dtype=complex)
    if rotation is None:
        return evolve(h_eff, psi, times, observables)
    inner = evolve(h_eff, rotation.apply(psi), times)
    back = rotation.matrix.conj().T
    states = inner.states @ back.T
    obs = {}
    for name, op in (observables or {}).items():
        obs[name] = np.real(np.einsum("ti,ij,tj->t", states.conj(), op.matrix, states))
    return Trajectory(times=inner.times, states=states, observables=obs)


def fidelity(psi: np.ndarray, phi: np.ndarray) -> float:
    """Squared overlap |<psi|phi>|^2 (phase invariant)."""
    a = np.asarray(psi, dtype=complex)
    b = np.asarray(phi, dtype=complex)
    if a.shape != b.shape:
        raise SpaceMismatchError("states have different dimensions")
    return float(np.abs(np.vdot(a, b)) ** 2)


def infidelity_series(exact: Trajectory, approx: Trajectory) -> np.ndarray:
    """1 - F(t) between two trajectories on the same time grid."""
    if exact.states.shape != approx.states.shape:
        raise SpaceMismatchError("trajectories are not comparable")
    overlap = np.abs(np.einsum("ti,ti->t", exact.states.conj(), approx.states)) ** 2
    return 1.0 - overlap


@dataclass(frozen=True)
class BlockErrors:
    key: tuple[float, ...]
    max_error: float
    mean_error: float
    size: int


@dataclass(frozen=True)
class ComparisonReport:
    """Per-block eigenvalue errors, plus optional dynamics/scaling attachments."""

    blocks: tuple[BlockErrors, ...]
    max_error: float
    mean_error: float
    block_leakage: float
    infidelity: np.ndarray | None = None
    scaling: "ScalingFit | None" = None
    deviation: float | None = None
    guards: dict[str, float] = field(default_factory=dict)


def compare_spectra(h_exact: OperatorMatrix, h_eff: OperatorMatrix, blocks,
                    block_tol: float = 1e-10) -> ComparisonReport:
    """Sorted-eigenvalue differences inside each conserved block.

    ``blocks`` is an iterable of boolean masks or index lists.  Both inputs
    must be block diagonal with respect to them (leakage beyond
    ``block_tol`` relative to the norm is an error); degenerate clusters
    are compared as sorted multisets.
    """
    if h_exact.space != h_eff.space:
        raise SpaceMismatchError("operators live on different spaces")
    dim = h_exact.dim
    masks = []
    for blk in blocks:
        arr = np.asarray(blk)
        if arr.dtype == bool:
            masks.append(arr)
        else:
            m = np.zeros(dim, dtype=bool)
            m[arr] = True
            masks.append(m)
    leakage = 0.0
    for h in (h_exact, h_eff):
        scale = max(1.0, h.norm())
        for m in masks:
            out = h.matrix[np.ix_(m, ~m)]
            leakage = max(leakage, float(np.linalg.norm(out)) / scale)
    if leakage > block_tol:
        raise AnalysisError(f"operators leak between blocks (relative norm {leakage:.3e})")
    per_block = []
    errs_all = []
    for b, m in enumerate(masks):
        idx = np.where(m)[0]
        ev_exact = np.linalg.eigvalsh(h_exact.matrix[np.ix_(idx, idx)])
        ev_eff = np.linalg.eigvalsh(h_eff.matrix[np.ix_(idx, idx)])
        err = np.abs(ev_exact - ev_eff)
        per_block.append(BlockErrors(key=(float(b),), max_error=float(err.max()),
                                     mean_error=float(err.mean()), size=len(idx)))
        errs_all.extend(err.tolist())
    errs_all = np.asarray(errs_all) if errs_all else np.zeros(1)
    return ComparisonReport(blocks=tuple(per_block),
                            max_error=float(errs_all.max()),
                            mean_error=float(errs_all.mean()),
                            block_leakage=leakage)


@dataclass(frozen=True)
class ScalingFit:
    """Least-squares slope of log(metric) against log(epsilon)."""

    order: float
    intercept: float
    residual: float  # rms residual in log10 space
    epsilons: tuple[float, ...]
    values: tuple[float, ...]
    saturated: bool
    residual_threshold: float = 0.15

    @property
    def reliable(self) -> bool:
        """The fitted order is only meaningful when the log-log fit is tight."""
        return (not self.saturated) and self.residual <= self.residual_threshold


def scaling_study(metric, eps_grid, saturation: float = 1e-14) -> ScalingFit:
    """Fit the convergence order of ``metric(eps)`` over a geometric epsilon grid.

    Grid points whose metric falls below ``saturation`` are dropped and the
    fit is flagged saturated; at least three usable points are required.
    """
    eps = [float(e) for e in eps_grid]
    if len(eps) < 3:
        raise ValueError("need at least three epsilon values")
    vals = [float(metric(e)) for e in eps]
    usable = [(e, v) for e, v in zip(eps, vals) if v > saturation]
    saturated = len(usable) < len(vals)
    if len(usable) < 3:
        return ScalingFit(order=math.nan, intercept=math.nan, residual=math.inf,
                          epsilons=tuple(eps), values=tuple(vals), saturated=True)
    le = np.log10([e for e, _ in usable])
    lv = np.log10([v for _, v in usable])
    slope, intercept = np.polyfit(le, lv, 1)
    fitted = slope * le + intercept
    residual = float(np.sqrt(np.mean((lv - fitted) ** 2)))
    return ScalingFit(order=float(slope), intercept=float(intercept), residual=residual,
                      epsilons=tuple(eps), values=tuple(vals), saturated=saturated)


def _prominence(s: np.ndarray, p: int) -> float:
    """Height of peak ``p`` above the higher of its two surrounding bases."""
    n = len(s)
    left = s[p]
    k = p - 1
    while k >= 0 and s[k] <= s[p]:
        left = min(left, s[k])
        k -= 1
    right = s[p]
    k = p + 1
    while k < n and s[k] <= s[p]:
        right = min(right, s[k])
        k += 1
    return float(s[p] - max(left, right))


def effective_frequency(traj: Trajectory, observable: str,
                        min_prominence: float = 0.25) -> float:
    """Dominant oscillation frequency of a recorded observable.

    Measured from the mean spacing of successive maxima, refined with a
    three-point parabolic fit.  Only peaks whose prominence exceeds
    ``min_prominence`` times the series span count, which makes the
    extraction immune to the small fast ripple that nonresonant channels
    superpose on a slow transfer; at least two such peaks are required.
    Note populations oscillate at twice the underlying amplitude frequency,
    so a resonant two-level transfer with coupling c yields ``c / pi``.
    """
    if observable not in traj.observables:
        raise KeyError(observable)
    s = np.asarray(traj.observables[observable], dtype=float)
    t = traj.times
    span = float(np.max(s) - np.min(s))
    if span < 1e-12:
        raise AnalysisError(f"series {observable!r} is constant")
    peaks = []
    for i in range(1, len(s) - 1):
        if not (s[i - 1] < s[i] >= s[i + 1]):
            continue
        if _prominence(s, i) < min_prominence * span:
            continue
        denom = s[i - 1] - 2 * s[i] + s[i + 1]
        shift = 0.5 * (s[i - 1] - s[i + 1]) / denom if denom != 0 else 0.0
        peaks.append(t[i] + shift * (t[i + 1] - t[i]))
    if len(peaks) < 2:
        raise AnalysisError(f"series {observable!r} shows fewer than two oscillation peaks")
    spacing = float(np.mean(np.diff(peaks)))
    return 1.0 / spacing
