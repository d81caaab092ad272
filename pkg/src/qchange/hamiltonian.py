"""Change-point detection between two (possibly time-dependent) Hamiltonians.

Discretizes the evolutions into unitary segments, computes the analytic
per-interval gap parameter from the integrated spectral width of
H1(t) - H0(t), and reports how the discretized gaps converge to the
analytic values as the sub-step count grows.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .linalg import LinalgError, expm_skew, is_hermitian, matrix_from_json
from .spectral import gap_single, gap_segment
from .strategy import max_success_probability


@dataclass(frozen=True)
class HamiltonianSpec:
    """Time-dependent Hamiltonian on [t_start, t_end].

    `sample` returns the Hermitian matrix at a given time.  Piecewise
    constant tables and the built-in parametric families below both reduce
    to this callable form.
    """

    dim: int
    sample: Callable[[float], np.ndarray]
    t_start: float
    t_end: float

    def at(self, t: float) -> np.ndarray:
        h = np.asarray(self.sample(t), dtype=complex)
        if h.shape != (self.dim, self.dim):
            raise LinalgError(f"Hamiltonian sample has shape {h.shape}, dim {self.dim}")
        if not is_hermitian(h, tol=1e-12):
            raise LinalgError(f"Hamiltonian sample at t={t} is not Hermitian")
        return h


@dataclass(frozen=True)
class SegmentGrid:
    """Times tau_0 < ... < tau_{NR} with tau_{kR} at the candidate points."""

    tau: np.ndarray
    substeps: int

    def __post_init__(self):
        tau = np.asarray(self.tau, dtype=float)
        if np.any(np.diff(tau) <= 0):
            raise LinalgError("grid times must be strictly increasing")
        if (len(tau) - 1) % self.substeps != 0:
            raise LinalgError("grid length must be N*R + 1")

    @property
    def n_segments(self) -> int:
        return (len(self.tau) - 1) // self.substeps


def uniform_grid(candidates, substeps: int) -> SegmentGrid:
    """Uniform sub-steps between consecutive candidate change points."""
    candidates = np.asarray(candidates, dtype=float)
    if len(candidates) < 2 or np.any(np.diff(candidates) <= 0):
        raise LinalgError("need at least two strictly increasing candidates")
    parts = [
        np.linspace(candidates[k], candidates[k + 1], substeps + 1)[:-1]
        for k in range(len(candidates) - 1)
    ]
    tau = np.concatenate(parts + [candidates[-1:]])
    return SegmentGrid(tau=tau, substeps=substeps)


# ---------------------------------------------------------------------------
# built-in families

_PAULI = {
    "x": np.array([[0, 1], [1, 0]], dtype=complex),
    "y": np.array([[0, -1j], [1j, 0]], dtype=complex),
    "z": np.array([[1, 0], [0, -1]], dtype=complex),
}


def _pauli_sum(coeffs: dict) -> np.ndarray:
    h = np.zeros((2, 2), dtype=complex)
    for ax, c in coeffs.items():
        h += c * _PAULI[ax]
    return h


def constant_field(coeffs: dict, t_start: float = 0.0, t_end: float = 1.0):
    """Qubit H = sum_i c_i sigma_i, time independent."""
    h = _pauli_sum(coeffs)
    return HamiltonianSpec(2, lambda t: h, t_start, t_end)


def linear_chirp(base: dict, slope: dict, t_start: float = 0.0, t_end: float = 1.0):
    """Qubit H(t) = base + t * slope in the Pauli basis."""
    hb, hs = _pauli_sum(base), _pauli_sum(slope)
    return HamiltonianSpec(2, lambda t: hb + t * hs, t_start, t_end)


def sinusoidal_drive(base: dict, amp: dict, freq: float, phase: float = 0.0,
                     t_start: float = 0.0, t_end: float = 1.0):
    """Qubit H(t) = base + sin(freq*t + phase) * amp in the Pauli basis."""
    hb, ha = _pauli_sum(base), _pauli_sum(amp)
    return HamiltonianSpec(2, lambda t: hb + np.sin(freq * t + phase) * ha,
                           t_start, t_end)


def piecewise_table(dim: int, times, mats) -> HamiltonianSpec:
    """Piecewise-constant H(t) = mats[i] for times[i] <= t < times[i+1]."""
    times = np.asarray(times, dtype=float)
    mats = [np.asarray(m, dtype=complex) for m in mats]
    if np.any(np.diff(times) <= 0):
        raise LinalgError("table times must be strictly increasing")
    if len(mats) != len(times):
        raise LinalgError("need one matrix per table time")

    def sample(t: float) -> np.ndarray:
        i = int(np.searchsorted(times, t, side="right")) - 1
        return mats[min(max(i, 0), len(mats) - 1)]

    return HamiltonianSpec(dim, sample, float(times[0]), float(times[-1]))


def spec_pair_from_json(obj) -> tuple[HamiltonianSpec, HamiltonianSpec]:
    """Parse the table exchange format {"dim", "times", "H0": [...], "H1": [...]}."""
    try:
        dim, times = int(obj["dim"]), obj["times"]
        h0 = [matrix_from_json(m) for m in obj["H0"]]
        h1 = [matrix_from_json(m) for m in obj["H1"]]
    except (KeyError, TypeError) as exc:
        raise LinalgError(f"malformed Hamiltonian table: {exc}") from exc
    return piecewise_table(dim, times, h0), piecewise_table(dim, times, h1)


def load_spec_pair(path) -> tuple[HamiltonianSpec, HamiltonianSpec]:
    with open(path) as fh:
        return spec_pair_from_json(json.load(fh))


# ---------------------------------------------------------------------------
# discretization and analytic gaps


def discretize(spec_pair, grid: SegmentGrid):
    """Per-(segment, sub-step) unitary pairs via the midpoint exponential.

    Each sub-step propagator is exp(-i H(t_mid) dt): second-order accurate
    for smooth time dependence and exact for piecewise-constant Hamiltonians
    aligned with the grid.
    """
    h0, h1 = spec_pair
    tau = np.asarray(grid.tau)
    if tau[0] < h0.t_start - 1e-12 or tau[-1] > h0.t_end + 1e-12:
        raise LinalgError("grid extends beyond the Hamiltonian domain")
    pairs = []
    r = grid.substeps
    for k in range(grid.n_segments):
        seg = []
        for i in range(r):
            a, b = tau[k * r + i], tau[k * r + i + 1]
            mid, dt = (a + b) / 2, b - a
            seg.append((expm_skew(h0.at(mid), dt), expm_skew(h1.at(mid), dt)))
        pairs.append(seg)
    return pairs


def spectral_width(spec_pair, t: float) -> float:
    """Spread of eigenvalues of H1(t) - H0(t)."""
    h0, h1 = spec_pair
    w = np.linalg.eigvalsh(h1.at(t) - h0.at(t))
    return float(w[-1] - w[0])


def _adaptive_simpson(f, a, b, tol, depth, fa, fm, fb, whole):
    m = (a + b) / 2
    lm, rm = (a + m) / 2, (m + b) / 2
    flm, frm = f(lm), f(rm)
    left = (m - a) / 6 * (fa + 4 * flm + fm)
    right = (b - m) / 6 * (fm + 4 * frm + fb)
    if depth <= 0 or abs(left + right - whole) <= 15 * tol:
        return left + right + (left + right - whole) / 15
    return (_adaptive_simpson(f, a, m, tol / 2, depth - 1, fa, flm, fm, left)
            + _adaptive_simpson(f, m, b, tol / 2, depth - 1, fm, frm, fb, right))


def integrate_spectral_width(spec_pair, t_lo: float, t_hi: float,
                             tol: float = 1e-8) -> float:
    """Adaptive-Simpson integral of the spectral width over [t_lo, t_hi].

    The integrand is continuous but can have kinks at eigenvalue crossings;
    an initial split at coarse sign changes of its slope keeps Simpson's
    order intact, and adaptivity handles the rest (max depth 20 ~ 2^20
    panels).
    """
    if not t_lo < t_hi:
        raise LinalgError("need t_lo < t_hi")
    f = lambda t: spectral_width(spec_pair, t)
    probes = np.linspace(t_lo, t_hi, 65)
    vals = np.array([f(t) for t in probes])
    slopes = np.diff(vals)
    cuts = [t_lo]
    for i in range(1, len(slopes)):
        if slopes[i - 1] * slopes[i] < 0:
            cuts.append(float(probes[i]))
    cuts.append(t_hi)
    total = 0.0
    for a, b in zip(cuts[:-1], cuts[1:]):
        fa, fm, fb = f(a), f((a + b) / 2), f(b)
        whole = (b - a) / 6 * (fa + 4 * fm + fb)
        total += _adaptive_simpson(f, a, b, tol / max(len(cuts) - 1, 1), 20,
                                   fa, fm, fb, whole)
    return total


def delta_clamp(theta: float) -> float:
    """sin(min(theta, pi) / 2): integrated width to gap parameter."""
    return float(np.sin(min(theta, np.pi) / 2))


def gamma_hamiltonian(spec_pair, t_lo: float, t_hi: float, tol: float = 1e-8) -> float:
    """Analytic per-interval gap parameter of the Hamiltonian problem."""
    return delta_clamp(integrate_spectral_width(spec_pair, t_lo, t_hi, tol))


def hamiltonian_gammas(spec_pair, candidates) -> np.ndarray:
    candidates = np.asarray(candidates, dtype=float)
    if len(candidates) < 2 or np.any(np.diff(candidates) <= 0):
        raise LinalgError("need at least two strictly increasing candidates")
    return np.array([
        gamma_hamiltonian(spec_pair, candidates[k], candidates[k + 1])
        for k in range(len(candidates) - 1)
    ])


def hamiltonian_success_probability(spec_pair, candidates) -> float:
    """Closed-form optimum for the Hamiltonian change-point problem."""
    return max_success_probability(hamiltonian_gammas(spec_pair, candidates))


@dataclass(frozen=True)
class ConvergenceRow:
    substeps: int
    gamma_discrete: np.ndarray
    gamma_analytic: np.ndarray

    @property
    def discrepancy(self) -> np.ndarray:
        return np.abs(self.gamma_discrete - self.gamma_analytic)


def convergence_report(spec_pair, candidates, r_list) -> list[ConvergenceRow]:
    """Discretized vs analytic gaps for an increasing sub-step schedule."""
    r_list = list(r_list)
    if any(b <= a for a, b in zip(r_list, r_list[1:])):
        raise LinalgError("substep counts must be increasing")
    analytic = hamiltonian_gammas(spec_pair, candidates)
    rows = []
    for r in r_list:
        pairs = discretize(spec_pair, uniform_grid(candidates, r))
        est = np.array([
            gap_segment([gap_single(u0, u1) for (u0, u1) in seg]) for seg in pairs
        ])
        rows.append(ConvergenceRow(r, est, analytic))
    return rows
