"""Optimal change-point discrimination strategy for unitary channels.

Builds the entangled input state, the per-step alignment unitaries, the
Gram matrix of the pre-measurement output states, the orthonormal
measurement that realizes the analytic outcome distribution, and the
closed-form maximum success probability.  The analytic model can be
cross-validated against direct Born-rule simulation with the actual
unitaries.

Conventions: segments are numbered k = 1..N; the change point n means the
first n segments saw channel 0 and the rest channel 1 -- segment k applies
channel b = 1 if n < k else 0.  Tensor factors are ordered segment N down
to segment 1 (most significant Kronecker factor first).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .linalg import LinalgError, max_abs
from .spectral import SpectralGap, combine_steps, gap_single


class SplitRequired(Exception):
    """A segment is perfectly distinguishable in a way the closed-form state
    cannot absorb; the problem must be split at `segment` (1-based)."""

    def __init__(self, segment: int):
        super().__init__(
            f"segment {segment} is degenerate (gamma = 1 with no usable "
            f"eigenvalue chord); split the problem there"
        )
        self.segment = segment


@dataclass
class OutcomeModel:
    """Conditional outcome distribution p[m, n] (row = outcome, col = truth)."""

    probs: np.ndarray
    gammas: np.ndarray

    @property
    def n_segments(self) -> int:
        return len(self.gammas)

    @property
    def prior(self) -> float:
        return 1.0 / (self.n_segments + 1)

    def success_probability(self) -> float:
        return float(np.mean(np.diag(self.probs)))


@dataclass
class Strategy:
    """Input state, alignments and measurement for one discrimination run."""

    n_segments: int
    step_gaps: list[list[SpectralGap]]
    gaps: list[SpectralGap]
    amplitudes: np.ndarray = field(repr=False)  # (2,)*N tensor, axis k-1 <-> b_k
    alignments: list[list[np.ndarray]] = field(repr=False, default_factory=list)
    measurement: np.ndarray | None = field(repr=False, default=None)  # (D, N+1)
    effective: bool = False

    @property
    def input_state(self) -> np.ndarray:
        """Flattened input amplitudes in segment-N-major order."""
        return np.transpose(self.amplitudes, axes=range(self.n_segments)[::-1]).ravel()


def segment_gaps(u_pairs: list[list[tuple[np.ndarray, np.ndarray]]]):
    """Per-step and aggregated per-segment gaps for the given unitary pairs."""
    step_gaps = [[gap_single(u0, u1) for (u0, u1) in seg] for seg in u_pairs]
    return step_gaps, [combine_steps(sg) for sg in step_gaps]


def _nu_weights(gaps: list[SpectralGap]) -> np.ndarray:
    zetas = np.array([g.zeta for g in gaps])
    root = np.sqrt(zetas[:-1] * zetas[1:])
    return (1 - root) / (1 + root)


def build_input_amplitudes(gaps: list[SpectralGap]) -> np.ndarray:
    """Input-state amplitudes over eigenvector labels, as a (2,)*N tensor.

    Entry [b_1, ..., b_N] carries the nearest-neighbour correlation weights
    sqrt(nu_k^{|b_{k+1}-b_k|} / (nu_k + 1)); the state is exactly normalized
    by construction.
    """
    n = len(gaps)
    if n < 1:
        raise LinalgError("need at least one segment")
    for k, g in enumerate(gaps, start=1):
        if g.degenerate:
            raise SplitRequired(k)
    nu = _nu_weights(gaps) if n > 1 else np.empty(0)
    amp = np.zeros((2,) * n)
    for idx in np.ndindex(*amp.shape):
        b = np.array(idx)
        w = 1.0 / np.sqrt(2.0)
        for k in range(n - 1):
            w *= np.sqrt(nu[k] ** abs(b[k + 1] - b[k]) / (nu[k] + 1))
        amp[idx] = w
    return amp


def build_input_state(gaps: list[SpectralGap]) -> np.ndarray:
    """Normalized input-state vector over the 2^N eigen-label space."""
    amp = build_input_amplitudes(gaps)
    return np.transpose(amp, axes=range(len(gaps))[::-1]).ravel()


def _complete_columns(cols: np.ndarray, total: int) -> np.ndarray:
    """Extend orthonormal columns to `total` columns by Gram-Schmidt against
    the standard basis (deterministic completion)."""
    dim, r = cols.shape
    if total > dim:
        raise LinalgError(f"cannot fit {total} orthonormal columns in dim {dim}")
    out = np.zeros((dim, total), dtype=complex)
    out[:, :r] = cols
    have = r
    for j in range(dim):
        if have == total:
            break
        v = np.zeros(dim, dtype=complex)
        v[j] = 1.0
        for _ in range(2):
            v = v - out[:, :have] @ (out[:, :have].conj().T @ v)
        norm = np.linalg.norm(v)
        if norm > 1e-8:
            out[:, have] = v / norm
            have += 1
    if have < total:
        raise LinalgError("basis completion failed")
    return out


def _mapping_unitary(src0, src1, dst0, dst1) -> np.ndarray:
    """Unitary taking src0 -> dst0 and src1 -> dst1, completed arbitrarily."""
    src = np.column_stack([src0, src1])
    dst = np.column_stack([dst0, dst1])
    dim = src.shape[0]
    return _complete_columns(dst, dim) @ _complete_columns(src, dim).conj().T


def build_alignments(step_gaps: list[list[SpectralGap]]) -> list[list[np.ndarray]]:
    """Per segment, the unitaries carrying step-r eigenvectors to step r+1."""
    out = []
    for seg in step_gaps:
        qs = []
        for r in range(len(seg) - 1):
            a, b = seg[r], seg[r + 1]
            if a.vec0.shape != b.vec0.shape:
                raise LinalgError("inconsistent dimensions between steps")
            qs.append(_mapping_unitary(a.vec0, a.vec1, b.vec0, b.vec1))
        out.append(qs)
    return out


def gram_matrix(gaps: list[SpectralGap]) -> np.ndarray:
    """Gram matrix of the pre-measurement output states (closed form)."""
    n = len(gaps)
    g = np.eye(n + 1, dtype=complex)
    for hi in range(n + 1):
        for lo in range(hi):
            seg = gaps[lo:hi]
            weight = sum(s.gamma for s in seg) + 1
            prod = np.prod([np.sqrt(s.zeta) * s.omega for s in seg])
            g[hi, lo] = weight * prod
            g[lo, hi] = np.conj(g[hi, lo])
    return g


def outcome_model(gaps_or_gammas) -> OutcomeModel:
    """Conditional probabilities p_{m|n} of the optimal strategy.

    Boundary values gamma_0 = gamma_{N+1} = 1 are applied internally, which
    makes the end columns absorb the tails of the discrete Laplace law.
    """
    if len(gaps_or_gammas) and isinstance(gaps_or_gammas[0], SpectralGap):
        gammas = np.array([g.gamma for g in gaps_or_gammas])
    else:
        gammas = np.asarray(gaps_or_gammas, dtype=float)
    if np.any((gammas < 0) | (gammas > 1)):
        raise LinalgError("gap parameters must lie in [0, 1]")
    n = len(gammas)
    gext = np.concatenate([[1.0], gammas, [1.0]])  # gext[k] = gamma_k
    zetas = (1 - gammas) / (1 + gammas)
    probs = np.empty((n + 1, n + 1))
    for m in range(n + 1):
        for nn in range(n + 1):
            lo, hi = min(m, nn), max(m, nn)
            probs[m, nn] = (gext[m] + gext[m + 1]) / 2 * np.prod(zetas[lo:hi])
    return OutcomeModel(probs=probs, gammas=gammas)


def max_success_probability(gammas) -> float:
    """Closed-form optimum (sum of gaps + 1) / (N + 1)."""
    gammas = np.asarray(gammas, dtype=float)
    if np.any((gammas < 0) | (gammas > 1)):
        raise LinalgError("gap parameters must lie in [0, 1]")
    return float((gammas.sum() + 1) / (len(gammas) + 1))


def discrete_laplace(k, zeta: float):
    """Probability mass (1-zeta)/(1+zeta) * zeta^|k| of the two-sided law."""
    return (1 - zeta) / (1 + zeta) * zeta ** np.abs(k)


# ---------------------------------------------------------------------------
# simulation


def _apply_axis(tensor: np.ndarray, mat: np.ndarray, axis: int) -> np.ndarray:
    return np.moveaxis(np.tensordot(mat, tensor, axes=(1, axis)), 0, axis)


def _aligned_products(u_pairs, alignments):
    """tU~^{(k)}_b for b in {0,1}: the step-wise aligned segment products."""
    out = []
    for seg_pairs, qs in zip(u_pairs, alignments):
        dim = seg_pairs[0][0].shape[0]
        prods = []
        for b in (0, 1):
            acc = np.eye(dim, dtype=complex)
            for r, (u0, u1) in enumerate(seg_pairs):
                tu = u0.conj().T @ u1 if b else np.eye(dim, dtype=complex)
                acc = tu @ acc
                if r < len(qs):
                    acc = qs[r] @ acc
            prods.append(acc)
        out.append(prods)
    return out


def simulate_outputs(u_pairs, strategy: Strategy, mode: str = "full"):
    """Pre-measurement states psi'_n for every candidate change point n.

    mode "full" applies the actual aligned unitary products in the d^N
    product space; mode "effective" tracks only the 2^N amplitudes over the
    per-segment eigenvector labels (exact by eigen-span confinement).
    """
    n = strategy.n_segments
    if mode == "effective":
        outs = []
        lam = [(1.0, complex(g.lambda0)) for g in strategy.gaps]  # unused slot 0
        for cp in range(n + 1):
            amp = strategy.amplitudes.astype(complex)
            for k in range(cp + 1, n + 1):  # segments that saw channel 1
                g = strategy.gaps[k - 1]
                phase = np.array([g.lambda0, g.lambda1])
                amp = _apply_axis(amp, np.diag(phase), k - 1)
            outs.append(np.transpose(amp, axes=range(n)[::-1]).ravel())
        return outs

    if mode != "full":
        raise ValueError(f"unknown simulation mode {mode!r}")
    prods = _aligned_products(u_pairs, strategy.alignments)
    dim = u_pairs[0][0][0].shape[0]
    # embed the eigen-label amplitudes with the first-step eigenvectors
    psi = strategy.amplitudes.astype(complex)
    for k in range(1, n + 1):
        e = np.column_stack([strategy.step_gaps[k - 1][0].vec0,
                             strategy.step_gaps[k - 1][0].vec1])
        psi = _apply_axis(psi, e, k - 1)
    outs = []
    for cp in range(n + 1):
        out = psi
        for k in range(1, n + 1):
            b = 1 if cp < k else 0
            out = _apply_axis(out, prods[k - 1][b], k - 1)
        outs.append(np.transpose(out, axes=range(n)[::-1]).ravel())
    return outs


def output_gram(outputs) -> np.ndarray:
    mat = np.column_stack(outputs)
    return mat.conj().T @ mat


def build_measurement(gaps: list[SpectralGap], outputs, gram_tol: float = 1e-8):
    """Orthonormal measurement vectors realizing the analytic outcome law.

    Columns m of the returned (D, N+1) matrix satisfy
    |<pi_m|psi'_n>|^2 = p_{m|n}.  The construction maps the reference frame
    built from the outcome probabilities onto the simulated outputs through
    a whitened Gram factorization.
    """
    n = len(gaps)
    g_target = gram_matrix(gaps)
    g_sim = output_gram(outputs)
    resid = max_abs(g_sim - g_target)
    if resid > gram_tol:
        raise LinalgError(
            f"simulated Gram deviates from the closed form by {resid:.3e}"
        )
    model = outcome_model(gaps)
    omegas = np.array([g.omega for g in gaps])
    cum = np.concatenate([[1.0 + 0j], np.cumprod(omegas)])  # cum[k] = prod_{l<=k}
    frame = np.zeros((n + 1, n + 1), dtype=complex)
    for col in range(n + 1):
        frame[:, col] = np.sqrt(model.probs[:, col]) * cum * np.conj(cum[col])
    # whiten both frames with the closed-form Gram
    w, v = np.linalg.eigh(g_target)
    scale = max(w[-1], 1.0)
    mask = w > 1e-10 * scale
    white = v[:, mask] / np.sqrt(w[mask])
    u1 = frame @ white
    psi_mat = np.column_stack(outputs)
    q1 = psi_mat @ white
    # Loewdin polish keeps q1 orthonormal without moving it materially
    s = q1.conj().T @ q1
    sw, sv = np.linalg.eigh(s)
    q1 = q1 @ (sv / np.sqrt(sw)) @ sv.conj().T
    u_full = _complete_columns(u1, n + 1)
    q_full = _complete_columns(q1, n + 1)
    return q_full @ u_full.conj().T


def born_probabilities(measurement: np.ndarray, outputs) -> np.ndarray:
    """|<pi_m|psi'_n>|^2 as an (N+1, N+1) matrix."""
    amps = measurement.conj().T @ np.column_stack(outputs)
    return np.abs(amps) ** 2


def build_strategy(u_pairs, mode: str | None = None) -> Strategy:
    """Full pipeline: gaps, input state, alignments, outputs, measurement."""
    step_gaps_, gaps = segment_gaps(u_pairs)
    n = len(gaps)
    dim = u_pairs[0][0][0].shape[0]
    if mode is None:
        mode = "full" if dim**n <= 4096 else "effective"
    amp = build_input_amplitudes(gaps)
    strat = Strategy(
        n_segments=n,
        step_gaps=step_gaps_,
        gaps=gaps,
        amplitudes=amp,
        alignments=build_alignments(step_gaps_),
        effective=(mode == "effective"),
    )
    outputs = simulate_outputs(u_pairs, strat, mode=mode)
    strat.measurement = build_measurement(gaps, outputs)
    return strat


# ---------------------------------------------------------------------------
# perfect-segment splitting


def split_indices(gaps: list[SpectralGap]) -> list[int]:
    """1-based indices of perfectly distinguishable segments."""
    return [k for k, g in enumerate(gaps, start=1) if g.gamma >= 1.0]


def composite_success_probability(gaps: list[SpectralGap]) -> float:
    """Success probability with explicit splitting at perfect segments.

    Each gamma = 1 segment separates the candidates into blocks that are
    told apart with certainty; the block sub-problems are solved with the
    closed form and recombined with their candidate-count weights.
    """
    n = len(gaps)
    splits = split_indices(gaps)
    if not splits:
        return max_success_probability([g.gamma for g in gaps])
    k = splits[0]
    left = gaps[: k - 1]
    right = gaps[k:]
    p_left = composite_success_probability(left) if left else 1.0
    p_right = composite_success_probability(right) if right else 1.0
    total = n + 1
    return (k * p_left + (total - k) * p_right) / total


def strategy_to_json(strategy: Strategy, model: OutcomeModel | None = None) -> str:
    """JSON export: input state, measurement vectors and outcome matrix."""
    if model is None:
        model = outcome_model(strategy.gaps)

    def cvec(v):
        return [[float(z.real), float(z.imag)] for z in np.asarray(v).ravel()]

    doc = {
        "n_segments": strategy.n_segments,
        "input_state": cvec(strategy.input_state),
        "measurement": [cvec(strategy.measurement[:, m])
                        for m in range(strategy.measurement.shape[1])]
        if strategy.measurement is not None else None,
        "outcome_probs": model.probs.tolist(),
        "gammas": model.gammas.tolist(),
    }
    return json.dumps(doc, indent=2)
