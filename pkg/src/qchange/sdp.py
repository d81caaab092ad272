"""Dense semidefinite programming for small block-structured problems.

Standard form: maximize sum_j <C_j, X_j> over PSD blocks X_j subject to
linear equalities sum_j <A_ij, X_j> = b_i.  The dual is the linear matrix
inequality min b.y s.t. sum_i y_i A_ij - C_j >= 0 for every block, which is
how the two-channel dual problem is entered below.

The solver is a primal-dual interior-point method with Nesterov-Todd
scaling and an adaptive centering parameter; complex Hermitian blocks are
realified to doubled real symmetric blocks internally.  Design point:
total dimension up to ~128 (complex), a few hundred equality constraints.

Also hosts the three problem builders used elsewhere: minimum-error
pure-state discrimination, the separable-input baseline, and the full
tester optimization for small N, together with the Choi-matrix helpers
those builders share.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .linalg import (
    LinalgError,
    as_matrix,
    gram_factor,
    is_hermitian,
    kron_all,
    max_abs,
    partial_trace,
    TensorShape,
)
from .spectral import SpectralGap


class SdpError(ValueError):
    """Raised for malformed or numerically intractable problems."""


# ---------------------------------------------------------------------------
# problem containers


@dataclass
class SdpProblem:
    """Equality-constrained SDP over complex Hermitian PSD blocks.

    constraints[i][j] is the coefficient of block j in equality i (None for
    blocks the constraint does not touch).  The objective is maximized.
    """

    block_dims: list[int]
    objective: list[np.ndarray]
    constraints: list[list[np.ndarray | None]]
    rhs: np.ndarray
    name: str = "sdp"

    def validate(self) -> None:
        nb = len(self.block_dims)
        if len(self.objective) != nb:
            raise SdpError("objective must have one matrix per block")
        for j, (d, c) in enumerate(zip(self.block_dims, self.objective)):
            if c.shape != (d, d) or not is_hermitian(c, tol=1e-10):
                raise SdpError(f"objective block {j} is not Hermitian {d}x{d}")
        if len(self.rhs) != len(self.constraints):
            raise SdpError("rhs length must match constraint count")
        for i, row in enumerate(self.constraints):
            if len(row) != nb:
                raise SdpError(f"constraint {i} must cover all {nb} blocks")
            for j, a in enumerate(row):
                if a is None:
                    continue
                d = self.block_dims[j]
                if a.shape != (d, d) or not is_hermitian(a, tol=1e-10):
                    raise SdpError(f"constraint {i}, block {j} is not Hermitian")

    @property
    def total_dim(self) -> int:
        return sum(self.block_dims)


@dataclass
class SdpSolution:
    primal_blocks: list[np.ndarray]
    dual_vector: np.ndarray
    primal_value: float
    dual_value: float
    gap: float
    status: str
    iterations: int
    primal_residual: float
    dual_residual: float


def dump_problem(problem: SdpProblem) -> str:
    """Sparse triplet text dump: one line per nonzero, for debugging."""
    lines = [
        f"# problem {problem.name}: {len(problem.block_dims)} blocks "
        f"{problem.block_dims}, {len(problem.rhs)} equalities",
        "# obj block row col re im / con index block row col re im",
    ]
    for j, c in enumerate(problem.objective):
        for r, cc in zip(*np.nonzero(np.abs(c) > 0)):
            z = c[r, cc]
            lines.append(f"obj {j} {r} {cc} {z.real:.17g} {z.imag:.17g}")
    for i, row in enumerate(problem.constraints):
        lines.append(f"rhs {i} {problem.rhs[i]:.17g}")
        for j, a in enumerate(row):
            if a is None:
                continue
            for r, cc in zip(*np.nonzero(np.abs(a) > 0)):
                z = a[r, cc]
                lines.append(f"con {i} {j} {r} {cc} {z.real:.17g} {z.imag:.17g}")
    return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# realification


def realify(m: np.ndarray) -> np.ndarray:
    """Hermitian complex -> symmetric real of doubled dimension."""
    return np.block([[m.real, -m.imag], [m.imag, m.real]])


def derealify(r: np.ndarray) -> np.ndarray:
    n = r.shape[0] // 2
    return (r[:n, :n] + r[n:, n:]) / 2 + 1j * (r[n:, :n] - r[:n, n:]) / 2


# ---------------------------------------------------------------------------
# interior-point core (real symmetric blocks)


def _chol(m: np.ndarray) -> np.ndarray:
    scale = max(max_abs(m), 1.0)
    jitter = 0.0
    for _ in range(12):
        try:
            return np.linalg.cholesky(m + jitter * np.eye(m.shape[0]))
        except np.linalg.LinAlgError:
            jitter = max(jitter * 10, 1e-14 * scale)
    raise SdpError("Cholesky failed: iterate left the PSD cone")


def _max_step(l: np.ndarray, d: np.ndarray) -> float:
    """sup {a : M + a D >= 0} for M = L L^T."""
    s = np.linalg.solve(l, np.linalg.solve(l, d).T)
    w = np.linalg.eigvalsh((s + s.T) / 2)
    return np.inf if w[0] >= -1e-16 else -1.0 / w[0]


def _presolve_rank(avecs: np.ndarray, tol: float = 1e-10) -> list[int]:
    """Indices of equality rows dependent on earlier rows (greedy QR test)."""
    _, r = np.linalg.qr(avecs.T)
    diag = np.abs(np.diag(r))
    scale = max(diag.max(), 1.0)
    return [int(i) for i in np.nonzero(diag <= tol * scale)[0]]


def solve(problem: SdpProblem, tol: float = 1e-10, feas_tol: float = 1e-7,
          gap_tol: float = 1e-6, max_iter: int = 200) -> SdpSolution:
    """Interior-point solve of the block SDP.

    Runs to a tight internal tolerance; `status` is "optimal" once the
    primal residual is below feas_tol and the relative gap below gap_tol.
    Deterministic: no randomization anywhere.
    """
    problem.validate()
    m = len(problem.rhs)
    if m == 0:
        raise SdpError("need at least one equality constraint")

    dims = [2 * d for d in problem.block_dims]
    cs = [realify(c) / 2 for c in problem.objective]
    b = 2 * np.asarray(problem.rhs, dtype=float)
    astk = []
    for j, d in enumerate(dims):
        aj = np.zeros((m, d, d))
        for i, row in enumerate(problem.constraints):
            if row[j] is not None:
                aj[i] = realify(row[j])
        astk.append(aj)
    avec = np.hstack([aj.reshape(m, -1) for aj in astk])
    dep = _presolve_rank(avec)
    if dep:
        raise SdpError(f"equality system is rank deficient; dependent rows: {dep}")

    ntot = sum(dims)
    scale_a = max(max(max_abs(aj) for aj in astk), 1.0)
    scale_c = max(max(max_abs(c) for c in cs), 1.0)
    xs = [max(1.0, max_abs(b) / scale_a) * np.eye(d) for d in dims]
    zs = [scale_c * np.eye(d) for d in dims]
    y = np.zeros(m)

    def apply_a(mats):
        return sum(aj.reshape(m, -1) @ mj.ravel() for aj, mj in zip(astk, mats))

    def apply_at(vec, j):
        return np.tensordot(vec, astk[j], axes=1)

    status = "max_iter"
    it = 0
    pres = dres = relgap = np.inf
    for it in range(1, max_iter + 1):
        rp = b - apply_a(xs)
        rds = [cs[j] - apply_at(y, j) + zs[j] for j in range(len(dims))]
        mu = sum(np.tensordot(x, z) for x, z in zip(xs, zs)) / ntot
        pobj = sum(np.tensordot(c, x) for c, x in zip(cs, xs))
        dobj = float(b @ y)
        pres = max_abs(rp) / (1 + max_abs(b))
        dres = max(max_abs(r) for r in rds) / (1 + scale_c)
        relgap = abs(pobj - dobj) / (1 + abs(pobj) + abs(dobj))
        if max(pres, dres, relgap) <= tol:
            status = "optimal"
            break

        # Nesterov-Todd scaling point per block: W Z W = X
        ws, lxs, zinvs = [], [], []
        for x, z in zip(xs, zs):
            lx, lz = _chol(x), _chol(z)
            u, s, vt = np.linalg.svd(lz.T @ lx)
            r = lx @ (vt.T / np.sqrt(s))
            ws.append(r @ r.T)
            lxs.append(lx)
            zinvs.append(np.linalg.solve(lz.T, np.linalg.solve(lz, np.eye(len(z)))))

        # Schur complement M_ik = sum_j <A_ij, W_j A_kj W_j>
        sch = np.zeros((m, m))
        for aj, w in zip(astk, ws):
            t = np.einsum("ab,ibc,cd->iad", w, aj, w, optimize=True)
            sch += aj.reshape(m, -1) @ t.reshape(m, -1).T
        sch = (sch + sch.T) / 2
        lm = _chol(sch)

        def direction(sigmu):
            rcs = [sigmu * zi - x for zi, x in zip(zinvs, xs)]
            rhs_vec = apply_a([rc + w @ rd @ w for rc, rd, w in zip(rcs, rds, ws)]) - rp
            dy = np.linalg.solve(lm.T, np.linalg.solve(lm, rhs_vec))
            dzs = [apply_at(dy, j) - rds[j] for j in range(len(dims))]
            dxs = []
            for rc, w, dz in zip(rcs, ws, dzs):
                dx = rc - w @ dz @ w
                dxs.append((dx + dx.T) / 2)
            return dy, dxs, dzs

        # predictor fixes the centering parameter, corrector takes the step
        _, dxa, dza = direction(0.0)
        ap = min(1.0, 0.98 * min(_max_step(lx, dx) for lx, dx in zip(lxs, dxa)))
        ad = min(1.0, 0.98 * min(_max_step(_chol(z), dz) for z, dz in zip(zs, dza)))
        mu_aff = sum(
            np.tensordot(x + ap * dx, z + ad * dz)
            for x, dx, z, dz in zip(xs, dxa, zs, dza)
        ) / ntot
        sigma = min(1.0, max((mu_aff / mu) ** 3, 1e-10))
        dy, dxs, dzs = direction(sigma * mu)
        ap = min(1.0, 0.98 * min(_max_step(lx, dx) for lx, dx in zip(lxs, dxs)))
        ad = min(1.0, 0.98 * min(_max_step(_chol(z), dz) for z, dz in zip(zs, dzs)))
        if max(ap, ad) < 1e-10:
            break
        xs = [x + ap * dx for x, dx in zip(xs, dxs)]
        y = y + ad * dy
        zs = [z + ad * dz for z, dz in zip(zs, dzs)]
        if max(max_abs(x) for x in xs) > 1e12 * scale_a:
            status = "infeasible"
            break

    if status != "infeasible" and pres <= feas_tol and dres <= 10 * feas_tol \
            and relgap <= gap_tol:
        status = "optimal"
    pobj = sum(np.tensordot(c, x) for c, x in zip(cs, xs))
    dobj = float(b @ y)
    return SdpSolution(
        primal_blocks=[derealify(x) for x in xs],
        dual_vector=2 * y,
        primal_value=float(pobj),
        dual_value=dobj,
        gap=abs(pobj - dobj),
        status=status,
        iterations=it,
        primal_residual=pres,
        dual_residual=dres,
    )


# ---------------------------------------------------------------------------
# Hermitian operator basis


def hermitian_basis(n: int) -> list[np.ndarray]:
    """Orthonormal basis of n x n Hermitian matrices (n^2 elements)."""
    basis = []
    for a in range(n):
        e = np.zeros((n, n), dtype=complex)
        e[a, a] = 1.0
        basis.append(e)
    for a in range(n):
        for c in range(a + 1, n):
            e = np.zeros((n, n), dtype=complex)
            e[a, c] = e[c, a] = 1 / np.sqrt(2)
            basis.append(e)
            e = np.zeros((n, n), dtype=complex)
            e[a, c] = -1j / np.sqrt(2)
            e[c, a] = 1j / np.sqrt(2)
            basis.append(e)
    return basis


# ---------------------------------------------------------------------------
# Choi helpers


def choi_unitary(u: np.ndarray) -> np.ndarray:
    """Rank-one Choi matrix |U>><<U| with |U>> = row-major vec (output first)."""
    v = as_matrix(u).ravel()
    return np.outer(v, v.conj())


def process_chois(u0: np.ndarray, u1: np.ndarray, n: int) -> list[np.ndarray]:
    """Choi matrices of the N+1 hypothesis processes.

    Process m applies U1 to segments k > m and U0 to segments k <= m; tensor
    factors are ordered (W_N V_N ... W_1 V_1), segment N first.
    """
    c0, c1 = choi_unitary(u0), choi_unitary(u1)
    return [
        kron_all([c1 if k > mm else c0 for k in range(n, 0, -1)])
        for mm in range(n + 1)
    ]


def interleave_tester(povm_el: np.ndarray, rho: np.ndarray, d: int, n: int):
    """Tester element for a nonadaptive strategy: state rho on (V_N..V_1),
    measurement element on (W_N..W_1); returns the operator on the
    process ordering (W_N V_N ... W_1 V_1), transposed on the input slots."""
    from .linalg import permute_systems

    op = np.kron(povm_el, rho.T)
    # source order W_N..W_1, V_N..V_1 -> interleaved
    perm = []
    for k in range(n):
        perm.extend([k, n + k])
    return permute_systems(op, (d,) * (2 * n), perm)


# ---------------------------------------------------------------------------
# problem builders


def min_error_discrimination(gram, priors) -> float:
    """Maximum success probability for discriminating pure states.

    Solved in the span of the states: the Gram matrix is factored as F^dag F
    and a POVM over the rank-r coordinate space is optimized.
    """
    gram = as_matrix(gram)
    priors = np.asarray(priors, dtype=float)
    n = gram.shape[0]
    if len(priors) != n or np.any(priors < -1e-12) or abs(priors.sum() - 1) > 1e-9:
        raise SdpError("priors must form a distribution over the states")
    f, rank = gram_factor(gram)
    states = [f[:, j] for j in range(n)]
    basis = hermitian_basis(rank)
    objective = [priors[j] * np.outer(states[j], states[j].conj()) for j in range(n)]
    constraints = [[e.copy() for _ in range(n)] for e in basis]
    rhs = np.array([np.trace(e).real for e in basis])
    prob = SdpProblem([rank] * n, objective, constraints, rhs, name="min_error")
    sol = solve(prob)
    if sol.status != "optimal":
        raise SdpError(f"discrimination solve failed: status {sol.status}")
    return float(sol.primal_value)


def separable_baseline(gap: SpectralGap, n: int) -> float:
    """Best success probability with a separable (product) input state.

    Each use carries the single-step optimal probe, so consecutive
    hypothesis outputs overlap by c = (lambda0 + lambda1)/2 per differing
    segment; the resulting pure-state discrimination problem is solved with
    uniform priors.
    """
    if gap.gamma >= 1:
        raise SdpError("separable baseline requires gamma < 1")
    c = (gap.lambda0 + gap.lambda1) / 2
    idx = np.arange(n + 1)
    diff = idx[:, None] - idx[None, :]
    gram = np.where(diff >= 0, c ** np.abs(diff), np.conj(c) ** np.abs(diff))
    return min_error_discrimination(gram, np.full(n + 1, 1 / (n + 1)))


def dual_two_process(u0: np.ndarray, u1: np.ndarray):
    """Two-process dual: min eta s.t. Tr_W Y = eta I_V, Y >= Choi_b / 2.

    Entered through the solver's dual (LMI) side; returns (eta, Y) with Y
    on W (x) V ordering.  For a single evolution step the optimal value is
    (gamma + 1)/2.
    """
    u0, u1 = as_matrix(u0), as_matrix(u1)
    d = u0.shape[0]
    chois = [choi_unitary(u0) / 2, choi_unitary(u1) / 2]
    small = hermitian_basis(d)
    # Y = eta * (E0 x E0) + sum over (a != 0, b) of y_ab (E_a x E_b) keeps
    # Tr_W Y = eta I_V automatic; E0 = I/sqrt(d)
    e0 = np.eye(d) / np.sqrt(d)
    ys_ops = [np.kron(e0, e0)]
    for a in range(1, d * d):
        for bb in range(d * d):
            ys_ops.append(np.kron(small[a], small[bb]))
    constraints = [[op.copy(), op.copy()] for op in ys_ops]
    rhs = np.zeros(len(ys_ops))
    rhs[0] = 1.0
    prob = SdpProblem([d * d, d * d], chois, constraints, rhs, name="dual_two_process")
    sol = solve(prob)
    if sol.status != "optimal":
        raise SdpError(f"dual solve failed: status {sol.status}")
    yv = sol.dual_vector
    y_mat = sum(c * op for c, op in zip(yv, ys_ops))
    eta = float(yv[0])  # the E0 x E0 coefficient is eta itself
    return eta, y_mat


def build_tester_sdp(choi_list: list[np.ndarray], d: int) -> SdpProblem:
    """Full tester optimization for the N+1 hypothesis processes.

    Variables: tester elements tau'_m on (W_N V_N ... W_1 V_1) plus the
    normalization hierarchy tau^(t) on (V_t W_{t-1} ... V_1); objective
    (1/(N+1)) sum_m Tr[tau'_m^T Choi_m].  Exposed for qubit channels with
    N <= 2 only: the dimension grows exponentially with N.
    """
    n = round(np.log(choi_list[0].shape[0]) / np.log(d * d))
    if (d * d) ** n != choi_list[0].shape[0]:
        raise SdpError("choi dimensions inconsistent with channel dimension")
    if len(choi_list) != n + 1:
        raise SdpError("need N+1 process Choi matrices")
    if d != 2 or n > 2:
        need = (n + 1) * (d * d) ** n + sum(d ** (2 * t - 1) for t in range(1, n + 1))
        raise SdpError(
            f"tester SDP exposed only for qubits with N <= 2; this instance "
            f"needs total dimension {need}"
        )

    big = (d * d) ** n            # tau'_m blocks
    hier = [d ** (2 * t - 1) for t in range(1, n + 1)]  # tau^(t) blocks
    block_dims = [big] * (n + 1) + hier
    nb = len(block_dims)
    objective = [c.T.copy() / (n + 1) for c in choi_list]
    objective += [np.zeros((h, h), dtype=complex) for h in hier]

    constraints: list[list[np.ndarray | None]] = []
    rhs_list: list[float] = []

    def empty_row():
        return [None] * nb

    # sum_m tau'_m = I_{W_N} x tau^(N)
    shape_big = TensorShape((d,) * (2 * n))
    for e in hermitian_basis(big):
        row = empty_row()
        for mm in range(n + 1):
            row[mm] = e.copy()
        # Tr over W_N (the leading factor)
        row[n + 1 + (n - 1)] = -partial_trace(e, shape_big, keep=list(range(1, 2 * n)))
        constraints.append(row)
        rhs_list.append(0.0)

    # Tr_{V_t} tau^(t) = I_{W_{t-1}} x tau^(t-1) for t = 2..N
    for t in range(2, n + 1):
        shape_e = TensorShape((d,) * (2 * t - 2))
        for e in hermitian_basis(d ** (2 * t - 2)):
            # e lives on (W_{t-1} V_{t-1} ... V_1)
            row = empty_row()
            row[n + 1 + (t - 1)] = np.kron(np.eye(d), e)  # I_{V_t} x e
            row[n + 1 + (t - 2)] = -partial_trace(
                e, shape_e, keep=list(range(1, 2 * t - 2))
            )
            constraints.append(row)
            rhs_list.append(0.0)

    # Tr tau^(1) = 1
    row = empty_row()
    row[n + 1] = np.eye(d, dtype=complex)
    constraints.append(row)
    rhs_list.append(1.0)

    prob = SdpProblem(block_dims, objective, constraints,
                      np.array(rhs_list), name=f"tester_N{n}")
    return prob


def solve_tester(choi_list: list[np.ndarray], d: int) -> SdpSolution:
    return solve(build_tester_sdp(choi_list, d))
