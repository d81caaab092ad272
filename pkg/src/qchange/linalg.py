"""Dense complex linear algebra kernel.

Eigendecomposition of normal matrices, Kronecker products, partial traces,
matrix exponentials of Hermitian generators, PSD checks and Gram
factorizations.  Everything operates on plain numpy complex arrays; sizes up
to a few hundred are the design point.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

UNITARY_TOL = 1e-10
HERMITIAN_TOL = 1e-12
NORMAL_TOL = 1e-10


class LinalgError(ValueError):
    """Raised when a matrix fails a structural precondition."""


def as_matrix(a) -> np.ndarray:
    m = np.asarray(a, dtype=complex)
    if m.ndim != 2:
        raise LinalgError(f"expected a 2-d array, got shape {m.shape}")
    return m


def max_abs(a) -> float:
    a = np.asarray(a)
    return float(np.max(np.abs(a))) if a.size else 0.0


def is_hermitian(m: np.ndarray, tol: float = HERMITIAN_TOL) -> bool:
    return max_abs(m - m.conj().T) <= tol


def is_unitary(m: np.ndarray, tol: float = UNITARY_TOL) -> bool:
    if m.shape[0] != m.shape[1]:
        return False
    return max_abs(m.conj().T @ m - np.eye(m.shape[0])) <= tol


def normality_residual(m: np.ndarray) -> float:
    return max_abs(m @ m.conj().T - m.conj().T @ m)


@dataclass(frozen=True)
class TensorShape:
    """Ordered subsystem dimensions of a tensor-product space."""

    factor_dims: tuple[int, ...]

    def __post_init__(self):
        if any(d < 1 for d in self.factor_dims):
            raise LinalgError(f"factor dims must be >= 1, got {self.factor_dims}")

    @property
    def total_dim(self) -> int:
        return int(np.prod(self.factor_dims))

    def check(self, m: np.ndarray) -> None:
        n = self.total_dim
        if m.shape != (n, n):
            raise LinalgError(
                f"matrix shape {m.shape} inconsistent with factor dims "
                f"{self.factor_dims} (product {n})"
            )


def eig_normal(m, tol: float = NORMAL_TOL, cluster_tol: float = 1e-8):
    """Eigendecomposition of a normal matrix with orthonormal eigenvectors.

    Decomposes via the commuting Hermitian pair (M + M†)/2 and (M - M†)/(2i):
    the first is diagonalized with eigh, degenerate eigenspaces are resolved
    by diagonalizing the second restricted to each eigenspace.  Exact for
    normal inputs, so eigenvectors come out orthonormal even for repeated
    eigenvalues (numpy's general eig does not guarantee that).

    Returns (eigenvalues, eigenvectors) with eigenvectors as columns.
    """
    m = as_matrix(m)
    res = normality_residual(m)
    if res > tol:
        raise LinalgError(f"matrix is not normal: residual {res:.3e} > {tol:.1e}")
    re = (m + m.conj().T) / 2
    im = (m - m.conj().T) / (2j)
    w_re, v = np.linalg.eigh(re)
    scale = max(max_abs(w_re), 1.0)
    vecs = np.empty_like(v)
    vals = np.empty(m.shape[0], dtype=complex)
    i = 0
    n = m.shape[0]
    while i < n:
        j = i + 1
        while j < n and w_re[j] - w_re[j - 1] <= cluster_tol * scale:
            j += 1
        block = v[:, i:j]
        if j - i > 1:
            sub = block.conj().T @ im @ block
            _, u = np.linalg.eigh((sub + sub.conj().T) / 2)
            block = block @ u
        vecs[:, i:j] = block
        for k in range(i, j):
            vals[k] = vecs[:, k].conj() @ m @ vecs[:, k]
        i = j
    return vals, vecs


def kron(a, b) -> np.ndarray:
    return np.kron(as_matrix(a), as_matrix(b))


def kron_all(mats) -> np.ndarray:
    out = np.eye(1, dtype=complex)
    for m in mats:
        out = np.kron(out, as_matrix(m))
    return out


def partial_trace(m, shape: TensorShape, keep) -> np.ndarray:
    """Trace out all subsystems not listed in `keep` (order preserved)."""
    m = as_matrix(m)
    shape.check(m)
    dims = shape.factor_dims
    nsys = len(dims)
    keep = sorted(set(int(k) for k in keep))
    if any(k < 0 or k >= nsys for k in keep):
        raise LinalgError(f"keep indices {keep} out of range for {nsys} subsystems")
    t = m.reshape(dims + dims)
    traced = [k for k in range(nsys) if k not in keep]
    for off, k in enumerate(traced):
        ax = k - off
        t = np.trace(t, axis1=ax, axis2=ax + t.ndim // 2)
    d_keep = int(np.prod([dims[k] for k in keep])) if keep else 1
    return t.reshape(d_keep, d_keep)


def permute_systems(m, dims, perm) -> np.ndarray:
    """Reorder tensor factors of an operator: new slot p holds old factor perm[p]."""
    m = as_matrix(m)
    dims = tuple(int(d) for d in dims)
    n = len(dims)
    if sorted(perm) != list(range(n)):
        raise LinalgError(f"perm {perm} is not a permutation of {n} factors")
    TensorShape(dims).check(m)
    t = m.reshape(dims + dims)
    axes = list(perm) + [p + n for p in perm]
    new_dim = int(np.prod(dims))
    return t.transpose(axes).reshape(new_dim, new_dim)


def expm_skew(h, dt: float) -> np.ndarray:
    """exp(-i H dt) for Hermitian H, via eigendecomposition."""
    h = as_matrix(h)
    if not is_hermitian(h, tol=1e-10):
        raise LinalgError(
            f"generator is not Hermitian: residual {max_abs(h - h.conj().T):.3e}"
        )
    w, v = np.linalg.eigh((h + h.conj().T) / 2)
    return (v * np.exp(-1j * w * dt)) @ v.conj().T


def psd_check(m, tol: float = 0.0):
    """Return (is_psd, min_eigenvalue) for a Hermitian matrix."""
    m = as_matrix(m)
    if not is_hermitian(m, tol=1e-9):
        raise LinalgError("psd_check requires a Hermitian matrix")
    w = np.linalg.eigvalsh((m + m.conj().T) / 2)
    lo = float(w[0])
    return lo >= -tol, lo


def gram_factor(g, rank_tol: float = 1e-10):
    """Factor a PSD Gram matrix G as F†F with F of shape (rank, n).

    Column j of F is a coordinate vector for the j-th state; eigenvalues
    below rank_tol are dropped.
    """
    g = as_matrix(g)
    if not is_hermitian(g, tol=1e-9):
        raise LinalgError("Gram matrix must be Hermitian")
    w, v = np.linalg.eigh((g + g.conj().T) / 2)
    if w[0] < -max(rank_tol, 1e-9):
        raise LinalgError(f"Gram matrix is not PSD: min eigenvalue {w[0]:.3e}")
    mask = w > rank_tol
    f = (np.sqrt(np.maximum(w[mask], 0.0))[:, None] * v[:, mask].conj().T)
    return f, int(np.count_nonzero(mask))


def haar_unitary(dim: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-random unitary via QR of a Ginibre matrix."""
    z = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    q, r = np.linalg.qr(z)
    return q * (np.diag(r) / np.abs(np.diag(r)))


def matrix_to_json(m) -> dict:
    m = as_matrix(m)
    data = [[float(z.real), float(z.imag)] for z in m.ravel()]
    return {"rows": int(m.shape[0]), "cols": int(m.shape[1]), "data": data}


def matrix_from_json(obj) -> np.ndarray:
    try:
        rows, cols, data = int(obj["rows"]), int(obj["cols"]), obj["data"]
    except (KeyError, TypeError) as exc:
        raise LinalgError(f"malformed matrix object: {exc}") from exc
    if len(data) != rows * cols:
        raise LinalgError(
            f"matrix data length {len(data)} != rows*cols = {rows * cols}"
        )
    flat = np.array([complex(re, im) for re, im in data])
    if not np.all(np.isfinite(flat.real)) or not np.all(np.isfinite(flat.imag)):
        raise LinalgError("matrix entries must be finite")
    return flat.reshape(rows, cols)
