"""Dense linear-algebra primitives.

Matrices are plain ``numpy.ndarray``s validated on entry (finite, 2-D).
Everything here is a pure function of its inputs; there is no shared state,
so concurrent callers are safe.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .exceptions import (
    DegenerateKernelError,
    InvalidInputError,
    NoKernelError,
)

_EPS = np.finfo(float).eps


def default_rel_tol(rows: int, cols: int) -> float:
    """Default relative rank tolerance: max(rows, cols) * eps * 64."""
    return max(rows, cols) * _EPS * 64.0


def as_matrix(m, name: str = "matrix") -> np.ndarray:
    """Validate and return a 2-D array with finite entries."""
    a = np.asarray(m)
    if a.ndim != 2:
        raise InvalidInputError(f"{name} must be 2-D, got shape {a.shape}")
    if a.size and not np.all(np.isfinite(a)):
        raise InvalidInputError(f"{name} contains non-finite entries")
    return a


@dataclass(frozen=True)
class EigenPair:
    """An eigenvalue with a unit-norm left eigenvector (w^T A = value * w^T)."""

    value: complex
    left_vector: np.ndarray


def hankel_from_differences(seq) -> np.ndarray:
    """Build the (m+1) x (m+1) Hankel matrix from 2m+1 successive differences.

    Entry (i, j) is seq[i + j]; anti-diagonals are constant by construction.
    """
    s = np.asarray(seq)
    if s.ndim != 1 or len(s) < 1 or len(s) % 2 == 0:
        raise InvalidInputError(
            f"difference sequence must have odd length >= 1, got {s.shape}"
        )
    if not np.all(np.isfinite(s)):
        raise InvalidInputError("difference sequence contains non-finite entries")
    m = (len(s) - 1) // 2
    idx = np.arange(m + 1)
    return s[idx[:, None] + idx[None, :]]


def numerical_rank(m, rel_tol: float | None = None) -> int:
    """Number of singular values above rel_tol times the largest one."""
    a = as_matrix(m)
    if a.size == 0:
        return 0
    if rel_tol is None:
        rel_tol = default_rel_tol(*a.shape)
    if rel_tol <= 0:
        raise InvalidInputError("rel_tol must be positive")
    sv = np.linalg.svd(a, compute_uv=False)
    if sv[0] == 0:
        return 0
    return int(np.sum(sv > rel_tol * sv[0]))


def _smallest_right_singular_vector(a: np.ndarray) -> np.ndarray:
    _, _, vt = np.linalg.svd(a)
    return vt[-1]


def common_kernel_vector(stack, rel_tol: float | None = None) -> np.ndarray:
    """Kernel vector shared by all row blocks of a (possibly tall) stack.

    Returns beta with ``stack @ beta ~ 0`` normalized so beta[-1] == 1.
    The extraction uses the right singular vector of the smallest singular
    value, which stays well-behaved on nearly singular Hankel stacks.
    """
    a = as_matrix(stack, "stack")
    cols = a.shape[1]
    if rel_tol is None:
        rel_tol = default_rel_tol(*a.shape)
    sv = np.linalg.svd(a, compute_uv=False)
    if sv[0] == 0:
        beta = np.zeros(cols)
        beta[-1] = 1.0
        return beta
    rank = int(np.sum(sv > rel_tol * sv[0]))
    if rank == cols:
        raise NoKernelError(
            f"matrix is full rank at rel_tol={rel_tol:g} "
            f"(smallest/largest singular value = {sv[-1] / sv[0]:.3e})"
        )
    beta = _smallest_right_singular_vector(a)
    scale_floor = np.sqrt(_EPS) / np.sqrt(cols)
    if abs(beta[-1]) < scale_floor:
        raise DegenerateKernelError(
            f"kernel vector has vanishing last entry ({beta[-1]:.3e})"
        )
    return beta / beta[-1]


def kernel_vector(m, rel_tol: float | None = None) -> np.ndarray:
    """Kernel vector of a square rank-deficient matrix, last entry 1."""
    a = as_matrix(m)
    if a.shape[0] != a.shape[1]:
        raise InvalidInputError(f"kernel_vector expects a square matrix, got {a.shape}")
    return common_kernel_vector(a, rel_tol)


def _eigen_sort_key(value: complex):
    return (-abs(value), -value.real, -value.imag)


def eigen_left(a) -> list[EigenPair]:
    """All eigenvalues of A with unit-norm left eigenvectors.

    Ordering is deterministic: modulus descending, then real part, then
    imaginary part descending, so conjugate pairs sit adjacently with the
    positive-imaginary member first.  For real input, conjugate pairs are
    returned as exact conjugates of each other.
    """
    m = as_matrix(a)
    if m.shape[0] != m.shape[1]:
        raise InvalidInputError(f"eigen_left expects a square matrix, got {m.shape}")
    # w^T A = lam w^T  <=>  A^T w = lam w
    values, vectors = np.linalg.eig(m.T.astype(complex))
    pairs = []
    for k in range(len(values)):
        v = vectors[:, k]
        v = v / np.linalg.norm(v)
        # canonical phase: first significant entry real positive
        nz = np.flatnonzero(np.abs(v) > 1e-12)
        if len(nz):
            v = v * (np.conj(v[nz[0]]) / abs(v[nz[0]]))
        pairs.append(EigenPair(complex(values[k]), v))
    pairs.sort(key=lambda p: _eigen_sort_key(p.value))
    if np.isrealobj(np.asarray(a)):
        pairs = _conjugate_canonicalize(pairs)
    return pairs


def _conjugate_canonicalize(pairs: list[EigenPair]) -> list[EigenPair]:
    """Force complex eigenpairs of a real matrix into exact conjugate twins."""
    out: list[EigenPair] = []
    used = [False] * len(pairs)
    for i, p in enumerate(pairs):
        if used[i]:
            continue
        used[i] = True
        if abs(p.value.imag) < 1e-12 * max(1.0, abs(p.value)):
            v = p.left_vector
            if np.max(np.abs(v.imag)) < 1e-10:
                v = v.real / np.linalg.norm(v.real)
            out.append(EigenPair(complex(p.value.real), v))
            continue
        mate = None
        for j in range(i + 1, len(pairs)):
            if used[j]:
                continue
            if abs(pairs[j].value - np.conj(p.value)) < 1e-8 * max(1.0, abs(p.value)):
                mate = j
                break
        plus = p if p.value.imag > 0 else pairs[mate] if mate is not None else p
        out.append(plus)
        out.append(EigenPair(np.conj(plus.value), np.conj(plus.left_vector)))
        if mate is not None:
            used[mate] = True
    return out


def eigenvalues(a) -> np.ndarray:
    """Eigenvalues only, in the deterministic eigen_left order."""
    return np.array([p.value for p in eigen_left(a)])


def is_schur_stable(a, margin: float = 0.0) -> bool:
    """True iff every eigenvalue modulus is < 1 - margin."""
    m = as_matrix(a)
    if m.shape[0] != m.shape[1]:
        raise InvalidInputError("is_schur_stable expects a square matrix")
    if margin < 0:
        raise InvalidInputError("margin must be >= 0")
    if m.size == 0:
        return True
    return bool(np.max(np.abs(np.linalg.eigvals(m))) < 1.0 - margin)


def controllability_matrix(a, b) -> np.ndarray:
    """Kalman controllability matrix [B, AB, ..., A^(n-1) B]."""
    am = as_matrix(a, "A")
    bm = as_matrix(b, "B")
    if am.shape[0] != am.shape[1] or bm.shape[0] != am.shape[0]:
        raise InvalidInputError(
            f"incompatible shapes for controllability matrix: {am.shape}, {bm.shape}"
        )
    blocks = [bm]
    for _ in range(am.shape[0] - 1):
        blocks.append(am @ blocks[-1])
    return np.hstack(blocks)


def pbh_controllable(a, b, lam: complex, rel_tol: float | None = None) -> bool:
    """Popov-Belevitch-Hautus test: rank [A - lam I | B] == n."""
    am = as_matrix(a, "A")
    bm = as_matrix(b, "B")
    n = am.shape[0]
    pencil = np.hstack([am.astype(complex) - lam * np.eye(n), bm.astype(complex)])
    return numerical_rank(pencil, rel_tol) == n
