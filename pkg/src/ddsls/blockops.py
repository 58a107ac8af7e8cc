"""Dense block-matrix operators shared by every other module.

All matrices are plain float64 ``numpy`` arrays in row-major order.  The
horizons handled here are small (a few hundred rows at most), so everything
is built densely and norms/ranks are always computed through the SVD, which
keeps rank decisions reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "block_downshift",
    "z_stack",
    "obs_stack",
    "toeplitz_stack",
    "spectral_norm",
    "matrix_rank",
    "rank_tolerance",
    "psd_sqrt",
    "LtvOperator",
    "CostWeights",
]


def as_matrix(a, name: str = "matrix") -> np.ndarray:
    """Coerce to a 2-D float64 array and require finite entries."""
    m = np.asarray(a, dtype=float)
    if m.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise ValueError(f"{name} contains non-finite entries")
    return m


def block_downshift(L: int, n: int) -> np.ndarray:
    """Block-downshift operator: identities on the first block subdiagonal.

    The result is nL x nL, nilpotent of index L (its L-th power vanishes).
    """
    if L < 1 or n < 1:
        raise ValueError("L and n must be >= 1")
    Z = np.zeros((n * L, n * L))
    for i in range(1, L):
        Z[i * n : (i + 1) * n, (i - 1) * n : i * n] = np.eye(n)
    return Z


def z_stack(L: int, n: int) -> np.ndarray:
    """Horizontal stack [I  Z  Z^2 ... Z^(L-1)] of downshift powers.

    Shape nL x (nL*L).  Its spectral norm is at most sqrt(L).
    """
    if L < 1 or n < 1:
        raise ValueError("L and n must be >= 1")
    Z = block_downshift(L, n)
    blocks = [np.eye(n * L)]
    for _ in range(L - 1):
        blocks.append(Z @ blocks[-1])
    return np.hstack(blocks)


def obs_stack(A: np.ndarray, L: int) -> np.ndarray:
    """Vertical stack [I; A; A^2; ...; A^(L-1)] of powers of a square matrix."""
    A = as_matrix(A, "A")
    n = A.shape[0]
    if A.shape != (n, n):
        raise ValueError("A must be square")
    if L < 1:
        raise ValueError("L must be >= 1")
    rows = [np.eye(n)]
    for _ in range(L - 1):
        rows.append(A @ rows[-1])
    return np.vstack(rows)


def toeplitz_stack(A: np.ndarray, X: np.ndarray, L: int) -> np.ndarray:
    """Strictly-lower block Toeplitz with block (i, j) = A^(i-j-1) X for i > j.

    A is n x n and X is n x q; the result is nL x qL with zero blocks on and
    above the diagonal.
    """
    A = as_matrix(A, "A")
    X = as_matrix(X, "X")
    n = A.shape[0]
    if A.shape != (n, n) or X.shape[0] != n:
        raise ValueError("A must be square and X must have matching row count")
    if L < 1:
        raise ValueError("L must be >= 1")
    q = X.shape[1]
    out = np.zeros((n * L, q * L))
    # A^d X for d = 0..L-2; diagonal offset i-j determines the power.
    power = X.copy()
    for d in range(L - 1):
        for j in range(L - 1 - d):
            i = j + d + 1
            out[i * n : (i + 1) * n, j * q : (j + 1) * q] = power
        power = A @ power
    return out


def spectral_norm(M: np.ndarray) -> float:
    """Largest singular value.  Accepts stacked inputs (..., m, n)."""
    M = np.asarray(M, dtype=float)
    if M.size == 0:
        return 0.0
    s = np.linalg.svd(M, compute_uv=False)
    return float(s[..., 0]) if M.ndim == 2 else s[..., 0]


def rank_tolerance(singular_values: np.ndarray, shape: tuple[int, int]) -> float:
    """Relative rank threshold max(rows, cols) * eps * sigma_max."""
    if len(singular_values) == 0:
        return 0.0
    return max(shape) * np.finfo(float).eps * float(singular_values[0])


def matrix_rank(M: np.ndarray) -> int:
    """Numerical rank under the shared relative SVD threshold."""
    M = as_matrix(M, "M")
    if M.size == 0:
        return 0
    s = np.linalg.svd(M, compute_uv=False)
    return int(np.sum(s > rank_tolerance(s, M.shape)))


def psd_sqrt(M: np.ndarray, name: str = "matrix") -> np.ndarray:
    """Symmetric PSD square root via eigendecomposition."""
    M = as_matrix(M, name)
    if not np.allclose(M, M.T, atol=1e-12, rtol=0.0):
        raise ValueError(f"{name} must be symmetric to 1e-12")
    vals, vecs = np.linalg.eigh(M)
    if vals.min(initial=0.0) < -1e-10 * max(1.0, abs(vals).max(initial=0.0)):
        raise ValueError(f"{name} must be positive semidefinite")
    return (vecs * np.sqrt(np.clip(vals, 0.0, None))) @ vecs.T


@dataclass(frozen=True)
class LtvOperator:
    """Causal linear operator over a finite horizon, stored densely.

    The dense matrix is pL x qL, partitioned into L x L blocks of size
    p x q.  Causal operators have zero blocks above the diagonal; strictly
    causal ones are zero on the diagonal as well.
    """

    horizon: int
    block_rows: int
    block_cols: int
    dense: np.ndarray

    def __post_init__(self):
        d = as_matrix(self.dense, "dense")
        expected = (self.block_rows * self.horizon, self.block_cols * self.horizon)
        if d.shape != expected:
            raise ValueError(f"dense has shape {d.shape}, expected {expected}")
        object.__setattr__(self, "dense", d)

    @classmethod
    def from_dense(cls, dense: np.ndarray, horizon: int, block_rows: int, block_cols: int) -> "LtvOperator":
        return cls(horizon=horizon, block_rows=block_rows, block_cols=block_cols, dense=dense)

    @classmethod
    def from_block_diagonal(cls, blocks: list[np.ndarray]) -> "LtvOperator":
        """Block-diagonal operator from per-step gains (time-varying static map)."""
        L = len(blocks)
        p, q = as_matrix(blocks[0], "block").shape
        dense = np.zeros((p * L, q * L))
        for t, blk in enumerate(blocks):
            dense[t * p : (t + 1) * p, t * q : (t + 1) * q] = blk
        return cls(horizon=L, block_rows=p, block_cols=q, dense=dense)

    @classmethod
    def identity(cls, horizon: int, n: int) -> "LtvOperator":
        return cls(horizon=horizon, block_rows=n, block_cols=n, dense=np.eye(n * horizon))

    def block(self, i: int, j: int) -> np.ndarray:
        p, q = self.block_rows, self.block_cols
        return self.dense[i * p : (i + 1) * p, j * q : (j + 1) * q]

    def is_causal(self, tol: float = 0.0) -> bool:
        p, q = self.block_rows, self.block_cols
        for i in range(self.horizon):
            for j in range(i + 1, self.horizon):
                if np.abs(self.block(i, j)).max(initial=0.0) > tol:
                    return False
        return True

    def is_strictly_causal(self, tol: float = 0.0) -> bool:
        if not self.is_causal(tol):
            return False
        return all(np.abs(self.block(i, i)).max(initial=0.0) <= tol for i in range(self.horizon))


@dataclass(frozen=True)
class CostWeights:
    """Quadratic state/input weights lifted over a horizon.

    The lifted state weight repeats ``q_state`` on the block diagonal with
    ``q_terminal`` installed in the last block; the lifted input weight
    repeats ``r_input`` on every block.
    """

    q_state: np.ndarray
    r_input: np.ndarray
    q_terminal: np.ndarray
    horizon: int
    lifted_q: np.ndarray = field(init=False, repr=False)
    lifted_r: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        Q = as_matrix(self.q_state, "q_state")
        R = as_matrix(self.r_input, "r_input")
        QF = as_matrix(self.q_terminal, "q_terminal")
        for name, M in (("q_state", Q), ("r_input", R), ("q_terminal", QF)):
            if M.shape[0] != M.shape[1]:
                raise ValueError(f"{name} must be square")
            if not np.allclose(M, M.T, atol=1e-12, rtol=0.0):
                raise ValueError(f"{name} must be symmetric to 1e-12")
        if QF.shape != Q.shape:
            raise ValueError("q_terminal must match q_state in shape")
        if np.linalg.eigvalsh(R).min() <= 0.0:
            raise ValueError("r_input must be positive definite")
        if np.linalg.eigvalsh(Q).min() < -1e-10:
            raise ValueError("q_state must be positive semidefinite")
        if np.linalg.eigvalsh(QF).min() < -1e-10:
            raise ValueError("q_terminal must be positive semidefinite")
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        object.__setattr__(self, "q_state", Q)
        object.__setattr__(self, "r_input", R)
        object.__setattr__(self, "q_terminal", QF)
        L, n, m = self.horizon, Q.shape[0], R.shape[0]
        lifted_q = np.kron(np.eye(L), Q)
        lifted_q[(L - 1) * n :, (L - 1) * n :] = QF
        object.__setattr__(self, "lifted_q", lifted_q)
        object.__setattr__(self, "lifted_r", np.kron(np.eye(L), R))

    @classmethod
    def uniform(cls, q_state, r_input, horizon: int) -> "CostWeights":
        """No distinguished terminal weight: last state block equals q_state."""
        return cls(q_state=q_state, r_input=r_input, q_terminal=q_state, horizon=horizon)

    @property
    def state_dim(self) -> int:
        return self.q_state.shape[0]

    @property
    def input_dim(self) -> int:
        return self.r_input.shape[0]

    def weight_sqrt(self) -> np.ndarray:
        """blkdiag of the PSD square roots of the lifted state/input weights."""
        L, n, m = self.horizon, self.state_dim, self.input_dim
        qh = psd_sqrt(self.q_state, "q_state")
        rh = psd_sqrt(self.r_input, "r_input")
        qfh = psd_sqrt(self.q_terminal, "q_terminal")
        W = np.zeros(((n + m) * L, (n + m) * L))
        W[: n * L, : n * L] = np.kron(np.eye(L), qh)
        W[(L - 1) * n : n * L, (L - 1) * n : n * L] = qfh
        W[n * L :, n * L :] = np.kron(np.eye(L), rh)
        return W
