"""Hankel matrices, persistence of excitation, and trajectory reconstruction.

A signal is a (T, p) array: one row per time step, p coordinates per sample.
The order-L Hankel matrix of a signal stacks the L-step sliding windows as
columns, giving a pL x (T - L + 1) matrix.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .blockops import matrix_rank, rank_tolerance

__all__ = [
    "build_hankel",
    "first_block_row",
    "PeReport",
    "is_pe",
    "stacked_rank",
    "reconstruct",
    "NotPersistentlyExciting",
]


class NotPersistentlyExciting(RuntimeError):
    """Raised when data lacks the rank needed for reconstruction/synthesis."""


def _as_signal(sig, name: str = "signal") -> np.ndarray:
    s = np.asarray(sig, dtype=float)
    if s.ndim == 1:
        s = s[:, None]
    if s.ndim != 2:
        raise ValueError(f"{name} must be (T, p), got shape {s.shape}")
    return s


def build_hankel(signal: np.ndarray, L: int) -> np.ndarray:
    """Order-L block Hankel matrix of a (T, p) signal.

    Column t is the stacked window signal[t : t + L].  Raises ValueError
    when L exceeds the signal horizon.
    """
    s = _as_signal(signal)
    T, p = s.shape
    if L < 1:
        raise ValueError("L must be >= 1")
    if L > T:
        raise ValueError(f"Hankel order {L} exceeds signal horizon {T}")
    cols = T - L + 1
    H = np.empty((p * L, cols))
    for i in range(L):
        H[i * p : (i + 1) * p, :] = s[i : i + cols].T
    return H


def first_block_row(signal: np.ndarray, L: int) -> np.ndarray:
    """Order-1 Hankel truncated to T - L + 1 columns.

    Matches the top block row of the order-L Hankel so that identity
    constraints on it align column-for-column with the order-L matrix.
    """
    s = _as_signal(signal)
    T = s.shape[0]
    if L < 1 or L > T:
        raise ValueError("L must satisfy 1 <= L <= T")
    return s[: T - L + 1].T.copy()


@dataclass(frozen=True)
class PeReport:
    """Rank report for a persistence-of-excitation check."""

    excited: bool
    rank: int
    required_rank: int
    horizon_feasible: bool

    def __bool__(self) -> bool:
        return self.excited


def is_pe(signal: np.ndarray, order: int) -> PeReport:
    """Check persistence of excitation of the given order.

    The signal is PE of order ``order`` when its order-``order`` Hankel
    matrix has full row rank p * order.  A horizon shorter than
    (p + 1) * order - 1 cannot satisfy this; such inputs are reported with
    ``horizon_feasible=False`` rather than raising.
    """
    s = _as_signal(signal)
    T, p = s.shape
    required = p * order
    if order < 1:
        raise ValueError("order must be >= 1")
    if T < (p + 1) * order - 1 or order > T:
        rank = matrix_rank(build_hankel(s, order)) if order <= T else 0
        return PeReport(excited=False, rank=rank, required_rank=required, horizon_feasible=False)
    rank = matrix_rank(build_hankel(s, order))
    return PeReport(excited=(rank == required), rank=rank, required_rank=required, horizon_feasible=True)


def stacked_rank(x: np.ndarray, u: np.ndarray, L: int) -> tuple[int, bool]:
    """Rank of the stacked [first_block_row(x); build_hankel(u, L)] matrix.

    Full rank n + mL is the operative richness condition for reconstructing
    arbitrary initial states and input sequences from the data.
    """
    xs = _as_signal(x, "x")
    us = _as_signal(u, "u")
    if xs.shape[0] != us.shape[0]:
        raise ValueError("x and u must share the same horizon")
    stack = np.vstack([first_block_row(xs, L), build_hankel(us, L)])
    r = matrix_rank(stack)
    return r, r == xs.shape[1] + us.shape[1] * L


def reconstruct(
    x0: np.ndarray,
    u_target: np.ndarray,
    x_data: np.ndarray,
    u_data: np.ndarray,
    L: int,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Reconstruct the L-step trajectory from data that starts at ``x0``
    under the input sequence ``u_target``.

    Solves the minimum-norm g with [H_1(x); H_L(u)] g = [x0; vec(u_target)]
    and returns (g, x_traj, u_traj) where the trajectories are read off the
    order-L Hankel matrices of the data.  Requires the stacked data matrix
    to have full rank.
    """
    xs = _as_signal(x_data, "x_data")
    us = _as_signal(u_data, "u_data")
    n, m = xs.shape[1], us.shape[1]
    u_target = np.asarray(u_target, dtype=float).reshape(L, m)
    x0 = np.asarray(x0, dtype=float).reshape(n)

    stack = np.vstack([first_block_row(xs, L), build_hankel(us, L)])
    sv = np.linalg.svd(stack, compute_uv=False)
    full = int(np.sum(sv > rank_tolerance(sv, stack.shape))) == n + m * L
    if not full:
        raise NotPersistentlyExciting(
            f"stacked data matrix has rank {matrix_rank(stack)} < {n + m * L}; "
            "data is not persistently exciting"
        )
    rhs = np.concatenate([x0, u_target.reshape(-1)])
    g = np.linalg.pinv(stack) @ rhs
    x_traj = (build_hankel(xs, L) @ g).reshape(L, n)
    u_traj = (build_hankel(us, L) @ g).reshape(L, m)
    return g, x_traj, u_traj
