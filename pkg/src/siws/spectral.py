"""Perron roots and reproduction numbers of nonnegative / Metzler matrices."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _kernels
from .model import FullSystem


class ConvergenceError(RuntimeError):
    """An iterative solver hit its iteration cap."""


@dataclass(frozen=True)
class PerronData:
    rho: float
    right: np.ndarray
    left: np.ndarray
    iterations: int
    residual: float


def _iteration_cap(N: int) -> int:
    return int(100 * N * math.log(max(N, 2))) + 1000


def _perron(M: np.ndarray, tol: float, maxit: int):
    # the kernel adapts the shift downward from half the max row sum
    shift = 0.5 * float(np.max(M.sum(axis=1))) if M.size else 0.0
    out = _kernels.power_iteration(np.ascontiguousarray(M), shift, tol, maxit)
    if out[4]:
        return out
    # the polish gets a budget of a tenth of the cap, at most 30 solves
    return _inverse_polish(M, out, tol, min(30, maxit // 10))


def _inverse_polish(M: np.ndarray, start, tol: float, rounds: int):
    """Inverse iteration at a shift just above the power-iteration estimate.

    Used when a small spectral gap stalls the power iteration; the estimate
    is then already close enough for ``(M - sigma I)^{-1}`` to single out
    the Perron root within a few solves.
    """
    rho, v, it, res, _ = start
    N = M.shape[0]
    v = np.abs(v)
    eye = np.eye(N)
    for k in range(1, rounds + 1):
        sigma = rho + max(10.0 * res, 1e-10 * max(1.0, abs(rho)))
        try:
            y = np.linalg.solve(M - sigma * eye, v)
        except np.linalg.LinAlgError:
            res *= 2.0
            continue
        total = y.sum()
        if total == 0 or not np.all(np.isfinite(y)):
            break
        v = y / total
        Mv = M @ v
        rho = float(Mv.sum())
        res = float(np.max(np.abs(Mv - rho * v)))
        if res <= tol and np.all(v >= -tol):
            return rho, np.maximum(v, 0.0), it + k, res, True
    return rho, v, it + rounds, res, False


def spectral_radius(M, tol: float = 1e-12, maxit: int | None = None, left: bool = True) -> PerronData:
    """Spectral radius of a square nonnegative matrix by power iteration.

    Parameters
    ----------
    M : (N, N) array_like
        Nonnegative matrix.  Irreducibility is needed for the returned
        vectors to be strictly positive, not for the iteration itself.
    tol : float
        Bound on ``max|M v - rho v|`` (scaled by ``max(1, rho)``).
    maxit : int, optional
        Iteration cap; defaults to ``100 N log N + 1000``.
    left : bool
        Also compute the left Perron vector (power iteration on ``M.T``).

    Raises
    ------
    ValueError
        For negative entries or a non-square input.
    ConvergenceError
        If the residual does not reach ``tol`` within ``maxit`` iterations.
    """
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {M.shape}")
    if np.any(M < 0):
        raise ValueError("spectral_radius requires a nonnegative matrix")
    N = M.shape[0]
    cap = maxit if maxit is not None else _iteration_cap(N)
    scale = max(1.0, float(np.max(M.sum(axis=1))))
    rho, right, it, res, ok = _perron(M, tol * scale, cap)
    if not ok:
        raise ConvergenceError(f"power iteration did not converge in {cap} iterations (residual {res:.3e})")
    lvec = np.full(N, np.nan)
    if left:
        _, lvec, it2, res2, ok2 = _perron(np.ascontiguousarray(M.T), tol * scale, cap)
        if not ok2:
            raise ConvergenceError(f"left power iteration did not converge in {cap} iterations (residual {res2:.3e})")
        it += it2
    return PerronData(rho=float(rho), right=right, left=lvec, iterations=int(it), residual=float(res))


def perron_root(M, tol: float = 1e-12) -> float:
    return spectral_radius(M, tol=tol, left=False).rho


def metzler_s1(A, tol: float = 1e-12) -> float:
    """Largest real eigenvalue part of a Metzler matrix (off-diagonal >= 0).

    ``A + c I`` is nonnegative for ``c = max(-diag(A), 0)`` and shares the
    Perron eigenvector, so ``s1(A) = rho(A + cI) - c``.
    """
    A = np.asarray(A, dtype=float)
    off = A - np.diag(np.diag(A))
    if np.any(off < 0):
        raise ValueError("matrix has negative off-diagonal entries; not Metzler")
    c = max(0.0, float(-np.min(np.diag(A))))
    return perron_root(A + c * np.eye(A.shape[0]), tol=tol) - c


def reproduction_number(full: FullSystem, tol: float = 1e-12) -> float:
    """Basic reproduction number ``rho(D_f^{-1} B_f)``."""
    if np.any(full.D_f <= 0):
        i = int(np.argmin(full.D_f))
        raise ValueError(f"D_f entry {i + 1} is {full.D_f[i]}; reproduction number needs D_f > 0")
    return perron_root(full.B_f / full.D_f[:, None], tol=tol)


def shifted_matrix(full: FullSystem) -> np.ndarray:
    return np.eye(full.size) - full.h * np.diag(full.D_f) + full.h * full.B_f


def s1_shifted(full: FullSystem, tol: float = 1e-12) -> float:
    """``s1(I - h D_f + h B_f)``, equal to its spectral radius for nonnegative input.

    Evaluated as ``1 + h (rho(B_f + cI - D_f) - c)`` with ``c = max D_f``;
    the identity shift leaves the Perron vector unchanged and gives the power
    iteration a much larger spectral gap than the near-identity matrix.
    """
    M = shifted_matrix(full)
    if np.any(M < 0):
        raise ValueError("I - h D_f + h B_f has negative entries (h * delta > 1?)")
    if full.h == 0:
        return 1.0
    c = float(np.max(full.D_f))
    G = full.B_f + np.diag(c - full.D_f)
    return 1.0 + full.h * (perron_root(G, tol=tol) - c)


def metzler_sign(Lambda, N, tol: float = 1e-10) -> str:
    """Sign of ``s1(Lambda + N)`` from ``rho(-Lambda^{-1} N)`` compared with 1.

    Returns ``"negative"``, ``"zero"`` or ``"positive"``; ``|rho - 1| <= tol``
    counts as zero.
    """
    L = np.asarray(Lambda, dtype=float)
    if L.ndim == 1:
        L = np.diag(L)
    if L.ndim != 2 or L.shape[0] != L.shape[1]:
        raise ValueError("Lambda must be square")
    if np.any(L - np.diag(np.diag(L)) != 0):
        raise ValueError("Lambda must be diagonal")
    d = np.diag(L)
    if np.any(d >= 0):
        raise ValueError("Lambda must have strictly negative diagonal entries")
    N = np.asarray(N, dtype=float)
    if N.shape != L.shape:
        raise ValueError(f"shape mismatch: Lambda {L.shape}, N {N.shape}")
    rho = perron_root(N / (-d)[:, None])
    if abs(rho - 1.0) <= tol:
        return "zero"
    return "negative" if rho < 1.0 else "positive"
