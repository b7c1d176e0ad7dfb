"""Equilibria, sensitivities, error dynamics and regime classification."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from . import _kernels
from .dynamics import ParameterSchedule, as_schedule
from .model import (
    FullSystem,
    MultiVirusScenario,
    SpreadingParams,
    State,
    assemble_full,
    compute_w_max,
    validate,
)
from .spectral import ConvergenceError, metzler_s1, reproduction_number, s1_shifted

HEALTHY = "HealthyGAS"
ENDEMIC = "EndemicGAS"
INDETERMINATE = "Indeterminate"


@dataclass(frozen=True, eq=False)
class EquilibriumResult:
    z_star: State | None
    residual: float
    iterations: int
    kind: str  # "healthy-only" | "endemic"

    def to_dict(self) -> dict:
        out = {"kind": self.kind, "residual": self.residual, "iterations": self.iterations}
        if self.z_star is not None:
            out.update(
                x=self.z_star.x.tolist(),
                w=self.z_star.w.tolist(),
                xbar=float(self.z_star.x.mean()),
                wbar=float(self.z_star.w.mean()),
            )
        return out


@dataclass(frozen=True)
class Classification:
    regime: str
    r0: float
    s1: float
    rate: float
    assumptions: dict = field(default_factory=dict)
    piece_r0: tuple[float, ...] = ()

    def to_dict(self) -> dict:
        out = {"regime": self.regime, "r0": self.r0, "s1": self.s1, "rate": self.rate, "assumptions": dict(self.assumptions)}
        if self.piece_r0:
            out["piece_r0"] = list(self.piece_r0)
        return out


@dataclass(frozen=True, eq=False)
class TwoVirusReport:
    r0: tuple[float, float]
    s1: tuple[float, float]
    z_star: tuple[State | None, State | None]
    crossed: tuple[float | None, float | None]
    dominance: int | None
    J: np.ndarray | None
    h_bound: float | None
    verdict: str
    winner: int | None = None

    def to_dict(self) -> dict:
        return {
            "verdict": self.verdict,
            "winner": self.winner,
            "r0": list(self.r0),
            "s1": list(self.s1),
            "crossed": list(self.crossed),
            "dominance": self.dominance,
            "h_bound": self.h_bound,
            "z_star": [None if z is None else {"x": z.x.tolist(), "w": z.w.tolist()} for z in self.z_star],
        }


# ---------------------------------------------------------------------------
# endemic equilibrium


def equilibrium_residual(full: FullSystem, z) -> float:
    """Max residual of the two endemic-equilibrium equations.

    ``delta_i x_i / (1 - x_i) = sum_j (sum_k beta^w_ik chat_kj + beta_ij) x_j``
    and ``w_j = sum_k chat_jk x_k``.
    """
    z = z.z if isinstance(z, State) else np.asarray(z, dtype=float)
    p = full.params()
    x, w = z[: full.n], z[full.n :]
    c_hat = p.c_hat()
    lhs = p.D * x / (1.0 - x)
    rhs = (p.B_w @ c_hat + p.B) @ x
    return float(max(np.max(np.abs(lhs - rhs)), np.max(np.abs(w - c_hat @ x))))


def _jacobian(full: FullSystem, z: np.ndarray) -> np.ndarray:
    """Jacobian of the continuous field -D_f z + (I - Z) B_f z at ``z``."""
    n = full.n
    free = np.ones(full.size)
    free[:n] -= z[:n]
    J = -np.diag(full.D_f) + free[:, None] * full.B_f
    Bz = full.B_f @ z
    J[np.arange(n), np.arange(n)] -= Bz[:n]
    return J


def _field(full: FullSystem, z: np.ndarray) -> np.ndarray:
    free = np.ones(full.size)
    free[: full.n] -= z[: full.n]
    return -full.D_f * z + free * (full.B_f @ z)


def _newton_polish(full: FullSystem, z: np.ndarray, tol: float, maxit: int = 20):
    for it in range(maxit):
        F = _field(full, z)
        try:
            dz = np.linalg.solve(_jacobian(full, z), -F)
        except np.linalg.LinAlgError:
            return None, it
        z = z + dz
        if np.any(z <= 0) or np.any(z[: full.n] >= 1):
            return None, it
        if equilibrium_residual(full, z) < tol:
            return z, it + 1
    return None, maxit


def endemic_fixed_point(full: FullSystem, tol: float = 1e-10, max_iter: int = 10**7, chunk: int = 20000) -> EquilibriumResult:
    """Endemic equilibrium ``z* >> 0`` of the single-virus map, if it exists.

    When ``s1(I - h D_f + h B_f) <= 1`` the healthy state is the only
    equilibrium and ``healthy-only`` is returned.  Otherwise the map is
    iterated from the interior point ``0.5 (1, w_max 1)``; once the
    equilibrium residual is small a few Newton steps on the equilibrium
    equations finish the job.

    Raises
    ------
    ConvergenceError
        If the residual has not dropped below ``tol`` after ``max_iter`` map steps.
    """
    if s1_shifted(full) <= 1.0:
        return EquilibriumResult(None, 0.0, 0, "healthy-only")
    n = full.n
    w_max = compute_w_max(full.params())
    z = np.concatenate([np.full(n, 0.5), np.full(full.m, 0.5 * w_max)])
    Bf = np.ascontiguousarray(full.B_f[None])
    Df = np.ascontiguousarray(full.D_f[None])
    zz = z[None].copy()
    done = 0
    res = np.inf
    while done < max_iter:
        steps = min(chunk, max_iter - done)
        zz, taken, _, _, _, _ = _kernels.iterate_map(zz, Bf, Df, full.h, n, steps, 1e-16, steps + 1, 0)
        done += taken
        z = zz[0]
        res = equilibrium_residual(full, z)
        if res < tol:
            break
        if res < 1e-4:
            polished, nit = _newton_polish(full, z.copy(), tol)
            if polished is not None:
                z, res = polished, equilibrium_residual(full, polished)
                done += nit
                break
    if res >= tol:
        raise ConvergenceError(f"endemic iteration stalled at residual {res:.3e} after {done} steps")
    if not np.all(z > 0):
        raise ConvergenceError("iteration converged to a non-interior point")
    return EquilibriumResult(State.from_z(z, n), res, done, "endemic")


def homogeneous_equilibrium(n: int, m: int, beta: float, delta: float, c_hat: float):
    """Closed-form endemic level of the homogeneous model.

    All ``beta_ij = beta^w_ij = beta``, ``delta_i = delta`` and every
    resource has ratio ``c / delta^w = c_hat``.  Returns ``(x*, w*)`` with
    ``x* = 1 - delta / (n beta (1 + m c_hat))`` and ``w* = n c_hat x*``.
    """
    if n < 1 or m < 0:
        raise ValueError("need n >= 1 and m >= 0")
    if beta <= 0 or delta <= 0 or c_hat < 0:
        raise ValueError("beta and delta must be positive and c_hat nonnegative")
    x = 1.0 - delta / (n * beta * (1.0 + m * c_hat))
    return x, n * c_hat * x


def homogeneous_params(n: int, m: int, beta: float, delta: float, c: float, delta_w: float) -> SpreadingParams:
    return SpreadingParams(
        np.full((n, n), beta), np.full((n, m), beta), np.full((m, n), c),
        np.full(n, delta), np.full(m, delta_w),
    )


# ---------------------------------------------------------------------------
# sensitivity and error dynamics


def _zstar_array(z_star) -> np.ndarray:
    if isinstance(z_star, EquilibriumResult):
        z_star = z_star.z_star
    if z_star is None:
        raise ValueError("an endemic equilibrium is required")
    return z_star.z if isinstance(z_star, State) else np.asarray(z_star, dtype=float)


def sensitivity(full: FullSystem, z_star, dDf=None, dBf=None) -> np.ndarray:
    """First-order shift of ``z*`` under perturbations of ``D_f`` and ``B_f``.

    Returns ``dz = J^{-1} (Diag(z*) dd_f + (Z* - I) dB_f z*)`` with ``J`` the
    Jacobian ``-D_f + (I - Z*) B_f - Diag_x(B_f z*)`` of the equilibrium
    equations.  ``J`` is an irreducible Hurwitz Metzler matrix for an
    interior ``z*``, so ``J^{-1} << 0``.

    Parameters
    ----------
    dDf : (N,) array, optional
        Perturbation of the diagonal of ``D_f``.
    dBf : (N, N) array, optional
        Perturbation of ``B_f``.
    """
    z = _zstar_array(z_star)
    N, n = full.size, full.n
    dd = np.zeros(N) if dDf is None else np.asarray(dDf, dtype=float)
    dB = np.zeros((N, N)) if dBf is None else np.asarray(dBf, dtype=float)
    if dd.ndim == 2:
        dd = np.diag(dd)
    Z = np.zeros(N)
    Z[:n] = z[:n]
    rhs = z * dd + (Z - 1.0) * (dB @ z)
    J = _jacobian(full, z)
    try:
        return np.linalg.solve(J, rhs)
    except np.linalg.LinAlgError as exc:
        raise np.linalg.LinAlgError("linearization at z* is singular") from exc


def error_matrices(full: FullSystem, z_star):
    """Error-dynamics matrices around an endemic equilibrium.

    Returns ``(phi, F, mu)``: ``phi(x)`` maps the error ``z(t) - z*`` one
    step forward given the current infection vector ``x``; ``F`` is
    ``phi`` with the ``Diag(1 - x)`` factors dropped; ``mu`` is ``z*``
    scaled so that its first entry is 1, and satisfies ``F mu = mu``.
    """
    z = _zstar_array(z_star)
    if not np.all(z > 0):
        raise ValueError("error dynamics need an interior equilibrium z* >> 0")
    p = full.params()
    h, n, m = full.h, full.n, full.m
    xs = z[:n]
    top_diag = np.eye(n) - np.diag(h * p.D / (1.0 - xs))
    lower = np.hstack([h * p.C_w, np.eye(m) - h * np.diag(p.D_w)])

    def phi(x):
        x = x.x if isinstance(x, State) else np.asarray(x, dtype=float)[:n]
        s = (1.0 - x)[:, None]
        top = np.hstack([top_diag + s * h * p.B, s * h * p.B_w])
        return np.vstack([top, lower])

    F = np.vstack([np.hstack([top_diag + h * p.B, h * p.B_w]), lower])
    mu = z / z[0]
    return phi, F, mu


# ---------------------------------------------------------------------------
# classification


def _flags(params: SpreadingParams, h: float, w0=None) -> dict:
    w = np.zeros(params.m) if w0 is None else np.asarray(w0, dtype=float)
    rep = validate(params, State(np.zeros(params.n), w), h)
    return {"well_posed": rep.passed, "endemic_step": rep.endemic_ok, "w_max": rep.w_max}


def classify_single(full: FullSystem, w0=None) -> Classification:
    """Regime of the time-invariant single-virus model.

    ``s1 <= 1`` gives global attraction to the healthy state; ``s1 > 1``
    together with the stricter step-size condition gives global attraction
    to the endemic state from any nonzero start.  Anything else is
    ``Indeterminate``.  ``rate`` is the local contraction factor ``s1``.
    """
    s1 = s1_shifted(full)
    r0 = reproduction_number(full)
    flags = _flags(full.params(), full.h, w0)
    flags["threshold_consistent"] = (s1 > 1.0) == (r0 > 1.0)
    if not flags["well_posed"]:
        regime = INDETERMINATE
    elif s1 <= 1.0:
        regime = HEALTHY
    elif flags["endemic_step"]:
        regime = ENDEMIC
    else:
        regime = INDETERMINATE
    return Classification(regime, r0, s1, s1, flags)


def classify_tv(schedule, h: float, bounds=None, w0=None) -> Classification:
    """Healthy-state test for a time-varying schedule via an envelope.

    ``bounds = (B_fmax, D_fmin)``; by default the element-wise max / min over
    the schedule pieces.  The healthy state is globally attractive when
    ``s1(I - h D_fmin + h B_fmax) <= 1``; otherwise the outcome is left open.
    ``r0`` holds the effective reproduction number ``rho(D_fmin^-1 B_fmax)``
    and ``piece_r0`` the per-piece values.
    """
    sch = as_schedule(schedule)
    if sch.is_constant:
        return classify_single(assemble_full(sch.pieces[0][1], h), w0)
    Bmax, Dmin = sch.envelope() if bounds is None else (np.asarray(bounds[0], float), np.asarray(bounds[1], float))
    for idx, (_, p) in enumerate(sch.pieces):
        f = assemble_full(p, h)
        if np.any(f.B_f > Bmax) or np.any(f.D_f < Dmin):
            raise ValueError(f"schedule piece {idx} exceeds the supplied envelope")
    env = FullSystem(B_f=Bmax, D_f=Dmin, h=float(h), n=sch.n)
    s1 = s1_shifted(env)
    r_eff = reproduction_number(env)
    piece_r0 = tuple(reproduction_number(assemble_full(p, h)) for _, p in sch.pieces)
    rep = validate(sch, State(np.zeros(sch.n), np.zeros(sch.m) if w0 is None else w0), h)
    env_rep = validate(env.params(), State(np.zeros(sch.n), np.zeros(sch.m) if w0 is None else w0), h)
    flags = {
        "well_posed": rep.passed,
        "envelope_well_posed": env_rep.passed,
        "endemic_step": rep.endemic_ok,
        "w_max": rep.w_max,
    }
    regime = HEALTHY if (s1 <= 1.0 and rep.passed) else INDETERMINATE
    return Classification(regime, r_eff, s1, s1, flags, piece_r0)


# ---------------------------------------------------------------------------
# equilibrium-preserving families


def omega_family(x_star_target: float, n: int, m: int, base: dict, scales: Sequence[float], h: float, dwell: int = 1000, rtol: float = 1e-9):
    """Schedule of homogeneous pieces that all share one endemic equilibrium.

    ``base`` holds ``beta``, ``delta``, ``c`` and ``delta_w`` of a
    homogeneous model whose closed-form level equals ``x_star_target``.
    Each ``alpha`` in ``scales`` gives the piece ``(alpha beta, alpha delta,
    alpha c, alpha delta_w)``: ``c_hat`` and hence ``(x*, w*)`` are
    unchanged.  ``B_f`` must be symmetric (``c == beta``).

    Returns ``(schedule, rejected)`` where ``rejected`` lists the ``alpha``
    values whose pieces break the model assumptions; the schedule cycles
    through the accepted pieces with period ``dwell`` per piece.

    Raises
    ------
    ValueError
        For an asymmetric base, a base that misses ``x_star_target``, or if
        no scale survives validation.
    """
    beta, delta, c, delta_w = (float(base[k]) for k in ("beta", "delta", "c", "delta_w"))
    if c != beta:
        raise ValueError("equilibrium-preserving switching needs a symmetric B_f (c == beta)")
    x_star, _ = homogeneous_equilibrium(n, m, beta, delta, c / delta_w)
    if abs(x_star - x_star_target) > rtol * max(1.0, abs(x_star_target)):
        raise ValueError(f"base parameters give x*={x_star}, not the target {x_star_target}")
    accepted, rejected = [], []
    for alpha in scales:
        if alpha <= 0:
            rejected.append(alpha)
            continue
        p = homogeneous_params(n, m, alpha * beta, alpha * delta, alpha * c, alpha * delta_w)
        rep = validate(p, State(np.full(n, x_star_target), np.zeros(m)), h)
        if rep.passed and rep.endemic_ok and s1_shifted(assemble_full(p, h)) > 1.0:
            accepted.append(p)
        else:
            rejected.append(alpha)
    if not accepted:
        raise ValueError(f"every scale was rejected: {rejected}")
    if len(accepted) == 1:
        return ParameterSchedule.constant(accepted[0]), rejected
    return ParameterSchedule.switching(accepted, dwell), rejected


# ---------------------------------------------------------------------------
# two competing viruses


def _dominates(A1: np.ndarray, A2: np.ndarray) -> bool:
    return bool(np.all(A1 >= A2) and np.any(A1 > A2))


def _crossed(full_k: FullSystem, z_other: State) -> float:
    """``s1(-h D_f^k + h (I - Z*^other) B_f^k)``."""
    free = np.ones(full_k.size)
    free[: full_k.n] -= z_other.x
    A = full_k.h * (-np.diag(full_k.D_f) + free[:, None] * full_k.B_f)
    return metzler_s1(A)


def _winner_jacobian(f1: FullSystem, f2: FullSystem, z1: State) -> np.ndarray:
    n, N = f1.n, f1.size
    z = z1.z
    free = np.ones(N)
    free[:n] -= z1.x
    T = np.zeros((N, N))
    Bz = f1.B_f @ z
    T[np.arange(n), np.arange(n)] = Bz[:n]
    top = np.hstack([free[:, None] * f1.B_f - np.diag(f1.D_f) - T, -T])
    bottom = np.hstack([np.zeros((N, N)), free[:, None] * f2.B_f - np.diag(f2.D_f)])
    return np.vstack([top, bottom])


def two_virus_analysis(scenario: MultiVirusScenario, crossed_tol: float = 1e-9) -> TwoVirusReport:
    """Healthy / winner-takes-all / coexistence tests for two viruses on one resource.

    Verdict rules, in order:

    * both ``s1 <= 1``: ``healthy``;
    * exactly one ``s1 > 1``: that virus wins (dominant-equilibrium result,
      crossed conditions are not evaluated);
    * both ``s1 > 1`` and ``(D_f^k)^-1 B_f^k >= (D_f^a)^-1 B_f^a`` with at
      least one strict entry and ``h < 2 / rho(J)``: ``winner(k)``;
    * both crossed conditions ``s1(-h D_f^k + h (I - Z*^a) B_f^k)`` positive
      (beyond ``crossed_tol``): ``coexistence-possible``;
    * otherwise ``indeterminate``.
    """
    if scenario.l != 2 or scenario.m != 1:
        raise ValueError(f"two-virus analysis needs l=2 and m=1, got l={scenario.l}, m={scenario.m}")
    fulls = [scenario.full(0), scenario.full(1)]
    r0 = tuple(reproduction_number(f) for f in fulls)
    s1 = tuple(s1_shifted(f) for f in fulls)
    eq = [endemic_fixed_point(f) for f in fulls]
    zs = tuple(e.z_star for e in eq)
    super_ = [s > 1.0 for s in s1]
    crossed = (None, None)
    dominance = None
    J = None
    h_bound = None
    winner = None

    A = [f.B_f / f.D_f[:, None] for f in fulls]
    if _dominates(A[0], A[1]):
        dominance = 1
    elif _dominates(A[1], A[0]):
        dominance = 2

    if not any(super_):
        verdict = "healthy"
    elif super_[0] != super_[1]:
        winner = 1 if super_[0] else 2
        verdict = f"winner({winner})"
    else:
        crossed = (_crossed(fulls[0], zs[1]), _crossed(fulls[1], zs[0]))
        if dominance is not None:
            k = dominance - 1
            J = _winner_jacobian(fulls[k], fulls[1 - k], zs[k])
            h_bound = 2.0 / float(np.max(np.abs(np.linalg.eigvals(J))))
        if dominance is not None and scenario.h < h_bound:
            winner = dominance
            verdict = f"winner({winner})"
        elif all(c > crossed_tol for c in crossed):
            verdict = "coexistence-possible"
        else:
            verdict = "indeterminate"
    return TwoVirusReport(r0, s1, zs, crossed, dominance, J, h_bound, verdict, winner)
