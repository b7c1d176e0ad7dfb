"""Discrete-time steppers, schedules and trajectory simulation."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import _kernels
from .model import (
    MultiVirusScenario,
    SpreadingParams,
    State,
    assemble_full,
    compute_w_max,
    in_domain,
    validate,
)

DEFAULT_TOL = 1e-10
DEFAULT_MAX_STEPS = 10**7
FULL_RECORD_LIMIT = 10**4


class DomainError(ValueError):
    """A state lies outside the invariant domain of the map."""


@dataclass(frozen=True, eq=False)
class ParameterSchedule:
    """Piecewise-constant parameters sampled at integer steps.

    ``pieces`` is an ordered sequence of ``(start_step, SpreadingParams)``
    with starts strictly increasing from 0; each piece holds until the next
    start.  Modes:

    ``constant``   a single piece.
    ``piecewise``  the last piece holds forever.
    ``periodic``   step ``t`` is looked up at ``t mod period``.
    ``callback``   ``selector(t)`` returns the index of the active piece;
                   the start steps are then only labels.
    """

    pieces: tuple[tuple[int, SpreadingParams], ...]
    mode: str = "constant"
    period: int | None = None
    selector: Callable[[int], int] | None = None

    def __post_init__(self):
        pieces = tuple((int(s), p) for s, p in self.pieces)
        object.__setattr__(self, "pieces", pieces)
        if not pieces:
            raise ValueError("empty schedule")
        starts = [s for s, _ in pieces]
        if starts[0] != 0 or any(b <= a for a, b in zip(starts, starts[1:])):
            raise ValueError(f"piece starts must increase strictly from 0, got {starts}")
        dims = {(p.n, p.m) for _, p in pieces}
        if len(dims) != 1:
            raise ValueError(f"pieces disagree on dimensions: {sorted(dims)}")
        if self.mode not in ("constant", "piecewise", "periodic", "callback"):
            raise ValueError(f"unknown schedule mode {self.mode!r}")
        if self.mode == "constant" and len(pieces) != 1:
            raise ValueError("constant schedule must have exactly one piece")
        if self.mode == "periodic":
            if self.period is None or self.period <= starts[-1]:
                raise ValueError("periodic schedule needs a period beyond the last start")
        if self.mode == "callback" and self.selector is None:
            raise ValueError("callback schedule needs a selector")

    @classmethod
    def constant(cls, params: SpreadingParams) -> "ParameterSchedule":
        return cls(((0, params),), "constant")

    @classmethod
    def switching(cls, params: Sequence[SpreadingParams], dwell: int | Sequence[int], period: bool = True):
        """Cycle through ``params`` with the given dwell time(s) in steps."""
        dwells = [dwell] * len(params) if isinstance(dwell, int) else list(dwell)
        starts = np.concatenate([[0], np.cumsum(dwells)[:-1]]).astype(int)
        pieces = tuple(zip(starts.tolist(), params))
        if period:
            return cls(pieces, "periodic", int(sum(dwells)))
        return cls(pieces, "piecewise")

    @classmethod
    def random_switching(cls, params: Sequence[SpreadingParams], horizon: int, rng, dwell=(10**4, 5 * 10**4)):
        """Random switching among ``params`` up to ``horizon`` steps.

        Dwell times are drawn uniformly from the inclusive integer range
        ``dwell``; the next piece is drawn uniformly among the others.
        """
        lo, hi = dwell
        t, k = 0, int(rng.integers(len(params)))
        pieces = []
        while t < horizon:
            pieces.append((t, params[k]))
            t += int(rng.integers(lo, hi + 1))
            if len(params) > 1:
                k = (k + 1 + int(rng.integers(len(params) - 1))) % len(params)
        mode = "constant" if len(pieces) == 1 else "piecewise"
        return cls(tuple(pieces), mode)

    @property
    def n(self) -> int:
        return self.pieces[0][1].n

    @property
    def m(self) -> int:
        return self.pieces[0][1].m

    @property
    def is_constant(self) -> bool:
        first = self.pieces[0][1]
        return all(p == first for _, p in self.pieces)

    def _index(self, t: int) -> int:
        if self.mode == "callback":
            return int(self.selector(t))
        if self.mode == "periodic":
            t = t % self.period
        starts = [s for s, _ in self.pieces]
        return int(np.searchsorted(starts, t, side="right") - 1)

    def at(self, t: int) -> SpreadingParams:
        """Parameters in force on the step from ``t`` to ``t + 1``."""
        return self.pieces[self._index(t)][1]

    def segment(self, t: int, t_end: int) -> tuple[SpreadingParams, int]:
        """Active parameters at ``t`` and the first step ``<= t_end`` where they change."""
        k = self._index(t)
        if self.mode == "constant" or len(self.pieces) == 1:
            return self.pieces[k][1], t_end
        if self.mode == "callback":
            u = t + 1
            while u < t_end and self._index(u) == k:
                u += 1
            return self.pieces[k][1], u
        if self.mode == "periodic":
            base = t - t % self.period
            nxt = self.pieces[k + 1][0] if k + 1 < len(self.pieces) else self.period
            return self.pieces[k][1], min(t_end, base + nxt)
        nxt = self.pieces[k + 1][0] if k + 1 < len(self.pieces) else t_end
        return self.pieces[k][1], min(t_end, nxt)

    def envelope(self) -> tuple[np.ndarray, np.ndarray]:
        """Element-wise (max B_f, min D_f) over all pieces."""
        fulls = [assemble_full(p, 1.0) for _, p in self.pieces]
        return np.max([f.B_f for f in fulls], axis=0), np.min([f.D_f for f in fulls], axis=0)


def as_schedule(obj) -> ParameterSchedule:
    if isinstance(obj, ParameterSchedule):
        return obj
    if isinstance(obj, SpreadingParams):
        return ParameterSchedule.constant(obj)
    raise TypeError(f"expected SpreadingParams or ParameterSchedule, got {type(obj).__name__}")


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Recorded states of a run.

    ``states`` has shape ``(records, l, n + m)`` and ``times`` holds the
    step index (or integration step for continuous runs) of each record;
    record 0 is always the initial state and the last record is always the
    final state.
    """

    states: np.ndarray
    times: np.ndarray
    steps: int
    converged: bool
    stop_reason: str
    n: int
    dt: float = 1.0

    @property
    def l(self) -> int:  # noqa: E743
        return self.states.shape[1]

    @property
    def m(self) -> int:
        return self.states.shape[2] - self.n

    @property
    def limit(self) -> State:
        """Final state of virus 1 (the only one for single-virus runs)."""
        return State.from_z(self.states[-1, 0], self.n)

    @property
    def limits(self) -> tuple[State, ...]:
        return tuple(State.from_z(z, self.n) for z in self.states[-1])

    def x(self, k: int = 0) -> np.ndarray:
        return self.states[:, k, : self.n]

    def w(self, k: int = 0) -> np.ndarray:
        return self.states[:, k, self.n :]

    def averages(self) -> tuple[np.ndarray, np.ndarray]:
        """Per-record node averages ``xbar`` and ``wbar``, each ``(records, l)``."""
        return self.states[:, :, : self.n].mean(axis=2), self.states[:, :, self.n :].mean(axis=2)


def _stack(z_list: Sequence[np.ndarray]) -> np.ndarray:
    return np.ascontiguousarray(np.array(z_list, dtype=float))


def _check_domain(z: np.ndarray, n: int, what: str = "state"):
    for k in range(z.shape[0]):
        if not in_domain(z[k], n):
            raise DomainError(f"{what} of virus {k + 1} is outside the domain (x in [0,1], w >= 0)")
    if z.shape[0] > 1:
        tot = z[:, :n].sum(axis=0)
        if np.any(tot > 1):
            i = int(np.argmax(tot))
            raise DomainError(f"co-infection sum at node {i + 1} is {tot[i]} > 1")


def _arrays(params_list: Sequence[SpreadingParams]):
    fulls = [assemble_full(p, 1.0) for p in params_list]
    Bf = np.ascontiguousarray(np.array([f.B_f for f in fulls]))
    Df = np.ascontiguousarray(np.array([f.D_f for f in fulls]))
    return Bf, Df


def step_single(z: State, params: SpreadingParams, h: float) -> State:
    """One step of the single-virus map.

    ``x_i <- x_i + h[(1 - x_i)(sum_j beta_ij x_j + sum_j beta^w_ij w_j) - delta_i x_i]``
    and ``w_j <- w_j + h(sum_k c_jk x_k - delta^w_j w_j)``.
    """
    zz = _stack([z.z])
    _check_domain(zz, params.n)
    Bf, Df = _arrays([params])
    return State.from_z(_kernels.euler_step(zz, Bf, Df, float(h), params.n)[0], params.n)


def step_multi(states: Sequence[State], scenario: MultiVirusScenario | Sequence[SpreadingParams], t: int = 0, h: float | None = None):
    """One step of the competing-virus map.

    The susceptible share of node ``i`` is ``1 - sum_a x^a_i``; every virus
    draws on it with its own rates.  ``scenario`` may be a
    :class:`MultiVirusScenario` (its ``h`` is used) or a sequence of per-virus
    parameters or schedules, in which case ``h`` must be given.
    """
    if isinstance(scenario, MultiVirusScenario):
        params, h = scenario.params, scenario.h
    else:
        params = scenario
        if h is None:
            raise ValueError("h is required when passing bare parameters")
    params = [as_schedule(p).at(t) if isinstance(p, ParameterSchedule) else p for p in params]
    n = params[0].n
    zz = _stack([s.z for s in states])
    _check_domain(zz, n)
    Bf, Df = _arrays(params)
    out = _kernels.euler_step(zz, Bf, Df, float(h), n)
    return tuple(State.from_z(z, n) for z in out)


def _default_stride(max_steps: int) -> int:
    if max_steps <= FULL_RECORD_LIMIT:
        return 1
    return int(math.ceil(max_steps / FULL_RECORD_LIMIT))


def _run(z0: np.ndarray, schedules: list[ParameterSchedule], h: float, max_steps: int, tol: float, stride: int | None, n: int) -> Trajectory:
    if tol is not None and not tol > 0:
        raise ValueError("tol must be positive")
    ktol = -1.0 if tol is None else float(tol)
    if max_steps < 0:
        raise ValueError("max_steps must be nonnegative")
    stride = stride or _default_stride(max_steps)
    if stride < 1:
        raise ValueError("stride must be >= 1")
    _check_domain(z0, n, "initial state")
    records = [z0.copy()[None]]
    times = [np.zeros(1, dtype=np.int64)]
    z = z0
    t = 0
    converged = False
    while t < max_steps and not converged:
        t_next = max_steps
        active = []
        for sch in schedules:
            p, u = sch.segment(t, max_steps)
            active.append(p)
            t_next = min(t_next, u)
        Bf, Df = _arrays(active)
        z, steps, converged, rec, rec_t, count = _kernels.iterate_map(
            z, Bf, Df, float(h), n, t_next - t, ktol, stride, t
        )
        if count:
            records.append(rec[:count])
            times.append(rec_t[:count])
        t += steps
    if times[-1][-1] != t:
        records.append(z[None])
        times.append(np.array([t], dtype=np.int64))
    return Trajectory(
        states=np.concatenate(records),
        times=np.concatenate(times),
        steps=t,
        converged=converged,
        stop_reason="tolerance" if converged else "max-steps",
        n=n,
        dt=h,
    )


def simulate(z0: State, schedule, h: float, max_steps: int = DEFAULT_MAX_STEPS, tol: float = DEFAULT_TOL, stride: int | None = None, check: bool = True) -> Trajectory:
    """Iterate the single-virus map from ``z0``.

    Parameters
    ----------
    z0 : State
    schedule : SpreadingParams or ParameterSchedule
    h : float
    max_steps : int
    tol : float or None
        Stop once ``max|z(t+1) - z(t)| < tol``; ``None`` always runs
        ``max_steps`` steps.
    stride : int, optional
        Record every ``stride``-th step.  Defaults to every step for runs of
        at most 10^4 steps and to about 10^4 records otherwise.
    check : bool
        Validate the schedule and initial state first.

    Raises
    ------
    ValueError
        For an invalid schedule (when ``check``) or ``tol <= 0``.
    DomainError
        If ``z0`` is outside the domain.
    """
    sch = as_schedule(schedule)
    if check:
        rep = validate(sch, z0, h)
        if not rep.passed:
            raise ValueError("invalid scenario: " + "; ".join(f"{v.location}: {v.message}" for v in rep.violations))
    return _run(_stack([z0.z]), [sch], h, max_steps, tol, stride, sch.n)


def simulate_multi(scenario: MultiVirusScenario, schedules=None, max_steps: int = DEFAULT_MAX_STEPS, tol: float = DEFAULT_TOL, stride: int | None = None, check: bool = True) -> Trajectory:
    """Iterate the competing-virus map.

    ``schedules`` optionally overrides the per-virus parameters of
    ``scenario`` with time-varying schedules (one per virus).
    """
    scheds = [as_schedule(s) for s in (schedules if schedules is not None else scenario.params)]
    if len(scheds) != scenario.l:
        raise ValueError(f"{len(scheds)} schedules for {scenario.l} viruses")
    if check:
        rep = validate(scheds, list(scenario.states), scenario.h)
        if not rep.passed:
            raise ValueError("invalid scenario: " + "; ".join(f"{v.location}: {v.message}" for v in rep.violations))
    z0 = _stack([s.z for s in scenario.states])
    return _run(z0, scheds, scenario.h, max_steps, tol, stride, scenario.n)


def reference_continuous(z0, params, h: float, duration: float, substeps: int = 1, tol: float | None = None, stride: int | None = None) -> Trajectory:
    """Integrate the continuous-time counterpart ``dz/dt = -D_f z + (I - Z) B_f z`` with RK4.

    The step is ``h / substeps``.  With several viruses pass sequences for
    ``z0`` and ``params``.  If ``tol`` is given, integration stops once the
    field norm times ``h`` drops below it, which matches the stopping rule of
    :func:`simulate` on the discrete map.
    """
    if substeps < 1:
        raise ValueError("substeps must be >= 1")
    if isinstance(z0, State):
        z0, params = [z0], [params]
    n = params[0].n
    zz = _stack([s.z for s in z0])
    _check_domain(zz, n, "initial state")
    Bf, Df = _arrays(list(params))
    dt = h / substeps
    nsteps = int(round(duration / dt))
    stride = stride or _default_stride(nsteps)
    ftol = (tol / h) if tol is not None else -1.0
    z, steps, conv, rec, rec_t, count = _kernels.rk4_run(zz, Bf, Df, dt, n, nsteps, ftol, stride)
    states = [zz[None]]
    times = [np.zeros(1, dtype=np.int64)]
    if count:
        states.append(rec[:count])
        times.append(rec_t[:count])
    if times[-1][-1] != steps:
        states.append(z[None])
        times.append(np.array([steps], dtype=np.int64))
    return Trajectory(
        states=np.concatenate(states),
        times=np.concatenate(times),
        steps=steps,
        converged=bool(conv),
        stop_reason="tolerance" if conv else "max-steps",
        n=n,
        dt=dt,
    )
