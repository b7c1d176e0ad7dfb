"""Scenario files, random scenario generation, trajectory CSV and sweeps."""

from __future__ import annotations

import csv
import io
import json
import re
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .dynamics import DEFAULT_TOL, ParameterSchedule, Trajectory, simulate_multi
from .model import (
    MultiVirusScenario,
    SpreadingParams,
    State,
    ValidationReport,
    assemble_full,
    validate,
)
from .spectral import reproduction_number, s1_shifted

SCHEMA_VERSION = 1
RNG_ALGORITHM = "numpy.PCG64"
MATRIX_NAMES = ("B", "B_w", "C_w", "D", "D_w")


class ScenarioError(ValueError):
    """A scenario file is malformed."""


class RegimeError(RuntimeError):
    """The generator could not hit the requested regime."""


@dataclass(frozen=True, eq=False)
class ScenarioFile:
    """Everything needed to reproduce a run.

    ``pieces`` is a sequence of ``(start_step, per-virus params)``; a single
    piece means time-invariant parameters.  ``initial`` holds one State per
    virus.
    """

    h: float
    pieces: tuple[tuple[int, tuple[SpreadingParams, ...]], ...]
    initial: tuple[State, ...]
    mode: str = "constant"
    period: int | None = None
    seed: int | None = None
    rng_algorithm: str = RNG_ALGORITHM
    schema_version: int = SCHEMA_VERSION

    def __post_init__(self):
        pieces = tuple((int(s), tuple(ps)) for s, ps in self.pieces)
        object.__setattr__(self, "pieces", pieces)
        object.__setattr__(self, "initial", tuple(self.initial))
        object.__setattr__(self, "h", float(self.h))
        if not pieces:
            raise ScenarioError("scenario has no parameter pieces")
        l = len(self.initial)
        for s, ps in pieces:
            if len(ps) != l:
                raise ScenarioError(f"piece at step {s} has {len(ps)} viruses, expected {l}")
            for p in ps:
                if (p.n, p.m) != (self.n, self.m):
                    raise ScenarioError("all viruses and pieces must share n and m")
        for st in self.initial:
            if (st.n, st.m) != (self.n, self.m):
                raise ScenarioError("initial state dimensions disagree with the parameters")
        if not np.isfinite(self.h):
            raise ScenarioError("h must be finite")
        # builds the schedules once so bad modes / starts fail here
        self.schedules()

    @property
    def n(self) -> int:
        return self.pieces[0][1][0].n

    @property
    def m(self) -> int:
        return self.pieces[0][1][0].m

    @property
    def l(self) -> int:  # noqa: E743
        return len(self.initial)

    @property
    def params(self) -> tuple[SpreadingParams, ...]:
        """Per-virus parameters of the first piece."""
        return self.pieces[0][1]

    @property
    def time_varying(self) -> bool:
        return len(self.pieces) > 1

    def schedules(self) -> list[ParameterSchedule]:
        out = []
        for k in range(self.l):
            pieces = tuple((s, ps[k]) for s, ps in self.pieces)
            out.append(ParameterSchedule(pieces, self.mode, self.period))
        return out

    def scenario(self) -> MultiVirusScenario:
        return MultiVirusScenario(self.params, self.initial, self.h)

    def validate(self) -> ValidationReport:
        scheds = self.schedules()
        if self.l == 1:
            return validate(scheds[0], self.initial[0], self.h)
        return validate(scheds, list(self.initial), self.h)

    def with_params(self, k: int, fn) -> "ScenarioFile":
        """Copy with virus ``k`` (0-based) of every piece replaced by ``fn(params)``."""
        pieces = tuple(
            (s, tuple(fn(p) if i == k else p for i, p in enumerate(ps))) for s, ps in self.pieces
        )
        return replace(self, pieces=pieces)

    # serialization -----------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "schema_version": self.schema_version,
            "n": self.n,
            "m": self.m,
            "l": self.l,
            "h": self.h,
            "rng": {"algorithm": self.rng_algorithm, "seed": self.seed},
            "schedule": {
                "mode": self.mode,
                "period": self.period,
                "pieces": [
                    {
                        "start": s,
                        "viruses": [{name: getattr(p, name).tolist() for name in MATRIX_NAMES} for p in ps],
                    }
                    for s, ps in self.pieces
                ],
            },
            "initial_state": [{"x": st.x.tolist(), "w": st.w.tolist()} for st in self.initial],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioFile":
        try:
            version = d["schema_version"]
            if version != SCHEMA_VERSION:
                raise ScenarioError(f"unsupported schema_version {version}")
            sched = d["schedule"]
            pieces = []
            for piece in sched["pieces"]:
                ps = tuple(SpreadingParams(*(piece_v[name] for name in MATRIX_NAMES)) for piece_v in piece["viruses"])
                pieces.append((piece["start"], ps))
            initial = tuple(State(s["x"], s["w"]) for s in d["initial_state"])
            rng = d.get("rng") or {}
            out = cls(
                h=d["h"],
                pieces=tuple(pieces),
                initial=initial,
                mode=sched.get("mode", "constant"),
                period=sched.get("period"),
                seed=rng.get("seed"),
                rng_algorithm=rng.get("algorithm", RNG_ALGORITHM),
            )
        except ScenarioError:
            raise
        except (KeyError, TypeError, ValueError) as exc:
            raise ScenarioError(f"malformed scenario: {exc}") from exc
        for key in ("n", "m", "l"):
            if key in d and d[key] != getattr(out, key):
                raise ScenarioError(f"declared {key}={d[key]} but the data has {key}={getattr(out, key)}")
        return out

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=1, allow_nan=False) + "\n"

    @classmethod
    def loads(cls, text: str) -> "ScenarioFile":
        try:
            d = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ScenarioError(f"not valid JSON: {exc}") from exc
        return cls.from_dict(d)

    def save(self, path) -> None:
        Path(path).write_text(self.dumps(), encoding="utf-8", newline="\n")

    @classmethod
    def load(cls, path) -> "ScenarioFile":
        return cls.loads(Path(path).read_text(encoding="utf-8"))

    def __eq__(self, other):
        if not isinstance(other, ScenarioFile):
            return NotImplemented
        return self.to_dict() == other.to_dict()

    def __hash__(self):
        return hash(self.dumps())


# ---------------------------------------------------------------------------
# random generation

REGIMES = ("subcritical", "supercritical", "mixed")


def _random_params(rng: np.random.Generator, n: int, m: int, edge_p: float, delta_floor: float, symmetric: bool = False) -> SpreadingParams:
    # a random Hamiltonian cycle keeps the population layer strongly connected
    B = np.where(rng.random((n, n)) < edge_p, rng.random((n, n)), 0.0)
    np.fill_diagonal(B, 0.0)
    if n > 1:
        order = rng.permutation(n)
        for a, b in zip(order, np.roll(order, -1)):
            B[a, b] = rng.uniform(0.05, 1.0)
    B_w = np.where(rng.random((n, m)) < edge_p, rng.random((n, m)), 0.0)
    C_w = np.where(rng.random((m, n)) < edge_p, rng.random((m, n)), 0.0)
    for j in range(m):
        B_w[rng.integers(n), j] = rng.uniform(0.05, 1.0)
        C_w[j, rng.integers(n)] = rng.uniform(0.05, 1.0)
    if symmetric:
        B = 0.5 * (B + B.T)
        C_w = B_w.T.copy()
    D = rng.uniform(delta_floor, 1.0, n)
    D_w = rng.uniform(delta_floor, 1.0, m)
    return SpreadingParams(B, B_w, C_w, D, D_w)


def _targets(rng, l: int, target: str) -> list[float]:
    sub = lambda: float(rng.uniform(0.3, 0.9))  # noqa: E731
    sup = lambda: float(rng.uniform(1.5, 3.0))  # noqa: E731
    if target == "subcritical":
        return [sub() for _ in range(l)]
    if target == "supercritical":
        return [sup() for _ in range(l)]
    if l == 1:
        return [sup() if rng.random() < 0.5 else sub()]
    return [sup()] + [sub() for _ in range(l - 1)]


def generate_random(
    n: int,
    m: int,
    l: int = 1,
    h: float = 0.01,
    seed: int = 0,
    target: str = "supercritical",
    *,
    r0_targets: Sequence[float] | None = None,
    edge_p: float = 0.3,
    delta_floor: float = 0.05,
    symmetric: bool = False,
    max_tries: int = 200,
) -> ScenarioFile:
    """Random layered scenario with a prescribed regime.

    Rates are drawn uniformly, the equivalent graph is made strongly
    connected (a random cycle through the population nodes plus at least
    one in- and one out-link per resource), and each virus's ``B_f`` is then
    scaled by a single factor so that its reproduction number equals a
    target drawn inside the requested regime.  Draws that violate the model
    assumptions are discarded and redrawn from the same stream, so the
    result depends only on the arguments.

    ``target`` is ``subcritical`` (every ``R0`` in [0.3, 0.9]),
    ``supercritical`` (every ``R0`` in [1.5, 3]) or ``mixed`` (virus 1
    supercritical, the rest subcritical).  ``r0_targets`` overrides the
    drawn targets.  ``symmetric=True`` makes every ``B_f`` symmetric.
    """
    if n < 1 or m < 1 or l < 1:
        raise ValueError("need n >= 1, m >= 1 and l >= 1")
    if target not in REGIMES:
        raise ValueError(f"target must be one of {REGIMES}, got {target!r}")
    if r0_targets is not None and len(r0_targets) != l:
        raise ValueError(f"r0_targets needs {l} entries")
    rng = np.random.Generator(np.random.PCG64(seed))
    for _ in range(max_tries):
        goals = list(r0_targets) if r0_targets is not None else _targets(rng, l, target)
        params = []
        for goal in goals:
            p = _random_params(rng, n, m, edge_p, delta_floor, symmetric)
            alpha = goal / reproduction_number(assemble_full(p, h))
            params.append(p.replace(B=p.B * alpha, B_w=p.B_w * alpha, C_w=p.C_w * alpha))
        xs = rng.random((l, n)) / l
        initial = []
        for p, x in zip(params, xs):
            ceiling = p.C_w.sum(axis=1) / p.D_w
            initial.append(State(x, rng.random(m) * ceiling))
        if _acceptable(params, initial, h, goals):
            return ScenarioFile(h=h, pieces=((0, tuple(params)),), initial=tuple(initial), seed=seed)
    raise RegimeError(f"no admissible {target} scenario after {max_tries} draws (n={n}, m={m}, l={l}, h={h})")


def _acceptable(params, initial, h, goals) -> bool:
    rep = validate(list(params), list(initial), h)
    if not rep.passed:
        return False
    # leave room for the standard start 0.5 * ones as well as the drawn one
    l, n, m = len(params), params[0].n, params[0].m
    probe = [State(np.full(n, 0.5 / l), np.full(m, 1.0)) for _ in range(l)]
    if not validate(list(params), probe, h).passed:
        return False
    for p, goal in zip(params, goals):
        s1 = s1_shifted(assemble_full(p, h))
        if (s1 > 1.0) != (goal > 1.0):
            return False
        if goal > 1.0 and not validate(p, State(np.full(n, 0.5), np.full(m, 1.0)), h).endemic_ok:
            return False
    return True


# ---------------------------------------------------------------------------
# trajectory CSV


def _fmt(v: float) -> str:
    return repr(float(v))


def trajectory_header(l: int, n: int, m: int) -> list[str]:
    cols = ["step"]
    for k in range(1, l + 1):
        cols += [f"x{k}_{i}" for i in range(1, n + 1)]
        cols += [f"w{k}_{j}" for j in range(1, m + 1)]
    cols += [f"xbar{k}" for k in range(1, l + 1)]
    cols += [f"wbar{k}" for k in range(1, l + 1)]
    return cols


def write_trajectory_csv(traj: Trajectory, out) -> None:
    """Write ``traj`` as CSV: step, per-virus states, per-virus ``xbar``/``wbar``.

    ``out`` is a path or a text stream.  Numbers use the shortest
    round-trip representation and lines end in LF.
    """
    if isinstance(out, (str, Path)):
        with open(out, "w", encoding="utf-8", newline="") as fh:
            write_trajectory_csv(traj, fh)
        return
    n, m, l = traj.n, traj.m, traj.l
    xbar, wbar = traj.averages()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(trajectory_header(l, n, m))
    flat = traj.states.reshape(len(traj.times), -1)
    for r, t in enumerate(traj.times):
        row = [str(int(t))]
        row += [_fmt(v) for v in flat[r]]
        row += [_fmt(v) for v in xbar[r]]
        row += [_fmt(v) for v in wbar[r]]
        w.writerow(row)


def trajectory_csv(traj: Trajectory) -> str:
    buf = io.StringIO()
    write_trajectory_csv(traj, buf)
    return buf.getvalue()


# ---------------------------------------------------------------------------
# sweeps

_AXIS = re.compile(r"^virus\.(\d+)\.(B_w|C_w|D_w|B|D)(?:\[(\d+)(?:,(\d+))?\])?$")
METRICS = ("r0", "s1", "limit", "steps")


def apply_axis(sf: ScenarioFile, axis: str, value: float) -> ScenarioFile:
    """Scenario with one parameter changed.

    Axis paths (1-based indices):

    ``h``                    sampling period set to ``value``
    ``virus.K.NAME``         matrix ``NAME`` of virus ``K`` scaled by ``value``
    ``virus.K.NAME[i,j]``    entry ``(i, j)`` set to ``value`` (``[i]`` for D, D_w)
    """
    if axis == "h":
        return replace(sf, h=float(value))
    mt = _AXIS.match(axis)
    if not mt:
        raise ValueError(f"unknown axis {axis!r}")
    k, name, i, j = int(mt.group(1)), mt.group(2), mt.group(3), mt.group(4)
    if not 1 <= k <= sf.l:
        raise ValueError(f"axis {axis!r}: virus {k} does not exist (l={sf.l})")

    def change(p: SpreadingParams) -> SpreadingParams:
        M = np.array(getattr(p, name))
        if i is None:
            return p.replace(**{name: M * value})
        idx = (int(i) - 1,) if M.ndim == 1 else (int(i) - 1, int(j or 0) - 1)
        if len(idx) != M.ndim or (j is None) != (M.ndim == 1):
            raise ValueError(f"axis {axis!r}: wrong number of indices for {name}")
        if any(a < 0 or a >= s for a, s in zip(idx, M.shape)):
            raise ValueError(f"axis {axis!r}: index out of range for {name} of shape {M.shape}")
        M[idx] = value
        return p.replace(**{name: M})

    return sf.with_params(k - 1, change)


@dataclass(frozen=True)
class SweepSpec:
    base: ScenarioFile
    axis: str
    values: tuple[float, ...]
    outputs: tuple[str, ...] = METRICS
    max_steps: int = 10**6
    tol: float = DEFAULT_TOL

    def __post_init__(self):
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))
        object.__setattr__(self, "outputs", tuple(self.outputs))
        if not self.values:
            raise ValueError("sweep needs at least one value")
        bad = set(self.outputs) - set(METRICS)
        if bad:
            raise ValueError(f"unknown sweep outputs {sorted(bad)}; choose from {METRICS}")
        apply_axis(self.base, self.axis, self.values[0])

    def header(self) -> list[str]:
        cols = ["index", "value"]
        l = self.base.l
        if "r0" in self.outputs:
            cols += [f"r0_{k}" for k in range(1, l + 1)]
        if "s1" in self.outputs:
            cols += [f"s1_{k}" for k in range(1, l + 1)]
        if "limit" in self.outputs:
            cols += [f"xbar{k}" for k in range(1, l + 1)] + [f"wbar{k}" for k in range(1, l + 1)]
        if "steps" in self.outputs:
            cols += ["steps", "converged"]
        return cols


def _evaluate(job) -> list:
    spec, idx = job
    value = spec.values[idx]
    sf = apply_axis(spec.base, spec.axis, value)
    row: list = [idx, value]
    fulls = [assemble_full(p, sf.h) for p in sf.params]
    if "r0" in spec.outputs:
        row += [reproduction_number(f) for f in fulls]
    if "s1" in spec.outputs:
        row += [s1_shifted(f) for f in fulls]
    if "limit" in spec.outputs or "steps" in spec.outputs:
        traj = simulate_multi(sf.scenario(), sf.schedules(), max_steps=spec.max_steps, tol=spec.tol, check=False)
        if "limit" in spec.outputs:
            xbar, wbar = traj.averages()
            row += list(xbar[-1]) + list(wbar[-1])
        if "steps" in spec.outputs:
            row += [traj.steps, traj.converged]
    return row


def run_sweep(spec: SweepSpec, workers: int | None = 1) -> list[list]:
    """Evaluate every sweep value; rows come back in sweep order.

    ``workers > 1`` spreads the values over a process pool.
    """
    jobs = [(spec, i) for i in range(len(spec.values))]
    if workers is None or workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(_evaluate, jobs))
    return [_evaluate(j) for j in jobs]


def write_sweep_csv(spec: SweepSpec, rows: list[list], out) -> None:
    if isinstance(out, (str, Path)):
        with open(out, "w", encoding="utf-8", newline="") as fh:
            write_sweep_csv(spec, rows, fh)
        return
    w = csv.writer(out, lineterminator="\n")
    w.writerow(spec.header())
    for row in rows:
        w.writerow([_fmt(v) if isinstance(v, (float, np.floating)) else v for v in row])


__all__ = [
    "ScenarioFile",
    "ScenarioError",
    "RegimeError",
    "SweepSpec",
    "generate_random",
    "apply_axis",
    "run_sweep",
    "write_sweep_csv",
    "write_trajectory_csv",
    "trajectory_csv",
    "trajectory_header",
]
