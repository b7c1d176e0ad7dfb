"""Domain types and assumption checks for the layered SIWS model.

A population layer of ``n`` nodes is coupled to ``m`` resource nodes
(water, ventilation, surfaces ...).  Stacking both layers gives an
equivalent ``(n + m)``-node digraph with adjacency ``B_f`` and healing /
decay vector ``D_f``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.sparse.csgraph import connected_components


def _frozen(a, ndim: int, name: str) -> np.ndarray:
    arr = np.array(a, dtype=float)
    if arr.ndim != ndim:
        raise ValueError(f"{name} must be {ndim}-dimensional, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class SpreadingParams:
    """Per-layer rates of one virus.

    Attributes
    ----------
    B : (n, n) array
        Person-to-person infection rates ``beta_ij``.
    B_w : (n, m) array
        Resource-to-person infection rates ``beta^w_ij``.
    C_w : (m, n) array
        Person-to-resource contamination rates ``c^w_jk``.
    D : (n,) array
        Healing rates.
    D_w : (m,) array
        Pathogen decay rates.

    Only shapes are enforced here; sign conditions are reported by
    :func:`validate` so that every problem can be located at once.
    """

    B: np.ndarray
    B_w: np.ndarray
    C_w: np.ndarray
    D: np.ndarray
    D_w: np.ndarray

    def __post_init__(self):
        for name, ndim in (("B", 2), ("B_w", 2), ("C_w", 2), ("D", 1), ("D_w", 1)):
            object.__setattr__(self, name, _frozen(getattr(self, name), ndim, name))
        n, m = self.D.shape[0], self.D_w.shape[0]
        expected = {"B": (n, n), "B_w": (n, m), "C_w": (m, n)}
        for name, shape in expected.items():
            got = getattr(self, name).shape
            if got != shape:
                raise ValueError(
                    f"dimension mismatch: {name} has shape {got}, expected {shape} "
                    f"for n={n}, m={m}"
                )
        if n < 1 or m < 1:
            raise ValueError("need at least one population node and one resource")

    @property
    def n(self) -> int:
        return self.D.shape[0]

    @property
    def m(self) -> int:
        return self.D_w.shape[0]

    def __eq__(self, other):
        if not isinstance(other, SpreadingParams):
            return NotImplemented
        return all(
            np.array_equal(getattr(self, k), getattr(other, k))
            for k in ("B", "B_w", "C_w", "D", "D_w")
        )

    def __hash__(self):
        return hash(tuple(getattr(self, k).tobytes() for k in ("B", "B_w", "C_w", "D", "D_w")))

    def replace(self, **changes) -> "SpreadingParams":
        fields = {k: getattr(self, k) for k in ("B", "B_w", "C_w", "D", "D_w")}
        fields.update(changes)
        return SpreadingParams(**fields)

    def scaled(self, infection: float = 1.0, recovery: float = 1.0) -> "SpreadingParams":
        """Multiply every entry of ``B_f`` by ``infection`` and of ``D_f`` by ``recovery``."""
        return SpreadingParams(
            self.B * infection, self.B_w * infection, self.C_w * infection,
            self.D * recovery, self.D_w * recovery,
        )

    def c_hat(self) -> np.ndarray:
        """Contamination-to-decay ratios ``c^w_jk / delta^w_j``."""
        return self.C_w / self.D_w[:, None]

    def full(self, h: float) -> "FullSystem":
        return assemble_full(self, h)


@dataclass(frozen=True, eq=False)
class FullSystem:
    """Assembled equivalent-graph matrices ``B_f = [[B, B_w], [C_w, 0]]`` and ``D_f``."""

    B_f: np.ndarray
    D_f: np.ndarray
    h: float
    n: int

    def __post_init__(self):
        B_f = np.asarray(self.B_f, dtype=float)
        D_f = np.asarray(self.D_f, dtype=float)
        N = D_f.shape[0]
        if B_f.shape != (N, N) or not 1 <= self.n <= N:
            raise ValueError(f"dimension mismatch: B_f {B_f.shape}, D_f {D_f.shape}, n={self.n}")
        # h = 0 is allowed as the degenerate identity map
        if not self.h >= 0:
            raise ValueError(f"sampling period must be nonnegative, got {self.h}")
        object.__setattr__(self, "B_f", B_f)
        object.__setattr__(self, "D_f", D_f)

    @property
    def m(self) -> int:
        return self.D_f.shape[0] - self.n

    @property
    def size(self) -> int:
        return self.D_f.shape[0]

    def params(self) -> SpreadingParams:
        """Split the block matrices back into per-layer parameters."""
        n = self.n
        return SpreadingParams(
            self.B_f[:n, :n], self.B_f[:n, n:], self.B_f[n:, :n],
            self.D_f[:n], self.D_f[n:],
        )


def assemble_full(params: SpreadingParams, h: float) -> FullSystem:
    """Stack ``params`` into the ``(n+m)``-node block form."""
    n, m = params.n, params.m
    B_f = np.zeros((n + m, n + m))
    B_f[:n, :n] = params.B
    B_f[:n, n:] = params.B_w
    B_f[n:, :n] = params.C_w
    D_f = np.concatenate([params.D, params.D_w])
    B_f.setflags(write=False)
    D_f.setflags(write=False)
    return FullSystem(B_f=B_f, D_f=D_f, h=float(h), n=n)


@dataclass(frozen=True, eq=False)
class State:
    """Infection fractions ``x`` (n,) and pathogen concentrations ``w`` (m,)."""

    x: np.ndarray
    w: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "x", _frozen(self.x, 1, "x"))
        object.__setattr__(self, "w", _frozen(self.w, 1, "w"))

    @classmethod
    def from_z(cls, z, n: int) -> "State":
        z = np.asarray(z, dtype=float)
        return cls(z[:n], z[n:])

    @classmethod
    def zeros(cls, n: int, m: int) -> "State":
        return cls(np.zeros(n), np.zeros(m))

    @classmethod
    def uniform(cls, n: int, m: int, value: float = 0.5) -> "State":
        return cls(np.full(n, value), np.full(m, value))

    @property
    def z(self) -> np.ndarray:
        return np.concatenate([self.x, self.w])

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def m(self) -> int:
        return self.w.shape[0]

    def __eq__(self, other):
        if not isinstance(other, State):
            return NotImplemented
        return np.array_equal(self.x, other.x) and np.array_equal(self.w, other.w)

    def __repr__(self):
        return f"State(x={self.x.tolist()}, w={self.w.tolist()})"


@dataclass(frozen=True)
class Violation:
    assumption: str
    location: str
    message: str


@dataclass(frozen=True)
class ValidationReport:
    """Outcome of :func:`validate`.

    ``violations`` covers the conditions that make the map well defined
    (ids ``A1``/``A2``, or ``A1b``/``A2b`` with several viruses).  The
    stricter step-size condition ``h(delta_i + sum beta + sum beta^w w_max) <= 1``
    needed for endemic results (id ``A6``/``A6b``) is kept apart in
    ``endemic_violations`` and never makes ``passed`` false.
    """

    passed: bool
    w_max: float
    violations: tuple[Violation, ...] = ()
    endemic_violations: tuple[Violation, ...] = ()
    w_max_per_virus: tuple[float, ...] = ()

    @property
    def endemic_ok(self) -> bool:
        return not self.endemic_violations

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "endemic_ok": self.endemic_ok,
            "w_max": self.w_max,
            "w_max_per_virus": list(self.w_max_per_virus),
            "violations": [v.__dict__ for v in self.violations],
            "endemic_violations": [v.__dict__ for v in self.endemic_violations],
        }


@dataclass(frozen=True, eq=False)
class MultiVirusScenario:
    """``l`` competing viruses on a shared node set.

    Each virus has its own parameters and initial state; a node can carry
    at most one virus at a time, so ``sum_k x^k_i <= 1``.
    """

    params: tuple[SpreadingParams, ...]
    states: tuple[State, ...]
    h: float

    def __post_init__(self):
        params = tuple(self.params)
        states = tuple(self.states)
        if not params:
            raise ValueError("at least one virus is required")
        if len(params) != len(states):
            raise ValueError(f"{len(params)} parameter sets but {len(states)} initial states")
        n, m = params[0].n, params[0].m
        for k, (p, s) in enumerate(zip(params, states)):
            if (p.n, p.m) != (n, m) or (s.n, s.m) != (n, m):
                raise ValueError(f"virus {k} does not share dimensions n={n}, m={m}")
        object.__setattr__(self, "params", params)
        object.__setattr__(self, "states", states)
        object.__setattr__(self, "h", float(self.h))

    @property
    def l(self) -> int:  # noqa: E743
        return len(self.params)

    @property
    def n(self) -> int:
        return self.params[0].n

    @property
    def m(self) -> int:
        return self.params[0].m

    def full(self, k: int) -> FullSystem:
        return assemble_full(self.params[k], self.h)


# ---------------------------------------------------------------------------
# assumption checks


def _pieces(params_or_schedule) -> list[SpreadingParams]:
    if isinstance(params_or_schedule, SpreadingParams):
        return [params_or_schedule]
    pieces = getattr(params_or_schedule, "pieces", None)
    if pieces is None:
        pieces = list(params_or_schedule)
    out = [p[1] if isinstance(p, tuple) else p for p in pieces]
    if not out:
        raise ValueError("empty schedule")
    return out


def compute_w_max(params_or_schedule, w0=None) -> float:
    """Contamination ceiling that keeps the map domain-invariant.

    ``max(max_j w_j(0), max over pieces and j of sum_k c_jk / delta^w_j)``.
    """
    pieces = _pieces(params_or_schedule)
    bound = 0.0
    for idx, p in enumerate(pieces):
        if np.any(p.D_w <= 0):
            j = int(np.argmin(p.D_w))
            raise ValueError(f"piece {idx}: nonpositive decay rate delta^w_{j + 1}")
        rows = p.C_w.sum(axis=1)
        if np.any(~(p.C_w > 0).any(axis=1)):
            j = int(np.flatnonzero(~(p.C_w > 0).any(axis=1))[0])
            raise ValueError(
                f"piece {idx}: resource {j + 1} has no contaminating population node"
            )
        bound = max(bound, float(np.max(rows / p.D_w)))
    if w0 is not None and len(w0):
        bound = max(bound, float(np.max(w0)))
    return bound


def check_irreducible(B_f) -> bool:
    """True iff the digraph of the nonzero pattern of ``B_f`` is strongly connected."""
    A = np.asarray(B_f)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {A.shape}")
    if A.shape[0] == 1:
        return True
    ncomp, _ = connected_components(A != 0, directed=True, connection="strong")
    return ncomp == 1


def _safe_w_max(pieces, w0) -> float:
    try:
        return compute_w_max(pieces, w0)
    except ValueError:
        # fall back to the finite part of the bound so the rest can still be checked
        vals = [0.0] + ([float(np.max(w0))] if w0 is not None and len(w0) else [])
        for p in pieces:
            ok = p.D_w > 0
            if ok.any():
                vals.append(float(np.max(p.C_w.sum(axis=1)[ok] / p.D_w[ok])))
        return max(vals)


def validate(params, states, h: float, *, tol: float = 1e-12) -> ValidationReport:
    """Check the well-posedness assumptions for one or more viruses.

    Parameters
    ----------
    params : SpreadingParams, ParameterSchedule, or a sequence of those
        One entry per virus.  A schedule is checked piece by piece against
        a common ``w_max``.
    states : State or sequence of State
        Initial state per virus.
    h : float
        Sampling period.
    tol : float
        Slack on the interval checks so that exact boundary values
        (e.g. ``h * delta = 1``) are not rejected by rounding.
    """
    if isinstance(params, SpreadingParams) or hasattr(params, "pieces"):
        params = [params]
    if isinstance(states, State):
        states = [states]
    params, states = list(params), list(states)
    bad: list[Violation] = []
    endemic: list[Violation] = []
    if len(params) != len(states):
        bad.append(Violation("dims", "scenario", f"{len(params)} viruses but {len(states)} states"))
        return ValidationReport(False, float("nan"), tuple(bad))

    multi = len(params) > 1
    a1, a2, a6 = ("A1b", "A2b", "A6b") if multi else ("A1", "A2", "A6")
    if not h > 0:
        bad.append(Violation(a1, "h", f"sampling period must be positive, got {h}"))

    first = _pieces(params[0])[0]
    n, m = first.n, first.m
    x_total = np.zeros(n)
    w_maxes = []
    load = np.zeros(n)  # h * sum_k (row sums of B^k + B_w^k w_max^k), worst piece
    for k, (sched, st) in enumerate(zip(params, states)):
        tag = f"virus {k + 1}: " if multi else ""
        pieces = _pieces(sched)
        if (st.n, st.m) != (n, m) or any((p.n, p.m) != (n, m) for p in pieces):
            bad.append(Violation("dims", f"{tag}scenario", "dimension mismatch with virus 1"))
            continue
        for i in np.flatnonzero((st.x < 0) | (st.x > 1)):
            bad.append(Violation(a1, f"{tag}x_{i + 1}(0)", f"x_{i + 1}(0)={st.x[i]} not in [0,1]"))
        x_total += st.x
        for j in np.flatnonzero(st.w < 0):
            bad.append(Violation(a1, f"{tag}w_{j + 1}(0)", f"w_{j + 1}(0)={st.w[j]} is negative"))

        w_max = _safe_w_max(pieces, st.w)
        w_maxes.append(w_max)
        worst = np.zeros(n)
        for idx, p in enumerate(pieces):
            where = f"{tag}piece {idx}: " if len(pieces) > 1 else tag
            for name in ("B", "B_w", "C_w"):
                M = getattr(p, name)
                for i, j in np.argwhere(M < 0):
                    bad.append(Violation(a1, f"{where}{name}[{i + 1},{j + 1}]", f"negative rate {M[i, j]}"))
            for i in np.flatnonzero(p.D <= 0):
                bad.append(Violation(a1, f"{where}delta_{i + 1}", f"healing rate {p.D[i]} not positive"))
            for j in np.flatnonzero(p.D_w <= 0):
                bad.append(Violation(a1, f"{where}delta^w_{j + 1}", f"decay rate {p.D_w[j]} not positive"))
            for j in np.flatnonzero(~(p.C_w > 0).any(axis=1)):
                bad.append(Violation(a1, f"{where}C_w row {j + 1}", "resource has no contaminating population node"))
            if h > 0:
                for i in np.flatnonzero((h * p.D > 1 + tol) | (p.D <= 0)):
                    bad.append(Violation(a1, f"{where}h*delta_{i + 1}", f"h*delta={h * p.D[i]} not in (0,1]"))
                for j in np.flatnonzero((h * p.D_w > 1 + tol) | (p.D_w <= 0)):
                    bad.append(Violation(a1, f"{where}h*delta^w_{j + 1}", f"h*delta^w={h * p.D_w[j]} not in (0,1]"))
                inflow = h * (p.B.sum(axis=1) + p.B_w.sum(axis=1) * w_max)
                worst = np.maximum(worst, inflow)
                strict = inflow + h * p.D
                for i in np.flatnonzero(strict > 1 + tol):
                    endemic.append(Violation(a6, f"{where}node {i + 1}", f"h*(delta+sum beta+sum beta^w*w_max)={strict[i]:.6g} > 1"))
            B_f = assemble_full(p, 1.0).B_f
            if not check_irreducible(B_f):
                bad.append(Violation(a2, f"{where}B_f", "equivalent graph is not strongly connected"))
        load += worst

    if multi:
        for i in np.flatnonzero(x_total > 1 + tol):
            bad.append(Violation(a1, f"node {i + 1}", f"sum_k x^k_{i + 1}(0)={x_total[i]} exceeds 1"))
    for i in np.flatnonzero(load > 1 + tol):
        bad.append(Violation(a1, f"node {i + 1}", f"h*(sum beta+sum beta^w*w_max)={load[i]:.6g} > 1"))

    w_max_all = max(w_maxes) if w_maxes else float("nan")
    return ValidationReport(
        passed=not bad,
        w_max=w_max_all,
        violations=tuple(bad),
        endemic_violations=tuple(endemic),
        w_max_per_virus=tuple(w_maxes),
    )


def validate_scenario(scenario: MultiVirusScenario) -> ValidationReport:
    return validate(list(scenario.params), list(scenario.states), scenario.h)


def in_domain(z: np.ndarray, n: int, w_max: float | None = None, tol: float = 0.0) -> bool:
    x, w = z[:n], z[n:]
    ok = bool(np.all(x >= -tol) and np.all(x <= 1 + tol) and np.all(w >= -tol))
    if w_max is not None:
        ok = ok and bool(np.all(w <= w_max + tol))
    return ok
