"""QMC and Monte Carlo estimators for parametric-PDE expectations.

Single-level estimators average an integrand over one lattice rule, either
with a fixed shift (deterministic) or over r independent random shifts, in
which case the spread of the per-shift means yields a root-mean-square error
estimate.  The multi-level estimator telescopes the quantity of interest over
a schedule of (dimension, mesh) levels, averaging each level difference with
its own rule, its own shifts, and its own sample budget.

Reproducibility contract: every random quantity is derived purely from
(master seed, level, shift index), and sums over points and shifts are
carried out in a fixed order, so results are bit-identical across reruns
and across worker counts for a fixed configuration.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field as _dc_field

import numpy as np

from .cbc import cbc_fast
from .errors import DimensionMismatchError, DomainError
from .pde import (
    Functional,
    LognormalField,
    SolveCounter,
    solve_block,
)
from .points import (
    LatticeRule,
    ShiftSet,
    derive_seed,
    draw_shifts,
    generate_block,
    map_lognormal,
    map_uniform,
    random_uniform,
)
from .theory import ConvergenceModel, DecayModel, PodWeights, choose_lambda, pod_weights

# --- integrands ----------------------------------------------------------------


class Integrand:
    """Evaluation contract: a pure map from a length-`dim` vector to a real.

    Subclasses either override `__call__` (and inherit the row loop) or
    override `eval_block` for vectorised evaluation; both must agree.
    """

    dim: int = 0
    counter: SolveCounter | None = None

    def __call__(self, y) -> float:
        return float(self.eval_block(np.asarray(y, dtype=float)[None, :])[0])

    def eval_block(self, Y) -> np.ndarray:
        Y = np.asarray(Y, dtype=float)
        return np.array([self(row) for row in Y], dtype=float)


class FunctionIntegrand(Integrand):
    """Closed-form integrand from a callable; vectorized=True means the
    callable accepts a (B, dim) block and returns B values."""

    def __init__(self, fn, dim: int, vectorized: bool = False) -> None:
        self.fn = fn
        self.dim = int(dim)
        self.vectorized = vectorized

    def __call__(self, y) -> float:
        y = np.asarray(y, dtype=float)
        if self.vectorized:
            return float(np.asarray(self.fn(y[None, :]), dtype=float)[0])
        return float(self.fn(y))

    def eval_block(self, Y) -> np.ndarray:
        Y = np.asarray(Y, dtype=float)
        if self.vectorized:
            return np.asarray(self.fn(Y), dtype=float)
        return np.array([float(self.fn(row)) for row in Y], dtype=float)


class DiffusionQoi(Integrand):
    """G applied to the Galerkin solution at mesh width h, truncation s."""

    def __init__(self, field, h: float, functional: Functional | None = None,
                 kappa=1.0, s: int | None = None,
                 counter: SolveCounter | None = None) -> None:
        self.field = field
        self.h = float(h)
        self.functional = functional if functional is not None else Functional(1.0)
        self.kappa = kappa
        self.dim = field.s if s is None else int(s)
        if not 1 <= self.dim <= field.s:
            raise DimensionMismatchError(
                f"truncation {self.dim} outside 1..{field.s}"
            )
        self.counter = counter

    def eval_block(self, Y) -> np.ndarray:
        Y = np.asarray(Y, dtype=float)
        U = solve_block(self.field, Y[:, : self.dim], self.h, self.kappa, self.counter)
        return np.asarray(self.functional(U), dtype=float)


class DiffusionQoiDifference(Integrand):
    """G(u at fine level) - G(u at coarse level), both from the same y.

    The coarse solve reuses the leading s_coarse components of y, so the
    pair is the telescoping difference of one underlying parameter draw.
    When the two levels coincide the difference is exactly zero.
    """

    def __init__(self, field, fine: tuple[int, float], coarse: tuple[int, float],
                 functional: Functional | None = None, kappa=1.0,
                 counter: SolveCounter | None = None) -> None:
        self.field = field
        self.s_fine, self.h_fine = int(fine[0]), float(fine[1])
        self.s_coarse, self.h_coarse = int(coarse[0]), float(coarse[1])
        if not 1 <= self.s_coarse <= self.s_fine <= field.s:
            raise DimensionMismatchError(
                f"need 1 <= s_coarse <= s_fine <= {field.s}, "
                f"got {self.s_coarse}, {self.s_fine}"
            )
        self.functional = functional if functional is not None else Functional(1.0)
        self.kappa = kappa
        self.dim = self.s_fine
        self.counter = counter

    def eval_block(self, Y) -> np.ndarray:
        Y = np.asarray(Y, dtype=float)
        fine = self.functional(solve_block(
            self.field, Y[:, : self.s_fine], self.h_fine, self.kappa, self.counter))
        coarse = self.functional(solve_block(
            self.field, Y[:, : self.s_coarse], self.h_coarse, self.kappa, self.counter))
        return np.asarray(fine - coarse, dtype=float)


# --- results and schedules -------------------------------------------------------


@dataclass(frozen=True)
class EstimatorResult:
    """Estimate with its per-shift means, error estimate, and cost tallies.

    rms is None for deterministic runs and for r = 1; work weights each
    solve by its mesh cell count, so mixed-mesh schedules compare fairly.
    """

    estimate: float
    shift_means: tuple[float, ...]
    rms: float | None
    evaluations: int
    solves: int
    work: int
    seconds: float
    levels: tuple["EstimatorResult", ...] = ()


@dataclass(frozen=True)
class LevelSpec:
    """One telescoping level: truncation s, mesh width h, points n, shifts r."""

    s: int
    h: float
    n: int
    r: int


@dataclass(frozen=True, eq=False)
class LevelSchedule:
    """Levels 0..L with non-decreasing s and non-increasing h."""

    levels: tuple[LevelSpec, ...]

    def __post_init__(self) -> None:
        if not self.levels:
            raise DomainError("schedule needs at least one level")
        object.__setattr__(self, "levels", tuple(self.levels))
        for ell, spec in enumerate(self.levels):
            if spec.s < 1 or spec.n < 1 or spec.r < 1:
                raise DomainError(f"level {ell} has non-positive s, n, or r")
            if ell:
                prev = self.levels[ell - 1]
                if spec.s < prev.s or spec.h > prev.h:
                    raise DomainError(
                        f"level {ell} breaks monotonicity: s must not decrease "
                        f"and h must not increase"
                    )

    @property
    def L(self) -> int:
        return len(self.levels) - 1

    def dimension_change_indicators(self) -> tuple[int, ...]:
        """1 where the truncation changes from the previous level.

        Level 0 is always 1: its coarse partner is the zero function, so the
        active dimension changes by definition.
        """
        out = [1]
        for ell in range(1, len(self.levels)):
            out.append(int(self.levels[ell].s != self.levels[ell - 1].s))
        return tuple(out)

    @classmethod
    def geometric(cls, s: int, h0: float, n0: int, r: int, L: int,
                  min_n: int = 16) -> "LevelSchedule":
        """h halves per level, n halves per level with a floor, s constant."""
        specs = []
        for ell in range(L + 1):
            n = max(n0 >> ell, min_n)
            specs.append(LevelSpec(s=s, h=h0 * 2.0**-ell, n=n, r=r))
        return cls(tuple(specs))


_MAPPINGS = {"uniform": map_uniform, "lognormal": map_lognormal}


def _map_for(mapping):
    if callable(mapping):
        return mapping
    try:
        return _MAPPINGS[mapping]
    except KeyError:
        raise DomainError(f"unknown mapping {mapping!r}; use 'uniform' or 'lognormal'")


def _cost_base(f: Integrand) -> tuple[int, int]:
    c = getattr(f, "counter", None)
    return (c.count, c.work) if c is not None else (0, 0)


def _cost_delta(f: Integrand, base: tuple[int, int]) -> tuple[int, int]:
    c = getattr(f, "counter", None)
    if c is None:
        return (0, 0)
    return (c.count - base[0], c.work - base[1])


# --- single level ----------------------------------------------------------------


def single_level_det(f: Integrand, rule: LatticeRule, mapping="uniform",
                     fixed_shift=None) -> EstimatorResult:
    """Equal-weight lattice average with one fixed shift (default zero).

    The lognormal mapping rejects the zero shift: the first lattice point is
    the origin, which the inverse normal map cannot accept.
    """
    if rule.s != f.dim:
        raise DimensionMismatchError(f"rule dimension {rule.s} != integrand {f.dim}")
    phi = _map_for(mapping)
    t0 = time.perf_counter()
    base = _cost_base(f)
    vals = f.eval_block(phi(generate_block(rule, fixed_shift)))
    estimate = float(np.sum(vals)) / rule.n
    solves, work = _cost_delta(f, base)
    return EstimatorResult(
        estimate=estimate, shift_means=(estimate,), rms=None,
        evaluations=rule.n, solves=solves, work=work,
        seconds=time.perf_counter() - t0,
    )


def single_level_ran(f: Integrand, rule: LatticeRule, mapping="uniform",
                     shifts: ShiftSet | None = None, *, r: int | None = None,
                     seed: int = 0) -> EstimatorResult:
    """Randomly shifted lattice estimate with an r.m.s. error from the shifts.

    Either pass a ShiftSet or (r, seed) to draw one.  Per-shift means Q_k
    are averaged into the estimate; for r >= 2 the error estimate is
    sqrt(sum (Q_k - mean)^2 / (r (r-1))), for r = 1 it is None.
    """
    if shifts is None:
        if r is None:
            raise DomainError("pass a ShiftSet or a shift count r")
        shifts = draw_shifts(r, f.dim, seed)
    if rule.s != f.dim:
        raise DimensionMismatchError(f"rule dimension {rule.s} != integrand {f.dim}")
    if shifts.s != rule.s:
        raise DimensionMismatchError(f"shift dimension {shifts.s} != rule {rule.s}")
    phi = _map_for(mapping)
    t0 = time.perf_counter()
    base = _cost_base(f)
    means = np.empty(shifts.r)
    for k in range(shifts.r):
        vals = f.eval_block(phi(generate_block(rule, shifts.shifts[k])))
        means[k] = np.sum(vals) / rule.n
    estimate = float(np.sum(means)) / shifts.r
    if shifts.r >= 2:
        spread = float(np.sum((means - estimate) ** 2))
        rms = math.sqrt(spread / (shifts.r * (shifts.r - 1)))
    else:
        rms = None
    solves, work = _cost_delta(f, base)
    return EstimatorResult(
        estimate=estimate, shift_means=tuple(float(q) for q in means), rms=rms,
        evaluations=shifts.r * rule.n, solves=solves, work=work,
        seconds=time.perf_counter() - t0,
    )


def monte_carlo(f: Integrand, n: int, mapping="uniform", seed: int = 0) -> EstimatorResult:
    """Plain Monte Carlo baseline: n i.i.d. samples through the same mapping.

    rms is the standard error sqrt(sample variance / n).
    """
    if n < 2:
        raise DomainError(f"need n >= 2 samples, got {n}")
    phi = _map_for(mapping)
    t0 = time.perf_counter()
    base = _cost_base(f)
    T = random_uniform(seed, n, f.dim)
    if phi is map_lognormal:
        T = np.maximum(T, 2.0**-53)  # the stream can emit exact zeros
    vals = f.eval_block(phi(T))
    estimate = float(np.sum(vals)) / n
    var = float(np.sum((vals - estimate) ** 2)) / (n - 1)
    solves, work = _cost_delta(f, base)
    return EstimatorResult(
        estimate=estimate, shift_means=(estimate,), rms=math.sqrt(var / n),
        evaluations=n, solves=solves, work=work,
        seconds=time.perf_counter() - t0,
    )


# --- problem bundle ---------------------------------------------------------------


class DiffusionProblem:
    """A coefficient field with its discretisation, functional, and weights.

    Bundles everything the estimators need: the decay model of the field,
    the lambda choice, tailored POD weights per truncation dimension, and a
    cache of CBC-constructed rules keyed by (n, s).
    """

    def __init__(self, field, h: float, kappa=1.0, g=1.0, r: int = 16,
                 delta: float = 0.1, lam: float | None = None) -> None:
        self.field = field
        self.h = float(h)
        self.kappa = kappa
        self.functional = g if isinstance(g, Functional) else Functional(g)
        self.r = int(r)
        self.delta = float(delta)
        self.decay = field.decay_model()
        self.lam = choose_lambda(self.decay.p0, self.delta) if lam is None else float(lam)
        self._weights: dict[int, PodWeights] = {}
        self._rules: dict[tuple[int, int], LatticeRule] = {}

    @property
    def mapping(self) -> str:
        return "lognormal" if isinstance(self.field, LognormalField) else "uniform"

    def convergence_model(self) -> ConvergenceModel:
        return ConvergenceModel(p0=self.decay.p0, delta=self.delta, lam=self.lam)

    def weights_for(self, s: int | None = None) -> PodWeights:
        s = self.field.s if s is None else int(s)
        w = self._weights.get(s)
        if w is None:
            decay = DecayModel(self.decay.b[:s], self.decay.p0, a_min=self.decay.a_min)
            w = pod_weights(decay, self.lam)
            self._weights[s] = w
        return w

    def rule_for(self, n: int, s: int | None = None) -> LatticeRule:
        s = self.field.s if s is None else int(s)
        rule = self._rules.get((n, s))
        if rule is None:
            rule = cbc_fast(n, s, self.weights_for(s)).rule
            self._rules[(n, s)] = rule
        return rule

    def integrand(self, s: int | None = None, h: float | None = None,
                  counter: SolveCounter | None = None) -> DiffusionQoi:
        return DiffusionQoi(self.field, self.h if h is None else h,
                            functional=self.functional, kappa=self.kappa,
                            s=s, counter=counter)

    def difference_integrand(self, fine: LevelSpec, coarse: LevelSpec,
                             counter: SolveCounter | None = None) -> DiffusionQoiDifference:
        return DiffusionQoiDifference(
            self.field, (fine.s, fine.h), (coarse.s, coarse.h),
            functional=self.functional, kappa=self.kappa, counter=counter)

    def schedule_for(self, L: int, n0: int, h0: float | None = None,
                     r: int | None = None, min_n: int = 16) -> LevelSchedule:
        """Geometric default schedule whose finest mesh matches the problem's h."""
        h0 = self.h * 2**L if h0 is None else h0
        return LevelSchedule.geometric(
            s=self.field.s, h0=h0, n0=n0, r=self.r if r is None else r, L=L,
            min_n=min_n)


# --- multi level ------------------------------------------------------------------


def multi_level(problem: DiffusionProblem, schedule: LevelSchedule,
                mapping=None, seed: int = 0) -> EstimatorResult:
    """Telescoped estimate over the schedule's levels.

    Level 0 averages the quantity itself (the coarse partner is zero); every
    later level averages the difference against the previous level.  Each
    level uses its own rule of dimension s_l, its own shift set from the
    pure derivation (master seed, level), and r_l shifts; the total r.m.s.
    is the root of the summed per-level squared r.m.s. values.
    """
    mapping = problem.mapping if mapping is None else mapping
    t0 = time.perf_counter()
    counter = SolveCounter()
    results = []
    for ell, spec in enumerate(schedule.levels):
        if ell == 0:
            f = problem.integrand(s=spec.s, h=spec.h, counter=counter)
        else:
            f = problem.difference_integrand(spec, schedule.levels[ell - 1], counter)
        rule = problem.rule_for(spec.n, spec.s)
        shifts = draw_shifts(spec.r, spec.s, derive_seed(seed, ell))
        results.append(single_level_ran(f, rule, mapping, shifts))
    estimate = 0.0
    for res in results:
        estimate += res.estimate
    if any(res.rms is None for res in results):
        rms = None
    else:
        rms = math.hypot(*[res.rms for res in results])
    return EstimatorResult(
        estimate=estimate,
        shift_means=tuple(res.estimate for res in results),
        rms=rms,
        evaluations=sum(res.evaluations for res in results),
        solves=counter.count, work=counter.work,
        seconds=time.perf_counter() - t0,
        levels=tuple(results),
    )


# --- convergence studies ----------------------------------------------------------


@dataclass(frozen=True)
class StudyRow:
    n: int
    estimate: float
    rms: float | None
    solves: int
    seconds: float


@dataclass(frozen=True, eq=False)
class Study:
    """Rows of a rate study plus the fitted slope of log(rms) vs log(n).

    slope is None when fewer than two rows carry a positive rms (for
    example a constant integrand, where every rms is exactly zero).
    """

    method: str
    rows: tuple[StudyRow, ...]
    slope: float | None

    def to_csv(self) -> str:
        lines = ["n,estimate,rms,solves,seconds"]
        for row in self.rows:
            rms = "" if row.rms is None else repr(row.rms)
            lines.append(
                f"{row.n},{row.estimate!r},{rms},{row.solves},{row.seconds!r}"
            )
        return "\n".join(lines) + "\n"

    def write_csv(self, path: str) -> None:
        from .points import _write_atomic

        _write_atomic(path, self.to_csv())


def _fit_slope(rows: list[StudyRow]) -> float | None:
    pts = [(math.log(row.n), math.log(row.rms)) for row in rows
           if row.rms is not None and row.rms > 0.0]
    if len(pts) < 2:
        return None
    x = np.array([p[0] for p in pts])
    y = np.array([p[1] for p in pts])
    return float(np.polyfit(x, y, 1)[0])


def _default_weights(s: int) -> PodWeights:
    # plain product weights 1/j^2; used only when no problem supplies decay
    j = np.arange(1, s + 1, dtype=float)
    return PodWeights.product(j**-2.0)


def convergence_study(problem, method: str, n_list, r: int | None = None,
                      seed: int = 0, schedule_L: int = 3,
                      schedule_h0: float | None = None) -> Study:
    """Estimate at each n in n_list and fit the log-log error slope.

    `problem` is a DiffusionProblem, or a bare Integrand for closed-form
    studies (then qmc rules are built with generic product weights 1/j^2,
    and the ml method is unavailable).  Row k re-seeds purely from
    (seed, k), so rows are reproducible independently of one another.
    """
    n_list = [int(n) for n in n_list]
    if not n_list:
        raise DomainError("n_list must not be empty")
    for a, b in zip(n_list, n_list[1:]):
        if b <= a:
            raise DomainError("n_list must be strictly ascending")
    for n in n_list:
        if n < 1 or n & (n - 1):
            raise DomainError(f"sample counts must be powers of two, got {n}")
    if method not in ("qmc", "mc", "ml"):
        raise DomainError(f"unknown method {method!r}; use qmc, mc, or ml")

    is_problem = isinstance(problem, DiffusionProblem)
    if method == "ml" and not is_problem:
        raise DomainError("the ml method needs a DiffusionProblem")
    if r is None:
        r = problem.r if is_problem else 8
    mapping = problem.mapping if is_problem else "uniform"

    rows = []
    for idx, n in enumerate(n_list):
        row_seed = derive_seed(seed, idx)
        t0 = time.perf_counter()
        if method == "ml":
            res = multi_level(problem,
                              problem.schedule_for(schedule_L, n, schedule_h0, r),
                              mapping, seed=row_seed)
        else:
            if is_problem:
                counter = SolveCounter()
                f = problem.integrand(counter=counter)
            else:
                f = problem
            if method == "qmc":
                if is_problem:
                    rule = problem.rule_for(n)
                else:
                    rule = cbc_fast(n, f.dim, _default_weights(f.dim)).rule
                res = single_level_ran(f, rule, mapping, r=r, seed=row_seed)
            else:
                res = monte_carlo(f, n, mapping, seed=row_seed)
        rows.append(StudyRow(n=n, estimate=res.estimate, rms=res.rms,
                             solves=res.solves,
                             seconds=time.perf_counter() - t0))
    return Study(method=method, rows=tuple(rows), slope=_fit_slope(rows))
