"""Monte Carlo, multilevel Monte Carlo and multilevel quasi-Monte Carlo estimators of E[lambda].

Every sample is a pure function of ``(seed, level, index)`` (or of the lattice
point and shift for QMC), samples are evaluated in index-ordered chunks and
reduced in index order, so results do not depend on the number of workers.
"""

from __future__ import annotations

import math
import os
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from functools import partial

import numpy as np

from .assembly import GALERKIN, KINDS, assemble
from .eigensolvers import (MisconvergenceRisk, SolverSettings, arnoldi_smallest, detect_instability, tg_rqi)
from .mesh import build_mesh
from .random_fields import FieldConfig
from .sampling import DEFAULT_SHIFTS, make_rule, mc_samples, read_generating_vector

MC, MLMC, MLMC_HOMOTOPY, MLQMC = "MC", "MLMC", "MLMC_Homotopy", "MLQMC"
COST_MODES = ("model", "measured")
N_WARM = 50
ETA_DEFAULT = 0.61
_COST_SETUP = 2.5e-3
_COST_LU = 4e-7


class BiasNotMet(RuntimeError):
    pass


class InsufficientLevels(ValueError):
    pass


class UnstableDiscretization(RuntimeError):
    """The coarsest Galerkin level has a complex smallest eigenvalue for some probe sample."""


class PositivityViolation(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class Problem:
    """Everything that defines one sample evaluation apart from the sample itself."""

    cfg: FieldConfig = field(default_factory=FieldConfig)
    kind: str = GALERKIN
    h0: float = 0.125
    solver: str = "rqi"
    # homotopy parameter per level; None means t = 1 everywhere
    schedule: tuple | None = None
    settings: SolverSettings = field(default_factory=SolverSettings)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown discretization {self.kind!r}")
        if self.solver not in ("rqi", "arnoldi"):
            raise ValueError(f"unknown solver {self.solver!r}")
        build_mesh(0, self.h0)  # validates h0

    def t(self, level: int) -> float:
        if self.schedule is None:
            return 1.0
        if level >= len(self.schedule):
            raise ValueError(f"homotopy schedule has no entry for level {level}")
        return float(self.schedule[level])

    def h(self, level: int) -> float:
        return self.h0 * 2.0**-level

    def model_cost(self, level: int, single: bool = False) -> float:
        """Deterministic cost proxy in seconds for one sample at ``level``.

        Each solved grid costs a fixed setup plus sparse LU work ~ n^{3/2};
        the constants were calibrated against measured single-core tgRQI times.
        """
        if level == 0:
            grids = [0]
        elif single or level == 1:
            grids = [0, level]
        else:
            grids = [0, level - 1, level]
        n = [(round(1 / self.h(l)) - 1) ** 2 for l in grids]
        return math.fsum(_COST_SETUP + _COST_LU * m**1.5 for m in n)


@dataclass(frozen=True)
class SampleOut:
    diff: float
    val: float
    imag: float
    iters: tuple
    wall: float


def _system(problem: Problem, level: int, omega, t: float):
    return assemble(build_mesh(level, problem.h0), problem.cfg, omega, problem.kind, t)


def evaluate(problem: Problem, level: int, omega, single: bool = False) -> SampleOut:
    """lambda_l - lambda_{l-1} (or lambda_0 at level 0) for one sample.

    With ``single=True`` only lambda_l is wanted (plain MC): the three-grid chain
    collapses to level 0 -> level l.
    """
    t0 = time.perf_counter()
    s = problem.settings
    t_f = problem.t(level)
    t_c = problem.t(level - 1) if level > 0 else t_f
    if problem.solver == "arnoldi":
        fine = arnoldi_smallest(_system(problem, level, omega, t_f), 1,
                                SolverSettings.for_level(level, eps_stop=s.tg_eps))[0]
        lam_f, its = fine.lam, (fine.iterations,)
        if level > 0 and not single:
            coarse = arnoldi_smallest(_system(problem, level - 1, omega, t_c), 1,
                                      SolverSettings.for_level(level - 1, eps_stop=s.tg_eps))[0]
            lam_c, its = coarse.lam, (coarse.iterations, fine.iterations)
        else:
            lam_c = 0.0
    else:
        if level == 0:
            levels = [0]
        elif single or level == 1:
            levels = [0, level]
        else:
            levels = [0, level - 1, level]
        # the warm-start levels share the coarse homotopy parameter
        ts = [t_f] * len(levels) if single else [t_c] * (len(levels) - 1) + [t_f]
        systems = [_system(problem, l, omega, t) for l, t in zip(levels, ts)]
        meshes = [build_mesh(l, problem.h0) for l in levels]
        with warnings.catch_warnings():
            if ts[0] != ts[-1]:
                # the homotopy step itself moves lambda; the jump heuristic does not apply
                warnings.simplefilter("ignore", MisconvergenceRisk)
            lam_f, lam_c, _, stats = tg_rqi(systems, meshes, s)
        its = stats.iterations
        if single or level == 0:
            lam_c = 0.0
    lam_f, lam_c = complex(lam_f), complex(lam_c)
    diff = lam_f - lam_c
    imag = max(abs(lam_f.imag), abs(lam_c.imag))
    return SampleOut(diff.real, lam_f.real, imag, tuple(its), time.perf_counter() - t0)


def _eval_block(problem: Problem, level: int, single: bool, omegas: np.ndarray):
    return [evaluate(problem, level, w, single) for w in omegas]


def _chunks(arr: np.ndarray, n: int):
    size = max(1, math.ceil(len(arr) / n))
    return [arr[i:i + size] for i in range(0, len(arr), size)]


def evaluate_many(problem: Problem, level: int, omegas: np.ndarray, workers: int = 1,
                  single: bool = False) -> list[SampleOut]:
    """Evaluate rows of ``omegas`` in order, optionally on a process pool."""
    omegas = np.asarray(omegas, dtype=float).reshape(len(omegas), problem.cfg.s)
    if len(omegas) == 0:
        return []
    fn = partial(_eval_block, problem, level, single)
    if workers <= 1 or len(omegas) < 2 * workers:
        return fn(omegas)
    blocks = _chunks(omegas, 4 * workers)
    with ProcessPoolExecutor(workers) as ex:
        parts = list(ex.map(fn, blocks))
    return [o for p in parts for o in p]


def default_workers() -> int:
    return len(os.sched_getaffinity(0)) if hasattr(os, "sched_getaffinity") else os.cpu_count() or 1


@dataclass
class LevelStats:
    level: int
    h: float
    t: float
    N: int
    mean_diff: float
    var_diff: float
    mean_val: float
    var_val: float
    cost_per_sample: float
    iters_avg: float
    # QMC only: variance of the level estimator over the random shifts
    mse: float = float("nan")
    diffs: np.ndarray = field(default=None, repr=False)
    vals: np.ndarray = field(default=None, repr=False)
    iters: list = field(default=None, repr=False)


@dataclass
class MLResult:
    estimate: float
    levels: list
    eps_target: float
    bias_est: float
    stat_err_est: float
    total_cost: float
    rates: tuple | None
    method: str
    success: bool = True
    max_imag: float = 0.0

    def summary(self) -> dict:
        return {
            "method": self.method,
            "estimate": self.estimate,
            "eps_target": self.eps_target,
            "bias_est": self.bias_est,
            "stat_err_est": self.stat_err_est,
            "total_cost": self.total_cost,
            "rates": None if self.rates is None else dict(zip(("alpha", "beta", "gamma"), self.rates)),
            "success": self.success,
            "max_imag": self.max_imag,
            "levels": [
                {k: getattr(s, k) for k in ("level", "h", "t", "N", "mean_diff", "var_diff",
                                            "mean_val", "var_val", "cost_per_sample", "iters_avg",
                                            "mse")}
                for s in self.levels
            ],
        }


def _var(x: np.ndarray) -> float:
    return float(np.var(x, ddof=1)) if len(x) > 1 else float("nan")


class _Level:
    """Sample store for one MC level: outputs kept in index order."""

    def __init__(self, problem: Problem, level: int, seed: int, single: bool = False):
        self.problem, self.level, self.seed, self.single = problem, level, seed, single
        self.out: list[SampleOut] = []

    def extend(self, n: int, workers: int):
        if n <= len(self.out):
            return
        idx = np.arange(len(self.out), n)
        omegas = mc_samples(self.seed, self.level, idx, self.problem.cfg.s)
        self.out += evaluate_many(self.problem, self.level, omegas, workers, self.single)

    def cost(self, mode: str) -> float:
        if mode == "model":
            return self.problem.model_cost(self.level, self.single)
        return float(np.median([o.wall for o in self.out]))

    def stats(self, mode: str) -> LevelStats:
        d = np.array([o.diff for o in self.out])
        v = np.array([o.val for o in self.out])
        its = [o.iters for o in self.out]
        return LevelStats(self.level, self.problem.h(self.level), self.problem.t(self.level),
                          len(d), float(np.mean(d)), _var(d), float(np.mean(v)), _var(v),
                          self.cost(mode), float(np.mean([i[-1] for i in its])),
                          diffs=d, vals=v, iters=its)


def optimal_samples(V, C, eps: float) -> list[int]:
    """N_l = ceil(2 eps^-2 sqrt(V_l / C_l) sum_i sqrt(V_i C_i))."""
    if not eps > 0:
        raise ValueError("eps must be positive")
    V = [float(v) for v in V]
    C = [float(c) for c in C]
    if any(v < 0 for v in V) or any(c <= 0 for c in C):
        raise ValueError("need V >= 0 and C > 0")
    total = math.fsum(math.sqrt(v * c) for v, c in zip(V, C))
    return [math.ceil(2.0 / eps**2 * math.sqrt(v / c) * total) for v, c in zip(V, C)]


def fit_rates(levels) -> tuple[float, float, float]:
    """Least-squares log2 slopes over l >= 1: (alpha, beta, gamma)."""
    lv = [s for s in levels if s.level >= 1]
    if len(levels) < 3 or len(lv) < 2:
        raise InsufficientLevels("need at least three levels to fit rates")
    ell = np.array([s.level for s in lv], dtype=float)

    def slope(y):
        return float(np.polyfit(ell, np.log2(y), 1)[0])

    alpha = -slope(np.abs([s.mean_diff for s in lv]))
    beta = -slope(np.array([s.var_diff for s in lv]))
    gamma = slope(np.array([s.cost_per_sample for s in lv]))
    return alpha, beta, gamma


def positivity_check(result: MLResult) -> bool:
    return bool(result.estimate > 0)


def _assert_positive(result: MLResult) -> MLResult:
    if not positivity_check(result):
        raise PositivityViolation(f"estimate {result.estimate} is not positive")
    return result


def homotopy_schedule(L: int) -> tuple:
    """t_0 = 0, t_l = 1 - 4^{-l} for 0 < l < L, t_L = 1."""
    if L < 1:
        raise ValueError("homotopy needs at least one refinement level")
    return tuple([0.0] + [1.0 - 4.0**-l for l in range(1, L)] + [1.0])


def stability_screen(problem: Problem, seed: int, probes: int = 5) -> None:
    """Refuse a Galerkin coarsest level whose smallest eigenvalue is complex for a probe sample."""
    if problem.kind != GALERKIN:
        return
    omegas = mc_samples(seed, -1000, range(probes), problem.cfg.s)
    for i, w in enumerate(omegas):
        sys0 = _system(problem, 0, w, problem.t(0))
        eigs = arnoldi_smallest(sys0, 2, SolverSettings.for_level(0, eps_stop=1e-10))
        if detect_instability(eigs):
            raise UnstableDiscretization(
                f"Galerkin level 0 (h0={problem.h0}) unstable for probe sample {i}")


def mc_estimate(problem: Problem, level: int, N: int, seed: int = 0, workers: int = 1,
                cost: str = "model", eps: float = float("nan")) -> MLResult:
    """Plain Monte Carlo mean of lambda_l over N samples."""
    if N < 2:
        raise ValueError("need N >= 2 samples for a variance estimate")
    lev = _Level(problem, level, seed, single=level > 0)
    lev.extend(N, workers)
    st = lev.stats(cost)
    stat = math.sqrt(st.var_val / N)
    res = MLResult(st.mean_val, [st], eps, float("nan"), stat, N * st.cost_per_sample, None, MC,
                   max_imag=max(o.imag for o in lev.out))
    return _assert_positive(res)


def _ml_driver(problem: Problem, eps: float, L: int | None, max_level: int, seed: int,
               workers: int, cost: str, n_warm: int, alpha: float | None, method: str,
               screen: bool = True) -> MLResult:
    if not eps > 0:
        raise ValueError("eps must be positive")
    if cost not in COST_MODES:
        raise ValueError(f"cost mode must be one of {COST_MODES}")
    if screen:
        stability_screen(problem, seed)
    fixed = L is not None
    nlev = (L if fixed else min(2, max_level)) + 1
    levels = [_Level(problem, l, seed) for l in range(nlev)]
    bias = float("nan")
    while True:
        for lv in levels:
            lv.extend(n_warm, workers)
        while True:
            st = [lv.stats(cost) for lv in levels]
            N = optimal_samples([max(s.var_diff, 0.0) for s in st],
                                [s.cost_per_sample for s in st], eps)
            if not any(n > len(lv.out) for n, lv in zip(N, levels)):
                break
            for n, lv in zip(N, levels):
                lv.extend(n, workers)
        st = [lv.stats(cost) for lv in levels]
        a = alpha
        if a is None:
            try:
                a = float(np.clip(fit_rates(st)[0], 1.0, 4.0))
            except InsufficientLevels:
                a = 2.0
        bias = abs(st[-1].mean_diff) / (2.0**a - 1.0) if len(st) > 1 else float("nan")
        if fixed or not bias > eps / math.sqrt(2.0):
            break
        if len(levels) > max_level:
            raise BiasNotMet(f"bias estimate {bias:.3e} above eps/sqrt2 at L={max_level}")
        levels.append(_Level(problem, len(levels), seed))
    est = math.fsum(s.mean_diff for s in st)
    stat = math.sqrt(math.fsum(s.var_diff / s.N for s in st))
    total = math.fsum(s.N * s.cost_per_sample for s in st)
    try:
        rates = fit_rates(st)
    except InsufficientLevels:
        rates = None
    ok = stat**2 + (0.0 if math.isnan(bias) else bias**2) <= eps**2 * (1 + 1e-12)
    res = MLResult(est, st, eps, bias, stat, total, rates, method, ok,
                   max(o.imag for lv in levels for o in lv.out))
    return _assert_positive(res)


def mlmc_estimate(problem: Problem, eps: float, L: int | None = None, max_level: int = 4,
                  seed: int = 0, workers: int = 1, cost: str = "model", n_warm: int = N_WARM,
                  alpha: float | None = None, screen: bool = True) -> MLResult:
    """Multilevel Monte Carlo with optimal sample sizes.

    With ``L`` given the hierarchy is fixed; otherwise levels are added until
    ``|Y_L| <= (2^alpha - 1) eps / sqrt(2)``, with alpha fitted from the data
    (clipped to [1, 4]) unless supplied.
    """
    return _ml_driver(problem, eps, L, max_level, seed, workers, cost, n_warm, alpha, MLMC,
                      screen)


def mlmc_homotopy_estimate(problem: Problem, eps: float, L: int = 3, seed: int = 0,
                           workers: int = 1, cost: str = "model", n_warm: int = N_WARM,
                           schedule: tuple | None = None, screen: bool = True) -> MLResult:
    """MLMC over the joint hierarchy (h_l, t_l); level 0 is the pure diffusion problem."""
    sched = homotopy_schedule(L) if schedule is None else tuple(schedule)
    if len(sched) != L + 1:
        raise ValueError("schedule must have L + 1 entries")
    p = replace(problem, schedule=sched)
    return _ml_driver(p, eps, L, L, seed, workers, cost, n_warm, None, MLMC_HOMOTOPY, screen)


# multilevel quasi-Monte Carlo

class _QMCLevel:
    """Shifted-lattice evaluations for one level, stored as (R, N) in lattice-index order."""

    def __init__(self, problem: Problem, level: int, z, R: int, seed: int):
        self.problem, self.level, self.z, self.R, self.seed = problem, level, z, R, seed
        self.N = 0
        self.out: list[list[SampleOut]] = [[] for _ in range(R)]

    def extend(self, N: int, workers: int):
        """Grow to N points per shift; the old points are the even indices of the new rule."""
        if N <= self.N:
            return
        rule = make_rule(self.z, self.problem.cfg.s, N, self.R, self.seed, self.level)
        if self.N == 0:
            new_idx = np.arange(N)
        else:
            step = N // self.N
            new_idx = np.array([k for k in range(N) if k % step])
        pts = np.vstack([rule.points(r, new_idx) for r in range(self.R)])
        res = evaluate_many(self.problem, self.level, pts, workers)
        m = len(new_idx)
        for r in range(self.R):
            fresh = dict(zip(new_idx.tolist(), res[r * m:(r + 1) * m]))
            step = N // self.N if self.N else 1
            merged = []
            for k in range(N):
                merged.append(self.out[r][k // step] if self.N and k % step == 0 else fresh[k])
            self.out[r] = merged
        self.N = N

    def stats(self, mode: str) -> LevelStats:
        d = np.array([[o.diff for o in row] for row in self.out])
        v = np.array([[o.val for o in row] for row in self.out])
        shift_means = d.mean(axis=1)
        its = [o.iters for row in self.out for o in row]
        if mode == "model":
            c = self.problem.model_cost(self.level)
        else:
            c = float(np.median([o.wall for row in self.out for o in row]))
        mse = _var(shift_means) / self.R
        return LevelStats(self.level, self.problem.h(self.level), self.problem.t(self.level),
                          self.N, float(shift_means.mean()), _var(d.ravel()),
                          float(v.mean()), _var(v.ravel()), c,
                          float(np.mean([i[-1] for i in its])), mse,
                          diffs=d, vals=v, iters=its)


def _pow2_ceil(x: float) -> int:
    return 1 if x <= 1 else 1 << math.ceil(math.log2(x) - 1e-12)


def mlqmc_sizes(N0: int, h, C, beta: float, eta: float = ETA_DEFAULT) -> list[int]:
    """N_l = N_0 [(h_l^beta / C_l) / (h_0^beta / C_0)]^{eta / (eta + 1)}, rounded up to 2^k."""
    if not 0.5 < eta <= 1.0:
        raise ValueError("eta must lie in (1/2, 1]")
    ref = h[0] ** beta / C[0]
    p = eta / (eta + 1.0)
    return [_pow2_ceil(N0 * ((hl**beta / cl) / ref) ** p) for hl, cl in zip(h, C)]


def mlqmc_estimate(problem: Problem, eps: float, L: int | None = None, max_level: int = 4,
                   eta: float = ETA_DEFAULT, R: int = DEFAULT_SHIFTS, z=None, seed: int = 0,
                   workers: int = 1, cost: str = "model", N0: int = 16, beta: float = 4.0,
                   alpha: float | None = None, screen: bool = True) -> MLResult:
    """Multilevel randomly shifted lattice estimator.

    Per level the estimate is the mean over R shifts of N_l-point lattice
    averages; its MSE is the variance over shifts divided by R. N_0 is doubled
    (reusing the embedded points) until the summed MSE is at most eps^2 / 2.
    """
    if not eps > 0:
        raise ValueError("eps must be positive")
    if R < 2:
        raise ValueError("need at least two shifts for an error estimate")
    if cost not in COST_MODES:
        raise ValueError(f"cost mode must be one of {COST_MODES}")
    if screen:
        stability_screen(problem, seed)
    z = read_generating_vector() if z is None else np.asarray(z)
    fixed = L is not None
    nlev = (L if fixed else min(2, max_level)) + 1
    levels = [_QMCLevel(problem, l, z, R, seed) for l in range(nlev)]
    n0 = _pow2_ceil(N0)
    while True:
        while True:
            for lv in levels:
                lv.extend(max(lv.N, 1), workers)
            st = [lv.stats(cost) for lv in levels]
            sizes = mlqmc_sizes(n0, [s.h for s in st], [s.cost_per_sample for s in st], beta, eta)
            grew = False
            for n, lv in zip(sizes, levels):
                if n > lv.N:
                    lv.extend(n, workers)
                    grew = True
            st = [lv.stats(cost) for lv in levels]
            if not grew and math.fsum(s.mse for s in st) <= eps**2 / 2:
                break
            if not grew:
                n0 *= 2
        a = alpha
        if a is None:
            try:
                a = float(np.clip(fit_rates(st)[0], 1.0, 4.0))
            except InsufficientLevels:
                a = 2.0
        bias = abs(st[-1].mean_diff) / (2.0**a - 1.0)
        if fixed or not bias > eps / math.sqrt(2.0):
            break
        if len(levels) > max_level:
            raise BiasNotMet(f"bias estimate {bias:.3e} above eps/sqrt2 at L={max_level}")
        levels.append(_QMCLevel(problem, len(levels), z, R, seed))
    est = math.fsum(s.mean_diff for s in st)
    stat = math.sqrt(math.fsum(s.mse for s in st))
    total = math.fsum(s.N * R * s.cost_per_sample for s in st)
    try:
        rates = fit_rates(st)
    except InsufficientLevels:
        rates = None
    ok = stat**2 + bias**2 <= eps**2 * (1 + 1e-12)
    res = MLResult(est, st, eps, bias, stat, total, rates, MLQMC, ok,
                   max(o.imag for lv in levels for row in lv.out for o in row))
    return _assert_positive(res)


def mc_for_eps(problem: Problem, eps: float, seed: int = 0, workers: int = 1,
               cost: str = "model", max_level: int = 4, n_pilot: int = N_WARM,
               alpha: float = 2.0) -> MLResult:
    """Plain MC at the coarsest level whose bias estimate meets eps/sqrt2, with N = 2 var / eps^2.

    The bias at level l is estimated from pilot differences as
    |E[lambda_l - lambda_{l-1}]| / (2^alpha - 1).
    """
    level, bias = 0, float("nan")
    for l in range(1, max_level + 1):
        pilot = _Level(problem, l, seed + 7919)
        pilot.extend(n_pilot, workers)
        bias = abs(pilot.stats(cost).mean_diff) / (2.0**alpha - 1.0)
        level = l
        if bias <= eps / math.sqrt(2.0):
            break
    else:
        raise BiasNotMet(f"bias estimate {bias:.3e} above eps/sqrt2 at L={max_level}")
    pilot = _Level(problem, level, seed, single=True)
    pilot.extend(n_pilot, workers)
    var = pilot.stats(cost).var_val
    N = max(n_pilot, math.ceil(2.0 * var / eps**2))
    res = mc_estimate(problem, level, N, seed, workers, cost, eps)
    res.bias_est = bias
    return res


def sample_levels(problem: Problem, L: int, N: int, seed: int = 0, workers: int = 1,
                  cost: str = "model", method: str = MLMC) -> MLResult:
    """N samples of the level differences on every level 0..L, with fitted rates."""
    if N < 2:
        raise ValueError("need N >= 2 samples per level")
    levels = [_Level(problem, l, seed) for l in range(L + 1)]
    for lv in levels:
        lv.extend(N, workers)
    st = [lv.stats(cost) for lv in levels]
    try:
        rates = fit_rates(st)
        alpha = float(np.clip(rates[0], 1.0, 4.0))
    except InsufficientLevels:
        rates, alpha = None, 2.0
    bias = abs(st[-1].mean_diff) / (2.0**alpha - 1.0) if L > 0 else float("nan")
    est = math.fsum(s.mean_diff for s in st)
    stat = math.sqrt(math.fsum(s.var_diff / s.N for s in st))
    total = math.fsum(s.N * s.cost_per_sample for s in st)
    res = MLResult(est, st, float("nan"), bias, stat, total, rates, method, True,
                   max(o.imag for lv in levels for o in lv.out))
    return _assert_positive(res)
