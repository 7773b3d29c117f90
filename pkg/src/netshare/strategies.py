"""Energy-optimal activation fractions under the three sharing strategies.

* full network sharing: every operator's active BSs serve the aggregate user
  population; all fractions are optimised jointly;
* no sharing: each operator sizes its own network for its own users;
* operator switch-off: one surviving operator serves everybody.

The joint problem is solved by a log-barrier interior-point method whose
inner loop is BFGS on central finite-difference gradients; the delay fixed
point is treated as a black box.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.optimize import minimize_scalar, nnls

from .delay import FixedPointError, FixedPointSpec, solve_delay_fixed_point, solve_delay_newton
from .domain import DelaySolution, NetworkModel
from .energy import bs_power
from .geometry import QuadratureSpec

log = logging.getLogger(__name__)

FEASIBILITY_RTOL = 1e-6


@dataclass(frozen=True)
class SolverOptions:
    fd_step: float = 1e-4
    starts: int = 5
    barrier_init: float = 1e-2
    barrier_final: float = 1e-8
    barrier_shrink: float = 0.01
    inner_max_iters: int = 60
    grad_tol: float = 1e-9
    # tolerance of the inner Newton delay solve
    fixed_point: FixedPointSpec = FixedPointSpec(rel_tol=1e-12, max_iters=500)
    quadrature: QuadratureSpec = QuadratureSpec()
    # full-NS service semantics; None keeps the model's own load_model
    load_model: Optional[str] = "aggregate"


@dataclass(frozen=True)
class StrategyResult:
    strategy: str
    betas: np.ndarray
    energy: float
    utilization: np.ndarray
    feasible: bool
    iterations: int = 0
    kkt_residual: float = math.nan
    reason: str = ""
    delay: Optional[DelaySolution] = None
    parts: tuple = ()

    @property
    def active_intensity(self) -> float:
        return float(sum(p for p in self.betas))


@dataclass
class _Point:
    betas: np.ndarray
    energy: float
    g: np.ndarray  # constraint values, feasible iff all <= 0
    delay: Optional[DelaySolution]

    @property
    def feasible(self) -> bool:
        return bool(np.all(self.g <= 0))


class _Problem:
    """Objective and constraints of one energy-minimisation problem, memoised by beta."""

    def __init__(self, m: NetworkModel, opts: SolverOptions):
        self.m = m
        self.opts = opts
        self.tau0 = m.reference_delay
        self.cache: dict = {}
        self.evals = 0

    def __call__(self, betas) -> _Point:
        betas = np.asarray(betas, dtype=float)
        key = tuple(np.round(betas, 15))
        hit = self.cache.get(key)
        if hit is not None:
            return hit
        self.evals += 1
        m = self.m.with_betas(betas)
        n = m.n_operators
        if m.total_active_intensity <= 0:
            pt = _Point(betas, 0.0, np.full(n + len(m.classes), math.inf), None)
        else:
            try:
                d = solve_delay_newton(m, self.opts.fixed_point.rel_tol, q=self.opts.quadrature)
            except FixedPointError:
                pt = _Point(betas, math.inf, np.full(n + len(m.classes), math.inf), None)
            else:
                util = d.tau_ref / self.tau0
                # per-operator: BSs cannot run above full utilisation; mixture: the stated QoS bound
                tau0_j = np.array([c.target_delay for c in m.classes])
                g = np.concatenate([util - 1.0, d.tau_bar_mix / tau0_j - 1.0])
                energy = _energy(m, np.minimum(util, 1.0))
                pt = _Point(betas, energy, g, d)
        self.cache[key] = pt
        return pt


def _energy(m: NetworkModel, util: np.ndarray) -> float:
    P = m.radio.transmit_power
    return math.fsum(op.active_intensity * bs_power(float(u), op.energy, P)
                     for op, u in zip(m.operators, util))


def _barrier(prob: _Problem, mu: float, scale: float) -> Callable[[np.ndarray], float]:
    def phi(b: np.ndarray) -> float:
        if np.any(b <= 0) or np.any(b >= 1):
            return math.inf
        pt = prob(b)
        if not np.all(pt.g < 0) or not math.isfinite(pt.energy):
            return math.inf
        return (pt.energy / scale
                - mu * (np.log(-pt.g).sum() + np.log(b).sum() + np.log1p(-b).sum()))
    return phi


def _fd_grad(phi, b: np.ndarray, h: float) -> np.ndarray:
    g = np.empty_like(b)
    for k in range(len(b)):
        step = min(h, 0.5 * b[k], 0.5 * (1 - b[k]))
        e = np.zeros_like(b)
        e[k] = step
        fp, fm = phi(b + e), phi(b - e)
        if math.isfinite(fp) and math.isfinite(fm):
            g[k] = (fp - fm) / (2 * step)
        elif math.isfinite(fm):
            g[k] = (phi(b) - fm) / step
        elif math.isfinite(fp):
            g[k] = (fp - phi(b)) / step
        else:
            g[k] = 0.0
    return g


def _bfgs(phi, x: np.ndarray, h: float, max_iters: int, tol: float) -> tuple[np.ndarray, int, float]:
    """Minimise a barrier function from a strictly feasible start; returns (x, iterations, |grad|)."""
    n = len(x)
    H = np.eye(n) * 1e-2
    f = phi(x)
    g = _fd_grad(phi, x, h)
    it = 0
    for it in range(1, max_iters + 1):
        if np.linalg.norm(g) <= tol:
            break
        p = -H @ g
        if p @ g >= 0:
            H = np.eye(n) * 1e-2
            p = -H @ g
        # stay inside the box
        with np.errstate(divide="ignore", invalid="ignore"):
            lim = np.where(p > 0, (1 - x) / p, np.where(p < 0, -x / p, np.inf))
        t = min(1.0, 0.99 * float(lim.min()))
        accepted = False
        while t > 1e-14:
            xn = x + t * p
            fn = phi(xn)
            if math.isfinite(fn) and fn <= f + 1e-4 * t * (g @ p):
                accepted = True
                break
            t *= 0.5
        if not accepted:
            break
        gn = _fd_grad(phi, xn, h)
        s, y = xn - x, gn - g
        sy = s @ y
        if sy > 1e-16:
            if it == 1:
                H = np.eye(n) * (sy / (y @ y))
            rho = 1.0 / sy
            V = np.eye(n) - rho * np.outer(s, y)
            H = V @ H @ V.T + rho * np.outer(s, s)
        step_small = np.max(np.abs(s)) < 1e-12
        x, f, g = xn, fn, gn
        if step_small:
            break
    return x, it, float(np.linalg.norm(g))


def _strictly_feasible_start(prob: _Problem, start: np.ndarray, anchor: np.ndarray) -> Optional[np.ndarray]:
    """Move from ``start`` toward the feasible ``anchor`` until strictly feasible."""
    if np.all(prob(start).g < 0):
        return start
    lo, hi = 0.0, 1.0  # fraction of the way to the anchor
    for _ in range(40):
        mid = 0.5 * (lo + hi)
        if np.all(prob(start + mid * (anchor - start)).g < 0):
            hi = mid
        else:
            lo = mid
    x = start + hi * (anchor - start)
    return x if np.all(prob(x).g < 0) else None


def minimal_feasible_beta(check: Callable[[float], bool], tol: float = 1e-10) -> Optional[float]:
    """Smallest s in (0, 1] with ``check(s)`` true, assuming monotone feasibility."""
    if not check(1.0):
        return None
    lo, hi = 0.0, 1.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if check(mid):
            hi = mid
        else:
            lo = mid
    return hi


def _default_starts(prob: _Problem, n: int, count: int, eps: float) -> list[np.ndarray]:
    """Deterministic multi-start list: all-on corner, one-on corners, centre, symmetric point."""
    hi, lo = 1.0 - eps, eps
    starts = [np.full(n, hi)]
    if n > 1:
        for i in range(n):
            b = np.full(n, lo)
            b[i] = hi
            starts.append(b)
    starts.append(np.full(n, 0.5))
    sym = minimal_feasible_beta(lambda s: bool(np.all(prob(np.full(n, s)).g <= 0)), tol=1e-6)
    if sym is not None:
        starts.append(np.full(n, min(hi, sym + 10 * eps + 1e-3)))
    unique = []
    for s in starts:
        if not any(np.allclose(s, u) for u in unique):
            unique.append(s)
    return unique[:max(1, count)]


def _polish(prob: _Problem, b: np.ndarray, tol: float = 1e-6) -> np.ndarray:
    """Snap fractions hugging a bound onto it when that stays feasible and does not cost energy."""
    best = b.copy()
    for k in range(len(b)):
        for target in (0.0, 1.0):
            if abs(best[k] - target) < tol:
                trial = best.copy()
                trial[k] = target
                if prob(trial).feasible and prob(trial).energy <= prob(best).energy:
                    best = trial
    return best


def _kkt_residual(prob: _Problem, x: np.ndarray, scale: float, h: float, active_tol: float = 1e-5) -> float:
    """Stationarity residual ``min_{mu >= 0} |grad f + sum mu_k grad g_k|`` over active constraints.

    Constraints include the box bounds; f is the energy over ``scale``.
    """
    n = len(x)
    pt = prob(x)

    def fd(fun):
        out = np.empty((n,) + np.shape(fun(x)))
        for k in range(n):
            e = np.zeros(n)
            lo, hi = max(x[k] - h, 0.0), min(x[k] + h, 1.0)
            e[k] = 1.0
            out[k] = (fun(x + (hi - x[k]) * e) - fun(x + (lo - x[k]) * e)) / (hi - lo)
        return out

    grad_f = fd(lambda b: prob(b).energy / scale)
    cols = []
    grad_g = fd(lambda b: prob(b).g)
    for k in np.flatnonzero(pt.g >= -active_tol):
        cols.append(grad_g[:, k])
    for k in range(n):
        if x[k] <= active_tol:
            cols.append(-np.eye(n)[k])
        if x[k] >= 1 - active_tol:
            cols.append(np.eye(n)[k])
    if not cols:
        return float(np.linalg.norm(grad_f))
    _, res = nnls(np.column_stack(cols), -grad_f)
    return float(res)


def _interior_point(prob: _Problem, opts: SolverOptions, starts: Optional[Sequence] = None):
    n = prob.m.n_operators
    eps = 1e-6
    anchor = np.full(n, 1.0 - eps)
    if not prob(np.ones(n)).feasible:
        return None, 0, math.nan, "infeasible even with every BS active"
    if not np.all(prob(anchor).g < 0):
        # full activation only just meets the targets; nothing to optimise
        return np.ones(n), 0, 0.0, ""
    if starts is None:
        starts = _default_starts(prob, n, opts.starts, eps)
    scale = max(prob(np.ones(n)).energy, 1e-300)
    results = []
    total_iters = 0
    for idx, s in enumerate(starts):
        x = _strictly_feasible_start(prob, np.clip(np.asarray(s, dtype=float), eps, 1 - eps), anchor)
        if x is None:
            continue
        mu = opts.barrier_init
        while True:
            x, it, _ = _bfgs(_barrier(prob, mu, scale), x, opts.fd_step, opts.inner_max_iters, opts.grad_tol)
            total_iters += it
            if mu <= opts.barrier_final:
                break
            mu = max(mu * opts.barrier_shrink, opts.barrier_final)
        x = _polish(prob, x)
        pt = prob(x)
        if pt.feasible:
            results.append((pt.energy, tuple(x), idx))
    if not results:
        return None, total_iters, math.nan, "no start converged to a feasible point"
    best_e = min(r[0] for r in results)
    ties = [r for r in results if r[0] <= best_e * (1 + 1e-9)]
    ties.sort(key=lambda r: r[1])
    xb = np.array(ties[0][1])
    return xb, total_iters, _kkt_residual(prob, xb, scale, opts.fd_step), ""


def _certify(m: NetworkModel, betas: np.ndarray, q: QuadratureSpec) -> tuple[bool, Optional[DelaySolution]]:
    """Independent re-check with a default-tolerance delay solve."""
    mb = m.with_betas(betas)
    if mb.total_active_intensity <= 0:
        return bool(np.all(m.user_intensities == 0)), None
    d = solve_delay_fixed_point(mb, FixedPointSpec(), q)
    tau0_j = np.array([c.target_delay for c in m.classes])
    ok = (np.all(d.tau_bar_mix <= tau0_j * (1 + FEASIBILITY_RTOL))
          and np.all(d.tau_ref <= m.reference_delay * (1 + FEASIBILITY_RTOL)))
    return bool(ok), d


def _result(tag: str, m: NetworkModel, betas: Optional[np.ndarray], iters: int, kkt: float,
            reason: str, q: QuadratureSpec) -> StrategyResult:
    n = m.n_operators
    if betas is None:
        return StrategyResult(tag, np.full(n, math.nan), math.nan, np.full(n, math.nan), False,
                              iters, kkt, reason)
    ok, d = _certify(m, betas, q)
    if d is None:
        return StrategyResult(tag, betas, 0.0, np.zeros(n), ok, iters, kkt, reason)
    util = d.tau_ref / m.reference_delay
    energy = _energy(m.with_betas(betas), np.minimum(util, 1.0))
    return StrategyResult(tag, betas, energy, np.where(betas > 0, util, 0.0), ok, iters, kkt,
                          reason if ok else "failed independent feasibility re-check", d)


def optimize_full_ns(m: NetworkModel, opts: SolverOptions = SolverOptions(),
                     starts: Optional[Sequence] = None) -> StrategyResult:
    """Jointly minimise the network power over all activation fractions.

    Returns an infeasible result (not an exception) when even full activation
    cannot meet the delay targets.
    """
    if opts.load_model is not None:
        m = replace(m, load_model=opts.load_model)
    n = m.n_operators
    if np.all(m.user_intensities == 0):
        return _result("full-ns", m, np.zeros(n), 0, 0.0, "", opts.quadrature)
    prob = _Problem(m, opts)
    betas, iters, kkt, reason = _interior_point(prob, opts, starts)
    return _result("full-ns", m, betas, iters, kkt, reason, opts.quadrature)


def _optimize_scalar(prob: _Problem, tol: float = 1e-10):
    """One operator: bisect the feasibility boundary, then bounded Brent above it.

    Feasibility is monotone in beta for a single operator (more BSs, less
    load each), so the feasible set is ``[beta_min, 1]``.
    """
    lo = minimal_feasible_beta(lambda b: prob(np.array([b])).feasible, tol=tol)
    if lo is None:
        return None, 0, math.nan, "infeasible even with every BS active"
    energy = lambda b: prob(np.array([b])).energy
    best_b = min((lo, 1.0), key=energy)
    iters = 0
    if lo < 1.0:
        res = minimize_scalar(energy, bounds=(lo, 1.0), method="bounded", options={"xatol": tol})
        iters = int(res.nfev)
        if prob(np.array([res.x])).feasible and energy(res.x) < energy(best_b):
            best_b = float(res.x)
    # stationarity residual: one-sided slope at a bound, plain slope inside
    h = min(1e-6, max(best_b - lo, 1e-12), max(1.0 - best_b, 1e-12))
    slope = (energy(best_b + h) - energy(best_b - h)) / (2 * h) if lo < best_b < 1.0 else 0.0
    return np.array([best_b]), iters, abs(slope), ""


def _optimize_single(m1: NetworkModel, opts: SolverOptions, tag: str) -> StrategyResult:
    if m1.operators[0].user_intensity == 0:
        return _result(tag, m1, np.zeros(1), 0, 0.0, "", opts.quadrature)
    betas, iters, kkt, reason = _optimize_scalar(_Problem(m1, opts))
    return _result(tag, m1, betas, iters, kkt, reason, opts.quadrature)


def self_sufficiency(m: NetworkModel, opts: SolverOptions = SolverOptions()) -> list[bool]:
    """Whether each operator alone, fully active, meets its own users' targets."""
    out = []
    for i in range(m.n_operators):
        m1 = m.single_operator(i)
        if m1.operators[0].user_intensity == 0:
            out.append(True)
            continue
        out.append(_Problem(m1, opts)(np.ones(1)).feasible)
    return out


def optimize_no_sharing(m: NetworkModel, opts: SolverOptions = SolverOptions()) -> StrategyResult:
    """Each operator independently minimises its own power for its own users.

    The per-operator results are in ``parts``; the total is only feasible when
    every operator is.
    """
    parts = tuple(_optimize_single(m.single_operator(i), opts, f"no-sharing-{i}")
                  for i in range(m.n_operators))
    feasible = all(p.feasible for p in parts)
    betas = np.array([p.betas[0] for p in parts])
    util = np.array([p.utilization[0] for p in parts])
    energy = math.fsum(p.energy for p in parts) if feasible else math.nan
    reason = "" if feasible else "; ".join(f"operator {i}: {p.reason}" for i, p in enumerate(parts) if not p.feasible)
    return StrategyResult("no-sharing", betas, energy, util, feasible,
                          sum(p.iterations for p in parts),
                          max((p.kkt_residual for p in parts), default=math.nan), reason, None, parts)


def evaluate_switchoff(m: NetworkModel, survivor: int, opts: SolverOptions = SolverOptions()) -> StrategyResult:
    """Only ``survivor`` keeps BSs on and serves the users of every operator on its band."""
    if not 0 <= survivor < m.n_operators:
        raise IndexError(f"survivor {survivor} out of range")
    m1 = m.single_operator(survivor, user_intensity=float(m.user_intensities.sum()))
    res = _optimize_single(m1, opts, f"switchoff-{survivor}")
    n = m.n_operators
    betas = np.zeros(n)
    util = np.zeros(n)
    betas[survivor] = res.betas[0]
    util[survivor] = res.utilization[0]
    return replace(res, betas=betas, utilization=util)


@dataclass(frozen=True)
class Saving:
    strategy: str
    percent: float
    included: bool
    reason: str = ""


def savings_report(baseline: StrategyResult, alternatives: Sequence[StrategyResult]) -> list[Saving]:
    """Percentage saving ``100 (1 - E_alt / E_base)`` of each alternative over the baseline."""
    if not baseline.feasible:
        raise ValueError("baseline is infeasible")
    if not baseline.energy > 0:
        raise ValueError("baseline energy is zero")
    out = []
    for alt in alternatives:
        if not alt.feasible:
            out.append(Saving(alt.strategy, math.nan, False, alt.reason or "infeasible"))
        else:
            out.append(Saving(alt.strategy, 100.0 * (1.0 - alt.energy / baseline.energy), True))
    return out


def grid_search_full_ns(m: NetworkModel, step: float = 0.01, opts: SolverOptions = SolverOptions(),
                        ) -> tuple[Optional[np.ndarray], float]:
    """Exhaustive search over the beta lattice with spacing ``step`` (oracle for the optimizer)."""
    if opts.load_model is not None:
        m = replace(m, load_model=opts.load_model)
    grid = np.round(np.arange(0.0, 1.0 + step / 2, step), 12)
    prob = _Problem(m, replace(opts, fixed_point=FixedPointSpec()))
    best_b, best_e = None, math.inf
    for b in np.stack(np.meshgrid(*([grid] * m.n_operators), indexing="ij"), -1).reshape(-1, m.n_operators):
        if not b.any():
            continue
        pt = prob(b)
        if pt.feasible and pt.energy < best_e:
            best_b, best_e = b.copy(), pt.energy
    return best_b, best_e


STRATEGIES = ("full-ns", "no-sharing", "switchoff")


def best_switchoff(m: NetworkModel, opts: SolverOptions = SolverOptions()) -> StrategyResult:
    """Cheapest feasible survivor; per-survivor results are kept in ``parts``."""
    parts = tuple(evaluate_switchoff(m, s, opts) for s in range(m.n_operators))
    feasible = [p for p in parts if p.feasible]
    if not feasible:
        n = m.n_operators
        return StrategyResult("switchoff", np.full(n, math.nan), math.nan, np.full(n, math.nan), False,
                              reason="no survivor can serve all users", parts=parts)
    best = min(feasible, key=lambda p: (p.energy, tuple(p.betas)))
    return replace(best, strategy="switchoff", parts=parts)


def evaluate_strategies(m: NetworkModel, strategies: Sequence[str] = STRATEGIES,
                        opts: SolverOptions = SolverOptions()) -> dict:
    """Run the requested strategies on one slot; returns tag -> result."""
    runners = {"full-ns": optimize_full_ns, "no-sharing": optimize_no_sharing, "switchoff": best_switchoff}
    unknown = set(strategies) - set(runners)
    if unknown:
        raise ValueError(f"unknown strategies {sorted(unknown)}")
    return {s: runners[s](m, opts) for s in strategies}


def aggregate_savings(slots: Sequence[dict], baseline: str = "no-sharing") -> dict:
    """Savings summed over a period: ``100 (1 - sum E_alt / sum E_base)``.

    Slots where either the baseline or the alternative is infeasible are left
    out of that alternative's sums; the count of slots used is returned too.
    """
    out = {}
    tags = [t for t in slots[0] if t != baseline] if slots else []
    for tag in tags:
        used = [s for s in slots if s[baseline].feasible and s[tag].feasible]
        base = math.fsum(s[baseline].energy for s in used)
        alt = math.fsum(s[tag].energy for s in used)
        pct = 100.0 * (1.0 - alt / base) if base > 0 else math.nan
        out[tag] = (pct, len(used))
    return out


def no_sharing_capacity(m: NetworkModel, i: int, opts: SolverOptions = SolverOptions(),
                        rel_tol: float = 1e-6) -> float:
    """Largest user intensity operator ``i`` can serve alone with every BS active."""
    def ok(lu: float) -> bool:
        return _Problem(m.single_operator(i, user_intensity=lu), opts)(np.ones(1)).feasible

    lo, hi = 0.0, max(float(m.user_intensities[i]), m.operators[i].deployed_intensity, 1e-12)
    while ok(hi):
        lo, hi = hi, 2.0 * hi
    while hi - lo > rel_tol * hi:
        mid = 0.5 * (lo + hi)
        lo, hi = (mid, hi) if ok(mid) else (lo, mid)
    return lo
