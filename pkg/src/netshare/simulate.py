"""Monte Carlo realisation of the multi-operator network on a torus.

Used as the oracle for the analytical engine: serving shares, mean
interference and Palm ideal per-bit delays are estimated from explicit PPP
realisations.  Interferers are thinned by a busy probability (the
utilisation of their operator) instead of simulating queues, so this checks
the analytical model against its own assumptions, not against a real RAN.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy.spatial import cKDTree

from .domain import NetworkModel
from .geometry import sample_ppp

log = logging.getLogger(__name__)

ASSOCIATIONS = ("nearest", "max-mean-sinr")


@dataclass(frozen=True)
class SimSpec:
    window: float = 10_000.0
    replicates: int = 200
    seed: int = 0
    association: str = "nearest"
    sharing: bool = True
    trace_dir: Optional[str] = None

    def check(self, m: NetworkModel) -> None:
        lam = m.total_active_intensity
        if lam > 0 and self.window < 10.0 / math.sqrt(lam):
            raise ValueError("window side must be at least 10 / sqrt(sum beta lambda)")
        if self.replicates < 1:
            raise ValueError("replicates must be >= 1")
        if self.association not in ASSOCIATIONS:
            raise ValueError(f"association must be one of {ASSOCIATIONS}")


@dataclass
class Realization:
    side: float
    bs_xy: np.ndarray
    bs_op: np.ndarray
    bs_site: np.ndarray
    bs_active: np.ndarray
    bs_subband: np.ndarray
    bs_busy: np.ndarray
    user_xy: np.ndarray
    user_op: np.ndarray
    user_class: np.ndarray
    rng: np.random.Generator = field(repr=False)


@dataclass(frozen=True)
class Estimate:
    """Monte Carlo estimate with its standard error."""

    mean: float
    stderr: float
    n: int

    def agrees(self, target: float, rel_tol: float, n_sigma: float = 3.0) -> bool:
        return abs(self.mean - target) <= rel_tol * abs(target) + n_sigma * self.stderr


def replicate_rng(seed: int, replicate: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(replicate)]))


def torus_delta(a: np.ndarray, b: np.ndarray, side: float) -> np.ndarray:
    d = np.abs(a - b)
    return np.minimum(d, side - d)


def realize_network(m: NetworkModel, spec: SimSpec, replicate: int,
                    busy: Optional[Sequence[float]] = None) -> Realization:
    """Draw BSs (with co-located sites and sleep thinning) and users for one replicate.

    Co-located sites form a common PPP of intensity ``c * sum(lambda) / I``
    carrying one BS per operator; the rest of each operator's deployment is an
    independent PPP.  Each BS is then active with probability beta_i, uses a
    uniformly drawn reuse sub-band, and is busy with probability ``busy[i]``.
    """
    rng = replicate_rng(spec.seed, replicate)
    side = spec.window
    win = (0.0, 0.0, side, side)
    n_op = m.n_operators
    lam = np.array([op.deployed_intensity for op in m.operators])
    site_c = m.colocation * lam.sum() / n_op

    xy, ops, sites = [], [], []
    shared = sample_ppp(site_c, win, rng)
    for i in range(n_op):
        xy.append(shared)
        ops.append(np.full(len(shared), i))
        sites.append(np.arange(len(shared)))
    next_site = len(shared)
    for i in range(n_op):
        own_lam = lam[i] - site_c
        if own_lam < 0:
            log.warning("operator %d: co-located share exceeds its deployment; clamping", i)
            own_lam = 0.0
        pts = sample_ppp(own_lam, win, rng)
        xy.append(pts)
        ops.append(np.full(len(pts), i))
        sites.append(np.arange(next_site, next_site + len(pts)))
        next_site += len(pts)
    bs_xy = np.concatenate(xy) if xy else np.empty((0, 2))
    bs_op = np.concatenate(ops).astype(int)
    bs_site = np.concatenate(sites).astype(int)
    beta = m.betas
    bs_active = rng.random(len(bs_op)) < beta[bs_op]
    bs_subband = rng.integers(0, m.radio.reuse_factor, len(bs_op))
    busy = np.zeros(n_op) if busy is None else np.clip(np.asarray(busy, dtype=float), 0.0, 1.0)
    bs_busy = rng.random(len(bs_op)) < busy[bs_op]

    uxy, uop, ucls = [], [], []
    for i, op in enumerate(m.operators):
        for j, cls in enumerate(m.classes):
            pts = sample_ppp(op.user_intensity * cls.share, win, rng)
            uxy.append(pts)
            uop.append(np.full(len(pts), i))
            ucls.append(np.full(len(pts), j))
    return Realization(
        side=side,
        bs_xy=bs_xy,
        bs_op=bs_op,
        bs_site=bs_site,
        bs_active=bs_active,
        bs_subband=bs_subband,
        bs_busy=bs_busy,
        user_xy=np.concatenate(uxy) if uxy else np.empty((0, 2)),
        user_op=np.concatenate(uop).astype(int) if uop else np.empty(0, int),
        user_class=np.concatenate(ucls).astype(int) if ucls else np.empty(0, int),
        rng=rng,
    )


def _nearest_active(real: Realization, candidates: np.ndarray, users: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Serving BS index (into the BS arrays) and distance for ``users``.

    BSs at one site are the same point; ties among them are broken uniformly.
    """
    if len(candidates) == 0 or len(users) == 0:
        return np.full(len(users), -1), np.full(len(users), np.inf)
    sites, first, inverse = np.unique(real.bs_site[candidates], return_index=True, return_inverse=True)
    tree = cKDTree(np.mod(real.bs_xy[candidates[first]], real.side), boxsize=real.side)
    dist, site_idx = tree.query(np.mod(real.user_xy[users], real.side))
    # group candidate BSs by site, then draw one uniformly per user
    order = np.argsort(inverse, kind="stable")
    counts = np.bincount(inverse, minlength=len(sites))
    starts = np.concatenate([[0], np.cumsum(counts)[:-1]])
    pick = (real.rng.random(len(users)) * counts[site_idx]).astype(int)
    serving = candidates[order[starts[site_idx] + pick]]
    return serving, dist


def associate(real: Realization, m: NetworkModel, spec: SimSpec,
              busy: Optional[Sequence[float]] = None) -> tuple[np.ndarray, np.ndarray]:
    """Serving BS and distance for every user (-1 / inf when none is reachable)."""
    n_users = len(real.user_xy)
    serving = np.full(n_users, -1)
    dist = np.full(n_users, np.inf)
    active = np.flatnonzero(real.bs_active)
    if spec.association == "max-mean-sinr":
        return _associate_max_sinr(real, m, spec, active, busy)
    if spec.sharing:
        users = np.arange(n_users)
        serving, dist = _nearest_active(real, active, users)
    else:
        for i in range(m.n_operators):
            users = np.flatnonzero(real.user_op == i)
            cand = active[real.bs_op[active] == i]
            s, d = _nearest_active(real, cand, users)
            serving[users], dist[users] = s, d
    return serving, dist


def _associate_max_sinr(real, m, spec, active, busy, n_candidates: int = 8):
    """Pick, among the nearest few active BSs, the one with the largest mean SINR.

    Mean SINR uses the mean-interference closure for the candidate's operator.
    """
    from .radio import mean_interference

    busy = np.zeros(m.n_operators) if busy is None else np.asarray(busy, dtype=float)
    n_users = len(real.user_xy)
    serving = np.full(n_users, -1)
    dist = np.full(n_users, np.inf)
    if len(active) == 0 or n_users == 0:
        return serving, dist
    tree = cKDTree(np.mod(real.bs_xy[active], real.side), boxsize=real.side)
    k = min(n_candidates, len(active))
    d, idx = tree.query(np.mod(real.user_xy, real.side), k=k)
    d = np.atleast_2d(d.reshape(n_users, k))
    idx = np.atleast_2d(idx.reshape(n_users, k))
    cand = active[idx]
    if not spec.sharing:
        d = np.where(real.bs_op[cand] == real.user_op[:, None], d, np.inf)
    radio = m.radio
    rc = np.maximum(d, radio.min_distance)
    sinr = np.full(d.shape, -np.inf)
    tau0 = m.reference_delay
    for i in range(m.n_operators):
        sel = (real.bs_op[cand] == i) & np.isfinite(d)
        if not sel.any():
            continue
        interf = mean_interference(rc[sel], m, i, busy[i] * tau0)
        sinr[sel] = radio.transmit_power * rc[sel] ** (-radio.pathloss_exponent) / (
            radio.effective_noise(i) + interf)
    best = np.argmax(sinr, axis=1)
    rows = np.arange(n_users)
    ok = np.isfinite(sinr[rows, best])
    serving[ok] = cand[rows, best][ok]
    dist[ok] = d[rows, best][ok]
    return serving, dist


def user_interference(real: Realization, m: NetworkModel, users: np.ndarray, serving: np.ndarray,
                      chunk: int = 2048) -> np.ndarray:
    """Realised interference at each user: busy, active, same-operator, same-sub-band BSs except the server."""
    alpha = m.radio.pathloss_exponent
    P = m.radio.transmit_power
    out = np.zeros(len(users))
    transmitting = real.bs_active & real.bs_busy
    for i in range(m.n_operators):
        for band in range(m.radio.reuse_factor):
            src = np.flatnonzero(transmitting & (real.bs_op == i) & (real.bs_subband == band))
            tgt = np.flatnonzero((real.bs_op[serving] == i) & (real.bs_subband[serving] == band))
            if len(src) == 0 or len(tgt) == 0:
                continue
            sxy = real.bs_xy[src]
            for s in range(0, len(tgt), chunk):
                t = tgt[s:s + chunk]
                uxy = real.user_xy[users[t]]
                dx = torus_delta(uxy[:, None, 0], sxy[None, :, 0], real.side)
                dy = torus_delta(uxy[:, None, 1], sxy[None, :, 1], real.side)
                d2 = dx * dx + dy * dy
                contrib = P * np.maximum(d2, m.radio.min_distance**2) ** (-alpha / 2)
                contrib[src[None, :] == serving[t][:, None]] = 0.0
                out[t] = contrib.sum(axis=1)
    return out


@dataclass
class PalmSample:
    """Per-user samples from one replicate."""

    serving_op: np.ndarray
    user_class: np.ndarray
    delay: np.ndarray
    interference: np.ndarray
    distance: np.ndarray


def empirical_palm_delay(real: Realization, m: NetworkModel, spec: SimSpec,
                         busy: Optional[Sequence[float]] = None) -> PalmSample:
    """Per-user ideal per-bit delay ``sum_k w_k N_k / (w_j C)`` in one realisation.

    With the aggregate load model every user attached to a BS adds to its
    load.  With the per-operator literal model a BS of operator i only counts
    users whose home operator is i, plus the user under evaluation.
    """
    serving, dist = associate(real, m, spec, busy)
    ok = serving >= 0
    users = np.flatnonzero(ok)
    serving = serving[ok]
    dist = dist[ok]
    weights = np.array([c.weight for c in m.classes])
    w_user = weights[real.user_class[users]]
    n_bs = len(real.bs_op)
    load_all = np.bincount(serving, weights=w_user, minlength=n_bs)
    if m.load_model == "aggregate":
        load = load_all[serving]
    else:
        home = real.user_op[users] == real.bs_op[serving]
        load_own = np.bincount(serving[home], weights=w_user[home], minlength=n_bs)
        load = load_own[serving] + np.where(home, 0.0, w_user)
    interf = user_interference(real, m, users, serving)
    radio = m.radio
    rc = np.maximum(dist, radio.min_distance)
    op = real.bs_op[serving]
    noise = np.array([radio.effective_noise(i) for i in range(m.n_operators)])[op]
    bw = np.array([radio.effective_bandwidth(i) for i in range(m.n_operators)])[op]
    cap = bw * np.log2(1.0 + radio.transmit_power * rc ** (-radio.pathloss_exponent) / (noise + interf))
    delay = load / (w_user * cap)
    if spec.trace_dir is not None:
        _write_trace(spec, real, users, op, delay, interf, dist)
    return PalmSample(serving_op=op, user_class=real.user_class[users], delay=delay,
                      interference=interf, distance=dist)


def _write_trace(spec: SimSpec, real: Realization, users, op, delay, interf, dist) -> None:
    path = Path(spec.trace_dir)
    path.mkdir(parents=True, exist_ok=True)
    idx = len(list(path.glob("replicate_*.csv")))
    with open(path / f"replicate_{idx:04d}.csv", "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["user", "home_op", "class", "serving_op", "distance_m", "interference_w", "delay_s_per_bit"])
        for k, u in enumerate(users):
            w.writerow([int(u), int(real.user_op[u]), int(real.user_class[u]), int(op[k]),
                        f"{dist[k]:.6f}", f"{interf[k]:.6e}", f"{delay[k]:.6e}"])


def _ratio_estimate(sums: np.ndarray, counts: np.ndarray) -> Estimate:
    """Pooled mean over replicates with a delta-method standard error."""
    total_n = counts.sum()
    if total_n == 0:
        return Estimate(math.nan, math.nan, 0)
    mean = math.fsum(sums) / total_n
    k = len(sums)
    if k < 2:
        return Estimate(mean, math.inf, int(total_n))
    resid = sums - mean * counts
    se = math.sqrt(k / (k - 1) * np.sum(resid**2)) / total_n
    return Estimate(mean, se, int(total_n))


@dataclass
class PalmReport:
    delay: dict  # (class j, operator i) -> Estimate
    shares: list  # per operator Estimate
    busy: np.ndarray
    replicates: int


def monte_carlo_palm(m: NetworkModel, spec: SimSpec, busy: Optional[Sequence[float]] = None,
                     calibration_rounds: int = 3, calibration_replicates: int = 20) -> PalmReport:
    """Estimate Palm delays and serving shares over ``spec.replicates`` replicates.

    When ``busy`` is not supplied the interferer busy probabilities are found
    self-consistently from the simulation itself: starting from idle
    interferers, a few short calibration runs set ``busy_i`` to the empirical
    reference-class delay over its target.
    """
    spec.check(m)
    tau0 = m.reference_delay
    J = len(m.classes)
    if busy is None:
        b = np.zeros(m.n_operators)
        for rnd in range(calibration_rounds):
            cal = SimSpec(window=spec.window, replicates=calibration_replicates,
                          seed=spec.seed + 7919 * (rnd + 1), association=spec.association,
                          sharing=spec.sharing)
            rep = _run(m, cal, b, J)
            b = np.array([
                min(1.0, rep.delay[(J - 1, i)].mean / tau0) if rep.delay[(J - 1, i)].n else 0.0
                for i in range(m.n_operators)
            ])
        busy = b
    return _run(m, spec, np.asarray(busy, dtype=float), J)


def _run(m: NetworkModel, spec: SimSpec, busy: np.ndarray, J: int) -> PalmReport:
    n_op = m.n_operators
    sums = np.zeros((spec.replicates, J, n_op))
    counts = np.zeros((spec.replicates, J, n_op))
    served = np.zeros((spec.replicates, n_op))
    for rep in range(spec.replicates):
        real = realize_network(m, spec, rep, busy)
        sample = empirical_palm_delay(real, m, spec, busy)
        np.add.at(sums[rep], (sample.user_class, sample.serving_op), sample.delay)
        np.add.at(counts[rep], (sample.user_class, sample.serving_op), 1.0)
        served[rep] = np.bincount(sample.serving_op, minlength=n_op)
    delay = {(j, i): _ratio_estimate(sums[:, j, i], counts[:, j, i]) for j in range(J) for i in range(n_op)}
    tot = served.sum(axis=1)
    shares = [_ratio_estimate(served[:, i], tot) for i in range(n_op)]
    return PalmReport(delay=delay, shares=shares, busy=busy, replicates=spec.replicates)


def empirical_serving_shares(realizations: Sequence[Realization], m: NetworkModel,
                             spec: SimSpec) -> list[Estimate]:
    """Fraction of users served by each operator, pooled over realisations."""
    n_op = m.n_operators
    served = np.zeros((len(realizations), n_op))
    for k, real in enumerate(realizations):
        serving, _ = associate(real, m, spec)
        op = real.bs_op[serving[serving >= 0]]
        served[k] = np.bincount(op, minlength=n_op)
    tot = served.sum(axis=1)
    return [_ratio_estimate(served[:, i], tot) for i in range(n_op)]


def empirical_interference(real: Realization, m: NetworkModel, probe: np.ndarray, serving: int) -> float:
    """Realised interference at ``probe`` when served by BS index ``serving``."""
    real_probe = Realization(
        side=real.side, bs_xy=real.bs_xy, bs_op=real.bs_op, bs_site=real.bs_site,
        bs_active=real.bs_active, bs_subband=real.bs_subband, bs_busy=real.bs_busy,
        user_xy=np.atleast_2d(probe), user_op=np.array([real.bs_op[serving]]),
        user_class=np.array([0]), rng=real.rng,
    )
    return float(user_interference(real_probe, m, np.array([0]), np.array([serving]))[0])


def campbell_interference(m: NetworkModel, i: int, r: float, tau_ref: float, realizations: int = 500,
                          probes: int = 16, seed: int = 0, tail_tol: float = 2e-3) -> Estimate:
    """Mean interference at distance ``r`` from the serving BS, by direct summation.

    Each realisation is a PPP of operator-i BSs of intensity beta_i lambda_i on
    a torus large enough that the truncated far field is below ``tail_tol``
    (relative).  Probes sit on a grid; interferers closer than ``r`` to a probe
    are discarded (the serving BS is the nearest), the rest transmit on the
    probe's sub-band with probability 1/k and are busy with probability
    ``tau_ref / tau0_J``.
    """
    alpha = m.radio.pathloss_exponent
    lam = m.operators[i].active_intensity
    P = m.radio.transmit_power
    k = m.radio.reuse_factor
    busy = min(1.0, tau_ref / m.reference_delay)
    if lam == 0 or busy == 0:
        return Estimate(0.0, 0.0, realizations)
    reach = r * tail_tol ** (-1.0 / (alpha - 2.0))
    side = 2.0 * reach
    g = int(math.ceil(math.sqrt(probes)))
    grid = (np.arange(g) + 0.5) / g * side
    pxy = np.array([(a, b) for a in grid for b in grid])[:probes]
    vals = np.empty(realizations)
    for rep in range(realizations):
        rng = replicate_rng(seed, rep)
        pts = sample_ppp(lam, (0.0, 0.0, side, side), rng)
        on = (rng.random(len(pts)) < busy) & (rng.integers(0, k, len(pts)) == 0)
        pts = pts[on]
        if len(pts) == 0:
            vals[rep] = 0.0
            continue
        dx = torus_delta(pxy[:, None, 0], pts[None, :, 0], side)
        dy = torus_delta(pxy[:, None, 1], pts[None, :, 1], side)
        d2 = dx * dx + dy * dy
        # torus distance never exceeds side/sqrt(2); keep the disk of radius ``reach`` only
        keep = (d2 > r * r) & (d2 <= reach * reach)
        contrib = np.where(keep, P * np.where(keep, d2, 1.0) ** (-alpha / 2), 0.0)
        vals[rep] = contrib.sum(axis=1).mean()
    return Estimate(float(vals.mean()), float(vals.std(ddof=1) / math.sqrt(realizations)), realizations)


@dataclass(frozen=True)
class Check:
    """One analytical-vs-simulated comparison; ``passed`` is None for report-only rows."""

    name: str
    analytic: float
    estimate: Optional[Estimate]
    rel_tol: float
    passed: Optional[bool]
    note: str = ""


def oracle_checks(m: NetworkModel, spec: SimSpec = SimSpec(), delay_rel_tol: float = 0.10,
                  interference_rel_tol: float = 0.05, campbell_realizations: int = 500,
                  n_sigma: float = 3.0) -> list[Check]:
    """Run the simulation oracles against the analytical engine.

    Palm delays per (class, operator) use the analytical utilisations as
    interferer busy probabilities; mean interference is checked by direct
    Campbell summation at the typical serving distance; serving shares are
    reported against both the literal and the normalised probabilities.
    """
    from .delay import serving_probability, solve_delay_fixed_point
    from .radio import mean_interference

    checks: list[Check] = []
    n_op = m.n_operators
    if not m.total_active_intensity > 0:
        return [Check("all", math.nan, None, 0.0, None, "skipped: no active BSs")]
    d = solve_delay_fixed_point(m)
    busy = np.minimum(d.tau_ref / m.reference_delay, 1.0)
    rep = monte_carlo_palm(m, spec, busy=busy)
    for j, cls in enumerate(m.classes):
        for i in range(n_op):
            name = f"palm_delay[{cls.label},{i}]"
            est = rep.delay[(j, i)]
            if m.operators[i].active_intensity == 0 or est.n == 0:
                checks.append(Check(name, math.nan, None, delay_rel_tol, None, "skipped: operator inactive"))
                continue
            target = float(d.tau_bar[j, i])
            checks.append(Check(name, target, est, delay_rel_tol, bool(est.agrees(target, delay_rel_tol, n_sigma))))
    r_typ = 1.0 / math.sqrt(m.total_active_intensity)
    for i in range(n_op):
        name = f"mean_interference[{i}]"
        if m.operators[i].active_intensity == 0:
            checks.append(Check(name, math.nan, None, interference_rel_tol, None, "skipped: operator inactive"))
            continue
        target = float(mean_interference(r_typ, m, i, float(busy[i]) * m.reference_delay))
        est = campbell_interference(m, i, r_typ, float(busy[i]) * m.reference_delay,
                                    realizations=campbell_realizations, seed=spec.seed + 104729 * i)
        checks.append(Check(name, target, est, interference_rel_tol,
                            bool(est.agrees(target, interference_rel_tol, n_sigma))))
    literal = serving_probability(replace(m, normalize_serving_probs=False))
    normalized = literal / literal.sum()
    for i in range(n_op):
        est = rep.shares[i]
        checks.append(Check(f"serving_share[{i}]", float(literal[i]), est, 0.0, None,
                            f"literal {literal[i]:.4f} normalized {normalized[i]:.4f} "
                            f"empirical {est.mean:.4f}+-{est.stderr:.4f}"))
    return checks


def empirical_bs_power(m: NetworkModel, spec: SimSpec, busy: Optional[Sequence[float]] = None) -> list[Estimate]:
    """Average power per active BS of each operator, from simulated utilisations.

    A BS stretches its idle time until the mean actual delay of its users
    (in reference-class units) meets the target, so its utilisation is that
    mean ideal delay over the target, capped at 1; BSs without users idle at
    U = 0.
    """
    from .energy import bs_power

    n_op = m.n_operators
    tau0 = m.reference_delay
    weights = np.array([c.weight for c in m.classes])
    P = m.radio.transmit_power
    totals = np.zeros((spec.replicates, n_op))
    counts = np.zeros((spec.replicates, n_op))
    busy_arr = None if busy is None else np.asarray(busy, dtype=float)
    for rep in range(spec.replicates):
        real = realize_network(m, spec, rep, busy_arr)
        serving, _ = associate(real, m, spec, busy_arr)
        sample = empirical_palm_delay(real, m, spec, busy_arr)
        ok = serving >= 0
        ref_delay = sample.delay * weights[sample.user_class]
        n_bs = len(real.bs_op)
        s = np.bincount(serving[ok], weights=ref_delay, minlength=n_bs)
        c = np.bincount(serving[ok], minlength=n_bs)
        util = np.minimum(np.where(c > 0, s / np.maximum(c, 1), 0.0) / tau0, 1.0)
        for i, op in enumerate(m.operators):
            sel = real.bs_active & (real.bs_op == i)
            totals[rep, i] = sum(bs_power(float(u), op.energy, P) for u in util[sel])
            counts[rep, i] = sel.sum()
    return [_ratio_estimate(totals[:, i], counts[:, i]) for i in range(n_op)]
