"""Seeded Monte Carlo sweeps over data size, horizon and instance shape."""

from __future__ import annotations

import csv
import io
import itertools
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.stats import linregress

from .. import diagnostics as dg
from ..data import (
    behavior_min_visit_probability,
    count_statistics,
    empirical_min_visit,
    sample_dataset,
)
from ..hard_instances import (
    CHAIN_LIVE,
    bounded_reward_random_instance,
    chain_dp_value,
    hard_pair,
    le_cam_error_floor,
    lower_bound_c0,
    opo_hard_instance,
    ope_hard_instance,
    sample_chain_counts,
)
from ..linear import (
    LinearAnchorMDP,
    anchor_min_visit,
    build_anchor_empirical_mdp,
    generate_linear_instance,
    sample_anchor_dataset,
)
from ..mdp import Policy, TabularMDP, evaluate_policy, optimal_policy, random_mdp
from ..plugin import build_empirical_mdp, exact_empirical_mdp, ope_plugin, opo_plan, suboptimality_gap
from ..rng import derive_seed, uniform
from .config import SweepConfig

CSV_COLUMNS = ("cell_id", "K", "H", "S", "A", "d", "d_m_est", "rep", "metric", "value", "coverage_ok")
METRICS = {"ope": "abs_error", "opo": "gap", "diagnose": "min_margin", "lower_bound": "worst_abs_error",
           "linear_ope": "abs_error", "linear_opo": "gap"}


@dataclass(frozen=True)
class ScalingFit:
    slope: float
    intercept: float
    stderr: float
    points: int


def fit_scaling_exponent(points) -> ScalingFit:
    """Least squares of log(error) on log(x)."""
    pts = [(float(x), float(y)) for x, y in points]
    if len(pts) < 3:
        raise ValueError(f"need at least 3 points for a slope fit, got {len(pts)}")
    if any(x <= 0 or y <= 0 for x, y in pts):
        raise ValueError("slope fit needs positive x and error values")
    xs, ys = np.log([p[0] for p in pts]), np.log([p[1] for p in pts])
    fit = linregress(xs, ys)
    return ScalingFit(slope=float(fit.slope), intercept=float(fit.intercept), stderr=float(fit.stderr),
                      points=len(pts))


@dataclass(frozen=True)
class Cell:
    cell_id: int
    K: int
    H: int
    S: int
    A: int
    d: int
    d_m_est: float


@dataclass(frozen=True)
class Row:
    cell_id: int
    K: int
    H: int
    S: int
    A: int
    d: int
    d_m_est: float
    rep: int
    metric: str
    value: float
    coverage_ok: bool


@dataclass(frozen=True)
class CellSummary:
    cell_id: int
    K: int
    H: int
    S: int
    A: int
    d: int
    d_m_est: float
    median: float
    mean: float
    p90: float
    coverage_fraction: float
    flagged: bool


@dataclass
class SweepResult:
    mode: str
    metric: str
    rows: list
    cells: list
    fit: ScalingFit | None = None
    flatness: float | None = None
    notes: list = field(default_factory=list)

    def csv_text(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in self.rows:
            w.writerow([r.cell_id, r.K, r.H, r.S, r.A, r.d, repr(r.d_m_est), r.rep, r.metric, repr(r.value),
                        "true" if r.coverage_ok else "false"])
        return buf.getvalue()

    def summary(self) -> dict:
        return {"mode": self.mode, "metric": self.metric, "rows": len(self.rows),
                "cells": [asdict(c) for c in self.cells], "fit": asdict(self.fit) if self.fit else None,
                "flatness": self.flatness, "notes": self.notes}

    def summary_json(self) -> str:
        return json.dumps(self.summary(), indent=2, sort_keys=True) + "\n"


# ---------------------------------------------------------------------------
# instances and policies


def build_instance(cfg: SweepConfig, H: int, S: int, A: int, d: int, K: int):
    """(truth, linear-or-None) for one grid cell."""
    inst = cfg.instance
    kind = inst.kind
    if kind == "random":
        return random_mdp(S, A, H, inst.seed), None
    if kind == "random_uniform_reward":
        return bounded_reward_random_instance(S, A, H, inst.seed, "uniform"), None
    if kind == "random_terminal_reward":
        return bounded_reward_random_instance(S, A, H, inst.seed, "terminal"), None
    p = inst.p if inst.p is not None else 1.0 - inst.c1 / H
    if kind == "ope_two_state":
        return ope_hard_instance(H, p), None
    if kind == "opo_four_state":
        c0 = inst.c0 if inst.c0 is not None else lower_bound_c0(inst.c1, H)
        return opo_hard_instance(H, p, c0, inst.n_dm or K, inst.c1), None
    lin = generate_linear_instance(S, A, H, d, inst.seed, inst.style)
    return lin.mdp, lin


def make_policy(kind: str, mdp: TabularMDP, seed: int) -> Policy:
    if kind == "uniform":
        return Policy.uniform(mdp.H, mdp.S, mdp.A)
    if kind == "optimal":
        return optimal_policy(mdp)[0]
    return Policy.random(mdp.H, mdp.S, mdp.A, seed)


# ---------------------------------------------------------------------------
# per-replication work


@dataclass(frozen=True)
class _Context:
    cfg: SweepConfig
    cell: Cell
    truth: TabularMDP
    linear: LinearAnchorMDP | None
    target: Policy
    behavior: Policy
    target_value: float


def _empirical(ctx: _Context, seed: int):
    if ctx.cfg.data == "exact":
        return exact_empirical_mdp(ctx.truth, ctx.behavior)
    data = sample_dataset(ctx.truth, ctx.behavior, ctx.cell.K, seed)
    counts = count_statistics(data, ctx.truth.S, ctx.truth.A)
    return build_empirical_mdp(counts, ctx.truth.mu, ctx.truth.H)


def _diagnose_margin(truth: TabularMDP, emp, target: Policy) -> float:
    margins = [dg.IDENTITY_TOL - dg.value_difference_decomposition(truth, emp, target).residual]
    for i in (0, 1, 2):
        rep = dg.check_recursion_evaluation(truth, emp, target, i)
        margins.append(rep.rhs - rep.lhs)
    for mode in dg.MODES:
        for i in (0, 1):
            rep = dg.check_recursion_optimization(truth, emp, i, mode)
            margins.append(rep.rhs - rep.lhs)
    rep = dg.check_mis_variance_bound(truth, target)
    margins.append(rep.rhs - rep.lhs)
    return min(margins)


def _run_rep(ctx: _Context, rep: int) -> tuple[float, bool]:
    cfg, truth = ctx.cfg, ctx.truth
    seed = derive_seed(cfg.seed, ctx.cell.cell_id, rep)
    threshold = cfg.coverage_threshold
    if cfg.mode == "lower_bound":
        return _lower_bound_rep(truth.H, ctx.cell.K, seed, cfg.instance.c1)[:2]
    if cfg.mode.startswith("linear"):
        lin = ctx.linear
        counts = count_statistics(sample_anchor_dataset(lin, ctx.cell.K, seed), truth.S, truth.A)
        emp = build_anchor_empirical_mdp(counts, lin.anchors, lin.weights, truth.mu, truth.H)
        covered = anchor_min_visit(counts, lin.anchors)[0] >= threshold
        if cfg.mode == "linear_ope":
            return abs(ope_plugin(emp, ctx.target).value - ctx.target_value), covered
        return suboptimality_gap(truth, opo_plan(emp)[0]), covered
    emp = _empirical(ctx, seed)
    covered = empirical_min_visit(emp.counts)[0] >= threshold
    if cfg.mode == "ope":
        return abs(ope_plugin(emp, ctx.target).value - ctx.target_value), covered
    if cfg.mode == "opo":
        return suboptimality_gap(truth, opo_plan(emp)[0]), covered
    return _diagnose_margin(truth, emp, ctx.target), covered


def _cell_dm(cfg: SweepConfig, truth: TabularMDP, lin, behavior: Policy, K: int) -> float:
    if cfg.mode == "lower_bound":
        return 0.5  # half of the generative draws land on the live state
    if cfg.mode.startswith("linear"):
        return math.floor(K / lin.d) / K if K >= lin.d else 0.0
    return behavior_min_visit_probability(truth, behavior)


def _grid(cfg: SweepConfig):
    inst = cfg.instance
    S_grid = cfg.S or (inst.S,)
    A_grid = cfg.A or (inst.A,)
    d_grid = cfg.d or ((inst.d if inst.d is not None else inst.S * inst.A),)
    return itertools.product(cfg.H, S_grid, A_grid, d_grid, cfg.K)


def prepare_cells(cfg: SweepConfig) -> list[_Context]:
    out = []
    for cid, (H, S, A, d, K) in enumerate(_grid(cfg)):
        truth, lin = build_instance(cfg, H, S, A, d, K)
        target = make_policy(cfg.policy.target, truth, derive_seed(cfg.policy.seed, 0))
        behavior = make_policy(cfg.policy.behavior, truth, derive_seed(cfg.policy.seed, 1))
        d_m = _cell_dm(cfg, truth, lin, behavior, K)
        if cfg.budget == "fixed_Kdm":
            K = int(math.ceil(K / d_m))
            d_m = _cell_dm(cfg, truth, lin, behavior, K)
        feat = lin.d if lin is not None else truth.S * truth.A
        cell = Cell(cell_id=cid, K=K, H=H, S=truth.S, A=truth.A, d=feat, d_m_est=float(d_m))
        value = evaluate_policy(truth, target).value
        out.append(_Context(cfg, cell, truth, lin, target, behavior, value))
    return out


def _summarize(cell: Cell, values: np.ndarray, covered: np.ndarray) -> CellSummary:
    return CellSummary(cell_id=cell.cell_id, K=cell.K, H=cell.H, S=cell.S, A=cell.A, d=cell.d,
                       d_m_est=cell.d_m_est, median=float(np.median(values)), mean=float(np.mean(values)),
                       p90=float(np.quantile(values, 0.9)), coverage_fraction=float(np.mean(covered)),
                       flagged=bool(not covered.all()))


def run_sweep(cfg: SweepConfig, threads: int = 1, include_flagged: bool = False) -> SweepResult:
    """Run every cell x replication; output order and values do not depend on ``threads``."""
    contexts = prepare_cells(cfg)
    tasks = [(ctx, rep) for ctx in contexts for rep in range(cfg.replications)]
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(lambda t: _run_rep(*t), tasks))
    else:
        results = [_run_rep(*t) for t in tasks]
    metric = METRICS[cfg.mode]
    rows, cells = [], []
    for j, ctx in enumerate(contexts):
        chunk = results[j * cfg.replications:(j + 1) * cfg.replications]
        vals = np.array([float(v) for v, _ in chunk])
        cov = np.array([bool(c) for _, c in chunk])
        c = ctx.cell
        rows += [Row(c.cell_id, c.K, c.H, c.S, c.A, c.d, c.d_m_est, rep, metric, float(v), bool(ok))
                 for rep, (v, ok) in enumerate(chunk)]
        cells.append(_summarize(c, vals, cov))
    result = SweepResult(mode=cfg.mode, metric=metric, rows=rows, cells=cells)
    _attach_fits(result, include_flagged)
    return result


def _attach_fits(result: SweepResult, include_flagged: bool) -> None:
    cells = result.cells
    fixed = {(c.H, c.S, c.A, c.d) for c in cells}
    usable = [c for c in cells if include_flagged or not c.flagged]
    if len(fixed) == 1 and len({c.K for c in usable}) >= 3:
        if all(c.median > 0 for c in usable):
            result.fit = fit_scaling_exponent([(c.K, c.median) for c in usable])
        else:
            result.notes.append("slope fit skipped: a cell median is zero")
    elif len(fixed) == 1 and len({c.K for c in cells}) >= 3:
        result.notes.append("slope fit skipped: fewer than 3 unflagged cells")
    meds = [c.median for c in cells]
    if len({c.H for c in cells}) > 1 or len(cells) == 1:
        result.flatness = flatness_ratio(meds)


def flatness_ratio(medians) -> float:
    lo, hi = min(medians), max(medians)
    if hi == lo:
        return 1.0
    return math.inf if lo <= 0 else hi / lo


def horizon_sweep(cfg: SweepConfig, threads: int = 1) -> tuple[SweepResult, float]:
    """Median error across the H grid at fixed K * d_m; returns (result, max/min of medians)."""
    if cfg.budget != "fixed_Kdm":
        cfg = cfg.with_overrides(budget="fixed_Kdm")
    result = run_sweep(cfg, threads=threads)
    ratio = flatness_ratio([c.median for c in result.cells])
    result.flatness = ratio
    return result, ratio


# ---------------------------------------------------------------------------
# two-point lower bound


def _chain_estimate(counts) -> float:
    n = counts.n_sa[CHAIN_LIVE, 0]
    return float(counts.n_sas[CHAIN_LIVE, 0, CHAIN_LIVE] / n)


def _lower_bound_rep(H: int, n_dm: int, seed: int, c1: float, p_pair=None):
    """(worst |v_hat - v|, covered, per-hypothesis errors, per-hypothesis test outcomes)."""
    p1, p2 = p_pair if p_pair is not None else hard_pair(H, n_dm, c1)
    v = (chain_dp_value(p1, H), chain_dp_value(p2, H))
    errs, correct = [], []
    covered = True
    for j, p in enumerate((p1, p2)):
        mdp, counts = sample_chain_counts(p, H, n_dm, derive_seed(seed, j))
        covered &= bool(counts.n_sa[CHAIN_LIVE, 0] >= 1)
        emp = build_empirical_mdp(counts, mdp.mu, H)
        errs.append(abs(ope_plugin(emp, Policy.uniform(H, 2, 1)).value - v[j]))
        p_hat = _chain_estimate(counts)
        d1, d2 = abs(p_hat - p1), abs(p_hat - p2)
        if d1 == d2:
            guess = 0 if uniform(seed, j, 99) < 0.5 else 1
        else:
            guess = 0 if d1 < d2 else 1
        correct.append(guess == j)
    return max(errs), covered, errs, correct


@dataclass(frozen=True)
class LowerBoundRow:
    n_dm: int
    K_dm: float
    p1: float
    p2: float
    value_gap: float
    c0_floor: float
    le_cam_floor: float
    identification_error: float
    fail_rate_1: float
    fail_rate_2: float
    median_error_1: float
    median_error_2: float
    median_worst_error: float


@dataclass
class LowerBoundReport:
    H: int
    replications: int
    rows: list
    fit: ScalingFit | None

    def summary(self) -> dict:
        return {"H": self.H, "replications": self.replications, "rows": [asdict(r) for r in self.rows],
                "fit": asdict(self.fit) if self.fit else None}


def lower_bound_experiment(H: int, n_dm_grid, R: int, seed: int = 0, c1: float = 1.0, threads: int = 1,
                           degenerate: bool = False) -> LowerBoundReport:
    """Plug-in estimation on the two-point chain pair at each n(s2).

    ``fail_rate_j`` is P_j(|v_hat - v_j| > gap / 2); ``identification_error`` is
    P_1(test picks 2) + P_2(test picks 1) for the nearest-parameter test, with ties
    broken by a fair coin. ``degenerate`` sets p2 = p1.
    """
    rows = []
    for ci, n in enumerate(n_dm_grid):
        p1, p2 = hard_pair(H, n, c1)
        if degenerate:
            p2 = p1
        gap = chain_dp_value(p2, H) - chain_dp_value(p1, H)
        seeds = [derive_seed(seed, ci, rep) for rep in range(R)]
        work = lambda s: _lower_bound_rep(H, n, s, c1, (p1, p2))  # noqa: E731
        if threads > 1:
            with ThreadPoolExecutor(max_workers=threads) as pool:
                out = list(pool.map(work, seeds))
        else:
            out = [work(s) for s in seeds]
        e1 = np.array([o[2][0] for o in out])
        e2 = np.array([o[2][1] for o in out])
        ok1 = np.array([o[3][0] for o in out])
        ok2 = np.array([o[3][1] for o in out])
        rows.append(LowerBoundRow(
            n_dm=int(n), K_dm=n / H, p1=p1, p2=p2, value_gap=gap,
            c0_floor=lower_bound_c0(c1, H) * math.sqrt(H / n), le_cam_floor=le_cam_error_floor(n, p1, p2),
            identification_error=float(np.mean(~ok1) + np.mean(~ok2)),
            fail_rate_1=float(np.mean(e1 > gap / 2)), fail_rate_2=float(np.mean(e2 > gap / 2)),
            median_error_1=float(np.median(e1)), median_error_2=float(np.median(e2)),
            median_worst_error=float(np.median(np.maximum(e1, e2)))))
    fit = None
    if len(rows) >= 3 and all(r.median_worst_error > 0 for r in rows):
        fit = fit_scaling_exponent([(r.n_dm, r.median_worst_error) for r in rows])
    return LowerBoundReport(H=H, replications=R, rows=rows, fit=fit)
