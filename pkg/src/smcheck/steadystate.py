"""Warm-up detection and steady-state mean estimation (batch means / RD).

The warm-up detector runs one long simulation and tests doubling candidate
truncation points: at each candidate it collects a fixed number of batch
means from post-candidate data and accepts the first candidate whose batch
means look like a stable distribution - lag-1 autocorrelation not
significant and a skewness/kurtosis normality statistic not significant
(the two tests split the detector level alpha_w).

Batch means (BM) then estimates the steady-state mean from the same long
run, doubling the batch size until the interval is narrow enough and the
batch means pass the independence check.  Replication and deletion (RD)
instead averages the post-warm-up horizon of many short replications and
applies the blockwise stopping rule to those per-replication means.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .parallel import HandlePool, run_indexed
from .query import QueryAst, ExpandedTarget, evaluate_now
from .rng import SeedPlan, derive_seed
from .stats import (
    CiSpec,
    SampleAccumulator,
    ci_halfwidth,
    jarque_bera,
    lag1_autocorr,
    norm_quantile,
)


class SteadyStateError(Exception):
    pass


@dataclass
class BatchConfig:
    batch_count: int = 20
    initial_batch_size: int = 16
    growth_factor: float = 2.0
    max_total_steps: int = 1 << 20
    alpha_w: float = 0.05  # family level for the two warm-up tests
    sample_every: int = 1
    sample_offset: int = 0

    def __post_init__(self):
        if self.batch_count < 10:
            raise ValueError("batch_count must be >= 10")
        if self.initial_batch_size < 1:
            raise ValueError("initial_batch_size must be >= 1")
        if self.growth_factor <= 1.0:
            raise ValueError("growth_factor must be > 1")
        if self.batch_count * self.initial_batch_size > self.max_total_steps:
            raise ValueError("batch_count * initial_batch_size exceeds max_total_steps")
        if self.sample_every < 1:
            raise ValueError("sample_every must be >= 1")


@dataclass
class RdConfig:
    block_size: int = 10
    horizon_steps: int | None = None  # default: max(100, 10 * warmup)
    ci: CiSpec = field(default_factory=lambda: CiSpec(0.05, 0.1))
    max_replications: int = 10 ** 5
    sample_every: int = 1
    sample_offset: int = 0

    def __post_init__(self):
        if self.block_size < 2:
            raise ValueError("block_size must be >= 2")
        if self.horizon_steps is not None and self.horizon_steps < 1:
            raise ValueError("horizon_steps must be >= 1")
        if self.sample_every < 1:
            raise ValueError("sample_every must be >= 1")


@dataclass
class WarmupEstimate:
    warmup: int | None
    converged: bool
    diagnostics: list = field(default_factory=list)  # (candidate, r1, jb_p, passed)
    steps_used: int = 0


@dataclass
class BmResult:
    estimate: float | None
    halfwidth: float | None
    steps_used: int
    warmup: int | None
    converged: bool
    batch_count: int
    batch_size: int


@dataclass
class RdResult:
    estimate: float | None
    halfwidth: float | None
    n_replications: int
    warmup: int | None
    horizon: int
    converged: bool


class ObservationStream:
    """Lazily extended per-step observation record of one simulation run.

    ``value(t)`` is the target observable in the state after t steps;
    the post-reset initial state provides value(0).
    """

    def __init__(self, ast: QueryAst, target: ExpandedTarget, handle, seed: int):
        self.ast = ast
        self.target = target
        self.handle = handle
        handle.reset(seed)
        self.values = [evaluate_now(ast, target, handle)]

    def ensure(self, count: int) -> None:
        while len(self.values) < count:
            self.handle.next()
            self.values.append(evaluate_now(self.ast, self.target, self.handle))

    def window(self, start: int, count: int, every: int = 1) -> list[float]:
        last = start + (count - 1) * every
        self.ensure(last + 1)
        return [self.values[start + j * every] for j in range(count)]

    @property
    def steps_taken(self) -> int:
        return len(self.values) - 1


def _stability_tests(batch_means, alpha_each: float):
    """(passed, r1, jb_p): lag-1 autocorrelation and normality, each at alpha_each."""
    b = len(batch_means)
    if max(batch_means) == min(batch_means):
        # Degenerate constant batch means: trivially stable.
        return True, 0.0, 1.0
    r1 = lag1_autocorr(batch_means)
    threshold = norm_quantile(1.0 - alpha_each / 2.0) / math.sqrt(b)
    _, jb_p = jarque_bera(batch_means)
    passed = abs(r1) <= threshold and jb_p >= alpha_each
    return passed, r1, jb_p


def _warmup_candidates(cfg: BatchConfig):
    yield 0
    w = cfg.initial_batch_size
    while True:
        yield w
        w = int(math.ceil(w * cfg.growth_factor))


def auto_warmup(stream: ObservationStream, cfg: BatchConfig) -> WarmupEstimate:
    """Smallest tested truncation point whose post-truncation batch means
    pass both stability tests; unconverged when the step cap is hit first."""
    b, m = cfg.batch_count, cfg.initial_batch_size
    alpha_each = cfg.alpha_w / 2.0  # Bonferroni split across the two tests
    diagnostics = []
    for w in _warmup_candidates(cfg):
        needed = w + b * m
        if needed > cfg.max_total_steps:
            return WarmupEstimate(None, False, diagnostics, stream.steps_taken)
        window = stream.window(w, b * m)
        batch_means = [sum(window[i * m:(i + 1) * m]) / m for i in range(b)]
        passed, r1, jb_p = _stability_tests(batch_means, alpha_each)
        diagnostics.append((w, r1, jb_p, passed))
        if passed:
            return WarmupEstimate(w, True, diagnostics, stream.steps_taken)


def auto_bm(ast: QueryAst, target: ExpandedTarget, sim_factory,
            seeds: SeedPlan, cfg: BatchConfig, ci: CiSpec,
            warmup: int | None = None) -> BmResult:
    """Batch-means steady-state estimate from one long run.

    When ``warmup`` is None it is detected first on the same run.  The point
    estimate always equals the plain mean of the retained post-warm-up
    samples; batching affects only the interval.
    """
    handle = sim_factory()
    try:
        stream = ObservationStream(ast, target, handle, derive_seed(seeds, 0))
        if warmup is None:
            est = auto_warmup(stream, cfg)
            if not est.converged:
                return BmResult(None, None, stream.steps_taken, None, False,
                                cfg.batch_count, cfg.initial_batch_size)
            w = est.warmup
        else:
            w = warmup
            if w + cfg.batch_count * cfg.initial_batch_size > cfg.max_total_steps:
                raise SteadyStateError(
                    "warmup plus the initial batches exceeds max_total_steps")
        b = cfg.batch_count
        m = cfg.initial_batch_size
        every, offset = cfg.sample_every, cfg.sample_offset
        while True:
            first = w + offset
            last = first + (b * m - 1) * every
            if last + 1 > cfg.max_total_steps:
                return BmResult(None, None, stream.steps_taken, w, False, b, m)
            samples = stream.window(first, b * m, every)
            batch_means = [sum(samples[i * m:(i + 1) * m]) / m for i in range(b)]
            estimate = sum(samples) / len(samples)
            acc = SampleAccumulator.from_samples(batch_means)
            hw = ci_halfwidth(acc, ci.alpha)
            independent, _, _ = _independence_only(batch_means, cfg.alpha_w)
            if 2.0 * hw <= ci.delta and independent:
                return BmResult(estimate, hw, stream.steps_taken, w, True, b, m)
            m = int(math.ceil(m * cfg.growth_factor))
    finally:
        handle.close()


def _independence_only(batch_means, alpha: float):
    b = len(batch_means)
    if max(batch_means) == min(batch_means):
        return True, 0.0, 1.0
    r1 = lag1_autocorr(batch_means)
    threshold = norm_quantile(1.0 - alpha / 2.0) / math.sqrt(b)
    return abs(r1) <= threshold, r1, threshold


def detect_warmup(ast: QueryAst, target: ExpandedTarget, sim_factory,
                  seeds: SeedPlan, cfg: BatchConfig) -> WarmupEstimate:
    """Warm-up detection on a dedicated pilot run (seed index 0)."""
    handle = sim_factory()
    try:
        stream = ObservationStream(ast, target, handle, derive_seed(seeds, 0))
        return auto_warmup(stream, cfg)
    finally:
        handle.close()


def auto_rd(ast: QueryAst, target: ExpandedTarget, sim_factory,
            seeds: SeedPlan, cfg: RdConfig,
            warmup_cfg: BatchConfig | None = None,
            warmup: int | None = None, workers: int = 1) -> RdResult:
    """Replication-and-deletion estimate: short runs, post-warm-up horizon means.

    Warm-up is detected once on a pilot run (seed index 0) and reused across
    replications; replication seeds start at index 1.
    """
    if warmup is None:
        est = detect_warmup(ast, target, sim_factory, seeds,
                            warmup_cfg or BatchConfig())
        if not est.converged:
            return RdResult(None, None, 0, None, 0, False)
        w = est.warmup
    else:
        w = warmup
    horizon = cfg.horizon_steps if cfg.horizon_steps is not None else max(100, 10 * w)
    every, offset = cfg.sample_every, cfg.sample_offset
    count = max(1, (horizon - 1 - offset) // every + 1)

    pool = HandlePool(sim_factory)
    acc = SampleAccumulator()
    rep_index = 0
    converged = False
    hw = None
    try:
        while rep_index < cfg.max_replications:
            def task(idx, handle):
                handle.reset(derive_seed(seeds, 1 + idx))
                first = w + offset
                last = first + (count - 1) * every
                total = 0.0
                for step in range(last + 1):
                    if step >= first and (step - first) % every == 0:
                        total += evaluate_now(ast, target, handle)
                    if step < last:
                        handle.next()
                return total / count

            results = run_indexed(task, range(rep_index, rep_index + cfg.block_size),
                                  pool, workers)
            rep_index += cfg.block_size
            for sample in results:
                acc.add(sample)
            hw = ci_halfwidth(acc, cfg.ci.alpha)
            if 2.0 * hw <= cfg.ci.delta:
                converged = True
                break
    finally:
        pool.close_all()
    estimate = acc.mean if acc.n else None
    return RdResult(estimate, hw, acc.n, w, horizon, converged)


def manual_bm(ast, target, sim_factory, seeds, warmup: int,
              cfg: BatchConfig, ci: CiSpec) -> BmResult:
    if warmup < 0:
        raise SteadyStateError("warmup must be nonnegative")
    if warmup > cfg.max_total_steps:
        raise SteadyStateError("warmup exceeds max_total_steps")
    return auto_bm(ast, target, sim_factory, seeds, cfg, ci, warmup=warmup)


def manual_rd(ast, target, sim_factory, seeds, warmup: int,
              cfg: RdConfig, workers: int = 1) -> RdResult:
    if warmup < 0:
        raise SteadyStateError("warmup must be nonnegative")
    return auto_rd(ast, target, sim_factory, seeds, cfg,
                   warmup=warmup, workers=workers)
