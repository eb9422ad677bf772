"""Adaptive transient estimation: blockwise independent replications.

Targets are estimated together on shared simulations.  Replications are run
in blocks; after each block, every target whose confidence interval is
narrow enough (full width <= delta at level alpha) freezes - its estimate
ignores all future samples.  The engine keeps adding blocks until every
target is frozen or the replication cap is reached.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .parallel import HandlePool, WorkerFailure, run_indexed
from .query import QueryAst, ExpandedTarget, evaluate_transient
from .report import AnalysisReport, TargetRow
from .rng import SeedPlan, derive_seed
from .stats import CiSpec, SampleAccumulator, ci_halfwidth


@dataclass
class AutoIrConfig:
    block_size: int = 20
    max_replications: int = 10 ** 5
    ci: CiSpec = field(default_factory=lambda: CiSpec(0.05, 0.1))
    max_steps_per_replication: int = 10 ** 6
    record_samples: bool = False

    def __post_init__(self):
        if self.block_size < 2:
            raise ValueError("block_size must be >= 2")
        if self.max_replications < self.block_size:
            raise ValueError("max_replications must cover at least one block")


@dataclass
class EstimationTarget:
    """One random variable under estimation, with its convergence state."""

    expanded: ExpandedTarget
    spec: CiSpec
    accumulator: SampleAccumulator = field(default_factory=SampleAccumulator)
    state: str = "active"  # active | frozen
    frozen_at_n: int | None = None
    step_needed: int | None = None  # None = determined dynamically
    samples: list = field(default_factory=list)

    @property
    def target_id(self) -> str:
        return self.expanded.target_id

    def halfwidth(self) -> float | None:
        if self.accumulator.n < 2:
            return None
        return ci_halfwidth(self.accumulator, self.spec.alpha)


def make_targets(expanded_targets, ci_specs) -> list[EstimationTarget]:
    """Pair expanded targets with their CI requirements.

    ``ci_specs`` is a single CiSpec applied to all targets, or a list with
    one spec per target.
    """
    if isinstance(ci_specs, CiSpec):
        ci_specs = [ci_specs] * len(expanded_targets)
    if len(ci_specs) != len(expanded_targets):
        raise ValueError("need one CiSpec per target (or a single one for all)")
    return [EstimationTarget(exp, spec)
            for exp, spec in zip(expanded_targets, ci_specs)]


def auto_ir(ast: QueryAst, targets: list[EstimationTarget], cfg: AutoIrConfig,
            sim_factory, seeds: SeedPlan, workers: int = 1) -> AnalysisReport:
    """Run the blockwise stopping rule until all targets freeze (or cap).

    Replications within a block execute in parallel; samples merge in
    replication-index order, so the report does not depend on worker count.
    """
    pool = HandlePool(sim_factory)
    total_steps = 0
    rep_index = 0
    error = None
    try:
        active = [t for t in targets if t.state == "active"]
        while active and rep_index < cfg.max_replications:
            block_expanded = [t.expanded for t in active]

            def task(idx, handle, _exp=block_expanded):
                handle.reset(derive_seed(seeds, idx))
                samples = evaluate_transient(_exp, ast, handle,
                                             cfg.max_steps_per_replication)
                return samples, handle.current_step

            indices = range(rep_index, rep_index + cfg.block_size)
            results = run_indexed(task, indices, pool, workers)
            rep_index += cfg.block_size
            for samples, steps in results:
                total_steps += steps
                for t in active:
                    value = samples[t.target_id]
                    t.accumulator.add(value)
                    if cfg.record_samples:
                        t.samples.append(value)
            # Freezing happens at block boundaries only.
            for t in active:
                hw = t.halfwidth()
                if hw is not None and 2.0 * hw <= t.spec.delta:
                    t.state = "frozen"
                    t.frozen_at_n = t.accumulator.n
            active = [t for t in active if t.state == "active"]
    except WorkerFailure as exc:
        error = str(exc)

    report = AnalysisReport(config={}, seed_plan=_seed_plan_dict(seeds))
    report.total_replications = rep_index
    report.total_steps = total_steps
    report.valid = error is None
    report.error = error
    for t in targets:
        acc = t.accumulator
        report.rows.append(TargetRow(
            target_id=t.target_id,
            parametric_value=t.expanded.param_value,
            estimate=acc.mean if acc.n else None,
            ci_halfwidth=t.halfwidth(),
            n_replications=t.frozen_at_n if t.frozen_at_n is not None else acc.n,
            converged=t.state == "frozen",
            method="IR",
            samples=list(t.samples) if t.samples else None,
        ))
    pool.close_all()
    return report


def _seed_plan_dict(seeds: SeedPlan) -> dict:
    return {"master_seed": seeds.master_seed, "derivation": seeds.derivation}
