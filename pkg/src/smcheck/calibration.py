"""Grid calibration with statistical guarantees.

Every parameter combination's loss (summed per-step deviation between the
simulated observable and a reference series over a time window) is
estimated with the blockwise stopping rule until its confidence interval is
narrow enough.  The combination with the smallest estimated loss anchors a
Welch's-t filter: combinations whose loss is not significantly larger form
the confidence set.  A refinement schedule re-runs the procedure on the
surviving subset with tighter (alpha, delta) requirements.
"""

from __future__ import annotations

import csv
import itertools
import json
import math
from dataclasses import dataclass, field

from .parallel import HandlePool, run_indexed
from .rng import SeedPlan, derive_seed
from .stats import CiSpec, SampleAccumulator, ci_halfwidth, welch_test


class CalibrationError(Exception):
    pass


@dataclass(frozen=True)
class LossSpec:
    observable: str
    reference: tuple  # h_t indexed by step, covering the window
    norm: str = "L1"  # L1 | L2
    window: tuple[int, int] = (0, 0)  # inclusive [t_lo, t_hi]

    def __post_init__(self):
        if self.norm not in ("L1", "L2"):
            raise CalibrationError(f"unknown norm {self.norm!r}")
        t_lo, t_hi = self.window
        if not 0 <= t_lo <= t_hi:
            raise CalibrationError("window must satisfy 0 <= t_lo <= t_hi")
        if t_hi >= len(self.reference):
            raise CalibrationError("reference series does not cover the window")


@dataclass
class ParamGrid:
    params: dict  # name -> list of values
    constraints: list = field(default_factory=list)  # boolean expressions

    def combos(self) -> list[dict]:
        """Expand the grid, applying constraints; deterministic order."""
        names = list(self.params)
        out = []
        for values in itertools.product(*(self.params[n] for n in names)):
            combo = dict(zip(names, values))
            if all(self._holds(c, combo) for c in self.constraints):
                out.append(combo)
        if not out:
            raise CalibrationError("empty grid: constraints eliminated every combination")
        return out

    @staticmethod
    def _holds(expr: str, combo: dict) -> bool:
        try:
            return bool(eval(compile(expr, "<constraint>", "eval"),
                             {"__builtins__": {}}, dict(combo)))
        except Exception as exc:
            raise CalibrationError(f"bad constraint {expr!r}: {exc}") from exc


@dataclass
class ConfidenceSetEntry:
    combo: dict
    estimated_loss: float
    ci_width: float
    estimated_variance: float
    runs: int
    p_value: float


@dataclass
class LossEstimate:
    combo: dict
    mean_loss: float
    ci_width: float
    variance: float
    runs: int
    converged: bool
    samples: list  # (seed_index, seed, loss) per replication, persisted


def loss_sample(handle, seed: int, combo: dict, spec: LossSpec) -> float:
    """One replication's loss: reset, run the window, sum deviations."""
    handle.reset(seed, dict(combo))
    t_lo, t_hi = spec.window
    total = 0.0
    for t in range(t_hi + 1):
        if t >= t_lo:
            diff = handle.eval(spec.observable) - spec.reference[t]
            total += abs(diff) if spec.norm == "L1" else diff * diff
        if t < t_hi:
            handle.next()
    return total


def estimate_loss(sim_factory, combo: dict, spec: LossSpec, ci: CiSpec,
                  block_size: int, seeds: SeedPlan,
                  max_replications: int = 10 ** 5,
                  workers: int = 1) -> LossEstimate:
    """Blockwise stopping rule applied to the loss random variable."""
    if block_size < 2:
        raise CalibrationError("block_size must be >= 2")
    pool = HandlePool(sim_factory)
    acc = SampleAccumulator()
    samples = []
    rep_index = 0
    converged = False
    try:
        while rep_index < max_replications:
            def task(idx, handle):
                seed = derive_seed(seeds, idx)
                return seed, loss_sample(handle, seed, combo, spec)

            results = run_indexed(task, range(rep_index, rep_index + block_size),
                                  pool, workers)
            for offset, (seed, loss) in enumerate(results):
                acc.add(loss)
                samples.append((rep_index + offset, seed, loss))
            rep_index += block_size
            hw = ci_halfwidth(acc, ci.alpha)
            if 2.0 * hw <= ci.delta:
                converged = True
                break
    finally:
        pool.close_all()
    hw = ci_halfwidth(acc, ci.alpha) if acc.n >= 2 else math.nan
    return LossEstimate(combo, acc.mean, 2.0 * hw, acc.variance if acc.n >= 2 else math.nan,
                        acc.n, converged, samples)


def _combo_key(combo: dict):
    return tuple(combo[name] for name in combo)


def confidence_set(estimates: list[LossEstimate], alpha_test: float) -> list[ConfidenceSetEntry]:
    """Welch-filter the grid against the minimum-loss combination.

    The argmin (ties broken by lexicographic parameter order) is always in
    the set with p = 1.0.  The p-values re-use exactly the samples gathered
    by estimation; no fresh simulation happens here.  Output is sorted by
    p descending (stable on input order).
    """
    if not estimates:
        raise CalibrationError("no estimates to filter")
    best = min(estimates, key=lambda e: (e.mean_loss, _combo_key(e.combo)))
    best_acc = SampleAccumulator.from_samples(s[2] for s in best.samples)
    entries = []
    for est in estimates:
        if est is best:
            p = 1.0
        else:
            acc = SampleAccumulator.from_samples(s[2] for s in est.samples)
            p = welch_test(acc, best_acc).p_two_sided
        if p >= alpha_test:
            entries.append(ConfidenceSetEntry(
                combo=dict(est.combo),
                estimated_loss=est.mean_loss,
                ci_width=est.ci_width,
                estimated_variance=est.variance,
                runs=est.runs,
                p_value=p,
            ))
    entries.sort(key=lambda e: -e.p_value)
    return entries


@dataclass
class RefineStageResult:
    alpha: float
    delta: float
    entries: list
    replications: int


def refine(combos: list[dict], sim_factory, spec: LossSpec,
           schedule: list[tuple[float, float]], alpha_test: float,
           block_size: int, seeds: SeedPlan,
           replication_budget: int = 10 ** 6,
           workers: int = 1) -> list[RefineStageResult]:
    """Sequential (alpha, delta) refinement over the surviving subset.

    ``schedule`` must be strictly decreasing in delta.  Stops early when the
    set is a singleton or the replication budget is exhausted; the last
    completed stage's set stands either way.
    """
    deltas = [d for _, d in schedule]
    if any(later >= earlier for earlier, later in zip(deltas, deltas[1:])):
        raise CalibrationError("schedule must be strictly decreasing in delta")
    surviving = list(combos)
    stages = []
    spent = 0
    for stage_index, (alpha, delta) in enumerate(schedule):
        if len(surviving) == 1:
            break
        ci = CiSpec(alpha, delta)
        stage_seeds = seeds.subplan(stage_index)
        estimates = []
        for combo_index, combo in enumerate(surviving):
            if spent >= replication_budget:
                break
            est = estimate_loss(
                sim_factory, combo, spec, ci, block_size,
                stage_seeds.subplan(combo_index),
                max_replications=min(10 ** 5, replication_budget - spent),
                workers=workers)
            spent += est.runs
            estimates.append(est)
        if len(estimates) < len(surviving):
            break  # budget ran out mid-stage; keep the previous stage's set
        entries = confidence_set(estimates, alpha_test)
        stages.append(RefineStageResult(alpha, delta, entries, spent))
        surviving = [e.combo for e in entries]
    return stages


# ---------------------------------------------------------------------------
# Grid file loading
# ---------------------------------------------------------------------------

def load_reference_csv(path: str) -> tuple:
    """Two-column CSV (step, value) with a header; returns values indexed by step."""
    rows = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or len(header) < 2:
            raise CalibrationError("reference CSV needs a header and two columns")
        for line in reader:
            if not line:
                continue
            rows[int(float(line[0]))] = float(line[1])
    if not rows:
        raise CalibrationError("reference CSV has no data rows")
    top = max(rows)
    return tuple(rows.get(t, math.nan) for t in range(top + 1))


def load_grid_file(path: str) -> tuple[ParamGrid, LossSpec]:
    """Grid JSON: {"params": {...}, "constraints": [...], "loss": {...}}."""
    with open(path) as fh:
        doc = json.load(fh)
    try:
        grid = ParamGrid(dict(doc["params"]), list(doc.get("constraints", [])))
        loss = doc["loss"]
        reference = load_reference_csv(loss["reference_csv"])
        spec = LossSpec(
            observable=loss["observable"],
            reference=reference,
            norm=loss.get("norm", "L1"),
            window=tuple(loss["window"]),
        )
    except KeyError as exc:
        raise CalibrationError(f"grid file missing key {exc}") from exc
    return grid, spec
